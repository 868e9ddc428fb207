//! File formats: PLY clouds, ground-truth and parts JSON, PNG renders,
//! binary index maps and CSV matrices.

use std::fmt::Write as _;
use std::io::{BufRead, Read};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::GroundTruth;
use crate::geometry::{ColoredPointCloud, PointIndexSet};
use crate::merging::Part3D;
use crate::multiview::{RenderProduct, EMPTY};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("ply: {0}")]
    Ply(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("png: {0}")]
    Png(String),
    #[error("index map: {0}")]
    IndexMap(String),
    #[error("{0}")]
    Invalid(String),
}

fn ply_err(msg: impl Into<String>) -> FormatError {
    FormatError::Ply(msg.into())
}

// ---------------------------------------------------------------- PLY

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Self::F32 | Self::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
}

fn read_header(r: &mut impl BufRead) -> Result<Header, FormatError> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<(), FormatError> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(ply_err("header ends before end_header"));
        }
        Ok(())
    };
    next(&mut line)?;
    if line.trim() != "ply" {
        return Err(ply_err("missing `ply` magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next(&mut line)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => encoding = Some(PlyEncoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(PlyEncoding::BinaryLittleEndian),
            ["format", other, ..] => return Err(ply_err(format!("unsupported format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| ply_err(format!("bad element count `{count}`")))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, _name] => {
                let el = elements.last_mut().ok_or_else(|| ply_err("property before element"))?;
                let ty = |t: &str| Scalar::parse(t).ok_or_else(|| ply_err(format!("unknown type `{t}`")));
                el.props.push(Property::List { count: ty(count)?, item: ty(item)? });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| ply_err("property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| ply_err(format!("unknown type `{ty}`")))?;
                el.props.push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(ply_err(format!("unrecognized header line `{}`", line.trim()))),
        }
    }
    let encoding = encoding.ok_or_else(|| ply_err("missing format line"))?;
    Ok(Header { encoding, elements })
}

/// Reads a PLY cloud (ascii or binary little-endian) from its `vertex`
/// element: `x`, `y`, `z` and optional `red`, `green`, `blue`. Integer
/// colors are taken as 0-255, float colors as 0-1. Clouds without color
/// come out mid-gray.
pub fn read_ply(mut r: impl BufRead) -> Result<ColoredPointCloud, FormatError> {
    let header = read_header(&mut r)?;
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        let slot =
            |want: &str| el.props.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == want));
        let (xyz, rgb) = if is_vertex {
            let xyz = [slot("x"), slot("y"), slot("z")];
            if xyz.iter().any(Option::is_none) {
                return Err(ply_err("vertex element lacks x, y or z"));
            }
            (xyz.map(Option::unwrap), [slot("red"), slot("green"), slot("blue")])
        } else {
            ([0; 3], [None; 3])
        };
        let has_color = rgb.iter().all(Option::is_some);
        let mut values = vec![0.0f64; el.props.len()];
        for row in 0..el.count {
            match header.encoding {
                PlyEncoding::Ascii => read_ascii_row(&mut r, el, &mut values, row)?,
                PlyEncoding::BinaryLittleEndian => read_binary_row(&mut r, el, &mut values)?,
            }
            if !is_vertex {
                continue;
            }
            positions.push(Point3::new(values[xyz[0]], values[xyz[1]], values[xyz[2]]));
            colors.push(if has_color {
                rgb.map(|s| {
                    let s = s.unwrap();
                    let v = values[s];
                    let float = matches!(el.props[s], Property::Scalar { ty, .. } if ty.is_float());
                    (if float { v * 255.0 } else { v }).round().clamp(0.0, 255.0) as u8
                })
            } else {
                [128; 3]
            });
        }
        if is_vertex {
            break;
        }
    }
    if positions.is_empty() {
        return Err(ply_err("no vertices"));
    }
    if positions.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
        return Err(ply_err("non-finite vertex coordinate"));
    }
    ColoredPointCloud::new(positions, colors).map_err(|e| ply_err(e.to_string()))
}

fn read_ascii_row(r: &mut impl BufRead, el: &Element, values: &mut [f64], row: usize) -> Result<(), FormatError> {
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(ply_err(format!("{} row {row}: unexpected end of file", el.name)));
        }
        if !line.trim().is_empty() {
            break;
        }
    }
    let mut tokens = line.split_whitespace();
    let mut number = |what: &str| -> Result<f64, FormatError> {
        let tok = tokens.next().ok_or_else(|| ply_err(format!("{} row {row}: missing {what}", el.name)))?;
        tok.parse().map_err(|_| ply_err(format!("{} row {row}: bad number `{tok}`", el.name)))
    };
    for (slot, prop) in values.iter_mut().zip(&el.props) {
        match prop {
            Property::Scalar { name, .. } => *slot = number(name)?,
            Property::List { .. } => {
                let n = number("list length")? as usize;
                for _ in 0..n {
                    number("list item")?;
                }
            }
        }
    }
    Ok(())
}

fn read_binary_row(r: &mut impl Read, el: &Element, values: &mut [f64]) -> Result<(), FormatError> {
    let mut buf = [0u8; 8];
    let mut scalar = |r: &mut dyn Read, ty: Scalar| -> Result<f64, FormatError> {
        r.read_exact(&mut buf[..ty.size()])
            .map_err(|e| ply_err(format!("{}: truncated binary data ({e})", el.name)))?;
        Ok(ty.read_le(&buf))
    };
    for (slot, prop) in values.iter_mut().zip(&el.props) {
        match *prop {
            Property::Scalar { ty, .. } => *slot = scalar(r, ty)?,
            Property::List { count, item } => {
                let n = scalar(r, count)? as usize;
                for _ in 0..n {
                    scalar(r, item)?;
                }
            }
        }
    }
    Ok(())
}

/// Writes `x y z` as doubles and `red green blue` as uchar.
pub fn write_ply(cloud: &ColoredPointCloud, encoding: PlyEncoding) -> Vec<u8> {
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut out = format!(
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )
    .into_bytes();
    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        match encoding {
            PlyEncoding::Ascii => {
                out.extend(format!("{:?} {:?} {:?} {} {} {}\n", p.x, p.y, p.z, c[0], c[1], c[2]).bytes());
            }
            PlyEncoding::BinaryLittleEndian => {
                for v in [p.x, p.y, p.z] {
                    out.extend(v.to_le_bytes());
                }
                out.extend(c);
            }
        }
    }
    out
}

// ---------------------------------------------------------------- JSON

pub fn read_ground_truth(r: impl Read) -> Result<GroundTruth, FormatError> {
    let gt: GroundTruth = serde_json::from_reader(r)?;
    gt.validate().map_err(|e| FormatError::Invalid(format!("ground truth: {e}")))?;
    Ok(gt)
}

pub fn write_ground_truth(gt: &GroundTruth) -> Vec<u8> {
    serde_json::to_vec(gt).expect("ground truth serializes")
}

/// One entry of a parts file. `label` and `confidence` appear only in
/// labeled files, `label` being `null` for parts no class claimed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub part_id: usize,
    pub indices: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "present_or_null")]
    pub label: Option<Option<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

mod present_or_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Option<String>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().expect("skipped when absent").serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<String>>, D::Error> {
        Option::<String>::deserialize(d).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartsFile {
    pub num_points: usize,
    pub parts: Vec<PartRecord>,
}

impl PartsFile {
    /// Unlabeled parts file.
    pub fn from_parts(num_points: usize, parts: &[Part3D]) -> Self {
        let parts = parts
            .iter()
            .map(|p| PartRecord {
                part_id: p.part_id,
                indices: p.points.as_slice().to_vec(),
                label: None,
                confidence: None,
            })
            .collect();
        Self { num_points, parts }
    }

    /// Labeled parts file; labels are rows of `classes`.
    pub fn from_labeled(num_points: usize, parts: &[Part3D], classes: &[String]) -> Self {
        let parts = parts
            .iter()
            .map(|p| PartRecord {
                part_id: p.part_id,
                indices: p.points.as_slice().to_vec(),
                label: Some(p.label.map(|l| classes[l].clone())),
                confidence: Some(p.confidence),
            })
            .collect();
        Self { num_points, parts }
    }

    pub fn is_labeled(&self) -> bool {
        self.parts.iter().any(|p| p.label.is_some())
    }

    /// Validates indices against `num_points` and resolves label names
    /// against `classes`. Unknown label names are an error.
    pub fn to_parts(&self, classes: &[String]) -> Result<Vec<Part3D>, FormatError> {
        let mut seen = std::collections::BTreeSet::new();
        self.parts
            .iter()
            .map(|r| {
                if !seen.insert(r.part_id) {
                    return Err(FormatError::Invalid(format!("duplicate part_id {}", r.part_id)));
                }
                let points = PointIndexSet::from_unsorted(r.indices.iter().copied());
                if points.len() != r.indices.len() {
                    return Err(FormatError::Invalid(format!("part {} repeats an index", r.part_id)));
                }
                points
                    .check_bounds(self.num_points)
                    .map_err(|e| FormatError::Invalid(format!("part {}: {e}", r.part_id)))?;
                let label = match r.label.as_ref().and_then(|l| l.as_deref()) {
                    None => None,
                    Some(name) => Some(classes.iter().position(|c| c == name).ok_or_else(|| {
                        FormatError::Invalid(format!("part {}: label `{name}` is not a known class", r.part_id))
                    })?),
                };
                Ok(Part3D { part_id: r.part_id, points, label, confidence: r.confidence.unwrap_or(0.0) })
            })
            .collect()
    }
}

pub fn read_parts(r: impl Read) -> Result<PartsFile, FormatError> {
    Ok(serde_json::from_reader(r)?)
}

pub fn write_parts(parts: &PartsFile) -> Vec<u8> {
    serde_json::to_vec(parts).expect("parts serialize")
}

// ---------------------------------------------------------------- rasters

pub fn encode_png(rp: &RenderProduct) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, rp.width() as u32, rp.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| FormatError::Png(e.to_string()))?;
    writer.write_image_data(rp.image().as_flattened()).map_err(|e| FormatError::Png(e.to_string()))?;
    writer.finish().map_err(|e| FormatError::Png(e.to_string()))?;
    Ok(out)
}

/// Decodes an 8-bit RGB or RGBA PNG into `(width, height, pixels)`.
pub fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>), FormatError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| FormatError::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| FormatError::Png("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| FormatError::Png(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(FormatError::Png(format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let stride = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(FormatError::Png(format!("unsupported color type {other:?}"))),
    };
    let pixels = buf[..info.buffer_size()].chunks_exact(stride).map(|c| [c[0], c[1], c[2]]).collect();
    Ok((info.width as usize, info.height as usize, pixels))
}

/// Index map as `i32` little-endian: height, width, then row-major cells
/// with `-1` for empty.
pub fn encode_index_map(rp: &RenderProduct) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * rp.index_map().len());
    out.extend((rp.height() as i32).to_le_bytes());
    out.extend((rp.width() as i32).to_le_bytes());
    for &i in rp.index_map() {
        let v: i32 = if i == EMPTY { -1 } else { i as i32 };
        out.extend(v.to_le_bytes());
    }
    out
}

/// Inverse of [`encode_index_map`]: `(width, height, cells)` with
/// [`EMPTY`] for `-1`.
pub fn decode_index_map(bytes: &[u8]) -> Result<(usize, usize, Vec<u32>), FormatError> {
    let bad = |m: String| FormatError::IndexMap(m);
    if bytes.len() < 8 || !bytes.len().is_multiple_of(4) {
        return Err(bad(format!("{} bytes is not a valid length", bytes.len())));
    }
    let words: Vec<i32> = bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect();
    let (h, w) = (words[0], words[1]);
    if h < 0 || w < 0 || (h as usize) * (w as usize) != words.len() - 2 {
        return Err(bad(format!("dims {h}x{w} do not match {} cells", words.len() - 2)));
    }
    let cells = words[2..]
        .iter()
        .map(|&v| match v {
            -1 => Ok(EMPTY),
            v if v >= 0 => Ok(v as u32),
            v => Err(bad(format!("negative index {v}"))),
        })
        .collect::<Result<_, _>>()?;
    Ok((w as usize, h as usize, cells))
}

/// Matrix as CSV with a header of column names and one labeled row each.
pub fn matrix_csv<T: std::fmt::Display>(row_names: &[String], col_names: &[String], cells: &[Vec<T>]) -> String {
    let mut out = String::from("class");
    for c in col_names {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (name, row) in row_names.iter().zip(cells) {
        out.push_str(name);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
