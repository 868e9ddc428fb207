use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    BackendError, DetectionBox, Detector, GroundTruth, Mask2D, OracleDetector, OracleSegmenter, Segmenter, TextPrompt,
};
use crate::multiview::{Pixel, RenderProduct, EMPTY};

/// Perturbation knobs for the noisy backends. Probabilities are in `[0, 1]`;
/// pixel amounts are radii of a square structuring element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub erosion: u32,
    pub dilation: u32,
    /// Gap-closing radius applied before erosion or dilation.
    pub fill: u32,
    pub drop_rate: f64,
    pub merge_rate: f64,
    pub mislabel_rate: f64,
    pub box_jitter: u32,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            erosion: 0,
            dilation: 0,
            fill: DEFAULT_FILL,
            drop_rate: 0.0,
            merge_rate: 0.0,
            mislabel_rate: 0.0,
            box_jitter: 0,
            seed: 0,
        }
    }
}

/// Closes gaps of up to 6 pixels, enough to join 3x3 splats of the default
/// scene density at 800x800.
pub const DEFAULT_FILL: u32 = 3;

impl FromStr for NoiseParams {
    type Err = String;

    /// Parses `key=value` pairs separated by commas, e.g.
    /// `erosion=2,drop=0.1,mislabel=0.2,seed=7`. Unnamed knobs keep their
    /// defaults.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = NoiseParams::default();
        for item in s.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item.split_once('=').ok_or_else(|| format!("expected key=value, got `{item}`"))?;
            let bad = |e: &dyn std::fmt::Display| format!("{key}: {e}");
            let prob = |v: &str| -> Result<f64, String> {
                let x: f64 = v.parse().map_err(|e| bad(&e))?;
                if (0.0..=1.0).contains(&x) {
                    Ok(x)
                } else {
                    Err(format!("{key}: {x} is not a probability"))
                }
            };
            match key.trim() {
                "erosion" => p.erosion = value.parse().map_err(|e| bad(&e))?,
                "dilation" => p.dilation = value.parse().map_err(|e| bad(&e))?,
                "fill" => p.fill = value.parse().map_err(|e| bad(&e))?,
                "drop" => p.drop_rate = prob(value)?,
                "merge" => p.merge_rate = prob(value)?,
                "mislabel" => p.mislabel_rate = prob(value)?,
                "jitter" => p.box_jitter = value.parse().map_err(|e| bad(&e))?,
                "seed" => p.seed = value.parse().map_err(|e| bad(&e))?,
                other => return Err(format!("unknown noise parameter `{other}`")),
            }
        }
        Ok(p)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one backend call, keyed by the call's content rather than by
/// arrival order so concurrent callers see identical noise.
fn call_rng(seed: u64, viewpoint_id: u32, op: u64, points: &[Pixel]) -> ChaCha8Rng {
    let mut h = splitmix(seed ^ splitmix(viewpoint_id as u64) ^ splitmix(op.wrapping_mul(0x100_0000_01B3)));
    for p in points {
        h = splitmix(h ^ ((p.x as u64) << 32 | p.y as u64));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Binary raster over a window that may extend past the image.
struct Window {
    x0: i64,
    y0: i64,
    w: usize,
    h: usize,
    bits: Vec<bool>,
}

impl Window {
    fn around(cells: &[u32], width: usize, pad: usize) -> Option<Self> {
        if cells.is_empty() {
            return None;
        }
        let (mut xmin, mut ymin, mut xmax, mut ymax) = (usize::MAX, usize::MAX, 0, 0);
        for &c in cells {
            let (x, y) = (c as usize % width, c as usize / width);
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
        let (x0, y0) = (xmin as i64 - pad as i64, ymin as i64 - pad as i64);
        let (w, h) = (xmax - xmin + 1 + 2 * pad, ymax - ymin + 1 + 2 * pad);
        let mut bits = vec![false; w * h];
        for &c in cells {
            let (x, y) = ((c as usize % width) as i64, (c as usize / width) as i64);
            bits[(y - y0) as usize * w + (x - x0) as usize] = true;
        }
        Some(Self { x0, y0, w, h, bits })
    }

    /// Unsets every bit outside the `width` x `height` image.
    fn clip(&mut self, width: usize, height: usize) {
        for y in 0..self.h {
            for x in 0..self.w {
                let (gx, gy) = (x as i64 + self.x0, y as i64 + self.y0);
                if gx < 0 || gy < 0 || gx >= width as i64 || gy >= height as i64 {
                    self.bits[y * self.w + x] = false;
                }
            }
        }
    }

    fn cells(&self, width: usize, height: usize) -> Vec<u32> {
        let mut out = Vec::new();
        for y in 0..self.h {
            for x in 0..self.w {
                let (gx, gy) = (x as i64 + self.x0, y as i64 + self.y0);
                if self.bits[y * self.w + x] && gx >= 0 && gy >= 0 && gx < width as i64 && gy < height as i64 {
                    out.push((gy as usize * width + gx as usize) as u32);
                }
            }
        }
        out
    }

    /// Separable square filter: a cell is set when all (`erode`) or any
    /// (dilate) cells within Chebyshev distance `k` are set. Cells outside
    /// the window count as unset.
    fn filter(&mut self, k: usize, erode: bool) {
        if k == 0 {
            return;
        }
        let pass = |line: &[bool]| -> Vec<bool> {
            let n = line.len();
            let mut prefix = vec![0usize; n + 1];
            for (i, &b) in line.iter().enumerate() {
                prefix[i + 1] = prefix[i] + b as usize;
            }
            (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(k);
                    let hi = (i + k).min(n - 1);
                    let set = prefix[hi + 1] - prefix[lo];
                    if erode {
                        set == 2 * k + 1
                    } else {
                        set > 0
                    }
                })
                .collect()
        };
        for y in 0..self.h {
            let row = pass(&self.bits[y * self.w..(y + 1) * self.w]);
            self.bits[y * self.w..(y + 1) * self.w].copy_from_slice(&row);
        }
        for x in 0..self.w {
            let col: Vec<bool> = (0..self.h).map(|y| self.bits[y * self.w + x]).collect();
            for (y, b) in pass(&col).into_iter().enumerate() {
                self.bits[y * self.w + x] = b;
            }
        }
    }
}

/// Closes the cell set with radius `fill`, then erodes and dilates it, on a
/// `width` x `height` raster. Erosion treats pixels beyond the image as
/// background.
pub(crate) fn morph_cells(
    cells: &[u32],
    width: usize,
    height: usize,
    fill: u32,
    erosion: u32,
    dilation: u32,
) -> Vec<u32> {
    let Some(mut win) = Window::around(cells, width, fill.max(dilation) as usize) else {
        return Vec::new();
    };
    win.filter(fill as usize, false);
    win.filter(fill as usize, true);
    win.clip(width, height);
    win.filter(erosion as usize, true);
    win.filter(dilation as usize, false);
    win.cells(width, height)
}

/// Boundary noise on the mask's silhouette. Rendered instances are sparse
/// splats, so the mask is first closed with radius `fill` to recover the
/// region a segmenter would outline. Erosion only removes cells of the mask;
/// dilation may add any cell that holds a point.
fn morph(mask: Mask2D, p: &NoiseParams, rp: &RenderProduct) -> Mask2D {
    if p.erosion == 0 && p.dilation == 0 {
        return mask;
    }
    let map = rp.index_map();
    let original = mask.cells();
    let cells: Vec<u32> =
        morph_cells(&original, mask.width as usize, mask.height as usize, p.fill, p.erosion, p.dilation)
            .into_iter()
            .filter(|&c| if p.dilation > 0 { map[c as usize] != EMPTY } else { original.binary_search(&c).is_ok() })
            .collect();
    Mask2D::from_cells(mask.viewpoint_id, mask.width, mask.height, cells, mask.score)
}

/// Oracle segmenter degraded by seeded mask drops, merges and boundary
/// erosion/dilation.
#[derive(Debug, Clone)]
pub struct NoisySegmenter {
    oracle: OracleSegmenter,
    params: NoiseParams,
}

impl NoisySegmenter {
    pub fn new(gt: Arc<GroundTruth>, params: NoiseParams) -> Self {
        Self { oracle: OracleSegmenter::new(gt), params }
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }
}

const OP_AUTO: u64 = 1;
const OP_PROMPT: u64 = 2;
const OP_DETECT: u64 = 3;

impl Segmenter for NoisySegmenter {
    fn segment_auto(&self, rp: &RenderProduct, seeds: &[Pixel]) -> Result<Vec<Mask2D>, BackendError> {
        let masks = self.oracle.segment_auto(rp, seeds)?;
        let mut rng = call_rng(self.params.seed, rp.viewpoint_id(), OP_AUTO, seeds);
        let kept: Vec<Mask2D> = masks.into_iter().filter(|_| rng.random::<f64>() >= self.params.drop_rate).collect();
        let mut merged = Vec::with_capacity(kept.len());
        let mut iter = kept.into_iter().peekable();
        while let Some(mask) = iter.next() {
            let fuse = iter.peek().is_some() && rng.random::<f64>() < self.params.merge_rate;
            if fuse {
                let other = iter.next().expect("peeked");
                let mut cells = mask.cells();
                cells.extend(other.cells());
                merged.push(Mask2D::from_cells(
                    mask.viewpoint_id,
                    mask.width,
                    mask.height,
                    cells,
                    mask.score.min(other.score),
                ));
            } else {
                merged.push(mask);
            }
        }
        Ok(merged.into_iter().map(|m| morph(m, &self.params, rp)).filter(|m| !m.is_empty()).collect())
    }

    fn segment_prompted(&self, rp: &RenderProduct, points: &[Pixel]) -> Result<Vec<Mask2D>, BackendError> {
        let masks = self.oracle.segment_prompted(rp, points)?;
        let mut rng = call_rng(self.params.seed, rp.viewpoint_id(), OP_PROMPT, points);
        if rng.random::<f64>() < self.params.drop_rate {
            return Ok(Vec::new());
        }
        Ok(masks.into_iter().map(|m| morph(m, &self.params, rp)).filter(|m| !m.is_empty()).collect())
    }
}

/// Oracle detector with seeded class flips and box-corner jitter.
#[derive(Debug, Clone)]
pub struct NoisyDetector {
    oracle: OracleDetector,
    params: NoiseParams,
}

impl NoisyDetector {
    pub fn new(gt: Arc<GroundTruth>, params: NoiseParams) -> Self {
        Self { oracle: OracleDetector::new(gt), params }
    }
}

impl Detector for NoisyDetector {
    fn detect(&self, rp: &RenderProduct, prompt: &TextPrompt) -> Result<Vec<DetectionBox>, BackendError> {
        let boxes = self.oracle.detect(rp, prompt)?;
        let mut rng = call_rng(self.params.seed, rp.viewpoint_id(), OP_DETECT, &[]);
        let (wmax, hmax) = (rp.width() as i64 - 1, rp.height() as i64 - 1);
        let j = self.params.box_jitter as i64;
        Ok(boxes
            .into_iter()
            .map(|mut b| {
                if prompt.len() > 1 && rng.random::<f64>() < self.params.mislabel_rate {
                    let shift = rng.random_range(1..prompt.len());
                    b.class_index = (b.class_index + shift) % prompt.len();
                }
                if j > 0 {
                    let mut nudge = |v: u32, max: i64| (v as i64 + rng.random_range(-j..=j)).clamp(0, max) as u32;
                    let (x0, x1) = (nudge(b.x0, wmax), nudge(b.x1, wmax));
                    let (y0, y1) = (nudge(b.y0, hmax), nudge(b.y1, hmax));
                    (b.x0, b.x1) = (x0.min(x1), x0.max(x1));
                    (b.y0, b.y1) = (y0.min(y1), y0.max(y1));
                }
                b
            })
            .collect())
    }
}
