use crate::geometry::{ColoredPointCloud, PointIndexSet};

use super::{Camera, ViewError, Viewpoint, DEFAULT_RESOLUTION, DEFAULT_SPLAT_RADIUS};

/// Index-map sentinel for pixels no point covers.
pub const EMPTY: u32 = u32::MAX;

const BACKGROUND: [u8; 3] = [255, 255, 255];

/// A raster cell, `x` = column, `y` = row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderSettings {
    pub resolution: usize,
    /// Splat disc radius in pixels; radius 1 covers a full 3x3 block.
    pub splat_radius: u32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self { resolution: DEFAULT_RESOLUTION, splat_radius: DEFAULT_SPLAT_RADIUS }
    }
}

/// The RGB image and point index map rendered from one viewpoint, with a
/// point-to-pixel inverse table so projections in either direction are
/// proportional to the size of their input.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderProduct {
    viewpoint_id: u32,
    width: usize,
    height: usize,
    image: Vec<[u8; 3]>,
    index_map: Vec<u32>,
    num_points: usize,
    // CSR: pixels won by point i are point_pixels[offsets[i]..offsets[i + 1]].
    offsets: Vec<u32>,
    point_pixels: Vec<u32>,
    visible: PointIndexSet,
}

impl RenderProduct {
    /// Assembles a render from raw row-major buffers. Every non-[`EMPTY`]
    /// entry of `index_map` must be `< num_points`.
    pub fn from_buffers(
        viewpoint_id: u32,
        width: usize,
        height: usize,
        image: Vec<[u8; 3]>,
        index_map: Vec<u32>,
        num_points: usize,
    ) -> Result<Self, ViewError> {
        if image.len() != width * height || index_map.len() != width * height {
            return Err(ViewError::RasterShape { width, height });
        }
        if let Some(&bad) = index_map.iter().find(|&&i| i != EMPTY && i as usize >= num_points) {
            return Err(ViewError::IndexOutOfRange { index: bad, len: num_points });
        }
        let mut counts = vec![0u32; num_points + 1];
        for &i in &index_map {
            if i != EMPTY {
                counts[i as usize + 1] += 1;
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let offsets = counts;
        let mut cursor = offsets.clone();
        let mut point_pixels = vec![0u32; *offsets.last().unwrap_or(&0) as usize];
        for (cell, &i) in index_map.iter().enumerate() {
            if i != EMPTY {
                let slot = &mut cursor[i as usize];
                point_pixels[*slot as usize] = cell as u32;
                *slot += 1;
            }
        }
        let visible = PointIndexSet::from_sorted(
            (0..num_points as u32).filter(|&i| offsets[i as usize + 1] > offsets[i as usize]).collect(),
        )
        .expect("ascending by construction");
        Ok(Self { viewpoint_id, width, height, image, index_map, num_points, offsets, point_pixels, visible })
    }

    pub fn viewpoint_id(&self) -> u32 {
        self.viewpoint_id
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn image(&self) -> &[[u8; 3]] {
        &self.image
    }

    /// Row-major point indices, [`EMPTY`] where no point won.
    pub fn index_map(&self) -> &[u32] {
        &self.index_map
    }

    pub fn in_bounds(&self, p: Pixel) -> bool {
        (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    pub fn linear(&self, p: Pixel) -> usize {
        p.y as usize * self.width + p.x as usize
    }

    pub fn pixel_at(&self, linear: usize) -> Pixel {
        Pixel::new((linear % self.width) as u32, (linear / self.width) as u32)
    }

    /// The point stored at `p`, `None` for empty or out-of-range cells.
    pub fn index_at(&self, p: Pixel) -> Option<u32> {
        if !self.in_bounds(p) {
            return None;
        }
        match self.index_map[self.linear(p)] {
            EMPTY => None,
            i => Some(i),
        }
    }

    /// Linear offsets of the cells won by `point` (ascending).
    pub fn cells_of(&self, point: u32) -> &[u32] {
        let i = point as usize;
        if i >= self.num_points {
            return &[];
        }
        &self.point_pixels[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn is_visible(&self, point: u32) -> bool {
        !self.cells_of(point).is_empty()
    }

    pub fn visible(&self) -> &PointIndexSet {
        &self.visible
    }
}

/// Renders `cloud` from `vp` with nearest-point z-buffering. Each point
/// splats a disc of `splat_radius` pixels at its projected depth; depth ties
/// keep the lower point index.
pub fn render(cloud: &ColoredPointCloud, vp: &Viewpoint, settings: RenderSettings) -> RenderProduct {
    let (w, h) = (settings.resolution, settings.resolution);
    let cam = Camera::look_at_origin(vp, w, h);
    let mut depth = vec![f32::INFINITY; w * h];
    let mut index_map = vec![EMPTY; w * h];
    let r = settings.splat_radius as i64;
    let reach = r * r + r;

    for (i, p) in cloud.positions().iter().enumerate() {
        let Some((u, v, d)) = cam.project(p) else { continue };
        let d = d as f32;
        let (cx, cy) = (u.floor() as i64, v.floor() as i64);
        if cx + r < 0 || cy + r < 0 || cx - r >= w as i64 || cy - r >= h as i64 {
            continue;
        }
        for dy in -r..=r {
            let y = cy + dy;
            if y < 0 || y >= h as i64 {
                continue;
            }
            for dx in -r..=r {
                let x = cx + dx;
                if x < 0 || x >= w as i64 || dx * dx + dy * dy > reach {
                    continue;
                }
                let cell = y as usize * w + x as usize;
                // Strict comparison plus ascending iteration keeps the lower
                // index on equal depth.
                if d < depth[cell] {
                    depth[cell] = d;
                    index_map[cell] = i as u32;
                }
            }
        }
    }

    let image = index_map.iter().map(|&i| if i == EMPTY { BACKGROUND } else { cloud.color(i) }).collect();
    RenderProduct::from_buffers(vp.id, w, h, image, index_map, cloud.len()).expect("render buffers are consistent")
}

/// Pixels (row-major order) whose stored point belongs to `x3d`. Occluded
/// members of `x3d` contribute nothing.
pub fn bip_forward(x3d: &PointIndexSet, rp: &RenderProduct) -> Vec<Pixel> {
    let mut cells: Vec<u32> = x3d.iter().flat_map(|i| rp.cells_of(i).iter().copied()).collect();
    cells.sort_unstable();
    cells.into_iter().map(|c| rp.pixel_at(c as usize)).collect()
}

/// One representative pixel per visible member of `x3d`: the middle of the
/// cells that point won, which for an unoccluded splat is its center.
pub fn bip_forward_anchors(x3d: &PointIndexSet, rp: &RenderProduct) -> Vec<Pixel> {
    x3d.iter()
        .filter_map(|i| {
            let cells = rp.cells_of(i);
            (!cells.is_empty()).then(|| rp.pixel_at(cells[cells.len() / 2] as usize))
        })
        .collect()
}

/// Distinct points stored at `pixels`, skipping empty cells.
pub fn bip_backward(pixels: &[Pixel], rp: &RenderProduct) -> Result<PointIndexSet, ViewError> {
    let mut out = Vec::with_capacity(pixels.len());
    for &p in pixels {
        if !rp.in_bounds(p) {
            return Err(ViewError::PixelOutsideRaster { x: p.x, y: p.y, width: rp.width, height: rp.height });
        }
        let i = rp.index_map[rp.linear(p)];
        if i != EMPTY {
            out.push(i);
        }
    }
    Ok(PointIndexSet::from_unsorted(out))
}

/// Every point that won at least one pixel.
pub fn visible_subset(rp: &RenderProduct) -> PointIndexSet {
    rp.visible.clone()
}

/// Renders of one object keyed by viewpoint id.
#[derive(Debug, Clone, Default)]
pub struct RenderSet {
    products: Vec<RenderProduct>,
}

impl RenderSet {
    pub fn new(mut products: Vec<RenderProduct>) -> Self {
        products.sort_by_key(|p| p.viewpoint_id);
        Self { products }
    }

    pub fn get(&self, viewpoint_id: u32) -> Option<&RenderProduct> {
        self.products.binary_search_by_key(&viewpoint_id, |p| p.viewpoint_id).ok().map(|i| &self.products[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &RenderProduct> {
        self.products.iter()
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }
}
