use super::{round_to_u8, GrayImage, ImageError};

const BINS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Clip level relative to a flat histogram: the absolute per-bin limit is
    /// `clip_limit * tile_pixels / 256` (at least 1).
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: 2.0,
        }
    }
}

impl ClaheParams {
    pub fn validate(&self) -> Result<(), ImageError> {
        if self.tiles_x == 0 || self.tiles_y == 0 {
            return Err(ImageError::InvalidParams(
                "CLAHE tile grid must be at least 1x1".into(),
            ));
        }
        if !(self.clip_limit > 0.0 && self.clip_limit.is_finite()) {
            return Err(ImageError::InvalidParams(format!(
                "CLAHE clip limit must be positive, got {}",
                self.clip_limit
            )));
        }
        Ok(())
    }
}

/// Tile boundaries along one axis: tile `i` covers `[i*n/tiles, (i+1)*n/tiles)`.
fn tile_bounds(n: usize, tiles: usize) -> Vec<(usize, usize)> {
    (0..tiles)
        .map(|i| (i * n / tiles, (i + 1) * n / tiles))
        .collect()
}

/// For each coordinate along an axis: the two tiles whose centers bracket it
/// and the weight of the second one.
fn axis_weights(n: usize, bounds: &[(usize, usize)]) -> Vec<(usize, usize, f64)> {
    let centers: Vec<f64> = bounds
        .iter()
        .map(|&(s, e)| (s + e - 1) as f64 / 2.0)
        .collect();
    let last = centers.len() - 1;
    (0..n)
        .map(|p| {
            let p = p as f64;
            if p <= centers[0] {
                (0, 0, 0.0)
            } else if p >= centers[last] {
                (last, last, 0.0)
            } else {
                let i = centers.iter().rposition(|&c| c <= p).unwrap();
                let t = (p - centers[i]) / (centers[i + 1] - centers[i]);
                (i, i + 1, t)
            }
        })
        .collect()
}

/// Clipped, redistributed equalization mapping of one tile.
fn tile_mapping(
    img: &GrayImage,
    (x0, x1): (usize, usize),
    (y0, y1): (usize, usize),
    clip_limit: f64,
) -> [u8; BINS] {
    let mut hist = [0u64; BINS];
    for y in y0..y1 {
        for &v in &img.row(y)[x0..x1] {
            hist[v as usize] += 1;
        }
    }
    let pixels = ((x1 - x0) * (y1 - y0)) as u64;

    let clip = ((clip_limit * pixels as f64 / BINS as f64).floor() as u64).max(1);
    let mut excess = 0u64;
    for h in hist.iter_mut() {
        if *h > clip {
            excess += *h - clip;
            *h = clip;
        }
    }
    let batch = excess / BINS as u64;
    let remainder = (excess % BINS as u64) as usize;
    for (i, h) in hist.iter_mut().enumerate() {
        *h += batch + u64::from(i < remainder);
    }

    let mut lut = [0u8; BINS];
    let mut cdf = 0u64;
    for (i, h) in hist.iter().enumerate() {
        cdf += h;
        lut[i] = round_to_u8(255.0 * cdf as f64 / pixels as f64);
    }
    lut
}

/// Contrast-limited adaptive histogram equalization.
///
/// Each tile gets a clipped 256-bin histogram whose excess is spread evenly
/// (remainder from bin 0 upward) and mapped through `round(255 * CDF)`.
/// Output pixels bilinearly blend the mappings of the nearest tile centers;
/// outside the lattice of centers the nearest tile's mapping is used alone.
pub fn apply_clahe(img: &GrayImage, p: &ClaheParams) -> Result<GrayImage, ImageError> {
    p.validate()?;
    let (w, h) = (img.width(), img.height());
    if w < p.tiles_x || h < p.tiles_y {
        return Err(ImageError::ImageSmallerThanGrid {
            width: w,
            height: h,
            tiles_x: p.tiles_x,
            tiles_y: p.tiles_y,
        });
    }
    let xb = tile_bounds(w, p.tiles_x);
    let yb = tile_bounds(h, p.tiles_y);
    let mut luts = Vec::with_capacity(p.tiles_x * p.tiles_y);
    for &ys in &yb {
        for &xs in &xb {
            luts.push(tile_mapping(img, xs, ys, p.clip_limit));
        }
    }
    let xw = axis_weights(w, &xb);
    let yw = axis_weights(h, &yb);

    let mut out = Vec::with_capacity(w * h);
    for (y, &(ty0, ty1, fy)) in yw.iter().enumerate() {
        let row = img.row(y);
        for (x, &(tx0, tx1, fx)) in xw.iter().enumerate() {
            let v = row[x] as usize;
            let m = |ty: usize, tx: usize| luts[ty * p.tiles_x + tx][v] as f64;
            let top = m(ty0, tx0) + fx * (m(ty0, tx1) - m(ty0, tx0));
            let bottom = m(ty1, tx0) + fx * (m(ty1, tx1) - m(ty1, tx0));
            out.push(round_to_u8(top + fy * (bottom - top)));
        }
    }
    GrayImage::new(w, h, out)
}
