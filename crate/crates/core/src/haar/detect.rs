use rayon::prelude::*;

use super::{detection_order, group_rects, CascadeModel, DetectError, FaceBox, NodeChild};
use crate::image::{build_integrals, GrayImage, IntegralImage};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectParams {
    /// Ratio between consecutive window sizes, > 1.
    pub scale_factor: f64,
    /// Minimum raw hits per group; 0 returns the raw hits ungrouped.
    pub min_neighbors: usize,
    /// Smallest window width in pixels; `None` means the base window.
    pub min_size: Option<usize>,
    /// Largest window width in pixels; `None` means unbounded.
    pub max_size: Option<usize>,
    /// Stride as a fraction of the scaled window width (at least 1 px).
    pub step_fraction: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            scale_factor: 1.1,
            min_neighbors: 3,
            min_size: None,
            max_size: None,
            step_fraction: 1.0 / 24.0,
        }
    }
}

impl DetectParams {
    fn validate(&self) -> Result<(), DetectError> {
        if !(self.scale_factor > 1.0 && self.scale_factor.is_finite()) {
            return Err(DetectError::InvalidParams(format!(
                "scale factor must exceed 1, got {}",
                self.scale_factor
            )));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction.is_finite()) {
            return Err(DetectError::InvalidParams(format!(
                "step fraction must be positive, got {}",
                self.step_fraction
            )));
        }
        Ok(())
    }
}

/// Outcome of running the cascade on one window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowDecision {
    pub accepted: bool,
    pub stages_passed: usize,
}

/// A rectangle as four offsets into the summed-area table, relative to the
/// window's top-left table entry.
#[derive(Clone, Copy, Debug, Default)]
struct ScaledRect {
    tl: usize,
    tr: usize,
    bl: usize,
    br: usize,
    weight: f64,
}

/// Element of a summed-area table. `u32` tables wrap on overflow but give
/// exact differences for any rectangle whose true sum fits in 32 bits.
trait SumCell: Copy + Send + Sync {
    fn rect(tl: Self, tr: Self, bl: Self, br: Self) -> f64;
}

impl SumCell for u64 {
    #[inline(always)]
    fn rect(tl: u64, tr: u64, bl: u64, br: u64) -> f64 {
        // i64 -> f64 is a single instruction, u64 -> f64 is not
        (br + tl - tr - bl) as i64 as f64
    }
}

impl SumCell for u32 {
    #[inline(always)]
    fn rect(tl: u32, tr: u32, bl: u32, br: u32) -> f64 {
        br.wrapping_add(tl).wrapping_sub(tr).wrapping_sub(bl) as f64
    }
}

/// Largest pixel count whose every rectangle sum fits in a `u32`.
const NARROW_MAX_PIXELS: usize = u32::MAX as usize / 255;

impl ScaledRect {
    #[inline(always)]
    fn sum<T: SumCell>(&self, window: &[T]) -> f64 {
        debug_assert!(self.br < window.len());
        // SAFETY: every offset is at most `win_h * stride + win_w` (rects are
        // clamped into the window in `scale_node`) and callers only pass
        // windows at least that length plus one.
        unsafe {
            T::rect(
                *window.get_unchecked(self.tl),
                *window.get_unchecked(self.tr),
                *window.get_unchecked(self.bl),
                *window.get_unchecked(self.br),
            )
        }
    }
    /// Sums of the rect in `LANES` windows one pixel apart.
    #[inline(always)]
    fn sum_lanes<T: SumCell>(&self, window: &[T]) -> [f64; LANES] {
        debug_assert!(self.br + LANES <= window.len());
        // SAFETY: as in `sum`, with `evaluate_lanes` passing `LANES - 1`
        // extra entries.
        let at = |o: usize| -> [T; LANES] {
            std::array::from_fn(|l| unsafe { *window.get_unchecked(o + l) })
        };
        let (tl, tr, bl, br) = (at(self.tl), at(self.tr), at(self.bl), at(self.br));
        std::array::from_fn(|l| T::rect(tl[l], tr[l], bl[l], br[l]))
    }
}

#[derive(Clone, Debug)]
struct ScaledNode {
    rects: [ScaledRect; 3],
    three: bool,
    threshold: f64,
    /// `[right, left]` with node indices rebased into `ScaledCascade::nodes`.
    children: [NodeChild; 2],
}

#[derive(Debug)]
struct ScaledStage {
    /// Range into `ScaledCascade::roots`.
    trees: std::ops::Range<usize>,
    threshold: f64,
}

/// The cascade with every rectangle resized for one window size and laid
/// out for one integral-table stride.
#[derive(Debug)]
struct ScaledCascade {
    win_w: usize,
    win_h: usize,
    stride: usize,
    inv_area: f64,
    nodes: Vec<ScaledNode>,
    roots: Vec<usize>,
    stages: Vec<ScaledStage>,
    /// Leaf values `[right, left]` per tree, when every tree is a single
    /// split; enables `evaluate_lanes`.
    stumps: Option<Vec<[f64; 2]>>,
}

/// Adjacent windows evaluated together on unit-stride scales.
const LANES: usize = 4;

#[inline]
fn round_half_up(v: f64) -> usize {
    // truncation is floor for non-negative input; negatives saturate to 0
    (v + 0.5) as usize
}

impl ScaledCascade {
    fn new(model: &CascadeModel, scale: f64, stride: usize) -> Self {
        let win_w = round_half_up(model.base_w as f64 * scale).max(1);
        let win_h = round_half_up(model.base_h as f64 * scale).max(1);
        let mut nodes = Vec::with_capacity(model.feature_count());
        let mut roots = Vec::new();
        let mut stages = Vec::with_capacity(model.stages.len());
        for stage in &model.stages {
            let first = roots.len();
            for tree in &stage.trees {
                let base = nodes.len();
                roots.push(base);
                for node in &tree.nodes {
                    nodes.push(Self::scale_node(node, scale, win_w, win_h, stride, base));
                }
            }
            stages.push(ScaledStage {
                trees: first..roots.len(),
                threshold: stage.threshold,
            });
        }
        let stumps = roots
            .iter()
            .map(|&r| match nodes[r].children {
                [NodeChild::Leaf(right), NodeChild::Leaf(left)] => Some([right, left]),
                _ => None,
            })
            .collect();
        Self {
            win_w,
            win_h,
            stride,
            inv_area: 1.0 / (win_w * win_h) as f64,
            nodes,
            roots,
            stages,
            stumps,
        }
    }

    fn scale_node(
        node: &super::TreeNode,
        scale: f64,
        win_w: usize,
        win_h: usize,
        stride: usize,
        base: usize,
    ) -> ScaledNode {
        let src = &node.feature.rects;
        let mut dims = [(0usize, 0usize, 0usize, 0usize); 3];
        for (d, r) in dims.iter_mut().zip(src) {
            let x = round_half_up(r.x as f64 * scale).min(win_w - 1);
            let y = round_half_up(r.y as f64 * scale).min(win_h - 1);
            let w = round_half_up(r.w as f64 * scale).clamp(1, win_w - x);
            let h = round_half_up(r.h as f64 * scale).clamp(1, win_h - y);
            *d = (x, y, w, h);
        }
        let mut weights = [0.0; 3];
        for (w, r) in weights.iter_mut().zip(src) {
            *w = r.weight;
        }
        // Rounding breaks the zero-sum balance of the weighted areas; the
        // first weight is re-derived so flat regions still score zero.
        let weighted = |i: usize, w: f64| w * (src[i].w * src[i].h) as f64;
        let base_balance: f64 = (0..src.len()).map(|i| weighted(i, src[i].weight)).sum();
        let base_area0 = (src[0].w * src[0].h) as f64;
        if base_balance.abs() < 1e-9 * base_area0 {
            let rest: f64 = (1..src.len())
                .map(|i| weights[i] * (dims[i].2 * dims[i].3) as f64)
                .sum();
            weights[0] = -rest / (dims[0].2 * dims[0].3) as f64;
        }
        let inv_area = 1.0 / (win_w * win_h) as f64;
        let mut rects = [ScaledRect::default(); 3];
        for i in 0..src.len() {
            let (x, y, w, h) = dims[i];
            rects[i] = ScaledRect {
                tl: y * stride + x,
                tr: y * stride + x + w,
                bl: (y + h) * stride + x,
                br: (y + h) * stride + x + w,
                weight: weights[i] * inv_area,
            };
        }
        let rebase = |c: NodeChild| match c {
            NodeChild::Node(i) => NodeChild::Node(base + i),
            leaf => leaf,
        };
        ScaledNode {
            rects,
            three: src.len() == 3,
            threshold: node.threshold,
            children: [rebase(node.right), rebase(node.left)],
        }
    }

    /// Standard deviation of the window intensities; 1 for flat windows.
    #[inline]
    fn window_sigma(&self, ii: &IntegralImage, x: usize, y: usize) -> f64 {
        let area = (self.win_w * self.win_h) as u64;
        let s = ii.sum_unchecked(x, y, self.win_w, self.win_h);
        let sq = ii.sq_sum_unchecked(x, y, self.win_w, self.win_h);
        // area^2 * variance, exact; fits in 64 bits below 2^23 window pixels
        let scaled_var = if area < 1 << 23 {
            (area * sq - s * s) as i64 as f64
        } else {
            (area as u128 * sq as u128 - s as u128 * s as u128) as f64
        };
        if scaled_var <= 0.0 {
            1.0
        } else {
            scaled_var.sqrt() * self.inv_area
        }
    }

    #[inline]
    fn tree_output<T: SumCell>(&self, root: usize, window: &[T], sigma: f64) -> f64 {
        let mut idx = root;
        loop {
            let node = &self.nodes[idx];
            let [a, b, c] = &node.rects;
            let mut value = a.weight * a.sum(window) + b.weight * b.sum(window);
            if node.three {
                value += c.weight * c.sum(window);
            }
            // indexed select instead of a branch: the comparison is close to a
            // coin flip and mispredicts badly
            let next = node.children[usize::from(value < node.threshold * sigma)];
            match next {
                NodeChild::Leaf(v) => return v,
                NodeChild::Node(i) => idx = i,
            }
        }
    }

    /// Runs the stages in order and stops at the first failing one.
    fn evaluate<T: SumCell>(
        &self,
        ii: &IntegralImage,
        table: &[T],
        x: usize,
        y: usize,
    ) -> WindowDecision {
        debug_assert_eq!(self.stride, ii.width() + 1);
        let sigma = self.window_sigma(ii, x, y);
        let origin = y * self.stride + x;
        let window = &table[origin..=origin + self.win_h * self.stride + self.win_w];
        self.evaluate_from(window, sigma, 0)
    }

    /// `evaluate` starting at stage `first`, all earlier stages passed.
    fn evaluate_from<T: SumCell>(&self, window: &[T], sigma: f64, first: usize) -> WindowDecision {
        for (i, stage) in self.stages.iter().enumerate().skip(first) {
            let sum: f64 = self.roots[stage.trees.clone()]
                .iter()
                .map(|&root| self.tree_output(root, window, sigma))
                .sum();
            if sum < stage.threshold {
                return WindowDecision {
                    accepted: false,
                    stages_passed: i,
                };
            }
        }
        WindowDecision {
            accepted: true,
            stages_passed: self.stages.len(),
        }
    }

    /// `evaluate` for the `LANES` windows starting at `(x, y)`, `(x + 1, y)`,
    /// ...; each lane performs the same arithmetic in the same order as the
    /// scalar path, so decisions are identical.
    fn evaluate_lanes<T: SumCell>(
        &self,
        ii: &IntegralImage,
        table: &[T],
        leaves: &[[f64; 2]],
        x: usize,
        y: usize,
    ) -> [WindowDecision; LANES] {
        let sigma: [f64; LANES] = std::array::from_fn(|l| self.window_sigma(ii, x + l, y));
        let origin = y * self.stride + x;
        let window = &table[origin..origin + self.win_h * self.stride + self.win_w + LANES];
        let mut out = [WindowDecision {
            accepted: true,
            stages_passed: self.stages.len(),
        }; LANES];
        let mut alive = LANES;
        for (i, stage) in self.stages.iter().enumerate() {
            let mut sums = [-0.0f64; LANES];
            for t in stage.trees.clone() {
                let node = &self.nodes[self.roots[t]];
                let [a, b, c] = &node.rects;
                let (sa, sb) = (a.sum_lanes(window), b.sum_lanes(window));
                let mut value: [f64; LANES] =
                    std::array::from_fn(|l| a.weight * sa[l] + b.weight * sb[l]);
                if node.three {
                    let sc = c.sum_lanes(window);
                    for (v, s) in value.iter_mut().zip(sc) {
                        *v += c.weight * s;
                    }
                }
                let [right, left] = leaves[t];
                for l in 0..LANES {
                    sums[l] += if value[l] < node.threshold * sigma[l] {
                        left
                    } else {
                        right
                    };
                }
            }
            for (d, sum) in out.iter_mut().zip(sums) {
                if d.accepted && sum < stage.threshold {
                    *d = WindowDecision {
                        accepted: false,
                        stages_passed: i,
                    };
                    alive -= 1;
                }
            }
            if alive == 0 {
                break;
            }
            if alive == 1 {
                // a lone survivor is cheaper to finish on the scalar path
                let l = out.iter().position(|d| d.accepted).unwrap_or(0);
                out[l] = self.evaluate_from(&window[l..], sigma[l], i + 1);
                break;
            }
        }
        out
    }

    fn scan<T: SumCell>(
        &self,
        ii: &IntegralImage,
        table: &[T],
        step_fraction: f64,
    ) -> Vec<FaceBox> {
        let step = round_half_up(self.win_w as f64 * step_fraction).max(1);
        let mut hits = Vec::new();
        let mut y = 0;
        while y + self.win_h <= ii.height() {
            let mut x = 0;
            if let (1, Some(leaves)) = (step, &self.stumps) {
                while x + self.win_w + LANES - 1 <= ii.width() {
                    let decisions = self.evaluate_lanes(ii, table, leaves, x, y);
                    for (l, d) in decisions.iter().enumerate() {
                        if d.accepted {
                            hits.push(FaceBox::new(x + l, y, self.win_w, self.win_h));
                        }
                    }
                    x += LANES;
                }
            }
            while x + self.win_w <= ii.width() {
                if self.evaluate(ii, table, x, y).accepted {
                    hits.push(FaceBox::new(x, y, self.win_w, self.win_h));
                }
                x += step;
            }
            y += step;
        }
        hits
    }
}

/// Scores the window at `(x, y)` whose size is the base window times `scale`.
///
/// Feature responses are normalized by the window area and compared with the
/// node threshold times the window's intensity standard deviation.
pub fn evaluate_window(
    model: &CascadeModel,
    ii: &IntegralImage,
    x: usize,
    y: usize,
    scale: f64,
) -> Result<WindowDecision, DetectError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DetectError::InvalidParams(format!("bad scale {scale}")));
    }
    let sc = ScaledCascade::new(model, scale, ii.width() + 1);
    if sc.win_w == 0 || sc.win_h == 0 || x + sc.win_w > ii.width() || y + sc.win_h > ii.height() {
        return Err(DetectError::OutOfBounds {
            x,
            y,
            w: sc.win_w,
            h: sc.win_h,
        });
    }
    Ok(match narrow_table(ii) {
        Some(t) => sc.evaluate(ii, &t, x, y),
        None => sc.evaluate(ii, ii.sums(), x, y),
    })
}

/// The sums table truncated to 32 bits, when that is exact for the image.
fn narrow_table(ii: &IntegralImage) -> Option<Vec<u32>> {
    (ii.width() * ii.height() <= NARROW_MAX_PIXELS)
        .then(|| ii.sums().iter().map(|&v| v as u32).collect())
}

/// Window scales visited for an image of the given size.
pub(crate) fn scan_scales(
    model: &CascadeModel,
    width: usize,
    height: usize,
    p: &DetectParams,
) -> Vec<f64> {
    let start = p
        .min_size
        .map(|m| m as f64 / model.base_w as f64)
        .unwrap_or(1.0)
        .max(1.0);
    let mut scales = Vec::new();
    let mut last_size = None;
    let mut scale = start;
    loop {
        let w = round_half_up(model.base_w as f64 * scale);
        let h = round_half_up(model.base_h as f64 * scale);
        if w > width || h > height || p.max_size.is_some_and(|m| w > m) {
            break;
        }
        // small bases can round two scales to the same window
        if last_size != Some((w, h)) {
            scales.push(scale);
            last_size = Some((w, h));
        }
        scale *= p.scale_factor;
    }
    scales
}

/// Multiscale sliding-window detection.
///
/// Scales grow geometrically from the minimum size; hits are grouped with
/// `group_rects` (or returned raw when `min_neighbors == 0`) and sorted by
/// descending neighbor count, then by `(y, x)`.
pub fn detect_multiscale(
    model: &CascadeModel,
    img: &GrayImage,
    p: &DetectParams,
) -> Result<Vec<FaceBox>, DetectError> {
    p.validate()?;
    if img.width() < model.base_w || img.height() < model.base_h {
        return Err(DetectError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            base_w: model.base_w,
            base_h: model.base_h,
        });
    }
    let ii = build_integrals(img);
    let scales = scan_scales(model, img.width(), img.height(), p);
    let narrow = narrow_table(&ii);
    let raw: Vec<FaceBox> = scales
        .par_iter()
        .map(|&s| {
            let sc = ScaledCascade::new(model, s, ii.width() + 1);
            match &narrow {
                Some(t) => sc.scan(&ii, t, p.step_fraction),
                None => sc.scan(&ii, ii.sums(), p.step_fraction),
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    if p.min_neighbors == 0 {
        let mut raw = raw;
        raw.sort_by(detection_order);
        return Ok(raw);
    }
    Ok(group_rects(&raw, p.min_neighbors))
}
