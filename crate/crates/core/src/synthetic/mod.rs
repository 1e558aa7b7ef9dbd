//! Synthetic stand-in for the orchard data and the segmentation network:
//! random Y-tree ground truths, prediction-like degradations and a mock
//! predictor whose output improves with the training-set size.

pub mod benchmark;
pub mod mock;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{is_successful_label, FilterConfig};
use crate::mask::{label_components, row_runs, Mask};
use crate::seeds::derive_seed;
use crate::template::{build_curves, rasterize, BranchParams, CurveId, ThicknessMap, YTreeParams};

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mask: Mask,
    pub params: YTreeParams,
}

/// Random tree shape inside the GA's gene bounds: a near-vertical trunk
/// splitting into a left and a right branch that reach the top edge.
pub fn sample_params(rng: &mut impl Rng, width: usize, height: usize) -> YTreeParams {
    let (w, h) = (width as f64, height as f64);
    let jy = rng.gen_range(0.25 * h..0.42 * h);
    let jx = w / 2.0 + rng.gen_range(-0.08 * w..0.08 * w);
    let via_lo = (jy + 0.18 * h).max(0.3 * h);
    let mut branch = |side: f64| BranchParams {
        junction_slope: side * rng.gen_range(0.5..1.4),
        via_x: jx + side * rng.gen_range(0.12 * w..0.22 * w),
        via_y: rng.gen_range(via_lo..0.78 * h),
        end_x: (jx + side * rng.gen_range(0.22 * w..0.36 * w)).clamp(0.06 * w, 0.94 * w),
        end_slope: rng.gen_range(-0.3..0.3),
    };
    let branches = [branch(-1.0), branch(1.0)];
    YTreeParams {
        trunk_base_x: jx + rng.gen_range(-0.04 * w..0.04 * w),
        trunk_base_slope: rng.gen_range(-0.15..0.15),
        junction_x: jx,
        junction_y: jy,
        branches,
    }
}

/// Per-row thickness tapering from a thick trunk base to thin branch tips.
fn sample_thickness(
    rng: &mut impl Rng,
    params: &YTreeParams,
    height: usize,
    (lo, hi): (usize, usize),
) -> Result<ThicknessMap> {
    let curves = build_curves(params, height as f64)?;
    let mid = (lo + hi).div_ceil(2);
    let base = rng.gen_range(mid..=hi) as f64;
    let at_junction = rng.gen_range(mid.saturating_sub(1).max(lo) as f64..=base);
    let lerp = |a: f64, b: f64, f: f64| a + (b - a) * f;
    let mut map = ThicknessMap::new();
    let trunk = curves.curve_rows(CurveId::Trunk);
    let span = trunk.len().max(1) as f64;
    for y in trunk.clone() {
        let t = lerp(base, at_junction, (y - trunk.start) as f64 / span);
        map.insert((CurveId::Trunk, y), t.round() as usize);
    }
    for id in [CurveId::Branch1, CurveId::Branch2] {
        let rows = curves.curve_rows(id);
        let start = (0.8 * at_junction).max(lo as f64);
        let tip = rng.gen_range(lo..=(lo + 1).min(hi)) as f64;
        let span = rows.len().max(1) as f64;
        for y in rows.clone() {
            let t = lerp(start, tip, (y - rows.start) as f64 / span);
            map.insert((id, y), (t.round() as usize).clamp(lo, hi));
        }
    }
    Ok(map)
}

/// `n` ground-truth trees, each a single blob passing the Y filter.
/// Deterministic in `seed` and independent of thread count.
pub fn generate_ground_truth(
    n: usize,
    seed: u64,
    size: usize,
    thickness: (usize, usize),
    filter: &FilterConfig,
) -> Result<Vec<GroundTruth>> {
    if n == 0 || size < 16 || thickness.0 == 0 || thickness.0 > thickness.1 {
        return Err(Error::Config(format!(
            "ground truth needs n >= 1, size >= 16 and 1 <= min thickness <= max (got {n}, {size}, {thickness:?})"
        )));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "ground-truth", i as u64));
            for _ in 0..200 {
                let params = sample_params(&mut rng, size, size);
                let Ok(curves) = build_curves(&params, size as f64) else {
                    continue;
                };
                let map = sample_thickness(&mut rng, &params, size, thickness)?;
                let mask = rasterize(&curves, &map, size, size);
                if is_successful_label(&mask, filter) {
                    return Ok(GroundTruth { mask, params });
                }
            }
            Err(Error::Data(format!("could not sample a valid tree for image {i}")))
        })
        .collect()
}

/// Knobs of the simulated prediction errors at full severity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationConfig {
    /// Chance of one long gap whose presence and place depend only on
    /// `occlusion_seed`, so it recurs on every prediction of the same image.
    pub occlusion_prob: f64,
    /// Occlusion length range as fractions of the image height.
    pub occlusion_length: (f64, f64),
    /// Gap trials per image; each succeeds with `gap_prob`.
    pub gap_count: usize,
    pub gap_prob: f64,
    /// Gap length range as fractions of the image height.
    pub gap_length: (f64, f64),
    /// Noise trials per image; each succeeds with `noise_prob`.
    pub noise_count: usize,
    pub noise_prob: f64,
    /// Side length range of square noise specks, in pixels.
    pub noise_size: (usize, usize),
    /// Thin tall blob beside the trunk.
    pub pole_prob: f64,
    /// Piece of a neighbouring tree near the image side.
    pub neighbor_fragment_prob: f64,
    /// Short blob at the top edge.
    pub false_branch_prob: f64,
    /// Standard deviation of per-row edge jitter, in pixels.
    pub thickness_jitter_sigma: f64,
    pub rng_seed: u64,
    pub occlusion_seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            occlusion_prob: 0.6,
            occlusion_length: (0.08, 0.2),
            gap_count: 3,
            gap_prob: 0.45,
            gap_length: (0.04, 0.12),
            noise_count: 6,
            noise_prob: 0.5,
            noise_size: (1, 2),
            pole_prob: 0.3,
            neighbor_fragment_prob: 0.3,
            false_branch_prob: 0.3,
            thickness_jitter_sigma: 0.6,
            rng_seed: 0,
            occlusion_seed: 0,
        }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("occlusion_prob", self.occlusion_prob),
            ("gap_prob", self.gap_prob),
            ("noise_prob", self.noise_prob),
            ("pole_prob", self.pole_prob),
            ("neighbor_fragment_prob", self.neighbor_fragment_prob),
            ("false_branch_prob", self.false_branch_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("degradation.{name} must lie in [0, 1]")));
            }
        }
        for (name, (a, b)) in [("gap_length", self.gap_length), ("occlusion_length", self.occlusion_length)] {
            if !(0.0 <= a && a <= b && b <= 1.0) {
                return Err(Error::Config(format!("degradation.{name} must be 0 <= lo <= hi <= 1")));
            }
        }
        if self.noise_size.0 == 0 || self.noise_size.0 > self.noise_size.1 {
            return Err(Error::Config("degradation.noise_size must be 1 <= lo <= hi".into()));
        }
        if !(self.thickness_jitter_sigma >= 0.0) {
            return Err(Error::Config("degradation.thickness_jitter_sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// The same knobs with every probability and the jitter scaled by
    /// `severity` in [0, 1]; severity 0 leaves masks untouched.
    pub fn scaled(&self, severity: f64) -> Self {
        let s = severity.clamp(0.0, 1.0);
        Self {
            occlusion_prob: self.occlusion_prob * s,
            gap_prob: self.gap_prob * s,
            noise_prob: self.noise_prob * s,
            pole_prob: self.pole_prob * s,
            neighbor_fragment_prob: self.neighbor_fragment_prob * s,
            false_branch_prob: self.false_branch_prob * s,
            thickness_jitter_sigma: self.thickness_jitter_sigma * s,
            ..self.clone()
        }
    }
}

/// Rectangle `[x0, x1] x [y0, y1]` in tree coordinates.
type Rect = (usize, usize, usize, usize);

/// Paints `r` if it and its 8-neighbourhood are background; false otherwise.
fn paint_isolated(mask: &mut Mask, r: Rect) -> bool {
    let (w, h) = mask.dims();
    let (x0, x1, y0, y1) = r;
    if x1 >= w || y1 >= h {
        return false;
    }
    for y in y0.saturating_sub(1)..=(y1 + 1).min(h - 1) {
        for x in x0.saturating_sub(1)..=(x1 + 1).min(w - 1) {
            if mask.get(x, y) {
                return false;
            }
        }
    }
    for y in y0..=y1 {
        for x in x0..=x1 {
            mask.set(x, y, true);
        }
    }
    true
}

/// Tries random placements from `place` until one does not touch the mask.
fn place_isolated(mask: &mut Mask, rng: &mut impl Rng, mut place: impl FnMut(&mut dyn RngCore) -> Option<Rect>) {
    for _ in 0..20 {
        if let Some(r) = place(rng) {
            if paint_isolated(mask, r) {
                return;
            }
        }
    }
}

fn mean_bottom_x(mask: &Mask) -> f64 {
    let pts: Vec<usize> = mask.foreground().filter(|p| p.y < 3).map(|p| p.x).collect();
    if pts.is_empty() {
        return mask.width() as f64 / 2.0;
    }
    pts.iter().sum::<usize>() as f64 / pts.len() as f64
}

fn jitter_edges(mask: &Mask, rng: &mut impl Rng, sigma: f64) -> Mask {
    let normal = Normal::new(0.0, sigma).expect("sigma checked non-negative");
    let w = mask.width() as i64;
    let mut out = Mask::new(mask.width(), mask.height());
    for r in row_runs(mask) {
        let dl = normal.sample(rng).round() as i64;
        let dr = normal.sample(rng).round() as i64;
        let mut a = r.x_start as i64 - dl;
        let mut b = r.x_end as i64 + dr;
        if a > b {
            let c = (r.x_start + r.x_end) as i64 / 2;
            (a, b) = (c, c);
        }
        for x in a.max(0)..=b.min(w - 1) {
            out.set(x as usize, r.y, true);
        }
    }
    out
}

/// Erases the piece of foreground inside a row band that contains a random
/// foreground pixel, cutting one limb cleanly.
fn cut_gap(mask: &mut Mask, rng: &mut impl Rng, length: usize) {
    let fg: Vec<_> = mask.foreground().collect();
    if fg.is_empty() || length == 0 {
        return;
    }
    let p = fg[rng.gen_range(0..fg.len())];
    let y_hi = (p.y + length).min(mask.height());
    let band = mask.row_band(p.y, y_hi);
    let labels = label_components(&band);
    let target = labels.label_at(p.x, p.y);
    let piece = labels.blob_mask(target);
    for q in piece.foreground() {
        mask.set(q.x, q.y, false);
    }
}

/// Simulated prediction: a persistent occlusion, edge jitter, gaps, noise
/// specks and the three artifact kinds the pre-filters target. All
/// artifacts are placed clear of the tree so each stays a separate blob.
pub fn degrade(truth: &Mask, cfg: &DegradationConfig) -> Mask {
    let (w, h) = truth.dims();
    let (wf, hf) = (w as f64, h as f64);
    let gap_rows = |f: f64| ((f * hf).round() as usize).max(1);

    let mut m = truth.clone();
    let mut occ = ChaCha8Rng::seed_from_u64(cfg.occlusion_seed);
    // drawn unconditionally so the occlusion site does not move with severity
    let (u, len) = (
        occ.gen::<f64>(),
        occ.gen_range(gap_rows(cfg.occlusion_length.0)..=gap_rows(cfg.occlusion_length.1)),
    );
    if u < cfg.occlusion_prob {
        cut_gap(&mut m, &mut occ, len);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    if cfg.thickness_jitter_sigma > 0.0 {
        m = jitter_edges(&m, &mut rng, cfg.thickness_jitter_sigma);
    }
    for _ in 0..cfg.gap_count {
        if rng.gen_bool(cfg.gap_prob) {
            let len = rng.gen_range(gap_rows(cfg.gap_length.0)..=gap_rows(cfg.gap_length.1));
            cut_gap(&mut m, &mut rng, len);
        }
    }

    // Poles and fragments start above the rows used to locate the trunk so
    // they cannot drag the trunk estimate toward themselves.
    let trunk_x = mean_bottom_x(truth);
    let above_base = || (0.17 * hf).ceil() as usize;
    if rng.gen_bool(cfg.pole_prob) {
        place_isolated(&mut m, &mut rng, |r| {
            let side = if r.gen_bool(0.5) { -1.0 } else { 1.0 };
            let x0 = trunk_x + side * r.gen_range(0.15 * wf..0.35 * wf);
            let width = r.gen_range(2..=((0.03 * wf) as usize).max(2));
            let height = r.gen_range((0.35 * hf) as usize..=(0.5 * hf) as usize);
            let y0 = r.gen_range(above_base()..=(0.25 * hf) as usize);
            (x0 >= 0.0).then(|| (x0 as usize, x0 as usize + width - 1, y0, y0 + height - 1))
        });
    }
    if rng.gen_bool(cfg.neighbor_fragment_prob) {
        place_isolated(&mut m, &mut rng, |r| {
            let width = r.gen_range(3..=((0.05 * wf) as usize).max(3));
            let height = r.gen_range((0.1 * hf) as usize..=(0.3 * hf) as usize).max(2);
            // the image side farther from the trunk
            let x0 = if trunk_x < wf / 2.0 { w - width } else { 0 };
            let y0 = r.gen_range(above_base()..h - height);
            Some((x0, x0 + width - 1, y0, y0 + height - 1))
        });
    }
    if rng.gen_bool(cfg.false_branch_prob) {
        place_isolated(&mut m, &mut rng, |r| {
            let width = r.gen_range(2..=4);
            let height = r.gen_range(3..=((0.06 * hf) as usize).max(3));
            let x0 = r.gen_range(0..w - width);
            Some((x0, x0 + width - 1, h - height, h - 1))
        });
    }
    for _ in 0..cfg.noise_count {
        if rng.gen_bool(cfg.noise_prob) {
            place_isolated(&mut m, &mut rng, |r| {
                let s = r.gen_range(cfg.noise_size.0..=cfg.noise_size.1);
                let x0 = r.gen_range(0..w - s);
                let y0 = r.gen_range(0..h - s);
                Some((x0, x0 + s - 1, y0, y0 + s - 1))
            });
        }
    }
    m
}
