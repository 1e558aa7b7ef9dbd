//! Mask quality metrics: mean IoU, boundary F1 and the Complete Grid Scan.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mask::{column_runs, row_runs, Mask, RowRun};

/// Default boundary-F1 match distance, in pixels.
pub const BF1_TOLERANCE: f64 = 2.0;

/// Mean of the foreground and background IoU. A class absent from both masks
/// scores 1.
pub fn mean_iou(pred: &Mask, truth: &Mask) -> Result<f64> {
    pred.same_dims(truth)?;
    let (mut fg_inter, mut fg_union, mut bg_inter, mut bg_union) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        fg_inter += (p && t) as usize;
        fg_union += (p || t) as usize;
        bg_inter += (!p && !t) as usize;
        bg_union += (!p || !t) as usize;
    }
    let iou = |i: usize, u: usize| if u == 0 { 1.0 } else { i as f64 / u as f64 };
    Ok((iou(fg_inter, fg_union) + iou(bg_inter, bg_union)) / 2.0)
}

/// Foreground pixels with a background 8-neighbour or on the image border.
pub fn boundary(mask: &Mask) -> Mask {
    let (w, h) = mask.dims();
    let mut out = Mask::new(w, h);
    for row in 0..h {
        for col in 0..w {
            if !mask.get_storage(row, col) {
                continue;
            }
            let on_edge = row == 0 || col == 0 || row + 1 == h || col + 1 == w;
            let touches_bg = on_edge
                || (row - 1..=row + 1)
                    .any(|r| (col - 1..=col + 1).any(|c| !mask.get_storage(r, c)));
            if touches_bg {
                out.set_storage(row, col, true);
            }
        }
    }
    out
}

/// 1-D squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        if f[v[0]].is_infinite() {
            v[0] = q;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: the new parabola dominates everywhere
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = if f[p].is_infinite() { f64::INFINITY } else { d * d + f[p] };
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest
/// foreground pixel of `mask` (infinite when the mask is empty).
/// Storage-order output.
pub fn squared_distance_map(mask: &Mask) -> Vec<f64> {
    let (w, h) = mask.dims();
    let n = w.max(h);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0f64; n + 1]);
    let mut buf = vec![0.0f64; n];
    let mut col_buf = vec![0.0f64; n];
    let mut grid: Vec<f64> = mask
        .as_slice()
        .iter()
        .map(|&p| if p { 0.0 } else { f64::INFINITY })
        .collect();
    for c in 0..w {
        for r in 0..h {
            col_buf[r] = grid[r * w + c];
        }
        edt_1d(&col_buf[..h], &mut buf[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = buf[r];
        }
    }
    for r in 0..h {
        edt_1d(&grid[r * w..(r + 1) * w].to_vec(), &mut buf[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&buf[..w]);
    }
    grid
}

fn matched_fraction(from: &Mask, to_dist: &[f64], tol_sq: f64) -> f64 {
    let total = from.count();
    let hits = from
        .as_slice()
        .iter()
        .zip(to_dist)
        .filter(|(&p, &d)| p && d <= tol_sq)
        .count();
    hits as f64 / total as f64
}

/// Boundary F1 with a Euclidean match distance of `tol` pixels.
pub fn boundary_f1(pred: &Mask, truth: &Mask, tol: f64) -> Result<f64> {
    pred.same_dims(truth)?;
    let (bp, bt) = (boundary(pred), boundary(truth));
    match (bp.is_empty(), bt.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let tol_sq = tol * tol;
    let precision = matched_fraction(&bp, &squared_distance_map(&bt), tol_sq);
    let recall = matched_fraction(&bt, &squared_distance_map(&bp), tol_sq);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Terms of one directional grid scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScan {
    /// Score in [0, 1].
    pub score: f64,
    /// Sum of center and thickness differences over matched runs.
    pub alpha: f64,
    /// Total per-line difference in run counts.
    pub n_e: usize,
    /// Number of matched comparisons.
    pub n: usize,
}

/// Scan over runs grouped per line. `runs` must be ordered line by line.
fn grid_scan(pred: &[RowRun], truth: &[RowRun], lines: usize, line_len: usize) -> GridScan {
    let mut pred_by_line = vec![Vec::new(); lines];
    let mut truth_by_line = vec![Vec::new(); lines];
    for r in pred {
        pred_by_line[r.y].push(*r);
    }
    for r in truth {
        truth_by_line[r.y].push(*r);
    }

    let mut alpha = 0.0;
    let (mut n, mut n_e) = (0usize, 0usize);
    for (p_runs, t_runs) in pred_by_line.iter().zip(&truth_by_line) {
        n_e += p_runs.len().abs_diff(t_runs.len());
        if p_runs.is_empty() {
            continue;
        }
        // runs in a line are left-to-right, so centers are strictly increasing
        let centers: Vec<f64> = p_runs.iter().map(RowRun::center).collect();
        for t in t_runs {
            let c = t.center();
            let idx = centers.partition_point(|&pc| pc < c);
            let k = if idx == 0 {
                0
            } else if idx == centers.len() || (c - centers[idx - 1]) <= (centers[idx] - c) {
                idx - 1
            } else {
                idx
            };
            let p = &p_runs[k];
            alpha += (c - centers[k]).abs() + (t.thickness() as f64 - p.thickness() as f64).abs();
            n += 1;
        }
    }

    let score = if n + n_e == 0 {
        1.0
    } else {
        let w = line_len as f64;
        let eta = w * n_e as f64;
        (1.0 - (alpha + eta) / (w * (n + n_e) as f64)).max(0.0)
    };
    GridScan {
        score,
        alpha,
        n_e,
        n,
    }
}

/// Row-wise Complete Grid Scan. Each ground-truth run is compared with the
/// predicted run of nearest center on the same row; run-count differences
/// are charged the full image width.
pub fn cgs_horizontal(pred: &Mask, truth: &Mask) -> Result<GridScan> {
    pred.same_dims(truth)?;
    Ok(grid_scan(&row_runs(pred), &row_runs(truth), pred.height(), pred.width()))
}

/// Column-wise scan, identical to the row-wise scan of the rotated masks.
pub fn cgs_vertical(pred: &Mask, truth: &Mask) -> Result<GridScan> {
    pred.same_dims(truth)?;
    Ok(grid_scan(
        &column_runs(pred),
        &column_runs(truth),
        pred.width(),
        pred.height(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgsReport {
    #[serde(rename = "CGS")]
    pub cgs: f64,
    #[serde(rename = "CGS_h")]
    pub horizontal: GridScan,
    #[serde(rename = "CGS_v")]
    pub vertical: GridScan,
}

/// Mean of the row-wise and column-wise scans.
pub fn cgs(pred: &Mask, truth: &Mask) -> Result<CgsReport> {
    let horizontal = cgs_horizontal(pred, truth)?;
    let vertical = cgs_vertical(pred, truth)?;
    Ok(CgsReport {
        cgs: (horizontal.score + vertical.score) / 2.0,
        horizontal,
        vertical,
    })
}

/// All metrics for one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "mIOU")]
    pub miou: f64,
    #[serde(rename = "BF1")]
    pub bf1: f64,
    #[serde(rename = "CGS")]
    pub cgs: f64,
    #[serde(rename = "CGS_h")]
    pub cgs_h: f64,
    #[serde(rename = "CGS_v")]
    pub cgs_v: f64,
    pub alpha_h: f64,
    pub alpha_v: f64,
    pub ne_h: f64,
    pub ne_v: f64,
}

pub fn score(pred: &Mask, truth: &Mask) -> Result<MetricReport> {
    score_with(pred, truth, BF1_TOLERANCE)
}

/// [`score`] with a custom boundary tolerance in pixels.
pub fn score_with(pred: &Mask, truth: &Mask, bf1_tolerance: f64) -> Result<MetricReport> {
    let c = cgs(pred, truth)?;
    Ok(MetricReport {
        miou: mean_iou(pred, truth)?,
        bf1: boundary_f1(pred, truth, bf1_tolerance)?,
        cgs: c.cgs,
        cgs_h: c.horizontal.score,
        cgs_v: c.vertical.score,
        alpha_h: c.horizontal.alpha,
        alpha_v: c.vertical.alpha,
        ne_h: c.horizontal.n_e as f64,
        ne_v: c.vertical.n_e as f64,
    })
}

/// Field-wise mean over images; `None` for an empty slice.
pub fn mean_report(reports: &[MetricReport]) -> Option<MetricReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(MetricReport {
        miou: mean(|r| r.miou),
        bf1: mean(|r| r.bf1),
        cgs: mean(|r| r.cgs),
        cgs_h: mean(|r| r.cgs_h),
        cgs_v: mean(|r| r.cgs_v),
        alpha_h: mean(|r| r.alpha_h),
        alpha_v: mean(|r| r.alpha_v),
        ne_h: mean(|r| r.ne_h),
        ne_v: mean(|r| r.ne_v),
    })
}
