//! Mask repair along a fitted template: measure the blob thickness the
//! filtered mask already has, fill the missing rows linearly, draw only the
//! missing rows and keep the result if not too much of it was invented.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{y_shaped_tree_filter, FilterConfig};
use crate::ga::FitResult;
use crate::mask::{keep_largest_blob, runs_in_row, Mask, RowRun};
use crate::template::{build_curves, rasterize, CurveId, TemplateCurves, ThicknessMap};

pub const OVER_RECONSTRUCTED: &str = "over-reconstructed";
pub const NOT_Y_SHAPED: &str = "not Y-shaped";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairConfig {
    /// How far a run center may sit from the template and still be measured.
    pub association_window: f64,
    /// Thickness assumed at a branch tip with no measurement.
    pub tip_thickness: usize,
    /// Lower bound for every generated thickness.
    pub min_generated_thickness: usize,
    /// Reject when more than this fraction of rows was generated.
    pub max_reconstructed_fraction: f64,
}

impl Default for RepairConfig {
    fn default() -> Self {
        Self {
            association_window: 10.0,
            tip_thickness: 4,
            min_generated_thickness: 3,
            max_reconstructed_fraction: 0.5,
        }
    }
}

impl RepairConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.association_window >= 0.0) {
            return Err(Error::Config("repair.association_window must be non-negative".into()));
        }
        if self.tip_thickness == 0 || self.min_generated_thickness == 0 {
            return Err(Error::Config("repair thicknesses must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.max_reconstructed_fraction) {
            return Err(Error::Config(
                "repair.max_reconstructed_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Thickness {
    Measured(usize),
    Generated(usize),
    Unset,
}

impl Thickness {
    pub fn value(self) -> Option<usize> {
        match self {
            Thickness::Measured(t) | Thickness::Generated(t) => Some(t),
            Thickness::Unset => None,
        }
    }
}

/// Thickness entries of one curve, one per row starting at `first_row`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveProfile {
    pub first_row: usize,
    pub entries: Vec<Thickness>,
}

impl CurveProfile {
    pub fn get(&self, y: usize) -> Option<Thickness> {
        y.checked_sub(self.first_row).and_then(|i| self.entries.get(i)).copied()
    }

    fn count(&self, pred: impl Fn(Thickness) -> bool) -> usize {
        self.entries.iter().filter(|&&e| pred(e)).count()
    }
}

/// Per-curve, per-row thickness, indexed by [`CurveId::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessProfile {
    pub curves: [CurveProfile; 3],
}

impl ThicknessProfile {
    pub fn curve(&self, id: CurveId) -> &CurveProfile {
        &self.curves[id.index()]
    }

    pub fn curve_mut(&mut self, id: CurveId) -> &mut CurveProfile {
        &mut self.curves[id.index()]
    }

    pub fn total_rows(&self) -> usize {
        self.curves.iter().map(|c| c.entries.len()).sum()
    }

    pub fn generated_rows(&self) -> usize {
        self.curves
            .iter()
            .map(|c| c.count(|e| matches!(e, Thickness::Generated(_))))
            .sum()
    }

    /// Generated rows over all rows of all curves; 0 for an empty profile.
    pub fn reconstructed_fraction(&self) -> f64 {
        match self.total_rows() {
            0 => 0.0,
            n => self.generated_rows() as f64 / n as f64,
        }
    }

    /// Entries accepted by `keep` as a drawable thickness map.
    pub fn to_map(&self, keep: impl Fn(Thickness) -> bool) -> ThicknessMap {
        let mut map = ThicknessMap::new();
        for id in CurveId::ALL {
            let c = self.curve(id);
            for (i, &e) in c.entries.iter().enumerate() {
                if let (true, Some(t)) = (keep(e), e.value()) {
                    map.insert((id, c.first_row + i), t);
                }
            }
        }
        map
    }
}

/// Run picked for a curve position: index into the row's runs and whether
/// the run contains the rounded position.
fn pick_run(runs: &[RowRun], x: f64, window: f64, skip: Option<usize>) -> Option<(usize, bool)> {
    if !x.is_finite() {
        return None;
    }
    let xr = x.round() as i64;
    let usable = |i: &usize| Some(*i) != skip;
    if let Some(i) = (0..runs.len()).filter(usable).find(|&i| runs[i].contains(xr)) {
        return Some((i, true));
    }
    (0..runs.len())
        .filter(usable)
        .map(|i| (i, (runs[i].center() - x).abs()))
        .filter(|&(_, d)| d <= window)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| (i, false))
}

/// Reads the filtered mask's run thickness under every template row.
///
/// A run already taken by one branch in a row is shared with the other
/// branch only when it contains both rounded positions. Otherwise the branch
/// whose position lies inside the run keeps it (then the closer center, then
/// branch 1) and the other branch looks for a different run.
pub fn measure_thickness(filtered: &Mask, curves: &TemplateCurves, window: f64) -> ThicknessProfile {
    let height = filtered.height();
    let rows = |id: CurveId| {
        let r = curves.curve_rows(id);
        r.start.min(height)..r.end.min(height)
    };
    let mut profile = ThicknessProfile {
        curves: CurveId::ALL.map(|id| CurveProfile {
            first_row: rows(id).start,
            entries: vec![Thickness::Unset; rows(id).len()],
        }),
    };
    let mut runs = Vec::new();
    let measured = |runs: &[RowRun], i: usize| Thickness::Measured(runs[i].thickness());

    for y in rows(CurveId::Trunk) {
        runs.clear();
        runs_in_row(filtered, y, &mut runs);
        let x = curves.curve_x(CurveId::Trunk, y as f64);
        if let Some((i, _)) = pick_run(&runs, x, window, None) {
            let c = profile.curve_mut(CurveId::Trunk);
            c.entries[y - c.first_row] = measured(&runs, i);
        }
    }

    for y in rows(CurveId::Branch1) {
        runs.clear();
        runs_in_row(filtered, y, &mut runs);
        let x1 = curves.curve_x(CurveId::Branch1, y as f64);
        let x2 = curves.curve_x(CurveId::Branch2, y as f64);
        let mut p1 = pick_run(&runs, x1, window, None);
        let mut p2 = pick_run(&runs, x2, window, None);
        if let (Some((i, in1)), Some((j, in2))) = (p1, p2) {
            if i == j && !(in1 && in2) {
                let c = runs[i].center();
                let first_wins = in1 || (!in2 && (c - x1).abs() <= (c - x2).abs());
                if first_wins {
                    p2 = pick_run(&runs, x2, window, Some(i));
                } else {
                    p1 = pick_run(&runs, x1, window, Some(i));
                }
            }
        }
        for (id, pick) in [(CurveId::Branch1, p1), (CurveId::Branch2, p2)] {
            if let Some((i, _)) = pick {
                let c = profile.curve_mut(id);
                c.entries[y - c.first_row] = measured(&runs, i);
            }
        }
    }
    profile
}

fn fill_curve(entries: &mut [Thickness], is_branch: bool, cfg: &RepairConfig) {
    let n = entries.len();
    if n == 0 {
        return;
    }
    let min = cfg.min_generated_thickness;
    let generated = |t: usize| Thickness::Generated(t.max(min));
    if entries.iter().all(|e| e.value().is_none()) {
        entries.fill(generated(cfg.tip_thickness));
        return;
    }
    if is_branch && entries[n - 1] == Thickness::Unset {
        entries[n - 1] = generated(cfg.tip_thickness);
    }

    let mut i = 0;
    while i < n {
        if entries[i] != Thickness::Unset {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && entries[i] == Thickness::Unset {
            i += 1;
        }
        let below = start.checked_sub(1).and_then(|k| entries[k].value().map(|t| (k, t)));
        let above = (i < n).then(|| entries[i].value().map(|t| (i, t))).flatten();
        for (k, e) in entries.iter_mut().enumerate().take(i).skip(start) {
            let t = match (below, above) {
                (Some((kb, tb)), Some((ka, ta))) => {
                    let f = (k - kb) as f64 / (ka - kb) as f64;
                    // f64::round rounds half away from zero
                    (tb as f64 + (ta as f64 - tb as f64) * f).round() as usize
                }
                (None, Some((_, ta))) => ta,
                (Some((_, tb)), None) => tb,
                (None, None) => unreachable!("curve has at least one value"),
            };
            *e = generated(t);
        }
    }
}

/// Fills every unmeasured row. Interior gaps are interpolated linearly
/// between their neighbours, an unmeasured branch tip is seeded with
/// `tip_thickness` first, and gaps open at one end extend the nearest value.
/// Measured entries are left untouched.
pub fn fill_thickness(profile: &ThicknessProfile, cfg: &RepairConfig) -> ThicknessProfile {
    let mut out = profile.clone();
    for id in CurveId::ALL {
        fill_curve(&mut out.curve_mut(id).entries, id != CurveId::Trunk, cfg);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub accepted: bool,
    /// The repaired mask. Only meaningful when `accepted`.
    pub mask: Mask,
    pub reconstructed_fraction: f64,
    pub reasons: Vec<String>,
    pub profile: Option<ThicknessProfile>,
}

/// Per-image audit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RepairReport {
    pub accepted: bool,
    pub reconstructed_fraction: f64,
    pub fitness: f64,
    pub reasons: Vec<String>,
}

impl RepairOutcome {
    fn rejected(width: usize, height: usize, reason: String) -> Self {
        Self {
            accepted: false,
            mask: Mask::new(width, height),
            reconstructed_fraction: 1.0,
            reasons: vec![reason],
            profile: None,
        }
    }

    pub fn report(&self, fit: &FitResult) -> RepairReport {
        RepairReport {
            accepted: self.accepted,
            reconstructed_fraction: self.reconstructed_fraction,
            fitness: fit.fitness,
            reasons: self.reasons.clone(),
        }
    }
}

/// Repairs `filtered` along the fitted template.
///
/// Only generated rows are drawn, so measured widths and positions of the
/// original mask survive; the union is then reduced to its largest blob.
pub fn repair(
    filtered: &Mask,
    fit: &FitResult,
    cfg: &RepairConfig,
    filter_cfg: &FilterConfig,
) -> RepairOutcome {
    let (w, h) = filtered.dims();
    let curves = match build_curves(&fit.params, h as f64) {
        Ok(c) => c,
        Err(e) => return RepairOutcome::rejected(w, h, format!("degenerate geometry: {e}")),
    };
    let profile = fill_thickness(&measure_thickness(filtered, &curves, cfg.association_window), cfg);
    let generated = profile.to_map(|e| matches!(e, Thickness::Generated(_)));
    let candidate = keep_largest_blob(&filtered.union(&rasterize(&curves, &generated, w, h)));
    let fraction = profile.reconstructed_fraction();

    let mut reasons = Vec::new();
    if fraction > cfg.max_reconstructed_fraction {
        reasons.push(OVER_RECONSTRUCTED.to_string());
    }
    if !y_shaped_tree_filter(&candidate, filter_cfg).passes {
        reasons.push(NOT_Y_SHAPED.to_string());
    }
    RepairOutcome {
        accepted: reasons.is_empty(),
        mask: candidate,
        reconstructed_fraction: fraction,
        reasons,
        profile: Some(profile),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::connected_components;
    use crate::template::{uniform_thickness, BranchParams, YTreeParams};
    use proptest::prelude::*;

    fn params() -> YTreeParams {
        YTreeParams {
            trunk_base_x: 128.0,
            trunk_base_slope: 0.0,
            junction_x: 128.0,
            junction_y: 90.0,
            branches: [
                BranchParams {
                    junction_slope: -1.0,
                    via_x: 80.0,
                    via_y: 170.0,
                    end_x: 62.0,
                    end_slope: -0.1,
                },
                BranchParams {
                    junction_slope: 1.0,
                    via_x: 176.0,
                    via_y: 170.0,
                    end_x: 194.0,
                    end_slope: 0.1,
                },
            ],
        }
    }

    fn fit() -> FitResult {
        FitResult {
            params: params(),
            fitness: 0.0,
            generations_run: 0,
            evaluations: 0,
        }
    }

    fn curves() -> TemplateCurves {
        build_curves(&params(), 256.0).unwrap()
    }

    fn full_tree(t: usize) -> Mask {
        let c = curves();
        rasterize(&c, &uniform_thickness(&c, t), 256, 256)
    }

    fn profile(first_row: usize, entries: Vec<Thickness>) -> ThicknessProfile {
        let empty = CurveProfile {
            first_row: 0,
            entries: vec![],
        };
        ThicknessProfile {
            curves: [
                CurveProfile { first_row, entries },
                empty.clone(),
                empty,
            ],
        }
    }

    use Thickness::{Generated as G, Measured as M, Unset as U};

    #[test]
    fn self_measurement_reads_drawn_thickness() {
        let c = curves();
        let p = measure_thickness(&full_tree(5), &c, 10.0);
        assert_eq!(p.total_rows(), 256 + 166);
        for id in CurveId::ALL {
            let cp = p.curve(id);
            for y in c.curve_rows(id) {
                let e = cp.get(y).unwrap();
                let apart = (c.curve_x(CurveId::Branch1, y as f64).round()
                    - c.curve_x(CurveId::Branch2, y as f64).round())
                .abs()
                    >= 6.0;
                if id == CurveId::Trunk || apart {
                    assert_eq!(e, M(5), "{} row {y}", id.name());
                } else {
                    assert!(matches!(e, M(_)), "{} row {y}", id.name());
                }
            }
        }
        assert_eq!(p.reconstructed_fraction(), 0.0);
    }

    #[test]
    fn empty_mask_measures_nothing() {
        let p = measure_thickness(&Mask::new(256, 256), &curves(), 10.0);
        assert!(p.curves.iter().all(|c| c.entries.iter().all(|&e| e == U)));
    }

    #[test]
    fn gap_shows_up_as_unset_rows() {
        let c = curves();
        let mut m = full_tree(5);
        // erase branch 1 on rows 150..170; branch 1 sits left of x = 110 there
        for y in 150..170 {
            for x in 0..110 {
                m.set(x, y, false);
            }
        }
        let p = measure_thickness(&m, &c, 10.0);
        for y in c.curve_rows(CurveId::Branch1) {
            let unset = p.curve(CurveId::Branch1).get(y) == Some(U);
            assert_eq!(unset, (150..170).contains(&y), "row {y}");
        }
        assert_eq!(p.curve(CurveId::Branch1).count(|e| e == U), 20);
        assert_eq!(p.curve(CurveId::Branch2).count(|e| e == U), 0);
    }

    #[test]
    fn shared_run_needs_both_positions_inside() {
        // one run under branch 1 only; branch 2 is 8 px away, inside the window
        let c = curves();
        let y = 200;
        let x1 = c.curve_x(CurveId::Branch1, y as f64).round() as usize;
        let mut m = Mask::new(256, 256);
        for x in x1 - 2..=x1 + 2 {
            m.set(x, y, true);
        }
        let mut shifted = params();
        shifted.branches[1] = shifted.branches[0];
        shifted.branches[1].end_x += 8.0;
        shifted.branches[1].via_x += 8.0;
        shifted.branches[1].junction_slope += 0.01;
        let c2 = build_curves(&shifted, 256.0).unwrap();
        let p = measure_thickness(&m, &c2, 10.0);
        assert_eq!(p.curve(CurveId::Branch1).get(y), Some(M(5)));
        assert_eq!(p.curve(CurveId::Branch2).get(y), Some(U));

        // a run wide enough to hold both positions is shared
        let x2 = c2.curve_x(CurveId::Branch2, y as f64).round() as usize;
        for x in x1..=x2 {
            m.set(x, y, true);
        }
        let p = measure_thickness(&m, &c2, 10.0);
        let both = p.curve(CurveId::Branch1).get(y).unwrap();
        assert!(matches!(both, M(t) if t >= 9));
        assert_eq!(p.curve(CurveId::Branch2).get(y), Some(both));
    }

    #[test]
    fn interior_gap_interpolates_and_rounds_half_away() {
        // 5 -> 3 over four steps: 4.5, 4.0, 3.5
        let p = profile(100, vec![M(5), U, U, U, M(3)]);
        let f = fill_thickness(&p, &RepairConfig::default());
        assert_eq!(f.curves[0].entries, vec![M(5), G(5), G(4), G(4), M(3)]);
    }

    #[test]
    fn branch_tip_is_seeded() {
        let mut p = profile(0, vec![]);
        p.curves[1] = CurveProfile {
            first_row: 200,
            entries: std::iter::once(M(6)).chain(std::iter::repeat(U).take(10)).collect(),
        };
        let f = fill_thickness(&p, &RepairConfig::default());
        // 6 + (4 - 6) k / 10 for k = 1..9, then the seed
        let want: Vec<_> = [6, 6, 5, 5, 5, 5, 5, 4, 4, 4].into_iter().map(G).collect();
        assert_eq!(f.curves[1].entries[1..], want[..]);
        assert_eq!(f.curves[1].entries[0], M(6));
    }

    #[test]
    fn generated_values_are_clamped() {
        let f = fill_thickness(&profile(0, vec![M(2), U, M(2)]), &RepairConfig::default());
        assert_eq!(f.curves[0].entries, vec![M(2), G(3), M(2)]);
    }

    #[test]
    fn open_ended_gaps_extend_the_nearest_value() {
        let f = fill_thickness(&profile(0, vec![U, U, M(7), U]), &RepairConfig::default());
        assert_eq!(f.curves[0].entries, vec![G(7), G(7), M(7), G(7)]);
    }

    #[test]
    fn unmeasured_curve_is_generated_whole() {
        let f = fill_thickness(&profile(0, vec![U; 6]), &RepairConfig::default());
        assert_eq!(f.curves[0].entries, vec![G(4); 6]);
        assert_eq!(f.reconstructed_fraction(), 1.0);
    }

    #[test]
    fn complete_tree_is_accepted_unchanged() {
        let m = full_tree(5);
        let out = repair(&m, &fit(), &RepairConfig::default(), &FilterConfig::default());
        assert!(out.accepted, "{:?}", out.reasons);
        assert!(m.is_subset_of(&out.mask));
        assert_eq!(out.reconstructed_fraction, 0.0);
        assert_eq!(out.mask, m);
    }

    #[test]
    fn missing_branch_is_rebuilt() {
        let c = curves();
        let mut m = full_tree(5);
        let x_split = c.curve_x(CurveId::Trunk, 89.0).round() as usize + 3;
        for y in 95..256 {
            for x in x_split..256 {
                m.set(x, y, false);
            }
        }
        let out = repair(&m, &fit(), &RepairConfig::default(), &FilterConfig::default());
        let p = out.profile.as_ref().unwrap();
        let gen2 = p.curve(CurveId::Branch2).count(|e| matches!(e, G(_)));
        assert!(gen2 as f64 > 0.5 * p.curve(CurveId::Branch2).entries.len() as f64);
        assert!(out.reconstructed_fraction < 0.5);
        assert!(out.accepted, "{:?}", out.reasons);
        assert_eq!(connected_components(&out.mask).len(), 1);
        assert!(m.is_subset_of(&out.mask));
    }

    #[test]
    fn trunk_stub_is_over_reconstructed() {
        let mut m = Mask::new(256, 256);
        for y in 0..40 {
            for x in 126..=130 {
                m.set(x, y, true);
            }
        }
        let out = repair(&m, &fit(), &RepairConfig::default(), &FilterConfig::default());
        assert!(!out.accepted);
        assert!(out.reconstructed_fraction > 0.5);
        assert!(out.reasons.iter().any(|r| r == OVER_RECONSTRUCTED));
    }

    #[test]
    fn degenerate_fit_is_rejected() {
        let mut f = fit();
        f.params.branches[0].via_y = f.params.junction_y;
        let out = repair(&full_tree(5), &f, &RepairConfig::default(), &FilterConfig::default());
        assert!(!out.accepted);
        assert!(out.reasons[0].starts_with("degenerate geometry"));
        let report = out.report(&f);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["accepted"], false);
        assert!(json.get("reconstructedFraction").is_some());
    }

    fn entry() -> impl Strategy<Value = Thickness> {
        prop_oneof![(1usize..12).prop_map(M), Just(U)]
    }

    proptest! {
        #[test]
        fn fill_is_idempotent_and_total(
            trunk in proptest::collection::vec(entry(), 0..40),
            b1 in proptest::collection::vec(entry(), 0..40),
            b2 in proptest::collection::vec(entry(), 0..40),
        ) {
            let p = ThicknessProfile {
                curves: [trunk, b1, b2].map(|entries| CurveProfile { first_row: 0, entries }),
            };
            let cfg = RepairConfig::default();
            let f = fill_thickness(&p, &cfg);
            prop_assert_eq!(fill_thickness(&f, &cfg), f.clone());
            for (before, after) in p.curves.iter().zip(&f.curves) {
                for (&b, &a) in before.entries.iter().zip(&after.entries) {
                    match b {
                        M(_) => prop_assert_eq!(a, b),
                        _ => prop_assert!(matches!(a, G(t) if t >= 3)),
                    }
                }
            }
            let r = f.reconstructed_fraction();
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
