//! The 14-parameter Y-tree template.
//!
//! The trunk is a quadratic `x(y)` on `[0, junction_y)`. Each branch is a pair
//! of cubics joined at a via point, spanning `[junction_y, height]`. All curves
//! are single-valued functions of the row ordinate `y` (y-up).

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CurveId {
    Trunk,
    Branch1,
    Branch2,
}

impl CurveId {
    pub const ALL: [CurveId; 3] = [CurveId::Trunk, CurveId::Branch1, CurveId::Branch2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            CurveId::Trunk => "trunk",
            CurveId::Branch1 => "branch 1",
            CurveId::Branch2 => "branch 2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BranchParams {
    /// dx/dy leaving the junction.
    pub junction_slope: f64,
    pub via_x: f64,
    pub via_y: f64,
    /// x where the branch meets the top edge (`y = height`).
    pub end_x: f64,
    /// dx/dy at the top edge.
    pub end_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "FlatParams", into = "FlatParams")]
pub struct YTreeParams {
    pub trunk_base_x: f64,
    /// dx/dy at the trunk base.
    pub trunk_base_slope: f64,
    pub junction_x: f64,
    pub junction_y: f64,
    pub branches: [BranchParams; 2],
}

pub const GENE_COUNT: usize = 14;

impl YTreeParams {
    /// Gene order: trunk (base x, base slope, junction x, junction y), then
    /// per branch (junction slope, via x, via y, end x, end slope).
    pub fn to_genes(&self) -> [f64; GENE_COUNT] {
        let [b1, b2] = &self.branches;
        [
            self.trunk_base_x,
            self.trunk_base_slope,
            self.junction_x,
            self.junction_y,
            b1.junction_slope,
            b1.via_x,
            b1.via_y,
            b1.end_x,
            b1.end_slope,
            b2.junction_slope,
            b2.via_x,
            b2.via_y,
            b2.end_x,
            b2.end_slope,
        ]
    }

    pub fn from_genes(g: &[f64; GENE_COUNT]) -> Self {
        let branch = |o: usize| BranchParams {
            junction_slope: g[o],
            via_x: g[o + 1],
            via_y: g[o + 2],
            end_x: g[o + 3],
            end_slope: g[o + 4],
        };
        Self {
            trunk_base_x: g[0],
            trunk_base_slope: g[1],
            junction_x: g[2],
            junction_y: g[3],
            branches: [branch(4), branch(9)],
        }
    }

    /// Checks the ordering and range invariants for a `width x height` image.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let (w, h) = (width as f64, height as f64);
        let bad = |what: String| Err(Error::Data(format!("invalid template parameters: {what}")));
        if !self.to_genes().iter().all(|g| g.is_finite()) {
            return bad("non-finite value".into());
        }
        if !(self.junction_y > 0.0 && self.junction_y < h) {
            return bad(format!("junction y {} outside (0, {h})", self.junction_y));
        }
        for (i, b) in self.branches.iter().enumerate() {
            if !(b.via_y > self.junction_y && b.via_y < h) {
                return bad(format!("branch {} via y {} not in (junction, height)", i + 1, b.via_y));
            }
        }
        let xs = [
            self.trunk_base_x,
            self.junction_x,
            self.branches[0].via_x,
            self.branches[0].end_x,
            self.branches[1].via_x,
            self.branches[1].end_x,
        ];
        if xs.iter().any(|&x| !(0.0..w).contains(&x)) {
            return bad(format!("x parameter outside [0, {w})"));
        }
        if self.branches[0].end_x > self.branches[1].end_x {
            return bad("branch 1 must end left of branch 2".into());
        }
        Ok(())
    }
}

/// Flat serialized form with the conventional template symbol names.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatParams {
    #[serde(rename = "T_px")]
    t_px: f64,
    #[serde(rename = "T_pv")]
    t_pv: f64,
    #[serde(rename = "C_p0x")]
    c_p0x: f64,
    #[serde(rename = "C_p0y")]
    c_p0y: f64,
    #[serde(rename = "C_pb1v")]
    c_pb1v: f64,
    #[serde(rename = "b1_p1x")]
    b1_p1x: f64,
    #[serde(rename = "b1_p1y")]
    b1_p1y: f64,
    #[serde(rename = "b1_p2x")]
    b1_p2x: f64,
    #[serde(rename = "b1_vf")]
    b1_vf: f64,
    #[serde(rename = "C_pb2v")]
    c_pb2v: f64,
    #[serde(rename = "b2_p1x")]
    b2_p1x: f64,
    #[serde(rename = "b2_p1y")]
    b2_p1y: f64,
    #[serde(rename = "b2_p2x")]
    b2_p2x: f64,
    #[serde(rename = "b2_vf")]
    b2_vf: f64,
}

impl From<FlatParams> for YTreeParams {
    fn from(f: FlatParams) -> Self {
        YTreeParams::from_genes(&[
            f.t_px, f.t_pv, f.c_p0x, f.c_p0y, f.c_pb1v, f.b1_p1x, f.b1_p1y, f.b1_p2x, f.b1_vf,
            f.c_pb2v, f.b2_p1x, f.b2_p1y, f.b2_p2x, f.b2_vf,
        ])
    }
}

impl From<YTreeParams> for FlatParams {
    fn from(p: YTreeParams) -> Self {
        let g = p.to_genes();
        FlatParams {
            t_px: g[0],
            t_pv: g[1],
            c_p0x: g[2],
            c_p0y: g[3],
            c_pb1v: g[4],
            b1_p1x: g[5],
            b1_p1y: g[6],
            b1_p2x: g[7],
            b1_vf: g[8],
            c_pb2v: g[9],
            b2_p1x: g[10],
            b2_p1y: g[11],
            b2_p2x: g[12],
            b2_vf: g[13],
        }
    }
}

/// Polynomial in the local variable `u = y - origin`, coefficients low to high.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub origin: f64,
    pub coeffs: [f64; 4],
}

impl Poly {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        let u = y - self.origin;
        let [a, b, c, d] = self.coeffs;
        a + u * (b + u * (c + u * d))
    }

    #[inline]
    pub fn derivative(&self, y: f64) -> f64 {
        let u = y - self.origin;
        let [_, b, c, d] = self.coeffs;
        b + u * (2.0 * c + 3.0 * d * u)
    }

    #[inline]
    pub fn second_derivative(&self, y: f64) -> f64 {
        let u = y - self.origin;
        2.0 * self.coeffs[2] + 6.0 * self.coeffs[3] * u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchCurve {
    pub via_y: f64,
    /// On `[junction_y, via_y]`.
    pub lower: Poly,
    /// On `[via_y, height]`.
    pub upper: Poly,
}

impl BranchCurve {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        if y < self.via_y {
            self.lower.eval(y)
        } else {
            self.upper.eval(y)
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        if y < self.via_y {
            self.lower.derivative(y)
        } else {
            self.upper.derivative(y)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateCurves {
    pub height: f64,
    pub junction_y: f64,
    /// Quadratic (cubic coefficient zero) on `[0, junction_y)`.
    pub trunk: Poly,
    pub branches: [BranchCurve; 2],
}

/// Curve positions on one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowPositions {
    Trunk(f64),
    Branches(f64, f64),
}

impl RowPositions {
    pub fn to_vec(self) -> Vec<(CurveId, f64)> {
        match self {
            RowPositions::Trunk(x) => vec![(CurveId::Trunk, x)],
            RowPositions::Branches(a, b) => vec![(CurveId::Branch1, a), (CurveId::Branch2, b)],
        }
    }
}

impl TemplateCurves {
    /// Unchecked evaluation for `y` in `[0, height]`.
    #[inline]
    pub fn positions(&self, y: f64) -> RowPositions {
        if y < self.junction_y {
            RowPositions::Trunk(self.trunk.eval(y))
        } else {
            RowPositions::Branches(self.branches[0].eval(y), self.branches[1].eval(y))
        }
    }

    pub fn curve_x(&self, curve: CurveId, y: f64) -> f64 {
        match curve {
            CurveId::Trunk => self.trunk.eval(y),
            CurveId::Branch1 => self.branches[0].eval(y),
            CurveId::Branch2 => self.branches[1].eval(y),
        }
    }

    /// Integer image rows on which a curve is drawn, for an image of
    /// `height` rows (the top edge ordinate itself is not a pixel row).
    pub fn curve_rows(&self, curve: CurveId) -> Range<usize> {
        let rows = self.height as usize;
        let split = (self.junction_y.ceil().max(0.0) as usize).min(rows);
        match curve {
            CurveId::Trunk => 0..split,
            _ => split..rows,
        }
    }
}

/// Solves the trunk and branch boundary-value problems.
///
/// Trunk: `x(0) = T_px`, `x'(0) = T_pv`, `x(C_p0y) = C_p0x`.
/// Branch: the lower cubic interpolates the junction (value and slope) and the
/// via point, the upper cubic interpolates the via point and the top edge
/// (value and slope), and the two pieces are C1 and C2 continuous at the via
/// point. With the via-point slope `m` as the single unknown, both pieces are
/// cubic Hermite segments and C2 continuity is linear in `m`.
pub fn build_curves(params: &YTreeParams, height: f64) -> Result<TemplateCurves> {
    let y0 = params.junction_y;
    if !(y0 > 0.0 && y0.is_finite()) {
        return Err(Error::DegenerateGeometry {
            curve: CurveId::Trunk.name(),
            detail: format!("junction y {y0} must be positive"),
        });
    }
    let (x_base, s_base) = (params.trunk_base_x, params.trunk_base_slope);
    let quad = (params.junction_x - x_base - s_base * y0) / (y0 * y0);
    let trunk = Poly {
        origin: 0.0,
        coeffs: [x_base, s_base, quad, 0.0],
    };

    let mut branches = [BranchCurve {
        via_y: 0.0,
        lower: trunk,
        upper: trunk,
    }; 2];
    for (i, b) in params.branches.iter().enumerate() {
        let curve = if i == 0 { CurveId::Branch1 } else { CurveId::Branch2 };
        let l1 = b.via_y - y0;
        let l2 = height - b.via_y;
        if !(l1 > 0.0 && l2 > 0.0) {
            return Err(Error::DegenerateGeometry {
                curve: curve.name(),
                detail: format!(
                    "via y {} must lie strictly between junction y {y0} and height {height}",
                    b.via_y
                ),
            });
        }
        let (x0, s0) = (params.junction_x, b.junction_slope);
        let x1 = b.via_x;
        let (x2, s2) = (b.end_x, b.end_slope);
        // x''(via-) == x''(via+) for Hermite pieces, solved for the via slope.
        let rhs = 6.0 * (x2 - x1) / (l2 * l2) - 2.0 * s2 / l2 - 6.0 * (x0 - x1) / (l1 * l1)
            - 2.0 * s0 / l1;
        let m = rhs / (4.0 / l1 + 4.0 / l2);
        branches[i] = BranchCurve {
            via_y: b.via_y,
            lower: hermite(y0, l1, x0, s0, x1, m),
            upper: hermite(b.via_y, l2, x1, m, x2, s2),
        };
    }

    Ok(TemplateCurves {
        height,
        junction_y: y0,
        trunk,
        branches,
    })
}

/// Cubic on `[origin, origin + len]` with given end values and slopes.
fn hermite(origin: f64, len: f64, p0: f64, m0: f64, p1: f64, m1: f64) -> Poly {
    let d = p1 - p0;
    let c2 = (3.0 * d / len - 2.0 * m0 - m1) / len;
    let c3 = (m0 + m1 - 2.0 * d / len) / (len * len);
    Poly {
        origin,
        coeffs: [p0, m0, c2, c3],
    }
}

/// Evaluates the template on row ordinate `y`, which must lie in `[0, height]`.
pub fn evaluate(curves: &TemplateCurves, y: f64) -> Result<Vec<(CurveId, f64)>> {
    if !(0.0..=curves.height).contains(&y) {
        return Err(Error::OutOfRange {
            y,
            height: curves.height,
        });
    }
    Ok(curves.positions(y).to_vec())
}

/// Thickness in pixels for each `(curve, row)` to be drawn.
pub type ThicknessMap = BTreeMap<(CurveId, usize), usize>;

/// First column of a run of `thickness` pixels centered on column `center`;
/// even thicknesses lean left.
pub(crate) fn run_start(center: i64, thickness: usize) -> i64 {
    center - (thickness / 2) as i64
}

/// Paints a horizontal run per `(curve, row)` entry, centered on the rounded
/// curve position and clipped to the image.
pub fn rasterize(curves: &TemplateCurves, thickness: &ThicknessMap, width: usize, height: usize) -> Mask {
    let mut mask = Mask::new(width, height);
    for (&(curve, y), &t) in thickness {
        if t == 0 || y >= height || !curves.curve_rows(curve).contains(&y) {
            continue;
        }
        let x = curves.curve_x(curve, y as f64);
        if !x.is_finite() {
            continue;
        }
        let start = run_start(x.round() as i64, t);
        let end = start + t as i64 - 1;
        let lo = start.max(0);
        let hi = end.min(width as i64 - 1);
        for col in lo..=hi {
            mask.set(col as usize, y, true);
        }
    }
    mask
}

/// Thickness map with a constant value on every row of every curve.
pub fn uniform_thickness(curves: &TemplateCurves, thickness: usize) -> ThicknessMap {
    let mut map = ThicknessMap::new();
    for curve in CurveId::ALL {
        for y in curves.curve_rows(curve) {
            map.insert((curve, y), thickness);
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{y_shaped_tree_filter, FilterConfig};
    use crate::mask::to_partial_skeleton;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 256.0;

    fn sample(rng: &mut ChaCha8Rng) -> YTreeParams {
        let junction_y = rng.gen_range(0.1 * H..0.6 * H);
        let mut branch = |lo: f64, hi: f64| BranchParams {
            junction_slope: rng.gen_range(-2.0..2.0),
            via_x: rng.gen_range(lo..hi),
            via_y: rng.gen_range(junction_y + 1.0..0.95 * H),
            end_x: rng.gen_range(lo..hi),
            end_slope: rng.gen_range(-2.0..2.0),
        };
        let b1 = branch(0.0, 128.0);
        let b2 = branch(128.0, 255.0);
        YTreeParams {
            trunk_base_x: rng.gen_range(0.0..255.0),
            trunk_base_slope: rng.gen_range(-2.0..2.0),
            junction_x: rng.gen_range(0.0..255.0),
            junction_y,
            branches: [b1, b2],
        }
    }

    /// Dense Gaussian elimination with partial pivoting.
    fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        x
    }

    /// Global-monomial 8x8 system for one branch, solved independently.
    fn branch_oracle(y0: f64, x0: f64, b: &BranchParams, h: f64) -> (Vec<f64>, Vec<f64>) {
        let v = |y: f64| vec![1.0, y, y * y, y * y * y];
        let d = |y: f64| vec![0.0, 1.0, 2.0 * y, 3.0 * y * y];
        let dd = |y: f64| vec![0.0, 0.0, 2.0, 6.0 * y];
        let zero = vec![0.0; 4];
        let row = |l: Vec<f64>, r: Vec<f64>| [l, r].concat();
        let neg = |r: Vec<f64>| r.into_iter().map(|c| -c).collect::<Vec<_>>();
        let y1 = b.via_y;
        let a = vec![
            row(v(y0), zero.clone()),
            row(d(y0), zero.clone()),
            row(v(y1), zero.clone()),
            row(zero.clone(), v(y1)),
            row(zero.clone(), v(h)),
            row(zero.clone(), d(h)),
            row(d(y1), neg(d(y1))),
            row(dd(y1), neg(dd(y1))),
        ];
        let rhs = vec![x0, b.junction_slope, b.via_x, b.via_x, b.end_x, b.end_slope, 0.0, 0.0];
        let sol = solve(a, rhs);
        (sol[..4].to_vec(), sol[4..].to_vec())
    }

    fn residuals(p: &YTreeParams, c: &TemplateCurves) -> Vec<f64> {
        let mut r = vec![
            c.trunk.eval(0.0) - p.trunk_base_x,
            c.trunk.derivative(0.0) - p.trunk_base_slope,
            c.trunk.eval(p.junction_y) - p.junction_x,
        ];
        for (b, bc) in p.branches.iter().zip(&c.branches) {
            let (lo, up, y1) = (&bc.lower, &bc.upper, b.via_y);
            r.extend([
                lo.eval(p.junction_y) - p.junction_x,
                lo.derivative(p.junction_y) - b.junction_slope,
                lo.eval(y1) - b.via_x,
                up.eval(y1) - b.via_x,
                up.eval(c.height) - b.end_x,
                up.derivative(c.height) - b.end_slope,
                lo.derivative(y1) - up.derivative(y1),
                lo.second_derivative(y1) - up.second_derivative(y1),
            ]);
        }
        r
    }

    #[test]
    fn flat_trunk_is_constant() {
        let p = YTreeParams {
            trunk_base_x: 128.0,
            trunk_base_slope: 0.0,
            junction_x: 128.0,
            junction_y: 100.0,
            branches: [BranchParams {
                junction_slope: 0.0,
                via_x: 100.0,
                via_y: 150.0,
                end_x: 80.0,
                end_slope: 0.0,
            }; 2],
        };
        let c = build_curves(&p, H).unwrap();
        assert_eq!(c.trunk.coeffs, [128.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn collinear_branch_is_a_line() {
        // junction (128, 100), via (153, 150), end (206, 256): slope 0.5
        let b = BranchParams {
            junction_slope: 0.5,
            via_x: 153.0,
            via_y: 150.0,
            end_x: 206.0,
            end_slope: 0.5,
        };
        let p = YTreeParams {
            trunk_base_x: 128.0,
            trunk_base_slope: 0.0,
            junction_x: 128.0,
            junction_y: 100.0,
            branches: [b, b],
        };
        let c = build_curves(&p, H).unwrap();
        for piece in [c.branches[0].lower, c.branches[0].upper] {
            assert!(piece.coeffs[2].abs() < 1e-12 && piece.coeffs[3].abs() < 1e-12);
            assert!((piece.coeffs[1] - 0.5).abs() < 1e-12);
        }
        for y in [100.0, 120.0, 150.0, 200.0, 256.0] {
            assert!((c.branches[0].eval(y) - (128.0 + 0.5 * (y - 100.0))).abs() < 1e-9);
        }
    }

    #[test]
    fn boundary_residuals_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = sample(&mut rng);
            let c = build_curves(&p, H).unwrap();
            let r = residuals(&p, &c);
            assert_eq!(r.len(), 19);
            assert!(r.iter().all(|v| v.abs() < 1e-9), "{r:?}");
        }
    }

    #[test]
    fn matches_dense_linear_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = sample(&mut rng);
            let c = build_curves(&p, H).unwrap();
            for (b, bc) in p.branches.iter().zip(&c.branches) {
                let (lo, up) = branch_oracle(p.junction_y, p.junction_x, b, H);
                let poly = |k: &[f64], y: f64| k[0] + k[1] * y + k[2] * y * y + k[3] * y * y * y;
                for t in 0..=20 {
                    let y = p.junction_y + (H - p.junction_y) * t as f64 / 20.0;
                    let want = if y < b.via_y { poly(&lo, y) } else { poly(&up, y) };
                    let scale = 1.0 + want.abs();
                    assert!((bc.eval(y) - want).abs() / scale < 1e-6);
                }
            }
        }
    }

    #[test]
    fn numeric_gradients_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-4;
        for _ in 0..200 {
            let p = sample(&mut rng);
            let c = build_curves(&p, H).unwrap();
            let cd = |f: &dyn Fn(f64) -> f64, y: f64| (f(y + h) - f(y - h)) / (2.0 * h);
            assert!((cd(&|y| c.trunk.eval(y), 0.0) - p.trunk_base_slope).abs() < 1e-5);
            for (b, bc) in p.branches.iter().zip(&c.branches) {
                assert!((cd(&|y| bc.lower.eval(y), p.junction_y) - b.junction_slope).abs() < 1e-5);
                assert!((cd(&|y| bc.upper.eval(y), H) - b.end_slope).abs() < 1e-5);
                // no jump at the via point: the pieces agree on both sides of it,
                // and the two-sided gap is only the slope-driven change
                let (v, eps) = (b.via_y, 1e-6);
                assert!((bc.lower.eval(v + eps) - bc.upper.eval(v + eps)).abs() < 1e-6);
                assert!((bc.lower.eval(v - eps) - bc.upper.eval(v - eps)).abs() < 1e-6);
                let gap = (bc.eval(v - eps) - bc.eval(v + eps)).abs();
                assert!(gap < 1e-6 + 2.0 * eps * bc.derivative(v).abs());
            }
        }
    }

    #[test]
    fn degenerate_via_point_is_reported() {
        let mut p = sample(&mut ChaCha8Rng::seed_from_u64(1));
        p.branches[1].via_y = p.junction_y;
        match build_curves(&p, H) {
            Err(Error::DegenerateGeometry { curve, .. }) => assert_eq!(curve, "branch 2"),
            other => panic!("expected degenerate geometry, got {other:?}"),
        }
        p.junction_y = 0.0;
        assert!(matches!(build_curves(&p, H), Err(Error::DegenerateGeometry { curve: "trunk", .. })));
    }

    #[test]
    fn evaluate_boundaries() {
        let p = sample(&mut ChaCha8Rng::seed_from_u64(5));
        let c = build_curves(&p, H).unwrap();
        let at0 = evaluate(&c, 0.0).unwrap();
        assert_eq!(at0.len(), 1);
        assert!((at0[0].1 - p.trunk_base_x).abs() < 1e-9);
        let top = evaluate(&c, H).unwrap();
        assert!((top[0].1 - p.branches[0].end_x).abs() < 1e-9);
        assert!((top[1].1 - p.branches[1].end_x).abs() < 1e-9);
        let junction = evaluate(&c, p.junction_y).unwrap();
        assert!(junction.iter().all(|(_, x)| (x - p.junction_x).abs() < 1e-9));
        assert!(evaluate(&c, -1.0).is_err());
        assert!(evaluate(&c, H + 0.5).is_err());
    }

    fn upright_y(width: f64) -> YTreeParams {
        YTreeParams {
            trunk_base_x: width / 2.0,
            trunk_base_slope: 0.0,
            junction_x: width / 2.0,
            junction_y: 0.4 * H,
            branches: [
                BranchParams {
                    junction_slope: -0.6,
                    via_x: width / 2.0 - 40.0,
                    via_y: 0.7 * H,
                    end_x: width / 2.0 - 60.0,
                    end_slope: -0.1,
                },
                BranchParams {
                    junction_slope: 0.6,
                    via_x: width / 2.0 + 40.0,
                    via_y: 0.7 * H,
                    end_x: width / 2.0 + 60.0,
                    end_slope: 0.1,
                },
            ],
        }
    }

    #[test]
    fn rasterize_straight_trunk() {
        let arm = BranchParams {
            junction_slope: 0.0,
            via_x: 10.0,
            via_y: 26.0,
            end_x: 10.0,
            end_slope: 0.0,
        };
        let p = YTreeParams {
            trunk_base_x: 10.0,
            trunk_base_slope: 0.0,
            junction_x: 10.0,
            junction_y: 20.0,
            branches: [arm, arm],
        };
        let c = build_curves(&p, 32.0).unwrap();
        let mut map = ThicknessMap::new();
        for y in c.curve_rows(CurveId::Trunk) {
            map.insert((CurveId::Trunk, y), 3);
        }
        let m = rasterize(&c, &map, 20, 32);
        for y in 0..32 {
            for x in 0..20 {
                assert_eq!(m.get(x, y), y < 20 && (9..=11).contains(&x));
            }
        }
        assert!(rasterize(&c, &ThicknessMap::new(), 20, 32).is_empty());
    }

    #[test]
    fn even_thickness_leans_left() {
        assert_eq!(run_start(10, 4), 8);
        assert_eq!(run_start(10, 3), 9);
        assert_eq!(run_start(10, 1), 10);
    }

    #[test]
    fn rasterized_y_passes_filter_and_round_trips() {
        let p = upright_y(256.0);
        let c = build_curves(&p, H).unwrap();
        let m = rasterize(&c, &uniform_thickness(&c, 5), 256, 256);
        assert!(y_shaped_tree_filter(&m, &FilterConfig::default()).passes);

        let thin = rasterize(&c, &uniform_thickness(&c, 1), 256, 256);
        let skel = to_partial_skeleton(&thin);
        for pt in &skel.points {
            let xs = c.positions(pt.y as f64).to_vec();
            let err = xs.iter().map(|(_, x)| (x - pt.x).abs()).fold(f64::INFINITY, f64::min);
            assert!(err <= 0.5 + 1e-9, "row {} err {err}", pt.y);
        }
    }

    #[test]
    fn params_json_uses_symbol_names() {
        let p = upright_y(256.0);
        let json = serde_json::to_value(p).unwrap();
        assert_eq!(json.as_object().unwrap().len(), 14);
        assert_eq!(json["T_px"], 128.0);
        assert_eq!(json["b2_p1x"], 168.0);
        let back: YTreeParams = serde_json::from_value(json).unwrap();
        assert_eq!(back, p);
    }
}
