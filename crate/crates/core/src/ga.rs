//! Genetic-algorithm fitting of the Y-tree template to a partial skeleton.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::PartialSkeleton;
use crate::template::{build_curves, RowPositions, TemplateCurves, YTreeParams, GENE_COUNT};

/// Minimum vertical gap kept between the junction and a via point.
const MIN_SEGMENT: f64 = 1.0;

/// Per-gene search interval, in gene order (see [`YTreeParams::to_genes`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneBounds(pub Vec<(f64, f64)>);

impl GeneBounds {
    /// x genes span the image, the junction sits in the lower 10-60% of the
    /// height, via points in 30-95%, and all gradients in [-2, 2].
    pub fn for_size(width: usize, height: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        let x = (0.0, w - 1.0);
        let slope = (-2.0, 2.0);
        let via_y = (0.3 * h, 0.95 * h);
        let branch = [slope, x, via_y, x, slope];
        let mut genes = vec![x, slope, x, (0.1 * h, 0.6 * h)];
        genes.extend(branch);
        genes.extend(branch);
        GeneBounds(genes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.len() != GENE_COUNT {
            return Err(Error::Config(format!(
                "gene bounds need {GENE_COUNT} intervals, got {}",
                self.0.len()
            )));
        }
        if self.0.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(Error::Config("gene bounds must be finite with lo <= hi".into()));
        }
        Ok(())
    }

    pub fn contains(&self, genes: &[f64; GENE_COUNT]) -> bool {
        genes
            .iter()
            .zip(&self.0)
            .all(|(g, &(lo, hi))| *g >= lo && *g <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub elite_count: usize,
    pub tournament_size: usize,
    /// Mutation standard deviation as a fraction of each gene's range.
    pub mutation_sigma: f64,
    pub rng_seed: u64,
    /// Defaults to [`GeneBounds::for_size`] of the image being fitted.
    pub gene_bounds: Option<GeneBounds>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 2000,
            generations: 800,
            crossover_prob: 0.8,
            mutation_prob: 0.5,
            elite_count: 2,
            tournament_size: 3,
            mutation_sigma: 0.05,
            rng_seed: 0,
            gene_bounds: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(format!("ga.{m}")));
        if self.population_size < 2 {
            return err("population_size must be at least 2");
        }
        if self.generations < 1 {
            return err("generations must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) || !(0.0..=1.0).contains(&self.mutation_prob) {
            return err("crossover_prob and mutation_prob must lie in [0, 1]");
        }
        if self.elite_count > self.population_size {
            return err("elite_count must not exceed population_size");
        }
        if self.tournament_size < 1 {
            return err("tournament_size must be at least 1");
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return err("mutation_sigma must be a non-negative number");
        }
        if let Some(b) = &self.gene_bounds {
            b.validate()?;
        }
        Ok(())
    }

    pub fn bounds_for(&self, width: usize, height: usize) -> GeneBounds {
        self.gene_bounds
            .clone()
            .unwrap_or_else(|| GeneBounds::for_size(width, height))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FitResult {
    pub params: YTreeParams,
    /// Mean absolute center error in pixels.
    pub fitness: f64,
    pub generations_run: usize,
    pub evaluations: usize,
}

/// Skeleton regrouped by row so each row is evaluated once per individual.
struct RowIndex {
    rows: Vec<(f64, usize, usize)>,
    xs: Vec<f64>,
    width: f64,
}

impl RowIndex {
    fn new(skeleton: &PartialSkeleton, width: usize) -> Self {
        let mut pts: Vec<_> = skeleton.points.iter().map(|p| (p.y, p.x)).collect();
        pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut rows = Vec::new();
        let mut xs = Vec::with_capacity(pts.len());
        let mut i = 0;
        while i < pts.len() {
            let y = pts[i].0;
            let start = xs.len();
            while i < pts.len() && pts[i].0 == y {
                xs.push(pts[i].1);
                i += 1;
            }
            rows.push((y as f64, start, xs.len()));
        }
        Self {
            rows,
            xs,
            width: width as f64,
        }
    }

    fn mae(&self, curves: &TemplateCurves) -> f64 {
        let mut total = 0.0;
        for &(y, start, end) in &self.rows {
            let pts = &self.xs[start..end];
            if y > curves.height {
                total += self.width * pts.len() as f64;
                continue;
            }
            match curves.positions(y) {
                RowPositions::Trunk(t) => {
                    total += pts.iter().map(|x| (x - t).abs()).sum::<f64>();
                }
                RowPositions::Branches(a, b) => {
                    total += pts
                        .iter()
                        .map(|x| (x - a).abs().min((x - b).abs()))
                        .sum::<f64>();
                }
            }
        }
        total / self.xs.len() as f64
    }
}

/// Mean over skeleton points of the distance to the nearest template curve
/// on the same row.
pub fn fitness_mae(
    params: &YTreeParams,
    skeleton: &PartialSkeleton,
    width: usize,
    height: usize,
) -> Result<f64> {
    if skeleton.is_empty() {
        return Err(Error::EmptySkeleton);
    }
    let curves = build_curves(params, height as f64)?;
    Ok(RowIndex::new(skeleton, width).mae(&curves))
}

type Genome = [f64; GENE_COUNT];

/// Projects a genome back onto the bounds and the template ordering rules:
/// every via point above the junction, branch 1 ending left of branch 2.
fn repair_genome(g: &mut Genome, bounds: &GeneBounds) {
    for (v, &(lo, hi)) in g.iter_mut().zip(&bounds.0) {
        *v = v.clamp(lo, hi);
    }
    for via in [6, 11] {
        if g[via] < g[3] + MIN_SEGMENT {
            g[via] = (g[3] + MIN_SEGMENT).min(bounds.0[via].1);
        }
        if g[via] < g[3] + MIN_SEGMENT {
            g[3] = (g[via] - MIN_SEGMENT).max(bounds.0[3].0);
        }
    }
    if g[7] > g[12] {
        for k in 4..9 {
            g.swap(k, k + 5);
        }
    }
}

struct Evaluator {
    index: RowIndex,
    height: f64,
}

impl Evaluator {
    fn fitness(&self, g: &Genome) -> f64 {
        match build_curves(&YTreeParams::from_genes(g), self.height) {
            Ok(curves) => {
                let f = self.index.mae(&curves);
                if f.is_nan() {
                    f64::INFINITY
                } else {
                    f
                }
            }
            Err(_) => f64::INFINITY,
        }
    }

    fn evaluate(&self, pop: &[Genome]) -> Vec<f64> {
        pop.par_iter().map(|g| self.fitness(g)).collect()
    }
}

fn better(fit: &[f64], a: usize, b: usize) -> bool {
    fit[a] < fit[b] || (fit[a] == fit[b] && a < b)
}

fn tournament(rng: &mut ChaCha8Rng, fit: &[f64], size: usize) -> usize {
    let mut best = rng.gen_range(0..fit.len());
    for _ in 1..size {
        let c = rng.gen_range(0..fit.len());
        if better(fit, c, best) {
            best = c;
        }
    }
    best
}

/// Fits the template with a generational GA: tournament selection,
/// single-point crossover, whole-genome Gaussian mutation, elitism.
/// The result is the best individual ever evaluated and depends only on the
/// inputs and `cfg.rng_seed`.
pub fn fit_tree(
    skeleton: &PartialSkeleton,
    cfg: &GaConfig,
    width: usize,
    height: usize,
) -> Result<FitResult> {
    fit_tree_traced(skeleton, cfg, width, height).map(|(r, _)| r)
}

/// As [`fit_tree`], also returning the best-ever fitness after the initial
/// population and after each generation.
pub fn fit_tree_traced(
    skeleton: &PartialSkeleton,
    cfg: &GaConfig,
    width: usize,
    height: usize,
) -> Result<(FitResult, Vec<f64>)> {
    cfg.validate()?;
    if skeleton.is_empty() {
        return Err(Error::EmptySkeleton);
    }
    let bounds = cfg.bounds_for(width, height);
    bounds.validate()?;
    let eval = Evaluator {
        index: RowIndex::new(skeleton, width),
        height: height as f64,
    };
    let np = cfg.population_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut pop: Vec<Genome> = (0..np)
        .map(|_| {
            let mut g = [0.0; GENE_COUNT];
            for (v, &(lo, hi)) in g.iter_mut().zip(&bounds.0) {
                *v = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            }
            repair_genome(&mut g, &bounds);
            g
        })
        .collect();
    let mut fit = eval.evaluate(&pop);
    let mut evaluations = np;

    let argmin = |fit: &[f64]| (0..fit.len()).fold(0, |b, i| if better(fit, i, b) { i } else { b });
    let mut best_idx = argmin(&fit);
    let mut best = (pop[best_idx], fit[best_idx]);
    let mut history = vec![best.1];

    let ranges: Vec<f64> = bounds.0.iter().map(|(lo, hi)| hi - lo).collect();
    let mut order: Vec<usize> = (0..np).collect();

    for _ in 0..cfg.generations {
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
        let mut next: Vec<Genome> = order[..cfg.elite_count].iter().map(|&i| pop[i]).collect();

        while next.len() < np {
            let a = pop[tournament(&mut rng, &fit, cfg.tournament_size)];
            let b = pop[tournament(&mut rng, &fit, cfg.tournament_size)];
            let mut children = [a, b];
            if rng.gen::<f64>() < cfg.crossover_prob {
                let cut = rng.gen_range(1..GENE_COUNT);
                for k in cut..GENE_COUNT {
                    children[0][k] = b[k];
                    children[1][k] = a[k];
                }
            }
            for mut child in children {
                if rng.gen::<f64>() < cfg.mutation_prob {
                    for (v, r) in child.iter_mut().zip(&ranges) {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *v += z * cfg.mutation_sigma * r;
                    }
                }
                repair_genome(&mut child, &bounds);
                if next.len() < np {
                    next.push(child);
                }
            }
        }

        pop = next;
        fit = eval.evaluate(&pop);
        evaluations += np;
        best_idx = argmin(&fit);
        if fit[best_idx] < best.1 {
            best = (pop[best_idx], fit[best_idx]);
        }
        history.push(best.1);
    }

    Ok((
        FitResult {
            params: YTreeParams::from_genes(&best.0),
            fitness: best.1,
            generations_run: cfg.generations,
            evaluations,
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{to_partial_skeleton, SkeletonPoint};
    use crate::template::{rasterize, uniform_thickness, BranchParams};

    fn truth() -> YTreeParams {
        YTreeParams {
            trunk_base_x: 64.0,
            trunk_base_slope: 0.1,
            junction_x: 66.0,
            junction_y: 45.0,
            branches: [
                BranchParams {
                    junction_slope: -0.8,
                    via_x: 45.0,
                    via_y: 80.0,
                    end_x: 35.0,
                    end_slope: -0.2,
                },
                BranchParams {
                    junction_slope: 0.7,
                    via_x: 88.0,
                    via_y: 85.0,
                    end_x: 100.0,
                    end_slope: 0.3,
                },
            ],
        }
    }

    fn skeleton_of(p: &YTreeParams, w: usize, h: usize) -> PartialSkeleton {
        let c = build_curves(p, h as f64).unwrap();
        to_partial_skeleton(&rasterize(&c, &uniform_thickness(&c, 1), w, h))
    }

    fn shifted(p: &YTreeParams, dx: f64) -> YTreeParams {
        let mut g = p.to_genes();
        for k in [0, 2, 5, 7, 10, 12] {
            g[k] += dx;
        }
        YTreeParams::from_genes(&g)
    }

    #[test]
    fn self_fit_is_rounding_only() {
        let p = truth();
        let s = skeleton_of(&p, 128, 128);
        assert!(fitness_mae(&p, &s, 128, 128).unwrap() <= 0.5);
    }

    #[test]
    fn single_point_error() {
        let p = truth();
        let s = PartialSkeleton {
            points: vec![SkeletonPoint {
                y: 0,
                x: p.trunk_base_x + 3.0,
            }],
        };
        assert!((fitness_mae(&p, &s, 128, 128).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_shift_oracle() {
        let p = truth();
        let s = skeleton_of(&p, 128, 128);
        let f = fitness_mae(&shifted(&p, 5.0), &s, 128, 128).unwrap();
        assert!((f - 5.0).abs() <= 0.5, "{f}");
    }

    #[test]
    fn empty_skeleton_is_an_error() {
        let empty = PartialSkeleton::default();
        assert!(matches!(fitness_mae(&truth(), &empty, 8, 8), Err(Error::EmptySkeleton)));
        assert!(matches!(
            fit_tree(&empty, &GaConfig::default(), 8, 8),
            Err(Error::EmptySkeleton)
        ));
    }

    fn small_cfg(seed: u64) -> GaConfig {
        GaConfig {
            population_size: 120,
            generations: 30,
            rng_seed: seed,
            ..GaConfig::default()
        }
    }

    #[test]
    fn degenerate_ga_returns_best_initial() {
        let s = skeleton_of(&truth(), 128, 128);
        let cfg = GaConfig {
            population_size: 2,
            generations: 1,
            elite_count: 2,
            rng_seed: 9,
            ..GaConfig::default()
        };
        let (r, hist) = fit_tree_traced(&s, &cfg, 128, 128).unwrap();
        assert_eq!(hist[0], hist[1]);
        assert_eq!(r.fitness, hist[0]);
        assert_eq!(r.evaluations, 4);
    }

    #[test]
    fn deterministic_and_counted() {
        let s = skeleton_of(&truth(), 128, 128);
        let a = fit_tree(&s, &small_cfg(4), 128, 128).unwrap();
        let b = fit_tree(&s, &small_cfg(4), 128, 128).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.evaluations, 120 * 31);
        assert_eq!(a.generations_run, 30);
        let c = fit_tree(&s, &small_cfg(5), 128, 128).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let s = skeleton_of(&truth(), 128, 128);
        let cfg = small_cfg(21);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| fit_tree(&s, &cfg, 128, 128).unwrap());
        let b = four.install(|| fit_tree(&s, &cfg, 128, 128).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn best_is_monotone_and_in_bounds() {
        let s = skeleton_of(&truth(), 128, 128);
        let cfg = small_cfg(8);
        let (r, hist) = fit_tree_traced(&s, &cfg, 128, 128).unwrap();
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*hist.last().unwrap(), r.fitness);
        assert!(GeneBounds::for_size(128, 128).contains(&r.params.to_genes()));
        r.params.validate(128, 128).unwrap();
    }

    #[test]
    fn repair_orders_branches_and_via_points() {
        let bounds = GeneBounds::for_size(100, 100);
        let mut g = truth().to_genes();
        g[3] = 55.0; // junction above branch 1's via point
        g[6] = 40.0;
        g[7] = 90.0; // branch 1 ends right of branch 2
        g[12] = 10.0;
        g[0] = 500.0;
        repair_genome(&mut g, &bounds);
        assert!(bounds.contains(&g));
        let p = YTreeParams::from_genes(&g);
        p.validate(100, 100).unwrap();
        assert_eq!(p.branches[0].end_x, 10.0);
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let bad = GaConfig {
            population_size: 1,
            ..GaConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GaConfig {
            mutation_prob: 1.5,
            ..GaConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
