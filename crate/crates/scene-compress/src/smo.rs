//! Sequential-minimal-optimization solver for the compression QP:
//! minimize `alphaᵀK·alpha − tau·dᵀalpha` over the capped simplex
//! `{Σ alpha_i = 1, 0 ≤ alpha_i ≤ 1/(nu·m)}`.
//!
//! Each iteration picks a coordinate pair `(i, j)`, holds every other
//! coordinate fixed, and minimizes the objective in closed form along the
//! segment `alpha_i + alpha_j = Δ` intersected with the box. Kernel values
//! arrive one row at a time from the LRU cache, and the running sums
//! `theta[t] = Σ_l alpha_l·K(x_t, x_l)` are updated incrementally, so a step
//! costs O(m) after at most two row builds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distinctiveness::{DistinctivenessVector, ScoreConfig};
use crate::kernel::{KernelRowCache, DEFAULT_CACHE_BYTES};
use crate::scene::SceneModel;
use crate::InvalidParam;

/// How the solver draws the coordinate pair each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairStrategy {
    /// Both indices uniform over all distinct pairs.
    Uniform,
    /// First index uniform over coordinates with positive mass, second
    /// uniform over the rest. Avoids the many no-op steps on zero pairs once
    /// the distribution is sparse.
    Active,
}

/// Everything that determines a compression run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionParams {
    /// Compression factor in (0, 1]; the box cap is `1/(nu·m)`. Smaller nu
    /// permits sparser solutions.
    pub nu: f64,
    /// Weight of the distinctiveness term, non-negative.
    pub tau: f64,
    /// RBF bandwidth in scene units, positive.
    pub sigma: f64,
    /// Number of pair updates to run.
    pub iterations: u64,
    /// Seed for the pair-selection stream.
    pub seed: u64,
    pub pair_strategy: PairStrategy,
    pub score: ScoreConfig,
}

impl Default for CompressionParams {
    fn default() -> Self {
        Self {
            nu: 0.05,
            tau: 1.0,
            sigma: 1.0,
            iterations: 4096,
            seed: 0,
            pair_strategy: PairStrategy::Uniform,
            score: ScoreConfig::default(),
        }
    }
}

impl CompressionParams {
    pub fn validate(&self) -> Result<(), InvalidParam> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(InvalidParam {
                name: "nu",
                requirement: "in (0, 1]",
                got: self.nu,
            });
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(InvalidParam {
                name: "tau",
                requirement: "non-negative and finite",
                got: self.tau,
            });
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(InvalidParam {
                name: "sigma",
                requirement: "positive and finite",
                got: self.sigma,
            });
        }
        if self.iterations == 0 {
            return Err(InvalidParam {
                name: "iterations",
                requirement: "at least 1",
                got: 0.0,
            });
        }
        self.score.validate()
    }
}

/// A point on the capped simplex: the solver's output.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaDistribution {
    /// Length-m mass vector; sums to 1 within 1e-9, entries in `[0, cap]`
    /// within 1e-12.
    pub alpha: Vec<f64>,
    /// Box upper bound `1/(nu·m)`.
    pub cap: f64,
}

impl AlphaDistribution {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Entries strictly above zero.
    pub fn positive_count(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > 0.0).count()
    }

    /// Smallest support any feasible distribution can have: `ceil(nu·m)`,
    /// recovered from the cap. Forced because each entry is at most the cap
    /// and the total is 1.
    pub fn min_support(&self) -> usize {
        nudged_ceil(1.0 / self.cap).clamp(1, self.len().max(1))
    }
}

/// `ceil(nu·m)` with protection against float fuzz in the product.
pub fn min_support_count(nu: f64, m: usize) -> usize {
    nudged_ceil(nu * m as f64).clamp(1, m)
}

/// Ceiling with a one-sided nudge: products that are integers in exact
/// arithmetic can land one ulp high in floats (0.07 · 100 rounds to
/// 7.000000000000001), and a plain ceiling would then claim an extra slot.
/// Fractions within 1e-9 of an integer are treated as that integer.
fn nudged_ceil(t: f64) -> usize {
    (t - 1e-9).ceil().max(1.0) as usize
}

/// Feasible starting distribution: the `n = ceil(nu·m)` highest-scoring
/// points get the cap `1/(nu·m)`, except that the lowest-scoring of them
/// absorbs the residual so the total lands on 1 to the last bit or two (the
/// subtraction `1 − (n−1)·cap` itself is exact by Sterbenz's lemma). Score
/// ties break toward the lower point index.
pub fn initialize(scores: &DistinctivenessVector, nu: f64, m: usize) -> AlphaDistribution {
    assert!(m >= 1, "m must be at least 1");
    assert_eq!(scores.scores.len(), m, "scores length must equal m");
    assert!(nu > 0.0 && nu <= 1.0, "nu must be in (0, 1]");
    let cap = 1.0 / (nu * m as f64);
    let n = min_support_count(nu, m);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores.scores[b].total_cmp(&scores.scores[a]).then(a.cmp(&b)));
    let mut alpha = vec![0.0; m];
    for &idx in &order[..n - 1] {
        alpha[idx] = cap;
    }
    alpha[order[n - 1]] = (1.0 - (n - 1) as f64 * cap).max(0.0);
    AlphaDistribution { alpha, cap }
}

/// Minimizer of the pair subproblem over the feasible segment `[lo, hi]`.
///
/// Restricted to `alpha_i + alpha_j = delta`, the objective is the quadratic
/// `J'(x) = 2·gap·x² − (2·gap·delta + t)·x + const` with `gap = 1 − K_ij ≥ 0`
/// and `t` collecting the linear terms; its unconstrained minimum is
/// `(t/(2·gap) + delta)/2`. The upper clamp runs last so the partner mass
/// `delta − x` can never exceed the cap even if `lo` and `hi` cross by an
/// ulp. When `gap` vanishes (coincident points) the objective is linear with
/// slope `−t`, so the mass moves to whichever endpoint that slope favors.
fn pair_optimum(current: f64, delta: f64, t: f64, gap: f64, lo: f64, hi: f64) -> f64 {
    if gap < 1e-12 {
        if t > 0.0 {
            hi
        } else if t < 0.0 {
            lo
        } else {
            current.max(lo).min(hi)
        }
    } else {
        (0.5 * (t / (2.0 * gap) + delta)).max(lo).min(hi)
    }
}

/// The solver state machine. Owns the kernel cache and the pair-selection
/// RNG; one instance per run.
pub struct Solver<'a> {
    scores: &'a [f64],
    params: CompressionParams,
    m: usize,
    cap: f64,
    alpha: Vec<f64>,
    /// `theta[t] = Σ_l alpha_l·K(x_t, x_l)`, maintained incrementally.
    theta: Vec<f64>,
    /// Indices with positive mass, plus each index's slot in that list
    /// (`usize::MAX` when absent). Swap-remove keeps both O(1).
    positive: Vec<usize>,
    positive_slot: Vec<usize>,
    cache: KernelRowCache<'a>,
    rng: ChaCha8Rng,
    iteration: u64,
}

impl<'a> Solver<'a> {
    /// Validates parameters, initializes alpha from the scores, and builds
    /// the running theta sums.
    pub fn new(
        scene: &'a SceneModel,
        scores: &'a DistinctivenessVector,
        params: &CompressionParams,
        cache_bytes: usize,
    ) -> Result<Self, InvalidParam> {
        params.validate()?;
        let m = scene.len();
        assert_eq!(scores.scores.len(), m, "scores length must equal point count");
        let init = initialize(scores, params.nu, m);
        let mut cache = KernelRowCache::with_memory_budget(scene, params.sigma, cache_bytes);
        let mut theta = vec![0.0; m];
        for (l, &al) in init.alpha.iter().enumerate() {
            if al != 0.0 {
                let row = cache.row(l);
                for (slot, r) in theta.iter_mut().zip(row.iter()) {
                    *slot += al * r;
                }
            }
        }
        let mut positive = Vec::new();
        let mut positive_slot = vec![usize::MAX; m];
        for (i, &a) in init.alpha.iter().enumerate() {
            if a > 0.0 {
                positive_slot[i] = positive.len();
                positive.push(i);
            }
        }
        Ok(Self {
            scores: &scores.scores,
            params: *params,
            m,
            cap: init.cap,
            alpha: init.alpha,
            theta,
            positive,
            positive_slot,
            cache,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            iteration: 0,
        })
    }

    /// Draws the next coordinate pair, or `None` when `m = 1` and no pair
    /// exists. The second index is uniform over the other `m − 1` indices
    /// (drawn from a shifted range rather than by rejection, so exactly two
    /// RNG values are consumed per call).
    pub fn select_pair(&mut self) -> Option<(usize, usize)> {
        if self.m < 2 {
            return None;
        }
        let i = match self.params.pair_strategy {
            PairStrategy::Uniform => self.rng.random_range(0..self.m),
            PairStrategy::Active => {
                debug_assert!(!self.positive.is_empty(), "mass vanished");
                let k = self.rng.random_range(0..self.positive.len());
                self.positive[k]
            }
        };
        let j = self.rng.random_range(0..self.m - 1);
        let j = if j >= i { j + 1 } else { j };
        Some((i, j))
    }

    /// One closed-form pair update. Feasibility is preserved exactly: the
    /// new `alpha_i` is clamped into `[max(0, Δ−cap), min(cap, Δ)]` and
    /// `alpha_j` receives the remainder of Δ. Steps that resolve to the
    /// current value return without touching any state, so no-op updates
    /// introduce no rounding drift.
    pub fn step(&mut self, i: usize, j: usize) {
        assert!(i != j, "pair indices must differ");
        assert!(i < self.m && j < self.m, "pair index out of range");
        self.iteration += 1;
        let ai = self.alpha[i];
        let aj = self.alpha[j];
        let delta = ai + aj;
        if delta == 0.0 {
            return; // the only feasible point on the segment is (0, 0)
        }
        let lo = (delta - self.cap).max(0.0);
        let hi = delta.min(self.cap);
        let row_i = self.cache.row(i);
        let row_j = self.cache.row(j);
        let kij = row_i[j];
        // Kernel-weighted mass over all l outside the pair; K(x, x) = 1.
        let theta_i = self.theta[i] - ai - aj * kij;
        let theta_j = self.theta[j] - aj - ai * kij;
        let t = self.params.tau * (self.scores[i] - self.scores[j]) - 2.0 * theta_i + 2.0 * theta_j;
        let new_ai = pair_optimum(ai, delta, t, 1.0 - kij, lo, hi);
        if new_ai == ai {
            return;
        }
        let new_aj = delta - new_ai;
        let di = new_ai - ai;
        let dj = new_aj - aj;
        self.alpha[i] = new_ai;
        self.alpha[j] = new_aj;
        self.update_positive(i);
        self.update_positive(j);
        for ((slot, ri), rj) in self.theta.iter_mut().zip(row_i.iter()).zip(row_j.iter()) {
            *slot += di * ri + dj * rj;
        }
    }

    /// Runs the configured number of pair updates.
    pub fn run(&mut self) {
        self.run_logged(0);
    }

    /// Like [`Solver::run`], logging objective and support every
    /// `log_every` iterations when nonzero.
    pub fn run_logged(&mut self, log_every: u64) {
        if self.params.nu == 1.0 {
            // The cap is 1/m, so the capped simplex is the single uniform
            // point and every pair step is the identity. Skipping the loop
            // keeps the fixed point exact to the last bit at any budget.
            return;
        }
        for _ in 0..self.params.iterations {
            let Some((i, j)) = self.select_pair() else {
                break;
            };
            self.step(i, j);
            if log_every > 0 && self.iteration % log_every == 0 {
                log::info!(
                    "iteration {}: J ~ {:.9}, support {}",
                    self.iteration,
                    self.objective_estimate(),
                    self.positive.len()
                );
            }
        }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Steps taken so far, counting no-ops.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Entries with strictly positive mass.
    pub fn positive_count(&self) -> usize {
        self.positive.len()
    }

    /// O(m) objective value from the running theta sums. Carries their
    /// incremental rounding error; exact evaluation lives in the objective
    /// module.
    pub fn objective_estimate(&self) -> f64 {
        let mut coverage = 0.0;
        let mut distinctiveness = 0.0;
        for i in 0..self.m {
            coverage += self.alpha[i] * self.theta[i];
            distinctiveness += self.alpha[i] * self.scores[i];
        }
        coverage - self.params.tau * distinctiveness
    }

    /// Largest absolute difference between the incrementally maintained
    /// theta sums and a from-scratch recomputation.
    pub fn theta_consistency_error(&mut self) -> f64 {
        let mut fresh = vec![0.0; self.m];
        for l in 0..self.m {
            let al = self.alpha[l];
            if al != 0.0 {
                let row = self.cache.row(l);
                for (slot, r) in fresh.iter_mut().zip(row.iter()) {
                    *slot += al * r;
                }
            }
        }
        self.theta
            .iter()
            .zip(&fresh)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// (capacity, resident, computed) of the kernel row cache.
    pub fn cache_stats(&self) -> (usize, usize, u64) {
        (
            self.cache.capacity(),
            self.cache.resident_rows(),
            self.cache.computed_rows(),
        )
    }

    pub fn into_alpha(self) -> AlphaDistribution {
        AlphaDistribution {
            alpha: self.alpha,
            cap: self.cap,
        }
    }

    fn update_positive(&mut self, i: usize) {
        let present = self.positive_slot[i] != usize::MAX;
        let positive = self.alpha[i] > 0.0;
        if positive && !present {
            self.positive_slot[i] = self.positive.len();
            self.positive.push(i);
        } else if !positive && present {
            let slot = self.positive_slot[i];
            let last = self.positive.pop().expect("positive list non-empty");
            if last != i {
                self.positive[slot] = last;
                self.positive_slot[last] = slot;
            }
            self.positive_slot[i] = usize::MAX;
        }
    }
}

/// Initialization plus a full solver run with the default cache budget.
pub fn solve(
    scene: &SceneModel,
    scores: &DistinctivenessVector,
    params: &CompressionParams,
) -> Result<AlphaDistribution, InvalidParam> {
    let mut solver = Solver::new(scene, scores, params, DEFAULT_CACHE_BYTES)?;
    solver.run();
    Ok(solver.into_alpha())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::rbf;
    use crate::scene::{synth_scene, SceneModel, ScenePoint};
    use proptest::prelude::*;

    fn d(scores: Vec<f64>) -> DistinctivenessVector {
        DistinctivenessVector { scores }
    }

    fn params(nu: f64, tau: f64, sigma: f64, iterations: u64, seed: u64) -> CompressionParams {
        CompressionParams {
            nu,
            tau,
            sigma,
            iterations,
            seed,
            ..CompressionParams::default()
        }
    }

    fn scene_at(positions: &[[f64; 3]]) -> SceneModel {
        let points = positions
            .iter()
            .enumerate()
            .map(|(i, &position)| ScenePoint {
                id: i as u64,
                position,
                pair_distances: vec![],
                cameras_seen: 1,
            })
            .collect();
        SceneModel::new(1, 1, points).unwrap()
    }

    /// Independent dense objective used to certify steps.
    fn dense_objective(scene: &SceneModel, scores: &[f64], alpha: &[f64], tau: f64, sigma: f64) -> f64 {
        let m = scene.len();
        let mut coverage = 0.0;
        for i in 0..m {
            for j in 0..m {
                coverage += alpha[i]
                    * alpha[j]
                    * rbf(scene.points()[i].position, scene.points()[j].position, sigma);
            }
        }
        let distinct: f64 = alpha.iter().zip(scores).map(|(a, s)| a * s).sum();
        coverage - tau * distinct
    }

    #[test]
    fn min_support_examples() {
        assert_eq!(min_support_count(0.5, 10), 5);
        assert_eq!(min_support_count(0.25, 10), 3);
        assert_eq!(min_support_count(1.0, 7), 7);
        assert_eq!(min_support_count(0.34, 10), 4);
        assert_eq!(min_support_count(0.001, 10), 1);
        // 0.07 · 100 rounds to 7.000000000000001; a plain ceiling says 8.
        assert_eq!((0.07f64 * 100.0).ceil(), 8.0);
        assert_eq!(min_support_count(0.07, 100), 7);
        assert_eq!(min_support_count(0.05, 2000), 100);
    }

    #[test]
    fn initialize_even_split() {
        let alpha = initialize(&d(vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0]), 0.5, 10);
        assert_eq!(alpha.cap, 0.2);
        let sum: f64 = alpha.alpha.iter().sum();
        assert_eq!(sum, 1.0);
        for i in 0..5 {
            assert!((alpha.alpha[i] - 0.2).abs() <= 1e-15);
        }
        assert!(alpha.alpha[5..].iter().all(|&a| a == 0.0));
    }

    #[test]
    fn initialize_adjusts_lowest_ranked() {
        let scores = vec![0.1, 0.9, 0.8, 0.2, 0.7, 0.05, 0.3, 0.25, 0.15, 0.0];
        let alpha = initialize(&d(scores), 0.25, 10);
        assert_eq!(alpha.cap, 0.4);
        // Ranking: 1 (0.9), 2 (0.8), 4 (0.7); the last gets the residual 0.2.
        assert_eq!(alpha.alpha[1], 0.4);
        assert_eq!(alpha.alpha[2], 0.4);
        assert!((alpha.alpha[4] - 0.2).abs() <= 1e-15);
        assert_eq!(alpha.positive_count(), 3);
        let sum: f64 = alpha.alpha.iter().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn initialize_breaks_ties_by_index() {
        let alpha = initialize(&d(vec![0.5; 6]), 0.5, 6);
        // Ties: indices 0, 1, 2 selected; index 2 (lowest-ranked) adjusted.
        assert!(alpha.alpha[0] == alpha.cap && alpha.alpha[1] == alpha.cap);
        assert!(alpha.alpha[2] > 0.0);
        assert!(alpha.alpha[3..].iter().all(|&a| a == 0.0));
    }

    #[test]
    fn initialize_single_point() {
        let alpha = initialize(&d(vec![0.3]), 1.0, 1);
        assert_eq!(alpha.alpha, vec![1.0]);
        // nu < 1 on one point still yields the whole mass (cap above 1).
        let loose = initialize(&d(vec![0.3]), 0.25, 1);
        assert_eq!(loose.alpha, vec![1.0]);
        assert_eq!(loose.cap, 4.0);
    }

    #[test]
    fn pair_optimum_degenerate_moves_with_slope() {
        // Linear objective: positive t means J decreases toward hi.
        assert_eq!(pair_optimum(0.2, 0.5, 1.0, 0.0, 0.1, 0.4), 0.4);
        assert_eq!(pair_optimum(0.2, 0.5, -1.0, 0.0, 0.1, 0.4), 0.1);
        // Flat objective: stay put (clamped into the segment).
        assert_eq!(pair_optimum(0.2, 0.5, 0.0, 0.0, 0.1, 0.4), 0.2);
        assert_eq!(pair_optimum(0.9, 0.5, 0.0, 1e-15, 0.1, 0.4), 0.4);
    }

    #[test]
    fn pair_optimum_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let delta: f64 = rng.random_range(0.0..1.0);
            let cap: f64 = rng.random_range(0.1..1.0);
            let lo = (delta - cap).max(0.0);
            let hi = delta.min(cap);
            if lo >= hi {
                continue;
            }
            let t: f64 = rng.random_range(-2.0..2.0);
            let gap = rng.random_range(1e-9..1.0);
            let x = pair_optimum(delta / 2.0, delta, t, gap, lo, hi);
            // J'(x) up to a constant; evaluated directly from the quadratic.
            let j = |x: f64| 2.0 * gap * x * x - (2.0 * gap * delta + t) * x;
            let steps = 1000;
            for k in 0..=steps {
                let cand = lo + (hi - lo) * k as f64 / steps as f64;
                assert!(
                    j(x) <= j(cand) + 1e-12,
                    "candidate {cand} beats optimum {x}"
                );
            }
        }
    }

    #[test]
    fn select_pair_on_two_points_is_the_only_pair() {
        let scene = synth_scene(2, 3, 4.0, 1);
        let scores = d(vec![0.5, 0.6]);
        let mut solver = Solver::new(&scene, &scores, &params(0.5, 1.0, 1.0, 10, 7), 1 << 20).unwrap();
        for _ in 0..50 {
            let (i, j) = solver.select_pair().unwrap();
            assert!((i, j) == (0, 1) || (i, j) == (1, 0));
        }
    }

    #[test]
    fn select_pair_never_repeats_an_index() {
        let scene = synth_scene(17, 3, 4.0, 1);
        let scores = d((0..17).map(|i| i as f64 / 17.0).collect());
        for strategy in [PairStrategy::Uniform, PairStrategy::Active] {
            let mut p = params(0.3, 1.0, 1.0, 10, 3);
            p.pair_strategy = strategy;
            let mut solver = Solver::new(&scene, &scores, &p, 1 << 20).unwrap();
            for _ in 0..2000 {
                let (i, j) = solver.select_pair().unwrap();
                assert_ne!(i, j);
                assert!(i < 17 && j < 17);
            }
        }
    }

    #[test]
    fn select_pair_is_deterministic_per_seed() {
        let scene = synth_scene(40, 3, 4.0, 1);
        let scores = d((0..40).map(|i| (i as f64).sin().abs()).collect());
        let p = params(0.2, 1.0, 1.0, 10, 123);
        let mut a = Solver::new(&scene, &scores, &p, 1 << 20).unwrap();
        let mut b = Solver::new(&scene, &scores, &p, 1 << 20).unwrap();
        let pairs_a: Vec<_> = (0..500).map(|_| a.select_pair().unwrap()).collect();
        let pairs_b: Vec<_> = (0..500).map(|_| b.select_pair().unwrap()).collect();
        assert_eq!(pairs_a, pairs_b);
    }

    #[test]
    fn active_strategy_draws_only_positive_first_indices() {
        // nu·m = 1, so initialization concentrates all mass on one point.
        let scene = synth_scene(5, 3, 4.0, 1);
        let scores = d(vec![0.1, 0.9, 0.2, 0.3, 0.4]);
        let mut p = params(0.2, 1.0, 1.0, 10, 5);
        p.pair_strategy = PairStrategy::Active;
        let mut solver = Solver::new(&scene, &scores, &p, 1 << 20).unwrap();
        assert_eq!(solver.positive_count(), 1);
        for _ in 0..1000 {
            let (i, _) = solver.select_pair().unwrap();
            assert_eq!(i, 1, "first index must carry positive mass");
        }
    }

    #[test]
    fn step_on_empty_pair_is_identity() {
        let scene = synth_scene(10, 3, 4.0, 2);
        let scores = d((0..10).map(|i| i as f64 / 10.0).collect());
        let mut solver = Solver::new(&scene, &scores, &params(0.2, 1.0, 1.0, 10, 5), 1 << 20).unwrap();
        // nu·m = 2: indices 9 and 8 hold the mass; 0 and 1 are empty.
        let before = solver.alpha().to_vec();
        assert_eq!(before[0], 0.0);
        assert_eq!(before[1], 0.0);
        solver.step(0, 1);
        assert_eq!(solver.alpha(), before.as_slice());
        assert_eq!(solver.iteration(), 1);
    }

    #[test]
    fn step_splits_two_point_scene_evenly() {
        let scene = scene_at(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let scores = d(vec![0.4, 0.4]);
        let mut solver = Solver::new(&scene, &scores, &params(0.5, 1.0, 1.0, 10, 5), 1 << 20).unwrap();
        assert_eq!(solver.alpha(), &[1.0, 0.0]);
        solver.step(0, 1);
        assert_eq!(solver.alpha(), &[0.5, 0.5]);
    }

    #[test]
    fn step_drains_redundant_coincident_mass_to_exact_zero() {
        // Points 0 and 1 coincide; point 2 sits one sigma away. Coverage
        // pushes the duplicated mass outward: the pair optimum is well below
        // zero, the clamp lands on 0.0 exactly, and the index must leave the
        // positive set.
        let scene = scene_at(&[[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0]]);
        let scores = d(vec![0.5, 0.5, 0.1]);
        let mut solver =
            Solver::new(&scene, &scores, &params(0.5, 0.0, 1.0, 10, 5), 1 << 20).unwrap();
        let before = solver.alpha().to_vec();
        assert!(before[0] > 0.0 && before[1] > 0.0 && before[2] == 0.0);
        solver.step(1, 2);
        let after = solver.alpha();
        assert_eq!(after[0], before[0]);
        assert_eq!(after[1], 0.0);
        assert_eq!(after[2], before[1]);
        assert_eq!(solver.positive_count(), 2);
    }

    #[test]
    fn step_on_coincident_pair_with_equal_scores_is_stable() {
        let scene = scene_at(&[[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0]]);
        let scores = d(vec![0.5, 0.5, 0.1]);
        let mut solver =
            Solver::new(&scene, &scores, &params(2.0 / 3.0, 1.0, 1.0, 10, 5), 1 << 20).unwrap();
        let before = solver.alpha().to_vec();
        solver.step(0, 1); // degenerate pair, equal linear cost
        assert_eq!(solver.alpha(), before.as_slice());
    }

    #[test]
    fn step_never_beats_the_line_search_oracle() {
        for seed in 0..10u64 {
            let scene = synth_scene(5, 4, 3.0, seed);
            let scores = d((0..5).map(|i| ((i as f64) * 0.37 + seed as f64 * 0.11).fract()).collect());
            let p = params(0.4, 1.3, 1.2, 10, seed);
            let mut solver = Solver::new(&scene, &scores, &p, 1 << 20).unwrap();
            // Scramble away from the initial corner before measuring.
            for _ in 0..20 {
                let (i, j) = solver.select_pair().unwrap();
                solver.step(i, j);
            }
            let (i, j) = solver.select_pair().unwrap();
            let before = solver.alpha().to_vec();
            let delta = before[i] + before[j];
            solver.step(i, j);
            let after = dense_objective(&scene, &scores.scores, solver.alpha(), p.tau, p.sigma);

            let lo = (delta - solver.cap()).max(0.0);
            let hi = delta.min(solver.cap());
            let mut candidate = before.clone();
            let mut x = lo;
            while x <= hi {
                candidate[i] = x;
                candidate[j] = delta - x;
                let j_cand = dense_objective(&scene, &scores.scores, &candidate, p.tau, p.sigma);
                assert!(
                    after <= j_cand + 1e-9,
                    "seed {seed}: grid point {x} reaches {j_cand}, step reached {after}"
                );
                x += 1e-6;
            }
        }
    }

    #[test]
    fn objective_never_increases_across_steps() {
        let scene = synth_scene(50, 6, 5.0, 8);
        let scores = d((0..50).map(|i| ((i * 37) % 50) as f64 / 50.0).collect());
        let p = params(0.2, 1.5, 1.0, 2000, 2);
        let mut solver = Solver::new(&scene, &scores, &p, 1 << 22).unwrap();
        let mut last = dense_objective(&scene, &scores.scores, solver.alpha(), p.tau, p.sigma);
        for _ in 0..p.iterations {
            let (i, j) = solver.select_pair().unwrap();
            solver.step(i, j);
            let now = dense_objective(&scene, &scores.scores, solver.alpha(), p.tau, p.sigma);
            assert!(now <= last + 1e-10, "objective rose from {last} to {now}");
            last = now;
        }
    }

    #[test]
    fn coincident_cluster_stress_keeps_invariants_and_descent() {
        // Two stacked clusters exercise the degenerate (linear) update path.
        let mut positions = Vec::new();
        for _ in 0..3 {
            positions.push([0.0, 0.0, 0.0]);
            positions.push([2.0, 1.0, 0.0]);
        }
        positions.push([4.0, 0.0, 1.0]);
        positions.push([0.0, 3.0, 2.0]);
        let scene = scene_at(&positions);
        let m = scene.len();
        let scores = d((0..m).map(|i| ((i * 53) % 17) as f64 / 17.0).collect());
        let p = params(0.3, 2.0, 1.0, 2000, 11);
        let mut solver = Solver::new(&scene, &scores, &p, 1 << 22).unwrap();
        let mut last = dense_objective(&scene, &scores.scores, solver.alpha(), p.tau, p.sigma);
        let n = min_support_count(p.nu, m);
        for _ in 0..p.iterations {
            let (i, j) = solver.select_pair().unwrap();
            solver.step(i, j);
            let alpha = solver.alpha();
            let sum: f64 = alpha.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9);
            assert!(alpha.iter().all(|&a| (0.0..=solver.cap() + 1e-12).contains(&a)));
            assert!(solver.positive_count() >= n);
            let now = dense_objective(&scene, &scores.scores, alpha, p.tau, p.sigma);
            assert!(now <= last + 1e-10);
            last = now;
        }
    }

    #[test]
    fn theta_stays_consistent_over_ten_thousand_steps() {
        let scene = synth_scene(150, 8, 6.0, 4);
        let scores = d((0..150).map(|i| ((i * 29) % 150) as f64 / 150.0).collect());
        let p = params(0.1, 1.0, 1.0, 10_000, 9);
        let mut solver = Solver::new(&scene, &scores, &p, 1 << 24).unwrap();
        for _ in 0..10_000 {
            let (i, j) = solver.select_pair().unwrap();
            solver.step(i, j);
        }
        assert!(solver.theta_consistency_error() < 1e-8);
    }

    #[test]
    fn solve_nu_one_is_exactly_uniform() {
        for m in [3usize, 10, 137, 1000] {
            let scene = synth_scene(m, 5, 8.0, 21);
            let scores = d((0..m).map(|i| ((i * 71) % m) as f64 / m as f64).collect());
            let p = params(1.0, 1.0, 1.0, 50_000, 3);
            let alpha = solve(&scene, &scores, &p).unwrap();
            let uniform = 1.0 / m as f64;
            let worst = alpha
                .alpha
                .iter()
                .map(|a| (a - uniform).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-15, "m={m}: deviation {worst}");
        }
    }

    #[test]
    fn solve_single_point_scene() {
        let scene = synth_scene(1, 1, 1.0, 0);
        let alpha = solve(&scene, &d(vec![0.4]), &params(0.6, 1.0, 1.0, 100, 0)).unwrap();
        assert_eq!(alpha.alpha, vec![1.0]);
    }

    #[test]
    fn solve_is_bitwise_deterministic() {
        let scene = synth_scene(80, 6, 6.0, 13);
        let scores = d((0..80).map(|i| ((i * 13) % 80) as f64 / 80.0).collect());
        for strategy in [PairStrategy::Uniform, PairStrategy::Active] {
            let mut p = params(0.1, 1.0, 1.0, 5000, 77);
            p.pair_strategy = strategy;
            let a = solve(&scene, &scores, &p).unwrap();
            let b = solve(&scene, &scores, &p).unwrap();
            let bits_a: Vec<u64> = a.alpha.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.alpha.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn rejects_out_of_range_params() {
        let cases = [
            ("nu", params(0.0, 1.0, 1.0, 10, 0)),
            ("nu", params(1.5, 1.0, 1.0, 10, 0)),
            ("tau", params(0.5, -0.1, 1.0, 10, 0)),
            ("sigma", params(0.5, 1.0, 0.0, 10, 0)),
            ("iterations", params(0.5, 1.0, 1.0, 0, 0)),
        ];
        for (name, p) in cases {
            assert_eq!(p.validate().unwrap_err().name, name);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn solve_output_is_always_feasible(
            m in 2usize..35,
            nu in 0.05f64..1.0,
            tau in 0.0f64..2.0,
            sigma in 0.2f64..4.0,
            iterations in 1u64..400,
            active in proptest::bool::ANY,
            seed in 0u64..1000,
        ) {
            let scene = synth_scene(m, 6, 6.0, seed);
            let scores = d((0..m).map(|i| ((i * 31 + 7) % m) as f64 / m as f64).collect());
            let p = CompressionParams {
                nu,
                tau,
                sigma,
                iterations,
                seed,
                pair_strategy: if active { PairStrategy::Active } else { PairStrategy::Uniform },
                score: ScoreConfig::default(),
            };
            let alpha = solve(&scene, &scores, &p).unwrap();
            let sum: f64 = alpha.alpha.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(alpha.alpha.iter().all(|&a| a >= 0.0 && a <= alpha.cap + 1e-12));
            prop_assert!(alpha.positive_count() >= min_support_count(nu, m));
        }
    }
}
