//! Coarse-grained homodyne outcomes on the steering side.
//!
//! Alice reports only which bin `[l_{k−1}, l_k)` her quadrature fell in. Bob's
//! conditional states become mixtures of the continuum conditionals over each
//! bin; they are evaluated in closed form and tabulated on a grid for the
//! Fisher information and entropy.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::gauss_poly::{GaussPolyState, JointDensity2D, Marginal1D};
use crate::numerics::{nelder_mead, simpson};
use crate::phase_space::{quadrature_axis, ModePartition, PhaseSpaceVector};
use crate::witness::{
    angle_grid, refine_angle, wrap_angle, Direction, Objective, Score, Term, WitnessKind, WitnessReport,
};

/// Minimum probability of a bin before it is considered degenerate.
pub const MIN_BIN_PROB: f64 = 1e-12;

/// Partition of the real line by finite interior edges `l₁ < … < l_{n−1}`;
/// the outer bins extend to `±∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinPartition {
    edges: Vec<f64>,
    symmetric: bool,
}

impl BinPartition {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Partition("at least two bins are required".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Partition("interior edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Partition("edges must be strictly increasing".into()));
        }
        let n = edges.len();
        let scale = edges.iter().fold(1.0f64, |m, e| m.max(e.abs()));
        let symmetric = (0..n).all(|i| (edges[i] + edges[n - 1 - i]).abs() <= 1e-12 * scale);
        Ok(Self { edges, symmetric })
    }

    /// Mirror-symmetric partition with `n_bins` bins from its positive edges.
    /// Odd counts centre a bin on the origin; even counts use 0 as an edge.
    pub fn symmetric(positive_edges: &[f64], n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::Partition("at least two bins are required".into()));
        }
        if positive_edges.len() != Self::free_count(n_bins) {
            return Err(Error::Partition(format!(
                "{n_bins} symmetric bins need {} positive edges",
                Self::free_count(n_bins)
            )));
        }
        if positive_edges.iter().any(|&e| e <= 0.0) {
            return Err(Error::Partition("positive edges must be > 0".into()));
        }
        let mut edges: Vec<f64> = positive_edges.iter().rev().map(|e| -e).collect();
        if n_bins % 2 == 0 {
            edges.push(0.0);
        }
        edges.extend_from_slice(positive_edges);
        let mut p = Self::new(edges)?;
        p.symmetric = true;
        Ok(p)
    }

    /// Number of free (positive) edges of a symmetric partition.
    pub fn free_count(n_bins: usize) -> usize {
        (n_bins - 1) / 2
    }

    /// Symmetric partition whose bins have (nearly) equal probability under
    /// `m`: positive edges are the averaged magnitudes of mirrored quantiles.
    pub fn equal_probability(m: &Marginal1D, n_bins: usize) -> Result<Self> {
        let n = n_bins.max(2);
        let positive: Vec<f64> = (n / 2 + 1..n)
            .map(|k| {
                let p = k as f64 / n as f64;
                0.5 * (m.quantile(p).abs() + m.quantile(1.0 - p).abs())
            })
            .collect();
        Self::symmetric(&positive, n_bins)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Positive edges of a symmetric partition.
    pub fn positive_edges(&self) -> Vec<f64> {
        self.edges.iter().copied().filter(|&e| e > 0.0).collect()
    }

    /// Bounds of bin `k`.
    pub fn bin(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.edges[k - 1] };
        let hi = if k == self.edges.len() { f64::INFINITY } else { self.edges[k] };
        (lo, hi)
    }

    pub fn bins(&self) -> Vec<(f64, f64)> {
        (0..self.n_bins()).map(|k| self.bin(k)).collect()
    }

    /// Index of the bin containing `x` (bins are closed on the left).
    pub fn locate(&self, x: f64) -> usize {
        self.edges.partition_point(|&e| e <= x)
    }
}

/// Bob's conditional density given Alice's outcome fell in one bin.
#[derive(Debug, Clone)]
pub struct BinnedConditional {
    pub bin: (f64, f64),
    pub bin_prob: f64,
    /// Evaluation points of Bob's quadrature.
    pub grid: Vec<f64>,
    /// Normalized conditional density on `grid`.
    pub density: Vec<f64>,
    /// Exact conditional mean and variance.
    pub mean: f64,
    pub variance: f64,
}

/// Tabulation settings for binned conditionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Number of points (odd, for Simpson integration).
    pub points: usize,
    /// Half-width in standard deviations of Bob's marginal.
    pub sigmas: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: 2049, sigmas: 12.0 }
    }
}

fn alice_mode(partition: &ModePartition) -> Result<usize> {
    match partition.alice() {
        [a] => Ok(*a),
        a => Err(Error::Multimode { alice: a.len(), bob: partition.bob().len() }),
    }
}

fn joint_for(
    state: &GaussPolyState,
    partition: &ModePartition,
    phi: f64,
    e: &PhaseSpaceVector,
) -> Result<JointDensity2D> {
    let a = alice_mode(partition)?;
    if e.support().iter().any(|m| !partition.bob().contains(m)) {
        return domain("Bob's axis has components outside his modes");
    }
    let f = quadrature_axis(a, phi, state.mode_count())?;
    state.joint_2d(f.as_slice(), e.as_slice())
}

/// Probabilities of Alice's bins for her quadrature at angle `phi`.
pub fn bin_probabilities(
    state: &GaussPolyState,
    partition: &ModePartition,
    phi: f64,
    bins: &BinPartition,
) -> Result<Vec<f64>> {
    let a = alice_mode(partition)?;
    let f = quadrature_axis(a, phi, state.mode_count())?;
    let m = state.marginal_1d(f.as_slice())?;
    Ok(bins.bins().into_iter().map(|(lo, hi)| m.interval_mass(lo, hi)).collect())
}

fn bob_grid(joint: &JointDensity2D, spec: &GridSpec) -> (Vec<f64>, f64) {
    let bob = joint.second_marginal();
    let (mean, var) = bob.moments();
    let half = spec.sigmas * var.sqrt().max(bob.sigma());
    let n = spec.points.max(3) | 1;
    let step = 2.0 * half / (n - 1) as f64;
    ((0..n).map(|i| mean - half + step * i as f64).collect(), step)
}

/// Bob's conditional state for Alice's bin `[lo, hi)`.
pub fn binned_conditional(
    state: &GaussPolyState,
    partition: &ModePartition,
    phi: f64,
    e: &PhaseSpaceVector,
    bin: (f64, f64),
    spec: &GridSpec,
) -> Result<BinnedConditional> {
    let joint = joint_for(state, partition, phi, e)?;
    let [m0, m1, m2] = joint.band_moments(bin.0, bin.1);
    if !(m0 > MIN_BIN_PROB) {
        return Err(Error::DegenerateBin { lo: bin.0, hi: bin.1, prob: m0 });
    }
    let (grid, _) = bob_grid(&joint, spec);
    let density = grid.iter().map(|&q| joint.band_density(bin.0, bin.1, q).0 / m0).collect();
    let mean = m1 / m0;
    Ok(BinnedConditional { bin, bin_prob: m0, grid, density, mean, variance: m2 / m0 - mean * mean })
}

/// `Σ_k P_k·F[p_k]` over the bins, on a prepared grid.
fn fisher_on_grid(joint: &JointDensity2D, bins: &BinPartition, grid: &[f64], step: f64) -> Result<f64> {
    let mut total = 0.0;
    for (lo, hi) in bins.bins() {
        let mut prob_check = 0.0;
        let values: Vec<f64> = grid
            .iter()
            .map(|&q| {
                let (g, dg) = joint.band_density(lo, hi, q);
                prob_check += g;
                if g > 1e-300 {
                    dg * dg / g
                } else {
                    0.0
                }
            })
            .collect();
        if !(prob_check * step > MIN_BIN_PROB) {
            return Err(Error::DegenerateBin { lo, hi, prob: prob_check * step });
        }
        total += simpson(&values, step);
    }
    Ok(total)
}

fn entropy_on_grid(joint: &JointDensity2D, bins: &BinPartition, grid: &[f64], step: f64) -> Result<f64> {
    let mut total = 0.0;
    for (lo, hi) in bins.bins() {
        let prob = joint.band_moments(lo, hi)[0];
        if !(prob > MIN_BIN_PROB) {
            return Err(Error::DegenerateBin { lo, hi, prob });
        }
        let values: Vec<f64> = grid
            .iter()
            .map(|&q| {
                let g = joint.band_density(lo, hi, q).0;
                if g > 1e-300 {
                    -g * (g / prob).ln()
                } else {
                    0.0
                }
            })
            .collect();
        total += simpson(&values, step);
    }
    Ok(total)
}

fn variance_exact(joint: &JointDensity2D, bins: &BinPartition) -> Result<f64> {
    let mut total = 0.0;
    for (lo, hi) in bins.bins() {
        let [m0, m1, m2] = joint.band_moments(lo, hi);
        if !(m0 > MIN_BIN_PROB) {
            return Err(Error::DegenerateBin { lo, hi, prob: m0 });
        }
        total += m2 - m1 * m1 / m0;
    }
    Ok(total)
}

fn binned_term(joint: &JointDensity2D, bins: &BinPartition, term: Term, spec: &GridSpec) -> Result<f64> {
    match term {
        Term::Variance => variance_exact(joint, bins),
        Term::Fisher => {
            let (grid, step) = bob_grid(joint, spec);
            fisher_on_grid(joint, bins, &grid, step)
        }
        Term::Entropy => {
            let (grid, step) = bob_grid(joint, spec);
            entropy_on_grid(joint, bins, &grid, step)
        }
    }
}

/// Average Fisher information of Bob's `e`-quadrature over Alice's bins.
pub fn binned_fisher(
    state: &GaussPolyState,
    partition: &ModePartition,
    phi: f64,
    e: &PhaseSpaceVector,
    bins: &BinPartition,
) -> Result<f64> {
    binned_term(&joint_for(state, partition, phi, e)?, bins, Term::Fisher, &GridSpec::default())
}

/// Average variance of Bob's `axis` quadrature over Alice's bins.
pub fn binned_variance(
    state: &GaussPolyState,
    partition: &ModePartition,
    phi: f64,
    axis: &PhaseSpaceVector,
    bins: &BinPartition,
) -> Result<f64> {
    variance_exact(&joint_for(state, partition, phi, axis)?, bins)
}

/// Average Shannon entropy of Bob's `axis` quadrature over Alice's bins.
pub fn binned_entropy(
    state: &GaussPolyState,
    partition: &ModePartition,
    phi: f64,
    axis: &PhaseSpaceVector,
    bins: &BinPartition,
) -> Result<f64> {
    binned_term(&joint_for(state, partition, phi, axis)?, bins, Term::Entropy, &GridSpec::default())
}

/// Binned witness at fixed measurement settings: the first term uses Alice's
/// angle `phi_first` and Bob's axis at `bob_angle`, the second term Alice's
/// angle `phi_second` and Bob's axis at `bob_angle + π/2`.
#[allow(clippy::too_many_arguments)]
pub fn binned_witness_at(
    state: &GaussPolyState,
    partition: &ModePartition,
    kind: WitnessKind,
    direction: Direction,
    phi_first: f64,
    phi_second: f64,
    bob_angle: f64,
    bins: &BinPartition,
) -> Result<WitnessReport> {
    let roles = direction.apply(partition);
    let (alice, bob) = match (roles.alice(), roles.bob()) {
        ([a], [b]) if state.mode_count() == 2 => (*a, *b),
        (a, b) => return Err(Error::Multimode { alice: a.len(), bob: b.len() }),
    };
    let modes = state.mode_count();
    let term = |score: Score, phi: f64, theta: f64| -> Result<f64> {
        let f = quadrature_axis(alice, phi, modes)?;
        let e = quadrature_axis(bob, theta, modes)?;
        let joint = state.joint_2d(f.as_slice(), e.as_slice())?;
        binned_term(&joint, bins, score.base(), &GridSpec::default())
    };
    let obj = Objective::of(kind);
    let first = term(obj.first, phi_first, bob_angle)?;
    let second = term(obj.second, phi_second, bob_angle + FRAC_PI_2)?;
    let (first, _) = obj.first.finish(obj.first.score(first));
    let (second, _) = obj.second.finish(second);
    let mut report = WitnessReport::compose(kind, direction, first, second);
    report.alice_angle_fisher = wrap_angle(phi_first);
    report.alice_angle_var = wrap_angle(phi_second);
    report.bob_angle = wrap_angle(bob_angle);
    report.bin_edges = Some(crate::witness::BinEdges { first: bins.edges().to_vec(), second: bins.edges().to_vec() });
    Ok(report)
}

/// Settings of the binned witness optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedOptions {
    /// Coarse grid points on `[0, π)` for each angle.
    pub angle_grid: usize,
    pub angle_tol: f64,
    /// Nelder–Mead iteration cap and simplex tolerance for the edges.
    pub max_iter: usize,
    pub edge_tol: f64,
    /// Alternations of edge and angle optimization.
    pub rounds: usize,
    /// Local maxima of the coarse search refined independently.
    pub starts: usize,
    /// Use one partition for both terms instead of optimizing each term's
    /// partition separately.
    pub shared_edges: bool,
    pub grid: GridSpec,
}

impl Default for BinnedOptions {
    fn default() -> Self {
        Self {
            angle_grid: 16,
            angle_tol: 1e-4,
            max_iter: 200,
            edge_tol: 1e-4,
            rounds: 2,
            starts: 3,
            shared_edges: true,
            grid: GridSpec::default(),
        }
    }
}

/// Positive edges from unconstrained coordinates: log-gaps keep them
/// positive and increasing.
fn edges_from_params(y: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    y.iter()
        .map(|v| {
            acc += v.clamp(-30.0, 5.0).exp();
            acc
        })
        .collect()
}

fn params_from_edges(edges: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    edges
        .iter()
        .map(|&e| {
            let gap = (e - prev).max(1e-12);
            prev = e;
            gap.ln()
        })
        .collect()
}

struct BinnedProblem<'a> {
    state: &'a GaussPolyState,
    alice: usize,
    bob: usize,
    n_bins: usize,
    opts: &'a BinnedOptions,
}

impl BinnedProblem<'_> {
    fn joint(&self, phi: f64, bob_angle: f64) -> Result<JointDensity2D> {
        let modes = self.state.mode_count();
        let f = quadrature_axis(self.alice, phi, modes)?;
        let e = quadrature_axis(self.bob, bob_angle, modes)?;
        self.state.joint_2d(f.as_slice(), e.as_slice())
    }

    fn equal_probability(&self, phi: f64) -> Result<BinPartition> {
        let modes = self.state.mode_count();
        let f = quadrature_axis(self.alice, phi, modes)?;
        BinPartition::equal_probability(&self.state.marginal_1d(f.as_slice())?, self.n_bins)
    }

    /// Starting partitions spanning the spread of Alice's marginals: the
    /// equal-probability partition of her narrowest marginal, rescaled.
    fn candidate_edges(&self, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
        if BinPartition::free_count(self.n_bins) == 0 {
            return Ok(vec![Vec::new()]);
        }
        let modes = self.state.mode_count();
        let mut spreads = Vec::with_capacity(grid.len());
        for &phi in grid {
            let f = quadrature_axis(self.alice, phi, modes)?;
            spreads.push(self.state.marginal_1d(f.as_slice())?.moments().1.sqrt());
        }
        let (i_min, s_min) =
            spreads.iter().copied().enumerate().fold((0, f64::INFINITY), |a, (i, s)| if s < a.1 { (i, s) } else { a });
        let s_max = spreads.iter().copied().fold(0.0, f64::max);
        let base = self.equal_probability(grid[i_min])?.positive_edges();
        let ratio = s_max / s_min;
        let mut scales = vec![0.6, 1.0];
        for s in [ratio.sqrt(), ratio] {
            if s > 1.2 * scales[scales.len() - 1] {
                scales.push(s);
            }
        }
        Ok(scales.into_iter().map(|s| base.iter().map(|e| e * s).collect()).collect())
    }

    /// Best grid angles and candidate partitions for Bob's angle `theta`.
    fn coarse_setting(&self, obj: Objective, theta: f64, grid: &[f64], candidates: &[Vec<f64>]) -> Setting {
        let scan = |edges: &[f64]| {
            let mut f = (grid[0], f64::NEG_INFINITY);
            let mut g = (grid[0], f64::INFINITY);
            for &phi in grid {
                let vf = self.score(obj.first, phi, theta, edges, true);
                if vf > f.1 {
                    f = (phi, vf);
                }
                let vg = self.score(obj.second, phi, theta + FRAC_PI_2, edges, false);
                if vg < g.1 {
                    g = (phi, vg);
                }
            }
            (f, g)
        };
        let scans: Vec<_> = candidates.iter().map(|c| scan(c)).collect();
        let pick = |first: usize, second: usize| Setting {
            theta,
            phi_first: scans[first].0 .0,
            phi_second: scans[second].1 .0,
            edges_first: candidates[first].clone(),
            edges_second: candidates[second].clone(),
        };
        if self.opts.shared_edges {
            let value = |k: usize| obj.value(scans[k].0 .1, scans[k].1 .1);
            let k = (0..scans.len()).max_by(|&a, &b| value(a).total_cmp(&value(b))).unwrap_or(0);
            pick(k, k)
        } else {
            let kf = (0..scans.len()).max_by(|&a, &b| scans[a].0 .1.total_cmp(&scans[b].0 .1)).unwrap_or(0);
            let kg = (0..scans.len()).min_by(|&a, &b| scans[a].1 .1.total_cmp(&scans[b].1 .1)).unwrap_or(0);
            pick(kf, kg)
        }
    }

    /// Difference of the two scores at a setting.
    fn raw(&self, obj: Objective, s: &Setting) -> f64 {
        obj.value(
            self.score(obj.first, s.phi_first, s.theta, &s.edges_first, true),
            self.score(obj.second, s.phi_second, s.theta + FRAC_PI_2, &s.edges_second, false),
        )
    }

    /// Score to maximize (first) or minimize (second); failures rank last.
    fn score(&self, s: Score, phi: f64, bob_angle: f64, positive_edges: &[f64], maximize: bool) -> f64 {
        let worst = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
        let Ok(bins) = BinPartition::symmetric(positive_edges, self.n_bins) else {
            return worst;
        };
        match self.joint(phi, bob_angle).and_then(|j| binned_term(&j, &bins, s.base(), &self.opts.grid)) {
            Ok(v) if v.is_finite() => s.score(v),
            _ => worst,
        }
    }
}

#[derive(Debug, Clone)]
struct Setting {
    theta: f64,
    phi_first: f64,
    phi_second: f64,
    edges_first: Vec<f64>,
    edges_second: Vec<f64>,
}

/// Witness with Alice's outcomes coarse-grained into `n_bins` symmetric bins,
/// optimized over the measurement angles and the bin edges.
pub fn binned_witness(
    state: &GaussPolyState,
    partition: &ModePartition,
    n_bins: usize,
    kind: WitnessKind,
    direction: Direction,
    opts: &BinnedOptions,
) -> Result<WitnessReport> {
    if n_bins < 2 {
        return Err(Error::Partition("at least two bins are required".into()));
    }
    let roles = direction.apply(partition);
    let (alice, bob) = match (roles.alice(), roles.bob()) {
        ([a], [b]) if state.mode_count() == 2 => (*a, *b),
        (a, b) => return Err(Error::Multimode { alice: a.len(), bob: b.len() }),
    };
    let problem = BinnedProblem { state, alice, bob, n_bins, opts };
    problem.joint(0.0, 0.0)?;
    let obj = Objective::of(kind);

    let grid = angle_grid(opts.angle_grid.max(4));
    let step = grid[1] - grid[0];
    let candidates = problem.candidate_edges(&grid)?;

    // Coarse search: for each θ, the best grid angles and candidate partitions.
    let coarse: Vec<Setting> =
        grid.par_iter().map(|&theta| problem.coarse_setting(obj, theta, &grid, &candidates)).collect();
    let raw: Vec<f64> = coarse.iter().map(|s| problem.raw(obj, s)).collect();
    let n = raw.len();
    let mut starts: Vec<usize> = (0..n)
        .filter(|&i| raw[i] >= raw[(i + n - 1) % n] && raw[i] >= raw[(i + 1) % n] && raw[i].is_finite())
        .collect();
    starts.sort_by(|&i, &j| raw[j].total_cmp(&raw[i]));
    starts.truncate(opts.starts.max(1));
    if starts.is_empty() {
        return domain("binned witness is not finite at any coarse setting");
    }

    let mut best: Option<(Setting, f64)> = None;
    for i in starts {
        let refined = refine_setting(&problem, obj, coarse[i].clone(), step, opts);
        let value = problem.raw(obj, &refined);
        if best.as_ref().map_or(true, |b| value > b.1) {
            best = Some((refined, value));
        }
    }
    let (setting, _) = best.expect("at least one start");
    let first_at = |s: &Setting, phi: f64, theta: f64| problem.score(obj.first, phi, theta, &s.edges_first, true);
    let second_at =
        |s: &Setting, phi: f64, theta: f64| problem.score(obj.second, phi, theta + FRAC_PI_2, &s.edges_second, false);

    let first_score = first_at(&setting, setting.phi_first, setting.theta);
    let second_score = second_at(&setting, setting.phi_second, setting.theta);
    if !first_score.is_finite() || !second_score.is_finite() {
        return domain("binned witness evaluation failed at the optimum");
    }
    let (first, _) = obj.first.finish(first_score);
    let (second, _) = obj.second.finish(obj.second.sign() * second_score);
    let mut report = WitnessReport::compose(kind, direction, first, second);
    report.alice_angle_fisher = wrap_angle(setting.phi_first);
    report.alice_angle_var = wrap_angle(setting.phi_second);
    report.bob_angle = wrap_angle(setting.theta);
    let first_bins = BinPartition::symmetric(&setting.edges_first, n_bins)?;
    let second_bins = BinPartition::symmetric(&setting.edges_second, n_bins)?;
    report.bin_edges =
        Some(crate::witness::BinEdges { first: first_bins.edges().to_vec(), second: second_bins.edges().to_vec() });
    Ok(report)
}

fn refine_setting(
    problem: &BinnedProblem<'_>,
    obj: Objective,
    mut setting: Setting,
    step: f64,
    opts: &BinnedOptions,
) -> Setting {
    let first_at = |s: &Setting, phi: f64, theta: f64| problem.score(obj.first, phi, theta, &s.edges_first, true);
    let second_at =
        |s: &Setting, phi: f64, theta: f64| problem.score(obj.second, phi, theta + FRAC_PI_2, &s.edges_second, false);
    for round in 0..opts.rounds.max(1) {
        optimize_edges(problem, obj, &mut setting, opts);
        let span = if round == 0 { step } else { step / 2.0 };
        // best Alice angles for a given θ, edges held fixed
        let inner = |s: &Setting, theta: f64| {
            let (pf, vf) = refine_angle(
                |phi| first_at(s, phi, theta),
                s.phi_first,
                first_at(s, s.phi_first, theta),
                span,
                opts.angle_tol,
            );
            let (pg, vg) = refine_angle(
                |phi| -second_at(s, phi, theta),
                s.phi_second,
                -second_at(s, s.phi_second, theta),
                span,
                opts.angle_tol,
            );
            (pf, vf, pg, -vg)
        };
        let current = inner(&setting, setting.theta);
        let (theta, _) = refine_angle(
            |theta| {
                let (_, vf, _, vg) = inner(&setting, theta);
                obj.value(vf, vg)
            },
            setting.theta,
            obj.value(current.1, current.3),
            span,
            opts.angle_tol,
        );
        let (pf, _, pg, _) = inner(&setting, theta);
        setting.theta = theta;
        setting.phi_first = pf;
        setting.phi_second = pg;
    }
    optimize_edges(problem, obj, &mut setting, opts);
    setting
}

fn optimize_edges(problem: &BinnedProblem<'_>, obj: Objective, setting: &mut Setting, opts: &BinnedOptions) {
    if BinPartition::free_count(problem.n_bins) == 0 {
        return;
    }
    let (theta, pf, pg) = (setting.theta, setting.phi_first, setting.phi_second);
    if opts.shared_edges {
        let objective = |y: &[f64]| {
            let e = edges_from_params(y);
            -obj.value(
                problem.score(obj.first, pf, theta, &e, true),
                problem.score(obj.second, pg, theta + FRAC_PI_2, &e, false),
            )
        };
        let best = nelder_mead(objective, &params_from_edges(&setting.edges_first), 0.3, opts.max_iter, opts.edge_tol);
        setting.edges_first = edges_from_params(&best.x);
        setting.edges_second = setting.edges_first.clone();
    } else {
        let f = |y: &[f64]| -problem.score(obj.first, pf, theta, &edges_from_params(y), true);
        let best = nelder_mead(f, &params_from_edges(&setting.edges_first), 0.3, opts.max_iter, opts.edge_tol);
        setting.edges_first = edges_from_params(&best.x);
        let g = |y: &[f64]| problem.score(obj.second, pg, theta + FRAC_PI_2, &edges_from_params(y), false);
        let best = nelder_mead(g, &params_from_edges(&setting.edges_second), 0.3, opts.max_iter, opts.edge_tol);
        setting.edges_second = edges_from_params(&best.x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_cdf;
    use crate::phase_space::CovarianceMatrix;
    use crate::states::StateSpec;
    use crate::witness::{conditional_fisher, conditional_variance};
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn partition_invariants() {
        assert!(BinPartition::new(vec![]).is_err());
        assert!(BinPartition::new(vec![1.0, 0.5]).is_err());
        assert!(BinPartition::new(vec![0.0, f64::INFINITY]).is_err());
        let p = BinPartition::symmetric(&[0.5, 2.0], 5).unwrap();
        assert_eq!(p.edges(), &[-2.0, -0.5, 0.5, 2.0]);
        assert!(p.is_symmetric());
        assert_eq!(p.locate(-3.0), 0);
        assert_eq!(p.locate(0.5), 3);
        assert_eq!(p.locate(10.0), 4);
        let p = BinPartition::symmetric(&[1.0], 4).unwrap();
        assert_eq!(p.edges(), &[-1.0, 0.0, 1.0]);
        assert!(!BinPartition::new(vec![-1.0, 0.0, 2.0]).unwrap().is_symmetric());
    }

    #[test]
    fn vacuum_bin_probabilities() {
        let vac = GaussPolyState::gaussian(&CovarianceMatrix::vacuum(2)).unwrap();
        let p = ModePartition::two_mode(0);
        let half = bin_probabilities(&vac, &p, 0.3, &BinPartition::new(vec![0.0]).unwrap()).unwrap();
        assert!((half[0] - 0.5).abs() < 1e-15 && (half[1] - 0.5).abs() < 1e-15);
        let three = bin_probabilities(&vac, &p, 0.0, &BinPartition::new(vec![-1.0, 1.0]).unwrap()).unwrap();
        let expected = [norm_cdf(-1.0), norm_cdf(1.0) - norm_cdf(-1.0), 1.0 - norm_cdf(1.0)];
        for (a, b) in three.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((three[1] - 0.68269).abs() < 1e-5);
    }

    #[test]
    fn equal_probability_partition() {
        let m = Marginal1D::gaussian(0.0, 2.0);
        for n in [2, 3, 4, 5, 7, 13] {
            let b = BinPartition::equal_probability(&m, n).unwrap();
            assert_eq!(b.n_bins(), n);
            for (lo, hi) in b.bins() {
                assert!((m.interval_mass(lo, hi) - 1.0 / n as f64).abs() < 1e-10, "n={n}");
            }
        }
    }

    #[test]
    fn narrow_bin_matches_continuum_conditional() {
        let w = StateSpec::photon_subtracted(4.0, 4.0, FRAC_PI_4, 0.0).build().unwrap();
        let p = ModePartition::two_mode(0);
        let e = quadrature_axis(1, 0.0, 2).unwrap();
        let c = binned_conditional(&w, &p, 0.0, &e, (-0.005, 0.005), &GridSpec::default()).unwrap();
        let joint = w.joint_2d(quadrature_axis(0, 0.0, 2).unwrap().as_slice(), e.as_slice()).unwrap();
        let (m, _) = joint.conditional(0.0);
        let sup = c.grid.iter().zip(&c.density).map(|(&q, &d)| (d - m.density(q)).abs()).fold(0.0, f64::max);
        assert!(sup < 1e-3, "sup-norm {sup}");
    }

    #[test]
    fn single_bin_limits() {
        let w = StateSpec::photon_subtracted(3.0, 3.0, 0.0, 0.1).build().unwrap();
        let p = ModePartition::two_mode(0);
        let e = quadrature_axis(1, 0.4, 2).unwrap();
        let joint = w.joint_2d(quadrature_axis(0, 0.2, 2).unwrap().as_slice(), e.as_slice()).unwrap();
        let c = binned_conditional(&w, &p, 0.2, &e, (f64::NEG_INFINITY, f64::INFINITY), &GridSpec::default()).unwrap();
        let bob = joint.second_marginal();
        for (q, d) in c.grid.iter().zip(&c.density) {
            assert!((d - bob.density(*q)).abs() < 1e-8);
        }
        let (_, var) = bob.moments();
        assert!((c.variance - var).abs() < 1e-12);
    }

    #[test]
    fn convexity_and_total_variance() {
        let w = StateSpec::photon_subtracted(4.0, 4.0, FRAC_PI_4, 0.0).build().unwrap();
        let p = ModePartition::two_mode(0);
        let qb = quadrature_axis(1, 0.0, 2).unwrap();
        let pb = quadrature_axis(1, FRAC_PI_2, 2).unwrap();
        let cf = conditional_fisher(&w, &p, &qb, 0.0).unwrap();
        let cv = conditional_variance(&w, &p, &pb, FRAC_PI_2).unwrap();
        for edges in [vec![0.0], vec![-1.0, 1.0], vec![-2.0, -0.3, 0.3, 2.0], vec![-0.1, 0.5, 3.0]] {
            let b = BinPartition::new(edges).unwrap();
            assert!(binned_fisher(&w, &p, 0.0, &qb, &b).unwrap() <= cf + 1e-6);
            assert!(binned_variance(&w, &p, FRAC_PI_2, &pb, &b).unwrap() >= cv - 1e-6);
        }
        let alice = w.marginal_1d(quadrature_axis(0, 0.0, 2).unwrap().as_slice()).unwrap();
        let fine = BinPartition::equal_probability(&alice, 64).unwrap();
        let bf = binned_fisher(&w, &p, 0.0, &qb, &fine).unwrap();
        assert!((bf - cf).abs() / cf < 0.02, "{bf} vs {cf}");
        let bv = binned_variance(&w, &p, FRAC_PI_2, &pb, &fine).unwrap();
        assert!((bv - cv).abs() / cv < 0.02);
    }
}
