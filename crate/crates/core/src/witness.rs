//! Homodyne steering witnesses evaluated on exact conditional densities.
//!
//! Alice measures a quadrature at angle `φ` and Bob's conditional states are
//! probed along a unit axis `e` of his mode and its conjugate `Ωe`. Three
//! witnesses are available:
//!
//! | kind | first term | second term |
//! |------|------------|-------------|
//! | metrological | `max_φ F_e` | `min_φ Var_Ωe` |
//! | Reid | `1 / min_φ Var_e` | `min_φ Var_Ωe` |
//! | entropic | `2π·exp(1 − 2 min_φ h_e)` | `exp(2 min_φ h_Ωe − 1) / 2π` |
//!
//! Each witness is `max_e [first − second]⁺`, where the conditional
//! quantities are averaged over Alice's outcome distribution.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::gauss_poly::{GaussPolyState, JointDensity2D, Marginal1D, MeasurementBasis, ScalarSlicer};
use crate::numerics::{golden_max, integrate_pieces, norm_pdf, Integral};
use crate::phase_space::{quadrature_axis, ModePartition, PhaseSpaceVector};

/// Which steering witness to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WitnessKind {
    Metrological,
    Reid,
    Entropic,
}

impl WitnessKind {
    pub const ALL: [WitnessKind; 3] = [WitnessKind::Metrological, WitnessKind::Reid, WitnessKind::Entropic];

    pub fn name(self) -> &'static str {
        match self {
            WitnessKind::Metrological => "metrological",
            WitnessKind::Reid => "reid",
            WitnessKind::Entropic => "entropic",
        }
    }
}

impl fmt::Display for WitnessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for WitnessKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "metrological" | "metro" | "fisher" => Ok(WitnessKind::Metrological),
            "reid" => Ok(WitnessKind::Reid),
            "entropic" | "entropy" => Ok(WitnessKind::Entropic),
            other => domain(format!("unknown witness kind '{other}'")),
        }
    }
}

/// Steering direction relative to a [`ModePartition`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Alice's measurements steer Bob.
    AliceToBob,
    /// Roles exchanged: Bob's measurements steer Alice.
    BobToAlice,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::AliceToBob => "A->B",
            Direction::BobToAlice => "B->A",
        }
    }

    pub fn apply(self, partition: &ModePartition) -> ModePartition {
        match self {
            Direction::AliceToBob => partition.clone(),
            Direction::BobToAlice => partition.swapped(),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(' ', "").as_str() {
            "A->B" | "AB" | "A2B" | "ATOB" => Ok(Direction::AliceToBob),
            "B->A" | "BA" | "B2A" | "BTOA" => Ok(Direction::BobToAlice),
            other => domain(format!("unknown direction '{other}'")),
        }
    }
}

/// Outcome of a witness evaluation.
///
/// `fisher_term` and `variance_term` hold the first and second terms of the
/// witness (see the module table); for Reid and entropic witnesses they are
/// the variance- and entropy-based analogues.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessReport {
    pub kind: WitnessKind,
    pub direction: Direction,
    /// `max(0, raw)`.
    pub value: f64,
    /// Signed difference `fisher_term − variance_term`.
    pub raw: f64,
    pub fisher_term: f64,
    pub variance_term: f64,
    /// Steering party's angle optimizing the first term (NaN for fixed bases).
    pub alice_angle_fisher: f64,
    /// Steering party's angle optimizing the second term (NaN for fixed bases).
    pub alice_angle_var: f64,
    /// Angle of `e` on the steered mode (NaN for fixed bases).
    pub bob_angle: f64,
    /// Estimated absolute quadrature error of `raw`.
    pub quadrature_error: f64,
    /// Statistical standard error, for Monte Carlo or data-based estimates.
    pub std_err: Option<f64>,
    /// Standard errors of the first and second terms separately.
    pub term_std_err: Option<[f64; 2]>,
    /// Optimized interior bin edges, for binned witnesses.
    pub bin_edges: Option<BinEdges>,
}

/// Interior bin edges used for each witness term.
#[derive(Debug, Clone, PartialEq)]
pub struct BinEdges {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl WitnessReport {
    pub(crate) fn compose(kind: WitnessKind, direction: Direction, first: f64, second: f64) -> Self {
        let raw = first - second;
        Self {
            kind,
            direction,
            value: raw.max(0.0),
            raw,
            fisher_term: first,
            variance_term: second,
            alice_angle_fisher: f64::NAN,
            alice_angle_var: f64::NAN,
            bob_angle: f64::NAN,
            quadrature_error: 0.0,
            std_err: None,
            term_std_err: None,
            bin_edges: None,
        }
    }
}

/// Numerical settings of the optimized witness driver.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessOptions {
    /// Coarse grid points on `[0, π)` for each angle.
    pub grid: usize,
    /// Golden-section tolerance in radians.
    pub angle_tol: f64,
    /// Absolute tolerance of the integral over Alice's outcome.
    pub outer_abs_tol: f64,
    /// Half-width of the outer integration range in standard deviations.
    pub outer_sigmas: f64,
}

impl Default for WitnessOptions {
    fn default() -> Self {
        Self { grid: 16, angle_tol: 1e-4, outer_abs_tol: 1e-8, outer_sigmas: 8.0 }
    }
}

const INNER_SIGMAS: f64 = 12.0;

fn check_normalized(m: &Marginal1D) -> Result<()> {
    if !m.is_normalized() {
        return domain(format!("marginal is not normalized (mass {})", m.mass()));
    }
    Ok(())
}

/// Breakpoints on `[−12σ, 12σ]` (in `t = q − μ`) around a near-root of the
/// polynomial factor, where integrands vary on the scale of the root gap.
fn inner_breaks(m: &Marginal1D) -> Vec<f64> {
    let s = m.sigma();
    let (lo, hi) = (-INNER_SIGMAS * s, INNER_SIGMAS * s);
    let mut breaks = vec![lo, hi];
    if m.a2 > 0.0 {
        let t_star = -m.a1 / (2.0 * m.a2);
        let gap = (m.a0 - m.a1 * m.a1 / (4.0 * m.a2)).max(0.0);
        let w = (gap / m.a2).sqrt();
        for t in [t_star, t_star - w, t_star + w, t_star - 10.0 * w, t_star + 10.0 * w] {
            if t > lo && t < hi {
                breaks.push(t);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    breaks
}

fn fisher_raw(m: &Marginal1D) -> f64 {
    let m = m.normalized();
    let s2 = m.sigma2;
    let base = 3.0 * m.a2 + m.a0 / s2;
    if m.a2 <= 0.0 {
        return base;
    }
    // p'²/p = [P'²/P − 2tP'/σ² + t²P/σ⁴]·φ_σ and P'²/P = 4a2·(1 − gap/P)
    let t_star = -m.a1 / (2.0 * m.a2);
    let gap = m.a0 - m.a1 * m.a1 / (4.0 * m.a2);
    if gap <= 0.0 {
        return base;
    }
    let s = s2.sqrt();
    let lorentz = integrate_pieces(
        |t| {
            let d = t - t_star;
            norm_pdf(t / s) / s * gap / (m.a2 * d * d + gap)
        },
        &inner_breaks(&m),
        1e-14,
        1e-12,
    );
    base - 4.0 * m.a2 * lorentz.value
}

fn entropy_raw(m: &Marginal1D) -> f64 {
    let m = m.normalized();
    let s2 = m.sigma2;
    let s = s2.sqrt();
    let gauss_part = 0.5 * (2.0 * PI * s2).ln() + (3.0 * m.a2 * s2 * s2 + m.a0 * s2) / (2.0 * s2);
    if m.a2 == 0.0 && m.a1 == 0.0 {
        return gauss_part - m.a0.ln();
    }
    let plogp = integrate_pieces(
        |t| {
            let p = m.poly(t);
            if p < 1e-300 {
                0.0
            } else {
                p * p.ln() * norm_pdf(t / s) / s
            }
        },
        &inner_breaks(&m),
        1e-14,
        1e-12,
    );
    gauss_part - plogp.value
}

/// Fisher information of the shift family `p(q − ξ)`, `∫ p′²/p dq`.
///
/// Evaluated in closed form up to a single smooth one-dimensional integral
/// that resolves the neighbourhood of a (near) double root.
pub fn fisher_information_shift(m: &Marginal1D) -> Result<f64> {
    check_normalized(m)?;
    if !m.is_nonnegative() {
        return domain("marginal density is negative somewhere");
    }
    Ok(fisher_raw(m))
}

/// Differential Shannon entropy `−∫ p ln p dq` in nats.
pub fn shannon_entropy(m: &Marginal1D) -> Result<f64> {
    check_normalized(m)?;
    Ok(entropy_raw(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Term {
    Fisher,
    Variance,
    Entropy,
}

impl Term {
    fn eval(self, m: &Marginal1D) -> f64 {
        match self {
            Term::Fisher => fisher_raw(m),
            Term::Variance => m.moments().1,
            Term::Entropy => entropy_raw(m),
        }
    }
}

/// `∫ p_A(x₀)·term(p_B(·|x₀)) dx₀` over Alice's outcome.
fn alice_average(joint: &JointDensity2D, term: Term, opts: &WitnessOptions) -> Integral {
    let alice = joint.first_marginal();
    let (mean, var) = alice.moments();
    let half = opts.outer_sigmas * var.sqrt().max(alice.sigma());
    let (lo, hi) = (mean - half, mean + half);
    let mut breaks = vec![lo, hi];
    let mu0 = joint.state().mean()[0];
    if let Some(u) = joint.slicer().double_root_offset() {
        if mu0 + u > lo && mu0 + u < hi {
            breaks.push(mu0 + u);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let slicer: &ScalarSlicer = joint.slicer();
    integrate_pieces(
        |x0| {
            let (m, density) = slicer.at(&[x0]);
            if density < 1e-300 {
                0.0
            } else {
                density * term.eval(&m)
            }
        },
        &breaks,
        opts.outer_abs_tol,
        1e-10,
    )
}

fn single_alice_mode(partition: &ModePartition) -> Result<usize> {
    match (partition.alice(), partition.bob()) {
        ([a], _) => Ok(*a),
        (alice, bob) => Err(Error::Multimode { alice: alice.len(), bob: bob.len() }),
    }
}

fn check_bob_axis(axis: &PhaseSpaceVector, partition: &ModePartition, dim: usize) -> Result<()> {
    if axis.as_slice().len() != dim {
        return domain("axis dimension mismatch");
    }
    if (axis.norm() - 1.0).abs() > 1e-9 {
        return domain("axis must be a unit vector");
    }
    if axis.support().iter().any(|m| !partition.bob().contains(m)) {
        return domain("axis has components outside Bob's modes");
    }
    Ok(())
}

fn conditional_term(
    state: &GaussPolyState,
    partition: &ModePartition,
    axis: &PhaseSpaceVector,
    phi: f64,
    term: Term,
) -> Result<Integral> {
    let alice = single_alice_mode(partition)?;
    check_bob_axis(axis, partition, state.dim())?;
    let f = quadrature_axis(alice, phi, state.mode_count())?;
    let joint = state.joint_2d(f.as_slice(), axis.as_slice())?;
    Ok(alice_average(&joint, term, &WitnessOptions::default()))
}

/// Average Fisher information of Bob's `e`-quadrature conditioned on Alice's
/// outcome at angle `phi`.
pub fn conditional_fisher(
    state: &GaussPolyState,
    partition: &ModePartition,
    e: &PhaseSpaceVector,
    phi: f64,
) -> Result<f64> {
    Ok(conditional_term(state, partition, e, phi, Term::Fisher)?.value)
}

/// Average variance of Bob's `axis` quadrature conditioned on Alice's outcome
/// at angle `phi`.
pub fn conditional_variance(
    state: &GaussPolyState,
    partition: &ModePartition,
    axis: &PhaseSpaceVector,
    phi: f64,
) -> Result<f64> {
    Ok(conditional_term(state, partition, axis, phi, Term::Variance)?.value)
}

/// Average Shannon entropy of Bob's `axis` quadrature conditioned on
/// Alice's outcome at angle `phi`.
pub fn conditional_entropy(
    state: &GaussPolyState,
    partition: &ModePartition,
    axis: &PhaseSpaceVector,
    phi: f64,
) -> Result<f64> {
    Ok(conditional_term(state, partition, axis, phi, Term::Entropy)?.value)
}

/// The pieces of a witness as functions to maximize (first) and minimize
/// (second), and the maps turning the optimal values into witness terms.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Objective {
    pub first: Score,
    pub second: Score,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Score {
    Fisher,
    NegVariance,
    NegEntropy,
    Variance,
    Entropy,
}

impl Objective {
    pub(crate) fn of(kind: WitnessKind) -> Self {
        match kind {
            WitnessKind::Metrological => Self { first: Score::Fisher, second: Score::Variance },
            WitnessKind::Reid => Self { first: Score::NegVariance, second: Score::Variance },
            WitnessKind::Entropic => Self { first: Score::NegEntropy, second: Score::Entropy },
        }
    }

    /// Signed witness value from the two optimal scores.
    pub(crate) fn value(self, first_score: f64, second_score: f64) -> f64 {
        if !(first_score.is_finite() && second_score.is_finite()) {
            return f64::NEG_INFINITY;
        }
        self.first.finish(first_score).0 - self.second.finish(self.second.sign() * second_score).0
    }
}

impl Score {
    pub(crate) fn base(self) -> Term {
        match self {
            Score::Fisher => Term::Fisher,
            Score::NegVariance | Score::Variance => Term::Variance,
            Score::NegEntropy | Score::Entropy => Term::Entropy,
        }
    }

    pub(crate) fn sign(self) -> f64 {
        match self {
            Score::NegVariance | Score::NegEntropy => -1.0,
            _ => 1.0,
        }
    }

    /// Score from a raw conditional quantity (first terms are maximized,
    /// second terms minimized).
    pub(crate) fn score(self, raw: f64) -> f64 {
        self.sign() * raw
    }

    /// Witness term from an optimal score, and its derivative.
    pub(crate) fn finish(self, score: f64) -> (f64, f64) {
        match self {
            Score::Fisher | Score::Variance => (score, 1.0),
            Score::NegVariance => (-1.0 / score, 1.0 / (score * score)),
            Score::NegEntropy => {
                let v = 2.0 * PI * (1.0 + 2.0 * score).exp();
                (v, 2.0 * v)
            }
            Score::Entropy => {
                let v = (2.0 * score - 1.0).exp() / (2.0 * PI);
                (v, 2.0 * v)
            }
        }
    }
}

pub(crate) fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| PI * i as f64 / n as f64).collect()
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    a.rem_euclid(PI)
}

/// Golden-section refinement within `±step` of a grid optimum, keeping the
/// grid point if refinement does not improve on it.
pub(crate) fn refine_angle<F: FnMut(f64) -> f64>(
    mut f: F,
    center: f64,
    center_value: f64,
    step: f64,
    tol: f64,
) -> (f64, f64) {
    let (a, v) = golden_max(&mut f, center - step, center + step, tol);
    if v >= center_value {
        (wrap_angle(a), v)
    } else {
        (wrap_angle(center), center_value)
    }
}

struct TwoModeProblem<'a> {
    state: &'a GaussPolyState,
    alice: usize,
    bob: usize,
    opts: &'a WitnessOptions,
}

impl TwoModeProblem<'_> {
    fn joint(&self, phi: f64, bob_angle: f64) -> Result<JointDensity2D> {
        let modes = self.state.mode_count();
        let f = quadrature_axis(self.alice, phi, modes)?;
        let e = quadrature_axis(self.bob, bob_angle, modes)?;
        self.state.joint_2d(f.as_slice(), e.as_slice())
    }

    /// Score of `term` with Alice at `phi` and Bob's axis at `bob_angle`,
    /// with the outer quadrature error.
    fn score(&self, term: Score, phi: f64, bob_angle: f64) -> (f64, f64) {
        match self.joint(phi, bob_angle) {
            Ok(joint) => {
                let r = alice_average(&joint, term.base(), self.opts);
                (term.score(r.value), r.error)
            }
            Err(_) => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// Optimizes a witness over Bob's axis and, independently for each term,
/// Alice's angle. `first(φ, θ)` and `second(φ, θ)` return scores to maximize
/// and minimize respectively, with error estimates; `second` is evaluated at
/// the conjugate axis angle `θ + π/2`.
pub(crate) fn optimize_angles<F, G>(obj: Objective, first: F, second: G, opts: &WitnessOptions) -> AngleOptimum
where
    F: Fn(f64, f64) -> (f64, f64) + Sync,
    G: Fn(f64, f64) -> (f64, f64) + Sync,
{
    let n = opts.grid.max(4);
    let grid = angle_grid(n);
    let step = PI / n as f64;
    let coarse: Vec<(usize, f64, usize, f64)> = grid
        .par_iter()
        .map(|&theta| {
            let mut best_f = (0, f64::NEG_INFINITY);
            let mut best_g = (0, f64::INFINITY);
            for (j, &phi) in grid.iter().enumerate() {
                let vf = first(phi, theta).0;
                if vf > best_f.1 {
                    best_f = (j, vf);
                }
                let vg = second(phi, theta + FRAC_PI_2).0;
                if vg < best_g.1 {
                    best_g = (j, vg);
                }
            }
            (best_f.0, best_f.1, best_g.0, best_g.1)
        })
        .collect();
    let (i_best, _) = coarse.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, c)| {
        let v = obj.value(c.1, c.3);
        if v > acc.1 {
            (i, v)
        } else {
            acc
        }
    });
    let (jf, vf, jg, vg) = coarse[i_best];
    let phi_f0 = grid[jf];
    let phi_g0 = grid[jg];
    let inner = |theta: f64| -> (f64, f64, f64, f64) {
        let (pf, sf) =
            refine_angle(|phi| first(phi, theta).0, phi_f0, first(phi_f0, theta).0, 2.0 * step, opts.angle_tol);
        let (pg, sg) = refine_angle(
            |phi| -second(phi, theta + FRAC_PI_2).0,
            phi_g0,
            -second(phi_g0, theta + FRAC_PI_2).0,
            2.0 * step,
            opts.angle_tol,
        );
        (pf, sf, pg, -sg)
    };
    let theta0 = grid[i_best];
    let (theta, _) = refine_angle(
        |theta| {
            let (_, sf, _, sg) = inner(theta);
            obj.value(sf, sg)
        },
        theta0,
        obj.value(vf, vg),
        step,
        opts.angle_tol,
    );
    let (phi_f, _, phi_g, _) = inner(theta);
    let (first_score, first_err) = first(phi_f, theta);
    let (second_score, second_err) = second(phi_g, theta + FRAC_PI_2);
    AngleOptimum { theta, phi_first: phi_f, phi_second: phi_g, first_score, second_score, first_err, second_err }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AngleOptimum {
    pub theta: f64,
    pub phi_first: f64,
    pub phi_second: f64,
    pub first_score: f64,
    pub second_score: f64,
    pub first_err: f64,
    pub second_err: f64,
}

impl AngleOptimum {
    pub(crate) fn into_report(self, kind: WitnessKind, direction: Direction) -> WitnessReport {
        let obj = Objective::of(kind);
        let (first, d_first) = obj.first.finish(self.first_score);
        let (second, d_second) = obj.second.finish(obj.second.sign() * self.second_score);
        let mut report = WitnessReport::compose(kind, direction, first, second);
        report.alice_angle_fisher = wrap_angle(self.phi_first);
        report.alice_angle_var = wrap_angle(self.phi_second);
        report.bob_angle = wrap_angle(self.theta);
        report.quadrature_error = d_first.abs() * self.first_err + d_second.abs() * self.second_err;
        report
    }
}

/// Optimized witness of a two-mode state with default numerical settings.
pub fn evaluate_witness(
    state: &GaussPolyState,
    partition: &ModePartition,
    kind: WitnessKind,
    direction: Direction,
) -> Result<WitnessReport> {
    evaluate_witness_with(state, partition, kind, direction, &WitnessOptions::default())
}

/// Optimized witness of a two-mode state.
pub fn evaluate_witness_with(
    state: &GaussPolyState,
    partition: &ModePartition,
    kind: WitnessKind,
    direction: Direction,
    opts: &WitnessOptions,
) -> Result<WitnessReport> {
    let roles = direction.apply(partition);
    let (alice, bob) = match (roles.alice(), roles.bob()) {
        ([a], [b]) if state.mode_count() == 2 => (*a, *b),
        (a, b) => return Err(Error::Multimode { alice: a.len(), bob: b.len() }),
    };
    // surface construction errors once instead of per grid point
    TwoModeProblem { state, alice, bob, opts }.joint(0.0, 0.0)?;
    let problem = TwoModeProblem { state, alice, bob, opts };
    let obj = Objective::of(kind);
    // the second score is minimized, so its sign convention is flipped back
    let second_sign = obj.second.sign();
    let optimum = optimize_angles(
        obj,
        |phi, theta| problem.score(obj.first, phi, theta),
        |phi, theta| {
            let (s, e) = problem.score(obj.second, phi, theta);
            (second_sign * s, e)
        },
        opts,
    );
    let report = optimum.into_report(kind, direction);
    if !report.raw.is_finite() {
        return domain("witness evaluation produced a non-finite value");
    }
    Ok(report)
}

/// Monte Carlo settings for fixed-basis evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOptions {
    pub samples: usize,
    /// Outer samples for entropy terms, which need a quadrature per sample.
    pub entropy_samples: usize,
    pub seed: u64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self { samples: 1_000_000, entropy_samples: 20_000, seed: 0x5eed }
    }
}

const CHUNK: usize = 8192;

/// Mean and standard error of `f(z)` for `z ~ N(0, 𝟙_dim)`, reproducible for a
/// given `(seed, stream)` regardless of the thread count.
pub(crate) fn gaussian_mc<F>(dim: usize, n: usize, seed: u64, stream: u64, f: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream.wrapping_mul(1 << 32).wrapping_add(c as u64));
            let count = CHUNK.min(n - c * CHUNK);
            let mut z = vec![0.0; dim];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                let v = f(&z);
                s1 += v;
                s2 += v * v;
            }
            (s1, s2, count)
        })
        .collect();
    let (s1, s2, count) = partial.iter().fold((0.0, 0.0, 0), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
    let nf = count as f64;
    let mean = s1 / nf;
    let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
    (mean, (var / nf).sqrt())
}

fn stack_rows(rows: &[&[f64]]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(rows.len(), rows[0].len());
    for (i, r) in rows.iter().enumerate() {
        l.row_mut(i).copy_from_slice(r);
    }
    l
}

fn lower_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::SingularConditioning("measurement covariance is singular".into()))
}

/// Averages a per-outcome conditional quantity of Bob's `axis` quadrature over
/// Alice's joint outcomes by sampling the Gaussian factor of their marginal.
fn fixed_basis_average(
    state: &GaussPolyState,
    alice: &MeasurementBasis,
    axis: &PhaseSpaceVector,
    term: Term,
    samples: usize,
    seed: u64,
    stream: u64,
) -> Result<(f64, f64)> {
    let mut rows: Vec<&[f64]> = alice.axes().iter().map(|a| a.as_slice()).collect();
    rows.push(axis.as_slice());
    let image = state.linear_image(&stack_rows(&rows))?;
    let m = alice.len();
    let chol = lower_cholesky(&image.cov().view((0, 0), (m, m)).into_owned())?;
    let mean = image.mean().rows(0, m).into_owned();
    let slicer = ScalarSlicer::new(&image)?;
    Ok(gaussian_mc(m, samples, seed, stream, |z| {
        let x = &mean + &chol * DVector::from_column_slice(z);
        let (cond, weight) = slicer.at_relative(x.as_slice());
        weight * term.eval(&cond)
    }))
}

/// Witness for fixed measurement bases on any number of modes.
///
/// Alice measures all of `alice_basis` jointly, Bob measures `bob_basis` and
/// the shift generator is `e = Σ αₖ gₖ`. The conditional Fisher information of
/// Bob's joint outcomes is integrated by Monte Carlo over the Gaussian factor
/// of the joint distribution; the conjugate-variance (or entropy) term by
/// Monte Carlo over Alice's outcomes with exact conditionals.
pub fn evaluate_witness_fixed_bases(
    state: &GaussPolyState,
    partition: &ModePartition,
    alice_basis: &MeasurementBasis,
    bob_basis: &MeasurementBasis,
    e_coeffs: &[f64],
    kind: WitnessKind,
    mc: &MonteCarloOptions,
) -> Result<WitnessReport> {
    let dim = state.dim();
    if partition.mode_count() != state.mode_count() {
        return domain("partition does not match the state's modes");
    }
    if e_coeffs.len() != bob_basis.len() {
        return domain("one coefficient per Bob axis is required");
    }
    let norm2: f64 = e_coeffs.iter().map(|a| a * a).sum();
    if (norm2 - 1.0).abs() > 1e-10 {
        return domain("coefficients must satisfy Σα² = 1");
    }
    for axis in alice_basis.axes() {
        if axis.as_slice().len() != dim || axis.support().iter().any(|m| !partition.alice().contains(m)) {
            return domain("Alice's axes must lie in her modes");
        }
    }
    for axis in bob_basis.axes() {
        check_bob_axis(axis, partition, dim)?;
    }
    let mut e = DVector::zeros(dim);
    for (a, g) in e_coeffs.iter().zip(bob_basis.axes()) {
        e += *a * g.as_vector();
    }
    let e = PhaseSpaceVector::from(e);
    let omega_e = e.omega();

    let obj = Objective::of(kind);
    let entropy_n = mc.entropy_samples.min(mc.samples).max(2);
    let (first_raw, first_se) = match obj.first.base() {
        Term::Fisher => fixed_basis_fisher(state, alice_basis, bob_basis, e_coeffs, mc)?,
        Term::Variance => fixed_basis_average(state, alice_basis, &e, Term::Variance, mc.samples, mc.seed, 1)?,
        Term::Entropy => fixed_basis_average(state, alice_basis, &e, Term::Entropy, entropy_n, mc.seed, 1)?,
    };
    let (second_raw, second_se) = match obj.second.base() {
        Term::Entropy => fixed_basis_average(state, alice_basis, &omega_e, Term::Entropy, entropy_n, mc.seed, 2)?,
        _ => fixed_basis_average(state, alice_basis, &omega_e, Term::Variance, mc.samples, mc.seed, 2)?,
    };
    let (first, d_first) = obj.first.finish(obj.first.score(first_raw));
    let (second, d_second) = obj.second.finish(second_raw);
    let mut report = WitnessReport::compose(kind, Direction::AliceToBob, first, second);
    let terms = [(d_first * first_se).abs(), (d_second * second_se).abs()];
    report.std_err = Some(terms[0].hypot(terms[1]));
    report.term_std_err = Some(terms);
    Ok(report)
}

/// Conditional Fisher information of Bob's joint outcomes for the shift
/// `y ↦ y + ξα`, as mean and standard error.
fn fixed_basis_fisher(
    state: &GaussPolyState,
    alice: &MeasurementBasis,
    bob: &MeasurementBasis,
    alpha: &[f64],
    mc: &MonteCarloOptions,
) -> Result<(f64, f64)> {
    let rows: Vec<&[f64]> = alice.axes().iter().chain(bob.axes()).map(|a| a.as_slice()).collect();
    let joint = state.linear_image(&stack_rows(&rows))?;
    let m = alice.len();
    let n = joint.dim();
    let chol = lower_cholesky(joint.cov())?;
    let precision = joint
        .cov()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularConditioning("joint covariance is singular".into()))?;
    let mut weights = DVector::zeros(n);
    for (k, a) in alpha.iter().enumerate() {
        weights[m + k] = *a;
    }
    // s = αᵀ∇P = αᵀ(2Aw + b), g = αᵀΣ⁻¹w
    let grad_row = 2.0 * joint.poly_quad() * &weights;
    let grad_const = joint.poly_lin().dot(&weights);
    let score_row = &precision * &weights;
    let quad = joint.poly_quad().clone();
    let lin = joint.poly_lin().clone();
    let c = joint.poly_const();
    let z = joint.norm();
    Ok(gaussian_mc(n, mc.samples, mc.seed, 0, |zs| {
        let w = &chol * DVector::from_column_slice(zs);
        let p = w.dot(&(&quad * &w)) + lin.dot(&w) + c;
        let s = grad_row.dot(&w) + grad_const;
        let g = score_row.dot(&w);
        let ratio = if p > 1e-300 { s * s / p } else { 0.0 };
        (ratio - 2.0 * s * g + g * g * p) / z
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate;
    use crate::phase_space::{epr_covariance, CovarianceMatrix};
    use crate::states::StateSpec;
    use std::f64::consts::{E, FRAC_PI_4};

    fn gaussian_witness(s: f64) -> f64 {
        let r = 10f64.powf(s / 10.0);
        (r + 1.0 / r) / 2.0 - 2.0 / (r + 1.0 / r)
    }

    #[test]
    fn marginal_functionals() {
        let g = Marginal1D::gaussian(0.3, 0.49);
        assert!((fisher_information_shift(&g).unwrap() - 1.0 / 0.49).abs() < 1e-12);
        assert!((shannon_entropy(&Marginal1D::gaussian(0.0, 1.0)).unwrap() - 1.418_938_533_204_672_7).abs() < 1e-12);
        assert!((shannon_entropy(&g).unwrap() - 0.5 * (2.0 * PI * E * 0.49).ln()).abs() < 1e-12);
        // q²·N(0,1): F = 3 exactly (P'²/P = 4 everywhere)
        let dr = Marginal1D::normalized_from(1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((fisher_information_shift(&dr).unwrap() - 3.0).abs() < 1e-12);
        let unnorm = Marginal1D { a2: 1.0, a1: 0.0, a0: 0.0, mu: 0.0, sigma2: 2.0 };
        assert!(fisher_information_shift(&unnorm).is_err());
    }

    #[test]
    fn functionals_match_brute_force() {
        let w = StateSpec::photon_subtracted(4.0, 4.0, FRAC_PI_4, 0.1).build().unwrap();
        let bob = quadrature_axis(1, 0.3, 2).unwrap();
        let f = quadrature_axis(0, 0.2, 2).unwrap();
        let joint = w.joint_2d(f.as_slice(), bob.as_slice()).unwrap();
        for x0 in [0.0, 0.5, -1.7] {
            let (m, _) = joint.conditional(x0);
            let s = m.sigma();
            let fi = integrate(
                |q| {
                    let p = m.density(q);
                    let d = m.density_derivative(q);
                    if p > 1e-300 {
                        d * d / p
                    } else {
                        0.0
                    }
                },
                m.mu - 14.0 * s,
                m.mu + 14.0 * s,
                1e-13,
                1e-11,
            )
            .value;
            let h = integrate(
                |q| {
                    let p = m.density(q);
                    if p > 1e-300 {
                        -p * p.ln()
                    } else {
                        0.0
                    }
                },
                m.mu - 14.0 * s,
                m.mu + 14.0 * s,
                1e-13,
                1e-11,
            )
            .value;
            assert!((fisher_information_shift(&m).unwrap() - fi).abs() < 1e-8, "x0={x0}");
            assert!((shannon_entropy(&m).unwrap() - h).abs() < 1e-9);
        }
    }

    #[test]
    fn conditional_terms_for_simple_states() {
        let p = ModePartition::two_mode(0);
        let vac = GaussPolyState::gaussian(&CovarianceMatrix::vacuum(2)).unwrap();
        let e = quadrature_axis(1, 0.4, 2).unwrap();
        assert!((conditional_fisher(&vac, &p, &e, 1.1).unwrap() - 1.0).abs() < 1e-9);
        assert!((conditional_variance(&vac, &p, &e, 1.1).unwrap() - 1.0).abs() < 1e-9);
        assert!((conditional_entropy(&vac, &p, &e, 1.1).unwrap() - 0.5 * (2.0 * PI * E).ln()).abs() < 1e-9);

        let r: f64 = 10f64.powf(0.3);
        let v = 2.0 / (r + 1.0 / r);
        let epr = GaussPolyState::gaussian(&epr_covariance(3.0, 3.0)).unwrap();
        let qb = quadrature_axis(1, 0.0, 2).unwrap();
        let pb = quadrature_axis(1, FRAC_PI_2, 2).unwrap();
        assert!((conditional_fisher(&epr, &p, &qb, 0.0).unwrap() - 1.0 / v).abs() < 1e-8);
        assert!((conditional_variance(&epr, &p, &pb, FRAC_PI_2).unwrap() - v).abs() < 1e-8);
        let lossy = GaussPolyState::gaussian(&epr_covariance(3.0, 3.0).apply_loss(0.5).unwrap()).unwrap();
        assert!((conditional_variance(&lossy, &p, &pb, FRAC_PI_2).unwrap() - 1.0).abs() < 1e-8);
        assert!(conditional_fisher(&epr, &p, &quadrature_axis(0, 0.0, 2).unwrap(), 0.0).is_err());
    }

    #[test]
    fn gaussian_witness_closed_form() {
        let state = StateSpec::gaussian(3.0, 0.0).build().unwrap();
        let p = ModePartition::two_mode(0);
        let opts = WitnessOptions { grid: 16, ..Default::default() };
        let metro = evaluate_witness_with(&state, &p, WitnessKind::Metrological, Direction::AliceToBob, &opts).unwrap();
        let reid = evaluate_witness_with(&state, &p, WitnessKind::Reid, Direction::AliceToBob, &opts).unwrap();
        let expected = gaussian_witness(3.0);
        assert!((metro.value - expected).abs() < 1e-6, "{metro:?}");
        assert!((reid.value - expected).abs() < 1e-6);
    }

    #[test]
    fn multimode_states_are_rejected() {
        let w = GaussPolyState::gaussian(&CovarianceMatrix::vacuum(3)).unwrap();
        let p = ModePartition::new(vec![0], vec![1, 2], 3).unwrap();
        assert!(matches!(
            evaluate_witness(&w, &p, WitnessKind::Reid, Direction::AliceToBob),
            Err(Error::Multimode { .. })
        ));
    }
}
