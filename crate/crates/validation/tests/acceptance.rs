//! Acceptance criteria. Numeric arguments select criteria, e.g.
//! `cargo test -p steerlab-validation -- 2 7`.

use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4, PI};
use std::process::ExitCode;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use steerlab::discretize::{binned_fisher, binned_witness, binned_witness_at, BinPartition, BinnedOptions};
use steerlab::estimator::{
    conditional_witness_from_data, estimate_fisher, freedman_diaconis, symmetric_quantile_bins, DataWitnessOptions,
    FisherOptions,
};
use steerlab::gauss_poly::MeasurementBasis;
use steerlab::numerics::find_root;
use steerlab::phase_space::{quadrature_axis, ModePartition};
use steerlab::sampler::{DatasetMeta, HomodyneDataset, QuadraturePair};
use steerlab::states::StateSpec;
use steerlab::witness::{
    conditional_fisher, conditional_variance, evaluate_witness, evaluate_witness_fixed_bases, fisher_information_shift,
    shannon_entropy, Direction, MonteCarloOptions, WitnessKind, WitnessReport,
};
use steerlab::Result;
use steerlab_validation::{minutes, run_criteria, Checks, Criterion};

use Direction::{AliceToBob as AB, BobToAlice as BA};
use WitnessKind::{Entropic, Metrological as Metro, Reid};

// Pinned tolerances.
const CLOSED_FORM_TOL: f64 = 1e-5;
const GAUSSIAN_THRESHOLD: (f64, f64) = (0.500, 0.005);
const BA_THRESHOLD: (f64, f64) = (0.18, 0.02);
const AB_THRESHOLD: (f64, f64) = (0.50, 0.01);
const REID_ZERO_TOL: f64 = 1e-8;
const HIERARCHY_TOL: f64 = 1e-6;
const GAUSSIAN_ENTROPIC_TOL: f64 = 1e-6;
const INEQUALITY_TOL: f64 = 1e-6;
const BINNED_ZERO_TOL: f64 = 1e-6;
const BINNED_THRESHOLD_REL: f64 = 0.10;
const CONVEXITY_TOL: f64 = 1e-6;
const SIGMAS: f64 = 3.0;
const MC_REL_ERR: f64 = 0.01;

fn two_modes() -> ModePartition {
    ModePartition::two_mode(0)
}

fn witness(state: StateSpec, kind: WitnessKind, dir: Direction) -> Result<WitnessReport> {
    evaluate_witness(&state.build()?, &two_modes(), kind, dir)
}

fn gaussian_closed_form(s_db: f64) -> f64 {
    let r = 10f64.powf(s_db / 10.0);
    let a = 0.5 * (r + 1.0 / r);
    a - 1.0 / a
}

/// Loss at which the signed witness changes sign, searched on `[lo, hi]`.
fn loss_threshold(lo: f64, hi: f64, tol: f64, mut raw: impl FnMut(f64) -> Result<f64>) -> Result<Option<f64>> {
    let mut err = None;
    let root = find_root(
        |eta| match raw(eta) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        tol,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(root),
    }
}

fn within(x: Option<f64>, (target, tol): (f64, f64)) -> bool {
    x.is_some_and(|x| (x - target).abs() <= tol)
}

fn show(x: Option<f64>) -> String {
    x.map_or("none".into(), |x| format!("{x:.4}"))
}

fn gaussian_closed_form_criterion(c: &mut Checks) -> Result<()> {
    for s in 1..=6 {
        let s = s as f64;
        let expected = gaussian_closed_form(s);
        for kind in [Metro, Reid] {
            let r = witness(StateSpec::gaussian(s, 0.0), kind, AB)?;
            let dev = (r.value - expected).abs();
            c.check(
                dev <= CLOSED_FORM_TOL,
                format!("{kind} s={s} dB: {:.8} vs {expected:.8} (|d| {dev:.1e})", r.value),
            );
        }
    }
    Ok(())
}

fn gaussian_threshold_criterion(c: &mut Checks) -> Result<()> {
    let eta = loss_threshold(0.3, 0.7, 1e-5, |e| Ok(witness(StateSpec::gaussian(3.0, e), Metro, AB)?.raw))?;
    c.check(within(eta, GAUSSIAN_THRESHOLD), format!("3 dB zero crossing at eta = {}", show(eta)));
    Ok(())
}

fn asymmetric_threshold_criterion(c: &mut Checks) -> Result<()> {
    let state = |e| StateSpec::photon_subtracted(5.0, 5.0, 0.0, e);
    let ba0 = witness(state(0.0), Metro, BA)?.raw;
    let ab0 = witness(state(0.0), Metro, AB)?.raw;
    c.check(ba0 > 0.0, format!("B->A at eta=0: {ba0:.4} > 0"));
    c.check(ba0 > ab0, format!("B->A {ba0:.4} exceeds A->B {ab0:.4} at eta=0"));
    let ba = loss_threshold(0.05, 0.4, 1e-4, |e| Ok(witness(state(e), Metro, BA)?.raw))?;
    c.check(within(ba, BA_THRESHOLD), format!("B->A zero crossing at eta = {}", show(ba)));
    let ab = loss_threshold(0.3, 0.7, 1e-4, |e| Ok(witness(state(e), Metro, AB)?.raw))?;
    c.check(within(ab, AB_THRESHOLD), format!("A->B zero crossing at eta = {}", show(ab)));
    Ok(())
}

fn reid_blindness_criterion(c: &mut Checks) -> Result<()> {
    let mut cases: Vec<(&str, StateSpec, Direction)> =
        (1..=6).map(|s| ("theta=0 B->A", StateSpec::photon_subtracted(s as f64, s as f64, 0.0, 0.0), BA)).collect();
    for s in [0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0] {
        cases.push(("theta=pi/4", StateSpec::photon_subtracted(s, s, FRAC_PI_4, 0.0), AB));
    }
    for (label, state, dir) in cases {
        let reid = witness(state, Reid, dir)?.value;
        let metro = witness(state, Metro, dir)?.value;
        c.check(
            reid <= REID_ZERO_TOL && metro > 0.0,
            format!("{label} s={} dB: Reid {reid:.1e}, metrological {metro:.4}", state.s1_db),
        );
    }
    Ok(())
}

/// Stam's inequality `F·N ≥ 1` and `N ≤ Var`, with entropy power
/// `N = e^{2h}/(2πe)`, for conditionals of Bob's quadrature.
fn conditional_inequalities(state: &StateSpec, dir: Direction, c: &mut Checks) -> Result<()> {
    let w = state.build()?;
    let roles = dir.apply(&two_modes());
    let (alice, bob) = (roles.alice()[0], roles.bob()[0]);
    let mut worst_stam = f64::INFINITY;
    let mut worst_power = f64::INFINITY;
    for (phi, theta) in [(0.0, 0.0), (FRAC_PI_2, FRAC_PI_2), (0.6, 2.1)] {
        let a = quadrature_axis(alice, phi, 2)?;
        let b = quadrature_axis(bob, theta, 2)?;
        let joint = w.joint_2d(a.as_slice(), b.as_slice())?;
        let sigma = joint.first_marginal().sigma();
        for t in [-2.0, -1.0, 0.0, 0.7, 1.5] {
            let (m, _) = joint.conditional(t * sigma);
            let f = fisher_information_shift(&m)?;
            let h = shannon_entropy(&m)?;
            let var = m.moments().1;
            let power = (2.0 * h).exp() / (2.0 * PI * E);
            worst_stam = worst_stam.min(f * power - 1.0);
            worst_power = worst_power.min(var - power);
        }
    }
    c.check(
        worst_stam >= -INEQUALITY_TOL && worst_power >= -INEQUALITY_TOL,
        format!("  conditionals: min(F·N − 1) = {worst_stam:.2e}, min(Var − N) = {worst_power:.2e}"),
    );
    Ok(())
}

type StateFamily = (&'static str, fn(f64, f64) -> StateSpec, &'static [Direction]);

fn hierarchy_criterion(c: &mut Checks) -> Result<()> {
    let families: [StateFamily; 3] = [
        ("gaussian", StateSpec::gaussian, &[AB]),
        ("theta=0", |s, e| StateSpec::photon_subtracted(s, s, 0.0, e), &[AB, BA]),
        ("theta=pi/4", |s, e| StateSpec::photon_subtracted(s, s, FRAC_PI_4, e), &[AB]),
    ];
    for (label, make, dirs) in families {
        for s in [1.0, 3.0, 5.0] {
            for eta in [0.0, 0.1, 0.3] {
                let state = make(s, eta);
                for &dir in dirs {
                    let m = witness(state, Metro, dir)?.value;
                    let r = witness(state, Reid, dir)?.value;
                    let h = witness(state, Entropic, dir)?.value;
                    let mut ok = r >= 0.0 && r <= m + HIERARCHY_TOL && r <= h + HIERARCHY_TOL;
                    if label == "gaussian" {
                        ok &= (h - r).abs() <= GAUSSIAN_ENTROPIC_TOL;
                    }
                    c.check(
                        ok,
                        format!("{label} {dir} s={s} eta={eta}: Reid {r:.6} metrological {m:.6} entropic {h:.6}"),
                    );
                    conditional_inequalities(&state, dir, c)?;
                }
            }
        }
    }
    Ok(())
}

fn binning_criterion(c: &mut Checks) -> Result<()> {
    let opts = BinnedOptions::default();
    let state = |e| StateSpec::photon_subtracted(4.0, 4.0, FRAC_PI_4, e);
    let w0 = state(0.0).build()?;
    let three = binned_witness(&w0, &two_modes(), 3, Metro, BA, &opts)?;
    c.check(
        three.value <= BINNED_ZERO_TOL,
        format!("3 bins, 4 dB: witness {:.4} (raw {:.4}), expected 0", three.value, three.raw),
    );
    let five = binned_witness(&w0, &two_modes(), 5, Metro, BA, &opts)?;
    c.check(five.value > 0.0, format!("5 bins, 4 dB: witness {:.4} > 0", five.value));

    let continuum = loss_threshold(0.02, 0.15, 2e-4, |e| Ok(witness(state(e), Metro, BA)?.raw))?;
    let thirteen = loss_threshold(0.02, 0.15, 5e-4, |e| {
        Ok(binned_witness(&state(e).build()?, &two_modes(), 13, Metro, BA, &opts)?.raw)
    })?;
    let rel = match (continuum, thirteen) {
        (Some(a), Some(b)) => Some((b - a).abs() / a),
        _ => None,
    };
    c.check(
        rel.is_some_and(|r| r <= BINNED_THRESHOLD_REL),
        format!(
            "loss threshold: 13 bins {} vs continuum {} (relative gap {})",
            show(thirteen),
            show(continuum),
            show(rel)
        ),
    );

    let mut worst = f64::NEG_INFINITY;
    let mut tested = 0;
    let partitions = [
        BinPartition::symmetric(&[0.4], 3)?,
        BinPartition::symmetric(&[0.3, 1.1], 5)?,
        BinPartition::symmetric(&[0.2, 0.5, 0.9, 1.4, 2.0, 2.8], 13)?,
        BinPartition::new(vec![-0.8, 0.1, 0.35, 2.5])?,
        BinPartition::new(vec![0.0])?,
    ];
    for spec in
        [state(0.0), state(0.1), StateSpec::photon_subtracted(5.0, 5.0, 0.0, 0.0), StateSpec::gaussian(3.0, 0.2)]
    {
        let w = spec.build()?;
        for dir in [AB, BA] {
            let roles = dir.apply(&two_modes());
            for (phi, theta) in [(0.0, 0.0), (FRAC_PI_2, 0.3), (1.2, 2.0)] {
                let e = quadrature_axis(roles.bob()[0], theta, 2)?;
                let full = conditional_fisher(&w, &roles, &e, phi)?;
                for bins in &partitions {
                    worst = worst.max(binned_fisher(&w, &roles, phi, &e, bins)? - full);
                    tested += 1;
                }
            }
        }
    }
    c.check(
        worst <= CONVEXITY_TOL,
        format!("binned FI ≤ continuum FI on {tested} partitions (max excess {worst:.2e})"),
    );
    Ok(())
}

fn standard_normal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn estimator_criterion(c: &mut Checks) -> Result<()> {
    let mut intercepts = Vec::new();
    for (n, seed) in [(10_000, 11), (100_000, 12), (1_000_000, 13)] {
        let x = standard_normal(n, seed);
        let est = estimate_fisher(&x, &freedman_diaconis(&x)?, &FisherOptions::default())?;
        let z_f = (est.value - 1.0) / est.std_err;
        let z_c = (est.fit.c0 - est.c0_expected) / est.c0_std_err;
        c.check(z_f.abs() <= SIGMAS, format!("n={n}: F = {:.4} ± {:.4} (z {z_f:.2})", est.value, est.std_err));
        c.check(
            z_c.abs() <= SIGMAS,
            format!(
                "n={n}: intercept {:.3e} vs (N−1)/(4n) = {:.3e} ± {:.1e} (z {z_c:.2})",
                est.fit.c0, est.c0_expected, est.c0_std_err
            ),
        );
        let dof = est.n_support - 1.0;
        intercepts.push((n as f64, est.fit.c0 / dof, est.c0_std_err / dof));
    }
    // finite-sample bias per degree of freedom, c0/(N−1), scales as 1/n
    for w in intercepts.windows(2) {
        let ((n0, b0, s0), (n1, b1, s1)) = (w[0], w[1]);
        let k = n1 / n0;
        let z = (b0 - k * b1) / s0.hypot(k * s1);
        c.check(
            z.abs() <= SIGMAS,
            format!("bias scaling n={n0}→{n1}: c0/(N−1) ratio {:.2} vs {k} (z {z:.2})", b0 / b1),
        );
    }
    Ok(())
}

struct DataPoint {
    raw: f64,
    value: f64,
    se: f64,
    exact: f64,
}

fn data_point(theta: f64, eta: f64, dir: Direction) -> Result<DataPoint> {
    let state = StateSpec::photon_subtracted(3.2, 2.6, theta, eta);
    let qq = HomodyneDataset::generate(DatasetMeta::new(state, QuadraturePair::QQ, 100_000, 1))?;
    let pp = HomodyneDataset::generate(DatasetMeta::new(state, QuadraturePair::PP, 100_000, 2))?;
    let steering = match dir {
        AB => qq.alice(),
        BA => qq.bob(),
    };
    let bins = symmetric_quantile_bins(&steering, 9)?;
    let data = conditional_witness_from_data(&qq, &pp, dir, &bins, &DataWitnessOptions::default())?;
    let exact = binned_witness_at(&state.build()?, &two_modes(), Metro, dir, 0.0, FRAC_PI_2, 0.0, &data.alice_bins)?;
    let se = data.report.std_err.unwrap_or(f64::NAN);
    Ok(DataPoint { raw: data.report.raw, value: data.report.value, se, exact: exact.raw })
}

fn pipeline_criterion(c: &mut Checks) -> Result<()> {
    for dir in [AB, BA] {
        let p = data_point(FRAC_PI_4, 0.0, dir)?;
        c.check(
            p.raw >= SIGMAS * p.se && p.raw < p.exact,
            format!(
                "theta=pi/4 {dir} eta=0: {:.4} ± {:.4} (z {:.1}), exact binned {:.4}",
                p.raw,
                p.se,
                p.raw / p.se,
                p.exact
            ),
        );
    }
    let p = data_point(0.0, 0.02, BA)?;
    c.check(
        p.raw >= SIGMAS * p.se,
        format!("theta=0 B->A eta=0.02: {:.4} ± {:.4} (z {:.1})", p.raw, p.se, p.raw / p.se),
    );
    let p = data_point(0.0, 0.05, BA)?;
    c.check(
        p.value <= SIGMAS * p.se,
        format!(
            "theta=0 B->A eta=0.05: witness {:.4} ± {:.4} (raw {:.4}, exact binned {:.4})",
            p.value, p.se, p.raw, p.exact
        ),
    );
    let p = data_point(0.0, 0.10, AB)?;
    c.check(
        p.raw >= SIGMAS * p.se,
        format!("theta=0 A->B eta=0.10: {:.4} ± {:.4} (z {:.1})", p.raw, p.se, p.raw / p.se),
    );
    Ok(())
}

fn fixed_basis_criterion(c: &mut Checks) -> Result<()> {
    let mc = MonteCarloOptions::default();
    let cases = [
        ("theta=0 3 dB", StateSpec::photon_subtracted(3.0, 3.0, 0.0, 0.0), 0.0, 0.0),
        ("theta=pi/4 4 dB eta=0.1", StateSpec::photon_subtracted(4.0, 4.0, FRAC_PI_4, 0.1), 0.4, 1.3),
        ("gaussian 2 dB", StateSpec::gaussian(2.0, 0.0), 0.0, PI),
    ];
    for (label, spec, phi, theta) in cases {
        let w = spec.build()?;
        let p = two_modes();
        let alice = MeasurementBasis::new(vec![quadrature_axis(0, phi, 2)?])?;
        let e = quadrature_axis(1, theta, 2)?;
        let bob = MeasurementBasis::new(vec![e.clone()])?;
        let r = evaluate_witness_fixed_bases(&w, &p, &alice, &bob, &[1.0], Metro, &mc)?;
        let [se_f, se_v] = r.term_std_err.unwrap_or([f64::NAN; 2]);
        let f = conditional_fisher(&w, &p, &e, phi)?;
        let v = conditional_variance(&w, &p, &e.omega(), phi)?;
        for (term, mcv, se, exact) in [("FI", r.fisher_term, se_f, f), ("variance", r.variance_term, se_v, v)] {
            let z = (mcv - exact) / se;
            c.check(
                z.abs() <= SIGMAS && se < MC_REL_ERR * exact.abs(),
                format!("{label} {term}: Monte Carlo {mcv:.5} ± {se:.1e} vs {exact:.5} (z {z:.2})"),
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            title: "Gaussian closed form",
            budget: Some(Duration::from_secs(10)),
            run: gaussian_closed_form_criterion,
        },
        Criterion {
            id: 2,
            title: "Gaussian loss threshold",
            budget: Some(Duration::from_secs(30)),
            run: gaussian_threshold_criterion,
        },
        Criterion {
            id: 3,
            title: "asymmetric photon-subtracted thresholds",
            budget: minutes(5),
            run: asymmetric_threshold_criterion,
        },
        Criterion { id: 4, title: "Reid blindness", budget: None, run: reid_blindness_criterion },
        Criterion { id: 5, title: "witness hierarchy and entropy relations", budget: None, run: hierarchy_criterion },
        Criterion { id: 6, title: "binning", budget: None, run: binning_criterion },
        Criterion { id: 7, title: "estimator calibration", budget: minutes(2), run: estimator_criterion },
        Criterion { id: 8, title: "end-to-end sampled pipeline", budget: minutes(15), run: pipeline_criterion },
        Criterion { id: 9, title: "fixed-basis reduction", budget: None, run: fixed_basis_criterion },
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    run_criteria(&criteria, &selected)
}
