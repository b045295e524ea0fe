//! Quadrature, optimization and normal-distribution helpers shared by the
//! witness, binning and estimation code.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `1 / sqrt(2π)`.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_800_534_013_531,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_146,
];

/// Result of a numerical integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Estimated absolute error.
    pub error: f64,
    /// Number of integrand evaluations.
    pub evals: usize,
}

fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

const MAX_SEGMENTS: usize = 4000;

/// Globally adaptive Gauss–Kronrod (21-point) integration of `f` over the
/// pieces delimited by `breaks` (sorted, at least two points).
///
/// Bisects the segment with the largest error estimate until the summed
/// error falls below `max(abs_tol, rel_tol·|value|)`.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], abs_tol: f64, rel_tol: f64) -> Integral {
    debug_assert!(breaks.len() >= 2);
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gk21(&mut f, w[0], w[1]);
            evals += 21;
            heap.push(Segment { a: w[0], b: w[1], value, error });
        }
    }
    loop {
        let value: f64 = heap.iter().map(|s| s.value).sum();
        let error: f64 = heap.iter().map(|s| s.error).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || heap.len() >= MAX_SEGMENTS {
            return Integral { value, error, evals };
        }
        let Some(worst) = heap.pop() else {
            return Integral { value: 0.0, error: 0.0, evals };
        };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // interval cannot be split further in floating point
            heap.push(Segment { error: 0.0, ..worst });
            continue;
        }
        let (v1, e1) = gk21(&mut f, worst.a, mid);
        let (v2, e2) = gk21(&mut f, mid, worst.b);
        evals += 42;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
}

/// Adaptive Gauss–Kronrod integration over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Integral {
    integrate_pieces(f, &[a, b], abs_tol, rel_tol)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Simpson rule on equally spaced samples (odd count).
pub fn simpson(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    debug_assert!(n >= 3 && n % 2 == 1);
    let mut acc = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * step / 3.0
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `Φ(hi) − Φ(lo)` without cancellation in either tail.
pub fn norm_mass(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo >= 0.0 {
        0.5 * (libm::erfc(lo * FRAC_1_SQRT_2) - libm::erfc(hi * FRAC_1_SQRT_2))
    } else if hi <= 0.0 {
        0.5 * (libm::erfc(-hi * FRAC_1_SQRT_2) - libm::erfc(-lo * FRAC_1_SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(-lo * FRAC_1_SQRT_2) - 0.5 * libm::erfc(hi * FRAC_1_SQRT_2)
    }
}

/// Truncated standard-normal moments `D_k = ∫_lo^hi z^k φ(z) dz` for
/// `k = 0..=kmax`. Infinite limits are allowed.
pub fn truncated_moments(lo: f64, hi: f64, kmax: usize) -> Vec<f64> {
    // z^k φ(z) at a possibly infinite endpoint
    let edge = |z: f64, k: usize| -> f64 {
        if z.is_infinite() {
            0.0
        } else {
            z.powi(k as i32) * norm_pdf(z)
        }
    };
    let mut d = vec![0.0; kmax + 1];
    d[0] = norm_mass(lo, hi);
    if kmax >= 1 {
        d[1] = edge(lo, 0) - edge(hi, 0);
    }
    for k in 2..=kmax {
        d[k] = (k - 1) as f64 * d[k - 2] + edge(lo, k - 1) - edge(hi, k - 1);
    }
    d
}

/// [`truncated_moments`] for `k = 0, 1, 2` without allocating.
#[inline]
pub fn truncated_moments_2(lo: f64, hi: f64) -> [f64; 3] {
    let pdf = |z: f64| if z.is_infinite() { 0.0 } else { norm_pdf(z) };
    let zpdf = |z: f64| if z.is_infinite() { 0.0 } else { z * norm_pdf(z) };
    let d0 = norm_mass(lo, hi);
    [d0, pdf(lo) - pdf(hi), d0 + zpdf(lo) - zpdf(hi)]
}

/// Moments `E[z^k]` of the standard normal, `k = 0..=kmax`.
pub fn normal_moments(kmax: usize) -> Vec<f64> {
    let mut m = vec![0.0; kmax + 1];
    m[0] = 1.0;
    for k in 2..=kmax {
        m[k] = (k - 1) as f64 * m[k - 2];
    }
    m
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Root of `f` on `[a, b]` by the Illinois variant of regula falsi.
/// `f(a)` and `f(b)` must differ in sign; returns `None` otherwise.
pub fn find_root<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() < tol {
            return Some(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() < tol {
            return Some(0.5 * (a + b));
        }
    }
    Some(0.5 * (a + b))
}

/// Outcome of [`nelder_mead`].
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder–Mead simplex minimization with standard coefficients.
///
/// Stops when the simplex diameter falls below `x_tol` or after `max_iter`
/// iterations.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: f64, max_iter: usize, x_tol: f64) -> Minimum {
    let n = x0.len();
    if n == 0 {
        return Minimum { x: Vec::new(), value: f(&[]), iterations: 0 };
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = f(&x);
        simplex.push((x, v));
    }
    let mut iterations = 0;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < x_tol {
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64).collect();
        let towards =
            |t: f64, worst: &[f64]| -> Vec<f64> { centroid.iter().zip(worst).map(|(c, w)| c + t * (w - c)).collect() };
        let worst = simplex[n].0.clone();
        let reflected = towards(-1.0, &worst);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = towards(-2.0, &worst);
            let fe = f(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < simplex[n].1 {
            let x = towards(-0.5, &worst);
            let v = f(&x);
            (x, v)
        } else {
            let x = towards(0.5, &worst);
            let v = f(&x);
            (x, v)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (contracted, fc);
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let v = f(&x);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_rule_is_exact_to_degree_31() {
        for k in 0..=31 {
            let r = gk21(&mut |x: f64| x.powi(k), 0.0, 1.0).0;
            let exact = 1.0 / (k as f64 + 1.0);
            assert!((r - exact).abs() < 1e-14, "degree {k}: {r} vs {exact}");
        }
    }

    #[test]
    fn gauss_legendre_matches_gauss_part_of_kronrod() {
        let (x, w) = gauss_legendre(10);
        for i in 0..5 {
            assert!((x[9 - i] - XGK[2 * i + 1]).abs() < 1e-14);
            assert!((w[9 - i] - WG[i]).abs() < 1e-14);
        }
        let (x, w) = gauss_legendre(64);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(126)).sum();
        assert!((s - 2.0 / 127.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_peaks() {
        // narrow Lorentzian, integral = atan(10/ε) - atan(-10/ε)
        let eps = 1e-4;
        let r = integrate_pieces(|x| eps / (x * x + eps * eps), &[-10.0, 0.0, 10.0], 1e-12, 1e-12);
        let exact = 2.0 * (10.0 / eps).atan();
        assert!((r.value - exact).abs() < 1e-9, "{} vs {}", r.value, exact);
    }

    #[test]
    fn truncated_moments_limits() {
        let d = truncated_moments(f64::NEG_INFINITY, f64::INFINITY, 6);
        let m = normal_moments(6);
        for k in 0..=6 {
            assert!((d[k] - m[k]).abs() < 1e-14);
        }
        let d = truncated_moments(-1.0, 2.0, 4);
        let d2 = truncated_moments_2(-1.0, 2.0);
        assert_eq!(&d[..3], &d2[..]);
        for (k, dk) in d.iter().enumerate() {
            let q = integrate(|z| z.powi(k as i32) * norm_pdf(z), -1.0, 2.0, 1e-15, 1e-14);
            assert!((dk - q.value).abs() < 1e-13);
        }
        assert!(
            (norm_mass(8.0, 9.0) - (0.5 * libm::erfc(8.0 / 2f64.sqrt()) - 0.5 * libm::erfc(9.0 / 2f64.sqrt()))).abs()
                < 1e-25
        );
    }

    #[test]
    fn illinois_root() {
        let r = find_root(|x| x * x - 2.0, 0.0, 3.0, 1e-12).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-10);
        assert!(find_root(|x| x * x + 1.0, 0.0, 3.0, 1e-12).is_none());
    }

    #[test]
    fn golden_and_nelder_mead() {
        let (x, _) = golden_max(|x| -(x - 0.3).powi(2), 0.0, 1.0, 1e-8);
        assert!((x - 0.3).abs() < 1e-7);
        let m = nelder_mead(|p| (p[0] - 1.0).powi(2) + 10.0 * (p[1] + 2.0).powi(2), &[0.0, 0.0], 0.5, 500, 1e-9);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] + 2.0).abs() < 1e-6);
    }
}
