//! Witness estimation from finite homodyne data.
//!
//! The Fisher information of a sample is read off the growth of the squared
//! Hellinger distance between its histogram and a shifted copy,
//! `⟨d²(ξ)⟩ = c₀ + (F/8 + c₂)ξ² + O(ξ⁴)`. The finite-sample terms
//! `c₀ = (N−1)/(4n)` and `c₂ ≈ F(1+N)/(32n)` describe two independent
//! histograms of `n` samples each, so every distance compares two disjoint
//! random halves of the data, one of them shifted.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::discretize::BinPartition;
use crate::error::{domain, Error, Result};
use crate::sampler::HomodyneDataset;
use crate::witness::{Direction, WitnessKind, WitnessReport};

/// Counts of samples in the bins of a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub partition: BinPartition,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn from_samples(samples: &[f64], partition: &BinPartition) -> Self {
        shift_and_histogram(samples, 0.0, partition)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Number of non-empty bins.
    pub fn support(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Fraction of samples in the two unbounded bins.
    pub fn tail_fraction(&self) -> f64 {
        let k = self.counts.len();
        (self.counts[0] + self.counts[k - 1]) as f64 / self.total.max(1) as f64
    }
}

/// `½ Σ (√p − √q)²` between two probability vectors.
pub fn hellinger_sq_freq(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return domain("frequency vectors differ in length");
    }
    let s: f64 = p.iter().zip(q).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

/// Squared Hellinger distance between the relative frequencies of two
/// histograms over the same partition.
pub fn hellinger_sq(f0: &Histogram, f1: &Histogram) -> Result<f64> {
    if f0.partition != f1.partition {
        return domain("histograms use different partitions");
    }
    hellinger_sq_freq(&f0.frequencies(), &f1.frequencies())
}

/// Histogram of `{x + ξ}`.
pub fn shift_and_histogram(samples: &[f64], xi: f64, partition: &BinPartition) -> Histogram {
    let mut counts = vec![0u64; partition.n_bins()];
    for &x in samples {
        counts[partition.locate(x + xi)] += 1;
    }
    Histogram { partition: partition.clone(), counts, total: samples.len() as u64 }
}

/// Empirical quantile of sorted data (linear interpolation).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

/// Bob-side partition: uniform interior bins of Freedman–Diaconis width
/// between the 0.5% and 99.5% empirical quantiles, with open tail bins.
pub fn freedman_diaconis(samples: &[f64]) -> Result<BinPartition> {
    if samples.len() < 4 {
        return domain("at least four samples are needed for a histogram");
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let (lo, hi) = (quantile_sorted(&s, 0.005), quantile_sorted(&s, 0.995));
    if !(iqr > 0.0 && hi > lo) {
        return domain("samples have no spread");
    }
    let width = 2.0 * iqr / (s.len() as f64).cbrt();
    let m = ((hi - lo) / width).round().max(1.0) as usize;
    BinPartition::new((0..=m).map(|j| lo + (hi - lo) * j as f64 / m as f64).collect())
}

/// Symmetric partition with `n_bins` bins of (nearly) equal empirical
/// probability: positive edges average the magnitudes of mirrored quantiles.
pub fn symmetric_quantile_bins(samples: &[f64], n_bins: usize) -> Result<BinPartition> {
    if samples.len() < n_bins.max(2) {
        return domain("fewer samples than bins");
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let positive: Vec<f64> = (n_bins / 2 + 1..n_bins)
        .map(|k| {
            let p = k as f64 / n_bins as f64;
            0.5 * (quantile_sorted(&s, p).abs() + quantile_sorted(&s, 1.0 - p).abs())
        })
        .collect();
    BinPartition::symmetric(&positive, n_bins)
}

/// Symmetric displacement grid `{±kδ, k = 1..K}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiGrid {
    pub delta: f64,
    pub k: usize,
}

impl Default for XiGrid {
    fn default() -> Self {
        Self { delta: 0.05, k: 10 }
    }
}

impl XiGrid {
    pub fn points(&self) -> Vec<f64> {
        (1..=self.k).flat_map(|j| [-(j as f64) * self.delta, j as f64 * self.delta]).collect()
    }

    pub fn max(&self) -> f64 {
        self.delta * self.k as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherOptions {
    pub xi: XiGrid,
    /// Random half-splits averaged per distance.
    pub splits: usize,
    /// Bootstrap resamples for the standard error.
    pub resamples: usize,
    pub seed: u64,
    /// Largest allowed `F̂ξ_max²/8` before the grid is shrunk.
    pub max_curvature: f64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        Self { xi: XiGrid::default(), splits: 8, resamples: 200, seed: 0x5eed, max_curvature: 0.1 }
    }
}

/// Least-squares fit `d² = c₀ + slope·ξ² + quartic·ξ⁴`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HellingerFit {
    pub c0: f64,
    pub slope: f64,
    pub quartic: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

pub fn fit_hellinger(xi: &[f64], d2: &[f64]) -> Result<HellingerFit> {
    let mut distinct: Vec<f64> = xi.iter().map(|x| x.abs()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    if distinct.len() < 3 || xi.len() != d2.len() {
        return Err(Error::Fit("at least three distinct |ξ| values are required".into()));
    }
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (&x, &d) in xi.iter().zip(d2) {
        let row = Vector3::new(1.0, x * x, x.powi(4));
        ata += row * row.transpose();
        atb += row * d;
    }
    let c = ata.lu().solve(&atb).ok_or_else(|| Error::Fit("singular least-squares system".into()))?;
    let residual =
        (xi.iter().zip(d2).map(|(&x, &d)| (d - c[0] - c[1] * x * x - c[2] * x.powi(4)).powi(2)).sum::<f64>()
            / xi.len() as f64)
            .sqrt();
    Ok(HellingerFit { c0: c[0], slope: c[1], quartic: c[2], residual })
}

/// Fisher information estimate from one column of data.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n_used: usize,
    /// Mean number of bins non-empty in either compared histogram.
    pub n_support: f64,
    pub fit: HellingerFit,
    /// `(N−1)/8·(1/n_a + 1/n_b)` for the compared halves.
    pub c0_expected: f64,
    /// Bootstrap standard error of the fitted intercept.
    pub c0_std_err: f64,
    /// Displacement grid actually used.
    pub xi: XiGrid,
    /// Set when the fitted slope was not positive and the value clamped to 0.
    pub non_positive_slope: bool,
    /// Largest fraction of shifted samples landing in a tail bin.
    pub tail_fraction: f64,
}

/// Sorted data with cumulative counts over a partition's edges.
struct SortedColumn<'a> {
    edges: &'a [f64],
}

impl SortedColumn<'_> {
    /// Counts of `{x + ξ}` per bin for sorted `x`.
    fn counts(&self, sorted: &[f64], xi: f64, out: &mut Vec<u64>) {
        out.clear();
        let mut prev = 0usize;
        for &e in self.edges {
            let below = sorted.partition_point(|&x| x + xi < e);
            out.push((below - prev) as u64);
            prev = below;
        }
        out.push((sorted.len() - prev) as u64);
    }
}

struct RawEstimate {
    value: f64,
    fit: HellingerFit,
    support: f64,
    c0_expected: f64,
    tail: f64,
    non_positive: bool,
}

/// One pass over sorted data: averaged distances, fit and bias inversion.
fn estimate_sorted(
    sorted: &[f64],
    partition: &BinPartition,
    xi: &XiGrid,
    splits: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RawEstimate> {
    let col = SortedColumn { edges: partition.edges() };
    let points = xi.points();
    let mut d2 = vec![0.0; points.len()];
    let (mut support, mut inv_n, mut tail) = (0.0, 0.0, 0.0f64);
    let mut comparisons = 0.0;
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    let (mut a, mut b) = (Vec::with_capacity(sorted.len() / 2 + 1), Vec::with_capacity(sorted.len() / 2 + 1));
    for _ in 0..splits.max(1) {
        a.clear();
        b.clear();
        let mut bits = 0u64;
        for (i, &x) in sorted.iter().enumerate() {
            if i % 64 == 0 {
                bits = rng.next_u64();
            }
            if bits & 1 == 0 {
                a.push(x);
            } else {
                b.push(x);
            }
            bits >>= 1;
        }
        if a.len() < 2 || b.len() < 2 {
            return Err(Error::Fit("too few samples to split".into()));
        }
        let (na, nb) = (a.len() as f64, b.len() as f64);
        for (first, second) in [(&a, &b), (&b, &a)] {
            col.counts(first, 0.0, &mut ca);
            let p0: Vec<f64> = ca.iter().map(|&c| c as f64 / first.len() as f64).collect();
            for (slot, &x) in d2.iter_mut().zip(&points) {
                col.counts(second, x, &mut cb);
                let p1: Vec<f64> = cb.iter().map(|&c| c as f64 / second.len() as f64).collect();
                *slot += hellinger_sq_freq(&p0, &p1)?;
                support += ca.iter().zip(&cb).filter(|(u, v)| **u > 0 || **v > 0).count() as f64;
                tail = tail.max((cb[0] + cb[cb.len() - 1]) as f64 / second.len() as f64);
                comparisons += 1.0;
            }
        }
        inv_n += 1.0 / na + 1.0 / nb;
    }
    let reps = 2.0 * splits.max(1) as f64;
    for v in &mut d2 {
        *v /= reps;
    }
    let support = support / comparisons;
    let inv_n = inv_n / splits.max(1) as f64;
    let fit = fit_hellinger(&points, &d2)?;
    // slope = F/8 + F(1+N)/64·(1/n_a + 1/n_b)
    let gain = 0.125 + (1.0 + support) * inv_n / 64.0;
    let non_positive = !(fit.slope > 0.0);
    let value = if non_positive { 0.0 } else { fit.slope / gain };
    Ok(RawEstimate { value, fit, support, c0_expected: (support - 1.0) * inv_n / 8.0, tail, non_positive })
}

/// Hellinger-distance estimate of the Fisher information of `samples` for
/// displacements of the measured quadrature, with a bootstrap standard error.
pub fn estimate_fisher(samples: &[f64], partition: &BinPartition, opts: &FisherOptions) -> Result<FisherEstimate> {
    if opts.xi.k < 3 || !(opts.xi.delta > 0.0) {
        return Err(Error::Fit("the displacement grid needs at least three positive steps".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return domain("samples must be finite");
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut xi = opts.xi;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut est = estimate_sorted(&sorted, partition, &xi, opts.splits, &mut rng)?;
    let curvature = est.value * xi.max().powi(2) / 8.0;
    if curvature > opts.max_curvature {
        xi.delta *= (opts.max_curvature / curvature).sqrt();
        rng = ChaCha8Rng::seed_from_u64(opts.seed);
        est = estimate_sorted(&sorted, partition, &xi, opts.splits, &mut rng)?;
    }

    let n = sorted.len();
    let boot: Vec<(f64, f64)> = (0..opts.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64 + 1);
            // multinomial weights keep the resample sorted without re-sorting
            let mut mult = vec![0u32; n];
            for _ in 0..n {
                mult[rng.random_range(0..n)] += 1;
            }
            let mut resample = Vec::with_capacity(n);
            for (&x, &m) in sorted.iter().zip(&mult) {
                for _ in 0..m {
                    resample.push(x);
                }
            }
            estimate_sorted(&resample, partition, &xi, opts.splits, &mut rng)
                .map(|e| (e.value, e.fit.c0))
                .unwrap_or((f64::NAN, f64::NAN))
        })
        .collect();
    let std_err = bootstrap_std_err(boot.iter().map(|b| b.0).collect());
    let c0_std_err = bootstrap_std_err(boot.iter().map(|b| b.1).collect());
    Ok(FisherEstimate {
        value: est.value,
        std_err,
        n_used: n,
        n_support: est.support,
        fit: est.fit,
        c0_expected: est.c0_expected,
        c0_std_err,
        xi,
        non_positive_slope: est.non_positive,
        tail_fraction: est.tail,
    })
}

/// Half the central 68.3% percentile range of bootstrap replicates.
fn bootstrap_std_err(mut values: Vec<f64>) -> f64 {
    values.retain(|v| v.is_finite());
    if values.len() < 2 {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&values, 0.158_655_253_9);
    let hi = quantile_sorted(&values, 0.841_344_746_1);
    (0.5 * (hi - lo)).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataWitnessOptions {
    pub fisher: FisherOptions,
    /// Alice bins with fewer samples in either dataset are merged inward.
    pub min_bin_count: usize,
}

impl Default for DataWitnessOptions {
    fn default() -> Self {
        Self { fisher: FisherOptions::default(), min_bin_count: 500 }
    }
}

/// Per-bin contribution to a data-based witness.
#[derive(Debug, Clone, PartialEq)]
pub struct BinDetail {
    pub lo: f64,
    pub hi: f64,
    pub fisher_count: usize,
    pub variance_count: usize,
    pub fisher: FisherEstimate,
    pub variance: f64,
    pub variance_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataWitness {
    pub report: WitnessReport,
    /// Alice bins after merging.
    pub alice_bins: BinPartition,
    pub bins: Vec<BinDetail>,
    pub notes: Vec<String>,
}

impl DataWitness {
    /// Flat `key=value` report.
    pub fn to_key_value(&self) -> String {
        let r = &self.report;
        let mut out = String::new();
        let _ = writeln!(out, "kind={}", r.kind);
        let _ = writeln!(out, "direction={}", r.direction);
        let _ = writeln!(out, "value={:.10e}", r.value);
        let _ = writeln!(out, "raw={:.10e}", r.raw);
        let _ = writeln!(out, "fisher_term={:.10e}", r.fisher_term);
        let _ = writeln!(out, "variance_term={:.10e}", r.variance_term);
        let _ = writeln!(out, "std_err={:.10e}", r.std_err.unwrap_or(f64::NAN));
        let edges: Vec<String> = self.alice_bins.edges().iter().map(|e| format!("{e:.10e}")).collect();
        let _ = writeln!(out, "alice_edges={}", edges.join(";"));
        for (i, note) in self.notes.iter().enumerate() {
            let _ = writeln!(out, "note{i}={note}");
        }
        out
    }

    /// One CSV row per Alice bin, with a header row.
    pub fn bins_csv(&self) -> String {
        let mut out = String::from("bin,lo,hi,fisher_count,variance_count,fisher,fisher_std_err,n_support,c0,c0_expected,slope,variance,variance_std_err\n");
        for (i, b) in self.bins.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{:.10e},{:.10e},{},{},{:.10e},{:.10e},{:.4},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                b.lo,
                b.hi,
                b.fisher_count,
                b.variance_count,
                b.fisher.value,
                b.fisher.std_err,
                b.fisher.n_support,
                b.fisher.fit.c0,
                b.fisher.c0_expected,
                b.fisher.fit.slope,
                b.variance,
                b.variance_se
            );
        }
        out
    }
}

/// Merges bins holding fewer than `min` samples in either column into their
/// neighbour towards the centre until every bin is populated.
fn merge_sparse_bins(
    bins: &BinPartition,
    a: &[f64],
    b: &[f64],
    min: usize,
    notes: &mut Vec<String>,
) -> Result<BinPartition> {
    let mut edges = bins.edges().to_vec();
    loop {
        let p = BinPartition::new(edges.clone())?;
        let mut ca = vec![0usize; p.n_bins()];
        let mut cb = vec![0usize; p.n_bins()];
        a.iter().for_each(|&x| ca[p.locate(x)] += 1);
        b.iter().for_each(|&x| cb[p.locate(x)] += 1);
        let Some(k) = (0..p.n_bins()).find(|&k| ca[k].min(cb[k]) < min) else {
            return Ok(p);
        };
        if edges.len() == 1 {
            return Err(Error::Domain(format!("fewer than {min} samples in a two-bin partition")));
        }
        let centre = (p.n_bins() - 1) as f64 / 2.0;
        // drop the edge shared with the inward neighbour
        let edge = if (k as f64) < centre || k == p.n_bins() - 1 { k.min(edges.len() - 1) } else { k - 1 };
        let edge = if k == 0 { 0 } else { edge };
        notes.push(format!("merged bin {k} ({} / {} samples) across edge {:.4}", ca[k], cb[k], edges[edge]));
        edges.remove(edge);
    }
}

fn sample_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (var, se)
}

/// Metrological witness estimated from data.
///
/// `fisher_set` supplies the Fisher term and `variance_set` the variance
/// term; in each, the steering party's outcome is binned with `alice_bins`
/// and the steered party's outcomes analysed per bin. For `BobToAlice` the
/// columns of both datasets swap roles.
pub fn conditional_witness_from_data(
    fisher_set: &HomodyneDataset,
    variance_set: &HomodyneDataset,
    direction: Direction,
    alice_bins: &BinPartition,
    opts: &DataWitnessOptions,
) -> Result<DataWitness> {
    if fisher_set.meta.state != variance_set.meta.state {
        return domain("datasets describe different states");
    }
    let (fs, vs) = match direction {
        Direction::AliceToBob => (fisher_set.clone(), variance_set.clone()),
        Direction::BobToAlice => (fisher_set.swapped(), variance_set.swapped()),
    };
    let mut notes = Vec::new();
    let bins = merge_sparse_bins(alice_bins, &fs.alice(), &vs.alice(), opts.min_bin_count, &mut notes)?;
    let k = bins.n_bins();
    let mut f_groups = vec![Vec::new(); k];
    let mut v_groups = vec![Vec::new(); k];
    fs.samples.iter().for_each(|&(a, b)| f_groups[bins.locate(a)].push(b));
    vs.samples.iter().for_each(|&(a, b)| v_groups[bins.locate(a)].push(b));

    let (nf, nv) = (fs.len() as f64, vs.len() as f64);
    let mut details = Vec::with_capacity(k);
    let (mut fisher, mut f_var, mut variance, mut v_var) = (0.0, 0.0, 0.0, 0.0);
    for (i, (fg, vg)) in f_groups.iter().zip(&v_groups).enumerate() {
        let partition = freedman_diaconis(fg)?;
        let fopts = FisherOptions { seed: opts.fisher.seed.wrapping_add(i as u64), ..opts.fisher };
        let est = estimate_fisher(fg, &partition, &fopts)?;
        let (var, var_se) = sample_variance(vg);
        let (wf, wv) = (fg.len() as f64 / nf, vg.len() as f64 / nv);
        fisher += wf * est.value;
        f_var += (wf * est.std_err).powi(2);
        variance += wv * var;
        v_var += (wv * var_se).powi(2);
        let (lo, hi) = bins.bin(i);
        details.push(BinDetail {
            lo,
            hi,
            fisher_count: fg.len(),
            variance_count: vg.len(),
            fisher: est,
            variance: var,
            variance_se: var_se,
        });
    }
    let mut report = WitnessReport::compose(WitnessKind::Metrological, direction, fisher, variance);
    report.std_err = Some((f_var + v_var).sqrt());
    report.term_std_err = Some([f_var.sqrt(), v_var.sqrt()]);
    report.alice_angle_fisher = fs.meta.phi_alice;
    report.alice_angle_var = vs.meta.phi_alice;
    report.bob_angle = fs.meta.axis_bob;
    Ok(DataWitness { report, alice_bins: bins, bins: details, notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_cdf;
    use rand_distr::StandardNormal;

    fn normal(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn hellinger_examples() {
        let p = BinPartition::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let h = Histogram::from_samples(&[-2.0, -0.5, 0.5, 0.7], &p);
        assert_eq!(h.counts, vec![1, 1, 2, 0]);
        assert_eq!(hellinger_sq(&h, &h).unwrap(), 0.0);
        let g = Histogram { partition: p.clone(), counts: vec![0, 0, 0, 5], total: 5 };
        let d = Histogram { partition: p.clone(), counts: vec![3, 2, 0, 0], total: 5 };
        assert!((hellinger_sq(&g, &d).unwrap() - 1.0).abs() < 1e-15);
        let other = Histogram::from_samples(&[0.0], &BinPartition::new(vec![0.0]).unwrap());
        assert!(hellinger_sq(&h, &other).is_err());

        // exact probabilities of a finely binned standard normal and its shift
        let edges: Vec<f64> = (-800..=800).map(|i| i as f64 * 0.01).collect();
        let probs = |xi: f64| {
            let mut v = vec![norm_cdf(edges[0] - xi)];
            v.extend(edges.windows(2).map(|w| norm_cdf(w[1] - xi) - norm_cdf(w[0] - xi)));
            v.push(1.0 - norm_cdf(edges[edges.len() - 1] - xi));
            v
        };
        let d = hellinger_sq_freq(&probs(0.0), &probs(0.1)).unwrap();
        assert!((d - 0.00125).abs() < 2e-6, "{d}");
    }

    #[test]
    fn shifting_round_trips() {
        let x = normal(1000, 1.0, 3);
        let p = freedman_diaconis(&x).unwrap();
        assert_eq!(shift_and_histogram(&x, 0.0, &p), Histogram::from_samples(&x, &p));
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.37).collect();
        assert_eq!(shift_and_histogram(&shifted, -0.37, &p).counts.iter().sum::<u64>(), 1000);
        let far = shift_and_histogram(&x, 100.0, &p);
        assert_eq!(far.tail_fraction(), 1.0);
    }

    #[test]
    fn sorted_counting_matches_direct() {
        let x = normal(5000, 1.3, 9);
        let p = freedman_diaconis(&x).unwrap();
        let mut s = x.clone();
        s.sort_by(f64::total_cmp);
        let col = SortedColumn { edges: p.edges() };
        let mut out = Vec::new();
        for xi in [-0.3, 0.0, 0.11] {
            col.counts(&s, xi, &mut out);
            assert_eq!(out, shift_and_histogram(&x, xi, &p).counts);
        }
    }

    #[test]
    fn fit_requires_three_points() {
        assert!(fit_hellinger(&[0.1, -0.1, 0.2, -0.2], &[1.0, 1.0, 2.0, 2.0]).is_err());
        let xi: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
        let d: Vec<f64> = xi.iter().map(|&x| 0.01 + 0.125 * x * x - 0.01 * x.powi(4)).collect();
        let f = fit_hellinger(&xi, &d).unwrap();
        assert!((f.c0 - 0.01).abs() < 1e-12 && (f.slope - 0.125).abs() < 1e-10 && (f.quartic + 0.01).abs() < 1e-8);
    }

    #[test]
    fn narrow_gaussian_fisher() {
        let x = normal(100_000, 0.5f64.sqrt(), 11);
        let p = freedman_diaconis(&x).unwrap();
        let opts = FisherOptions { resamples: 60, ..Default::default() };
        let est = estimate_fisher(&x, &p, &opts).unwrap();
        assert!((est.value - 2.0).abs() < 3.0 * est.std_err, "{} ± {}", est.value, est.std_err);
        assert!(est.std_err > 0.0);
    }

    #[test]
    fn quantile_bins_balance_counts() {
        let x = normal(90_000, 1.7, 5);
        let b = symmetric_quantile_bins(&x, 9).unwrap();
        let h = Histogram::from_samples(&x, &b);
        for c in h.counts {
            assert!((c as f64 / 10_000.0 - 1.0).abs() < 0.03);
        }
    }

    #[test]
    fn sparse_bins_merge_inwards() {
        let a: Vec<f64> = (0..2000).map(|i| (i as f64 / 2000.0 - 0.5) * 2.0).collect();
        let bins = BinPartition::new(vec![-3.0, -0.5, 0.5, 3.0]).unwrap();
        let mut notes = Vec::new();
        let merged = merge_sparse_bins(&bins, &a, &a, 500, &mut notes).unwrap();
        assert_eq!(merged.edges(), &[-0.5, 0.5]);
        assert_eq!(notes.len(), 2);
    }
}
