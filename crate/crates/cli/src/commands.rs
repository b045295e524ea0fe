//! Subcommand implementations. Every command collects results in job order,
//! so output files are identical across reruns and thread counts.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{Context, Result};
use rayon::prelude::*;
use steerlab::discretize::{binned_witness, binned_witness_at, BinnedOptions};
use steerlab::estimator::{conditional_witness_from_data, symmetric_quantile_bins, DataWitness, DataWitnessOptions};
use steerlab::phase_space::ModePartition;
use steerlab::sampler::{load_dataset, save_dataset, DatasetMeta, HomodyneDataset, QuadraturePair};
use steerlab::states::StateSpec;
use steerlab::witness::{evaluate_witness, Direction, WitnessKind, WitnessReport};

use crate::config::{ConfigError, Family, Plan};
use crate::plot;

/// Counts finished jobs on standard error.
pub struct Progress {
    label: &'static str,
    total: usize,
    done: AtomicUsize,
}

impl Progress {
    pub fn new(label: &'static str, total: usize) -> Self {
        Self { label, total, done: AtomicUsize::new(0) }
    }

    pub fn tick(&self, what: impl Display) {
        let k = self.done.fetch_add(1, Ordering::Relaxed) + 1;
        eprintln!("[{} {k}/{}] {what}", self.label, self.total);
    }
}

/// Shortest round-trip decimal, in exponent form for tiny or huge
/// magnitudes; empty for NaN.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x.is_nan() {
        String::new()
    } else if a != 0.0 && !(1e-4..1e6).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn point_label(p: &StateSpec) -> String {
    format!("s1={} s2={} theta={} eta={}", p.s1_db, p.s2_db, p.theta, p.eta)
}

pub fn two_modes() -> ModePartition {
    ModePartition::two_mode(0)
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn state_columns(family: Family, p: &StateSpec) -> Vec<String> {
    vec![family.name().into(), num(p.s1_db), num(p.s2_db), num(p.theta), num(p.eta)]
}

const STATE_HEADER: [&str; 5] = ["family", "s1_db", "s2_db", "theta", "eta"];

fn report_columns(r: &WitnessReport) -> Vec<String> {
    vec![
        num(r.value),
        num(r.raw),
        num(r.fisher_term),
        num(r.variance_term),
        num(r.alice_angle_fisher),
        num(r.alice_angle_var),
        num(r.bob_angle),
    ]
}

const REPORT_HEADER: [&str; 7] =
    ["value", "raw", "first_term", "second_term", "phi_alice_first", "phi_alice_second", "phi_bob"];

/// Name of the first state column that takes more than one value.
fn sweep_axis(points: &[StateSpec]) -> Option<&'static str> {
    let varies = |f: fn(&StateSpec) -> f64| points.iter().any(|p| f(p) != f(&points[0]));
    [
        ("s1_db", (|p: &StateSpec| p.s1_db) as fn(&StateSpec) -> f64),
        ("eta", |p| p.eta),
        ("theta", |p| p.theta),
        ("s2_db", |p| p.s2_db),
    ]
    .into_iter()
    .find(|(_, f)| varies(*f))
    .map(|(name, _)| name)
}

fn other_axes(points: &[StateSpec], x: &str) -> Vec<&'static str> {
    let mut v = Vec::new();
    for (name, f) in [
        ("s1_db", (|p: &StateSpec| p.s1_db) as fn(&StateSpec) -> f64),
        ("s2_db", |p| p.s2_db),
        ("theta", |p| p.theta),
        ("eta", |p| p.eta),
    ] {
        let tracks_s1 = name == "s2_db" && points.iter().all(|p| p.s2_db == p.s1_db);
        if name != x && !tracks_s1 && points.iter().any(|p| f(p) != f(&points[0])) {
            v.push(name);
        }
    }
    v
}

fn maybe_svg(plan: &Plan, csv_path: &Path, extra_series: &[&str]) -> Result<()> {
    if !plan.svg {
        return Ok(());
    }
    let Some(x) = sweep_axis(&plan.points) else {
        eprintln!("svg skipped: no state parameter is swept");
        return Ok(());
    };
    let mut series: Vec<&str> = extra_series.to_vec();
    series.extend(other_axes(&plan.points, x));
    let svg = plot::render_csv(csv_path, x, "value", None, &series, "")?;
    std::fs::write(csv_path.with_extension("svg"), svg)?;
    Ok(())
}

pub fn witness(plan: &Plan, out: &Path) -> Result<()> {
    let jobs: Vec<(StateSpec, WitnessKind, Direction)> = plan
        .points
        .iter()
        .flat_map(|p| plan.kinds.iter().flat_map(move |k| plan.directions.iter().map(move |d| (*p, *k, *d))))
        .collect();
    let progress = Progress::new("witness", jobs.len());
    let reports: Vec<WitnessReport> = jobs
        .par_iter()
        .map(|(p, k, d)| {
            let r = evaluate_witness(&p.build()?, &two_modes(), *k, *d)?;
            progress.tick(format_args!("{} {k} {d}: {:.6}", point_label(p), r.raw));
            Ok(r)
        })
        .collect::<Result<_>>()?;

    let mut header: Vec<&str> = STATE_HEADER.to_vec();
    header.extend(["kind", "direction"]);
    header.extend(REPORT_HEADER);
    header.push("quadrature_error");
    let rows: Vec<Vec<String>> = jobs
        .iter()
        .zip(&reports)
        .map(|((p, k, d), r)| {
            let mut row = state_columns(plan.family, p);
            row.extend([k.name().to_string(), d.label().to_string()]);
            row.extend(report_columns(r));
            row.push(num(r.quadrature_error));
            row
        })
        .collect();
    let path = out.join("witness.csv");
    write_csv(&path, &header, &rows)?;
    maybe_svg(plan, &path, &["kind", "direction"])
}

pub fn binned_options(plan: &Plan) -> BinnedOptions {
    BinnedOptions { shared_edges: plan.shared_edges, ..BinnedOptions::default() }
}

fn join_edges(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

pub fn binned(plan: &Plan, out: &Path) -> Result<()> {
    let curves: Vec<(StateSpec, WitnessKind, Direction)> = plan
        .points
        .iter()
        .flat_map(|p| plan.kinds.iter().flat_map(move |k| plan.directions.iter().map(move |d| (*p, *k, *d))))
        .collect();
    // bin count 0 marks the continuum reference of each curve
    let jobs: Vec<(usize, usize)> = (0..curves.len())
        .flat_map(|c| std::iter::once(0).chain(plan.bins.iter().copied()).map(move |n| (c, n)))
        .collect();
    let opts = binned_options(plan);
    let progress = Progress::new("binned", jobs.len());
    let reports: Vec<WitnessReport> = jobs
        .par_iter()
        .map(|&(c, n)| {
            let (p, k, d) = curves[c];
            let state = p.build()?;
            let r = if n == 0 {
                evaluate_witness(&state, &two_modes(), k, d)?
            } else {
                binned_witness(&state, &two_modes(), n, k, d, &opts)?
            };
            progress.tick(format_args!("{} {k} {d} bins={n}: {:.6}", point_label(&p), r.raw));
            Ok(r)
        })
        .collect::<Result<_>>()?;

    let mut header: Vec<&str> = STATE_HEADER.to_vec();
    header.extend(["kind", "direction", "n_bins"]);
    header.extend(REPORT_HEADER);
    header.extend(["edges_first", "edges_second", "continuum_raw"]);
    let mut rows = Vec::new();
    let mut continuum = f64::NAN;
    for (&(c, n), r) in jobs.iter().zip(&reports) {
        if n == 0 {
            continuum = r.raw;
            continue;
        }
        let (p, k, d) = curves[c];
        let mut row = state_columns(plan.family, &p);
        row.extend([k.name().to_string(), d.label().to_string(), n.to_string()]);
        row.extend(report_columns(r));
        let (first, second) =
            r.bin_edges.as_ref().map(|e| (join_edges(&e.first), join_edges(&e.second))).unwrap_or_default();
        row.extend([first, second, num(continuum)]);
        rows.push(row);
    }
    let path = out.join("binned.csv");
    write_csv(&path, &header, &rows)?;
    maybe_svg(plan, &path, &["kind", "direction", "n_bins"])
}

/// Seeds of the `qq` and `pp` datasets of sweep point `index`.
pub fn dataset_seeds(seed: u64, index: usize) -> (u64, u64) {
    let base = seed.wrapping_add(2 * index as u64);
    (base, base.wrapping_add(1))
}

pub fn generate_pair(
    state: StateSpec,
    n: usize,
    seed: u64,
    index: usize,
) -> Result<(HomodyneDataset, HomodyneDataset)> {
    let (sq, sp) = dataset_seeds(seed, index);
    let qq = HomodyneDataset::generate(DatasetMeta::new(state, QuadraturePair::QQ, n, sq))?;
    let pp = HomodyneDataset::generate(DatasetMeta::new(state, QuadraturePair::PP, n, sp))?;
    Ok((qq, pp))
}

pub fn sample(plan: &Plan, out: &Path) -> Result<()> {
    let progress = Progress::new("sample", plan.points.len());
    let files: Vec<(PathBuf, PathBuf)> = plan
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (qq, pp) = generate_pair(*p, plan.samples, plan.seed, i)?;
            let fq = out.join(format!("dataset_{i}_qq.csv"));
            let fp = out.join(format!("dataset_{i}_pp.csv"));
            save_dataset(&qq, &fq)?;
            save_dataset(&pp, &fp)?;
            progress.tick(point_label(p));
            Ok((fq, fp))
        })
        .collect::<Result<_>>()?;

    let mut header: Vec<&str> = vec!["index"];
    header.extend(STATE_HEADER);
    header.extend(["n", "seed_qq", "seed_pp", "file_qq", "file_pp"]);
    let rows: Vec<Vec<String>> = plan
        .points
        .iter()
        .zip(&files)
        .enumerate()
        .map(|(i, (p, (fq, fp)))| {
            let (sq, sp) = dataset_seeds(plan.seed, i);
            let mut row = vec![i.to_string()];
            row.extend(state_columns(plan.family, p));
            let name = |f: &PathBuf| f.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            row.extend([plan.samples.to_string(), sq.to_string(), sp.to_string(), name(fq), name(fp)]);
            row
        })
        .collect();
    write_csv(&out.join("samples.csv"), &header, &rows)
}

/// Data witness from a Fisher/variance dataset pair plus the exact binned
/// value for the same steering-party bins and measurement angles.
pub fn data_point(
    fisher: &HomodyneDataset,
    variance: &HomodyneDataset,
    direction: Direction,
    alice_bins: usize,
    opts: &DataWitnessOptions,
) -> Result<(DataWitness, WitnessReport)> {
    let (steering, first, second, bob) = match direction {
        Direction::AliceToBob => (fisher.alice(), fisher.meta.phi_alice, variance.meta.phi_alice, fisher.meta.axis_bob),
        Direction::BobToAlice => (fisher.bob(), fisher.meta.axis_bob, variance.meta.axis_bob, fisher.meta.phi_alice),
    };
    let bins = symmetric_quantile_bins(&steering, alice_bins)?;
    let data = conditional_witness_from_data(fisher, variance, direction, &bins, opts)?;
    let state = fisher.meta.state.build()?;
    let exact = binned_witness_at(
        &state,
        &two_modes(),
        WitnessKind::Metrological,
        direction,
        first,
        second,
        bob,
        &data.alice_bins,
    )?;
    Ok((data, exact))
}

pub fn data_options(plan: &Plan) -> DataWitnessOptions {
    let mut opts = DataWitnessOptions { min_bin_count: plan.min_bin_count, ..DataWitnessOptions::default() };
    opts.fisher.seed = plan.seed;
    opts
}

fn load_checked(path: &Path) -> Result<HomodyneDataset> {
    if !path.is_file() {
        return Err(ConfigError(format!("dataset {} does not exist", path.display())).into());
    }
    load_dataset(path).with_context(|| format!("reading {}", path.display()))
}

fn direction_tag(d: Direction) -> &'static str {
    match d {
        Direction::AliceToBob => "ab",
        Direction::BobToAlice => "ba",
    }
}

pub fn estimate(plan: &Plan, out: &Path) -> Result<()> {
    if plan.datasets.is_empty() {
        return Err(ConfigError("`datasets` must list at least one {fisher, variance} pair".into()).into());
    }
    let mut loaded = Vec::new();
    for pair in &plan.datasets {
        let f = load_checked(&pair.fisher)?;
        let v = load_checked(&pair.variance)?;
        if f.meta.state != v.meta.state {
            return Err(ConfigError(format!(
                "{} and {} describe different states",
                pair.fisher.display(),
                pair.variance.display()
            ))
            .into());
        }
        loaded.push((f, v));
    }
    let jobs: Vec<(usize, Direction)> =
        (0..loaded.len()).flat_map(|i| plan.directions.iter().map(move |d| (i, *d))).collect();
    let opts = data_options(plan);
    let progress = Progress::new("estimate", jobs.len());
    let results: Vec<(DataWitness, WitnessReport)> = jobs
        .par_iter()
        .map(|&(i, d)| {
            let (f, v) = &loaded[i];
            let r = data_point(f, v, d, plan.alice_bins, &opts)?;
            progress.tick(format_args!("dataset {i} {d}: {:.4}", r.0.report.raw));
            Ok(r)
        })
        .collect::<Result<_>>()?;

    let mut header: Vec<&str> = vec!["index"];
    header.extend(&STATE_HEADER[1..]);
    header.extend([
        "direction",
        "n",
        "raw",
        "std_err",
        "z",
        "first_term",
        "second_term",
        "alice_bins",
        "exact_binned_raw",
        "report",
        "bins_file",
    ]);
    let mut rows = Vec::new();
    for (&(i, d), (data, exact)) in jobs.iter().zip(&results) {
        let stem = format!("estimate_{i}_{}", direction_tag(d));
        std::fs::write(out.join(format!("{stem}.txt")), data.to_key_value())?;
        std::fs::write(out.join(format!("{stem}_bins.csv")), data.bins_csv())?;
        let (f, _) = &loaded[i];
        let p = &f.meta.state;
        let se = data.report.std_err.unwrap_or(f64::NAN);
        rows.push(vec![
            i.to_string(),
            num(p.s1_db),
            num(p.s2_db),
            num(p.theta),
            num(p.eta),
            d.label().to_string(),
            f.len().to_string(),
            num(data.report.raw),
            num(se),
            num(data.report.raw / se),
            num(data.report.fisher_term),
            num(data.report.variance_term),
            data.bins.len().to_string(),
            num(exact.raw),
            format!("{stem}.txt"),
            format!("{stem}_bins.csv"),
        ]);
    }
    write_csv(&out.join("estimate.csv"), &header, &rows)
}
