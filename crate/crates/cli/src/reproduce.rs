//! Canned sweeps behind `steerlab reproduce`. Each figure is written as a
//! long-format CSV (`series`, x, y, y error) and an SVG drawn from that file.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use anyhow::Result;
use rayon::prelude::*;
use steerlab::discretize::{binned_witness, BinnedOptions};
use steerlab::estimator::{freedman_diaconis, symmetric_quantile_bins, Histogram};
use steerlab::sampler::{DatasetMeta, HomodyneDataset, QuadraturePair};
use steerlab::states::StateSpec;
use steerlab::witness::{evaluate_witness, Direction, WitnessKind};

use crate::commands::{data_options, data_point, generate_pair, num, point_label, two_modes, write_csv, Progress};
use crate::config::{ConfigError, Plan};
use crate::plot;

use Direction::{AliceToBob as AB, BobToAlice as BA};
use WitnessKind::{Entropic, Metrological as Metro, Reid};

const ALL_KINDS: [WitnessKind; 3] = [Metro, Reid, Entropic];

/// One plotted point.
struct Row {
    series: String,
    x: f64,
    y: f64,
    err: Option<f64>,
}

struct Figure {
    title: &'static str,
    x: &'static str,
    y: &'static str,
    rows: Vec<Row>,
}

fn grid(start: f64, stop: f64, steps: usize) -> Vec<f64> {
    (0..steps).map(|k| start + (stop - start) * k as f64 / (steps - 1) as f64).collect()
}

/// Continuum witness job: series name, x value, state, kind, direction.
type Job = (String, f64, StateSpec, WitnessKind, Direction);

fn continuum(jobs: Vec<Job>) -> Result<Vec<Row>> {
    let progress = Progress::new("reproduce", jobs.len());
    jobs.into_par_iter()
        .map(|(series, x, state, kind, dir)| {
            let r = evaluate_witness(&state.build()?, &two_modes(), kind, dir)?;
            progress.tick(format_args!("{series} x={x}: {:.6}", r.value));
            Ok(Row { series, x, y: r.value, err: None })
        })
        .collect()
}

fn kind_series(kinds: &[WitnessKind], dirs: &[Direction], xs: &[f64], state: impl Fn(f64) -> StateSpec) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &k in kinds {
        for &d in dirs {
            let name = if dirs.len() > 1 { format!("{k} {d}") } else { k.to_string() };
            jobs.extend(xs.iter().map(|&x| (name.clone(), x, state(x), k, d)));
        }
    }
    jobs
}

fn squeezing_grid() -> Vec<f64> {
    let mut s = vec![0.1];
    s.extend(grid(0.25, 6.0, 24));
    s
}

fn fig3() -> Result<Figure> {
    let xs = grid(0.25, 6.0, 24);
    let jobs = kind_series(&[Metro, Reid], &[AB], &xs, |s| StateSpec::gaussian(s, 0.0));
    Ok(Figure { title: "Gaussian EPR state", x: "s_db", y: "witness", rows: continuum(jobs)? })
}

fn fig4() -> Result<Figure> {
    let xs = grid(0.0, 0.6, 25);
    let jobs = kind_series(&[Metro, Reid], &[AB], &xs, |e| StateSpec::gaussian(3.0, e));
    Ok(Figure { title: "Gaussian EPR state, 3 dB, loss", x: "eta", y: "witness", rows: continuum(jobs)? })
}

fn fig5() -> Result<Figure> {
    let xs = grid(0.25, 6.0, 24);
    let jobs = kind_series(&ALL_KINDS, &[AB, BA], &xs, |s| StateSpec::photon_subtracted(s, s, 0.0, 0.0));
    Ok(Figure { title: "Photon-subtracted, theta = 0", x: "s_db", y: "witness", rows: continuum(jobs)? })
}

fn fig6() -> Result<Figure> {
    let xs = grid(0.0, 0.6, 25);
    let jobs = kind_series(&[Metro, Entropic], &[AB, BA], &xs, |e| StateSpec::photon_subtracted(5.0, 5.0, 0.0, e));
    Ok(Figure { title: "Photon-subtracted, theta = 0, 5 dB, loss", x: "eta", y: "witness", rows: continuum(jobs)? })
}

fn fig7() -> Result<Figure> {
    let jobs =
        kind_series(&ALL_KINDS, &[AB], &squeezing_grid(), |s| StateSpec::photon_subtracted(s, s, FRAC_PI_4, 0.0));
    Ok(Figure { title: "Photon-subtracted, theta = pi/4", x: "s_db", y: "witness", rows: continuum(jobs)? })
}

fn fig8() -> Result<Figure> {
    let xs = squeezing_grid();
    let mut jobs = Vec::new();
    let curves: [(&str, bool, f64, Direction); 4] = [
        ("gaussian", false, 0.0, AB),
        ("theta=0 A->B", true, 0.0, AB),
        ("theta=0 B->A", true, 0.0, BA),
        ("theta=pi/4", true, FRAC_PI_4, AB),
    ];
    for (name, sub, theta, d) in curves {
        for &s in &xs {
            let state = if sub { StateSpec::photon_subtracted(s, s, theta, 0.0) } else { StateSpec::gaussian(s, 0.0) };
            jobs.push((name.to_string(), s, state, Metro, d));
        }
    }
    Ok(Figure { title: "Metrological witness comparison", x: "s_db", y: "witness", rows: continuum(jobs)? })
}

const FIG9_BINS: [usize; 4] = [3, 5, 7, 13];

fn binned_sweep(xs: &[f64], state: impl Fn(f64) -> StateSpec + Sync) -> Result<Vec<Row>> {
    let opts = BinnedOptions::default();
    let jobs: Vec<(usize, f64)> =
        FIG9_BINS.iter().copied().chain([0]).flat_map(|n| xs.iter().map(move |&x| (n, x))).collect();
    let progress = Progress::new("reproduce", jobs.len());
    jobs.into_par_iter()
        .map(|(n, x)| {
            let st = state(x).build()?;
            let (series, r) = if n == 0 {
                ("continuum".to_string(), evaluate_witness(&st, &two_modes(), Metro, BA)?)
            } else {
                (format!("{n} bins"), binned_witness(&st, &two_modes(), n, Metro, BA, &opts)?)
            };
            progress.tick(format_args!("{series} x={x}: {:.6}", r.value));
            Ok(Row { series, x, y: r.value, err: None })
        })
        .collect()
}

fn fig9() -> Result<Figure> {
    let xs = grid(1.0, 6.0, 6);
    let rows = binned_sweep(&xs, |s| StateSpec::photon_subtracted(s, s, FRAC_PI_4, 0.0))?;
    Ok(Figure { title: "Binned witness, theta = pi/4", x: "s_db", y: "witness", rows })
}

fn fig10() -> Result<Figure> {
    let xs = grid(0.0, 0.12, 7);
    let rows = binned_sweep(&xs, |e| StateSpec::photon_subtracted(4.0, 4.0, FRAC_PI_4, e))?;
    Ok(Figure { title: "Binned witness, theta = pi/4, 4 dB, loss", x: "eta", y: "witness", rows })
}

const DATA_S1: f64 = 3.2;
const DATA_S2: f64 = 2.6;

fn density_rows(series: &str, samples: &[f64], h: &Histogram, rows: &mut Vec<Row>) {
    let n = samples.len() as f64;
    for (k, &c) in h.counts.iter().enumerate() {
        let (lo, hi) = h.partition.bin(k);
        if lo.is_finite() && hi.is_finite() {
            rows.push(Row { series: series.into(), x: 0.5 * (lo + hi), y: c as f64 / (n * (hi - lo)), err: None });
        }
    }
}

fn fig11(plan: &Plan) -> Result<Figure> {
    let state = StateSpec::photon_subtracted(DATA_S1, DATA_S2, FRAC_PI_4, 0.0);
    eprintln!("[reproduce] sampling {} ({} points)", point_label(&state), plan.samples);
    let data = HomodyneDataset::generate(DatasetMeta::new(state, QuadraturePair::QQ, plan.samples, plan.seed))?;
    let alice = data.alice();
    let bins = symmetric_quantile_bins(&alice, plan.alice_bins)?;
    let mut rows = Vec::new();
    // the steering bins are coarse and unbounded at both ends, so Alice's density is drawn on a finer grid
    let fine = freedman_diaconis(&alice)?;
    density_rows("alice", &alice, &Histogram::from_samples(&alice, &fine), &mut rows);
    for k in 0..bins.n_bins() {
        let (lo, hi) = bins.bin(k);
        let bob: Vec<f64> = data.samples.iter().filter(|(a, _)| *a >= lo && *a < hi).map(|(_, b)| *b).collect();
        let part = freedman_diaconis(&bob)?;
        density_rows(&format!("bob | bin {}", k + 1), &bob, &Histogram::from_samples(&bob, &part), &mut rows);
    }
    Ok(Figure { title: "Alice histogram and conditional histograms of Bob", x: "quadrature", y: "density", rows })
}

fn data_sweep(plan: &Plan, theta: f64, xs: &[f64]) -> Result<Vec<Row>> {
    let opts = data_options(plan);
    let progress = Progress::new("reproduce", xs.len());
    let per_eta: Vec<Vec<Row>> = xs
        .par_iter()
        .enumerate()
        .map(|(i, &eta)| {
            let state = StateSpec::photon_subtracted(DATA_S1, DATA_S2, theta, eta);
            let (qq, pp) = generate_pair(state, plan.samples, plan.seed, i)?;
            let mut rows = Vec::new();
            for d in [AB, BA] {
                let (data, exact) = data_point(&qq, &pp, d, plan.alice_bins, &opts)?;
                rows.push(Row { series: format!("data {d}"), x: eta, y: data.report.raw, err: data.report.std_err });
                rows.push(Row { series: format!("exact binned {d}"), x: eta, y: exact.raw, err: None });
            }
            progress.tick(point_label(&state));
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Row> = per_eta.into_iter().flatten().collect();
    // group by series, keeping the eta order inside each
    rows.sort_by(|a, b| a.series.cmp(&b.series).then(a.x.total_cmp(&b.x)));
    Ok(rows)
}

fn fig12(plan: &Plan) -> Result<Figure> {
    let rows = data_sweep(plan, 0.0, &grid(0.0, 0.06, 7))?;
    Ok(Figure { title: "Sampled data, theta = 0", x: "eta", y: "raw_witness", rows })
}

fn fig13(plan: &Plan) -> Result<Figure> {
    let rows = data_sweep(plan, FRAC_PI_4, &grid(0.0, 0.1, 6))?;
    Ok(Figure { title: "Sampled data, theta = pi/4", x: "eta", y: "raw_witness", rows })
}

pub fn run(plan: &Plan, out: &Path) -> Result<()> {
    let id = plan.figure.ok_or_else(|| ConfigError("`figure` is required for reproduce".into()))?;
    let fig = match id {
        3 => fig3(),
        4 => fig4(),
        5 => fig5(),
        6 => fig6(),
        7 => fig7(),
        8 => fig8(),
        9 => fig9(),
        10 => fig10(),
        11 => fig11(plan),
        12 => fig12(plan),
        13 => fig13(plan),
        _ => return Err(ConfigError(format!("unknown figure {id}")).into()),
    }?;
    let err_name = "std_err";
    let rows: Vec<Vec<String>> = fig
        .rows
        .iter()
        .map(|r| vec![r.series.clone(), num(r.x), num(r.y), r.err.map(num).unwrap_or_default()])
        .collect();
    let csv_path = out.join(format!("fig{id}.csv"));
    write_csv(&csv_path, &["series", fig.x, fig.y, err_name], &rows)?;
    let svg = plot::render_csv(&csv_path, fig.x, fig.y, Some(err_name), &["series"], fig.title)?;
    std::fs::write(out.join(format!("fig{id}.svg")), svg)?;
    Ok(())
}
