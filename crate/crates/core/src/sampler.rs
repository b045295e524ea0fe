//! Synthetic homodyne data: rejection sampling from exact joint quadrature
//! densities, and a plain-text dataset format.
//!
//! Samples are generated in fixed-size chunks, each driven by its own
//! ChaCha8 stream, so a dataset depends only on its seed and length and not
//! on the number of worker threads.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::gauss_poly::{GaussPolyState, JointDensity2D};
use crate::phase_space::{quadrature_axis, PhaseSpaceVector};
use crate::states::StateSpec;

const CHUNK: usize = 4096;
/// Envelope inflation, and the fallback used when acceptance is too low.
const KAPPA: f64 = 1.5;
const KAPPA_FALLBACK: f64 = 2.0;
const MIN_ACCEPTANCE: f64 = 0.2;
const BOUND_GRID: usize = 401;
const BOUND_SIGMAS: f64 = 8.0;
const BOUND_MARGIN: f64 = 1.05;

/// Joint density of two quadratures measured on distinct modes.
pub fn joint_density(
    state: &GaussPolyState,
    alice_axis: &PhaseSpaceVector,
    bob_axis: &PhaseSpaceVector,
) -> Result<JointDensity2D> {
    let a = alice_axis.support();
    let b = bob_axis.support();
    if a.iter().any(|m| b.contains(m)) {
        return domain("the two axes must act on distinct modes");
    }
    state.joint_2d(alice_axis.as_slice(), bob_axis.as_slice())
}

/// Bivariate Gaussian proposal `N(μ, κV)` with a bound `C ≥ p/g`.
struct Envelope {
    mean: [f64; 2],
    /// Cholesky factor of `κV`.
    chol: [[f64; 2]; 2],
    inv: [[f64; 2]; 2],
    log_norm: f64,
    bound: f64,
}

impl Envelope {
    fn new(density: &JointDensity2D, kappa: f64) -> Result<Self> {
        let st = density.state();
        let (mu, v) = (st.mean(), st.cov());
        let (a, b, c) = (kappa * v[(0, 0)], kappa * v[(0, 1)], kappa * v[(1, 1)]);
        let det = a * c - b * b;
        if !(a > 0.0 && det > 0.0) {
            return Err(Error::Envelope("covariance is not positive definite".into()));
        }
        let l00 = a.sqrt();
        let l10 = b / l00;
        let l11 = (c - l10 * l10).sqrt();
        let mut env = Self {
            mean: [mu[0], mu[1]],
            chol: [[l00, 0.0], [l10, l11]],
            inv: [[c / det, -b / det], [-b / det, a / det]],
            log_norm: -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln(),
            bound: 0.0,
        };
        let mut ratio: f64 = 0.0;
        let h = 2.0 * BOUND_SIGMAS / (BOUND_GRID - 1) as f64;
        for i in 0..BOUND_GRID {
            for j in 0..BOUND_GRID {
                // grid over ±8 proposal standard deviations in whitened coordinates
                let u = [-BOUND_SIGMAS + h * i as f64, -BOUND_SIGMAS + h * j as f64];
                let x = env.point(u);
                ratio = ratio.max(density.evaluate(x[0], x[1]) / env.density(x));
            }
        }
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::Envelope(format!("density/envelope bound {ratio} is unusable")));
        }
        env.bound = ratio * BOUND_MARGIN;
        Ok(env)
    }

    fn point(&self, u: [f64; 2]) -> [f64; 2] {
        let l = &self.chol;
        [self.mean[0] + l[0][0] * u[0], self.mean[1] + l[1][0] * u[0] + l[1][1] * u[1]]
    }

    fn density(&self, x: [f64; 2]) -> f64 {
        let d = [x[0] - self.mean[0], x[1] - self.mean[1]];
        let q = self.inv[0][0] * d[0] * d[0] + 2.0 * self.inv[0][1] * d[0] * d[1] + self.inv[1][1] * d[1] * d[1];
        (self.log_norm - 0.5 * q).exp()
    }
}

/// Samples and the number of proposals it took to draw them.
#[derive(Debug, Clone)]
pub struct SampleDraw {
    pub samples: Vec<(f64, f64)>,
    pub proposals: u64,
    /// Envelope inflation actually used.
    pub kappa: f64,
}

impl SampleDraw {
    pub fn acceptance(&self) -> f64 {
        self.samples.len() as f64 / self.proposals as f64
    }
}

/// Draws `n` i.i.d. samples from `density` by rejection from an inflated
/// Gaussian envelope.
pub fn rejection_sample(density: &JointDensity2D, n: usize, seed: u64) -> Result<SampleDraw> {
    if n == 0 {
        return domain("at least one sample is required");
    }
    let mut kappa = KAPPA;
    let mut env = Envelope::new(density, kappa)?;
    // the expected acceptance of rejection sampling is exactly 1/C
    if 1.0 / env.bound < MIN_ACCEPTANCE {
        kappa = KAPPA_FALLBACK;
        env = Envelope::new(density, kappa)?;
    }
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<(Vec<(f64, f64)>, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let want = CHUNK.min(n - c * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut out = Vec::with_capacity(want);
            let mut proposals = 0u64;
            while out.len() < want {
                proposals += 1;
                let u = [rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)];
                let x = env.point(u);
                let accept: f64 = rng.random();
                if accept * env.bound * env.density(x) < density.evaluate(x[0], x[1]) {
                    out.push((x[0], x[1]));
                }
            }
            (out, proposals)
        })
        .collect();
    let proposals = parts.iter().map(|p| p.1).sum();
    let samples = parts.into_iter().flat_map(|p| p.0).collect();
    Ok(SampleDraw { samples, proposals, kappa })
}

/// Which quadrature both parties measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadraturePair {
    /// Both parties measure `q` (angle 0).
    QQ,
    /// Both parties measure `p` (angle π/2).
    PP,
}

impl QuadraturePair {
    pub fn angle(self) -> f64 {
        match self {
            QuadraturePair::QQ => 0.0,
            QuadraturePair::PP => std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QuadraturePair::QQ => "qq",
            QuadraturePair::PP => "pp",
        }
    }
}

impl FromStr for QuadraturePair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qq" => Ok(Self::QQ),
            "pp" => Ok(Self::PP),
            _ => Err(Error::Domain(format!("unknown quadrature pair `{s}`"))),
        }
    }
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub state: StateSpec,
    /// Measurement angle on mode 0 (the `x_alice` column).
    pub phi_alice: f64,
    /// Measurement angle on mode 1 (the `x_bob` column).
    pub axis_bob: f64,
    pub n: usize,
    pub seed: u64,
    pub pair: QuadraturePair,
    /// Header entries not interpreted by this crate, in file order.
    pub extra: Vec<(String, String)>,
}

impl DatasetMeta {
    pub fn new(state: StateSpec, pair: QuadraturePair, n: usize, seed: u64) -> Self {
        Self { state, phi_alice: pair.angle(), axis_bob: pair.angle(), n, seed, pair, extra: Vec::new() }
    }
}

/// Paired homodyne outcomes `(x_alice, x_bob)` with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneDataset {
    pub samples: Vec<(f64, f64)>,
    pub meta: DatasetMeta,
}

impl HomodyneDataset {
    /// Samples the dataset described by `meta`.
    pub fn generate(meta: DatasetMeta) -> Result<Self> {
        let state = meta.state.build()?;
        let modes = state.mode_count();
        let a = quadrature_axis(0, meta.phi_alice, modes)?;
        let b = quadrature_axis(1, meta.axis_bob, modes)?;
        let density = joint_density(&state, &a, &b)?;
        let draw = rejection_sample(&density, meta.n, meta.seed)?;
        Ok(Self { samples: draw.samples, meta })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn alice(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn bob(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    /// The dataset with the two columns exchanged.
    pub fn swapped(&self) -> Self {
        let mut meta = self.meta.clone();
        std::mem::swap(&mut meta.phi_alice, &mut meta.axis_bob);
        Self { samples: self.samples.iter().map(|&(a, b)| (b, a)).collect(), meta }
    }

    pub fn to_csv_string(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        let state_kind = if m.state.subtracted { "subtracted" } else { "gaussian" };
        let header = [
            ("state", state_kind.to_string()),
            ("s1_db", fmt_real(m.state.s1_db)),
            ("s2_db", fmt_real(m.state.s2_db)),
            ("theta", fmt_real(m.state.theta)),
            ("eta", fmt_real(m.state.eta)),
            ("phi_alice", fmt_real(m.phi_alice)),
            ("axis_bob", fmt_real(m.axis_bob)),
            ("n", self.samples.len().to_string()),
            ("seed", m.seed.to_string()),
            ("quadrature_pair", m.pair.name().to_string()),
        ];
        for (k, v) in
            header.iter().map(|(k, v)| (*k, v.as_str())).chain(m.extra.iter().map(|(k, v)| (k.as_str(), v.as_str())))
        {
            let _ = writeln!(out, "# {k}={v}");
        }
        for (a, b) in &self.samples {
            let _ = writeln!(out, "{},{}", fmt_real(*a), fmt_real(*b));
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        parse_dataset(text.lines().map(|l| Ok(l.to_string())))
    }
}

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

const REQUIRED: [&str; 9] = ["s1_db", "s2_db", "theta", "eta", "phi_alice", "axis_bob", "n", "seed", "quadrature_pair"];

fn parse_dataset<I: Iterator<Item = std::io::Result<String>>>(lines: I) -> Result<HomodyneDataset> {
    let mut header: Vec<(String, String, usize)> = Vec::new();
    let mut samples = Vec::new();
    let mut last_line = 0;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let no = i + 1;
        last_line = no;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            if !samples.is_empty() {
                return Err(Error::Parse { line: no, msg: "header line after data".into() });
            }
            let (k, v) =
                rest.split_once('=').ok_or_else(|| Error::Parse { line: no, msg: "expected `# key=value`".into() })?;
            header.push((k.trim().to_string(), v.trim().to_string(), no));
            continue;
        }
        if samples.is_empty() && t == "x_alice,x_bob" {
            continue;
        }
        let (a, b) = t
            .split_once(',')
            .ok_or_else(|| Error::Parse { line: no, msg: "expected two comma-separated values".into() })?;
        let parse = |s: &str| -> Result<f64> {
            match s.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(Error::Parse { line: no, msg: format!("invalid sample value `{}`", s.trim()) }),
            }
        };
        samples.push((parse(a)?, parse(b)?));
    }
    let get = |key: &str| -> Result<(&str, usize)> {
        header
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("missing header key `{key}`") })
    };
    let real = |key: &str| -> Result<f64> {
        let (v, l) = get(key)?;
        v.parse::<f64>().map_err(|_| Error::Parse { line: l, msg: format!("`{key}` is not a number") })
    };
    let int = |key: &str| -> Result<u64> {
        let (v, l) = get(key)?;
        v.parse::<u64>().map_err(|_| Error::Parse { line: l, msg: format!("`{key}` is not an unsigned integer") })
    };
    let subtracted = match get("state") {
        Ok(("subtracted", _)) | Err(_) => true,
        Ok(("gaussian", _)) => false,
        Ok((other, l)) => return Err(Error::Parse { line: l, msg: format!("unknown state `{other}`") }),
    };
    let state = StateSpec {
        s1_db: real("s1_db")?,
        s2_db: real("s2_db")?,
        theta: real("theta")?,
        eta: real("eta")?,
        subtracted,
    };
    let n = int("n")? as usize;
    if n != samples.len() {
        return Err(Error::Parse {
            line: last_line,
            msg: format!("header declares {n} samples, found {}", samples.len()),
        });
    }
    if n == 0 {
        return Err(Error::Parse { line: last_line, msg: "dataset has no samples".into() });
    }
    let (pair, pair_line) = get("quadrature_pair")?;
    let pair =
        pair.parse().map_err(|_| Error::Parse { line: pair_line, msg: format!("unknown quadrature pair `{pair}`") })?;
    let extra = header
        .iter()
        .filter(|(k, _, _)| k != "state" && !REQUIRED.contains(&k.as_str()))
        .map(|(k, v, _)| (k.clone(), v.clone()))
        .collect();
    let meta = DatasetMeta {
        state,
        phi_alice: real("phi_alice")?,
        axis_bob: real("axis_bob")?,
        n,
        seed: int("seed")?,
        pair,
        extra,
    };
    Ok(HomodyneDataset { samples, meta })
}

pub fn save_dataset(d: &HomodyneDataset, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(d.to_csv_string().as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<HomodyneDataset> {
    let f = std::fs::File::open(path)?;
    parse_dataset(BufReader::new(f).lines())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{epr_covariance, CovarianceMatrix};

    #[test]
    fn joint_density_examples() {
        let vac = GaussPolyState::gaussian(&CovarianceMatrix::vacuum(2)).unwrap();
        let q0 = quadrature_axis(0, 0.0, 2).unwrap();
        let q1 = quadrature_axis(1, 0.0, 2).unwrap();
        let p0 = quadrature_axis(0, 1.0, 2).unwrap();
        let j = joint_density(&vac, &q0, &q1).unwrap();
        let n = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((j.evaluate(0.3, -1.1) - n(0.3) * n(-1.1)).abs() < 1e-14);
        assert!(joint_density(&vac, &q0, &p0).is_err());

        let s = 3.0;
        let r: f64 = 10f64.powf(s / 10.0);
        let epr = GaussPolyState::gaussian(&epr_covariance(s, s)).unwrap();
        let j = joint_density(&epr, &q0, &q1).unwrap();
        assert!((j.gaussian_correlation() + (r - 1.0 / r) / (r + 1.0 / r)).abs() < 1e-12);
    }

    #[test]
    fn envelope_bounds_target() {
        let w = StateSpec::photon_subtracted(6.0, 6.0, std::f64::consts::FRAC_PI_4, 0.0).build().unwrap();
        let j = joint_density(&w, &quadrature_axis(0, 0.0, 2).unwrap(), &quadrature_axis(1, 0.0, 2).unwrap()).unwrap();
        let env = Envelope::new(&j, KAPPA).unwrap();
        assert!(1.0 / env.bound >= MIN_ACCEPTANCE, "acceptance {}", 1.0 / env.bound);
        for i in -40..=40 {
            for k in -40..=40 {
                let x = [0.37 * i as f64, 0.29 * k as f64];
                assert!(j.evaluate(x[0], x[1]) <= env.bound * env.density(x));
            }
        }
    }

    #[test]
    fn header_parsing() {
        let text = "# s1_db=3\n# s2_db=3\n# theta=0\n# eta=0\n# phi_alice=0\n# axis_bob=0\n# n=2\n# seed=7\n# quadrature_pair=qq\n# operator=test\n1.0,2.0\n-0.5,0.25\n";
        let d = HomodyneDataset::from_csv_str(text).unwrap();
        assert_eq!(d.samples, vec![(1.0, 2.0), (-0.5, 0.25)]);
        assert!(d.meta.state.subtracted);
        assert_eq!(d.meta.extra, vec![("operator".to_string(), "test".to_string())]);
        let again = HomodyneDataset::from_csv_str(&d.to_csv_string()).unwrap();
        assert_eq!(again, d);

        let missing = text.replace("# seed=7\n", "");
        assert!(matches!(HomodyneDataset::from_csv_str(&missing), Err(Error::Parse { .. })));
        let bad = text.replace("-0.5,0.25", "-0.5;0.25");
        assert!(matches!(HomodyneDataset::from_csv_str(&bad), Err(Error::Parse { line: 12, .. })));
        let short = text.replace("# n=2", "# n=3");
        assert!(HomodyneDataset::from_csv_str(&short).is_err());
    }
}
