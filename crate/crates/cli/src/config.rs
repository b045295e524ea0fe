//! JSON sweep configuration and its validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use steerlab::states::StateSpec;
use steerlab::witness::{Direction, WitnessKind};

/// Invalid or unreadable configuration. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// A scalar, an explicit list, or `{start, stop, steps}` (inclusive, evenly spaced).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Range {
    Value(f64),
    List(Vec<f64>),
    Linear { start: f64, stop: f64, steps: usize },
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Range::Value(v) => vec![*v],
            Range::List(v) => v.clone(),
            Range::Linear { start, stop, steps } => match steps {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    #[default]
    Subtracted,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Subtracted => "subtracted",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPair {
    /// Dataset used for the Fisher term (normally the `qq` pair).
    pub fisher: PathBuf,
    /// Dataset used for the variance term (normally the `pp` pair).
    pub variance: PathBuf,
}

fn default_s1() -> Range {
    Range::Value(3.0)
}
fn zero() -> Range {
    Range::Value(0.0)
}
fn default_kinds() -> Vec<String> {
    vec!["metrological".into()]
}
fn default_directions() -> Vec<String> {
    vec!["A->B".into()]
}
fn default_bins() -> Vec<usize> {
    vec![3, 5, 7, 13]
}
fn yes() -> bool {
    true
}
fn default_samples() -> usize {
    100_000
}
fn default_seed() -> u64 {
    1
}
fn default_alice_bins() -> usize {
    9
}
fn default_min_bin_count() -> usize {
    500
}

/// Raw configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub family: Family,
    #[serde(default = "default_s1")]
    pub s1_db: Range,
    /// Omitted: each point uses `s2_db = s1_db`.
    pub s2_db: Option<Range>,
    #[serde(default = "zero")]
    pub theta: Range,
    #[serde(default = "zero")]
    pub eta: Range,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<String>,
    #[serde(default = "default_directions")]
    pub directions: Vec<String>,
    #[serde(default = "default_bins")]
    pub bins: Vec<usize>,
    #[serde(default = "yes")]
    pub shared_edges: bool,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_alice_bins")]
    pub alice_bins: usize,
    #[serde(default = "default_min_bin_count")]
    pub min_bin_count: usize,
    #[serde(default)]
    pub datasets: Vec<DatasetPair>,
    pub figure: Option<u32>,
    #[serde(default)]
    pub svg: bool,
}

/// Validated configuration with the state grid expanded.
#[derive(Debug, Clone)]
pub struct Plan {
    pub family: Family,
    pub points: Vec<StateSpec>,
    pub kinds: Vec<WitnessKind>,
    pub directions: Vec<Direction>,
    pub bins: Vec<usize>,
    pub shared_edges: bool,
    pub samples: usize,
    pub seed: u64,
    pub alice_bins: usize,
    pub min_bin_count: usize,
    pub datasets: Vec<DatasetPair>,
    pub figure: Option<u32>,
    pub svg: bool,
}

pub fn load(path: &Path, seed: Option<u64>) -> Result<Plan, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let raw: SweepConfig = serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    validate(raw, base, seed)
}

fn checked(name: &str, r: &Range, lo: f64, hi: f64) -> Result<Vec<f64>, ConfigError> {
    let v = r.values();
    if v.is_empty() {
        return invalid(format!("`{name}` is empty"));
    }
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= lo && **x <= hi)) {
        return invalid(format!("`{name}` value {x} outside [{lo}, {hi}]"));
    }
    Ok(v)
}

fn parse_all<T: std::str::FromStr>(name: &str, items: &[String]) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    if items.is_empty() {
        return invalid(format!("`{name}` is empty"));
    }
    items.iter().map(|s| s.parse().map_err(|e| ConfigError(format!("`{name}`: {e}")))).collect()
}

pub fn validate(raw: SweepConfig, base: &Path, seed: Option<u64>) -> Result<Plan, ConfigError> {
    let s1 = checked("s1_db", &raw.s1_db, 0.0, 40.0)?;
    let s2 = raw.s2_db.as_ref().map(|r| checked("s2_db", r, 0.0, 40.0)).transpose()?;
    let theta = checked("theta", &raw.theta, -10.0, 10.0)?;
    let eta = checked("eta", &raw.eta, 0.0, 1.0)?;
    let kinds = parse_all("kinds", &raw.kinds)?;
    let directions = parse_all("directions", &raw.directions)?;
    if raw.family == Family::Gaussian && (s2.is_some() || theta.iter().any(|t| *t != 0.0)) {
        return invalid("the gaussian family takes only `s1_db` and `eta`");
    }
    if raw.bins.is_empty() || raw.bins.iter().any(|&n| n < 2) {
        return invalid("`bins` must be a non-empty list of counts >= 2");
    }
    if raw.samples < 100 {
        return invalid("`samples` must be at least 100");
    }
    if raw.alice_bins < 1 {
        return invalid("`alice_bins` must be positive");
    }
    if let Some(f) = raw.figure {
        if !(3..=13).contains(&f) {
            return invalid(format!("unknown figure {f}; expected 3..=13"));
        }
    }

    let mut points = Vec::new();
    for &a in &s1 {
        let seconds = s2.clone().unwrap_or_else(|| vec![a]);
        for &b in &seconds {
            for &t in &theta {
                for &e in &eta {
                    points.push(match raw.family {
                        Family::Gaussian => StateSpec::gaussian(a, e),
                        Family::Subtracted => StateSpec::photon_subtracted(a, b, t, e),
                    });
                }
            }
        }
    }
    if raw.family == Family::Subtracted && points.iter().any(|p| p.s1_db == 0.0 && p.s2_db == 0.0) {
        return invalid("photon subtraction needs nonzero squeezing");
    }
    let datasets = raw
        .datasets
        .into_iter()
        .map(|d| DatasetPair { fisher: base.join(d.fisher), variance: base.join(d.variance) })
        .collect();

    Ok(Plan {
        family: raw.family,
        points,
        kinds,
        directions,
        bins: raw.bins,
        shared_edges: raw.shared_edges,
        samples: raw.samples,
        seed: seed.unwrap_or(raw.seed),
        alice_bins: raw.alice_bins,
        min_bin_count: raw.min_bin_count,
        datasets,
        figure: raw.figure,
        svg: raw.svg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> Result<Plan, ConfigError> {
        validate(serde_json::from_str(json).map_err(|e| ConfigError(e.to_string()))?, Path::new("."), None)
    }

    #[test]
    fn ranges_expand() {
        let p = parse(r#"{"s1_db": {"start": 1, "stop": 3, "steps": 3}, "eta": [0, 0.1]}"#).unwrap();
        assert_eq!(p.points.len(), 6);
        assert_eq!(p.points[5].s1_db, 3.0);
        assert_eq!(p.points[5].s2_db, 3.0);
        assert_eq!(p.points[5].eta, 0.1);
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(parse(r#"{"eta": 1.5}"#).is_err());
        assert!(parse(r#"{"eta": []}"#).is_err());
        assert!(parse(r#"{"kinds": ["bogus"]}"#).is_err());
        assert!(parse(r#"{"unknown": 1}"#).is_err());
        assert!(parse(r#"{"figure": 2}"#).is_err());
        assert!(parse(r#"{"family": "gaussian", "theta": 0.3}"#).is_err());
        assert!(parse(r#"{"s1_db": 0}"#).is_err());
    }

    #[test]
    fn seed_override() {
        let raw = serde_json::from_str(r#"{"seed": 4}"#).unwrap();
        assert_eq!(validate(raw, Path::new("."), Some(9)).unwrap().seed, 9);
    }

    #[test]
    fn shipped_examples_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "json") {
                load(&path, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                seen += 1;
            }
        }
        assert!(seen >= 5);
    }
}
