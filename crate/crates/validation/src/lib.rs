//! Minimal runner for the acceptance criteria in `tests/acceptance.rs`.
//!
//! Each criterion records named checks. The runner prints one PASS/FAIL line
//! per criterion followed by its checks, and fails the process if any
//! criterion failed, errored or overran its time budget.

use std::process::ExitCode;
use std::time::{Duration, Instant};

/// Check results collected by one criterion.
#[derive(Debug, Default)]
pub struct Checks {
    lines: Vec<(bool, String)>,
}

impl Checks {
    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.lines.push((ok, what.into()));
    }

    pub fn all_passed(&self) -> bool {
        self.lines.iter().all(|l| l.0)
    }
}

pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub budget: Option<Duration>,
    pub run: fn(&mut Checks) -> steerlab::Result<()>,
}

pub fn minutes(m: u64) -> Option<Duration> {
    Some(Duration::from_secs(60 * m))
}

/// Runs the criteria whose ids appear in `selected` (all of them when empty).
pub fn run_criteria(criteria: &[Criterion], selected: &[u32]) -> ExitCode {
    let mut failed = Vec::new();
    let mut ran = 0;
    for cr in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let mut checks = Checks::default();
        let outcome = (cr.run)(&mut checks);
        let elapsed = start.elapsed();
        let in_budget = cr.budget.map_or(true, |b| elapsed <= b);
        let ok = outcome.is_ok() && in_budget && checks.all_passed();
        let budget = cr.budget.map_or(String::new(), |b| format!(", budget {}s", b.as_secs()));
        println!(
            "criterion {} {}: {} ({:.1}s{budget})",
            cr.id,
            cr.title,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        for (pass, line) in &checks.lines {
            println!("    [{}] {line}", if *pass { "ok" } else { "FAIL" });
        }
        if let Err(e) = outcome {
            println!("    [FAIL] error: {e}");
        }
        if !in_budget {
            println!("    [FAIL] runtime exceeded");
        }
        ran += 1;
        if !ok {
            failed.push(cr.id);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
