//! Fixture checks and randomized bound suites with a pass/fail report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pve_core::checks::{bound_suites, fixture_checks, monte_carlo_checks, BoundRow, CheckResult, FixtureConfig};

use crate::config::{Config, Settings};
use crate::error::{LabError, LabResult};
use crate::output::{num, prepare_run_dir, Csv};

pub const SECTION: &str = "verify";
const KEYS: [&str; 9] = [
    "suite",
    "count",
    "teleport_eps",
    "mc_cases",
    "mc_samples",
    "ring_len",
    "ring_discount",
    "ring_samples",
    "false_ring_scale",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Props,
    Bounds,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> LabResult<Self> {
        match s {
            "props" => Ok(Suite::Props),
            "bounds" => Ok(Suite::Bounds),
            "all" => Ok(Suite::All),
            _ => Err(LabError::Config(format!("suite must be props, bounds or all, got {s:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Props => "props",
            Suite::Bounds => "bounds",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    pub suite: Suite,
    pub count: usize,
    pub teleport_eps: f64,
    pub mc_cases: usize,
    pub mc_samples: usize,
    pub fixtures: FixtureConfig,
    pub seed: u64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            suite: Suite::All,
            count: 200,
            teleport_eps: pve_core::analysis::DEFAULT_TELEPORT_EPS,
            mc_cases: 3,
            mc_samples: 100_000,
            fixtures: FixtureConfig::default(),
            seed: 0,
        }
    }
}

impl VerifySettings {
    /// `suite` and `count` override the config file when given.
    pub fn from_config(config: &Config, seed: u64, suite: Option<Suite>, count: Option<usize>) -> LabResult<Self> {
        config.check_keys(SECTION, &KEYS)?;
        let d = Self::default();
        let suite = match (suite, config.get(SECTION, "suite")) {
            (Some(s), _) => s,
            (None, Some(raw)) => Suite::parse(raw)?,
            (None, None) => d.suite,
        };
        let fixtures = FixtureConfig {
            seed,
            samples: config.value(SECTION, "ring_samples", d.fixtures.samples)?,
            ring_len: config.value(SECTION, "ring_len", d.fixtures.ring_len)?,
            discount: config.value(SECTION, "ring_discount", d.fixtures.discount)?,
            false_ring_scale: config.value(SECTION, "false_ring_scale", d.fixtures.false_ring_scale)?,
        };
        let s = Self {
            suite,
            count: match count {
                Some(c) => c,
                None => config.value(SECTION, "count", d.count)?,
            },
            teleport_eps: config.value(SECTION, "teleport_eps", d.teleport_eps)?,
            mc_cases: config.value(SECTION, "mc_cases", d.mc_cases)?,
            mc_samples: config.value(SECTION, "mc_samples", d.mc_samples)?,
            fixtures,
            seed,
        };
        if s.fixtures.ring_len < 2 {
            return Err(LabError::Config(format!("[{SECTION}] ring_len must be >= 2")));
        }
        if s.mc_cases > 0 && s.mc_samples < 2 {
            return Err(LabError::Config(format!("[{SECTION}] mc_samples must be >= 2")));
        }
        Ok(s)
    }

    pub fn record(&self) -> Settings {
        let mut s = Settings::default();
        s.push("seed", self.seed);
        s.push("suite", self.suite.name());
        s.push("count", self.count);
        s.push("teleport_eps", self.teleport_eps);
        s.push("mc_cases", self.mc_cases);
        s.push("mc_samples", self.mc_samples);
        s.push("ring_len", self.fixtures.ring_len);
        s.push("ring_discount", self.fixtures.discount);
        s.push("ring_samples", self.fixtures.samples);
        s.push("false_ring_scale", self.fixtures.false_ring_scale);
        s
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOutput {
    pub checks: Vec<CheckResult>,
    pub bounds: Vec<BoundRow>,
    pub report: String,
}

impl VerifyOutput {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count() + self.bounds.iter().filter(|b| !b.report.satisfied).count()
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn checks_csv(&self) -> Csv {
        let mut csv = Csv::new(&["check", "value", "relation", "threshold", "passed"]);
        for c in &self.checks {
            csv.row(&[
                c.name.clone(),
                num(c.value),
                c.relation.symbol().to_string(),
                num(c.threshold),
                c.passed.to_string(),
            ]);
        }
        csv
    }

    pub fn bounds_csv(&self) -> Csv {
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        let mut csv = Csv::new(&["suite", "seed", "case", "lhs", "rhs", "g", "a", "b", "satisfied"]);
        for row in &self.bounds {
            let r = &row.report;
            csv.row(&[
                row.suite.to_string(),
                row.seed.to_string(),
                row.case.to_string(),
                num(r.lhs),
                num(r.rhs),
                opt(r.g),
                opt(r.a),
                opt(r.b),
                r.satisfied.to_string(),
            ]);
        }
        csv
    }

    pub fn components_csv(&self) -> Csv {
        let mut csv = Csv::new(&["suite", "seed", "case", "component", "value"]);
        for row in &self.bounds {
            for (name, value) in &row.report.components {
                csv.row(&[
                    row.suite.to_string(),
                    row.seed.to_string(),
                    row.case.to_string(),
                    name.to_string(),
                    num(*value),
                ]);
            }
        }
        csv
    }
}

pub fn run_verify(s: &VerifySettings) -> LabResult<VerifyOutput> {
    let mut checks = Vec::new();
    let mut bounds = Vec::new();
    if matches!(s.suite, Suite::Props | Suite::All) {
        checks.extend(fixture_checks(&s.fixtures)?);
    }
    if matches!(s.suite, Suite::Bounds | Suite::All) {
        bounds = bound_suites(s.seed, s.count, s.teleport_eps)?;
        checks.extend(monte_carlo_checks(s.seed, s.mc_cases.min(s.count), s.mc_samples, s.teleport_eps)?);
    }

    let mut report = String::new();
    let _ = writeln!(report, "seed {}", s.seed);
    for c in &checks {
        let _ = writeln!(
            report,
            "{} {}: {:e} {} {:e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation.symbol(),
            c.threshold
        );
    }
    for suite in pve_core::checks::BOUND_SUITES {
        let rows: Vec<&BoundRow> = bounds.iter().filter(|b| b.suite == suite).collect();
        if rows.is_empty() {
            continue;
        }
        let failed: Vec<&&BoundRow> = rows.iter().filter(|b| !b.report.satisfied).collect();
        let _ = writeln!(
            report,
            "{} bounds/{suite}: {} of {} tuples satisfied",
            if failed.is_empty() { "PASS" } else { "FAIL" },
            rows.len() - failed.len(),
            rows.len()
        );
        for b in failed {
            let _ = writeln!(
                report,
                "  violation: seed {} case {}: lhs {:e} > rhs {:e}",
                b.seed, b.case, b.report.lhs, b.report.rhs
            );
        }
    }
    let mut out = VerifyOutput { checks, bounds, report };
    let summary = if out.passed() {
        "all checks passed".to_string()
    } else {
        format!("{} failures", out.failures())
    };
    let _ = writeln!(out.report, "{summary}");
    Ok(out)
}

/// Run the suites and write `checks.csv`, `bounds.csv`, `bound_components.csv`
/// and `report.txt`. Returns the directory and whether everything passed.
pub fn cmd_verify(
    config: &Config,
    seed: u64,
    suite: Option<Suite>,
    count: Option<usize>,
    out: Option<&Path>,
    force: bool,
) -> LabResult<(PathBuf, VerifyOutput)> {
    let s = VerifySettings::from_config(config, seed, suite, count)?;
    let dir = prepare_run_dir(out, "verify", &s.record(), &[], force)?;
    let result = run_verify(&s)?;
    result.checks_csv().write(&dir.join("checks.csv"))?;
    result.bounds_csv().write(&dir.join("bounds.csv"))?;
    result.components_csv().write(&dir.join("bound_components.csv"))?;
    std::fs::write(dir.join("report.txt"), &result.report)?;
    Ok((dir, result))
}
