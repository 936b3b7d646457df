//! Named experiment registry. Each experiment runs one or more matches,
//! derives named metrics and checks them against its expectations.

mod experiments;
mod output;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selfplay::MatchResult;
use crate::stats::PhaseSummary;

pub use experiments::{reach_sensitivity_sweep, ReachRow};
pub use output::{
    default_output_dir, emit_trace, trace_csv, write_output, OutputFormat, TraceMetric, TraceRow, DEFAULT_OUTPUT_DIR,
    OUTPUT_DIR_ENV,
};

/// Result artifacts the registry must cover, each claimed by at least one
/// experiment.
pub const RESULT_ARTIFACTS: &[&str] = &[
    "zero-contingency collapse",
    "residual contingency",
    "capacity threshold",
    "frozen baseline",
    "fixed opponent",
    "population training",
    "algorithm invariance",
    "neural analysis",
    "cross-game severity",
    "boundary games",
    "timing sweep",
    "recovery",
    "exploitability trajectory",
    "variance decomposition",
    "hyperparameter grid",
    "separate tables",
    "tabular ppo",
    "fixed-opponent calibration",
    "stochastic masking",
    "weighted capacity",
    "neural hyperparameters",
    "entropy regularisation",
    "reach sensitivity",
    "solver values",
];

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// An empirical target, met within tolerance.
    Measured,
    /// Follows analytically from the game and the exploration rate.
    Derived,
    /// Qualitative: a sign or band rather than a value.
    Band,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Measured => "measured",
            Basis::Derived => "derived",
            Basis::Band => "band",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Near { target: f64, tolerance: f64 },
    AtMost(f64),
    AtLeast(f64),
    Between(f64, f64),
}

impl Check {
    pub fn passes(&self, value: f64) -> bool {
        match *self {
            Check::Near { target, tolerance } => (value - target).abs() <= tolerance,
            Check::AtMost(x) => value <= x,
            Check::AtLeast(x) => value >= x,
            Check::Between(lo, hi) => (lo..=hi).contains(&value),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Check::Near { target, tolerance } => write!(f, "{target} ± {tolerance}"),
            Check::AtMost(x) => write!(f, "≤ {x}"),
            Check::AtLeast(x) => write!(f, "≥ {x}"),
            Check::Between(lo, hi) => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub metric: String,
    pub check: Check,
    pub basis: Basis,
    /// Optional metrics are only produced by long runs; absence is a skip.
    pub optional: bool,
}

fn expect(metric: &str, check: Check, basis: Basis) -> Expectation {
    Expectation {
        metric: metric.to_string(),
        check,
        basis,
        optional: false,
    }
}

fn near(metric: &str, target: f64, tolerance: f64) -> Expectation {
    expect(metric, Check::Near { target, tolerance }, Basis::Measured)
}

type Runner = fn(&Overrides) -> Result<RunOutput>;

pub struct ExperimentDef {
    pub id: &'static str,
    pub summary: &'static str,
    /// Entries of [`RESULT_ARTIFACTS`] this experiment covers.
    pub covers: &'static [&'static str],
    pub expectations: Vec<Expectation>,
    runner: Runner,
}

impl fmt::Debug for ExperimentDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExperimentDef")
            .field("id", &self.id)
            .field("expectations", &self.expectations.len())
            .finish()
    }
}

/// Command-line style `key=value` settings layered over experiment defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    values: BTreeMap<String, String>,
}

enum Kind {
    Count,
    Real,
    Flag,
}

const OVERRIDE_KEYS: &[(&str, Kind, &str)] = &[
    ("seeds", Kind::Count, "number of seeds per condition"),
    ("episodes", Kind::Count, "episodes per run; activation points scale along"),
    ("window", Kind::Count, "episodes averaged at the end of each phase"),
    ("activate_at", Kind::Count, "episode at which the mask switches on"),
    ("alpha", Kind::Real, "tabular step size"),
    ("epsilon", Kind::Real, "exploration rate"),
    ("tau", Kind::Real, "entropy temperature"),
    ("lr", Kind::Real, "policy-gradient learning rate"),
    ("eta", Kind::Real, "NFSP anticipatory parameter"),
    ("cfr_iterations", Kind::Count, "CFR iterations for solver values"),
    ("dqn_episodes", Kind::Count, "episodes per DQN run"),
    ("long", Kind::Flag, "include long runs (Liar's Dice 2d DQN)"),
];

impl Overrides {
    pub fn new() -> Self {
        Self::default()
    }

    /// Known keys with a one-line description.
    pub fn keys() -> impl Iterator<Item = (&'static str, &'static str)> {
        OVERRIDE_KEYS.iter().map(|(k, _, d)| (*k, *d))
    }

    pub fn parse<S: AsRef<str>>(pairs: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut out = Self::new();
        for pair in pairs {
            let pair = pair.as_ref();
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidOverride(format!("`{pair}` is not key=value")))?;
            out.set(k.trim(), v.trim())?;
        }
        Ok(out)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (_, kind, _) = OVERRIDE_KEYS
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| Error::InvalidOverride(format!("unknown key `{key}`")))?;
        let ok = match kind {
            Kind::Count => value.parse::<usize>().is_ok_and(|n| n > 0),
            Kind::Real => value.parse::<f64>().is_ok_and(f64::is_finite),
            Kind::Flag => value.parse::<bool>().is_ok(),
        };
        if !ok {
            return Err(Error::InvalidOverride(format!("bad value `{value}` for `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn count(&self, key: &str) -> Option<usize> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    fn real(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    fn flag(&self, key: &str) -> bool {
        self.get(key) == Some("true")
    }
}

/// One condition of an experiment and its match results.
pub struct Condition {
    pub label: String,
    pub result: MatchResult,
}

/// Everything an experiment produced.
pub struct RunOutput {
    pub id: String,
    pub metrics: BTreeMap<String, f64>,
    pub summaries: Vec<PhaseSummary>,
    pub conditions: Vec<Condition>,
    pub notes: Vec<String>,
}

impl RunOutput {
    fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            metrics: BTreeMap::new(),
            summaries: Vec::new(),
            conditions: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn condition(&self, label: &str) -> Option<&MatchResult> {
        self.conditions.iter().find(|c| c.label == label).map(|c| &c.result)
    }

    fn set(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub expectation: Expectation,
    pub observed: Option<f64>,
    pub outcome: Outcome,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let observed = self.observed.map_or("missing".to_string(), |v| format!("{v:.6}"));
        write!(
            f,
            "{:?} {} = {} (expected {}, {})",
            self.outcome, self.expectation.metric, observed, self.expectation.check, self.expectation.basis
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub id: String,
    pub checks: Vec<CheckResult>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome != Outcome::Fail)
    }
}

pub fn registry() -> Vec<ExperimentDef> {
    experiments::definitions()
}

pub fn find(id: &str) -> Result<ExperimentDef> {
    registry()
        .into_iter()
        .find(|d| d.id == id)
        .ok_or_else(|| Error::UnknownExperiment(id.to_string()))
}

pub fn run(id: &str, overrides: &Overrides) -> Result<RunOutput> {
    let def = find(id)?;
    (def.runner)(overrides)
}

pub fn evaluate(def: &ExperimentDef, output: &RunOutput) -> Verification {
    let checks = def
        .expectations
        .iter()
        .map(|e| {
            let observed = output.metric(&e.metric);
            let outcome = match observed {
                Some(v) if e.check.passes(v) => Outcome::Pass,
                None if e.optional => Outcome::Skip,
                _ => Outcome::Fail,
            };
            CheckResult {
                expectation: e.clone(),
                observed,
                outcome,
            }
        })
        .collect();
    Verification {
        id: def.id.to_string(),
        checks,
    }
}

/// Runs an experiment and checks every expectation.
pub fn verify(id: &str, overrides: &Overrides) -> Result<(RunOutput, Verification)> {
    let def = find(id)?;
    let output = (def.runner)(overrides)?;
    let verification = evaluate(&def, &output);
    Ok((output, verification))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn registry_coverage() {
        let defs = registry();
        assert_eq!(defs.len(), 20);
        let ids: BTreeSet<_> = defs.iter().map(|d| d.id).collect();
        assert_eq!(ids.len(), defs.len(), "duplicate ids");
        for d in &defs {
            assert!(!d.expectations.is_empty(), "{} has no expectations", d.id);
            for r in d.covers {
                assert!(RESULT_ARTIFACTS.contains(r), "{} claims unknown artifact {r}", d.id);
            }
        }
        for artifact in RESULT_ARTIFACTS {
            assert!(
                defs.iter().any(|d| d.covers.contains(artifact)),
                "no experiment covers {artifact}"
            );
        }
    }

    #[test]
    fn overrides_validate() {
        let o = Overrides::parse(["seeds=3", "epsilon=0.3", "long=true"]).unwrap();
        assert_eq!(o.count("seeds"), Some(3));
        assert_eq!(o.real("epsilon"), Some(0.3));
        assert!(o.flag("long"));
        assert!(matches!(Overrides::parse(["bogus=1"]), Err(Error::InvalidOverride(_))));
        assert!(matches!(Overrides::parse(["seeds=0"]), Err(Error::InvalidOverride(_))));
        assert!(matches!(Overrides::parse(["seeds"]), Err(Error::InvalidOverride(_))));
        assert!(matches!(Overrides::parse(["alpha=x"]), Err(Error::InvalidOverride(_))));
    }

    #[test]
    fn unknown_id() {
        assert!(matches!(run("nope", &Overrides::new()), Err(Error::UnknownExperiment(_))));
    }

    #[test]
    fn checks() {
        assert!(Check::Near { target: -0.926, tolerance: 0.02 }.passes(-0.91));
        assert!(!Check::Near { target: -0.926, tolerance: 0.02 }.passes(-0.9));
        assert!(Check::AtMost(10.0).passes(10.0));
        assert!(Check::Between(-0.15, 0.0).passes(-0.05));
        let def = ExperimentDef {
            id: "t",
            summary: "",
            covers: &[],
            expectations: vec![
                near("a", 1.0, 0.1),
                Expectation {
                    optional: true,
                    ..near("b", 0.0, 0.1)
                },
                near("c", 0.0, 0.1),
            ],
            runner: |_| unreachable!(),
        };
        let mut out = RunOutput::new("t");
        out.set("a", 1.05);
        let v = evaluate(&def, &out);
        let outcomes: Vec<_> = v.checks.iter().map(|c| c.outcome.clone()).collect();
        assert_eq!(outcomes, vec![Outcome::Pass, Outcome::Skip, Outcome::Fail]);
        assert!(!v.passed());
    }
}
