//! Seeded scenario generation and the refinement fuzz campaign.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::{check_trace, namespace_oracle, Verdict};
use crate::model::{Filename, NAME_MAX, S_IFREG};
use crate::sim::{run_script, FailureEvent, FailureSchedule, OpCall, OpOutcome, Script, ScriptOp, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("failure weights must be non-negative and sum to 1, got {0}")]
    Weights(String),
    #[error("maximum script length must be positive")]
    ScriptLength,
    #[error("at least one buffer capacity is required")]
    NoCapacities,
}

/// Probabilities of each schedule event kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventWeights {
    ok: f64,
    fail: f64,
    allocfail: f64,
}

impl EventWeights {
    pub fn new(ok: f64, fail: f64, allocfail: f64) -> Result<Self, ConfigError> {
        let all = [ok, fail, allocfail];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) || ((ok + fail + allocfail) - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Weights(format!("{ok}/{fail}/{allocfail}")));
        }
        Ok(EventWeights { ok, fail, allocfail })
    }
}

impl Default for EventWeights {
    fn default() -> Self {
        EventWeights {
            ok: 0.8,
            fail: 0.1,
            allocfail: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzConfig {
    pub seed: u64,
    pub num_scenarios: usize,
    max_script_len: usize,
    capacities: Vec<NonZeroUsize>,
    pub weights: EventWeights,
}

impl FuzzConfig {
    pub fn new(
        seed: u64,
        num_scenarios: usize,
        max_script_len: usize,
        capacities: Vec<NonZeroUsize>,
        weights: EventWeights,
    ) -> Result<Self, ConfigError> {
        if max_script_len == 0 {
            return Err(ConfigError::ScriptLength);
        }
        if capacities.is_empty() {
            return Err(ConfigError::NoCapacities);
        }
        Ok(FuzzConfig {
            seed,
            num_scenarios,
            max_script_len,
            capacities,
            weights,
        })
    }

    pub fn max_script_len(&self) -> usize {
        self.max_script_len
    }

    pub fn capacities(&self) -> &[NonZeroUsize] {
        &self.capacities
    }
}

/// One generated input to the simulator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub index: usize,
    pub capacity: NonZeroUsize,
    pub script: Script,
    pub schedule: FailureSchedule,
}

const NAMES: [&str; 5] = ["a", "b", "c", "jiggle", "x y"];

fn gen_name(rng: &mut ChaCha8Rng) -> Filename {
    if rng.gen_ratio(1, 40) {
        return Filename::new(vec![b'n'; NAME_MAX + 1]).expect("valid bytes");
    }
    Filename::new(*NAMES.choose(rng).expect("non-empty")).expect("valid name")
}

fn gen_event(rng: &mut ChaCha8Rng, w: &EventWeights) -> FailureEvent {
    let x: f64 = rng.gen();
    if x < w.ok {
        FailureEvent::FlushOk(rng.gen_range(0..=2))
    } else if x < w.ok + w.fail {
        FailureEvent::FlushFail {
            code: *FailureEvent::FLUSH_CODES.choose(rng).expect("non-empty"),
            applied: rng.gen_range(0..=4),
        }
    } else {
        FailureEvent::AllocFail
    }
}

/// Scenario `index` of the campaign; independent of every other index.
pub fn generate_scenario(config: &FuzzConfig, index: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let capacity = config.capacities[index % config.capacities.len()];
    let len = rng.gen_range(1..=config.max_script_len);
    let ops = (0..len).map(|_| {
        let parent = "/".to_string();
        match rng.gen_range(0..10) {
            0..=3 => {
                let perm = *[0o600, 0o644, 0o755].choose(&mut rng).expect("non-empty");
                let mode = if rng.gen_bool(0.5) { perm | S_IFREG } else { perm };
                ScriptOp::Create {
                    parent,
                    name: gen_name(&mut rng),
                    mode,
                }
            }
            4..=5 => ScriptOp::Unlink {
                parent,
                name: gen_name(&mut rng),
            },
            6..=7 => ScriptOp::Lookup {
                parent,
                name: gen_name(&mut rng),
            },
            _ => ScriptOp::Fsync,
        }
    });
    let script = Script::from_ops(ops.collect::<Vec<_>>());
    let events = (0..len + 2).map(|_| gen_event(&mut rng, &config.weights)).collect();
    Scenario {
        index,
        capacity,
        script,
        schedule: FailureSchedule::new(events).expect("generated codes are flush codes"),
    }
}

struct Outcome {
    scenario: Scenario,
    trace: Trace,
    verdict: Verdict,
}

fn run_scenario(config: &FuzzConfig, index: usize) -> Outcome {
    let scenario = generate_scenario(config, index);
    let trace = run_script(&scenario.script, &scenario.schedule, scenario.capacity)
        .expect("generated scripts only use the root directory");
    let mut verdict = check_trace(&trace);
    if verdict.pass {
        verdict = namespace_oracle(&trace);
    }
    Outcome {
        scenario,
        trace,
        verdict,
    }
}

fn result_key(step: &crate::sim::Step) -> String {
    let op = match step.op {
        OpCall::Create { .. } => "create",
        OpCall::Unlink { .. } => "unlink",
        OpCall::Lookup { .. } => "lookup",
        OpCall::Fsync { .. } => "fsync",
    };
    let err = match &step.outcome {
        OpOutcome::Create { result, .. } | OpOutcome::Unlink { result, .. } | OpOutcome::Fsync { result } => result.err(),
        OpOutcome::Lookup { result } => result.err(),
    };
    format!("{op} {}", err.map_or("ok", |e| e.name()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzSummary {
    pub seed: u64,
    pub scenarios: usize,
    pub steps: usize,
    /// How often each operation returned each result, keyed `op result`.
    pub results: BTreeMap<String, usize>,
    /// Index, capacity and verdict of each failing scenario, in index order.
    pub failures: Vec<(usize, NonZeroUsize, Verdict)>,
    pub counterexample: Option<PathBuf>,
}

impl FuzzSummary {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    /// Line-oriented report ending in `PASS` or `FAIL n/m`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "scenarios {}", self.scenarios);
        let _ = writeln!(out, "steps {}", self.steps);
        for (k, n) in &self.results {
            let _ = writeln!(out, "result {k} {n}");
        }
        for (i, cap, v) in &self.failures {
            let _ = writeln!(out, "scenario {i} capacity {cap}: {v}");
        }
        if let Some(p) = &self.counterexample {
            let _ = writeln!(out, "counterexample {}", p.display());
        }
        if self.pass() {
            out.push_str("PASS\n");
        } else {
            let _ = writeln!(out, "FAIL {}/{}", self.failures.len(), self.scenarios);
        }
        out
    }
}

/// Writes the failing prefix of a scenario: script, schedule and trace.
fn write_counterexample(dir: &Path, o: &Outcome) -> io::Result<PathBuf> {
    let path = dir.join(format!("scenario-{}", o.scenario.index));
    fs::create_dir_all(&path)?;
    let keep = o.verdict.failing_step.map_or(o.trace.len(), |i| i + 1);
    fs::write(path.join("script.txt"), o.scenario.script.prefix(keep).to_text())?;
    fs::write(path.join("schedule.txt"), o.scenario.schedule.to_text())?;
    fs::write(path.join("capacity.txt"), format!("{}\n", o.scenario.capacity))?;
    fs::write(path.join("trace.txt"), o.trace.prefix(keep).to_text())?;
    Ok(path)
}

/// Runs the campaign, scenarios in parallel. Counterexamples go under `out`
/// when given; only the first failing scenario is written.
pub fn fuzz(config: &FuzzConfig, out: Option<&Path>) -> io::Result<FuzzSummary> {
    // traces are dropped as soon as they are checked
    let results: Vec<(Vec<String>, Verdict)> = (0..config.num_scenarios)
        .into_par_iter()
        .map(|i| {
            let o = run_scenario(config, i);
            (o.trace.steps.iter().map(result_key).collect(), o.verdict)
        })
        .collect();

    let steps = results.iter().map(|(keys, _)| keys.len()).sum();
    let mut counts = BTreeMap::new();
    for key in results.iter().flat_map(|(keys, _)| keys) {
        *counts.entry(key.clone()).or_insert(0) += 1;
    }
    let mut failures = Vec::new();
    let mut counterexample = None;
    for (i, (_, verdict)) in results.into_iter().enumerate() {
        if verdict.pass {
            continue;
        }
        if counterexample.is_none() {
            if let Some(dir) = out {
                counterexample = Some(write_counterexample(dir, &run_scenario(config, i))?);
            }
        }
        failures.push((i, config.capacities[i % config.capacities.len()], verdict));
    }
    Ok(FuzzSummary {
        seed: config.seed,
        scenarios: config.num_scenarios,
        steps,
        results: counts,
        failures,
        counterexample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps(v: &[usize]) -> Vec<NonZeroUsize> {
        v.iter().map(|c| NonZeroUsize::new(*c).unwrap()).collect()
    }

    fn config(seed: u64, n: usize) -> FuzzConfig {
        FuzzConfig::new(seed, n, 30, caps(&[1, 2, 4, 8]), EventWeights::default()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(EventWeights::new(0.5, 0.5, 0.1).is_err());
        assert!(EventWeights::new(1.2, -0.2, 0.0).is_err());
        assert!(EventWeights::new(1.0, 0.0, 0.0).is_ok());
        assert_eq!(
            FuzzConfig::new(0, 1, 0, caps(&[1]), EventWeights::default()),
            Err(ConfigError::ScriptLength)
        );
        assert_eq!(
            FuzzConfig::new(0, 1, 5, vec![], EventWeights::default()),
            Err(ConfigError::NoCapacities)
        );
    }

    #[test]
    fn zero_scenarios_pass() {
        let s = fuzz(&config(1, 0), None).unwrap();
        assert!(s.pass());
        assert!(s.to_text().ends_with("PASS\n"));
    }

    #[test]
    fn scenarios_are_independent_and_seeded() {
        let c = config(9, 10);
        assert_eq!(generate_scenario(&c, 3), generate_scenario(&c, 3));
        assert_ne!(generate_scenario(&c, 3).script, generate_scenario(&c, 4).script);
        assert_ne!(generate_scenario(&c, 3).script, generate_scenario(&config(10, 10), 3).script);
        assert_eq!(generate_scenario(&c, 5).capacity.get(), 2);
    }

    #[test]
    fn small_campaign_passes_and_repeats() {
        let a = fuzz(&config(42, 64), None).unwrap();
        let b = fuzz(&config(42, 64), None).unwrap();
        assert!(a.pass(), "{}", a.to_text());
        assert_eq!(a.to_text(), b.to_text());
        assert!(a.steps > 64);
    }

    #[test]
    fn summary_reports_failures() {
        let mut s = fuzz(&config(1, 2), None).unwrap();
        s.failures.push((1, NonZeroUsize::new(2).unwrap(), Verdict {
            pass: false,
            failing_step: Some(3),
            reason: Some(super::super::FailureReason::Discontinuity),
            witness: None,
        }));
        let text = s.to_text();
        assert!(text.contains("scenario 1 capacity 2: FAIL at step 3"));
        assert!(text.ends_with("FAIL 1/2\n"));
    }
}
