use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use afs_core::harness::{
    check_trace, enumerate_call, explore, fixture, fuzz, EventWeights, ExploreConfig, ExploreOp, FuzzConfig, FIXTURES,
};
use afs_core::model::{AfsState, Filename};
use afs_core::nondet::EnumBudget;
use afs_core::sim::{run_script, FailureSchedule, Script, Trace, DEFAULT_CAPACITY};

#[derive(Parser)]
#[command(name = "afs", version, about = "Asynchronous-write file system model and refinement checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a script on the simulator and record its trace
    Run {
        script: PathBuf,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long, default_value_t = NonZeroUsize::new(DEFAULT_CAPACITY).unwrap())]
        capacity: NonZeroUsize,
        /// Write the trace here instead of standard output
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check a recorded trace against the specification
    Check { trace: PathBuf },
    /// Run a seeded refinement campaign
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 30)]
        len: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        capacities: Vec<NonZeroUsize>,
        /// Probabilities of ok, fail and allocfail events
        #[arg(long, value_delimiter = ',', num_args = 3, default_value = "0.8,0.1,0.1")]
        weights: Vec<f64>,
        /// Directory for counterexamples
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the summary to this file
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Explore every specification outcome to a bounded depth
    Explore {
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, value_delimiter = ',', default_value = "a,b")]
        names: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "create,unlink,lookup,fsync")]
        ops: Vec<String>,
        /// Samples drawn from each unbounded choice
        #[arg(long, default_value_t = 2)]
        samples: usize,
    },
    /// Print the outcome set of one specification call
    Enumerate {
        /// create, unlink, lookup, fsync, init, read or flush
        op: String,
        args: Vec<String>,
        #[arg(long, default_value = "fresh")]
        fixture: String,
        /// Start from a serialized state instead of a fixture
        #[arg(long)]
        state: Option<PathBuf>,
        /// Samples drawn from each unbounded choice
        #[arg(long, default_value_t = 4)]
        budget: usize,
    },
}

/// Failures before any verdict is reached.
struct UsageError(String);

impl<E: std::fmt::Display> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, UsageError> {
    fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), UsageError> {
    fs::write(path, text).map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<bool, UsageError> {
    match cli.command {
        Command::Run {
            script,
            schedule,
            capacity,
            trace,
        } => {
            let s = Script::parse(&read(&script)?).map_err(|e| UsageError(format!("{}: {e}", script.display())))?;
            let sched = match schedule {
                Some(p) => FailureSchedule::parse(&read(&p)?).map_err(|e| UsageError(format!("{}: {e}", p.display())))?,
                None => FailureSchedule::default(),
            };
            let t = run_script(&s, &sched, capacity).map_err(|e| UsageError(format!("{}: {e}", script.display())))?;
            match trace {
                Some(p) => write(&p, &t.to_text())?,
                None => print!("{}", t.to_text()),
            }
            Ok(true)
        }
        Command::Check { trace } => {
            let t = Trace::parse(&read(&trace)?)?;
            let v = check_trace(&t);
            println!("{v}");
            if let Some(w) = &v.witness {
                println!("{w}");
            }
            Ok(v.pass)
        }
        Command::Fuzz {
            seed,
            n,
            len,
            capacities,
            weights,
            out,
            summary,
        } => {
            let w = EventWeights::new(weights[0], weights[1], weights[2])?;
            let config = FuzzConfig::new(seed, n, len, capacities, w)?;
            let s = fuzz(&config, out.as_deref())?;
            let text = s.to_text();
            if let Some(p) = summary {
                write(&p, &text)?;
            }
            print!("{text}");
            Ok(s.pass())
        }
        Command::Explore {
            depth,
            names,
            ops,
            samples,
        } => {
            let mut alphabet = Vec::new();
            for op in &ops {
                if op == "fsync" {
                    alphabet.push(ExploreOp::Fsync);
                    continue;
                }
                for n in &names {
                    Filename::parse_escaped(n).map_err(UsageError)?;
                    alphabet.push(format!("{op} {n}").parse::<ExploreOp>().map_err(UsageError)?);
                }
            }
            let config = ExploreConfig {
                depth,
                alphabet,
                budget: EnumBudget::new(1_000_000, samples)?,
            };
            let r = explore(&AfsState::fresh(), &config);
            print!("{}", r.to_text());
            Ok(r.violations.is_empty())
        }
        Command::Enumerate {
            op,
            args,
            fixture: name,
            state,
            budget,
        } => {
            let afs = match state {
                Some(p) => serde_json::from_str::<AfsState>(&read(&p)?)?,
                None => fixture(&name)
                    .ok_or_else(|| UsageError(format!("unknown fixture {name:?}; expected one of {FIXTURES:?}")))?,
            };
            let e = enumerate_call(&afs, &op, &args, EnumBudget::new(1_000_000, budget)?)?;
            print!("{}", e.to_text());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(UsageError(msg)) => {
            eprintln!("afs: {msg}");
            ExitCode::from(2)
        }
    }
}
