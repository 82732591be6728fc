use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uavlc_core::config::{load_config, ObservationMode, RewardMode, SystemConfig, V_MAX_NOTE};
use uavlc_core::env::VlcEnv;
use uavlc_harness::baselines::{baseline_greedy, baseline_random, GreedyMode};
use uavlc_harness::error::{io, Error, Result};
use uavlc_harness::experiment::{average, held_out_task, run_experiment, ExperimentSpec, Scheme, SweepVar, COLUMNS};
use uavlc_learn::checkpoint::{agent_from_str, agent_to_string, load, meta_from_str, meta_to_string, save};
use uavlc_learn::meta::{meta_adapt, meta_train, MetaState, UniformTasks};
use uavlc_learn::train::{evaluate, train_sac};

/// UAV-mounted LED-array visible-light downlink simulator.
#[derive(Parser)]
#[command(name = "uavlc", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of the task and of every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scheme: meta-sac, sac, greedy or random (comma-separated for `sweep`).
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Reward 0 on infeasible slots and channel-only observations.
    #[arg(long, global = true)]
    paper_literal: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one baseline episode and write its slot trace as CSV.
    Simulate,
    /// Train plain SAC on the task of `--seed` and save a checkpoint.
    Train,
    /// Meta-train an initialization and save a checkpoint.
    MetaTrain,
    /// Adapt a meta-trained initialization to the task of `--seed`.
    Adapt {
        /// Meta checkpoint written by `meta-train`.
        #[arg(long)]
        meta: PathBuf,
    },
    /// Evaluate a scheme or a saved agent; writes one result row.
    Eval {
        /// Agent checkpoint written by `train` or `adapt`.
        #[arg(long)]
        agent: Option<PathBuf>,
    },
    /// Run a parameter sweep and append result rows.
    Sweep(SweepArgs),
    /// Run the invariant suite.
    Check,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment spec as TOML; the flags below are then ignored.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "sweep")]
    scenario: String,
    /// Swept variable: K, P_max, R_min or N.
    #[arg(long)]
    var: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Seeds per sweep point.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
}

fn config(common: &Common) -> Result<SystemConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => SystemConfig::default(),
    };
    if common.paper_literal {
        cfg.reward.mode = RewardMode::PaperLiteral;
        cfg.env.observation = ObservationMode::ChannelsOnly;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn required_out(common: &Common) -> Result<&Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Error::Spec("--out is required for this command".into()))
}

fn scheme(common: &Common, default: Scheme) -> Result<Scheme> {
    common.scheme.as_deref().map_or(Ok(default), str::parse)
}

fn run(cli: Cli) -> Result<bool> {
    let common = &cli.common;
    let cfg = config(common)?;
    log::info!("config {}", cfg.hash());
    let seed = common.seed;
    match cli.command {
        Command::Simulate => {
            let mut env = VlcEnv::new(&cfg, held_out_task(&cfg, seed))?;
            let trace = match scheme(common, Scheme::Greedy)? {
                Scheme::Greedy => baseline_greedy(&mut env, GreedyMode::TopGain, seed)?,
                Scheme::Random => baseline_random(&mut env, seed)?,
                s => return Err(Error::Spec(format!("simulate runs greedy or random, not {s}; use eval"))),
            };
            let out = output(common.out.as_deref())?;
            trace.write_csv(out)?;
            log::info!("{:?}", trace.summary());
        }
        Command::Train => {
            let out = required_out(common)?;
            let (agent, summaries) = train_sac(&cfg, held_out_task(&cfg, seed), cfg.scenario.train_episodes, seed)?;
            for (i, s) in summaries.iter().enumerate() {
                log::info!("episode {i}: reward {:.3} power {:.2} W", s.total_reward, s.mean_power);
            }
            save(out, &agent_to_string(&agent))?;
        }
        Command::MetaTrain => {
            let out = required_out(common)?;
            let mut tasks = UniformTasks(ChaCha8Rng::seed_from_u64(seed));
            let (meta, stats) = meta_train(&cfg, &mut tasks, cfg.meta.iterations, seed)?;
            if let Some(last) = stats.last() {
                log::info!("final iteration: {last:?}");
            }
            save(out, &meta_to_string(&meta.checkpoint()))?;
        }
        Command::Adapt { meta } => {
            let out = required_out(common)?;
            let state = MetaState::from_checkpoint(meta_from_str(&load(&meta)?)?);
            let (agent, summaries) =
                meta_adapt(&state, &cfg, held_out_task(&cfg, seed), cfg.meta.adapt_episodes, seed)?;
            for (i, s) in summaries.iter().enumerate() {
                log::info!("episode {i}: reward {:.3} power {:.2} W", s.total_reward, s.mean_power);
            }
            save(out, &agent_to_string(&agent))?;
        }
        Command::Eval { agent } => {
            let task = held_out_task(&cfg, seed);
            let mut env = VlcEnv::new(&cfg, task)?;
            let (name, summaries) = match agent {
                Some(path) => {
                    let agent = agent_from_str(&load(&path)?)?;
                    let traces = evaluate(&agent, &mut env, cfg.scenario.eval_episodes, seed)?;
                    (path.display().to_string(), traces.iter().map(|t| t.summary()).collect::<Vec<_>>())
                }
                None => {
                    let s = scheme(common, Scheme::Greedy)?;
                    if !matches!(s, Scheme::Greedy | Scheme::Random) {
                        return Err(Error::Spec(format!("{s} needs --agent")));
                    }
                    let traces = (0..cfg.scenario.eval_episodes as u64)
                        .map(|e| match s {
                            Scheme::Greedy => baseline_greedy(&mut env, GreedyMode::TopGain, seed + e),
                            _ => baseline_random(&mut env, seed + e),
                        })
                        .collect::<uavlc_core::Result<Vec<_>>>()?;
                    (s.to_string(), traces.iter().map(|t| t.summary()).collect())
                }
            };
            let m = average(&summaries);
            let mut out = output(common.out.as_deref())?;
            let write = |out: &mut dyn Write| -> io::Result<()> {
                writeln!(out, "# config_hash={}", cfg.hash())?;
                writeln!(out, "{}", COLUMNS.join(","))?;
                writeln!(
                    out,
                    "{name},,{seed},{},{},{},{}",
                    m.mean_power, m.mean_sum_rate, m.mean_energy_efficiency, m.feasibility_fraction
                )?;
                out.flush()
            };
            write(&mut out).map_err(|e| io(common.out.as_deref().unwrap_or(Path::new("<stdout>")), e))?;
        }
        Command::Sweep(args) => {
            let spec = match &args.spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
                    let mut spec = ExperimentSpec::from_toml_str(&text)?;
                    if let Some(out) = &common.out {
                        spec.output = out.clone();
                    }
                    spec
                }
                None => {
                    let var: SweepVar = args
                        .var
                        .as_deref()
                        .ok_or_else(|| Error::Spec("--var or --spec is required".into()))?
                        .parse()?;
                    let schemes = match &common.scheme {
                        Some(list) => list.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<Scheme>>>()?,
                        None => Scheme::ALL.to_vec(),
                    };
                    ExperimentSpec {
                        scenario: args.scenario,
                        sweep: var,
                        values: args.values,
                        seeds: args.seeds,
                        schemes,
                        output: required_out(common)?.to_path_buf(),
                    }
                }
            };
            let rows = run_experiment(&cfg, &spec)?;
            log::info!("{} rows in {}", rows.len(), spec.output.display());
        }
        Command::Check => {
            let outcomes = uavlc_harness::checks::run_all(&cfg, seed)?;
            for o in &outcomes {
                println!("{o}");
            }
            return Ok(outcomes.iter().all(|o| o.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    log::warn!("{V_MAX_NOTE}");
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
