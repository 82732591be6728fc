//! Parameter sweeps over schemes and seeds, written to a keyed CSV file.
//!
//! Every row is a pure function of `(config, scheme, sweep value, seed)`:
//! the held-out task, training, adaptation and evaluation seeds are all
//! derived from that key, and the meta-trained initialization of a sweep
//! point depends only on the point's configuration.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uavlc_core::config::SystemConfig;
use uavlc_core::env::{sample_task, Task, VlcEnv};
use uavlc_core::trace::EpisodeSummary;
use uavlc_learn::meta::{meta_adapt, meta_train, MetaState, UniformTasks};
use uavlc_learn::train::{evaluate, train_sac};

use crate::baselines::{baseline_greedy, baseline_random, GreedyMode};
use crate::error::{io, results, Error, Result};

pub const COLUMNS: [&str; 7] = [
    "scheme",
    "sweep_value",
    "seed",
    "mean_power_w",
    "mean_sum_rate",
    "mean_ee",
    "feasibility_fraction",
];

const HASH_PREFIX: &str = "# config_hash=";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    MetaSac,
    Sac,
    Greedy,
    Random,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::MetaSac, Scheme::Sac, Scheme::Greedy, Scheme::Random];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::MetaSac => "meta-sac",
            Scheme::Sac => "sac",
            Scheme::Greedy => "greedy",
            Scheme::Random => "random",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Spec(format!("unknown scheme `{s}` (expected meta-sac, sac, greedy or random)")))
    }
}

/// Swept configuration parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    /// User count K.
    #[serde(rename = "K")]
    Users,
    /// Communication power budget P_max in watts.
    #[serde(rename = "P_max")]
    PowerBudget,
    /// Per-user rate floor R_min in bits/s/Hz.
    #[serde(rename = "R_min")]
    RateFloor,
    /// LED count N.
    #[serde(rename = "N")]
    Leds,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Users => "K",
            SweepVar::PowerBudget => "P_max",
            SweepVar::RateFloor => "R_min",
            SweepVar::Leds => "N",
        }
    }

    /// `base` with the swept parameter set to `value`, validated.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::Spec(format!("{} must be a positive integer, got {value}", self.name())))
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepVar::Users => cfg.scenario.users = count()?,
            SweepVar::Leds => cfg.dimming.n_leds = count()?,
            SweepVar::PowerBudget => cfg.qos.p_max = value,
            SweepVar::RateFloor => cfg.qos.r_min = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" | "users" => Ok(SweepVar::Users),
            "P_max" | "p_max" | "p-max" => Ok(SweepVar::PowerBudget),
            "R_min" | "r_min" | "r-min" => Ok(SweepVar::RateFloor),
            "N" | "n" | "leds" => Ok(SweepVar::Leds),
            _ => Err(Error::Spec(format!("unknown sweep variable `{s}` (expected K, P_max, R_min or N)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: String,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    /// Seeds per sweep point; seeds are `0..seeds`.
    pub seeds: u64,
    pub schemes: Vec<Scheme>,
    pub output: PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self, base: &SystemConfig) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Spec("sweep values are empty".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Spec("seeds must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Spec("scheme list is empty".into()));
        }
        let mut seen = HashSet::new();
        for &v in &self.values {
            if !v.is_finite() {
                return Err(Error::Spec(format!("sweep value {v} is not finite")));
            }
            if !seen.insert(v.to_bits()) {
                return Err(Error::Spec(format!("sweep value {v} repeated")));
            }
            self.sweep.apply(base, v)?;
        }
        let mut schemes = HashSet::new();
        if let Some(s) = self.schemes.iter().find(|s| !schemes.insert(**s)) {
            return Err(Error::Spec(format!("scheme {s} repeated")));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub seed: u64,
    pub mean_power: f64,
    pub mean_sum_rate: f64,
    pub mean_ee: f64,
    pub feasibility: f64,
}

/// Identity of a row within one results file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub scheme: Scheme,
    pub value_bits: u64,
    pub seed: u64,
}

impl ResultRow {
    pub fn key(&self) -> RowKey {
        RowKey {
            scheme: self.scheme,
            value_bits: self.sweep_value.to_bits(),
            seed: self.seed,
        }
    }

    fn from_summary(scheme: Scheme, sweep_value: f64, seed: u64, s: EpisodeSummary) -> Self {
        ResultRow {
            scheme,
            sweep_value,
            seed,
            mean_power: s.mean_power,
            mean_sum_rate: s.mean_sum_rate,
            mean_ee: s.mean_energy_efficiency,
            feasibility: s.feasibility_fraction,
        }
    }

    /// CSV fields; floats use the shortest representation that parses back exactly.
    pub fn fields(&self) -> [String; 7] {
        [
            self.scheme.to_string(),
            self.sweep_value.to_string(),
            self.seed.to_string(),
            self.mean_power.to_string(),
            self.mean_sum_rate.to_string(),
            self.mean_ee.to_string(),
            self.feasibility.to_string(),
        ]
    }

    fn parse(record: &csv::StringRecord) -> std::result::Result<Self, String> {
        if record.len() != COLUMNS.len() {
            return Err(format!("expected {} fields, found {}", COLUMNS.len(), record.len()));
        }
        let float = |i: usize| -> std::result::Result<f64, String> {
            record[i].parse().map_err(|_| format!("bad {} `{}`", COLUMNS[i], &record[i]))
        };
        Ok(ResultRow {
            scheme: record[0].parse().map_err(|e: Error| e.to_string())?,
            sweep_value: float(1)?,
            seed: record[2].parse().map_err(|_| format!("bad seed `{}`", &record[2]))?,
            mean_power: float(3)?,
            mean_sum_rate: float(4)?,
            mean_ee: float(5)?,
            feasibility: float(6)?,
        })
    }
}

fn derive(seed: u64, stream: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r.random()
}

const TASK_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const ADAPT_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;
const META_STREAM: u64 = 5;
const META_TASK_STREAM: u64 = 6;

/// Held-out evaluation task for `seed`; disjoint in stream from meta-training tasks.
pub fn held_out_task(cfg: &SystemConfig, seed: u64) -> Task {
    sample_task(cfg, &mut ChaCha8Rng::seed_from_u64(derive(seed, TASK_STREAM)))
}

/// Seed of the shared meta-training run for a base configuration. Every
/// sweep point of one experiment reuses it, so points differ only in the
/// swept parameter.
pub fn meta_seed(base: &SystemConfig) -> u64 {
    let hash = base.hash();
    u64::from_str_radix(&hash[..16.min(hash.len())], 16).unwrap_or(0)
}

/// Meta-trains the initialization used by every `meta-sac` row at `cfg`.
pub fn meta_initialization(cfg: &SystemConfig, seed: u64) -> Result<MetaState> {
    let mut tasks = UniformTasks(ChaCha8Rng::seed_from_u64(derive(seed, META_TASK_STREAM)));
    let (meta, _) = meta_train(cfg, &mut tasks, cfg.meta.iterations, derive(seed, META_STREAM))?;
    Ok(meta)
}

/// Mean of per-episode summaries.
pub fn average(summaries: &[EpisodeSummary]) -> EpisodeSummary {
    let n = summaries.len().max(1) as f64;
    let mut acc = EpisodeSummary::default();
    for s in summaries {
        acc.mean_power += s.mean_power;
        acc.mean_sum_rate += s.mean_sum_rate;
        acc.mean_energy_efficiency += s.mean_energy_efficiency;
        acc.feasibility_fraction += s.feasibility_fraction;
        acc.total_reward += s.total_reward;
    }
    acc.mean_power /= n;
    acc.mean_sum_rate /= n;
    acc.mean_energy_efficiency /= n;
    acc.feasibility_fraction /= n;
    acc.total_reward /= n;
    acc
}

/// Trains or adapts as the scheme requires on `task`, then averages
/// `cfg.scenario.eval_episodes` evaluation episodes.
///
/// `meta` is required for [`Scheme::MetaSac`] and ignored otherwise.
pub fn run_scheme(
    cfg: &SystemConfig,
    scheme: Scheme,
    task: Task,
    seed: u64,
    meta: Option<&MetaState>,
) -> Result<EpisodeSummary> {
    let episodes = cfg.scenario.eval_episodes;
    let eval_seed = derive(seed, EVAL_STREAM);
    let mut env = VlcEnv::new(cfg, task.clone())?;
    let summaries: Vec<EpisodeSummary> = match scheme {
        Scheme::Random | Scheme::Greedy => {
            let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
            (0..episodes)
                .map(|_| {
                    let episode_seed = rng.random();
                    let trace = if scheme == Scheme::Random {
                        baseline_random(&mut env, episode_seed)?
                    } else {
                        baseline_greedy(&mut env, GreedyMode::TopGain, episode_seed)?
                    };
                    Ok(trace.summary())
                })
                .collect::<Result<_>>()?
        }
        Scheme::Sac => {
            let (agent, _) = train_sac(cfg, task, cfg.scenario.train_episodes, derive(seed, TRAIN_STREAM))?;
            summarize(evaluate(&agent, &mut env, episodes, eval_seed)?)
        }
        Scheme::MetaSac => {
            let meta = meta.ok_or_else(|| Error::Spec("meta-sac needs a meta-trained initialization".into()))?;
            let (agent, _) = meta_adapt(meta, cfg, task, cfg.meta.adapt_episodes, derive(seed, ADAPT_STREAM))?;
            summarize(evaluate(&agent, &mut env, episodes, eval_seed)?)
        }
    };
    Ok(average(&summaries))
}

fn summarize(traces: Vec<uavlc_core::trace::EpisodeTrace>) -> Vec<EpisodeSummary> {
    traces.iter().map(|t| t.summary()).collect()
}

/// Recomputes one row from its key. `meta` may be passed to skip
/// meta-training when the caller already holds the point's initialization.
pub fn regenerate_row(
    base: &SystemConfig,
    sweep: SweepVar,
    value: f64,
    scheme: Scheme,
    seed: u64,
    meta: Option<&MetaState>,
) -> Result<ResultRow> {
    let cfg = sweep.apply(base, value)?;
    let owned;
    let meta = match (scheme, meta) {
        (Scheme::MetaSac, None) => {
            owned = meta_initialization(&cfg, meta_seed(base))?;
            Some(&owned)
        }
        (_, m) => m,
    };
    let summary = run_scheme(&cfg, scheme, held_out_task(&cfg, seed), seed, meta)?;
    Ok(ResultRow::from_summary(scheme, value, seed, summary))
}

/// Contents of a results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsFile {
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
}

fn header_line(hash: &str) -> String {
    format!("{HASH_PREFIX}{hash}\n{}\n", COLUMNS.join(","))
}

/// Reads a results file. A torn final line (no trailing newline) is ignored.
pub fn read_results(path: &Path) -> Result<ResultsFile> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut lines = complete.lines();
    let config_hash = lines
        .next()
        .and_then(|l| l.strip_prefix(HASH_PREFIX))
        .ok_or_else(|| results(path, "missing config hash header"))?
        .trim()
        .to_string();
    let body: String = lines.map(|l| format!("{l}\n")).collect();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| results(path, e.to_string()))?;
    if header.iter().ne(COLUMNS) {
        return Err(results(path, format!("unexpected columns `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| results(path, e.to_string()))?;
        rows.push(ResultRow::parse(&rec).map_err(|m| results(path, format!("row {}: {m}", i + 1)))?);
    }
    Ok(ResultsFile { config_hash, rows })
}

/// Opens `path` for appending rows, creating it with a header if needed.
/// Fails if the file was written under a different configuration.
fn open_for_append(path: &Path, hash: &str) -> Result<(File, Vec<ResultRow>)> {
    let existing = match std::fs::metadata(path) {
        Ok(m) if m.len() > 0 => Some(read_results(path)?),
        Ok(_) => None,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(io(path, e)),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    match existing {
        Some(file) => {
            if file.config_hash != hash {
                return Err(results(
                    path,
                    format!("written with config {}, current config is {hash}", file.config_hash),
                ));
            }
            drop_torn_tail(path)?;
            let f = OpenOptions::new().append(true).open(path).map_err(|e| io(path, e))?;
            Ok((f, file.rows))
        }
        None => {
            let mut f = File::create(path).map_err(|e| io(path, e))?;
            f.write_all(header_line(hash).as_bytes()).map_err(|e| io(path, e))?;
            Ok((f, Vec::new()))
        }
    }
}

fn drop_torn_tail(path: &Path) -> Result<()> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| io(path, e))?);
    let mut keep = 0u64;
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line).map_err(|e| io(path, e))?;
        if n == 0 || line.last() != Some(&b'\n') {
            break;
        }
        keep += n as u64;
    }
    let f = OpenOptions::new().write(true).open(path).map_err(|e| io(path, e))?;
    f.set_len(keep).map_err(|e| io(path, e))
}

/// Runs every missing `(scheme, value, seed)` row of `spec` and appends it
/// to `spec.output`. Rows already present are kept as they are, so
/// re-running is a no-op. Returns the rows of the spec in sweep order.
pub fn run_experiment(base: &SystemConfig, spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate(base)?;
    let path = spec.output.as_path();
    let hash = base.hash();
    let (file, existing) = open_for_append(path, &hash)?;
    let mut done: BTreeMap<RowKey, ResultRow> = existing.into_iter().map(|r| (r.key(), r)).collect();

    let jobs: Vec<(f64, Scheme, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.schemes.iter().flat_map(move |&s| (0..spec.seeds).map(move |seed| (v, s, seed))))
        .filter(|&(v, s, seed)| {
            !done.contains_key(&RowKey {
                scheme: s,
                value_bits: v.to_bits(),
                seed,
            })
        })
        .collect();
    log::info!(
        "{}: {} rows to compute, {} already present",
        spec.scenario,
        jobs.len(),
        spec.values.len() * spec.schemes.len() * spec.seeds as usize - jobs.len()
    );

    let meta_values: Vec<f64> = spec
        .values
        .iter()
        .copied()
        .filter(|&v| jobs.iter().any(|&(jv, s, _)| s == Scheme::MetaSac && jv.to_bits() == v.to_bits()))
        .collect();
    let seed = meta_seed(base);
    let metas: BTreeMap<u64, MetaState> = meta_values
        .par_iter()
        .map(|&v| {
            log::info!("{}: meta-training {}={v}", spec.scenario, spec.sweep);
            let cfg = spec.sweep.apply(base, v)?;
            Ok((v.to_bits(), meta_initialization(&cfg, seed)?))
        })
        .collect::<Result<_>>()?;

    let (tx, rx) = mpsc::channel::<ResultRow>();
    let written = std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> Result<Vec<ResultRow>> {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            let mut out = Vec::new();
            for row in rx {
                w.write_record(row.fields()).map_err(|e| results(path, e.to_string()))?;
                w.flush().map_err(|e| io(path, e))?;
                out.push(row);
            }
            Ok(out)
        });
        let computed = jobs.par_iter().try_for_each_with(tx, |tx, &(v, scheme, seed)| -> Result<()> {
            let row = regenerate_row(base, spec.sweep, v, scheme, seed, metas.get(&v.to_bits()))?;
            log::debug!("{}: {scheme} {}={v} seed {seed} done", spec.scenario, spec.sweep);
            // A closed channel means the writer failed; its error is reported below.
            let _ = tx.send(row);
            Ok(())
        });
        let written = writer.join().expect("writer thread panicked")?;
        computed.map(|_| written)
    })?;
    for row in written {
        done.insert(row.key(), row);
    }

    let mut rows = Vec::new();
    for &v in &spec.values {
        for &s in &spec.schemes {
            for seed in 0..spec.seeds {
                let key = RowKey {
                    scheme: s,
                    value_bits: v.to_bits(),
                    seed,
                };
                rows.push(done[&key]);
            }
        }
    }
    Ok(rows)
}
