//! Seeded experiment sweeps and their CSV/JSON reports.
//!
//! An experiment crosses sizes, generated instances, runs and algorithms.
//! Every instance and every (algorithm, run) cell gets its own seed derived
//! from the master seed and the cell coordinates, so adding an algorithm or
//! changing the thread count never changes any other cell. Rows are sorted
//! before they are written, which keeps outputs byte-identical across thread
//! counts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{brute_force, greedy, hungarian, BRUTE_FORCE_MAX};
use crate::error::{invalid, io_err, Error, Result};
use crate::generators::{Family, GeneratorSpec};
use crate::learning::{new_assignment_game, starting_resource_stabilization};
use crate::meetings::{
    brute_force_schedule, event_values, generate_meeting_instance, greedy_meetings, msrac, participant_values,
    schedule_with_alma, validate_schedule, MeetingAlmaOptions, MeetingGenParams, MeetingInstance, Schedule,
};
use crate::metrics::{gini, jain, mean_sd, relative_sw_loss};
use crate::model::{validate_allocation, Allocation, AssignmentInstance, RunConfig};
use crate::rng::{derive_seed, rng_from_seed, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Benchmark {
    /// Square assignment instances of one generator family; sizes are `N = R`.
    Assignment {
        family: Family,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_p_one")]
        p_one: f64,
    },
    /// Generated meeting instances; sizes are event counts.
    Meetings {
        #[serde(default = "default_participants")]
        participants: usize,
        #[serde(default = "default_days")]
        days: usize,
        #[serde(default = "default_slots")]
        slots_per_day: usize,
        #[serde(default)]
        params: MeetingGenParams,
    },
}

fn default_sigma() -> f64 {
    0.1
}

fn default_p_one() -> f64 {
    0.5
}

fn default_participants() -> usize {
    20
}

fn default_days() -> usize {
    1
}

fn default_slots() -> usize {
    24
}

impl Default for Benchmark {
    fn default() -> Self {
        Benchmark::Assignment {
            family: Family::Map,
            sigma: default_sigma(),
            p_one: default_p_one(),
        }
    }
}

impl Benchmark {
    pub fn family_name(&self) -> &'static str {
        match self {
            Benchmark::Assignment { family, .. } => family.name(),
            Benchmark::Meetings { .. } => "meetings",
        }
    }

    pub fn default_training_steps(&self) -> usize {
        match self {
            Benchmark::Assignment { family, .. } => family.default_training_steps(),
            Benchmark::Meetings { .. } => 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Hungarian,
    BruteForce,
    Greedy,
    Alma,
    AlmaLearning,
    Msrac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Hungarian,
        Algorithm::BruteForce,
        Algorithm::Greedy,
        Algorithm::Alma,
        Algorithm::AlmaLearning,
        Algorithm::Msrac,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Hungarian => "hungarian",
            Algorithm::BruteForce => "brute_force",
            Algorithm::Greedy => "greedy",
            Algorithm::Alma => "alma",
            Algorithm::AlmaLearning => "alma_learning",
            Algorithm::Msrac => "msrac",
        }
    }

    /// Deterministic algorithms get a single run per instance.
    pub fn is_randomized(&self) -> bool {
        matches!(self, Algorithm::Greedy | Algorithm::Alma | Algorithm::AlmaLearning)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| invalid(format!("unknown algorithm {s:?}")))
    }
}

/// A sweep over sizes, instances and runs. Read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub benchmark: Benchmark,
    pub algorithms: Vec<Algorithm>,
    pub sizes: Vec<usize>,
    pub instances_per_config: usize,
    pub runs_per_instance: usize,
    /// Master seed.
    pub seed: u64,
    /// Training budget `T`; the benchmark default when absent.
    pub training_steps: Option<usize>,
    pub eval_steps: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub history_len: usize,
    pub round_cap: Option<usize>,
    /// Base path of the report; `.csv` and `.json` are written next to it.
    pub output: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            name: "experiment".into(),
            benchmark: Benchmark::default(),
            algorithms: Vec::new(),
            sizes: Vec::new(),
            instances_per_config: 16,
            runs_per_instance: 16,
            seed: 0,
            training_steps: None,
            eval_steps: run.eval_steps,
            alpha: run.alpha,
            beta: run.beta,
            epsilon: run.epsilon,
            history_len: run.history_len,
            round_cap: None,
            output: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(format!("experiment spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn training_steps(&self) -> usize {
        self.training_steps
            .unwrap_or_else(|| self.benchmark.default_training_steps())
    }

    /// Run configuration of one cell.
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            seed,
            training_steps: self.training_steps(),
            eval_steps: self.eval_steps,
            alpha: self.alpha,
            beta: self.beta,
            epsilon: self.epsilon,
            history_len: self.history_len,
            round_cap: self.round_cap,
        }
    }

    pub fn config_id(&self, size: usize) -> String {
        format!("{}-n{size}", self.benchmark.family_name())
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(invalid("at least one algorithm required"));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(invalid("sizes must be a non-empty list of positive counts"));
        }
        if self.instances_per_config == 0 || self.runs_per_instance == 0 {
            return Err(invalid("instances_per_config and runs_per_instance must be >= 1"));
        }
        if self.eval_steps == 0 {
            return Err(invalid("eval_steps must be >= 1"));
        }
        self.run_config(self.seed).validate()?;
        let meetings = matches!(self.benchmark, Benchmark::Meetings { .. });
        for alg in &self.algorithms {
            match alg {
                Algorithm::Msrac if !meetings => {
                    return Err(invalid("msrac only applies to meeting benchmarks"));
                }
                Algorithm::Hungarian if meetings => {
                    return Err(invalid("hungarian only applies to assignment benchmarks"));
                }
                Algorithm::BruteForce if !meetings && self.sizes.iter().any(|&n| n > BRUTE_FORCE_MAX) => {
                    return Err(invalid(format!("brute_force limited to sizes <= {BRUTE_FORCE_MAX}")));
                }
                _ => {}
            }
        }
        match &self.benchmark {
            Benchmark::Assignment { family, sigma, p_one } => GeneratorSpec {
                family: *family,
                n: 1,
                sigma: *sigma,
                p_one: *p_one,
                seed: 0,
            }
            .validate(),
            Benchmark::Meetings {
                participants,
                days,
                slots_per_day,
                params,
            } => {
                if *participants == 0 || *days == 0 || *slots_per_day == 0 {
                    return Err(invalid("participants, days and slots_per_day must be >= 1"));
                }
                params.validate(*slots_per_day)
            }
        }
    }

    fn instance_seed(&self, size: usize, instance: usize) -> u64 {
        derive_seed(self.seed, &[tag("instance"), size as u64, instance as u64])
    }

    fn cell_seed(&self, algorithm: Algorithm, size: usize, instance: usize, run: usize) -> u64 {
        derive_seed(
            self.seed,
            &[tag(algorithm.name()), size as u64, instance as u64, run as u64],
        )
    }
}

/// One (config, instance, run, algorithm) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub config_id: String,
    pub family: String,
    pub size: usize,
    pub instance: usize,
    pub run: usize,
    pub algorithm: Algorithm,
    /// Social welfare, averaged over evaluation steps for ALMA-Learning.
    pub sw: f64,
    /// Loss against the exact optimum in percent, when one is known.
    pub rel_loss_pct: Option<f64>,
    /// Fairness over per-agent (per-participant for meetings) values, averaged
    /// over evaluation steps before the index is taken.
    pub gini: f64,
    pub jain: f64,
    /// First training step after which starting resources never change.
    pub t_conv: Option<usize>,
    pub rounds_mean: Option<f64>,
    pub anomalies: usize,
    /// Mean of the per-step indices (JSON only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gini_step_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jain_step_mean: Option<f64>,
    /// Fairness over per-event values of meeting schedules (JSON only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_gini: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_jain: Option<f64>,
}

impl Row {
    fn sort_key(&self) -> (usize, &str, usize, usize, Algorithm) {
        (self.size, &self.config_id, self.instance, self.run, self.algorithm)
    }
}

/// The CSV projection of a [`Row`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CsvRow {
    config_id: String,
    family: String,
    size: usize,
    instance: usize,
    run: usize,
    algorithm: Algorithm,
    sw: f64,
    rel_loss_pct: Option<f64>,
    gini: f64,
    jain: f64,
    t_conv: Option<usize>,
    rounds_mean: Option<f64>,
    anomalies: usize,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "config_id",
    "family",
    "size",
    "instance",
    "run",
    "algorithm",
    "sw",
    "rel_loss_pct",
    "gini",
    "jain",
    "t_conv",
    "rounds_mean",
    "anomalies",
];

impl From<&Row> for CsvRow {
    fn from(r: &Row) -> Self {
        CsvRow {
            config_id: r.config_id.clone(),
            family: r.family.clone(),
            size: r.size,
            instance: r.instance,
            run: r.run,
            algorithm: r.algorithm,
            sw: r.sw,
            rel_loss_pct: r.rel_loss_pct,
            gini: r.gini,
            jain: r.jain,
            t_conv: r.t_conv,
            rounds_mean: r.rounds_mean,
            anomalies: r.anomalies,
        }
    }
}

impl From<CsvRow> for Row {
    fn from(r: CsvRow) -> Self {
        Row {
            config_id: r.config_id,
            family: r.family,
            size: r.size,
            instance: r.instance,
            run: r.run,
            algorithm: r.algorithm,
            sw: r.sw,
            rel_loss_pct: r.rel_loss_pct,
            gini: r.gini,
            jain: r.jain,
            t_conv: r.t_conv,
            rounds_mean: r.rounds_mean,
            anomalies: r.anomalies,
            gini_step_mean: None,
            jain_step_mean: None,
            event_gini: None,
            event_jain: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation.
    pub sd: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Stat> {
        (!values.is_empty()).then(|| {
            let (mean, sd) = mean_sd(values);
            Stat { mean, sd }
        })
    }
}

/// Mean and SD of every metric per (config, algorithm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config_id: String,
    pub family: String,
    pub size: usize,
    pub algorithm: Algorithm,
    pub rows: usize,
    pub sw: Stat,
    pub rel_loss_pct: Option<Stat>,
    pub gini: Stat,
    pub jain: Stat,
    /// Over the rows that stabilized.
    pub t_conv: Option<Stat>,
    /// Share of rows whose starting resources stabilized (learning rows only).
    pub stabilized_fraction: Option<f64>,
    pub rounds_mean: Option<Stat>,
    pub anomalies: usize,
}

/// Groups rows by (config, algorithm). The result does not depend on the
/// order of `rows`.
pub fn aggregate(rows: &[Row]) -> Vec<Aggregate> {
    let mut sorted: Vec<&Row> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (a.size, &a.config_id, a.algorithm, a.instance, a.run).cmp(&(b.size, &b.config_id, b.algorithm, b.instance, b.run))
    });
    sorted
        .chunk_by(|a, b| a.config_id == b.config_id && a.algorithm == b.algorithm)
        .map(|group| {
            let first = group[0];
            let collect = |f: &dyn Fn(&Row) -> Option<f64>| group.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let stabilized_fraction = (first.algorithm == Algorithm::AlmaLearning).then(|| {
                group.iter().filter(|r| r.t_conv.is_some()).count() as f64 / group.len() as f64
            });
            Aggregate {
                config_id: first.config_id.clone(),
                family: first.family.clone(),
                size: first.size,
                algorithm: first.algorithm,
                rows: group.len(),
                sw: Stat::of(&collect(&|r| Some(r.sw))).expect("non-empty group"),
                rel_loss_pct: Stat::of(&collect(&|r| r.rel_loss_pct)),
                gini: Stat::of(&collect(&|r| Some(r.gini))).expect("non-empty group"),
                jain: Stat::of(&collect(&|r| Some(r.jain))).expect("non-empty group"),
                t_conv: Stat::of(&collect(&|r| r.t_conv.map(|t| t as f64))),
                stabilized_fraction,
                rounds_mean: Stat::of(&collect(&|r| r.rounds_mean)),
                anomalies: group.iter().map(|r| r.anomalies).sum(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    /// Sorts the rows and computes the aggregates.
    pub fn from_rows(name: impl Into<String>, seed: u64, mut rows: Vec<Row>) -> Self {
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let aggregates = aggregate(&rows);
        Self {
            name: name.into(),
            seed,
            rows,
            aggregates,
        }
    }

    pub fn anomalies(&self) -> usize {
        self.rows.iter().map(|r| r.anomalies).sum()
    }

    pub fn find(&self, config_id: &str, algorithm: Algorithm) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.config_id == config_id && a.algorithm == algorithm)
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        writer.write_record(CSV_COLUMNS)?;
        for row in &self.rows {
            writer.serialize(CsvRow::from(row))?;
        }
        writer.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?).map_err(io_err(path))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Reads the rows of a report CSV. The JSON-only fields come back empty.
pub fn read_csv_rows(path: &Path) -> Result<Vec<Row>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_csv_rows_from(file)
}

pub fn read_csv_rows_from<R: std::io::Read>(input: R) -> Result<Vec<Row>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_COLUMNS {
        return Err(invalid(format!("unexpected CSV header {header:?}")));
    }
    reader
        .deserialize::<CsvRow>()
        .map(|r| r.map(Row::from).map_err(Error::from))
        .collect()
}

enum Prepared {
    Assignment(AssignmentInstance),
    Meetings(MeetingInstance),
}

struct PreparedInstance {
    size: usize,
    index: usize,
    problem: Prepared,
    /// Optimal social welfare when an exact solver applies.
    optimum: Option<f64>,
}

/// Metric values of one cell before the row is labeled.
struct Measured {
    sw: f64,
    gini: f64,
    jain: f64,
    t_conv: Option<usize>,
    rounds_mean: Option<f64>,
    anomalies: usize,
    gini_step_mean: Option<f64>,
    jain_step_mean: Option<f64>,
    event_gini: Option<f64>,
    event_jain: Option<f64>,
}

impl Measured {
    fn fixed(sw: f64, values: &[f64]) -> Self {
        Self {
            sw,
            gini: gini(values),
            jain: jain(values),
            t_conv: None,
            rounds_mean: None,
            anomalies: 0,
            gini_step_mean: None,
            jain_step_mean: None,
            event_gini: None,
            event_jain: None,
        }
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

/// Per-coordinate mean of equally long vectors.
fn mean_vector(vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut sums = vec![0.0; vectors.first().map_or(0, Vec::len)];
    for v in vectors {
        for (s, x) in sums.iter_mut().zip(v) {
            *s += x;
        }
    }
    sums.iter().map(|s| s / vectors.len() as f64).collect()
}

fn measure_mixed(sws: &[f64], values: &[Vec<f64>]) -> Measured {
    let mixed = mean_vector(values);
    Measured {
        gini_step_mean: Some(mean(values.iter().map(|v| gini(v)))),
        jain_step_mean: Some(mean(values.iter().map(|v| jain(v)))),
        ..Measured::fixed(mean(sws.iter().copied()), &mixed)
    }
}

fn run_assignment_cell(
    spec: &ExperimentSpec,
    instance: &AssignmentInstance,
    algorithm: Algorithm,
    seed: u64,
) -> Result<Measured> {
    let fixed = |a: Allocation| -> Result<Measured> {
        validate_allocation(instance, &a)?;
        Ok(Measured::fixed(a.social_welfare, &a.values(instance)))
    };
    match algorithm {
        Algorithm::Hungarian => fixed(hungarian(instance)),
        Algorithm::BruteForce => fixed(brute_force(instance)?),
        Algorithm::Greedy => fixed(greedy(instance, &mut rng_from_seed(seed))),
        Algorithm::Alma | Algorithm::AlmaLearning => {
            let learning = algorithm == Algorithm::AlmaLearning;
            let mut config = spec.run_config(seed);
            if !learning {
                config.training_steps = 0;
            }
            let mut game = new_assignment_game(instance, &config, config.power_model())?;
            let trace = game.train(config.training_steps);
            let outcomes = game.evaluate(if learning { config.eval_steps } else { 1 });
            let allocations: Vec<Allocation> = outcomes
                .iter()
                .map(|o| Allocation::new(instance, o.resources.clone()))
                .collect();
            for a in &allocations {
                validate_allocation(instance, a)?;
            }
            let sws: Vec<f64> = allocations.iter().map(|a| a.social_welfare).collect();
            let values: Vec<Vec<f64>> = allocations.iter().map(|a| a.values(instance)).collect();
            Ok(Measured {
                t_conv: if learning {
                    starting_resource_stabilization(&trace)
                } else {
                    None
                },
                rounds_mean: Some(mean(outcomes.iter().map(|o| o.rounds as f64))),
                anomalies: trace.anomalies() + outcomes.iter().map(|o| o.anomalies()).sum::<usize>(),
                ..measure_mixed(&sws, &values)
            })
        }
        Algorithm::Msrac => Err(invalid("msrac only applies to meeting benchmarks")),
    }
}

fn run_meeting_cell(
    spec: &ExperimentSpec,
    instance: &MeetingInstance,
    algorithm: Algorithm,
    seed: u64,
) -> Result<Measured> {
    let fixed = |s: Schedule, anomalies: usize| -> Result<Measured> {
        validate_schedule(instance, &s)?;
        let events = event_values(instance, &s);
        Ok(Measured {
            anomalies,
            event_gini: Some(gini(&events)),
            event_jain: Some(jain(&events)),
            ..Measured::fixed(s.social_welfare, &participant_values(instance, &s))
        })
    };
    match algorithm {
        Algorithm::BruteForce => fixed(brute_force_schedule(instance)?, 0),
        Algorithm::Greedy => fixed(greedy_meetings(instance, &mut rng_from_seed(seed)), 0),
        Algorithm::Msrac => {
            let out = msrac(instance);
            fixed(out.schedule, usize::from(out.anomaly))
        }
        Algorithm::Alma | Algorithm::AlmaLearning => {
            let learning = algorithm == Algorithm::AlmaLearning;
            let config = spec.run_config(seed);
            let run = schedule_with_alma(instance, learning, &config, &MeetingAlmaOptions::default())?;
            for s in &run.schedules {
                validate_schedule(instance, s)?;
            }
            let sws: Vec<f64> = run.schedules.iter().map(|s| s.social_welfare).collect();
            let values: Vec<Vec<f64>> = run
                .schedules
                .iter()
                .map(|s| participant_values(instance, s))
                .collect();
            let events: Vec<Vec<f64>> = run.schedules.iter().map(|s| event_values(instance, s)).collect();
            let event_mixed = mean_vector(&events);
            Ok(Measured {
                t_conv: if learning {
                    starting_resource_stabilization(&run.trace)
                } else {
                    None
                },
                rounds_mean: Some(mean(run.rounds.iter().map(|&r| r as f64))),
                anomalies: run.anomalies,
                event_gini: Some(gini(&event_mixed)),
                event_jain: Some(jain(&event_mixed)),
                ..measure_mixed(&sws, &values)
            })
        }
        Algorithm::Hungarian => Err(invalid("hungarian only applies to assignment benchmarks")),
    }
}

fn prepare(spec: &ExperimentSpec, size: usize, index: usize) -> Result<PreparedInstance> {
    let seed = spec.instance_seed(size, index);
    let (problem, optimum) = match &spec.benchmark {
        Benchmark::Assignment { family, sigma, p_one } => {
            let instance = GeneratorSpec {
                family: *family,
                n: size,
                sigma: *sigma,
                p_one: *p_one,
                seed,
            }
            .generate()?;
            let optimum = hungarian(&instance).social_welfare;
            (Prepared::Assignment(instance), Some(optimum))
        }
        Benchmark::Meetings {
            participants,
            days,
            slots_per_day,
            params,
        } => {
            let instance = generate_meeting_instance(size, *participants, *days, *slots_per_day, params, seed)?;
            // The oracle is only affordable on small instances.
            let optimum = brute_force_schedule(&instance).ok().map(|s| s.social_welfare);
            (Prepared::Meetings(instance), optimum)
        }
    };
    Ok(PreparedInstance {
        size,
        index,
        problem,
        optimum,
    })
}

fn run_cell(spec: &ExperimentSpec, prepared: &PreparedInstance, algorithm: Algorithm, run: usize) -> Result<Row> {
    let seed = spec.cell_seed(algorithm, prepared.size, prepared.index, run);
    let m = match &prepared.problem {
        Prepared::Assignment(instance) => run_assignment_cell(spec, instance, algorithm, seed)?,
        Prepared::Meetings(instance) => run_meeting_cell(spec, instance, algorithm, seed)?,
    };
    let rel_loss_pct = match prepared.optimum {
        Some(opt) if opt > 0.0 => Some(relative_sw_loss(m.sw, opt)?),
        Some(_) => Some(0.0),
        None => None,
    };
    Ok(Row {
        config_id: spec.config_id(prepared.size),
        family: spec.benchmark.family_name().to_owned(),
        size: prepared.size,
        instance: prepared.index,
        run,
        algorithm,
        sw: m.sw,
        rel_loss_pct,
        gini: m.gini,
        jain: m.jain,
        t_conv: m.t_conv,
        rounds_mean: m.rounds_mean,
        anomalies: m.anomalies,
        gini_step_mean: m.gini_step_mean,
        jain_step_mean: m.jain_step_mean,
        event_gini: m.event_gini,
        event_jain: m.event_jain,
    })
}

/// Runs every cell of the sweep, in parallel on `threads` workers (the
/// global pool when `None`).
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentReport> {
    spec.validate()?;
    let work = || -> Result<ExperimentReport> {
        let coords: Vec<(usize, usize)> = spec
            .sizes
            .iter()
            .flat_map(|&size| (0..spec.instances_per_config).map(move |i| (size, i)))
            .collect();
        let instances = coords
            .par_iter()
            .map(|&(size, i)| prepare(spec, size, i))
            .collect::<Result<Vec<_>>>()?;
        let mut algorithms = spec.algorithms.clone();
        algorithms.sort();
        algorithms.dedup();
        let cells: Vec<(&PreparedInstance, Algorithm, usize)> = instances
            .iter()
            .flat_map(|p| {
                algorithms.iter().flat_map(move |&alg| {
                    let runs = if alg.is_randomized() { spec.runs_per_instance } else { 1 };
                    (0..runs).map(move |run| (p, alg, run))
                })
            })
            .collect();
        let rows = cells
            .par_iter()
            .map(|&(p, alg, run)| run_cell(spec, p, alg, run))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExperimentReport::from_rows(spec.name.clone(), spec.seed, rows))
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(algorithms: Vec<Algorithm>) -> ExperimentSpec {
        ExperimentSpec {
            algorithms,
            sizes: vec![4],
            instances_per_config: 1,
            runs_per_instance: 2,
            training_steps: Some(16),
            eval_steps: 4,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn hungarian_alone_has_zero_loss() {
        let report = run_experiment(&spec(vec![Algorithm::Hungarian]), None).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].rel_loss_pct, Some(0.0));
        assert_eq!(report.to_csv_string().unwrap().lines().count(), 2);
    }

    #[test]
    fn empty_report_is_header_only() {
        let report = ExperimentReport::from_rows("x", 0, vec![]);
        assert_eq!(report.to_csv_string().unwrap(), CSV_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn spec_validation() {
        assert!(spec(vec![]).validate().is_err());
        assert!(spec(vec![Algorithm::Msrac]).validate().is_err());
        let big = ExperimentSpec {
            sizes: vec![12],
            ..spec(vec![Algorithm::BruteForce])
        };
        assert!(big.validate().is_err());
        let meetings = ExperimentSpec {
            benchmark: Benchmark::Meetings {
                participants: 5,
                days: 1,
                slots_per_day: 8,
                params: MeetingGenParams::default(),
            },
            ..spec(vec![Algorithm::Hungarian])
        };
        assert!(meetings.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            name = "map-small"
            algorithms = ["hungarian", "alma_learning"]
            sizes = [4, 8]
            seed = 3
            [benchmark]
            kind = "assignment"
            family = "map"
        "#;
        let s = ExperimentSpec::from_toml_str(text).unwrap();
        assert_eq!(s.instances_per_config, 16);
        assert_eq!(s.training_steps(), 512);
        assert_eq!(s.algorithms, vec![Algorithm::Hungarian, Algorithm::AlmaLearning]);
        assert!(ExperimentSpec::from_toml_str("colour = 1").is_err());
    }

    #[test]
    fn csv_round_trip_preserves_aggregates() {
        let report = run_experiment(&spec(vec![Algorithm::Hungarian, Algorithm::Greedy, Algorithm::AlmaLearning]), None).unwrap();
        let csv = report.to_csv_string().unwrap();
        let rows = read_csv_rows_from(csv.as_bytes()).unwrap();
        let again = aggregate(&rows);
        assert_eq!(again.len(), report.aggregates.len());
        for (a, b) in again.iter().zip(&report.aggregates) {
            assert_eq!(a.sw, b.sw);
            assert_eq!(a.gini, b.gini);
        }
    }
}
