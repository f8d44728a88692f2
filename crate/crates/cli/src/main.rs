use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use alma_core::baselines::{brute_force, hungarian};
use alma_core::generators::{Family, GeneratorSpec};
use alma_core::harness::{aggregate, read_csv_rows, run_experiment, ExperimentReport, ExperimentSpec};
use alma_core::meetings::{
    brute_force_schedule, generate_meeting_instance, greedy_meetings, msrac, schedule_with_alma, validate_schedule,
    MeetingAlmaOptions, MeetingGenParams, MeetingInstance,
};
use alma_core::model::{AssignmentInstance, RunConfig};
use alma_core::rng::{derive_seed, rng_from_seed};

#[derive(Parser)]
#[command(name = "alma-sim", version, about = "Decentralized assignment and meeting-scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (file or directory, depending on the command).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail with a nonzero exit code when any anomaly is recorded.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated instances as JSON files.
    Gen {
        /// map, noisy_common, binary or meetings.
        #[arg(long)]
        family: String,
        /// Agents (= resources), or events for meetings.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 0.5)]
        p_one: f64,
        #[arg(long, default_value_t = 20)]
        participants: usize,
        #[arg(long, default_value_t = 1)]
        days: usize,
        #[arg(long, default_value_t = 24)]
        slots: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Execute an experiment described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the Hungarian optimum with exhaustive search on an instance file.
    Oracle {
        instance: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Re-aggregate the rows of a report CSV.
    Report {
        csv: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Schedule a meeting instance file with every meeting scheduler.
    Meetings {
        instance: PathBuf,
        /// Training steps of ALMA-Learning.
        #[arg(long, default_value_t = 512)]
        training_steps: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn finish(anomalies: usize, strict: bool) -> Result<ExitCode> {
    if anomalies > 0 {
        eprintln!("warning: {anomalies} anomalies recorded");
        if strict {
            bail!("{anomalies} anomalies recorded under --strict");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen {
            family,
            n,
            count,
            sigma,
            p_one,
            participants,
            days,
            slots,
            common,
        } => {
            let dir = common.out.unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let seed = common.seed.unwrap_or(0);
            for i in 0..count {
                let instance_seed = derive_seed(seed, &[i as u64]);
                let path = dir.join(format!("{family}-n{n}-{i}.json"));
                if family == "meetings" {
                    let params = MeetingGenParams::default();
                    generate_meeting_instance(n, participants, days, slots, &params, instance_seed)?.save(&path)?;
                } else {
                    let family: Family = family.parse()?;
                    GeneratorSpec {
                        family,
                        n,
                        sigma,
                        p_one,
                        seed: instance_seed,
                    }
                    .generate()?
                    .save(&path)?;
                }
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            threads,
            common,
        } => {
            let mut spec = ExperimentSpec::load(&config)?;
            if let Some(seed) = common.seed {
                spec.seed = seed;
            }
            let base = common
                .out
                .or_else(|| spec.output.clone())
                .unwrap_or_else(|| PathBuf::from(&spec.name));
            let report = run_experiment(&spec, threads)?;
            report.write_csv(&base.with_extension("csv"))?;
            report.write_json(&base.with_extension("json"))?;
            print_aggregates(&report);
            finish(report.anomalies(), common.strict)
        }
        Command::Oracle { instance, common } => {
            let inst = AssignmentInstance::load(&instance)?;
            let h = hungarian(&inst);
            let b = brute_force(&inst)?;
            println!("hungarian\t{}", h.social_welfare);
            println!("brute_force\t{}", b.social_welfare);
            if (h.social_welfare - b.social_welfare).abs() > 1e-9 {
                bail!("optimal social welfare mismatch on {}", instance.display());
            }
            finish(0, common.strict)
        }
        Command::Report { csv, common } => {
            let rows = read_csv_rows(&csv)?;
            let aggregates = aggregate(&rows);
            let anomalies = rows.iter().map(|r| r.anomalies).sum();
            let text = serde_json::to_string_pretty(&aggregates)?;
            match common.out {
                Some(path) => write(&path, &text)?,
                None => println!("{text}"),
            }
            finish(anomalies, common.strict)
        }
        Command::Meetings {
            instance,
            training_steps,
            common,
        } => {
            let inst = MeetingInstance::load(&instance)?;
            let seed = common.seed.unwrap_or(0);
            let config = RunConfig {
                seed,
                training_steps,
                ..RunConfig::default()
            };
            let options = MeetingAlmaOptions::default();
            let mut results = serde_json::Map::new();
            let mut anomalies = 0;

            let alma = schedule_with_alma(&inst, false, &config, &options)?;
            let learned = schedule_with_alma(&inst, true, &config, &options)?;
            anomalies += alma.anomalies + learned.anomalies;
            let m = msrac(&inst);
            anomalies += usize::from(m.anomaly);
            let mut schedules = vec![
                ("alma", alma.schedules[0].clone()),
                ("alma_learning", learned.schedules.last().expect("eval steps >= 1").clone()),
                ("msrac", m.schedule),
                ("greedy", greedy_meetings(&inst, &mut rng_from_seed(seed))),
            ];
            if let Ok(best) = brute_force_schedule(&inst) {
                schedules.push(("brute_force", best));
            }
            for (name, schedule) in schedules {
                validate_schedule(&inst, &schedule)?;
                println!("{name}\t{}\t{}/{}", schedule.social_welfare, schedule.scheduled(), inst.n_events());
                results.insert(name.into(), serde_json::to_value(&schedule)?);
            }
            if let Some(path) = common.out {
                write(&path, &serde_json::to_string_pretty(&results)?)?;
            }
            finish(anomalies, common.strict)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}

fn print_aggregates(report: &ExperimentReport) {
    for a in &report.aggregates {
        let loss = a
            .rel_loss_pct
            .map_or_else(|| "-".to_owned(), |s| format!("{:.3} ± {:.3}", s.mean, s.sd));
        println!(
            "{}\t{}\tsw {:.4} ± {:.4}\tloss% {loss}\tgini {:.4}\tjain {:.4}",
            a.config_id,
            a.algorithm.name(),
            a.sw.mean,
            a.sw.sd,
            a.gini.mean,
            a.jain.mean
        );
    }
}
