//! `dynorm`: aggregation, audits, reward fitting, gating and gridworld runs.
//!
//! Every command writes JSON to standard output or to `--out`. Input and
//! usage errors exit with status 2.

mod experiment;
mod input;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use dynorm_core::aggregation::{AggregateOrdering, Rule, DEFAULT_INITIAL_RATING, DEFAULT_K_FACTOR};
use dynorm_core::audit::{run_audit, Criterion, SearchConfig};
use dynorm_core::gridworld::{disable_threshold, run_experiment, sigma_sweep, EpisodeTrace};
use dynorm_core::preference::{pairwise_tally_with, ProfileError, TieConvention};
use dynorm_core::profile_file::parse_profile;
use dynorm_core::reward::{
    dpo_loss, dpo_step, fit_bradley_terry, preference_margin, rejection_gate, CategoricalPolicy,
    DEFAULT_PSEUDO_COUNT,
};
use serde::Serialize;

use experiment::{ConfigFile, Plan};

#[derive(Parser, Debug)]
#[command(
    name = "dynorm",
    version,
    about = "Preference aggregation, reward fitting and impact-mitigation gridworlds"
)]
struct Cli {
    /// Write the main JSON output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Ties {
    Neither,
    SplitHalf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Aggregate a weighted profile file.
    Aggregate {
        profile: PathBuf,
        #[arg(long, default_value = "borda")]
        rule: String,
        #[arg(long, default_value_t = DEFAULT_K_FACTOR)]
        k_factor: f64,
        #[arg(long, default_value_t = DEFAULT_INITIAL_RATING)]
        initial_rating: f64,
        /// Also report the pairwise tally under this tie convention.
        #[arg(long, value_enum)]
        tally: Option<Ties>,
    },
    /// Randomized criterion audit of a rule.
    Audit {
        #[arg(long)]
        rule: String,
        #[arg(long)]
        criterion: String,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        alternatives: usize,
        #[arg(long, default_value_t = 5)]
        sets: usize,
    },
    /// Fit Bradley-Terry strengths to a comparison CSV.
    FitBt {
        comparisons: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_PSEUDO_COUNT)]
        pseudo: f64,
    },
    /// Run DPO steps on a tabular policy, starting from a uniform reference.
    DpoDemo {
        comparisons: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        step_size: f64,
    },
    /// Rejection gate over a JSON candidate list.
    Gate {
        candidates: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long, default_value = "safety-protocol-response")]
        fallback: String,
    },
    /// Run a gridworld experiment config.
    Gridworld {
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config sigma.
        #[arg(long)]
        sigma: Option<f64>,
        /// Per-episode evaluation traces as JSON lines.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Trajectory dump for plotting.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DYNORM_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(ProfileError::Incoherent(report)) = e.downcast_ref::<ProfileError>() {
                eprintln!(
                    "{}",
                    serde_json::to_string_pretty(report).unwrap_or_default()
                );
            }
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Aggregate {
            profile,
            rule,
            k_factor,
            initial_rating,
            tally,
        } => aggregate(out, profile, rule, *k_factor, *initial_rating, *tally),
        Command::Audit {
            rule,
            criterion,
            trials,
            seed,
            alternatives,
            sets,
        } => {
            let rule: Rule = rule.parse()?;
            let criterion: Criterion = criterion.parse()?;
            let verdict = run_audit(
                &rule,
                criterion,
                &SearchConfig::new(*alternatives, *sets, *trials, *seed),
            )?;
            write_json(out, &verdict)
        }
        Command::FitBt {
            comparisons,
            max_iters,
            tol,
            pseudo,
        } => {
            let data = input::read_comparisons(comparisons)?;
            write_json(out, &fit_bradley_terry(&data, *max_iters, *tol, *pseudo)?)
        }
        Command::DpoDemo {
            comparisons,
            beta,
            steps,
            step_size,
        } => dpo_demo(out, comparisons, *beta, *steps, *step_size),
        Command::Gate {
            candidates,
            threshold,
            fallback,
        } => {
            if threshold.is_nan() {
                bail!("threshold must be a number");
            }
            let cands = input::read_candidates(candidates)?;
            write_json(out, &rejection_gate(&cands, *threshold, fallback))
        }
        Command::Gridworld {
            config,
            seed,
            sigma,
            traces,
            csv,
        } => gridworld(
            out,
            config,
            *seed,
            *sigma,
            traces.as_deref(),
            csv.as_deref(),
        ),
    }
}

#[derive(Serialize)]
struct TallyReport {
    convention: &'static str,
    alternatives: Vec<String>,
    /// `support[x][y]`: weight ranking x strictly above y.
    support: Vec<Vec<String>>,
    tied: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct AggregateReport {
    #[serde(flatten)]
    ordering: AggregateOrdering,
    #[serde(skip_serializing_if = "Option::is_none")]
    tally: Option<TallyReport>,
}

fn aggregate(
    out: Option<&Path>,
    path: &Path,
    rule: &str,
    k_factor: f64,
    initial: f64,
    ties: Option<Ties>,
) -> anyhow::Result<()> {
    let mut rule: Rule = rule.parse()?;
    if let Rule::Elo { .. } = rule {
        if !(k_factor.is_finite() && k_factor > 0.0) || !initial.is_finite() {
            bail!("--k-factor must be positive and --initial-rating finite");
        }
        rule = Rule::Elo { k_factor, initial };
    }
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let profile = parse_profile(&text)?;
    profile.ensure_coherent()?;
    let ordering = rule.aggregate(&profile)?;
    let tally = match ties {
        None => None,
        Some(t) => {
            let (convention, id) = match t {
                Ties::Neither => (TieConvention::Neither, "neither"),
                Ties::SplitHalf => (TieConvention::SplitHalf, "split-half"),
            };
            let m = pairwise_tally_with(&profile, convention)?;
            let n = m.len();
            let grid = |f: &dyn Fn(usize, usize) -> String| {
                (0..n).map(|x| (0..n).map(|y| f(x, y)).collect()).collect()
            };
            Some(TallyReport {
                convention: id,
                alternatives: m.alternatives().iter().map(ToString::to_string).collect(),
                support: grid(&|x, y| m.support_at(x, y).to_string()),
                tied: grid(&|x, y| m.tied_at(x, y).to_string()),
            })
        }
    };
    write_json(out, &AggregateReport { ordering, tally })
}

#[derive(Serialize)]
struct DpoPoint {
    step: usize,
    loss: f64,
    mean_margin: f64,
}

#[derive(Serialize)]
struct DpoReport {
    beta: f64,
    step_size: f64,
    series: Vec<DpoPoint>,
    policy: CategoricalPolicy,
}

fn dpo_demo(
    out: Option<&Path>,
    path: &Path,
    beta: f64,
    steps: usize,
    step_size: f64,
) -> anyhow::Result<()> {
    let data = input::read_comparisons(path)?;
    let mut contexts: Vec<&str> = data.iter().map(|r| r.context_id.as_str()).collect();
    let mut outputs: Vec<&str> = data
        .iter()
        .flat_map(|r| [r.chosen_id.as_str(), r.rejected_id.as_str()])
        .collect();
    contexts.sort_unstable();
    contexts.dedup();
    outputs.sort_unstable();
    outputs.dedup();
    let reference = CategoricalPolicy::uniform(&contexts, &outputs);
    let mut policy = reference.clone();
    let total: f64 = data.iter().map(|r| r.weight).sum();
    let mut series = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let margin = data
            .iter()
            .map(|r| Ok(r.weight * preference_margin(&policy, r)?))
            .sum::<Result<f64, dynorm_core::reward::RewardError>>()?
            / total;
        series.push(DpoPoint {
            step,
            loss: dpo_loss(&policy, &reference, &data, beta)?,
            mean_margin: margin,
        });
        if step < steps {
            policy = dpo_step(&policy, &reference, &data, beta, step_size)?;
        }
    }
    write_json(
        out,
        &DpoReport {
            beta,
            step_size,
            series,
            policy,
        },
    )
}

fn gridworld(
    out: Option<&Path>,
    config: &Path,
    seed: Option<u64>,
    sigma: Option<f64>,
    traces: Option<&Path>,
    csv_path: Option<&Path>,
) -> anyhow::Result<()> {
    let file = ConfigFile::read(config)?;
    match file.plan(seed, sigma)? {
        Plan::Single(cfg) => {
            let result = run_experiment(&cfg)?;
            if let Some(p) = traces {
                write_lines(p, &result.traces)?;
            }
            if let Some(p) = csv_path {
                write_csv(p, &result.traces)?;
            }
            write_lines_to(out, std::slice::from_ref(&result.metrics))
        }
        Plan::Sweep(cfg, sigmas, n_aux) => {
            if traces.is_some() || csv_path.is_some() {
                log::warn!("traces are not written for sigma sweeps");
            }
            write_lines_to(out, &sigma_sweep(&cfg, &sigmas, n_aux)?)
        }
        Plan::Threshold {
            discounts,
            episodes,
            eval_episodes,
            seed,
        } => write_lines_to(
            out,
            &[disable_threshold(
                &discounts,
                episodes,
                eval_episodes,
                seed,
            )?],
        ),
    }
}

fn open_out(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_lines_to<T: Serialize>(out: Option<&Path>, values: &[T]) -> anyhow::Result<()> {
    let mut w = open_out(out)?;
    for v in values {
        serde_json::to_writer(&mut w, v)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn write_lines<T: Serialize>(path: &Path, values: &[T]) -> anyhow::Result<()> {
    write_lines_to(Some(path), values)
}

fn write_csv(path: &Path, traces: &[EpisodeTrace]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record([
        "episode",
        "t",
        "state",
        "action",
        "reward",
        "next_state",
        "done",
    ])?;
    for tr in traces {
        for s in &tr.steps {
            w.write_record([
                tr.episode.to_string(),
                s.t.to_string(),
                s.state.to_string(),
                s.action.clone(),
                s.reward.to_string(),
                s.next_state.to_string(),
                s.done.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
