use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use intentdrive::harness::{
    evaluate_model, line_chart_svg, load_compatible, plan_svg, smooth, train, MetricsLog, RunConfig, TrainState,
};
use intentdrive::simworld::{generate_corpus, read_corpus, read_episode, write_corpus, Episode, GroundTruthPriors, PreparedFrame};
use intentdrive::worldmodel::PlanResult;
use intentdrive::{Error, Result};

#[derive(Parser)]
#[command(name = "intentdrive", version, about = "Intention-aware latent world model planner")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        /// Run config whose `gen` section is used; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train on a corpus; writes checkpoint.bin, metrics.jsonl and config.toml.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `data.corpus`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Overrides `optim.steps`.
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from `<out>/checkpoint.bin`.
        #[arg(long)]
        resume: bool,
    },
    /// Open-loop metrics of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Score every corpus episode instead of the held-out tail.
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Plan one frame of an episode directory and print the result as JSON.
    Plan {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episode: PathBuf,
        #[arg(long)]
        frame: usize,
        /// Also write a top-down SVG of the plan.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Plot loss curves from a metrics log, or a saved plan over its scene.
    #[command(group = clap::ArgGroup::new("source").required(true).args(["metrics", "plan"]))]
    Plot {
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// PlanResult JSON as printed by `plan`; needs `--episode`.
        #[arg(long, requires = "episode")]
        plan: Option<PathBuf>,
        #[arg(long)]
        episode: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::desk()),
    }
}

fn split_holdout(mut episodes: Vec<Episode>, holdout: usize) -> (Vec<Episode>, Vec<Episode>) {
    let keep = episodes.len().saturating_sub(holdout);
    let held = episodes.split_off(keep);
    (episodes, held)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    fs::write(path, text).map_err(Error::io(path))
}

fn loss_chart(metrics: &Path) -> Result<String> {
    let text = fs::read_to_string(metrics).map_err(Error::io(metrics))?;
    let mut names: Vec<(&str, Vec<(f64, f64)>)> =
        ["total", "traj", "recon", "score", "sem"].iter().map(|&n| (n, Vec::new())).collect();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::Malformed { path: metrics.to_path_buf(), reason: format!("line {}: {e}", i + 1) })?;
        if v["kind"] != "train" {
            continue;
        }
        let step = v["step"].as_f64().unwrap_or(i as f64);
        for (name, series) in names.iter_mut() {
            if let Some(y) = v[*name].as_f64() {
                series.push((step, y));
            }
        }
    }
    let series: Vec<(String, Vec<(f64, f64)>)> =
        names.into_iter().map(|(n, s)| (n.to_string(), smooth(&s, 0.05))).collect();
    Ok(line_chart_svg("training losses (EMA 0.05)", "step", &series, true))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::GenData { seed, episodes, out, config } => {
            let config = load_config(config.as_deref())?;
            let eps = generate_corpus(&config.gen, seed, episodes)?;
            let index = write_corpus(&out, &config.gen, &eps)?;
            let c = index.counts;
            println!("wrote {} episodes to {} (left {}, straight {}, right {})", eps.len(), out.display(), c.left, c.straight, c.right);
        }
        Cmd::Train { config, out, corpus, steps, resume } => {
            let ckpt = out.join("checkpoint.bin");
            let (mut state, mut config) = if resume {
                let (state, stored) = TrainState::load(&ckpt)?;
                if let Some(p) = config.as_deref() {
                    load_compatible(&ckpt, &RunConfig::load(p)?)?;
                }
                (state, stored)
            } else {
                let config = load_config(config.as_deref())?;
                (TrainState::new(&config)?, config)
            };
            if let Some(c) = corpus {
                config.data.corpus = c;
            }
            let steps = steps.unwrap_or(config.optim.steps);
            let (_, episodes) = read_corpus(&config.data.corpus)?;
            let (train_eps, held) = split_holdout(episodes, config.data.holdout);
            fs::create_dir_all(&out).map_err(Error::io(&out))?;
            write_text(&out.join("config.toml"), &config.to_toml())?;
            let mut log = MetricsLog::open(&out.join("metrics.jsonl"))?;
            let todo = steps.saturating_sub(state.step);
            log::info!("training {todo} steps on {} episodes", train_eps.len());
            let records = train(&config, &mut state, &train_eps, todo, Some(&mut log), Some(&ckpt))?;
            if let Some(last) = records.last() {
                println!("step {} total {:.5} traj {:.4}", last.step, last.losses.total, last.losses.traj);
            }
            if !held.is_empty() {
                let report = evaluate_model(&state.model, &held, 1)?;
                log.append(&serde_json::json!({ "kind": "eval", "step": state.step, "metrics": report.metrics }))?;
                println!("held-out l2_avg {:.3} m, cr_avg {:.2} %", report.metrics.l2_avg, report.metrics.cr_avg);
            }
        }
        Cmd::Eval { checkpoint, corpus, out, all, stride } => {
            let (state, config) = TrainState::load(&checkpoint)?;
            let (_, episodes) = read_corpus(&corpus)?;
            let episodes = if all { episodes } else { split_holdout(episodes, config.data.holdout).1 };
            if episodes.is_empty() {
                return Err(Error::EmptyCorpus(corpus));
            }
            let report = evaluate_model(&state.model, &episodes, stride)?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => write_text(&p, &json)?,
                None => println!("{json}"),
            }
            let m = report.metrics;
            eprintln!("l2 {:.3}/{:.3}/{:.3} avg {:.3} m, cr avg {:.2} %", m.l2_1s, m.l2_2s, m.l2_3s, m.l2_avg, m.cr_avg);
        }
        Cmd::Plan { checkpoint, episode, frame, svg } => {
            let (state, _) = TrainState::load(&checkpoint)?;
            let ep = read_episode(&episode)?;
            if frame >= ep.frames.len() {
                return Err(Error::FrameOutOfRange { frame, frames: ep.frames.len() });
            }
            let priors = GroundTruthPriors;
            let lo = frame.saturating_sub(1);
            let prepared: Vec<PreparedFrame> = (lo..=frame).map(|t| PreparedFrame::new(&ep.frames[t], &priors)).collect();
            let history: Vec<_> = prepared.iter().map(|p| p.input()).collect();
            let plan = state.model.infer_plan(&history, &ep.rig, ep.frames[frame].command, frame)?;
            println!("{}", serde_json::to_string_pretty(&plan)?);
            if let Some(p) = svg {
                write_text(&p, &plan_svg(&ep, frame, &plan))?;
            }
        }
        Cmd::Plot { metrics, plan, episode, out } => match (metrics, plan, episode) {
            (_, Some(plan), Some(episode)) => {
                let text = fs::read_to_string(&plan).map_err(Error::io(&plan))?;
                let plan: PlanResult = serde_json::from_str(&text)?;
                let ep = read_episode(&episode)?;
                if plan.frame_id >= ep.frames.len() {
                    return Err(Error::FrameOutOfRange { frame: plan.frame_id, frames: ep.frames.len() });
                }
                write_text(&out, &plan_svg(&ep, plan.frame_id, &plan))?;
            }
            (Some(metrics), _, _) => write_text(&out, &loss_chart(&metrics)?)?,
            _ => return Err(Error::InvalidArgument("plot needs --metrics, or --plan with --episode".into())),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
