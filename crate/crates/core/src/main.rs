use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use adapt::config::{Backend, RunConfig};
use adapt::harness::{
    read_trajectory, report, run_episode, run_suite, split_folds, trajectory_paths, write_trajectory, EpisodeConfig,
    EpisodeDeps, PersonaMode, SuiteConfig, TerminalReason, DEFAULT_MAX_STEPS,
};
use adapt::policy::{PolicyConfig, PolicyMode};
use adapt::refdpo::{build_dataset, export_jsonl, Clients};
use adapt::world::{generate_scene, SceneGenConfig};

#[derive(Parser)]
#[command(name = "adapt", version, about = "Household-task simulator, preference benchmark and reflection data pipeline")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model backend: mock, heuristic or http. Defaults to http when an endpoint is configured.
    #[arg(long, global = true)]
    backend: Option<Backend>,
    /// Log redacted LLM requests and responses to stderr.
    #[arg(long, global = true)]
    trace_llm: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a scene and write it as JSON.
    GenScene {
        /// Scene seed.
        #[arg(long)]
        seed: u64,
        /// Inclusion probability for optional objects, in [0, 1].
        #[arg(long, default_value_t = 0.7)]
        p: f64,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and print its metrics.
    Run {
        /// Task, one of the shipped breakfast tasks.
        #[arg(long)]
        task: String,
        /// Persona id, e.g. persona_02.
        #[arg(long)]
        persona: String,
        /// Policy: base, react, always_ask, never_ask or teacher.
        #[arg(long)]
        policy: Option<PolicyMode>,
        /// Scene seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// How questions are answered: scripted, llm or human.
        #[arg(long)]
        persona_mode: Option<PersonaMode>,
        /// Inclusion probability for optional objects, in [0, 1]. Default 0.7.
        #[arg(long)]
        p: Option<f64>,
        /// Step budget per episode. Default 50.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Directory to write the trajectory file into.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a persona x task x seed grid and write trajectories, cells.csv and summary.json.
    Suite {
        /// Evaluate the held-out personas of this fold; the rest count as seen.
        #[arg(long, conflicts_with = "personas")]
        fold: Option<usize>,
        /// Comma-separated persona ids.
        #[arg(long, value_delimiter = ',')]
        personas: Vec<String>,
        /// Also run the seen personas of the fold.
        #[arg(long, requires = "fold")]
        include_seen: bool,
        /// Restrict to these tasks (repeatable).
        #[arg(long)]
        task: Vec<String>,
        /// Policy: base, react, always_ask, never_ask or teacher.
        #[arg(long)]
        policy: Option<PolicyMode>,
        /// Number of seeds, run as 0..N.
        #[arg(long)]
        seeds: Option<u64>,
        /// How questions are answered: scripted, llm or human.
        #[arg(long)]
        persona_mode: Option<PersonaMode>,
        /// Inclusion probability for optional objects, in [0, 1]. Default 0.7.
        #[arg(long)]
        p: Option<f64>,
        /// Step budget per episode. Default 50.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Parallel episodes.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Root directory for run directories. Default runs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relabel trajectories with the teacher and write preference triples as JSONL.
    BuildDataset {
        /// Suite run directories or trajectory files.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Output JSONL file.
        #[arg(long)]
        out: PathBuf,
        /// Question margin: pick the question when it raises the teacher action score by more than this.
        #[arg(long)]
        eps1: Option<f64>,
        /// Teacher margin: pick the teacher action when the student leads it by less than this.
        #[arg(long)]
        eps2: Option<f64>,
        /// Teacher policy mode.
        #[arg(long, default_value = "teacher")]
        teacher: PolicyMode,
        /// Backend for the student scorer; defaults to the main backend.
        #[arg(long)]
        student_backend: Option<Backend>,
        /// Statistics file; defaults to stats.json beside the output.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Summarize suite run directories as a table and write the averaged curve CSV.
    Report {
        /// Suite run directories.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Where to write the averaged curve CSV.
        #[arg(long, default_value = "curve.csv")]
        curve_out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn deps(cfg: &RunConfig, backend: Backend, trace: bool) -> Result<EpisodeDeps> {
    let client = cfg.client(backend, trace)?;
    Ok(EpisodeDeps::new(cfg.load_catalog()?, cfg.load_tasks()?, cfg.load_personas()?, client))
}

fn policy_config(cfg: &RunConfig, flag: Option<PolicyMode>) -> Result<PolicyConfig> {
    let mode = match (flag, &cfg.policy.mode) {
        (Some(m), _) => m,
        (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
        (None, None) => PolicyMode::Base,
    };
    let mut pc = PolicyConfig::new(mode);
    let p = &cfg.policy;
    pc.retries = p.retries.unwrap_or(pc.retries);
    pc.sampling.temperature = p.temperature.unwrap_or(pc.sampling.temperature);
    pc.sampling.max_tokens = p.max_tokens.unwrap_or(pc.sampling.max_tokens);
    pc.history_budget = p.history_budget.or(pc.history_budget);
    Ok(pc)
}

fn persona_mode(cfg: &RunConfig, flag: Option<PersonaMode>) -> Result<PersonaMode> {
    match (flag, &cfg.persona_mode) {
        (Some(m), _) => Ok(m),
        (None, Some(s)) => s.parse().map_err(anyhow::Error::msg),
        (None, None) => Ok(PersonaMode::Scripted),
    }
}

fn check_p(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        bail!("--p must be within [0, 1], got {p}");
    }
    Ok(p)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let backend = cfg.backend(cli.backend);
    match cli.cmd {
        Cmd::GenScene { seed, p, out } => {
            let sc = SceneGenConfig::new(check_p(p)?, seed)?;
            let scene = generate_scene(&cfg.load_catalog()?, &sc);
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&out, scene.to_json())?;
            println!("movables={} digest={} out={}", scene.movable_count(), scene.digest(), out.display());
        }
        Cmd::Run { task, persona, policy, seed, persona_mode: pm, p, max_steps, out } => {
            let deps = deps(&cfg, backend, cli.trace_llm)?;
            let ec = EpisodeConfig {
                task,
                persona_id: persona,
                seed,
                inclusion_probability: check_p(p.or(cfg.suite.inclusion_probability).unwrap_or(0.7))?,
                max_steps: max_steps.or(cfg.suite.max_steps).unwrap_or(DEFAULT_MAX_STEPS),
                policy: policy_config(&cfg, policy)?,
                persona_mode: persona_mode(&cfg, pm)?,
            };
            let (traj, m) = run_episode(&ec, &deps)?;
            let terminal = match &traj.terminal {
                TerminalReason::Done => "done".to_string(),
                TerminalReason::KExhausted => "k_exhausted".to_string(),
                TerminalReason::Fault { message } => format!("fault({message})"),
            };
            println!(
                "rate={:.4} questions={} steps={} satisfied={} violated={} inapplicable={} success={} terminal={}",
                m.rate, m.num_questions, m.num_steps, m.satisfied, m.violated, m.inapplicable, m.success, terminal
            );
            if let Some(dir) = out.or(cfg.out.clone()) {
                std::fs::create_dir_all(&dir)?;
                let path = write_trajectory(&dir, &traj, &m)?;
                println!("trajectory={}", path.display());
            }
        }
        Cmd::Suite { fold, personas, include_seen, task, policy, seeds, persona_mode: pm, p, max_steps, jobs, out } => {
            let deps = deps(&cfg, backend, cli.trace_llm)?;
            let all_ids: Vec<String> = deps.personas.iter().map(|p| p.id.clone()).collect();
            let (personas, seen) = match fold {
                Some(f) => {
                    let (train, test) = split_folds(&all_ids, f)?;
                    let run = if include_seen { all_ids.clone() } else { test };
                    (run, train)
                }
                None if !personas.is_empty() => (personas, vec![]),
                None => (cfg.suite.personas.clone().unwrap_or(all_ids), vec![]),
            };
            let tasks = if task.is_empty() {
                cfg.suite.tasks.clone().unwrap_or_else(|| deps.tasks.task_names())
            } else {
                task
            };
            let seeds = match seeds {
                Some(n) => (0..n).collect(),
                None => cfg.suite.seeds.clone().unwrap_or_else(|| vec![0]),
            };
            let suite = SuiteConfig {
                personas,
                tasks,
                seeds,
                policy: policy_config(&cfg, policy)?,
                persona_mode: persona_mode(&cfg, pm)?,
                inclusion_probability: check_p(p.or(cfg.suite.inclusion_probability).unwrap_or(0.7))?,
                max_steps: max_steps.or(cfg.suite.max_steps).unwrap_or(DEFAULT_MAX_STEPS),
                seen,
            };
            let out = out.or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("runs"));
            let o = run_suite(&suite, &deps, &out, jobs)?;
            let s = &o.summary;
            println!(
                "run_dir={} cells={} completed={} failed={} executed={}",
                o.dir.display(),
                s.n_cells,
                s.n_completed,
                s.n_failed,
                s.n_executed
            );
        }
        Cmd::BuildDataset { inputs, out, eps1, eps2, teacher, student_backend, stats } => {
            let rc = cfg.reflection(eps1, eps2)?;
            let deps = deps(&cfg, backend, cli.trace_llm)?;
            let student = cfg.client(student_backend.unwrap_or(backend), cli.trace_llm)?;
            let mut files = Vec::new();
            for i in &inputs {
                if i.is_dir() {
                    files.extend(trajectory_paths(i)?);
                } else {
                    files.push(i.clone());
                }
            }
            let trajs = files
                .iter()
                .map(|f| read_trajectory(f).with_context(|| format!("reading {}", f.display())))
                .collect::<Result<Vec<_>>>()?;
            let mut tcfg = policy_config(&cfg, Some(teacher))?;
            tcfg.mode = teacher;
            let clients = Clients { teacher: deps.client.as_ref(), student: student.as_ref() };
            let ds = build_dataset(&trajs, &tcfg, &clients, &deps, &rc);
            export_jsonl(&ds.triples, &out)?;
            let stats_path = stats.unwrap_or_else(|| out.with_file_name("stats.json"));
            std::fs::write(&stats_path, serde_json::to_string_pretty(&ds.stats)?)?;
            let s = &ds.stats;
            println!(
                "triples={} total={} teacher={} question={} skipped_equal={} skipped_uninformative={} failed={} out={}",
                ds.triples.len(),
                s.n_total,
                s.n_teacher,
                s.n_question,
                s.n_skipped_equal,
                s.n_skipped_uninformative,
                s.n_failed,
                out.display()
            );
        }
        Cmd::Report { dirs, curve_out } => {
            let r = report(&dirs)?;
            print!("{}", r.table);
            std::fs::write(&curve_out, &r.curve_csv)?;
            println!("curve={}", curve_out.display());
        }
    }
    Ok(())
}
