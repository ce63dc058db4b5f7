//! Episode loop, trajectory persistence, replay evaluation, suites and reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actions::{execute, parse_action, ActionKind, Effect, Observation, ObservationKind};
use crate::error::{HarnessError, PolicyError, PrefsError};
use crate::grammar::{enumerate_valid_actions, GrammarOptions};
use crate::llmclient::LlmClient;
use crate::persona::{auto_script, ReplySource, Responder};
use crate::policy::{next_action, status_line, HistoryStep, PolicyConfig, PolicyContext, PolicyMode};
use crate::prefs::{evaluate, temporal_curve, OwnedStep, PersonaSpec, RuleOutcome, TaskPack, TrajectoryLedger, StepRecord};
use crate::world::{generate_scene, Catalog, SceneGenConfig, SceneGraph};

pub const DEFAULT_MAX_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonaMode {
    Llm,
    Scripted,
    Human,
}

impl std::str::FromStr for PersonaMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llm" => Ok(PersonaMode::Llm),
            "scripted" => Ok(PersonaMode::Scripted),
            "human" => Ok(PersonaMode::Human),
            _ => Err(format!("unknown persona mode {s}; expected llm, scripted or human")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub task: String,
    pub persona_id: String,
    pub seed: u64,
    pub inclusion_probability: f64,
    pub max_steps: usize,
    pub policy: PolicyConfig,
    pub persona_mode: PersonaMode,
}

impl EpisodeConfig {
    pub fn new(task: &str, persona_id: &str, mode: PolicyMode, seed: u64) -> Self {
        EpisodeConfig {
            task: task.to_string(),
            persona_id: persona_id.to_string(),
            seed,
            inclusion_probability: 0.7,
            max_steps: DEFAULT_MAX_STEPS,
            policy: PolicyConfig::new(mode),
            persona_mode: PersonaMode::Scripted,
        }
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_string(self).expect("config serializes").as_bytes()))
    }

    pub fn scene_config(&self) -> SceneGenConfig {
        SceneGenConfig { inclusion_probability: self.inclusion_probability, seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum TerminalReason {
    Done,
    KExhausted,
    Fault { message: String },
}

/// One persisted step line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLine {
    pub k: usize,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    pub observation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_source: Option<ReplySource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    pub kind: ObservationKind,
    #[serde(default)]
    pub effects: Vec<Effect>,
}

impl StepLine {
    pub fn history(&self) -> HistoryStep {
        HistoryStep {
            action: self.action.clone(),
            thought: self.thought.clone(),
            observation: self.observation.clone(),
            reply: self.reply.clone(),
            status: self.status.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub rate: f64,
    pub num_questions: usize,
    pub num_steps: usize,
    pub satisfied: usize,
    pub violated: usize,
    pub inapplicable: usize,
    pub success: bool,
    pub curve: Vec<(f64, f64)>,
    pub outcomes: BTreeMap<String, RuleOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: EpisodeConfig,
    pub steps: Vec<StepLine>,
    pub terminal: TerminalReason,
    pub ledger: TrajectoryLedger,
    pub final_scene_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub footer: bool,
    pub config: EpisodeConfig,
    pub terminal: TerminalReason,
    pub final_scene_digest: String,
    pub metrics: MetricsRow,
}

/// Shared resources for running episodes.
#[derive(Clone)]
pub struct EpisodeDeps {
    pub catalog: Arc<Catalog>,
    pub tasks: Arc<TaskPack>,
    pub personas: Arc<Vec<PersonaSpec>>,
    pub client: Arc<dyn LlmClient>,
    /// Client answering persona prompts in llm mode; defaults to `client`.
    pub persona_client: Option<Arc<dyn LlmClient>>,
    /// Scripts per persona id for scripted mode; missing ids use the automatic script.
    pub scripts: BTreeMap<String, Vec<(String, String)>>,
    pub human: Option<Responder>,
}

impl EpisodeDeps {
    pub fn new(catalog: Catalog, tasks: TaskPack, personas: Vec<PersonaSpec>, client: Arc<dyn LlmClient>) -> Self {
        EpisodeDeps {
            catalog: Arc::new(catalog),
            tasks: Arc::new(tasks),
            personas: Arc::new(personas),
            client,
            persona_client: None,
            scripts: BTreeMap::new(),
            human: None,
        }
    }

    pub fn persona(&self, id: &str) -> Result<&PersonaSpec, HarnessError> {
        self.personas.iter().find(|p| p.id == id).ok_or_else(|| HarnessError::UnknownPersona(id.to_string()))
    }

    fn responder(&self, mode: PersonaMode, persona: &PersonaSpec) -> Responder {
        match mode {
            PersonaMode::Llm => Responder::Llm(self.persona_client.clone().unwrap_or_else(|| self.client.clone())),
            PersonaMode::Scripted => {
                Responder::Scripted(self.scripts.get(&persona.id).cloned().unwrap_or_else(|| auto_script(persona, &self.tasks)))
            }
            PersonaMode::Human => self.human.clone().unwrap_or_else(Responder::stdin),
        }
    }

    pub fn validate(&self, cfg: &EpisodeConfig) -> Result<(), HarnessError> {
        if cfg.max_steps == 0 {
            return Err(HarnessError::Config("max_steps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&cfg.inclusion_probability) {
            return Err(HarnessError::Config(format!("inclusion probability {} outside [0,1]", cfg.inclusion_probability)));
        }
        if self.tasks.task(&cfg.task).is_err() {
            return Err(HarnessError::UnknownTask { task: cfg.task.clone(), valid: self.tasks.task_names() });
        }
        self.persona(&cfg.persona_id)?;
        Ok(())
    }
}

fn made_so_far(ledger: &TrajectoryLedger) -> Vec<String> {
    let mut seen = BTreeSet::new();
    ledger.productions.iter().filter(|p| seen.insert(p.token.clone())).map(|p| p.token.clone()).collect()
}

pub fn initial_scene(deps: &EpisodeDeps, cfg: &EpisodeConfig) -> SceneGraph {
    generate_scene(&deps.catalog, &cfg.scene_config())
}

/// Runs one episode: grammar, policy, execution, persona reply and ledger update per step,
/// then a single evaluation.
pub fn run_episode(cfg: &EpisodeConfig, deps: &EpisodeDeps) -> Result<(Trajectory, MetricsRow), HarnessError> {
    deps.validate(cfg)?;
    let persona = deps.persona(&cfg.persona_id)?;
    let responder = deps.responder(cfg.persona_mode, persona);
    let initial = initial_scene(deps, cfg);
    let mut scene = initial.clone();
    let mut discovered = BTreeSet::new();
    let mut ledger = TrajectoryLedger::new();
    let mut history: Vec<HistoryStep> = Vec::new();
    let mut lines = Vec::new();
    let mut owned = Vec::new();
    let layout = scene.render_layout().trim_end().to_string();
    let prior: Vec<String> = if cfg.policy.mode.is_teacher() {
        persona.descriptions().iter().map(|s| s.to_string()).collect()
    } else {
        vec![]
    };
    let opts = GrammarOptions { include_ask: cfg.policy.mode.allows_ask() };
    let mut terminal = TerminalReason::KExhausted;
    for k in 0..cfg.max_steps {
        let grammar = enumerate_valid_actions(&scene, &discovered, &deps.catalog, &opts);
        let ctx = PolicyContext {
            goal: cfg.task.clone(),
            history: history.clone(),
            layout: layout.clone(),
            prior: prior.clone(),
            step: k,
            max_steps: cfg.max_steps,
        };
        let decision = match next_action(&cfg.policy, &ctx, deps.client.as_ref(), &grammar) {
            Ok(d) => d,
            Err(e) => {
                terminal = TerminalReason::Fault { message: fault_message(&e) };
                break;
            }
        };
        let action = decision.action();
        let outcome = execute(&mut scene, &mut discovered, &action)?;
        let reply = match action.question() {
            Some(q) => match responder.reply(persona, &scene, &cfg.task, &history, q) {
                Ok(r) => Some(r),
                Err(e) => {
                    terminal = TerminalReason::Fault { message: e.to_string() };
                    break;
                }
            },
            None => None,
        };
        let reply_text = reply.as_ref().map(|r| r.text.clone());
        ledger.record_step(StepRecord {
            index: k,
            action: &action,
            observation: &outcome.observation,
            effects: &outcome.effects,
            reply: reply_text.as_deref(),
            scene_after: &scene,
        })?;
        let status = reply.is_none().then(|| status_line(&cfg.task, &made_so_far(&ledger)));
        let line = StepLine {
            k,
            action: decision.action_text.clone(),
            thought: decision.thought.clone(),
            observation: outcome.observation.text.clone(),
            reply: reply_text.clone(),
            reply_source: reply.as_ref().map(|r| r.source),
            status,
            kind: outcome.observation.kind,
            effects: outcome.effects.clone(),
        };
        history.push(line.history());
        owned.push(OwnedStep {
            index: k,
            action,
            observation: outcome.observation,
            effects: outcome.effects,
            reply: reply_text,
            scene_after: scene.clone(),
        });
        lines.push(line);
        if outcome.terminal {
            terminal = TerminalReason::Done;
            break;
        }
    }
    let metrics = score_episode(cfg, deps, persona, &ledger, &scene, &owned, &initial, &lines)?;
    let traj = Trajectory { config: cfg.clone(), steps: lines, terminal, ledger, final_scene_digest: scene.digest() };
    Ok((traj, metrics))
}

fn fault_message(e: &PolicyError) -> String {
    e.to_string()
}

#[allow(clippy::too_many_arguments)]
fn score_episode(
    cfg: &EpisodeConfig,
    deps: &EpisodeDeps,
    persona: &PersonaSpec,
    ledger: &TrajectoryLedger,
    scene: &SceneGraph,
    owned: &[OwnedStep],
    initial: &SceneGraph,
    lines: &[StepLine],
) -> Result<MetricsRow, PrefsError> {
    let report = evaluate(&persona.preferences, ledger, &cfg.task, scene, &deps.tasks);
    let curve = temporal_curve(owned, &persona.preferences, &cfg.task, initial, &deps.tasks)?;
    Ok(MetricsRow {
        rate: report.rate,
        num_questions: lines.iter().filter(|l| l.action.starts_with("Ask \"")).count(),
        num_steps: lines.len(),
        satisfied: report.satisfied.len(),
        violated: report.violated.len(),
        inapplicable: report.inapplicable.len(),
        success: report.rate == 1.0,
        curve,
        outcomes: report.outcomes,
    })
}

/// Re-executes the persisted actions on a regenerated scene and re-scores them.
pub fn replay(
    cfg: &EpisodeConfig,
    steps: &[StepLine],
    deps: &EpisodeDeps,
) -> Result<(MetricsRow, TrajectoryLedger, SceneGraph), HarnessError> {
    deps.validate(cfg)?;
    let persona = deps.persona(&cfg.persona_id)?;
    let initial = initial_scene(deps, cfg);
    let mut scene = initial.clone();
    let mut discovered = BTreeSet::new();
    let mut ledger = TrajectoryLedger::new();
    let mut owned = Vec::new();
    for l in steps {
        let action = parse_action(&l.action)
            .map_err(|e| HarnessError::Config(format!("step {} does not parse: {e}", l.k)))?;
        let outcome = execute(&mut scene, &mut discovered, &action)?;
        if outcome.observation.text != l.observation {
            return Err(HarnessError::Config(format!("step {} observation diverged on replay", l.k)));
        }
        ledger.record_step(StepRecord {
            index: l.k,
            action: &action,
            observation: &outcome.observation,
            effects: &outcome.effects,
            reply: l.reply.as_deref(),
            scene_after: &scene,
        })?;
        owned.push(OwnedStep {
            index: l.k,
            action,
            observation: outcome.observation,
            effects: outcome.effects,
            reply: l.reply.clone(),
            scene_after: scene.clone(),
        });
    }
    let m = score_episode(cfg, deps, persona, &ledger, &scene, &owned, &initial, steps)?;
    Ok((m, ledger, scene))
}

pub fn trajectory_file_name(cfg: &EpisodeConfig) -> String {
    format!("{}.jsonl", cfg.hash())
}

pub fn write_trajectory(dir: &Path, traj: &Trajectory, metrics: &MetricsRow) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(trajectory_file_name(&traj.config));
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        for s in &traj.steps {
            serde_json::to_writer(&mut f, s)?;
            f.write_all(b"\n")?;
        }
        let footer = Footer {
            footer: true,
            config: traj.config.clone(),
            terminal: traj.terminal.clone(),
            final_scene_digest: traj.final_scene_digest.clone(),
            metrics: metrics.clone(),
        };
        serde_json::to_writer(&mut f, &footer)?;
        f.write_all(b"\n")?;
        f.flush()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub steps: Vec<StepLine>,
    pub footer: Footer,
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryFile, HarnessError> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut steps = Vec::new();
    let mut footer = None;
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)?;
        if v.get("footer").and_then(|x| x.as_bool()) == Some(true) {
            footer = Some(serde_json::from_value(v)?);
        } else {
            steps.push(serde_json::from_value(v)?);
        }
    }
    let footer = footer.ok_or_else(|| HarnessError::Config(format!("{} has no footer record", path.display())))?;
    Ok(TrajectoryFile { steps, footer })
}

/// Sorted `ids` split into four folds; fold `f` tests ids `4f..4f+4`.
pub fn split_folds(ids: &[String], fold: usize) -> Result<(Vec<String>, Vec<String>), HarnessError> {
    if ids.len() != 16 {
        return Err(HarnessError::Folds(format!("expected 16 personas, got {}; use custom folds", ids.len())));
    }
    split_folds_custom(ids, fold, 4)
}

/// Sorted `ids` split into `k` near-equal contiguous folds.
pub fn split_folds_custom(ids: &[String], fold: usize, k: usize) -> Result<(Vec<String>, Vec<String>), HarnessError> {
    if k == 0 || fold >= k {
        return Err(HarnessError::Folds(format!("fold {fold} outside 0..{k}")));
    }
    if ids.len() < k {
        return Err(HarnessError::Folds(format!("{} personas cannot fill {k} folds", ids.len())));
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != ids.len() {
        return Err(HarnessError::Folds("duplicate persona ids".into()));
    }
    let n = sorted.len();
    let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
    let test = sorted[lo..hi].to_vec();
    let train = sorted.iter().filter(|p| !test.contains(p)).cloned().collect();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub personas: Vec<String>,
    pub tasks: Vec<String>,
    pub seeds: Vec<u64>,
    pub policy: PolicyConfig,
    pub persona_mode: PersonaMode,
    pub inclusion_probability: f64,
    pub max_steps: usize,
    /// Personas counted as seen during training; all others are reported as unseen.
    pub seen: Vec<String>,
}

impl SuiteConfig {
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_string(self).expect("suite serializes").as_bytes()))
    }

    pub fn cells(&self) -> Vec<EpisodeConfig> {
        let mut out = Vec::new();
        for p in &self.personas {
            for t in &self.tasks {
                for s in &self.seeds {
                    out.push(EpisodeConfig {
                        task: t.clone(),
                        persona_id: p.clone(),
                        seed: *s,
                        inclusion_probability: self.inclusion_probability,
                        max_steps: self.max_steps,
                        policy: self.policy.clone(),
                        persona_mode: self.persona_mode,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub persona: String,
    pub task: String,
    pub seed: u64,
    pub group: String,
    pub status: String,
    pub rate: Option<f64>,
    pub num_questions: Option<usize>,
    pub num_steps: Option<usize>,
    pub terminal: String,
    pub file: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error (sample deviation over √n, zero below two values).
pub fn mean_stderr(xs: &[f64]) -> Stat {
    let n = xs.len();
    if n == 0 {
        return Stat::default();
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let stderr = if n < 2 {
        0.0
    } else {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Stat { n, mean, stderr }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub rate: Stat,
    pub questions: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub policy: String,
    pub suite_hash: String,
    pub n_cells: usize,
    pub n_completed: usize,
    pub n_failed: usize,
    pub n_executed: usize,
    pub seen: GroupSummary,
    pub unseen: GroupSummary,
}

pub struct SuiteOutcome {
    pub dir: PathBuf,
    pub rows: Vec<CellRow>,
    pub summary: SuiteSummary,
}

/// Runs every missing cell under `<out>/<suite hash prefix>`, then rewrites `cells.csv` and
/// `summary.json` from the persisted trajectories.
pub fn run_suite(suite: &SuiteConfig, deps: &EpisodeDeps, out: &Path, jobs: usize) -> Result<SuiteOutcome, HarnessError> {
    if suite.personas.is_empty() || suite.tasks.is_empty() || suite.seeds.is_empty() {
        return Err(HarnessError::Config("suite needs at least one persona, task and seed".into()));
    }
    let hash = suite.hash();
    let dir = out.join(&hash[..16]);
    let traj_dir = dir.join("trajectories");
    fs::create_dir_all(&traj_dir)?;
    fs::write(dir.join("suite.json"), serde_json::to_string_pretty(suite)?)?;
    let cells = suite.cells();
    let pending: Vec<&EpisodeConfig> =
        cells.iter().filter(|c| read_trajectory(&traj_dir.join(trajectory_file_name(c))).is_err()).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let errors: BTreeMap<String, String> = pool.install(|| {
        pending
            .par_iter()
            .filter_map(|c| {
                let r = run_episode(c, deps).and_then(|(t, m)| write_trajectory(&traj_dir, &t, &m));
                r.err().map(|e| (c.hash(), e.to_string()))
            })
            .collect()
    });
    let mut rows = Vec::new();
    for c in &cells {
        let file = trajectory_file_name(c);
        let group = if suite.seen.contains(&c.persona_id) { "seen" } else { "unseen" };
        let row = match read_trajectory(&traj_dir.join(&file)) {
            Ok(t) => CellRow {
                persona: c.persona_id.clone(),
                task: c.task.clone(),
                seed: c.seed,
                group: group.into(),
                status: "ok".into(),
                rate: Some(t.footer.metrics.rate),
                num_questions: Some(t.footer.metrics.num_questions),
                num_steps: Some(t.footer.metrics.num_steps),
                terminal: terminal_label(&t.footer.terminal),
                file,
            },
            Err(e) => CellRow {
                persona: c.persona_id.clone(),
                task: c.task.clone(),
                seed: c.seed,
                group: group.into(),
                status: format!("error: {}", errors.get(&c.hash()).cloned().unwrap_or_else(|| e.to_string())),
                rate: None,
                num_questions: None,
                num_steps: None,
                terminal: String::new(),
                file,
            },
        };
        rows.push(row);
    }
    let mut w = csv::Writer::from_path(dir.join("cells.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let group = |g: &str| {
        let ok: Vec<&CellRow> = rows.iter().filter(|r| r.group == g && r.rate.is_some()).collect();
        GroupSummary {
            rate: mean_stderr(&ok.iter().filter_map(|r| r.rate).collect::<Vec<_>>()),
            questions: mean_stderr(&ok.iter().filter_map(|r| r.num_questions.map(|q| q as f64)).collect::<Vec<_>>()),
        }
    };
    let summary = SuiteSummary {
        policy: suite.policy.mode.as_str().to_string(),
        suite_hash: hash,
        n_cells: rows.len(),
        n_completed: rows.iter().filter(|r| r.rate.is_some()).count(),
        n_failed: rows.iter().filter(|r| r.rate.is_none()).count(),
        n_executed: pending.len(),
        seen: group("seen"),
        unseen: group("unseen"),
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(SuiteOutcome { dir, rows, summary })
}

fn terminal_label(t: &TerminalReason) -> String {
    match t {
        TerminalReason::Done => "done".into(),
        TerminalReason::KExhausted => "k_exhausted".into(),
        TerminalReason::Fault { .. } => "fault".into(),
    }
}

pub fn trajectory_paths(run_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = run_dir.join("trajectories");
    let mut v: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    v.sort();
    Ok(v)
}

/// Step-function average of curves sampled at `points` evenly spaced fractions in [0,1].
pub fn average_curve(curves: &[Vec<(f64, f64)>], points: usize) -> Vec<(f64, f64)> {
    let grid: Vec<f64> = (0..points).map(|i| i as f64 / (points.max(2) - 1) as f64).collect();
    grid.iter()
        .map(|&t| {
            if curves.is_empty() {
                return (t, 0.0);
            }
            let sum: f64 = curves
                .iter()
                .map(|c| c.iter().take_while(|(x, _)| *x <= t + 1e-12).last().map(|p| p.1).unwrap_or(0.0))
                .sum();
            (t, sum / curves.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub seen: GroupSummary,
    pub unseen: GroupSummary,
}

pub struct Report {
    pub rows: Vec<ReportRow>,
    pub table: String,
    pub curve_csv: String,
}

fn pm(s: &Stat, scale: f64, digits: usize) -> String {
    if s.n == 0 {
        "n/a".into()
    } else {
        format!("{:.d$} ± {:.d$}", s.mean * scale, s.stderr * scale, d = digits)
    }
}

/// Table with rate and question columns split by seen and unseen personas, one row per run,
/// plus the averaged temporal curve per run as CSV.
pub fn report(run_dirs: &[PathBuf]) -> Result<Report, HarnessError> {
    let mut rows = Vec::new();
    let mut curve_csv = String::from("policy,completion,satisfaction\n");
    for d in run_dirs {
        let s: SuiteSummary = serde_json::from_str(&fs::read_to_string(d.join("summary.json"))?)?;
        let mut curves = Vec::new();
        for p in trajectory_paths(d)? {
            curves.push(read_trajectory(&p)?.footer.metrics.curve);
        }
        for (x, y) in average_curve(&curves, 11) {
            curve_csv.push_str(&format!("{},{x:.1},{y:.4}\n", s.policy));
        }
        rows.push(ReportRow { policy: s.policy, seen: s.seen, unseen: s.unseen });
    }
    let header = ["Policy", "Rate (seen) %", "Rate (unseen) %", "Questions (seen)", "Questions (unseen)"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.policy.clone(),
                pm(&r.seen.rate, 100.0, 1),
                pm(&r.unseen.rate, 100.0, 1),
                pm(&r.seen.questions, 1.0, 1),
                pm(&r.unseen.questions, 1.0, 1),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..5)
        .map(|i| body.iter().map(|r| r[i].chars().count()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let fmt_row = |cells: &[String]| -> String {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut table = fmt_row(&header.map(String::from));
    table.push_str(&format!("|{}|\n", widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|")));
    for r in &body {
        table.push_str(&fmt_row(r));
    }
    Ok(Report { rows, table, curve_csv })
}

pub fn is_question(l: &StepLine) -> bool {
    parse_action(&l.action).is_ok_and(|a| a.kind == ActionKind::Ask)
}

pub fn observation_of(l: &StepLine) -> Observation {
    Observation { kind: l.kind, text: l.observation.clone(), discovered: vec![] }
}
