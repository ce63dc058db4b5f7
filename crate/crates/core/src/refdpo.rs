//! Reflection preference-pair pipeline: teacher relabeling, candidate questions, the
//! Δq/Δt selection rule and DPO-pair export.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{execute, normalize_action_text, parse_action, ActionKind, ParsedAction};
use crate::error::{DatasetError, HarnessError, LlmError};
use crate::grammar::{enumerate_valid_actions, GrammarOptions};
use crate::harness::{initial_scene, EpisodeDeps, TrajectoryFile};
use crate::llmclient::{ChatRequest, LlmClient, Message, ScoringMode};
use crate::persona::{auto_script, scripted_answer};
use crate::policy::{
    build_planner_prompt, next_action, planner_messages, HistoryStep, PolicyConfig, PolicyContext, PolicyMode,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionConfig {
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub skip_equal: bool,
    pub scoring: ScoringMode,
    /// Append a scripted persona reply after the question when scoring P(aᵗ|q,x).
    pub simulated_reply: bool,
    pub retries: usize,
}

impl Default for ReflectionConfig {
    fn default() -> Self {
        ReflectionConfig {
            epsilon1: 0.05,
            epsilon2: 0.10,
            skip_equal: true,
            scoring: ScoringMode::Linear,
            simulated_reply: false,
            retries: 3,
        }
    }
}

impl ReflectionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epsilon1.is_nan() || self.epsilon1 <= 0.0 {
            return Err(format!("epsilon1 must be positive, got {}", self.epsilon1));
        }
        if self.epsilon2.is_nan() || self.epsilon2 < 0.0 {
            return Err(format!("epsilon2 must be non-negative, got {}", self.epsilon2));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScores {
    pub p_teacher: f64,
    pub p_student: f64,
    /// Absent when no candidate question exists.
    pub p_teacher_given_q: Option<f64>,
    pub delta_q: Option<f64>,
    pub delta_t: f64,
}

impl StepScores {
    pub fn new(p_teacher: f64, p_student: f64, p_teacher_given_q: Option<f64>) -> Self {
        StepScores {
            p_teacher,
            p_student,
            p_teacher_given_q,
            delta_q: p_teacher_given_q.map(|q| q - p_teacher),
            delta_t: p_student - p_teacher,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Teacher,
    Question,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoTriple {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub provenance: Provenance,
    pub scores: StepScores,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub chosen: String,
    pub provenance: Provenance,
}

/// If Δt < 0 take aᵗ; else if Δq > ε₁ take a^q; else if Δt < ε₂ take aᵗ; else skip. A
/// missing a^q counts as Δq = −∞.
pub fn select_datapoint(
    scores: &StepScores,
    a_t: &str,
    a_q: Option<&str>,
    _a_s: &str,
    cfg: &ReflectionConfig,
) -> Option<Selection> {
    let teacher = || Some(Selection { chosen: a_t.to_string(), provenance: Provenance::Teacher });
    if scores.delta_t < 0.0 {
        return teacher();
    }
    if let (Some(q), Some(dq)) = (a_q, scores.delta_q) {
        if dq > cfg.epsilon1 {
            return Some(Selection { chosen: q.to_string(), provenance: Provenance::Question });
        }
    }
    if scores.delta_t < cfg.epsilon2 {
        return teacher();
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelabelStep {
    pub k: usize,
    pub student: String,
    pub teacher: Option<String>,
    pub thought: Option<String>,
    pub equal: bool,
    pub error: Option<String>,
}

fn student_mode(traj: &TrajectoryFile) -> PolicyMode {
    match traj.footer.config.policy.mode {
        PolicyMode::Teacher => PolicyMode::Base,
        m => m,
    }
}

fn history_prefix(traj: &TrajectoryFile, k: usize) -> Vec<HistoryStep> {
    traj.steps[..k].iter().map(|s| s.history()).collect()
}

fn context(traj: &TrajectoryFile, layout: &str, k: usize, prior: Vec<String>) -> PolicyContext {
    PolicyContext {
        goal: traj.footer.config.task.clone(),
        history: history_prefix(traj, k),
        layout: layout.to_string(),
        prior,
        step: k,
        max_steps: traj.footer.config.max_steps,
    }
}

/// Teacher predictions on the student's own history prefix, one per student step.
pub fn relabel(
    traj: &TrajectoryFile,
    teacher: &PolicyConfig,
    client: &dyn LlmClient,
    deps: &EpisodeDeps,
) -> Result<Vec<RelabelStep>, HarnessError> {
    let cfg = &traj.footer.config;
    deps.validate(cfg)?;
    let persona = deps.persona(&cfg.persona_id)?;
    let prior: Vec<String> = persona.descriptions().iter().map(|s| s.to_string()).collect();
    let mut scene = initial_scene(deps, cfg);
    let layout = scene.render_layout().trim_end().to_string();
    let mut discovered = BTreeSet::new();
    let opts = GrammarOptions { include_ask: teacher.mode.allows_ask() };
    let mut out = Vec::with_capacity(traj.steps.len());
    for (k, s) in traj.steps.iter().enumerate() {
        let grammar = enumerate_valid_actions(&scene, &discovered, &deps.catalog, &opts);
        let ctx = context(traj, &layout, k, prior.clone());
        let student = normalize_action_text(&s.action);
        let step = match next_action(teacher, &ctx, client, &grammar) {
            Ok(d) => {
                let equal = normalize_action_text(&d.action_text) == student;
                RelabelStep { k, student, teacher: Some(d.action_text), thought: d.thought, equal, error: None }
            }
            Err(e) => RelabelStep { k, student, teacher: None, thought: None, equal: false, error: Some(e.to_string()) },
        };
        out.push(step);
        let action = parse_action(&s.action)
            .map_err(|e| HarnessError::Config(format!("step {k} does not parse: {e}")))?;
        execute(&mut scene, &mut discovered, &action)?;
    }
    Ok(out)
}

const REFLECT_EXAMPLE: &str = "Reflect on this difference between the action the robot should have predicted, and actually predicted. Was there some knowledge about user's preferences, which if the robot knew about, it would have predicted the expected action?\nExample: The robot cannot predict that it should use almonds when making chia pudding, when it doesn't know that user wants their chia pudding topped with almonds. If so, it could ask user a question to clarify their preference first, such as 'Question: What toppings do you want on your sweet breakfasts, like chia pudding?' If no question needs to be asked to predict the expected action, you can say 'Question: None'. Answer with a single question and do not provide any additional information or explanation.";

/// Reflection prompt: framing, the student's transcript, and the expected-versus-predicted
/// contrast with the teacher's rationale when present.
pub fn build_reflection_prompt(
    goal: &str,
    history: &[HistoryStep],
    a_s: &str,
    a_t: &str,
    rationale: Option<&str>,
) -> String {
    let mut s = format!(
        "Source: system\nYou are an expert at task planning, and can guide a robot on how to provide assistance in a manner that user wants to {goal}.\n{REFLECT_EXAMPLE}\n"
    );
    for h in history {
        s.push_str("\nSource: assistant\nAction: ");
        s.push_str(&h.action);
        s.push_str("\n\nSource: environment\nObservation: ");
        s.push_str(&h.observation);
        s.push('\n');
        if let Some(u) = h.reply.as_ref().or(h.status.as_ref()) {
            s.push_str("\nSource: user\n");
            s.push_str(u);
            s.push('\n');
        }
    }
    s.push_str("\nSource: assistant\nInstead of ");
    s.push_str(a_s);
    s.push_str(", the robot was expected to perform ");
    s.push_str(a_t);
    if let Some(r) = rationale.filter(|r| !r.trim().is_empty()) {
        s.push_str(", because if the robot knew user better, it would have thought that '");
        s.push_str(r.trim());
        s.push('\'');
    }
    s.push_str(".\nWhat question could the robot have asked user so that it could predict ");
    s.push_str(a_t);
    s.push_str(" as its next step?");
    s
}

enum Parsed {
    Question(String),
    None,
    Malformed,
}

fn parse_reflection(text: &str) -> Parsed {
    let Some(idx) = text.find("Question:") else { return Parsed::Malformed };
    let q = text[idx + "Question:".len()..].lines().next().unwrap_or_default().trim();
    let q = q.trim_matches(|c| c == '\'' || c == '"').trim();
    if q.is_empty() {
        return Parsed::Malformed;
    }
    if q.trim_end_matches(['.', '!']).eq_ignore_ascii_case("none") {
        return Parsed::None;
    }
    Parsed::Question(q.replace('"', "'"))
}

/// Asks the student for a clarifying question; returns it wrapped as an Ask action.
pub fn generate_candidate_question(
    goal: &str,
    history: &[HistoryStep],
    a_s: &str,
    a_t: &str,
    rationale: Option<&str>,
    client: &dyn LlmClient,
    retries: usize,
) -> Result<Option<String>, LlmError> {
    let prompt = build_reflection_prompt(goal, history, a_s, a_t, rationale);
    let req = ChatRequest::new(vec![Message::system(prompt)]);
    for _ in 0..retries.max(1) {
        match parse_reflection(&client.complete(&req)?.text) {
            Parsed::Question(q) => return Ok(Some(ParsedAction::new(ActionKind::Ask, &[&q], &[]).render())),
            Parsed::None => return Ok(None),
            Parsed::Malformed => continue,
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_total: usize,
    pub n_teacher: usize,
    pub n_question: usize,
    pub n_skipped_equal: usize,
    pub n_skipped_uninformative: usize,
    pub n_failed: usize,
    pub frac_teacher: f64,
    pub frac_question: f64,
    pub frac_skipped_equal: f64,
    pub frac_skipped_uninformative: f64,
    pub frac_failed: f64,
}

impl DatasetStats {
    fn merge(&mut self, o: &DatasetStats) {
        self.n_total += o.n_total;
        self.n_teacher += o.n_teacher;
        self.n_question += o.n_question;
        self.n_skipped_equal += o.n_skipped_equal;
        self.n_skipped_uninformative += o.n_skipped_uninformative;
        self.n_failed += o.n_failed;
    }

    fn finish(&mut self) {
        let f = |n: usize| if self.n_total == 0 { 0.0 } else { n as f64 / self.n_total as f64 };
        self.frac_teacher = f(self.n_teacher);
        self.frac_question = f(self.n_question);
        self.frac_skipped_equal = f(self.n_skipped_equal);
        self.frac_skipped_uninformative = f(self.n_skipped_uninformative);
        self.frac_failed = f(self.n_failed);
    }
}

/// Per-step record of what the pipeline decided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub trajectory: usize,
    pub k: usize,
    pub outcome: String,
    pub detail: Option<String>,
}

pub struct Clients<'a> {
    pub teacher: &'a dyn LlmClient,
    /// Generates reflection questions and scores actions.
    pub student: &'a dyn LlmClient,
}

fn process(
    ti: usize,
    traj: &TrajectoryFile,
    teacher: &PolicyConfig,
    clients: &Clients<'_>,
    deps: &EpisodeDeps,
    cfg: &ReflectionConfig,
) -> (Vec<DpoTriple>, DatasetStats, Vec<StepLog>) {
    let mut triples = Vec::new();
    let mut stats = DatasetStats::default();
    let mut logs = Vec::new();
    let mut log = |k: usize, outcome: &str, detail: Option<String>| {
        logs.push(StepLog { trajectory: ti, k, outcome: outcome.to_string(), detail });
    };
    let relabels = match relabel(traj, teacher, clients.teacher, deps) {
        Ok(r) => r,
        Err(e) => {
            stats.n_total += traj.steps.len();
            stats.n_failed += traj.steps.len();
            for k in 0..traj.steps.len() {
                log(k, "failed", Some(e.to_string()));
            }
            return (triples, stats, logs);
        }
    };
    let cfg_ep = &traj.footer.config;
    let layout = initial_scene(deps, cfg_ep).render_layout().trim_end().to_string();
    let mode = student_mode(traj);
    let script = deps.persona(&cfg_ep.persona_id).map(|p| auto_script(p, &deps.tasks)).unwrap_or_default();
    for r in relabels {
        stats.n_total += 1;
        let Some(a_t) = r.teacher.clone() else {
            stats.n_failed += 1;
            log(r.k, "failed", r.error.clone());
            continue;
        };
        let a_s = r.student.clone();
        if r.equal && cfg.skip_equal {
            stats.n_skipped_equal += 1;
            log(r.k, "skipped_equal", None);
            continue;
        }
        let ctx = context(traj, &layout, r.k, vec![]);
        let result = (|| -> Result<Option<DpoTriple>, LlmError> {
            let a_q = generate_candidate_question(
                &cfg_ep.task,
                &ctx.history,
                &a_s,
                &a_t,
                r.thought.as_deref(),
                clients.student,
                cfg.retries,
            )?;
            let x = planner_messages(&ctx, mode, None);
            let p_t = clients.student.score(&x, &a_t)?.value(cfg.scoring);
            let p_s = clients.student.score(&x, &a_s)?.value(cfg.scoring);
            let p_tq = match &a_q {
                Some(q) => {
                    let mut xq = x.clone();
                    xq.push(Message::assistant(format!("Action: {q}")));
                    if cfg.simulated_reply {
                        let question = parse_action(q).ok().and_then(|a| a.question().map(str::to_string));
                        xq.push(Message::user(scripted_answer(&script, &question.unwrap_or_default()).text));
                    }
                    Some(clients.student.score(&xq, &a_t)?.value(cfg.scoring))
                }
                None => None,
            };
            let scores = StepScores::new(p_t, p_s, p_tq);
            Ok(select_datapoint(&scores, &a_t, a_q.as_deref(), &a_s, cfg).map(|sel| DpoTriple {
                prompt: build_planner_prompt(&ctx, mode),
                chosen: sel.chosen,
                rejected: a_s.clone(),
                provenance: sel.provenance,
                scores,
            }))
        })();
        match result {
            Ok(Some(t)) if normalize_action_text(&t.chosen) == normalize_action_text(&t.rejected) => {
                stats.n_skipped_equal += 1;
                log(r.k, "skipped_equal", None);
            }
            Ok(Some(t)) => {
                match t.provenance {
                    Provenance::Teacher => stats.n_teacher += 1,
                    Provenance::Question => stats.n_question += 1,
                }
                log(r.k, t.provenance_label(), None);
                triples.push(t);
            }
            Ok(None) => {
                stats.n_skipped_uninformative += 1;
                log(r.k, "skipped_uninformative", None);
            }
            Err(e) => {
                stats.n_failed += 1;
                log(r.k, "failed", Some(e.to_string()));
            }
        }
    }
    (triples, stats, logs)
}

impl DpoTriple {
    fn provenance_label(&self) -> &'static str {
        match self.provenance {
            Provenance::Teacher => "teacher",
            Provenance::Question => "question",
        }
    }
}

pub struct Dataset {
    pub triples: Vec<DpoTriple>,
    pub stats: DatasetStats,
    pub log: Vec<StepLog>,
}

/// Trajectories are processed in parallel, steps in order; output keeps trajectory then step
/// order.
pub fn build_dataset(
    trajectories: &[TrajectoryFile],
    teacher: &PolicyConfig,
    clients: &Clients<'_>,
    deps: &EpisodeDeps,
    cfg: &ReflectionConfig,
) -> Dataset {
    let parts: Vec<_> = trajectories
        .par_iter()
        .enumerate()
        .map(|(i, t)| process(i, t, teacher, clients, deps, cfg))
        .collect();
    let mut triples = Vec::new();
    let mut stats = DatasetStats::default();
    let mut log = Vec::new();
    for (t, s, l) in parts {
        triples.extend(t);
        stats.merge(&s);
        log.extend(l);
    }
    stats.finish();
    Dataset { triples, stats, log }
}

pub fn export_jsonl(triples: &[DpoTriple], path: &Path) -> Result<(), DatasetError> {
    if triples.is_empty() {
        return Err(DatasetError::Empty);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for t in triples {
        serde_json::to_writer(&mut f, t)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DpoTriple>, DatasetError> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
