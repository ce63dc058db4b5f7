//! Dataset-builder checks on scripted student trajectories.

use std::sync::Arc;

use adapt::harness::{run_episode, EpisodeConfig, EpisodeDeps, Footer, TrajectoryFile};
use adapt::llmclient::{ChatRequest, FnClient, LlmClient, Message, MockClient};
use adapt::policy::{PolicyConfig, PolicyMode, NO_PRIOR};
use adapt::prefs::{default_personas, default_tasks};
use adapt::refdpo::{build_dataset, export_jsonl, Clients, Dataset, DpoTriple, Provenance, ReflectionConfig};
use adapt::world::default_catalog;

pub const LOOKS: [&str; 5] = ["bowl", "mug", "cup", "plate", "spoon"];
pub const STEPS: usize = 20;
pub const TEACHER_ACTION: &str = "Look for egg";

pub fn deps_with(client: Arc<dyn LlmClient>) -> EpisodeDeps {
    EpisodeDeps::new(default_catalog().clone(), default_tasks().clone(), default_personas().to_vec(), client)
}

/// One scripted base-mode trajectory per task: `STEPS` look actions cycling through `LOOKS`.
pub fn look_trajectories(n: usize) -> Vec<TrajectoryFile> {
    let tasks = default_tasks().task_names();
    (0..n)
        .map(|i| {
            let queue: Vec<String> = (0..STEPS).map(|k| format!("Action: Look for {}", LOOKS[k % LOOKS.len()])).collect();
            let deps = deps_with(Arc::new(MockClient::with_queue(queue)));
            let persona = &default_personas()[i % default_personas().len()].id;
            let mut cfg = EpisodeConfig::new(&tasks[i % tasks.len()], persona, PolicyMode::Base, i as u64);
            cfg.max_steps = STEPS;
            let (t, m) = run_episode(&cfg, &deps).expect("scripted episode runs");
            assert_eq!(t.steps.len(), STEPS, "every scripted look is accepted");
            TrajectoryFile {
                steps: t.steps,
                footer: Footer {
                    footer: true,
                    config: t.config,
                    terminal: t.terminal,
                    final_scene_digest: t.final_scene_digest,
                    metrics: m,
                },
            }
        })
        .collect()
}

fn prompt_position(prompt: &str) -> (usize, usize) {
    let tasks = default_tasks().task_names();
    let goal = prompt
        .split("achieve the task: ")
        .nth(1)
        .and_then(|r| r.split("?\n").next())
        .unwrap_or_default();
    let ti = tasks.iter().position(|t| t == goal).expect("goal is a shipped task");
    let k = prompt.matches("\nSource: assistant\n").count() - 1;
    (ti, k)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Plan {
    Question,
    Teacher,
    Uninformative,
    Equal,
}

fn plan(ti: usize, k: usize) -> Plan {
    match ti * STEPS + k {
        g if g < 37 => Plan::Question,
        g if g < 85 => Plan::Teacher,
        g if g < 92 => Plan::Uninformative,
        _ => Plan::Equal,
    }
}

/// Teacher, reflection and scoring clients whose outputs follow a fixed per-step plan over
/// five 20-step trajectories: 37 question picks, 48 teacher picks, 15 skips.
pub fn engineered_clients() -> (FnClient, FnClient) {
    let teacher = FnClient::new(|req: &ChatRequest| {
        let (ti, k) = prompt_position(&req.messages[0].content);
        match plan(ti, k) {
            Plan::Equal => format!("Action: Look for {}", LOOKS[k % LOOKS.len()]),
            _ => format!("Action: {TEACHER_ACTION}"),
        }
    });
    let student = FnClient::new(|_req: &ChatRequest| "Question: What do you usually eat first?".to_string()).with_scores(
        |ctx: &[Message], cont: &str| {
            let (ti, k) = prompt_position(&ctx[0].content);
            let with_q = ctx.len() > 1;
            let teacher = cont == TEACHER_ACTION;
            let p = match (plan(ti, k), with_q, teacher) {
                (Plan::Teacher, _, true) => 0.5,
                (Plan::Teacher, _, false) => 0.2,
                (Plan::Question, true, _) => 0.6,
                (Plan::Uninformative, true, _) => 0.31,
                (_, _, true) => 0.3,
                (_, _, false) => 0.5,
            };
            vec![p]
        },
    );
    (teacher, student)
}

pub fn teacher_config() -> PolicyConfig {
    PolicyConfig::new(PolicyMode::Teacher)
}

pub fn build_engineered() -> Dataset {
    let trajs = look_trajectories(5);
    let (teacher, student) = engineered_clients();
    let deps = deps_with(Arc::new(MockClient::new()));
    build_dataset(&trajs, &teacher_config(), &Clients { teacher: &teacher, student: &student }, &deps, &ReflectionConfig::default())
}

pub fn build_mock(trajs: &[TrajectoryFile]) -> Dataset {
    let teacher = MockClient::new().rule("", "Action: Look for kettle");
    let mut student = MockClient::new();
    student.default_reply = "Question: Which kind of breakfast do you prefer?".into();
    let deps = deps_with(Arc::new(MockClient::new()));
    build_dataset(trajs, &teacher_config(), &Clients { teacher: &teacher, student: &student }, &deps, &ReflectionConfig::default())
}

pub fn triple_shape(t: &DpoTriple) -> Result<(), String> {
    if !t.prompt.contains(NO_PRIOR) {
        return Err("prompt is not a student prompt".into());
    }
    match t.provenance {
        Provenance::Question if !t.chosen.starts_with("Ask \"") => Err(format!("question pick {:?}", t.chosen)),
        Provenance::Teacher if t.chosen.starts_with("Ask") => Err(format!("teacher pick {:?}", t.chosen)),
        _ => Ok(()),
    }
}

pub fn dataset_pipeline() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let trajs = look_trajectories(5);
    let mut bytes = Vec::new();
    for run in 0..2 {
        let d = build_mock(&trajs);
        for t in &d.triples {
            triple_shape(t)?;
        }
        let p = dir.path().join(format!("run{run}.jsonl"));
        export_jsonl(&d.triples, &p).map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(&p).map_err(|e| e.to_string())?);
    }
    if bytes[0] != bytes[1] {
        return Err("mock-scored builds differ".into());
    }
    let e = build_engineered();
    for t in &e.triples {
        triple_shape(t)?;
    }
    let s = &e.stats;
    let detail = format!(
        "mock build {} bytes identical twice; engineered corpus {} steps: {:.0}% question, {:.0}% teacher, {} skipped equal, {} uninformative, {} failed",
        bytes[0].len(),
        s.n_total,
        s.frac_question * 100.0,
        s.frac_teacher * 100.0,
        s.n_skipped_equal,
        s.n_skipped_uninformative,
        s.n_failed
    );
    if s.n_total != 100 || s.n_question != 37 || s.n_teacher != 48 || s.n_failed != 0 {
        return Err(detail);
    }
    Ok(detail)
}
