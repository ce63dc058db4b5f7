//! Policy-mode contracts with scripted personas and the offline heuristic student.

use std::sync::Arc;
use std::time::Instant;

use adapt::harness::{run_episode, EpisodeConfig, EpisodeDeps, PersonaMode};
use adapt::policy::PolicyMode;
use adapt::prefs::{default_personas, default_tasks, PersonaSpec};
use adapt::student::HeuristicStudentClient;
use adapt::world::default_catalog;

pub const CRAFTED: &str = r#"{
 "schema_version": 1,
 "persona_id": "crafted_cereal",
 "display_name": "Crafted cereal persona",
 "preferences": [
  {"id": "cc_01", "description": "I only eat corn flakes", "category": "variant", "subtask_key": "cereal",
   "check": {"type": "variant", "preferred": ["corn flakes"], "dispreferred": []}},
  {"id": "cc_02", "description": "I drink oat milk", "category": "variant", "subtask_key": "cereal",
   "check": {"type": "variant", "preferred": ["oat milk"], "dispreferred": []}},
  {"id": "cc_03", "description": "Serve everything on the patio table", "category": "serving_location", "subtask_key": "cereal",
   "check": {"type": "location", "surfaces": ["table_1"]}}
 ]
}"#;

pub fn crafted_persona() -> PersonaSpec {
    PersonaSpec::from_json(CRAFTED).expect("crafted persona parses")
}

pub fn heuristic_deps() -> EpisodeDeps {
    let mut personas = default_personas().to_vec();
    personas.push(crafted_persona());
    EpisodeDeps::new(default_catalog().clone(), default_tasks().clone(), personas, Arc::new(HeuristicStudentClient))
}

fn cfg(task: &str, persona: &str, mode: PolicyMode, seed: u64) -> EpisodeConfig {
    let mut c = EpisodeConfig::new(task, persona, mode, seed);
    c.inclusion_probability = 1.0;
    c.max_steps = 30;
    c.persona_mode = PersonaMode::Scripted;
    c
}

pub fn policy_contracts() -> Result<String, String> {
    let start = Instant::now();
    let deps = heuristic_deps();
    let tasks: Vec<String> = default_tasks().task_names();
    let mut episodes = 0;
    for (i, task) in tasks.iter().enumerate() {
        for persona in ["persona_01", "persona_07", "crafted_cereal"] {
            let seed = i as u64;
            let (t, m) = run_episode(&cfg(task, persona, PolicyMode::NeverAsk, seed), &deps).map_err(|e| e.to_string())?;
            if m.num_questions != 0 || t.steps.iter().any(|s| s.action.starts_with("Ask")) {
                return Err(format!("never_ask asked {} questions on {task}", m.num_questions));
            }
            let (t, m) = run_episode(&cfg(task, persona, PolicyMode::AlwaysAsk, seed), &deps).map_err(|e| e.to_string())?;
            let physical: Vec<usize> =
                t.steps.iter().enumerate().filter(|(_, s)| !s.action.starts_with("Ask")).map(|(k, _)| k).collect();
            if m.num_questions < physical.len() {
                return Err(format!("always_ask: {} questions for {} actions on {task}", m.num_questions, physical.len()));
            }
            if let Some(k) = physical.iter().find(|&&k| k == 0 || !t.steps[k - 1].action.starts_with("Ask")) {
                return Err(format!("always_ask: action {k} on {task} not preceded by a question"));
            }
            episodes += 2;
        }
    }
    let task = "Prepare cereal for breakfast";
    let mut never = Vec::new();
    let mut always = Vec::new();
    for seed in 0..4 {
        never.push(run_episode(&cfg(task, "crafted_cereal", PolicyMode::NeverAsk, seed), &deps).map_err(|e| e.to_string())?.1.rate);
        always.push(run_episode(&cfg(task, "crafted_cereal", PolicyMode::AlwaysAsk, seed), &deps).map_err(|e| e.to_string())?.1.rate);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (n, a) = (mean(&never), mean(&always));
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{episodes} contract episodes; crafted persona rate always_ask {a:.3} vs never_ask {n:.3}; {secs:.1}s");
    if a <= n {
        return Err(detail);
    }
    if secs >= 60.0 {
        return Err(format!("{detail}; over one minute"));
    }
    Ok(detail)
}
