//! Benchmark dry run with the mock client.

use std::sync::Arc;

use adapt::harness::{report, run_suite, trajectory_paths, PersonaMode, SuiteConfig, DEFAULT_MAX_STEPS};
use adapt::llmclient::MockClient;
use adapt::policy::{PolicyConfig, PolicyMode};
use adapt::prefs::default_tasks;

use super::dataset::deps_with;

pub const COLUMNS: [&str; 5] = ["Policy", "Rate (seen) %", "Rate (unseen) %", "Questions (seen)", "Questions (unseen)"];

pub fn suite_config(personas: &[&str], seeds: usize) -> SuiteConfig {
    SuiteConfig {
        personas: personas.iter().map(|s| s.to_string()).collect(),
        tasks: default_tasks().task_names(),
        seeds: (0..seeds as u64).collect(),
        policy: PolicyConfig::new(PolicyMode::NeverAsk),
        persona_mode: PersonaMode::Scripted,
        inclusion_probability: 0.7,
        max_steps: DEFAULT_MAX_STEPS,
        seen: vec!["persona_01".into(), "persona_02".into()],
    }
}

pub fn full_dry_run() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let deps = deps_with(Arc::new(MockClient::new()));
    let suite = suite_config(&["persona_01", "persona_02", "persona_03", "persona_04"], 1);
    let out = run_suite(&suite, &deps, dir.path(), 4).map_err(|e| e.to_string())?;
    let files = trajectory_paths(&out.dir).map_err(|e| e.to_string())?;
    if files.len() != 32 || out.summary.n_completed != 32 || out.summary.n_failed != 0 {
        return Err(format!("{} trajectories, {} completed, {} failed", files.len(), out.summary.n_completed, out.summary.n_failed));
    }
    if !out.dir.join("cells.csv").is_file() {
        return Err("cells.csv missing".into());
    }
    let rep = report(std::slice::from_ref(&out.dir)).map_err(|e| e.to_string())?;
    let header = rep.table.lines().next().unwrap_or_default();
    let cols: Vec<&str> = header.trim_matches('|').split('|').map(str::trim).collect();
    if cols != COLUMNS {
        return Err(format!("report columns {cols:?}"));
    }
    if rep.rows.len() != 1 || rep.curve_csv.lines().count() != 12 {
        return Err(format!("{} report rows, {} curve lines", rep.rows.len(), rep.curve_csv.lines().count()));
    }
    let again = run_suite(&suite, &deps, dir.path(), 4).map_err(|e| e.to_string())?;
    if again.summary.n_executed != 0 {
        return Err(format!("resume re-ran {} cells", again.summary.n_executed));
    }
    Ok(format!("32 trajectories persisted, report columns {cols:?}, resume executed 0 cells"))
}
