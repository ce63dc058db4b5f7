//! Preference descriptions must reach the teacher prompt and never a student prompt.

use std::sync::{Arc, Mutex};

use adapt::harness::{run_episode, EpisodeConfig};
use adapt::llmclient::{ChatRequest, FnClient};
use adapt::policy::PolicyMode;
use adapt::prefs::{default_persona, default_personas, default_tasks};
use adapt::student::HeuristicStudentClient;

use super::dataset::{build_engineered, build_mock, deps_with, look_trajectories};

/// Drops the user-reply blocks, which carry answers the student asked for.
pub fn without_replies(prompt: &str) -> String {
    prompt
        .split("\nSource: ")
        .filter(|b| !b.starts_with("user\n") || b.contains("You have not made anything yet.") || b.contains("So far you have made:"))
        .collect::<Vec<_>>()
        .join("\nSource: ")
}

fn all_descriptions() -> Vec<String> {
    default_personas().iter().flat_map(|p| p.descriptions().into_iter().map(str::to_string)).collect()
}

fn leaks<'a>(text: &str, descs: &'a [String]) -> Vec<&'a str> {
    descs.iter().filter(|d| text.contains(d.as_str())).map(String::as_str).collect()
}

fn recorded_episode(task: &str, persona: &str, mode: PolicyMode, seed: u64) -> Result<Vec<String>, String> {
    let log = Arc::new(Mutex::new(Vec::<String>::new()));
    let sink = log.clone();
    let client = FnClient::new(move |req: &ChatRequest| {
        let all: String = req.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        sink.lock().expect("log lock").push(all.clone());
        HeuristicStudentClient::respond(&all)
    });
    let deps = deps_with(Arc::new(client));
    let mut cfg = EpisodeConfig::new(task, persona, mode, seed);
    cfg.max_steps = 12;
    run_episode(&cfg, &deps).map_err(|e| e.to_string())?;
    let out = log.lock().expect("log lock").clone();
    Ok(out)
}

pub fn persona_leak_guard() -> Result<String, String> {
    let descs = all_descriptions();
    let tasks = default_tasks().task_names();
    let mut student_prompts = 0;
    let mut teacher_prompts = 0;
    for (i, p) in default_personas().iter().enumerate() {
        let task = &tasks[i % tasks.len()];
        for mode in [PolicyMode::Base, PolicyMode::React, PolicyMode::NeverAsk, PolicyMode::AlwaysAsk] {
            for prompt in recorded_episode(task, &p.id, mode, i as u64)? {
                let text = if mode == PolicyMode::AlwaysAsk { without_replies(&prompt) } else { prompt };
                let l = leaks(&text, &descs);
                if !l.is_empty() {
                    return Err(format!("{} prompt for {} carries {:?}", mode.as_str(), p.id, l[0]));
                }
                student_prompts += 1;
            }
        }
        let own = default_persona(&p.id).ok_or("persona lookup")?.descriptions();
        for prompt in recorded_episode(task, &p.id, PolicyMode::Teacher, i as u64)? {
            if let Some(missing) = own.iter().find(|d| !prompt.contains(*d)) {
                return Err(format!("teacher prompt for {} lacks {missing:?}", p.id));
            }
            teacher_prompts += 1;
        }
    }
    let mut triples = build_engineered().triples;
    triples.extend(build_mock(&look_trajectories(5)).triples);
    for t in &triples {
        if let Some(d) = leaks(&t.prompt, &descs).first() {
            return Err(format!("dataset prompt carries {d:?}"));
        }
    }
    Ok(format!(
        "{student_prompts} student prompts and {} dataset prompts clean; {teacher_prompts} teacher prompts carry the full preference list",
        triples.len()
    ))
}
