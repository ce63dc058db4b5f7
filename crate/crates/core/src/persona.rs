//! Simulated user: answers the agent's questions from a persona's preference list.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::LlmError;
use crate::llmclient::{ChatRequest, LlmClient, Message};
use crate::policy::HistoryStep;
use crate::prefs::{Category, PersonaSpec, PreferenceRule, TaskPack};
use crate::world::SceneGraph;

pub const DEFAULT_REPLY: &str = "I have no preference";

const PERSONA_SYSTEM: &str = "You are teaching a household assistive robot in performing various assistive tasks in a manner user would like. The robot may not know user's preferences, so your job is to guide the robot to perform the given task for user. Be sure to guide the robot to make only those dishes that the task calls for, e.g. if the task is to make a waffle do not ask the robot to make other things, such as coffee. Answer direct questions regarding your preferences, and not the avilability or location of objects. In the latter case, encourage the robot to search and explore different locations. Even if the robot makes an irreversible error, be sure to provide a correction so that the robot does not repeat it's mistakes the next time.

Given the current state of the house and what you know about user and the task at hand, you will respond to the robot's last question concisely, and in first person, as if you are user.";

const PERSONA_INTERACTION: &str = "Look at the following interaction and provide a short answer to the robot's last question based on user's preferences. If user is flexible in their preference, make a choice arbitrarily, but make sure to tell the robot that usually user is flexible, and options which they would be okay with. Make sure to be consistent with your previous feedback.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplySource {
    Llm,
    Scripted,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserReply {
    pub text: String,
    pub source: ReplySource,
}

/// Persona prompt with the full state listing, preference lines and the interaction tail.
pub fn build_persona_prompt(
    persona: &PersonaSpec,
    scene: &SceneGraph,
    task: &str,
    history: &[HistoryStep],
    question: &str,
) -> String {
    let mut s = String::new();
    s.push_str(PERSONA_SYSTEM);
    s.push_str("\n\nEnvironment State:\n");
    s.push_str(&scene.render_state());
    s.push_str("\n\nTask: ");
    s.push_str(task);
    s.push_str("\n\nUser has the following preferences.\n");
    for d in persona.descriptions() {
        s.push_str(d);
        s.push('\n');
    }
    s.push_str("\n\n");
    s.push_str(PERSONA_INTERACTION);
    s.push_str("\n\n");
    for h in history {
        s.push_str("Source: robot\nAction: ");
        s.push_str(&h.action);
        s.push_str("\n\nSource: environment\nObservation: ");
        s.push_str(&h.observation);
        s.push_str("\n\n");
        if let Some(r) = &h.reply {
            s.push_str("Source: user\n");
            s.push_str(r);
            s.push_str("\n\n");
        }
    }
    s.push_str("Source: robot\nAsk \"");
    s.push_str(question);
    s.push_str("\"\n");
    s
}

/// First case-insensitive substring match wins.
pub fn scripted_answer(script: &[(String, String)], question: &str) -> UserReply {
    let q = question.to_lowercase();
    let text = script
        .iter()
        .find(|(p, _)| q.contains(&p.to_lowercase()))
        .map(|(_, r)| r.clone())
        .unwrap_or_else(|| DEFAULT_REPLY.to_string());
    UserReply { text, source: ReplySource::Scripted }
}

/// Script for scripted mode. Serving-location rules answer "where" and "serve" questions.
/// Every other rule answers questions naming its subtask, any subtask in its group, or a
/// group alias owned by a single subtask.
pub fn auto_script(persona: &PersonaSpec, pack: &TaskPack) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let location: Vec<&str> = persona
        .preferences
        .iter()
        .filter(|r| r.category == Category::ServingLocation)
        .map(|r| r.description.as_str())
        .collect();
    if !location.is_empty() {
        for t in ["serve", "where"] {
            out.push((t.to_string(), location.join(". ")));
        }
    }
    let others: Vec<&PreferenceRule> =
        persona.preferences.iter().filter(|r| r.category != Category::ServingLocation).collect();
    let mut covered: BTreeSet<&str> = BTreeSet::new();
    for st in &pack.subtasks {
        let matching: Vec<&str> = others
            .iter()
            .filter(|r| r.subtask_key == st.key || st.groups.contains(&r.subtask_key))
            .map(|r| r.description.as_str())
            .collect();
        let mut triggers = vec![st.key.as_str()];
        triggers.extend(
            st.groups
                .iter()
                .filter(|g| **g != st.key && pack.subtasks.iter().filter(|o| o.groups.contains(g)).count() == 1)
                .map(String::as_str),
        );
        for t in triggers {
            covered.insert(t);
            if !matching.is_empty() {
                out.push((t.to_string(), matching.join(". ")));
            }
        }
    }
    let mut extra: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &others {
        let k = r.subtask_key.as_str();
        let is_group = pack.subtasks.iter().any(|s| s.groups.iter().any(|g| g == k));
        if !covered.contains(k) && !is_group {
            extra.entry(k).or_default().push(&r.description);
        }
    }
    out.extend(extra.into_iter().map(|(k, d)| (k.to_string(), d.join(". "))));
    out
}

pub fn answer(
    persona: &PersonaSpec,
    scene: &SceneGraph,
    task: &str,
    history: &[HistoryStep],
    question: &str,
    client: &dyn LlmClient,
) -> Result<UserReply, LlmError> {
    let prompt = build_persona_prompt(persona, scene, task, history, question);
    let resp = client.complete(&ChatRequest::new(vec![Message::system(prompt)]))?;
    let text = resp.text.trim();
    let text = text.strip_prefix("Source: user").unwrap_or(text).trim();
    let text = if text.is_empty() { DEFAULT_REPLY } else { text };
    Ok(UserReply { text: text.to_string(), source: ReplySource::Llm })
}

pub type SharedInput = Arc<Mutex<Box<dyn BufRead + Send>>>;

/// Source of user replies for an episode.
#[derive(Clone)]
pub enum Responder {
    Llm(Arc<dyn LlmClient>),
    Scripted(Vec<(String, String)>),
    /// Prints the question on stderr and reads one line.
    Human(SharedInput),
}

impl Responder {
    pub fn stdin() -> Self {
        Responder::Human(Arc::new(Mutex::new(Box::new(std::io::BufReader::new(std::io::stdin())))))
    }

    pub fn reply(
        &self,
        persona: &PersonaSpec,
        scene: &SceneGraph,
        task: &str,
        history: &[HistoryStep],
        question: &str,
    ) -> Result<UserReply, LlmError> {
        match self {
            Responder::Llm(c) => answer(persona, scene, task, history, question, c.as_ref()),
            Responder::Scripted(s) => Ok(scripted_answer(s, question)),
            Responder::Human(input) => {
                eprintln!("Robot asks: {question}");
                eprint!("> ");
                let mut line = String::new();
                input
                    .lock()
                    .expect("input lock")
                    .read_line(&mut line)
                    .map_err(|e| LlmError::Transport(e.to_string()))?;
                let t = line.trim();
                let text = if t.is_empty() { DEFAULT_REPLY } else { t };
                Ok(UserReply { text: text.to_string(), source: ReplySource::Human })
            }
        }
    }
}
