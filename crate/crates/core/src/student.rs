//! Offline rule-based student that reads planner prompts and plays simple serve-and-pour
//! recipes, choosing variants from the user's replies.

use std::collections::BTreeSet;

use regex::Regex;
use std::sync::OnceLock;

use crate::error::LlmError;
use crate::llmclient::{hashed_probs, ChatRequest, ChatResponse, LlmClient, Message, SequenceScore};
use crate::policy::ASK_INSTRUCTION;

/// A dish: a vessel placed on a serving surface, then one pour per ingredient category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recipe {
    pub vessel: &'static str,
    pub ingredients: &'static [&'static str],
}

/// Recipes for the dishes named in a goal, in serving order.
pub fn recipes_for(goal: &str) -> Vec<Recipe> {
    let g = goal.to_lowercase();
    let mut out = Vec::new();
    if g.contains("coffee") {
        out.push(Recipe { vessel: "mug", ingredients: &["coffee"] });
    }
    if g.contains("tea ") || g.ends_with("tea") {
        out.push(Recipe { vessel: "mug", ingredients: &["tea"] });
    }
    if g.contains("cereal") {
        out.push(Recipe { vessel: "bowl", ingredients: &["cereal", "milk"] });
    }
    if g.contains("parfait") {
        out.push(Recipe { vessel: "bowl", ingredients: &["yoghurt", "granola"] });
    }
    out
}

const SURFACES: [(&str, &[&str]); 5] = [
    ("table_1", &["patio", "outside", "outdoor"]),
    ("island_0", &["island", "kitchen"]),
    ("desk_0", &["desk", "bedroom"]),
    ("coffee_table_0", &["coffee table", "living room", "sofa"]),
    ("table_0", &["dining"]),
];

const STOP: [&str; 24] = [
    "the", "and", "please", "would", "like", "with", "have", "prefer", "some", "for", "you", "your", "not",
    "any", "that", "this", "want", "usually", "use", "when", "making", "are", "can", "but",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Found {
    pub id: String,
    pub description: String,
    pub substances: Vec<String>,
}

fn found_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"([a-z0-9_]+) \(([^()]*)\) in/on [a-z0-9_]+").expect("static regex"))
}

pub fn parse_found(observation: &str) -> Vec<Found> {
    found_re()
        .captures_iter(observation)
        .map(|c| {
            let inner = &c[2];
            let (desc, subs) = match inner.split_once(", contains ") {
                Some((d, s)) => (d.to_string(), s.split(", ").map(str::to_string).collect()),
                None => (inner.to_string(), vec![]),
            };
            Found { id: c[1].to_string(), description: desc, substances: subs }
        })
        .collect()
}

fn reply_words(replies: &[String]) -> BTreeSet<String> {
    replies
        .iter()
        .flat_map(|r| r.split(|c: char| !c.is_ascii_alphanumeric()).map(str::to_lowercase).collect::<Vec<_>>())
        .filter(|w| w.len() >= 3 && !STOP.contains(&w.as_str()))
        .collect()
}

fn score(text: &str, words: &BTreeSet<String>) -> usize {
    let t: BTreeSet<String> =
        text.split(|c: char| !c.is_ascii_alphanumeric()).map(str::to_lowercase).collect();
    words.iter().filter(|w| t.contains(*w)).count()
}

#[derive(Debug, Clone, Default)]
struct Step {
    action: String,
    observation: String,
}

struct View {
    goal: String,
    steps: Vec<Step>,
    replies: Vec<String>,
    ask_turn: bool,
    react: bool,
}

fn parse_prompt(prompt: &str) -> View {
    let goal = prompt
        .split("What is the next action required to achieve the task: ")
        .nth(1)
        .and_then(|r| r.split("?\n").next())
        .unwrap_or_default()
        .to_string();
    let mut steps = Vec::new();
    let mut replies = Vec::new();
    let blocks: Vec<&str> = prompt.split("\nSource: ").collect();
    for b in blocks.iter().skip(1) {
        if let Some(rest) = b.strip_prefix("assistant\n") {
            if let Some(a) = rest.lines().find_map(|l| l.strip_prefix("Action: ")) {
                let a = a.split(" => ").next().unwrap_or(a);
                steps.push(Step { action: a.trim().to_string(), observation: String::new() });
            }
        } else if let Some(rest) = b.strip_prefix("environment\n") {
            if let Some(s) = steps.last_mut() {
                s.observation = rest.trim().strip_prefix("Observation:").unwrap_or(rest).trim().to_string();
            }
        } else if let Some(rest) = b.strip_prefix("user\n") {
            let t = rest.trim();
            if !t.starts_with("You have not made anything yet.") && !t.starts_with("So far you have made:") {
                replies.push(t.to_string());
            }
        }
    }
    View {
        goal,
        steps,
        replies,
        ask_turn: prompt.contains(ASK_INSTRUCTION),
        react: prompt.trim_end().ends_with("Thought:"),
    }
}

enum Next {
    Act(String, String),
    Done,
}

fn succeeded(s: &Step) -> bool {
    !s.observation.starts_with("Action failed")
}

fn plan(v: &View) -> Next {
    let words = reply_words(&v.replies);
    let look = |cat: &str| -> Option<&Step> { v.steps.iter().find(|s| s.action == format!("Look for {cat}")) };
    let mut used_vessels: BTreeSet<String> = BTreeSet::new();
    for r in recipes_for(&v.goal) {
        let Some(vl) = look(r.vessel) else {
            return Next::Act(format!("Look for {}", r.vessel), format!("Where would you like your {} served?", r.vessel));
        };
        let vessels: Vec<Found> =
            parse_found(&vl.observation).into_iter().filter(|f| f.id.starts_with(r.vessel)).collect();
        let placed = v.steps.iter().filter(|s| succeeded(s)).find_map(|s| {
            let rest = s.action.strip_prefix("Move ")?;
            let (id, _) = rest.split_once(" to ")?;
            (vessels.iter().any(|f| f.id == id) && !used_vessels.contains(id)).then(|| id.to_string())
        });
        let vessel = match placed {
            Some(id) => id,
            None => {
                let Some(f) = vessels.iter().find(|f| !used_vessels.contains(&f.id)) else { continue };
                let surface = SURFACES
                    .iter()
                    .find(|(_, names)| names.iter().any(|n| v.replies.iter().any(|r| r.to_lowercase().contains(n))))
                    .map(|(s, _)| *s)
                    .unwrap_or("table_0");
                return Next::Act(
                    format!("Move {} to {surface}", f.id),
                    "Where would you like your breakfast served?".into(),
                );
            }
        };
        used_vessels.insert(vessel.clone());
        for ing in r.ingredients {
            let question = format!("What kind of {ing} would you like?");
            let Some(l) = look(ing) else { return Next::Act(format!("Look for {ing}"), question) };
            let options: Vec<Found> = parse_found(&l.observation)
                .into_iter()
                .filter(|f| !f.substances.is_empty() && f.id != vessel)
                .collect();
            if options.is_empty() {
                continue;
            }
            let poured = v.steps.iter().filter(|s| succeeded(s)).any(|s| {
                s.action.starts_with("Pour ")
                    && s.action.ends_with(&format!(" to {vessel}"))
                    && options.iter().any(|o| s.action.contains(&format!(" from {} ", o.id)))
            });
            if poured {
                continue;
            }
            let best = options
                .iter()
                .enumerate()
                .max_by_key(|(i, o)| {
                    let text = format!("{} {}", o.description, o.substances.join(" "));
                    (score(&text, &words), std::cmp::Reverse(*i))
                })
                .map(|(_, o)| o)
                .expect("non-empty");
            let sub = best
                .substances
                .iter()
                .enumerate()
                .max_by_key(|(i, s)| (score(s, &words), std::cmp::Reverse(*i)))
                .map(|(_, s)| s.clone())
                .expect("non-empty");
            return Next::Act(format!("Pour {sub} from {} to {vessel}", best.id), question);
        }
    }
    Next::Done
}

/// Deterministic scripted student speaking the planner prompt format.
#[derive(Debug, Default, Clone, Copy)]
pub struct HeuristicStudentClient;

impl HeuristicStudentClient {
    pub fn respond(prompt: &str) -> String {
        let v = parse_prompt(prompt);
        let (action, question) = match plan(&v) {
            Next::Act(a, q) => (a, q),
            Next::Done => ("Declare Done".to_string(), "Is there anything else you would like?".to_string()),
        };
        if v.ask_turn {
            return format!("Ask \"{question}\"");
        }
        if v.react {
            format!("Thought: I should continue with the next step of the recipe.\nAction: {action}")
        } else {
            format!(" {action}")
        }
    }
}

impl LlmClient for HeuristicStudentClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        if req.messages.is_empty() {
            return Err(LlmError::Config("empty message list".into()));
        }
        let all: String = req.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n");
        Ok(ChatResponse::stop(Self::respond(&all)))
    }

    fn score(&self, context: &[Message], continuation: &str) -> Result<SequenceScore, LlmError> {
        SequenceScore::from_probs(hashed_probs(context, continuation.trim_end()))
    }
}
