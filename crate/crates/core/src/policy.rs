//! Planner prompts and agent policies: base, ReAct, always-ask, never-ask and the privileged
//! teacher.

use serde::{Deserialize, Serialize};

use crate::actions::{normalize_action_text, parse_action, ActionKind, ParsedAction};
use crate::error::PolicyError;
use crate::grammar::GrammarSnapshot;
use crate::llmclient::{ChatRequest, LlmClient, Message, Sampling};

pub const NO_PRIOR: &str = "You have no prior information about user.";
pub const FALLBACK_QUESTION: &str = "Is there anything about how you like your breakfast that I should know?";
pub const ASK_INSTRUCTION: &str = "Ask the user one question about their preferences that would help you decide your next step. Respond with a single line of the form: Ask \"<question>\"";

const INTRO: &str = "You are an expert at task planning, and know how to provide assistance in a manner that user wants for preparing and serving breakfasts such as making cereal, pancakes, toast, waffles, french toast, coffee, tea, etc. You have the ability to take the following actions:";

const LEGEND: [(&str, &str); 17] = [
    ("open", "- Open <X>: open an instance of an articulated furniture or object. e.g. Open cabinet"),
    ("close", "- Close <X>: close an instance of an articulated furniture or object. e.g. Close cabinet"),
    ("heat", "- Heat <X>: heat a container, which is located on a heating appliance. e.g. Heat pan_0"),
    ("turn_on", "- Turn on <X>: turn on an appliance. e.g. Turn on stove_0"),
    ("turn_off", "- Turn off <X>: turn off an appliance. e.g. Turn off stove_0"),
    ("search", "- Search <X>: search a container in the house. e.g. Search counter_0"),
    ("look_for", "- Look for <X>: Look for an object in the whole house. Use this with a generic category name of an object, and not an object instance or phrase. Be sure to look for objects one-at-a-time. e.g. Search apple"),
    ("move", "- Move <X> to <Y>: move an object X from wherever it currently is to the furniture or location Y. e.g. Place plate_0 on table_2"),
    ("mix", "- Mix all items in <X> to get <Y>: mix items that exist in a container, typically to create a new entity. e.g. Mix all items in bowl_0 to get cake_batter"),
    ("cook", "- Cook items in <X> to get <Y>: cook something in a stove, oven or other such appliance to create a cooked version of that entity. e.g. Cook items in pan_0 to get scrambled_eggs"),
    ("chop", "- Chop <X> to get <Y>: chop items on a cutting board to create a chopped version of that entity. e.g. Chop apple_0 to get chopped_apple"),
    ("pour", "- Pour <X> from <Y> to <Z>: pour an entity X from one container Y to another container Z. e.g. Pour milk from milk_carton_0 to mug_0"),
    ("move_from", "- Move <X> from <Y> to <Z>: move content X of container Y to another container Z. e.g. Move apple from apple_bag_0 to bowl_1"),
    ("freeform_container", "- <X> items in <Y> to get <Z>: freeform action to change object state, such as whisk, heat, blend, etc. e.g. whisk items in pan_0 to get custard, brew coffee_grounds to get brewed_coffee etc."),
    ("freeform_object", "- <X> the object <Y> to get <Z>: freeform action to change object state, such as chop, peel, crack, wash, wipe, etc. e.g. chop the object tomato_1 to get finely_chopped_tomato, chop the object onion_0 to get sliced_onion, crack the object egg_4 to get cracked_egg, etc."),
    ("ask", "- Ask <X>: ask a freeform question to the user to decide between multiple options and make sure you adhere to the user's preferences. e.g. Ask \"Would you like the eggs sunny-side-up or scrambled?\""),
    ("done", "- Declare Done: indicate that the task is complete. Make sure to use this exactly once at the end of the task."),
];

const TASK_LINE: &str = "For a given task, you will provide the next action required to achieve a given task.";
const REACT_FORMAT: &str = " Before each step you will provide your reason or intention behind your action. \ne.g. \nThought: I need to find eggs to prepare an omelet \nAction: Find eggs. ";
const BEHAVIOUR: &str = "Do NOT repeat your last action.\nNote that you must do the task in a way that the user prefers. Think of different variations, modifications, sides, etc. applicable to the given task, and do the task in a way that you think the user would prefer. You might know some things about the user, which you should extrapolate from when possible, and if you don't have any related information, you can ask the user a question. Be sure to only ask about their preferences. Think about whether multiple options are available for a particular ingredient, and think creatively about toppings and sides that the person might prefer. Do not ask for help in finding things; the user may not know what objects exist in the environment and where they might be located. Ask general questions to learn about the user's preferences which can prove useful in preparing future breakfasts in addition to the one at hand.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Base,
    React,
    AlwaysAsk,
    NeverAsk,
    Teacher,
}

impl PolicyMode {
    pub const ALL: [PolicyMode; 5] =
        [PolicyMode::Base, PolicyMode::React, PolicyMode::AlwaysAsk, PolicyMode::NeverAsk, PolicyMode::Teacher];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyMode::Base => "base",
            PolicyMode::React => "react",
            PolicyMode::AlwaysAsk => "always_ask",
            PolicyMode::NeverAsk => "never_ask",
            PolicyMode::Teacher => "teacher",
        }
    }

    pub fn allows_ask(self) -> bool {
        !matches!(self, PolicyMode::NeverAsk | PolicyMode::Teacher)
    }

    pub fn is_teacher(self) -> bool {
        self == PolicyMode::Teacher
    }
}

impl std::str::FromStr for PolicyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown policy mode {s}; expected one of base, react, always_ask, never_ask, teacher"))
    }
}

/// One prior step as shown to the planner.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryStep {
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    pub observation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    /// Progress line shown in the user slot when there is no reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyContext {
    pub goal: String,
    pub history: Vec<HistoryStep>,
    pub layout: String,
    /// Preference descriptions for the teacher, empty for students.
    pub prior: Vec<String>,
    pub step: usize,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub action_text: String,
    pub thought: Option<String>,
    pub raw_completion: String,
}

impl PolicyDecision {
    pub fn action(&self) -> ParsedAction {
        parse_action(&self.action_text).expect("decisions always parse")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub mode: PolicyMode,
    pub retries: usize,
    pub sampling: Sampling,
    /// Transcript size in bytes beyond which the oldest steps are summarized.
    pub history_budget: Option<usize>,
}

impl PolicyConfig {
    pub fn new(mode: PolicyMode) -> Self {
        PolicyConfig { mode, retries: 3, sampling: Sampling::default(), history_budget: None }
    }
}

pub fn status_line(goal: &str, made: &[String]) -> String {
    let head = if made.is_empty() {
        "You have not made anything yet.".to_string()
    } else {
        format!("So far you have made: {}.", made.join(", "))
    };
    format!("{head}\nWhat is the next step to complete the task: {goal}?")
}

fn prior_block(ctx: &PolicyContext, mode: PolicyMode) -> String {
    if mode.is_teacher() && !ctx.prior.is_empty() {
        let mut s = String::from("You know the following about user:\n");
        for p in &ctx.prior {
            s.push_str(p);
            s.push('\n');
        }
        s.pop();
        s
    } else {
        NO_PRIOR.to_string()
    }
}

fn step_block(h: &HistoryStep, full: bool) -> String {
    let mut s = String::from("\nSource: assistant\n");
    if full {
        if let Some(t) = &h.thought {
            s.push_str("Thought: ");
            s.push_str(t);
            s.push('\n');
        }
        s.push_str("Action: ");
        s.push_str(&h.action);
        s.push_str("\n\nSource: environment\nObservation: ");
        s.push_str(&h.observation);
        s.push('\n');
    } else {
        let obs: String = h.observation.chars().take(80).collect();
        s.push_str(&format!("Action: {} => {}\n", h.action, obs));
    }
    if let Some(u) = h.reply.as_ref().or(h.status.as_ref()).filter(|_| full || h.reply.is_some()) {
        s.push_str("\nSource: user\n");
        s.push_str(u);
        s.push('\n');
    }
    s
}

fn transcript(ctx: &PolicyContext, budget: Option<usize>) -> String {
    let n = ctx.history.len();
    let mut summarized = 0;
    loop {
        let text: String =
            ctx.history.iter().enumerate().map(|(i, h)| step_block(h, i >= summarized)).collect();
        match budget {
            Some(b) if text.len() > b && summarized < n => summarized += 1,
            _ => return text,
        }
    }
}

/// Planner prompt: legend, behaviour block, prior knowledge, layout, transcript and the
/// closing question, ending with an open assistant turn.
pub fn build_planner_prompt(ctx: &PolicyContext, mode: PolicyMode) -> String {
    build_planner_prompt_with(ctx, mode, None)
}

pub fn build_planner_prompt_with(ctx: &PolicyContext, mode: PolicyMode, budget: Option<usize>) -> String {
    let mut s = String::new();
    s.push_str(INTRO);
    s.push('\n');
    for (k, line) in LEGEND {
        if k == "ask" && !mode.allows_ask() {
            continue;
        }
        s.push_str(line);
        s.push('\n');
    }
    s.push('\n');
    s.push_str(TASK_LINE);
    if mode == PolicyMode::React {
        s.push_str(REACT_FORMAT);
    }
    s.push('\n');
    s.push_str(BEHAVIOUR);
    s.push_str("\n\n");
    s.push_str(&prior_block(ctx, mode));
    s.push_str("\n\nYou will be performing tasks in a house with the following layout:\n");
    s.push_str(&ctx.layout);
    s.push_str("\n\nWhat is the next action required to achieve the task: ");
    s.push_str(&ctx.goal);
    s.push_str("?\n");
    s.push_str(&transcript(ctx, budget));
    s.push_str("\nSource: assistant\n");
    s.push_str(if mode == PolicyMode::React { "Thought:" } else { "Action:" });
    s
}

pub fn planner_messages(ctx: &PolicyContext, mode: PolicyMode, budget: Option<usize>) -> Vec<Message> {
    vec![Message::system(build_planner_prompt_with(ctx, mode, budget))]
}

/// Splits a completion into an optional thought and the action line.
pub fn split_completion(raw: &str) -> (Option<String>, String) {
    let mut thought = None;
    let mut action = None;
    for line in raw.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(t) = line.strip_prefix("Thought:") {
            thought = Some(t.trim().to_string());
        } else if let Some(a) = line.strip_prefix("Action:") {
            if !a.trim().is_empty() {
                action = Some(a.trim().to_string());
            }
        } else if action.is_none() && thought.is_none() {
            action = Some(line.to_string());
        } else if action.is_none() {
            if let Some(t) = thought.as_mut() {
                t.push(' ');
                t.push_str(line);
            }
        }
    }
    (thought, action.unwrap_or_default())
}

fn is_ask_turn(ctx: &PolicyContext) -> bool {
    ctx.history.last().is_none_or(|h| !h.action.starts_with("Ask "))
}

fn validate(text: &str, mode: PolicyMode, ctx: &PolicyContext, grammar: &GrammarSnapshot) -> Option<String> {
    let parsed = parse_action(text).ok()?;
    if parsed.kind == ActionKind::Ask && !mode.allows_ask() {
        return None;
    }
    let canon = parsed.render();
    if !grammar.derives(&canon) {
        return None;
    }
    if ctx.history.last().is_some_and(|h| normalize_action_text(&h.action) == canon) {
        return None;
    }
    Some(canon)
}

/// Samples until a completion parses, is derivable and is not a repeat. In always-ask mode
/// every turn following a non-ask action is an ask turn.
pub fn next_action(
    cfg: &PolicyConfig,
    ctx: &PolicyContext,
    client: &dyn LlmClient,
    grammar: &GrammarSnapshot,
) -> Result<PolicyDecision, PolicyError> {
    let messages = planner_messages(ctx, cfg.mode, cfg.history_budget);
    if cfg.mode == PolicyMode::AlwaysAsk && is_ask_turn(ctx) {
        let mut m = messages;
        m.push(Message::user(ASK_INSTRUCTION));
        let mut req = ChatRequest::new(m);
        req.sampling = cfg.sampling.clone();
        let raw = client.complete(&req)?.text;
        let (_, line) = split_completion(&raw);
        let action_text = match parse_action(&line) {
            Ok(a) if a.kind == ActionKind::Ask && grammar.derives(&a.render()) => a.render(),
            _ => ParsedAction::new(ActionKind::Ask, &[FALLBACK_QUESTION], &[]).render(),
        };
        return Ok(PolicyDecision { action_text, thought: None, raw_completion: raw });
    }
    let mut req = ChatRequest::new(messages);
    req.sampling = cfg.sampling.clone();
    if client.supports_grammar() {
        req.grammar = Some(grammar.render());
    }
    let mut raws = Vec::new();
    for _ in 0..cfg.retries.max(1) {
        let raw = client.complete(&req)?.text;
        let (thought, line) = split_completion(&raw);
        if let Some(action_text) = validate(&line, cfg.mode, ctx, grammar) {
            return Ok(PolicyDecision { action_text, thought, raw_completion: raw });
        }
        raws.push(raw);
    }
    Err(PolicyError::InvalidAction { raw: raws })
}
