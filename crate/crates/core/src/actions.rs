//! Action templates: parsing, precondition checks and execution against a scene.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{ParseError, WorldError};
use crate::world::{default_catalog, flag, Entity, Mutation, Requirement, SceneGraph, VerbSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Ask,
    Open,
    Close,
    TurnOn,
    TurnOff,
    Heat,
    Search,
    LookFor,
    Move,
    MoveFrom,
    Pour,
    Mix,
    Cook,
    Chop,
    FreeformContainer,
    FreeformObject,
    Done,
}

impl ActionKind {
    pub const ALL: [ActionKind; 17] = [
        ActionKind::Ask,
        ActionKind::Open,
        ActionKind::Close,
        ActionKind::TurnOn,
        ActionKind::TurnOff,
        ActionKind::Heat,
        ActionKind::Search,
        ActionKind::LookFor,
        ActionKind::Move,
        ActionKind::MoveFrom,
        ActionKind::Pour,
        ActionKind::Mix,
        ActionKind::Cook,
        ActionKind::Chop,
        ActionKind::FreeformContainer,
        ActionKind::FreeformObject,
        ActionKind::Done,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Ask => "ask",
            ActionKind::Open => "open",
            ActionKind::Close => "close",
            ActionKind::TurnOn => "turn_on",
            ActionKind::TurnOff => "turn_off",
            ActionKind::Heat => "heat",
            ActionKind::Search => "search",
            ActionKind::LookFor => "look_for",
            ActionKind::Move => "move",
            ActionKind::MoveFrom => "move_from",
            ActionKind::Pour => "pour",
            ActionKind::Mix => "mix",
            ActionKind::Cook => "cook",
            ActionKind::Chop => "chop",
            ActionKind::FreeformContainer => "freeform_container",
            ActionKind::FreeformObject => "freeform_object",
            ActionKind::Done => "done",
        }
    }

    /// (argument count, result count)
    pub fn arity(self) -> (usize, usize) {
        match self {
            ActionKind::Ask => (1, 0),
            ActionKind::Done => (0, 0),
            ActionKind::Move => (2, 0),
            ActionKind::MoveFrom | ActionKind::Pour => (3, 0),
            ActionKind::Mix | ActionKind::Cook | ActionKind::Chop => (1, 1),
            ActionKind::FreeformContainer | ActionKind::FreeformObject => (2, 1),
            _ => (1, 0),
        }
    }

    pub fn is_physical(self) -> bool {
        !matches!(self, ActionKind::Ask | ActionKind::Done)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A parsed action. Argument layout per kind:
/// ask `[question]`; single-target kinds `[X]`; move `[X, Y]`; move_from and pour `[X, Y, Z]`;
/// mix, cook, chop `[X]` with one result; freeform kinds `[verb, Y]` with one result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAction {
    pub kind: ActionKind,
    pub args: Vec<String>,
    pub result_names: Vec<String>,
    pub raw_text: String,
}

impl ParsedAction {
    pub fn new(kind: ActionKind, args: &[&str], results: &[&str]) -> Self {
        let mut a = ParsedAction {
            kind,
            args: args.iter().map(|s| s.to_string()).collect(),
            result_names: results.iter().map(|s| s.to_string()).collect(),
            raw_text: String::new(),
        };
        a.raw_text = a.render();
        a
    }

    fn arg(&self, i: usize) -> &str {
        self.args.get(i).map(String::as_str).unwrap_or("")
    }

    fn result(&self) -> &str {
        self.result_names.first().map(String::as_str).unwrap_or("")
    }

    /// Canonical template text.
    pub fn render(&self) -> String {
        let (a0, a1, a2, r) = (self.arg(0), self.arg(1), self.arg(2), self.result());
        match self.kind {
            ActionKind::Ask => format!("Ask \"{a0}\""),
            ActionKind::Open => format!("Open {a0}"),
            ActionKind::Close => format!("Close {a0}"),
            ActionKind::TurnOn => format!("Turn on {a0}"),
            ActionKind::TurnOff => format!("Turn off {a0}"),
            ActionKind::Heat => format!("Heat {a0}"),
            ActionKind::Search => format!("Search {a0}"),
            ActionKind::LookFor => format!("Look for {a0}"),
            ActionKind::Move => format!("Move {a0} to {a1}"),
            ActionKind::MoveFrom => format!("Move {a0} from {a1} to {a2}"),
            ActionKind::Pour => format!("Pour {a0} from {a1} to {a2}"),
            ActionKind::Mix => format!("Mix all items in {a0} to get {r}"),
            ActionKind::Cook => format!("Cook items in {a0} to get {r}"),
            ActionKind::Chop => format!("Chop {a0} to get {r}"),
            ActionKind::FreeformContainer => format!("{a0} items in {a1} to get {r}"),
            ActionKind::FreeformObject => format!("{a0} the object {a1} to get {r}"),
            ActionKind::Done => "Declare Done".to_string(),
        }
    }

    pub fn question(&self) -> Option<&str> {
        (self.kind == ActionKind::Ask).then(|| self.arg(0))
    }

    /// Scene-entity referents, excluding results, content tokens, categories and verbs.
    pub fn referents(&self) -> Vec<&str> {
        match self.kind {
            ActionKind::Ask | ActionKind::Done | ActionKind::LookFor => vec![],
            ActionKind::MoveFrom | ActionKind::Pour => vec![self.arg(1), self.arg(2)],
            ActionKind::Move => vec![self.arg(0), self.arg(1)],
            ActionKind::FreeformContainer | ActionKind::FreeformObject => vec![self.arg(1)],
            _ => vec![self.arg(0)],
        }
    }
}

impl fmt::Display for ParsedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Trim, drop an "Action:" tag and a trailing period, collapse whitespace.
pub fn normalize_action_text(text: &str) -> String {
    let mut s = text.trim();
    if s.len() >= 7 && s[..7].eq_ignore_ascii_case("action:") {
        s = s[7..].trim_start();
    }
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let trimmed = collapsed.trim_end_matches('.').trim_end();
    trimmed.to_string()
}

struct Patterns {
    done: Regex,
    ask: Regex,
    move_from: Regex,
    pour: Regex,
    mix: Regex,
    cook: Regex,
    chop: Regex,
    ff_container: Regex,
    ff_object: Regex,
    turn: Regex,
    single: Regex,
    look_for: Regex,
    moves: [Regex; 4],
}

const TOK: &str = "([A-Za-z0-9_]+)";

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let r = |s: String| Regex::new(&format!("(?i)^{s}$")).expect("valid pattern");
        Patterns {
            done: r("declare done".into()),
            ask: r("ask(?:\\s+(.*))?".into()),
            move_from: r(format!("move {TOK} from {TOK} (?:to|into|onto) {TOK}")),
            pour: r(format!("pour {TOK} from {TOK} (?:to|into|onto|in) {TOK}")),
            mix: r(format!("mix all items in {TOK} to get {TOK}")),
            cook: r(format!("cook items in {TOK} to get {TOK}")),
            chop: r(format!("chop {TOK} to get {TOK}")),
            ff_container: r(format!("{TOK} items in {TOK} to get {TOK}")),
            ff_object: r(format!("{TOK} the object {TOK} to get {TOK}")),
            turn: r(format!("turn (on|off) {TOK}")),
            single: r(format!("(open|close|heat|search) {TOK}")),
            look_for: r(format!("look for {TOK}")),
            moves: [
                r(format!("move {TOK} (?:to|into|onto) {TOK}")),
                r(format!("(?:serve|place) the object {TOK} (?:at|on|in|to|into|onto) {TOK}")),
                r(format!("place {TOK} (?:on|at|in|into|onto) {TOK}")),
                r(format!("serve {TOK} (?:at|on|to|in) {TOK}")),
            ],
        }
    })
}

/// Parses against the default verb whitelist.
pub fn parse_action(text: &str) -> Result<ParsedAction, ParseError> {
    parse_action_with(text, &default_catalog().verbs)
}

pub fn parse_action_with(text: &str, verbs: &[VerbSpec]) -> Result<ParsedAction, ParseError> {
    let norm = normalize_action_text(text);
    let p = patterns();
    let mk = |kind, args: Vec<&str>, results: Vec<&str>| ParsedAction {
        kind,
        args: args.into_iter().map(str::to_string).collect(),
        result_names: results.into_iter().map(str::to_string).collect(),
        raw_text: text.to_string(),
    };
    if p.done.is_match(&norm) {
        return Ok(mk(ActionKind::Done, vec![], vec![]));
    }
    if let Some(c) = p.ask.captures(&norm) {
        let body = c.get(1).map(|m| m.as_str().trim()).unwrap_or("");
        let q = unquote(body).ok_or_else(|| ParseError::MalformedAsk(text.to_string()))?;
        return Ok(mk(ActionKind::Ask, vec![q.as_str()], vec![]));
    }
    if let Some(c) = p.move_from.captures(&norm) {
        return Ok(mk(ActionKind::MoveFrom, vec![g(&c, 1), g(&c, 2), g(&c, 3)], vec![]));
    }
    if let Some(c) = p.pour.captures(&norm) {
        return Ok(mk(ActionKind::Pour, vec![g(&c, 1), g(&c, 2), g(&c, 3)], vec![]));
    }
    if let Some(c) = p.mix.captures(&norm) {
        return Ok(mk(ActionKind::Mix, vec![g(&c, 1)], vec![g(&c, 2)]));
    }
    if let Some(c) = p.cook.captures(&norm) {
        return Ok(mk(ActionKind::Cook, vec![g(&c, 1)], vec![g(&c, 2)]));
    }
    if let Some(c) = p.chop.captures(&norm) {
        return Ok(mk(ActionKind::Chop, vec![g(&c, 1)], vec![g(&c, 2)]));
    }
    for (re, kind) in [(&p.ff_container, ActionKind::FreeformContainer), (&p.ff_object, ActionKind::FreeformObject)] {
        if let Some(c) = re.captures(&norm) {
            let verb = g(&c, 1);
            let spec = verbs
                .iter()
                .find(|v| v.verb.eq_ignore_ascii_case(verb))
                .ok_or_else(|| ParseError::VerbNotWhitelisted(verb.to_string()))?;
            return Ok(mk(kind, vec![spec.verb.as_str(), g(&c, 2)], vec![g(&c, 3)]));
        }
    }
    if let Some(c) = p.turn.captures(&norm) {
        let kind = if g(&c, 1).eq_ignore_ascii_case("on") { ActionKind::TurnOn } else { ActionKind::TurnOff };
        return Ok(mk(kind, vec![g(&c, 2)], vec![]));
    }
    if let Some(c) = p.single.captures(&norm) {
        let kind = match g(&c, 1).to_ascii_lowercase().as_str() {
            "open" => ActionKind::Open,
            "close" => ActionKind::Close,
            "heat" => ActionKind::Heat,
            _ => ActionKind::Search,
        };
        return Ok(mk(kind, vec![g(&c, 2)], vec![]));
    }
    if let Some(c) = p.look_for.captures(&norm) {
        let cat = g(&c, 1).to_ascii_lowercase();
        return Ok(mk(ActionKind::LookFor, vec![cat.as_str()], vec![]));
    }
    for re in &p.moves {
        if let Some(c) = re.captures(&norm) {
            return Ok(mk(ActionKind::Move, vec![g(&c, 1), g(&c, 2)], vec![]));
        }
    }
    Err(ParseError::NoMatch(text.to_string()))
}

fn g<'t>(c: &regex::Captures<'t>, i: usize) -> &'t str {
    c.get(i).map(|m| m.as_str()).unwrap_or("")
}

fn unquote(body: &str) -> Option<String> {
    let inner = body
        .strip_prefix('"')
        .and_then(|b| b.strip_suffix('"'))
        .or_else(|| body.strip_prefix('\u{201c}').and_then(|b| b.strip_suffix('\u{201d}')))?;
    let inner = inner.trim();
    if inner.is_empty() || inner.contains(['"', '\u{201c}', '\u{201d}']) {
        return None;
    }
    Some(inner.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "subject", rename_all = "snake_case")]
pub enum FailureReason {
    Missing(String),
    NotContained { holder: String, item: String },
    NotAppliance(String),
    NotOnAppliance(String),
    ApplianceOff(String),
    NotOnChoppingSurface(String),
    NoEdibleContents(String),
    NotContainer(String),
    NotEdible(String),
    NotHeatable(String),
    NotMovable(String),
    CannotHold(String),
    SelfPlacement { item: String, dest: String },
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::Missing(x) => write!(f, "{x} does not exist"),
            FailureReason::NotContained { holder, item } => write!(f, "{holder} must contain {item}"),
            FailureReason::NotAppliance(x) => write!(f, "{x} must be a cooking appliance"),
            FailureReason::NotOnAppliance(x) => write!(f, "{x} must be on a cooking appliance"),
            FailureReason::ApplianceOff(x) => write!(f, "{x} must be turned on"),
            FailureReason::NotOnChoppingSurface(x) => write!(f, "{x} must be on a chopping surface"),
            FailureReason::NoEdibleContents(x) => write!(f, "{x} must contain edible contents"),
            FailureReason::NotContainer(x) => write!(f, "{x} must be a container"),
            FailureReason::NotEdible(x) => write!(f, "{x} must be edible"),
            FailureReason::NotHeatable(x) => write!(f, "{x} must be a container or edible"),
            FailureReason::NotMovable(x) => write!(f, "{x} cannot be moved"),
            FailureReason::CannotHold(x) => write!(f, "{x} cannot hold objects"),
            FailureReason::SelfPlacement { item, dest } => write!(f, "{item} cannot be placed in {dest}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecConfig {
    /// Require the appliance to be turned on for cook actions.
    pub cook_requires_on: bool,
}

/// Visible ids: discovered entities plus always-visible furniture and rooms.
pub fn is_visible(scene: &SceneGraph, discovered: &BTreeSet<String>, id: &str) -> bool {
    match scene.get(id) {
        Some(e) => !e.is_movable() || discovered.contains(id),
        None => false,
    }
}

fn holder<'a>(scene: &'a SceneGraph, id: &str) -> Option<&'a Entity> {
    scene.get(id).and_then(|e| e.location.as_deref()).and_then(|l| scene.get(l))
}

/// Appliance that `id` sits on or is inside, counting one intermediate container.
fn appliance_below(scene: &SceneGraph, id: &str) -> Option<String> {
    let h = holder(scene, id)?;
    if h.has(flag::COOKING_APPLIANCE) {
        return Some(h.id.clone());
    }
    let hh = holder(scene, &h.id)?;
    hh.has(flag::COOKING_APPLIANCE).then(|| hh.id.clone())
}

fn appliance_for(scene: &SceneGraph, id: &str) -> Option<String> {
    match scene.get(id) {
        Some(e) if e.has(flag::COOKING_APPLIANCE) => Some(id.to_string()),
        _ => holder(scene, id).filter(|h| h.has(flag::COOKING_APPLIANCE)).map(|h| h.id.clone()),
    }
}

fn surface_for(scene: &SceneGraph, id: &str) -> Option<String> {
    holder(scene, id).filter(|h| h.has(flag::CHOPPING_SURFACE)).map(|h| h.id.clone())
}

fn contains_token(scene: &SceneGraph, holder: &str, item: &str) -> bool {
    scene.get(holder).is_some_and(|h| h.contents.iter().any(|c| c == item))
}

fn verb_requirement(scene: &SceneGraph, verb: &str) -> Option<Requirement> {
    scene.verb(verb).and_then(|v| v.requires)
}

fn requirement_failure(scene: &SceneGraph, req: Option<Requirement>, y: &str) -> Option<FailureReason> {
    match req {
        Some(Requirement::CookingAppliance) if appliance_for(scene, y).is_none() => {
            Some(FailureReason::NotOnAppliance(y.to_string()))
        }
        Some(Requirement::ChoppingSurface) if surface_for(scene, y).is_none() => {
            Some(FailureReason::NotOnChoppingSurface(y.to_string()))
        }
        _ => None,
    }
}

pub fn check_preconditions(
    scene: &SceneGraph,
    discovered: &BTreeSet<String>,
    action: &ParsedAction,
) -> Result<(), FailureReason> {
    check_preconditions_with(scene, discovered, action, &ExecConfig::default())
}

/// Returns the first violated condition: existence, containment, appliance or surface, type.
pub fn check_preconditions_with(
    scene: &SceneGraph,
    discovered: &BTreeSet<String>,
    action: &ParsedAction,
    cfg: &ExecConfig,
) -> Result<(), FailureReason> {
    for r in action.referents() {
        if !is_visible(scene, discovered, r) {
            return Err(FailureReason::Missing(r.to_string()));
        }
    }
    let a0 = action.arg(0);
    let a1 = action.arg(1);
    let a2 = action.arg(2);
    let ent = |id: &str| scene.get(id).expect("existence checked");
    match action.kind {
        ActionKind::MoveFrom | ActionKind::Pour => {
            if !contains_token(scene, a1, a0) {
                return Err(FailureReason::NotContained { holder: a1.into(), item: a0.into() });
            }
            if !ent(a2).can_hold() {
                return Err(FailureReason::CannotHold(a2.into()));
            }
            if scene.contains(a0) && (a2 == a0 || scene.ancestors(a2).iter().any(|x| x == a0)) {
                return Err(FailureReason::SelfPlacement { item: a0.into(), dest: a2.into() });
            }
        }
        ActionKind::TurnOn | ActionKind::TurnOff => {
            if !ent(a0).has(flag::COOKING_APPLIANCE) {
                return Err(FailureReason::NotAppliance(a0.into()));
            }
        }
        ActionKind::Heat => {
            if appliance_below(scene, a0).is_none() {
                return Err(FailureReason::NotOnAppliance(a0.into()));
            }
            let e = ent(a0);
            if !(e.has(flag::CONTAINER) || e.has(flag::VESSEL) || e.has(flag::EDIBLE)) {
                return Err(FailureReason::NotHeatable(a0.into()));
            }
        }
        ActionKind::Move => {
            if !ent(a0).is_movable() {
                return Err(FailureReason::NotMovable(a0.into()));
            }
            if !ent(a1).can_hold() {
                return Err(FailureReason::CannotHold(a1.into()));
            }
            if a1 == a0 || scene.ancestors(a1).iter().any(|x| x == a0) {
                return Err(FailureReason::SelfPlacement { item: a0.into(), dest: a1.into() });
            }
        }
        ActionKind::Mix => {
            if !ent(a0).is_container() {
                return Err(FailureReason::NotContainer(a0.into()));
            }
        }
        ActionKind::Cook => {
            let Some(app) = appliance_for(scene, a0) else {
                return Err(FailureReason::NotOnAppliance(a0.into()));
            };
            if cfg.cook_requires_on && !ent(&app).state_tags.contains("on") {
                return Err(FailureReason::ApplianceOff(app));
            }
        }
        ActionKind::Chop => {
            if surface_for(scene, a0).is_none() {
                return Err(FailureReason::NotOnChoppingSurface(a0.into()));
            }
        }
        ActionKind::FreeformContainer => {
            let e = ent(a1);
            if e.contents.is_empty() || !e.contents.iter().all(|c| scene.is_edible_token(c)) {
                return Err(FailureReason::NoEdibleContents(a1.into()));
            }
            if let Some(f) = requirement_failure(scene, verb_requirement(scene, a0), a1) {
                return Err(f);
            }
            if !e.is_container() {
                return Err(FailureReason::NotContainer(a1.into()));
            }
        }
        ActionKind::FreeformObject => {
            if let Some(f) = requirement_failure(scene, verb_requirement(scene, a0), a1) {
                return Err(f);
            }
            let e = ent(a1);
            if !e.has(flag::EDIBLE) || !e.is_movable() {
                return Err(FailureReason::NotEdible(a1.into()));
            }
        }
        _ => {}
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Discovery,
    Change,
    Failure,
    UserReply,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discovery {
    pub id: String,
    pub description: String,
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub kind: ObservationKind,
    pub text: String,
    #[serde(default)]
    pub discovered: Vec<Discovery>,
}

impl Observation {
    pub fn empty() -> Self {
        Observation { kind: ObservationKind::Empty, text: String::new(), discovered: vec![] }
    }
    pub fn failure(reason: &FailureReason) -> Self {
        Observation { kind: ObservationKind::Failure, text: format!("Action failed: {reason}"), discovered: vec![] }
    }
    pub fn is_failure(&self) -> bool {
        self.kind == ObservationKind::Failure
    }
}

/// State-level facts emitted by a successful action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    Used { entity: String, verb: String },
    Added { holder: String, token: String },
    Produced { holder: String, token: String, consumed: Vec<String> },
    Placed { entity: String, dest: String },
    Discovered { ids: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub observation: Observation,
    pub effects: Vec<Effect>,
    pub terminal: bool,
}

fn found_text(found: &[Discovery]) -> String {
    let parts: Vec<String> =
        found.iter().map(|d| format!("{} ({}) in/on {}", d.id, d.description, d.location)).collect();
    format!("Found {}", parts.join(", "))
}

fn discovery(scene: &SceneGraph, id: &str) -> Discovery {
    Discovery {
        id: id.to_string(),
        description: scene.describe(id),
        location: scene.get(id).and_then(|e| e.location.clone()).unwrap_or_default(),
    }
}

pub fn singular(word: &str) -> String {
    let w = word.to_ascii_lowercase();
    if let Some(s) = w.strip_suffix("ies") {
        if s.len() > 1 {
            return format!("{s}y");
        }
    }
    for suf in ["ches", "shes", "sses", "xes", "oes"] {
        if w.ends_with(suf) {
            return w[..w.len() - 2].to_string();
        }
    }
    if w.ends_with('s') && !w.ends_with("ss") && w.len() > 2 {
        return w[..w.len() - 1].to_string();
    }
    w
}

/// Category match: a word of the id stem or the description equals the category, up to plurals.
pub fn matches_category(e: &Entity, category: &str) -> bool {
    let target = singular(category);
    let stem = crate::world::id_stem(&e.id).to_ascii_lowercase();
    if stem == category.to_ascii_lowercase() || singular(&stem) == target {
        return true;
    }
    let desc = e.description.to_ascii_lowercase();
    stem.split('_')
        .chain(desc.split(|c: char| !c.is_ascii_alphanumeric()))
        .filter(|w| !w.is_empty())
        .any(|w| singular(w) == target)
}

fn spawn_result(scene: &SceneGraph, source: &Entity, result: &str) -> Entity {
    let id = scene.allocate_id(result);
    let mut flags = source.flags.clone();
    flags.remove(flag::MANDATORY);
    Entity {
        id,
        description: result.replace('_', " "),
        state_tags: BTreeSet::new(),
        contents: scene.substances(&source.id),
        flags,
        location: source.location.clone(),
    }
}

pub fn execute(
    scene: &mut SceneGraph,
    discovered: &mut BTreeSet<String>,
    action: &ParsedAction,
) -> Result<Outcome, WorldError> {
    execute_with(scene, discovered, action, &ExecConfig::default())
}

/// Runs one action. Precondition failures become failure observations and leave the scene
/// untouched; only internal invariant breaches surface as errors.
pub fn execute_with(
    scene: &mut SceneGraph,
    discovered: &mut BTreeSet<String>,
    action: &ParsedAction,
    cfg: &ExecConfig,
) -> Result<Outcome, WorldError> {
    if let Err(reason) = check_preconditions_with(scene, discovered, action, cfg) {
        return Ok(Outcome { observation: Observation::failure(&reason), effects: vec![], terminal: false });
    }
    let a0 = action.arg(0).to_string();
    let a1 = action.arg(1).to_string();
    let a2 = action.arg(2).to_string();
    let result = action.result().to_string();
    let verb = action.kind.as_str().to_string();
    let mut effects = Vec::new();
    let change = |text: String| Observation { kind: ObservationKind::Change, text, discovered: vec![] };
    let used = |e: &str, v: &str| Effect::Used { entity: e.to_string(), verb: v.to_string() };
    let observation = match action.kind {
        ActionKind::Done => {
            return Ok(Outcome { observation: Observation::empty(), effects, terminal: true });
        }
        ActionKind::Ask => Observation { kind: ObservationKind::UserReply, text: String::new(), discovered: vec![] },
        ActionKind::Open | ActionKind::Close | ActionKind::TurnOn | ActionKind::TurnOff | ActionKind::Heat => {
            let (tag, on) = match action.kind {
                ActionKind::Open => ("open", true),
                ActionKind::Close => ("open", false),
                ActionKind::TurnOn => ("on", true),
                ActionKind::TurnOff => ("on", false),
                _ => ("hot", true),
            };
            let text = scene.apply_mutation(&Mutation::SetState { id: a0.clone(), tag: tag.into(), on })?;
            effects.push(used(&a0, &verb));
            if action.kind == ActionKind::Heat {
                if let Some(app) = appliance_below(scene, &a0) {
                    effects.push(used(&app, &verb));
                }
            }
            let text = match (action.kind, on) {
                (ActionKind::Close, _) => format!("{a0} is now closed"),
                (ActionKind::TurnOff, _) => format!("{a0} is now off"),
                _ => text,
            };
            change(text)
        }
        ActionKind::Search => {
            let mut ids = Vec::new();
            scene.walk_from(&a0, &mut ids);
            ids.remove(0);
            let found: Vec<Discovery> = ids.iter().map(|i| discovery(scene, i)).collect();
            effects.push(used(&a0, &verb));
            let text = if !found.is_empty() {
                found_text(&found)
            } else {
                let subs = scene.substances(&a0);
                if subs.is_empty() {
                    format!("Found nothing in/on {a0}")
                } else {
                    format!("{a0} contains {}", subs.join(", "))
                }
            };
            Observation { kind: ObservationKind::Discovery, text, discovered: found }
        }
        ActionKind::LookFor => {
            let found: Vec<Discovery> = scene
                .walk()
                .into_iter()
                .filter(|id| {
                    let e = &scene.entities[id];
                    !e.is_room() && matches_category(e, &a0)
                })
                .map(|id| discovery(scene, &id))
                .collect();
            let text = if found.is_empty() { format!("Could not find any {a0}") } else { found_text(&found) };
            Observation { kind: ObservationKind::Discovery, text, discovered: found }
        }
        ActionKind::Move => {
            let text = scene.apply_mutation(&Mutation::Relocate { id: a0.clone(), dest: a1.clone() })?;
            effects.push(used(&a0, &verb));
            effects.push(Effect::Added { holder: a1.clone(), token: a0.clone() });
            effects.push(Effect::Placed { entity: a0.clone(), dest: a1.clone() });
            change(text)
        }
        ActionKind::MoveFrom | ActionKind::Pour => {
            effects.push(used(&a1, &verb));
            let text = if scene.contains(&a0) {
                effects.push(used(&a0, &verb));
                effects.push(Effect::Placed { entity: a0.clone(), dest: a2.clone() });
                scene.apply_mutation(&Mutation::Relocate { id: a0.clone(), dest: a2.clone() })?
            } else {
                scene.apply_mutation(&Mutation::TransferContent {
                    substance: a0.clone(),
                    from: a1.clone(),
                    to: a2.clone(),
                })?
            };
            effects.push(Effect::Added { holder: a2.clone(), token: a0.clone() });
            change(text)
        }
        ActionKind::Mix | ActionKind::Cook => {
            let consumed = scene.get(&a0).map(|e| e.contents.clone()).unwrap_or_default();
            let text = scene.apply_mutation(&Mutation::RenameResult { id: a0.clone(), new_contents: vec![result.clone()] })?;
            effects.push(used(&a0, &verb));
            if action.kind == ActionKind::Cook {
                if let Some(app) = appliance_for(scene, &a0).filter(|a| a != &a0) {
                    effects.push(used(&app, &verb));
                }
            }
            effects.push(Effect::Produced { holder: a0.clone(), token: result.clone(), consumed });
            change(text)
        }
        ActionKind::FreeformContainer => {
            let consumed = scene.get(&a1).map(|e| e.contents.clone()).unwrap_or_default();
            let text = scene.apply_mutation(&Mutation::RenameResult { id: a1.clone(), new_contents: vec![result.clone()] })?;
            effects.push(used(&a1, &a0));
            if let Some(app) = appliance_for(scene, &a1).filter(|a| a != &a1) {
                effects.push(used(&app, &a0));
            }
            effects.push(Effect::Produced { holder: a1.clone(), token: result.clone(), consumed });
            change(text)
        }
        ActionKind::Chop | ActionKind::FreeformObject => {
            let (src, v) = if action.kind == ActionKind::Chop { (a0.clone(), verb.clone()) } else { (a1.clone(), a0.clone()) };
            let source = scene.get(&src).cloned().ok_or_else(|| WorldError::UnknownId(src.clone()))?;
            if let Some(s) = surface_for(scene, &src) {
                effects.push(used(&s, &v));
            }
            let spawned = spawn_result(scene, &source, &result);
            let mut consumed = vec![src.clone()];
            consumed.extend(scene.substances(&src));
            scene.apply_mutation(&Mutation::Remove { id: src.clone() })?;
            scene.apply_mutation(&Mutation::Spawn { entity: spawned.clone() })?;
            discovered.remove(&src);
            effects.push(used(&src, &v));
            effects.push(Effect::Produced { holder: spawned.id.clone(), token: result.clone(), consumed });
            let d = discovery(scene, &spawned.id);
            let text = format!("{} ({}) is now in/on {}", d.id, d.description, d.location);
            Observation { kind: ObservationKind::Change, text, discovered: vec![d] }
        }
    };
    let new_ids: Vec<String> = observation.discovered.iter().map(|d| d.id.clone()).collect();
    if !new_ids.is_empty() {
        discovered.extend(new_ids.iter().cloned());
        effects.push(Effect::Discovered { ids: new_ids });
    }
    Ok(Outcome { observation, effects, terminal: false })
}
