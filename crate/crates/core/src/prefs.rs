//! Preference rules, trajectory ledger, rule evaluation and the temporal satisfaction curve.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::actions::{singular, Effect, ParsedAction, Observation};
use crate::error::PrefsError;
use crate::world::{id_stem, SceneGraph};

pub const PERSONA_COUNT: usize = 16;

const DEFAULT_TASKS: &str = include_str!("../data/tasks.json");
const DEFAULT_PERSONAS: [&str; PERSONA_COUNT] = [
    include_str!("../data/personas/persona_01.json"),
    include_str!("../data/personas/persona_02.json"),
    include_str!("../data/personas/persona_03.json"),
    include_str!("../data/personas/persona_04.json"),
    include_str!("../data/personas/persona_05.json"),
    include_str!("../data/personas/persona_06.json"),
    include_str!("../data/personas/persona_07.json"),
    include_str!("../data/personas/persona_08.json"),
    include_str!("../data/personas/persona_09.json"),
    include_str!("../data/personas/persona_10.json"),
    include_str!("../data/personas/persona_11.json"),
    include_str!("../data/personas/persona_12.json"),
    include_str!("../data/personas/persona_13.json"),
    include_str!("../data/personas/persona_14.json"),
    include_str!("../data/personas/persona_15.json"),
    include_str!("../data/personas/persona_16.json"),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub key: String,
    pub keywords: Vec<String>,
    pub groups: Vec<String>,
    pub requires_produced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub subtasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPack {
    pub schema_version: u32,
    pub serving_surfaces: Vec<String>,
    pub subtasks: Vec<SubtaskSpec>,
    pub tasks: Vec<TaskSpec>,
}

impl TaskPack {
    pub fn from_json(text: &str) -> Result<Self, PrefsError> {
        let p: TaskPack = serde_json::from_str(text)?;
        for t in &p.tasks {
            for s in &t.subtasks {
                if !p.subtasks.iter().any(|x| &x.key == s) {
                    return Err(PrefsError::InvalidPack(format!("task {} names unknown subtask {s}", t.name)));
                }
            }
        }
        Ok(p)
    }

    pub fn task(&self, name: &str) -> Result<&TaskSpec, PrefsError> {
        self.tasks.iter().find(|t| t.name == name).ok_or_else(|| PrefsError::UnknownTask(name.to_string()))
    }

    pub fn task_names(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.name.clone()).collect()
    }

    pub fn subtask(&self, key: &str) -> Option<&SubtaskSpec> {
        self.subtasks.iter().find(|s| s.key == key)
    }

    /// Subtasks of `task` whose key or groups include `key`.
    pub fn resolve(&self, task: &str, key: &str) -> Vec<&SubtaskSpec> {
        let Ok(t) = self.task(task) else { return vec![] };
        t.subtasks
            .iter()
            .filter_map(|s| self.subtask(s))
            .filter(|s| s.key == key || s.groups.iter().any(|g| g == key))
            .collect()
    }
}

pub fn default_tasks() -> &'static TaskPack {
    static T: OnceLock<TaskPack> = OnceLock::new();
    T.get_or_init(|| TaskPack::from_json(DEFAULT_TASKS).expect("shipped task pack is valid"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Variant,
    AddOn,
    Exclusion,
    TemporalOrder,
    ObjectUsage,
    ServingLocation,
    PrepAlternative,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Applicability {
    #[serde(default)]
    pub tasks: Vec<String>,
    /// Each entry must be present in the scene; "a|b" lists alternatives.
    #[serde(default)]
    pub requires: Vec<String>,
    #[serde(default)]
    pub absent: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderSide {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtasks: Option<Vec<String>>,
}

/// Rule checks. Keywords match normalized term segments as contiguous word sequences with
/// plural tolerance; a leading "=" demands the whole segment equal the keyword.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Check {
    Variant { preferred: Vec<String>, dispreferred: Vec<String> },
    Add {
        any_of: Vec<String>,
        #[serde(default = "one")]
        min_count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        and_any_of: Option<Vec<String>>,
    },
    Exclude { forbidden: Vec<String> },
    Order { before: OrderSide, after: OrderSide },
    Tool { chain: Vec<Vec<String>> },
    Location { surfaces: Vec<String> },
    PrepAlt {
        any_of: Vec<String>,
        #[serde(default)]
        none_of: Vec<String>,
    },
    Conditional { requires: Vec<String>, then: Box<Check>, otherwise: Box<Check> },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub id: String,
    pub description: String,
    pub category: Category,
    pub subtask_key: String,
    #[serde(default)]
    pub applicability: Applicability,
    pub check: Check,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRule {
    pub id: String,
    pub persona_id: String,
    pub description: String,
    pub category: Category,
    pub applicability: Applicability,
    pub check: Check,
    pub subtask_key: String,
    pub approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaPack {
    pub schema_version: u32,
    pub persona_id: String,
    pub display_name: String,
    pub preferences: Vec<RuleSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaSpec {
    pub id: String,
    pub display_name: String,
    pub preferences: Vec<PreferenceRule>,
}

impl PersonaSpec {
    pub fn from_json(text: &str) -> Result<Self, PrefsError> {
        let pack: PersonaPack = serde_json::from_str(text)?;
        if pack.schema_version != 1 {
            return Err(PrefsError::InvalidPack(format!("unsupported schema_version {}", pack.schema_version)));
        }
        let mut ids = BTreeSet::new();
        let mut preferences = Vec::new();
        for r in pack.preferences {
            if r.subtask_key.trim().is_empty() {
                return Err(PrefsError::InvalidPack(format!("rule {} has an empty subtask_key", r.id)));
            }
            if r.description.trim().is_empty() {
                return Err(PrefsError::InvalidPack(format!("rule {} has an empty description", r.id)));
            }
            if !ids.insert(r.id.clone()) {
                return Err(PrefsError::InvalidPack(format!("duplicate rule id {}", r.id)));
            }
            preferences.push(PreferenceRule {
                id: r.id,
                persona_id: pack.persona_id.clone(),
                description: r.description,
                category: r.category,
                applicability: r.applicability,
                check: r.check,
                subtask_key: r.subtask_key,
                approximate: r.approximate,
            });
        }
        Ok(PersonaSpec { id: pack.persona_id, display_name: pack.display_name, preferences })
    }

    pub fn descriptions(&self) -> Vec<&str> {
        self.preferences.iter().map(|r| r.description.as_str()).collect()
    }
}

pub fn default_personas() -> &'static [PersonaSpec] {
    static P: OnceLock<Vec<PersonaSpec>> = OnceLock::new();
    P.get_or_init(|| {
        DEFAULT_PERSONAS.iter().map(|t| PersonaSpec::from_json(t).expect("shipped persona pack is valid")).collect()
    })
}

pub fn default_persona(id: &str) -> Option<&'static PersonaSpec> {
    default_personas().iter().find(|p| p.id == id)
}

/// Lowercased words with plurals folded.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).map(singular).collect()
}

/// Matches a keyword against one normalized segment.
pub fn keyword_matches(segment: &[String], keyword: &str) -> bool {
    if let Some(exact) = keyword.strip_prefix('=') {
        return words(exact) == segment;
    }
    let kw = words(keyword);
    !kw.is_empty() && segment.windows(kw.len()).any(|w| w == kw.as_slice())
}

fn any_keyword(segments: &[Vec<String>], keywords: &[String]) -> bool {
    keywords.iter().any(|k| segments.iter().any(|s| keyword_matches(s, k)))
}

/// Last-known facts about an entity referenced during the episode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityInfo {
    pub description: String,
    pub substances: Vec<String>,
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductionEvent {
    pub step: usize,
    pub holder: String,
    pub token: String,
    pub consumed: Vec<String>,
}

/// One step as seen by the ledger.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<'a> {
    pub index: usize,
    pub action: &'a ParsedAction,
    pub observation: &'a Observation,
    pub effects: &'a [Effect],
    pub reply: Option<&'a str>,
    pub scene_after: &'a SceneGraph,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryLedger {
    pub usage_events: Vec<(usize, String, String)>,
    pub additions: BTreeMap<String, Vec<(String, usize)>>,
    pub final_placements: BTreeMap<String, String>,
    pub question_log: Vec<(usize, String, String)>,
    pub produced: BTreeSet<String>,
    pub productions: Vec<ProductionEvent>,
    pub placements: Vec<(usize, String, String)>,
    pub entities: BTreeMap<String, EntityInfo>,
    pub last_index: Option<usize>,
}

impl TrajectoryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the step's events. Failed actions leave the ledger unchanged.
    pub fn record_step(&mut self, rec: StepRecord<'_>) -> Result<(), PrefsError> {
        if let Some(last) = self.last_index {
            if rec.index <= last {
                return Err(PrefsError::OutOfOrder { got: rec.index, last });
            }
        }
        if rec.observation.is_failure() {
            return Ok(());
        }
        self.last_index = Some(rec.index);
        let k = rec.index;
        let scene = rec.scene_after;
        if let Some(q) = rec.action.question() {
            self.question_log.push((k, q.to_string(), rec.reply.unwrap_or_default().to_string()));
        }
        let mut touched: Vec<&str> = Vec::new();
        for e in rec.effects {
            match e {
                Effect::Used { entity, verb } => {
                    self.usage_events.push((k, entity.clone(), verb.clone()));
                    touched.push(entity);
                }
                Effect::Added { holder, token } => {
                    self.additions.entry(holder.clone()).or_default().push((token.clone(), k));
                    touched.push(holder);
                    touched.push(token);
                }
                Effect::Produced { holder, token, consumed } => {
                    self.produced.insert(token.clone());
                    self.productions.push(ProductionEvent {
                        step: k,
                        holder: holder.clone(),
                        token: token.clone(),
                        consumed: consumed.clone(),
                    });
                    touched.push(holder);
                    touched.extend(consumed.iter().map(String::as_str));
                }
                Effect::Placed { entity, dest } => {
                    self.placements.push((k, entity.clone(), dest.clone()));
                    touched.push(entity);
                }
                Effect::Discovered { .. } => {}
            }
        }
        for id in touched {
            if let Some(ent) = scene.get(id) {
                self.entities.insert(
                    id.to_string(),
                    EntityInfo {
                        description: ent.description.clone(),
                        substances: scene.substances(id),
                        tags: ent.state_tags.clone(),
                    },
                );
            }
        }
        self.final_placements = scene
            .entities
            .values()
            .filter(|e| e.is_movable())
            .filter_map(|e| e.location.clone().map(|l| (e.id.clone(), l)))
            .collect();
        Ok(())
    }

    /// Term segments of a token: id stem, description and contents for entities, the token
    /// itself for substances.
    pub fn terms(&self, token: &str, scene: &SceneGraph) -> Vec<Vec<String>> {
        if let Some(e) = scene.get(token) {
            let mut v = vec![words(id_stem(token)), words(&e.description)];
            v.extend(scene.substances(token).iter().map(|s| words(s)));
            return v;
        }
        if let Some(info) = self.entities.get(token) {
            let mut v = vec![words(id_stem(token)), words(&info.description)];
            v.extend(info.substances.iter().map(|s| words(s)));
            return v;
        }
        vec![words(token)]
    }

    fn last_production_of(&self, token: &str, upto: usize) -> Option<&ProductionEvent> {
        self.productions.iter().rev().find(|p| p.token == token && p.step <= upto)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct DishEvent {
    token: String,
    step: usize,
}

/// Ingredient lineage of a dish holder: direct additions, then everything consumed by the
/// productions that made its contents or the holder itself, recursively.
fn dish_events(ledger: &TrajectoryLedger, holder: &str, holders: &mut BTreeSet<String>) -> Vec<DishEvent> {
    let mut out = Vec::new();
    let mut stack: Vec<(String, usize)> = Vec::new();
    let mut seen: BTreeSet<(String, usize)> = BTreeSet::new();
    holders.insert(holder.to_string());
    for (tok, step) in ledger.additions.get(holder).into_iter().flatten() {
        out.push(DishEvent { token: tok.clone(), step: *step });
        stack.push((tok.clone(), *step));
    }
    for p in ledger.productions.iter().filter(|p| p.holder == holder) {
        out.push(DishEvent { token: p.token.clone(), step: p.step });
        stack.push((p.token.clone(), p.step));
    }
    while let Some((tok, step)) = stack.pop() {
        if !seen.insert((tok.clone(), step)) {
            continue;
        }
        let Some(p) = ledger.last_production_of(&tok, step) else { continue };
        holders.insert(p.holder.clone());
        for c in &p.consumed {
            let added = ledger
                .additions
                .get(&p.holder)
                .and_then(|v| v.iter().rev().find(|(t, s)| t == c && *s <= p.step).map(|(_, s)| *s));
            let s = added.unwrap_or(p.step);
            out.push(DishEvent { token: c.clone(), step: s });
            stack.push((c.clone(), s));
            if ledger.additions.contains_key(c) {
                holders.insert(c.clone());
                for (t2, s2) in &ledger.additions[c] {
                    if *s2 <= p.step {
                        out.push(DishEvent { token: t2.clone(), step: *s2 });
                        stack.push((t2.clone(), *s2));
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.step.cmp(&b.step).then_with(|| a.token.cmp(&b.token)));
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskStatus {
    pub key: String,
    pub holder: Option<String>,
    pub surface: Option<String>,
    pub serve_step: Option<usize>,
}

fn serving_surface(scene: &SceneGraph, id: &str, surfaces: &[String]) -> Option<String> {
    if surfaces.iter().any(|s| s == id) {
        return None;
    }
    scene.ancestors(id).into_iter().find(|a| surfaces.contains(a))
}

fn token_matches(ledger: &TrajectoryLedger, scene: &SceneGraph, token: &str, keywords: &[String]) -> bool {
    any_keyword(&ledger.terms(token, scene), keywords)
}

/// Locates the served dish for a subtask, if any.
pub fn resolve_subtask(
    ledger: &TrajectoryLedger,
    scene: &SceneGraph,
    sub: &SubtaskSpec,
    surfaces: &[String],
) -> SubtaskStatus {
    let mut best: Option<(usize, std::cmp::Reverse<usize>, String, String)> = None;
    for e in scene.entities.values().filter(|e| e.is_movable()) {
        let Some(surface) = serving_surface(scene, &e.id, surfaces) else { continue };
        let produced_here = ledger
            .productions
            .iter()
            .any(|p| p.holder == e.id && any_keyword(&[words(&p.token)], &sub.keywords));
        let content_ok = e.contents.iter().any(|c| {
            token_matches(ledger, scene, c, &sub.keywords)
                && (ledger.produced.contains(c)
                    || (!sub.requires_produced && ledger.additions.get(&e.id).is_some_and(|v| v.iter().any(|(t, _)| t == c))))
        });
        if !(produced_here || content_ok) {
            continue;
        }
        let mut hs = BTreeSet::new();
        let events = dish_events(ledger, &e.id, &mut hs);
        let relevant = events.iter().filter(|ev| token_matches(ledger, scene, &ev.token, &sub.keywords)).count();
        let first = events.first().map(|ev| ev.step).unwrap_or(usize::MAX);
        let key = (relevant, std::cmp::Reverse(first), e.id.clone(), surface);
        let better = match &best {
            None => true,
            Some(b) => (key.0, key.1) > (b.0, b.1) || ((key.0, key.1) == (b.0, b.1) && key.2 < b.2),
        };
        if better {
            best = Some(key);
        }
    }
    match best {
        None => SubtaskStatus { key: sub.key.clone(), holder: None, surface: None, serve_step: None },
        Some((_, _, holder, surface)) => {
            let step = serve_step(ledger, scene, &holder);
            SubtaskStatus { key: sub.key.clone(), holder: Some(holder), surface: Some(surface), serve_step: Some(step) }
        }
    }
}

fn serve_step(ledger: &TrajectoryLedger, scene: &SceneGraph, holder: &str) -> usize {
    let mut chain: BTreeSet<String> = scene.ancestors(holder).into_iter().collect();
    chain.insert(holder.to_string());
    let placed = ledger.placements.iter().filter(|(_, e, _)| chain.contains(e)).map(|(s, _, _)| *s).max();
    let added = ledger.additions.get(holder).and_then(|v| v.iter().map(|(_, s)| *s).max());
    let made = ledger.productions.iter().filter(|p| p.holder == holder).map(|p| p.step).max();
    placed.into_iter().chain(added).chain(made).max().unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleOutcome {
    Satisfied,
    Violated,
    Inapplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub satisfied: BTreeSet<String>,
    pub violated: BTreeSet<String>,
    pub inapplicable: BTreeSet<String>,
    pub rate: f64,
    pub subtask_completion: BTreeMap<String, bool>,
    pub outcomes: BTreeMap<String, RuleOutcome>,
}

/// p₊/(p₊+p₋), zero when nothing was decided.
pub fn satisfaction_rate(p_plus: usize, p_minus: usize) -> f64 {
    if p_plus + p_minus == 0 {
        0.0
    } else {
        p_plus as f64 / (p_plus + p_minus) as f64
    }
}

/// Presence of an entity matching `entry` ("a|b" alternatives) in the scene or the ledger.
fn present(ledger: &TrajectoryLedger, scene: &SceneGraph, entry: &str) -> bool {
    let alts: Vec<String> = entry.split('|').map(|s| s.trim().to_string()).collect();
    scene.entities.values().filter(|e| !e.is_room()).any(|e| token_matches(ledger, scene, &e.id, &alts))
        || ledger.entities.keys().any(|id| token_matches(ledger, scene, id, &alts))
}

pub fn is_applicable(rule: &PreferenceRule, task: &str, scene: &SceneGraph) -> bool {
    is_applicable_with(rule, task, scene, &TrajectoryLedger::default())
}

fn is_applicable_with(rule: &PreferenceRule, task: &str, scene: &SceneGraph, ledger: &TrajectoryLedger) -> bool {
    let a = &rule.applicability;
    (a.tasks.is_empty() || a.tasks.iter().any(|t| t == task))
        && a.requires.iter().all(|r| present(ledger, scene, r))
        && !a.absent.iter().any(|r| present(ledger, scene, r))
}

struct EvalCtx<'a> {
    ledger: &'a TrajectoryLedger,
    scene: &'a SceneGraph,
    task: &'a str,
    pack: &'a TaskPack,
    statuses: BTreeMap<String, SubtaskStatus>,
}

impl EvalCtx<'_> {
    fn status(&self, key: &str) -> Vec<&SubtaskStatus> {
        self.pack.resolve(self.task, key).into_iter().filter_map(|s| self.statuses.get(&s.key)).collect()
    }

    fn dish(&self, key: &str) -> (Vec<DishEvent>, BTreeSet<String>) {
        let mut events = Vec::new();
        let mut holders = BTreeSet::new();
        for st in self.status(key) {
            if let Some(h) = &st.holder {
                events.extend(dish_events(self.ledger, h, &mut holders));
            }
        }
        events.sort_by(|a, b| a.step.cmp(&b.step).then_with(|| a.token.cmp(&b.token)));
        (events, holders)
    }

    fn segments(&self, events: &[DishEvent], holders: &BTreeSet<String>) -> Vec<Vec<String>> {
        let mut segs: Vec<Vec<String>> = Vec::new();
        for ev in events {
            segs.extend(self.ledger.terms(&ev.token, self.scene));
        }
        for h in holders {
            segs.extend(self.scene.substances(h).iter().map(|s| words(s)));
        }
        segs
    }

    fn matches(&self, token: &str, kws: &[String]) -> bool {
        token_matches(self.ledger, self.scene, token, kws)
    }

    fn run(&self, check: &Check, key: &str) -> RuleOutcome {
        use RuleOutcome::*;
        let verdict = |b: bool| if b { Satisfied } else { Violated };
        match check {
            Check::Variant { preferred, dispreferred } => {
                let (ev, hs) = self.dish(key);
                let segs = self.segments(&ev, &hs);
                verdict(any_keyword(&segs, preferred) && !any_keyword(&segs, dispreferred))
            }
            Check::Add { any_of, min_count, and_any_of } => {
                let (ev, hs) = self.dish(key);
                let segs = self.segments(&ev, &hs);
                let n = any_of.iter().filter(|k| segs.iter().any(|s| keyword_matches(s, k))).count();
                let extra = and_any_of.as_ref().is_none_or(|g| any_keyword(&segs, g));
                verdict(n >= *min_count && extra)
            }
            Check::Exclude { forbidden } => {
                let (ev, hs) = self.dish(key);
                verdict(!any_keyword(&self.segments(&ev, &hs), forbidden))
            }
            Check::Order { before, after } => {
                if let (Some(b), Some(a)) = (&before.tokens, &after.tokens) {
                    let (ev, _) = self.dish(key);
                    let first = |kws: &[String]| ev.iter().find(|e| self.matches(&e.token, kws)).map(|e| e.step);
                    return match (first(b), first(a)) {
                        (None, _) => Violated,
                        (Some(_), None) => Satisfied,
                        (Some(x), Some(y)) => verdict(x < y),
                    };
                }
                let side = |s: &OrderSide| -> Vec<usize> {
                    let mut keys = BTreeSet::new();
                    for k in s.subtasks.iter().flatten() {
                        for sub in self.pack.resolve(self.task, k) {
                            keys.insert(sub.key.clone());
                        }
                    }
                    keys.iter().filter_map(|k| self.statuses.get(k)).filter_map(|st| st.serve_step).collect()
                };
                let resolved = |s: &OrderSide| s.subtasks.iter().flatten().any(|k| !self.pack.resolve(self.task, k).is_empty());
                if !resolved(before) || !resolved(after) {
                    return Inapplicable;
                }
                let (b, a) = (side(before), side(after));
                match (b.iter().max(), a.iter().min()) {
                    (Some(x), Some(y)) => verdict(x < y),
                    _ => Violated,
                }
            }
            Check::Tool { chain } => {
                let avail = |group: &[String]| {
                    self.scene.entities.values().any(|e| e.is_movable() || e.is_furniture())
                        && (self.scene.entities.values().any(|e| !e.is_room() && self.matches(&e.id, group))
                            || self.ledger.entities.keys().any(|id| self.matches(id, group)))
                };
                let Some(group) = chain.iter().find(|g| avail(g)) else { return Inapplicable };
                verdict(self.ledger.usage_events.iter().any(|(_, id, _)| self.matches(id, group)))
            }
            Check::Location { surfaces } => {
                let st = self.status(key);
                verdict(!st.is_empty() && st.iter().all(|s| s.surface.as_ref().is_some_and(|x| surfaces.contains(x))))
            }
            Check::PrepAlt { any_of, none_of } => {
                let (ev, hs) = self.dish(key);
                let mut segs = self.segments(&ev, &hs);
                for h in &hs {
                    let tags = self
                        .scene
                        .get(h)
                        .map(|e| e.state_tags.clone())
                        .or_else(|| self.ledger.entities.get(h).map(|i| i.tags.clone()))
                        .unwrap_or_default();
                    segs.extend(tags.iter().map(|t| words(t)));
                }
                verdict(any_keyword(&segs, any_of) && !any_keyword(&segs, none_of))
            }
            Check::Conditional { requires, then, otherwise } => {
                if requires.iter().all(|r| present(self.ledger, self.scene, r)) {
                    self.run(then, key)
                } else {
                    self.run(otherwise, key)
                }
            }
        }
    }
}

/// Scores every rule: inapplicable when its predicates fail, violated when a subtask it
/// attaches to was not completed, otherwise the check's verdict.
pub fn evaluate(
    rules: &[PreferenceRule],
    ledger: &TrajectoryLedger,
    task: &str,
    scene: &SceneGraph,
    pack: &TaskPack,
) -> EvalReport {
    let mut statuses = BTreeMap::new();
    if let Ok(t) = pack.task(task) {
        for key in &t.subtasks {
            if let Some(sub) = pack.subtask(key) {
                statuses.insert(key.clone(), resolve_subtask(ledger, scene, sub, &pack.serving_surfaces));
            }
        }
    }
    let ctx = EvalCtx { ledger, scene, task, pack, statuses };
    let mut report = EvalReport {
        satisfied: BTreeSet::new(),
        violated: BTreeSet::new(),
        inapplicable: BTreeSet::new(),
        rate: 0.0,
        subtask_completion: ctx.statuses.iter().map(|(k, s)| (k.clone(), s.holder.is_some())).collect(),
        outcomes: BTreeMap::new(),
    };
    for rule in rules {
        let resolved = ctx.status(&rule.subtask_key);
        let outcome = if !is_applicable_with(rule, task, scene, ledger) || resolved.is_empty() {
            RuleOutcome::Inapplicable
        } else if resolved.iter().any(|s| s.holder.is_none()) {
            RuleOutcome::Violated
        } else {
            ctx.run(&rule.check, &rule.subtask_key)
        };
        if !resolved.is_empty() {
            report.subtask_completion.insert(rule.subtask_key.clone(), resolved.iter().all(|s| s.holder.is_some()));
        }
        match outcome {
            RuleOutcome::Satisfied => report.satisfied.insert(rule.id.clone()),
            RuleOutcome::Violated => report.violated.insert(rule.id.clone()),
            RuleOutcome::Inapplicable => report.inapplicable.insert(rule.id.clone()),
        };
        report.outcomes.insert(rule.id.clone(), outcome);
    }
    report.rate = satisfaction_rate(report.satisfied.len(), report.violated.len());
    report
}

/// Step records with owned data, as replayed from a trajectory.
#[derive(Debug, Clone)]
pub struct OwnedStep {
    pub index: usize,
    pub action: ParsedAction,
    pub observation: Observation,
    pub effects: Vec<Effect>,
    pub reply: Option<String>,
    pub scene_after: SceneGraph,
}

impl OwnedStep {
    pub fn as_record(&self) -> StepRecord<'_> {
        StepRecord {
            index: self.index,
            action: &self.action,
            observation: &self.observation,
            effects: &self.effects,
            reply: self.reply.as_deref(),
            scene_after: &self.scene_after,
        }
    }
}

/// Fraction of the finally satisfied rules already satisfied after each step, keyed by
/// completion fraction k/n.
pub fn temporal_curve(
    steps: &[OwnedStep],
    rules: &[PreferenceRule],
    task: &str,
    initial: &SceneGraph,
    pack: &TaskPack,
) -> Result<Vec<(f64, f64)>, PrefsError> {
    if steps.is_empty() {
        return Ok(vec![(1.0, 1.0)]);
    }
    let mut full = TrajectoryLedger::new();
    for s in steps {
        full.record_step(s.as_record())?;
    }
    let last_scene = &steps.last().expect("non-empty").scene_after;
    let final_report = evaluate(rules, &full, task, last_scene, pack);
    let finals: Vec<PreferenceRule> =
        rules.iter().filter(|r| final_report.satisfied.contains(&r.id)).cloned().collect();
    let n = steps.len();
    let mut ledger = TrajectoryLedger::new();
    let mut out = Vec::with_capacity(n);
    let _ = initial;
    for (i, s) in steps.iter().enumerate() {
        ledger.record_step(s.as_record())?;
        let frac = if finals.is_empty() {
            1.0
        } else {
            let r = evaluate(&finals, &ledger, task, &s.scene_after, pack);
            r.satisfied.len() as f64 / finals.len() as f64
        };
        out.push(((i + 1) as f64 / n as f64, frac));
    }
    Ok(out)
}
