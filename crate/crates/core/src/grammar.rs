//! Context-free grammar of currently valid action strings.
//!
//! Text format, one production per line:
//!
//! ```text
//! <lhs> ::= "terminal" <nonterminal> QUESTION | "other" RESULT
//! ```
//!
//! Terminals are double-quoted with `\"` and `\\` escapes. `QUESTION` stands for free question
//! text without double quotes and `RESULT` for a result name of ASCII letters, digits and
//! underscores. A production with nothing after `::=` has no derivations. The start symbol is
//! `<action>`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand_chacha::rand_core::Rng;
use rand_chacha::ChaCha8Rng;

use crate::actions::is_visible;
use crate::error::GrammarError;
use crate::world::{flag, id_stem, Catalog, SceneGraph};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Symbol {
    T(String),
    N(String),
    Question,
    Result,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    pub lhs: String,
    pub alternatives: Vec<Vec<Symbol>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrammarSnapshot {
    pub productions: Vec<Production>,
    /// Derivable strings with each open terminal counted once.
    pub valid_count: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrammarOptions {
    pub include_ask: bool,
}

impl Default for GrammarOptions {
    fn default() -> Self {
        Self { include_ask: true }
    }
}

pub const START: &str = "action";

fn t(s: &str) -> Symbol {
    Symbol::T(s.to_string())
}
fn n(s: &str) -> Symbol {
    Symbol::N(s.to_string())
}

/// Look-for category vocabulary: id stems, their words, and plural forms.
pub fn category_names(catalog: &Catalog) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for id in catalog.furniture.iter().map(|f| &f.id).chain(catalog.movables.iter().map(|m| &m.id)) {
        let stem = id_stem(id).to_ascii_lowercase();
        let mut words: Vec<String> = stem.split('_').filter(|w| w.len() > 1 && !w.chars().all(|c| c.is_ascii_digit())).map(str::to_string).collect();
        words.push(stem.clone());
        for w in words {
            out.insert(format!("{w}s"));
            out.insert(w);
        }
    }
    out
}

fn slot(lhs: &str, ids: impl IntoIterator<Item = String>) -> Production {
    let set: BTreeSet<String> = ids.into_iter().collect();
    Production { lhs: lhs.to_string(), alternatives: set.into_iter().map(|s| vec![Symbol::T(s)]).collect() }
}

/// Builds the grammar for the visible part of the scene: discovered entities plus all
/// furniture and rooms, with argument slots restricted to type-compatible entities.
pub fn enumerate_valid_actions(
    scene: &SceneGraph,
    discovered: &BTreeSet<String>,
    catalog: &Catalog,
    opts: &GrammarOptions,
) -> GrammarSnapshot {
    let visible: Vec<&crate::world::Entity> = scene
        .entities
        .values()
        .filter(|e| is_visible(scene, discovered, &e.id))
        .collect();
    let ids = |pred: &dyn Fn(&crate::world::Entity) -> bool| -> Vec<String> {
        visible.iter().filter(|e| pred(e)).map(|e| e.id.clone()).collect()
    };
    let articulated = ids(&|e| e.has(flag::ARTICULATED));
    let appliance = ids(&|e| e.has(flag::COOKING_APPLIANCE));
    let heatable = ids(&|e| e.is_movable() && (e.has(flag::CONTAINER) || e.has(flag::VESSEL) || e.has(flag::EDIBLE)));
    let searchable = ids(&|e| e.can_hold());
    let movable = ids(&|e| e.is_movable());
    let receptacle = ids(&|e| e.is_furniture() || e.is_room() || e.has(flag::VESSEL));
    let mixable = ids(&|e| e.has(flag::VESSEL) || e.has(flag::COOKING_APPLIANCE));
    let edible_movable = ids(&|e| e.is_movable() && e.has(flag::EDIBLE));

    let mut kinds: Vec<Production> = Vec::new();
    let mut slots: Vec<Production> = Vec::new();
    if opts.include_ask {
        kinds.push(Production { lhs: "ask".into(), alternatives: vec![vec![t("Ask \""), Symbol::Question, t("\"")]] });
    }
    let one = |lhs: &str, syms: Vec<Symbol>| Production { lhs: lhs.into(), alternatives: vec![syms] };
    kinds.push(one("open", vec![t("Open "), n("articulated")]));
    kinds.push(one("close", vec![t("Close "), n("articulated")]));
    kinds.push(one("turn_on", vec![t("Turn on "), n("appliance")]));
    kinds.push(one("turn_off", vec![t("Turn off "), n("appliance")]));
    kinds.push(one("heat", vec![t("Heat "), n("heatable")]));
    kinds.push(one("search", vec![t("Search "), n("searchable")]));
    kinds.push(one("look_for", vec![t("Look for "), n("category")]));
    kinds.push(one("move", vec![t("Move "), n("movable"), t(" to "), n("receptacle")]));

    let mut move_from = Vec::new();
    let mut pour = Vec::new();
    for e in &visible {
        let subs = scene.substances(&e.id);
        let mut contents = subs.clone();
        if e.is_movable() {
            contents.extend(scene.children(&e.id).filter(|c| discovered.contains(&c.id)).map(|c| c.id.clone()));
        }
        if !contents.is_empty() {
            let nt = format!("contents_of_{}", e.id);
            move_from.push(vec![t("Move "), Symbol::N(nt.clone()), Symbol::T(format!(" from {} to ", e.id)), n("receptacle")]);
            slots.push(slot(&nt, contents));
        }
        if !subs.is_empty() {
            let nt = format!("substances_of_{}", e.id);
            pour.push(vec![t("Pour "), Symbol::N(nt.clone()), Symbol::T(format!(" from {} to ", e.id)), n("receptacle")]);
            slots.push(slot(&nt, subs));
        }
    }
    kinds.push(Production { lhs: "move_from".into(), alternatives: move_from });
    kinds.push(Production { lhs: "pour".into(), alternatives: pour });
    kinds.push(one("mix", vec![t("Mix all items in "), n("mixable"), t(" to get "), Symbol::Result]));
    kinds.push(one("cook", vec![t("Cook items in "), n("mixable"), t(" to get "), Symbol::Result]));
    kinds.push(one("chop", vec![t("Chop "), n("edible_movable"), t(" to get "), Symbol::Result]));
    kinds.push(one("freeform_container", vec![n("verb"), t(" items in "), n("mixable"), t(" to get "), Symbol::Result]));
    kinds.push(one("freeform_object", vec![n("verb"), t(" the object "), n("edible_movable"), t(" to get "), Symbol::Result]));
    kinds.push(one("done", vec![t("Declare Done")]));

    let mut productions = vec![Production {
        lhs: START.into(),
        alternatives: kinds.iter().map(|p| vec![Symbol::N(p.lhs.clone())]).collect(),
    }];
    productions.extend(kinds);
    productions.push(slot("articulated", articulated));
    productions.push(slot("appliance", appliance));
    productions.push(slot("heatable", heatable));
    productions.push(slot("searchable", searchable));
    productions.push(slot("category", category_names(catalog)));
    productions.push(slot("movable", movable));
    productions.push(slot("receptacle", receptacle));
    productions.push(slot("mixable", mixable));
    productions.push(slot("edible_movable", edible_movable));
    productions.push(slot("verb", scene.verbs.iter().map(|v| v.verb.clone())));
    productions.extend(slots);
    GrammarSnapshot::from_productions(productions)
}

impl GrammarSnapshot {
    pub fn from_productions(productions: Vec<Production>) -> Self {
        let mut g = GrammarSnapshot { productions, valid_count: 0 };
        g.valid_count = g.count(START);
        g
    }

    fn index(&self) -> HashMap<&str, &Production> {
        self.productions.iter().map(|p| (p.lhs.as_str(), p)).collect()
    }

    pub fn production(&self, lhs: &str) -> Option<&Production> {
        self.productions.iter().find(|p| p.lhs == lhs)
    }

    /// Number of derivations of a nonterminal, open terminals counted once.
    pub fn count(&self, nt: &str) -> u128 {
        let idx = self.index();
        let mut memo: HashMap<String, u128> = HashMap::new();
        count_nt(&idx, nt, &mut memo, &mut BTreeSet::new())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for p in &self.productions {
            let _ = write!(s, "<{}> ::=", p.lhs);
            for (i, alt) in p.alternatives.iter().enumerate() {
                if i > 0 {
                    s.push_str(" |");
                }
                for sym in alt {
                    s.push(' ');
                    match sym {
                        Symbol::T(x) => {
                            s.push('"');
                            for c in x.chars() {
                                if c == '"' || c == '\\' {
                                    s.push('\\');
                                }
                                s.push(c);
                            }
                            s.push('"');
                        }
                        Symbol::N(x) => {
                            let _ = write!(s, "<{x}>");
                        }
                        Symbol::Question => s.push_str("QUESTION"),
                        Symbol::Result => s.push_str("RESULT"),
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    /// True when `text` is derivable from the start symbol.
    pub fn derives(&self, text: &str) -> bool {
        let idx = self.index();
        let mut memo = HashMap::new();
        match_nt(&idx, START, text, 0, &mut memo).contains(&text.len())
    }

    /// Random derivation; `None` when the start symbol derives nothing.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Option<String> {
        let idx = self.index();
        let mut memo = HashMap::new();
        if count_nt(&idx, START, &mut memo, &mut BTreeSet::new()) == 0 {
            return None;
        }
        let mut out = String::new();
        sample_nt(&idx, START, rng, &mut memo, &mut out);
        Some(out)
    }
}

fn count_nt(
    idx: &HashMap<&str, &Production>,
    nt: &str,
    memo: &mut HashMap<String, u128>,
    stack: &mut BTreeSet<String>,
) -> u128 {
    if let Some(c) = memo.get(nt) {
        return *c;
    }
    let Some(p) = idx.get(nt) else { return 0 };
    if !stack.insert(nt.to_string()) {
        return 0;
    }
    let mut total: u128 = 0;
    for alt in &p.alternatives {
        let mut prod: u128 = 1;
        for sym in alt {
            let c = match sym {
                Symbol::N(x) => count_nt(idx, x, memo, stack),
                _ => 1,
            };
            prod = prod.saturating_mul(c);
        }
        total = total.saturating_add(prod);
    }
    stack.remove(nt);
    memo.insert(nt.to_string(), total);
    total
}

fn match_nt(
    idx: &HashMap<&str, &Production>,
    nt: &str,
    text: &str,
    pos: usize,
    memo: &mut HashMap<(String, usize), Vec<usize>>,
) -> Vec<usize> {
    let key = (nt.to_string(), pos);
    if let Some(v) = memo.get(&key) {
        return v.clone();
    }
    memo.insert(key.clone(), Vec::new());
    let mut ends = BTreeSet::new();
    if let Some(p) = idx.get(nt) {
        for alt in &p.alternatives {
            let mut cur = vec![pos];
            for sym in alt {
                let mut next = BTreeSet::new();
                for &at in &cur {
                    match_symbol(idx, sym, text, at, memo, &mut next);
                }
                cur = next.into_iter().collect();
                if cur.is_empty() {
                    break;
                }
            }
            ends.extend(cur);
        }
    }
    let v: Vec<usize> = ends.into_iter().collect();
    memo.insert(key, v.clone());
    v
}

fn match_symbol(
    idx: &HashMap<&str, &Production>,
    sym: &Symbol,
    text: &str,
    at: usize,
    memo: &mut HashMap<(String, usize), Vec<usize>>,
    out: &mut BTreeSet<usize>,
) {
    let rest = &text[at..];
    match sym {
        Symbol::T(x) => {
            if rest.starts_with(x.as_str()) {
                out.insert(at + x.len());
            }
        }
        Symbol::N(x) => out.extend(match_nt(idx, x, text, at, memo)),
        Symbol::Question => {
            let mut len = 0;
            for c in rest.chars() {
                if c == '"' {
                    break;
                }
                len += c.len_utf8();
                out.insert(at + len);
            }
        }
        Symbol::Result => {
            let mut len = 0;
            for c in rest.chars() {
                if !(c.is_ascii_alphanumeric() || c == '_') {
                    break;
                }
                len += 1;
                out.insert(at + len);
            }
        }
    }
}

const SAMPLE_QUESTIONS: [&str; 4] = [
    "What kind of milk would you like?",
    "Would you like any toppings?",
    "Where should I serve breakfast?",
    "Do you prefer tea or coffee?",
];

fn sample_nt(
    idx: &HashMap<&str, &Production>,
    nt: &str,
    rng: &mut ChaCha8Rng,
    memo: &mut HashMap<String, u128>,
    out: &mut String,
) {
    let p = idx[nt];
    let live: Vec<&Vec<Symbol>> = p
        .alternatives
        .iter()
        .filter(|alt| {
            alt.iter().all(|s| match s {
                Symbol::N(x) => count_nt(idx, x, memo, &mut BTreeSet::new()) > 0,
                _ => true,
            })
        })
        .collect();
    let alt = live[(rng.next_u64() % live.len() as u64) as usize];
    for sym in alt {
        match sym {
            Symbol::T(x) => out.push_str(x),
            Symbol::N(x) => sample_nt(idx, x, rng, memo, out),
            Symbol::Question => out.push_str(SAMPLE_QUESTIONS[(rng.next_u64() % 4) as usize]),
            Symbol::Result => {
                let _ = write!(out, "result_{}", rng.next_u64() % 1000);
            }
        }
    }
}

/// Parses grammar text produced by [`GrammarSnapshot::render`].
pub fn parse_cfg(text: &str) -> Result<GrammarSnapshot, GrammarError> {
    let mut productions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: &str| GrammarError::Syntax { line: line_no, msg: msg.to_string() };
        if line.trim().is_empty() {
            continue;
        }
        let (lhs, rhs) = line.split_once(" ::=").ok_or_else(|| err("missing ::="))?;
        let lhs = lhs
            .trim()
            .strip_prefix('<')
            .and_then(|s| s.strip_suffix('>'))
            .ok_or_else(|| err("left side must be <name>"))?;
        let mut alternatives: Vec<Vec<Symbol>> = Vec::new();
        let mut cur: Vec<Symbol> = Vec::new();
        let mut chars = rhs.chars().peekable();
        let mut any = false;
        while let Some(&c) = chars.peek() {
            match c {
                ' ' => {
                    chars.next();
                }
                '|' => {
                    chars.next();
                    if cur.is_empty() {
                        return Err(err("empty alternative"));
                    }
                    alternatives.push(std::mem::take(&mut cur));
                }
                '"' => {
                    chars.next();
                    let mut s = String::new();
                    loop {
                        match chars.next() {
                            Some('\\') => s.push(chars.next().ok_or_else(|| err("dangling escape"))?),
                            Some('"') => break,
                            Some(x) => s.push(x),
                            None => return Err(err("unterminated terminal")),
                        }
                    }
                    cur.push(Symbol::T(s));
                    any = true;
                }
                '<' => {
                    chars.next();
                    let mut s = String::new();
                    loop {
                        match chars.next() {
                            Some('>') => break,
                            Some(x) => s.push(x),
                            None => return Err(err("unterminated nonterminal")),
                        }
                    }
                    cur.push(Symbol::N(s));
                    any = true;
                }
                _ => {
                    let mut word = String::new();
                    while let Some(&x) = chars.peek() {
                        if x == ' ' || x == '|' {
                            break;
                        }
                        word.push(x);
                        chars.next();
                    }
                    cur.push(match word.as_str() {
                        "QUESTION" => Symbol::Question,
                        "RESULT" => Symbol::Result,
                        _ => return Err(err(&format!("unknown symbol {word}"))),
                    });
                    any = true;
                }
            }
        }
        if any {
            if cur.is_empty() {
                return Err(err("trailing |"));
            }
            alternatives.push(cur);
        }
        productions.push(Production { lhs: lhs.to_string(), alternatives });
    }
    Ok(GrammarSnapshot::from_productions(productions))
}
