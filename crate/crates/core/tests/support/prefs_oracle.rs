//! Synthetic breakfast trajectories and a brute-force rule oracle that rescans raw step
//! effects and scene snapshots instead of using the incremental ledger.

use std::collections::{BTreeMap, BTreeSet};

use adapt::actions::{execute, parse_action, singular, Effect};
use adapt::prefs::{
    default_personas, default_tasks, evaluate, Category, Check, OrderSide, OwnedStep, PreferenceRule, RuleOutcome,
    SubtaskSpec, TaskPack, TrajectoryLedger,
};
use adapt::world::{default_catalog, flag, generate_scene, id_stem, SceneGenConfig, SceneGraph};
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Traj {
    pub task: String,
    pub steps: Vec<OwnedStep>,
    pub final_scene: SceneGraph,
    /// Subtasks deliberately left unserved.
    pub skipped: Vec<String>,
}

struct Gen {
    rng: ChaCha8Rng,
    script: Vec<String>,
}

const SURFACES: [&str; 7] = ["table_0", "table_1", "island_0", "desk_0", "coffee_table_0", "counter_0", "table_0"];
const MILKS: [&str; 7] = ["milk_0", "milk_1", "milk_2", "milk_3", "milk_4", "milk_5", "milk_6"];
const SWEET: [&str; 6] = ["sugar_0", "sugar_1", "sugar_2", "honey_0", "maple_syrup_0", "maple_syrup_1"];
const TOPPINGS: [&str; 14] = [
    "almonds_0",
    "walnuts_0",
    "pecans_0",
    "pistachios_0",
    "strawberries_box_0",
    "blueberries_box_0",
    "raspberries_box_0",
    "chia_seeds_0",
    "cinnamon_0",
    "cardamom_0",
    "raisins_0",
    "chocolate_chips_0",
    "cranberries_0",
    "flax_seeds_0",
];
const SAVORY: [&str; 12] = [
    "cheese_0",
    "cheese_1",
    "cheese_2",
    "cheese_3",
    "pepper_0",
    "paprika_0",
    "chili_flakes_0",
    "cumin_0",
    "mixed_herbs_0",
    "cilantro",
    "hot_sauce_0",
    "butter_0",
];
const VEG: [&str; 6] = ["tomato_0", "bell_pepper_0", "onion_0", "spinach_0", "mushrooms_0", "jalepeno_0"];

impl Gen {
    fn below(&mut self, n: usize) -> usize {
        (self.rng.next_u64() % n as u64) as usize
    }
    fn chance(&mut self, pct: u64) -> bool {
        self.rng.next_u64() % 100 < pct
    }
    fn pick<'a>(&mut self, xs: &[&'a str]) -> &'a str {
        xs[self.below(xs.len())]
    }
    fn push(&mut self, a: impl Into<String>) {
        self.script.push(a.into());
    }
    fn pour_from(&mut self, scene: &SceneGraph, src: &str, dest: &str) {
        if let Some(sub) = scene.substances(src).first() {
            self.push(format!("Pour {sub} from {src} to {dest}"));
        }
    }
    fn serve(&mut self, vessel: &str) {
        let s = self.pick(&SURFACES);
        self.push(format!("Move {vessel} to {s}"));
    }
    fn extras(&mut self, scene: &SceneGraph, pool: &[&str], dest: &str, max: usize) {
        let n = self.below(max + 1);
        for _ in 0..n {
            let src = self.pick(pool);
            self.pour_from(scene, src, dest);
        }
    }

    fn cereal(&mut self, s: &SceneGraph) {
        let bowl = self.pick(&["bowl_5", "bowl_6", "bowl_0", "bowl_9"]);
        let cereal = format!("cereal_box_{}", self.below(8));
        let milk = self.pick(&MILKS);
        if self.chance(60) {
            self.pour_from(s, &cereal, bowl);
            self.pour_from(s, milk, bowl);
        } else {
            self.pour_from(s, milk, bowl);
            self.pour_from(s, &cereal, bowl);
        }
        self.extras(s, &TOPPINGS, bowl, 3);
        if self.chance(30) {
            self.extras(s, &SWEET, bowl, 1);
        }
        self.serve(bowl);
    }

    fn parfait(&mut self, s: &SceneGraph) {
        let cup = self.pick(&["glass_0", "bowl_4", "cup_2", "bowl_10"]);
        let y = format!("yoghurt_{}", self.below(4));
        self.pour_from(s, &y, cup);
        if self.chance(70) {
            self.pour_from(s, "granola_0", cup);
        }
        self.extras(s, &TOPPINGS, cup, 3);
        if self.chance(40) {
            self.push(format!("Mix all items in {cup} to get yoghurt_parfait"));
        }
        self.serve(cup);
    }

    fn hot_drink(&mut self, s: &SceneGraph, tea: bool) {
        let cup = if tea { self.pick(&["cup_0", "cup_1", "teapot_0", "mug_1"]) } else { self.pick(&["mug_0", "mug_2", "cup_3"]) };
        let (src, machine, result) = if tea {
            let b = format!("tea_bags_{}", self.below(6));
            let r = self.pick(&["green_tea", "black_tea", "herbal_tea", "chai_tea"]);
            (b, "kettle_0", r.to_string())
        } else {
            let c = format!("coffee_{}", self.below(4));
            let m = self.pick(&["coffee_machine_0", "espresso_machine_0", "coffee_machine_0"]);
            let r = self.pick(&["coffee", "espresso", "latte", "iced_coffee"]);
            (c, m, r.to_string())
        };
        self.pour_from(s, &src, cup);
        self.pour_from(s, "water_bottle_0", cup);
        let milk_first = self.chance(30);
        if milk_first {
            let m = self.pick(&MILKS);
            self.pour_from(s, m, cup);
        }
        if self.chance(70) {
            self.push(format!("Turn on {machine}"));
        }
        self.push(format!("Move {cup} to {machine}"));
        let verb = if self.chance(80) { "Brew" } else { "Steep" };
        if verb == "Steep" && machine != "kettle_0" {
            self.push(format!("Brew items in {cup} to get {result}"));
        } else {
            self.push(format!("{verb} items in {cup} to get {result}"));
        }
        if !milk_first && self.chance(40) {
            let m = self.pick(&MILKS);
            self.pour_from(s, m, cup);
        }
        self.extras(s, &SWEET, cup, 1);
        if self.chance(30) {
            self.extras(s, &["cardamom_0", "cinnamon_0", "lemon_0"], cup, 1);
        }
        self.serve(cup);
    }

    fn toast(&mut self, s: &SceneGraph) {
        let plate = self.pick(&["plate_0", "plate_1", "plate_6", "plate_7"]);
        let bread = format!("bread_{}", self.below(5));
        self.pour_from(s, &bread, plate);
        if self.chance(60) {
            self.push("Turn on toaster_0");
        }
        self.push(format!("Move {plate} to toaster_0"));
        self.push(format!("Toast items in {plate} to get toast"));
        self.extras(
            s,
            &["butter_0", "butter_1", "jam_0", "jam_1", "spread_1", "spread_2", "spread_3", "avocado_0", "cheese_2"],
            plate,
            2,
        );
        self.serve(plate);
    }

    fn eggs(&mut self, s: &SceneGraph, omelette: bool) {
        let pan = self.pick(&["pan_0", "pan_2", "pan_3", "griddle_0"]);
        let plate = self.pick(&["plate_2", "plate_3", "plate_4", "plate_5"]);
        let n = 2 + self.below(2);
        let base = self.below(9);
        let mix_in = if omelette { self.pick(&["bowl_7", "bowl_8"]) } else { pan };
        for i in 0..n {
            self.push(format!("Move egg_{} from egg_carton_0 to {mix_in}", base + i));
        }
        if self.chance(40) {
            let v = self.pick(&VEG);
            let board = self.pick(&["cutting_board_0", "cutting_board_1"]);
            self.push(format!("Move {board} to counter_0"));
            self.push(format!("Move {v} to {board}"));
            let name = format!("chopped_{}", id_stem(v));
            self.push(format!("Chop {v} to get {name}"));
            self.push(format!("Move {name}_0 to {mix_in}"));
        }
        self.extras(s, &SAVORY, mix_in, 3);
        if self.chance(30) {
            let fat = self.pick(&["oil_bottle_0", "oil_bottle_1", "butter_0", "butter_1"]);
            self.pour_from(s, fat, pan);
        }
        if omelette {
            self.push(format!("Mix all items in {mix_in} to get omelet_batter"));
            self.push(format!("Pour omelet_batter from {mix_in} to {pan}"));
        }
        let stove = if self.chance(80) { "stove_0" } else { "counter_0" };
        self.push(format!("Move {pan} to {stove}"));
        if self.chance(60) {
            self.push("Turn on stove_0");
        }
        let result = if omelette { "omelette" } else { self.pick(&["scrambled_eggs", "fried_eggs", "poached_eggs"]) };
        self.push(format!("Cook items in {pan} to get {result}"));
        self.push(format!("Pour {result} from {pan} to {plate}"));
        if self.chance(30) {
            self.extras(s, &SAVORY, plate, 1);
        }
        self.serve(plate);
    }
}

fn play(mut scene: SceneGraph, script: &[String]) -> (Vec<OwnedStep>, SceneGraph) {
    let mut discovered: BTreeSet<String> = scene.entities.keys().cloned().collect();
    let mut steps = Vec::new();
    for (i, text) in script.iter().enumerate() {
        let Ok(action) = parse_action(text) else { continue };
        for id in scene.entities.keys() {
            discovered.insert(id.clone());
        }
        let o = execute(&mut scene, &mut discovered, &action).expect("no internal faults");
        let reply = action.question().map(|_| "I have no preference".to_string());
        steps.push(OwnedStep {
            index: i,
            action,
            observation: o.observation,
            effects: o.effects,
            reply,
            scene_after: scene.clone(),
        });
    }
    (steps, scene)
}

/// `n` seeded trajectories cycling through the shipped tasks; every fifth one skips a subtask.
pub fn synth_trajectories(n: usize, seed: u64) -> Vec<Traj> {
    let pack = default_tasks();
    (0..n)
        .map(|i| {
            let task = &pack.tasks[i % pack.tasks.len()];
            let scene = generate_scene(default_catalog(), &SceneGenConfig { inclusion_probability: 1.0, seed: i as u64 });
            let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9)), script: vec![] };
            let skip_one = i % 5 == 4;
            let skip_idx = g.below(task.subtasks.len());
            let mut skipped = Vec::new();
            let mut order: Vec<&String> = task.subtasks.iter().collect();
            if g.chance(50) {
                order.reverse();
            }
            for (j, sub) in order.into_iter().enumerate() {
                let orig_idx = task.subtasks.iter().position(|s| s == sub).unwrap_or(j);
                if skip_one && orig_idx == skip_idx {
                    skipped.push(sub.clone());
                    continue;
                }
                match sub.as_str() {
                    "cereal" => g.cereal(&scene),
                    "parfait" => g.parfait(&scene),
                    "coffee" => g.hot_drink(&scene, false),
                    "tea" => g.hot_drink(&scene, true),
                    "toast" => g.toast(&scene),
                    "eggs" => g.eggs(&scene, false),
                    "omelette" => g.eggs(&scene, true),
                    _ => {}
                }
            }
            if g.chance(20) {
                g.push("Ask \"Anything else?\"");
            }
            g.push("Declare Done");
            let (steps, final_scene) = play(scene, &g.script);
            Traj { task: task.name.clone(), steps, final_scene, skipped }
        })
        .collect()
}

// ---------------------------------------------------------------------------------------
// Oracle

fn norm(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).map(singular).collect()
}

fn kw_hit(seg: &[String], kw: &str) -> bool {
    match kw.strip_prefix('=') {
        Some(exact) => norm(exact) == seg,
        None => {
            let k = norm(kw);
            if k.is_empty() || k.len() > seg.len() {
                return false;
            }
            (0..=seg.len() - k.len()).any(|i| seg[i..i + k.len()] == k[..])
        }
    }
}

fn any_hit(segs: &[Vec<String>], kws: &[String]) -> bool {
    segs.iter().any(|s| kws.iter().any(|k| kw_hit(s, k)))
}

#[derive(Default)]
struct Scan {
    adds: Vec<(usize, String, String)>,
    prods: Vec<(usize, String, String, Vec<String>)>,
    used: Vec<String>,
    placed: Vec<(usize, String)>,
    /// Last snapshot (step position) in which each touched id existed.
    info_at: BTreeMap<String, usize>,
}

/// Lineage events, term segments and holders of a dish.
type Dish = (Vec<(String, usize)>, Vec<Vec<String>>, BTreeSet<String>);

struct Oracle<'a> {
    t: &'a Traj,
    pack: &'a TaskPack,
    scan: Scan,
    status: BTreeMap<String, Option<(String, String, usize)>>,
}

impl<'a> Oracle<'a> {
    fn new(t: &'a Traj, pack: &'a TaskPack) -> Self {
        let mut scan = Scan::default();
        for (pos, s) in t.steps.iter().enumerate() {
            if s.observation.is_failure() {
                continue;
            }
            let k = s.index;
            let mut touched: Vec<String> = Vec::new();
            for e in &s.effects {
                match e {
                    Effect::Used { entity, .. } => {
                        scan.used.push(entity.clone());
                        touched.push(entity.clone());
                    }
                    Effect::Added { holder, token } => {
                        scan.adds.push((k, holder.clone(), token.clone()));
                        touched.push(holder.clone());
                        touched.push(token.clone());
                    }
                    Effect::Produced { holder, token, consumed } => {
                        scan.prods.push((k, holder.clone(), token.clone(), consumed.clone()));
                        touched.push(holder.clone());
                        touched.extend(consumed.iter().cloned());
                    }
                    Effect::Placed { entity, .. } => {
                        scan.placed.push((k, entity.clone()));
                        touched.push(entity.clone());
                    }
                    Effect::Discovered { .. } => {}
                }
            }
            for id in touched {
                if s.scene_after.contains(&id) {
                    scan.info_at.insert(id, pos);
                }
            }
        }
        let mut o = Oracle { t, pack, scan, status: BTreeMap::new() };
        if let Ok(task) = pack.task(&t.task) {
            for key in &task.subtasks {
                let sub = pack.subtask(key).expect("task subtasks exist");
                let st = o.resolve(sub);
                o.status.insert(key.clone(), st);
            }
        }
        o
    }

    fn scene(&self) -> &SceneGraph {
        &self.t.final_scene
    }

    fn segs(&self, token: &str) -> Vec<Vec<String>> {
        let snap = if self.scene().contains(token) {
            Some(self.scene())
        } else {
            self.scan.info_at.get(token).map(|p| &self.t.steps[*p].scene_after)
        };
        match snap {
            Some(sc) => {
                let e = sc.get(token).expect("present in snapshot");
                let mut v = vec![norm(id_stem(token)), norm(&e.description)];
                for c in &e.contents {
                    if !sc.contains(c) {
                        v.push(norm(c));
                    }
                }
                v
            }
            None => vec![norm(token)],
        }
    }

    fn hit(&self, token: &str, kws: &[String]) -> bool {
        any_hit(&self.segs(token), kws)
    }

    /// Every (token, step) feeding the dish in `holder`, and every holder on the way.
    fn lineage(&self, holder: &str) -> (Vec<(String, usize)>, BTreeSet<String>) {
        let mut holders = BTreeSet::from([holder.to_string()]);
        let mut out: Vec<(String, usize)> = Vec::new();
        let mut todo: Vec<(String, usize)> = Vec::new();
        for (k, h, tok) in &self.scan.adds {
            if h == holder {
                out.push((tok.clone(), *k));
                todo.push((tok.clone(), *k));
            }
        }
        for (k, h, tok, _) in &self.scan.prods {
            if h == holder {
                out.push((tok.clone(), *k));
                todo.push((tok.clone(), *k));
            }
        }
        let mut done = BTreeSet::new();
        while let Some((tok, at)) = todo.pop() {
            if !done.insert((tok.clone(), at)) {
                continue;
            }
            let Some((pk, ph, _, consumed)) =
                self.scan.prods.iter().filter(|(k, _, t, _)| *t == tok && *k <= at).max_by_key(|(k, ..)| *k)
            else {
                continue;
            };
            holders.insert(ph.clone());
            for c in consumed {
                let when = self
                    .scan
                    .adds
                    .iter()
                    .filter(|(k, h, t)| h == ph && t == c && k <= pk)
                    .map(|(k, ..)| *k)
                    .max()
                    .unwrap_or(*pk);
                out.push((c.clone(), when));
                todo.push((c.clone(), when));
                let into_c: Vec<&(usize, String, String)> = self.scan.adds.iter().filter(|(_, h, _)| h == c).collect();
                if !into_c.is_empty() {
                    holders.insert(c.clone());
                    for (k2, _, t2) in into_c {
                        if k2 <= pk {
                            out.push((t2.clone(), *k2));
                            todo.push((t2.clone(), *k2));
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out.dedup();
        (out, holders)
    }

    fn resolve(&self, sub: &SubtaskSpec) -> Option<(String, String, usize)> {
        let surfaces = &self.pack.serving_surfaces;
        let mut cands: Vec<(usize, usize, String, String)> = Vec::new();
        for e in self.scene().entities.values() {
            if !(e.flags.iter().all(|f| f != flag::FURNITURE && f != flag::ROOM)) || surfaces.contains(&e.id) {
                continue;
            }
            let Some(surface) = self.scene().ancestors(&e.id).into_iter().find(|a| surfaces.contains(a)) else {
                continue;
            };
            let made_here = self.scan.prods.iter().any(|(_, h, t, _)| *h == e.id && any_hit(&[norm(t)], &sub.keywords));
            let ok_content = e.contents.iter().any(|c| {
                self.hit(c, &sub.keywords)
                    && (self.scan.prods.iter().any(|(_, _, t, _)| t == c)
                        || (!sub.requires_produced && self.scan.adds.iter().any(|(_, h, t)| *h == e.id && t == c)))
            });
            if !made_here && !ok_content {
                continue;
            }
            let (ev, _) = self.lineage(&e.id);
            let rel = ev.iter().filter(|(t, _)| self.hit(t, &sub.keywords)).count();
            let first = ev.first().map_or(usize::MAX, |x| x.1);
            cands.push((rel, first, e.id.clone(), surface));
        }
        cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let (_, _, holder, surface) = cands.into_iter().next()?;
        let mut chain: BTreeSet<String> = self.scene().ancestors(&holder).into_iter().collect();
        chain.insert(holder.clone());
        let mut step = 0;
        for (k, e) in &self.scan.placed {
            if chain.contains(e) {
                step = step.max(*k);
            }
        }
        for (k, h, _) in &self.scan.adds {
            if *h == holder {
                step = step.max(*k);
            }
        }
        for (k, h, ..) in &self.scan.prods {
            if *h == holder {
                step = step.max(*k);
            }
        }
        Some((holder, surface, step))
    }

    fn keys_for(&self, key: &str) -> Vec<String> {
        self.pack.resolve(&self.t.task, key).into_iter().map(|s| s.key.clone()).collect()
    }

    fn present(&self, entry: &str) -> bool {
        let alts: Vec<String> = entry.split('|').map(|s| s.trim().to_string()).collect();
        self.scene().entities.values().any(|e| !e.flags.iter().any(|f| f == flag::ROOM) && self.hit(&e.id, &alts))
            || self.scan.info_at.keys().any(|id| self.hit(id, &alts))
    }

    fn dish_segs(&self, key: &str) -> Dish {
        let mut events = Vec::new();
        let mut holders = BTreeSet::new();
        for k in self.keys_for(key) {
            if let Some(Some((h, ..))) = self.status.get(&k) {
                let (ev, hs) = self.lineage(h);
                events.extend(ev);
                holders.extend(hs);
            }
        }
        events.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        let mut segs = Vec::new();
        for (t, _) in &events {
            segs.extend(self.segs(t));
        }
        for h in &holders {
            segs.extend(self.scene().substances(h).iter().map(|s| norm(s)));
        }
        (events, segs, holders)
    }

    fn check(&self, c: &Check, key: &str) -> RuleOutcome {
        let v = |b: bool| if b { RuleOutcome::Satisfied } else { RuleOutcome::Violated };
        match c {
            Check::Variant { preferred, dispreferred } => {
                let (_, s, _) = self.dish_segs(key);
                v(any_hit(&s, preferred) && !any_hit(&s, dispreferred))
            }
            Check::Add { any_of, min_count, and_any_of } => {
                let (_, s, _) = self.dish_segs(key);
                let n = any_of.iter().filter(|k| s.iter().any(|seg| kw_hit(seg, k))).count();
                v(n >= *min_count && and_any_of.as_ref().is_none_or(|g| any_hit(&s, g)))
            }
            Check::Exclude { forbidden } => v(!any_hit(&self.dish_segs(key).1, forbidden)),
            Check::Order { before, after } => self.order(before, after, key),
            Check::Tool { chain } => {
                let available = |g: &[String]| {
                    self.scene().entities.values().any(|e| !e.flags.iter().any(|f| f == flag::ROOM) && self.hit(&e.id, g))
                        || self.scan.info_at.keys().any(|id| self.hit(id, g))
                };
                match chain.iter().find(|g| available(g)) {
                    None => RuleOutcome::Inapplicable,
                    Some(g) => v(self.scan.used.iter().any(|id| self.hit(id, g))),
                }
            }
            Check::Location { surfaces } => {
                let st: Vec<&Option<(String, String, usize)>> =
                    self.keys_for(key).iter().filter_map(|k| self.status.get(k)).collect();
                v(!st.is_empty() && st.iter().all(|s| s.as_ref().is_some_and(|(_, surf, _)| surfaces.contains(surf))))
            }
            Check::PrepAlt { any_of, none_of } => {
                let (_, mut s, hs) = self.dish_segs(key);
                for h in &hs {
                    let tags = match self.scene().get(h) {
                        Some(e) => e.state_tags.clone(),
                        None => self
                            .scan
                            .info_at
                            .get(h)
                            .and_then(|p| self.t.steps[*p].scene_after.get(h).map(|e| e.state_tags.clone()))
                            .unwrap_or_default(),
                    };
                    s.extend(tags.iter().map(|t| norm(t)));
                }
                v(any_hit(&s, any_of) && !any_hit(&s, none_of))
            }
            Check::Conditional { requires, then, otherwise } => {
                if requires.iter().all(|r| self.present(r)) {
                    self.check(then, key)
                } else {
                    self.check(otherwise, key)
                }
            }
        }
    }

    fn order(&self, before: &OrderSide, after: &OrderSide, key: &str) -> RuleOutcome {
        let v = |b: bool| if b { RuleOutcome::Satisfied } else { RuleOutcome::Violated };
        if let (Some(b), Some(a)) = (&before.tokens, &after.tokens) {
            let (ev, _, _) = self.dish_segs(key);
            let first = |kws: &[String]| ev.iter().find(|(t, _)| self.hit(t, kws)).map(|(_, k)| *k);
            return match (first(b), first(a)) {
                (None, _) => RuleOutcome::Violated,
                (Some(_), None) => RuleOutcome::Satisfied,
                (Some(x), Some(y)) => v(x < y),
            };
        }
        let keys = |s: &OrderSide| -> BTreeSet<String> { s.subtasks.iter().flatten().flat_map(|k| self.keys_for(k)).collect() };
        let (bk, ak) = (keys(before), keys(after));
        if bk.is_empty() || ak.is_empty() {
            return RuleOutcome::Inapplicable;
        }
        let steps = |ks: &BTreeSet<String>| -> Vec<usize> {
            ks.iter().filter_map(|k| self.status.get(k)).filter_map(|s| s.as_ref().map(|x| x.2)).collect()
        };
        match (steps(&bk).into_iter().max(), steps(&ak).into_iter().min()) {
            (Some(x), Some(y)) => v(x < y),
            _ => RuleOutcome::Violated,
        }
    }

    fn outcome(&self, r: &PreferenceRule) -> RuleOutcome {
        let a = &r.applicability;
        let applicable = (a.tasks.is_empty() || a.tasks.contains(&self.t.task))
            && a.requires.iter().all(|x| self.present(x))
            && !a.absent.iter().any(|x| self.present(x));
        let keys = self.keys_for(&r.subtask_key);
        let known: Vec<&Option<(String, String, usize)>> = keys.iter().filter_map(|k| self.status.get(k)).collect();
        if !applicable || known.is_empty() {
            RuleOutcome::Inapplicable
        } else if known.iter().any(|s| s.is_none()) {
            RuleOutcome::Violated
        } else {
            self.check(&r.check, &r.subtask_key)
        }
    }
}

pub fn oracle_outcomes(t: &Traj, rules: &[PreferenceRule], pack: &TaskPack) -> BTreeMap<String, RuleOutcome> {
    let o = Oracle::new(t, pack);
    rules.iter().map(|r| (r.id.clone(), o.outcome(r))).collect()
}

pub fn evaluated_outcomes(t: &Traj, rules: &[PreferenceRule], pack: &TaskPack) -> BTreeMap<String, RuleOutcome> {
    let mut l = TrajectoryLedger::new();
    for s in &t.steps {
        l.record_step(s.as_record()).expect("ordered steps");
    }
    evaluate(rules, &l, &t.task, &t.final_scene, pack).outcomes
}

pub fn all_rules() -> Vec<PreferenceRule> {
    default_personas().iter().flat_map(|p| p.preferences.iter().cloned()).collect()
}

/// Compares evaluator and oracle over `n` trajectories; also checks that a skipped subtask
/// violates every applicable rule attached to it.
pub fn preference_equivalence(n: usize) -> Result<String, String> {
    let pack = default_tasks();
    let rules = all_rules();
    let trajs = synth_trajectories(n, 17);
    let mut decided: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
    let mut compared = 0usize;
    let mut mismatches = Vec::new();
    let mut failure_cases = 0usize;
    for (i, t) in trajs.iter().enumerate() {
        let ev = evaluated_outcomes(t, &rules, pack);
        let or = oracle_outcomes(t, &rules, pack);
        for r in &rules {
            compared += 1;
            if ev[&r.id] != or[&r.id] {
                mismatches.push(format!("traj {i} ({}) rule {}: evaluate {:?} oracle {:?}", t.task, r.id, ev[&r.id], or[&r.id]));
            }
            let e = decided.entry(r.category).or_default();
            match ev[&r.id] {
                RuleOutcome::Satisfied => e.0 += 1,
                RuleOutcome::Violated => e.1 += 1,
                RuleOutcome::Inapplicable => {}
            }
        }
        if !t.skipped.is_empty() {
            let mut attached = 0;
            for r in &rules {
                let hits_skipped = pack.resolve(&t.task, &r.subtask_key).iter().any(|s| t.skipped.contains(&s.key));
                let applicable_elsewhere = ev[&r.id] != RuleOutcome::Inapplicable;
                if hits_skipped && applicable_elsewhere {
                    attached += 1;
                    if ev[&r.id] != RuleOutcome::Violated {
                        mismatches.push(format!("traj {i}: rule {} on skipped subtask not violated", r.id));
                    }
                }
            }
            if attached > 0 {
                failure_cases += 1;
            }
        }
    }
    let missing: Vec<String> = [
        Category::Variant,
        Category::AddOn,
        Category::Exclusion,
        Category::TemporalOrder,
        Category::ObjectUsage,
        Category::ServingLocation,
        Category::PrepAlternative,
    ]
    .iter()
    .filter(|c| decided.get(c).is_none_or(|(s, v)| s + v == 0))
    .map(|c| format!("{c:?}"))
    .collect();
    let detail = format!(
        "{n} trajectories, {compared} rule outcomes, {} mismatches, {failure_cases} subtask-failure cases, categories decided {:?}",
        mismatches.len(),
        decided
    );
    if !mismatches.is_empty() {
        return Err(format!("{detail}\n{}", mismatches.iter().take(20).cloned().collect::<Vec<_>>().join("\n")));
    }
    if !missing.is_empty() || failure_cases < 5 || n < 50 {
        return Err(format!("{detail}; undecided categories {missing:?}"));
    }
    Ok(detail)
}
