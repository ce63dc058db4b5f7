//! Entity catalog, scene graph state and world mutations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::OnceLock;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::WorldError;

pub const SCHEMA_VERSION: u32 = 1;

pub mod flag {
    pub const EDIBLE: &str = "edible";
    pub const CONTAINER: &str = "container";
    pub const VESSEL: &str = "vessel";
    pub const COOKING_APPLIANCE: &str = "cooking_appliance";
    pub const CHOPPING_SURFACE: &str = "chopping_surface";
    pub const ARTICULATED: &str = "articulated";
    pub const FURNITURE: &str = "furniture";
    pub const ROOM: &str = "room";
    pub const MANDATORY: &str = "mandatory";
}

pub const EXPECTED_ROOMS: usize = 6;
pub const EXPECTED_FURNITURE: usize = 37;
pub const EXPECTED_MOVABLES: usize = 232;
pub const EXPECTED_VERBS: usize = 82;
pub const MANDATORY_IDS: [&str; 5] = [
    "napkins_0",
    "salt_shaker_0",
    "pepper_shaker_0",
    "water_bottle_0",
    "ice_tray_0",
];

const DEFAULT_CATALOG: &str = include_str!("../data/catalog.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub state_tags: BTreeSet<String>,
    #[serde(default)]
    pub contents: Vec<String>,
    #[serde(default)]
    pub flags: BTreeSet<String>,
    #[serde(default)]
    pub location: Option<String>,
}

impl Entity {
    pub fn has(&self, f: &str) -> bool {
        self.flags.contains(f)
    }
    pub fn is_room(&self) -> bool {
        self.has(flag::ROOM)
    }
    pub fn is_furniture(&self) -> bool {
        self.has(flag::FURNITURE)
    }
    pub fn is_movable(&self) -> bool {
        !self.is_room() && !self.is_furniture()
    }
    pub fn is_container(&self) -> bool {
        self.has(flag::CONTAINER) || self.has(flag::VESSEL) || self.has(flag::COOKING_APPLIANCE) || self.is_furniture()
    }
    /// Valid destination for relocation and transfers.
    pub fn can_hold(&self) -> bool {
        self.is_container() || self.is_room()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpec {
    pub id: String,
    pub description: String,
    pub location: String,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub contents: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Requirement {
    ChoppingSurface,
    CookingAppliance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbSpec {
    pub verb: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requires: Option<Requirement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub schema_version: u32,
    pub rooms: Vec<RoomSpec>,
    pub furniture: Vec<EntitySpec>,
    pub movables: Vec<EntitySpec>,
    pub verbs: Vec<VerbSpec>,
    pub mandatory_ids: Vec<String>,
}

impl Catalog {
    pub fn verb(&self, v: &str) -> Option<&VerbSpec> {
        self.verbs.iter().find(|s| s.verb.eq_ignore_ascii_case(v))
    }

    pub fn verb_names(&self) -> Vec<String> {
        self.verbs.iter().map(|v| v.verb.clone()).collect()
    }

    /// Substances an edible catalog entity holds by default.
    pub fn edible_substances(&self) -> BTreeSet<String> {
        self.furniture
            .iter()
            .chain(self.movables.iter())
            .filter(|e| e.flags.iter().any(|f| f == flag::EDIBLE))
            .flat_map(|e| e.contents.iter().cloned())
            .collect()
    }

    fn validate(&self, strict: bool) -> Vec<String> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!("unsupported schema_version {}", self.schema_version));
        }
        if strict {
            if self.rooms.len() != EXPECTED_ROOMS {
                errs.push(format!("rooms size {} ≠ {}", self.rooms.len(), EXPECTED_ROOMS));
            }
            if self.furniture.len() != EXPECTED_FURNITURE {
                errs.push(format!("furniture size {} ≠ {}", self.furniture.len(), EXPECTED_FURNITURE));
            }
            if self.movables.len() != EXPECTED_MOVABLES {
                errs.push(format!("movables size {} ≠ {}", self.movables.len(), EXPECTED_MOVABLES));
            }
            if self.verbs.len() != EXPECTED_VERBS {
                errs.push(format!("verb_whitelist size {} ≠ {}", self.verbs.len(), EXPECTED_VERBS));
            }
            for v in ["dice", "peel"] {
                if self.verb(v).is_none() {
                    errs.push(format!("verb_whitelist lacks \"{v}\""));
                }
            }
            for m in MANDATORY_IDS {
                if !self.mandatory_ids.iter().any(|x| x == m) {
                    errs.push(format!("missing mandatory id {m} in mandatory_ids"));
                }
            }
        }
        let mut ids = BTreeSet::new();
        let rooms: BTreeSet<&str> = self.rooms.iter().map(|r| r.id.as_str()).collect();
        let furn: BTreeSet<&str> = self.furniture.iter().map(|r| r.id.as_str()).collect();
        let movs: BTreeMap<&str, &EntitySpec> = self.movables.iter().map(|m| (m.id.as_str(), m)).collect();
        for id in self
            .rooms
            .iter()
            .map(|r| &r.id)
            .chain(self.furniture.iter().map(|f| &f.id))
            .chain(self.movables.iter().map(|m| &m.id))
        {
            if !is_token(id) {
                errs.push(format!("malformed id \"{id}\""));
            }
            if !ids.insert(id.clone()) {
                errs.push(format!("duplicate id {id}"));
            }
        }
        for m in &self.mandatory_ids {
            if !movs.contains_key(m.as_str()) {
                errs.push(format!("missing mandatory id {m}"));
            }
        }
        for f in &self.furniture {
            if !rooms.contains(f.location.as_str()) {
                errs.push(format!("furniture {} placed in unknown room {}", f.id, f.location));
            }
        }
        for m in &self.movables {
            let loc = m.location.as_str();
            if !rooms.contains(loc) && !furn.contains(loc) && !movs.contains_key(loc) {
                errs.push(format!("movable {} placed at unknown location {}", m.id, loc));
            }
            let mut cur = loc;
            let mut hops = 0;
            while let Some(p) = movs.get(cur) {
                hops += 1;
                if p.id == m.id || hops > movs.len() {
                    errs.push(format!("movable {} has a cyclic default location", m.id));
                    break;
                }
                cur = p.location.as_str();
            }
        }
        for (i, v) in self.verbs.iter().enumerate() {
            if !is_token(&v.verb) {
                errs.push(format!("malformed verb \"{}\"", v.verb));
            }
            if self.verbs[..i].iter().any(|w| w.verb.eq_ignore_ascii_case(&v.verb)) {
                errs.push(format!("duplicate verb {}", v.verb));
            }
        }
        errs
    }
}

pub fn is_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses and validates a catalog document; count invariants are enforced.
pub fn load_catalog(source: &str) -> Result<Catalog, WorldError> {
    let cat: Catalog = serde_json::from_str(source)?;
    let errs = cat.validate(true);
    if errs.is_empty() {
        Ok(cat)
    } else {
        Err(WorldError::InvalidCatalog(errs))
    }
}

/// Like [`load_catalog`] but without the shipped-pack size checks.
pub fn load_custom_catalog(source: &str) -> Result<Catalog, WorldError> {
    let cat: Catalog = serde_json::from_str(source)?;
    let errs = cat.validate(false);
    if errs.is_empty() {
        Ok(cat)
    } else {
        Err(WorldError::InvalidCatalog(errs))
    }
}

pub fn default_catalog() -> &'static Catalog {
    static CAT: OnceLock<Catalog> = OnceLock::new();
    CAT.get_or_init(|| load_catalog(DEFAULT_CATALOG).expect("shipped catalog is valid"))
}

pub fn default_catalog_json() -> &'static str {
    DEFAULT_CATALOG
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneGenConfig {
    pub inclusion_probability: f64,
    pub seed: u64,
}

impl SceneGenConfig {
    pub fn new(inclusion_probability: f64, seed: u64) -> Result<Self, WorldError> {
        if !(0.0..=1.0).contains(&inclusion_probability) {
            return Err(WorldError::Rejected(format!(
                "inclusion probability {inclusion_probability} outside [0, 1]"
            )));
        }
        Ok(Self { inclusion_probability, seed })
    }
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self { inclusion_probability: 0.7, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneGraph {
    pub entities: BTreeMap<String, Entity>,
    pub rooms: Vec<String>,
    pub rng_seed: u64,
    pub verbs: Vec<VerbSpec>,
    pub edible_substances: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct SceneFixture {
    schema_version: u32,
    rng_seed: u64,
    rooms: Vec<Entity>,
    furniture: Vec<Entity>,
    movables: Vec<Entity>,
    #[serde(default)]
    verbs: Vec<VerbSpec>,
    #[serde(default)]
    edible_substances: BTreeSet<String>,
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Builds a randomized scene: every room, furniture item and mandatory object, plus each
/// other movable independently with the configured probability.
pub fn generate_scene(catalog: &Catalog, cfg: &SceneGenConfig) -> SceneGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mandatory: BTreeSet<&str> = catalog.mandatory_ids.iter().map(String::as_str).collect();
    let mut included = BTreeSet::new();
    for m in &catalog.movables {
        let draw = if mandatory.contains(m.id.as_str()) { None } else { Some(uniform(&mut rng)) };
        if draw.is_none_or(|u| u < cfg.inclusion_probability) {
            included.insert(m.id.as_str());
        }
    }
    let specs: BTreeMap<&str, &EntitySpec> = catalog.movables.iter().map(|m| (m.id.as_str(), m)).collect();
    let mut entities = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in &catalog.rooms {
        entities.insert(
            r.id.clone(),
            Entity {
                id: r.id.clone(),
                description: r.description.clone(),
                state_tags: BTreeSet::new(),
                contents: Vec::new(),
                flags: [flag::ROOM.to_string()].into_iter().collect(),
                location: None,
            },
        );
    }
    for f in &catalog.furniture {
        entities.insert(f.id.clone(), spec_entity(f, f.location.clone()));
        order.push(f.id.clone());
    }
    for m in &catalog.movables {
        if !included.contains(m.id.as_str()) {
            continue;
        }
        let mut loc = m.location.as_str();
        while let Some(p) = specs.get(loc) {
            if included.contains(loc) {
                break;
            }
            loc = p.location.as_str();
        }
        entities.insert(m.id.clone(), spec_entity(m, loc.to_string()));
        order.push(m.id.clone());
    }
    for id in &order {
        let loc = entities[id].location.clone().expect("placed");
        entities.get_mut(&loc).expect("parent exists").contents.push(id.clone());
    }
    SceneGraph {
        entities,
        rooms: catalog.rooms.iter().map(|r| r.id.clone()).collect(),
        rng_seed: cfg.seed,
        verbs: catalog.verbs.clone(),
        edible_substances: catalog.edible_substances(),
    }
}

fn spec_entity(s: &EntitySpec, location: String) -> Entity {
    Entity {
        id: s.id.clone(),
        description: s.description.clone(),
        state_tags: BTreeSet::new(),
        contents: s.contents.clone(),
        flags: s.flags.iter().cloned().collect(),
        location: Some(location),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    Spawn { entity: Entity },
    Relocate { id: String, dest: String },
    SetState { id: String, tag: String, on: bool },
    TransferContent { substance: String, from: String, to: String },
    ConsumeContents { id: String },
    RenameResult { id: String, new_contents: Vec<String> },
    Remove { id: String },
}

impl SceneGraph {
    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entities.contains_key(id)
    }

    pub fn is_entity(&self, token: &str) -> bool {
        self.entities.contains_key(token)
    }

    pub fn movable_count(&self) -> usize {
        self.entities.values().filter(|e| e.is_movable()).count()
    }

    pub fn furniture_ids(&self) -> Vec<String> {
        self.walk().into_iter().filter(|id| self.entities[id].is_furniture()).collect()
    }

    /// Depth-first id order: rooms, then each entity followed by its nested contents.
    pub fn walk(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.entities.len());
        for r in &self.rooms {
            self.walk_from(r, &mut out);
        }
        out
    }

    pub fn walk_from(&self, id: &str, out: &mut Vec<String>) {
        if let Some(e) = self.entities.get(id) {
            out.push(id.to_string());
            for c in &e.contents {
                if self.entities.contains_key(c) {
                    self.walk_from(c, out);
                }
            }
        }
    }

    /// Entity children in content order.
    pub fn children<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a Entity> + 'a {
        self.entities
            .get(id)
            .map(|e| e.contents.as_slice())
            .unwrap_or(&[])
            .iter()
            .filter_map(move |c| self.entities.get(c))
    }

    /// Non-entity content tokens of an entity.
    pub fn substances(&self, id: &str) -> Vec<String> {
        self.entities
            .get(id)
            .map(|e| e.contents.iter().filter(|c| !self.entities.contains_key(*c)).cloned().collect())
            .unwrap_or_default()
    }

    pub fn ancestors(&self, id: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = self.entities.get(id).and_then(|e| e.location.clone());
        while let Some(p) = cur {
            if out.contains(&p) || out.len() > self.entities.len() {
                break;
            }
            cur = self.entities.get(&p).and_then(|e| e.location.clone());
            out.push(p);
        }
        out
    }

    pub fn is_edible_token(&self, token: &str) -> bool {
        match self.entities.get(token) {
            Some(e) => e.has(flag::EDIBLE),
            None => self.edible_substances.contains(token),
        }
    }

    pub fn verb(&self, v: &str) -> Option<&VerbSpec> {
        self.verbs.iter().find(|s| s.verb.eq_ignore_ascii_case(v))
    }

    /// "{desc}" or "{desc}, contains a, b" for substance contents.
    pub fn describe(&self, id: &str) -> String {
        let Some(e) = self.entities.get(id) else { return String::new() };
        let subs = self.substances(id);
        if subs.is_empty() {
            e.description.clone()
        } else {
            format!("{}, contains {}", e.description, subs.join(", "))
        }
    }

    /// Lowest-suffix free id for a result name.
    pub fn allocate_id(&self, name: &str) -> String {
        let slug = slugify(name);
        (0..)
            .map(|i| format!("{slug}_{i}"))
            .find(|c| !self.entities.contains_key(c))
            .expect("unbounded")
    }

    /// Checks the forest, parent/contents agreement and id invariants.
    pub fn validate(&self) -> Result<(), WorldError> {
        let mut errs = Vec::new();
        for (id, e) in &self.entities {
            if id != &e.id {
                errs.push(format!("key {id} holds entity {}", e.id));
            }
            if e.is_room() {
                if e.location.is_some() {
                    errs.push(format!("room {id} has a location"));
                }
                if !self.rooms.contains(id) {
                    errs.push(format!("room {id} missing from root list"));
                }
                continue;
            }
            match &e.location {
                None => errs.push(format!("{id} has no location")),
                Some(p) => match self.entities.get(p) {
                    None => errs.push(format!("{id} located at unknown {p}")),
                    Some(pe) => {
                        let n = pe.contents.iter().filter(|c| *c == id).count();
                        if n != 1 {
                            errs.push(format!("{p} lists {id} {n} times"));
                        }
                    }
                },
            }
            for c in &e.contents {
                if let Some(ce) = self.entities.get(c) {
                    if ce.location.as_deref() != Some(id.as_str()) {
                        errs.push(format!("{id} lists {c} located elsewhere"));
                    }
                }
            }
            let anc = self.ancestors(id);
            if anc.contains(id) || anc.last().is_none_or(|r| !self.rooms.contains(r)) {
                errs.push(format!("{id} is not rooted at a room"));
            }
        }
        for r in &self.rooms {
            if !self.entities.get(r).is_some_and(|e| e.is_room()) {
                errs.push(format!("root {r} is not a room"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(WorldError::InvalidScene(errs))
        }
    }

    fn need(&self, id: &str) -> Result<&Entity, WorldError> {
        self.entities.get(id).ok_or_else(|| WorldError::UnknownId(id.to_string()))
    }

    fn detach(&mut self, id: &str) {
        if let Some(loc) = self.entities.get(id).and_then(|e| e.location.clone()) {
            if let Some(p) = self.entities.get_mut(&loc) {
                if let Some(i) = p.contents.iter().position(|c| c == id) {
                    p.contents.remove(i);
                }
            }
        }
    }

    fn drop_subtree(&mut self, id: &str) {
        let mut ids = Vec::new();
        self.walk_from(id, &mut ids);
        self.detach(id);
        for i in ids {
            self.entities.remove(&i);
        }
    }

    /// Applies one mutation and returns a summary of the change.
    pub fn apply_mutation(&mut self, m: &Mutation) -> Result<String, WorldError> {
        match m {
            Mutation::Spawn { entity } => {
                if self.entities.contains_key(&entity.id) {
                    return Err(WorldError::Rejected(format!("{} already exists", entity.id)));
                }
                let loc = entity
                    .location
                    .clone()
                    .ok_or_else(|| WorldError::Rejected(format!("{} has no location", entity.id)))?;
                if !self.need(&loc)?.can_hold() {
                    return Err(WorldError::NotContainer(loc));
                }
                let mut e = entity.clone();
                e.contents.retain(|c| !self.entities.contains_key(c));
                self.entities.insert(e.id.clone(), e);
                self.entities.get_mut(&loc).expect("checked").contents.push(entity.id.clone());
                Ok(format!("{} is now in/on {}", entity.id, loc))
            }
            Mutation::Relocate { id, dest } => {
                let e = self.need(id)?;
                if !e.is_movable() {
                    return Err(WorldError::Rejected(format!("{id} cannot be moved")));
                }
                let d = self.need(dest)?;
                if !d.can_hold() {
                    return Err(WorldError::NotContainer(dest.clone()));
                }
                if dest == id || self.ancestors(dest).contains(id) {
                    return Err(WorldError::Rejected(format!("cannot place {id} inside itself")));
                }
                let from = e.location.clone().unwrap_or_default();
                self.detach(id);
                self.entities.get_mut(id).expect("exists").location = Some(dest.clone());
                self.entities.get_mut(dest).expect("exists").contents.push(id.clone());
                Ok(format!("Moved {id} from {from} to {dest}"))
            }
            Mutation::SetState { id, tag, on } => {
                let e = self.entities.get_mut(id).ok_or_else(|| WorldError::UnknownId(id.clone()))?;
                if *on {
                    e.state_tags.insert(tag.clone());
                    Ok(format!("{id} is now {tag}"))
                } else {
                    e.state_tags.remove(tag);
                    Ok(format!("{id} is no longer {tag}"))
                }
            }
            Mutation::TransferContent { substance, from, to } => {
                let src = self.need(from)?;
                if self.entities.contains_key(substance) || !src.contents.contains(substance) {
                    return Err(WorldError::MissingContent { entity: from.clone(), content: substance.clone() });
                }
                let keeps_stock = !(src.has(flag::VESSEL) || src.has(flag::COOKING_APPLIANCE));
                if !self.need(to)?.can_hold() {
                    return Err(WorldError::NotContainer(to.clone()));
                }
                if !keeps_stock {
                    let s = self.entities.get_mut(from).expect("exists");
                    if let Some(i) = s.contents.iter().position(|c| c == substance) {
                        s.contents.remove(i);
                    }
                }
                let dst = self.entities.get_mut(to).expect("exists");
                if !dst.contents.contains(substance) {
                    dst.contents.push(substance.clone());
                }
                Ok(format!("{to} now contains {substance}"))
            }
            Mutation::ConsumeContents { id } => {
                let kids: Vec<String> = self.need(id)?.contents.clone();
                for k in &kids {
                    if self.entities.contains_key(k) {
                        self.drop_subtree(k);
                    }
                }
                self.entities.get_mut(id).expect("exists").contents.clear();
                Ok(format!("{id} is now empty"))
            }
            Mutation::RenameResult { id, new_contents } => {
                self.apply_mutation(&Mutation::ConsumeContents { id: id.clone() })?;
                let e = self.entities.get_mut(id).expect("exists");
                e.contents = new_contents.clone();
                for c in new_contents {
                    self.edible_substances.insert(c.clone());
                }
                Ok(format!("{id} now contains {}", new_contents.join(", ")))
            }
            Mutation::Remove { id } => {
                if !self.need(id)?.is_movable() {
                    return Err(WorldError::Rejected(format!("{id} cannot be removed")));
                }
                self.drop_subtree(id);
                Ok(format!("{id} no longer exists"))
            }
        }
    }

    fn render_tree(&self, out: &mut String, id: &str, depth: usize, movables: bool) {
        let e = &self.entities[id];
        let _ = writeln!(out, "{}- {} ({})", "  ".repeat(depth), id, self.describe(id));
        for c in &e.contents {
            if let Some(ce) = self.entities.get(c) {
                if movables || !ce.is_movable() {
                    self.render_tree(out, c, depth + 1, movables);
                }
            }
        }
    }

    /// Rooms and furniture only.
    pub fn render_layout(&self) -> String {
        let mut s = String::new();
        for r in &self.rooms {
            self.render_tree(&mut s, r, 0, false);
        }
        s
    }

    /// Full nested state including movables.
    pub fn render_state(&self) -> String {
        let mut s = String::new();
        for r in &self.rooms {
            self.render_tree(&mut s, r, 0, true);
        }
        s
    }

    fn fixture(&self) -> SceneFixture {
        let mut rooms = Vec::new();
        let mut furniture = Vec::new();
        let mut movables = Vec::new();
        for id in self.walk() {
            let e = self.entities[&id].clone();
            if e.is_room() {
                rooms.push(e);
            } else if e.is_furniture() {
                furniture.push(e);
            } else {
                movables.push(e);
            }
        }
        SceneFixture {
            schema_version: SCHEMA_VERSION,
            rng_seed: self.rng_seed,
            rooms,
            furniture,
            movables,
            verbs: self.verbs.clone(),
            edible_substances: self.edible_substances.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.fixture()).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let f: SceneFixture = serde_json::from_str(text)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(WorldError::InvalidScene(vec![format!(
                "unsupported schema_version {}",
                f.schema_version
            )]));
        }
        let mut entities = BTreeMap::new();
        let mut rooms = Vec::new();
        let mut errs = Vec::new();
        let mut edible = f.edible_substances;
        for mut e in f.rooms {
            e.flags.insert(flag::ROOM.to_string());
            rooms.push(e.id.clone());
            if entities.insert(e.id.clone(), e).is_some() {
                errs.push("duplicate room id".to_string());
            }
        }
        for e in f.furniture.into_iter().chain(f.movables) {
            let id = e.id.clone();
            if entities.insert(id.clone(), e).is_some() {
                errs.push(format!("duplicate id {id}"));
            }
        }
        for e in entities.values() {
            if e.has(flag::EDIBLE) {
                for c in &e.contents {
                    if !entities.contains_key(c) {
                        edible.insert(c.clone());
                    }
                }
            }
        }
        if !errs.is_empty() {
            return Err(WorldError::InvalidScene(errs));
        }
        let verbs = if f.verbs.is_empty() { default_catalog().verbs.clone() } else { f.verbs };
        let scene = SceneGraph { entities, rooms, rng_seed: f.rng_seed, verbs, edible_substances: edible };
        scene.validate()?;
        Ok(scene)
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

pub fn slugify(name: &str) -> String {
    let mut s = String::new();
    for c in name.trim().chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    let s = s.trim_matches('_').to_string();
    if s.is_empty() {
        "item".to_string()
    } else {
        s
    }
}

/// Id with a trailing "_N" removed.
pub fn id_stem(id: &str) -> &str {
    match id.rsplit_once('_') {
        Some((head, tail)) if !head.is_empty() && !tail.is_empty() && tail.chars().all(|c| c.is_ascii_digit()) => head,
        _ => id,
    }
}
