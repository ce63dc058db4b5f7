//! Action-table conformance cases: every action kind with its conditions met and with each
//! listed condition violated.

use std::collections::BTreeSet;

use adapt::actions::{execute, parse_action};
use adapt::world::{default_catalog, generate_scene, SceneGenConfig, SceneGraph};

#[derive(Debug, Clone, Copy)]
pub enum Expect {
    Ok,
    Fail(&'static str),
}

#[derive(Debug, Clone)]
pub struct Case {
    pub kind: &'static str,
    pub name: &'static str,
    pub setup: &'static [&'static str],
    pub action: &'static str,
    /// Start with every entity discovered; otherwise nothing is.
    pub discovered_all: bool,
    pub expect: Expect,
}

const fn ok(kind: &'static str, name: &'static str, setup: &'static [&'static str], action: &'static str) -> Case {
    Case { kind, name, setup, action, discovered_all: true, expect: Expect::Ok }
}

const fn fail(
    kind: &'static str,
    name: &'static str,
    setup: &'static [&'static str],
    action: &'static str,
    reason: &'static str,
) -> Case {
    Case { kind, name, setup, action, discovered_all: true, expect: Expect::Fail(reason) }
}

const fn hidden(kind: &'static str, action: &'static str, reason: &'static str) -> Case {
    Case { kind, name: "referent not discovered", setup: &[], action, discovered_all: false, expect: Expect::Fail(reason) }
}

pub fn base_scene() -> SceneGraph {
    generate_scene(default_catalog(), &SceneGenConfig { inclusion_probability: 1.0, seed: 0 })
}

pub fn cases() -> Vec<Case> {
    const ON_STOVE: &[&str] = &["Move pan_0 to stove_0"];
    const MILK_IN_BOWL: &[&str] = &["Pour oat_milk from milk_1 to bowl_0"];
    vec![
        ok("ask", "question", &[], "Ask \"Do you take sugar?\""),
        ok("open", "furniture", &[], "Open fridge_0"),
        fail("open", "missing", &[], "Open ghost_0", "ghost_0 does not exist"),
        hidden("open", "Open bowl_0", "bowl_0 does not exist"),
        ok("close", "furniture", &[], "Close cabinet_1"),
        fail("close", "missing", &[], "Close ghost_0", "ghost_0 does not exist"),
        ok("turn_on", "appliance", &[], "Turn on stove_0"),
        fail("turn_on", "not an appliance", &[], "Turn on table_0", "table_0 must be a cooking appliance"),
        fail("turn_on", "missing", &[], "Turn on ghost_0", "ghost_0 does not exist"),
        ok("turn_off", "appliance", &["Turn on toaster_0"], "Turn off toaster_0"),
        fail("turn_off", "not an appliance", &[], "Turn off counter_0", "counter_0 must be a cooking appliance"),
        fail("turn_off", "missing", &[], "Turn off ghost_0", "ghost_0 does not exist"),
        ok("heat", "on appliance", ON_STOVE, "Heat pan_0"),
        ok("heat", "container on appliance", &["Move pan_0 to stove_0", "Move apple_0 to pan_0"], "Heat apple_0"),
        fail("heat", "not on appliance", &[], "Heat pan_0", "pan_0 must be on a cooking appliance"),
        fail("heat", "not heatable", &["Move napkins_0 to stove_0"], "Heat napkins_0", "napkins_0 must be a container or edible"),
        fail("heat", "missing", &[], "Heat ghost_0", "ghost_0 does not exist"),
        ok("search", "furniture", &[], "Search fridge_0"),
        fail("search", "missing", &[], "Search ghost_0", "ghost_0 does not exist"),
        ok("look_for", "category", &[], "Look for eggs"),
        Case { discovered_all: false, ..ok("look_for", "nothing discovered yet", &[], "Look for bowl") },
        ok("move", "to furniture", &[], "Move bowl_0 to table_0"),
        ok("move", "serve template", &[], "Serve the object bowl_0 at table_1"),
        ok("move", "place template", &[], "Place the object mug_0 at counter_0"),
        ok("move", "into vessel", &[], "Move apple_0 to bowl_0"),
        fail("move", "missing item", &[], "Move ghost_0 to table_0", "ghost_0 does not exist"),
        fail("move", "missing destination", &[], "Move bowl_0 to ghost_0", "ghost_0 does not exist"),
        hidden("move", "Move bowl_0 to table_0", "bowl_0 does not exist"),
        fail("move", "furniture item", &[], "Move table_0 to counter_0", "table_0 cannot be moved"),
        fail("move", "destination cannot hold", &[], "Move bowl_0 to apple_0", "apple_0 cannot hold objects"),
        fail("move", "into itself", &[], "Move bowl_0 to bowl_0", "bowl_0 cannot be placed"),
        ok("move_from", "contained", &[], "Move egg_0 from egg_carton_0 to bowl_0"),
        fail("move_from", "not contained", &[], "Move egg_0 from bowl_0 to plate_0", "bowl_0 must contain egg_0"),
        fail("move_from", "missing source", &[], "Move egg_0 from ghost_0 to bowl_0", "ghost_0 does not exist"),
        hidden("move_from", "Move egg_0 from egg_carton_0 to bowl_0", "egg_carton_0 does not exist"),
        ok("pour", "contained", &[], "Pour oat_milk from milk_1 to bowl_0"),
        ok("pour", "into template", &[], "Pour oat_milk from milk_1 into mug_0"),
        fail("pour", "not contained", &[], "Pour oat_milk from mug_0 to bowl_0", "mug_0 must contain oat_milk"),
        fail("pour", "missing destination", &[], "Pour oat_milk from milk_1 to ghost_0", "ghost_0 does not exist"),
        ok("mix", "container", MILK_IN_BOWL, "Mix all items in bowl_0 to get milk_mix"),
        fail("mix", "not a container", &[], "Mix all items in apple_0 to get mash", "apple_0 must be a container"),
        fail("mix", "missing", &[], "Mix all items in ghost_0 to get mash", "ghost_0 does not exist"),
        ok("cook", "on appliance", ON_STOVE, "Cook items in pan_0 to get fried_thing"),
        ok("cook", "appliance off", &["Move pan_0 to stove_0", "Turn off stove_0"], "Cook items in pan_0 to get fried_thing"),
        fail("cook", "not on appliance", &[], "Cook items in pan_0 to get fried_thing", "pan_0 must be on a cooking appliance"),
        fail("cook", "missing", &[], "Cook items in ghost_0 to get stew", "ghost_0 does not exist"),
        ok("chop", "on chopping surface", &["Move apple_0 to cutting_board_0"], "Chop apple_0 to get apple_slices"),
        fail("chop", "not on chopping surface", &[], "Chop apple_0 to get apple_slices", "apple_0 must be on a chopping surface"),
        fail("chop", "missing", &[], "Chop ghost_0 to get bits", "ghost_0 does not exist"),
        ok("freeform_container", "edible contents", MILK_IN_BOWL, "Whisk items in bowl_0 to get frothy_milk"),
        fail("freeform_container", "empty", &[], "Whisk items in bowl_0 to get froth", "bowl_0 must contain edible contents"),
        fail(
            "freeform_container",
            "verb needs appliance",
            MILK_IN_BOWL,
            "Brew items in bowl_0 to get brew",
            "bowl_0 must be on a cooking appliance",
        ),
        fail("freeform_container", "missing", &[], "Whisk items in ghost_0 to get froth", "ghost_0 does not exist"),
        ok("freeform_object", "edible", &[], "Crack the object egg_0 to get cracked_egg"),
        fail("freeform_object", "not edible", &[], "Crack the object bowl_0 to get shards", "bowl_0 must be edible"),
        fail(
            "freeform_object",
            "verb needs chopping surface",
            &[],
            "Slice the object apple_0 to get apple_slices",
            "apple_0 must be on a chopping surface",
        ),
        fail("freeform_object", "missing", &[], "Crack the object ghost_0 to get shell", "ghost_0 does not exist"),
        ok("done", "always", &[], "Declare Done"),
    ]
}

/// Runs one case on a copy of `base`. Failures must name the reason and leave the scene and
/// the discovered set untouched.
pub fn run_case(base: &SceneGraph, c: &Case) -> Result<(), String> {
    let mut scene = base.clone();
    let mut discovered: BTreeSet<String> =
        if c.discovered_all { scene.entities.keys().cloned().collect() } else { BTreeSet::new() };
    for s in c.setup {
        let a = parse_action(s).map_err(|e| format!("setup {s}: {e}"))?;
        let o = execute(&mut scene, &mut discovered, &a).map_err(|e| format!("setup {s}: {e}"))?;
        if o.observation.is_failure() {
            return Err(format!("setup {s} failed: {}", o.observation.text));
        }
    }
    let before = (scene.digest(), discovered.clone());
    let a = parse_action(c.action).map_err(|e| format!("parse: {e}"))?;
    let o = execute(&mut scene, &mut discovered, &a).map_err(|e| format!("fault: {e}"))?;
    match c.expect {
        Expect::Ok if o.observation.is_failure() => Err(format!("unexpected failure: {}", o.observation.text)),
        Expect::Ok => Ok(()),
        Expect::Fail(reason) => {
            if !o.observation.is_failure() {
                return Err(format!("expected failure, got {:?}", o.observation.text));
            }
            if !o.observation.text.contains(reason) {
                return Err(format!("failure text {:?} does not name {reason:?}", o.observation.text));
            }
            if (scene.digest(), discovered) != before {
                return Err("failed action mutated the scene".into());
            }
            Ok(())
        }
    }
}
