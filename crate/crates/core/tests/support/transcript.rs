//! Replays the published omelette and cereal transcripts against a hand-built fixture.

use std::collections::BTreeSet;

use adapt::actions::{execute, parse_action, ObservationKind};
use adapt::world::SceneGraph;

pub const FIXTURE: &str = include_str!("../fixtures/breakfast_transcript.json");

pub const EGGS_OBSERVATION: &str = "Found egg_carton_0 (carton of 12 eggs) in/on fridge_0, egg_6 (brown egg) in/on egg_carton_0, egg_5 (brown egg) in/on egg_carton_0, egg_3 (brown egg) in/on egg_carton_0, egg_2 (brown egg) in/on egg_carton_0, egg_4 (brown egg) in/on egg_carton_0";

pub const CEREAL_OBSERVATION: &str = "Found cereal_box_4 (a box of cocoa puffs, contains cocoa_puffs_cereal) in/on cabinet_0, cereal_box_5 (a box of classic corn flakes, contains corn_flakes_cereal) in/on cabinet_0, cereal_box_0 (carton of fruit loops, contains fruit_loops_cereal) in/on cabinet_0";

pub fn transcript_replay() -> Result<String, String> {
    let mut scene = SceneGraph::from_json(FIXTURE).map_err(|e| e.to_string())?;
    let mut discovered = BTreeSet::new();
    let mut step = |text: &str| {
        let a = parse_action(text).map_err(|e| format!("{text}: {e}"))?;
        let o = execute(&mut scene, &mut discovered, &a).map_err(|e| format!("{text}: {e}"))?;
        Ok::<_, String>(o.observation)
    };
    for q in [
        "Ask \"Person1, would you like any fillings in your omelette, such as vegetables, cheese, or meats, and if so, what would be your top choices?\"",
        "Ask \"user, what type of cheese would you prefer in your omelette, such as cheddar, mozzarella, feta, or something else?\"",
    ] {
        let o = step(q)?;
        if o.kind != ObservationKind::UserReply || !o.text.is_empty() {
            return Err(format!("ask produced {:?}", o.text));
        }
    }
    let eggs = step("Look for eggs")?;
    if eggs.text != EGGS_OBSERVATION {
        return Err(format!("eggs observation differs: {}", eggs.text));
    }
    let ids: Vec<&str> = eggs.discovered.iter().map(|d| d.id.as_str()).collect();
    if ids != ["egg_carton_0", "egg_6", "egg_5", "egg_3", "egg_2", "egg_4"] {
        return Err(format!("eggs discovery set {ids:?}"));
    }
    let cereal = step("Look for cereal")?;
    if cereal.text != CEREAL_OBSERVATION {
        return Err(format!("cereal observation differs: {}", cereal.text));
    }
    Ok("egg_carton_0 and five eggs, three cereal boxes reproduced verbatim".into())
}
