//! Curve endpoint check over the synthetic corpus.

use adapt::prefs::{default_personas, default_tasks, evaluate, temporal_curve, TrajectoryLedger};
use adapt::world::{default_catalog, generate_scene, SceneGenConfig};

use super::prefs_oracle::synth_trajectories;

pub fn curve_endpoints() -> Result<String, String> {
    let pack = default_tasks();
    let mut checked = 0;
    for (i, t) in synth_trajectories(24, 9).iter().enumerate() {
        let initial = generate_scene(default_catalog(), &SceneGenConfig { inclusion_probability: 1.0, seed: i as u64 });
        let mut ledger = TrajectoryLedger::new();
        for s in &t.steps {
            ledger.record_step(s.as_record()).map_err(|e| e.to_string())?;
        }
        for p in default_personas() {
            let finals = evaluate(&p.preferences, &ledger, &t.task, &t.final_scene, pack);
            if finals.satisfied.is_empty() {
                continue;
            }
            let curve = temporal_curve(&t.steps, &p.preferences, &t.task, &initial, pack).map_err(|e| e.to_string())?;
            let (x, y) = *curve.last().ok_or("empty curve")?;
            if x != 1.0 || y != 1.0 {
                return Err(format!("traj {i} persona {}: endpoint ({x}, {y})", p.id));
            }
            if curve.iter().any(|(_, v)| !(0.0..=1.0).contains(v)) {
                return Err(format!("traj {i} persona {}: value outside [0, 1]", p.id));
            }
            checked += 1;
        }
    }
    if checked == 0 {
        return Err("no trajectory had a satisfied rule".into());
    }
    Ok(format!("{checked} curves end at 1.0"))
}
