//! Exhaustive truth table for the Δq/Δt selection rule against a direct re-statement.

use std::collections::BTreeSet;

use adapt::refdpo::{select_datapoint, Provenance, ReflectionConfig, StepScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Branch {
    TeacherBetter,
    Question,
    TeacherClose,
    Skip,
}

pub fn reference(dt: f64, dq: Option<f64>, eps1: f64, eps2: f64) -> Branch {
    if dt < 0.0 {
        Branch::TeacherBetter
    } else if dq.is_some_and(|q| q > eps1) {
        Branch::Question
    } else if dt < eps2 {
        Branch::TeacherClose
    } else {
        Branch::Skip
    }
}

fn scores(dt: f64, dq: Option<f64>) -> StepScores {
    StepScores { p_teacher: 0.5, p_student: 0.5 + dt, p_teacher_given_q: dq.map(|q| 0.5 + q), delta_q: dq, delta_t: dt }
}

pub fn algorithm_grid() -> Result<String, String> {
    let eps1 = 0.05;
    let mut seen = BTreeSet::new();
    let mut cases = 0;
    for dt in [-0.2, 0.0, 0.05, 0.2] {
        for dq in [Some(-0.1), Some(0.0), Some(eps1), Some(eps1 + 0.01), None] {
            for eps2 in [0.0, 0.1, 0.3] {
                let cfg = ReflectionConfig { epsilon1: eps1, epsilon2: eps2, ..ReflectionConfig::default() };
                let want = reference(dt, dq, eps1, eps2);
                let a_q = dq.map(|_| "Ask \"Which cereal do you like?\"");
                let got = select_datapoint(&scores(dt, dq), "Look for cereal", a_q, "Look for bowl", &cfg);
                let got_branch = match &got {
                    None => Branch::Skip,
                    Some(s) if s.provenance == Provenance::Question => {
                        if Some(s.chosen.as_str()) != a_q {
                            return Err(format!("question branch chose {:?}", s.chosen));
                        }
                        Branch::Question
                    }
                    Some(s) => {
                        if s.chosen != "Look for cereal" {
                            return Err(format!("teacher branch chose {:?}", s.chosen));
                        }
                        if dt < 0.0 { Branch::TeacherBetter } else { Branch::TeacherClose }
                    }
                };
                if got_branch != want {
                    return Err(format!("dt={dt} dq={dq:?} eps2={eps2}: expected {want:?}, got {got_branch:?}"));
                }
                seen.insert(want);
                cases += 1;
            }
        }
    }
    if seen.len() != 4 {
        return Err(format!("only branches {seen:?} observed"));
    }
    Ok(format!("{cases} grid points, 0 disagreements, branches {seen:?}"))
}
