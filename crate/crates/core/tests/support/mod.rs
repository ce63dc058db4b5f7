#![allow(dead_code)]

pub mod contracts;
pub mod curve;
pub mod dataset;
pub mod dry_run;
pub mod leak;
pub mod matrix;
pub mod prefs_oracle;
pub mod selection;
pub mod transcript;
