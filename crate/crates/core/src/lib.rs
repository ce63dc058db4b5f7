//! Household-task text simulator, preference-aware benchmark harness and reflection
//! preference-data pipeline.

pub mod actions;
pub mod config;
pub mod error;
pub mod grammar;
pub mod harness;
pub mod llmclient;
pub mod persona;
pub mod policy;
pub mod prefs;
pub mod refdpo;
pub mod student;
pub mod world;
