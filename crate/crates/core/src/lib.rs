//! Dependency-aware multi-stage prompt pipeline for structured RPG content
//! generation.
//!
//! The engine runs five fixed stages — world, NPC roster, player character,
//! campaign quest set, and per-quest extended elaboration — where each stage's
//! prompt embeds the validated JSON artifacts of every preceding stage. Model
//! replies are checked against fixed schemas, raw text is persisted before any
//! parsing, and cross-artifact references are linted after the fact.

pub mod consistency;
pub mod evalkit;
pub mod pipeline;
pub mod prompts;
pub mod provider;
pub mod sample;
pub mod schema;
pub mod store;
