//! Core of the wallspace display-wall server.
//!
//! The crate is organised bottom-up:
//!
//! - [`spatial`]: floor to perimeter to pixel geometry, activation and column zoning.
//! - [`registry`]: pad sessions, tracked bodies and the binding between them.
//! - [`content`]: the local tagged image corpus and voice query parsing.
//! - [`interaction`]: the authoritative wall state and its gesture/voice transitions.
//! - [`protocol`]: wire envelopes, the codec and the hub that serializes all mutations.
//! - [`tasks`]: the two experiment state machines and their metrics.
//! - [`sim`]: a deterministic headless driver with scripted agents, logging and replay.

pub mod content;
pub mod interaction;
pub mod protocol;
pub mod registry;
pub mod sim;
pub mod spatial;
pub mod tasks;
