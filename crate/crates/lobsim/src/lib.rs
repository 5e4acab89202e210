//! Deterministic limit-order-book laboratory.
//!
//! Replays L3 market data (or a seeded synthetic flow) through a book that
//! tracks hypothetical one-unit "shadow" orders, and measures their fill
//! behaviour, queue position, markouts, strategy PnL and post-fill reversal.

pub mod book;
pub mod data;
pub mod event;
pub mod experiment;
pub mod fill_prob;
pub mod markout;
pub mod reversal;
pub mod stats;
pub mod strategy;
pub mod synth;
pub mod venue;
