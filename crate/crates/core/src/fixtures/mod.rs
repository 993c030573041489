//! Deterministic synthetic inputs: slide decks, talk videos and a complete
//! demo presentation. Shared by tests, benches and the CLI `fixture` command.

pub mod deck;
pub mod demo;
pub mod video;
