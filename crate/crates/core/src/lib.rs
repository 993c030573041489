pub mod analysis;
pub mod curator;
pub mod exec;
pub mod extract;
pub mod fingerprint;
pub mod fixtures;
pub mod gateway;
pub mod intake;
pub mod model;
pub mod pipeline;
pub mod render;
pub mod storyboard;
pub mod sync;
pub mod synthesis;
pub mod transcript;
pub mod video;
