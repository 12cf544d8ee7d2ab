pub mod config;
pub mod corpus;
pub mod dataset;
pub mod encoder;
pub mod evaluation;
pub mod features;
pub mod inference;
pub mod model;
pub mod substrate;
pub mod train;
pub mod vae;
pub mod verify;
