pub mod ack;
pub mod bidir;
pub mod engine;
pub mod families;
pub mod harness;
pub mod model;
pub mod vanilla;
