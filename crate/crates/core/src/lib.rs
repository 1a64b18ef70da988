pub mod attack;
pub mod cli;
pub mod pipeline;
pub mod policy;
pub mod rob;
pub mod ssc;
pub mod timelines;
pub mod verify;
pub mod workload;
