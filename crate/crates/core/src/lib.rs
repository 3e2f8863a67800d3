pub mod fingerprint;
pub mod wire;
pub mod apportion;
pub mod independence;
pub mod client;
pub mod sim;
pub mod cli;
