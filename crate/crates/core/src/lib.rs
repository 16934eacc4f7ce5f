pub mod diffnet;
pub mod envs;
pub mod evidential;
pub mod gae;
pub mod harness;
pub mod ppo;
pub mod verify;
