pub mod activity;
pub mod aes;
pub mod cpa;
pub mod store;
pub mod synth;
pub mod traces;
pub mod vcd;
