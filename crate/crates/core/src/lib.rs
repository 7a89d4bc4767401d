pub mod cli;
pub mod config;
pub mod consensus;
pub mod crypto;
pub mod federation;
pub mod fixed;
pub mod ledger;
pub mod report;
pub mod sim;
pub mod state;
pub mod trust;
pub mod verify;
