pub mod adversary;
pub mod cluster;
pub mod codec;
pub mod config;
pub mod crypto;
pub mod rsu;
pub mod scms;
pub mod sim;
pub mod vehicle;
pub mod ledger;
pub mod metrics;
pub mod runner;
pub mod world;
#[doc(hidden)]
pub mod testkit;
