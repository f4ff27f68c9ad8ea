//! Geographic consistency auditing for IP address registrations.
//!
//! The crate ingests bulk WHOIS dumps, aligns the registered prefixes with
//! a BGP routing table, places each prefix within a speed-of-light bound
//! derived from latency measurements, and sorts registrations into five
//! consistency classes.

pub mod bgp;
pub mod classify;
pub mod cli;
pub mod error;
pub mod geo;
pub mod jsonl;
pub mod measure;
pub mod registry;
pub mod report;
pub mod targets;
pub mod trie;
pub mod vantage;
pub mod whois;

pub use error::{Error, Result};
