//! Measures how much of the web's hosting infrastructure is covered by
//! RPKI route origin authorizations.
//!
//! The pipeline runs in stages: resolve a ranked domain list, map the
//! resulting addresses to announced prefixes and origins, validate each
//! prefix/origin pair against a ROA set, label CDN-hosted domains, and
//! aggregate everything into rank-binned statistics.

pub mod analytics;
pub mod cdn_classifier;
pub mod dns_resolution;
pub mod domain_ingest;
pub mod net;
pub mod pipeline;
pub mod rib_store;
pub mod roa_validation;
pub mod trie;
