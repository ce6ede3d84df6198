//! Extraction of monolingual text corpora from Common Crawl.
//!
//! The pipeline filters the columnar index by language, fetches matching
//! WARC records with HTTP range requests, extracts main-content text,
//! removes duplicated substrings with a suffix array, and writes a sharded
//! dataset with per-stage size accounting.

pub mod dedup;
pub mod document;
pub mod extract;
pub mod http;
pub mod ids;
pub mod index_filter;
pub mod mock;
pub mod pipeline;
pub mod rate_limit;
pub mod report;
pub mod store;
pub mod warc;
pub mod warc_fetch;

pub use document::Document;
pub use ids::{CrawlId, LanguageCode};
