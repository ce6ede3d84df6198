use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Extracted plain text of one page with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub url: String,
    #[serde(rename = "crawl")]
    pub crawl_id: String,
    #[serde(rename = "date")]
    pub record_date: String,
    pub text: String,
    #[serde(skip)]
    pub char_len: usize,
}

impl Document {
    /// Creates a document whose id is derived from `url` and `text`.
    pub fn new(url: impl Into<String>, crawl_id: impl Into<String>, record_date: impl Into<String>, text: impl Into<String>) -> Self {
        let url = url.into();
        let text = text.into();
        Document {
            id: document_id(&url, &text),
            char_len: text.chars().count(),
            url,
            crawl_id: crawl_id.into(),
            record_date: record_date.into(),
            text,
        }
    }

    /// Replaces the text, keeping the id assigned at extraction time.
    pub fn with_text(&self, text: String) -> Self {
        Document {
            id: self.id.clone(),
            url: self.url.clone(),
            crawl_id: self.crawl_id.clone(),
            record_date: self.record_date.clone(),
            char_len: text.chars().count(),
            text,
        }
    }

    /// Recomputes `char_len` after deserialization.
    pub fn refresh_len(&mut self) {
        self.char_len = self.text.chars().count();
    }
}

/// Stable 128-bit hex digest of a page's url and text.
pub fn document_id(url: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(url.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex::encode(&h.finalize()[..16])
}
