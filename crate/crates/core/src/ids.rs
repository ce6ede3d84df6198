use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum IdError {
    #[error("invalid ISO-639-3 language code {0:?} (expected three lowercase ASCII letters)")]
    Language(String),
    #[error("invalid crawl id {0:?} (expected CC-MAIN-YYYY-WW)")]
    Crawl(String),
}

/// Three-letter ISO-639-3 language code, e.g. `amh`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageCode(String);

impl LanguageCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for LanguageCode {
    type Err = IdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 3 && s.bytes().all(|b| b.is_ascii_lowercase()) {
            Ok(LanguageCode(s.to_string()))
        } else {
            Err(IdError::Language(s.to_string()))
        }
    }
}

impl TryFrom<String> for LanguageCode {
    type Error = IdError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<LanguageCode> for String {
    fn from(c: LanguageCode) -> String {
        c.0
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Common Crawl archive identifier, `CC-MAIN-YYYY-WW`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CrawlId(String);

impl CrawlId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn year(&self) -> u32 {
        self.0[8..12].parse().expect("validated")
    }

    pub fn week(&self) -> u32 {
        self.0[13..15].parse().expect("validated")
    }
}

impl FromStr for CrawlId {
    type Err = IdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let b = s.as_bytes();
        let ok = b.len() == 15
            && s.starts_with("CC-MAIN-")
            && b[8..12].iter().all(u8::is_ascii_digit)
            && b[12] == b'-'
            && b[13..15].iter().all(u8::is_ascii_digit);
        if !ok {
            return Err(IdError::Crawl(s.to_string()));
        }
        let week: u32 = s[13..15].parse().unwrap_or(0);
        if !(1..=53).contains(&week) {
            return Err(IdError::Crawl(s.to_string()));
        }
        Ok(CrawlId(s.to_string()))
    }
}

impl TryFrom<String> for CrawlId {
    type Error = IdError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CrawlId> for String {
    fn from(c: CrawlId) -> String {
        c.0
    }
}

impl fmt::Display for CrawlId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_codes() {
        assert!("amh".parse::<LanguageCode>().is_ok());
        for bad in ["", "am", "AMH", "amha", "am1", "ам"] {
            assert!(bad.parse::<LanguageCode>().is_err(), "{bad}");
        }
    }

    #[test]
    fn crawl_ids() {
        let c: CrawlId = "CC-MAIN-2023-14".parse().unwrap();
        assert_eq!((c.year(), c.week()), (2023, 14));
        for bad in ["CC-MAIN-2023-1", "CC-MAIN-23-14", "cc-main-2023-14", "CC-MAIN-2023-00", "CC-MAIN-2023-14x"] {
            assert!(bad.parse::<CrawlId>().is_err(), "{bad}");
        }
    }

    #[test]
    fn serde_validates() {
        assert!(serde_json::from_str::<LanguageCode>("\"xx\"").is_err());
        let c: CrawlId = serde_json::from_str("\"CC-MAIN-2018-43\"").unwrap();
        assert_eq!(serde_json::to_string(&c).unwrap(), "\"CC-MAIN-2018-43\"");
    }
}
