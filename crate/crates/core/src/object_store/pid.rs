use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::StoreError;

pub const PID_SCHEME: &str = "iod:";
const SUFFIX_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
}

/// Persistent identifier of a digital object.
///
/// Canonical text form is `iod:{domain}/{suffix}` for top-level objects and
/// `iod:{domain}/{parent_suffix}.{ordinal}` for chunk objects. Identity,
/// ordering and hashing follow the canonical form, so the content suffix of
/// an L2 pid (not part of its text form) does not participate in equality.
#[derive(Debug, Clone)]
pub struct Pid {
    domain: String,
    suffix: String,
    parent_suffix: Option<String>,
    ordinal: Option<u32>,
}

pub fn is_valid_domain(domain: &str) -> bool {
    !domain.is_empty()
        && domain
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

fn is_hex16(s: &str) -> bool {
    s.len() == SUFFIX_LEN && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Mint a pid from a domain token and the SHA-256 digest of the payload.
///
/// `parent` and `ordinal` must be given together and produce an L2 pid.
pub fn mint_pid(
    domain: &str,
    payload_digest: &[u8; 32],
    parent: Option<&Pid>,
    ordinal: Option<u32>,
) -> Result<Pid, StoreError> {
    if !is_valid_domain(domain) {
        return Err(StoreError::InvalidDomain(domain.to_string()));
    }
    let suffix = hex::encode(&payload_digest[..SUFFIX_LEN / 2]);
    match (parent, ordinal) {
        (None, None) => Ok(Pid {
            domain: domain.to_string(),
            suffix,
            parent_suffix: None,
            ordinal: None,
        }),
        (Some(p), Some(ord)) => {
            if p.level() != Level::L1 {
                return Err(StoreError::InvalidPid(format!("parent {p} is not an L1 pid")));
            }
            if p.domain != domain {
                return Err(StoreError::InvalidPid(format!(
                    "parent {p} belongs to another domain than {domain}"
                )));
            }
            Ok(Pid {
                domain: domain.to_string(),
                suffix,
                parent_suffix: Some(p.suffix.clone()),
                ordinal: Some(ord),
            })
        }
        (None, Some(_)) => Err(StoreError::OrdinalWithoutParent),
        (Some(_), None) => Err(StoreError::ParentWithoutOrdinal),
    }
}

impl Pid {
    pub fn domain(&self) -> &str {
        &self.domain
    }

    /// Content digest prefix. Empty for an L2 pid parsed from text, since the
    /// canonical L2 form does not carry it.
    pub fn suffix(&self) -> &str {
        &self.suffix
    }

    pub fn level(&self) -> Level {
        if self.parent_suffix.is_some() {
            Level::L2
        } else {
            Level::L1
        }
    }

    pub fn parent_suffix(&self) -> Option<&str> {
        self.parent_suffix.as_deref()
    }

    pub fn ordinal(&self) -> Option<u32> {
        self.ordinal
    }

    /// The parent pid of an L2 pid.
    pub fn parent(&self) -> Option<Pid> {
        self.parent_suffix.as_ref().map(|ps| Pid {
            domain: self.domain.clone(),
            suffix: ps.clone(),
            parent_suffix: None,
            ordinal: None,
        })
    }

    pub(crate) fn with_content_suffix(mut self, suffix: &str) -> Pid {
        if self.level() == Level::L2 && self.suffix.is_empty() {
            self.suffix = suffix.to_string();
        }
        self
    }

    fn key(&self) -> (&str, &str, Option<u32>) {
        (
            &self.domain,
            self.parent_suffix.as_deref().unwrap_or(&self.suffix),
            self.ordinal,
        )
    }
}

impl fmt::Display for Pid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.parent_suffix, self.ordinal) {
            (Some(ps), Some(ord)) => write!(f, "{PID_SCHEME}{}/{ps}.{ord}", self.domain),
            _ => write!(f, "{PID_SCHEME}{}/{}", self.domain, self.suffix),
        }
    }
}

impl FromStr for Pid {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StoreError::InvalidPid(s.to_string());
        let rest = s.strip_prefix(PID_SCHEME).ok_or_else(bad)?;
        let (domain, tail) = rest.split_once('/').ok_or_else(bad)?;
        if !is_valid_domain(domain) {
            return Err(bad());
        }
        match tail.split_once('.') {
            None if is_hex16(tail) => Ok(Pid {
                domain: domain.to_string(),
                suffix: tail.to_string(),
                parent_suffix: None,
                ordinal: None,
            }),
            Some((ps, ord)) if is_hex16(ps) => {
                if ord.is_empty() || !ord.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(bad());
                }
                let ordinal: u32 = ord.parse().map_err(|_| bad())?;
                if ordinal.to_string() != ord {
                    return Err(bad());
                }
                Ok(Pid {
                    domain: domain.to_string(),
                    suffix: String::new(),
                    parent_suffix: Some(ps.to_string()),
                    ordinal: Some(ordinal),
                })
            }
            _ => Err(bad()),
        }
    }
}

impl PartialEq for Pid {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Pid {}

impl Hash for Pid {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl PartialOrd for Pid {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pid {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl Serialize for Pid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
