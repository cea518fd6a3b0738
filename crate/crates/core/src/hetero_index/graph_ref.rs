use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::object_store::Pid;
use crate::text::normalize_ws;

/// Typed reference to any element of the heterogeneous index.
///
/// The derived order (tag first, then key) is the tie-break for every
/// ranking and merge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GraphRef {
    Object(Pid),
    Chunk(Pid),
    /// Normalized (lowercase, single-spaced) canonical name.
    Node(String),
    /// Unordered endpoint pair stored with the smaller key first.
    Edge(String, String),
    Fact(String),
}

/// Case-insensitive identity key of a KG node name.
pub fn node_key(name: &str) -> String {
    normalize_ws(&name.replace('|', " "))
}

impl GraphRef {
    pub fn node(name: &str) -> Self {
        GraphRef::Node(node_key(name))
    }

    pub fn edge(a: &str, b: &str) -> Self {
        let (a, b) = (node_key(a), node_key(b));
        if a <= b {
            GraphRef::Edge(a, b)
        } else {
            GraphRef::Edge(b, a)
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            GraphRef::Object(_) => "object",
            GraphRef::Chunk(_) => "chunk",
            GraphRef::Node(_) => "node",
            GraphRef::Edge(..) => "edge",
            GraphRef::Fact(_) => "fact",
        }
    }

    pub fn pid(&self) -> Option<&Pid> {
        match self {
            GraphRef::Object(p) | GraphRef::Chunk(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for GraphRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphRef::Object(p) | GraphRef::Chunk(p) => write!(f, "{}:{p}", self.tag()),
            GraphRef::Node(k) | GraphRef::Fact(k) => write!(f, "{}:{k}", self.tag()),
            GraphRef::Edge(a, b) => write!(f, "edge:{a}|{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed graph ref {0:?}")]
pub struct ParseGraphRefError(pub String);

impl FromStr for GraphRef {
    type Err = ParseGraphRefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseGraphRefError(s.to_string());
        let (tag, key) = s.split_once(':').ok_or_else(err)?;
        if key.is_empty() {
            return Err(err());
        }
        Ok(match tag {
            "object" => GraphRef::Object(key.parse().map_err(|_| err())?),
            "chunk" => GraphRef::Chunk(key.parse().map_err(|_| err())?),
            "node" => GraphRef::Node(key.to_string()),
            "edge" => {
                let (a, b) = key.split_once('|').ok_or_else(err)?;
                GraphRef::edge(a, b)
            }
            "fact" => GraphRef::Fact(key.to_string()),
            _ => return Err(err()),
        })
    }
}

impl Serialize for GraphRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GraphRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_order() {
        let pid: Pid = "iod:law/ba7816bf8f01cfea".parse().unwrap();
        let refs = vec![
            GraphRef::Object(pid.clone()),
            GraphRef::Chunk(pid),
            GraphRef::node("Ti3SiC2"),
            GraphRef::edge("Ti3SiC2", "MAX phase"),
            GraphRef::Fact("0123456789abcdef".into()),
        ];
        for r in &refs {
            assert_eq!(&r.to_string().parse::<GraphRef>().unwrap(), r);
        }
        let mut sorted = refs.clone();
        sorted.reverse();
        sorted.sort();
        assert_eq!(sorted, refs);
        assert_eq!(GraphRef::edge("b", "a"), GraphRef::edge("A", "B"));
    }
}
