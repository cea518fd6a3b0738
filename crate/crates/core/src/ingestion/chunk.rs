use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::object_store::Pid;

/// How far back a chunk end may retreat to reach a sentence terminator.
pub const SNAP_WINDOW: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkPolicy {
    pub max_chunk_chars: usize,
    pub overlap_chars: usize,
    pub sentence_snap: bool,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy {
            max_chunk_chars: 2000,
            overlap_chars: 200,
            sentence_snap: true,
        }
    }
}

impl ChunkPolicy {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.max_chunk_chars == 0 {
            return Err(IngestError::InvalidPolicy("max_chunk_chars must be positive".into()));
        }
        if self.overlap_chars >= self.max_chunk_chars {
            return Err(IngestError::InvalidPolicy(
                "overlap_chars must be smaller than max_chunk_chars".into(),
            ));
        }
        Ok(())
    }

    /// Half-open character spans covering `[0, len)`.
    pub fn spans(&self, chars: &[char]) -> Vec<(usize, usize)> {
        let n = chars.len();
        let mut out = Vec::new();
        let mut start = 0;
        while start < n {
            if n - start <= self.max_chunk_chars {
                out.push((start, n));
                break;
            }
            let mut end = start + self.max_chunk_chars;
            if self.sentence_snap {
                let floor = end.saturating_sub(SNAP_WINDOW).max(start + self.overlap_chars + 1);
                if let Some(e) = (floor..=end).rev().find(|&e| is_sentence_end(chars, e)) {
                    end = e;
                }
            }
            out.push((start, end));
            start = end - self.overlap_chars;
        }
        out
    }
}

/// True when a sentence ends right before char index `e`.
fn is_sentence_end(chars: &[char], e: usize) -> bool {
    if e == 0 {
        return false;
    }
    match chars[e - 1] {
        '\n' | '。' | '！' | '？' => true,
        '.' | '!' | '?' => chars.get(e).is_none_or(|c| c.is_whitespace()),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub parent_pid: Pid,
    pub ordinal: u32,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Split `text` into ordered chunks of `parent`.
pub fn chunk(parent: &Pid, text: &str, policy: &ChunkPolicy) -> Result<Vec<Chunk>, IngestError> {
    policy.validate()?;
    let chars: Vec<char> = text.chars().collect();
    Ok(policy
        .spans(&chars)
        .into_iter()
        .enumerate()
        .map(|(i, (start, end))| Chunk {
            parent_pid: parent.clone(),
            ordinal: i as u32,
            start,
            end,
            text: chars[start..end].iter().collect(),
        })
        .collect())
}
