//! Tokenization, stopwords and small text helpers shared by every layer.
//!
//! Tokens are lowercase runs of letters and digits. Runs of CJK ideographs
//! (and kana/hangul) are emitted as overlapping bigrams, a lone CJK
//! character as a unigram.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

const STOPWORDS_DATA: &str = include_str!("../data/stopwords.txt");

/// The shipped English stopword list (150 entries).
pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_DATA
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

pub(crate) fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // CJK ext A
        | 0x4E00..=0x9FFF    // CJK unified
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F)
}

/// A token together with the surface form it was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub norm: String,
    pub surface: &'a str,
}

/// Tokenize keeping surface forms (used where original casing matters).
pub fn tokens_with_surface(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    let mut cjk_run: Vec<(usize, char)> = Vec::new();

    fn flush_cjk<'a>(text: &'a str, run: &mut Vec<(usize, char)>, out: &mut Vec<Token<'a>>) {
        match run.len() {
            0 => {}
            1 => {
                let (i, c) = run[0];
                out.push(Token {
                    norm: c.to_string(),
                    surface: &text[i..i + c.len_utf8()],
                });
            }
            _ => {
                for pair in run.windows(2) {
                    let (i, _) = pair[0];
                    let (j, c2) = pair[1];
                    let surface = &text[i..j + c2.len_utf8()];
                    out.push(Token {
                        norm: surface.to_string(),
                        surface,
                    });
                }
            }
        }
        run.clear();
    }

    for (i, c) in text.char_indices() {
        if is_cjk(c) {
            if let Some(s) = word_start.take() {
                let surface = &text[s..i];
                out.push(Token {
                    norm: surface.to_lowercase(),
                    surface,
                });
            }
            cjk_run.push((i, c));
        } else if c.is_alphanumeric() {
            flush_cjk(text, &mut cjk_run, &mut out);
            if word_start.is_none() {
                word_start = Some(i);
            }
        } else {
            flush_cjk(text, &mut cjk_run, &mut out);
            if let Some(s) = word_start.take() {
                let surface = &text[s..i];
                out.push(Token {
                    norm: surface.to_lowercase(),
                    surface,
                });
            }
        }
    }
    flush_cjk(text, &mut cjk_run, &mut out);
    if let Some(s) = word_start {
        let surface = &text[s..];
        out.push(Token {
            norm: surface.to_lowercase(),
            surface,
        });
    }
    out
}

/// Lowercase tokens in order of appearance.
pub fn tokenize(text: &str) -> Vec<String> {
    tokens_with_surface(text).into_iter().map(|t| t.norm).collect()
}

/// Tokens with stopwords removed.
pub fn content_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().filter(|t| !is_stopword(t)).collect()
}

pub fn content_token_set(text: &str) -> BTreeSet<String> {
    content_tokens(text).into_iter().collect()
}

/// Top-`n` non-stopword tokens by frequency, ties broken by first appearance.
/// Returned in the surface form of their first occurrence.
pub fn top_keywords(text: &str, n: usize) -> Vec<String> {
    let mut counts: HashMap<String, (usize, usize, String)> = HashMap::new();
    for (pos, tok) in tokens_with_surface(text).into_iter().enumerate() {
        if is_stopword(&tok.norm) || tok.norm.chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        counts
            .entry(tok.norm)
            .and_modify(|e| e.0 += 1)
            .or_insert((1, pos, tok.surface.to_string()));
    }
    let mut ranked: Vec<_> = counts.into_values().collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(n).map(|(_, _, s)| s).collect()
}

/// Split into sentences on `.`, `!`, `?` (followed by whitespace or end)
/// and on CJK full stops. Each sentence keeps its terminator.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        let end_here = match c {
            '。' | '！' | '？' => true,
            '.' | '!' | '?' => chars.get(k + 1).is_none_or(|(_, n)| n.is_whitespace()),
            '\n' => chars.get(k + 1).is_some_and(|(_, n)| *n == '\n'),
            _ => false,
        };
        if end_here {
            let end = i + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            start = end;
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

/// Truncate to at most `max_chars` characters without splitting a code point.
pub fn truncate_chars(s: &str, max_chars: usize) -> &str {
    match s.char_indices().nth(max_chars) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

/// Fraction of the query's content tokens present in `text`.
pub fn query_overlap(query: &str, text: &str) -> f64 {
    let q = content_token_set(query);
    if q.is_empty() {
        return 0.0;
    }
    let t = content_token_set(text);
    q.intersection(&t).count() as f64 / q.len() as f64
}

/// Jaccard similarity of lowercase token sets.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<String> = tokenize(a).into_iter().collect();
    let sb: BTreeSet<String> = tokenize(b).into_iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    inter / union
}

/// Lowercase, collapse whitespace. Used for containment checks.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopword_list_has_150_entries() {
        assert_eq!(stopwords().len(), 150);
        assert!(is_stopword("the"));
        assert!(!is_stopword("help"));
    }

    #[test]
    fn tokenizes_words_and_digits() {
        assert_eq!(
            tokenize("Ti3SiC2 melts at 3200K, mostly."),
            vec!["ti3sic2", "melts", "at", "3200k", "mostly"]
        );
    }

    #[test]
    fn cjk_runs_become_bigrams() {
        assert_eq!(tokenize("合同法 law"), vec!["合同", "同法", "law"]);
        assert_eq!(tokenize("法"), vec!["法"]);
    }

    #[test]
    fn keywords_keep_first_surface_form() {
        let kw = top_keywords(
            "Ti3SiC2 is a MAX phase. Ti3SiC2 melts late. The ti3sic2 phase is stiff.",
            3,
        );
        assert_eq!(kw, vec!["Ti3SiC2", "phase", "MAX"]);
    }

    #[test]
    fn sentence_split_ignores_decimal_points() {
        assert_eq!(
            split_sentences("Value is 3.5 mm. Next one! Done"),
            vec!["Value is 3.5 mm.", "Next one!", "Done"]
        );
    }

    #[test]
    fn truncate_respects_char_boundaries() {
        assert_eq!(truncate_chars("héllo", 2), "hé");
        assert_eq!(truncate_chars("ab", 5), "ab");
    }
}
