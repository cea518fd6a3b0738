use std::collections::{BTreeSet, HashMap};

use crate::hetero_index::GraphRef;
use crate::text::content_tokens;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

/// `ln((N - df + 0.5) / (df + 0.5) + 1)`
pub fn idf(n: usize, df: usize) -> f64 {
    ((n as f64 - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
}

/// Okapi BM25 over the content tokens (stopwords removed) of each document.
#[derive(Debug, Clone, Default)]
pub struct Bm25Index {
    refs: Vec<GraphRef>,
    lengths: Vec<usize>,
    postings: HashMap<String, Vec<(usize, u32)>>,
    avgdl: f64,
}

impl Bm25Index {
    pub fn build<'a>(docs: impl IntoIterator<Item = (GraphRef, &'a str)>) -> Self {
        let mut idx = Bm25Index::default();
        for (i, (r, text)) in docs.into_iter().enumerate() {
            let toks = content_tokens(text);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &toks {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (t, c) in tf {
                idx.postings.entry(t).or_default().push((i, c));
            }
            idx.refs.push(r);
            idx.lengths.push(toks.len());
        }
        let total: usize = idx.lengths.iter().sum();
        idx.avgdl = if idx.refs.is_empty() {
            0.0
        } else {
            total as f64 / idx.refs.len() as f64
        };
        idx
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    /// Positive-scoring documents for the distinct content tokens of `query`,
    /// in index order.
    pub fn score(&self, query: &str) -> Vec<(GraphRef, f64)> {
        let terms: BTreeSet<String> = content_tokens(query).into_iter().collect();
        let n = self.refs.len();
        let mut scores = vec![0.0f64; n];
        for t in &terms {
            let Some(post) = self.postings.get(t) else {
                continue;
            };
            let w = idf(n, post.len());
            for &(doc, tf) in post {
                let tf = f64::from(tf);
                let norm = K1 * (1.0 - B + B * self.lengths[doc] as f64 / self.avgdl);
                scores[doc] += w * tf * (K1 + 1.0) / (tf + norm);
            }
        }
        scores
            .into_iter()
            .enumerate()
            .filter(|(_, s)| *s > 0.0)
            .map(|(i, s)| (self.refs[i].clone(), s))
            .collect()
    }
}
