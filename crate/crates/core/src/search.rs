//! Positional inverted index with exact phrase queries.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::{tokenize, DocumentSet};
use crate::fold::fold;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("empty phrase")]
    EmptyPhrase,
    #[error("limit must be at least 1")]
    ZeroLimit,
}

/// A case-folded token sequence and the maximum number of hits to return.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhraseQuery {
    pub phrase: Vec<String>,
    pub limit: usize,
}

impl PhraseQuery {
    pub fn new(phrase: Vec<String>, limit: usize) -> Result<Self, SearchError> {
        if phrase.is_empty() {
            return Err(SearchError::EmptyPhrase);
        }
        if limit == 0 {
            return Err(SearchError::ZeroLimit);
        }
        let phrase = phrase.iter().map(|t| fold(t)).collect();
        Ok(PhraseQuery { phrase, limit })
    }

    /// Tokenizes free text with the corpus tokenizer and folds each token.
    pub fn parse(text: &str, limit: usize) -> Result<Self, SearchError> {
        Self::new(phrase_tokens(text), limit)
    }
}

/// Folded tokens of a free-text phrase.
pub fn phrase_tokens(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    tokenize(text)
        .into_iter()
        .map(|t| fold(&chars[t.start..t.end].iter().collect::<String>()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Posting {
    doc: u32,
    position: u32,
}

#[derive(Clone, Debug, Default)]
pub struct InvertedIndex {
    // doc ids in ascending order; postings refer to them by ordinal
    doc_ids: Vec<String>,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl InvertedIndex {
    pub fn build(docs: &DocumentSet) -> Self {
        let mut doc_ids: Vec<String> = docs.iter().map(|d| d.doc_id().to_string()).collect();
        doc_ids.sort();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for doc in docs {
            let ordinal = doc_ids
                .binary_search_by(|id| id.as_str().cmp(doc.doc_id()))
                .expect("doc id present") as u32;
            for position in 0..doc.tokens().len() {
                postings
                    .entry(fold(doc.token_text(position)))
                    .or_default()
                    .push(Posting {
                        doc: ordinal,
                        position: position as u32,
                    });
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable();
        }
        InvertedIndex { doc_ids, postings }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn vocabulary_len(&self) -> usize {
        self.postings.len()
    }

    /// Postings of one folded token as `(doc_id, position)`, sorted.
    pub fn postings(&self, token: &str) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.postings
            .get(token)
            .into_iter()
            .flatten()
            .map(|p| (self.doc_ids[p.doc as usize].as_str(), p.position as usize))
    }

    /// Every `(token, postings)` pair in token order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, Vec<(&str, usize)>)> + '_ {
        self.postings
            .keys()
            .map(|k| (k.as_str(), self.postings(k).collect()))
    }

    /// Occurrence count of the phrase in every document that contains it,
    /// ranked by descending count, then ascending doc id.
    pub fn phrase_counts(&self, phrase: &[String]) -> Vec<(&str, usize)> {
        let Some(first) = phrase.first().and_then(|t| self.postings.get(t)) else {
            return Vec::new();
        };
        let rest: Option<Vec<&Vec<Posting>>> =
            phrase[1..].iter().map(|t| self.postings.get(t)).collect();
        let Some(rest) = rest else {
            return Vec::new();
        };
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for start in first {
            let hit = rest.iter().enumerate().all(|(k, list)| {
                let want = Posting {
                    doc: start.doc,
                    position: start.position + k as u32 + 1,
                };
                list.binary_search(&want).is_ok()
            });
            if hit {
                *counts.entry(start.doc).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .map(|(d, c)| (self.doc_ids[d as usize].as_str(), c))
            .collect();
        // ordinals are already ascending by doc id, so a stable sort on count keeps ties ordered
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        ranked
    }

    pub fn query_phrase(&self, query: &PhraseQuery) -> Vec<String> {
        self.phrase_counts(&query.phrase)
            .into_iter()
            .take(query.limit)
            .map(|(d, _)| d.to_string())
            .collect()
    }
}
