//! Documents with deterministic tokenization and sentence segmentation.
//!
//! All offsets are counted in Unicode scalar values (`char`s), never bytes,
//! so spans written by one implementation line up with another's.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// Character range `[start, end)` of one token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

/// Token index range `[first_token, last_token)` of one sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SentenceSpan {
    pub first_token: usize,
    pub last_token: usize,
}

impl SentenceSpan {
    pub fn len(&self) -> usize {
        self.last_token - self.first_token
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains_token(&self, index: usize) -> bool {
        self.first_token <= index && index < self.last_token
    }
}

/// Splits text into tokens.
///
/// Maximal runs of letters and digits form one token, every other
/// non-whitespace character is a token of its own, and whitespace separates.
pub fn tokenize(text: &str) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut pos = 0;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some(pos);
            }
        } else {
            if let Some(start) = run_start.take() {
                spans.push(TokenSpan { start, end: pos });
            }
            if !ch.is_whitespace() {
                spans.push(TokenSpan {
                    start: pos,
                    end: pos + 1,
                });
            }
        }
        pos += 1;
    }
    if let Some(start) = run_start {
        spans.push(TokenSpan { start, end: pos });
    }
    spans
}

fn is_terminator(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

fn starts_uppercase(token: &str) -> bool {
    token.chars().next().is_some_and(char::is_uppercase)
}

/// Groups tokens into sentences.
///
/// A sentence ends after `.`, `!` or `?` when the next token starts with an
/// uppercase letter, and at the end of the text.
pub fn sentence_split(token_texts: &[&str]) -> Vec<SentenceSpan> {
    let mut sentences = Vec::new();
    let mut first = 0;
    for i in 0..token_texts.len() {
        let boundary = match token_texts.get(i + 1) {
            None => true,
            Some(next) => is_terminator(token_texts[i]) && starts_uppercase(next),
        };
        if boundary {
            sentences.push(SentenceSpan {
                first_token: first,
                last_token: i + 1,
            });
            first = i + 1;
        }
    }
    sentences
}

/// One input record before tokenization.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DocumentRecord {
    pub doc_id: String,
    pub text: String,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub source: Option<String>,
}

/// An immutable document with its tokens and sentences.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    doc_id: String,
    text: String,
    source: Option<String>,
    tokens: Vec<TokenSpan>,
    sentences: Vec<SentenceSpan>,
    // byte offset of every char, plus one trailing entry for text.len()
    char_bytes: Vec<usize>,
    token_sentence: Vec<usize>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self::with_source(doc_id, text, None)
    }

    pub fn with_source(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        source: Option<String>,
    ) -> Self {
        let text = text.into();
        let mut char_bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        char_bytes.push(text.len());
        let tokens = tokenize(&text);
        let texts: Vec<&str> = tokens
            .iter()
            .map(|t| &text[char_bytes[t.start]..char_bytes[t.end]])
            .collect();
        let sentences = sentence_split(&texts);
        let mut token_sentence = Vec::with_capacity(tokens.len());
        for (s, span) in sentences.iter().enumerate() {
            token_sentence.extend(core::iter::repeat_n(s, span.len()));
        }
        Document {
            doc_id: doc_id.into(),
            text,
            source,
            tokens,
            sentences,
            char_bytes,
            token_sentence,
        }
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn tokens(&self) -> &[TokenSpan] {
        &self.tokens
    }

    pub fn sentences(&self) -> &[SentenceSpan] {
        &self.sentences
    }

    /// Length of the text in chars.
    pub fn char_len(&self) -> usize {
        self.char_bytes.len() - 1
    }

    /// Text between two char offsets. Panics when out of bounds.
    pub fn slice(&self, start: usize, end: usize) -> &str {
        &self.text[self.char_bytes[start]..self.char_bytes[end]]
    }

    pub fn token_text(&self, index: usize) -> &str {
        let span = self.tokens[index];
        self.slice(span.start, span.end)
    }

    /// Number of tokens that contain at least one letter or digit.
    pub fn word_count(&self) -> usize {
        (0..self.tokens.len())
            .filter(|&i| self.token_text(i).chars().any(char::is_alphanumeric))
            .count()
    }

    pub fn sentence_of_token(&self, index: usize) -> usize {
        self.token_sentence[index]
    }

    /// Char range covered by a sentence, from its first token's start to its
    /// last token's end.
    pub fn sentence_char_span(&self, sentence: usize) -> (usize, usize) {
        let s = self.sentences[sentence];
        (self.tokens[s.first_token].start, self.tokens[s.last_token - 1].end)
    }

    /// Case-folded token texts of a token range.
    pub fn folded_tokens(&self, first: usize, last: usize) -> Vec<String> {
        (first..last)
            .map(|i| crate::fold::fold(self.token_text(i)))
            .collect()
    }

    /// Index of the sentence whose char span contains `[start, end)`.
    pub fn sentence_containing(&self, start: usize, end: usize) -> Option<usize> {
        (0..self.sentences.len()).find(|&s| {
            let (ss, se) = self.sentence_char_span(s);
            ss <= start && end <= se
        })
    }

    /// Index of the sentence whose char span is exactly `[start, end)`.
    pub fn sentence_at(&self, start: usize, end: usize) -> Option<usize> {
        (0..self.sentences.len()).find(|&s| self.sentence_char_span(s) == (start, end))
    }

    /// True when the folded phrase occurs as consecutive tokens inside the sentence.
    pub fn sentence_contains_phrase(&self, sentence: usize, phrase: &[String]) -> bool {
        if phrase.is_empty() {
            return false;
        }
        let s = self.sentences[sentence];
        if s.len() < phrase.len() {
            return false;
        }
        (s.first_token..=s.last_token - phrase.len()).any(|i| {
            phrase
                .iter()
                .enumerate()
                .all(|(k, p)| crate::fold::fold(self.token_text(i + k)) == *p)
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("duplicate doc_id {0:?}")]
    DuplicateId(String),
}

/// Documents in corpus order, addressable by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DocumentSet {
    docs: Vec<Document>,
    by_id: BTreeMap<String, usize>,
}

impl DocumentSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tokenizes and segments every record, rejecting repeated ids.
    pub fn ingest<I>(records: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = DocumentRecord>,
    {
        let mut set = DocumentSet::new();
        for record in records {
            set.push(Document::with_source(record.doc_id, record.text, record.source))?;
        }
        Ok(set)
    }

    pub fn push(&mut self, doc: Document) -> Result<(), CorpusError> {
        if self.by_id.contains_key(doc.doc_id()) {
            return Err(CorpusError::DuplicateId(doc.doc_id.clone()));
        }
        self.by_id.insert(doc.doc_id.clone(), self.docs.len());
        self.docs.push(doc);
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Document> {
        self.docs.iter()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

impl<'a> IntoIterator for &'a DocumentSet {
    type Item = &'a Document;
    type IntoIter = core::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.docs.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn spans(pairs: &[(usize, usize)]) -> Vec<TokenSpan> {
        pairs
            .iter()
            .map(|&(start, end)| TokenSpan { start, end })
            .collect()
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Troops marched."), spans(&[(0, 6), (7, 14), (14, 15)]));
        assert_eq!(
            tokenize("U.S.-led"),
            spans(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 8)])
        );
    }

    #[test]
    fn offsets_are_chars_not_bytes() {
        let doc = Document::new("d", "Café über 3€");
        assert_eq!(doc.tokens(), &spans(&[(0, 4), (5, 9), (10, 11), (11, 12)])[..]);
        assert_eq!(doc.token_text(1), "über");
        assert_eq!(doc.token_text(3), "€");
    }

    #[test]
    fn sentence_examples() {
        let doc = Document::new("d", "Troops marched .");
        assert_eq!(
            doc.sentences(),
            &[SentenceSpan {
                first_token: 0,
                last_token: 3
            }]
        );
        assert_eq!(Document::new("d", "He left. She stayed.").sentences().len(), 2);
        assert_eq!(Document::new("d", "Mr. smith left").sentences().len(), 1);
    }

    #[test]
    fn word_count_skips_punctuation() {
        let doc = Document::new("d1", "Troops marched.");
        assert_eq!(doc.tokens().len(), 3);
        assert_eq!(doc.word_count(), 2);
    }

    #[test]
    fn ingest_rejects_duplicates() {
        let rec = |id: &str| DocumentRecord {
            doc_id: id.into(),
            text: "x".into(),
            source: None,
        };
        assert!(DocumentSet::ingest(vec![]).unwrap().is_empty());
        let err = DocumentSet::ingest(vec![rec("d1"), rec("d1")]).unwrap_err();
        assert_eq!(err, CorpusError::DuplicateId("d1".into()));
        assert!(err.to_string().contains("d1"));
    }

    #[test]
    fn ingest_single_record() {
        let set = DocumentSet::ingest(vec![DocumentRecord {
            doc_id: "d1".into(),
            text: "Troops marched.".into(),
            source: None,
        }])
        .unwrap();
        let doc = set.get("d1").unwrap();
        assert_eq!(doc.tokens().len(), 3);
        assert_eq!(doc.sentences().len(), 1);
    }

    #[test]
    fn phrase_lookup_in_sentence() {
        let doc = Document::new("d", "Crowds took to the streets. Police watched.");
        let phrase: Vec<String> = ["took", "to", "the", "streets"]
            .iter()
            .map(|s| String::from(*s))
            .collect();
        assert!(doc.sentence_contains_phrase(0, &phrase));
        assert!(!doc.sentence_contains_phrase(1, &phrase));
        assert_eq!(doc.sentence_char_span(1), (28, 43));
        assert_eq!(doc.sentence_at(28, 43), Some(1));
        assert_eq!(doc.sentence_containing(30, 35), Some(1));
    }

    proptest! {
        #[test]
        fn token_invariants(text in "[a-zA-Z0-9 .,!?'\\-éü€\n\t]{0,80}") {
            let doc = Document::new("p", text.clone());
            let toks = doc.tokens();
            let mut prev_end = 0;
            for (i, t) in toks.iter().enumerate() {
                prop_assert!(t.start < t.end);
                prop_assert!(t.start >= prev_end);
                prop_assert!(t.end <= doc.char_len());
                prop_assert!(!doc.token_text(i).chars().any(char::is_whitespace));
                prev_end = t.end;
            }
            let joined: String = (0..toks.len()).map(|i| doc.token_text(i)).collect();
            let stripped: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(joined, stripped);
            prop_assert_eq!(tokenize(&text), tokenize(&text));

            let mut covered = 0;
            for s in doc.sentences() {
                prop_assert_eq!(s.first_token, covered);
                prop_assert!(s.first_token < s.last_token);
                covered = s.last_token;
            }
            prop_assert_eq!(covered, toks.len());
        }
    }
}
