//! Tweet normalization: URL and Twitter-artifact removal, punctuation
//! stripping, tokenization, stop-word filtering and Porter stemming,
//! followed by vocabulary indexing and fixed-length padding.

mod porter;
mod vocab;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::corpus::{LabeledCorpus, Sentiment};

pub use porter::stem;
pub use vocab::{encode_and_pad, TokenSequence, Vocabulary, PAD_ID, UNK_ID};

const DEFAULT_STOP_WORDS: &str = include_str!("../../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWordList {
    words: BTreeSet<String>,
}

impl StopWordList {
    pub fn empty() -> Self {
        Self {
            words: BTreeSet::new(),
        }
    }

    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOP_WORDS)
    }

    /// One word per line; blank lines and `#` comments are skipped. Entries
    /// are lowercased.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { words }
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        Self { words }
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

impl Default for StopWordList {
    fn default() -> Self {
        Self::english()
    }
}

fn regex(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static pattern"))
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)(?:https?://|www\.)\S*")
}

fn retweet_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // A standalone "RT" token, optionally "RT:", plus trailing whitespace.
    regex(&RE, r"(?i)(?:^|(?-u:\b))rt:?(?:\s+|$)")
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"@\S*")
}

fn hashtag_word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"#\S*")
}

fn html_entity_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    regex(&RE, r"(?i)&(?:[a-z]+|#[0-9]+);")
}

/// Deletes `http://…`, `https://…` and `www.…` runs up to the next
/// whitespace. Surrounding whitespace is left in place.
pub fn remove_urls(text: &str) -> String {
    url_re().replace_all(text, "").into_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FilterOptions {
    /// Remove the whole `#word` token instead of only the `#` marker.
    pub drop_hashtag_words: bool,
}

fn is_standalone_rt(text: &str, start: usize) -> bool {
    start == 0 || text[..start].ends_with(char::is_whitespace)
}

/// Removes retweet markers, `@mentions`, hashtag markers, HTML entities
/// and any non-ASCII or control characters.
pub fn filter_twitter_artifacts(text: &str) -> String {
    filter_twitter_artifacts_with(text, FilterOptions::default())
}

pub fn filter_twitter_artifacts_with(text: &str, opts: FilterOptions) -> String {
    // RT tokens: only when preceded by start-of-text or whitespace.
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in retweet_re().find_iter(text) {
        if is_standalone_rt(text, m.start()) {
            out.push_str(&text[last..m.start()]);
            last = m.end();
        }
    }
    out.push_str(&text[last..]);

    let out = mention_re().replace_all(&out, "");
    let out = if opts.drop_hashtag_words {
        hashtag_word_re().replace_all(&out, "").into_owned()
    } else {
        out.replace('#', "")
    };
    let out = html_entity_re().replace_all(&out, "");
    out.chars()
        .filter(|c| c.is_ascii() && (!c.is_ascii_control() || c.is_ascii_whitespace()))
        .collect()
}

/// Replaces every ASCII punctuation character with one space.
pub fn remove_punctuation(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect()
}

/// Lowercases and splits on whitespace runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

pub fn remove_stop_words(tokens: Vec<String>, stops: &StopWordList) -> Vec<String> {
    tokens.into_iter().filter(|t| !stops.contains(t)).collect()
}

/// Configuration of the cleaning pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Preprocessor {
    pub stop_words: StopWordList,
    pub filter: FilterOptions,
}

impl Preprocessor {
    pub fn new(stop_words: StopWordList, filter: FilterOptions) -> Self {
        Self { stop_words, filter }
    }

    /// Everything up to and including stop-word removal.
    pub fn clean(&self, raw: &str) -> Vec<String> {
        let text = raw.to_lowercase();
        let text = remove_urls(&text);
        let text = filter_twitter_artifacts_with(&text, self.filter);
        let text = remove_punctuation(&text);
        remove_stop_words(tokenize(&text), &self.stop_words)
    }

    pub fn process(&self, raw: &str) -> Vec<String> {
        self.clean(raw).iter().map(|t| stem(t)).collect()
    }
}

/// lowercase → URLs → Twitter artifacts → punctuation → tokenize →
/// stop words → stem.
pub fn preprocess_pipeline(raw: &str, stops: &StopWordList) -> Vec<String> {
    Preprocessor::new(stops.clone(), FilterOptions::default()).process(raw)
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("encoded corpus line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub seq: TokenSequence,
    pub label: Sentiment,
}

/// Corpus after cleaning, indexing and padding.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EncodedCorpus {
    pub examples: Vec<EncodedExample>,
}

pub const CACHE_HEADER: &str = "ids,label";

impl EncodedCorpus {
    pub fn encode(
        corpus: &LabeledCorpus,
        preprocessor: &Preprocessor,
        vocab: &Vocabulary,
        n: usize,
    ) -> Self {
        let examples = corpus
            .examples
            .iter()
            .map(|ex| EncodedExample {
                seq: encode_and_pad(&preprocessor.process(&ex.text), vocab, n),
                label: ex.label,
            })
            .collect();
        Self { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<Sentiment> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// `ids,label` rows; `ids` is a space-separated list of length `n`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CACHE_HEADER}")?;
        for ex in &self.examples {
            let ids: Vec<String> = ex.seq.ids.iter().map(u32::to_string).collect();
            writeln!(out, "{},{}", ids.join(" "), ex.label)?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self, CacheError> {
        let bad = |line: usize, message: String| CacheError::Malformed { line, message };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CACHE_HEADER => {}
            _ => return Err(bad(1, format!("expected header `{CACHE_HEADER}`"))),
        }
        let mut examples = Vec::new();
        let mut width = None;
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (ids, label) = line
                .rsplit_once(',')
                .ok_or_else(|| bad(line_no, "missing label field".into()))?;
            let label = Sentiment::parse_label(label)
                .ok_or_else(|| bad(line_no, format!("unparsable label {label:?}")))?;
            let ids = ids
                .split_whitespace()
                .map(|t| t.parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(line_no, e.to_string()))?;
            if ids.is_empty() || *width.get_or_insert(ids.len()) != ids.len() {
                return Err(bad(
                    line_no,
                    "sequence length differs from earlier rows".into(),
                ));
            }
            examples.push(EncodedExample {
                seq: TokenSequence::from_ids(ids),
                label,
            });
        }
        Ok(Self { examples })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CacheError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(&text)
    }
}
