#![allow(dead_code)]

use tweetsent::corpus::{LabeledCorpus, LabeledExample, Sentiment};
use tweetsent::preprocess::{EncodedCorpus, Preprocessor, Vocabulary};

const FILLER: [&str; 12] = [
    "monkeypox",
    "outbreak",
    "city",
    "people",
    "virus",
    "week",
    "health",
    "today",
    "reports",
    "local",
    "update",
    "cases",
];

const KEYWORDS: [[&str; 2]; 3] = [
    ["awful", "terrible"],
    ["schedule", "announced"],
    ["wonderful", "relieved"],
];

/// 10 examples per class. Each text is filler words plus keywords unique
/// to its class, placed at varying positions.
pub fn keyword_corpus() -> LabeledCorpus {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = move |n: usize| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) as usize) % n
    };
    let mut examples = Vec::new();
    for i in 0..30 {
        let class = Sentiment::ALL[i % 3];
        let len = 3 + next(4);
        let mut words: Vec<&str> = (0..len).map(|_| FILLER[next(FILLER.len())]).collect();
        let kw = KEYWORDS[class.index()][next(2)];
        let pos = next(words.len() + 1);
        words.insert(pos, kw);
        examples.push(LabeledExample::new(words.join(" "), class).unwrap());
    }
    LabeledCorpus::new(examples, "synthetic")
}

pub fn encode(corpus: &LabeledCorpus, n: usize) -> (Vocabulary, EncodedCorpus) {
    let pre = Preprocessor::default();
    let docs: Vec<Vec<String>> = corpus
        .examples
        .iter()
        .map(|e| pre.process(&e.text))
        .collect();
    let vocab = Vocabulary::build(&docs, 1);
    let enc = EncodedCorpus::encode(corpus, &pre, &vocab, n);
    (vocab, enc)
}
