//! Labeled corpus loading, class histograms and stratified splitting.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::tensor::Rng;

/// Sentiment polarity. Stored as a contiguous class index (0, 1, 2); the
/// `-1/0/1` convention only appears at I/O boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive];

    pub fn index(self) -> usize {
        match self {
            Sentiment::Negative => 0,
            Sentiment::Neutral => 1,
            Sentiment::Positive => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// The `-1 / 0 / 1` label used in data files.
    pub fn polarity(self) -> i8 {
        self.index() as i8 - 1
    }

    pub fn parse_label(s: &str) -> Option<Self> {
        match s.trim() {
            "-1" => Some(Sentiment::Negative),
            "0" => Some(Sentiment::Neutral),
            "1" => Some(Sentiment::Positive),
            _ => None,
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.polarity())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing column `{column}` in header")]
    MissingColumn { path: String, column: String },
    #[error("{path}: row {row}: unparsable label {value:?} (expected -1, 0 or 1)")]
    UnparsableLabel {
        path: String,
        row: usize,
        value: String,
    },
    #[error("{path}: row {row}: empty text")]
    EmptyText { path: String, row: usize },
    #[error("{path}: no data rows")]
    EmptyFile { path: String },
    #[error("invalid split fractions: train={train}, val={val}")]
    InvalidSplit { train: f64, val: f64 },
    #[error("class {class} ({count} examples) leaves the {partition} partition empty")]
    DegenerateSplit {
        class: Sentiment,
        count: usize,
        partition: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub text: String,
    pub label: Sentiment,
}

impl LabeledExample {
    /// Returns `None` when the text is blank.
    pub fn new(text: impl Into<String>, label: Sentiment) -> Option<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            None
        } else {
            Some(Self { text, label })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledCorpus {
    pub examples: Vec<LabeledExample>,
    pub source: String,
}

/// Per-class counts in `(Negative, Neutral, Positive)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts(pub [usize; 3]);

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn get(&self, class: Sentiment) -> usize {
        self.0[class.index()]
    }

    /// CSV `class,count` with rows in `-1, 0, 1` order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "class,count")?;
        for class in Sentiment::ALL {
            writeln!(out, "{},{}", class, self.get(class))?;
        }
        Ok(())
    }
}

impl std::ops::Add for ClassCounts {
    type Output = ClassCounts;
    fn add(self, rhs: Self) -> Self {
        ClassCounts(std::array::from_fn(|i| self.0[i] + rhs.0[i]))
    }
}

impl LabeledCorpus {
    pub fn new(examples: Vec<LabeledExample>, source: impl Into<String>) -> Self {
        Self {
            examples,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_histogram(&self) -> ClassCounts {
        let mut counts = ClassCounts::default();
        for ex in &self.examples {
            counts.0[ex.label.index()] += 1;
        }
        counts
    }

    /// Drops later examples whose text is byte-identical to an earlier one.
    pub fn dedup_exact(&self) -> LabeledCorpus {
        let mut seen = HashSet::new();
        let examples = self
            .examples
            .iter()
            .filter(|ex| seen.insert(ex.text.as_str()))
            .cloned()
            .collect();
        LabeledCorpus::new(examples, self.source.clone())
    }
}

pub fn class_histogram(corpus: &LabeledCorpus) -> ClassCounts {
    corpus.class_histogram()
}

/// Reads a comma-separated, double-quoted, UTF-8 CSV whose first row is a
/// header containing `text_column` and `label_column`. Row numbers in
/// errors are 1-based data rows (the header is row 0).
pub fn load_corpus(
    path: impl AsRef<Path>,
    text_column: &str,
    label_column: &str,
) -> Result<LabeledCorpus, CorpusError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: name.clone(),
        source,
    })?;
    read_corpus(file, &name, text_column, label_column)
}

pub fn read_corpus<R: std::io::Read>(
    reader: R,
    source: &str,
    text_column: &str,
    label_column: &str,
) -> Result<LabeledCorpus, CorpusError> {
    let csv_err = |e| CorpusError::Csv {
        path: source.to_string(),
        source: e,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MissingColumn {
                path: source.to_string(),
                column: name.to_string(),
            })
    };
    let text_idx = column(text_column)?;
    let label_idx = column(label_column)?;

    let mut examples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        let raw_label = record.get(label_idx).unwrap_or("");
        let label =
            Sentiment::parse_label(raw_label).ok_or_else(|| CorpusError::UnparsableLabel {
                path: source.to_string(),
                row,
                value: raw_label.to_string(),
            })?;
        let text = record.get(text_idx).unwrap_or("");
        let example = LabeledExample::new(text, label).ok_or_else(|| CorpusError::EmptyText {
            path: source.to_string(),
            row,
        })?;
        examples.push(example);
    }
    if examples.is_empty() {
        return Err(CorpusError::EmptyFile {
            path: source.to_string(),
        });
    }
    Ok(LabeledCorpus::new(examples, source))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            val_fraction: 0.1,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn test_fraction(&self) -> f64 {
        1.0 - self.train_fraction - self.val_fraction
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let ok = self.train_fraction > 0.0
            && self.train_fraction < 1.0
            && self.val_fraction >= 0.0
            && self.val_fraction < 1.0
            && self.train_fraction + self.val_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(CorpusError::InvalidSplit {
                train: self.train_fraction,
                val: self.val_fraction,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: LabeledCorpus,
    pub val: LabeledCorpus,
    pub test: LabeledCorpus,
    /// Original corpus indices of each partition, ascending.
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Largest-remainder apportionment of `count` items over three fractions.
/// Every share differs from its exact quota by less than one item.
fn apportion(count: usize, fractions: [f64; 3]) -> [usize; 3] {
    let quotas = fractions.map(|f| f * count as f64);
    let mut shares = quotas.map(|q| q.floor() as usize);
    let assigned: usize = shares.iter().sum();
    let mut order = [0usize, 1, 2];
    // Stable sort keeps partition order as the tie-break.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().take(count.saturating_sub(assigned)) {
        shares[i] += 1;
    }
    shares
}

/// Seeded per-class shuffle followed by largest-remainder allocation to
/// train / validation / test. Partitions keep the original corpus order.
pub fn stratified_split(corpus: &LabeledCorpus, spec: &SplitSpec) -> Result<Split, CorpusError> {
    spec.validate()?;
    let fractions = [spec.train_fraction, spec.val_fraction, spec.test_fraction()];
    let names = ["train", "validation", "test"];
    let rng = Rng::new(spec.seed);

    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in Sentiment::ALL {
        let mut members: Vec<usize> = corpus
            .examples
            .iter()
            .enumerate()
            .filter(|(_, ex)| ex.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let shares = apportion(members.len(), fractions);
        for p in 0..3 {
            if fractions[p] > 0.0 && shares[p] == 0 {
                return Err(CorpusError::DegenerateSplit {
                    class,
                    count: members.len(),
                    partition: names[p],
                });
            }
        }
        rng.stream(class.index() as u64).shuffle(&mut members);
        let mut rest = members.as_slice();
        for p in 0..3 {
            let (take, tail) = rest.split_at(shares[p]);
            parts[p].extend_from_slice(take);
            rest = tail;
        }
    }
    for part in parts.iter_mut() {
        part.sort_unstable();
    }
    let pick = |idx: &[usize], tag: &str| {
        LabeledCorpus::new(
            idx.iter().map(|&i| corpus.examples[i].clone()).collect(),
            format!("{}#{}", corpus.source, tag),
        )
    };
    let [train_indices, val_indices, test_indices] = parts;
    Ok(Split {
        train: pick(&train_indices, "train"),
        val: pick(&val_indices, "val"),
        test: pick(&test_indices, "test"),
        train_indices,
        val_indices,
        test_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_of(labels: &[Sentiment]) -> LabeledCorpus {
        let examples = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| LabeledExample::new(format!("text {i}"), label).unwrap())
            .collect();
        LabeledCorpus::new(examples, "mem")
    }

    fn read(s: &str) -> Result<LabeledCorpus, CorpusError> {
        read_corpus(s.as_bytes(), "mem.csv", "text", "label")
    }

    #[test]
    fn loads_three_rows() {
        let c = read("text,label\ngood news,1\nbad,-1\nmeh,0\n").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.examples[1].label, Sentiment::Negative);
    }

    #[test]
    fn quoted_fields_and_column_order() {
        let c = read("id,label,text\n7,1,\"hello, \"\"world\"\"\"\n").unwrap();
        assert_eq!(c.examples[0].text, "hello, \"world\"");
    }

    #[test]
    fn rejects_out_of_range_label() {
        let err = read("text,label\nok,1\nbad,2\n").unwrap_err();
        match err {
            CorpusError::UnparsableLabel { row, value, .. } => {
                assert_eq!(row, 2);
                assert_eq!(value, "2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty_file() {
        assert!(matches!(
            read("text,label\n"),
            Err(CorpusError::EmptyFile { .. })
        ));
    }

    #[test]
    fn missing_column_is_named() {
        let err = read("text,sentiment\nx,1\n").unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn { ref column, .. } if column == "label"));
        assert!(err.to_string().contains("label"));
    }

    #[test]
    fn blank_text_rejected() {
        assert!(matches!(
            read("text,label\n   ,1\n"),
            Err(CorpusError::EmptyText { row: 1, .. })
        ));
    }

    #[test]
    fn histograms() {
        use Sentiment::*;
        assert_eq!(
            corpus_of(&[Negative, Negative, Neutral, Positive]).class_histogram(),
            ClassCounts([2, 1, 1])
        );
        assert_eq!(corpus_of(&[]).class_histogram(), ClassCounts([0, 0, 0]));
        assert_eq!(
            corpus_of(&[Neutral; 100]).class_histogram(),
            ClassCounts([0, 100, 0])
        );
    }

    #[test]
    fn histogram_csv_layout() {
        let mut buf = Vec::new();
        ClassCounts([2, 1, 1]).write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "class,count\n-1,2\n0,1\n1,1\n"
        );
    }

    #[test]
    fn stratified_counts_40_30_30() {
        use Sentiment::*;
        let mut labels = vec![Negative; 40];
        labels.extend(vec![Neutral; 30]);
        labels.extend(vec![Positive; 30]);
        let corpus = corpus_of(&labels);
        let spec = SplitSpec {
            train_fraction: 0.8,
            val_fraction: 0.0,
            seed: 42,
        };
        let split = stratified_split(&corpus, &spec).unwrap();
        assert_eq!(split.train.class_histogram(), ClassCounts([32, 24, 24]));
        assert_eq!(split.test.class_histogram(), ClassCounts([8, 6, 6]));
        assert!(split.val.is_empty());
    }

    #[test]
    fn two_examples_half_split() {
        let corpus = corpus_of(&[Sentiment::Positive; 2]);
        let spec = SplitSpec {
            train_fraction: 0.5,
            val_fraction: 0.0,
            seed: 9,
        };
        let split = stratified_split(&corpus, &spec).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (1, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let labels: Vec<_> = (0..90).map(|i| Sentiment::ALL[i % 3]).collect();
        let corpus = corpus_of(&labels);
        let a = stratified_split(&corpus, &SplitSpec::default()).unwrap();
        let b = stratified_split(&corpus, &SplitSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(
            &corpus,
            &SplitSpec {
                seed: 43,
                ..SplitSpec::default()
            },
        )
        .unwrap();
        assert_ne!(a.train_indices, c.train_indices);
    }

    #[test]
    fn degenerate_split_detected() {
        let corpus = corpus_of(&[
            Sentiment::Negative,
            Sentiment::Positive,
            Sentiment::Positive,
        ]);
        let err = stratified_split(&corpus, &SplitSpec::default()).unwrap_err();
        assert!(matches!(err, CorpusError::DegenerateSplit { .. }));
    }

    #[test]
    fn invalid_fractions_rejected() {
        let corpus = corpus_of(&[Sentiment::Negative; 10]);
        for (t, v) in [(0.0, 0.1), (0.9, 0.1), (1.0, 0.0), (0.5, -0.1)] {
            let spec = SplitSpec {
                train_fraction: t,
                val_fraction: v,
                seed: 0,
            };
            assert!(matches!(
                stratified_split(&corpus, &spec),
                Err(CorpusError::InvalidSplit { .. })
            ));
        }
    }

    #[test]
    fn apportion_is_within_one() {
        for count in 1..60 {
            let fr = [0.7, 0.2, 0.1];
            let s = apportion(count, fr);
            assert_eq!(s.iter().sum::<usize>(), count);
            for p in 0..3 {
                assert!((s[p] as f64 - fr[p] * count as f64).abs() < 1.0);
            }
        }
    }

    #[test]
    fn dedup_keeps_first() {
        let ex = |t: &str, l| LabeledExample::new(t, l).unwrap();
        let c = LabeledCorpus::new(
            vec![
                ex("a", Sentiment::Positive),
                ex("b", Sentiment::Neutral),
                ex("a", Sentiment::Negative),
            ],
            "mem",
        );
        let d = c.dedup_exact();
        assert_eq!(d.len(), 2);
        assert_eq!(d.examples[0].label, Sentiment::Positive);
    }
}
