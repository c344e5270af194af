use std::collections::HashMap;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Token index. Ids 0 and 1 are the reserved padding and unknown entries;
/// corpus tokens start at 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    to_id: HashMap<String, u32>,
    tokens: Vec<String>,
    min_frequency: u32,
}

impl Vocabulary {
    /// Keeps every token seen at least `min_frequency` times. Ids follow
    /// descending frequency, ties broken lexicographically.
    pub fn build<S: AsRef<str>>(documents: &[Vec<S>], min_frequency: u32) -> Self {
        let min_frequency = min_frequency.max(1);
        let mut counts: HashMap<&str, u32> = HashMap::new();
        for doc in documents {
            for tok in doc {
                *counts.entry(tok.as_ref()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u32)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_frequency && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()), min_frequency)
            .expect("counted tokens are unique")
    }

    /// Rebuilds a vocabulary from its corpus tokens in id order (id 2
    /// first). Fails on duplicates or reserved names.
    pub fn from_tokens<I>(tokens: I, min_frequency: u32) -> Result<Self, String>
    where
        I: IntoIterator<Item = String>,
    {
        let mut vocab = Vocabulary {
            to_id: HashMap::new(),
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            min_frequency,
        };
        for tok in tokens {
            if tok == PAD_TOKEN || tok == UNK_TOKEN {
                return Err(format!("reserved token {tok:?} in vocabulary"));
            }
            let id = vocab.tokens.len() as u32;
            if vocab.to_id.insert(tok.clone(), id).is_some() {
                return Err(format!("duplicate token {tok:?} in vocabulary"));
            }
            vocab.tokens.push(tok);
        }
        Ok(vocab)
    }

    /// Total size including the two reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn min_frequency(&self) -> u32 {
        self.min_frequency
    }

    pub fn id(&self, token: &str) -> u32 {
        self.to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Corpus tokens in id order, without the reserved entries.
    pub fn corpus_tokens(&self) -> &[String] {
        &self.tokens[2..]
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter()
            .filter(|&&id| id != PAD_ID)
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN))
            .collect()
    }
}

/// Fixed-length id sequence. Positions from `true_length` on hold
/// [`PAD_ID`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub true_length: usize,
}

impl TokenSequence {
    /// Takes raw ids (already of the configured length) and infers the
    /// true length from the first padding position.
    pub fn from_ids(ids: Vec<u32>) -> Self {
        let true_length = ids.iter().position(|&i| i == PAD_ID).unwrap_or(ids.len());
        Self { ids, true_length }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Maps tokens to ids (unknown → [`UNK_ID`]), keeps the first `n` and pads
/// the tail with [`PAD_ID`].
pub fn encode_and_pad<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, n: usize) -> TokenSequence {
    assert!(n >= 1, "sequence length must be at least 1");
    let true_length = tokens.len().min(n);
    let mut ids = vec![PAD_ID; n];
    for (slot, tok) in ids.iter_mut().zip(tokens) {
        *slot = vocab.id(tok.as_ref());
    }
    TokenSequence { ids, true_length }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(d: &[&[&str]]) -> Vec<Vec<String>> {
        d.iter()
            .map(|doc| doc.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn frequency_threshold() {
        let v = Vocabulary::build(&docs(&[&["a", "b", "a"]]), 2);
        assert_eq!(v.len(), 3);
        assert_eq!(v.lookup("a"), Some(2));
        assert_eq!(v.lookup("b"), None);
    }

    #[test]
    fn reserved_ids_and_size() {
        let v = Vocabulary::build(&docs(&[&["x", "y"]]), 1);
        assert_eq!(v.len(), 4);
        assert_eq!(v.token(PAD_ID), Some("<pad>"));
        assert_eq!(v.token(UNK_ID), Some("<unk>"));
        assert!(v.lookup("x").unwrap() >= 2);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocabulary::build(&docs(&[&["b", "a"]]), 1);
        assert!(v.lookup("a").unwrap() < v.lookup("b").unwrap());
        let v = Vocabulary::build(&docs(&[&["b", "a", "b"]]), 1);
        assert_eq!(v.lookup("b"), Some(2));
    }

    #[test]
    fn reserved_names_cannot_enter() {
        let v = Vocabulary::build(&docs(&[&["<pad>", "<unk>", "z"]]), 1);
        assert_eq!(v.len(), 3);
        assert!(Vocabulary::from_tokens(vec!["<pad>".to_string()], 1).is_err());
        assert!(Vocabulary::from_tokens(vec!["q".into(), "q".into()], 1).is_err());
    }

    #[test]
    fn padding_and_truncation() {
        let toks: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
        let v = Vocabulary::build(&[toks.clone()], 1);

        let s = encode_and_pad(&toks[..5], &v, 8);
        assert_eq!(s.true_length, 5);
        assert!(s.ids[..5].iter().all(|&id| id >= 2));
        assert_eq!(&s.ids[5..], &[PAD_ID; 3]);

        let s = encode_and_pad::<String>(&[], &v, 4);
        assert_eq!((s.ids, s.true_length), (vec![PAD_ID; 4], 0));

        let s = encode_and_pad(&toks, &v, 8);
        assert_eq!(s.true_length, 8);
        assert_eq!(
            v.decode(&s.ids),
            toks[..8].iter().map(String::as_str).collect::<Vec<_>>()
        );
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let v = Vocabulary::build(&docs(&[&["known"]]), 1);
        let s = encode_and_pad(&["known", "mystery"], &v, 3);
        assert_eq!(s.ids, vec![2, UNK_ID, PAD_ID]);
        assert_eq!(TokenSequence::from_ids(s.ids.clone()).true_length, 2);
    }
}
