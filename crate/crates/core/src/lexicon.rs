//! Vocabularies and word embedding tables.

use std::collections::HashMap;

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::DenseMatrix;

pub const UNK: &str = "<unk>";

/// What to do with a word that is missing from a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownPolicy {
    /// Map to the reserved, trainable UNK entry.
    #[default]
    Unk,
    Error,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    unk: Option<usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// A vocabulary whose id 0 is the reserved UNK entry.
    pub fn with_unk() -> Self {
        let mut v = Vocab::new();
        v.unk = Some(v.add(UNK));
        v
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocab::new();
        for w in words {
            v.add(w.as_ref());
        }
        v
    }

    /// Insert `word` if new; returns its id.
    pub fn add(&mut self, word: &str) -> usize {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len();
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        if word == UNK {
            self.unk = Some(id);
        }
        id
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn lookup(&self, word: &str, policy: UnknownPolicy) -> Result<usize> {
        match (self.get(word), policy, self.unk) {
            (Some(id), _, _) => Ok(id),
            (None, UnknownPolicy::Unk, Some(unk)) => Ok(unk),
            _ => Err(Error::UnknownWord(word.to_string())),
        }
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn unk(&self) -> Option<usize> {
        self.unk
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Words mapped to `dim`-dimensional vectors; row `i` belongs to word id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vocab,
    vectors: DenseMatrix,
}

impl EmbeddingTable {
    pub fn new(vocab: Vocab, vectors: DenseMatrix) -> Result<Self> {
        ensure_dim(vocab.len(), vectors.rows(), "embedding rows vs vocabulary")?;
        Ok(EmbeddingTable { vocab, vectors })
    }

    pub fn empty(dim: usize) -> Self {
        EmbeddingTable {
            vocab: Vocab::new(),
            vectors: DenseMatrix::zeros(0, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn vectors(&self) -> &DenseMatrix {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut DenseMatrix {
        &mut self.vectors
    }

    pub fn into_parts(self) -> (Vocab, DenseMatrix) {
        (self.vocab, self.vectors)
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.vocab.get(word).map(|id| self.vectors.row(id))
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.vectors.row(id)
    }

    /// The `k` most cosine-similar words to `query`, excluding the query itself.
    /// Zero vectors are skipped.
    pub fn nearest(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let qid = self
            .vocab
            .get(query)
            .ok_or_else(|| Error::UnknownWord(query.to_string()))?;
        nearest_rows(&self.vectors, self.vectors.row(qid), k, Some(qid))?
            .into_iter()
            .map(|(id, s)| Ok((self.vocab.word(id).unwrap_or_default().to_string(), s)))
            .collect()
    }
}

/// Rows of `table` ranked by cosine similarity to `query`, ties by lower id.
pub fn nearest_rows(
    table: &DenseMatrix,
    query: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Result<Vec<(usize, f64)>> {
    ensure_dim(table.cols(), query.len(), "nearest-neighbour query")?;
    let mut scored: Vec<(usize, f64)> = (0..table.rows())
        .filter(|&i| Some(i) != exclude)
        .filter_map(|i| crate::evalkit::cosine(query, table.row(i)).ok().map(|s| (i, s)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unk_policy() {
        let mut v = Vocab::with_unk();
        let a = v.add("a");
        assert_eq!(v.lookup("a", UnknownPolicy::Error).unwrap(), a);
        assert_eq!(v.lookup("zzz", UnknownPolicy::Unk).unwrap(), 0);
        assert!(matches!(
            v.lookup("zzz", UnknownPolicy::Error),
            Err(Error::UnknownWord(_))
        ));
        let plain = Vocab::from_words(["x"]);
        assert!(plain.lookup("y", UnknownPolicy::Unk).is_err());
    }

    #[test]
    fn nearest_by_cosine() {
        let vocab = Vocab::from_words(["a", "b", "c", "d"]);
        let m = DenseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.9, 0.1],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        let t = EmbeddingTable::new(vocab, m).unwrap();
        let nn = t.nearest("a", 2).unwrap();
        assert_eq!(nn[0].0, "b");
        assert_eq!(nn[1].0, "c");
        assert_eq!(nn.len(), 2);
    }
}
