//! Corpus loading, vocabulary construction and bag-of-words vectors.
//!
//! Text is preprocessed with a fixed minimal pipeline: lowercase, every
//! non-alphanumeric character becomes whitespace, split on whitespace. No
//! stemming or stopword removal is applied.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Partition::Train),
            "val" | "validation" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(format!("unknown partition {other:?}")),
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Validation => "val",
            Partition::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: usize,
    pub tokens: Vec<String>,
    pub partition: Partition,
    pub label: Option<String>,
}

/// An ordered collection of documents. Row `i` of any embedding matrix
/// attached to the corpus belongs to `docs[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub docs: Vec<Document>,
}

/// Lowercase, replace non-alphanumerics with spaces, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_lowercase().next().unwrap_or(c)
            } else {
                ' '
            }
        })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Build a corpus from already tokenized texts, all in the train partition.
    pub fn from_token_lists<I, D, S>(docs: I) -> Corpus
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Corpus {
            docs: docs
                .into_iter()
                .enumerate()
                .map(|(id, toks)| Document {
                    id,
                    tokens: toks.into_iter().map(Into::into).collect(),
                    partition: Partition::Train,
                    label: None,
                })
                .collect(),
        }
    }

    /// Parse the TSV layout `text<TAB>partition[<TAB>label]`.
    pub fn parse_tsv(content: &str) -> Result<Corpus> {
        let mut docs = Vec::new();
        for (idx, raw) in content.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 2 || cols.len() > 3 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 2 or 3 tab-separated columns, found {}", cols.len()),
                });
            }
            let partition = cols[1]
                .parse::<Partition>()
                .map_err(|msg| Error::Parse { line: line_no, msg })?;
            let tokens = tokenize(cols[0]);
            if tokens.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "document has no tokens after preprocessing".into(),
                });
            }
            let label = cols
                .get(2)
                .map(|l| l.trim())
                .filter(|l| !l.is_empty())
                .map(str::to_owned);
            docs.push(Document {
                id: docs.len(),
                tokens,
                partition,
                label,
            });
        }
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Corpus { docs })
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Corpus> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Corpus::parse_tsv(&content)
    }

    pub fn count_partition(&self, partition: Partition) -> usize {
        self.docs.iter().filter(|d| d.partition == partition).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Fails on duplicate words.
    pub fn from_words(words: Vec<String>) -> Result<Vocabulary> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    /// The `size` most frequent words of the train partition (term
    /// frequency), ties broken lexicographically ascending.
    pub fn build(corpus: &Corpus, size: usize) -> Result<Vocabulary> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if size == 0 {
            return Err(Error::Config("vocabulary size must be at least 1".into()));
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        let mut any_train = false;
        for doc in corpus.docs.iter().filter(|d| d.partition == Partition::Train) {
            any_train = true;
            for tok in &doc.tokens {
                *freq.entry(tok.as_str()).or_default() += 1;
            }
        }
        if !any_train {
            return Err(Error::Config("corpus has no train documents".into()));
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(size);
        Vocabulary::from_words(ranked.into_iter().map(|(w, _)| w.to_owned()).collect())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Vocabulary indices of the in-vocabulary tokens of `doc`, in order.
    pub fn encode(&self, doc: &Document) -> Vec<usize> {
        doc.tokens.iter().filter_map(|t| self.index_of(t)).collect()
    }

    /// One word per line, `\n` terminated.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocabulary> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let words = content
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        Vocabulary::from_words(words)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BowVector {
    pub counts: Vec<f64>,
    pub normalized: bool,
}

impl BowVector {
    /// Out-of-vocabulary tokens are dropped. With `normalize`, a document
    /// with in-vocabulary tokens is divided by its token total (L1); an
    /// all-zero vector stays zero.
    pub fn from_document(doc: &Document, vocab: &Vocabulary, normalize: bool) -> BowVector {
        let mut counts = vec![0.0; vocab.len()];
        for idx in vocab.encode(doc) {
            counts[idx] += 1.0;
        }
        if normalize {
            l1_normalize(&mut counts);
        }
        BowVector {
            counts,
            normalized: normalize,
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

fn l1_normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
}

/// Raw count matrix, one row per document.
pub fn bow_matrix(corpus: &Corpus, vocab: &Vocabulary) -> Array2<f64> {
    let mut m = Array2::zeros((corpus.len(), vocab.len()));
    for (row, doc) in corpus.docs.iter().enumerate() {
        for idx in vocab.encode(doc) {
            m[[row, idx]] += 1.0;
        }
    }
    m
}

/// Row-wise L1 normalization; zero rows stay zero.
pub fn normalize_rows(counts: &Array2<f64>) -> Array2<f64> {
    let mut out = counts.clone();
    for mut row in out.rows_mut() {
        let total = row.sum();
        if total > 0.0 {
            row.mapv_inplace(|x| x / total);
        }
    }
    out
}
