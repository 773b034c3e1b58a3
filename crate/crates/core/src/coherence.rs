//! Topic coherence over boolean sliding windows: NPMI, CV, and topic
//! alignment between two models.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use ndarray::Array2;

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};

/// Top words of each topic, as vocabulary indices and strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicSet {
    pub indices: Vec<Vec<usize>>,
    pub words: Vec<Vec<String>>,
}

impl TopicSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// For each row of `beta` (`K x V`), the `top_n` highest weights in
/// descending order; equal weights keep vocabulary order.
pub fn extract_topics(beta: &Array2<f64>, vocab: &Vocabulary, top_n: usize) -> Result<TopicSet> {
    if beta.ncols() != vocab.len() {
        return Err(Error::Shape(format!(
            "beta has {} columns, vocabulary has {} words",
            beta.ncols(),
            vocab.len()
        )));
    }
    if top_n > vocab.len() {
        return Err(Error::Config(format!(
            "top_n {top_n} exceeds vocabulary size {}",
            vocab.len()
        )));
    }
    let mut indices = Vec::with_capacity(beta.nrows());
    for row in beta.rows() {
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        order.truncate(top_n);
        indices.push(order);
    }
    let words = indices
        .iter()
        .map(|t| t.iter().map(|&i| vocab.word(i).to_owned()).collect())
        .collect();
    Ok(TopicSet { indices, words })
}

/// Boolean window statistics: every count is a number of windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceCounts {
    pub window: usize,
    pub total_windows: u64,
    word: HashMap<usize, u64>,
    /// Keyed by `(min, max)` index; only distinct pairs are stored.
    joint: HashMap<(usize, usize), u64>,
}

impl CooccurrenceCounts {
    pub fn word_count(&self, w: usize) -> u64 {
        self.word.get(&w).copied().unwrap_or(0)
    }

    /// Windows containing both words; for `a == b` this is the word count.
    pub fn joint_count(&self, a: usize, b: usize) -> u64 {
        if a == b {
            return self.word_count(a);
        }
        self.joint.get(&(a.min(b), a.max(b))).copied().unwrap_or(0)
    }
}

/// Window sets of one document: stride-1 windows of `window` tokens, or a
/// single window when the document is shorter. Empty documents have none.
pub fn document_windows(tokens: &[usize], window: usize) -> Vec<&[usize]> {
    if tokens.is_empty() {
        return Vec::new();
    }
    if tokens.len() <= window {
        return vec![tokens];
    }
    tokens.windows(window).collect()
}

/// Counts over the vocabulary-filtered token sequence of each document.
/// With `targets`, only those vocabulary indices are tracked.
pub fn count_cooccurrence_for(
    corpus: &Corpus,
    vocab: &Vocabulary,
    window: usize,
    targets: Option<&HashSet<usize>>,
) -> Result<CooccurrenceCounts> {
    if window == 0 {
        return Err(Error::Config("window size must be at least 1".into()));
    }
    let mut counts = CooccurrenceCounts {
        window,
        total_windows: 0,
        word: HashMap::new(),
        joint: HashMap::new(),
    };
    let keep = |w: &usize| targets.is_none_or(|t| t.contains(w));
    for doc in &corpus.docs {
        let tokens = vocab.encode(doc);
        for win in document_windows(&tokens, window) {
            counts.total_windows += 1;
            let present: Vec<usize> = win
                .iter()
                .copied()
                .filter(keep)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            for (i, &a) in present.iter().enumerate() {
                *counts.word.entry(a).or_default() += 1;
                for &b in &present[i + 1..] {
                    *counts.joint.entry((a, b)).or_default() += 1;
                }
            }
        }
    }
    Ok(counts)
}

pub fn count_cooccurrence(corpus: &Corpus, vocab: &Vocabulary, window: usize) -> Result<CooccurrenceCounts> {
    count_cooccurrence_for(corpus, vocab, window, None)
}

/// `log((P(a,b) + ε) / (P(a) P(b))) / −log(P(a,b) + ε)`, clamped to
/// `[−1, 1]`; `ε` defaults to `1/total_windows`.
pub fn npmi_pair(counts: &CooccurrenceCounts, a: usize, b: usize, epsilon: Option<f64>) -> Result<f64> {
    let (ca, cb) = (counts.word_count(a), counts.word_count(b));
    if ca == 0 || cb == 0 {
        let missing = if ca == 0 { a } else { b };
        return Err(Error::Config(format!("word {missing} occurs in no window")));
    }
    let n = counts.total_windows as f64;
    let eps = epsilon.unwrap_or(1.0 / n);
    let pa = ca as f64 / n;
    let pb = cb as f64 / n;
    let pab = counts.joint_count(a, b) as f64 / n + eps;
    if pab >= 1.0 {
        return Ok(1.0);
    }
    let v = (pab / (pa * pb)).ln() / -pab.ln();
    Ok(v.clamp(-1.0, 1.0))
}

/// Mean NPMI over all unordered pairs of topic words.
pub fn npmi_topic(counts: &CooccurrenceCounts, topic: &[usize], epsilon: Option<f64>) -> Result<f64> {
    if topic.len() < 2 {
        return Err(Error::Config("a topic needs at least 2 words".into()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..topic.len() {
        for j in i + 1..topic.len() {
            sum += npmi_pair(counts, topic[i], topic[j], epsilon)?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// One-set CV: each word's context vector holds `NPMI(w, w')^gamma` for
/// every topic word `w'` (itself included); the topic vector is their sum;
/// the score is the mean cosine between word and topic vectors. A zero
/// vector contributes cosine 0.
pub fn cv_topic(counts: &CooccurrenceCounts, topic: &[usize], gamma: f64, epsilon: Option<f64>) -> Result<f64> {
    if topic.len() < 2 {
        return Err(Error::Config("a topic needs at least 2 words".into()));
    }
    let n = topic.len();
    let mut vectors = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = npmi_pair(counts, topic[i], topic[j], epsilon)?;
            let v = v.signum() * v.abs().powf(gamma);
            vectors[i][j] = v;
            vectors[j][i] = v;
        }
    }
    let topic_vec: Vec<f64> = (0..n).map(|j| vectors.iter().map(|v| v[j]).sum()).collect();
    let total: f64 = vectors.iter().map(|v| cosine(v, &topic_vec)).sum();
    Ok((total / n as f64).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceConfig {
    pub top_n: usize,
    pub npmi_window: usize,
    pub cv_window: usize,
    pub gamma: f64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        CoherenceConfig {
            top_n: 10,
            npmi_window: 10,
            cv_window: 110,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicScore {
    pub topic_id: usize,
    pub words: Vec<String>,
    pub npmi: f64,
    pub cv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub model: String,
    pub topics: usize,
    pub seed: u64,
    pub scores: Vec<TopicScore>,
}

impl CoherenceReport {
    pub fn mean_npmi(&self) -> f64 {
        mean(self.scores.iter().map(|s| s.npmi))
    }

    pub fn mean_cv(&self) -> f64 {
        mean(self.scores.iter().map(|s| s.cv))
    }

    /// `model,K,seed,topic_id,npmi,cv` rows, then a `mean` aggregate row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["model", "K", "seed", "topic_id", "npmi", "cv"])
            .map_err(csv_err)?;
        let (k, seed) = (self.topics.to_string(), self.seed.to_string());
        for s in &self.scores {
            w.write_record([
                self.model.as_str(),
                &k,
                &seed,
                &s.topic_id.to_string(),
                &s.npmi.to_string(),
                &s.cv.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.write_record([
            self.model.as_str(),
            &k,
            &seed,
            "mean",
            &self.mean_npmi().to_string(),
            &self.mean_cv().to_string(),
        ])
        .map_err(csv_err)?;
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Parses [`CoherenceReport::to_csv`] output. Topic words are not stored
    /// in the CSV and come back empty.
    pub fn from_csv(text: &str) -> Result<CoherenceReport> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut report: Option<CoherenceReport> = None;
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
            if rec.len() != 6 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 6 fields, found {}", rec.len()),
                });
            }
            let num = |idx: usize| -> Result<f64> {
                rec[idx].parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad number {:?}", &rec[idx]),
                })
            };
            let rep = report.get_or_insert_with(|| CoherenceReport {
                model: rec[0].to_owned(),
                topics: rec[1].parse().unwrap_or(0),
                seed: rec[2].parse().unwrap_or(0),
                scores: Vec::new(),
            });
            if &rec[3] == "mean" {
                continue;
            }
            let topic_id = rec[3].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad topic id {:?}", &rec[3]),
            })?;
            rep.scores.push(TopicScore {
                topic_id,
                words: Vec::new(),
                npmi: num(4)?,
                cv: num(5)?,
            });
        }
        report.ok_or_else(|| Error::Format("report has no rows".into()))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<CoherenceReport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CoherenceReport::from_csv(&text)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Scores every topic against `corpus` as the reference corpus. Only the
/// topic words are tracked while counting windows.
pub fn evaluate_topics(
    topics: &TopicSet,
    corpus: &Corpus,
    vocab: &Vocabulary,
    cfg: &CoherenceConfig,
) -> Result<Vec<TopicScore>> {
    let targets: HashSet<usize> = topics.indices.iter().flatten().copied().collect();
    let npmi_counts = count_cooccurrence_for(corpus, vocab, cfg.npmi_window, Some(&targets))?;
    let cv_counts = count_cooccurrence_for(corpus, vocab, cfg.cv_window, Some(&targets))?;
    topics
        .indices
        .iter()
        .zip(&topics.words)
        .enumerate()
        .map(|(topic_id, (idx, words))| {
            Ok(TopicScore {
                topic_id,
                words: words.clone(),
                npmi: npmi_topic(&npmi_counts, idx, None)?,
                cv: cv_topic(&cv_counts, idx, cfg.gamma, None)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPair {
    pub a: usize,
    pub b: usize,
    pub shared: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapReport {
    pub pairs: Vec<AlignedPair>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

/// Greedy one-to-one alignment by shared-word count (largest first, ties
/// by topic index). Pairs are listed in `a` order.
pub fn topic_overlap(a: &TopicSet, b: &TopicSet) -> OverlapReport {
    let sets_b: Vec<HashSet<&str>> = b.words.iter().map(|t| t.iter().map(String::as_str).collect()).collect();
    let mut candidates = Vec::with_capacity(a.len() * b.len());
    for (i, ta) in a.words.iter().enumerate() {
        for (j, sb) in sets_b.iter().enumerate() {
            let shared = ta.iter().filter(|w| sb.contains(w.as_str())).count();
            candidates.push((shared, i, j));
        }
    }
    candidates.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        let shared = a.words[i]
            .iter()
            .filter(|w| sets_b[j].contains(w.as_str()))
            .cloned()
            .collect();
        pairs.push(AlignedPair { a: i, b: j, shared });
    }
    pairs.sort_by_key(|p| p.a);
    OverlapReport {
        pairs,
        unmatched_a: (0..a.len()).filter(|&i| !used_a[i]).collect(),
        unmatched_b: (0..b.len()).filter(|&j| !used_b[j]).collect(),
    }
}
