//! Planted-topic corpora for end-to-end checks.
//!
//! Topic `k` owns the vocabulary block `[k·V/K, (k+1)·V/K)`. Its word
//! distribution puts `1 − noise` of the mass on that block (Zipf-shaped)
//! and spreads the rest uniformly over the whole vocabulary. Documents
//! draw a Dirichlet topic mixture and then their tokens.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::corpus::{Corpus, Document, Partition};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub docs: usize,
    pub topics: usize,
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub doc_alpha: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            docs: 500,
            topics: 5,
            vocab: 200,
            min_len: 10,
            max_len: 20,
            doc_alpha: 0.3,
            noise: 0.3,
            seed: 0,
        }
    }
}

/// Vocabulary string of word index `i`.
pub fn word(i: usize) -> String {
    format!("w{i:04}")
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// `K x V` generating distributions.
    pub topic_word: Vec<Vec<f64>>,
    /// Per-document topic mixtures.
    pub doc_topic: Vec<Vec<f64>>,
}

impl PlantedCorpus {
    /// Indices of the `n` most probable words of each planted topic.
    pub fn planted_top_words(&self, n: usize) -> Vec<Vec<usize>> {
        self.topic_word
            .iter()
            .map(|row| {
                let mut order: Vec<usize> = (0..row.len()).collect();
                order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
                order.truncate(n);
                order
            })
            .collect()
    }
}

pub fn planted_corpus(cfg: &SynthConfig) -> Result<PlantedCorpus> {
    if cfg.topics == 0 || cfg.vocab < cfg.topics || cfg.docs == 0 {
        return Err(Error::Config(format!(
            "need docs >= 1 and vocab >= topics >= 1, got docs={} topics={} vocab={}",
            cfg.docs, cfg.topics, cfg.vocab
        )));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(format!(
            "bad length range {}..={}",
            cfg.min_len, cfg.max_len
        )));
    }
    if !(0.0..1.0).contains(&cfg.noise) || cfg.doc_alpha <= 0.0 {
        return Err(Error::Config("noise must be in [0, 1) and doc_alpha positive".into()));
    }
    let (k, v) = (cfg.topics, cfg.vocab);
    let mut topic_word = Vec::with_capacity(k);
    for t in 0..k {
        let (lo, hi) = (t * v / k, (t + 1) * v / k);
        let zipf: Vec<f64> = (1..=hi - lo).map(|r| 1.0 / r as f64).collect();
        let z: f64 = zipf.iter().sum();
        let mut row = vec![cfg.noise / v as f64; v];
        for (j, w) in (lo..hi).zip(&zipf) {
            row[j] += (1.0 - cfg.noise) * w / z;
        }
        topic_word.push(row);
    }
    let samplers = topic_word
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    // Dirichlet draw via normalized Gamma variates.
    let gamma = Gamma::new(cfg.doc_alpha, 1.0).map_err(|e| Error::Config(e.to_string()))?;

    let mut docs = Vec::with_capacity(cfg.docs);
    let mut doc_topic = Vec::with_capacity(cfg.docs);
    for d in 0..cfg.docs {
        let mut rng = stream(cfg.seed, "synth-doc", d as u64);
        let mut theta: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = theta.iter().sum();
        if total > 0.0 {
            theta.iter_mut().for_each(|x| *x /= total);
        } else {
            theta = vec![1.0 / k as f64; k];
        }
        let pick = WeightedIndex::new(&theta).map_err(|e| Error::Config(e.to_string()))?;
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let tokens = (0..len)
            .map(|_| word(samplers[pick.sample(&mut rng)].sample(&mut rng)))
            .collect();
        let label = (0..k)
            .max_by(|&a, &b| theta[a].total_cmp(&theta[b]))
            .map(|t| format!("topic{t}"));
        docs.push(Document {
            id: d,
            tokens,
            partition: Partition::Train,
            label,
        });
        doc_topic.push(theta);
    }
    Ok(PlantedCorpus {
        corpus: Corpus { docs },
        topic_word,
        doc_topic,
    })
}
