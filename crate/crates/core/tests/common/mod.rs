//! Shared fixtures and reference implementations for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wkd::corpus::{Corpus, Document, Partition, Vocabulary};
use wkd::distill::{FrozenTeacher, KdConfig};
use wkd::nn::Mode;
use wkd::rng::{standard_normal, stream};
use wkd::topicvae::{Architecture, Batch, ModelConfig, PriorParams, TopicModel};
use wkd::training::{build_step, TrainConfig};

pub const H: f64 = 1e-4;

/// A small teacher/student pair with row-aligned batches.
pub struct TinySetup {
    pub teacher: FrozenTeacher,
    pub student: TopicModel,
    pub teacher_batch: Batch,
    pub student_batch: Batch,
    pub prior: PriorParams,
    pub noise: Array2<f64>,
}

pub fn tiny_setup(seed: u64, student_projection: bool) -> TinySetup {
    let (k, v, rows) = (4, 30, 8);
    let teacher_cfg = ModelConfig::teacher(k, v, 6, 2);
    let student_cfg = ModelConfig {
        architecture: Architecture::ZeroShot,
        ctx_projection: student_projection,
        hidden_sizes: vec![7],
        ..ModelConfig::student(k, v, 5)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bow = Array2::from_shape_simple_fn((rows, v), || f64::from(rng.random_range(0u8..4)));
    let mut r = stream(seed, "fixture", 0);
    let t_ctx = standard_normal(&mut r, rows, 6);
    let s_ctx = standard_normal(&mut r, rows, 5);
    let noise = standard_normal(&mut r, rows, k);
    TinySetup {
        teacher: FrozenTeacher::new(TopicModel::new(teacher_cfg, seed + 1).unwrap()),
        student: TopicModel::new(student_cfg, seed + 2).unwrap(),
        teacher_batch: Batch {
            bow: bow.clone(),
            ctx: t_ctx,
        },
        student_batch: Batch { bow, ctx: s_ctx },
        prior: TrainConfig::default().prior(k).unwrap(),
        noise,
    }
}

/// Objective value and analytic gradients for `model` on the fixture.
/// Dropout masks come from a fixed stream, so repeated calls see the same
/// function of the parameters.
pub fn objective(
    model: &TopicModel,
    s: &TinySetup,
    kd: Option<&KdConfig>,
    want_grads: bool,
) -> (f64, Vec<Array2<f64>>) {
    let mut rng = stream(99, "dropout", 0);
    let batch = if model.config.architecture == Architecture::Combined {
        &s.teacher_batch
    } else {
        &s.student_batch
    };
    let kd_args = kd.map(|c| (&s.teacher, &s.teacher_batch, c));
    let step = build_step(model, batch, &s.prior, &s.noise, Mode::Train, &mut rng, kd_args).unwrap();
    let value = step.tape.scalar(step.objective);
    if !want_grads {
        return (value, Vec::new());
    }
    let grads = step.tape.backward(step.objective).unwrap();
    let list = step
        .params
        .iter()
        .zip(model.params())
        .map(|(&v, p)| grads.wrt(v, p.dim()))
        .collect();
    (value, list)
}

/// Relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` per
/// parameter group, with central differences of step `H`.
pub fn gradient_errors(model: &TopicModel, s: &TinySetup, kd: Option<&KdConfig>) -> Vec<(String, f64)> {
    let (_, analytic) = objective(model, s, kd, true);
    let names = model.param_names();
    let mut out = Vec::new();
    for (g, name) in names.iter().enumerate() {
        let shape = analytic[g].dim();
        let mut numeric = Array2::zeros(shape);
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let mut m = model.clone();
                m.params_mut()[g][[r, c]] += H;
                let up = objective(&m, s, kd, false).0;
                m.params_mut()[g][[r, c]] -= 2.0 * H;
                let down = objective(&m, s, kd, false).0;
                numeric[[r, c]] = (up - down) / (2.0 * H);
            }
        }
        let diff = (&analytic[g] - &numeric).mapv(|x| x * x).sum().sqrt();
        let scale = analytic[g]
            .mapv(|x| x * x)
            .sum()
            .sqrt()
            .max(numeric.mapv(|x| x * x).sum().sqrt());
        let err = if scale == 0.0 { 0.0 } else { diff / scale };
        assert!(scale > 0.0, "{name}: gradient is identically zero");
        out.push((name.clone(), err));
    }
    out
}

/// Corpus of single-letter-ish tokens `t0..t{alphabet}`.
pub fn token_corpus(docs: &[Vec<usize>]) -> Corpus {
    Corpus {
        docs: docs
            .iter()
            .enumerate()
            .map(|(id, d)| Document {
                id,
                tokens: d.iter().map(|t| format!("t{t}")).collect(),
                partition: Partition::Train,
                label: None,
            })
            .collect(),
    }
}

/// Every window, listed explicitly, as a set of vocabulary indices.
pub fn brute_windows(corpus: &Corpus, vocab: &Vocabulary, window: usize) -> Vec<BTreeSet<usize>> {
    let mut out = Vec::new();
    for doc in &corpus.docs {
        let toks: Vec<usize> = doc.tokens.iter().filter_map(|t| vocab.index_of(t)).collect();
        if toks.is_empty() {
            continue;
        }
        let n_windows = if toks.len() <= window {
            1
        } else {
            toks.len() - window + 1
        };
        for start in 0..n_windows {
            let end = (start + window).min(toks.len());
            out.push(toks[start..end].iter().copied().collect());
        }
    }
    out
}

pub fn brute_npmi(windows: &[BTreeSet<usize>], a: usize, b: usize) -> f64 {
    let n = windows.len() as f64;
    let count = |f: &dyn Fn(&BTreeSet<usize>) -> bool| windows.iter().filter(|w| f(w)).count() as f64;
    let pa = count(&|w| w.contains(&a)) / n;
    let pb = count(&|w| w.contains(&b)) / n;
    let pab = count(&|w| w.contains(&a) && w.contains(&b)) / n + 1.0 / n;
    if pab >= 1.0 {
        return 1.0;
    }
    ((pab / (pa * pb)).ln() / -pab.ln()).clamp(-1.0, 1.0)
}

pub fn brute_npmi_topic(windows: &[BTreeSet<usize>], topic: &[usize]) -> f64 {
    let mut vals = Vec::new();
    for i in 0..topic.len() {
        for j in i + 1..topic.len() {
            vals.push(brute_npmi(windows, topic[i], topic[j]));
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

pub fn brute_cv(windows: &[BTreeSet<usize>], topic: &[usize]) -> f64 {
    let n = topic.len();
    let vecs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| brute_npmi(windows, topic[i], topic[j])).collect())
        .collect();
    let total: Vec<f64> = (0..n).map(|j| vecs.iter().map(|v| v[j]).sum()).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut s = 0.0;
    for v in &vecs {
        let d = norm(v) * norm(&total);
        if d > 0.0 {
            s += v.iter().zip(&total).map(|(x, y)| x * y).sum::<f64>() / d;
        }
    }
    (s / n as f64).clamp(-1.0, 1.0)
}

/// Outcome of the diagonal-vs-full Wasserstein comparison.
pub struct W2Check {
    pub cases: usize,
    pub max_abs_err: f64,
    pub identical_exact_zero: bool,
}

/// `cases` random diagonal Gaussian pairs, cycling `K` over 1, 5, 20, 100.
pub fn w2_equivalence(cases: usize, seed: u64) -> W2Check {
    use ndarray::Array1;
    use wkd::distill::{w2_squared_diag_row, w2_squared_full};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_abs_err: f64 = 0.0;
    let mut identical_exact_zero = true;
    for i in 0..cases {
        let k = [1, 5, 20, 100][i % 4];
        let mut draw = |lo: f64, hi: f64| (0..k).map(|_| rng.random_range(lo..hi)).collect::<Vec<f64>>();
        let (mu_a, mu_b) = (draw(-3.0, 3.0), draw(-3.0, 3.0));
        let (lv_a, lv_b) = (draw(-4.0, 2.0), draw(-4.0, 2.0));
        let cov = |lv: &[f64]| Array2::from_diag(&Array1::from_iter(lv.iter().map(|v| v.exp())));
        let full = w2_squared_full(
            &Array1::from(mu_a.clone()),
            &cov(&lv_a),
            &Array1::from(mu_b.clone()),
            &cov(&lv_b),
        )
        .unwrap();
        let diag = w2_squared_diag_row(&mu_a, &lv_a, &mu_b, &lv_b);
        max_abs_err = max_abs_err.max((full - diag).abs());
        identical_exact_zero &= w2_squared_diag_row(&mu_a, &lv_a, &mu_a, &lv_a) == 0.0;
    }
    W2Check {
        cases,
        max_abs_err,
        identical_exact_zero,
    }
}

/// Random corpus over `alphabet` token types, some of them outside a
/// vocabulary of size `vocab`.
pub fn random_docs(rng: &mut impl Rng, max_docs: usize, max_len: usize, alphabet: usize) -> Vec<Vec<usize>> {
    let n = rng.random_range(1..=max_docs);
    (0..n)
        .map(|_| {
            let len = rng.random_range(0..=max_len);
            (0..len).map(|_| rng.random_range(0..alphabet)).collect()
        })
        .collect()
}

/// Largest deviation between library coherence and the brute-force oracle
/// on one corpus: co-occurrence counts, pair NPMI, topic NPMI and CV.
pub fn coherence_oracle_error(docs: &[Vec<usize>], window: usize, topic_len: usize) -> Option<f64> {
    use wkd::coherence::{count_cooccurrence, cv_topic, npmi_pair, npmi_topic};
    let corpus = token_corpus(docs);
    let vocab = Vocabulary::build(&corpus, 8).ok()?;
    let counts = count_cooccurrence(&corpus, &vocab, window).unwrap();
    let windows = brute_windows(&corpus, &vocab, window);
    assert_eq!(counts.total_windows as usize, windows.len());
    let present: Vec<usize> = (0..vocab.len()).filter(|&w| counts.word_count(w) > 0).collect();
    let mut err: f64 = 0.0;
    for &a in &present {
        assert_eq!(
            counts.word_count(a) as usize,
            windows.iter().filter(|w| w.contains(&a)).count()
        );
        for &b in &present {
            let joint = windows.iter().filter(|w| w.contains(&a) && w.contains(&b)).count();
            assert_eq!(counts.joint_count(a, b) as usize, joint);
            let v = npmi_pair(&counts, a, b, None).unwrap();
            assert!((-1.0..=1.0).contains(&v));
            err = err.max((v - brute_npmi(&windows, a, b)).abs());
        }
    }
    if present.len() >= 2 {
        let topic: Vec<usize> = present.iter().copied().take(topic_len.max(2)).collect();
        err = err.max((npmi_topic(&counts, &topic, None).unwrap() - brute_npmi_topic(&windows, &topic)).abs());
        err = err.max((cv_topic(&counts, &topic, 1.0, None).unwrap() - brute_cv(&windows, &topic)).abs());
    }
    Some(err)
}
