//! Experiment presets and helpers shared by the command-line tool and the
//! end-to-end checks: teacher depths per dataset, compression accounting,
//! medians over runs, and a self-contained synthetic benchmark.

use crate::coherence::{evaluate_topics, extract_topics, CoherenceConfig, CoherenceReport};
use crate::corpus::{bow_matrix, Corpus, Vocabulary};
use crate::distill::{FrozenTeacher, KdConfig};
use crate::embedstore::synth_embeddings;
use crate::error::{Error, Result};
use crate::synth::{planted_corpus, PlantedCorpus, SynthConfig};
use crate::topicvae::{compression, topic_word_weights, ModelConfig, ParamCount, TopicModel, TopicRanking};
use crate::training::{train_student_with_kd, train_vae, Dataset, History, TrainConfig};

pub const DEFAULT_VOCAB: usize = 2000;
pub const TEACHER_EMBED_DIM: usize = 768;
pub const STUDENT_EMBED_DIM: usize = 384;
/// Embedding widths of the synthetic benchmark.
pub const SYNTH_TEACHER_DIM: usize = 64;
pub const SYNTH_STUDENT_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TeacherPreset {
    pub dataset: &'static str,
    pub topics: usize,
    /// Number of hidden layers in the teacher encoder.
    pub depth: usize,
}

pub const PRESETS: [TeacherPreset; 7] = [
    TeacherPreset {
        dataset: "20ng",
        topics: 20,
        depth: 1,
    },
    TeacherPreset {
        dataset: "20ng",
        topics: 50,
        depth: 1,
    },
    TeacherPreset {
        dataset: "20ng",
        topics: 100,
        depth: 5,
    },
    TeacherPreset {
        dataset: "m10",
        topics: 10,
        depth: 4,
    },
    TeacherPreset {
        dataset: "m10",
        topics: 20,
        depth: 5,
    },
    TeacherPreset {
        dataset: "m10",
        topics: 50,
        depth: 2,
    },
    TeacherPreset {
        dataset: "m10",
        topics: 100,
        depth: 3,
    },
];

/// Teacher depth for a named dataset and topic count, case-insensitive.
pub fn preset_depth(dataset: &str, topics: usize) -> Option<usize> {
    PRESETS
        .iter()
        .find(|p| p.dataset.eq_ignore_ascii_case(dataset) && p.topics == topics)
        .map(|p| p.depth)
}

/// Median of `values`; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Config("median of no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionRow {
    pub preset: TeacherPreset,
    pub teacher_params: usize,
    pub student_params: usize,
    pub teacher_bytes: usize,
    pub student_bytes: usize,
    /// `1 − student_bytes / teacher_bytes`.
    pub reduction: f64,
}

/// Parameter accounting for every preset, counting decoder normalization
/// buffers on both sides.
pub fn compression_table(vocab: usize, teacher_dim: usize, student_dim: usize) -> Result<Vec<CompressionRow>> {
    PRESETS
        .iter()
        .map(|&preset| {
            let t = count_for(ModelConfig::teacher(preset.topics, vocab, teacher_dim, preset.depth))?;
            let s = count_for(ModelConfig::student(preset.topics, vocab, student_dim))?;
            Ok(CompressionRow {
                preset,
                teacher_params: t.total(),
                student_params: s.total(),
                teacher_bytes: t.bytes(),
                student_bytes: s.bytes(),
                reduction: compression(t, s),
            })
        })
        .collect()
}

fn count_for(cfg: ModelConfig) -> Result<ParamCount> {
    cfg.validate()?;
    Ok(TopicModel::zeros(cfg)?.count_parameters())
}

/// Coherence report of a model's top words against `corpus`.
pub fn evaluate_model(
    model: &TopicModel,
    vocab: &Vocabulary,
    corpus: &Corpus,
    cfg: &CoherenceConfig,
    ranking: TopicRanking,
    tag: &str,
    seed: u64,
) -> Result<CoherenceReport> {
    let topics = extract_topics(&topic_word_weights(model, ranking), vocab, cfg.top_n)?;
    Ok(CoherenceReport {
        model: tag.to_owned(),
        topics: model.topics(),
        seed,
        scores: evaluate_topics(&topics, corpus, vocab, cfg)?,
    })
}

/// Planted-topic corpus with teacher- and student-grade embeddings.
#[derive(Debug, Clone)]
pub struct SyntheticBench {
    pub planted: PlantedCorpus,
    pub vocab: Vocabulary,
    pub teacher_data: Dataset,
    pub student_data: Dataset,
    pub coherence: CoherenceConfig,
    pub ranking: TopicRanking,
}

impl SyntheticBench {
    pub fn new(synth: &SynthConfig, teacher_dim: usize, student_dim: usize) -> Result<SyntheticBench> {
        let planted = planted_corpus(synth)?;
        let vocab = Vocabulary::build(&planted.corpus, synth.vocab)?;
        let bow = bow_matrix(&planted.corpus, &vocab);
        let t_emb = synth_embeddings(&planted.corpus, teacher_dim, synth.seed)?.to_array();
        let s_emb = synth_embeddings(&planted.corpus, student_dim, synth.seed.wrapping_add(1))?.to_array();
        Ok(SyntheticBench {
            teacher_data: Dataset::new(bow.clone(), t_emb)?,
            student_data: Dataset::new(bow, s_emb)?,
            planted,
            vocab,
            coherence: CoherenceConfig::default(),
            ranking: TopicRanking::default(),
        })
    }

    pub fn topics(&self) -> usize {
        self.planted.topic_word.len()
    }

    pub fn teacher_config(&self, depth: usize) -> ModelConfig {
        ModelConfig::teacher(self.topics(), self.vocab.len(), self.teacher_data.ctx.ncols(), depth)
    }

    pub fn student_config(&self) -> ModelConfig {
        ModelConfig::student(self.topics(), self.vocab.len(), self.student_data.ctx.ncols())
    }

    pub fn train_teacher(&self, depth: usize, cfg: &TrainConfig) -> Result<(FrozenTeacher, History)> {
        let mut model = TopicModel::new(self.teacher_config(depth), cfg.seed)?;
        let history = train_vae(&mut model, &self.teacher_data, cfg)?;
        Ok((FrozenTeacher::new(model), history))
    }

    /// Plain student when `kd` is `None` or has `alpha = 0`.
    pub fn train_student(
        &self,
        teacher: Option<&FrozenTeacher>,
        cfg: &TrainConfig,
        kd: Option<&KdConfig>,
    ) -> Result<(TopicModel, History)> {
        let mut model = TopicModel::new(self.student_config(), cfg.seed)?;
        let history = match (teacher, kd) {
            (Some(t), Some(k)) => {
                train_student_with_kd(t, &mut model, &self.student_data, &self.teacher_data.ctx, cfg, k)?
            }
            _ => train_vae(&mut model, &self.student_data, cfg)?,
        };
        Ok((model, history))
    }

    pub fn evaluate(&self, model: &TopicModel, tag: &str, seed: u64) -> Result<CoherenceReport> {
        evaluate_model(
            model,
            &self.vocab,
            &self.planted.corpus,
            &self.coherence,
            self.ranking,
            tag,
            seed,
        )
    }
}

/// Median NPMI over runs for one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantScore {
    pub tag: String,
    pub npmi: Vec<f64>,
    pub median: f64,
}

/// One seed group of the synthetic benchmark: a corpus drawn with
/// `synth.seed`, one teacher, then `runs` students per variant
/// (plain, full distillation, Wasserstein only, soft labels only).
/// The first entry is the teacher.
pub fn seed_group(
    synth: &SynthConfig,
    runs: usize,
    teacher_cfg: &TrainConfig,
    student_cfg: &TrainConfig,
    kd: &KdConfig,
) -> Result<Vec<VariantScore>> {
    let bench = SyntheticBench::new(synth, SYNTH_TEACHER_DIM, SYNTH_STUDENT_DIM)?;
    let (teacher, _) = bench.train_teacher(1, teacher_cfg)?;
    let t = bench.evaluate(teacher.model(), "T", teacher_cfg.seed)?.mean_npmi();
    let mut out = vec![VariantScore {
        tag: "T".into(),
        npmi: vec![t],
        median: t,
    }];
    let variants = [
        ("S", None),
        ("SKD", Some(*kd)),
        ("SKD-2w", Some(KdConfig { use_ce: false, ..*kd })),
        ("SKD-ce", Some(KdConfig { use_2w: false, ..*kd })),
    ];
    for (tag, kd) in variants {
        let npmi = (0..runs as u64)
            .map(|run| {
                let cfg = TrainConfig {
                    seed: student_cfg.seed + run,
                    ..*student_cfg
                };
                let (model, _) = bench.train_student(Some(&teacher), &cfg, kd.as_ref())?;
                Ok(bench.evaluate(&model, tag, cfg.seed)?.mean_npmi())
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(VariantScore {
            tag: tag.into(),
            median: median(&npmi)?,
            npmi,
        });
    }
    Ok(out)
}
