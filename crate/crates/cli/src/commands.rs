use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::{Array2, Axis};
use rayon::prelude::*;

use wkd::checkpoint::{Checkpoint, Tensor};
use wkd::coherence::{extract_topics, CoherenceConfig, CoherenceReport};
use wkd::corpus::{bow_matrix, Corpus, Partition, Vocabulary};
use wkd::distill::{FrozenTeacher, KdConfig, TeacherTheta};
use wkd::embedstore::{synth_embeddings, EmbeddingMatrix};
use wkd::experiment::{self, evaluate_model, median, preset_depth};
use wkd::nn::AdamConfig;
use wkd::rng::fnv1a;
use wkd::topicvae::{compression, topic_word_weights, Architecture, ModelConfig, TopicModel, TopicRanking};
use wkd::training::{train_student_with_kd, train_vae, write_history_csv, Dataset, TrainConfig};

use crate::settings::Settings;
use crate::UsageError;

const VOCAB_FILE: &str = "vocab.txt";
const BOW_FILE: &str = "bow.tns";
const CORPUS_FILE: &str = "corpus.tsv";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Sizes the global worker pool from `WKD_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("WKD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("WKD_THREADS={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring worker threads")
}

fn out_dir(s: &Settings) -> Result<PathBuf> {
    let out: PathBuf = s.require("out")?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn vocab_hash(vocab: &Vocabulary) -> String {
    format!("{:016x}", fnv1a(vocab.to_file_string().as_bytes()))
}

/// Output of `prepare`: corpus copy, vocabulary and BoW counts for every
/// document, rows in corpus order.
struct Prepared {
    dir: PathBuf,
    corpus: Corpus,
    vocab: Vocabulary,
    bow: Array2<f64>,
}

impl Prepared {
    fn load(s: &Settings) -> Result<Prepared> {
        let dir = s.existing_path("dataset")?;
        if !dir.is_dir() {
            return Err(usage(format!(
                "dataset {} is not a prepared directory (run `wkd prepare` first)",
                dir.display()
            )));
        }
        let corpus = Corpus::load_tsv(dir.join(CORPUS_FILE))?;
        let vocab = Vocabulary::load(dir.join(VOCAB_FILE))?;
        let bow = Tensor::read(dir.join(BOW_FILE))?.to_matrix()?;
        if bow.dim() != (corpus.len(), vocab.len()) {
            bail!(wkd::Error::Format(format!(
                "BoW cache is {:?}, expected {:?}",
                bow.dim(),
                (corpus.len(), vocab.len())
            )));
        }
        Ok(Prepared {
            dir,
            corpus,
            vocab,
            bow,
        })
    }

    fn train_rows(&self) -> Vec<usize> {
        (0..self.corpus.len())
            .filter(|&i| self.corpus.docs[i].partition == Partition::Train)
            .collect()
    }

    /// Training documents, the reference corpus for coherence.
    fn train_corpus(&self) -> Corpus {
        Corpus {
            docs: self
                .train_rows()
                .into_iter()
                .map(|i| self.corpus.docs[i].clone())
                .collect(),
        }
    }

    fn embeddings(&self, s: &Settings, key: &str, default_name: &str) -> Result<EmbeddingMatrix> {
        let path = s.path(key).unwrap_or_else(|| self.dir.join(default_name));
        if !path.exists() {
            return Err(usage(format!(
                "{key}: embeddings file {} does not exist",
                path.display()
            )));
        }
        let emb = EmbeddingMatrix::read(&path)?;
        if emb.n_docs() != self.corpus.len() {
            return Err(usage(format!(
                "{}: {} embedding rows for {} documents",
                path.display(),
                emb.n_docs(),
                self.corpus.len()
            )));
        }
        Ok(emb)
    }

    fn dataset(&self, ctx: &EmbeddingMatrix) -> Result<Dataset> {
        let rows = self.train_rows();
        if rows.len() < 2 {
            return Err(usage("need at least 2 training documents"));
        }
        Ok(Dataset::new(
            self.bow.select(Axis(0), &rows),
            ctx.to_array().select(Axis(0), &rows),
        )?)
    }

    fn check_vocab(&self, ck: &Checkpoint, what: &str) -> Result<()> {
        let v = ck.model.vocab_size();
        if v != self.vocab.len() {
            return Err(usage(format!(
                "vocabulary mismatch: {what} has V={v}, dataset has {}",
                self.vocab.len()
            )));
        }
        if let Some(h) = ck.meta.get("vocab_hash") {
            if *h != vocab_hash(&self.vocab) {
                return Err(usage(format!(
                    "vocabulary mismatch: {what} was trained on a different vocabulary"
                )));
            }
        }
        Ok(())
    }
}

fn train_config(s: &Settings) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        epochs: s.parse_or("epochs", 100)?,
        batch_size: s.parse_or("batch_size", 64)?,
        seed: s.parse_or("seed", 0)?,
        adam: AdamConfig {
            lr: s.parse_or("lr", AdamConfig::default().lr)?,
            ..AdamConfig::default()
        },
        prior_alpha: s.parse("prior_alpha")?,
    };
    if cfg.epochs == 0 || cfg.batch_size < 2 {
        return Err(usage("epochs must be >= 1 and batch_size >= 2"));
    }
    Ok(cfg)
}

fn kd_config(s: &Settings) -> Result<KdConfig> {
    let teacher_theta = match s.get("teacher_theta").map(str::to_ascii_lowercase).as_deref() {
        None | Some("own") => TeacherTheta::Own,
        Some("student") => TeacherTheta::Student,
        Some(other) => {
            return Err(usage(format!(
                "teacher_theta must be `own` or `student`, got {other:?}"
            )))
        }
    };
    let kd = KdConfig {
        alpha: s.parse_or("alpha", 0.5)?,
        temperature: s.parse_or("temperature", 2.0)?,
        use_2w: !s.flag("no_2w")?,
        use_ce: !s.flag("no_ce")?,
        teacher_theta,
    };
    kd.validate().map_err(|e| usage(e.to_string()))?;
    Ok(kd)
}

fn ranking(s: &Settings) -> Result<TopicRanking> {
    s.get("ranking")
        .map_or(Ok(TopicRanking::default()), str::parse)
        .map_err(|e| usage(e.to_string()))
}

fn coherence_config(s: &Settings) -> Result<CoherenceConfig> {
    Ok(CoherenceConfig {
        top_n: s.parse_or("top_n", 10)?,
        ..CoherenceConfig::default()
    })
}

pub fn prepare(s: &Settings) -> Result<()> {
    let input = s.existing_path("dataset")?;
    if input.is_dir() {
        return Err(usage(format!("dataset {} must be a TSV file", input.display())));
    }
    let out = out_dir(s)?;
    let vocab_size: usize = s.parse_or("vocab_size", experiment::DEFAULT_VOCAB)?;
    let corpus = Corpus::load_tsv(&input)?;
    let vocab = Vocabulary::build(&corpus, vocab_size)?;
    let bow = bow_matrix(&corpus, &vocab);
    vocab.save(out.join(VOCAB_FILE))?;
    Tensor::from_matrix(&bow).write(out.join(BOW_FILE))?;
    fs::copy(&input, out.join(CORPUS_FILE)).with_context(|| format!("copying {}", input.display()))?;

    if let Some(arg) = s.get("synth_embeddings") {
        let dims: Vec<usize> = arg
            .split(',')
            .map(|d| d.trim().parse().ok().filter(|&d| d > 0))
            .collect::<Option<_>>()
            .filter(|v: &Vec<usize>| v.len() == 2)
            .ok_or_else(|| {
                usage(format!(
                    "synth_embeddings must be `teacher_dim,student_dim`, got {arg:?}"
                ))
            })?;
        let seed: u64 = s.parse_or("seed", 0)?;
        synth_embeddings(&corpus, dims[0], seed)?.write(out.join("teacher.emb"))?;
        synth_embeddings(&corpus, dims[1], seed.wrapping_add(1))?.write(out.join("student.emb"))?;
    }
    println!(
        "prepared {} documents ({} train), vocabulary {} words -> {}",
        corpus.len(),
        corpus.count_partition(Partition::Train),
        vocab.len(),
        out.display()
    );
    Ok(())
}

pub fn train_teacher(s: &Settings) -> Result<()> {
    let data = Prepared::load(s)?;
    let emb = data.embeddings(s, "teacher_emb", "teacher.emb")?;
    let k: usize = s.require("k")?;
    let depth = match s.parse::<usize>("depth")? {
        Some(d) => d,
        None => {
            let preset = s
                .get("preset")
                .ok_or_else(|| usage("teacher depth unknown: pass --depth or --preset"))?;
            preset_depth(preset, k)
                .ok_or_else(|| usage(format!("no bundled depth for preset {preset:?} with K={k}")))?
        }
    };
    let cfg = train_config(s)?;
    let out = out_dir(s)?;
    let model_cfg = ModelConfig::teacher(k, data.vocab.len(), emb.dim(), depth);
    model_cfg.validate().map_err(|e| usage(e.to_string()))?;
    let mut model = TopicModel::new(model_cfg, cfg.seed)?;
    let history = train_vae(&mut model, &data.dataset(&emb)?, &cfg)?;

    let mut ck = Checkpoint::new(model, cfg.seed);
    ck.meta.insert("vocab_hash".into(), vocab_hash(&data.vocab));
    ck.meta.insert("tag".into(), "T".into());
    ck.save(&out)?;
    write_history_csv(out.join("history.csv"), &history)?;
    s.write(&out.join("settings.ini"))?;
    let last = &history.last().expect("at least one epoch").loss;
    println!(
        "teacher K={k} H={depth}: {} epochs, final nll {:.4} kl {:.4} -> {}",
        history.len(),
        last.nll,
        last.kl,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Clone)]
struct RunRow {
    model: String,
    k: usize,
    run: String,
    seed: String,
    npmi: f64,
    cv: f64,
}

fn run_report_csv(rows: &[RunRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "K", "run", "seed", "npmi", "cv"])?;
    for r in rows {
        w.write_record([
            r.model.as_str(),
            &r.k.to_string(),
            &r.run,
            &r.seed,
            &r.npmi.to_string(),
            &r.cv.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn load_teacher(s: &Settings, data: &Prepared, emb: &EmbeddingMatrix) -> Result<Checkpoint> {
    let dir = s.existing_path("teacher")?;
    let ck = Checkpoint::load(&dir)?;
    data.check_vocab(&ck, "teacher")?;
    let cfg = &ck.model.config;
    if let Some(k) = s.parse::<usize>("k")? {
        if k != cfg.topics {
            return Err(usage(format!(
                "checkpoint mismatch: teacher has K={}, requested K={k}",
                cfg.topics
            )));
        }
    }
    if cfg.ctx_dim != emb.dim() {
        return Err(usage(format!(
            "checkpoint mismatch: teacher expects {}-dim embeddings, got {}",
            cfg.ctx_dim,
            emb.dim()
        )));
    }
    Ok(ck)
}

pub fn distill(s: &Settings) -> Result<()> {
    let data = Prepared::load(s)?;
    let t_emb = data.embeddings(s, "teacher_emb", "teacher.emb")?;
    let s_emb = data.embeddings(s, "student_emb", "student.emb")?;
    let teacher_ck = load_teacher(s, &data, &t_emb)?;
    let cfg = train_config(s)?;
    let kd = kd_config(s)?;
    let runs: usize = s.parse_or("runs", 5)?;
    if runs == 0 {
        return Err(usage("runs must be at least 1"));
    }
    let coh = coherence_config(s)?;
    let rank = ranking(s)?;
    let out = out_dir(s)?;
    let k = teacher_ck.model.topics();
    let label = kd.label();
    let student_data = data.dataset(&s_emb)?;
    let teacher_ctx = data.dataset(&t_emb)?.ctx;
    let reference = data.train_corpus();
    let teacher = FrozenTeacher::new(teacher_ck.model);

    let results: Vec<Result<CoherenceReport>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let run_cfg = TrainConfig {
                seed: cfg.seed + i as u64,
                ..cfg
            };
            let mut model = TopicModel::new(ModelConfig::student(k, data.vocab.len(), s_emb.dim()), run_cfg.seed)?;
            let history = if kd.alpha == 0.0 {
                train_vae(&mut model, &student_data, &run_cfg)?
            } else {
                train_student_with_kd(&teacher, &mut model, &student_data, &teacher_ctx, &run_cfg, &kd)?
            };
            let report = evaluate_model(&model, &data.vocab, &reference, &coh, rank, label, run_cfg.seed)?;
            let dir = out.join(format!("run-{i}"));
            let mut ck = Checkpoint::new(model, run_cfg.seed);
            ck.meta.insert("vocab_hash".into(), vocab_hash(&data.vocab));
            ck.meta.insert("tag".into(), label.into());
            ck.save(&dir)?;
            write_history_csv(dir.join("history.csv"), &history)?;
            report.write_csv(dir.join("coherence.csv"))?;
            Ok(report)
        })
        .collect();
    let reports = results.into_iter().collect::<Result<Vec<_>>>()?;

    let t_report = evaluate_model(
        teacher.model(),
        &data.vocab,
        &reference,
        &coh,
        rank,
        "T",
        teacher_ck.seed,
    )?;
    t_report.write_csv(out.join("teacher_coherence.csv"))?;
    let mut rows = vec![RunRow {
        model: "T".into(),
        k,
        run: "0".into(),
        seed: teacher_ck.seed.to_string(),
        npmi: t_report.mean_npmi(),
        cv: t_report.mean_cv(),
    }];
    for (i, r) in reports.iter().enumerate() {
        rows.push(RunRow {
            model: label.into(),
            k,
            run: i.to_string(),
            seed: r.seed.to_string(),
            npmi: r.mean_npmi(),
            cv: r.mean_cv(),
        });
    }
    let npmi: Vec<f64> = reports.iter().map(CoherenceReport::mean_npmi).collect();
    let cv: Vec<f64> = reports.iter().map(CoherenceReport::mean_cv).collect();
    let (med_npmi, med_cv) = (median(&npmi)?, median(&cv)?);
    rows.push(RunRow {
        model: label.into(),
        k,
        run: "median".into(),
        seed: String::new(),
        npmi: med_npmi,
        cv: med_cv,
    });
    let report_path = out.join("run_report.csv");
    fs::write(&report_path, run_report_csv(&rows)?).with_context(|| format!("writing {}", report_path.display()))?;

    let t_count = teacher.model().count_parameters();
    let s_count = TopicModel::zeros(ModelConfig::student(k, data.vocab.len(), s_emb.dim()))?.count_parameters();
    let summary = format!(
        "teacher_params = {}\nstudent_params = {}\nteacher_bytes = {}\nstudent_bytes = {}\nreduction = {:.4}\n",
        t_count.total(),
        s_count.total(),
        t_count.bytes(),
        s_count.bytes(),
        compression(t_count, s_count)
    );
    fs::write(out.join("params.txt"), &summary).context("writing params.txt")?;
    s.write(&out.join("settings.ini"))?;

    println!("model  K  npmi     cv");
    println!("T      {k:<2} {:.4}  {:.4}", t_report.mean_npmi(), t_report.mean_cv());
    println!("{label:<6} {k:<2} {med_npmi:.4}  {med_cv:.4}  (median of {runs})");
    println!("size reduction {:.1}%", 100.0 * compression(t_count, s_count));
    Ok(())
}

pub fn eval(s: &Settings) -> Result<()> {
    let data = Prepared::load(s)?;
    let ck = Checkpoint::load(s.existing_path("checkpoint")?)?;
    data.check_vocab(&ck, "checkpoint")?;
    let coh = coherence_config(s)?;
    let default_tag = ck
        .meta
        .get("tag")
        .cloned()
        .unwrap_or_else(|| match ck.model.config.architecture {
            Architecture::Combined => "T".into(),
            Architecture::ZeroShot => "S".into(),
        });
    let tag = s.get("tag").map_or(default_tag, str::to_owned);
    let rank = ranking(s)?;
    let report = evaluate_model(&ck.model, &data.vocab, &data.train_corpus(), &coh, rank, &tag, ck.seed)?;
    match s.path("out") {
        Some(path) => {
            report.write_csv(&path)?;
            let topics = extract_topics(&topic_word_weights(&ck.model, rank), &data.vocab, coh.top_n)?;
            for (score, words) in report.scores.iter().zip(&topics.words) {
                println!(
                    "{:>3} {:+.4} {:+.4}  {}",
                    score.topic_id,
                    score.npmi,
                    score.cv,
                    words.join(" ")
                );
            }
            println!(
                "mean npmi {:.4} cv {:.4} -> {}",
                report.mean_npmi(),
                report.mean_cv(),
                path.display()
            );
        }
        None => print!("{}", report.to_csv()?),
    }
    Ok(())
}

pub fn compare(s: &Settings, paths: &[PathBuf]) -> Result<()> {
    if paths.len() < 2 {
        return Err(usage("need ≥2 reports"));
    }
    // Group by (model, K) in first-seen order.
    let mut groups: Vec<((String, usize), Vec<CoherenceReport>)> = Vec::new();
    for p in paths {
        if !p.exists() {
            return Err(usage(format!("report {} does not exist", p.display())));
        }
        let r = CoherenceReport::read_csv(p)?;
        let key = (r.model.clone(), r.topics);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }

    let mut k_sets: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for ((m, k), _) in &groups {
        k_sets.entry(m.as_str()).or_default().push(*k);
    }
    let all_k: Vec<usize> = {
        let mut v: Vec<usize> = groups.iter().map(|((_, k), _)| *k).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    for (m, ks) in &k_sets {
        let missing: Vec<String> = all_k.iter().filter(|k| !ks.contains(k)).map(usize::to_string).collect();
        if !missing.is_empty() {
            eprintln!("warning: model {m} has no report for K={}", missing.join(","));
        }
    }

    let mut table = String::from("model,K,n,npmi,cv,delta_npmi,delta_cv\n");
    let mut baselines: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for ((model, k), reports) in &groups {
        let npmi = median(&reports.iter().map(CoherenceReport::mean_npmi).collect::<Vec<_>>())?;
        let cv = median(&reports.iter().map(CoherenceReport::mean_cv).collect::<Vec<_>>())?;
        let (bn, bc) = *baselines.entry(*k).or_insert((npmi, cv));
        table.push_str(&format!(
            "{model},{k},{},{npmi:.6},{cv:.6},{:.6},{:.6}\n",
            reports.len(),
            npmi - bn,
            cv - bc
        ));
    }
    print!("{table}");

    if let (Some(t), Some(c)) = (s.path("teacher"), s.path("checkpoint")) {
        let t = Checkpoint::load(&t)?.model.count_parameters();
        let c = Checkpoint::load(&c)?.model.count_parameters();
        println!(
            "compression: teacher {} params ({} bytes), student {} params ({} bytes), reduction {:.1}%",
            t.total(),
            t.bytes(),
            c.total(),
            c.bytes(),
            100.0 * compression(t, c)
        );
    }
    if let Some(out) = s.path("out") {
        write_file(&out, &table)?;
    }
    Ok(())
}

pub fn params(s: &Settings) -> Result<()> {
    let vocab: usize = s.parse_or("vocab_size", experiment::DEFAULT_VOCAB)?;
    let t_dim: usize = s.parse_or("teacher_dim", experiment::TEACHER_EMBED_DIM)?;
    let s_dim: usize = s.parse_or("student_dim", experiment::STUDENT_EMBED_DIM)?;
    let k: Option<usize> = s.parse("k")?;
    let preset = s.get("preset");
    let rows = experiment::compression_table(vocab, t_dim, s_dim).map_err(|e| usage(e.to_string()))?;
    let mut table = String::from("dataset,K,H,teacher_params,student_params,teacher_mb,student_mb,reduction_pct\n");
    let mb = |b: usize| b as f64 / 1e6;
    for r in rows
        .iter()
        .filter(|r| k.is_none_or(|k| r.preset.topics == k))
        .filter(|r| preset.is_none_or(|p| r.preset.dataset.eq_ignore_ascii_case(p)))
    {
        table.push_str(&format!(
            "{},{},{},{},{},{:.3},{:.3},{:.1}\n",
            r.preset.dataset,
            r.preset.topics,
            r.preset.depth,
            r.teacher_params,
            r.student_params,
            mb(r.teacher_bytes),
            mb(r.student_bytes),
            100.0 * r.reduction
        ));
    }
    print!("{table}");
    if let Some(out) = s.path("out") {
        write_file(&out, &table)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
