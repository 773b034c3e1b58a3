//! Mini-batch training for the VAE topic models, with optional
//! distillation from a frozen teacher.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use crate::distill::{soft_ce_tape, w2_squared_diag_tape, FrozenTeacher, KdConfig, TeacherTheta};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Mode, Tape, Var};
use crate::rng::{standard_normal, stream};
use crate::topicvae::{
    laplace_prior, vae_loss_tape, Batch, ForwardVars, GaussianPosterior, KdBreakdown, LossBreakdown, PriorParams,
    TopicModel,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Dirichlet concentration of the prior; `None` means `1/K`.
    pub prior_alpha: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            seed: 0,
            adam: AdamConfig::default(),
            prior_alpha: None,
        }
    }
}

impl TrainConfig {
    pub fn prior(&self, topics: usize) -> Result<PriorParams> {
        laplace_prior(topics, self.prior_alpha.unwrap_or(1.0 / topics as f64))
    }
}

/// Row-aligned training inputs: raw BoW counts and contextual embeddings.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub bow: Array2<f64>,
    pub ctx: Array2<f64>,
}

impl Dataset {
    pub fn new(bow: Array2<f64>, ctx: Array2<f64>) -> Result<Dataset> {
        if bow.nrows() != ctx.nrows() {
            return Err(Error::Shape(format!(
                "{} BoW rows but {} embedding rows",
                bow.nrows(),
                ctx.nrows()
            )));
        }
        Ok(Dataset { bow, ctx })
    }

    pub fn len(&self) -> usize {
        self.bow.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(&self, rows: &[usize]) -> Batch {
        Batch {
            bow: self.bow.select(Axis(0), rows),
            ctx: self.ctx.select(Axis(0), rows),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

pub type History = Vec<EpochRecord>;

/// Header plus one row per epoch: `epoch,nll,kl,kd_2w,kd_ce,kd_total,total`.
/// KD columns are empty for runs without a teacher.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,nll,kl,kd_2w,kd_ce,kd_total,total\n");
    for r in history {
        let l = &r.loss;
        let (w, ce, kd) = match l.kd {
            Some(k) => (k.kd_2w.to_string(), k.kd_ce.to_string(), k.kd_total.to_string()),
            None => Default::default(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch,
            l.nll,
            l.kl,
            w,
            ce,
            kd,
            l.objective()
        );
    }
    out
}

pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

/// Shuffled mini-batches for one epoch. A trailing batch of a single
/// document joins the previous batch, since batch statistics need two rows.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, "shuffle", epoch as u64));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}

/// Distillation inputs for one training run.
#[derive(Debug, Clone, Copy)]
pub struct KdSetup<'a> {
    pub teacher: &'a FrozenTeacher,
    /// Teacher-side contextual embeddings, row aligned with the dataset.
    pub teacher_ctx: &'a Array2<f64>,
    pub config: KdConfig,
}

/// Distillation nodes for one batch.
#[derive(Debug, Clone)]
pub struct KdVars {
    pub kd_2w: Var,
    pub kd_ce: Var,
    pub kd_total: Var,
    /// Teacher parameters as bound on the tape; they receive no gradient.
    pub teacher_params: Vec<Var>,
}

/// Runs the frozen teacher in eval mode on the same tape (`z_T = mu_T`),
/// detaches its outputs, and builds the KD terms against the student pass.
pub fn kd_terms_tape(
    tape: &mut Tape,
    teacher: &FrozenTeacher,
    teacher_batch: &Batch,
    student: &ForwardVars,
    config: &KdConfig,
) -> Result<KdVars> {
    let tm = teacher.model();
    let tp = tm.bind(tape);
    // Eval mode draws no randomness.
    let mut unused = stream(0, "unused", 0);
    let tf = tm.forward_tape(tape, &tp, teacher_batch, Mode::Eval, None, &mut unused)?;
    let post_t = GaussianPosterior {
        mu: tape.value(tf.mu).clone(),
        log_var: tape.value(tf.log_var).clone(),
    };
    let logits_t = match config.teacher_theta {
        TeacherTheta::Own => tape.value(tf.logits).clone(),
        TeacherTheta::Student => {
            let z = tape.detach(student.z);
            let (_, logits, _, _) = tm.decode_tape(tape, &tp, z, Mode::Eval)?;
            tape.value(logits).clone()
        }
    };
    let kd_2w = w2_squared_diag_tape(tape, &post_t, student.mu, student.log_var)?;
    let kd_ce = soft_ce_tape(tape, &logits_t, student.logits, config.temperature)?;
    let t2 = config.temperature * config.temperature;
    let kd_total = match (config.use_2w, config.use_ce) {
        (true, true) => {
            let ce = tape.scale(kd_ce, t2);
            tape.add(kd_2w, ce)
        }
        (true, false) => tape.scale(kd_2w, 1.0),
        (false, true) => tape.scale(kd_ce, t2),
        (false, false) => tape.scale(kd_2w, 0.0),
    };
    Ok(KdVars {
        kd_2w,
        kd_ce,
        kd_total,
        teacher_params: tp.all,
    })
}

/// The full objective for one batch on a fresh tape.
pub struct StepGraph {
    pub tape: Tape,
    pub params: Vec<Var>,
    pub forward: ForwardVars,
    pub objective: Var,
    pub loss: LossBreakdown,
    pub kd: Option<KdVars>,
}

/// Builds the training objective for one batch: the VAE loss, or with
/// `kd`, `(1 − alpha) · vae + alpha · kd`.
pub fn build_step(
    model: &TopicModel,
    batch: &Batch,
    prior: &PriorParams,
    noise: &Array2<f64>,
    mode: Mode,
    rng: &mut impl rand::Rng,
    kd: Option<(&FrozenTeacher, &Batch, &KdConfig)>,
) -> Result<StepGraph> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let fwd = model.forward_tape(&mut tape, &bound, batch, mode, Some(noise), rng)?;
    let (nll, kl, vae) = vae_loss_tape(&mut tape, &fwd, &batch.bow, prior)?;
    let mut loss = LossBreakdown {
        nll: tape.scalar(nll),
        kl: tape.scalar(kl),
        total_vae: tape.scalar(vae),
        kd: None,
        total_student: None,
    };
    let (objective, kd_vars) = match kd {
        None => (vae, None),
        Some((teacher, teacher_batch, cfg)) => {
            let kv = kd_terms_tape(&mut tape, teacher, teacher_batch, &fwd, cfg)?;
            let a = tape.scale(vae, 1.0 - cfg.alpha);
            let b = tape.scale(kv.kd_total, cfg.alpha);
            let total = tape.add(a, b);
            loss.kd = Some(KdBreakdown {
                kd_2w: tape.scalar(kv.kd_2w),
                kd_ce: tape.scalar(kv.kd_ce),
                kd_total: tape.scalar(kv.kd_total),
            });
            loss.total_student = Some(tape.scalar(total));
            (total, Some(kv))
        }
    };
    Ok(StepGraph {
        tape,
        params: bound.all,
        forward: fwd,
        objective,
        loss,
        kd: kd_vars,
    })
}

fn fit(model: &mut TopicModel, data: &Dataset, cfg: &TrainConfig, kd: Option<KdSetup<'_>>) -> Result<History> {
    if data.len() < 2 {
        return Err(Error::Config("training needs at least 2 documents".into()));
    }
    if data.bow.ncols() != model.vocab_size() {
        return Err(Error::Config(format!(
            "dataset vocabulary {} does not match model vocabulary {}",
            data.bow.ncols(),
            model.vocab_size()
        )));
    }
    if let Some(setup) = &kd {
        setup.config.validate()?;
        let t = setup.teacher.model();
        if t.topics() != model.topics() || t.vocab_size() != model.vocab_size() {
            return Err(Error::Config(format!(
                "teacher has K={} V={}, student K={} V={}",
                t.topics(),
                t.vocab_size(),
                model.topics(),
                model.vocab_size()
            )));
        }
        if setup.teacher_ctx.nrows() != data.len() {
            return Err(Error::Shape(format!(
                "{} teacher embedding rows for {} documents",
                setup.teacher_ctx.nrows(),
                data.len()
            )));
        }
    }
    let prior = cfg.prior(model.topics())?;
    let names = model.param_names();
    let mut adam = AdamState::new(cfg.adam, model.params());
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut noise_rng = stream(cfg.seed, "noise", epoch as u64);
        let mut dropout_rng = stream(cfg.seed, "dropout", epoch as u64);
        let mut sums = LossBreakdown::default();
        let mut kd_sums = KdBreakdown::default();
        let mut student_sum = 0.0;

        for (b, rows) in epoch_batches(data.len(), cfg.batch_size, cfg.seed, epoch)
            .iter()
            .enumerate()
        {
            let batch = data.batch(rows);
            let noise = standard_normal(&mut noise_rng, rows.len(), model.topics());
            let teacher_batch = kd.as_ref().map(|s| Batch {
                bow: batch.bow.clone(),
                ctx: s.teacher_ctx.select(Axis(0), rows),
            });
            let kd_args = kd
                .as_ref()
                .zip(teacher_batch.as_ref())
                .map(|(s, tb)| (s.teacher, tb, &s.config));
            let step = build_step(model, &batch, &prior, &noise, Mode::Train, &mut dropout_rng, kd_args)?;
            let objective = step.tape.scalar(step.objective);
            if !objective.is_finite() {
                return Err(Error::NonFinite(format!("epoch {epoch} batch {b}: loss {objective}")));
            }
            let grads = step.tape.backward(step.objective)?;
            let grad_list: Vec<Array2<f64>> = step
                .params
                .iter()
                .zip(model.params())
                .map(|(&v, p)| grads.wrt(v, p.dim()))
                .collect();
            adam.step(&mut model.params_mut(), &grad_list, &names)
                .map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("epoch {epoch} batch {b}: {m}")),
                    other => other,
                })?;
            if let Some(stats) = &step.forward.norm_stats {
                model.decoder_norm.update(stats);
            }

            let w = rows.len() as f64;
            sums.nll += w * step.loss.nll;
            sums.kl += w * step.loss.kl;
            sums.total_vae += w * step.loss.total_vae;
            if let Some(k) = step.loss.kd {
                kd_sums.kd_2w += w * k.kd_2w;
                kd_sums.kd_ce += w * k.kd_ce;
                kd_sums.kd_total += w * k.kd_total;
                student_sum += w * step.loss.total_student.unwrap_or_default();
            }
        }

        let n = data.len() as f64;
        let loss = LossBreakdown {
            nll: sums.nll / n,
            kl: sums.kl / n,
            total_vae: sums.total_vae / n,
            kd: kd.as_ref().map(|_| KdBreakdown {
                kd_2w: kd_sums.kd_2w / n,
                kd_ce: kd_sums.kd_ce / n,
                kd_total: kd_sums.kd_total / n,
            }),
            total_student: kd.as_ref().map(|_| student_sum / n),
        };
        history.push(EpochRecord { epoch, loss });
    }
    Ok(history)
}

/// Trains `model` on its own VAE loss.
pub fn train_vae(model: &mut TopicModel, data: &Dataset, cfg: &TrainConfig) -> Result<History> {
    fit(model, data, cfg, None)
}

/// Trains `student` against `(1 − alpha) · vae + alpha · kd` with the
/// teacher frozen in eval mode.
pub fn train_student_with_kd(
    teacher: &FrozenTeacher,
    student: &mut TopicModel,
    data: &Dataset,
    teacher_ctx: &Array2<f64>,
    cfg: &TrainConfig,
    kd: &KdConfig,
) -> Result<History> {
    fit(
        student,
        data,
        cfg,
        Some(KdSetup {
            teacher,
            teacher_ctx,
            config: *kd,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_every_row_once() {
        for n in [2, 5, 64, 65, 130] {
            let b = epoch_batches(n, 64, 3, 1);
            let mut all: Vec<usize> = b.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            assert!(b.iter().all(|x| x.len() >= 2));
        }
        assert_eq!(epoch_batches(65, 64, 3, 1).len(), 1);
        assert_eq!(epoch_batches(10, 4, 0, 0), epoch_batches(10, 4, 0, 0));
        assert_ne!(epoch_batches(10, 4, 0, 0), epoch_batches(10, 4, 0, 1));
    }

    #[test]
    fn history_csv_layout() {
        let h = vec![EpochRecord {
            epoch: 0,
            loss: LossBreakdown {
                nll: 2.0,
                kl: 1.0,
                total_vae: 3.0,
                kd: None,
                total_student: None,
            },
        }];
        assert_eq!(history_csv(&h), "epoch,nll,kl,kd_2w,kd_ce,kd_total,total\n0,2,1,,,,3\n");
    }
}
