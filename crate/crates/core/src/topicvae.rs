//! VAE topic models: the combined (BoW + contextual) teacher architecture,
//! the contextual-only zero-shot student architecture, the Laplace prior
//! and the VAE objective.
//!
//! Both models share the ProdLDA decoder: `theta = softmax(z)`,
//! `u = norm(theta · beta)`, reconstruction `softmax(u)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::corpus::normalize_rows;
use crate::error::{Error, Result};
use crate::nn::{dropout_mask, softmax_rows, BatchNormState, BatchStats, DenseLayer, Mode, Tape, Var};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Encoder input is `[normalized BoW, projection(ctx)]`.
    Combined,
    /// Encoder input is the contextual embedding only.
    ZeroShot,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Combined => "combined",
            Architecture::ZeroShot => "zeroshot",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(Architecture::Combined),
            "zeroshot" => Ok(Architecture::ZeroShot),
            other => Err(Error::Format(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub topics: usize,
    pub vocab_size: usize,
    pub ctx_dim: usize,
    pub hidden_sizes: Vec<usize>,
    /// Linear `ctx_dim -> vocab_size` adapter in front of the encoder.
    /// Always present for `Combined`; optional for `ZeroShot`.
    pub ctx_projection: bool,
    pub dropout: f64,
}

impl ModelConfig {
    /// Combined teacher with `depth` hidden layers of width 100.
    pub fn teacher(topics: usize, vocab_size: usize, ctx_dim: usize, depth: usize) -> ModelConfig {
        ModelConfig {
            architecture: Architecture::Combined,
            topics,
            vocab_size,
            ctx_dim,
            hidden_sizes: vec![100; depth],
            ctx_projection: true,
            dropout: 0.2,
        }
    }

    /// Zero-shot student: one hidden layer of width 100 behind a contextual
    /// adapter to vocabulary width.
    pub fn student(topics: usize, vocab_size: usize, ctx_dim: usize) -> ModelConfig {
        ModelConfig {
            architecture: Architecture::ZeroShot,
            topics,
            vocab_size,
            ctx_dim,
            hidden_sizes: vec![100],
            ctx_projection: true,
            dropout: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 || self.vocab_size == 0 || self.ctx_dim == 0 {
            return Err(Error::Config("topics, vocab_size and ctx_dim must be positive".into()));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("need at least one hidden layer of positive width".into()));
        }
        if self.architecture == Architecture::Combined && !self.ctx_projection {
            return Err(Error::Config(
                "the combined architecture requires the ctx projection".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Width of the first hidden layer's input.
    pub fn encoder_input_width(&self) -> usize {
        match (self.architecture, self.ctx_projection) {
            (Architecture::Combined, _) => 2 * self.vocab_size,
            (Architecture::ZeroShot, true) => self.vocab_size,
            (Architecture::ZeroShot, false) => self.ctx_dim,
        }
    }
}

/// Diagonal Gaussian posterior for a batch, one row per document.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Array2<f64>,
    pub log_var: Array2<f64>,
}

impl GaussianPosterior {
    /// `exp(log_var / 2)`.
    pub fn sigma(&self) -> Array2<f64> {
        self.log_var.mapv(|v| (0.5 * v).exp())
    }

    pub fn variance(&self) -> Array2<f64> {
        self.log_var.mapv(f64::exp)
    }
}

/// Logistic-normal prior from the Laplace approximation of a Dirichlet.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorParams {
    pub mu: Array1<f64>,
    pub var: Array1<f64>,
    pub alpha: f64,
}

/// Laplace approximation (in the softmax basis) of a symmetric
/// Dirichlet(`alpha`) over `topics` components:
/// `mu_k = 0`, `var_k = (1/alpha)(1 - 2/K) + 1/(K alpha)`.
pub fn laplace_prior(topics: usize, alpha: f64) -> Result<PriorParams> {
    if topics == 0 || alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::Config(format!(
            "laplace prior needs K >= 1 and alpha > 0 (got K={topics}, alpha={alpha})"
        )));
    }
    let k = topics as f64;
    let var = (1.0 / alpha) * (1.0 - 2.0 / k) + 1.0 / (k * alpha);
    Ok(PriorParams {
        mu: Array1::zeros(topics),
        var: Array1::from_elem(topics, var),
        alpha,
    })
}

/// Parameter and buffer counts; bytes assume 4-byte storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub trainable: usize,
    pub buffers: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.trainable + self.buffers
    }

    pub fn bytes(&self) -> usize {
        4 * self.total()
    }
}

/// `1 - student_bytes / teacher_bytes`.
pub fn compression(teacher: ParamCount, student: ParamCount) -> f64 {
    1.0 - student.bytes() as f64 / teacher.bytes() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub config: ModelConfig,
    pub ctx_projection: Option<DenseLayer>,
    pub encoder: Vec<DenseLayer>,
    pub mu_head: DenseLayer,
    pub log_var_head: DenseLayer,
    /// `K x V` topic-word weights.
    pub beta: Array2<f64>,
    pub decoder_norm: BatchNormState,
}

/// A document batch: raw BoW counts and contextual embeddings, row aligned.
#[derive(Debug, Clone)]
pub struct Batch {
    pub bow: Array2<f64>,
    pub ctx: Array2<f64>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.bow.nrows()
    }
}

/// Parameters placed on a tape, in `TopicModel::param_names` order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub all: Vec<Var>,
    ctx_projection: Option<(Var, Var)>,
    encoder: Vec<(Var, Var)>,
    mu_head: (Var, Var),
    log_var_head: (Var, Var),
    beta: Var,
}

/// Tape nodes produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub mu: Var,
    pub log_var: Var,
    pub z: Var,
    pub theta: Var,
    /// Normalized decoder logits `u`.
    pub logits: Var,
    pub log_recon: Var,
    pub norm_stats: Option<BatchStats>,
}

/// Values of a forward pass, detached from any tape.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub theta: Array2<f64>,
    pub logits: Array2<f64>,
    pub recon: Array2<f64>,
}

impl TopicModel {
    /// Random initialization from `seed`: dense layers uniform in
    /// `±1/sqrt(fan_in)`, `beta` Xavier-uniform.
    pub fn new(config: ModelConfig, seed: u64) -> Result<TopicModel> {
        config.validate()?;
        let mut rng = stream(seed, "init", 0);
        let ctx_projection = config
            .ctx_projection
            .then(|| DenseLayer::init(config.ctx_dim, config.vocab_size, &mut rng));
        let mut encoder = Vec::with_capacity(config.hidden_sizes.len());
        let mut width = config.encoder_input_width();
        for &h in &config.hidden_sizes {
            encoder.push(DenseLayer::init(width, h, &mut rng));
            width = h;
        }
        let mu_head = DenseLayer::init(width, config.topics, &mut rng);
        let log_var_head = DenseLayer::init(width, config.topics, &mut rng);
        let bound = (6.0 / (config.topics + config.vocab_size) as f64).sqrt();
        let beta = Array2::from_shape_simple_fn((config.topics, config.vocab_size), || rng.random_range(-bound..bound));
        let decoder_norm = BatchNormState::new(config.vocab_size);
        Ok(TopicModel {
            config,
            ctx_projection,
            encoder,
            mu_head,
            log_var_head,
            beta,
            decoder_norm,
        })
    }

    /// All weights and biases zero; fresh normalization statistics.
    pub fn zeros(config: ModelConfig) -> Result<TopicModel> {
        let mut m = TopicModel::new(config, 0)?;
        for p in m.params_mut() {
            p.fill(0.0);
        }
        Ok(m)
    }

    pub fn topics(&self) -> usize {
        self.config.topics
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.ctx_projection.is_some() {
            names.extend(["ctx_projection.weight".into(), "ctx_projection.bias".into()]);
        }
        for i in 0..self.encoder.len() {
            names.push(format!("encoder.{i}.weight"));
            names.push(format!("encoder.{i}.bias"));
        }
        names.extend([
            "mu_head.weight".into(),
            "mu_head.bias".into(),
            "log_var_head.weight".into(),
            "log_var_head.bias".into(),
            "beta".into(),
        ]);
        names
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        if let Some(p) = &self.ctx_projection {
            out.extend([&p.weight, &p.bias]);
        }
        for l in &self.encoder {
            out.extend([&l.weight, &l.bias]);
        }
        out.extend([
            &self.mu_head.weight,
            &self.mu_head.bias,
            &self.log_var_head.weight,
            &self.log_var_head.bias,
            &self.beta,
        ]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        if let Some(p) = &mut self.ctx_projection {
            out.extend([&mut p.weight, &mut p.bias]);
        }
        for l in &mut self.encoder {
            out.extend([&mut l.weight, &mut l.bias]);
        }
        out.extend([
            &mut self.mu_head.weight,
            &mut self.mu_head.bias,
            &mut self.log_var_head.weight,
            &mut self.log_var_head.bias,
            &mut self.beta,
        ]);
        out
    }

    /// Trainable parameters plus the decoder normalization buffers.
    pub fn count_parameters(&self) -> ParamCount {
        ParamCount {
            trainable: self.params().iter().map(|p| p.len()).sum(),
            buffers: self.decoder_norm.buffer_count(),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let mut dense = |l: &DenseLayer| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone()));
        let ctx_projection = self.ctx_projection.as_ref().map(&mut dense);
        let encoder: Vec<_> = self.encoder.iter().map(&mut dense).collect();
        let mu_head = dense(&self.mu_head);
        let log_var_head = dense(&self.log_var_head);
        let beta = tape.leaf(self.beta.clone());
        let mut all = Vec::new();
        if let Some((w, b)) = ctx_projection {
            all.extend([w, b]);
        }
        for &(w, b) in &encoder {
            all.extend([w, b]);
        }
        all.extend([mu_head.0, mu_head.1, log_var_head.0, log_var_head.1, beta]);
        BoundParams {
            all,
            ctx_projection,
            encoder,
            mu_head,
            log_var_head,
            beta,
        }
    }

    fn check_inputs(&self, bow: Option<&Array2<f64>>, ctx: &Array2<f64>) -> Result<()> {
        if ctx.ncols() != self.config.ctx_dim {
            return Err(Error::Shape(format!(
                "contextual embeddings have width {}, model expects {}",
                ctx.ncols(),
                self.config.ctx_dim
            )));
        }
        if self.config.architecture == Architecture::Combined {
            let bow = bow.ok_or_else(|| Error::Config("the combined architecture needs BoW input".into()))?;
            if bow.ncols() != self.config.vocab_size {
                return Err(Error::Shape(format!(
                    "BoW has width {}, model expects {}",
                    bow.ncols(),
                    self.config.vocab_size
                )));
            }
            if bow.nrows() != ctx.nrows() {
                return Err(Error::Shape(format!(
                    "{} BoW rows but {} embedding rows",
                    bow.nrows(),
                    ctx.nrows()
                )));
            }
        }
        Ok(())
    }

    /// Encoder on the tape. `bow` holds raw counts and is only read by the
    /// combined architecture.
    pub fn encode_tape(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        bow: Option<&Array2<f64>>,
        ctx: &Array2<f64>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Var, Var)> {
        self.check_inputs(bow, ctx)?;
        let ctx_var = tape.leaf(ctx.clone());
        let projected = match params.ctx_projection {
            Some((w, b)) => tape.linear(ctx_var, w, b)?,
            None => ctx_var,
        };
        let mut h = match self.config.architecture {
            Architecture::Combined => {
                let bow_norm = tape.leaf(normalize_rows(bow.expect("checked above")));
                tape.concat_cols(bow_norm, projected)?
            }
            Architecture::ZeroShot => projected,
        };
        for &(w, b) in &params.encoder {
            let pre = tape.linear(h, w, b)?;
            h = tape.softplus(pre);
        }
        if mode == Mode::Train && self.config.dropout > 0.0 {
            let (r, c) = tape.value(h).dim();
            let mask = dropout_mask(rng, r, c, self.config.dropout);
            h = tape.mul_const(h, mask);
        }
        let mu = tape.linear(h, params.mu_head.0, params.mu_head.1)?;
        let log_var = tape.linear(h, params.log_var_head.0, params.log_var_head.1)?;
        Ok((mu, log_var))
    }

    /// Decoder on the tape: `theta = softmax(z)`, `u = norm(theta · beta)`.
    pub fn decode_tape(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        z: Var,
        mode: Mode,
    ) -> Result<(Var, Var, Var, Option<BatchStats>)> {
        let theta = tape.softmax(z);
        let raw = tape.matmul(theta, params.beta)?;
        let (logits, stats) = self.decoder_norm.forward_tape(tape, raw, mode)?;
        let log_recon = tape.log_softmax(logits);
        Ok((theta, logits, log_recon, stats))
    }

    /// Full pass. With `noise`, `z = mu + exp(log_var/2) * noise`; without,
    /// `z = mu`.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        batch: &Batch,
        mode: Mode,
        noise: Option<&Array2<f64>>,
        rng: &mut impl Rng,
    ) -> Result<ForwardVars> {
        let (mu, log_var) = self.encode_tape(tape, params, Some(&batch.bow), &batch.ctx, mode, rng)?;
        let z = match noise {
            Some(eps) => reparameterize_tape(tape, mu, log_var, eps)?,
            None => mu,
        };
        let (theta, logits, log_recon, norm_stats) = self.decode_tape(tape, params, z, mode)?;
        Ok(ForwardVars {
            mu,
            log_var,
            z,
            theta,
            logits,
            log_recon,
            norm_stats,
        })
    }

    /// Posterior for a batch. Eval mode is deterministic.
    pub fn encode(
        &self,
        bow: Option<&Array2<f64>>,
        ctx: &Array2<f64>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<GaussianPosterior> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape);
        let (mu, log_var) = self.encode_tape(&mut tape, &params, bow, ctx, mode, rng)?;
        Ok(GaussianPosterior {
            mu: tape.value(mu).clone(),
            log_var: tape.value(log_var).clone(),
        })
    }

    /// Eval-mode decoder applied to latent samples `z`.
    pub fn decode(&self, z: &Array2<f64>) -> Result<Decoded> {
        if z.ncols() != self.topics() {
            return Err(Error::Shape(format!(
                "z has width {}, model has {} topics",
                z.ncols(),
                self.topics()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent sample".into()));
        }
        let mut tape = Tape::new();
        let params = self.bind(&mut tape);
        let zv = tape.leaf(z.clone());
        let (theta, logits, log_recon, _) = self.decode_tape(&mut tape, &params, zv, Mode::Eval)?;
        Ok(Decoded {
            theta: tape.value(theta).clone(),
            logits: tape.value(logits).clone(),
            recon: tape.value(log_recon).mapv(f64::exp),
        })
    }
}

/// `z = mu + exp(log_var / 2) * noise`.
pub fn reparameterize(post: &GaussianPosterior, noise: &Array2<f64>) -> Result<Array2<f64>> {
    if noise.dim() != post.mu.dim() {
        return Err(Error::Shape(format!(
            "noise shape {:?} does not match posterior {:?}",
            noise.dim(),
            post.mu.dim()
        )));
    }
    Ok(&post.mu + &(post.sigma() * noise))
}

pub fn reparameterize_tape(tape: &mut Tape, mu: Var, log_var: Var, noise: &Array2<f64>) -> Result<Var> {
    if tape.value(mu).dim() != noise.dim() {
        return Err(Error::Shape(format!(
            "noise shape {:?} does not match posterior {:?}",
            noise.dim(),
            tape.value(mu).dim()
        )));
    }
    let half = tape.scale(log_var, 0.5);
    let sigma = tape.exp(half);
    let scaled = tape.mul_const(sigma, noise.clone());
    Ok(tape.add(mu, scaled))
}

/// Batch mean of `KL(N(mu, diag(exp(log_var))) || prior)`.
pub fn kl_to_prior_tape(tape: &mut Tape, mu: Var, log_var: Var, prior: &PriorParams) -> Result<Var> {
    let (n, k) = tape.value(mu).dim();
    if k != prior.mu.len() {
        return Err(Error::Shape(format!(
            "posterior has {k} dims, prior {}",
            prior.mu.len()
        )));
    }
    let inv_var = prior.var.mapv(|v| 1.0 / v).insert_axis(Axis(0));
    let var = tape.exp(log_var);
    let var_ratio = tape.mul_const(var, inv_var.clone());
    let neg_prior_mu = tape.leaf((-&prior.mu).insert_axis(Axis(0)));
    let diff = tape.add_row(mu, neg_prior_mu);
    let diff_sq = tape.mul(diff, diff);
    let mahal = tape.mul_const(diff_sq, inv_var);
    let terms = tape.add(var_ratio, mahal);
    let terms = tape.sub(terms, log_var);
    let data = tape.weighted_sum(terms, Array2::from_elem((n, k), 0.5 / n as f64));
    let constant = 0.5 * prior.var.iter().map(|v| v.ln() - 1.0).sum::<f64>();
    Ok(tape.add_const(data, constant))
}

pub fn kl_to_prior(post: &GaussianPosterior, prior: &PriorParams) -> Result<f64> {
    let mut tape = Tape::new();
    let mu = tape.leaf(post.mu.clone());
    let lv = tape.leaf(post.log_var.clone());
    let kl = kl_to_prior_tape(&mut tape, mu, lv, prior)?;
    Ok(tape.scalar(kl))
}

/// Mean over documents with at least one token of `-Σ_v count_v log recon_v`.
pub fn nll_tape(tape: &mut Tape, log_recon: Var, counts: &Array2<f64>) -> Result<Var> {
    if tape.value(log_recon).dim() != counts.dim() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} vs counts {:?}",
            tape.value(log_recon).dim(),
            counts.dim()
        )));
    }
    let non_empty = counts.rows().into_iter().filter(|r| r.sum() > 0.0).count();
    let weights = if non_empty == 0 {
        Array2::zeros(counts.dim())
    } else {
        counts * (-1.0 / non_empty as f64)
    };
    Ok(tape.weighted_sum(log_recon, weights))
}

pub fn nll(recon: &Array2<f64>, counts: &Array2<f64>) -> Result<f64> {
    let mut tape = Tape::new();
    let lr = tape.leaf(recon.mapv(f64::ln));
    let v = nll_tape(&mut tape, lr, counts)?;
    Ok(tape.scalar(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KdBreakdown {
    pub kd_2w: f64,
    pub kd_ce: f64,
    pub kd_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub nll: f64,
    pub kl: f64,
    pub total_vae: f64,
    pub kd: Option<KdBreakdown>,
    pub total_student: Option<f64>,
}

impl LossBreakdown {
    /// The optimized objective: the student total when distilling, else the VAE loss.
    pub fn objective(&self) -> f64 {
        self.total_student.unwrap_or(self.total_vae)
    }
}

/// VAE loss nodes for a forward pass: `(nll, kl, nll + kl)`.
pub fn vae_loss_tape(
    tape: &mut Tape,
    fwd: &ForwardVars,
    counts: &Array2<f64>,
    prior: &PriorParams,
) -> Result<(Var, Var, Var)> {
    let nll = nll_tape(tape, fwd.log_recon, counts)?;
    let kl = kl_to_prior_tape(tape, fwd.mu, fwd.log_var, prior)?;
    let total = tape.add(nll, kl);
    Ok((nll, kl, total))
}

/// Encode, reparameterize with `noise`, decode and score against the batch counts.
pub fn vae_loss(
    model: &TopicModel,
    batch: &Batch,
    prior: &PriorParams,
    noise: &Array2<f64>,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let params = model.bind(&mut tape);
    let fwd = model.forward_tape(&mut tape, &params, batch, mode, Some(noise), rng)?;
    let (nll, kl, total) = vae_loss_tape(&mut tape, &fwd, &batch.bow, prior)?;
    Ok(LossBreakdown {
        nll: tape.scalar(nll),
        kl: tape.scalar(kl),
        total_vae: tape.scalar(total),
        kd: None,
        total_student: None,
    })
}

/// Which topic-word matrix ranks a topic's top words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopicRanking {
    /// Eval-mode decoder logits of a one-hot topic vector.
    #[default]
    Decoded,
    /// Rows of `beta` as stored.
    Raw,
}

impl fmt::Display for TopicRanking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopicRanking::Decoded => "decoded",
            TopicRanking::Raw => "raw",
        })
    }
}

impl FromStr for TopicRanking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "decoded" => Ok(TopicRanking::Decoded),
            "raw" => Ok(TopicRanking::Raw),
            other => Err(Error::Config(format!("unknown topic ranking {other:?} (decoded, raw)"))),
        }
    }
}

/// `K x V` weights for ranking topic words.
///
/// The decoder normalization removes any per-word shift or rescaling of
/// `beta`'s columns, so no loss constrains those directions and raw rows
/// carry whatever the optimizer left there. `Decoded` applies the stored
/// normalization, `(beta[k, w] - running_mean[w]) / sqrt(running_var[w] + eps)`,
/// which is invariant to them.
pub fn topic_word_weights(model: &TopicModel, ranking: TopicRanking) -> Array2<f64> {
    match ranking {
        TopicRanking::Raw => model.beta.clone(),
        TopicRanking::Decoded => {
            let bn = &model.decoder_norm;
            let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
            (&model.beta - &bn.running_mean.view().insert_axis(Axis(0))) * inv_std.view().insert_axis(Axis(0))
        }
    }
}

/// Each topic's word distribution under the eval-mode decoder.
pub fn topic_word_distributions(model: &TopicModel) -> Array2<f64> {
    softmax_rows(&topic_word_weights(model, TopicRanking::Decoded))
}
