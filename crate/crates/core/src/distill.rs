//! Distillation objective: squared 2-Wasserstein posterior matching,
//! temperature-scaled soft-label cross-entropy, and their combination with
//! the student's own VAE loss.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Tape, Var};
use crate::rng::fnv1a;
use crate::topicvae::{GaussianPosterior, TopicModel};

/// Eigenvalues below this are treated as a PSD violation.
const PSD_TOLERANCE: f64 = -1e-8;

fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[[r, c]])
}

/// Eigen-decomposition of the symmetric part of `m`, with tiny negative
/// eigenvalues clamped to zero.
fn psd_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    for ev in eig.eigenvalues.iter_mut() {
        if *ev < PSD_TOLERANCE {
            return Err(Error::NotPsd(*ev));
        }
        *ev = ev.max(0.0);
    }
    Ok(eig)
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(m)?;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Squared 2-Wasserstein distance between `N(mu1, cov1)` and `N(mu2, cov2)`:
/// `‖mu1 − mu2‖² + tr(cov1 + cov2 − 2 (cov2^½ cov1 cov2^½)^½)`.
pub fn w2_squared_full(mu1: &Array1<f64>, cov1: &Array2<f64>, mu2: &Array1<f64>, cov2: &Array2<f64>) -> Result<f64> {
    let n = mu1.len();
    if mu2.len() != n || cov1.dim() != (n, n) || cov2.dim() != (n, n) {
        return Err(Error::Shape(format!(
            "means {} and {}, covariances {:?} and {:?}",
            n,
            mu2.len(),
            cov1.dim(),
            cov2.dim()
        )));
    }
    let c1 = to_nalgebra(cov1);
    let c2 = to_nalgebra(cov2);
    // Validates cov1 as PSD too.
    psd_eigen(&c1)?;
    let root2 = psd_sqrt(&c2)?;
    let cross = &root2 * &c1 * &root2;
    let cross_root_trace: f64 = psd_eigen(&cross)?.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let mean_term: f64 = (mu1 - mu2).mapv(|v| v * v).sum();
    Ok(mean_term + c1.trace() + c2.trace() - 2.0 * cross_root_trace)
}

/// Diagonal fast path for one pair of posteriors given as `(mu, log_var)`
/// rows: `‖mu_a − mu_b‖² + Σ_k (σ_a,k − σ_b,k)²` with `σ = exp(log_var/2)`.
pub fn w2_squared_diag_row(mu_a: &[f64], log_var_a: &[f64], mu_b: &[f64], log_var_b: &[f64]) -> f64 {
    assert!(
        mu_a.len() == mu_b.len() && log_var_a.len() == log_var_b.len() && mu_a.len() == log_var_a.len(),
        "posterior dimensions differ"
    );
    let mean: f64 = mu_a.iter().zip(mu_b).map(|(a, b)| (a - b) * (a - b)).sum();
    let spread: f64 = log_var_a
        .iter()
        .zip(log_var_b)
        .map(|(a, b)| {
            let d = (0.5 * a).exp() - (0.5 * b).exp();
            d * d
        })
        .sum();
    mean + spread
}

/// Batch mean of [`w2_squared_diag_row`].
pub fn w2_squared_diag(a: &GaussianPosterior, b: &GaussianPosterior) -> Result<f64> {
    if a.mu.dim() != b.mu.dim() || a.log_var.dim() != b.log_var.dim() {
        return Err(Error::Shape(format!(
            "posteriors {:?} and {:?}",
            a.mu.dim(),
            b.mu.dim()
        )));
    }
    let n = a.mu.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..n)
        .map(|i| {
            w2_squared_diag_row(
                &a.mu.row(i).to_vec(),
                &a.log_var.row(i).to_vec(),
                &b.mu.row(i).to_vec(),
                &b.log_var.row(i).to_vec(),
            )
        })
        .sum();
    Ok(total / n as f64)
}

/// Tape version of [`w2_squared_diag`]; the teacher side is constant.
pub fn w2_squared_diag_tape(tape: &mut Tape, teacher: &GaussianPosterior, mu_s: Var, log_var_s: Var) -> Result<Var> {
    if tape.value(mu_s).dim() != teacher.mu.dim() {
        return Err(Error::Shape(format!(
            "student posterior {:?}, teacher {:?}",
            tape.value(mu_s).dim(),
            teacher.mu.dim()
        )));
    }
    let n = teacher.mu.nrows() as f64;
    let mu_t = tape.leaf(teacher.mu.clone());
    let sigma_t = tape.leaf(teacher.sigma());
    let half = tape.scale(log_var_s, 0.5);
    let sigma_s = tape.exp(half);
    let dm = tape.sub(mu_t, mu_s);
    let ds = tape.sub(sigma_t, sigma_s);
    let dm2 = tape.mul(dm, dm);
    let ds2 = tape.mul(ds, ds);
    let all = tape.add(dm2, ds2);
    Ok(tape.weighted_sum(all, Array2::from_elem(teacher.mu.dim(), 1.0 / n)))
}

/// Tape version of [`soft_ce`]; gradients reach `logits_s` only.
pub fn soft_ce_tape(tape: &mut Tape, logits_t: &Array2<f64>, logits_s: Var, temperature: f64) -> Result<Var> {
    if temperature <= 0.0 {
        return Err(Error::Config(format!("temperature {temperature} must be positive")));
    }
    if tape.value(logits_s).dim() != logits_t.dim() {
        return Err(Error::Shape(format!(
            "student logits {:?}, teacher {:?}",
            tape.value(logits_s).dim(),
            logits_t.dim()
        )));
    }
    let n = logits_t.nrows() as f64;
    let soft_t = softmax_rows(&(logits_t / temperature));
    let scaled = tape.scale(logits_s, 1.0 / temperature);
    let log_s = tape.log_softmax(scaled);
    Ok(tape.weighted_sum(log_s, soft_t * (-1.0 / n)))
}

/// Batch mean of `−Σ_v softmax(u_T/t)_v · log softmax(u_S/t)_v`.
pub fn soft_ce(logits_t: &Array2<f64>, logits_s: &Array2<f64>, temperature: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.leaf(logits_s.clone());
    let v = soft_ce_tape(&mut tape, logits_t, s, temperature)?;
    Ok(tape.scalar(v))
}

/// `kd_2w + t² · kd_ce`.
pub fn kd_total(kd_2w: f64, kd_ce: f64, temperature: f64) -> f64 {
    kd_2w + temperature * temperature * kd_ce
}

/// Returns `(kd_total, kd_2w, kd_ce)`.
pub fn kd_loss(
    post_t: &GaussianPosterior,
    post_s: &GaussianPosterior,
    logits_t: &Array2<f64>,
    logits_s: &Array2<f64>,
    temperature: f64,
) -> Result<(f64, f64, f64)> {
    let w = w2_squared_diag(post_t, post_s)?;
    let ce = soft_ce(logits_t, logits_s, temperature)?;
    Ok((kd_total(w, ce, temperature), w, ce))
}

/// `(1 − alpha) · vae + alpha · kd`.
pub fn total_student_loss(vae: f64, kd: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * vae + alpha * kd
}

/// Which document-topic vector feeds the teacher's decoder when forming the
/// teacher's soft labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TeacherTheta {
    /// The teacher's own `softmax(mu_T)`.
    #[default]
    Own,
    /// The student's sampled `softmax(z_S)`.
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdConfig {
    pub alpha: f64,
    pub temperature: f64,
    /// Include the Wasserstein term in the KD loss.
    pub use_2w: bool,
    /// Include the soft-label cross-entropy term in the KD loss.
    pub use_ce: bool,
    pub teacher_theta: TeacherTheta,
}

impl Default for KdConfig {
    fn default() -> Self {
        KdConfig {
            alpha: 0.5,
            temperature: 2.0,
            use_2w: true,
            use_ce: true,
            teacher_theta: TeacherTheta::Own,
        }
    }
}

impl KdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if self.alpha > 0.0 && !self.use_2w && !self.use_ce {
            return Err(Error::Config(
                "both distillation terms are disabled; use alpha = 0 for a plain student".into(),
            ));
        }
        Ok(())
    }

    /// Report label: `S` without distillation, `SKD` for the full loss,
    /// `SKD-2w` / `SKD-ce` for single-term ablations.
    pub fn label(&self) -> &'static str {
        if self.alpha == 0.0 {
            return "S";
        }
        match (self.use_2w, self.use_ce) {
            (true, true) => "SKD",
            (true, false) => "SKD-2w",
            (false, true) => "SKD-ce",
            (false, false) => "S",
        }
    }
}

/// A trained teacher that is only ever run in eval mode.
#[derive(Debug, Clone)]
pub struct FrozenTeacher {
    model: TopicModel,
}

impl FrozenTeacher {
    pub fn new(model: TopicModel) -> FrozenTeacher {
        FrozenTeacher { model }
    }

    pub fn model(&self) -> &TopicModel {
        &self.model
    }

    /// FNV-1a over every parameter and buffer bit pattern.
    pub fn checksum(&self) -> u64 {
        model_checksum(&self.model)
    }
}

pub fn model_checksum(model: &TopicModel) -> u64 {
    let mut bytes = Vec::new();
    for p in model.params() {
        bytes.extend(p.iter().flat_map(|v| v.to_bits().to_le_bytes()));
    }
    for b in [&model.decoder_norm.running_mean, &model.decoder_norm.running_var] {
        bytes.extend(b.iter().flat_map(|v| v.to_bits().to_le_bytes()));
    }
    fnv1a(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, stream};
    use ndarray::{array, ShapeBuilder};
    use rand::Rng;

    fn diag(v: &Array1<f64>) -> Array2<f64> {
        Array2::from_diag(v)
    }

    #[test]
    fn batch_w2_accepts_any_memory_layout() {
        let mu = array![[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]];
        let lv = array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]];
        let a = GaussianPosterior {
            mu: mu.clone(),
            log_var: lv.clone(),
        };
        let fortran = |m: &Array2<f64>| {
            let mut f = Array2::zeros(m.raw_dim().f());
            f.assign(m);
            f
        };
        let b = GaussianPosterior {
            mu: fortran(&mu),
            log_var: fortran(&lv),
        };
        assert!(!b.mu.is_standard_layout());
        let shifted = GaussianPosterior {
            mu: &a.mu + 1.0,
            log_var: a.log_var.clone(),
        };
        assert_eq!(
            w2_squared_diag(&b, &shifted).unwrap(),
            w2_squared_diag(&a, &shifted).unwrap()
        );
    }

    #[test]
    fn identical_gaussians_are_at_distance_zero() {
        let mut r = stream(1, "w2", 0);
        let a = standard_normal(&mut r, 4, 4);
        let cov = a.t().dot(&a);
        let mu = array![0.3, -1.0, 2.0, 0.0];
        assert!(w2_squared_full(&mu, &cov, &mu, &cov).unwrap().abs() < 1e-10);
    }

    #[test]
    fn mean_shift_only() {
        let i = Array2::eye(2);
        let v = w2_squared_full(&array![0.0, 0.0], &i, &array![3.0, 4.0], &i).unwrap();
        assert!((v - 25.0).abs() < 1e-12);
    }

    #[test]
    fn not_psd_is_rejected() {
        let bad = array![[1.0, 0.0], [0.0, -0.5]];
        let i = Array2::eye(2);
        let mu = array![0.0, 0.0];
        assert!(matches!(w2_squared_full(&mu, &bad, &mu, &i), Err(Error::NotPsd(_))));
        assert!(matches!(w2_squared_full(&mu, &i, &mu, &bad), Err(Error::NotPsd(_))));
        // Rounding-level negatives are clamped.
        let almost = array![[1.0, 0.0], [0.0, -1e-12]];
        assert!(w2_squared_full(&mu, &almost, &mu, &i).is_ok());
    }

    #[test]
    fn one_dimensional_diag_case() {
        let t = GaussianPosterior {
            mu: array![[0.5]],
            log_var: array![[4f64.ln()]],
        };
        let s = GaussianPosterior {
            mu: array![[0.5]],
            log_var: array![[25f64.ln()]],
        };
        assert!((w2_squared_diag(&t, &s).unwrap() - 9.0).abs() < 1e-12);
        let full = w2_squared_full(&array![0.5], &array![[4.0]], &array![0.5], &array![[25.0]]).unwrap();
        assert!((full - 9.0).abs() < 1e-12);
    }

    #[test]
    fn diag_agrees_with_full_on_random_cases() {
        let mut r = stream(2, "w2-sweep", 0);
        for _ in 0..100 {
            let k = r.random_range(1..8);
            let mu_a: Vec<f64> = (0..k).map(|_| r.random_range(-3.0..3.0)).collect();
            let mu_b: Vec<f64> = (0..k).map(|_| r.random_range(-3.0..3.0)).collect();
            let lv_a: Vec<f64> = (0..k).map(|_| r.random_range(-3.0..3.0)).collect();
            let lv_b: Vec<f64> = (0..k).map(|_| r.random_range(-3.0..3.0)).collect();
            let d = w2_squared_diag_row(&mu_a, &lv_a, &mu_b, &lv_b);
            let var = |lv: &[f64]| Array1::from_iter(lv.iter().map(|v| v.exp()));
            let f = w2_squared_full(
                &Array1::from(mu_a.clone()),
                &diag(&var(&lv_a)),
                &Array1::from(mu_b.clone()),
                &diag(&var(&lv_b)),
            )
            .unwrap();
            assert!((d - f).abs() < 1e-8, "{d} vs {f}");
        }
    }

    #[test]
    fn diag_is_symmetric_and_nonnegative() {
        let mut r = stream(3, "w2-sym", 0);
        for _ in 0..50 {
            let a: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            let la: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            let lb: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
            let ab = w2_squared_diag_row(&a, &la, &b, &lb);
            assert_eq!(ab, w2_squared_diag_row(&b, &lb, &a, &la));
            assert!(ab >= 0.0);
            assert_eq!(w2_squared_diag_row(&a, &la, &a, &la), 0.0);
        }
    }

    fn entropy(p: &[f64]) -> f64 {
        -p.iter().map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 }).sum::<f64>()
    }

    #[test]
    fn soft_ce_of_identical_logits_is_entropy() {
        let u = array![[0.3, -1.0, 2.0, 0.5], [1.0, 1.0, 0.0, -3.0]];
        let ce = soft_ce(&u, &u, 1.0).unwrap();
        let p = softmax_rows(&u);
        let h = (entropy(p.row(0).as_slice().unwrap()) + entropy(p.row(1).as_slice().unwrap())) / 2.0;
        assert!((ce - h).abs() < 1e-12);
    }

    #[test]
    fn soft_ce_uniform_is_log_v() {
        let z = Array2::zeros((3, 17));
        for t in [0.5, 1.0, 4.0] {
            assert!((soft_ce(&z, &z, t).unwrap() - 17f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_ce_matches_naive_loop() {
        let mut r = stream(4, "ce", 0);
        let ut = standard_normal(&mut r, 3, 9) * 2.0;
        let us = standard_normal(&mut r, 3, 9) * 2.0;
        let t = 3.0;
        let mut total = 0.0;
        for d in 0..3 {
            let pt: Vec<f64> = {
                let e: Vec<f64> = (0..9).map(|v| (ut[[d, v]] / t).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|x| x / s).collect()
            };
            let zs: f64 = (0..9).map(|v| (us[[d, v]] / t).exp()).sum();
            for v in 0..9 {
                total -= pt[v] * ((us[[d, v]] / t).exp() / zs).ln();
            }
        }
        let expected = total / 3.0;
        assert!((soft_ce(&ut, &us, t).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn soft_ce_gibbs_inequality_and_scale() {
        let mut r = stream(5, "gibbs", 0);
        for _ in 0..20 {
            let ut = standard_normal(&mut r, 2, 6);
            let us = standard_normal(&mut r, 2, 6);
            let t = r.random_range(0.5..5.0);
            let h = soft_ce(&ut, &ut, t).unwrap();
            assert!(soft_ce(&ut, &us, t).unwrap() >= h - 1e-9);
            // Scaling logits by t undoes the temperature.
            let scaled = soft_ce(&(&ut * t), &(&us * t), t).unwrap();
            let base = soft_ce(&ut, &us, 1.0).unwrap();
            assert!((scaled - base).abs() < 1e-12);
        }
    }

    #[test]
    fn kd_and_total_arithmetic() {
        assert_eq!(kd_total(9.0, 2.0, 2.0), 17.0);
        assert_eq!(kd_total(9.0, 2.0, 1.0), 11.0);
        assert_eq!(total_student_loss(10.0, 4.0, 0.0), 10.0);
        assert_eq!(total_student_loss(10.0, 4.0, 1.0), 4.0);
        assert_eq!(total_student_loss(10.0, 4.0, 0.5), 7.0);
    }

    #[test]
    fn kd_loss_of_equal_inputs_is_entropy_term() {
        let post = GaussianPosterior {
            mu: array![[0.1, 0.2]],
            log_var: array![[0.0, -1.0]],
        };
        let u = array![[0.5, 0.0, -0.5]];
        let (total, w, ce) = kd_loss(&post, &post, &u, &u, 2.0).unwrap();
        assert_eq!(w, 0.0);
        let h = entropy(softmax_rows(&(&u / 2.0)).row(0).as_slice().unwrap());
        assert!((ce - h).abs() < 1e-12);
        assert_eq!(total, 4.0 * ce);
    }

    #[test]
    fn labels() {
        let mut c = KdConfig::default();
        assert_eq!(c.label(), "SKD");
        c.use_ce = false;
        assert_eq!(c.label(), "SKD-2w");
        c.use_ce = true;
        c.use_2w = false;
        assert_eq!(c.label(), "SKD-ce");
        c.alpha = 0.0;
        assert_eq!(c.label(), "S");
        assert!(KdConfig {
            alpha: 1.5,
            ..KdConfig::default()
        }
        .validate()
        .is_err());
        assert!(KdConfig {
            temperature: 0.0,
            ..KdConfig::default()
        }
        .validate()
        .is_err());
    }
}
