use ndarray::{Array1, Array2};
use rand::Rng;

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Fully connected layer. `weight` is `out x in`; `bias` is a `1 x out` row.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> DenseLayer {
        DenseLayer {
            weight: Array2::zeros((output, input)),
            bias: Array2::zeros((1, output)),
        }
    }

    /// Uniform in `±1/sqrt(in)` for weight and bias.
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> DenseLayer {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let mut draw = |shape| Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound));
        let weight = draw((output, input));
        let bias = draw((1, output));
        DenseLayer { weight, bias }
    }

    pub fn input_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// `input · weightᵀ + bias` for each row of `input`.
    pub fn forward(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.input_width() {
            return Err(Error::Shape(format!(
                "dense layer expects input width {}, got {}",
                self.input_width(),
                input.ncols()
            )));
        }
        Ok(input.dot(&self.weight.t()) + &self.bias)
    }
}

/// Batch normalization without a learned affine transform.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Batch statistics observed during a train-mode pass.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
    pub n: usize,
}

impl BatchNormState {
    pub fn new(width: usize) -> BatchNormState {
        BatchNormState {
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn width(&self) -> usize {
        self.running_mean.len()
    }

    /// Persistent buffers (running mean and variance).
    pub fn buffer_count(&self) -> usize {
        2 * self.width()
    }

    /// Train mode normalizes with batch statistics and returns them;
    /// eval mode applies the fixed affine map from the running statistics.
    pub fn forward_tape(&self, tape: &mut Tape, x: Var, mode: Mode) -> Result<(Var, Option<BatchStats>)> {
        match mode {
            Mode::Train => {
                let n = tape.value(x).nrows();
                let (out, mean, var) = tape.batch_norm(x, self.eps)?;
                Ok((out, Some(BatchStats { mean, var, n })))
            }
            Mode::Eval => {
                let shift = tape.leaf((-&self.running_mean).insert_axis(ndarray::Axis(0)));
                let centered = tape.add_row(x, shift);
                let inv_std = self
                    .running_var
                    .mapv(|v| 1.0 / (v + self.eps).sqrt())
                    .insert_axis(ndarray::Axis(0));
                Ok((tape.mul_const(centered, inv_std), None))
            }
        }
    }

    /// Exponential moving average update; the variance uses the unbiased
    /// batch estimate.
    pub fn update(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        let unbiased = &stats.var * (stats.n as f64 / (stats.n as f64 - 1.0));
        self.running_mean = &self.running_mean * (1.0 - m) + &stats.mean * m;
        self.running_var = &self.running_var * (1.0 - m) + unbiased * m;
    }
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, else
/// `1/(1-rate)`.
pub fn dropout_mask(rng: &mut impl Rng, rows: usize, cols: usize, rate: f64) -> Array2<f64> {
    if rate <= 0.0 {
        return Array2::ones((rows, cols));
    }
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

/// Temperature softmax with max subtraction.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    assert!(temperature > 0.0, "temperature must be positive");
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn dense_identity_and_arithmetic() {
        let l = DenseLayer {
            weight: array![[1.0, 0.0], [0.0, 1.0]],
            bias: array![[0.0, 0.0]],
        };
        assert_eq!(l.forward(&array![[3.0, 4.0]]).unwrap(), array![[3.0, 4.0]]);
        let l = DenseLayer {
            weight: array![[2.0]],
            bias: array![[1.0]],
        };
        assert_eq!(l.forward(&array![[3.0]]).unwrap(), array![[7.0]]);
        assert!(l.forward(&array![[1.0, 2.0]]).is_err());
    }

    #[test]
    fn dense_param_count() {
        assert_eq!(DenseLayer::zeros(4000, 100).param_count(), 400_100);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0], 3.0), [0.5, 0.5]);
        let p = softmax(&[1000.0, 0.0], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-300 && p[1] >= 0.0);
        // exp(0.2) / (exp(0.2) + 1)
        let expected = 0.2f64.exp() / (0.2f64.exp() + 1.0);
        let p = softmax(&[1.0, 0.0], 5.0);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((p[0] - 0.5498).abs() < 1e-4 && (p[1] - 0.4502).abs() < 1e-4);
        let p = softmax(&[1.0, 0.0], 1e6);
        assert!((p[0] - 0.5).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(
            logits in prop::collection::vec(-50.0f64..50.0, 1..20),
            t in 0.1f64..10.0,
        ) {
            let p = softmax(&logits, t);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    #[test]
    fn eval_batch_norm_is_fixed_affine() {
        let mut bn = BatchNormState::new(2);
        bn.running_mean = array![1.0, -2.0];
        bn.running_var = array![4.0, 0.25];
        let x = array![[3.0, 0.0], [1.0, -2.0]];
        let run = || {
            let mut t = Tape::new();
            let v = t.leaf(x.clone());
            let (out, stats) = bn.forward_tape(&mut t, v, Mode::Eval).unwrap();
            assert!(stats.is_none());
            t.value(out).clone()
        };
        let a = run();
        assert_eq!(a, run());
        let s0 = 1.0 / (4.0f64 + 1e-5).sqrt();
        assert!((a[[0, 0]] - 2.0 * s0).abs() < 1e-12);
        assert_eq!(a[[1, 1]], 0.0);
    }

    #[test]
    fn train_batch_norm_rejects_batch_of_one() {
        let bn = BatchNormState::new(3);
        let mut t = Tape::new();
        let v = t.leaf(Array2::zeros((1, 3)));
        assert!(bn.forward_tape(&mut t, v, Mode::Train).is_err());
    }

    #[test]
    fn running_stats_update() {
        let mut bn = BatchNormState::new(1);
        bn.update(&BatchStats {
            mean: array![2.0],
            var: array![1.0],
            n: 2,
        });
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-15);
        assert!(bn.running_var.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = stream(3, "dropout-test", 0);
        let mask = dropout_mask(&mut rng, 200, 500, 0.2);
        let mean = mask.mean().unwrap();
        // Each entry has mean 1 and variance 0.25; 1e5 entries.
        assert!((mean - 1.0).abs() < 5.0 * (0.25f64 / 1e5).sqrt(), "mean {mean}");
        assert!(mask.iter().all(|&m| m == 0.0 || (m - 1.25).abs() < 1e-12));
        assert_eq!(dropout_mask(&mut rng, 2, 2, 0.0), Array2::<f64>::ones((2, 2)));
    }
}
