//! Central finite-difference gradient checking in 64-bit.
//!
//! The numeric side only ever evaluates the forward function, so it is an
//! independent check of every hand-written backward rule.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Result, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many coordinates per input (all when `None`).
    pub max_coords: Option<usize>,
    /// Seed for the coordinate subsample.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-4, max_coords: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Norm-wise relative error `|a - n| / max(|a|, |n|)` per input, over the
    /// checked coordinates.
    pub relative_errors: Vec<f64>,
    pub coords_checked: usize,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Relative error of two gradient vectors; both-zero counts as exact.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Compares the tape gradient of the scalar `f(inputs)` against central
/// differences, input by input.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], mut f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &[Var<f64>]) -> Result<Var<f64>>,
{
    let mut tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(&loss)?;
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|v| tape.grad_tensor(v)).collect();
    drop(tape);

    let mut eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<_> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        out.value().item().ok_or_else(|| TensorError::NonScalarLoss(out.shape().to_vec()))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut relative_errors = Vec::with_capacity(inputs.len());
    let mut coords_checked = 0;
    let mut work = inputs.to_vec();
    for i in 0..inputs.len() {
        let len = inputs[i].len();
        let coords: Vec<usize> = match opts.max_coords {
            Some(k) if k < len => {
                let mut c = sample(&mut rng, len, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..len).collect(),
        };
        let mut a = Vec::with_capacity(coords.len());
        let mut n = Vec::with_capacity(coords.len());
        for &j in &coords {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + opts.step;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - opts.step;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            n.push((plus - minus) / (2.0 * opts.step));
            a.push(analytic[i].data()[j]);
        }
        coords_checked += coords.len();
        relative_errors.push(relative_error(&a, &n));
    }
    Ok(GradCheckReport { relative_errors, coords_checked })
}

/// `sum(y * r)` for a fixed pseudo-random `r`, turning any op output into a
/// scalar whose gradient exercises every output element.
pub fn project(tape: &mut Tape<f64>, y: &Var<f64>, seed: u64) -> Result<Var<f64>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let r = tape.constant(Tensor::from_fn(y.shape().to_vec(), |_| rng.random_range(-1.0..1.0)));
    let prod = tape.mul(y, &r)?;
    Ok(tape.sum(&prod))
}
