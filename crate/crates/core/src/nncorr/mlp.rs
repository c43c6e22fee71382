//! Fully connected ReLU network with fixed input normalization.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{read_json, write_json};
use crate::real::Real;

pub const N_FEATURES: usize = 8;
pub const N_OUTPUTS: usize = 2;

/// Input, six hidden layers of 128, output.
pub fn default_widths() -> Vec<usize> {
    widths_for(6, 128)
}

pub fn widths_for(depth: usize, width: usize) -> Vec<usize> {
    let mut w = vec![N_FEATURES];
    w.extend(std::iter::repeat_n(width, depth));
    w.push(N_OUTPUTS);
    w
}

/// `(hidden layers, width)` pairs with parameter counts within 0.5% of the
/// default architecture.
pub const DEPTH_SWEEP: [(usize, usize); 5] = [(2, 284), (3, 202), (4, 165), (5, 143), (6, 128)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", try_from = "MlpFile<T>", into = "MlpFile<T>")]
pub struct Mlp<T> {
    widths: Vec<usize>,
    /// `weights[l]` has shape `(widths[l + 1], widths[l])`.
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
}

/// Activations kept for the backward pass.
pub struct Tape<T> {
    /// Layer inputs; `inputs[0]` is the normalized feature batch.
    inputs: Vec<Array2<T>>,
}

impl<T: Real> Mlp<T> {
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("need at least two positive layer widths"));
        }
        let n_in = widths[0];
        Ok(Self {
            widths: widths.to_vec(),
            weights: widths.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect(),
            biases: widths[1..].iter().map(|&w| Array1::zeros(w)).collect(),
            mu: vec![T::zero(); n_in],
            sigma: vec![T::one(); n_in],
        })
    }

    /// Weights and biases from `U(-1/√fan_in, 1/√fan_in)`, identity normalization.
    pub fn random(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut m = Self::zeros(widths)?;
        for (w, b) in m.weights.iter_mut().zip(&mut m.biases) {
            let a = 1.0 / (w.ncols() as f64).sqrt();
            w.mapv_inplace(|_| T::lit(rng.random_range(-a..a)));
            b.mapv_inplace(|_| T::lit(rng.random_range(-a..a)));
        }
        Ok(m)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.widths.len();
        if n < 2 || self.weights.len() != n - 1 || self.biases.len() != n - 1 {
            return Err(Error::invalid("layer count mismatch"));
        }
        for l in 0..n - 1 {
            if self.weights[l].dim() != (self.widths[l + 1], self.widths[l]) || self.biases[l].len() != self.widths[l + 1] {
                return Err(Error::invalid(format!("layer {l} has inconsistent dimensions")));
            }
        }
        if self.mu.len() != self.widths[0] || self.sigma.len() != self.widths[0] {
            return Err(Error::invalid("normalization statistics have the wrong length"));
        }
        if let Some(j) = self.sigma.iter().position(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::invalid(format!("sigma[{j}] must be positive")));
        }
        if self.flat().iter().any(|v| !v.is_finite()) || self.mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite network parameter"));
        }
        Ok(())
    }

    pub fn set_normalization(&mut self, mu: Vec<T>, sigma: Vec<T>) -> Result<()> {
        let (old_mu, old_sigma) = (std::mem::replace(&mut self.mu, mu), std::mem::replace(&mut self.sigma, sigma));
        if let Err(e) = self.validate() {
            self.mu = old_mu;
            self.sigma = old_sigma;
            return Err(e);
        }
        Ok(())
    }

    /// Per-layer weights (row-major), then biases.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, theta: &[T]) {
        assert_eq!(theta.len(), self.n_params());
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = theta[k];
                k += 1;
            }
        }
    }

    /// Applies `(x - μ) / σ` to each row.
    pub fn normalize(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mu[j]) / self.sigma[j];
            }
        }
        out
    }

    /// Network on already normalized inputs, one sample per row.
    pub fn forward_normalized(&self, x: ArrayView2<T>) -> Array2<T> {
        self.run(x.to_owned(), None)
    }

    /// Raw features in, outputs out, one sample per row.
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Array2<T> {
        self.run(self.normalize(x), None)
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let a = ArrayView2::from_shape((1, x.len()), x).expect("feature length");
        self.forward_batch(a).row(0).to_vec()
    }

    /// Forward pass that records what [`Self::backward`] needs.
    pub fn forward_tape(&self, x: ArrayView2<T>) -> (Array2<T>, Tape<T>) {
        let mut tape = Tape { inputs: Vec::new() };
        let y = self.run(self.normalize(x), Some(&mut tape));
        (y, tape)
    }

    fn run(&self, mut h: Array2<T>, mut tape: Option<&mut Tape<T>>) -> Array2<T> {
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(&w.t());
            z += b;
            if l < last {
                z.mapv_inplace(|v| v.max(T::zero()));
            }
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(h);
            }
            h = z;
        }
        h
    }

    /// Gradient of `Σ dy ⊙ y` with respect to [`Self::flat`], where `y` is the
    /// output recorded in `tape`.
    pub fn backward(&self, tape: &Tape<T>, dy: ArrayView2<T>) -> Vec<T> {
        let n = self.weights.len();
        let mut grads: Vec<(Array2<T>, Array1<T>)> = Vec::with_capacity(n);
        let mut delta = dy.to_owned();
        for l in (0..n).rev() {
            let input = &tape.inputs[l];
            grads.push((delta.t().dot(input), delta.sum_axis(Axis(0))));
            if l > 0 {
                let mut prev = delta.dot(&self.weights[l]);
                // inputs[l] = relu(z_{l-1}); its derivative is the positivity mask
                prev.zip_mut_with(input, |d, &h| {
                    if !(h > T::zero()) {
                        *d = T::zero();
                    }
                });
                delta = prev;
            }
        }
        grads.reverse();
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in grads {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        let c = |v: &T| U::lit(v.as_f64());
        Mlp {
            widths: self.widths.clone(),
            weights: self.weights.iter().map(|w| w.map(c)).collect(),
            biases: self.biases.iter().map(|b| b.map(c)).collect(),
            mu: self.mu.iter().map(c).collect(),
            sigma: self.sigma.iter().map(c).collect(),
        }
    }
}

/// Population mean and standard deviation of each column; zero deviations
/// are replaced by one.
pub fn column_stats<T: Real>(x: ArrayView2<T>) -> (Vec<T>, Vec<T>) {
    let n = T::from_count(x.nrows().max(1));
    let mu: Vec<T> = (0..x.ncols()).map(|j| x.column(j).sum() / n).collect();
    let sigma = (0..x.ncols())
        .map(|j| {
            let v = x.column(j).iter().map(|&a| (a - mu[j]) * (a - mu[j])).sum::<T>() / n;
            let s = v.sqrt();
            if s > T::lit(1e-12) {
                s
            } else {
                T::one()
            }
        })
        .collect();
    (mu, sigma)
}

/// Serialized form with row-major weights.
#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct MlpFile<T> {
    widths: Vec<usize>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
    mu: Vec<T>,
    sigma: Vec<T>,
}

impl<T: Real> TryFrom<MlpFile<T>> for Mlp<T> {
    type Error = Error;

    fn try_from(f: MlpFile<T>) -> Result<Self> {
        let n = f.widths.len();
        if n < 2 || f.weights.len() + 1 != n || f.biases.len() + 1 != n {
            return Err(Error::invalid("layer count mismatch in network file"));
        }
        let weights = f
            .weights
            .into_iter()
            .enumerate()
            .map(|(l, w)| {
                Array2::from_shape_vec((f.widths[l + 1], f.widths[l]), w)
                    .map_err(|_| Error::invalid(format!("layer {l} weight size mismatch")))
            })
            .collect::<Result<_>>()?;
        let m = Mlp {
            widths: f.widths,
            weights,
            biases: f.biases.into_iter().map(Array1::from).collect(),
            mu: f.mu,
            sigma: f.sigma,
        };
        m.validate()?;
        Ok(m)
    }
}

impl<T: Real> From<Mlp<T>> for MlpFile<T> {
    fn from(m: Mlp<T>) -> Self {
        MlpFile {
            weights: m.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
            widths: m.widths,
            mu: m.mu,
            sigma: m.sigma,
        }
    }
}

pub fn read_mlp<T: Real>(path: impl AsRef<Path>) -> Result<Mlp<T>> {
    read_json(path.as_ref())
}

pub fn write_mlp<T: Real>(path: impl AsRef<Path>, m: &Mlp<T>) -> Result<()> {
    write_json(path.as_ref(), m)
}
