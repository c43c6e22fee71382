//! Input-convex scalar network `Λ̃(θ, s)` with squared weights and softplus
//! activations, and the diffusion coefficient built from its derivative.

pub mod counterexample;
pub mod pwl;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Smooth positive part `ε ln(1 + e^{t/ε})` and its derivative.
#[inline]
pub fn smooth_plus<T: Real>(t: T, eps: T) -> (T, T) {
    (eps * softplus(t / eps), sigmoid(t / eps))
}

/// One affine layer with raw (unsquared) weights, `rows × cols`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IcnnLayer<T> {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<T>,
    /// Empty for the output layer, whose bias is fixed to zero.
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IcnnParams<T> {
    pub layers: Vec<IcnnLayer<T>>,
    pub eta1: T,
    pub eta2: T,
    pub eps: T,
    #[serde(default)]
    pub use_second_bump: bool,
}

/// Hidden widths of the default network.
pub const DEFAULT_HIDDEN: [usize; 2] = [5, 5];

struct Forward<T> {
    /// Layer inputs `x_l` (x_0 = s).
    x: Vec<Vec<T>>,
    /// Derivative vectors `y_l = dx_l/ds`.
    y: Vec<Vec<T>>,
    /// Pre-activations `z_l`.
    z: Vec<Vec<T>>,
    /// `q_l = W_l y_l`.
    q: Vec<Vec<T>>,
}

impl<T: Real> IcnnParams<T> {
    /// Zero raw weights for the given hidden widths, default hyperparameters.
    pub fn zeros(hidden: &[usize]) -> Self {
        let mut widths = vec![1];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|l| IcnnLayer {
                rows: widths[l + 1],
                cols: widths[l],
                weights: vec![T::zero(); widths[l] * widths[l + 1]],
                bias: if l + 1 < n { vec![T::zero(); widths[l + 1]] } else { Vec::new() },
            })
            .collect();
        Self {
            layers,
            eta1: T::lit(0.01),
            eta2: T::lit(1.0),
            eps: T::lit(1e-3),
            use_second_bump: false,
        }
    }

    /// Raw weights and biases drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn random(hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(hidden);
        for layer in &mut p.layers {
            let a = 1.0 / (layer.cols as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = T::lit(rng.random_range(-a..a));
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers[0].cols != 1 || self.layers.last().unwrap().rows != 1 {
            return Err(Error::invalid("network must map a scalar to a scalar"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let last = l + 1 == self.layers.len();
            if layer.weights.len() != layer.rows * layer.cols
                || layer.bias.len() != if last { 0 } else { layer.rows }
                || (l > 0 && layer.cols != self.layers[l - 1].rows)
            {
                return Err(Error::invalid(format!("layer {l} has inconsistent dimensions")));
            }
        }
        if !(self.eta1 > T::zero() && self.eta2 > self.eta1 && self.eps > T::zero()) {
            return Err(Error::invalid("need eta2 > eta1 > 0 and eps > 0"));
        }
        if self.flat().iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite network parameter"));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Raw parameters: per layer, weights row-major, then biases.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, theta: &[T]) {
        assert_eq!(theta.len(), self.n_params());
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&theta[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&theta[k..k + nb]);
            k += nb;
        }
    }

    pub fn with_flat(&self, theta: &[T]) -> Self {
        let mut p = self.clone();
        p.set_flat(theta);
        p
    }

    fn forward(&self, s: T) -> Forward<T> {
        let n = self.layers.len();
        let mut f = Forward {
            x: vec![vec![s]],
            y: vec![vec![T::one()]],
            z: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
        };
        for layer in &self.layers[..n - 1] {
            let (x, y) = (&f.x[f.x.len() - 1], &f.y[f.y.len() - 1]);
            let mut z = layer.bias.clone();
            let mut q = vec![T::zero(); layer.rows];
            for r in 0..layer.rows {
                for c in 0..layer.cols {
                    let w = layer.weights[r * layer.cols + c];
                    let w = w * w;
                    z[r] += w * x[c];
                    q[r] += w * y[c];
                }
            }
            let xn: Vec<T> = z.iter().map(|&v| softplus(v)).collect();
            let yn: Vec<T> = z.iter().zip(&q).map(|(&v, &qq)| sigmoid(v) * qq).collect();
            f.z.push(z);
            f.q.push(q);
            f.x.push(xn);
            f.y.push(yn);
        }
        f
    }

    fn output_row(&self) -> Vec<T> {
        self.layers.last().unwrap().weights.iter().map(|&w| w * w).collect()
    }

    /// `Λ̃(θ, s)`.
    pub fn eval(&self, s: T) -> T {
        let f = self.forward(s);
        let v = self.output_row();
        v.iter().zip(f.x.last().unwrap()).map(|(&a, &b)| a * b).sum()
    }

    /// `dΛ̃/ds` by the forward derivative recursion.
    pub fn derivative(&self, s: T) -> T {
        let f = self.forward(s);
        let v = self.output_row();
        v.iter().zip(f.y.last().unwrap()).map(|(&a, &b)| a * b).sum()
    }

    /// `(dΛ̃/ds, d²Λ̃/ds²)`.
    pub fn derivatives(&self, s: T) -> (T, T) {
        let f = self.forward(s);
        let n = self.layers.len();
        let mut w = vec![T::zero()];
        for (l, layer) in self.layers[..n - 1].iter().enumerate() {
            let mut ww = vec![T::zero(); layer.rows];
            for r in 0..layer.rows {
                let mut acc = T::zero();
                for c in 0..layer.cols {
                    let a = layer.weights[r * layer.cols + c];
                    acc += a * a * w[c];
                }
                let sg = sigmoid(f.z[l][r]);
                ww[r] = sg * (T::one() - sg) * f.q[l][r] * f.q[l][r] + sg * acc;
            }
            w = ww;
        }
        let v = self.output_row();
        let d1 = v.iter().zip(f.y.last().unwrap()).map(|(&a, &b)| a * b).sum();
        let d2 = v.iter().zip(&w).map(|(&a, &b)| a * b).sum();
        (d1, d2)
    }

    /// `α(θ, s) = 1 + (s - η₁)_{+,ε} Λ̃'(s)` (plus `(s - η₂)_{+,ε}` if enabled).
    pub fn alpha(&self, s: T) -> T {
        self.alpha_with_slope(s).0
    }

    /// `(α, ∂α/∂s)`.
    pub fn alpha_with_slope(&self, s: T) -> (T, T) {
        let (d1, d2) = self.derivatives(s);
        let (p1, dp1) = smooth_plus(s - self.eta1, self.eps);
        let mut a = T::one() + p1 * d1;
        let mut da = dp1 * d1 + p1 * d2;
        if self.use_second_bump {
            let (p2, dp2) = smooth_plus(s - self.eta2, self.eps);
            a += p2;
            da += dp2;
        }
        (a, da)
    }

    /// Gradient of `Λ̃'(s)` with respect to the raw parameters, in [`Self::flat`] order.
    pub fn derivative_param_grad(&self, s: T) -> Vec<T> {
        let f = self.forward(s);
        let n = self.layers.len();
        let mut grads: Vec<(Vec<T>, Vec<T>)> = Vec::with_capacity(n);
        // output layer: D = Σ v_k y_k with v = θ²
        let out = self.layers.last().unwrap();
        let y_last = f.y.last().unwrap();
        grads.push((
            out.weights.iter().zip(y_last).map(|(&t, &y)| T::lit(2.0) * t * y).collect(),
            Vec::new(),
        ));
        let mut ybar = self.output_row();
        let mut xbar = vec![T::zero(); ybar.len()];
        for l in (0..n - 1).rev() {
            let layer = &self.layers[l];
            let (x, y, z, q) = (&f.x[l], &f.y[l], &f.z[l], &f.q[l]);
            let mut qbar = vec![T::zero(); layer.rows];
            let mut zbar = vec![T::zero(); layer.rows];
            for r in 0..layer.rows {
                let sg = sigmoid(z[r]);
                let dsg = sg * (T::one() - sg);
                qbar[r] = sg * ybar[r];
                zbar[r] = dsg * q[r] * ybar[r] + sg * xbar[r];
            }
            let mut gw = vec![T::zero(); layer.weights.len()];
            let mut ny = vec![T::zero(); layer.cols];
            let mut nx = vec![T::zero(); layer.cols];
            for r in 0..layer.rows {
                for c in 0..layer.cols {
                    let t = layer.weights[r * layer.cols + c];
                    let a_bar = qbar[r] * y[c] + zbar[r] * x[c];
                    gw[r * layer.cols + c] = T::lit(2.0) * t * a_bar;
                    let a = t * t;
                    ny[c] += a * qbar[r];
                    nx[c] += a * zbar[r];
                }
            }
            grads.push((gw, zbar));
            ybar = ny;
            xbar = nx;
        }
        grads.reverse();
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in grads {
            out.extend(w);
            out.extend(b);
        }
        out
    }

    /// Gradient of `α(θ, s)` with respect to the raw parameters.
    pub fn alpha_param_grad(&self, s: T) -> Vec<T> {
        let (p1, _) = smooth_plus(s - self.eta1, self.eps);
        self.derivative_param_grad(s).into_iter().map(|g| p1 * g).collect()
    }

    pub fn cast<U: Real>(&self) -> IcnnParams<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect();
        IcnnParams {
            layers: self
                .layers
                .iter()
                .map(|l| IcnnLayer {
                    rows: l.rows,
                    cols: l.cols,
                    weights: c(&l.weights),
                    bias: c(&l.bias),
                })
                .collect(),
            eta1: U::lit(self.eta1.as_f64()),
            eta2: U::lit(self.eta2.as_f64()),
            eps: U::lit(self.eps.as_f64()),
            use_second_bump: self.use_second_bump,
        }
    }
}

pub fn read_icnn<T: Real>(path: impl AsRef<Path>) -> Result<IcnnParams<T>> {
    let p: IcnnParams<T> = crate::mesh::read_json(path.as_ref())?;
    p.validate()?;
    Ok(p)
}

pub fn write_icnn<T: Real>(path: impl AsRef<Path>, params: &IcnnParams<T>) -> Result<()> {
    crate::mesh::write_json(path.as_ref(), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn default_architecture_has_45_parameters() {
        let p = IcnnParams::<f64>::zeros(&DEFAULT_HIDDEN);
        assert_eq!(p.n_params(), 45);
        p.validate().unwrap();
        assert_eq!(p.eval(3.0), 0.0);
        assert_eq!(p.derivative(3.0), 0.0);
    }

    #[test]
    fn one_unit_network_is_softplus() {
        let mut p = IcnnParams::<f64>::zeros(&[1]);
        p.set_flat(&[1.0, 0.0, 1.0]);
        for s in [-2.0, 0.0, 0.7, 5.0] {
            assert!((p.eval(s) - (1.0 + f64::exp(s)).ln()).abs() < 1e-15);
            assert!((p.derivative(s) - 1.0 / (1.0 + f64::exp(-s))).abs() < 1e-15);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-16);
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let p = IcnnParams::<f64>::random(&DEFAULT_HIDDEN, &mut seeded(3));
        for s in [0.0, 0.3, 2.0] {
            let h = 1e-5;
            let fd = (p.derivative(s + h) - p.derivative(s - h)) / (2.0 * h);
            let (_, d2) = p.derivatives(s);
            assert!((fd - d2).abs() <= 1e-7 * (1.0 + d2.abs()));
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut p = IcnnParams::<f64>::random(&DEFAULT_HIDDEN, &mut seeded(11));
        p.use_second_bump = true;
        let theta = p.flat();
        for s in [0.05, 0.4, 1.5] {
            let g = p.alpha_param_grad(s);
            for k in 0..theta.len() {
                let h = 1e-6;
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[k] += h;
                tm[k] -= h;
                let fd = (p.with_flat(&tp).alpha(s) - p.with_flat(&tm).alpha(s)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-7 * (1.0 + fd.abs()), "param {k} at s={s}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let p = IcnnParams::<f64>::random(&DEFAULT_HIDDEN, &mut seeded(5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("icnn.json");
        write_icnn(&path, &p).unwrap();
        assert_eq!(read_icnn::<f64>(&path).unwrap(), p);
    }
}
