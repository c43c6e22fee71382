//! Supervised training of the correction network with an ℓ₁ vertex loss.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{column_stats, Mlp, N_FEATURES, N_OUTPUTS};
use super::vertex_features;
use crate::error::{Error, Result};
use crate::field::{Field, Space};
use crate::mesh::TriMesh;
use crate::optim::{AdamW, AdamWConfig, Plateau, PlateauConfig};
use crate::real::Real;
use crate::rng::seeded;

/// Rows pushed through the network at once during training.
const CHUNK_ROWS: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnCorrTrainConfig {
    /// Snapshots per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub plateau: PlateauConfig,
    pub seed: u64,
}

impl Default for NnCorrTrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 200,
            lr: 1e-3,
            weight_decay: 0.01,
            plateau: PlateauConfig::default(),
            seed: 0,
        }
    }
}

impl NnCorrTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch size and epochs must be positive"));
        }
        if !(self.weight_decay >= 0.0) || !(self.lr > 0.0) {
            return Err(Error::invalid("need lr > 0 and weight decay >= 0"));
        }
        Ok(())
    }
}

/// Vertex-level training data: per snapshot the network inputs and the
/// residual `u_biharm - u_harm` the masked correction should match.
#[derive(Debug, Clone, PartialEq)]
pub struct NnCorrData<T> {
    pub features: Vec<Array2<T>>,
    pub residual: Vec<Array2<T>>,
    pub mask: Vec<T>,
}

impl<T: Real> NnCorrData<T> {
    pub fn new(mask: &Field<T>) -> Self {
        Self {
            features: Vec::new(),
            residual: Vec::new(),
            mask: mask.coefficients.clone(),
        }
    }

    /// Adds one snapshot from its harmonic extension, recovered gradient and
    /// target extension.
    pub fn push(&mut self, mesh: &TriMesh<T>, u_harm: &Field<T>, grad: &Field<T>, target: &Field<T>) -> Result<()> {
        let nv = mesh.n_vertices();
        if self.mask.len() != nv {
            return Err(Error::FieldLength {
                expected: nv,
                actual: self.mask.len(),
            });
        }
        target.check(mesh)?;
        if target.value_dim != 2 || target.space == Space::DG0 {
            return Err(Error::invalid("target must be a vector field"));
        }
        self.features.push(vertex_features(mesh, u_harm, grad)?);
        self.residual.push(Array2::from_shape_fn((nv, 2), |(v, c)| {
            target.coefficients[2 * v + c] - u_harm.coefficients[2 * v + c]
        }));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            residual: indices.iter().map(|&i| self.residual[i].clone()).collect(),
            mask: self.mask.clone(),
        }
    }

    pub fn cast<U: Real>(&self) -> NnCorrData<U> {
        let c = |v: &T| U::lit(v.as_f64());
        NnCorrData {
            features: self.features.iter().map(|a| a.map(c)).collect(),
            residual: self.residual.iter().map(|a| a.map(c)).collect(),
            mask: self.mask.iter().map(c).collect(),
        }
    }
}

/// Rows of several snapshots stacked for one network pass.
struct Chunk<T> {
    x: Array2<T>,
    r: Array2<T>,
    l: Vec<T>,
}

fn chunks<'a, T: Real>(data: &'a NnCorrData<T>, indices: &'a [usize]) -> impl Iterator<Item = Chunk<T>> + 'a {
    let nv = data.mask.len();
    let per = (CHUNK_ROWS / nv.max(1)).max(1);
    indices.chunks(per).map(move |group| {
        let rows = group.len() * nv;
        let mut x = Array2::zeros((rows, N_FEATURES));
        let mut r = Array2::zeros((rows, N_OUTPUTS));
        let mut l = Vec::with_capacity(rows);
        for (k, &i) in group.iter().enumerate() {
            x.slice_mut(ndarray::s![k * nv..(k + 1) * nv, ..]).assign(&data.features[i]);
            r.slice_mut(ndarray::s![k * nv..(k + 1) * nv, ..]).assign(&data.residual[i]);
            l.extend_from_slice(&data.mask);
        }
        Chunk { x, r, l }
    })
}

fn chunk_loss<T: Real>(y: ArrayView2<T>, c: &Chunk<T>) -> T {
    let mut s = T::zero();
    for (i, (yr, rr)) in y.rows().into_iter().zip(c.r.rows()).enumerate() {
        for k in 0..N_OUTPUTS {
            s += (c.l[i] * yr[k] - rr[k]).abs();
        }
    }
    s
}

/// Mean over the selected snapshots of `Σ_v ‖ℓ(v) 𝒩(x_v) - r_v‖₁`.
pub fn batch_loss<T: Real>(mlp: &Mlp<T>, data: &NnCorrData<T>, indices: &[usize]) -> T {
    let mut s = T::zero();
    for c in chunks(data, indices) {
        let y = mlp.forward_batch(c.x.view());
        s += chunk_loss(y.view(), &c);
    }
    s / T::from_count(indices.len().max(1))
}

/// [`batch_loss`] and its gradient with respect to [`Mlp::flat`].
pub fn batch_loss_and_grad<T: Real>(mlp: &Mlp<T>, data: &NnCorrData<T>, indices: &[usize]) -> (T, Vec<T>) {
    let inv = T::one() / T::from_count(indices.len().max(1));
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); mlp.n_params()];
    for c in chunks(data, indices) {
        let (y, tape) = mlp.forward_tape(c.x.view());
        loss += chunk_loss(y.view(), &c);
        let mut dy = Array2::zeros(y.dim());
        for i in 0..y.nrows() {
            for k in 0..N_OUTPUTS {
                let e = c.l[i] * y[[i, k]] - c.r[[i, k]];
                let sign = if e > T::zero() {
                    T::one()
                } else if e < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                dy[[i, k]] = inv * c.l[i] * sign;
            }
        }
        for (g, v) in grad.iter_mut().zip(mlp.backward(&tape, dy.view())) {
            *g += v;
        }
    }
    (loss * inv, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnCorrTrainResult<T> {
    pub mlp: Mlp<T>,
    /// Mean batch loss per epoch, taken before each step.
    pub train_loss: Vec<f64>,
    /// Loss on the validation split after each epoch, if one was given.
    pub val_loss: Vec<f64>,
    pub lr: Vec<f64>,
}

/// AdamW on the ℓ₁ loss with plateau halving of the learning rate, monitored
/// on the validation split when present and on the training loss otherwise.
///
/// Normalization statistics are computed from all training vertices before
/// the first step and stay fixed afterwards.
pub fn train_nncorr<T: Real>(
    train: &NnCorrData<T>,
    val: Option<&NnCorrData<T>>,
    mlp0: &Mlp<T>,
    cfg: &NnCorrTrainConfig,
) -> Result<NnCorrTrainResult<T>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("empty training split"));
    }
    let mut mlp = mlp0.clone();
    let all = ndarray::concatenate(ndarray::Axis(0), &train.features.iter().map(|a| a.view()).collect::<Vec<_>>())
        .map_err(|_| Error::invalid("inconsistent feature shapes"))?;
    let (mu, sigma) = column_stats(all.view());
    mlp.set_normalization(mu, sigma)?;

    let mut rng = seeded(cfg.seed);
    let mut opt = AdamW::new(
        mlp.n_params(),
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
    );
    let mut sched = Plateau::new(cfg.lr, cfg.plateau);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let val_idx: Vec<usize> = val.map(|v| (0..v.len()).collect()).unwrap_or_default();
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut val_loss = Vec::new();
    let mut lr = Vec::with_capacity(cfg.epochs);
    let mut theta = mlp.flat();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (l, g) = batch_loss_and_grad(&mlp, train, batch);
            sum += l.as_f64() * batch.len() as f64;
            opt.step(&mut theta, &g);
            mlp.set_flat(&theta);
        }
        let epoch_loss = sum / train.len() as f64;
        train_loss.push(epoch_loss);
        lr.push(sched.lr());
        let monitored = match val {
            Some(v) if !v.is_empty() => {
                let l = batch_loss(&mlp, v, &val_idx).as_f64();
                val_loss.push(l);
                l
            }
            _ => epoch_loss,
        };
        opt.set_lr(sched.step(monitored));
        log::debug!("epoch {epoch}: train {epoch_loss:.4e} monitored {monitored:.4e}");
    }
    Ok(NnCorrTrainResult {
        mlp,
        train_loss,
        val_loss,
        lr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seeds: Vec<u64>,
    pub scores: Vec<f64>,
    /// Minimum, lower quartile, median, upper quartile, maximum.
    pub quantiles: [f64; 5],
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Trains one network per seed (fresh initialization and shuffling) and
/// scores each with `score`.
pub fn seed_sweep<T: Real>(
    train: &NnCorrData<T>,
    val: Option<&NnCorrData<T>>,
    widths: &[usize],
    cfg: &NnCorrTrainConfig,
    seeds: &[u64],
    score: impl Fn(&Mlp<T>) -> Result<f64>,
) -> Result<SweepReport> {
    if seeds.is_empty() {
        return Err(Error::invalid("no seeds given"));
    }
    let mut scores = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mlp0 = Mlp::random(widths, &mut seeded(seed))?;
        let r = train_nncorr(train, val, &mlp0, &NnCorrTrainConfig { seed, ..cfg.clone() })?;
        scores.push(score(&r.mlp)?);
    }
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(SweepReport {
        seeds: seeds.to_vec(),
        quantiles: [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile(&sorted, q)),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::{biharmonic_extend, harmonic_extend, BoundaryDisplacement};
    use crate::fem::clement_gradient;
    use crate::mesh::rectangle_mesh;
    use crate::nncorr::{compute_mask, MaskConfig};
    use rand::Rng;

    fn toy(n: usize) -> (TriMesh<f64>, NnCorrData<f64>) {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 5, 5);
        let mask = compute_mask(&m, &MaskConfig::default()).unwrap();
        let mut d = NnCorrData::new(&mask);
        for i in 0..n {
            let a = 0.1 + 0.05 * i as f64;
            let g = BoundaryDisplacement::from_fn(&m, move |x: [f64; 2]| [0.0, a * (std::f64::consts::PI * x[0]).sin() * x[1]]);
            let h = harmonic_extend(&m, &g).unwrap();
            let b = biharmonic_extend(&m, &g).unwrap();
            d.push(&m, &h, &clement_gradient(&m, &h), &b).unwrap();
        }
        (m, d)
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let (_, d) = toy(3);
        let mut rng = seeded(21);
        let mut mlp = Mlp::<f64>::random(&[8, 12, 12, 2], &mut rng).unwrap();
        let all = ndarray::concatenate(ndarray::Axis(0), &d.features.iter().map(|a| a.view()).collect::<Vec<_>>()).unwrap();
        let (mu, sigma) = column_stats(all.view());
        mlp.set_normalization(mu, sigma).unwrap();
        let idx = [0, 1, 2];
        let (_, g) = batch_loss_and_grad(&mlp, &d, &idx);
        let theta = mlp.flat();
        for _ in 0..20 {
            let k = rng.random_range(0..theta.len());
            let h = 1e-4;
            let f = |t: f64| {
                let mut th = theta.clone();
                th[k] = t;
                let mut mm = mlp.clone();
                mm.set_flat(&th);
                batch_loss(&mm, &d, &idx)
            };
            let fd = (f(theta[k] + h) - f(theta[k] - h)) / (2.0 * h);
            let scale = fd.abs().max(g[k].abs()).max(1e-8);
            assert!((fd - g[k]).abs() <= 1e-3 * scale, "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn harmonic_targets_give_zero_loss_at_zero_network() {
        let m = rectangle_mesh([0.0, 0.0], [1.0, 1.0], 4, 4);
        let mask = compute_mask(&m, &MaskConfig::default()).unwrap();
        let mut d = NnCorrData::new(&mask);
        let g = BoundaryDisplacement::from_fn(&m, |x| [0.1 * x[0] * x[1], 0.0]);
        let h = harmonic_extend(&m, &g).unwrap();
        d.push(&m, &h, &clement_gradient(&m, &h), &h).unwrap();
        let mlp = Mlp::<f64>::zeros(&[8, 4, 2]).unwrap();
        assert_eq!(batch_loss(&mlp, &d, &[0]), 0.0);
        let cfg = NnCorrTrainConfig { epochs: 5, ..Default::default() };
        let r = train_nncorr(&d, None, &mlp, &cfg).unwrap();
        assert!(r.train_loss.iter().all(|&l| l <= 1e-12));
    }

    #[test]
    fn training_reduces_the_loss() {
        let (_, d) = toy(6);
        let mlp0 = Mlp::<f64>::random(&[8, 32, 32, 2], &mut seeded(1)).unwrap();
        let cfg = NnCorrTrainConfig {
            batch_size: 4,
            epochs: 60,
            lr: 3e-3,
            ..Default::default()
        };
        let r = train_nncorr(&d.subset(&[0, 1, 2, 3, 4]), Some(&d.subset(&[5])), &mlp0, &cfg).unwrap();
        let min = r.train_loss.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(*r.train_loss.last().unwrap() <= 1.05 * min);
        assert!(*r.train_loss.last().unwrap() < 0.5 * r.train_loss[0]);
        assert_eq!(r.val_loss.len(), 60);
        // statistics come from the training split and stay frozen
        assert!(r.mlp.sigma.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let (_, d) = toy(3);
        let mlp0 = Mlp::<f64>::random(&[8, 8, 2], &mut seeded(1)).unwrap();
        let cfg = NnCorrTrainConfig { batch_size: 2, epochs: 3, ..Default::default() };
        let a = train_nncorr(&d, None, &mlp0, &cfg).unwrap();
        let b = train_nncorr(&d, None, &mlp0, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_split_is_an_error() {
        let (_, d) = toy(1);
        let empty = d.subset(&[]);
        let mlp0 = Mlp::<f64>::zeros(&[8, 4, 2]).unwrap();
        assert!(train_nncorr(&empty, None, &mlp0, &NnCorrTrainConfig::default()).is_err());
    }

    #[test]
    fn sweep_reports_quantiles() {
        let (_, d) = toy(2);
        let cfg = NnCorrTrainConfig { epochs: 2, ..Default::default() };
        let r = seed_sweep(&d, None, &[8, 4, 2], &cfg, &[1, 2, 3], |m| Ok(batch_loss(m, &d, &[0, 1]))).unwrap();
        assert_eq!(r.scores.len(), 3);
        assert!(r.quantiles.windows(2).all(|w| w[0] <= w[1]));
    }
}
