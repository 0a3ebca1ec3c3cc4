use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{SparseDataset, SparseVector};
use crate::error::{config, Result};
use crate::rng::{self, tags};
use crate::Scalar;

/// Parameters of [`synth_dataset`], serializable for experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_samples: usize,
    pub n_features: usize,
    pub margin: f64,
    pub noise_rate: f64,
}

impl SynthSpec {
    pub fn generate<T: Scalar>(&self) -> Result<SparseDataset<T>> {
        synth_dataset(self.seed, self.n_samples, self.n_features, self.margin, self.noise_rate)
    }
}

/// Dense linearly separable data around a random unit hyperplane.
///
/// Each sample has norm `r ~ U[0.5, 1]`. Its component along the hidden
/// normal has magnitude drawn uniformly from `[margin, r]`, so every clean
/// sample sits at least `margin` away from the hyperplane. The remaining norm
/// goes to a random orthogonal direction. Afterwards exactly
/// `round(noise_rate * n_samples)` labels are flipped.
pub fn synth_dataset<T: Scalar>(
    seed: u64,
    n_samples: usize,
    n_features: usize,
    margin: f64,
    noise_rate: f64,
) -> Result<SparseDataset<T>> {
    if n_samples == 0 || n_features == 0 {
        return Err(config("synthetic data needs at least one sample and one feature"));
    }
    if !(0.0..0.5).contains(&margin) {
        return Err(config("synthetic margin must lie in [0, 0.5)"));
    }
    if !(0.0..0.5).contains(&noise_rate) {
        return Err(config("noise rate must lie in [0, 0.5)"));
    }

    let mut rng = rng::stream(seed, tags::SYNTH, &[]);
    let normal = unit_gaussian(&mut rng, n_features);

    let mut samples = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let r: f64 = rng.random_range(0.5..=1.0);
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let along = if n_features == 1 { r } else { rng.random_range(margin..=r) };
        let mut x: Vec<f64> = vec![0.0; n_features];
        if n_features > 1 {
            let mut perp = unit_gaussian(&mut rng, n_features);
            let proj: f64 = perp.iter().zip(&normal).map(|(a, b)| a * b).sum();
            for (p, n) in perp.iter_mut().zip(&normal) {
                *p -= proj * n;
            }
            let pn = perp.iter().map(|v| v * v).sum::<f64>().sqrt();
            let len = (r * r - along * along).max(0.0).sqrt();
            if pn > 0.0 {
                for (xi, p) in x.iter_mut().zip(&perp) {
                    *xi = p / pn * len;
                }
            }
        }
        for (xi, n) in x.iter_mut().zip(&normal) {
            *xi += side * along * n;
        }
        let dense: Vec<T> = x.iter().map(|&v| T::lit(v)).collect();
        samples.push(SparseVector::from_dense(&dense));
        labels.push(T::lit(side));
    }

    let flips = (noise_rate * n_samples as f64).round() as usize;
    if flips > 0 {
        for i in index::sample(&mut rng, n_samples, flips) {
            labels[i] = -labels[i];
        }
    }
    let ds = SparseDataset::new("synth", n_features, samples, labels)?;
    Ok(super::normalize_samples(&ds))
}

fn unit_gaussian(rng: &mut rng::Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}
