//! Client availability, step-size schedules and stopping rules.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::rng::{self, tags};
use crate::Scalar;

/// Which clients take part in outer iteration `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    Full,
    /// `max(1, round(f·K))` clients drawn uniformly without replacement.
    RandomFraction { fraction: f64, seed: u64 },
    /// Clients are shuffled once into `groups` blocks that take turns.
    Cyclic { groups: usize, seed: u64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Full
    }
}

impl Schedule {
    pub fn validate(&self, n_clients: usize) -> Result<()> {
        match *self {
            Schedule::Full => Ok(()),
            Schedule::RandomFraction { fraction, .. } => {
                if fraction > 0.0 && fraction <= 1.0 {
                    Ok(())
                } else {
                    Err(config("participation fraction must lie in (0, 1]"))
                }
            }
            Schedule::Cyclic { groups, .. } => {
                if groups >= 1 && groups <= n_clients {
                    Ok(())
                } else {
                    Err(config(format!("cyclic schedule needs 1..={n_clients} groups, got {groups}")))
                }
            }
        }
    }

    /// Mean fraction of clients active per iteration.
    pub fn participation(&self, n_clients: usize) -> f64 {
        match *self {
            Schedule::Full => 1.0,
            Schedule::RandomFraction { fraction, .. } => {
                random_count(fraction, n_clients) as f64 / n_clients.max(1) as f64
            }
            Schedule::Cyclic { groups, .. } => 1.0 / groups.max(1) as f64,
        }
    }

    /// Sorted active client set for iteration `t` (1-based).
    pub fn active(&self, t: usize, n_clients: usize) -> Vec<usize> {
        match *self {
            Schedule::Full => (0..n_clients).collect(),
            Schedule::RandomFraction { fraction, seed } => {
                let mut r = rng::stream(seed, tags::SCHEDULE, &[t as u64]);
                let count = random_count(fraction, n_clients);
                let mut v = index::sample(&mut r, n_clients, count).into_vec();
                v.sort_unstable();
                v
            }
            Schedule::Cyclic { groups, seed } => {
                let blocks = cyclic_blocks(n_clients, groups, seed);
                blocks[t % groups].clone()
            }
        }
    }
}

fn random_count(fraction: f64, n_clients: usize) -> usize {
    ((fraction * n_clients as f64).round() as usize).clamp(1, n_clients.max(1)).min(n_clients)
}

/// The `groups` client blocks of a cyclic schedule, each sorted.
pub fn cyclic_blocks(n_clients: usize, groups: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n_clients).collect();
    order.shuffle(&mut rng::stream(seed, tags::CYCLIC, &[]));
    crate::partition::contiguous_groups(n_clients, groups)
        .into_iter()
        .map(|r| {
            let mut b = order[r].to_vec();
            b.sort_unstable();
            b
        })
        .collect()
}

/// Outer step size `γ_t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSchedule {
    #[default]
    Constant,
    InverseT,
}

impl GammaSchedule {
    pub fn gamma<T: Scalar>(&self, t: usize) -> T {
        match self {
            GammaSchedule::Constant => T::one(),
            GammaSchedule::InverseT => T::one() / T::from_count(t.max(1)),
        }
    }
}

/// Client step scale `c_k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepScale {
    /// `c_k = N_k / N`
    #[default]
    SampleFraction,
    One,
}

/// When a run ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    Iterations(usize),
    /// Budget on simulated cumulative wall time, in seconds.
    WallTime(f64),
}

impl StopRule {
    pub fn should_stop(&self, completed: usize, elapsed_s: f64) -> bool {
        match *self {
            StopRule::Iterations(n) => completed >= n,
            StopRule::WallTime(budget) => elapsed_s >= budget,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_schedule_is_everyone() {
        assert_eq!(Schedule::Full.active(3, 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn random_fraction_size_and_determinism() {
        let s = Schedule::RandomFraction { fraction: 0.25, seed: 9 };
        for t in 1..50 {
            let a = s.active(t, 20);
            assert_eq!(a.len(), 5);
            assert!(a.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(a, s.active(t, 20));
        }
        let tiny = Schedule::RandomFraction { fraction: 0.01, seed: 1 };
        assert_eq!(tiny.active(1, 8).len(), 1);
    }

    #[test]
    fn random_fraction_is_roughly_uniform() {
        let s = Schedule::RandomFraction { fraction: 0.5, seed: 3 };
        let mut hits = [0usize; 4];
        for t in 1..=4000 {
            for k in s.active(t, 4) {
                hits[k] += 1;
            }
        }
        for h in hits {
            assert!((h as f64 / 4000.0 - 0.5).abs() < 0.03, "{hits:?}");
        }
    }

    #[test]
    fn cyclic_rotates_through_disjoint_blocks() {
        let s = Schedule::Cyclic { groups: 2, seed: 5 };
        let a = s.active(1, 4);
        let b = s.active(2, 4);
        assert_eq!(a.len() + b.len(), 4);
        assert!(a.iter().all(|k| !b.contains(k)));
        assert_eq!(s.active(3, 4), a);
        assert_eq!(s.active(4, 4), b);
    }

    #[test]
    fn gamma_values() {
        assert_eq!(GammaSchedule::Constant.gamma::<f64>(7), 1.0);
        assert_eq!(GammaSchedule::InverseT.gamma::<f64>(4), 0.25);
    }

    #[test]
    fn validation() {
        assert!(Schedule::RandomFraction { fraction: 0.0, seed: 0 }.validate(4).is_err());
        assert!(Schedule::Cyclic { groups: 5, seed: 0 }.validate(4).is_err());
        assert!(Schedule::Cyclic { groups: 2, seed: 0 }.validate(4).is_ok());
    }
}
