//! Client data holdings for hybrid, horizontal and vertical federated setups.
//!
//! A [`Partition`] only stores indices. For every client it records the
//! samples it holds and, per sample, the feature indices it holds for that
//! sample. Holdings never overlap: each nonzero `(sample, feature)` entry of
//! the dataset belongs to exactly one client.

use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{SparseDataset, SparseVector};
use crate::error::{config, Error, Result};
use crate::rng::{self, tags};
use crate::Scalar;

/// Side length of an MNIST image.
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Quadrant,
    NonzeroSplit,
    Horizontal,
    Vertical,
}

/// Features a client holds for each of its samples.
#[derive(Debug, Clone, PartialEq)]
pub enum HeldFeatures {
    /// Every sample on the client carries the same feature set.
    Rectangular(Vec<usize>),
    /// One sorted feature list per held sample, aligned with the sample list.
    PerSample(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientHolding {
    samples: Vec<usize>,
    held: HeldFeatures,
    features: Vec<usize>,
}

impl ClientHolding {
    pub fn new(samples: Vec<usize>, held: HeldFeatures) -> Result<Self> {
        if samples.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config("client sample indices must be strictly increasing"));
        }
        let features = match &held {
            HeldFeatures::Rectangular(f) => {
                if f.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(config("client feature indices must be strictly increasing"));
                }
                f.clone()
            }
            HeldFeatures::PerSample(lists) => {
                if lists.len() != samples.len() {
                    return Err(config("per-sample feature lists must align with samples"));
                }
                if lists.iter().any(|f| f.windows(2).any(|w| w[0] >= w[1])) {
                    return Err(config("client feature indices must be strictly increasing"));
                }
                let mut all: Vec<usize> = lists.iter().flatten().copied().collect();
                all.sort_unstable();
                all.dedup();
                all
            }
        };
        Ok(Self { samples, held, features })
    }

    /// Samples on this client (sorted).
    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    /// Union of features over all held samples (sorted).
    pub fn features(&self) -> &[usize] {
        &self.features
    }

    /// Features held for the sample at local position `pos`.
    pub fn features_for(&self, pos: usize) -> &[usize] {
        match &self.held {
            HeldFeatures::Rectangular(f) => f,
            HeldFeatures::PerSample(lists) => &lists[pos],
        }
    }

    pub fn is_rectangular(&self) -> bool {
        match &self.held {
            HeldFeatures::Rectangular(_) => true,
            HeldFeatures::PerSample(lists) => lists.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// Local position of a global sample index.
    pub fn sample_position(&self, sample: usize) -> Option<usize> {
        self.samples.binary_search(&sample).ok()
    }

    /// Local position of a global feature index within [`Self::features`].
    pub fn feature_position(&self, feature: usize) -> Option<usize> {
        self.features.binary_search(&feature).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    scheme: Scheme,
    sample_groups: usize,
    feature_groups: usize,
    n_samples: usize,
    n_features: usize,
    clients: Vec<ClientHolding>,
    sample_holders: Vec<Vec<usize>>,
    feature_holders: Vec<Vec<usize>>,
}

impl Partition {
    pub fn from_holdings(
        scheme: Scheme,
        sample_groups: usize,
        feature_groups: usize,
        n_samples: usize,
        n_features: usize,
        clients: Vec<ClientHolding>,
    ) -> Result<Self> {
        let mut sample_holders = vec![Vec::new(); n_samples];
        let mut feature_holders = vec![Vec::new(); n_features];
        for (k, c) in clients.iter().enumerate() {
            for &i in &c.samples {
                if i >= n_samples {
                    return Err(config(format!("client {k} holds sample {i} beyond {n_samples}")));
                }
                sample_holders[i].push(k);
            }
            for &m in &c.features {
                if m >= n_features {
                    return Err(config(format!("client {k} holds feature {m} beyond {n_features}")));
                }
                feature_holders[m].push(k);
            }
        }
        Ok(Self {
            scheme,
            sample_groups,
            feature_groups,
            n_samples,
            n_features,
            clients,
            sample_holders,
            feature_holders,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// `K`, the number of sample groups.
    pub fn sample_groups(&self) -> usize {
        self.sample_groups
    }

    /// `Q`, the number of feature groups.
    pub fn feature_groups(&self) -> usize {
        self.feature_groups
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn client(&self, k: usize) -> &ClientHolding {
        &self.clients[k]
    }

    pub fn clients(&self) -> &[ClientHolding] {
        &self.clients
    }

    /// Clients that hold sample `i`.
    pub fn sample_holders(&self, i: usize) -> &[usize] {
        &self.sample_holders[i]
    }

    /// Clients that hold feature `m`.
    pub fn feature_holders(&self, m: usize) -> &[usize] {
        &self.feature_holders[m]
    }

    /// Client `k`'s slice of sample `i` with global feature indices, or `None`
    /// when the client does not hold the sample.
    pub fn local_slice<T: Scalar>(
        &self,
        ds: &SparseDataset<T>,
        k: usize,
        i: usize,
    ) -> Option<SparseVector<T>> {
        let c = &self.clients[k];
        let pos = c.sample_position(i)?;
        let keep = c.features_for(pos);
        let restricted = ds.sample(i).restrict_to(keep);
        let pairs = restricted.iter().map(|(p, v)| (keep[p], v));
        Some(SparseVector::from_pairs(pairs).expect("sorted"))
    }

    /// Checks that the partition matches the dataset shape and that every
    /// nonzero entry is held by exactly one client.
    pub fn validate<T: Scalar>(&self, ds: &SparseDataset<T>) -> Result<()> {
        if ds.n_samples() != self.n_samples {
            return Err(Error::Dimension { expected: self.n_samples, found: ds.n_samples() });
        }
        if ds.n_features() != self.n_features {
            return Err(Error::Dimension { expected: self.n_features, found: ds.n_features() });
        }
        for (i, x) in ds.samples().iter().enumerate() {
            let mut counts = vec![0u32; x.nnz()];
            for &k in &self.sample_holders[i] {
                let c = &self.clients[k];
                let pos = c.sample_position(i).expect("holder index is consistent");
                let held = c.features_for(pos);
                let mut h = 0;
                for (p, &m) in x.indices().iter().enumerate() {
                    while h < held.len() && held[h] < m {
                        h += 1;
                    }
                    if h < held.len() && held[h] == m {
                        counts[p] += 1;
                    }
                }
            }
            if let Some(p) = counts.iter().position(|&c| c != 1) {
                return Err(config(format!(
                    "nonzero ({i}, {}) is held by {} clients",
                    x.indices()[p],
                    counts[p]
                )));
            }
        }
        Ok(())
    }

    pub fn summary<T: Scalar>(&self, ds: &SparseDataset<T>) -> PartitionSummary {
        let clients = self
            .clients
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let nonzeros = c
                    .samples
                    .iter()
                    .enumerate()
                    .map(|(pos, &i)| ds.sample(i).restrict_to(c.features_for(pos)).nnz())
                    .sum();
                ClientSummary {
                    client: k,
                    samples: c.samples.len(),
                    features: c.features.len(),
                    nonzeros,
                }
            })
            .collect();
        PartitionSummary {
            scheme: self.scheme,
            sample_groups: self.sample_groups,
            feature_groups: self.feature_groups,
            n_clients: self.clients.len(),
            clients,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub client: usize,
    pub samples: usize,
    pub features: usize,
    pub nonzeros: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub scheme: Scheme,
    pub sample_groups: usize,
    pub feature_groups: usize,
    pub n_clients: usize,
    pub clients: Vec<ClientSummary>,
}

/// Splits `0..n` into `parts` contiguous ranges whose sizes differ by at most
/// one; earlier ranges take the remainder.
pub fn contiguous_groups(n: usize, parts: usize) -> Vec<Range<usize>> {
    let base = n / parts;
    let extra = n % parts;
    let mut start = 0;
    (0..parts)
        .map(|g| {
            let len = base + usize::from(g < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Pixel indices of image quadrant `q` (0: top-left, 1: top-right,
/// 2: bottom-left, 3: bottom-right) in row-major order.
pub fn quadrant_features(q: usize) -> Vec<usize> {
    let half = IMAGE_SIDE / 2;
    let (r0, c0) = ((q / 2) * half, (q % 2) * half);
    (r0..r0 + half)
        .flat_map(|r| (c0..c0 + half).map(move |c| r * IMAGE_SIDE + c))
        .collect()
}

/// Splits 28x28 images into four quadrants, one quadrant per quarter of the
/// clients. A constant bias feature (index 784) is appended to every sample and
/// held by the bottom-right quadrant's clients.
///
/// Client `c` serves quadrant `c / K` for sample group `c % K`, where
/// `K = total_clients / 4`.
pub fn partition_quadrant<T: Scalar>(
    ds: &SparseDataset<T>,
    total_clients: usize,
    bias_value: T,
) -> Result<(SparseDataset<T>, Partition)> {
    if ds.n_features() != IMAGE_PIXELS {
        return Err(config(format!(
            "quadrant partition needs {IMAGE_PIXELS} pixel features, found {}",
            ds.n_features()
        )));
    }
    if total_clients == 0 || total_clients % 4 != 0 {
        return Err(config("quadrant partition needs a client count divisible by 4"));
    }
    let k_groups = total_clients / 4;
    if k_groups > ds.n_samples() {
        return Err(config("more sample groups than samples"));
    }
    let augmented = ds.with_constant_feature(bias_value);
    let groups = contiguous_groups(ds.n_samples(), k_groups);
    let mut clients = Vec::with_capacity(total_clients);
    for c in 0..total_clients {
        let (q, g) = (c / k_groups, c % k_groups);
        let mut feats = quadrant_features(q);
        if q == 3 {
            feats.push(IMAGE_PIXELS);
        }
        clients.push(ClientHolding::new(groups[g].clone().collect(), HeldFeatures::Rectangular(feats))?);
    }
    let p = Partition::from_holdings(
        Scheme::Quadrant,
        k_groups,
        4,
        augmented.n_samples(),
        augmented.n_features(),
        clients,
    )?;
    Ok((augmented, p))
}

/// Samples go to `K` contiguous groups; within a group each of the `Q`
/// clients receives an even share of every sample's nonzero features. The
/// nonzero list is shuffled per sample and dealt round-robin, starting at
/// client `i mod Q` so the remainders rotate.
pub fn partition_nonzero_split<T: Scalar>(
    ds: &SparseDataset<T>,
    sample_groups: usize,
    feature_groups: usize,
    seed: u64,
) -> Result<Partition> {
    if sample_groups == 0 || feature_groups == 0 {
        return Err(config("sample and feature group counts must be positive"));
    }
    if sample_groups > ds.n_samples() {
        return Err(config(format!(
            "{sample_groups} sample groups but only {} samples",
            ds.n_samples()
        )));
    }
    let groups = contiguous_groups(ds.n_samples(), sample_groups);
    let mut clients = Vec::with_capacity(sample_groups * feature_groups);
    for range in &groups {
        let mut lists: Vec<Vec<Vec<usize>>> = vec![Vec::with_capacity(range.len()); feature_groups];
        for i in range.clone() {
            let mut nz = ds.sample(i).indices().to_vec();
            nz.shuffle(&mut rng::stream(seed, tags::NONZERO_SPLIT, &[i as u64]));
            let mut dealt = vec![Vec::new(); feature_groups];
            for (j, m) in nz.into_iter().enumerate() {
                dealt[(j + i) % feature_groups].push(m);
            }
            for (q, mut f) in dealt.into_iter().enumerate() {
                f.sort_unstable();
                lists[q].push(f);
            }
        }
        for per_sample in lists {
            clients.push(ClientHolding::new(range.clone().collect(), HeldFeatures::PerSample(per_sample))?);
        }
    }
    Partition::from_holdings(
        Scheme::NonzeroSplit,
        sample_groups,
        feature_groups,
        ds.n_samples(),
        ds.n_features(),
        clients,
    )
}

/// Every client holds all features of a contiguous block of samples.
pub fn partition_horizontal<T: Scalar>(ds: &SparseDataset<T>, clients: usize) -> Result<Partition> {
    if clients == 0 || clients > ds.n_samples() {
        return Err(config(format!(
            "horizontal partition needs 1..={} clients, got {clients}",
            ds.n_samples()
        )));
    }
    let all: Vec<usize> = (0..ds.n_features()).collect();
    let holdings = contiguous_groups(ds.n_samples(), clients)
        .into_iter()
        .map(|r| ClientHolding::new(r.collect(), HeldFeatures::Rectangular(all.clone())))
        .collect::<Result<Vec<_>>>()?;
    Partition::from_holdings(Scheme::Horizontal, clients, 1, ds.n_samples(), ds.n_features(), holdings)
}

/// Every client holds all samples and a contiguous block of a (optionally
/// seeded-shuffled) feature order. `seed = None` keeps the identity order.
pub fn partition_vertical<T: Scalar>(
    ds: &SparseDataset<T>,
    clients: usize,
    seed: Option<u64>,
) -> Result<Partition> {
    if clients == 0 || clients > ds.n_features() {
        return Err(config(format!(
            "vertical partition needs 1..={} clients, got {clients}",
            ds.n_features()
        )));
    }
    let mut order: Vec<usize> = (0..ds.n_features()).collect();
    if let Some(s) = seed {
        order.shuffle(&mut rng::stream(s, tags::VERTICAL, &[]));
    }
    let samples: Vec<usize> = (0..ds.n_samples()).collect();
    let holdings = contiguous_groups(order.len(), clients)
        .into_iter()
        .map(|r| {
            let mut f = order[r].to_vec();
            f.sort_unstable();
            ClientHolding::new(samples.clone(), HeldFeatures::Rectangular(f))
        })
        .collect::<Result<Vec<_>>>()?;
    Partition::from_holdings(Scheme::Vertical, 1, clients, ds.n_samples(), ds.n_features(), holdings)
}
