//! Per-client views of the dataset in local feature coordinates.

use crate::data::{SparseDataset, SparseVector};
use crate::partition::Partition;
use crate::Scalar;

#[derive(Debug, Clone)]
pub struct ClientData<T> {
    /// Global sample indices, sorted.
    pub samples: Vec<usize>,
    /// Global feature indices, sorted.
    pub features: Vec<usize>,
    /// `x_{k,i}` for each held sample, indexed by position in `features`.
    pub rows: Vec<SparseVector<T>>,
    pub nnz: usize,
}

#[derive(Debug, Clone)]
pub struct FederatedLayout<T> {
    pub clients: Vec<ClientData<T>>,
    /// `(client, position)` pairs holding each sample.
    pub sample_holders: Vec<Vec<(usize, usize)>>,
    /// `(client, position)` pairs holding each feature.
    pub feature_holders: Vec<Vec<(usize, usize)>>,
    /// Global `‖xᵢ‖²`.
    pub norm_sq: Vec<T>,
}

impl<T: Scalar> FederatedLayout<T> {
    pub fn new(ds: &SparseDataset<T>, partition: &Partition) -> Self {
        let mut sample_holders = vec![Vec::new(); ds.n_samples()];
        let mut feature_holders = vec![Vec::new(); ds.n_features()];
        let clients = partition
            .clients()
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let features = c.features().to_vec();
                for (f, &m) in features.iter().enumerate() {
                    feature_holders[m].push((k, f));
                }
                let rows: Vec<SparseVector<T>> = c
                    .samples()
                    .iter()
                    .enumerate()
                    .map(|(pos, &i)| {
                        sample_holders[i].push((k, pos));
                        let keep = c.features_for(pos);
                        let local = ds.sample(i).restrict_to(keep);
                        if keep.len() == features.len() {
                            local
                        } else {
                            let pairs = local.iter().map(|(p, v)| {
                                (c.feature_position(keep[p]).expect("held feature"), v)
                            });
                            SparseVector::from_pairs(pairs).expect("sorted")
                        }
                    })
                    .collect();
                let nnz = rows.iter().map(SparseVector::nnz).sum();
                ClientData { samples: c.samples().to_vec(), features, rows, nnz }
            })
            .collect();
        let norm_sq = ds.samples().iter().map(SparseVector::norm_sq).collect();
        Self { clients, sample_holders, feature_holders, norm_sq }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition_nonzero_split;

    #[test]
    fn local_rows_reassemble_samples() {
        let ds = crate::data::synth_dataset::<f64>(3, 30, 8, 0.1, 0.0).unwrap();
        let p = partition_nonzero_split(&ds, 2, 3, 11).unwrap();
        let lay = FederatedLayout::new(&ds, &p);
        let w: Vec<f64> = (0..8).map(|m| 0.1 * m as f64 - 0.3).collect();
        for i in 0..30 {
            let total: f64 = lay.sample_holders[i]
                .iter()
                .map(|&(k, pos)| {
                    let c = &lay.clients[k];
                    let wk: Vec<f64> = c.features.iter().map(|&m| w[m]).collect();
                    c.rows[pos].dot(&wk)
                })
                .sum();
            assert!((total - ds.sample(i).dot(&w)).abs() < 1e-12);
        }
    }
}
