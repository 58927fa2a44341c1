//! Protocol-driven template / training / test splits.

use std::collections::BTreeMap;

use rand::seq::index;

use super::{Dataset, OnlineSignature};
use crate::{seed, Error, Result};

/// Which genuine samples templates may be drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    /// The ten lowest-indexed genuine samples.
    First10,
    All,
}

impl Pool {
    fn size(self, available: usize) -> usize {
        match self {
            Pool::First10 => available.min(10),
            Pool::All => available,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitPlan {
    pub n_templates: usize,
    pub pool: Pool,
    /// Also draw `n_templates` skilled forgeries per client for training
    /// (fewer if the client has fewer).
    pub train_forgeries: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClientSplit {
    /// Enrolled genuine samples, ordered by sample index.
    pub templates: Vec<OnlineSignature>,
    pub train_forgeries: Vec<OnlineSignature>,
    /// Everything else, genuine first, each signature carrying its label.
    pub test: Vec<OnlineSignature>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub clients: BTreeMap<String, ClientSplit>,
    pub seed: u64,
}

impl Split {
    pub fn test_count(&self) -> usize {
        self.clients.values().map(|c| c.test.len()).sum()
    }
}

fn choose(rng: &mut impl rand::Rng, len: usize, n: usize) -> Vec<usize> {
    let mut picked = index::sample(rng, len, n).into_vec();
    picked.sort_unstable();
    picked
}

/// Draws templates uniformly without replacement from each client's pool.
/// Deterministic in `seed`.
pub fn split_templates(dataset: &Dataset, plan: SplitPlan, seed: u64) -> Result<Split> {
    if plan.n_templates == 0 {
        return Err(Error::InvalidArgument("n_templates must be positive".into()));
    }
    let mut rng = seed::rng(seed);
    let mut clients = BTreeMap::new();
    for (id, samples) in dataset.clients() {
        let pool = plan.pool.size(samples.genuine.len());
        if plan.n_templates > pool {
            return Err(Error::InvalidArgument(format!(
                "client {id}: {} templates requested from a pool of {pool}",
                plan.n_templates
            )));
        }
        let chosen = choose(&mut rng, pool, plan.n_templates);
        let mut split = ClientSplit::default();
        for (i, s) in samples.genuine.iter().enumerate() {
            if chosen.binary_search(&i).is_ok() {
                split.templates.push(s.clone());
            } else {
                split.test.push(s.clone());
            }
        }
        let forged = if plan.train_forgeries {
            let n = plan.n_templates.min(samples.forgeries.len());
            choose(&mut rng, samples.forgeries.len(), n)
        } else {
            Vec::new()
        };
        for (i, s) in samples.forgeries.iter().enumerate() {
            if forged.binary_search(&i).is_ok() {
                split.train_forgeries.push(s.clone());
            } else {
                split.test.push(s.clone());
            }
        }
        clients.insert(id.clone(), split);
    }
    Ok(Split { clients, seed })
}
