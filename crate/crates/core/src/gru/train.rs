//! Training loop: per-epoch center refresh, triplet sampling and Adamax
//! updates over mini-batches.

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{embed, total_loss, Adamax, GruModel, ModelDims, Triplet};
use crate::data::{Dataset, Split};
use crate::features::{featurize, FeatureConfig, FeatureSequence};
use crate::{par, seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Triplet margin `C`.
    pub margin: f64,
    pub lambda_center: f64,
    /// Weight of the squared Frobenius norm of the FC weight.
    pub lambda_decay: f64,
    pub learning_rate: f64,
    pub clip: f64,
    pub epochs: usize,
    pub triplets_per_client_per_epoch: usize,
    /// Probability that a negative is another client's genuine sample rather
    /// than a skilled forgery of the anchor's client.
    pub random_negative_prob: f64,
    pub batch_size: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub embedding: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 1.0,
            lambda_center: 0.5,
            lambda_decay: 1e-4,
            learning_rate: 0.01,
            clip: 1.0,
            epochs: 400,
            triplets_per_client_per_epoch: 20,
            random_negative_prob: 0.2,
            batch_size: 16,
            hidden1: 128,
            hidden2: 128,
            embedding: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("margin", self.margin),
            ("learning_rate", self.learning_rate),
            ("clip", self.clip),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("lambda_center", self.lambda_center),
            ("lambda_decay", self.lambda_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.random_negative_prob) {
            return Err(Error::InvalidArgument(format!(
                "random_negative_prob must lie in [0, 1], got {}",
                self.random_negative_prob
            )));
        }
        let counts = [
            ("triplets_per_client_per_epoch", self.triplets_per_client_per_epoch),
            ("batch_size", self.batch_size),
            ("hidden1", self.hidden1),
            ("hidden2", self.hidden2),
            ("embedding", self.embedding),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn dims(&self, input: usize) -> ModelDims {
        ModelDims {
            input,
            hidden1: self.hidden1,
            hidden2: self.hidden2,
            embedding: self.embedding,
        }
    }
}

/// Featurized training samples of one client.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingClient {
    pub genuine: Vec<FeatureSequence>,
    pub forgeries: Vec<FeatureSequence>,
}

/// Clients available for training, keyed and iterated in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub clients: BTreeMap<String, TrainingClient>,
}

fn featurize_all(sigs: &[crate::data::OnlineSignature], config: &FeatureConfig) -> Result<Vec<FeatureSequence>> {
    par::try_map(sigs, |s| featurize(s, config))
}

impl TrainingSet {
    /// Templates and training forgeries of every client in `split`.
    pub fn from_split(split: &Split, config: &FeatureConfig) -> Result<Self> {
        let mut clients = BTreeMap::new();
        for (id, c) in &split.clients {
            clients.insert(
                id.clone(),
                TrainingClient {
                    genuine: featurize_all(&c.templates, config)?,
                    forgeries: featurize_all(&c.train_forgeries, config)?,
                },
            );
        }
        Ok(TrainingSet { clients })
    }

    /// Every sample of `dataset`.
    pub fn from_dataset(dataset: &Dataset, config: &FeatureConfig) -> Result<Self> {
        let mut clients = BTreeMap::new();
        for (id, c) in dataset.clients() {
            clients.insert(
                id.clone(),
                TrainingClient {
                    genuine: featurize_all(&c.genuine, config)?,
                    forgeries: featurize_all(&c.forgeries, config)?,
                },
            );
        }
        Ok(TrainingSet { clients })
    }

    /// Adds clients of `other`; ids must not collide.
    pub fn merge(&mut self, other: TrainingSet) -> Result<()> {
        for (id, c) in other.clients {
            if self.clients.contains_key(&id) {
                return Err(Error::Dataset(format!("client {id} appears in two training sources")));
            }
            self.clients.insert(id, c);
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.clients
            .values()
            .flat_map(|c| c.genuine.iter().chain(&c.forgeries))
            .map(FeatureSequence::dim)
            .next()
    }
}

/// Mean embedding of each client's genuine training samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientCenters(BTreeMap<String, Array1<f64>>);

impl ClientCenters {
    pub fn get(&self, client: &str) -> Option<&Array1<f64>> {
        self.0.get(client)
    }

    pub fn insert(&mut self, client: String, center: Array1<f64>) {
        self.0.insert(client, center);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array1<f64>)> {
        self.0.iter()
    }
}

pub fn update_centers(model: &GruModel, set: &TrainingSet) -> Result<ClientCenters> {
    let jobs: Vec<(&str, &FeatureSequence)> = set
        .clients
        .iter()
        .flat_map(|(id, c)| c.genuine.iter().map(move |s| (id.as_str(), s)))
        .collect();
    let embeddings = par::try_map(&jobs, |(_, s)| embed(model, s))?;
    let mut sums: BTreeMap<&str, (Array1<f64>, usize)> = BTreeMap::new();
    for ((id, _), e) in jobs.iter().zip(embeddings) {
        let entry = sums.entry(id).or_insert_with(|| (Array1::zeros(e.len()), 0));
        entry.0 += &e;
        entry.1 += 1;
    }
    let mut centers = ClientCenters::default();
    for id in set.clients.keys() {
        let (sum, n) = sums
            .remove(id.as_str())
            .ok_or_else(|| Error::Dataset(format!("client {id} has no genuine training samples")))?;
        centers.insert(id.clone(), sum / n as f64);
    }
    Ok(centers)
}

/// Draws `count_per_client` triplets per client in id order.
///
/// Anchor and positive are two distinct genuine samples drawn uniformly. With
/// probability `1 - random_negative_prob` the negative is a uniform skilled
/// training forgery of the same client, otherwise a uniform genuine sample of
/// a uniformly chosen other client.
pub fn sample_triplets<'a>(
    set: &'a TrainingSet,
    count_per_client: usize,
    random_negative_prob: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Triplet<'a>>> {
    if !(0.0..=1.0).contains(&random_negative_prob) {
        return Err(Error::InvalidArgument("random_negative_prob outside [0, 1]".into()));
    }
    let ids: Vec<&String> = set.clients.keys().collect();
    for (id, c) in &set.clients {
        if c.genuine.len() < 2 {
            return Err(Error::Dataset(format!(
                "client {id} needs at least 2 genuine training samples, has {}",
                c.genuine.len()
            )));
        }
        if random_negative_prob < 1.0 && c.forgeries.is_empty() {
            return Err(Error::Dataset(format!(
                "client {id} has no training forgeries; use random negatives only"
            )));
        }
    }
    if random_negative_prob > 0.0 && ids.len() < 2 {
        return Err(Error::Dataset("random negatives need at least 2 clients".into()));
    }

    let mut out = Vec::with_capacity(ids.len() * count_per_client);
    for (pos, id) in ids.iter().enumerate() {
        let client = &set.clients[*id];
        for _ in 0..count_per_client {
            let pair = index::sample(rng, client.genuine.len(), 2);
            let (anchor, positive) = (&client.genuine[pair.index(0)], &client.genuine[pair.index(1)]);
            let negative = if rng.random::<f64>() < random_negative_prob {
                let mut other = rng.random_range(0..ids.len() - 1);
                if other >= pos {
                    other += 1;
                }
                let genuine = &set.clients[ids[other]].genuine;
                &genuine[rng.random_range(0..genuine.len())]
            } else {
                &client.forgeries[rng.random_range(0..client.forgeries.len())]
            };
            out.push(Triplet {
                client: id.as_str(),
                anchor,
                positive,
                negative,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: GruModel,
    /// Mean loss per triplet of each epoch.
    pub loss_history: Vec<f64>,
}

/// Trains a freshly initialized model on `set`. Deterministic in
/// `config.seed`; results do not depend on the thread count.
pub fn train(set: &TrainingSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let input = set
        .feature_dim()
        .ok_or_else(|| Error::Dataset("empty training set".into()))?;
    let mut model = GruModel::init(config.dims(input), seed::derive(config.seed, 0));
    let mut rng = seed::rng(seed::derive(config.seed, 1));
    let mut optimizer = Adamax::new(model.num_params(), config.learning_rate, config.clip);
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let centers = update_centers(&model, set)?;
        let mut triplets = sample_triplets(
            set,
            config.triplets_per_client_per_epoch,
            config.random_negative_prob,
            &mut rng,
        )?;
        triplets.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in triplets.chunks(config.batch_size) {
            let (loss, grads) = total_loss(batch, &model, &centers, config)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss {loss} at epoch {epoch}")));
            }
            epoch_loss += loss;
            optimizer.step(&mut model, &grads)?;
        }
        let mean = epoch_loss / triplets.len() as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.5}");
        loss_history.push(mean);
    }
    Ok(TrainOutcome { model, loss_history })
}
