//! Signature files, labelled datasets and template/test splits.

mod csv;
mod load;
mod split;
mod svc;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use self::csv::{parse_generic_csv, write_generic_csv};
pub use self::load::{load_dataset, write_dataset, ManifestEntry, Naming, MANIFEST_FILE};
pub use self::split::{split_templates, ClientSplit, Pool, Split, SplitPlan};
pub use self::svc::{parse_svc_file, write_svc_file};

/// One sampled pen position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenPoint {
    pub x: f64,
    pub y: f64,
    /// Timestamp in milliseconds, when the source provides one.
    pub t: Option<i64>,
    pub pen_down: bool,
}

impl PenPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PenPoint {
            x,
            y,
            t: None,
            pen_down: true,
        }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Genuine,
    SkilledForgery,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Genuine => "genuine",
            Label::SkilledForgery => "skilled_forgery",
        })
    }
}

/// A captured online signature. Points are never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineSignature {
    pub points: Vec<PenPoint>,
    pub client_id: String,
    pub label: Label,
    pub sample_index: u32,
}

impl OnlineSignature {
    /// Unlabelled signature (client "", genuine, index 0) as produced by the parsers.
    pub fn from_points(points: Vec<PenPoint>) -> Self {
        OnlineSignature {
            points,
            client_id: String::new(),
            label: Label::Genuine,
            sample_index: 0,
        }
    }

    pub fn with_identity(mut self, client_id: impl Into<String>, label: Label, sample_index: u32) -> Self {
        self.client_id = client_id.into();
        self.label = label;
        self.sample_index = sample_index;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The x-y trajectory; the only channels used downstream.
    pub fn xy(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(PenPoint::xy).collect()
    }

    /// Copy with every coordinate scaled by `s` about the origin.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.x *= s;
            p.y *= s;
        }
        out
    }
}

/// Samples of one client; both lists ordered by `sample_index`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientSamples {
    pub genuine: Vec<OnlineSignature>,
    pub forgeries: Vec<OnlineSignature>,
}

/// Immutable labelled collection of clients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    clients: BTreeMap<String, ClientSamples>,
}

impl Dataset {
    /// Builds a dataset, checking that keys match signature identities and
    /// that every client has at least one genuine sample.
    pub fn new(clients: BTreeMap<String, ClientSamples>) -> crate::Result<Self> {
        use crate::Error;
        if clients.is_empty() {
            return Err(Error::Dataset("no clients".into()));
        }
        for (id, samples) in &clients {
            if samples.genuine.is_empty() {
                return Err(Error::Dataset(format!("client {id} has no genuine samples")));
            }
            let ok = samples
                .genuine
                .iter()
                .all(|s| &s.client_id == id && s.label == Label::Genuine)
                && samples
                    .forgeries
                    .iter()
                    .all(|s| &s.client_id == id && s.label == Label::SkilledForgery);
            if !ok {
                return Err(Error::Dataset(format!(
                    "client {id} holds a signature with mismatched identity or label"
                )));
            }
            if let Some(s) = samples
                .genuine
                .iter()
                .chain(&samples.forgeries)
                .find(|s| s.points.is_empty())
            {
                return Err(Error::Dataset(format!(
                    "client {id} sample {} has no points",
                    s.sample_index
                )));
            }
        }
        Ok(Dataset { clients })
    }

    /// Groups loose signatures by client, ordering each list by sample index.
    pub fn from_signatures(signatures: impl IntoIterator<Item = OnlineSignature>) -> crate::Result<Self> {
        let mut clients: BTreeMap<String, ClientSamples> = BTreeMap::new();
        for s in signatures {
            let entry = clients.entry(s.client_id.clone()).or_default();
            match s.label {
                Label::Genuine => entry.genuine.push(s),
                Label::SkilledForgery => entry.forgeries.push(s),
            }
        }
        for c in clients.values_mut() {
            c.genuine.sort_by_key(|s| s.sample_index);
            c.forgeries.sort_by_key(|s| s.sample_index);
        }
        Dataset::new(clients)
    }

    pub fn clients(&self) -> &BTreeMap<String, ClientSamples> {
        &self.clients
    }

    pub fn client(&self, id: &str) -> Option<&ClientSamples> {
        self.clients.get(id)
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn num_signatures(&self) -> usize {
        self.clients.values().map(|c| c.genuine.len() + c.forgeries.len()).sum()
    }

    pub fn signatures(&self) -> impl Iterator<Item = &OnlineSignature> {
        self.clients.values().flat_map(|c| c.genuine.iter().chain(&c.forgeries))
    }

    /// Keeps only the first `n` clients in key order.
    pub fn take_clients(&self, n: usize) -> Dataset {
        Dataset {
            clients: self
                .clients
                .iter()
                .take(n)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Copy with every client id prefixed, used to merge datasets without
    /// identity collisions.
    pub fn prefixed(&self, prefix: &str) -> Dataset {
        let clients = self
            .clients
            .iter()
            .map(|(id, c)| {
                let new_id = format!("{prefix}{id}");
                let relabel = |v: &Vec<OnlineSignature>| {
                    v.iter()
                        .map(|s| {
                            let mut s = s.clone();
                            s.client_id = new_id.clone();
                            s
                        })
                        .collect()
                };
                (
                    new_id.clone(),
                    ClientSamples {
                        genuine: relabel(&c.genuine),
                        forgeries: relabel(&c.forgeries),
                    },
                )
            })
            .collect();
        Dataset { clients }
    }
}

pub(crate) fn parse_f64(field: &str, line: usize) -> crate::Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| crate::Error::parse(line, format!("non-numeric field {field:?}")))?;
    if !v.is_finite() {
        return Err(crate::Error::parse(line, format!("non-finite field {field:?}")));
    }
    Ok(v)
}

pub(crate) fn parse_time(field: &str, line: usize) -> crate::Result<i64> {
    let f = field.trim();
    if let Ok(v) = f.parse::<i64>() {
        return Ok(v);
    }
    Ok(parse_f64(f, line)?.round() as i64)
}

pub(crate) fn warn_time_order(points: &[PenPoint]) {
    let mut last: Option<i64> = None;
    for (i, p) in points.iter().enumerate() {
        if let Some(t) = p.t {
            if let Some(prev) = last {
                if t < prev {
                    log::warn!("timestamp decreases at point {}", i + 1);
                }
            }
            last = Some(t);
        }
    }
}
