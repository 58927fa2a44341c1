//! Synthetic signature datasets for end-to-end tests without real data.
//!
//! Each client owns a smooth prototype curve (a sum of 3 to 5 sinusoids per
//! axis sampled at 80 to 200 points). Genuine samples are the prototype plus a
//! smooth random deformation of amplitude `noise` and white noise of
//! `noise / 10`, then a random global scale in [0.85, 1.15] and rotation in
//! ±0.2 rad about the origin. A skilled forgery of client `i` blends client
//! `i + 1`'s prototype halfway toward client `i`'s before the same jitter and
//! transform.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, OnlineSignature, PenPoint};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_clients: usize,
    pub genuine_per_client: usize,
    pub forgeries_per_client: usize,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    amp: f64,
    freq: f64,
    phase: f64,
}

#[derive(Debug, Clone)]
struct Curve {
    x: Vec<Wave>,
    y: Vec<Wave>,
}

impl Curve {
    fn random(
        rng: &mut impl Rng,
        components: std::ops::RangeInclusive<usize>,
        amp: (f64, f64),
        freq: (f64, f64),
    ) -> Self {
        let axis = |rng: &mut _| -> Vec<Wave> {
            let k = Rng::random_range(rng, components.clone());
            (0..k)
                .map(|_| Wave {
                    amp: Rng::random_range(rng, amp.0..amp.1),
                    freq: Rng::random_range(rng, freq.0..freq.1),
                    phase: Rng::random_range(rng, 0.0..TAU),
                })
                .collect()
        };
        let x = axis(rng);
        let y = axis(rng);
        Curve { x, y }
    }

    fn eval(&self, t: f64) -> [f64; 2] {
        let f = |ws: &[Wave]| ws.iter().map(|w| w.amp * (TAU * w.freq * t + w.phase).sin()).sum();
        [f(&self.x), f(&self.y)]
    }
}

struct Prototype {
    curve: Curve,
    points: usize,
}

fn render(rng: &mut impl Rng, base: impl Fn(f64) -> [f64; 2], points: usize, noise: f64) -> Result<Vec<PenPoint>> {
    let deform = Curve::random(rng, 2..=2, (0.0, 1.0), (0.3, 1.5));
    let white = Normal::new(0.0, noise / 10.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let scale = rng.random_range(0.85..1.15);
    let (sin, cos) = rng.random_range(-0.2f64..0.2).sin_cos();
    Ok((0..points)
        .map(|j| {
            let t = j as f64 / (points - 1) as f64;
            let p = base(t);
            let d = deform.eval(t);
            let x = p[0] + noise * d[0] + white.sample(rng);
            let y = p[1] + noise * d[1] + white.sample(rng);
            let mut pt = PenPoint::new(scale * (cos * x - sin * y), scale * (sin * x + cos * y));
            pt.t = Some(10 * j as i64);
            pt
        })
        .collect())
}

/// Deterministic in `config.seed`.
pub fn generate_synthetic_dataset(config: &SynthConfig) -> Result<Dataset> {
    if config.n_clients < 2 {
        return Err(Error::InvalidArgument("need at least 2 clients".into()));
    }
    if config.genuine_per_client == 0 {
        return Err(Error::InvalidArgument(
            "need at least 1 genuine sample per client".into(),
        ));
    }
    if !(config.noise.is_finite() && config.noise >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid noise {}", config.noise)));
    }
    let mut rng = seed::rng(config.seed);
    let prototypes: Vec<Prototype> = (0..config.n_clients)
        .map(|_| Prototype {
            curve: Curve::random(&mut rng, 3..=5, (0.3, 1.0), (0.5, 3.0)),
            points: rng.random_range(80..=200),
        })
        .collect();

    let mut signatures = Vec::new();
    for (i, proto) in prototypes.iter().enumerate() {
        let id = format!("{:03}", i + 1);
        for s in 0..config.genuine_per_client {
            let points = render(&mut rng, |t| proto.curve.eval(t), proto.points, config.noise)?;
            signatures.push(OnlineSignature::from_points(points).with_identity(&id, Label::Genuine, s as u32 + 1));
        }
        let source = &prototypes[(i + 1) % prototypes.len()].curve;
        for s in 0..config.forgeries_per_client {
            let blend = |t: f64| {
                let (a, b) = (source.eval(t), proto.curve.eval(t));
                [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
            };
            let points = render(&mut rng, blend, proto.points, config.noise)?;
            let index = (config.genuine_per_client + s) as u32 + 1;
            signatures.push(OnlineSignature::from_points(points).with_identity(&id, Label::SkilledForgery, index));
        }
    }
    Dataset::from_signatures(signatures)
}
