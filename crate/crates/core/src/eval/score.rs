//! Scores a probe relative to the spread of its client's templates:
//!
//! ```text
//! score = (N - 1) / 2 * Σ_n d(probe, T_n) / Σ_{n<m} d(T_n, T_m)
//! ```
//!
//! The ratio form makes the score independent of the global distance scale
//! and of per-client variability, so one threshold serves every client.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::{Label, OnlineSignature};
use crate::dtw::{dtw_distance, DtwConfig};
use crate::features::{featurize, FeatureConfig, FeatureSequence};
use crate::gru::{embed, euclidean, GruModel};
use crate::{par, Error, Result};

/// Score of one probe against its claimed client's templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationScore {
    pub client_id: String,
    pub sample_index: u32,
    pub score: f64,
    pub truth: Label,
    /// The templates had zero pairwise spread and `score` is the raw mean
    /// probe-to-template distance.
    pub degenerate: bool,
}

/// Ratio score from `N` probe-to-template distances and the `N(N-1)/2`
/// pairwise template distances.
pub fn template_score(d_test: &[f64], d_pairwise: &[f64]) -> Result<f64> {
    let n = d_test.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 templates, got {n}")));
    }
    if d_pairwise.len() != n * (n - 1) / 2 {
        return Err(Error::DimensionMismatch {
            expected: n * (n - 1) / 2,
            found: d_pairwise.len(),
        });
    }
    if d_test.iter().chain(d_pairwise).any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::InvalidArgument(
            "distances must be finite and non-negative".into(),
        ));
    }
    let probe_sum: f64 = d_test.iter().sum();
    let pair_sum: f64 = d_pairwise.iter().sum();
    if pair_sum <= 0.0 {
        return Err(Error::ZeroPairwiseSum {
            mean_distance: probe_sum / n as f64,
        });
    }
    Ok((n - 1) as f64 / 2.0 * probe_sum / pair_sum)
}

/// Distance used between two signatures.
#[derive(Debug, Clone, Copy)]
pub enum Backend<'a> {
    /// DTW between feature sequences.
    Dtw(DtwConfig),
    /// Euclidean distance between embeddings.
    Rnn(&'a GruModel),
}

/// A signature prepared for distance computations.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Sequence(FeatureSequence),
    Embedding(Array1<f64>),
}

/// Templates of one client with their pairwise distances, reusable across probes.
#[derive(Debug, Clone, PartialEq)]
pub struct Enrollment {
    pub client_id: String,
    pub templates: Vec<Representation>,
    /// Upper triangle in row order: (0,1), (0,2), ..., (N-2,N-1).
    pub pairwise: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Verifier<'a> {
    pub backend: Backend<'a>,
    pub features: FeatureConfig,
}

impl<'a> Verifier<'a> {
    pub fn new(backend: Backend<'a>, features: FeatureConfig) -> Self {
        Verifier { backend, features }
    }

    pub fn represent(&self, sig: &OnlineSignature) -> Result<Representation> {
        let seq = featurize(sig, &self.features)?;
        Ok(match self.backend {
            Backend::Dtw(_) => Representation::Sequence(seq),
            Backend::Rnn(model) => Representation::Embedding(embed(model, &seq)?),
        })
    }

    pub fn distance(&self, a: &Representation, b: &Representation) -> Result<f64> {
        match (self.backend, a, b) {
            (Backend::Dtw(cfg), Representation::Sequence(a), Representation::Sequence(b)) => dtw_distance(a, b, &cfg),
            (Backend::Rnn(_), Representation::Embedding(a), Representation::Embedding(b)) => {
                if a.len() != b.len() {
                    return Err(Error::DimensionMismatch {
                        expected: a.len(),
                        found: b.len(),
                    });
                }
                Ok(euclidean(a, b))
            }
            _ => Err(Error::InvalidArgument(
                "representation does not match the backend".into(),
            )),
        }
    }

    /// Prepares `templates`; pairwise distances are computed in parallel.
    pub fn enroll(&self, templates: &[OnlineSignature]) -> Result<Enrollment> {
        if templates.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 templates, got {}",
                templates.len()
            )));
        }
        let reps = par::try_map(templates, |t| self.represent(t))?;
        let pairs: Vec<(usize, usize)> = (0..reps.len())
            .flat_map(|i| (i + 1..reps.len()).map(move |j| (i, j)))
            .collect();
        let pairwise = par::try_map(&pairs, |&(i, j)| self.distance(&reps[i], &reps[j]))?;
        Ok(Enrollment {
            client_id: templates[0].client_id.clone(),
            templates: reps,
            pairwise,
        })
    }

    pub fn score_representation(&self, enrollment: &Enrollment, probe: &Representation) -> Result<(f64, bool)> {
        let d_test = enrollment
            .templates
            .iter()
            .map(|t| self.distance(probe, t))
            .collect::<Result<Vec<_>>>()?;
        match template_score(&d_test, &enrollment.pairwise) {
            Ok(s) => Ok((s, false)),
            Err(Error::ZeroPairwiseSum { mean_distance }) => {
                log::warn!(
                    "client {}: templates have zero pairwise distance, falling back to mean distance",
                    enrollment.client_id
                );
                Ok((mean_distance, true))
            }
            Err(e) => Err(e),
        }
    }

    pub fn score(&self, enrollment: &Enrollment, probe: &OnlineSignature) -> Result<VerificationScore> {
        let (score, degenerate) = self.score_representation(enrollment, &self.represent(probe)?)?;
        Ok(VerificationScore {
            client_id: enrollment.client_id.clone(),
            sample_index: probe.sample_index,
            score,
            truth: probe.label,
            degenerate,
        })
    }
}

/// Featurizes `probe` and `templates` and scores the probe.
pub fn score_probe(
    probe: &OnlineSignature,
    templates: &[OnlineSignature],
    backend: Backend<'_>,
    features: &FeatureConfig,
) -> Result<VerificationScore> {
    features.validate()?;
    let verifier = Verifier::new(backend, *features);
    verifier.score(&verifier.enroll(templates)?, probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PenPoint;
    use crate::gru::ModelDims;

    #[test]
    fn ratio_examples() {
        assert_eq!(template_score(&[1.0, 3.0], &[2.0]).unwrap(), 1.0);
        assert_eq!(template_score(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(template_score(&[0.5, 0.5], &[2.0]).unwrap(), 0.25);
    }

    #[test]
    fn ratio_errors() {
        assert!(template_score(&[1.0], &[]).is_err());
        assert!(template_score(&[1.0, 2.0], &[1.0, 1.0]).is_err());
        match template_score(&[1.0, 3.0], &[0.0]) {
            Err(Error::ZeroPairwiseSum { mean_distance }) => assert_eq!(mean_distance, 2.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ratio_is_scale_free() {
        let d = [0.3, 1.7, 2.2, 0.9];
        let p = [1.0, 0.4, 2.5, 0.8, 1.1, 0.6];
        let base = template_score(&d, &p).unwrap();
        for k in [0.5, 4.0, 1024.0] {
            let ds: Vec<f64> = d.iter().map(|v| v * k).collect();
            let ps: Vec<f64> = p.iter().map(|v| v * k).collect();
            let s = template_score(&ds, &ps).unwrap();
            assert!((s - base).abs() <= 1e-15 * base, "{s} vs {base}");
        }
    }

    fn curve(phase: f64, n: usize, client: &str, idx: u32) -> OnlineSignature {
        let pts = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * 6.0;
                PenPoint::new((t + phase).sin() * 2.0 + t, (1.7 * t - phase).cos())
            })
            .collect();
        OnlineSignature::from_points(pts).with_identity(client, Label::Genuine, idx)
    }

    #[test]
    fn probe_equal_to_template() {
        let templates: Vec<_> = (0..3).map(|i| curve(i as f64 * 0.3, 40, "a", i)).collect();
        let cfg = FeatureConfig::lnps(2, 2);
        let verifier = Verifier::new(Backend::Dtw(DtwConfig::default()), cfg);
        let enrollment = verifier.enroll(&templates).unwrap();
        let probe = verifier.represent(&templates[1]).unwrap();
        assert_eq!(verifier.distance(&probe, &enrollment.templates[1]).unwrap(), 0.0);
        let s = score_probe(&templates[1], &templates, Backend::Dtw(DtwConfig::default()), &cfg).unwrap();
        assert!(s.score > 0.0 && !s.degenerate);
    }

    #[test]
    fn zero_model_takes_fallback_path() {
        let cfg = FeatureConfig::lnps(2, 2);
        let model = GruModel::zeros(ModelDims {
            input: cfg.dim(),
            hidden1: 3,
            hidden2: 3,
            embedding: 2,
        });
        let templates: Vec<_> = (0..3).map(|i| curve(i as f64, 30, "a", i)).collect();
        let s = score_probe(&curve(5.0, 25, "a", 9), &templates, Backend::Rnn(&model), &cfg).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.score, 0.0);
    }

    #[test]
    fn composed_from_distances() {
        let cfg = FeatureConfig::lnps(3, 2);
        let verifier = Verifier::new(Backend::Dtw(DtwConfig::default()), cfg);
        let templates: Vec<_> = (0..3).map(|i| curve(i as f64 * 0.5, 35, "a", i)).collect();
        let probe = curve(2.0, 33, "a", 7);
        let reps: Vec<_> = templates.iter().map(|t| verifier.represent(t).unwrap()).collect();
        let p = verifier.represent(&probe).unwrap();
        let d: Vec<f64> = reps.iter().map(|r| verifier.distance(&p, r).unwrap()).collect();
        let pw = [
            verifier.distance(&reps[0], &reps[1]).unwrap(),
            verifier.distance(&reps[0], &reps[2]).unwrap(),
            verifier.distance(&reps[1], &reps[2]).unwrap(),
        ];
        let want = template_score(&d, &pw).unwrap();
        let got = score_probe(&probe, &templates, Backend::Dtw(DtwConfig::default()), &cfg).unwrap();
        assert_eq!(got.score, want);
    }

    #[test]
    fn perturbing_a_matching_template_does_not_lower_score() {
        let cfg = FeatureConfig::lnps(2, 2);
        let backend = Backend::Dtw(DtwConfig::default());
        let probe = curve(0.0, 40, "a", 9);
        let mut templates: Vec<_> = (1..4).map(|i| curve(i as f64 * 0.4, 40, "a", i)).collect();
        templates.push(probe.clone());
        let with_copy = score_probe(&probe, &templates, backend, &cfg).unwrap().score;
        let mut perturbed = templates.clone();
        perturbed[3] = curve(0.15, 40, "a", 4);
        let without = score_probe(&probe, &perturbed, backend, &cfg).unwrap().score;
        assert!(with_copy <= without, "{with_copy} > {without}");
    }
}
