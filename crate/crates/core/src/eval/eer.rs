//! Pooled equal error rate under a single global threshold.
//!
//! A probe is accepted when its score is strictly below the threshold.
//! Candidate thresholds are every distinct score, the midpoints between
//! consecutive distinct scores, and one value above the maximum. Because
//! FAR − FRR is non-decreasing in the threshold, it changes sign exactly once
//! along the candidates; the EER is the linear interpolation of FAR and FRR
//! between the two candidates that bracket the sign change.

use serde::{Deserialize, Serialize};

use super::VerificationScore;
use crate::data::Label;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
    /// Every candidate threshold in increasing order.
    pub operating_points: Vec<OperatingPoint>,
}

impl EerResult {
    pub fn far_curve(&self) -> Vec<(f64, f64)> {
        self.operating_points.iter().map(|p| (p.threshold, p.far)).collect()
    }

    pub fn frr_curve(&self) -> Vec<(f64, f64)> {
        self.operating_points.iter().map(|p| (p.threshold, p.frr)).collect()
    }
}

pub fn compute_eer(scores: &[VerificationScore]) -> Result<EerResult> {
    let mut genuine: Vec<f64> = Vec::new();
    let mut forged: Vec<f64> = Vec::new();
    for s in scores {
        if !s.score.is_finite() {
            return Err(Error::NonFinite(format!("score of client {}", s.client_id)));
        }
        match s.truth {
            Label::Genuine => genuine.push(s.score),
            Label::SkilledForgery => forged.push(s.score),
        }
    }
    if genuine.is_empty() || forged.is_empty() {
        return Err(Error::InvalidArgument(
            "EER needs at least one genuine and one forgery score".into(),
        ));
    }
    genuine.sort_by(f64::total_cmp);
    forged.sort_by(f64::total_cmp);

    let mut distinct: Vec<f64> = genuine.iter().chain(&forged).copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    let mut thresholds = Vec::with_capacity(2 * distinct.len());
    for (i, &s) in distinct.iter().enumerate() {
        thresholds.push(s);
        match distinct.get(i + 1) {
            Some(&next) => thresholds.push(s + (next - s) / 2.0),
            None => thresholds.push(s + 1.0),
        }
    }

    let (ng, nf) = (genuine.len() as f64, forged.len() as f64);
    let operating_points: Vec<OperatingPoint> = thresholds
        .iter()
        .map(|&t| {
            let accepted_forged = forged.partition_point(|&s| s < t);
            let rejected_genuine = genuine.len() - genuine.partition_point(|&s| s < t);
            OperatingPoint {
                threshold: t,
                far: accepted_forged as f64 / nf,
                frr: rejected_genuine as f64 / ng,
            }
        })
        .collect();

    // The lowest candidate rejects everything (FAR − FRR = −1) and the highest
    // accepts everything (+1), so the crossing lies strictly inside.
    let cross = operating_points
        .iter()
        .position(|p| p.far - p.frr >= 0.0)
        .expect("highest threshold accepts every score");
    let (a, b) = (operating_points[cross - 1], operating_points[cross]);
    let (da, db) = (a.far - a.frr, b.far - b.frr);
    let alpha = -da / (db - da);
    Ok(EerResult {
        eer: a.far + alpha * (b.far - a.far),
        threshold: a.threshold + alpha * (b.threshold - a.threshold),
        operating_points,
    })
}
