//! Repeated-trial experiments: split, score every test signature against its
//! client's templates, pool the scores into one EER per trial.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{compute_eer, Backend, VerificationScore, Verifier};
use crate::data::{Dataset, Label, Pool, Split, SplitPlan};
use crate::dtw::DtwConfig;
use crate::features::FeatureConfig;
use crate::gru::{train, GruModel, TrainConfig, TrainOutcome, TrainingSet};
use crate::{data, par, seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwExperiment {
    pub features: FeatureConfig,
    pub dtw: DtwConfig,
    pub n_templates: usize,
    pub pool: Pool,
    pub trials: usize,
    pub seed: u64,
    /// Also report EER against other clients' genuine samples.
    pub random_forgeries: bool,
}

impl DtwExperiment {
    /// Five templates from the first ten genuine samples, ten trials.
    pub fn new(features: FeatureConfig, seed: u64) -> Self {
        DtwExperiment {
            features,
            dtw: DtwConfig::default(),
            n_templates: 5,
            pool: Pool::First10,
            trials: 10,
            seed,
            random_forgeries: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnExperiment {
    pub features: FeatureConfig,
    pub train: TrainConfig,
    /// Genuine templates and training forgeries drawn per client.
    pub n_templates: usize,
    pub pool: Pool,
    pub trials: usize,
    pub seed: u64,
    pub random_forgeries: bool,
}

impl RnnExperiment {
    /// Ten templates and ten training forgeries per client, five trials.
    pub fn new(features: FeatureConfig, train: TrainConfig, seed: u64) -> Self {
        RnnExperiment {
            features,
            train,
            n_templates: 10,
            pool: Pool::All,
            trials: 5,
            seed,
            random_forgeries: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    /// Skilled-forgery EER of each trial, as a fraction.
    pub trial_eers: Vec<f64>,
    pub mean_eer: f64,
    /// Population standard deviation over trials.
    pub std_eer: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_forgery_eers: Option<Vec<f64>>,
    /// Final-epoch mean training loss of each trial (RNN only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_losses: Option<Vec<f64>>,
    pub seed: u64,
    pub trial_seeds: Vec<u64>,
    pub config: serde_json::Value,
    /// Every score of every trial, for external plotting.
    #[serde(skip)]
    pub trial_scores: Vec<Vec<VerificationScore>>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ExperimentReport {
    fn new(kind: &str, seed: u64, config: serde_json::Value) -> Self {
        ExperimentReport {
            kind: kind.into(),
            trial_eers: Vec::new(),
            mean_eer: 0.0,
            std_eer: 0.0,
            random_forgery_eers: None,
            final_losses: None,
            seed,
            trial_seeds: Vec::new(),
            config,
            trial_scores: Vec::new(),
        }
    }

    fn finish(mut self) -> Self {
        let (mean, std) = mean_std(&self.trial_eers);
        self.mean_eer = mean;
        self.std_eer = std;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary, EERs in percent.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} experiment, seed {}", self.kind, self.seed);
        let _ = writeln!(out, "{:>5}  {:>20}  {:>9}", "trial", "seed", "EER (%)");
        for (i, (eer, s)) in self.trial_eers.iter().zip(&self.trial_seeds).enumerate() {
            let _ = writeln!(out, "{:>5}  {:>20}  {:>9.3}", i, s, 100.0 * eer);
        }
        let _ = writeln!(
            out,
            "mean EER {:.3}% (std {:.3})",
            100.0 * self.mean_eer,
            100.0 * self.std_eer
        );
        if let Some(r) = &self.random_forgery_eers {
            let (m, _) = mean_std(r);
            let _ = writeln!(out, "random-forgery mean EER {:.3}%", 100.0 * m);
        }
        out
    }

    /// CSV of every score: trial, client, sample, truth, score.
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("trial,client_id,sample_index,truth,score\n");
        for (trial, scores) in self.trial_scores.iter().enumerate() {
            for s in scores {
                let _ = writeln!(
                    out,
                    "{trial},{},{},{},{}",
                    s.client_id, s.sample_index, s.truth, s.score
                );
            }
        }
        out
    }
}

/// Scores every test signature of `split` against its own client's templates.
/// With `random_forgeries`, additionally scores the first genuine test
/// sample of every other client, labelled as a forgery.
pub fn score_split(
    verifier: &Verifier<'_>,
    split: &Split,
    random_forgeries: bool,
) -> Result<(Vec<VerificationScore>, Vec<VerificationScore>)> {
    let clients: Vec<_> = split.clients.iter().collect();
    let enrollments = par::try_map(&clients, |(_, c)| verifier.enroll(&c.templates))?;

    let jobs: Vec<(usize, &data::OnlineSignature)> = clients
        .iter()
        .enumerate()
        .flat_map(|(i, (_, c))| c.test.iter().map(move |s| (i, s)))
        .collect();
    let skilled = par::try_map(&jobs, |&(i, probe)| verifier.score(&enrollments[i], probe))?;

    let mut random = Vec::new();
    if random_forgeries {
        let impostors: Vec<Option<&data::OnlineSignature>> = clients
            .iter()
            .map(|(_, c)| c.test.iter().find(|s| s.label == Label::Genuine))
            .collect();
        let mut jobs = Vec::new();
        for (i, (_, c)) in clients.iter().enumerate() {
            for s in c.test.iter().filter(|s| s.label == Label::Genuine) {
                jobs.push((i, s.clone()));
            }
            for (j, imp) in impostors.iter().enumerate() {
                if let (true, Some(imp)) = (i != j, imp) {
                    let mut s = (*imp).clone();
                    s.label = Label::SkilledForgery;
                    jobs.push((i, s));
                }
            }
        }
        random = par::try_map(&jobs, |(i, probe)| verifier.score(&enrollments[*i], probe))?;
    }
    Ok((skilled, random))
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    Ok(())
}

pub fn run_dtw_experiment(dataset: &Dataset, exp: &DtwExperiment) -> Result<ExperimentReport> {
    check_trials(exp.trials)?;
    exp.features.validate()?;
    let config = serde_json::to_value(exp).expect("config serializes");
    let mut report = ExperimentReport::new("dtw", exp.seed, config);
    let plan = SplitPlan {
        n_templates: exp.n_templates,
        pool: exp.pool,
        train_forgeries: false,
    };
    let verifier = Verifier::new(Backend::Dtw(exp.dtw), exp.features);
    let mut random_eers = Vec::new();
    for trial in 0..exp.trials {
        let split = data::split_templates(dataset, plan, trial_seed(exp.seed, trial))?;
        record_trial(&mut report, &mut random_eers, &verifier, &split, exp.random_forgeries)?;
    }
    if exp.random_forgeries {
        report.random_forgery_eers = Some(random_eers);
    }
    Ok(report.finish())
}

fn rnn_plan(exp: &RnnExperiment) -> SplitPlan {
    SplitPlan {
        n_templates: exp.n_templates,
        pool: exp.pool,
        train_forgeries: true,
    }
}

fn auxiliary_set(auxiliary: &[Dataset], features: &FeatureConfig) -> Result<TrainingSet> {
    let mut set = TrainingSet::default();
    for (i, aux) in auxiliary.iter().enumerate() {
        set.merge(TrainingSet::from_dataset(&aux.prefixed(&format!("aux{i}:")), features)?)?;
    }
    Ok(set)
}

fn validate_rnn(exp: &RnnExperiment) -> Result<()> {
    check_trials(exp.trials)?;
    exp.features.validate()?;
    exp.train.validate()
}

/// Seed of trial `trial`; the split of that trial is drawn from it.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed::derive(seed, trial as u64)
}

fn train_on(split: &Split, aux: &TrainingSet, exp: &RnnExperiment, trial_seed: u64) -> Result<TrainOutcome> {
    let mut set = TrainingSet::from_split(split, &exp.features)?;
    set.merge(aux.clone())?;
    let config = TrainConfig {
        seed: seed::derive(trial_seed, 1),
        ..exp.train.clone()
    };
    train(&set, &config)
}

/// Split and model of trial `trial` exactly as [`run_rnn_experiment`]
/// produces them.
pub fn train_trial(
    dataset: &Dataset,
    auxiliary: &[Dataset],
    exp: &RnnExperiment,
    trial: usize,
) -> Result<(Split, TrainOutcome)> {
    validate_rnn(exp)?;
    let seed = trial_seed(exp.seed, trial);
    let split = data::split_templates(dataset, rnn_plan(exp), seed)?;
    let outcome = train_on(&split, &auxiliary_set(auxiliary, &exp.features)?, exp, seed)?;
    Ok((split, outcome))
}

fn record_trial(
    report: &mut ExperimentReport,
    random_eers: &mut Vec<f64>,
    verifier: &Verifier<'_>,
    split: &Split,
    random_forgeries: bool,
) -> Result<()> {
    let (skilled, random) = score_split(verifier, split, random_forgeries)?;
    report.trial_eers.push(compute_eer(&skilled)?.eer);
    if random_forgeries {
        random_eers.push(compute_eer(&random)?.eer);
    }
    report.trial_seeds.push(split.seed);
    report.trial_scores.push(skilled);
    log::info!(
        "{} trial {}: EER {:.4}",
        report.kind,
        report.trial_eers.len() - 1,
        report.trial_eers[report.trial_eers.len() - 1]
    );
    Ok(())
}

/// For every trial: split `dataset`, train on its templates and training
/// forgeries together with every client of `auxiliary`, then score the held
/// out signatures of `dataset` with embedding distances.
pub fn run_rnn_experiment(dataset: &Dataset, auxiliary: &[Dataset], exp: &RnnExperiment) -> Result<ExperimentReport> {
    validate_rnn(exp)?;
    let config = serde_json::to_value(exp).expect("config serializes");
    let mut report = ExperimentReport::new("rnn", exp.seed, config);
    let aux = auxiliary_set(auxiliary, &exp.features)?;

    let mut random_eers = Vec::new();
    let mut losses = Vec::new();
    for trial in 0..exp.trials {
        let seed = trial_seed(exp.seed, trial);
        let split = data::split_templates(dataset, rnn_plan(exp), seed)?;
        let outcome = train_on(&split, &aux, exp, seed)?;
        losses.push(outcome.loss_history.last().copied().unwrap_or(f64::NAN));
        let verifier = Verifier::new(Backend::Rnn(&outcome.model), exp.features);
        record_trial(&mut report, &mut random_eers, &verifier, &split, exp.random_forgeries)?;
    }
    if exp.random_forgeries {
        report.random_forgery_eers = Some(random_eers);
    }
    report.final_losses = Some(losses);
    Ok(report.finish())
}

/// Scores the trial splits of `exp` with an already trained `model` instead
/// of training one per trial. Trial 0 reproduces the split seen by
/// [`train_trial`] with the same experiment and trial index 0; later trials
/// may test on signatures the model was trained on.
pub fn evaluate_rnn_model(dataset: &Dataset, model: &GruModel, exp: &RnnExperiment) -> Result<ExperimentReport> {
    validate_rnn(exp)?;
    let config = serde_json::to_value(exp).expect("config serializes");
    let mut report = ExperimentReport::new("rnn", exp.seed, config);
    let verifier = Verifier::new(Backend::Rnn(model), exp.features);
    let mut random_eers = Vec::new();
    for trial in 0..exp.trials {
        let split = data::split_templates(dataset, rnn_plan(exp), trial_seed(exp.seed, trial))?;
        record_trial(&mut report, &mut random_eers, &verifier, &split, exp.random_forgeries)?;
    }
    if exp.random_forgeries {
        report.random_forgery_eers = Some(random_eers);
    }
    Ok(report.finish())
}
