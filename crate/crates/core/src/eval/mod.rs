//! Template-relative scoring, equal error rates and the repeated-trial
//! experiment harness.

mod eer;
mod experiment;
mod score;
mod synth;

pub use eer::{compute_eer, EerResult, OperatingPoint};
pub use experiment::{
    evaluate_rnn_model, run_dtw_experiment, run_rnn_experiment, score_split, train_trial, trial_seed, DtwExperiment,
    ExperimentReport, RnnExperiment,
};
pub use score::{score_probe, template_score, Backend, Enrollment, Representation, VerificationScore, Verifier};
pub use synth::{generate_synthetic_dataset, SynthConfig};
