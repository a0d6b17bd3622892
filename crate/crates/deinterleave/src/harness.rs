//! Experiment harness: the toy benchmark (exact decoding vs the LSTM on a
//! 32-state scenario) and the seven-case benchmark at full scale, where only
//! the LSTM runs because the augmented space has 20,000 states.
//!
//! Every random choice is derived from one master seed through
//! [`derive_seed`](crate::rng::derive_seed) with the path
//! `[group, realization, purpose]`: group 0 is the toy benchmark and groups
//! 1-7 are the cases; purposes are 0 scenario parameters, 1 training
//! sequence, 2 validation sequence, 3 test data, 4 network initialization.
//! Reports therefore depend only on the master seed and the protocol, never
//! on wall-clock time or thread scheduling.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ahmm::{AhmmError, AugmentedHmm};
use crate::interleave::{interleave, InterleaveError, LabeledSequence};
use crate::metrics::{accuracy, baseline_accuracy, mean, std_dev, MetricsError};
use crate::rng::SimRng;
use crate::rnn::{predict, train, CellKind, RnnConfig, RnnError};
use crate::synth::{gen_case, gen_toy, CaseSpec, SchedMode, SynthError};

pub const TAG_PARAMS: u64 = 0;
pub const TAG_TRAIN: u64 = 1;
pub const TAG_VAL: u64 = 2;
pub const TAG_TEST: u64 = 3;
pub const TAG_INIT: u64 = 4;
pub const TOY_GROUP: u64 = 0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Interleave(#[from] InterleaveError),
    #[error(transparent)]
    Ahmm(#[from] AhmmError),
    #[error(transparent)]
    Rnn(#[from] RnnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Accuracy summary of one method over the realizations of an entry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodStats {
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<f64>,
}

impl MethodStats {
    fn from_runs(runs: Vec<f64>) -> Self {
        MethodStats {
            mean: mean(&runs),
            std: std_dev(&runs),
            runs,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportEntry {
    pub label: String,
    pub baseline: f64,
    pub viterbi: Option<MethodStats>,
    pub lstm: MethodStats,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub master_seed: u64,
    pub entries: Vec<ReportEntry>,
    /// Measured, not reproducible; excluded from the serialized report so
    /// repeated runs write identical files.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Toy benchmark protocol. Defaults: five realizations, 6000/3000 training
/// and validation slots, both methods scored on the same fresh 1000-slot
/// test sequence per realization.
#[derive(Clone, Debug)]
pub struct ToyProtocol {
    pub realizations: u64,
    pub train_len: usize,
    pub val_len: usize,
    pub test_len: usize,
    pub rnn: RnnConfig,
}

impl Default for ToyProtocol {
    fn default() -> Self {
        ToyProtocol {
            realizations: 5,
            train_len: 6000,
            val_len: 3000,
            test_len: 1000,
            rnn: RnnConfig::new(CellKind::Lstm, 2, 2),
        }
    }
}

/// Case benchmark protocol. Desk scale trims the stream lengths so the whole
/// sweep stays affordable on one core; full scale matches the original
/// protocol. Either way each case is scored on 100 fresh 100-slot sequences
/// per realization.
#[derive(Clone, Debug)]
pub struct CasesProtocol {
    pub cases: Vec<u8>,
    pub mode: SchedMode,
    pub realizations: u64,
    pub train_len: usize,
    pub val_len: usize,
    pub eval_sequences: usize,
    pub eval_len: usize,
    pub rnn: RnnConfig,
}

impl CasesProtocol {
    pub fn desk(mode: SchedMode) -> Self {
        CasesProtocol {
            cases: (1..=7).collect(),
            mode,
            realizations: 5,
            train_len: 12_000,
            val_len: 6_000,
            eval_sequences: 100,
            eval_len: 100,
            rnn: RnnConfig::new(CellKind::Lstm, 20, 2),
        }
    }

    pub fn full(mode: SchedMode) -> Self {
        CasesProtocol {
            train_len: 60_000,
            val_len: 30_000,
            ..Self::desk(mode)
        }
    }
}

fn request_symbols(seq: &LabeledSequence) -> Vec<usize> {
    seq.requests.iter().map(|r| r.0).collect()
}

fn fit_config(template: &RnnConfig, input_dim: usize, output_dim: usize) -> RnnConfig {
    RnnConfig {
        input_dim,
        output_dim,
        ..template.clone()
    }
}

/// Runs the toy benchmark: per realization, draw a fresh 32-state scenario,
/// decode the test stream exactly and with a trained LSTM, and report
/// active-user accuracy for both.
pub fn run_toy(proto: &ToyProtocol, master: u64) -> Result<ExperimentReport, HarnessError> {
    let start = Instant::now();
    let mut vit_runs = Vec::new();
    let mut lstm_runs = Vec::new();
    let mut baselines = Vec::new();
    for r in 0..proto.realizations {
        let child = |tag| SimRng::child(master, &[TOY_GROUP, r, tag]);
        let params = gen_toy(&mut child(TAG_PARAMS));
        let train_seq = interleave(&params.models, &params.sched, proto.train_len, &mut child(TAG_TRAIN))?;
        let val_seq = interleave(&params.models, &params.sched, proto.val_len, &mut child(TAG_VAL))?;
        let test_seq = interleave(&params.models, &params.sched, proto.test_len, &mut child(TAG_TEST))?;
        baselines.push(baseline_accuracy(&params.sched)?);

        let hmm = AugmentedHmm::build_default(&params.models, &params.sched)?;
        let path = hmm.viterbi(&test_seq.requests)?;
        let decoded: Vec<usize> = path.indices.iter().map(|&i| hmm.active_of(i)).collect();
        vit_runs.push(accuracy(&decoded, &test_seq.users)?);

        let config = fit_config(&proto.rnn, params.dims.n, params.dims.m);
        let outcome = train(
            &config,
            &request_symbols(&train_seq),
            &train_seq.users,
            &request_symbols(&val_seq),
            &val_seq.users,
            &mut child(TAG_INIT),
        )?;
        let pred = predict(&outcome.params, &request_symbols(&test_seq))?;
        lstm_runs.push(accuracy(&pred, &test_seq.users)?);
    }
    Ok(ExperimentReport {
        name: "toy".into(),
        master_seed: master,
        entries: vec![ReportEntry {
            label: "toy".into(),
            baseline: mean(&baselines),
            viterbi: Some(MethodStats::from_runs(vit_runs)),
            lstm: MethodStats::from_runs(lstm_runs),
        }],
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs the case benchmark: per case and realization, draw a scenario, train
/// the LSTM on one long stream, then score it on a bundle of fresh short
/// streams; the realization's accuracy is the mean over that bundle.
pub fn run_cases(proto: &CasesProtocol, master: u64) -> Result<ExperimentReport, HarnessError> {
    let start = Instant::now();
    let mut entries = Vec::new();
    for &case in &proto.cases {
        let mut lstm_runs = Vec::new();
        let mut baselines = Vec::new();
        for r in 0..proto.realizations {
            let child = |tag| SimRng::child(master, &[case as u64, r, tag]);
            let spec = CaseSpec::standard(case, proto.mode);
            let params = gen_case(&spec, &mut child(TAG_PARAMS))?;
            let train_seq =
                interleave(&params.models, &params.sched, proto.train_len, &mut child(TAG_TRAIN))?;
            let val_seq =
                interleave(&params.models, &params.sched, proto.val_len, &mut child(TAG_VAL))?;
            baselines.push(baseline_accuracy(&params.sched)?);

            let config = fit_config(&proto.rnn, params.dims.n, params.dims.m);
            let outcome = train(
                &config,
                &request_symbols(&train_seq),
                &train_seq.users,
                &request_symbols(&val_seq),
                &val_seq.users,
                &mut child(TAG_INIT),
            )?;

            let mut test_rng = child(TAG_TEST);
            let mut seq_accs = Vec::with_capacity(proto.eval_sequences);
            for _ in 0..proto.eval_sequences {
                let test_seq =
                    interleave(&params.models, &params.sched, proto.eval_len, &mut test_rng)?;
                let pred = predict(&outcome.params, &request_symbols(&test_seq))?;
                seq_accs.push(accuracy(&pred, &test_seq.users)?);
            }
            lstm_runs.push(mean(&seq_accs));
        }
        entries.push(ReportEntry {
            label: format!("case{case}"),
            baseline: mean(&baselines),
            viterbi: None,
            lstm: MethodStats::from_runs(lstm_runs),
        });
    }
    let name = match proto.mode {
        SchedMode::Shares => "cases-shares",
        SchedMode::Matrix => "cases-matrix",
    };
    Ok(ExperimentReport {
        name: name.into(),
        master_seed: master,
        entries,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Plain-text table of a report for terminal output.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} (seed {})\n{:<8} {:>9} {:>19} {:>19}\n",
        report.name, report.master_seed, "entry", "baseline", "viterbi", "lstm"
    ));
    for e in &report.entries {
        let vit = match &e.viterbi {
            Some(v) => format!("{:.3} +/- {:.3}", v.mean, v.std),
            None => "-".into(),
        };
        out.push_str(&format!(
            "{:<8} {:>9.3} {:>19} {:>19}\n",
            e.label,
            e.baseline,
            vit,
            format!("{:.3} +/- {:.3}", e.lstm.mean, e.lstm.std),
        ));
    }
    out
}
