use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use deinterleave::ahmm::{AugmentedHmm, DEFAULT_STATE_LIMIT};
use deinterleave::harness::{render_table, run_cases, run_toy, CasesProtocol, ToyProtocol};
use deinterleave::interleave::interleave;
use deinterleave::io;
use deinterleave::metrics::accuracy;
use deinterleave::rng::SimRng;
use deinterleave::rnn::{self, CellKind, RnnConfig};
use deinterleave::synth::{gen_case, gen_toy, CaseSpec, SchedMode};

#[derive(Parser)]
#[command(
    name = "deinterleave",
    version,
    about = "Simulate interleaved request streams, decode them exactly, or train a recurrent labeler"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Shares,
    Matrix,
}

impl From<ModeArg> for SchedMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Shares => SchedMode::Shares,
            ModeArg::Matrix => SchedMode::Matrix,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CellArg {
    Simple,
    Lstm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    /// 12k/6k training and validation slots
    Desk,
    /// 60k/30k training and validation slots
    Full,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a scenario (params.json) plus labeled train/val/test streams
    Generate {
        /// "toy" or a case number 1-7
        #[arg(long, default_value = "toy")]
        case: String,
        /// Turn process for numbered cases; the toy always uses shares
        #[arg(long, value_enum, default_value_t = ModeArg::Shares)]
        mode: ModeArg,
        #[arg(long, default_value_t = 6000)]
        train_len: usize,
        #[arg(long, default_value_t = 3000)]
        val_len: usize,
        #[arg(long, default_value_t = 1000)]
        test_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a stream exactly under the scenario that generated it
    Viterbi {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_STATE_LIMIT)]
        state_limit: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the recurrent labeler to recover the active user
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long, value_enum, default_value_t = CellArg::Lstm)]
        cell: CellArg,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[arg(long, default_value_t = 50)]
        max_epochs: usize,
        #[arg(long, default_value_t = 5)]
        patience: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint path
        #[arg(long)]
        out: PathBuf,
    },
    /// Label a stream with a trained checkpoint
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun the toy benchmark (exact decoder vs LSTM, five realizations)
    ReproduceToy {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun the seven-case benchmark (LSTM only)
    ReproduceCases {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
        scale: ScaleArg,
        /// Comma-separated subset of cases, e.g. 1,2,5 (default: all seven)
        #[arg(long, value_delimiter = ',')]
        cases: Option<Vec<u8>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct DecodeOutput {
    log_prob: f64,
    user_accuracy: Option<f64>,
    page_accuracy: Option<f64>,
    duration_accuracy: Option<f64>,
    decoded: Vec<DecodedSlot>,
}

#[derive(Serialize)]
struct DecodedSlot {
    user: usize,
    page: usize,
    duration: usize,
}

#[derive(Serialize)]
struct PredictOutput {
    accuracy: Option<f64>,
    predictions: Vec<usize>,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Generate {
            case,
            mode,
            train_len,
            val_len,
            test_len,
            seed,
            out,
        } => {
            // One seeded stream drives everything in order: scenario, then
            // the train, validation, and test sequences.
            let mut rng = SimRng::new(seed);
            let params = match case.as_str() {
                "toy" => gen_toy(&mut rng),
                num => {
                    let case: u8 = num
                        .parse()
                        .ok()
                        .filter(|c| (1..=7).contains(c))
                        .with_context(|| format!("--case must be \"toy\" or 1-7, got {num}"))?;
                    gen_case(&CaseSpec::standard(case, mode.into()), &mut rng)?
                }
            };
            std::fs::create_dir_all(&out)?;
            io::save_params(&out.join("params.json"), &params)?;
            for (name, len) in [("train.tsv", train_len), ("val.tsv", val_len), ("test.tsv", test_len)] {
                let seq = interleave(&params.models, &params.sched, len, &mut rng)?;
                io::save_dataset(&out.join(name), &seq)?;
            }
            println!(
                "wrote params.json, train.tsv ({train_len}), val.tsv ({val_len}), test.tsv ({test_len}) to {}",
                out.display()
            );
        }
        Cmd::Viterbi {
            params,
            data,
            state_limit,
            out,
        } => {
            let scenario = io::load_params(&params)?;
            let seq = io::load_dataset(&data)?;
            if seq.dims != scenario.dims {
                bail!(
                    "data dims {:?} do not match scenario dims {:?}",
                    seq.dims,
                    scenario.dims
                );
            }
            let hmm = AugmentedHmm::build(&scenario.models, &scenario.sched, state_limit)?;
            let started = std::time::Instant::now();
            let path = hmm.viterbi(&seq.requests)?;
            let elapsed = started.elapsed().as_secs_f64();

            let decoded: Vec<DecodedSlot> = path
                .indices
                .iter()
                .map(|&i| {
                    let st = hmm.state(i);
                    let active = &st.users[st.active];
                    DecodedSlot {
                        user: st.active,
                        page: active.page.0,
                        duration: active.duration.0,
                    }
                })
                .collect();
            let users: Vec<usize> = decoded.iter().map(|d| d.user).collect();
            let user_accuracy = Some(accuracy(&users, &seq.users)?);
            let (page_accuracy, duration_accuracy) = match &seq.hidden {
                Some(h) => {
                    let pages: Vec<usize> = decoded.iter().map(|d| d.page).collect();
                    let truth_pages: Vec<usize> = h.pages.iter().map(|p| p.0).collect();
                    let durs: Vec<usize> = decoded.iter().map(|d| d.duration).collect();
                    let truth_durs: Vec<usize> = h.durations.iter().map(|d| d.0).collect();
                    (
                        Some(accuracy(&pages, &truth_pages)?),
                        Some(accuracy(&durs, &truth_durs)?),
                    )
                }
                None => (None, None),
            };
            io::write_json(
                &out,
                &DecodeOutput {
                    log_prob: path.log_prob,
                    user_accuracy,
                    page_accuracy,
                    duration_accuracy,
                    decoded,
                },
            )?;
            println!(
                "decoded {} slots over {} states in {elapsed:.2}s: log prob {:.4}, user accuracy {}",
                seq.len(),
                hmm.n_states(),
                path.log_prob,
                user_accuracy
                    .map(|a| format!("{a:.4}"))
                    .unwrap_or_else(|| "-".into()),
            );
        }
        Cmd::Train {
            train,
            val,
            cell,
            hidden,
            window,
            max_epochs,
            patience,
            lr,
            seed,
            out,
        } => {
            let train_seq = io::load_dataset(&train)?;
            let val_seq = io::load_dataset(&val)?;
            if train_seq.dims != val_seq.dims {
                bail!(
                    "train dims {:?} do not match val dims {:?}",
                    train_seq.dims,
                    val_seq.dims
                );
            }
            let cell = match cell {
                CellArg::Simple => CellKind::Simple,
                CellArg::Lstm => CellKind::Lstm,
            };
            let config = RnnConfig {
                hidden_dim: hidden,
                window,
                max_epochs,
                patience,
                lr,
                ..RnnConfig::new(cell, train_seq.dims.n, train_seq.dims.m)
            };
            let train_x: Vec<usize> = train_seq.requests.iter().map(|r| r.0).collect();
            let val_x: Vec<usize> = val_seq.requests.iter().map(|r| r.0).collect();
            let started = std::time::Instant::now();
            let outcome = rnn::train(
                &config,
                &train_x,
                &train_seq.users,
                &val_x,
                &val_seq.users,
                &mut SimRng::new(seed),
            )?;
            for st in &outcome.history {
                println!(
                    "epoch {:>3}: train loss {:>8.4}, val accuracy {:.4}",
                    st.epoch, st.train_loss, st.val_accuracy
                );
            }
            println!(
                "best epoch {} (val accuracy {:.4}) in {:.1}s; checkpoint {}",
                outcome.best_epoch,
                outcome.best_val_accuracy,
                started.elapsed().as_secs_f64(),
                out.display()
            );
            io::save_checkpoint(&out, &config, &outcome.params)?;
        }
        Cmd::Predict {
            checkpoint,
            data,
            out,
        } => {
            let ck = io::load_checkpoint(&checkpoint)?;
            let seq = io::load_dataset(&data)?;
            if seq.dims.n != ck.params.input_dim {
                bail!(
                    "data has n={} requests but the checkpoint expects {}",
                    seq.dims.n,
                    ck.params.input_dim
                );
            }
            let inputs: Vec<usize> = seq.requests.iter().map(|r| r.0).collect();
            let predictions = rnn::predict(&ck.params, &inputs)?;
            let acc = accuracy(&predictions, &seq.users).ok();
            io::write_json(&out, &PredictOutput { accuracy: acc, predictions })?;
            println!(
                "labeled {} slots, accuracy {}",
                seq.len(),
                acc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into())
            );
        }
        Cmd::ReproduceToy { seed, out } => {
            let report = run_toy(&ToyProtocol::default(), seed)?;
            print!("{}", render_table(&report));
            println!("wall clock: {:.1}s", report.wall_clock_secs);
            io::write_json(&out, &report)?;
        }
        Cmd::ReproduceCases {
            mode,
            scale,
            cases,
            seed,
            out,
        } => {
            let mut proto = match scale {
                ScaleArg::Desk => CasesProtocol::desk(mode.into()),
                ScaleArg::Full => CasesProtocol::full(mode.into()),
            };
            if let Some(cases) = cases {
                if cases.is_empty() || cases.iter().any(|c| !(1..=7).contains(c)) {
                    bail!("--cases takes numbers between 1 and 7");
                }
                proto.cases = cases;
            }
            let report = run_cases(&proto, seed)?;
            print!("{}", render_table(&report));
            println!("wall clock: {:.1}s", report.wall_clock_secs);
            io::write_json(&out, &report)?;
        }
    }
    Ok(())
}
