//! On-disk formats: TSV datasets, JSON scenario parameters, JSON model
//! checkpoints.
//!
//! Dataset layout: one header line
//! `#deinterleave-v1 m=<m> n=<n> q=<q> T=<T>`
//! followed by one tab-separated line per slot:
//! `t  user  request  page  duration`, where `page` and `duration` are `-`
//! when the hidden labels are withheld (all slots withhold or none do).
//!
//! Scenario parameters serialize with one transition and output table per
//! user but a single shared dwell table, which every scenario in this crate
//! satisfies; saving refuses models whose dwell tables differ. JSON numbers
//! round-trip `f64` exactly.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interleave::TurnScheduler;
use crate::model::{Duration, PageId, RequestId, ScenarioDims, UserModel};
use crate::interleave::{HiddenLabels, LabeledSequence};
use crate::rnn::{RnnConfig, RnnParams};
use crate::synth::ScenarioParams;

pub const DATASET_MAGIC: &str = "#deinterleave-v1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad dataset header: {0}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("users have different dwell tables; the file format shares one")]
    UnsharedDurations,
    #[error("checkpoint version {got} unsupported (expected {expected})")]
    CheckpointVersion { expected: u32, got: u32 },
    #[error("parameter file is inconsistent: {0}")]
    BadParams(String),
}

/// Writes any serializable value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn save_dataset(path: &Path, seq: &LabeledSequence) -> Result<(), IoError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    let d = seq.dims;
    writeln!(w, "{DATASET_MAGIC} m={} n={} q={} T={}", d.m, d.n, d.q, seq.len())?;
    for t in 0..seq.len() {
        match &seq.hidden {
            Some(h) => writeln!(
                w,
                "{t}\t{}\t{}\t{}\t{}",
                seq.users[t], seq.requests[t].0, h.pages[t].0, h.durations[t].0
            )?,
            None => writeln!(w, "{t}\t{}\t{}\t-\t-", seq.users[t], seq.requests[t].0)?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<LabeledSequence, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| IoError::Header("empty file".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(DATASET_MAGIC) {
        return Err(IoError::Header(format!("expected {DATASET_MAGIC}")));
    }
    let mut dims = [None::<usize>; 4];
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| IoError::Header(format!("bad field {part}")))?;
        let slot = match key {
            "m" => 0,
            "n" => 1,
            "q" => 2,
            "T" => 3,
            _ => return Err(IoError::Header(format!("unknown field {key}"))),
        };
        dims[slot] = Some(
            value
                .parse()
                .map_err(|_| IoError::Header(format!("bad value in {part}")))?,
        );
    }
    let [Some(m), Some(n), Some(q), Some(t_len)] = dims else {
        return Err(IoError::Header("missing m/n/q/T".into()));
    };

    let mut users = Vec::with_capacity(t_len);
    let mut requests = Vec::with_capacity(t_len);
    let mut pages = Vec::new();
    let mut durations = Vec::new();
    let mut withheld = None;
    for (ln, line) in lines {
        let line_no = ln + 1;
        let parse_field = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| IoError::Parse {
                line: line_no,
                msg: format!("bad {what}: {s}"),
            })
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(IoError::Parse {
                line: line_no,
                msg: format!("expected 5 tab-separated fields, got {}", fields.len()),
            });
        }
        let t = parse_field(fields[0], "slot")?;
        if t != users.len() {
            return Err(IoError::Parse {
                line: line_no,
                msg: format!("slot {t} out of order"),
            });
        }
        users.push(parse_field(fields[1], "user")?);
        requests.push(RequestId(parse_field(fields[2], "request")?));
        let this_withheld = fields[3] == "-" || fields[4] == "-";
        if this_withheld && (fields[3] != "-" || fields[4] != "-") {
            return Err(IoError::Parse {
                line: line_no,
                msg: "page and duration must be withheld together".into(),
            });
        }
        match withheld {
            None => withheld = Some(this_withheld),
            Some(w) if w != this_withheld => {
                return Err(IoError::Parse {
                    line: line_no,
                    msg: "mixed withheld and labeled slots".into(),
                })
            }
            _ => {}
        }
        if !this_withheld {
            pages.push(PageId(parse_field(fields[3], "page")?));
            durations.push(Duration(parse_field(fields[4], "duration")?));
        }
    }
    if users.len() != t_len {
        return Err(IoError::Header(format!(
            "T={t_len} but file has {} slots",
            users.len()
        )));
    }
    let hidden = match withheld {
        Some(false) => Some(HiddenLabels { pages, durations }),
        _ => None,
    };
    Ok(LabeledSequence {
        dims: ScenarioDims { m, n, q },
        requests,
        users,
        hidden,
    })
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    m: usize,
    n: usize,
    q: usize,
    #[serde(rename = "P")]
    transition: Vec<Vec<Vec<f64>>>,
    pw: Vec<Vec<f64>>,
    #[serde(rename = "O")]
    output: Vec<Vec<Vec<f64>>>,
    sched: SchedFile,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", content = "values", rename_all = "snake_case")]
enum SchedFile {
    Shares(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

pub fn save_params(path: &Path, params: &ScenarioParams) -> Result<(), IoError> {
    let shared = &params.models[0].duration_dist;
    if params.models.iter().any(|m| &m.duration_dist != shared) {
        return Err(IoError::UnsharedDurations);
    }
    let file = ParamsFile {
        m: params.dims.m,
        n: params.dims.n,
        q: params.dims.q,
        transition: params.models.iter().map(|m| m.transition.clone()).collect(),
        pw: shared.clone(),
        output: params.models.iter().map(|m| m.output.clone()).collect(),
        sched: match &params.sched {
            TurnScheduler::Shares { alpha } => SchedFile::Shares(alpha.clone()),
            TurnScheduler::Matrix { matrix } => SchedFile::Matrix(matrix.clone()),
        },
    };
    write_json(path, &file)
}

pub fn load_params(path: &Path) -> Result<ScenarioParams, IoError> {
    let file: ParamsFile = read_json(path)?;
    if file.transition.len() != file.m || file.output.len() != file.m {
        return Err(IoError::BadParams(format!(
            "m={} but {} transition and {} output tables",
            file.m,
            file.transition.len(),
            file.output.len()
        )));
    }
    let models = file
        .transition
        .into_iter()
        .zip(file.output)
        .map(|(transition, output)| UserModel {
            transition,
            duration_dist: file.pw.clone(),
            output,
        })
        .collect();
    let params = ScenarioParams {
        dims: ScenarioDims {
            m: file.m,
            n: file.n,
            q: file.q,
        },
        models,
        sched: match file.sched {
            SchedFile::Shares(alpha) => TurnScheduler::Shares { alpha },
            SchedFile::Matrix(matrix) => TurnScheduler::Matrix { matrix },
        },
    };
    params
        .validate()
        .map_err(|e| IoError::BadParams(e.to_string()))?;
    Ok(params)
}

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: RnnConfig,
    pub params: RnnParams,
}

pub fn save_checkpoint(path: &Path, config: &RnnConfig, params: &RnnParams) -> Result<(), IoError> {
    write_json(
        path,
        &Checkpoint {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            params: params.clone(),
        },
    )
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    let ck: Checkpoint = read_json(path)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(IoError::CheckpointVersion {
            expected: CHECKPOINT_VERSION,
            got: ck.version,
        });
    }
    Ok(ck)
}
