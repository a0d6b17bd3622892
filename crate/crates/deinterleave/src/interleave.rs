//! Interleaving of several independently evolving users into one stream.
//!
//! At every slot a scheduler picks the active user; only that user's model
//! advances, all others stall. The emitted request is recorded together with
//! the active user's identity and its pre-step hidden state, which is what a
//! decoder is asked to recover.
//!
//! Stream discipline: one `SimRng` drives the whole simulation. Draws happen
//! in a fixed order: first every user's initial state (user 0 first), then per
//! slot one turn draw followed by the active user's step draws.

use thiserror::Error;

use crate::model::{Duration, ModelError, PageId, RequestId, ScenarioDims, UserModel, ROW_SUM_TOL};
use crate::rng::SimRng;

/// Convergence tolerance for the stationary distribution of a turn matrix.
pub const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITERS: usize = 100_000;

/// Turn-taking process over `m` users.
///
/// * `Shares`: slots are i.i.d. draws from a fixed vector `alpha`.
/// * `Matrix`: slots follow a Markov chain with row-stochastic matrix
///   `matrix[prev][next]`; the first slot is drawn from the stationary
///   distribution of the chain.
#[derive(Clone, Debug, PartialEq)]
pub enum TurnScheduler {
    Shares { alpha: Vec<f64> },
    Matrix { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Error)]
pub enum InterleaveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("scheduler is over {got} users, expected {expected}")]
    SchedulerSize { expected: usize, got: usize },
    #[error("scheduler row {row} has length {got}, expected {expected}")]
    SchedulerRowLen {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("scheduler row {row} sums to {sum}, expected 1")]
    SchedulerRowSum { row: usize, sum: f64 },
    #[error("scheduler row {row} has a negative entry at column {col}")]
    SchedulerNegative { row: usize, col: usize },
    #[error("scheduler row {row} has no positive mass")]
    SchedulerEmptyRow { row: usize },
    #[error("stationary distribution did not converge to {STATIONARY_TOL} in {STATIONARY_MAX_ITERS} iterations")]
    StationaryNoConvergence,
    #[error("user {user} has tables of the wrong shape for the shared dimensions")]
    DimsMismatch { user: usize },
    #[error("no users given")]
    NoUsers,
}

impl TurnScheduler {
    /// Number of users the scheduler covers.
    pub fn m(&self) -> usize {
        match self {
            TurnScheduler::Shares { alpha } => alpha.len(),
            TurnScheduler::Matrix { matrix } => matrix.len(),
        }
    }

    fn check_row(row: &[f64], idx: usize, expected: usize) -> Result<(), InterleaveError> {
        if row.len() != expected {
            return Err(InterleaveError::SchedulerRowLen {
                row: idx,
                expected,
                got: row.len(),
            });
        }
        for (col, &x) in row.iter().enumerate() {
            if x < 0.0 {
                return Err(InterleaveError::SchedulerNegative { row: idx, col });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(InterleaveError::SchedulerRowSum { row: idx, sum });
        }
        Ok(())
    }

    /// Checks that the scheduler covers exactly `m` users and that every row
    /// (the shares vector, or each matrix row) is a probability distribution.
    pub fn validate(&self, m: usize) -> Result<(), InterleaveError> {
        if self.m() != m {
            return Err(InterleaveError::SchedulerSize {
                expected: m,
                got: self.m(),
            });
        }
        match self {
            TurnScheduler::Shares { alpha } => Self::check_row(alpha, 0, m),
            TurnScheduler::Matrix { matrix } => {
                for (i, row) in matrix.iter().enumerate() {
                    Self::check_row(row, i, m)?;
                }
                Ok(())
            }
        }
    }

    /// Law of the first slot: the shares vector itself, or the stationary
    /// distribution of the turn matrix (power iteration to [`STATIONARY_TOL`]).
    pub fn initial_law(&self) -> Result<Vec<f64>, InterleaveError> {
        match self {
            TurnScheduler::Shares { alpha } => Ok(alpha.clone()),
            TurnScheduler::Matrix { matrix } => stationary(matrix),
        }
    }

    /// Draws the active user for the next slot. `prev` is `None` for the first
    /// slot. Consumes exactly one draw.
    pub fn next_user(&self, prev: Option<usize>, rng: &mut SimRng) -> Result<usize, InterleaveError> {
        let row = match (self, prev) {
            (TurnScheduler::Shares { alpha }, _) => alpha.clone(),
            (TurnScheduler::Matrix { matrix }, Some(u)) => matrix[u].clone(),
            (TurnScheduler::Matrix { .. }, None) => self.initial_law()?,
        };
        rng.sample_row(&row)
            .ok_or(InterleaveError::SchedulerEmptyRow { row: prev.unwrap_or(0) })
    }
}

/// Stationary distribution of a row-stochastic matrix by power iteration from
/// the uniform vector, renormalizing each sweep, until the max-norm change is
/// at most [`STATIONARY_TOL`].
pub fn stationary(matrix: &[Vec<f64>]) -> Result<Vec<f64>, InterleaveError> {
    let m = matrix.len();
    let mut pi = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    for _ in 0..STATIONARY_MAX_ITERS {
        for x in next.iter_mut() {
            *x = 0.0;
        }
        for (i, row) in matrix.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                next[j] += pi[i] * a;
            }
        }
        let total: f64 = next.iter().sum();
        for x in next.iter_mut() {
            *x /= total;
        }
        let delta = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if delta <= STATIONARY_TOL {
            return Ok(pi);
        }
    }
    Err(InterleaveError::StationaryNoConvergence)
}

/// Hidden per-slot labels: the active user's pre-step page and dwell.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenLabels {
    pub pages: Vec<PageId>,
    pub durations: Vec<Duration>,
}

/// One interleaved stream with ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub dims: ScenarioDims,
    pub requests: Vec<RequestId>,
    pub users: Vec<usize>,
    /// `None` when the hidden columns have been withheld (e.g. read from a
    /// file that masked them).
    pub hidden: Option<HiddenLabels>,
}

impl LabeledSequence {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }
}

/// Simulates `t_len` slots of the interleaved process.
pub fn interleave(
    models: &[UserModel],
    sched: &TurnScheduler,
    t_len: usize,
    rng: &mut SimRng,
) -> Result<LabeledSequence, InterleaveError> {
    let m = models.len();
    if m == 0 {
        return Err(InterleaveError::NoUsers);
    }
    let n = models[0].n();
    let q = models[0].q();
    let dims = ScenarioDims { m, n, q };
    for (user, model) in models.iter().enumerate() {
        if model.n() != n || model.q() != q {
            return Err(InterleaveError::DimsMismatch { user });
        }
        model.validate(dims)?;
    }
    sched.validate(m)?;

    let mut states = Vec::with_capacity(m);
    for model in models {
        states.push(model.init_state(rng)?);
    }

    let mut requests = Vec::with_capacity(t_len);
    let mut users = Vec::with_capacity(t_len);
    let mut pages = Vec::with_capacity(t_len);
    let mut durations = Vec::with_capacity(t_len);
    let mut prev = None;
    for _ in 0..t_len {
        let u = sched.next_user(prev, rng)?;
        let before = states[u];
        let (r, after) = models[u].step(before, rng)?;
        requests.push(r);
        users.push(u);
        pages.push(before.page);
        durations.push(before.duration);
        states[u] = after;
        prev = Some(u);
    }
    Ok(LabeledSequence {
        dims,
        requests,
        users,
        hidden: Some(HiddenLabels { pages, durations }),
    })
}

/// Splits the stream into the `m` per-user request subsequences, preserving
/// order.
pub fn split_by_user(seq: &LabeledSequence) -> Vec<Vec<RequestId>> {
    let mut out = vec![Vec::new(); seq.dims.m];
    for (&r, &u) in seq.requests.iter().zip(&seq.users) {
        out[u].push(r);
    }
    out
}
