//! Product-state hidden Markov model over all users plus the active-user
//! marker, with exact Viterbi decoding and forward log-likelihood.
//!
//! A state bundles every user's `(page, duration)` pair with the index of the
//! user active in the slot; the active user's output row scores the observed
//! request. Between consecutive slots the newly active user advances by the
//! single-user dynamics (decrement the dwell, or move page and redraw the
//! dwell when it hits one) while everyone else is frozen; the active-user
//! marker itself follows the turn process.
//!
//! States are enumerated canonically: lump each user's pair into
//! `page * q + (duration - 1)`, read the per-user lumps as digits of a base
//! `n*q` number (user 0 most significant), then append the active-user index
//! as the least significant, base `m` digit. The full space has
//! `m * (n*q)^m` states; construction refuses anything above `limit` because
//! tables and decoding scale linearly with it. Transitions are never stored
//! as a dense matrix: successor and predecessor lists are generated on the
//! fly from the factored tables.
//!
//! All scores are natural-log probabilities with `f64::NEG_INFINITY` for
//! impossible events.

use thiserror::Error;

use crate::interleave::{InterleaveError, TurnScheduler};
use crate::model::{ModelError, RequestId, ScenarioDims, UserModel, UserState, PageId, Duration};

/// Default cap on the number of augmented states.
pub const DEFAULT_STATE_LIMIT: usize = 100_000;

const NEG_INF: f64 = f64::NEG_INFINITY;

/// One augmented state in decoded form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AugmentedState {
    pub users: Vec<UserState>,
    pub active: usize,
}

/// Result of Viterbi decoding: canonical state indices per step and the joint
/// log-probability of that path with the observations.
#[derive(Clone, Debug)]
pub struct ViterbiPath {
    pub indices: Vec<usize>,
    pub log_prob: f64,
}

#[derive(Debug, Error)]
pub enum AhmmError {
    #[error("augmented space needs {required} states, over the limit of {limit}")]
    StateLimit { required: u128, limit: usize },
    #[error("models must have at least one page and one duration")]
    DegenerateDims,
    #[error("observation sequence is empty")]
    EmptyObservations,
    #[error("observation {r} at step {t} out of range for n={n}")]
    BadObservation { t: usize, r: usize, n: usize },
    #[error("no state path has positive probability for the observations")]
    ImpossibleSequence,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scheduler(#[from] InterleaveError),
}

fn log_table(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().map(|&x| x.ln()).collect())
        .collect()
}

/// The augmented model over `m` users.
#[derive(Debug)]
pub struct AugmentedHmm {
    dims: ScenarioDims,
    n_states: usize,
    /// `(n*q)^(m-1-u) * m`: index stride of user `u`'s lump digit.
    strides: Vec<usize>,
    log_trans: Vec<Vec<Vec<f64>>>,
    log_dur: Vec<Vec<Vec<f64>>>,
    log_turn: Vec<Vec<f64>>,
    log_turn0: Vec<f64>,
    /// Flat `n_states x n` emission table.
    log_emission: Vec<f64>,
    log_initial: Vec<f64>,
}

impl AugmentedHmm {
    /// Builds the augmented model, refusing state spaces larger than `limit`.
    pub fn build(
        models: &[UserModel],
        sched: &TurnScheduler,
        limit: usize,
    ) -> Result<Self, AhmmError> {
        let m = models.len();
        if m == 0 {
            return Err(AhmmError::DegenerateDims);
        }
        let n = models[0].n();
        let q = models[0].q();
        if n == 0 || q == 0 {
            return Err(AhmmError::DegenerateDims);
        }
        let dims = ScenarioDims { m, n, q };
        for model in models {
            model.validate(dims)?;
        }
        sched.validate(m)?;

        let lumps = (n * q) as u128;
        let required = lumps
            .checked_pow(m as u32)
            .and_then(|x| x.checked_mul(m as u128))
            .ok_or(AhmmError::StateLimit {
                required: u128::MAX,
                limit,
            })?;
        if required > limit as u128 {
            return Err(AhmmError::StateLimit { required, limit });
        }
        let n_states = required as usize;

        let mut strides = vec![0usize; m];
        let mut pow = m;
        for u in (0..m).rev() {
            strides[u] = pow;
            pow *= n * q;
        }

        let log_trans: Vec<_> = models.iter().map(|mo| log_table(&mo.transition)).collect();
        let log_dur: Vec<_> = models.iter().map(|mo| log_table(&mo.duration_dist)).collect();
        let log_out: Vec<_> = models.iter().map(|mo| log_table(&mo.output)).collect();
        let log_turn = match sched {
            TurnScheduler::Shares { alpha } => {
                vec![alpha.iter().map(|&x| x.ln()).collect::<Vec<_>>(); m]
            }
            TurnScheduler::Matrix { matrix } => log_table(matrix),
        };
        let log_turn0: Vec<f64> = sched.initial_law()?.iter().map(|&x| x.ln()).collect();

        let mut hmm = AugmentedHmm {
            dims,
            n_states,
            strides,
            log_trans,
            log_dur,
            log_turn,
            log_turn0,
            log_emission: vec![NEG_INF; n_states * n],
            log_initial: vec![NEG_INF; n_states],
        };

        let ln_n = (n as f64).ln();
        let mut digits = vec![0usize; m];
        for idx in 0..n_states {
            let active = hmm.decode_digits(idx, &mut digits);
            let w_active = digits[active] / q;
            hmm.log_emission[idx * n..(idx + 1) * n].copy_from_slice(&log_out[active][w_active]);
            let mut init = hmm.log_turn0[active];
            for (u, &lam) in digits.iter().enumerate() {
                let (w, d) = (lam / q, lam % q + 1);
                init += -ln_n + hmm.log_dur[u][w][d - 1];
            }
            hmm.log_initial[idx] = init;
        }
        Ok(hmm)
    }

    /// Builds with [`DEFAULT_STATE_LIMIT`].
    pub fn build_default(models: &[UserModel], sched: &TurnScheduler) -> Result<Self, AhmmError> {
        Self::build(models, sched, DEFAULT_STATE_LIMIT)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn dims(&self) -> ScenarioDims {
        self.dims
    }

    /// Active user encoded in a canonical index.
    pub fn active_of(&self, idx: usize) -> usize {
        idx % self.dims.m
    }

    fn decode_digits(&self, idx: usize, digits: &mut [usize]) -> usize {
        let m = self.dims.m;
        let nq = self.dims.n * self.dims.q;
        let active = idx % m;
        let mut rest = idx / m;
        for u in (0..m).rev() {
            digits[u] = rest % nq;
            rest /= nq;
        }
        active
    }

    /// Decodes a canonical index.
    pub fn state(&self, idx: usize) -> AugmentedState {
        assert!(idx < self.n_states, "state index out of range");
        let mut digits = vec![0usize; self.dims.m];
        let active = self.decode_digits(idx, &mut digits);
        let q = self.dims.q;
        AugmentedState {
            users: digits
                .iter()
                .map(|&lam| UserState {
                    page: PageId(lam / q),
                    duration: Duration(lam % q + 1),
                })
                .collect(),
            active,
        }
    }

    /// Canonical index of a decoded state.
    pub fn index_of(&self, state: &AugmentedState) -> usize {
        assert_eq!(state.users.len(), self.dims.m);
        assert!(state.active < self.dims.m);
        let q = self.dims.q;
        let mut idx = state.active;
        for (u, us) in state.users.iter().enumerate() {
            assert!(us.page.0 < self.dims.n && us.duration.0 >= 1 && us.duration.0 <= q);
            idx += (us.page.0 * q + (us.duration.0 - 1)) * self.strides[u];
        }
        idx
    }

    /// All states in canonical order.
    pub fn states(&self) -> impl Iterator<Item = AugmentedState> + '_ {
        (0..self.n_states).map(|idx| self.state(idx))
    }

    pub fn log_initial(&self, idx: usize) -> f64 {
        self.log_initial[idx]
    }

    pub fn log_emission(&self, idx: usize, r: RequestId) -> f64 {
        self.log_emission[idx * self.dims.n + r.0]
    }

    /// Nonzero outgoing transitions of `idx` as `(target, log_prob)`, derived
    /// on the fly from the factored tables. Order: next active user ascending,
    /// then (for a moving user) target page and duration ascending.
    pub fn successors(&self, idx: usize) -> Vec<(usize, f64)> {
        let (m, n, q) = (self.dims.m, self.dims.n, self.dims.q);
        let mut digits = vec![0usize; m];
        let active = self.decode_digits(idx, &mut digits);
        let mut out = Vec::new();
        for u in 0..m {
            let lt = self.log_turn[active][u];
            if lt == NEG_INF {
                continue;
            }
            let lam = digits[u];
            let (w, d) = (lam / q, lam % q + 1);
            let stride = self.strides[u];
            let base = idx - active - lam * stride;
            if d > 1 {
                // Forced decrement: lump (w, d-1) is lam - 1.
                out.push((base + (lam - 1) * stride + u, lt));
            } else {
                for w2 in 0..n {
                    let lp = self.log_trans[u][w][w2];
                    if lp == NEG_INF {
                        continue;
                    }
                    for d2 in 1..=q {
                        let lpw = self.log_dur[u][w2][d2 - 1];
                        if lpw == NEG_INF {
                            continue;
                        }
                        let lam2 = w2 * q + (d2 - 1);
                        out.push((base + lam2 * stride + u, lt + lp + lpw));
                    }
                }
            }
        }
        out
    }

    /// Nonzero incoming transitions of `idx` as `(source, log_prob)`, sorted
    /// by source index.
    pub fn predecessors(&self, idx: usize) -> Vec<(usize, f64)> {
        let (m, n, q) = (self.dims.m, self.dims.n, self.dims.q);
        let mut digits = vec![0usize; m];
        let u = self.decode_digits(idx, &mut digits);
        let lam = digits[u];
        let (w, d) = (lam / q, lam % q + 1);
        let stride = self.strides[u];
        let base = idx - u - lam * stride;
        let mut out = Vec::new();
        for up in 0..m {
            let lt = self.log_turn[up][u];
            if lt == NEG_INF {
                continue;
            }
            // Source that was mid-dwell: (w, d+1) decremented to (w, d).
            if d + 1 <= q {
                out.push((base + (lam + 1) * stride + up, lt));
            }
            // Sources that finished a page and moved here.
            let lpw = self.log_dur[u][w][d - 1];
            if lpw > NEG_INF {
                for wp in 0..n {
                    let lp = self.log_trans[u][wp][w];
                    if lp == NEG_INF {
                        continue;
                    }
                    let lamp = wp * q;
                    out.push((base + lamp * stride + up, lt + lp + lpw));
                }
            }
        }
        out.sort_unstable_by_key(|&(src, _)| src);
        out
    }

    fn check_obs(&self, obs: &[RequestId]) -> Result<(), AhmmError> {
        if obs.is_empty() {
            return Err(AhmmError::EmptyObservations);
        }
        for (t, r) in obs.iter().enumerate() {
            if r.0 >= self.dims.n {
                return Err(AhmmError::BadObservation {
                    t,
                    r: r.0,
                    n: self.dims.n,
                });
            }
        }
        Ok(())
    }

    fn pred_csr(&self) -> (Vec<usize>, Vec<(u32, f64)>) {
        let mut offsets = Vec::with_capacity(self.n_states + 1);
        let mut edges = Vec::new();
        offsets.push(0);
        for s in 0..self.n_states {
            for (src, lp) in self.predecessors(s) {
                edges.push((src as u32, lp));
            }
            offsets.push(edges.len());
        }
        (offsets, edges)
    }

    /// Most probable state path for the observations. Ties are broken toward
    /// the lower canonical state index, applied from the final step backwards.
    pub fn viterbi(&self, obs: &[RequestId]) -> Result<ViterbiPath, AhmmError> {
        self.check_obs(obs)?;
        let s_count = self.n_states;
        let t_len = obs.len();
        let (offsets, edges) = self.pred_csr();

        let mut prev = vec![NEG_INF; s_count];
        let mut cur = vec![NEG_INF; s_count];
        for s in 0..s_count {
            prev[s] = self.log_initial[s] + self.log_emission(s, obs[0]);
        }
        let mut psi = vec![0u32; s_count.checked_mul(t_len).expect("psi table too large")];
        for t in 1..t_len {
            let psi_row = &mut psi[t * s_count..(t + 1) * s_count];
            for s in 0..s_count {
                let e = self.log_emission(s, obs[t]);
                if e == NEG_INF {
                    cur[s] = NEG_INF;
                    continue;
                }
                let mut best = NEG_INF;
                let mut arg = u32::MAX;
                for &(src, lp) in &edges[offsets[s]..offsets[s + 1]] {
                    let p = prev[src as usize];
                    if p == NEG_INF {
                        continue;
                    }
                    let cand = p + lp;
                    if cand > best {
                        best = cand;
                        arg = src;
                    }
                }
                if arg == u32::MAX {
                    cur[s] = NEG_INF;
                } else {
                    cur[s] = best + e;
                    psi_row[s] = arg;
                }
            }
            std::mem::swap(&mut prev, &mut cur);
        }

        let mut best = NEG_INF;
        let mut last = usize::MAX;
        for (s, &v) in prev.iter().enumerate() {
            if v > best {
                best = v;
                last = s;
            }
        }
        if last == usize::MAX {
            return Err(AhmmError::ImpossibleSequence);
        }
        let mut indices = vec![0usize; t_len];
        indices[t_len - 1] = last;
        for t in (1..t_len).rev() {
            indices[t - 1] = psi[t * s_count + indices[t]] as usize;
        }
        Ok(ViterbiPath {
            indices,
            log_prob: best,
        })
    }

    /// Log-likelihood of the observations, summing over all state paths.
    pub fn forward_loglik(&self, obs: &[RequestId]) -> Result<f64, AhmmError> {
        self.check_obs(obs)?;
        let s_count = self.n_states;
        let (offsets, edges) = self.pred_csr();

        let mut prev = vec![NEG_INF; s_count];
        let mut cur = vec![NEG_INF; s_count];
        for s in 0..s_count {
            prev[s] = self.log_initial[s] + self.log_emission(s, obs[0]);
        }
        let mut scratch = Vec::new();
        for t in 1..obs.len() {
            for s in 0..s_count {
                let e = self.log_emission(s, obs[t]);
                if e == NEG_INF {
                    cur[s] = NEG_INF;
                    continue;
                }
                scratch.clear();
                for &(src, lp) in &edges[offsets[s]..offsets[s + 1]] {
                    let p = prev[src as usize];
                    if p > NEG_INF {
                        scratch.push(p + lp);
                    }
                }
                cur[s] = match log_sum_exp(&scratch) {
                    NEG_INF => NEG_INF,
                    lse => lse + e,
                };
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        match log_sum_exp(&prev) {
            NEG_INF => Err(AhmmError::ImpossibleSequence),
            total => Ok(total),
        }
    }
}

/// Stable log-sum-exp; empty input or all `-inf` yields `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}
