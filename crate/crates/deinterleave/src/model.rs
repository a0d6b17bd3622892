//! Single-user browsing model: hidden page, dwell duration, emitted requests.
//!
//! A user sits on a page, emits one request per active step from that page's
//! output row, and keeps a countdown of remaining requests for the page (the
//! dwell duration, always in `1..=q`). The step that consumes the last unit
//! of dwell still emits from the old page and only then moves: a new page is
//! drawn from the transition row and a fresh duration from the new page's
//! duration row. Steps with remaining dwell above one keep the page and
//! decrement the countdown.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

/// Tolerance for row-stochasticity checks.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Index of a hidden page, `0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageId(pub usize);

/// Index of an observable request, `0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestId(pub usize);

/// Remaining dwell on the current page, always in `1..=q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Duration(pub usize);

/// Problem dimensions: `m` users, `n` pages (and requests), durations up to `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioDims {
    pub m: usize,
    pub n: usize,
    pub q: usize,
}

/// Hidden state of one user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UserState {
    pub page: PageId,
    pub duration: Duration,
}

/// Per-user model tables. All rows are probability distributions.
///
/// * `transition[w][w']`: probability of moving to page `w'` when leaving `w`.
/// * `duration_dist[w][d-1]`: probability of dwell `d` when entering page `w`.
/// * `output[w][r]`: probability of emitting request `r` from page `w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    pub transition: Vec<Vec<f64>>,
    pub duration_dist: Vec<Vec<f64>>,
    pub output: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{table} must have {expected} rows, got {got}")]
    RowCount {
        table: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{table} row {row} must have {expected} entries, got {got}")]
    RowLen {
        table: &'static str,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("{table} row {row} sums to {sum}, expected 1")]
    RowSum {
        table: &'static str,
        row: usize,
        sum: f64,
    },
    #[error("{table} row {row} has a negative entry at column {col}")]
    Negative {
        table: &'static str,
        row: usize,
        col: usize,
    },
    #[error("{table} row {row} has no positive mass")]
    EmptyRow { table: &'static str, row: usize },
}

fn check_table(
    table: &'static str,
    rows: &[Vec<f64>],
    n_rows: usize,
    n_cols: usize,
) -> Result<(), ModelError> {
    if rows.len() != n_rows {
        return Err(ModelError::RowCount {
            table,
            expected: n_rows,
            got: rows.len(),
        });
    }
    for (w, row) in rows.iter().enumerate() {
        if row.len() != n_cols {
            return Err(ModelError::RowLen {
                table,
                row: w,
                expected: n_cols,
                got: row.len(),
            });
        }
        for (c, &x) in row.iter().enumerate() {
            if x < 0.0 {
                return Err(ModelError::Negative { table, row: w, col: c });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(ModelError::RowSum { table, row: w, sum });
        }
    }
    Ok(())
}

impl UserModel {
    /// Number of pages (and requests).
    pub fn n(&self) -> usize {
        self.transition.len()
    }

    /// Maximum dwell duration.
    pub fn q(&self) -> usize {
        self.duration_dist.first().map_or(0, Vec::len)
    }

    /// Checks shapes against `dims` and that every row of every table is a
    /// probability distribution (sum within [`ROW_SUM_TOL`] of 1, no negative
    /// entries).
    pub fn validate(&self, dims: ScenarioDims) -> Result<(), ModelError> {
        check_table("transition", &self.transition, dims.n, dims.n)?;
        check_table("duration_dist", &self.duration_dist, dims.n, dims.q)?;
        check_table("output", &self.output, dims.n, dims.n)?;
        Ok(())
    }

    /// Draws a fresh state: page uniform over all `n` pages, duration from the
    /// page's duration row. Consumes one draw for the page and one for the
    /// duration.
    pub fn init_state(&self, rng: &mut SimRng) -> Result<UserState, ModelError> {
        let page = rng.index(self.n());
        let d = rng
            .sample_row(&self.duration_dist[page])
            .ok_or(ModelError::EmptyRow {
                table: "duration_dist",
                row: page,
            })?;
        Ok(UserState {
            page: PageId(page),
            duration: Duration(d + 1),
        })
    }

    /// Advances the user one step: emits a request from the current page, then
    /// moves iff the pre-step duration is 1. Draw order: emission, then (only
    /// on a move) next page and fresh duration.
    pub fn step(&self, state: UserState, rng: &mut SimRng) -> Result<(RequestId, UserState), ModelError> {
        let w = state.page.0;
        let r = rng.sample_row(&self.output[w]).ok_or(ModelError::EmptyRow {
            table: "output",
            row: w,
        })?;
        let next = if state.duration.0 == 1 {
            let w2 = rng
                .sample_row(&self.transition[w])
                .ok_or(ModelError::EmptyRow {
                    table: "transition",
                    row: w,
                })?;
            let d2 = rng
                .sample_row(&self.duration_dist[w2])
                .ok_or(ModelError::EmptyRow {
                    table: "duration_dist",
                    row: w2,
                })?;
            UserState {
                page: PageId(w2),
                duration: Duration(d2 + 1),
            }
        } else {
            UserState {
                page: state.page,
                duration: Duration(state.duration.0 - 1),
            }
        };
        Ok((RequestId(r), next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_row(k: usize) -> Vec<f64> {
        vec![1.0 / k as f64; k]
    }

    /// Two pages that always alternate; dwell distribution configurable.
    fn alternating_model(dur_row: Vec<f64>) -> UserModel {
        UserModel {
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            duration_dist: vec![dur_row.clone(), dur_row],
            output: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        }
    }

    #[test]
    fn validate_accepts_well_formed() {
        let m = alternating_model(vec![0.3, 0.7]);
        m.validate(ScenarioDims { m: 1, n: 2, q: 2 }).unwrap();
    }

    #[test]
    fn validate_rejects_bad_rows() {
        let dims = ScenarioDims { m: 1, n: 2, q: 2 };
        let mut m = alternating_model(vec![0.3, 0.7]);
        m.transition[0] = vec![0.5, 0.6];
        assert!(matches!(
            m.validate(dims),
            Err(ModelError::RowSum { table: "transition", row: 0, .. })
        ));

        let mut m = alternating_model(vec![0.3, 0.7]);
        m.output[1] = vec![1.5, -0.5];
        assert!(matches!(
            m.validate(dims),
            Err(ModelError::Negative { table: "output", row: 1, col: 1 })
        ));

        let mut m = alternating_model(vec![0.3, 0.7]);
        m.duration_dist[0] = vec![1.0];
        assert!(matches!(
            m.validate(dims),
            Err(ModelError::RowLen { table: "duration_dist", row: 0, .. })
        ));
    }

    #[test]
    fn last_request_comes_from_old_page() {
        // Identity-like output makes the emitted request identify the page.
        let m = alternating_model(vec![1.0, 0.0]);
        let mut rng = SimRng::new(3);
        let s = UserState {
            page: PageId(0),
            duration: Duration(1),
        };
        let (r, s2) = m.step(s, &mut rng).unwrap();
        assert_eq!(r, RequestId(0), "emission must use the pre-move page");
        assert_eq!(s2.page, PageId(1));
        assert_eq!(s2.duration, Duration(1));
    }

    #[test]
    fn countdown_decrements_without_moving() {
        let m = alternating_model(vec![0.0, 1.0]);
        let mut rng = SimRng::new(4);
        let s = UserState {
            page: PageId(1),
            duration: Duration(2),
        };
        let (r, s2) = m.step(s, &mut rng).unwrap();
        assert_eq!(r, RequestId(1));
        assert_eq!(s2, UserState { page: PageId(1), duration: Duration(1) });
    }

    #[test]
    fn duration_stays_in_range() {
        let m = alternating_model(vec![0.5, 0.5]);
        let mut rng = SimRng::new(5);
        let mut s = m.init_state(&mut rng).unwrap();
        for _ in 0..10_000 {
            assert!(s.duration.0 >= 1 && s.duration.0 <= 2, "dwell out of range");
            let (_, next) = m.step(s, &mut rng).unwrap();
            s = next;
        }
    }

    #[test]
    fn dwell_lengths_follow_duration_dist() {
        // Pages always alternate, so every run of equal pages is one dwell.
        let m = alternating_model(vec![0.3, 0.7]);
        let mut rng = SimRng::new(6);
        let mut s = m.init_state(&mut rng).unwrap();
        let mut runs = [0u32; 2];
        let mut cur_page = s.page;
        let mut cur_len = 0usize;
        let steps = 300_000;
        let mut completed = 0u32;
        for _ in 0..steps {
            let (_, next) = m.step(s, &mut rng).unwrap();
            cur_len += 1;
            if next.page != cur_page {
                if cur_len <= 2 {
                    runs[cur_len - 1] += 1;
                    completed += 1;
                }
                cur_page = next.page;
                cur_len = 0;
            }
            s = next;
        }
        let f1 = runs[0] as f64 / completed as f64;
        let f2 = runs[1] as f64 / completed as f64;
        assert!((f1 - 0.3).abs() < 0.01, "dwell-1 frequency {f1}");
        assert!((f2 - 0.7).abs() < 0.01, "dwell-2 frequency {f2}");
    }

    #[test]
    fn emissions_follow_output_row() {
        let m = UserModel {
            transition: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            duration_dist: vec![uniform_row(2), uniform_row(2)],
            output: vec![vec![0.2, 0.8], vec![1.0, 0.0]],
        };
        let mut rng = SimRng::new(7);
        let mut s = UserState {
            page: PageId(0),
            duration: Duration(1),
        };
        let n = 100_000;
        let mut ones = 0u32;
        for _ in 0..n {
            let (r, next) = m.step(s, &mut rng).unwrap();
            ones += r.0 as u32;
            s = next;
        }
        let f = ones as f64 / n as f64;
        assert!((f - 0.8).abs() < 0.01, "emission frequency {f}");
    }

    #[test]
    fn init_state_uniform_pages_and_duration_law() {
        let m = UserModel {
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            duration_dist: vec![vec![0.3, 0.7], vec![1.0, 0.0]],
            output: vec![uniform_row(2), uniform_row(2)],
        };
        let mut rng = SimRng::new(8);
        let n = 100_000;
        let mut page0 = 0u32;
        let mut d2_given_p0 = 0u32;
        for _ in 0..n {
            let s = m.init_state(&mut rng).unwrap();
            if s.page == PageId(0) {
                page0 += 1;
                if s.duration == Duration(2) {
                    d2_given_p0 += 1;
                }
            } else {
                assert_eq!(s.duration, Duration(1), "page 1 forces dwell 1");
            }
        }
        let fp = page0 as f64 / n as f64;
        assert!((fp - 0.5).abs() < 0.01, "page frequency {fp}");
        let fd = d2_given_p0 as f64 / page0 as f64;
        assert!((fd - 0.7).abs() < 0.01, "duration frequency {fd}");
    }

    #[test]
    fn step_fails_on_zero_transition_row() {
        let mut m = alternating_model(vec![1.0, 0.0]);
        m.transition[0] = vec![0.0, 0.0];
        let mut rng = SimRng::new(9);
        let s = UserState {
            page: PageId(0),
            duration: Duration(1),
        };
        let err = m.step(s, &mut rng).unwrap_err();
        assert!(matches!(err, ModelError::EmptyRow { table: "transition", row: 0 }));
    }
}
