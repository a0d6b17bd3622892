//! Synthetic scenario factories: seven two-user benchmark cases plus a tiny
//! toy configuration.
//!
//! The seven cases differ in how the page supports of the two users relate
//! (fixed disjoint blocks, random possibly-overlapping subsets, or a random
//! main support plus a weaker auxiliary one) and in whether the users share
//! one output table or get personalized ones:
//!
//! | case | page supports                      | output tables            |
//! |------|------------------------------------|--------------------------|
//! | 1    | disjoint blocks `[0,a)` / `[a,n)`  | same sparsity as pages   |
//! | 2    | disjoint blocks                    | random disjoint supports |
//! | 3    | disjoint blocks                    | shared                   |
//! | 4    | random `a`-subsets per user        | personalized             |
//! | 5    | random `a`-subsets per user        | shared                   |
//! | 6    | random main + auxiliary, total `a` | personalized             |
//! | 7    | random main + auxiliary, total `a` | shared                   |
//!
//! Transition rows carry a discretized Beta profile over the support so some
//! pages are clearly preferred. In cases 6 and 7 each row splits its mass
//! 0.8/0.2 between the main and auxiliary blocks, with a fresh Beta draw for
//! each block. Duration rows are uniform over `1..=q` everywhere.

use thiserror::Error;

use crate::interleave::{InterleaveError, TurnScheduler};
use crate::model::{ModelError, ScenarioDims, UserModel};
use crate::rng::SimRng;

/// Fixed turn shares used by the two-user benchmarks.
pub const BENCH_ALPHA: [f64; 2] = [0.4, 0.6];

/// Scheduler flavor for a generated scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedMode {
    Shares,
    Matrix,
}

/// Which benchmark case to generate, at which dimensions.
#[derive(Clone, Copy, Debug)]
pub struct CaseSpec {
    pub case: u8,
    pub n: usize,
    pub a: usize,
    pub q: usize,
    pub mode: SchedMode,
}

impl CaseSpec {
    /// The benchmark dimensions: 20 pages, supports of 10, dwell up to 5.
    pub fn standard(case: u8, mode: SchedMode) -> Self {
        CaseSpec {
            case,
            n: 20,
            a: 10,
            q: 5,
            mode,
        }
    }
}

/// A complete generated scenario: per-user models plus the turn process.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParams {
    pub dims: ScenarioDims,
    pub models: Vec<UserModel>,
    pub sched: TurnScheduler,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.models.len() != self.dims.m {
            return Err(SynthError::WrongUserCount {
                expected: self.dims.m,
                got: self.models.len(),
            });
        }
        for model in &self.models {
            model.validate(self.dims)?;
        }
        self.sched.validate(self.dims.m)?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown case {case}, expected 1..=7")]
    UnknownCase { case: u8 },
    #[error("beta shape parameters must be positive, got ({shape_a}, {shape_b})")]
    InvalidShape { shape_a: f64, shape_b: f64 },
    #[error("cannot discretize over zero bins")]
    EmptyGrid,
    #[error("support size {a} invalid for {n} columns")]
    SupportSize { a: usize, n: usize },
    #[error("case {case} needs disjoint supports, impossible for a={a}, n={n}")]
    DisjointImpossible { case: u8, a: usize, n: usize },
    #[error("durations need q >= 1")]
    ZeroDurations,
    #[error("expected {expected} user models, got {got}")]
    WrongUserCount { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scheduler(#[from] InterleaveError),
}

/// Evaluates the Beta(`shape_a`, `shape_b`) density shape at the `k` midpoints
/// `(i + 0.5) / k` and normalizes to a probability row. The midpoint grid
/// keeps every value finite even when the density blows up at an endpoint.
pub fn discretized_beta_row(shape_a: f64, shape_b: f64, k: usize) -> Result<Vec<f64>, SynthError> {
    if k == 0 {
        return Err(SynthError::EmptyGrid);
    }
    if !(shape_a > 0.0) || !(shape_b > 0.0) {
        return Err(SynthError::InvalidShape { shape_a, shape_b });
    }
    let mut row = Vec::with_capacity(k);
    for i in 0..k {
        let x = (i as f64 + 0.5) / k as f64;
        row.push(x.powf(shape_a - 1.0) * (1.0 - x).powf(shape_b - 1.0));
    }
    let total: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= total;
    }
    Ok(row)
}

/// A row with `a` uniformly chosen nonzero columns, each carrying `1/a`.
/// Consumes `a` draws.
pub fn gen_output_row(n: usize, a: usize, rng: &mut SimRng) -> Result<Vec<f64>, SynthError> {
    if a == 0 || a > n {
        return Err(SynthError::SupportSize { a, n });
    }
    Ok(scatter(n, &rng.subset(n, a), &vec![1.0 / a as f64; a]))
}

/// Random turn matrix: each diagonal entry is drawn uniformly from
/// `[0.5, 1.0)`, the rest of the row mass is spread over the off-diagonal
/// entries proportionally to fresh uniform draws. `m = 1` yields `[[1.0]]`.
pub fn gen_turn_matrix(m: usize, rng: &mut SimRng) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; m]; m];
    for i in 0..m {
        if m == 1 {
            a[i][i] = 1.0;
            continue;
        }
        let diag = 0.5 + 0.5 * rng.next_f64();
        a[i][i] = diag;
        loop {
            let xs: Vec<f64> = (0..m - 1).map(|_| rng.next_f64()).collect();
            let s: f64 = xs.iter().sum();
            if s == 0.0 {
                continue;
            }
            let mut it = xs.into_iter();
            for j in 0..m {
                if j != i {
                    a[i][j] = (1.0 - diag) * it.next().unwrap() / s;
                }
            }
            break;
        }
    }
    a
}

fn scatter(n: usize, cols: &[usize], values: &[f64]) -> Vec<f64> {
    let mut row = vec![0.0; n];
    for (&c, &v) in cols.iter().zip(values) {
        row[c] = v;
    }
    row
}

fn uniform_support_row(n: usize, support: &[usize]) -> Vec<f64> {
    scatter(n, support, &vec![1.0 / support.len() as f64; support.len()])
}

/// Draws jittered Beta shapes `(base_a + e, base_b + e')` with the jitters
/// uniform in `[lo, hi)`, redrawing the pair in the (measure-zero) event that
/// a shape is not positive.
fn jittered_shapes(base_a: f64, base_b: f64, lo: f64, hi: f64, rng: &mut SimRng) -> (f64, f64) {
    loop {
        let sa = base_a + rng.range_f64(lo, hi);
        let sb = base_b + rng.range_f64(lo, hi);
        if sa > 0.0 && sb > 0.0 {
            return (sa, sb);
        }
    }
}

/// Page support of one user: a single block, or a main block plus a weaker
/// auxiliary block.
#[derive(Clone, Debug)]
enum PageSupport {
    Single(Vec<usize>),
    Split { main: Vec<usize>, aux: Vec<usize> },
}

impl PageSupport {
    fn columns(&self) -> Vec<usize> {
        match self {
            PageSupport::Single(cols) => cols.clone(),
            PageSupport::Split { main, aux } => {
                let mut all: Vec<usize> = main.iter().chain(aux).copied().collect();
                all.sort_unstable();
                all
            }
        }
    }
}

/// One transition row over `n` columns for the given support. Beta profile
/// over a single block; 0.8/0.2 main/auxiliary mass split with independent
/// Beta profiles for a split support.
fn transition_row(n: usize, support: &PageSupport, rng: &mut SimRng) -> Result<Vec<f64>, SynthError> {
    match support {
        PageSupport::Single(cols) => {
            let (sa, sb) = jittered_shapes(3.0, 1.0, -1.0, 1.0, rng);
            Ok(scatter(n, cols, &discretized_beta_row(sa, sb, cols.len())?))
        }
        PageSupport::Split { main, aux } => {
            let (sa, sb) = jittered_shapes(3.0, 1.0, -1.0, 1.0, rng);
            let mut row = scatter(n, main, &discretized_beta_row(sa, sb, main.len())?);
            for v in row.iter_mut() {
                *v *= 0.8;
            }
            if !aux.is_empty() {
                let (sa2, sb2) = jittered_shapes(2.0, 2.0, -1.0, 1.0, rng);
                let aux_beta = discretized_beta_row(sa2, sb2, aux.len())?;
                for (&c, &v) in aux.iter().zip(&aux_beta) {
                    row[c] = 0.2 * v;
                }
            }
            let total: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= total;
            }
            Ok(row)
        }
    }
}

/// Main support of random size `s ~ Uniform{1..=a}` plus a disjoint auxiliary
/// support of size `a - s`. Draw order: `s`, main subset, auxiliary subset.
fn split_support(n: usize, a: usize, rng: &mut SimRng) -> PageSupport {
    let s = 1 + rng.index(a);
    let main = rng.subset(n, s);
    let remaining: Vec<usize> = (0..n).filter(|c| !main.contains(c)).collect();
    let aux = if a - s > 0 {
        rng.subset(remaining.len(), a - s)
            .into_iter()
            .map(|i| remaining[i])
            .collect()
    } else {
        Vec::new()
    };
    PageSupport::Split { main, aux }
}

/// Generates one two-user benchmark scenario.
///
/// Draw order: page supports (user 0, user 1), output supports (case 2 only),
/// transition rows (user 0 rows `0..n`, then user 1), output rows (shared
/// table once, or user 0 then user 1), scheduler (matrix mode only).
pub fn gen_case(spec: &CaseSpec, rng: &mut SimRng) -> Result<ScenarioParams, SynthError> {
    let CaseSpec { case, n, a, q, mode } = *spec;
    if !(1..=7).contains(&case) {
        return Err(SynthError::UnknownCase { case });
    }
    if q == 0 {
        return Err(SynthError::ZeroDurations);
    }
    if a == 0 || a > n {
        return Err(SynthError::SupportSize { a, n });
    }
    if (1..=3).contains(&case) && a >= n {
        return Err(SynthError::DisjointImpossible { case, a, n });
    }
    if case == 2 && 2 * a > n {
        return Err(SynthError::DisjointImpossible { case, a, n });
    }

    let page_supports: Vec<PageSupport> = match case {
        1..=3 => vec![
            PageSupport::Single((0..a).collect()),
            PageSupport::Single((a..n).collect()),
        ],
        4 | 5 => (0..2).map(|_| PageSupport::Single(rng.subset(n, a))).collect(),
        _ => (0..2).map(|_| split_support(n, a, rng)).collect(),
    };

    // Case 2: one fixed output support per user, disjoint between users.
    let output_pools: Option<Vec<Vec<usize>>> = if case == 2 {
        let pool0 = rng.subset(n, a);
        let remaining: Vec<usize> = (0..n).filter(|c| !pool0.contains(c)).collect();
        let pool1: Vec<usize> = rng
            .subset(remaining.len(), a)
            .into_iter()
            .map(|i| remaining[i])
            .collect();
        Some(vec![pool0, pool1])
    } else {
        None
    };

    let mut transitions = Vec::with_capacity(2);
    for support in &page_supports {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            rows.push(transition_row(n, support, rng)?);
        }
        transitions.push(rows);
    }

    let outputs: Vec<Vec<Vec<f64>>> = match case {
        1 => page_supports
            .iter()
            .map(|s| {
                let cols = s.columns();
                (0..n).map(|_| uniform_support_row(n, &cols)).collect()
            })
            .collect(),
        2 => output_pools
            .as_ref()
            .unwrap()
            .iter()
            .map(|pool| (0..n).map(|_| uniform_support_row(n, pool)).collect())
            .collect(),
        3 | 5 | 7 => {
            let shared: Vec<Vec<f64>> = (0..n)
                .map(|_| gen_output_row(n, a, rng))
                .collect::<Result<_, _>>()?;
            vec![shared.clone(), shared]
        }
        _ => {
            let mut per_user = Vec::with_capacity(2);
            for _ in 0..2 {
                let table: Vec<Vec<f64>> = (0..n)
                    .map(|_| gen_output_row(n, a, rng))
                    .collect::<Result<_, _>>()?;
                per_user.push(table);
            }
            per_user
        }
    };

    let duration_rows: Vec<Vec<f64>> = vec![vec![1.0 / q as f64; q]; n];
    let models: Vec<UserModel> = transitions
        .into_iter()
        .zip(outputs)
        .map(|(transition, output)| UserModel {
            transition,
            duration_dist: duration_rows.clone(),
            output,
        })
        .collect();

    let sched = match mode {
        SchedMode::Shares => TurnScheduler::Shares {
            alpha: BENCH_ALPHA.to_vec(),
        },
        SchedMode::Matrix => TurnScheduler::Matrix {
            matrix: gen_turn_matrix(2, rng),
        },
    };

    let params = ScenarioParams {
        dims: ScenarioDims { m: 2, n, q },
        models,
        sched,
    };
    params.validate()?;
    Ok(params)
}

/// Tiny two-user toy: each user keeps returning to its own page (page `i` for
/// user `i`), dwells are uniform on `{1, 2}`, and both users share one output
/// table. Page `i`'s output row is a discretized `Beta(3 + e, 1 + d)` over the
/// two requests with `e, d ~ Uniform[0, 1)`, assigned to the two requests in a
/// random order, so a page may favor either request.
///
/// Draw order per output row: `e`, `d`, orientation. Turn shares are fixed at
/// `(0.4, 0.6)`.
pub fn gen_toy(rng: &mut SimRng) -> ScenarioParams {
    let mut output = Vec::with_capacity(2);
    for _ in 0..2 {
        let e = rng.next_f64();
        let d = rng.next_f64();
        let base = discretized_beta_row(3.0 + e, 1.0 + d, 2).expect("shapes are positive");
        let row = if rng.index(2) == 1 {
            vec![base[1], base[0]]
        } else {
            base
        };
        output.push(row);
    }
    let models = (0..2)
        .map(|i| {
            let mut onehot = vec![0.0; 2];
            onehot[i] = 1.0;
            UserModel {
                transition: vec![onehot.clone(), onehot],
                duration_dist: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                output: output.clone(),
            }
        })
        .collect();
    ScenarioParams {
        dims: ScenarioDims { m: 2, n: 2, q: 2 },
        models,
        sched: TurnScheduler::Shares {
            alpha: BENCH_ALPHA.to_vec(),
        },
    }
}
