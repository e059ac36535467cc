//! Problem and trajectory data model shared by every solver.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Components beyond this magnitude count as divergence, like NaN or infinity.
pub const DIVERGENCE_BOUND: f64 = 1e16;

/// Default sampling cap for ODE benchmark runs.
pub const ODE_SAMPLE_CAP: usize = 60_000;

/// Default sampling cap for semidiscretized PDE runs.
pub const PDE_SAMPLE_CAP: usize = 100;

/// Right-hand side `F(t, u)`, written into the output slice.
pub type Rhs = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Closed-form solution `t -> u(t)`.
pub type ExactSolution = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IvpError {
    #[error("run diverged at step {at_step}; errors are only defined for completed runs")]
    Diverged { at_step: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sample count mismatch: run has {run} samples, reference has {reference}")]
    SampleCountMismatch { run: usize, reference: usize },
    #[error("sample {index} is at t = {run}, reference is at t = {reference}")]
    TimeMismatch { index: usize, run: f64, reference: f64 },
}

/// Initial value problem `u' = F(t, u)`, `u(0) = initial`, on `[0, t_end]`.
#[derive(Clone)]
pub struct OdeProblem {
    pub name: String,
    /// Parameters that distinguish this instance (used for cache identity).
    pub params: Vec<(String, f64)>,
    pub dim: usize,
    pub t_end: f64,
    pub initial: Vec<f64>,
    rhs: Rhs,
    exact: Option<ExactSolution>,
}

impl OdeProblem {
    pub fn new<F>(name: impl Into<String>, t_end: f64, initial: Vec<f64>, rhs: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        assert!(!initial.is_empty(), "problem dimension must be positive");
        assert!(t_end > 0.0 && t_end.is_finite(), "t_end must be positive");
        OdeProblem {
            name: name.into(),
            params: Vec::new(),
            dim: initial.len(),
            t_end,
            initial,
            rhs: Arc::new(rhs),
            exact: None,
        }
    }

    pub fn with_exact<G>(mut self, exact: G) -> Self
    where
        G: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn with_param(mut self, name: impl Into<String>, value: f64) -> Self {
        self.params.push((name.into(), value));
        self
    }

    /// Same problem on a different horizon.
    pub fn with_t_end(mut self, t_end: f64) -> Self {
        assert!(t_end > 0.0 && t_end.is_finite(), "t_end must be positive");
        self.t_end = t_end;
        self
    }

    #[inline]
    pub fn rhs(&self, t: f64, u: &[f64], out: &mut [f64]) {
        (self.rhs)(t, u, out)
    }

    pub fn rhs_vec(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.rhs(t, u, &mut out);
        out
    }

    pub fn rhs_fn(&self) -> Rhs {
        Arc::clone(&self.rhs)
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact(&self, t: f64) -> Option<Vec<f64>> {
        self.exact.as_ref().map(|f| f(t))
    }

    /// Stable identifier: name plus a hash of parameters, dimension and horizon.
    pub fn problem_id(&self) -> String {
        let mut canon = format!("{}|{}|{:016x}", self.name, self.dim, self.t_end.to_bits());
        for (k, v) in &self.params {
            canon.push_str(&format!("|{}={:016x}", k, v.to_bits()));
        }
        format!("{}-{:016x}", self.name, fnv1a64(canon.as_bytes()))
    }

    /// Grid time `n * T / N`; returns `T` exactly at `n = N`.
    #[inline]
    pub fn grid_time(&self, n: usize, n_steps: usize) -> f64 {
        grid_time(self.t_end, n, n_steps)
    }
}

impl fmt::Debug for OdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeProblem")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("dim", &self.dim)
            .field("t_end", &self.t_end)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

#[inline]
pub fn grid_time(t_end: f64, n: usize, n_steps: usize) -> f64 {
    if n == n_steps {
        t_end
    } else {
        n as f64 * t_end / n_steps as f64
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// First step whose state failed [`check_finite`]; that state is not stored.
    Diverged { at_step: usize },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

/// Sampled result of a uniform-step integration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRun {
    pub step: f64,
    pub n_steps: usize,
    /// Grid indices `n` of the stored samples (`t = n * step`).
    pub sample_indices: Vec<usize>,
    pub sample_times: Vec<f64>,
    pub sample_states: Vec<Vec<f64>>,
    pub rhs_evals: u64,
    pub status: RunStatus,
}

impl TrajectoryRun {
    pub fn last_state(&self) -> Option<&[f64]> {
        self.sample_states.last().map(Vec::as_slice)
    }

    fn require_completed(&self) -> Result<(), IvpError> {
        match self.status {
            RunStatus::Completed => Ok(()),
            RunStatus::Diverged { at_step } => Err(IvpError::Diverged { at_step }),
        }
    }
}

/// Evenly spread indices into `0..=n_steps`, always including both ends.
///
/// Returns `min(n_steps + 1, max_samples)` strictly increasing indices
/// `round(j * n_steps / (S - 1))`.
pub fn sample_indices(n_steps: usize, max_samples: usize) -> Vec<usize> {
    assert!(max_samples >= 2, "max_samples must be at least 2");
    let count = (n_steps + 1).min(max_samples);
    if count == 1 {
        return vec![0];
    }
    let denom = (count - 1) as u128;
    let n = n_steps as u128;
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for j in 0..count as u128 {
        // round half up in exact integer arithmetic
        let idx = ((2 * j * n + denom) / (2 * denom)) as usize;
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    out
}

/// True iff every component is finite and bounded by `bound` in magnitude.
pub fn check_finite(u: &[f64], bound: f64) -> bool {
    u.iter().all(|x| x.is_finite() && x.abs() <= bound)
}

/// Component-wise `max_n |u_i^n - u_i(t_n)|` over the stored samples.
pub fn max_abs_error<F>(run: &TrajectoryRun, exact: F) -> Result<Vec<f64>, IvpError>
where
    F: Fn(f64) -> Vec<f64>,
{
    run.require_completed()?;
    let dim = run.sample_states.first().map_or(0, Vec::len);
    let mut err = vec![0.0; dim];
    for (t, state) in run.sample_times.iter().zip(&run.sample_states) {
        let reference = exact(*t);
        if reference.len() != dim {
            return Err(IvpError::DimensionMismatch { expected: dim, found: reference.len() });
        }
        accumulate_max_abs(&mut err, state, &reference);
    }
    Ok(err)
}

/// Component-wise max error against reference states sampled at the same times.
pub fn max_abs_error_against<S: AsRef<[f64]>>(
    run: &TrajectoryRun,
    reference_times: &[f64],
    reference_states: &[S],
) -> Result<Vec<f64>, IvpError> {
    run.require_completed()?;
    check_alignment(run, reference_times, reference_states)?;
    let dim = run.sample_states.first().map_or(0, Vec::len);
    let mut err = vec![0.0; dim];
    for (state, reference) in run.sample_states.iter().zip(reference_states) {
        accumulate_max_abs(&mut err, state, reference.as_ref());
    }
    Ok(err)
}

fn accumulate_max_abs(err: &mut [f64], state: &[f64], reference: &[f64]) {
    for ((e, a), b) in err.iter_mut().zip(state).zip(reference) {
        let d = (a - b).abs();
        if d > *e || d.is_nan() {
            *e = d;
        }
    }
}

/// `max_n |U^n - u(t_n)|` with `|.|` the Euclidean norm of the whole state.
pub fn euclidean_error<S: AsRef<[f64]>>(
    run: &TrajectoryRun,
    reference_times: &[f64],
    reference_states: &[S],
) -> Result<f64, IvpError> {
    let dim = run.sample_states.first().map_or(0, Vec::len);
    euclidean_error_blocks(run, reference_times, reference_states, dim.max(1)).map(|v| v[0])
}

/// Euclidean error per contiguous block of `block` components (one block per species).
pub fn euclidean_error_blocks<S: AsRef<[f64]>>(
    run: &TrajectoryRun,
    reference_times: &[f64],
    reference_states: &[S],
    block: usize,
) -> Result<Vec<f64>, IvpError> {
    run.require_completed()?;
    check_alignment(run, reference_times, reference_states)?;
    let dim = run.sample_states.first().map_or(0, Vec::len);
    if block == 0 || !dim.is_multiple_of(block) {
        return Err(IvpError::DimensionMismatch { expected: dim, found: block });
    }
    let mut err = vec![0.0f64; dim / block];
    for (state, reference) in run.sample_states.iter().zip(reference_states) {
        let reference = reference.as_ref();
        for (b, e) in err.iter_mut().enumerate() {
            let range = b * block..(b + 1) * block;
            let sq: f64 = state[range.clone()]
                .iter()
                .zip(&reference[range])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let norm = sq.sqrt();
            if norm > *e || norm.is_nan() {
                *e = norm;
            }
        }
    }
    Ok(err)
}

fn check_alignment<S: AsRef<[f64]>>(
    run: &TrajectoryRun,
    reference_times: &[f64],
    reference_states: &[S],
) -> Result<(), IvpError> {
    if reference_times.len() != run.sample_times.len()
        || reference_states.len() != run.sample_states.len()
    {
        return Err(IvpError::SampleCountMismatch {
            run: run.sample_times.len(),
            reference: reference_states.len().min(reference_times.len()),
        });
    }
    let scale = run.sample_times.last().copied().unwrap_or(1.0).abs().max(1e-300);
    for (index, (a, b)) in run.sample_times.iter().zip(reference_times).enumerate() {
        if (a - b).abs() > 1e-12 * scale {
            return Err(IvpError::TimeMismatch { index, run: *a, reference: *b });
        }
    }
    for (state, reference) in run.sample_states.iter().zip(reference_states) {
        if state.len() != reference.as_ref().len() {
            return Err(IvpError::DimensionMismatch {
                expected: state.len(),
                found: reference.as_ref().len(),
            });
        }
    }
    Ok(())
}

/// `ln(e_coarse / e_fine) / ln(k_coarse / k_fine)`; `None` when undefined.
pub fn observed_order(e_coarse: f64, k_coarse: f64, e_fine: f64, k_fine: f64) -> Option<f64> {
    let valid = |x: f64| x.is_finite() && x > 0.0;
    if !(valid(e_coarse) && valid(e_fine) && valid(k_coarse) && valid(k_fine)) || k_coarse == k_fine {
        return None;
    }
    Some((e_coarse / e_fine).ln() / (k_coarse / k_fine).ln())
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub step: f64,
    /// One entry per solution component (or species); NaN when diverged.
    pub errors: Vec<f64>,
    /// Orders against the previous (coarser) row, when that row exists.
    pub orders: Option<Vec<Option<f64>>>,
    pub diverged: bool,
}

impl ConvergenceRecord {
    /// Builds table rows from `(k, errors)` cells ordered coarse to fine;
    /// `None` errors mark diverged cells. Orders pair each row with the one above.
    pub fn table(cells: Vec<(f64, Option<Vec<f64>>)>) -> Vec<ConvergenceRecord> {
        let mut rows: Vec<ConvergenceRecord> = Vec::with_capacity(cells.len());
        let width = cells
            .iter()
            .find_map(|(_, e)| e.as_ref().map(Vec::len))
            .unwrap_or(0);
        for (step, errors) in cells {
            let diverged = errors.is_none();
            let errors = errors.unwrap_or_else(|| vec![f64::NAN; width]);
            let orders = rows.last().map(|prev| {
                prev.errors
                    .iter()
                    .zip(&errors)
                    .map(|(ec, ef)| observed_order(*ec, prev.step, *ef, step))
                    .collect()
            });
            rows.push(ConvergenceRecord { step, errors, orders, diverged });
        }
        rows
    }
}
