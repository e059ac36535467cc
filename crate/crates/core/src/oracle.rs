//! Reference trajectories by step-doubling self-convergence, with a file cache.
//!
//! The generator integrates at `N, 2N, 4N, …` until two consecutive runs agree
//! to the requested tolerance (maximum over samples of the Euclidean
//! difference). Sample times must lie on the starting grid, so every finer
//! grid contains them and no interpolation is needed.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ivp::{self, OdeProblem};
use crate::steppers::{integrate_at_indices, StepperKind};

/// Environment variable naming the cache directory.
pub const CACHE_ENV: &str = "HDC_REF_CACHE";

/// Default budget on the total number of steps across all doublings.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

/// Agreement below this times the largest state norm counts as roundoff; two
/// doublings there without halving the agreement end the search.
pub const ROUNDOFF_FLOOR: f64 = 1e5 * f64::EPSILON;

const MAGIC: &[u8; 4] = b"HDC1";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("step budget exhausted at N = {n_steps}; best agreement {agreement:e}")]
    BudgetExhausted { n_steps: usize, agreement: f64, best: Option<Box<ReferenceTrajectory>> },
    /// Agreement stopped shrinking at the roundoff floor before reaching `tol`.
    #[error("agreement stalled at {agreement:e} (N = {n_steps}), above the requested tolerance")]
    Stalled { n_steps: usize, agreement: f64, best: Option<Box<ReferenceTrajectory>> },
    #[error("reference generation diverged at N = {n_steps}; start from a larger N")]
    Diverged { n_steps: usize },
    #[error("sample time {time} is not on the grid of N = {n_steps} steps over [0, {t_end}]")]
    Misaligned { time: f64, n_steps: usize, t_end: f64 },
    #[error("reference has no sample at t = {0}")]
    MissingTime(f64),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub problem_id: String,
    pub sample_times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Max-over-samples Euclidean difference between the two finest runs.
    pub agreement: f64,
    pub generator: StepperKind,
    pub n_steps_finest: usize,
    /// Agreement after each doubling, coarse to fine.
    pub agreements: Vec<f64>,
}

impl ReferenceTrajectory {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Reference state at `t`, matched to a stored sample within `1e-12 T`.
    pub fn state_at(&self, t: f64) -> Option<&[f64]> {
        let scale = self.sample_times.last().copied().unwrap_or(1.0).abs().max(1e-300);
        let i = self.sample_times.partition_point(|&s| s < t - 1e-12 * scale);
        self.sample_times
            .get(i)
            .filter(|&&s| (s - t).abs() <= 1e-12 * scale)
            .map(|_| self.states[i].as_slice())
    }

    /// Reference states at each of `times`.
    pub fn states_at(&self, times: &[f64]) -> Result<Vec<&[f64]>, OracleError> {
        times
            .iter()
            .map(|&t| self.state_at(t).ok_or(OracleError::MissingTime(t)))
            .collect()
    }

    pub fn covers(&self, times: &[f64]) -> bool {
        times.iter().all(|&t| self.state_at(t).is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSpec {
    pub tol: f64,
    pub generator: StepperKind,
    /// Starting step count; must be stable for the generator.
    pub start_steps: usize,
    pub step_budget: u64,
}

impl ReferenceSpec {
    pub fn new(tol: f64, start_steps: usize) -> Self {
        ReferenceSpec { tol, generator: StepperKind::Dc6Rk24, start_steps, step_budget: DEFAULT_STEP_BUDGET }
    }
}

/// Grid indices of `times` on `N` uniform steps over `[0, t_end]`.
pub fn grid_indices(times: &[f64], t_end: f64, n_steps: usize) -> Result<Vec<usize>, OracleError> {
    let mut out: Vec<usize> = times
        .iter()
        .map(|&t| {
            let x = t * n_steps as f64 / t_end;
            let idx = x.round();
            if !(0.0..=n_steps as f64).contains(&idx) || (x - idx).abs() > 1e-6 {
                Err(OracleError::Misaligned { time: t, n_steps, t_end })
            } else {
                Ok(idx as usize)
            }
        })
        .collect::<Result<_, _>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Sample times of a run with `n_steps` steps capped at `max_samples`, as [`crate::steppers::integrate`] stores them.
pub fn run_sample_times(t_end: f64, n_steps: usize, max_samples: usize) -> Vec<f64> {
    ivp::sample_indices(n_steps, max_samples)
        .into_iter()
        .map(|n| ivp::grid_time(t_end, n, n_steps))
        .collect()
}

/// Sorted union of several sample-time sets.
pub fn merge_times(sets: &[Vec<f64>]) -> Vec<f64> {
    let mut all: Vec<f64> = sets.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    let scale = all.last().copied().unwrap_or(1.0).abs().max(1e-300);
    all.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * scale);
    all
}

/// Least common multiple, for choosing a reference grid that contains every table grid.
pub fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    a / gcd(a, b) * b
}

fn max_euclidean_difference(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .fold(0.0, |m: f64, d| if d.is_nan() { f64::NAN } else { m.max(d) })
}

/// Generates a reference by doubling `N` until consecutive runs agree to `spec.tol`.
pub fn reference_trajectory(
    problem: &OdeProblem,
    sample_times: &[f64],
    spec: &ReferenceSpec,
) -> Result<ReferenceTrajectory, OracleError> {
    assert!(spec.tol > 0.0, "tolerance must be positive");
    assert!(spec.start_steps >= 1, "start_steps must be positive");
    let mut n = spec.start_steps;
    let indices = grid_indices(sample_times, problem.t_end, n)?;
    let mut used: u64 = 0;
    let mut previous: Option<Vec<Vec<f64>>> = None;
    let mut agreements = Vec::new();
    let mut best: Option<ReferenceTrajectory> = None;
    let mut factor = 1usize;
    loop {
        if used.saturating_add(n as u64) > spec.step_budget {
            let agreement = agreements.last().copied().unwrap_or(f64::INFINITY);
            return Err(OracleError::BudgetExhausted { n_steps: n, agreement, best: best.map(Box::new) });
        }
        let scaled: Vec<usize> = indices.iter().map(|i| i * factor).collect();
        let run = integrate_at_indices(problem, spec.generator, n, &scaled);
        used += n as u64;
        if !run.status.is_completed() {
            return Err(OracleError::Diverged { n_steps: n });
        }
        let states = run.sample_states;
        let times = run.sample_times;
        if let Some(prev) = previous.take() {
            let agreement = max_euclidean_difference(&prev, &states);
            agreements.push(agreement);
            let candidate = ReferenceTrajectory {
                problem_id: problem.problem_id(),
                sample_times: times,
                states: states.clone(),
                agreement,
                generator: spec.generator,
                n_steps_finest: n,
                agreements: agreements.clone(),
            };
            if agreement <= spec.tol {
                return Ok(candidate);
            }
            let scale = states.iter().map(|s| s.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(1.0, f64::max);
            let stalled = agreements.len() >= 3
                && agreement <= ROUNDOFF_FLOOR * scale
                && agreements[agreements.len() - 3..].windows(2).all(|w| w[1] > 0.5 * w[0]);
            if best.as_ref().is_none_or(|b| agreement < b.agreement || b.agreement.is_nan()) {
                best = Some(candidate);
            }
            if stalled {
                return Err(OracleError::Stalled { n_steps: n, agreement, best: best.map(Box::new) });
            }
        }
        previous = Some(states);
        n *= 2;
        factor *= 2;
    }
}

/// Cache file for a problem id inside `dir`.
pub fn cache_path(dir: &Path, problem_id: &str) -> PathBuf {
    dir.join(format!("{problem_id}.ref"))
}

/// Cache directory from [`CACHE_ENV`], if set and nonempty.
pub fn cache_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn encode(reference: &ReferenceTrajectory) -> Vec<u8> {
    let dim = reference.dim();
    let mut buf = Vec::with_capacity(64 + 8 * reference.sample_times.len() * (dim + 1));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(dim as u64).to_le_bytes());
    buf.extend_from_slice(&(reference.sample_times.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(reference.problem_id.len() as u64).to_le_bytes());
    buf.extend_from_slice(reference.problem_id.as_bytes());
    buf.extend_from_slice(&reference.agreement.to_le_bytes());
    buf.extend_from_slice(&(reference.n_steps_finest as u64).to_le_bytes());
    buf.push(reference.generator.tag());
    buf.extend_from_slice(&(reference.agreements.len() as u64).to_le_bytes());
    for a in &reference.agreements {
        buf.extend_from_slice(&a.to_le_bytes());
    }
    for t in &reference.sample_times {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    for s in &reference.states {
        for x in s {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let sum = ivp::fnv1a64(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn len(&mut self) -> Option<usize> {
        usize::try_from(self.u64()?).ok()
    }
}

fn decode(bytes: &[u8]) -> Option<ReferenceTrajectory> {
    let body_len = bytes.len().checked_sub(8)?;
    let (body, tail) = bytes.split_at(body_len);
    if ivp::fnv1a64(body) != u64::from_le_bytes(tail.try_into().ok()?) {
        return None;
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return None;
    }
    let dim = r.len()?;
    let count = r.len()?;
    let id_len = r.len()?;
    let problem_id = String::from_utf8(r.take(id_len)?.to_vec()).ok()?;
    let agreement = r.f64()?;
    let n_steps_finest = r.len()?;
    let generator = StepperKind::from_tag(r.take(1)?[0])?;
    let n_agreements = r.len()?;
    let agreements = (0..n_agreements).map(|_| r.f64()).collect::<Option<Vec<_>>>()?;
    let sample_times = (0..count).map(|_| r.f64()).collect::<Option<Vec<_>>>()?;
    let states = (0..count)
        .map(|_| (0..dim).map(|_| r.f64()).collect::<Option<Vec<_>>>())
        .collect::<Option<Vec<_>>>()?;
    if r.pos != body.len() {
        return None;
    }
    Some(ReferenceTrajectory { problem_id, sample_times, states, agreement, generator, n_steps_finest, agreements })
}

/// Writes `<dir>/<problem_id>.ref` through a temporary file and a rename.
pub fn cache_store(reference: &ReferenceTrajectory, dir: &Path) -> Result<PathBuf, OracleError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| OracleError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = cache_path(dir, &reference.problem_id);
    let tmp = dir.join(format!(".{}.{}.tmp", reference.problem_id, std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(&encode(reference)).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    drop(file);
    fs::rename(&tmp, &path).map_err(io_err(&path))?;
    Ok(path)
}

/// Loads a cached reference; missing, corrupt or mismatched files are a miss.
pub fn cache_load(problem_id: &str, dir: &Path) -> Result<Option<ReferenceTrajectory>, OracleError> {
    let path = cache_path(dir, problem_id);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(source) => return Err(OracleError::Io { path, source }),
    };
    Ok(decode(&bytes).filter(|r| r.problem_id == problem_id))
}

/// Loads a usable cached reference or generates (and caches) a fresh one.
///
/// A cached entry is usable when it covers `sample_times`, used the same
/// generator and met `spec.tol`.
pub fn reference_cached(
    problem: &OdeProblem,
    sample_times: &[f64],
    spec: &ReferenceSpec,
    dir: Option<&Path>,
) -> Result<ReferenceTrajectory, OracleError> {
    let id = problem.problem_id();
    if let Some(dir) = dir {
        if let Some(hit) = cache_load(&id, dir)? {
            if hit.generator == spec.generator && hit.agreement <= spec.tol && hit.covers(sample_times) {
                return Ok(hit);
            }
        }
    }
    let fresh = reference_trajectory(problem, sample_times, spec)?;
    if let Some(dir) = dir {
        cache_store(&fresh, dir)?;
    }
    Ok(fresh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;

    fn sample_reference() -> ReferenceTrajectory {
        ReferenceTrajectory {
            problem_id: "demo-0123".into(),
            sample_times: vec![0.0, 0.5, 1.0],
            states: vec![vec![1.0, -0.0], vec![f64::MIN_POSITIVE, 1e300], vec![std::f64::consts::PI, -2.5]],
            agreement: 3.2e-13,
            generator: StepperKind::Dc6Rk24,
            n_steps_finest: 4096,
            agreements: vec![1e-6, 3e-10, 3.2e-13],
        }
    }

    #[test]
    fn zero_rhs_converges_at_first_doubling() {
        let problem = OdeProblem::new("still", 2.0, vec![1.0, 2.0], |_, _, out: &mut [f64]| out.fill(0.0));
        let times = run_sample_times(2.0, 8, 9);
        let r = reference_trajectory(&problem, &times, &ReferenceSpec::new(1e-14, 8)).unwrap();
        assert_eq!(r.agreement, 0.0);
        assert_eq!(r.n_steps_finest, 16);
        assert_eq!(r.agreements.len(), 1);
        assert!(r.states.iter().all(|s| s == &vec![1.0, 2.0]));
    }

    #[test]
    fn oscillatory_reference_matches_exact() {
        let tol = 1e-12;
        let problem = problems::oscillatory(1.0).with_t_end(10.0);
        let times = run_sample_times(10.0, 1000, 101);
        let r = reference_trajectory(&problem, &times, &ReferenceSpec::new(tol, 1000)).unwrap();
        assert!(r.agreement <= tol);
        for (t, s) in r.sample_times.iter().zip(&r.states) {
            let e = problem.exact(*t).unwrap();
            assert!((s[0] - e[0]).abs() <= 10.0 * tol * e[0].abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn agreements_shrink_by_order_six_factor() {
        let problem = problems::bernoulli();
        let times = run_sample_times(10.0, 100_000, 101);
        let spec = ReferenceSpec::new(1e-11, 100_000);
        let r = reference_trajectory(&problem, &times, &spec).unwrap();
        assert!(r.agreements.len() >= 3, "{:?}", r.agreements);
        for w in r.agreements[..3].windows(2) {
            assert!(w[0] / w[1] >= 32.0, "{:?}", r.agreements);
        }
        for (t, s) in r.sample_times.iter().zip(&r.states) {
            assert!((s[0] - problems::bernoulli_exact(*t)).abs() <= 1e-10);
        }
    }

    #[test]
    fn roundoff_floor_stops_the_search() {
        let problem = problems::bernoulli();
        let times = run_sample_times(10.0, 400_000, 11);
        match reference_trajectory(&problem, &times, &ReferenceSpec::new(1e-16, 400_000)) {
            Err(OracleError::Stalled { n_steps, agreement, best }) => {
                assert!(n_steps < 100_000_000, "{n_steps}");
                assert!(agreement < 1e-10);
                assert!(best.is_some());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn divergence_and_budget() {
        let problem = problems::b5(5000.0);
        let times = vec![0.0, 20.0];
        assert!(matches!(
            reference_trajectory(&problem, &times, &ReferenceSpec::new(1e-10, 100)),
            Err(OracleError::Diverged { n_steps: 100 })
        ));
        let slow = problems::oscillatory(10.0).with_t_end(10.0);
        let mut spec = ReferenceSpec::new(1e-15, 100);
        spec.step_budget = 1000;
        match reference_trajectory(&slow, &[0.0, 10.0], &spec) {
            Err(OracleError::BudgetExhausted { best, agreement, .. }) => {
                assert!(agreement > 1e-15);
                assert_eq!(best.unwrap().n_steps_finest, 400);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn misaligned_times_rejected() {
        let problem = problems::bernoulli();
        let err = reference_trajectory(&problem, &[0.0, 0.123456789], &ReferenceSpec::new(1e-10, 100));
        assert!(matches!(err, Err(OracleError::Misaligned { .. })));
    }

    #[test]
    fn time_lookup() {
        let r = sample_reference();
        assert_eq!(r.state_at(0.5).unwrap(), &[f64::MIN_POSITIVE, 1e300]);
        assert!(r.state_at(0.25).is_none());
        assert!(r.covers(&[0.0, 1.0]));
        assert!(matches!(r.states_at(&[0.7]), Err(OracleError::MissingTime(_))));
        assert_eq!(merge_times(&[vec![0.0, 0.5], vec![0.5, 1.0]]), vec![0.0, 0.5, 1.0]);
        assert_eq!(lcm(500, 800), 4000);
        assert_eq!(lcm(4000, 1200), 12000);
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample_reference();
        let path = cache_store(&r, dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), "demo-0123.ref");
        let back = cache_load("demo-0123", dir.path()).unwrap().unwrap();
        assert_eq!(back.problem_id, r.problem_id);
        assert_eq!(back.generator, r.generator);
        assert_eq!(back.n_steps_finest, r.n_steps_finest);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.sample_times), bits(&r.sample_times));
        assert_eq!(bits(&back.agreements), bits(&r.agreements));
        assert_eq!(back.agreement.to_bits(), r.agreement.to_bits());
        for (a, b) in back.states.iter().zip(&r.states) {
            assert_eq!(bits(a), bits(b));
        }
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn cache_misses() {
        let dir = tempfile::tempdir().unwrap();
        assert!(cache_load("absent", dir.path()).unwrap().is_none());
        let r = sample_reference();
        let path = cache_store(&r, dir.path()).unwrap();
        // a file renamed to another id is a miss
        fs::copy(&path, cache_path(dir.path(), "other")).unwrap();
        assert!(cache_load("other", dir.path()).unwrap().is_none());
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        fs::write(&path, &bytes).unwrap();
        assert!(cache_load("demo-0123", dir.path()).unwrap().is_none());
        fs::write(&path, b"HDC1").unwrap();
        assert!(cache_load("demo-0123", dir.path()).unwrap().is_none());
    }

    #[test]
    fn cached_generation_reuses_file() {
        let dir = tempfile::tempdir().unwrap();
        let problem = problems::oscillatory(1.0).with_t_end(1.0);
        let times = run_sample_times(1.0, 50, 11);
        let spec = ReferenceSpec::new(1e-12, 50);
        let first = reference_cached(&problem, &times, &spec, Some(dir.path())).unwrap();
        assert!(cache_path(dir.path(), &problem.problem_id()).exists());
        let second = reference_cached(&problem, &times, &spec, Some(dir.path())).unwrap();
        assert_eq!(first, second);
    }
}
