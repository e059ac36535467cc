//! Explicit one-step methods and the uniform-step driver.
//!
//! [`StepperKind::Dc6Rk24`] is the hybrid deferred-correction scheme: five
//! RK4 substeps of size `h = k/5` give states `v_0..v_5` on `[t, t+k]`, two
//! difference stencils turn them into correction terms `a` and `b`, and the
//! step itself is an explicit midpoint update
//!
//! ```text
//! u_next = u + a + k F(t + k/2, u + (k/2) F(t, u) + b)
//! ```
//!
//! where `F(t, u)` is shared with the first RK4 substep, for 21 evaluations.

use std::fmt;
use std::ops::{Add, Div, Mul};
use std::str::FromStr;
use std::sync::OnceLock;

use num_traits::{FromPrimitive, Zero};

use crate::ivp::{self, check_finite, OdeProblem, RunStatus, TrajectoryRun, DIVERGENCE_BOUND};
use crate::rational::Surd21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepperKind {
    Rk2Midpoint,
    Rk4,
    Rk6,
    Dc6Rk24,
}

impl StepperKind {
    pub const ALL: [StepperKind; 4] =
        [StepperKind::Rk2Midpoint, StepperKind::Rk4, StepperKind::Rk6, StepperKind::Dc6Rk24];

    pub fn evals_per_step(self) -> u64 {
        match self {
            StepperKind::Rk2Midpoint => 2,
            StepperKind::Rk4 => 4,
            StepperKind::Rk6 => 7,
            StepperKind::Dc6Rk24 => 21,
        }
    }

    /// Short machine name, as accepted by [`FromStr`].
    pub fn name(self) -> &'static str {
        match self {
            StepperKind::Rk2Midpoint => "rk2",
            StepperKind::Rk4 => "rk4",
            StepperKind::Rk6 => "rk6",
            StepperKind::Dc6Rk24 => "dc6rk24",
        }
    }

    /// Display label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            StepperKind::Rk2Midpoint => "RK2",
            StepperKind::Rk4 => "RK4",
            StepperKind::Rk6 => "RK6",
            StepperKind::Dc6Rk24 => "DC6RK2/4",
        }
    }

    /// Classical order of accuracy.
    pub fn order(self) -> u32 {
        match self {
            StepperKind::Rk2Midpoint => 2,
            StepperKind::Rk4 => 4,
            StepperKind::Rk6 | StepperKind::Dc6Rk24 => 6,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            StepperKind::Rk2Midpoint => 0,
            StepperKind::Rk4 => 1,
            StepperKind::Rk6 => 2,
            StepperKind::Dc6Rk24 => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<StepperKind> {
        StepperKind::ALL.into_iter().find(|k| k.tag() == tag)
    }
}

impl fmt::Display for StepperKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown method `{0}` (expected one of rk2, rk4, rk6, dc6rk24)")]
pub struct UnknownMethod(pub String);

impl FromStr for StepperKind {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "rk2" | "midpoint" | "rk2midpoint" => Ok(StepperKind::Rk2Midpoint),
            "rk4" => Ok(StepperKind::Rk4),
            "rk6" | "luther" => Ok(StepperKind::Rk6),
            "dc6rk24" | "dc6" | "dc6rk2" => Ok(StepperKind::Dc6Rk24),
            _ => Err(UnknownMethod(s.to_string())),
        }
    }
}

/// Six-point difference stencil `(num/den) Σ w_i v_i` over substep states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stencil {
    pub weights: [i32; 6],
    pub num: i32,
    pub den: i32,
}

/// Approximates `u(t+k) - u(t) - k u'(t+k/2)` to O(k^7).
pub const E1_STENCIL: Stencil = Stencil { weights: [-3, -1, 18, -18, 1, 3], num: 125, den: 384 };

/// Approximates `u(t+k/2) - u(t) - (k/2) u'(t)` to O(k^6).
pub const E2_STENCIL: Stencil =
    Stencil { weights: [145, -387, 402, -238, 93, -15], num: 25, den: 768 };

impl Stencil {
    /// `num / den` in the target arithmetic.
    pub fn scale<T>(&self) -> T
    where
        T: FromPrimitive + Div<Output = T>,
    {
        T::from_i32(self.num).expect("stencil numerator") / T::from_i32(self.den).expect("stencil denominator")
    }

    /// `scale * Σ w_i v_i`, summed left to right.
    pub fn apply<T>(&self, scale: &T, v: [&T; 6]) -> T
    where
        T: Clone + Zero + FromPrimitive,
        for<'a> &'a T: Mul<&'a T, Output = T> + Add<&'a T, Output = T>,
    {
        let mut acc = T::zero();
        for (w, x) in self.weights.iter().zip(v) {
            let w = T::from_i32(*w).expect("stencil weight");
            acc = &acc + &(&w * x);
        }
        scale * &acc
    }

    /// Weights `W_j = Σ_{i>j} w_i` on the increments `v_{j+1} - v_j`.
    pub fn increment_weights(&self) -> [i32; 5] {
        let mut tail = [0; 5];
        let mut acc = 0;
        for j in (0..5).rev() {
            acc += self.weights[j + 1];
            tail[j] = acc;
        }
        tail
    }

    /// Same value as [`Stencil::apply`] when the weights sum to zero, computed
    /// from the increments so the rounding in `v_i` does not get amplified.
    pub fn apply_increments<T>(&self, scale: &T, d: [&T; 5]) -> T
    where
        T: Clone + Zero + FromPrimitive,
        for<'a> &'a T: Mul<&'a T, Output = T> + Add<&'a T, Output = T>,
    {
        let mut acc = T::zero();
        for (w, x) in self.increment_weights().iter().zip(d) {
            let w = T::from_i32(*w).expect("stencil weight");
            acc = &acc + &(&w * x);
        }
        scale * &acc
    }
}

/// Luther's seven-stage sixth-order tableau, exact in Q(√21).
pub struct ExactTableau {
    pub a: Vec<Vec<Surd21>>,
    pub b: Vec<Surd21>,
    pub c: Vec<Surd21>,
}

pub fn luther_tableau() -> ExactTableau {
    let s = Surd21::frac;
    let z = Surd21::zero;
    let a = vec![
        vec![z(), z(), z(), z(), z(), z(), z()],
        vec![s(1, 0, 1), z(), z(), z(), z(), z(), z()],
        vec![s(3, 0, 8), s(1, 0, 8), z(), z(), z(), z(), z()],
        vec![s(8, 0, 27), s(2, 0, 27), s(8, 0, 27), z(), z(), z(), z()],
        vec![s(-21, 9, 392), s(-56, 8, 392), s(336, -48, 392), s(-63, 3, 392), z(), z(), z()],
        vec![
            s(-1155, -255, 1960),
            s(-280, -40, 1960),
            s(0, -320, 1960),
            s(63, 363, 1960),
            s(2352, 392, 1960),
            z(),
            z(),
        ],
        vec![
            s(330, 105, 180),
            s(120, 0, 180),
            s(-200, 280, 180),
            s(126, -189, 180),
            s(-686, -126, 180),
            s(490, -70, 180),
            z(),
        ],
    ];
    let b = [9, 0, 64, 0, 49, 49, 9].iter().map(|&w| s(w, 0, 180)).collect();
    let c = a
        .iter()
        .map(|row| row.iter().fold(Surd21::zero(), |acc, x| &acc + x))
        .collect();
    ExactTableau { a, b, c }
}

struct Rk6Coefficients {
    a: [[f64; 7]; 7],
    b: [f64; 7],
    c: [f64; 7],
}

fn rk6_coefficients() -> &'static Rk6Coefficients {
    static COEFFS: OnceLock<Rk6Coefficients> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let t = luther_tableau();
        let mut out = Rk6Coefficients { a: [[0.0; 7]; 7], b: [0.0; 7], c: [0.0; 7] };
        for i in 0..7 {
            for j in 0..7 {
                out.a[i][j] = t.a[i][j].to_f64();
            }
            out.b[i] = t.b[i].to_f64();
            out.c[i] = t.c[i].to_f64();
        }
        out
    })
}

/// Reusable scratch space for stepping a system of fixed dimension.
pub struct Stepper {
    kind: StepperKind,
    dim: usize,
    stages: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    sub: Vec<Vec<f64>>,
    inc: Vec<Vec<f64>>,
    corr_a: Vec<f64>,
    corr_b: Vec<f64>,
    scale_a: f64,
    scale_b: f64,
}

impl Stepper {
    pub fn new(kind: StepperKind, dim: usize) -> Self {
        let n_stages = match kind {
            StepperKind::Rk2Midpoint => 2,
            StepperKind::Rk4 => 4,
            StepperKind::Dc6Rk24 => 5,
            StepperKind::Rk6 => 7,
        };
        let n_sub = if kind == StepperKind::Dc6Rk24 { 6 } else { 0 };
        Stepper {
            kind,
            dim,
            stages: vec![vec![0.0; dim]; n_stages],
            tmp: vec![0.0; dim],
            sub: vec![vec![0.0; dim]; n_sub],
            inc: vec![vec![0.0; dim]; n_sub.saturating_sub(1)],
            corr_a: vec![0.0; if n_sub > 0 { dim } else { 0 }],
            corr_b: vec![0.0; if n_sub > 0 { dim } else { 0 }],
            scale_a: E1_STENCIL.scale(),
            scale_b: E2_STENCIL.scale(),
        }
    }

    pub fn kind(&self) -> StepperKind {
        self.kind
    }

    /// Advances `u` in place from `t` to `t + k`.
    pub fn step<F>(&mut self, f: &mut F, t: f64, u: &mut [f64], k: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        assert_eq!(u.len(), self.dim, "state dimension");
        match self.kind {
            StepperKind::Rk2Midpoint => self.midpoint(f, t, u, k),
            StepperKind::Rk4 => {
                let (k1, rest) = self.stages.split_first_mut().unwrap();
                f(t, u, k1);
                rk4_with_k1(f, t, u, k, k1, rest, &mut self.tmp);
            }
            StepperKind::Rk6 => self.rk6(f, t, u, k),
            StepperKind::Dc6Rk24 => self.dc6(f, t, u, k),
        }
    }

    fn midpoint<F>(&mut self, f: &mut F, t: f64, u: &mut [f64], k: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let (k1, rest) = self.stages.split_first_mut().unwrap();
        let k2 = &mut rest[0];
        f(t, u, k1);
        for ((y, x), d) in self.tmp.iter_mut().zip(u.iter()).zip(k1.iter()) {
            *y = x + 0.5 * k * d;
        }
        f(t + 0.5 * k, &self.tmp, k2);
        for (x, d) in u.iter_mut().zip(k2.iter()) {
            *x += k * d;
        }
    }

    fn rk6<F>(&mut self, f: &mut F, t: f64, u: &mut [f64], k: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let coef = rk6_coefficients();
        for i in 0..7 {
            self.tmp.copy_from_slice(u);
            for j in 0..i {
                let a = coef.a[i][j];
                if a != 0.0 {
                    for (y, d) in self.tmp.iter_mut().zip(&self.stages[j]) {
                        *y += k * a * d;
                    }
                }
            }
            f(t + coef.c[i] * k, &self.tmp, &mut self.stages[i]);
        }
        for (idx, x) in u.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..7 {
                acc += coef.b[i] * self.stages[i][idx];
            }
            *x += k * acc;
        }
    }

    fn dc6<F>(&mut self, f: &mut F, t: f64, u: &mut [f64], k: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let h = k / 5.0;
        // stages: F(t, u) shared by the first substep and the final update, then K1..K4 scratch
        let (f0, rest) = self.stages.split_first_mut().unwrap();
        let (k1, rk_stages) = rest.split_first_mut().unwrap();
        f(t, u, f0);
        self.sub[0].copy_from_slice(u);
        for i in 0..5 {
            let ti = t + i as f64 * h;
            let (done, todo) = self.sub.split_at_mut(i + 1);
            let vi = &done[i];
            let next = &mut todo[0];
            next.copy_from_slice(vi);
            if i == 0 {
                rk4_with_k1(f, ti, next, h, f0, rk_stages, &mut self.tmp);
            } else {
                f(ti, vi, k1);
                rk4_with_k1(f, ti, next, h, k1, rk_stages, &mut self.tmp);
            }
            self.inc[i].copy_from_slice(&self.tmp);
        }
        let d = &self.inc;
        #[allow(clippy::needless_range_loop)]
        for idx in 0..self.dim {
            let vals = [&d[0][idx], &d[1][idx], &d[2][idx], &d[3][idx], &d[4][idx]];
            self.corr_a[idx] = E1_STENCIL.apply_increments(&self.scale_a, vals);
            self.corr_b[idx] = E2_STENCIL.apply_increments(&self.scale_b, vals);
        }
        for idx in 0..self.dim {
            self.tmp[idx] = u[idx] + 0.5 * k * f0[idx] + self.corr_b[idx];
        }
        let fm = k1;
        f(t + 0.5 * k, &self.tmp, fm);
        for idx in 0..self.dim {
            u[idx] = u[idx] + self.corr_a[idx] + k * fm[idx];
        }
    }
}

/// Classical RK4 step of `u` in place given `k1 = F(t, u)`; `stages` needs three buffers.
/// Leaves the increment in `tmp`.
fn rk4_with_k1<F>(
    f: &mut F,
    t: f64,
    u: &mut [f64],
    k: f64,
    k1: &[f64],
    stages: &mut [Vec<f64>],
    tmp: &mut [f64],
) where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let (k2, rest) = stages.split_first_mut().unwrap();
    let (k3, rest) = rest.split_first_mut().unwrap();
    let k4 = &mut rest[0];
    let half = 0.5 * k;
    for ((y, x), d) in tmp.iter_mut().zip(u.iter()).zip(k1) {
        *y = x + half * d;
    }
    f(t + half, tmp, k2);
    for ((y, x), d) in tmp.iter_mut().zip(u.iter()).zip(k2.iter()) {
        *y = x + half * d;
    }
    f(t + half, tmp, k3);
    for ((y, x), d) in tmp.iter_mut().zip(u.iter()).zip(k3.iter()) {
        *y = x + k * d;
    }
    f(t + k, tmp, k4);
    let sixth = k / 6.0;
    for i in 0..u.len() {
        tmp[i] = sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        u[i] += tmp[i];
    }
}

/// One classical RK4 step; also returns `K1 = F(t, u)`.
pub fn rk4_step<F>(mut f: F, t: f64, u: &[f64], k: f64) -> (Vec<f64>, Vec<f64>)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut stepper = Stepper::new(StepperKind::Rk4, u.len());
    let mut next = u.to_vec();
    stepper.step(&mut f, t, &mut next, k);
    let k1 = stepper.stages[0].clone();
    (next, k1)
}

/// One step of Luther's seven-stage sixth-order method.
pub fn rk6_step<F>(f: F, t: f64, u: &[f64], k: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    single_step(StepperKind::Rk6, f, t, u, k)
}

/// One explicit midpoint step.
pub fn midpoint_step<F>(f: F, t: f64, u: &[f64], k: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    single_step(StepperKind::Rk2Midpoint, f, t, u, k)
}

/// One DC6RK2/4 step.
pub fn dc6_step<F>(f: F, t: f64, u: &[f64], k: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    single_step(StepperKind::Dc6Rk24, f, t, u, k)
}

fn single_step<F>(kind: StepperKind, mut f: F, t: f64, u: &[f64], k: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut stepper = Stepper::new(kind, u.len());
    let mut next = u.to_vec();
    stepper.step(&mut f, t, &mut next, k);
    next
}

/// Intermediate quantities of one DC6RK2/4 step.
#[derive(Debug, Clone, PartialEq)]
pub struct DcStepWork {
    pub substep: f64,
    /// RK4 states `v_0..v_5` at `t + i h`.
    pub sub_states: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub next: Vec<f64>,
}

pub fn dc6_step_work<F>(mut f: F, t: f64, u: &[f64], k: f64) -> DcStepWork
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut stepper = Stepper::new(StepperKind::Dc6Rk24, u.len());
    let mut next = u.to_vec();
    stepper.step(&mut f, t, &mut next, k);
    DcStepWork {
        substep: k / 5.0,
        sub_states: stepper.sub.clone(),
        a: stepper.corr_a.clone(),
        b: stepper.corr_b.clone(),
        next,
    }
}

/// Uniform-step march over `[0, T]` with `k = T/N`, sampling at [`ivp::sample_indices`].
pub fn integrate(problem: &OdeProblem, kind: StepperKind, n_steps: usize, max_samples: usize) -> TrajectoryRun {
    let indices = ivp::sample_indices(n_steps, max_samples);
    integrate_at_indices(problem, kind, n_steps, &indices)
}

/// Like [`integrate`] but stores states at the given sorted grid indices.
pub fn integrate_at_indices(
    problem: &OdeProblem,
    kind: StepperKind,
    n_steps: usize,
    indices: &[usize],
) -> TrajectoryRun {
    assert!(n_steps >= 1, "n_steps must be positive");
    assert!(indices.windows(2).all(|w| w[0] < w[1]), "sample indices must increase");
    assert!(indices.last().is_none_or(|&i| i <= n_steps), "sample index beyond n_steps");

    let t_end = problem.t_end;
    let k = t_end / n_steps as f64;
    let mut evals: u64 = 0;
    let mut rhs = |t: f64, u: &[f64], out: &mut [f64]| {
        evals += 1;
        problem.rhs(t, u, out);
    };

    let mut stepper = Stepper::new(kind, problem.dim);
    let mut u = problem.initial.clone();
    let mut sample_indices = Vec::with_capacity(indices.len());
    let mut sample_times = Vec::with_capacity(indices.len());
    let mut sample_states = Vec::with_capacity(indices.len());
    let mut next_sample = indices.iter().peekable();
    let mut status = RunStatus::Completed;

    if next_sample.peek() == Some(&&0) {
        next_sample.next();
        sample_indices.push(0);
        sample_times.push(0.0);
        sample_states.push(u.clone());
    }
    for n in 0..n_steps {
        let t = ivp::grid_time(t_end, n, n_steps);
        stepper.step(&mut rhs, t, &mut u, k);
        if !check_finite(&u, DIVERGENCE_BOUND) {
            status = RunStatus::Diverged { at_step: n + 1 };
            break;
        }
        if next_sample.peek() == Some(&&(n + 1)) {
            next_sample.next();
            sample_indices.push(n + 1);
            sample_times.push(ivp::grid_time(t_end, n + 1, n_steps));
            sample_states.push(u.clone());
        }
    }
    TrajectoryRun {
        step: k,
        n_steps,
        sample_indices,
        sample_times,
        sample_states,
        rhs_evals: evals,
        status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability;
    use num_complex::Complex64;
    use crate::rational::to_f64;
    use num_rational::BigRational;

    fn zero_rhs(_t: f64, _u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }

    fn ulps_close(a: f64, b: f64, ulps: f64) -> bool {
        let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        (a - b).abs() <= ulps * f64::EPSILON * scale
    }

    #[test]
    fn parse_and_counts() {
        assert_eq!("DC6RK2/4".parse::<StepperKind>().unwrap(), StepperKind::Dc6Rk24);
        assert_eq!("rk6".parse::<StepperKind>().unwrap(), StepperKind::Rk6);
        assert!("rk5".parse::<StepperKind>().is_err());
        let counts: Vec<u64> = StepperKind::ALL.iter().map(|k| k.evals_per_step()).collect();
        assert_eq!(counts, vec![2, 4, 7, 21]);
        for kind in StepperKind::ALL {
            assert_eq!(StepperKind::from_tag(kind.tag()), Some(kind));
        }
    }

    #[test]
    fn zero_rhs_leaves_state_unchanged() {
        let u = vec![1.5, -2.0, 3.25];
        assert_eq!(rk4_step(zero_rhs, 0.0, &u, 0.1).0, u);
        assert_eq!(rk6_step(zero_rhs, 0.0, &u, 0.1), u);
        assert_eq!(dc6_step(zero_rhs, 0.0, &u, 0.1), u);
        assert_eq!(midpoint_step(zero_rhs, 0.0, &u, 0.1), u);
    }

    #[test]
    fn rk4_linear_matches_q() {
        for &z in &[-0.3, -1.0, -2.5, 0.7] {
            let lambda = z / 0.5;
            let (next, k1) = rk4_step(|_, u: &[f64], out: &mut [f64]| out[0] = lambda * u[0], 0.0, &[2.0], 0.5);
            let expect = 2.0 * (1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z.powi(4) / 24.0);
            assert!(ulps_close(next[0], expect, 8.0), "{} vs {}", next[0], expect);
            assert_eq!(k1[0], 2.0 * lambda);
        }
    }

    #[test]
    fn rk4_integrates_cubic_exactly() {
        let (next, _) = rk4_step(|t, _u: &[f64], out: &mut [f64]| out[0] = t * t * t, 0.0, &[0.0], 1.0);
        assert_eq!(next[0], 0.25);
    }

    #[test]
    fn midpoint_linear_and_exact_for_linear_integrand() {
        let z = -0.8;
        let next = midpoint_step(|_, u: &[f64], out: &mut [f64]| out[0] = z * u[0], 0.0, &[1.0], 1.0);
        assert!(ulps_close(next[0], 1.0 + z + z * z / 2.0, 4.0));
        let next = midpoint_step(|t, _u: &[f64], out: &mut [f64]| out[0] = 2.0 * t, 0.0, &[0.0], 1.0);
        assert_eq!(next[0], 1.0);
    }

    // Fits the degree-7 amplification polynomial from eight samples by solving
    // the Vandermonde system; the first seven coefficients must be 1/j!.
    #[test]
    fn rk6_amplification_polynomial_has_exponential_head() {
        let zs: Vec<f64> = (0..8).map(|i| -1.0 + 0.25 * i as f64).collect();
        let ys: Vec<f64> = zs
            .iter()
            .map(|&z| rk6_step(|_, u: &[f64], out: &mut [f64]| out[0] = z * u[0], 0.0, &[1.0], 1.0)[0])
            .collect();
        let mut m: Vec<Vec<f64>> = zs.iter().map(|&z| (0..8).map(|j| z.powi(j)).collect()).collect();
        let mut rhs = ys.clone();
        for col in 0..8 {
            let piv = (col..8).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            m.swap(col, piv);
            rhs.swap(col, piv);
            for row in col + 1..8 {
                let factor = m[row][col] / m[col][col];
                let (upper, lower) = m.split_at_mut(row);
                for (dst, src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *dst -= factor * src;
                }
                rhs[row] -= factor * rhs[col];
            }
        }
        let mut coeffs = [0.0; 8];
        for row in (0..8).rev() {
            let s: f64 = (row + 1..8).map(|c| m[row][c] * coeffs[c]).sum();
            coeffs[row] = (rhs[row] - s) / m[row][row];
        }
        let mut fact = 1.0;
        for (j, c) in coeffs.iter().enumerate().take(7) {
            if j > 0 {
                fact *= j as f64;
            }
            assert!((c - 1.0 / fact).abs() < 1e-9, "c{j} = {c}");
        }
        assert!((coeffs[7] + 1.0 / 2160.0).abs() < 1e-9, "c7 = {}", coeffs[7]);
    }

    #[test]
    fn dc6_linear_matches_big_r() {
        for &(re, im) in &[(-1.0, 0.0), (-5.0, 0.0), (-0.5, 3.0), (-3.0, -4.0)] {
            let z = Complex64::new(re, im);
            // u' = λu on C as a real 2-system
            let next = dc6_step(
                |_, u: &[f64], out: &mut [f64]| {
                    out[0] = re * u[0] - im * u[1];
                    out[1] = im * u[0] + re * u[1];
                },
                0.0,
                &[1.0, 0.0],
                1.0,
            );
            let r = stability::big_r(z);
            let scale = r.norm().max(1e-300);
            assert!((next[0] - r.re).abs() <= 32.0 * f64::EPSILON * scale.max(1.0), "{next:?} vs {r}");
            assert!((next[1] - r.im).abs() <= 32.0 * f64::EPSILON * scale.max(1.0), "{next:?} vs {r}");
        }
    }

    #[test]
    fn dc6_work_exposes_substeps_and_corrections() {
        let lambda = -2.0;
        let w = dc6_step_work(|_, u: &[f64], out: &mut [f64]| out[0] = lambda * u[0], 0.0, &[3.0], 0.5);
        assert_eq!(w.sub_states.len(), 6);
        assert_eq!(w.sub_states[0], vec![3.0]);
        assert_eq!(w.substep, 0.1);
        let q = |z: f64| 1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0;
        let zq = q(lambda * 0.1);
        for (i, v) in w.sub_states.iter().enumerate() {
            assert!(ulps_close(v[0], 3.0 * zq.powi(i as i32), 16.0));
        }
        let z = Complex64::new(lambda * 0.5, 0.0);
        assert!((w.a[0] / 3.0 - stability::r_correction(z).re).abs() < 1e-14);
        assert!((w.b[0] / 3.0 - stability::s_correction(z).re).abs() < 1e-14);
    }

    #[test]
    fn stencil_weights_sum_to_zero() {
        assert_eq!(E1_STENCIL.weights.iter().sum::<i32>(), 0);
        assert_eq!(E2_STENCIL.weights.iter().sum::<i32>(), 0);
        let one = 1.0f64;
        let s: f64 = E1_STENCIL.scale();
        assert_eq!(E1_STENCIL.apply(&s, [&one; 6]), 0.0);
        assert_eq!(E1_STENCIL.increment_weights(), [3, 4, -14, 4, 3]);
        assert_eq!(E2_STENCIL.increment_weights(), [-145, 242, -160, 78, -15]);
    }

    #[test]
    fn integrate_zero_rhs_counts_evaluations() {
        let problem = OdeProblem::new("zero", 1.0, vec![1.0, 2.0], zero_rhs);
        for kind in StepperKind::ALL {
            let run = integrate(&problem, kind, 37, 10);
            assert!(run.status.is_completed());
            assert_eq!(run.rhs_evals, 37 * kind.evals_per_step());
            assert!(run.sample_states.iter().all(|s| s == &vec![1.0, 2.0]));
            assert_eq!(run.sample_times[0], 0.0);
            assert_eq!(*run.sample_times.last().unwrap(), 1.0);
            assert_eq!(run.sample_indices, ivp::sample_indices(37, 10));
        }
    }

    #[test]
    fn integrate_records_divergence_without_storing_bad_states() {
        let problem = OdeProblem::new("blowup", 1.0, vec![1.0], |_, u: &[f64], out: &mut [f64]| out[0] = 1e3 * u[0]);
        let run = integrate(&problem, StepperKind::Rk4, 10, 100);
        match run.status {
            RunStatus::Diverged { at_step } => {
                assert!((1..=10).contains(&at_step));
                assert_eq!(run.rhs_evals, at_step as u64 * 4);
                assert_eq!(*run.sample_indices.last().unwrap(), at_step - 1);
            }
            RunStatus::Completed => panic!("expected divergence"),
        }
        assert!(run.sample_states.iter().all(|s| check_finite(s, DIVERGENCE_BOUND)));
    }

    #[test]
    fn linear_equivalence_over_many_steps() {
        use proptest::prelude::*;
        let mut runner = proptest::test_runner::TestRunner::default();
        runner
            .run(&(-3.0f64..0.0, 1usize..40), |(z, n)| {
                let problem = OdeProblem::new("lin", n as f64, vec![1.0], move |_, u: &[f64], out: &mut [f64]| out[0] = z * u[0]);
                for kind in StepperKind::ALL {
                    let run = integrate(&problem, kind, n, n + 1);
                    let exact = stability::exact_polynomial(kind);
                    let zq = BigRational::from_float(z).unwrap();
                    let amp = to_f64(&exact.coeffs().iter().rev().fold(BigRational::zero(), |acc, c| acc * &zq + c));
                    let expect = amp.powi(n as i32);
                    let got = run.last_state().unwrap()[0];
                    // ulps of the state entering or leaving each step
                    let scale = amp.abs().powi(n as i32 - 1).max(expect.abs());
                    let tol = (n as f64) * 64.0 * f64::EPSILON * scale;
                    prop_assert!((got - expect).abs() <= tol, "{:?} z={} n={} got={} expect={}", kind, z, n, got, expect);
                }
                Ok(())
            })
            .unwrap();
    }
}
