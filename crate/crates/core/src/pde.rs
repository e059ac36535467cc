//! Method of lines for 1-D reaction-diffusion equations
//! `u_t - μ u_xx + f(x, t, u) = 0` on `[0, 1]`.
//!
//! Space is discretized with sixth-order finite differences on `x_j = j h`,
//! `h = 1/M`, giving `U' + (μ / 180h²) 𝓜 U + F(U, t) = 0`, where `𝓜` is the
//! Neumann matrix `𝒜` (size `M+1`) or the Dirichlet matrix `ℬ` (size `M-1`).
//! Inhomogeneous boundary data is removed with a lift `φ`: the unknown is
//! `w = u - φ` and the right-hand side picks up `-φ_t + μ φ_xx`.

use std::sync::Arc;

use num_rational::BigRational;
use thiserror::Error;

use crate::ivp::OdeProblem;
use crate::rational::ratio;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("grid needs M >= 12 intervals, got {0}")]
    GridTooSmall(usize),
    #[error("operator of size {expected} applied to a vector of length {found}")]
    LengthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

impl BoundaryKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryKind::Dirichlet => "dbc",
            BoundaryKind::Neumann => "nbc",
        }
    }
}

/// Centred interior stencil of `𝓜`, columns `i-3..=i+3`.
pub const INTERIOR_STENCIL: [i64; 7] = [-2, 27, -270, 490, -270, 27, -2];

/// Smallest supported number of intervals.
pub const MIN_INTERVALS: usize = 12;

type ExactRow = Vec<(i64, i64)>;

fn int_row(xs: &[i64]) -> ExactRow {
    xs.iter().map(|&x| (x, 1)).collect()
}

// First three rows of 𝒜, all starting at column 0; row 3 is already the centred stencil.
fn neumann_head() -> Vec<ExactRow> {
    let mut row0 = int_row(&[360, 0, 6077, -15126, 21290, -18310, 9609, -2842, 0]);
    row0[1] = (-9958, 7);
    row0[8] = (2552, 7);
    vec![
        row0,
        int_row(&[-126, 70, 486, -855, 670, -324, 90, -11]),
        int_row(&[11, -214, 378, -130, -85, 54, -16, 2]),
    ]
}

// ℬ is 𝒜 without its border: rows 1..=3 of 𝒜 with column 0 dropped.
fn dirichlet_head() -> Vec<ExactRow> {
    let mut rows: Vec<ExactRow> = neumann_head()[1..].to_vec();
    rows.push(int_row(&INTERIOR_STENCIL));
    rows.into_iter().map(|r| r[1..].to_vec()).collect()
}

/// Banded sixth-order second-difference operator `(μ/180h²) 𝓜`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fd6Operator {
    pub size: usize,
    pub bc: BoundaryKind,
    pub h: f64,
    pub mu: f64,
    exact_head: Vec<ExactRow>,
    head: Vec<Vec<f64>>,
    interior: [f64; 7],
    scale: f64,
}

fn build(m: usize, bc: BoundaryKind, mu: f64) -> Result<Fd6Operator, PdeError> {
    if m < MIN_INTERVALS {
        return Err(PdeError::GridTooSmall(m));
    }
    let (size, exact_head) = match bc {
        BoundaryKind::Neumann => (m + 1, neumann_head()),
        BoundaryKind::Dirichlet => (m - 1, dirichlet_head()),
    };
    let head = exact_head
        .iter()
        .map(|row| row.iter().map(|&(n, d)| n as f64 / d as f64).collect())
        .collect();
    let h = 1.0 / m as f64;
    Ok(Fd6Operator {
        size,
        bc,
        h,
        mu,
        exact_head,
        head,
        interior: INTERIOR_STENCIL.map(|x| x as f64),
        scale: mu / (180.0 * h * h),
    })
}

/// `𝒜` on `M+1` nodes (homogeneous Neumann data), with diffusion `mu`.
pub fn neumann_matrix(m: usize, mu: f64) -> Result<Fd6Operator, PdeError> {
    build(m, BoundaryKind::Neumann, mu)
}

/// `ℬ` on the `M-1` interior nodes (homogeneous Dirichlet data), with diffusion `mu`.
pub fn dirichlet_matrix(m: usize, mu: f64) -> Result<Fd6Operator, PdeError> {
    build(m, BoundaryKind::Dirichlet, mu)
}

impl Fd6Operator {
    pub fn intervals(&self) -> usize {
        match self.bc {
            BoundaryKind::Neumann => self.size - 1,
            BoundaryKind::Dirichlet => self.size + 1,
        }
    }

    /// Nodes carried by the operator: `x_0..x_M` (Neumann) or `x_1..x_{M-1}` (Dirichlet).
    pub fn nodes(&self) -> Vec<f64> {
        let m = self.intervals();
        let offset = usize::from(self.bc == BoundaryKind::Dirichlet);
        (0..self.size).map(|j| (j + offset) as f64 / m as f64).collect()
    }

    fn boundary_rows(&self) -> usize {
        self.head.len()
    }

    /// Matrix entries of row `i` as exact rationals (`μ/180h²` not applied).
    pub fn exact_row(&self, i: usize) -> Vec<BigRational> {
        let mut row = vec![ratio(0, 1); self.size];
        let nb = self.boundary_rows();
        if i < nb {
            for (j, &(n, d)) in self.exact_head[i].iter().enumerate() {
                row[j] = ratio(n, d);
            }
        } else if i >= self.size - nb {
            let mirror = self.size - 1 - i;
            for (j, &(n, d)) in self.exact_head[mirror].iter().enumerate() {
                row[self.size - 1 - j] = ratio(n, d);
            }
        } else {
            for (j, &w) in INTERIOR_STENCIL.iter().enumerate() {
                row[i + j - 3] = ratio(w, 1);
            }
        }
        row
    }

    /// Matrix entries of row `i` as floats (`μ/180h²` not applied).
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        self.exact_row(i).iter().map(crate::rational::to_f64).collect()
    }

    /// `out = (μ/180h²) 𝓜 u` in O(size).
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) -> Result<(), PdeError> {
        let n = self.size;
        if u.len() != n || out.len() != n {
            return Err(PdeError::LengthMismatch { expected: n, found: if u.len() != n { u.len() } else { out.len() } });
        }
        let s = self.scale;
        let nb = self.boundary_rows();
        for (i, row) in self.head.iter().enumerate() {
            let top: f64 = row.iter().zip(u).map(|(a, x)| a * x).sum();
            let bottom: f64 = row.iter().zip(u.iter().rev()).map(|(a, x)| a * x).sum();
            out[i] = s * top;
            out[n - 1 - i] = s * bottom;
        }
        let w = &self.interior;
        for i in nb..n - nb {
            let v = &u[i - 3..i + 4];
            out[i] = s * (w[0] * (v[0] + v[6]) + w[1] * (v[1] + v[5]) + w[2] * (v[2] + v[4]) + w[3] * v[3]);
        }
        Ok(())
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>, PdeError> {
        let mut out = vec![0.0; self.size];
        self.apply_into(u, &mut out)?;
        Ok(out)
    }
}

/// Pointwise reaction term `f(x, t, u)`.
pub type Reaction = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Boundary lift `φ(x, t)` built from four boundary data values per time.
pub trait Lift: Send + Sync {
    /// Boundary data at `t`.
    fn data(&self, t: f64) -> [f64; 4];
    /// `(φ, φ_t, φ_xx)` at `x` for the given data.
    fn terms(&self, x: f64, data: &[f64; 4]) -> [f64; 3];

    fn value(&self, x: f64, t: f64) -> f64 {
        self.terms(x, &self.data(t))[0]
    }
}

/// Linear lift `(1-x) a(t) + x b(t)` matching Dirichlet data on `[0, 1]`.
pub struct DirichletLift<F> {
    /// `t -> (a, b, a', b')`.
    pub data: F,
}

impl<F> Lift for DirichletLift<F>
where
    F: Fn(f64) -> [f64; 4] + Send + Sync,
{
    fn data(&self, t: f64) -> [f64; 4] {
        (self.data)(t)
    }
    fn terms(&self, x: f64, &[a, b, da, db]: &[f64; 4]) -> [f64; 3] {
        [(1.0 - x) * a + x * b, (1.0 - x) * da + x * db, 0.0]
    }
}

/// Quadratic lift `(x - x²/2) g0(t) + (x²/2) g1(t)` matching `u_x(0) = g0`, `u_x(1) = g1`.
pub struct NeumannLift<F> {
    /// `t -> (g0, g1, g0', g1')`.
    pub data: F,
}

impl<F> Lift for NeumannLift<F>
where
    F: Fn(f64) -> [f64; 4] + Send + Sync,
{
    fn data(&self, t: f64) -> [f64; 4] {
        (self.data)(t)
    }
    fn terms(&self, x: f64, &[g0, g1, d0, d1]: &[f64; 4]) -> [f64; 3] {
        let (p, q) = (x - 0.5 * x * x, 0.5 * x * x);
        [p * g0 + q * g1, p * d0 + q * d1, g1 - g0]
    }
}

/// A semidiscretized reaction-diffusion system and its ODE form.
#[derive(Clone)]
pub struct RdProblem {
    pub name: String,
    pub m: usize,
    pub bc: BoundaryKind,
    pub species: usize,
    pub operator: Arc<Fd6Operator>,
    /// Constant shift per species: physical `u = state + offset (+ φ)`.
    pub offsets: Vec<f64>,
    lift: Option<Arc<dyn Lift>>,
    exact: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
    pub as_ode: OdeProblem,
}

impl std::fmt::Debug for RdProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RdProblem")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("bc", &self.bc)
            .field("species", &self.species)
            .field("as_ode", &self.as_ode)
            .finish()
    }
}

impl RdProblem {
    /// Grid nodes of one species block.
    pub fn x(&self) -> Vec<f64> {
        self.operator.nodes()
    }

    pub fn block(&self) -> usize {
        self.operator.size
    }

    /// Physical values `state + offset + φ(x, t)`, same layout as the state.
    pub fn physical(&self, t: f64, state: &[f64]) -> Vec<f64> {
        let x = self.x();
        let n = self.block();
        let data = self.lift.as_ref().map(|l| l.data(t));
        state
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let lift = match (&self.lift, &data) {
                    (Some(l), Some(d)) => l.terms(x[i % n], d)[0],
                    _ => 0.0,
                };
                v + self.offsets[i / n] + lift
            })
            .collect()
    }

    /// Closed-form PDE solution at the grid nodes, if known (single species).
    pub fn exact_physical(&self, t: f64) -> Option<Vec<f64>> {
        self.exact.as_ref().map(|u| self.x().iter().map(|&x| u(x, t)).collect())
    }
}

/// Builds a single-species problem `u_t - μ u_xx + f(x, t, u) = 0`.
///
/// `exact`, when given, is the PDE solution; with a `lift` it also supplies the boundary data.
#[allow(clippy::too_many_arguments)]
pub fn reaction_diffusion(
    name: &str,
    m: usize,
    bc: BoundaryKind,
    mu: f64,
    t_end: f64,
    initial: &dyn Fn(f64) -> f64,
    reaction: Reaction,
    lift: Option<Arc<dyn Lift>>,
    exact: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
) -> Result<RdProblem, PdeError> {
    let op = Arc::new(build(m, bc, mu)?);
    let x = op.nodes();
    let init: Vec<f64> = x
        .iter()
        .map(|&xj| initial(xj) - lift.as_ref().map_or(0.0, |l| l.value(xj, 0.0)))
        .collect();
    let rhs = {
        let op = Arc::clone(&op);
        let lift = lift.clone();
        let x = x.clone();
        move |t: f64, w: &[f64], out: &mut [f64]| {
            op.apply_into(w, out).expect("state size matches operator");
            match &lift {
                None => {
                    for ((o, &xj), &wj) in out.iter_mut().zip(&x).zip(w) {
                        *o = -*o - reaction(xj, t, wj);
                    }
                }
                Some(l) => {
                    let data = l.data(t);
                    for ((o, &xj), &wj) in out.iter_mut().zip(&x).zip(w) {
                        let [phi, phi_t, phi_xx] = l.terms(xj, &data);
                        *o = -*o - reaction(xj, t, wj + phi) - phi_t + mu * phi_xx;
                    }
                }
            }
        }
    };
    let mut ode = OdeProblem::new(name, t_end, init, rhs)
        .with_param("m", m as f64)
        .with_param("neumann", f64::from(u8::from(bc == BoundaryKind::Neumann)))
        .with_param("mu", mu);
    if let Some(u) = &exact {
        let u = Arc::clone(u);
        let lift = lift.clone();
        let x = x.clone();
        ode = ode.with_exact(move |t| {
            let data = lift.as_ref().map(|l| (l, l.data(t)));
            x.iter()
                .map(|&xj| u(xj, t) - data.as_ref().map_or(0.0, |(l, d)| l.terms(xj, d)[0]))
                .collect()
        });
    }
    Ok(RdProblem {
        name: name.to_string(),
        m,
        bc,
        species: 1,
        operator: op,
        offsets: vec![0.0],
        lift,
        exact,
        as_ode: ode,
    })
}

/// Fisher solution `(1 + e^{x-5t})^{-2}`.
pub fn fisher_exact(x: f64, t: f64) -> f64 {
    let e = (x - 5.0 * t).exp();
    1.0 / ((1.0 + e) * (1.0 + e))
}

/// `∂_x` of [`fisher_exact`].
pub fn fisher_exact_dx(x: f64, t: f64) -> f64 {
    let e = (x - 5.0 * t).exp();
    -2.0 * e / (1.0 + e).powi(3)
}

/// `∂_xx` of [`fisher_exact`].
pub fn fisher_exact_dxx(x: f64, t: f64) -> f64 {
    let e = (x - 5.0 * t).exp();
    let p = 1.0 + e;
    -2.0 * e / p.powi(3) + 6.0 * e * e / p.powi(4)
}

/// Fisher equation `u_t - u_xx - 6u(1-u) = 0` on `[0,1] × [0,10]` with boundary data from the exact solution.
pub fn fisher_problem(m: usize, bc: BoundaryKind) -> Result<RdProblem, PdeError> {
    // u depends on x - 5t, so u_t = -5 u_x
    let lift: Arc<dyn Lift> = match bc {
        BoundaryKind::Dirichlet => Arc::new(DirichletLift {
            data: |t: f64| {
                [
                    fisher_exact(0.0, t),
                    fisher_exact(1.0, t),
                    -5.0 * fisher_exact_dx(0.0, t),
                    -5.0 * fisher_exact_dx(1.0, t),
                ]
            },
        }),
        BoundaryKind::Neumann => Arc::new(NeumannLift {
            data: |t: f64| {
                [
                    fisher_exact_dx(0.0, t),
                    fisher_exact_dx(1.0, t),
                    -5.0 * fisher_exact_dxx(0.0, t),
                    -5.0 * fisher_exact_dxx(1.0, t),
                ]
            },
        }),
    };
    reaction_diffusion(
        &format!("fisher-{}", bc.name()),
        m,
        bc,
        1.0,
        10.0,
        &|x| fisher_exact(x, 0.0),
        Arc::new(|_, _, u| -6.0 * u * (1.0 - u)),
        Some(lift),
        Some(Arc::new(fisher_exact)),
    )
}

/// Bistable reaction `10^4 u (u-1)(u-0.25)`.
pub fn bistable_reaction(u: f64) -> f64 {
    1e4 * u * (u - 1.0) * (u - 0.25)
}

/// Bistable equation with homogeneous Neumann data, `u_0 = e^{-100x²}`, `T = 0.0295`.
pub fn bistable_problem(m: usize) -> Result<RdProblem, PdeError> {
    reaction_diffusion(
        "bistable",
        m,
        BoundaryKind::Neumann,
        1.0,
        0.0295,
        &|x| (-100.0 * x * x).exp(),
        Arc::new(|_, _, u| bistable_reaction(u)),
        None,
        None,
    )
}

/// Rate constants of the three-species system.
pub const TAU: [f64; 6] = [4e-2, 1e4, 4e-2, 1e4, 3e7, 3e7];

/// Reaction terms `(F1, F2, F3)` at physical `(u, v, w)`.
pub fn three_species_reaction(u: f64, v: f64, w: f64) -> [f64; 3] {
    let [t1, t2, t3, t4, t5, t6] = TAU;
    [t1 * u - t2 * v * w, -t3 * u + t4 * v * w + t5 * v * v, -t6 * v * v]
}

/// Robertson kinetics with unit diffusion on `[0,1] × [0,1]`; `u = 1 + sin 2πx`, `v = w = 0`,
/// Dirichlet data `u = 1`, `v = w = 0`. The `u` block is stored shifted by `-1`.
pub fn three_species_problem(m: usize) -> Result<RdProblem, PdeError> {
    let op = Arc::new(dirichlet_matrix(m, 1.0)?);
    let n = op.size;
    let x = op.nodes();
    let mut init = vec![0.0; 3 * n];
    for (j, &xj) in x.iter().enumerate() {
        init[j] = (2.0 * std::f64::consts::PI * xj).sin();
    }
    let rhs = {
        let op = Arc::clone(&op);
        move |_t: f64, s: &[f64], out: &mut [f64]| {
            for b in 0..3 {
                op.apply_into(&s[b * n..(b + 1) * n], &mut out[b * n..(b + 1) * n])
                    .expect("state size matches operator");
            }
            for j in 0..n {
                let f = three_species_reaction(s[j] + 1.0, s[n + j], s[2 * n + j]);
                out[j] = -out[j] - f[0];
                out[n + j] = -out[n + j] - f[1];
                out[2 * n + j] = -out[2 * n + j] - f[2];
            }
        }
    };
    let ode = OdeProblem::new("three-species", 1.0, init, rhs).with_param("m", m as f64);
    Ok(RdProblem {
        name: "three-species".into(),
        m,
        bc: BoundaryKind::Dirichlet,
        species: 3,
        operator: op,
        offsets: vec![1.0, 0.0, 0.0],
        lift: None,
        exact: None,
        as_ode: ode,
    })
}

/// Registry names of the PDE benchmarks.
pub const NAMES: [&str; 4] = ["fisher-dbc", "fisher-nbc", "bistable", "three-species"];

/// Builds a PDE benchmark by name with `M` intervals.
pub fn by_name(name: &str, m: usize) -> Option<Result<RdProblem, PdeError>> {
    Some(match name.trim().to_ascii_lowercase().as_str() {
        "fisher-dbc" | "fisher" => fisher_problem(m, BoundaryKind::Dirichlet),
        "fisher-nbc" => fisher_problem(m, BoundaryKind::Neumann),
        "bistable" => bistable_problem(m),
        "three-species" | "three_species" | "robertson-diffusion" => three_species_problem(m),
        _ => return None,
    })
}

/// Default `M` used for each benchmark.
pub fn default_intervals(name: &str) -> usize {
    if name.starts_with("fisher") { 80 } else { 100 }
}

/// First `x` where the profile drops through `level`, by linear interpolation.
pub fn front_position(x: &[f64], values: &[f64], level: f64) -> Option<f64> {
    x.windows(2).zip(values.windows(2)).find_map(|(xs, vs)| {
        if vs[0] >= level && vs[1] < level {
            Some(xs[0] + (vs[0] - level) / (vs[0] - vs[1]) * (xs[1] - xs[0]))
        } else {
            None
        }
    })
}
