//! Linear stability of the steppers on `u' = λu`, `z = λk`.
//!
//! For DC6RK2/4 each RK4 substep multiplies the state by `q(z/5)`, so the
//! corrections are `a = r(z) u`, `b = s(z) u` and the amplification factor is
//! `R(z) = 1 + z + z²/2 + r(z) + z s(z)`, a polynomial of degree 21.

use std::io::{self, Write};
use std::sync::OnceLock;

use num_complex::Complex64;
use num_rational::BigRational;
use thiserror::Error;

use crate::rational::{integer, ratio, to_f64, RationalPoly};
use crate::steppers::{luther_tableau, StepperKind, E1_STENCIL, E2_STENCIL};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum StabilityError {
    #[error("no stability interval found to the left of the origin")]
    NotFound,
}

/// Real-coefficient polynomial `p(z) = Σ c_j z^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityPolynomial {
    pub coeffs: Vec<f64>,
}

impl StabilityPolynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs at least one coefficient");
        StabilityPolynomial { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn modulus(&self, z: Complex64) -> f64 {
        self.eval(z).norm()
    }

    /// `1 + z`: explicit Euler.
    pub fn explicit_euler() -> Self {
        StabilityPolynomial::new(vec![1.0, 1.0])
    }
}

/// RK4 stability function `1 + z + z²/2 + z³/6 + z⁴/24`.
pub fn q_rk4(z: Complex64) -> Complex64 {
    // Horner with exact reciprocal factorials would round 1/6; divide instead.
    Complex64::new(1.0, 0.0) + z * (Complex64::new(1.0, 0.0) + z / 2.0 * (Complex64::new(1.0, 0.0) + z / 3.0 * (Complex64::new(1.0, 0.0) + z / 4.0)))
}

fn powers_of_q5(z: Complex64) -> [Complex64; 6] {
    let q = q_rk4(z / 5.0);
    let mut p = [Complex64::new(1.0, 0.0); 6];
    for i in 1..6 {
        p[i] = p[i - 1] * q;
    }
    p
}

fn correction(weights: &[i32; 6], num: i32, den: i32, z: Complex64) -> Complex64 {
    let p = powers_of_q5(z);
    let sum = weights
        .iter()
        .zip(p.iter())
        .fold(Complex64::new(0.0, 0.0), |acc, (&w, &x)| acc + x * f64::from(w));
    sum * (f64::from(num) / f64::from(den))
}

/// `r(z)`: the `a` correction per unit state.
pub fn r_correction(z: Complex64) -> Complex64 {
    correction(&E1_STENCIL.weights, E1_STENCIL.num, E1_STENCIL.den, z)
}

/// `s(z)`: the `b` correction per unit state.
pub fn s_correction(z: Complex64) -> Complex64 {
    correction(&E2_STENCIL.weights, E2_STENCIL.num, E2_STENCIL.den, z)
}

/// DC6RK2/4 amplification factor `R(z) = 1 + z + z²/2 + r(z) + z s(z)`.
///
/// Evaluated in double-double on the exact coefficients, so the result is
/// correctly rounded up to a few units of 1e-30 relative to the largest term.
pub fn big_r(z: Complex64) -> Complex64 {
    static COEFFS: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let coeffs = COEFFS.get_or_init(|| {
        exact_polynomial(StepperKind::Dc6Rk24)
            .coeffs()
            .iter()
            .map(|c| {
                let hi = to_f64(c);
                let lo = to_f64(&(c - BigRational::from_float(hi).expect("finite coefficient")));
                (hi, lo)
            })
            .collect()
    });
    let (mut re, mut im) = (Dd::ZERO, Dd::ZERO);
    for &(hi, lo) in coeffs.iter().rev() {
        let next_re = re.mul_f64(z.re).sub(im.mul_f64(z.im)).add(Dd { hi, lo });
        im = re.mul_f64(z.im).add(im.mul_f64(z.re));
        re = next_re;
    }
    Complex64::new(re.hi + re.lo, im.hi + im.lo)
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let u = Dd::two_sum(s.hi, s.lo + t.hi);
        Dd::two_sum(u.hi, u.lo + t.lo)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = self.hi * b;
        let e = self.hi.mul_add(b, -p);
        Dd::two_sum(p, e + self.lo * b)
    }
}

/// Exact stability polynomial of a stepper.
pub fn exact_polynomial(method: StepperKind) -> RationalPoly {
    match method {
        StepperKind::Rk2Midpoint => RationalPoly::exp_taylor(2),
        StepperKind::Rk4 => RationalPoly::exp_taylor(4),
        StepperKind::Rk6 => rk6_polynomial(),
        StepperKind::Dc6Rk24 => dc6_polynomial(),
    }
}

/// Coefficients of the stability polynomial, expanded exactly then rounded.
pub fn expand_coefficients(method: StepperKind) -> StabilityPolynomial {
    StabilityPolynomial::new(exact_polynomial(method).to_f64_coeffs())
}

fn dc6_polynomial() -> RationalPoly {
    let q5 = RationalPoly::exp_taylor(4).scale_argument(&ratio(1, 5));
    let powers: Vec<RationalPoly> = (0..6).map(|i| q5.pow(i)).collect();
    let combine = |weights: &[i32; 6], num: i32, den: i32| {
        let sum = weights
            .iter()
            .zip(&powers)
            .fold(RationalPoly::zero(), |acc, (&w, p)| &acc + &p.scale(&integer(i64::from(w))));
        sum.scale(&ratio(i64::from(num), i64::from(den)))
    };
    let r = combine(&E1_STENCIL.weights, E1_STENCIL.num, E1_STENCIL.den);
    let s = combine(&E2_STENCIL.weights, E2_STENCIL.num, E2_STENCIL.den);
    let base = RationalPoly::exp_taylor(2);
    let zs = &RationalPoly::z() * &s;
    &(&base + &r) + &zs
}

// R(z) = 1 + Σ_j z^j bᵀA^{j-1}1, evaluated in Q(√21); the irrational parts cancel.
fn rk6_polynomial() -> RationalPoly {
    let t = luther_tableau();
    let n = t.b.len();
    let mut coeffs = vec![integer(1)];
    let mut v: Vec<_> = (0..n).map(|_| crate::rational::Surd21::one()).collect();
    for _ in 0..n {
        let c = t.b.iter().zip(&v).fold(crate::rational::Surd21::zero(), |acc, (b, x)| &acc + &(b * x));
        assert!(
            num_traits::Zero::is_zero(&c.irrational),
            "stability coefficient must be rational"
        );
        coeffs.push(c.rational);
        v = (0..n)
            .map(|i| {
                t.a[i]
                    .iter()
                    .zip(&v)
                    .fold(crate::rational::Surd21::zero(), |acc, (a, x)| &acc + &(a * x))
            })
            .collect();
    }
    RationalPoly::new(coeffs)
}

/// Membership grid `|p(z)| ≤ 1` over a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRaster {
    pub re_range: (f64, f64),
    pub im_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    /// Row-major by imaginary index: `inside[j * nx + i]`.
    pub inside: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterSpec {
    pub re_range: (f64, f64),
    pub im_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl Default for RasterSpec {
    fn default() -> Self {
        RasterSpec { re_range: (-6.0, 1.0), im_range: (-5.0, 5.0), nx: 701, ny: 1001 }
    }
}

impl RasterSpec {
    pub fn point(&self, i: usize, j: usize) -> Complex64 {
        let re = self.re_range.0 + i as f64 * (self.re_range.1 - self.re_range.0) / (self.nx - 1) as f64;
        let im = self.im_range.0 + j as f64 * (self.im_range.1 - self.im_range.0) / (self.ny - 1) as f64;
        Complex64::new(re, im)
    }

    pub fn dx(&self) -> f64 {
        (self.re_range.1 - self.re_range.0) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.im_range.1 - self.im_range.0) / (self.ny - 1) as f64
    }
}

impl RegionRaster {
    pub fn spec(&self) -> RasterSpec {
        RasterSpec { re_range: self.re_range, im_range: self.im_range, nx: self.nx, ny: self.ny }
    }

    pub fn is_inside(&self, i: usize, j: usize) -> bool {
        self.inside[j * self.nx + i]
    }

    pub fn point(&self, i: usize, j: usize) -> Complex64 {
        self.spec().point(i, j)
    }

    pub fn count_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Inside cells with at least one outside (or off-grid) 4-neighbour.
    pub fn boundary_points(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        for j in 0..self.ny {
            for i in 0..self.nx {
                if !self.is_inside(i, j) {
                    continue;
                }
                let edge = i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny;
                let touches_outside = edge
                    || !self.is_inside(i - 1, j)
                    || !self.is_inside(i + 1, j)
                    || !self.is_inside(i, j - 1)
                    || !self.is_inside(i, j + 1);
                if touches_outside {
                    out.push(self.point(i, j));
                }
            }
        }
        out
    }

    /// Binary PGM (P5): inside black (0), outside white (255), top row = largest imaginary part.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.nx, self.ny)?;
        let mut row = vec![0u8; self.nx];
        for j in (0..self.ny).rev() {
            for (i, px) in row.iter_mut().enumerate() {
                *px = if self.is_inside(i, j) { 0 } else { 255 };
            }
            w.write_all(&row)?;
        }
        Ok(())
    }
}

pub fn stability_raster(poly: &StabilityPolynomial, spec: RasterSpec) -> RegionRaster {
    assert!(spec.nx >= 2 && spec.ny >= 2, "raster needs at least 2x2 points");
    assert!(
        spec.re_range.1 > spec.re_range.0 && spec.im_range.1 > spec.im_range.0,
        "raster ranges must be nonempty"
    );
    let mut inside = Vec::with_capacity(spec.nx * spec.ny);
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            inside.push(poly.modulus(spec.point(i, j)) <= 1.0);
        }
    }
    RegionRaster { re_range: spec.re_range, im_range: spec.im_range, nx: spec.nx, ny: spec.ny, inside }
}

const SCAN_STEP: f64 = 1e-4;
const BISECT_TOL: f64 = 1e-6;

/// Leftmost `x* < 0` such that `|p(x)| ≤ 1` on all of `[x*, 0]`.
pub fn real_axis_boundary(poly: &StabilityPolynomial) -> Result<f64, StabilityError> {
    let inside = |x: f64| poly.eval_real(x).abs() <= 1.0;
    // the interval must start right at the origin
    let probe = (1..=100).map(|i| -(i as f64) * SCAN_STEP);
    if !probe.clone().any(inside) {
        return Err(StabilityError::NotFound);
    }
    let mut last_inside = 0.0;
    let mut i: u64 = 1;
    loop {
        let x = -(i as f64) * SCAN_STEP;
        if !inside(x) {
            return Ok(bisect(last_inside, x, inside));
        }
        last_inside = x;
        i += 1;
        if x < -1e4 {
            return Err(StabilityError::NotFound);
        }
    }
}

// `a` satisfies the predicate, `b` does not; returns the crossing to BISECT_TOL.
fn bisect(mut a: f64, mut b: f64, pred: impl Fn(f64) -> bool) -> f64 {
    while (a - b).abs() > BISECT_TOL {
        let m = 0.5 * (a + b);
        if pred(m) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Raster used by [`imaginary_extent`].
pub const EXTENT_RASTER: RasterSpec =
    RasterSpec { re_range: (-6.0, 0.5), im_range: (-5.5, 5.5), nx: 2001, ny: 2001 };

/// Largest `|Im z|` over the stability region, rounded to 1e-3.
pub fn imaginary_extent(poly: &StabilityPolynomial) -> Result<f64, StabilityError> {
    imaginary_extent_on(poly, EXTENT_RASTER)
}

/// [`imaginary_extent`] on a caller-chosen raster (imaginary range symmetric about 0).
pub fn imaginary_extent_on(poly: &StabilityPolynomial, spec: RasterSpec) -> Result<f64, StabilityError> {
    real_axis_boundary(poly)?;
    let inside = |z: Complex64| poly.modulus(z) <= 1.0;
    // top boundary of the region in column x, found by bisection above the highest inside cell
    let top_in_column = |x: f64| -> Option<f64> {
        let dy = spec.dy();
        let mut best: Option<f64> = None;
        for j in (0..spec.ny).rev() {
            let y = spec.im_range.0 + j as f64 * dy;
            if y < 0.0 {
                break;
            }
            if inside(Complex64::new(x, y)) {
                let upper = y + dy;
                best = Some(if inside(Complex64::new(x, upper)) {
                    upper
                } else {
                    bisect(y, upper, |yy| inside(Complex64::new(x, yy)))
                });
                break;
            }
        }
        best
    };
    let mut best_x = f64::NAN;
    let mut best_y = f64::NEG_INFINITY;
    for i in 0..spec.nx {
        let x = spec.point(i, 0).re;
        if let Some(y) = top_in_column(x) {
            if y > best_y {
                best_y = y;
                best_x = x;
            }
        }
    }
    if !best_y.is_finite() {
        return Err(StabilityError::NotFound);
    }
    // refine the column position by golden-section search on the top boundary
    let (mut lo, mut hi) = (best_x - spec.dx(), best_x + spec.dx());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let height = |x: f64| top_in_column(x).unwrap_or(f64::NEG_INFINITY);
    while hi - lo > 1e-7 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if height(a) >= height(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let refined = height(0.5 * (lo + hi)).max(best_y);
    Ok((refined * 1e3).round() / 1e3)
}

/// Grid points inside `inner` (by margin ε) but outside `outer` (by margin ε).
pub fn containment_check(
    inner: &StabilityPolynomial,
    outer: &StabilityPolynomial,
    spec: RasterSpec,
) -> Vec<Complex64> {
    const EPS: f64 = 1e-9;
    let mut violations = Vec::new();
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let z = spec.point(i, j);
            if inner.modulus(z) <= 1.0 - EPS && outer.modulus(z) > 1.0 + EPS {
                violations.push(z);
            }
        }
    }
    violations
}
