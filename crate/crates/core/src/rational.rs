//! Exact arithmetic helpers: rational polynomials and the field Q(√21).
//!
//! The degree-21 stability polynomial has coefficients with denominators up
//! to 5^21, and Luther's RK6 tableau lives in Q(√21); both are expanded
//! exactly here and rounded to `f64` only at the end.

use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn integer(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Nearest-ish `f64` for an exact rational (good to an ulp or so).
pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Dense polynomial `Σ c_j z^j` with exact rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalPoly {
    coeffs: Vec<BigRational>,
}

impl RationalPoly {
    pub fn new(coeffs: Vec<BigRational>) -> Self {
        let mut p = RationalPoly { coeffs };
        p.trim();
        p
    }

    pub fn constant(c: BigRational) -> Self {
        RationalPoly::new(vec![c])
    }

    pub fn one() -> Self {
        RationalPoly::constant(BigRational::one())
    }

    pub fn zero() -> Self {
        RationalPoly { coeffs: Vec::new() }
    }

    /// The monomial `z`.
    pub fn z() -> Self {
        RationalPoly::new(vec![BigRational::zero(), BigRational::one()])
    }

    /// Truncated exponential `Σ_{j≤n} z^j / j!`.
    pub fn exp_taylor(n: usize) -> Self {
        let mut coeffs = Vec::with_capacity(n + 1);
        let mut c = BigRational::one();
        for j in 0..=n {
            if j > 0 {
                c /= integer(j as i64);
            }
            coeffs.push(c.clone());
        }
        RationalPoly::new(coeffs)
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(Zero::is_zero) {
            self.coeffs.pop();
        }
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        RationalPoly::new(self.coeffs.iter().map(|x| x * c).collect())
    }

    /// `p(c z)`.
    pub fn scale_argument(&self, c: &BigRational) -> Self {
        let mut factor = BigRational::one();
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for x in &self.coeffs {
            coeffs.push(x * &factor);
            factor *= c;
        }
        RationalPoly::new(coeffs)
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(RationalPoly::one(), |acc, _| &acc * self)
    }

    pub fn to_f64_coeffs(&self) -> Vec<f64> {
        self.coeffs.iter().map(to_f64).collect()
    }
}

impl Add for &RationalPoly {
    type Output = RationalPoly;
    fn add(self, rhs: &RationalPoly) -> RationalPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).cloned().unwrap_or_else(BigRational::zero);
                let b = rhs.coeffs.get(i).cloned().unwrap_or_else(BigRational::zero);
                a + b
            })
            .collect();
        RationalPoly::new(coeffs)
    }
}

impl Mul for &RationalPoly {
    type Output = RationalPoly;
    fn mul(self, rhs: &RationalPoly) -> RationalPoly {
        if self.coeffs.is_empty() || rhs.coeffs.is_empty() {
            return RationalPoly::zero();
        }
        let mut coeffs = vec![BigRational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        RationalPoly::new(coeffs)
    }
}

/// Element `rational + irrational·√21` of Q(√21).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Surd21 {
    pub rational: BigRational,
    pub irrational: BigRational,
}

impl Surd21 {
    pub fn new(rational: BigRational, irrational: BigRational) -> Self {
        Surd21 { rational, irrational }
    }

    /// `(a + b√21) / d` with integer `a`, `b`, `d`.
    pub fn frac(a: i64, b: i64, d: i64) -> Self {
        Surd21::new(ratio(a, d), ratio(b, d))
    }

    pub fn zero() -> Self {
        Surd21::frac(0, 0, 1)
    }

    pub fn one() -> Self {
        Surd21::frac(1, 0, 1)
    }

    pub fn is_zero(&self) -> bool {
        self.rational.is_zero() && self.irrational.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.rational) + to_f64(&self.irrational) * 21f64.sqrt()
    }
}

impl Add for &Surd21 {
    type Output = Surd21;
    fn add(self, rhs: &Surd21) -> Surd21 {
        Surd21::new(&self.rational + &rhs.rational, &self.irrational + &rhs.irrational)
    }
}

impl Sub for &Surd21 {
    type Output = Surd21;
    fn sub(self, rhs: &Surd21) -> Surd21 {
        Surd21::new(&self.rational - &rhs.rational, &self.irrational - &rhs.irrational)
    }
}

impl Neg for &Surd21 {
    type Output = Surd21;
    fn neg(self) -> Surd21 {
        Surd21::new(-&self.rational, -&self.irrational)
    }
}

impl Mul for &Surd21 {
    type Output = Surd21;
    fn mul(self, rhs: &Surd21) -> Surd21 {
        let rational =
            &self.rational * &rhs.rational + &self.irrational * &rhs.irrational * integer(21);
        let irrational = &self.rational * &rhs.irrational + &self.irrational * &rhs.rational;
        Surd21::new(rational, irrational)
    }
}
