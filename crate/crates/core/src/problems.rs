//! Stiff ODE benchmarks.
//!
//! Every constructor returns the canonical instance; [`by_name`] resolves a
//! registry name plus `name=value` overrides for the command line.

use thiserror::Error;

use crate::ivp::OdeProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem `{0}` (known: {known})", known = NAMES.join(", "))]
    Unknown(String),
    #[error("problem `{problem}` has no parameter `{param}` (accepted: {accepted})")]
    UnknownParam { problem: String, param: String, accepted: String },
    #[error("invalid value {value} for parameter `{param}`: {reason}")]
    InvalidParam { param: String, value: f64, reason: &'static str },
}

/// Registry names, in table order.
pub const NAMES: [&str; 6] = ["bernoulli", "oscillatory", "b5", "e5", "robertson", "vdp"];

/// Accepted parameter names per problem.
pub fn param_names(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "bernoulli" => &["t_end"],
        "oscillatory" => &["lambda", "t_end"],
        "b5" => &["alpha", "t_end"],
        "e5" => &["printed", "t_end"],
        "robertson" => &["t_end"],
        "vdp" => &["mu", "t_end"],
        _ => return None,
    })
}

/// Builds a registered problem with parameter overrides.
pub fn by_name(name: &str, params: &[(String, f64)]) -> Result<OdeProblem, ProblemError> {
    let name = name.trim().to_ascii_lowercase();
    let name = match name.as_str() {
        "van_der_pol" | "vanderpol" => "vdp".to_string(),
        _ => name,
    };
    let accepted = param_names(&name).ok_or_else(|| ProblemError::Unknown(name.clone()))?;
    let mut t_end = None;
    let value_of = |key: &str| params.iter().rev().find(|(k, _)| k == key).map(|(_, v)| *v);
    for (k, _) in params {
        if !accepted.contains(&k.as_str()) {
            return Err(ProblemError::UnknownParam {
                problem: name.clone(),
                param: k.clone(),
                accepted: accepted.join(", "),
            });
        }
    }
    if let Some(t) = value_of("t_end") {
        if !(t > 0.0 && t.is_finite()) {
            return Err(ProblemError::InvalidParam { param: "t_end".into(), value: t, reason: "must be positive" });
        }
        t_end = Some(t);
    }
    let problem = match name.as_str() {
        "bernoulli" => bernoulli(),
        "oscillatory" => oscillatory(value_of("lambda").unwrap_or(10.0)),
        "b5" => b5(value_of("alpha").unwrap_or(5000.0)),
        "e5" => match value_of("printed") {
            Some(v) if v != 0.0 => e5_printed(),
            _ => e5(),
        },
        "robertson" => robertson(t_end.unwrap_or(1e5)),
        "vdp" => {
            let mu = value_of("mu").unwrap_or(1000.0);
            if mu.is_nan() || mu < 0.0 {
                return Err(ProblemError::InvalidParam { param: "mu".into(), value: mu, reason: "must be nonnegative" });
            }
            van_der_pol(mu)
        }
        _ => unreachable!(),
    };
    Ok(match t_end {
        Some(t) if t != problem.t_end => problem.with_t_end(t).with_param("t_end", t),
        _ => problem,
    })
}

#[inline]
fn pow20(u: f64) -> f64 {
    let u2 = u * u;
    let u4 = u2 * u2;
    let u8 = u4 * u4;
    let u16 = u8 * u8;
    u16 * u4
}

/// `u' = -0.1u - 1000u^20`, `u(0) = 1` on `[0, 10]`.
pub fn bernoulli() -> OdeProblem {
    OdeProblem::new("bernoulli", 10.0, vec![1.0], |_, u: &[f64], out: &mut [f64]| {
        out[0] = -0.1 * u[0] - 1000.0 * pow20(u[0]);
    })
    .with_exact(|t| vec![bernoulli_exact(t)])
}

/// `(10001 e^{1.9t} - 10000)^{-1/19}`.
pub fn bernoulli_exact(t: f64) -> f64 {
    // 10001 e^x - 10000 = 1 + 10001 (e^x - 1), keeps precision near t = 0
    (1.0 + 10001.0 * (1.9 * t).exp_m1()).powf(-1.0 / 19.0)
}

/// Closed-form time derivative of [`bernoulli_exact`].
pub fn bernoulli_exact_derivative(t: f64) -> f64 {
    let u = bernoulli_exact(t);
    -(1.0 / 19.0) * pow20(u) * 1.9 * 10001.0 * (1.9 * t).exp()
}

/// `u' = λ u cos t`, `u(0) = 1`, exact `e^{λ sin t}`, on `[0, 10^6]`.
pub fn oscillatory(lambda: f64) -> OdeProblem {
    OdeProblem::new("oscillatory", 1e6, vec![1.0], move |t, u: &[f64], out: &mut [f64]| {
        out[0] = lambda * u[0] * t.cos();
    })
    .with_param("lambda", lambda)
    .with_exact(move |t| vec![(lambda * t.sin()).exp()])
}

/// Linear 6×6 block-diagonal problem with eigenvalues `-10 ± αi, -4, -1, -0.5, -0.1`, on `[0, 20]`.
pub fn b5(alpha: f64) -> OdeProblem {
    OdeProblem::new("b5", 20.0, vec![1.0; 6], move |_, y: &[f64], out: &mut [f64]| {
        out[0] = -10.0 * y[0] + alpha * y[1];
        out[1] = -alpha * y[0] - 10.0 * y[1];
        out[2] = -4.0 * y[2];
        out[3] = -y[3];
        out[4] = -0.5 * y[4];
        out[5] = -0.1 * y[5];
    })
    .with_param("alpha", alpha)
    .with_exact(move |t| b5_exact(alpha, t))
}

pub fn b5_exact(alpha: f64, t: f64) -> Vec<f64> {
    let d = (-10.0 * t).exp();
    let (s, c) = (alpha * t).sin_cos();
    vec![d * (c + s), d * (c - s), (-4.0 * t).exp(), (-t).exp(), (-0.5 * t).exp(), (-0.1 * t).exp()]
}

const E5_A: f64 = 7.89e-10;
const E5_B: f64 = 1.1e7;
const E5_C: f64 = 1.13e3;
const E5_MC: f64 = 1.13e9;
const E5_Y0: f64 = 1.76e-3;

/// Four-species chemistry problem E5, `y(0) = (1.76e-3, 0, 0, 0)`, on `[0, 1000]`.
pub fn e5() -> OdeProblem {
    OdeProblem::new("e5", 1000.0, vec![E5_Y0, 0.0, 0.0, 0.0], |_, y: &[f64], out: &mut [f64]| {
        let r1 = E5_A * y[0];
        let r2 = E5_B * y[0] * y[2];
        let r3 = E5_MC * y[1] * y[2];
        let r4 = E5_C * y[3];
        out[0] = -r1 - r2;
        out[1] = r1 - r3;
        out[2] = r1 - r2 + r4 - r3;
        out[3] = r2 - r4;
    })
}

/// E5 with `y1 y2` products and `+1.13e3 y4` in the last equation; `y4` grows like `e^{1130 t}`.
pub fn e5_printed() -> OdeProblem {
    OdeProblem::new("e5", 1000.0, vec![E5_Y0, 0.0, 0.0, 0.0], |_, y: &[f64], out: &mut [f64]| {
        let r1 = E5_A * y[0];
        let r2 = E5_B * y[0] * y[1];
        let r3 = E5_MC * y[1] * y[2];
        let r4 = E5_C * y[3];
        out[0] = -r1 - r2;
        out[1] = r1 - r3;
        out[2] = r1 - r2 + r4 - r3;
        out[3] = r2 + r4;
    })
    .with_param("printed", 1.0)
}

/// Robertson kinetics, `y(0) = (1, 0, 0)`; the canonical horizon is `10^5`.
pub fn robertson(t_end: f64) -> OdeProblem {
    OdeProblem::new("robertson", t_end, vec![1.0, 0.0, 0.0], |_, y: &[f64], out: &mut [f64]| {
        let slow = 0.04 * y[0];
        let mid = 1e4 * y[1] * y[2];
        let fast = 3e7 * y[1] * y[1];
        out[0] = -slow + mid;
        out[1] = slow - mid - fast;
        out[2] = fast;
    })
}

/// van der Pol oscillator, `y(0) = (2, 0)`, on `[0, 3000]`.
pub fn van_der_pol(mu: f64) -> OdeProblem {
    OdeProblem::new("vdp", 3000.0, vec![2.0, 0.0], move |_, y: &[f64], out: &mut [f64]| {
        out[0] = y[1];
        out[1] = mu * (1.0 - y[0] * y[0]) * y[1] - y[0];
    })
    .with_param("mu", mu)
}
