//! Published table entries for the ODE test problems.

use hdc_core::ivp::{max_abs_error, max_abs_error_against, observed_order, RunStatus};
use hdc_core::oracle::{reference_trajectory, ReferenceSpec};
use hdc_core::problems;
use hdc_core::steppers::{integrate, StepperKind};

fn within_factor(value: f64, target: f64, factor: f64) -> bool {
    value.is_finite() && value <= target * factor && value >= target / factor
}

fn steps(t_end: f64, k: f64) -> usize {
    (t_end / k).round() as usize
}

/// Error at every step, which is how the published explicit columns were measured.
fn every_step_error(problem: &hdc_core::ivp::OdeProblem, kind: StepperKind, k: f64) -> Option<Vec<f64>> {
    let n = steps(problem.t_end, k);
    let run = integrate(problem, kind, n, n + 1);
    if !run.status.is_completed() {
        return None;
    }
    max_abs_error(&run, |t| problem.exact(t).unwrap()).ok()
}

#[test]
fn bernoulli_rk6_column() {
    let e = every_step_error(&problems::bernoulli(), StepperKind::Rk6, 5e-6).unwrap()[0];
    assert!(within_factor(e, 3.51e-12, 2.0), "{e:e}");
}

#[test]
fn bernoulli_dc6_large_step() {
    let e = every_step_error(&problems::bernoulli(), StepperKind::Dc6Rk24, 1e-3).unwrap()[0];
    assert!(within_factor(e, 4.40e-2, 2.0), "{e:e}");
}

#[test]
fn bernoulli_rk4_large_step_diverges() {
    let p = problems::bernoulli();
    let run = integrate(&p, StepperKind::Rk4, steps(p.t_end, 4e-3), 1000);
    assert!(matches!(run.status, RunStatus::Diverged { .. }), "{:?}", run.status);
}

#[test]
fn b5_rk4_row() {
    let p = problems::b5(5000.0);
    let e = every_step_error(&p, StepperKind::Rk4, 4e-4).unwrap()[0];
    assert!(within_factor(e, 1.31, 2.0), "{e}");
}

#[test]
fn b5_dc6_row() {
    let p = problems::b5(5000.0);
    let e: Vec<f64> = [4e-5, 2e-5].iter().map(|&k| every_step_error(&p, StepperKind::Dc6Rk24, k).unwrap()[0]).collect();
    assert!(within_factor(e[1], 8.16e-9, 2.0), "{e:?}");
    let order = observed_order(e[0], 4e-5, e[1], 2e-5).unwrap();
    assert!((order - 5.998).abs() <= 0.3, "{order}");
}

#[test]
fn oscillatory_large_steps() {
    let p = problems::oscillatory(10.0);
    let cap = hdc_core::ivp::ODE_SAMPLE_CAP;
    let errors: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = [2.5e-2, 1.25e-2]
            .iter()
            .map(|&k| {
                let p = &p;
                s.spawn(move || {
                    let run = integrate(p, StepperKind::Dc6Rk24, steps(p.t_end, k), cap);
                    max_abs_error(&run, |t| p.exact(t).unwrap()).unwrap()[0]
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert!(within_factor(errors[1], 0.4898, 1.5), "{errors:?}");
    let order = observed_order(errors[0], 2.5e-2, errors[1], 1.25e-2).unwrap();
    assert!((order - 7.0).abs() <= 0.3, "{order}");
}

#[test]
fn robertson_short_horizon_counts() {
    let p = problems::robertson(100.0);
    let run = integrate(&p, StepperKind::Dc6Rk24, 100_000, 101);
    assert!(run.status.is_completed());
    assert_eq!(run.rhs_evals, 2_100_000);
    let y = run.last_state().unwrap();
    assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn robertson_short_horizon_against_reference() {
    let p = problems::robertson(1.0);
    let run = integrate(&p, StepperKind::Dc6Rk24, 1000, 11);
    let reference = reference_trajectory(&p, &run.sample_times, &ReferenceSpec::new(1e-13, 1000)).unwrap();
    let errs = max_abs_error_against(&run, &run.sample_times, &reference.states_at(&run.sample_times).unwrap()).unwrap();
    assert!(errs.iter().all(|&e| e < 1e-8), "{errs:?}");
}
