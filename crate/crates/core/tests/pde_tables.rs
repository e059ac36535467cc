//! Published table entries for the reaction-diffusion problems.

use hdc_core::ivp::{euclidean_error, euclidean_error_blocks, observed_order, PDE_SAMPLE_CAP};
use hdc_core::oracle::{lcm, merge_times, reference_trajectory, run_sample_times, ReferenceSpec};
use hdc_core::pde::{bistable_problem, fisher_problem, front_position, three_species_problem, BoundaryKind};
use hdc_core::steppers::{integrate, StepperKind};

fn within_factor(value: f64, target: f64, factor: f64) -> bool {
    value.is_finite() && value <= target * factor && value >= target / factor
}

#[test]
fn fisher_dirichlet_fine_step() {
    let p = fisher_problem(80, BoundaryKind::Dirichlet).unwrap();
    let run = integrate(&p.as_ode, StepperKind::Dc6Rk24, 120_000, PDE_SAMPLE_CAP);
    let exact: Vec<Vec<f64>> = run.sample_times.iter().map(|&t| p.as_ode.exact(t).unwrap()).collect();
    let e = euclidean_error(&run, &run.sample_times, &exact).unwrap();
    assert!(e < 1e-12, "{e:e}");
}

#[test]
fn fisher_neumann_converges() {
    let p = fisher_problem(40, BoundaryKind::Neumann).unwrap();
    // the Neumann border rows widen the spectrum: M=40 needs k <= 2.5e-4
    let errs: Vec<f64> = [40_000usize, 80_000]
        .iter()
        .map(|&n| {
            let run = integrate(&p.as_ode, StepperKind::Dc6Rk24, n, PDE_SAMPLE_CAP);
            let exact: Vec<Vec<f64>> = run.sample_times.iter().map(|&t| p.as_ode.exact(t).unwrap()).collect();
            euclidean_error(&run, &run.sample_times, &exact).unwrap()
        })
        .collect();
    // time error is negligible at these steps; what is left is the spatial error
    assert!(errs.iter().all(|&e| e < 1e-8), "{errs:?}");
    assert!((errs[0] - errs[1]).abs() <= 1e-3 * errs[0], "{errs:?}");
}

#[test]
fn bistable_rows() {
    let p = bistable_problem(100).unwrap().as_ode;
    let ns = [800usize, 1200];
    let times = merge_times(&ns.iter().map(|&n| run_sample_times(p.t_end, n, PDE_SAMPLE_CAP)).collect::<Vec<_>>());
    let reference = reference_trajectory(&p, &times, &ReferenceSpec::new(1e-11, lcm(800, 1200))).unwrap();
    let error = |kind: StepperKind, n: usize| {
        let run = integrate(&p, kind, n, PDE_SAMPLE_CAP);
        assert!(run.status.is_completed(), "{kind:?} N={n}");
        euclidean_error(&run, &run.sample_times, &reference.states_at(&run.sample_times).unwrap()).unwrap()
    };
    let dc = [error(StepperKind::Dc6Rk24, 800), error(StepperKind::Dc6Rk24, 1200)];
    assert!(within_factor(dc[1], 2.05e-9, 5.0), "{dc:?}");
    let order = observed_order(dc[0], 1.0 / 800.0, dc[1], 1.0 / 1200.0).unwrap();
    assert!((order - 6.58).abs() <= 0.7, "{order}");
    let rk4 = error(StepperKind::Rk4, 1200);
    let rk6 = error(StepperKind::Rk6, 1200);
    assert!(within_factor(rk4, 9.28e-6, 5.0), "{rk4:e}");
    assert!(within_factor(rk6, 1.84e-6, 5.0), "{rk6:e}");
}

#[test]
fn bistable_front_advances() {
    let p = bistable_problem(100).unwrap();
    let n = 1200;
    let run = integrate(&p.as_ode, StepperKind::Dc6Rk24, n, n + 1);
    let x = p.x();
    let k = p.as_ode.t_end / n as f64;
    let mut last = f64::NEG_INFINITY;
    for t in [0.0, 0.0059, 0.0118, 0.0177, 0.0236, 0.0295] {
        let i = (t / k).round() as usize;
        let u = p.physical(run.sample_times[i], &run.sample_states[i]);
        // once the wave has swept the whole interval there is no crossing left
        let front = front_position(&x, &u, 0.5).unwrap_or_else(|| {
            assert!(u.iter().all(|&v| v >= 0.5), "t={t}: no front but not invaded");
            x[x.len() - 1]
        });
        assert!(front > last, "t={t}: {front} after {last}");
        last = front;
    }
}

#[test]
fn three_species_row() {
    let p = three_species_problem(100).unwrap();
    let n = 12_000;
    let run = integrate(&p.as_ode, StepperKind::Dc6Rk24, n, PDE_SAMPLE_CAP);
    assert!(run.status.is_completed());
    let reference = reference_trajectory(&p.as_ode, &run.sample_times, &ReferenceSpec::new(5e-14, n)).unwrap();
    let states = reference.states_at(&run.sample_times).unwrap();
    let errs = euclidean_error_blocks(&run, &run.sample_times, &states, p.species).unwrap();
    for (e, target) in errs.iter().zip([1.6e-13, 1.6e-13, 1.6e-14]) {
        assert!(*e <= target * 10.0, "{errs:?}");
    }
}
