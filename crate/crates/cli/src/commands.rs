use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hdc_core::ivp::{
    self, euclidean_error_blocks, max_abs_error, max_abs_error_against, ConvergenceRecord, OdeProblem, RunStatus,
    TrajectoryRun,
};
use hdc_core::oracle::{self, OracleError, ReferenceSpec, ReferenceTrajectory};
use hdc_core::pde::{self, RdProblem};
use hdc_core::problems::{self, ProblemError};
use hdc_core::report::{self, StepColumn};
use hdc_core::stability::{
    containment_check, expand_coefficients, imaginary_extent, real_axis_boundary, stability_raster,
};
use hdc_core::steppers::{integrate, integrate_at_indices, StepperKind};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::error::CliError;

/// Result of a command that ran to the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    /// Some requested run diverged.
    pub partial: bool,
}

struct OutDir(PathBuf);

impl OutDir {
    fn create(dir: &Path) -> Result<OutDir, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutDir(dir.to_path_buf()))
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.0.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        println!("wrote {}", path.display());
        Ok(path)
    }
}

fn status_name(status: RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".into(),
        RunStatus::Diverged { at_step } => format!("diverged at step {at_step}"),
    }
}

fn component_labels(count: usize) -> Vec<String> {
    if count == 1 { vec!["u".into()] } else { (1..=count).map(|i| format!("u{i}")).collect() }
}

fn ode_problem(cfg: &RunConfig) -> Result<OdeProblem, CliError> {
    let name = cfg.require_problem()?;
    problems::by_name(name, &cfg.params).map_err(|e| match e {
        ProblemError::Unknown(_) if pde::by_name(name, 20).is_some() => {
            CliError::usage(format!("`{name}` is a PDE problem; use `hdc pde`"))
        }
        e => CliError::usage(e.to_string()),
    })
}

fn pde_problem(cfg: &RunConfig) -> Result<RdProblem, CliError> {
    let name = cfg.require_problem()?;
    if !cfg.params.is_empty() {
        return Err(CliError::usage("PDE problems take no --param overrides"));
    }
    let m = cfg.intervals.unwrap_or_else(|| pde::default_intervals(name));
    match pde::by_name(name, m) {
        Some(p) => p.map_err(|e| CliError::usage(e.to_string())),
        None => Err(CliError::usage(format!("unknown PDE problem `{name}` (known: {})", pde::NAMES.join(", ")))),
    }
}

#[derive(Debug, Serialize)]
struct CellSummary {
    method: &'static str,
    n_steps: usize,
    k: f64,
    status: String,
    rhs_evals: u64,
    wall_seconds: f64,
}

#[derive(Debug, Serialize)]
struct ReferenceSummary {
    n_steps_finest: usize,
    agreement: f64,
    reached_tolerance: bool,
}

#[derive(Debug, Serialize)]
struct TableSummary {
    problem: String,
    error_source: &'static str,
    reference: Option<ReferenceSummary>,
    cells: Vec<CellSummary>,
}

/// How errors are measured against the exact or reference states.
#[derive(Debug, Clone, Copy)]
enum Norm {
    MaxAbs,
    /// Euclidean norm per block of this many components.
    Euclidean(usize),
}

struct Table<'a> {
    problem: &'a OdeProblem,
    stem: String,
    methods: Vec<StepperKind>,
    ns: Vec<usize>,
    cap: usize,
    norm: Norm,
    components: Vec<String>,
    step_column: StepColumn,
}

fn reference_for(problem: &OdeProblem, ns: &[usize], cap: usize, cfg: &RunConfig) -> Result<(ReferenceTrajectory, bool), CliError> {
    let times = oracle::merge_times(&ns.iter().map(|&n| oracle::run_sample_times(problem.t_end, n, cap)).collect::<Vec<_>>());
    let mut start = ns.iter().fold(1, |a, &b| oracle::lcm(a, b));
    loop {
        let spec = ReferenceSpec::new(cfg.ref_tol, start);
        match oracle::reference_cached(problem, &times, &spec, cfg.ref_cache.as_deref()) {
            Ok(r) => return Ok((r, true)),
            Err(OracleError::Stalled { best: Some(best), .. } | OracleError::BudgetExhausted { best: Some(best), .. }) => {
                eprintln!(
                    "warning: reference agreement {:e} (N = {}) did not reach {:e}",
                    best.agreement, best.n_steps_finest, cfg.ref_tol
                );
                return Ok((*best, false));
            }
            // too coarse to be stable: start finer
            Err(OracleError::Diverged { .. }) if (start as u64) < spec.step_budget / 4 => start *= 2,
            Err(e) => return Err(CliError::Reference(e)),
        }
    }
}

fn cell_errors(
    run: &TrajectoryRun,
    problem: &OdeProblem,
    reference: Option<&ReferenceTrajectory>,
    norm: Norm,
) -> Result<Vec<f64>, CliError> {
    let states: Vec<Vec<f64>> = match reference {
        Some(r) => r
            .states_at(&run.sample_times)
            .map_err(CliError::Reference)?
            .into_iter()
            .map(<[f64]>::to_vec)
            .collect(),
        None => run.sample_times.iter().map(|&t| problem.exact(t).expect("exact solution")).collect(),
    };
    let result = match norm {
        Norm::MaxAbs if reference.is_none() => max_abs_error(run, |t| problem.exact(t).expect("exact solution")),
        Norm::MaxAbs => max_abs_error_against(run, &run.sample_times, &states),
        Norm::Euclidean(block) => euclidean_error_blocks(run, &run.sample_times, &states, block),
    };
    result.map_err(|e| CliError::usage(e.to_string()))
}

fn run_table(table: &Table, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let out = OutDir::create(&cfg.output)?;
    let p = table.problem;
    let reference = if p.has_exact() { None } else { Some(reference_for(p, &table.ns, table.cap, cfg)?) };

    let cells: Vec<(StepperKind, usize)> =
        table.methods.iter().flat_map(|&m| table.ns.iter().map(move |&n| (m, n))).collect();
    let results = cells
        .par_iter()
        .map(|&(method, n)| {
            let start = Instant::now();
            let run = integrate(p, method, n, table.cap);
            let errors = if run.status.is_completed() {
                Some(cell_errors(&run, p, reference.as_ref().map(|r| &r.0), table.norm)?)
            } else {
                None
            };
            let summary = CellSummary {
                method: method.name(),
                n_steps: n,
                k: run.step,
                status: status_name(run.status),
                rhs_evals: run.rhs_evals,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            Ok((errors, summary))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let width = table.components.len();
    let mut partial = false;
    for (mi, method) in table.methods.iter().enumerate() {
        let rows = &results[mi * table.ns.len()..(mi + 1) * table.ns.len()];
        partial |= rows.iter().any(|(e, _)| e.is_none());
        let mut records = ConvergenceRecord::table(
            rows.iter().map(|(e, s)| (p.t_end / s.n_steps as f64, e.clone())).collect(),
        );
        for (i, r) in records.iter_mut().enumerate() {
            if r.errors.is_empty() {
                r.errors = vec![f64::NAN; width];
                r.orders = (i > 0).then(|| vec![None; width]);
            }
        }
        let md = report::markdown_table(&[(method.label().to_string(), records.clone())], &table.components, table.step_column);
        println!("{md}");
        match cfg.format {
            Format::Csv => out.write(&format!("{}_{}.csv", table.stem, method.name()), report::to_csv(&records))?,
            Format::Markdown => out.write(&format!("{}_{}.md", table.stem, method.name()), &md)?,
        };
    }

    let summary = TableSummary {
        problem: p.problem_id(),
        error_source: if reference.is_some() { "reference" } else { "exact" },
        reference: reference.as_ref().map(|(r, ok)| ReferenceSummary {
            n_steps_finest: r.n_steps_finest,
            agreement: r.agreement,
            reached_tolerance: *ok,
        }),
        cells: results.into_iter().map(|(_, s)| s).collect(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    out.write(&format!("{}_summary.json", table.stem), json + "\n")?;
    Ok(Outcome { partial })
}

pub fn run_convergence(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let problem = ode_problem(cfg)?;
    let methods = cfg.methods_or(&[StepperKind::Dc6Rk24])?;
    let ns = cfg.step_counts(problem.t_end)?;
    let table = Table {
        problem: &problem,
        stem: problem.name.clone(),
        methods,
        ns,
        cap: cfg.max_samples.unwrap_or(ivp::ODE_SAMPLE_CAP),
        norm: Norm::MaxAbs,
        components: component_labels(problem.dim),
        step_column: StepColumn::Step,
    };
    run_table(&table, cfg)
}

fn format_values(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
}

fn write_snapshots(rd: &RdProblem, method: StepperKind, n: usize, cfg: &RunConfig, out: &OutDir) -> Result<bool, CliError> {
    let t_end = rd.as_ode.t_end;
    let k = t_end / n as f64;
    let mut wanted = Vec::new();
    for &t in &cfg.snapshots {
        if !(t >= 0.0 && t <= t_end * (1.0 + 1e-12)) {
            return Err(CliError::usage(format!("snapshot time {t} outside [0, {t_end}]")));
        }
        wanted.push(((t / k).round() as usize).min(n));
    }
    let mut indices = wanted.clone();
    indices.sort_unstable();
    indices.dedup();
    let run = integrate_at_indices(&rd.as_ode, method, n, &indices);
    let x = rd.x();
    let block = rd.block();
    let header = if rd.species == 1 {
        "x,value".to_string()
    } else {
        (1..=rd.species).map(|s| format!("value{s}")).fold("x".to_string(), |h, c| h + "," + &c)
    };
    let mut complete = true;
    for (&t, idx) in cfg.snapshots.iter().zip(&wanted) {
        let Some(pos) = run.sample_indices.iter().position(|i| i == idx) else {
            eprintln!("warning: no snapshot at t = {t}: run {}", status_name(run.status));
            complete = false;
            continue;
        };
        let u = rd.physical(run.sample_times[pos], &run.sample_states[pos]);
        let mut csv = header.clone() + "\n";
        for (j, xj) in x.iter().enumerate() {
            let _ = writeln!(csv, "{xj},{}", format_values((0..rd.species).map(|s| u[s * block + j])));
        }
        out.write(&format!("{}_snapshot_t{t}.csv", rd.name), csv)?;
    }
    Ok(complete)
}

pub fn run_pde(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rd = pde_problem(cfg)?;
    let methods = cfg.methods_or(&[StepperKind::Dc6Rk24])?;
    let ns = cfg.step_counts(rd.as_ode.t_end)?;
    let table = Table {
        problem: &rd.as_ode,
        stem: rd.name.clone(),
        methods: methods.clone(),
        ns: ns.clone(),
        cap: cfg.max_samples.unwrap_or(ivp::PDE_SAMPLE_CAP),
        norm: Norm::Euclidean(rd.block()),
        components: component_labels(rd.species),
        step_column: StepColumn::Count { t_end: rd.as_ode.t_end },
    };
    let mut outcome = run_table(&table, cfg)?;
    if !cfg.snapshots.is_empty() {
        let out = OutDir::create(&cfg.output)?;
        let complete = write_snapshots(&rd, methods[0], *ns.last().expect("steps"), cfg, &out)?;
        outcome.partial |= !complete;
    }
    Ok(outcome)
}

pub fn run_stability(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let out = OutDir::create(&cfg.output)?;
    let methods = cfg.methods_or(&StepperKind::ALL)?;
    let spec = cfg.raster;
    let computed: Vec<_> = methods
        .par_iter()
        .map(|&m| {
            let poly = expand_coefficients(m);
            let raster = stability_raster(&poly, spec);
            (m, real_axis_boundary(&poly).ok(), imaginary_extent(&poly).ok(), raster)
        })
        .collect();

    let mut metrics = String::from("method,real_boundary,imag_extent\n");
    for (m, real, imag, raster) in &computed {
        let field = |v: &Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        let _ = writeln!(metrics, "{},{},{}", m.name(), field(real), field(imag));
        let mut pgm = Vec::new();
        raster.write_pgm(&mut pgm).map_err(|e| CliError::io(&cfg.output, e))?;
        out.write(&format!("{}.pgm", m.name()), pgm)?;
        let mut boundary = String::from("re,im\n");
        for z in raster.boundary_points() {
            let _ = writeln!(boundary, "{},{}", z.re, z.im);
        }
        out.write(&format!("{}_boundary.csv", m.name()), boundary)?;
    }
    print!("{metrics}");
    out.write("metrics.csv", &metrics)?;

    let violations =
        containment_check(&expand_coefficients(StepperKind::Rk6), &expand_coefficients(StepperKind::Dc6Rk24), spec);
    let mut listing = String::from("re,im\n");
    for z in &violations {
        let _ = writeln!(listing, "{},{}", z.re, z.im);
    }
    out.write("containment.csv", listing)?;
    let verdict = format!(
        "RK6 region inside DC6RK2/4 region on [{}, {}] x [{}, {}] ({} x {}): {}\n",
        spec.re_range.0,
        spec.re_range.1,
        spec.im_range.0,
        spec.im_range.1,
        spec.nx,
        spec.ny,
        if violations.is_empty() { "yes".to_string() } else { format!("no, {} violating points", violations.len()) }
    );
    print!("{verdict}");
    out.write("containment.txt", verdict)?;
    Ok(Outcome { partial: false })
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    problem: String,
    method: &'static str,
    n_steps: usize,
    k: f64,
    status: String,
    rhs_evals: u64,
    samples: usize,
    max_abs_error: Option<Vec<f64>>,
    wall_seconds: f64,
}

pub fn run_solve(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let name = cfg.require_problem()?;
    let rd = match problems::by_name(name, &cfg.params) {
        Ok(_) => None,
        Err(ProblemError::Unknown(_)) if pde::by_name(name, 20).is_some() => Some(pde_problem(cfg)?),
        Err(e) => return Err(CliError::usage(e.to_string())),
    };
    let problem = match &rd {
        Some(rd) => rd.as_ode.clone(),
        None => ode_problem(cfg)?,
    };
    let methods = cfg.methods_or(&[StepperKind::Dc6Rk24])?;
    let [method] = methods[..] else {
        return Err(CliError::usage("solve takes exactly one method"));
    };
    let ns = cfg.step_counts(problem.t_end)?;
    let [n] = ns[..] else {
        return Err(CliError::usage("solve takes exactly one step"));
    };
    let cap = cfg.max_samples.unwrap_or(match rd {
        Some(_) => ivp::PDE_SAMPLE_CAP,
        None => ivp::ODE_SAMPLE_CAP,
    });
    let out = OutDir::create(&cfg.output)?;

    let start = Instant::now();
    let run = integrate(&problem, method, n, cap);
    let wall_seconds = start.elapsed().as_secs_f64();

    let width = rd.as_ref().map_or(problem.dim, |_| problem.dim);
    let header = (1..=width).map(|i| format!("u{i}")).fold("t".to_string(), |h, c| h + "," + &c);
    let mut csv = header + "\n";
    for (t, state) in run.sample_times.iter().zip(&run.sample_states) {
        let values = match &rd {
            Some(rd) => rd.physical(*t, state),
            None => state.clone(),
        };
        let _ = writeln!(csv, "{t},{}", format_values(values));
    }
    let stem = format!("{}_{}", problem.name, method.name());
    out.write(&format!("{stem}_trajectory.csv"), csv)?;

    let max_abs_error = (run.status.is_completed() && problem.has_exact())
        .then(|| max_abs_error(&run, |t| problem.exact(t).expect("exact solution")).ok())
        .flatten();
    let summary = SolveSummary {
        problem: problem.problem_id(),
        method: method.name(),
        n_steps: n,
        k: run.step,
        status: status_name(run.status),
        rhs_evals: run.rhs_evals,
        samples: run.sample_times.len(),
        max_abs_error,
        wall_seconds,
    };
    let mut line = format!("{} {} N={n}: {}, {} evaluations", problem.name, method.label(), summary.status, run.rhs_evals);
    if let Some(e) = &summary.max_abs_error {
        let _ = write!(line, ", max error [{}]", e.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", "));
    }
    println!("{line}");
    out.write(&format!("{stem}_summary.json"), serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")?;
    Ok(Outcome { partial: !run.status.is_completed() })
}

pub fn run_list() -> Result<Outcome, CliError> {
    println!("ODE problems (convergence, solve):");
    for name in problems::NAMES {
        let p = problems::by_name(name, &[]).expect("registered problem");
        let params = problems::param_names(name).unwrap_or(&[]).join(", ");
        println!("  {name:<12} dim {:<2} T = {:<8} params: {params}", p.dim, p.t_end);
    }
    println!("PDE problems (pde, solve; --intervals M):");
    for name in pde::NAMES {
        let m = pde::default_intervals(name);
        let p = pde::by_name(name, m).expect("registered problem").expect("default grid is valid");
        println!("  {name:<14} species {} T = {:<8} default M = {m}", p.species, p.as_ode.t_end);
    }
    println!("methods:");
    for m in StepperKind::ALL {
        println!("  {:<8} {:<9} order {}, {} evaluations per step", m.name(), m.label(), m.order(), m.evals_per_step());
    }
    Ok(Outcome { partial: false })
}
