//! The five experiment commands. Each consumes an [`ExperimentSpec`],
//! writes its CSV (and JSON where applicable) into the output directory,
//! prints a short summary, and returns the process exit code.

use std::error::Error;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trcg_core::io::{fmt_f64, fmt_opt_f64};
use trcg_core::{
    capture_experiment, evaluate_conditions, grade, iterate_comparison, problem_diagonal_quadratic,
    problem_remark_counterexample, problem_sine_lsq, remark_counterexample_path, ritz_values,
    root_displacement_bound, stieltjes, symmetric_eigendecompose, tcg, tr_minimize,
    verify_rho_identity, write_sigma_diagnostics_csv, ConditionReport, HessianMode,
    ProblemDefinition, SpectralMeasure, SplitSpectralMeasure, TcgParams, TrConfig,
};

use crate::spec::ExperimentSpec;

type CmdResult = Result<u8, Box<dyn Error>>;

const SIGMA_HEADER: &str = "n,sigma_l1,s,delta,tau,eta,omega,min_root_tilde,min_root_head";

fn create_out(dir: &Path, file: &str) -> Result<BufWriter<File>, Box<dyn Error>> {
    fs::create_dir_all(dir)?;
    let path = dir.join(file);
    Ok(BufWriter::new(File::create(path)?))
}

/// Resolve a problem name: `sine-lsq[:n=N]`, `remark2d`, or
/// `diag:file=PATH`.
fn parse_problem(text: &str) -> Result<ProblemDefinition, Box<dyn Error>> {
    if let Some(rest) = text.strip_prefix("sine-lsq") {
        let n = if rest.is_empty() {
            100
        } else {
            let digits = rest
                .strip_prefix(":n=")
                .ok_or_else(|| format!("malformed problem {text:?}; expected sine-lsq:n=N"))?;
            digits
                .parse::<usize>()
                .map_err(|e| format!("bad dimension in {text:?}: {e}"))?
        };
        if n == 0 {
            return Err("sine-lsq needs n >= 1".into());
        }
        Ok(problem_sine_lsq(n))
    } else if text == "remark2d" {
        Ok(problem_remark_counterexample())
    } else if let Some(path) = text.strip_prefix("diag:file=") {
        let file = File::open(path).map_err(|e| format!("cannot open {path:?}: {e}"))?;
        let measure = SpectralMeasure::read_csv(BufReader::new(file))?;
        Ok(problem_diagonal_quadratic(&measure))
    } else {
        Err(format!(
            "unknown problem {text:?}; expected sine-lsq:n=N, remark2d, or diag:file=PATH"
        )
        .into())
    }
}

/// Resolve a start point: `random` (components uniform in [-2, 2]),
/// `c:EPS` (the planar model's path point), or an explicit comma list.
fn parse_x0(
    text: &str,
    problem: &ProblemDefinition,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>, Box<dyn Error>> {
    if text == "random" {
        return Ok(DVector::from_fn(problem.dim(), |_, _| {
            rng.random_range(-2.0..2.0f64)
        }));
    }
    if let Some(eps_text) = text.strip_prefix("c:") {
        if problem.dim() != 2 {
            return Err("x0=c:EPS applies to the two-dimensional model problem only".into());
        }
        let eps = eps_text
            .parse::<f64>()
            .map_err(|e| format!("bad epsilon in x0={text:?}: {e}"))?;
        return Ok(remark_counterexample_path(eps)?);
    }
    let coords: Result<Vec<f64>, _> = text.split(',').map(|f| f.trim().parse::<f64>()).collect();
    let coords = coords.map_err(|e| format!("bad coordinate list in x0={text:?}: {e}"))?;
    if coords.len() != problem.dim() {
        return Err(format!(
            "x0 has {} coordinates but the problem has dimension {}",
            coords.len(),
            problem.dim()
        )
        .into());
    }
    Ok(DVector::from_vec(coords))
}

/// Consume the shared trust-region configuration parameters.
fn parse_tr_config(spec: &mut ExperimentSpec) -> Result<(TrConfig, f64), Box<dyn Error>> {
    let solver = spec.take("solver").unwrap_or_else(|| "tcg".into());
    let kappa = spec.take_f64("kappa", 0.1)?;
    let theta = spec.take_f64("theta", 0.5)?;
    let mut config = match solver.as_str() {
        "tcg" => TrConfig::truncated(kappa, theta),
        "exact" => TrConfig::exact(),
        other => return Err(format!("unknown solver {other:?}; expected tcg or exact").into()),
    };
    config.delta0 = spec.take_f64("delta0", config.delta0)?;
    config.delta_max = spec.take_f64("delta-max", config.delta_max)?;
    config.rho_accept = spec.take_f64("rho-accept", config.rho_accept)?;
    config.grad_tol = spec.take_f64("grad-tol", config.grad_tol)?;
    config.max_outer = spec.take_usize("max-outer", config.max_outer)?;
    let hessian = spec.take("hessian").unwrap_or_else(|| "analytic".into());
    config.hessian_mode = match hessian.as_str() {
        "analytic" => HessianMode::Analytic,
        "fd" => HessianMode::FiniteDifference,
        other => return Err(format!("unknown hessian {other:?}; expected analytic or fd").into()),
    };
    Ok((config, theta))
}

/// `tr-run`: one trust-region minimization with trace CSV and condition
/// report JSON.
pub fn tr_run(mut spec: ExperimentSpec) -> CmdResult {
    let problem_text = spec.take("problem").unwrap_or_else(|| "sine-lsq:n=100".into());
    let (config, theta) = parse_tr_config(&mut spec)?;
    let x0_text = spec.take("x0").unwrap_or_else(|| "random".into());
    let tail_fraction = spec.take_f64("tail-fraction", 0.5)?;
    let seed = spec.seed;
    let out = spec.out.clone();
    spec.finish()?;

    let problem = parse_problem(&problem_text)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = parse_x0(&x0_text, &problem, &mut rng)?;
    let record = tr_minimize(&problem, &x0, &config)?;

    let mut csv = create_out(&out, "tr_run.csv")?;
    record.write_csv(&mut csv)?;
    csv.flush()?;

    let report = if record.iterations.is_empty() {
        // Converged-at-start runs have nothing to estimate.
        ConditionReport {
            c0_min: f64::NAN,
            c1_estimates: Vec::new(),
            c2_estimates: Vec::new(),
            strong_decrease_margins: Vec::new(),
            c1_max_tail: f64::NAN,
            c2_max_tail: f64::NAN,
            order_estimate: f64::NAN,
        }
    } else {
        evaluate_conditions(&record, &problem, theta, tail_fraction)?
    };
    let mut json = create_out(&out, "condition_report.json")?;
    serde_json::to_writer_pretty(&mut json, &report)?;
    writeln!(json)?;
    json.flush()?;

    let accepted = record.iterations.iter().filter(|r| r.accepted).count();
    let boundary = record
        .iterations
        .iter()
        .filter(|r| r.accepted && r.hit_boundary)
        .count();
    println!("status: {}", record.status.as_str());
    println!(
        "outer iterations: {} (accepted {accepted}, boundary steps {boundary})",
        record.iterations.len()
    );
    println!("final gradient norm: {}", fmt_f64(record.final_grad_norm));
    println!("order estimate: {}", fmt_f64(report.order_estimate));
    Ok(0)
}

/// `cg-dynamics`: plain conjugate-gradient traces on the full and head
/// systems, the full-recurrence Ritz values per order, and the coupling
/// diagnostics.
pub fn cg_dynamics(mut spec: ExperimentSpec) -> CmdResult {
    let measure_path = spec.take("measure");
    let out = spec.out.clone();
    spec.finish()?;

    let split = match measure_path {
        Some(path) => {
            let file = File::open(&path).map_err(|e| format!("cannot open {path:?}: {e}"))?;
            SplitSpectralMeasure::read_csv(BufReader::new(file))?
        }
        None => SplitSpectralMeasure::clustered_with_zero_tail(),
    };
    let full = split.full();
    let (a_full, b_full) = full.dense_system();
    let (a_head, b_head) = split.head().dense_system();
    let grade_full = grade(&full, 0.0);
    let grade_head = grade(split.head(), 0.0);
    let trace_full = tcg(&a_full, &b_full, &TcgParams::plain(grade_full))?;
    let trace_head = tcg(&a_head, &b_head, &TcgParams::plain(grade_head))?;

    let mut csv = create_out(&out, "cg_traces.csv")?;
    writeln!(
        csv,
        "n,full_iterate_norm,full_residual_norm,head_iterate_norm,head_residual_norm"
    )?;
    let rows = trace_full.iterations.len().max(trace_head.iterations.len());
    for n in 0..rows {
        let f = trace_full.iterations.get(n);
        let h = trace_head.iterations.get(n);
        writeln!(
            csv,
            "{n},{},{},{},{}",
            fmt_opt_f64(f.map(|i| i.v_norm)),
            fmt_opt_f64(f.map(|i| i.r_norm)),
            fmt_opt_f64(h.map(|i| i.v_norm)),
            fmt_opt_f64(h.map(|i| i.r_norm))
        )?;
    }
    csv.flush()?;

    let rec_full = stieltjes(&full)?;
    let mut ritz_csv = create_out(&out, "ritz_values.csv")?;
    writeln!(ritz_csv, "n,index,value")?;
    for n in 1..=rec_full.grade() {
        for (index, value) in ritz_values(&rec_full, n)?.iter().enumerate() {
            writeln!(ritz_csv, "{n},{index},{}", fmt_f64(*value))?;
        }
    }
    ritz_csv.flush()?;

    let mut sigma_csv = create_out(&out, "sigma_diagnostics.csv")?;
    if split.tail_len() > 0 {
        write_sigma_diagnostics_csv(&split, &mut sigma_csv)?;
    } else {
        writeln!(sigma_csv, "{SIGMA_HEADER}")?;
    }
    sigma_csv.flush()?;

    let max_full = trace_full.iterations.iter().fold(0.0f64, |m, i| m.max(i.v_norm));
    let max_head = trace_head.iterations.iter().fold(0.0f64, |m, i| m.max(i.v_norm));
    println!("grades: full {grade_full}, head {grade_head}");
    println!(
        "largest iterate norms: full {}, head {}",
        fmt_f64(max_full),
        fmt_f64(max_head)
    );
    Ok(0)
}

/// One `sigma-check` row; `None` fields mean "not applicable at this order".
struct SigmaRow {
    instance: usize,
    n: usize,
    identity_residual: f64,
    sigma_l1: f64,
    displacement: f64,
    displacement_ok: bool,
    head_block_ok: Option<bool>,
    tail_coords_ok: Option<bool>,
}

impl SigmaRow {
    fn ok(&self) -> bool {
        self.identity_residual <= 1e-7
            && self.displacement_ok
            && self.head_block_ok.unwrap_or(true)
            && self.tail_coords_ok.unwrap_or(true)
    }
}

fn fmt_opt_bool(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

fn sigma_rows_for(split: &SplitSpectralMeasure, instance: usize, n_min: usize, n_max: usize) -> Result<Vec<SigmaRow>, Box<dyn Error>> {
    let head_grade = grade(split.head(), 0.0);
    let hi = if n_max == 0 { head_grade } else { n_max.min(head_grade) };
    let mut rows = Vec::new();
    for n in n_min.max(1)..=hi {
        if split.tail_len() == 0 {
            // Without a tail the full and head measures coincide, so every
            // comparison is exact.
            rows.push(SigmaRow {
                instance,
                n,
                identity_residual: 0.0,
                sigma_l1: 0.0,
                displacement: 0.0,
                displacement_ok: true,
                head_block_ok: None,
                tail_coords_ok: None,
            });
            continue;
        }
        let identity_residual = verify_rho_identity(split, n)?;
        let rd = root_displacement_bound(split, n)?;
        let cmp = iterate_comparison(split, n)?;
        rows.push(SigmaRow {
            instance,
            n,
            identity_residual,
            sigma_l1: rd.sigma_l1,
            displacement: rd.max_relative_displacement,
            displacement_ok: rd.displacement_bound_holds,
            head_block_ok: cmp.head_block_ok,
            tail_coords_ok: cmp.tail_coordinates_ok,
        });
    }
    Ok(rows)
}

/// `sigma-check`: coupling contracts on one split (or a seeded randomized
/// family with `random=N`). Exit code 1 when any contract fails.
pub fn sigma_check(mut spec: ExperimentSpec) -> CmdResult {
    let measure_path = spec.take("measure");
    let n_min = spec.take_usize("n-min", 1)?;
    let n_max = spec.take_usize("n-max", 0)?; // 0 = up to the head grade
    let random = spec.take_usize("random", 0)?;
    let seed = spec.seed;
    let out = spec.out.clone();
    spec.finish()?;

    if random > 0 && measure_path.is_some() {
        return Err("random=N and measure=PATH are mutually exclusive".into());
    }

    let mut rows = Vec::new();
    if random > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for instance in 0..random {
            let split = SplitSpectralMeasure::sample_random(&mut rng);
            rows.extend(sigma_rows_for(&split, instance, n_min, n_max)?);
        }
    } else {
        let split = match measure_path {
            Some(path) => {
                let file = File::open(&path).map_err(|e| format!("cannot open {path:?}: {e}"))?;
                SplitSpectralMeasure::read_csv(BufReader::new(file))?
            }
            None => SplitSpectralMeasure::clustered_with_zero_tail(),
        };
        rows = sigma_rows_for(&split, 0, n_min, n_max)?;
    }

    let mut csv = create_out(&out, "sigma_check.csv")?;
    writeln!(
        csv,
        "instance,n,identity_residual,sigma_l1,max_root_displacement,displacement_ok,head_block_ok,tail_coords_ok,row_ok"
    )?;
    let mut failures = 0usize;
    for row in &rows {
        let ok = row.ok();
        if !ok {
            failures += 1;
        }
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            row.instance,
            row.n,
            fmt_f64(row.identity_residual),
            fmt_f64(row.sigma_l1),
            fmt_f64(row.displacement),
            row.displacement_ok,
            fmt_opt_bool(row.head_block_ok),
            fmt_opt_bool(row.tail_coords_ok),
            ok
        )?;
    }
    csv.flush()?;

    println!("checked {} orders, {} failing", rows.len(), failures);
    if failures > 0 {
        eprintln!("error: {failures} coupling contract(s) failed; see sigma_check.csv");
        return Ok(1);
    }
    Ok(0)
}

/// `remark-asymptotics`: the three ratio columns along the planar model's
/// approach path, one row per epsilon.
pub fn remark_asymptotics(mut spec: ExperimentSpec) -> CmdResult {
    let eps_text = spec
        .take("eps")
        .unwrap_or_else(|| "1e-3,1e-4,1e-5,1e-6".into());
    let out = spec.out.clone();
    spec.finish()?;

    let grid: Result<Vec<f64>, _> = eps_text.split(',').map(|f| f.trim().parse::<f64>()).collect();
    let grid = grid.map_err(|e| format!("bad eps list {eps_text:?}: {e}"))?;
    if grid.is_empty() {
        return Err("eps grid is empty".into());
    }

    let problem = problem_remark_counterexample();
    let mut csv = create_out(&out, "remark_asymptotics.csv")?;
    writeln!(csv, "eps,r1_over_eps,grad_sq_over_eps,eps_v2,well_defined")?;
    println!("eps           r1/eps        |grad|^2/eps  eps*|v2|      (limits 1, 1/4, 1/6)");
    for &eps in &grid {
        let c = remark_counterexample_path(eps)?;
        let gradient = problem.gradient(&c);
        let hessian = problem.hessian(&c);
        let positive = symmetric_eigendecompose(&hessian)?.min_eigenvalue() > 0.0;
        let trace = tcg(&hessian, &(-&gradient), &TcgParams::plain(2))?;
        let well_defined = positive && trace.iterations.len() == 3;
        let r1_over_eps = trace.iterations.get(1).map(|i| i.r_norm / eps);
        let eps_v2 = trace.iterations.get(2).map(|i| eps * i.v_norm);
        let grad_sq_over_eps = gradient.norm_squared() / eps;
        writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_f64(eps),
            fmt_opt_f64(r1_over_eps),
            fmt_f64(grad_sq_over_eps),
            fmt_opt_f64(eps_v2),
            well_defined
        )?;
        println!(
            "{:<13.6e} {:<13.6} {:<13.6} {:<13.6} {}",
            eps,
            r1_over_eps.unwrap_or(f64::NAN),
            grad_sq_over_eps,
            eps_v2.unwrap_or(f64::NAN),
            if well_defined { "" } else { "FLAGGED" }
        );
    }
    csv.flush()?;
    Ok(0)
}

/// `capture`: seeded trials started at a fixed distance from the solution
/// set, with per-trial outcomes.
pub fn capture(mut spec: ExperimentSpec) -> CmdResult {
    let problem_text = spec.take("problem").unwrap_or_else(|| "sine-lsq:n=20".into());
    let trials = spec.take_usize("trials", 20)?;
    let distance = spec.take_f64("distance", 1e-2)?;
    let stay = spec.take_f64("stay", 1e-1)?;
    let (config, _) = parse_tr_config(&mut spec)?;
    let seed = spec.seed;
    let out = spec.out.clone();
    spec.finish()?;

    let problem = parse_problem(&problem_text)?;
    let param_dim = problem
        .solution_param_dim()
        .ok_or("problem exposes no solution-set parametrization")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = DVector::from_fn(param_dim, |_, _| rng.random_range(-2.0..2.0f64));
    let center = problem.solution_point(&params)?;
    let report = capture_experiment(&problem, &center, distance, stay, &config, trials, &mut rng)?;

    let mut csv = create_out(&out, "capture.csv")?;
    report.write_csv(&mut csv)?;
    csv.flush()?;

    println!(
        "captured {}/{} trials (rate {})",
        report.captured,
        report.trials,
        fmt_f64(report.capture_rate())
    );
    println!(
        "boundary fractions: first step {}, overall {}",
        fmt_f64(report.first_step_boundary_fraction),
        fmt_f64(report.boundary_step_fraction)
    );
    println!("largest step/gradient ratio: {}", fmt_f64(report.c1_max));
    Ok(0)
}
