//! One function per subcommand, each turning a validated configuration into a report.

use pathkac::diffusion::{simulate_sde, GaussianShift, McConfig};
use pathkac::feynman_kac::{
    fk_duality_check, section5_identity_comparator, spde_weak_residual, translation_semigroup_u,
    DualityTolerances, PdeParams,
};
use pathkac::functions::TestFunction;
use pathkac::hermite::project;
use pathkac::path_core::GridPath;
use pathkac::transform::{defining_residual, roundtrip, solve_hat, stability_bound};

use crate::paths::{generate, PathKind};
use crate::report::{ExperimentReport, Series};
use crate::schema::{ExperimentConfig, Subcommand};
use crate::specs::{parse_diffusion, parse_function, parse_potential, KindSpec};
use crate::{accept, CliError};

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    match cfg.subcommand {
        Subcommand::Transform => transform(cfg),
        Subcommand::Roundtrip => roundtrip_cmd(cfg),
        Subcommand::Stability => stability(cfg),
        Subcommand::Simulate => simulate(cfg),
        Subcommand::FkCompare => fk_compare(cfg),
        Subcommand::SpdeResidual => spde_residual(cfg),
        Subcommand::Translation => translation(cfg),
        Subcommand::S5Identity => s5_identity(cfg),
        Subcommand::Accept => {
            let profile = accept::Profile::parse(cfg.str("profile"))?;
            Ok(accept::run_report(cfg, profile))
        }
    }
}

fn input_path(cfg: &ExperimentConfig) -> Result<GridPath, CliError> {
    match cfg.opt_str("input") {
        Some(file) => GridPath::load_csv(file).map_err(CliError::from),
        None => generate(
            PathKind::parse(cfg.str("path_kind"))?,
            cfg.int("dim"),
            cfg.float("dt"),
            cfg.float("T"),
            cfg.seed,
            0,
        ),
    }
}

fn path_series(labels: &[&str], paths: &[&GridPath]) -> Series {
    let d = paths[0].dim();
    let mut names = vec!["t".to_string()];
    for label in labels {
        names.extend((1..=d).map(|j| format!("{label}_{j}")));
    }
    let mut s = Series {
        columns: names,
        rows: Vec::new(),
    };
    for i in 0..paths[0].len() {
        let mut row = vec![paths[0].time(i)];
        for p in paths {
            row.extend_from_slice(p.point(i));
        }
        s.push(row);
    }
    s
}

fn transform(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let y = input_path(cfg)?;
    let c = parse_potential(cfg.str("potential"))?;
    let tol = cfg.float("tol");
    let (hat, diag) = solve_hat(&y, &c, tol)?;
    let mut r = ExperimentReport::new(cfg);
    r.scalar("input_sup_norm", y.sup_norm_index(y.steps())?);
    r.scalar("hat_sup_norm", diag.hat_sup_norm);
    r.scalar("final_residual", diag.final_residual);
    r.scalar("defining_residual", defining_residual(&y, &hat, &c)?);
    r.scalar("subintervals", diag.picard_iters.len() as f64);
    r.scalar(
        "picard_iterations",
        diag.picard_iters.iter().sum::<usize>() as f64,
    );
    r.scalar(
        "max_contraction",
        diag.contraction_constants
            .iter()
            .copied()
            .fold(0.0, f64::max),
    );
    r.check("residual_within_tol", diag.final_residual <= tol);
    r.check(
        "contraction_below_one",
        diag.contraction_constants.iter().all(|&k| k < 1.0),
    );
    let mut csv = Vec::new();
    hat.write_csv(&mut csv)?;
    let out = cfg
        .opt_str("out")
        .map(str::to_string)
        .unwrap_or(format!("{}_hat.csv", cfg.name));
    r.add_file(out, csv);
    let diag_json = serde_json::to_string_pretty(&diag).expect("diagnostics serialize") + "\n";
    let diag_name = cfg
        .opt_str("diag")
        .map(str::to_string)
        .unwrap_or(format!("{}_diag.json", cfg.name));
    r.add_file(diag_name, diag_json.into_bytes());
    r.add_series("paths", path_series(&["y", "hat"], &[&y, &hat]));
    Ok(r)
}

fn roundtrip_cmd(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let y = input_path(cfg)?;
    let c = parse_potential(cfg.str("potential"))?;
    let rt = roundtrip(&y, &c, cfg.float("tol"))?;
    let mut r = ExperimentReport::new(cfg);
    r.scalar("forward_error", rt.forward);
    r.scalar("reverse_error", rt.reverse);
    r.scalar("roundtrip_error", rt.max());
    r.check(
        "roundtrip_within_threshold",
        rt.max() <= cfg.float("threshold"),
    );
    Ok(r)
}

fn stability(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let c = parse_potential(cfg.str("potential"))?;
    let (dim, dt, horizon, tol) = (
        cfg.int("dim"),
        cfg.float("dt"),
        cfg.float("T"),
        cfg.float("tol"),
    );
    let mut series = Series::new(&["pair", "distance", "lhs", "rhs"]);
    let mut violations = 0usize;
    let mut worst_ratio: f64 = 0.0;
    for k in 0..cfg.int("pairs") {
        let (y1, y2) = stability_pair(dim, dt, horizon, cfg.seed, k)?;
        let (h1, _) = solve_hat(&y1, &c, tol)?;
        let (h2, _) = solve_hat(&y2, &c, tol)?;
        let b = stability_bound(&y1, &y2, &h1, &h2, &c)?;
        if !b.holds() {
            violations += 1;
        }
        if b.rhs > 0.0 {
            worst_ratio = worst_ratio.max(b.lhs / b.rhs);
        }
        series.push(vec![k as f64, y1.sup_distance(&y2)?, b.lhs, b.rhs]);
    }
    let mut r = ExperimentReport::new(cfg);
    r.scalar("violations", violations as f64);
    r.scalar("worst_lhs_over_rhs", worst_ratio);
    r.check("no_violations", violations == 0);
    r.add_series("pairs", series);
    Ok(r)
}

/// Pair `k`: a random walk and a perturbation of size `0.5 · 10^{-(k mod 4)}`.
pub fn stability_pair(
    dim: usize,
    dt: f64,
    horizon: f64,
    seed: u64,
    k: usize,
) -> Result<(GridPath, GridPath), CliError> {
    let y1 = generate(PathKind::RandomWalk, dim, dt, horizon, seed, 2 * k as u64)?;
    let noise = generate(
        PathKind::RandomWalk,
        dim,
        dt,
        horizon,
        seed,
        2 * k as u64 + 1,
    )?;
    let eps = 0.5 * 10f64.powi(-((k % 4) as i32));
    let y2 = y1.zip_with(&noise, |a, b| a + eps * b)?;
    Ok((y1, y2))
}

fn mc_config(cfg: &ExperimentConfig, horizon: f64) -> Result<McConfig, CliError> {
    let dt = cfg.float("dt");
    // round the horizon up to the grid
    let steps = (horizon / dt - 1e-9).ceil().max(1.0);
    McConfig::new(cfg.int("n_paths"), dt, steps * dt, cfg.seed).map_err(CliError::from)
}

fn simulate(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let spec = parse_diffusion(cfg.str("diffusion"))?;
    let mc = mc_config(cfg, cfg.float("T"))?;
    let batch = simulate_sde(&spec, &mc)?;
    let d = spec.dim();
    let mut cols = vec!["t".to_string(), "alive_fraction".to_string()];
    cols.extend((1..=d).map(|j| format!("mean_{j}")));
    cols.extend((1..=d).map(|j| format!("var_{j}")));
    let mut series = Series {
        columns: cols,
        rows: Vec::new(),
    };
    let steps = mc.steps();
    for k in 0..=steps {
        let mut alive = 0usize;
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for p in &batch.paths {
            if p.is_alive_at(k) {
                alive += 1;
                for (j, &v) in p.point(k).iter().enumerate() {
                    mean[j] += v;
                    sq[j] += v * v;
                }
            }
        }
        let n = alive.max(1) as f64;
        let mut row = vec![k as f64 * mc.dt, alive as f64 / mc.n_paths as f64];
        row.extend(mean.iter().map(|m| m / n));
        row.extend(sq.iter().zip(&mean).map(|(s, m)| s / n - (m / n) * (m / n)));
        series.push(row);
    }
    let mut r = ExperimentReport::new(cfg);
    let last = series.rows.last().expect("at least one row").clone();
    r.scalar("alive_fraction", last[1]);
    for j in 0..d {
        r.scalar(&format!("final_mean_{}", j + 1), last[2 + j]);
        r.scalar(&format!("final_var_{}", j + 1), last[2 + d + j]);
    }
    r.add_series("moments", series);
    let mut bytes = Vec::new();
    batch.write_binary(&mut bytes)?;
    let out = cfg
        .opt_str("out")
        .map(str::to_string)
        .unwrap_or(format!("{}_paths.bin", cfg.name));
    r.add_file(out, bytes);
    Ok(r)
}

fn fk_compare(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let spec = parse_diffusion(cfg.str("diffusion"))?;
    let vbar = parse_function(cfg.str("vbar"))?;
    let f = parse_function(cfg.str("f"))?;
    let t = cfg.float("t");
    let mc = mc_config(cfg, t)?;
    let pde = PdeParams {
        nx: cfg.int("pde_nx"),
        dt: cfg.float("pde_dt"),
        half_width: None,
    };
    let tol = DualityTolerances {
        truncation: cfg.float("truncation"),
        pde: cfg.float("pde_budget"),
    };
    let use_pde = spec.dim() == 1 && spec.noise_dim() == 1;
    let rep = fk_duality_check(
        f.test.as_ref(),
        &vbar.field,
        &spec,
        &mc,
        t,
        cfg.int("order"),
        use_pde.then_some(&pde),
        tol,
    )?;
    let mut r = ExperimentReport::new(cfg);
    r.estimate("scalar", rep.scalar.value, rep.scalar.std_error);
    r.estimate("dual", rep.dual, rep.dual_std_error);
    r.scalar("difference_std_error", rep.difference_std_error);
    r.scalar("alive_fraction", rep.scalar.alive_fraction);
    if let Some(p) = rep.pde {
        r.scalar("pde", p);
    }
    for g in &rep.gaps {
        r.check(&g.name, g.pass);
    }
    if let Some(anchor) = cfg.opt_float("anchor") {
        r.scalar("anchor", anchor);
        r.check(
            "scalar_vs_anchor",
            (rep.scalar.value - anchor).abs() <= 3.0 * rep.scalar.std_error,
        );
        if let Some(p) = rep.pde {
            r.check("pde_vs_anchor", (p - anchor).abs() <= tol.pde);
        }
    }
    r.details = serde_json::to_value(&rep).expect("report serializes");
    Ok(r)
}

fn spde_residual(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let spec = parse_diffusion(cfg.str("diffusion"))?;
    let vbar = parse_function(cfg.str("vbar"))?;
    let f = parse_function(cfg.str("f"))?;
    let times = cfg.floats("times");
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let mc = mc_config(cfg, horizon)?;
    let res = spde_weak_residual(
        f.test.as_ref(),
        &vbar.field,
        &spec,
        &mc,
        times,
        cfg.int("order"),
    )?;
    let mut r = ExperimentReport::new(cfg);
    let mut series = Series::new(&[
        "t",
        "mean",
        "std_error",
        "tolerance",
        "strong_mean",
        "strong_std_error",
        "strong_abs_mean",
    ]);
    for w in &res {
        series.push(vec![
            w.t,
            w.mean,
            w.std_error,
            w.tolerance,
            w.strong_mean,
            w.strong_std_error,
            w.strong_abs_mean,
        ]);
        r.check(&format!("residual_t={}", w.t), w.pass);
    }
    r.add_series("residual", series);
    r.details = serde_json::to_value(&res).expect("residuals serialize");
    Ok(r)
}

fn translation(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let order = cfg.int("order");
    let u0_spec = parse_function(cfg.str("u0"))?;
    let u0 = project(&|x: &[f64]| u0_spec.test.value(x), order, 1)?;
    let (sigma, drift, t) = (cfg.float("sigma"), cfg.float("drift"), cfg.float("t"));
    let shift = GaussianShift::new(vec![sigma], vec![drift])?;
    let mc = mc_config(cfg, t)?;
    let potential = cfg.opt_str("potential").map(parse_potential).transpose()?;
    let est = translation_semigroup_u(&u0, &shift, &mc, t, potential.as_ref())?;
    let mut r = ExperimentReport::new(cfg);
    r.scalar("rejected_fraction", est.rejected_fraction);
    let reference = match u0_spec.density {
        Some((m, v)) => Some(project(
            &|x: &[f64]| {
                pathkac::functions::Gaussian::normal_density(m + drift * t, v + sigma * sigma * t)
                    .value(x)
            },
            order,
            1,
        )?),
        None => None,
    };
    let mut series = Series::new(&["k", "mean", "std_error", "reference"]);
    let mut worst: f64 = 0.0;
    for k in 0..u0.len() {
        let m = est.mean.value.coeffs()[k];
        let se = est.mean.std_error[k];
        let refv = reference.as_ref().map_or(f64::NAN, |s| s.coeffs()[k]);
        if reference.is_some() {
            worst = worst.max((m - refv).abs() / (cfg.float("tolerance") + 3.0 * se));
        }
        series.push(vec![k as f64, m, se, refv]);
    }
    if reference.is_some() {
        r.scalar("worst_gap_ratio", worst);
        r.check("matches_gaussian_convolution", worst <= 1.0);
    }
    if let (Some(factor), Some(text)) = (est.factor, cfg.opt_str("potential")) {
        r.scalar("wrapper_factor", factor);
        let kind = KindSpec::parse(text)?;
        if kind.kind == "constant" {
            let lambda =
                parse_potential(text)?.eval(0.0, &GridPath::constant(0.0, 1.0, 0, &[0.0])?.view());
            let rel = (factor / (lambda * t).exp() - 1.0).abs();
            r.scalar("wrapper_relative_error", rel);
            r.check("constant_wrapper_exact", rel <= 1e-12);
        }
    }
    r.add_series("coefficients", series);
    Ok(r)
}

fn s5_identity(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let spec = parse_diffusion(cfg.str("diffusion"))?;
    let vbar = parse_function(cfg.str("vbar"))?;
    let f = parse_function(cfg.str("f"))?;
    let t = cfg.float("t");
    let mc = mc_config(cfg, t)?;
    let frozen = spec.sigma_at(spec.x0()).iter().all(|&s| s == 0.0)
        && spec.drift_at(spec.x0()).iter().all(|&b| b == 0.0);
    let assert_identity = match cfg.str("assert") {
        "auto" => vbar.is_constant() || frozen,
        "true" => true,
        "false" => false,
        other => {
            return Err(CliError::Usage(format!(
                "assert must be auto | true | false, got '{other}'"
            )))
        }
    };
    let rep = section5_identity_comparator(
        f.test.as_ref(),
        &vbar.field,
        &spec,
        &mc,
        t,
        cfg.int("order"),
        assert_identity,
    )?;
    let mut r = ExperimentReport::new(cfg);
    r.scalar("coefficient_gap", rep.coefficient_gap);
    r.scalar("worst_gap_ratio", rep.worst_gap_ratio);
    r.estimate("scalar_gap", rep.scalar_gap, rep.scalar_std_error);
    if let Some(pass) = rep.pass {
        r.check("identity", pass);
    }
    let mut series = Series::new(&["k", "lhs", "rhs"]);
    for (k, (a, b)) in rep.lhs.coeffs().iter().zip(rep.rhs.coeffs()).enumerate() {
        series.push(vec![k as f64, *a, *b]);
    }
    r.add_series("coefficients", series);
    r.details = serde_json::to_value(&rep).expect("report serializes");
    Ok(r)
}
