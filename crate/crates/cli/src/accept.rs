//! The acceptance suite: twelve criteria, each producing a pass flag and the
//! numbers behind it.

use std::collections::BTreeMap;
use std::time::Instant;

use pathkac::diffusion::{DiffusionSpec, GaussianShift, McConfig};
use pathkac::feynman_kac::{
    fk_duality_check, pde_reference, pt_v_f, section5_identity_comparator, spde_weak_residual,
    translation_semigroup_u, DualityTolerances, PdeParams, WeakResidual,
};
use pathkac::functions::{field, Constant, Gaussian, ScalarField, SmoothPlateau, TestFunction};
use pathkac::hermite::{delta_coeffs, pair, project, sobolev_norm};
use pathkac::path_core::GridPath;
use pathkac::potential::{
    linear_potential, make_constant, make_state_potential, norm_potential, path_average_potential,
    PotentialSpec,
};
use pathkac::rng::StreamRng;
use pathkac::transform::{forward_map, kac_cumulative, roundtrip, solve_hat, stability_bound};
use serde::Serialize;

use crate::commands::stability_pair;
use crate::paths::{generate, PathKind};
use crate::report::ExperimentReport;
use crate::schema::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Quick,
    Full,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "quick" => Ok(Profile::Quick),
            "full" => Ok(Profile::Full),
            other => Err(CliError::Usage(format!(
                "profile must be quick | full, got '{other}'"
            ))),
        }
    }

    fn pick<T>(self, quick: T, full: T) -> T {
        match self {
            Profile::Quick => quick,
            Profile::Full => full,
        }
    }
}

pub const CRITERIA: [&str; 12] = [
    "round-trip bijection",
    "closed-form fixed point",
    "stability estimate",
    "causality",
    "Hermite reconstruction",
    "constant potential",
    "Cameron–Martin anchor",
    "duality",
    "weak-form residual",
    "translation semigroup",
    "identity comparator",
    "determinism",
];

/// Cameron–Martin value `E exp(−½∫_0^1 B_s² ds) = (cosh 1)^{−1/2}`.
pub fn cameron_martin() -> f64 {
    1.0 / 1f64.cosh().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub pass: bool,
    pub summary: String,
    pub values: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<24} {}  {}",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.summary
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suite {
    pub profile: Profile,
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
    pub pass: bool,
}

impl Suite {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes") + "\n"
    }
}

struct Outcome {
    pass: bool,
    summary: String,
    values: BTreeMap<String, f64>,
}

impl Outcome {
    fn new(pass: bool, summary: String, values: &[(&str, f64)]) -> Self {
        Outcome {
            pass,
            summary,
            values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

type Check = Result<Outcome, CliError>;

pub fn run_criterion(id: usize, profile: Profile, seed: u64) -> CriterionResult {
    let start = Instant::now();
    let outcome = match id {
        1 => roundtrip_bijection(profile, seed),
        2 => closed_form_fixed_point(),
        3 => stability_estimate(profile, seed),
        4 => causality(profile, seed),
        5 => hermite_reconstruction(seed),
        6 => constant_potential(profile, seed),
        7 => cameron_martin_anchor(profile, seed),
        8 => duality(profile, seed),
        9 => weak_residual(profile, seed),
        10 => translation(profile, seed),
        11 => identity_comparator(profile, seed),
        12 => determinism(seed),
        _ => Err(CliError::Usage(format!("no criterion {id}"))),
    };
    let (pass, summary, values, error) = match outcome {
        Ok(o) => (o.pass, o.summary, o.values, None),
        Err(e) => (
            false,
            "error".to_string(),
            BTreeMap::new(),
            Some(e.to_string()),
        ),
    };
    CriterionResult {
        id,
        name: CRITERIA
            .get(id.wrapping_sub(1))
            .unwrap_or(&"unknown")
            .to_string(),
        pass,
        summary,
        values,
        error,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_suite(profile: Profile, seed: u64) -> Suite {
    run_ids(profile, seed, 1..=12)
}

fn run_ids(profile: Profile, seed: u64, ids: impl Iterator<Item = usize>) -> Suite {
    let criteria: Vec<CriterionResult> = ids.map(|id| run_criterion(id, profile, seed)).collect();
    let pass = criteria.iter().all(|c| c.pass);
    Suite {
        profile,
        seed,
        criteria,
        pass,
    }
}

pub fn run_report(cfg: &ExperimentConfig, profile: Profile) -> ExperimentReport {
    let suite = run_suite(profile, cfg.seed);
    let mut r = ExperimentReport::new(cfg);
    for c in &suite.criteria {
        r.check(
            &format!("{:02}_{}", c.id, c.name.replace([' ', '–'], "_")),
            c.pass,
        );
        r.timings
            .insert(format!("criterion_{:02}", c.id), c.seconds);
    }
    r.details = serde_json::to_value(&suite).expect("suite serializes");
    r
}

fn max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn roundtrip_bijection(profile: Profile, seed: u64) -> Check {
    let per_dim = profile.pick(10, 100);
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    for dim in [1usize, 3] {
        // ‖w‖ sup|y| stays below 1 so the linear fixed point exists on [0, 1]
        let weights = if dim == 1 {
            vec![0.3]
        } else {
            vec![0.2, -0.1, 0.15]
        };
        let potentials = [
            make_constant(1.5),
            norm_potential(),
            linear_potential("linear", weights),
        ];
        for i in 0..per_dim {
            let walk = generate(
                PathKind::RandomWalk,
                dim,
                1e-3,
                1.0,
                seed,
                (dim * 1_000 + i) as u64,
            )?;
            let y = walk.zip_with(&walk, |a, _| 0.5 * a)?;
            for c in &potentials {
                worst = worst.max(roundtrip(&y, c, 1e-12)?.max());
                cases += 1;
            }
        }
    }
    Ok(Outcome::new(
        worst <= 1e-9,
        format!("max round-trip error {worst:.3e} over {cases} cases (limit 1e-9)"),
        &[("max_error", worst), ("cases", cases as f64)],
    ))
}

fn identity_potential() -> PotentialSpec {
    make_state_potential("identity", field(|x| x[0]), 1.0, |a, _| a).with_dim(1)
}

fn reciprocal_error(dt: f64) -> Result<f64, CliError> {
    let steps = (1.0 / dt).round() as usize;
    let y = GridPath::constant(0.0, dt, steps, &[1.0])?;
    let (hat, _) = solve_hat(&y, &identity_potential(), 1e-12)?;
    Ok((hat.point(steps)[0] - 0.5).abs())
}

fn closed_form_fixed_point() -> Check {
    let coarse = reciprocal_error(1e-3)?;
    let fine = reciprocal_error(5e-4)?;
    let ratio = coarse / fine;
    Ok(Outcome::new(
        coarse <= 5e-4 && ratio >= 3.5,
        format!("|ŷ(1) − 1/2| = {coarse:.3e} at dt 1e-3, error ratio {ratio:.3} on halving dt"),
        &[
            ("error_dt_1e-3", coarse),
            ("error_dt_5e-4", fine),
            ("ratio", ratio),
        ],
    ))
}

fn stability_estimate(profile: Profile, seed: u64) -> Check {
    let pairs = profile.pick(20, 100);
    let c = norm_potential();
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for k in 0..pairs {
        let (y1, y2) = stability_pair(1, 1e-3, 1.0, seed, k)?;
        let (h1, _) = solve_hat(&y1, &c, 1e-12)?;
        let (h2, _) = solve_hat(&y2, &c, 1e-12)?;
        let b = stability_bound(&y1, &y2, &h1, &h2, &c)?;
        if !b.holds() {
            violations += 1;
        }
        worst = worst.max(b.lhs / b.rhs);
    }
    Ok(Outcome::new(
        violations == 0,
        format!("{violations} violations in {pairs} pairs, largest lhs/rhs {worst:.3e}"),
        &[
            ("violations", violations as f64),
            ("pairs", pairs as f64),
            ("max_ratio", worst),
        ],
    ))
}

fn causality(profile: Profile, seed: u64) -> Check {
    let cases = profile.pick(10, 50);
    let tol = 1e-12;
    let c = path_average_potential();
    let mut worst_prefix: f64 = 0.0;
    let mut bitwise_failures = 0usize;
    for i in 0..cases {
        let dim = if i % 2 == 0 { 1 } else { 3 };
        let y = generate(
            PathKind::RandomWalk,
            dim,
            1e-3,
            1.0,
            seed,
            50_000 + i as u64,
        )?;
        let mut rng = StreamRng::new(seed ^ 0x5eed, i as u64);
        let cut = 50 + (rng.uniform() * 900.0) as usize;
        let (full, _) = solve_hat(&y, &c, tol)?;
        let (part, _) = solve_hat(&y.restrict_index(cut), &c, tol)?;
        worst_prefix = worst_prefix.max(full.restrict_index(cut).sup_distance(&part)?);

        let noise = generate(
            PathKind::RandomWalk,
            dim,
            1e-3,
            1.0,
            seed,
            60_000 + i as u64,
        )?;
        let perturbed = GridPath::new(
            0.0,
            1e-3,
            dim,
            y.as_slice()
                .iter()
                .zip(noise.as_slice())
                .enumerate()
                .map(|(j, (a, b))| if j / dim > cut { a + b } else { *a })
                .collect(),
        )?;
        let same_potential = (0..=cut).all(|j| {
            c.eval(y.time(j), &y.prefix(j)).to_bits()
                == c.eval(perturbed.time(j), &perturbed.prefix(j)).to_bits()
        });
        let ka = kac_cumulative(&c, &y)?;
        let kb = kac_cumulative(&c, &perturbed)?;
        let same_kac = ka.values[..=cut] == kb.values[..=cut];
        let fa = forward_map(&y, &c)?;
        let fb = forward_map(&perturbed, &c)?;
        let same_forward = fa.as_slice()[..(cut + 1) * dim] == fb.as_slice()[..(cut + 1) * dim];
        if !(same_potential && same_kac && same_forward) {
            bitwise_failures += 1;
        }
    }
    Ok(Outcome::new(
        worst_prefix <= tol && bitwise_failures == 0,
        format!(
            "prefix gap {worst_prefix:.3e} (tol {tol:.0e}), {bitwise_failures} tail perturbations changed a prefix, {cases} cases"
        ),
        &[
            ("max_prefix_gap", worst_prefix),
            ("bitwise_failures", bitwise_failures as f64),
            ("cases", cases as f64),
        ],
    ))
}

fn hermite_reconstruction(seed: u64) -> Check {
    let order = 64;
    let mut rng = StreamRng::new(seed, 7_000);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let g = Gaussian::new(
            0.5 + rng.uniform(),
            vec![2.0 * rng.uniform() - 1.0],
            0.7 + 0.8 * rng.uniform(),
        );
        let fc = project(&|x: &[f64]| g.value(x), order, 1)?;
        for i in 0..=40 {
            let x = -2.0 + 0.1 * i as f64;
            let approx = pair(&fc, &delta_coeffs(&[x], order))?;
            worst = worst.max((approx - g.value(&[x])).abs());
        }
    }
    let norms = |p: f64| -> Vec<f64> {
        [128usize, 256, 512]
            .iter()
            .map(|&n| sobolev_norm(&delta_coeffs(&[0.0], n), -p))
            .collect()
    };
    let bounded = norms(0.5);
    let growing = norms(0.125);
    // increments of the partial sums shrink geometrically when p > d/4
    let inc = |v: &[f64]| ((v[1] - v[0]), (v[2] - v[1]));
    let (b1, b2) = inc(&bounded);
    let (g1, g2) = inc(&growing);
    let converges = b2 < 0.8 * b1 && b2 < 1e-2 * bounded[2];
    let diverges = g2 > g1 && growing[2] > 1.1 * growing[0];
    Ok(Outcome::new(
        worst <= 1e-6 && converges && diverges,
        format!(
            "max reconstruction error {worst:.3e}; ‖δ_0‖ at N = 128/256/512: p = 0.5 {:.6}/{:.6}/{:.6}, p = 0.125 {:.4}/{:.4}/{:.4}",
            bounded[0], bounded[1], bounded[2], growing[0], growing[1], growing[2]
        ),
        &[
            ("max_error", worst),
            ("norm_p0.5_N512", bounded[2]),
            ("norm_p0.125_N128", growing[0]),
            ("norm_p0.125_N512", growing[2]),
        ],
    ))
}

fn brownian() -> Result<DiffusionSpec, CliError> {
    DiffusionSpec::brownian(vec![0.0]).map_err(CliError::from)
}

fn constant_potential(profile: Profile, seed: u64) -> Check {
    let cfg = McConfig::new(profile.pick(10_000, 100_000), 1e-3, 1.0, seed)?;
    let e = pt_v_f(&Constant(1.0), &field(|_| 0.5), &brownian()?, &cfg, 1.0)?;
    let exact = 0.5f64.exp();
    let rel = (e.value - exact).abs() / exact;
    Ok(Outcome::new(
        rel <= 1e-14 && e.std_error == 0.0,
        format!(
            "estimate {:.15} vs e^0.5 = {exact:.15}, relative error {rel:.2e}, SE {}",
            e.value, e.std_error
        ),
        &[
            ("estimate", e.value),
            ("relative_error", rel),
            ("std_error", e.std_error),
        ],
    ))
}

fn cameron_martin_anchor(profile: Profile, seed: u64) -> Check {
    let anchor = cameron_martin();
    let cfg = McConfig::new(profile.pick(20_000, 100_000), 1e-3, 1.0, seed)?;
    let vbar = field(|x| -0.5 * x[0] * x[0]);
    let e = pt_v_f(&Constant(1.0), &vbar, &brownian()?, &cfg, 1.0)?;
    let plateau = SmoothPlateau {
        level: 1.0,
        inner: 5.0,
        outer: 7.5,
    };
    let params = PdeParams {
        nx: 1601,
        dt: 1e-3,
        half_width: None,
    };
    let pde = pde_reference(&vbar, &brownian()?, &plateau, 1.0, &params)?.value_at(0.0)?;
    let mc_gap = (e.value - anchor).abs();
    let pde_gap = (pde - anchor).abs();
    Ok(Outcome::new(
        mc_gap <= 3.0 * e.std_error && pde_gap <= 1e-3,
        format!(
            "MC {:.5} ± {:.1e} (gap {mc_gap:.2e}), PDE {pde:.5} (gap {pde_gap:.2e}), anchor {anchor:.5}",
            e.value, e.std_error
        ),
        &[
            ("mc", e.value),
            ("mc_std_error", e.std_error),
            ("pde", pde),
            ("anchor", anchor),
        ],
    ))
}

fn duality_cases() -> Result<Vec<(Gaussian, ScalarField, DiffusionSpec)>, CliError> {
    Ok(vec![
        (
            Gaussian::new(1.0, vec![0.3], 0.8),
            field(|x| -0.5 * x[0] * x[0]),
            DiffusionSpec::brownian(vec![0.0])?,
        ),
        (
            Gaussian::new(1.0, vec![-0.2], 1.2),
            field(|x| 0.5 * x[0].sin()),
            DiffusionSpec::ornstein_uhlenbeck(1.0, 0.0, 1.0, vec![0.3])?,
        ),
        (
            Gaussian::normal_density(0.0, 1.0),
            field(|x| 0.2 * x[0]),
            DiffusionSpec::brownian(vec![0.0])?,
        ),
        (
            Gaussian::new(2.0, vec![0.5], 0.7),
            field(|x| -0.25 * x[0] * x[0]),
            DiffusionSpec::ornstein_uhlenbeck(0.5, 0.5, 0.8, vec![-0.2])?,
        ),
        (
            Gaussian::new(1.0, vec![0.0], 1.0),
            field(|x| 0.3 * (-x[0] * x[0]).exp()),
            DiffusionSpec::brownian(vec![0.5])?,
        ),
    ])
}

fn duality(profile: Profile, seed: u64) -> Check {
    let n = profile.pick(10_000, 100_000);
    let mut worst_ratio: f64 = 0.0;
    let mut values = Vec::new();
    for (i, (f, vbar, spec)) in duality_cases()?.into_iter().enumerate() {
        let cfg = McConfig::new(n, 1e-2, 1.0, seed.wrapping_add(i as u64))?;
        let rep = fk_duality_check(
            &f,
            &vbar,
            &spec,
            &cfg,
            1.0,
            64,
            None,
            DualityTolerances::default(),
        )?;
        let gap = &rep.gaps[0];
        worst_ratio = worst_ratio.max(gap.gap / gap.tolerance);
        values.push((format!("gap_{}", i + 1), gap.gap));
        values.push((format!("tolerance_{}", i + 1), gap.tolerance));
    }
    let mut out = Outcome::new(
        worst_ratio <= 1.0,
        format!("largest gap/tolerance {worst_ratio:.3e} over 5 (f, V̄, driver) cases, n = {n}"),
        &[("max_gap_ratio", worst_ratio)],
    );
    out.values.extend(values);
    Ok(out)
}

fn weak_residual_at(dt: f64, n: usize, seed: u64) -> Result<Vec<WeakResidual>, CliError> {
    let cfg = McConfig::new(n, dt, 1.0, seed)?;
    spde_weak_residual(
        &Gaussian::new(1.0, vec![0.3], 0.8),
        &field(|x| -0.5 * x[0] * x[0]),
        &brownian()?,
        &cfg,
        &[0.25, 0.5, 1.0],
        64,
    )
    .map_err(CliError::from)
}

fn weak_residual(profile: Profile, seed: u64) -> Check {
    let n = profile.pick(20_000, 100_000);
    let coarse = weak_residual_at(2e-3, n, seed)?;
    let fine = weak_residual_at(1e-3, n, seed)?;
    let within = coarse.iter().chain(&fine).all(|w| w.pass);
    let worst = |rs: &[WeakResidual]| max(rs.iter().map(|w| w.mean.abs() / w.tolerance));
    let strong = |rs: &[WeakResidual]| max(rs.iter().map(|w| w.strong_abs_mean));
    let (sc, sf) = (strong(&coarse), strong(&fine));
    let shrinks = sf < 0.85 * sc;
    let mut out = Outcome::new(
        within && shrinks,
        format!(
            "largest |mean|/(3 SE + 5 dt) {:.3} (dt 2e-3), {:.3} (dt 1e-3); mean |strong residual| {sc:.3e} -> {sf:.3e}",
            worst(&coarse),
            worst(&fine)
        ),
        &[
            ("strong_abs_residual_dt_2e-3", sc),
            ("strong_abs_residual_dt_1e-3", sf),
            ("max_ratio_dt_2e-3", worst(&coarse)),
            ("max_ratio_dt_1e-3", worst(&fine)),
        ],
    );
    for w in &fine {
        out.values.insert(format!("mean_t{}", w.t), w.mean);
        out.values
            .insert(format!("std_error_t{}", w.t), w.std_error);
    }
    Ok(out)
}

fn translation(profile: Profile, seed: u64) -> Check {
    let order = 64;
    let t = 0.5;
    let u0 = project(
        &|x: &[f64]| Gaussian::normal_density(0.0, 1.0).value(x),
        order,
        1,
    )?;
    let target = project(
        &|x: &[f64]| Gaussian::normal_density(0.0, 1.0 + t).value(x),
        order,
        1,
    )?;
    let cfg = McConfig::new(profile.pick(5_000, 20_000), 1e-2, t, seed)?;
    let shift = GaussianShift::new(vec![1.0], vec![0.0])?;
    let lambda = 0.4;
    let est = translation_semigroup_u(&u0, &shift, &cfg, t, Some(&make_constant(lambda)))?;
    let worst = max((0..u0.len()).map(|k| {
        (est.mean.value.coeffs()[k] - target.coeffs()[k]).abs()
            / (1e-4 + 3.0 * est.mean.std_error[k])
    }));
    let factor = est.factor.unwrap_or(f64::NAN);
    let rel = (factor / (lambda * t).exp() - 1.0).abs();
    let wrapped_exact = est
        .wrapped
        .as_ref()
        .is_some_and(|w| *w == est.mean.value.scaled(factor));
    Ok(Outcome::new(
        worst <= 1.0 && rel <= 1e-12 && wrapped_exact,
        format!(
            "largest coefficient gap/(1e-4 + 3 SE) {worst:.3}, wrapper relative error {rel:.2e}, rejected {:.4}",
            est.rejected_fraction
        ),
        &[
            ("max_gap_ratio", worst),
            ("wrapper_relative_error", rel),
            ("rejected_fraction", est.rejected_fraction),
        ],
    ))
}

fn identity_comparator(profile: Profile, seed: u64) -> Check {
    let cfg = McConfig::new(profile.pick(5_000, 20_000), 1e-2, 1.0, seed)?;
    let spec = DiffusionSpec::brownian(vec![0.1])?;
    let f = Gaussian::new(1.0, vec![0.0], 1.0);
    let constant = section5_identity_comparator(&f, &field(|_| 0.6), &spec, &cfg, 1.0, 32, true)?;
    let linear = section5_identity_comparator(&f, &field(|x| x[0]), &spec, &cfg, 1.0, 32, false)?;
    Ok(Outcome::new(
        constant.pass == Some(true) && linear.pass.is_none(),
        format!(
            "constant V̄: worst gap/(3 SE + 1e-12) {:.3e}; V̄(x) = x: scalar gap {:.4e} ± {:.1e} (reported only)",
            constant.worst_gap_ratio, linear.scalar_gap, linear.scalar_std_error
        ),
        &[
            ("constant_worst_gap_ratio", constant.worst_gap_ratio),
            ("constant_scalar_gap", constant.scalar_gap),
            ("linear_coefficient_gap", linear.coefficient_gap),
            ("linear_scalar_gap", linear.scalar_gap),
            ("linear_scalar_std_error", linear.scalar_std_error),
        ],
    ))
}

/// Quick-profile budget in seconds.
pub const QUICK_BUDGET: f64 = 120.0;

fn determinism(seed: u64) -> Check {
    let start = Instant::now();
    let first = run_ids(Profile::Quick, seed, 1..=11).to_json();
    let elapsed = start.elapsed().as_secs_f64();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let second = pool.install(|| run_ids(Profile::Quick, seed, 1..=11).to_json());
    let identical = first == second;
    Ok(Outcome::new(
        identical && elapsed <= QUICK_BUDGET,
        format!(
            "quick suite reports {} across runs ({} bytes); first run {elapsed:.1} s (budget {QUICK_BUDGET} s)",
            if identical { "byte-identical" } else { "DIFFER" },
            first.len()
        ),
        &[("identical", identical as u8 as f64), ("report_bytes", first.len() as f64)],
    ))
}
