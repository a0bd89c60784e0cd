//! Randomised property suites.
//!
//! Every draw owns a ChaCha stream derived from `(seed, suite, draw)`, so
//! results do not depend on how rayon schedules the draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    AgeGrid, Density, ModelKind, Monotonicity, RateFunction, Scenario, SolverControls, VitalRates,
};
use crate::operator_lab::{
    assemble_full, assemble_split, dense_eigenvalues, dominant_eigenvalue, rank_one_operator,
    rank_one_spectrum, ray_monotonicity_scan, resolvent_matrix, split_reconstruction_ulps,
};
use crate::spectral::{resolvent_residual, signs_agree, Characteristic};

/// Largest grid used by the per-draw checks on a user scenario.
const COARSE_CELLS: usize = 400;
const DENSE_CELLS: usize = 50;
const RESOLVENT_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    SignEquivalence,
    MatrixSignEquivalence,
    RayMonotonicity,
    SplitExactness,
    RankOneSpectrum,
    ResolventIdentity,
    ResolventPositivity,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::SignEquivalence,
        Suite::MatrixSignEquivalence,
        Suite::RayMonotonicity,
        Suite::SplitExactness,
        Suite::RankOneSpectrum,
        Suite::ResolventIdentity,
        Suite::ResolventPositivity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::SignEquivalence => "sign_equivalence",
            Suite::MatrixSignEquivalence => "matrix_sign_equivalence",
            Suite::RayMonotonicity => "ray_monotonicity",
            Suite::SplitExactness => "split_exactness",
            Suite::RankOneSpectrum => "rank_one_spectrum",
            Suite::ResolventIdentity => "resolvent_identity",
            Suite::ResolventPositivity => "resolvent_positivity",
        }
    }

    fn index(self) -> u64 {
        Suite::ALL.iter().position(|s| *s == self).expect("listed") as u64
    }
}

/// Per-draw verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    /// Precondition not met (near-critical draw, inapplicable kind, ...).
    Skip,
    Fail(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub first_failure: Option<String>,
    /// Largest measured constant, e.g. residual / h for the resolvent suite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_measure: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub draws: usize,
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.failed == 0)
    }

    pub fn suite(&self, suite: Suite) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.suite == suite.name())
    }
}

/// Deterministic stream for one draw of one suite.
pub fn draw_rng(seed: u64, suite: Suite, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((suite.index() << 40) | draw as u64);
    rng
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// A smooth strictly positive density: a floor plus Gaussian bumps.
pub fn random_density(rng: &mut impl Rng, grid: AgeGrid) -> Density {
    let m = grid.max_age();
    let floor = rng.random_range(0.05..1.0);
    let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(1..4))
        .map(|_| {
            (
                rng.random_range(0.0..2.0),
                rng.random_range(0.0..m),
                rng.random_range(0.05..0.5) * m,
            )
        })
        .collect();
    let shape = Density::from_fn(grid, |a| {
        floor
            + bumps
                .iter()
                .map(|(h, c, w)| h * (-((a - c) / w).powi(2)).exp())
                .sum::<f64>()
    })
    .expect("finite by construction");
    let total = log_uniform(rng, 0.02, 20.0);
    shape.normalized().expect("positive").scaled(total)
}

/// A random scenario of any model kind with monotone-in-`x` fertility.
pub fn random_scenario(rng: &mut impl Rng, cells: usize) -> Scenario {
    let kind = match rng.random_range(0..3) {
        0 => ModelKind::Hierarchic,
        1 => ModelKind::GurtinMccamy,
        _ => ModelKind::Linear,
    };
    let m = rng.random_range(1.0..10.0);
    let amplitude = log_uniform(rng, 0.05, 8.0);
    let rate = rng.random_range(0.0..1.5);
    let age_shape = match rng.random_range(0..3) {
        0 => "1".to_string(),
        1 => format!("exp(-{rate}*a)"),
        _ => format!("(0.2+a)*exp(-{rate}*a)"),
    };
    let k = log_uniform(rng, 0.05, 5.0);
    let decreasing = kind == ModelKind::Linear || rng.random_bool(0.75);
    let env_shape = match (kind, decreasing, rng.random_range(0..2)) {
        (ModelKind::Linear, _, _) => "1".to_string(),
        (_, true, 0) => format!("1/(1+{k}*x)"),
        (_, true, _) => format!("exp(-{k}*x)"),
        (_, false, _) => format!("(0.1+{k}*x)/(1+{k}*x)"),
    };
    let beta = format!("{amplitude}*{age_shape}*{env_shape}");

    let base = log_uniform(rng, 0.02, 2.0);
    let age_slope = rng.random_range(0.0..0.5) / m;
    let env_slope = rng.random_range(0.0..1.0);
    // mortality moves with x against fertility so the ray stays monotone
    let env_term = match (kind, decreasing) {
        (ModelKind::Linear, _) => String::new(),
        (ModelKind::Hierarchic, _) => format!("+{env_slope}*x"),
        (ModelKind::GurtinMccamy, true) => format!("+{env_slope}*x/(1+x)"),
        (ModelKind::GurtinMccamy, false) => format!("+{env_slope}/(1+x)"),
    };
    let mu = format!("{base}+{age_slope}*a{env_term}");

    let rates = VitalRates {
        beta: RateFunction::parse(&beta).expect("generated expression parses"),
        mu: RateFunction::parse(&mu).expect("generated expression parses"),
        mu_lower_bound: base,
        beta_monotonicity: match (kind, decreasing) {
            (ModelKind::Linear, _) => Monotonicity::None,
            (_, true) => Monotonicity::Decreasing,
            (_, false) => Monotonicity::Increasing,
        },
        kind,
    };
    Scenario {
        name: None,
        grid: AgeGrid::new(m, cells).expect("valid grid"),
        rates,
        saturation_k: None,
        solver: SolverControls::default(),
        initial: None,
        seed: None,
    }
}

fn check(outcome: Result<Outcome>) -> Outcome {
    match outcome {
        Ok(o) => o,
        Err(e) => Outcome::Fail(format!("{}: {e}", e.code())),
    }
}

/// Sign of `s(B_u)` against `R(u) - 1`.
pub fn sign_equivalence(u: &Density, scenario: &Scenario) -> Result<Outcome> {
    let ch = Characteristic::new(u, scenario)?;
    if ch.fertility().iter().all(|&b| b == 0.0) {
        return Ok(Outcome::Skip);
    }
    let s = ch.spectral_bound()?.root;
    let r = ch.net_reproduction();
    if (r - 1.0).abs() <= 1e-6 || s.abs() <= 1e-8 {
        return Ok(Outcome::Skip);
    }
    Ok(if signs_agree(s, r) {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("s = {s:e} but R = {r}"))
    })
}

/// Discrete analogue: dominant eigenvalue of `B_h` against `φᵀw - 1`.
pub fn matrix_sign_equivalence(u: &Density, scenario: &Scenario) -> Result<Outcome> {
    let (hat, boundary) = assemble_split(u, scenario)?;
    let r = rank_one_spectrum(&hat, &boundary).nonzero_rank_one_eig;
    let d = dominant_eigenvalue(&assemble_full(u, scenario)?)?;
    if (r - 1.0).abs() <= 1e-6 || d.abs() <= 1e-8 || boundary.phi.iter().all(|&p| p == 0.0) {
        return Ok(Outcome::Skip);
    }
    Ok(if (d > 0.0) == (r > 1.0) {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("dominant eigenvalue {d:e} but discrete R = {r}"))
    })
}

/// Strict monotonicity of the discrete bound on `[α, 2α]` for a
/// power-of-two `α`, plus `B̂` invariance for the hierarchic kind.
pub fn ray_monotonicity(u: &Density, alpha: f64, scenario: &Scenario) -> Result<Outcome> {
    if scenario.rates.kind == ModelKind::Linear
        || scenario.rates.beta_monotonicity == Monotonicity::None
    {
        return Ok(Outcome::Skip);
    }
    match ray_monotonicity_scan(u, &[alpha, 2.0 * alpha], scenario) {
        Ok(_) => Ok(Outcome::Pass),
        Err(e @ (Error::MonotonicityViolation { .. } | Error::RayInvariance { .. })) => {
            Ok(Outcome::Fail(format!("{}: {e}", e.code())))
        }
        Err(e) => Err(e),
    }
}

/// `B_h = B̂_h + bφᵀ` to within one ulp entrywise.
pub fn split_exactness(u: &Density, scenario: &Scenario) -> Result<Outcome> {
    let (hat, boundary) = assemble_split(u, scenario)?;
    let full = assemble_full(u, scenario)?;
    let ulps = split_reconstruction_ulps(&full, &hat, &boundary);
    Ok(if ulps <= 1.0 {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("reconstruction off by {ulps} ulp"))
    })
}

/// Dense spectrum of `-bφᵀB̂_h⁻¹` is `{φᵀw, 0, ..., 0}`.
pub fn rank_one_check(u: &Density, scenario: &Scenario) -> Result<Outcome> {
    let (hat, boundary) = assemble_split(u, scenario)?;
    let target = rank_one_spectrum(&hat, &boundary).nonzero_rank_one_eig;
    let mut eig = dense_eigenvalues(&rank_one_operator(&hat, &boundary));
    let n = eig.len();
    let nearest = eig
        .iter()
        .enumerate()
        .map(|(i, z)| (i, ((z.re - target).powi(2) + z.im.powi(2)).sqrt()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let tol = 1e-10 * target.abs().max(1.0);
    if nearest.1 > tol {
        return Ok(Outcome::Fail(format!("no eigenvalue near φᵀw = {target}")));
    }
    eig.swap_remove(nearest.0);
    let worst = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(if worst < 1e-10 {
        Outcome::Pass
    } else {
        Outcome::Fail(format!(
            "{} off-eigenvalues, largest modulus {worst:e}",
            n - 1
        ))
    })
}

/// Residuals of `λg + g' + μg = f` and the birth law for `g = (λ - B_u)⁻¹ f`,
/// returned as multiples of `h` alongside the verdict.
pub fn resolvent_identity(
    u: &Density,
    lambda: f64,
    f: &Density,
    scenario: &Scenario,
) -> Result<(Outcome, Option<f64>)> {
    let ch = Characteristic::new(u, scenario)?;
    if (ch.k(lambda) - 1.0).abs() <= 1e-3 {
        return Ok((Outcome::Skip, None));
    }
    let g = ch.resolvent_apply(lambda, f)?;
    let r = resolvent_residual(&ch, lambda, f, &g);
    let h = scenario.grid.width();
    let constant = r.equation.max(r.boundary) / h;
    let outcome = if constant < RESOLVENT_FACTOR {
        Outcome::Pass
    } else {
        Outcome::Fail(format!(
            "λ = {lambda}: residuals {:e}, {:e} exceed {RESOLVENT_FACTOR}h",
            r.equation, r.boundary
        ))
    };
    Ok((outcome, Some(constant)))
}

/// `(λ - B_h)⁻¹ ≥ 0` entrywise for `λ` above the dominant eigenvalue.
pub fn resolvent_positivity(u: &Density, delta: f64, scenario: &Scenario) -> Result<Outcome> {
    let (hat, boundary) = assemble_split(u, scenario)?;
    let d = dominant_eigenvalue(&assemble_full(u, scenario)?)?;
    let lambda = d + delta;
    let r = resolvent_matrix(&hat, &boundary, lambda)?;
    let scale = r.amax();
    let lowest = r.min();
    Ok(if lowest >= -1e-12 * scale {
        Outcome::Pass
    } else {
        Outcome::Fail(format!("λ = {lambda}: entry {lowest:e}"))
    })
}

fn coarse(scenario: &Scenario, cells: usize) -> Result<Scenario> {
    if scenario.grid.len() <= cells {
        Ok(scenario.clone())
    } else {
        scenario.with_cells(cells)
    }
}

/// One draw of `suite` against the given scenario with a random environment.
fn scenario_draw(
    scenario: &Scenario,
    suite: Suite,
    rng: &mut ChaCha8Rng,
) -> Result<(Outcome, Option<f64>)> {
    let cells = match suite {
        Suite::SplitExactness | Suite::RankOneSpectrum | Suite::ResolventPositivity => DENSE_CELLS,
        Suite::MatrixSignEquivalence | Suite::RayMonotonicity => 200,
        _ => COARSE_CELLS,
    };
    let s = coarse(scenario, cells)?;
    let u = random_density(rng, s.grid);
    let outcome = match suite {
        Suite::SignEquivalence => sign_equivalence(&u, &s)?,
        Suite::MatrixSignEquivalence => matrix_sign_equivalence(&u, &s)?,
        Suite::RayMonotonicity => {
            let alpha = 2f64.powi(rng.random_range(-3..=3));
            ray_monotonicity(&u, alpha, &s)?
        }
        Suite::SplitExactness => split_exactness(&u, &s)?,
        Suite::RankOneSpectrum => rank_one_check(&u, &s)?,
        Suite::ResolventIdentity => {
            let ch = Characteristic::new(&u, &s)?;
            if ch.fertility().iter().all(|&b| b == 0.0) {
                return Ok((Outcome::Skip, None));
            }
            let bound = ch.spectral_bound()?.root;
            let lambda = bound + rng.random_range(-1.0..4.0);
            let f = random_density(rng, s.grid);
            return resolvent_identity(&u, lambda, &f, &s);
        }
        Suite::ResolventPositivity => {
            let delta = log_uniform(rng, 0.01, 5.0);
            resolvent_positivity(&u, delta, &s)?
        }
    };
    Ok((outcome, None))
}

fn random_draw(suite: Suite, rng: &mut ChaCha8Rng) -> Result<(Outcome, Option<f64>)> {
    let cells = match suite {
        Suite::SplitExactness | Suite::RankOneSpectrum | Suite::ResolventPositivity => {
            rng.random_range(2..=DENSE_CELLS)
        }
        Suite::MatrixSignEquivalence | Suite::RayMonotonicity => rng.random_range(20..=200),
        _ => rng.random_range(100..=COARSE_CELLS),
    };
    let scenario = random_scenario(rng, cells);
    scenario_draw(&scenario, suite, rng)
}

fn run_suite(
    seed: u64,
    draws: usize,
    suite: Suite,
    draw: impl Fn(&mut ChaCha8Rng) -> Result<(Outcome, Option<f64>)> + Sync,
) -> SuiteReport {
    let results: Vec<(Outcome, Option<f64>)> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_rng(seed, suite, i);
            match draw(&mut rng) {
                Ok(r) => r,
                Err(e) => (check(Err(e)), None),
            }
        })
        .collect();
    let mut report = SuiteReport {
        suite: suite.name(),
        passed: 0,
        failed: 0,
        skipped: 0,
        first_failure: None,
        max_measure: None,
    };
    for (i, (outcome, measure)) in results.into_iter().enumerate() {
        if let Some(m) = measure {
            report.max_measure = Some(report.max_measure.map_or(m, |x: f64| x.max(m)));
        }
        match outcome {
            Outcome::Pass => report.passed += 1,
            Outcome::Skip => report.skipped += 1,
            Outcome::Fail(msg) => {
                report.failed += 1;
                if report.first_failure.is_none() {
                    report.first_failure = Some(format!("draw {i}: {msg}"));
                }
            }
        }
    }
    report
}

/// All suites on random environments of the given scenario.
pub fn verify_scenario(scenario: &Scenario, draws: usize, seed: u64) -> VerifyReport {
    let suites = Suite::ALL
        .iter()
        .map(|&suite| {
            run_suite(seed, draws, suite, |rng| {
                scenario_draw(scenario, suite, rng)
            })
        })
        .collect();
    VerifyReport {
        seed,
        draws,
        suites,
    }
}

/// All suites on freshly drawn random scenarios of every model kind.
pub fn verify_random(draws: usize, seed: u64) -> VerifyReport {
    let suites = Suite::ALL
        .iter()
        .map(|&suite| run_suite(seed, draws, suite, |rng| random_draw(suite, rng)))
        .collect();
    VerifyReport {
        seed,
        draws,
        suites,
    }
}

/// A single suite over random scenarios.
pub fn run_random_suite(suite: Suite, draws: usize, seed: u64) -> SuiteReport {
    run_suite(seed, draws, suite, |rng| random_draw(suite, rng))
}
