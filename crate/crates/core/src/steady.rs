//! Positive steady states as fixed points of a map on the level set
//! `S = {u : s(B_u) = 0}`.
//!
//! Along a ray `α ↦ α d` the hierarchy `F₁` is unchanged while the total
//! `F₂` scales with `α`, so monotonicity of `β` in its second argument makes
//! `α ↦ R(α d)` monotone and the ray meets `S` exactly once.

use crate::error::{Error, Result};
use crate::model::{
    cumulative_hazard, environment_profiles, f2_total, Density, ModelKind, Monotonicity, Scenario,
    POSITIVITY_FLOOR,
};
use crate::spectral::Characteristic;

const PROJECTION_RESIDUAL: f64 = 1e-10;
const ROOT_STOP: f64 = 1e-14;
const EXPANSION: f64 = 10.0;

/// A point of the level set on the ray through `direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayProjection {
    /// Unit-L¹ direction.
    pub direction: Density,
    pub alpha_star: f64,
    /// `|R(α* d) - 1|`.
    pub residual: f64,
}

impl RayProjection {
    pub fn point(&self) -> Density {
        self.direction.scaled(self.alpha_star)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateResult {
    pub density: Density,
    pub alpha_star: f64,
    pub iterations: usize,
    pub l1_step_norms: Vec<f64>,
    pub residual_boundary: f64,
    pub residual_profile: f64,
    pub net_reproduction_at_solution: f64,
    /// Hypothesis diagnostics that failed without preventing the solve.
    pub warnings: Vec<String>,
}

impl SteadyStateResult {
    pub fn total(&self) -> f64 {
        f2_total(&self.density)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub boundary: f64,
    pub profile: f64,
    pub r_gap: f64,
}

/// Normalised dominant eigenvector `V_u ∝ e^{-s a} π(a; F₁(u))` of `B_u`.
pub fn eigen_direction(u: &Density, scenario: &Scenario) -> Result<Density> {
    let ch = Characteristic::new(u, scenario)?;
    let s = ch.spectral_bound()?.root;
    direction_from(&ch, s)
}

fn direction_from(ch: &Characteristic, s: f64) -> Result<Density> {
    let grid = *ch.grid();
    let exponents: Vec<f64> = ch
        .hazard()
        .iter()
        .enumerate()
        .map(|(i, hz)| -s * grid.node(i) - hz)
        .collect();
    let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = exponents.iter().map(|e| (e - top).exp()).collect();
    Density::from_vec_unchecked(grid, values).normalized()
}

/// `α ↦ R(α d) - 1` for a fixed direction.
struct RayFunction<'a> {
    direction: &'a Density,
    scenario: &'a Scenario,
    total: f64,
    /// Survival along the ray, fixed for the hierarchic kind.
    survival: Option<Vec<f64>>,
}

impl<'a> RayFunction<'a> {
    fn new(direction: &'a Density, scenario: &'a Scenario) -> Result<Self> {
        let total = f2_total(direction);
        if total <= POSITIVITY_FLOOR {
            return Err(Error::ZeroPopulation { total });
        }
        let survival = if scenario.rates.kind == ModelKind::Hierarchic {
            let profiles = environment_profiles(direction, &scenario.rates)?;
            let hazard = cumulative_hazard(direction.grid(), profiles.mortality.values());
            Some(hazard.into_iter().map(|x| (-x).exp()).collect())
        } else {
            None
        };
        Ok(Self {
            direction,
            scenario,
            total,
            survival,
        })
    }

    fn eval(&self, alpha: f64) -> Result<f64> {
        let r = match &self.survival {
            Some(pi) => {
                let grid = self.direction.grid();
                let env = alpha * self.total;
                let mut sum = 0.0;
                for (i, p) in pi.iter().enumerate() {
                    sum += self.scenario.rates.beta.eval(grid.node(i), env)? * p;
                }
                grid.width() * sum
            }
            None => Characteristic::new(&self.direction.scaled(alpha), self.scenario)?
                .net_reproduction(),
        };
        Ok(r - 1.0)
    }
}

/// Scale `α*` with `R(α* d) = 1`, searched inside the solver's α-bracket.
pub fn project_to_level_set(direction: &Density, scenario: &Scenario) -> Result<RayProjection> {
    let direction = direction.normalized()?;
    let g = RayFunction::new(&direction, scenario)?;
    let (lo_lim, hi_lim) = scenario.solver.alpha_bracket;

    let sign = match scenario.rates.beta_monotonicity {
        Monotonicity::Decreasing => -1.0,
        Monotonicity::Increasing => 1.0,
        Monotonicity::None => 0.0,
    };
    let no_change = |g_lo: Option<f64>, g_hi: Option<f64>| -> Result<Error> {
        Ok(Error::NoSignChange {
            alpha_lo: lo_lim,
            alpha_hi: hi_lim,
            value_lo: match g_lo {
                Some(v) => v,
                None => g.eval(lo_lim)?,
            },
            value_hi: match g_hi {
                Some(v) => v,
                None => g.eval(hi_lim)?,
            },
        })
    };

    let bracket = if sign == 0.0 {
        let (g_lo, g_hi) = (g.eval(lo_lim)?, g.eval(hi_lim)?);
        if g_lo == 0.0 {
            return finish(direction, lo_lim, g_lo);
        }
        if g_hi == 0.0 {
            return finish(direction, hi_lim, g_hi);
        }
        if g_lo * g_hi > 0.0 {
            return Err(no_change(Some(g_lo), Some(g_hi))?);
        }
        ((lo_lim, g_lo), (hi_lim, g_hi))
    } else {
        let start = 1.0_f64.clamp(lo_lim, hi_lim);
        let g0 = g.eval(start)?;
        if g0 == 0.0 {
            return finish(direction, start, g0);
        }
        let upward = (g0 > 0.0) == (sign < 0.0);
        let (mut prev, mut g_prev) = (start, g0);
        loop {
            let next = if upward {
                (prev * EXPANSION).min(hi_lim)
            } else {
                (prev / EXPANSION).max(lo_lim)
            };
            if next == prev {
                return Err(if upward {
                    no_change(None, Some(g_prev))?
                } else {
                    no_change(Some(g_prev), None)?
                });
            }
            let g_next = g.eval(next)?;
            if g_next == 0.0 {
                return finish(direction, next, g_next);
            }
            if g_next * g_prev < 0.0 {
                break if upward {
                    ((prev, g_prev), (next, g_next))
                } else {
                    ((next, g_next), (prev, g_prev))
                };
            }
            (prev, g_prev) = (next, g_next);
        }
    };

    let (alpha, value) = illinois_log(&g, bracket)?;
    if value.abs() > PROJECTION_RESIDUAL {
        return Err(Error::ProjectionStalled {
            alpha,
            residual: value.abs(),
        });
    }
    finish(direction, alpha, value)
}

fn finish(direction: Density, alpha: f64, value: f64) -> Result<RayProjection> {
    Ok(RayProjection {
        direction,
        alpha_star: alpha,
        residual: value.abs(),
    })
}

/// Illinois-modified regula falsi in `ln α` on a sign-changing bracket.
fn illinois_log(g: &RayFunction<'_>, bracket: ((f64, f64), (f64, f64))) -> Result<(f64, f64)> {
    let ((alpha_a, mut fa), (alpha_b, mut fb)) = bracket;
    let (mut a, mut b) = (alpha_a.ln(), alpha_b.ln());
    for _ in 0..200 {
        let (lo, hi) = (a.min(b), a.max(b));
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > lo && c < hi) {
            c = 0.5 * (lo + hi);
        }
        if c == a || c == b {
            break;
        }
        let fc = g.eval(c.exp())?;
        if fc.abs() <= ROOT_STOP {
            return Ok((c.exp(), fc));
        }
        if fc * fb < 0.0 {
            (a, fa) = (b, fb);
        } else {
            fa *= 0.5;
        }
        (b, fb) = (c, fc);
    }
    // fa may carry Illinois down-weighting; re-evaluate both ends
    let (va, vb) = (g.eval(a.exp())?, g.eval(b.exp())?);
    Ok(if va.abs() < vb.abs() {
        (a.exp(), va)
    } else {
        (b.exp(), vb)
    })
}

/// One application of `Θ`: the eigen-direction of `B_u` scaled back onto `S`.
pub fn theta_step(u: &Density, scenario: &Scenario) -> Result<Density> {
    Ok(theta_projection(u, scenario)?.point())
}

fn theta_projection(u: &Density, scenario: &Scenario) -> Result<RayProjection> {
    let direction = eigen_direction(u, scenario)?;
    project_to_level_set(&direction, scenario)
}

/// Hypothesis diagnostics that do not block a solve.
pub fn hypothesis_warnings(scenario: &Scenario) -> Result<Vec<String>> {
    let rates = &scenario.rates;
    let m = scenario.grid.max_age();
    let mut warnings: Vec<String> = rates.probe(m)?.iter().map(|f| f.to_string()).collect();
    if !(rates.mu_lower_bound > 0.0) {
        warnings.push("no positive mortality lower bound mu0 declared".into());
    }
    match scenario.saturation_k {
        Some(k) => {
            let ages = (0..=16).map(|i| m * i as f64 / 16.0);
            let mut peak = f64::NEG_INFINITY;
            for a in ages {
                peak = peak.max(rates.beta.eval(a, k)?);
            }
            if !(peak < rates.mu_lower_bound) {
                warnings.push(format!(
                    "saturation bound fails: max_a beta(a, {k}) = {peak} is not below mu0 = {}",
                    rates.mu_lower_bound
                ));
            }
        }
        None if rates.beta_monotonicity == Monotonicity::Decreasing => {
            warnings.push("no saturation level K declared".into());
        }
        None => {}
    }
    for x in [0.0, 0.5, 1.0, 10.0, 100.0] {
        if !(rates.beta.eval(m, x)? > 0.0) {
            warnings.push(format!("beta(m, {x}) is not positive (irreducibility)"));
            break;
        }
    }
    if rates.beta_monotonicity == Monotonicity::None {
        warnings.push("beta has no declared monotonicity in the population size".into());
    }
    Ok(warnings)
}

/// Damped fixed-point iteration of `Θ` from the projected initial density.
pub fn solve_steady(scenario: &Scenario) -> Result<SteadyStateResult> {
    if scenario.rates.kind == ModelKind::Linear {
        let r0 = Characteristic::extinction(scenario)?.net_reproduction();
        return Err(Error::HypothesisViolation(vec![format!(
            "rates ignore the population, R = {r0} on every ray, so no positive steady state is isolated"
        )]));
    }
    let warnings = hypothesis_warnings(scenario)?;
    let controls = scenario.solver;

    let start = scenario.initial_density()?.normalized()?;
    let mut projection = match project_to_level_set(&start, scenario) {
        Ok(p) => p,
        Err(Error::NoSignChange {
            alpha_lo,
            alpha_hi,
            value_lo,
            value_hi,
        }) => {
            return Err(Error::HypothesisViolation(vec![format!(
                "R(alpha u0) - 1 keeps one sign on [{alpha_lo}, {alpha_hi}] ({value_lo:e}, {value_hi:e})"
            )]))
        }
        Err(e) => return Err(e),
    };
    let mut u = projection.point();
    let mut steps = Vec::new();
    let mut converged = false;
    for _ in 0..controls.max_iter {
        let mut next = theta_projection(&u, scenario)?;
        if controls.omega < 1.0 {
            let mixed = u.combine(1.0 - controls.omega, &next.point(), controls.omega)?;
            next = project_to_level_set(&mixed, scenario)?;
        }
        let next_u = next.point();
        let step = next_u.l1_distance(&u)? / u.l1_norm();
        steps.push(step);
        u = next_u;
        projection = next;
        if step <= controls.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::MaxIterations {
            iterations: steps.len(),
            last_step: steps.last().copied().unwrap_or(f64::NAN),
        });
    }
    debug_assert!(u.is_strictly_positive());
    let res = residuals(&u, scenario)?;
    Ok(SteadyStateResult {
        alpha_star: projection.alpha_star,
        iterations: steps.len(),
        l1_step_norms: steps,
        residual_boundary: res.boundary,
        residual_profile: res.profile,
        net_reproduction_at_solution: Characteristic::new(&u, scenario)?.net_reproduction(),
        density: u,
        warnings,
    })
}

/// Linear extrapolation of the density to `a = 0⁺` from the first two midpoints.
pub fn boundary_value(p: &Density) -> f64 {
    let v = p.values();
    1.5 * v[0] - 0.5 * v[1]
}

/// Steady-state residuals of the boundary law, the survival profile and `R`.
pub fn residuals(p: &Density, scenario: &Scenario) -> Result<Residuals> {
    let ch = Characteristic::new(p, scenario)?;
    let norm = p.l1_norm();
    let p0 = boundary_value(p);
    let births = births(&ch, p);
    let pi = ch.survival();
    let profile = p.combine(1.0, &pi, -p0)?.l1_norm() / norm;
    Ok(Residuals {
        boundary: (p0 - births).abs() / norm,
        profile,
        r_gap: (ch.net_reproduction() - 1.0).abs(),
    })
}

fn births(ch: &Characteristic, p: &Density) -> f64 {
    let h = ch.grid().width();
    h * ch
        .fertility()
        .iter()
        .zip(p.values())
        .map(|(b, v)| b * v)
        .sum::<f64>()
}

/// `‖p - B π(·; F₁(p))‖₁ / ‖p‖₁` with the birth rate `B = ∫ β p`.
pub fn self_consistency(p: &Density, scenario: &Scenario) -> Result<f64> {
    let ch = Characteristic::new(p, scenario)?;
    let b = births(&ch, p);
    Ok(p.combine(1.0, &ch.survival(), -b)?.l1_norm() / p.l1_norm())
}
