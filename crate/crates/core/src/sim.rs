//! Time stepping along characteristics with `Δt = h`.

use crate::error::{Error, Result};
use crate::model::{
    environment_profiles, extinction_profiles, f2_total, Density, ModelKind, Scenario,
    VitalProfiles, POSITIVITY_FLOOR,
};

/// Total population above which a run is aborted.
pub const BLOWUP_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub density: Density,
    /// Birth rate `B = h Σ β_j p_j` of the incoming density.
    pub birth_rate: f64,
    /// The hierarchic environment was undefined and `μ(·, 0)` was used.
    pub extinct: bool,
}

fn frozen_profiles(p: &Density, scenario: &Scenario) -> Result<(VitalProfiles, bool)> {
    let total = f2_total(p);
    if scenario.rates.kind == ModelKind::Hierarchic && total <= POSITIVITY_FLOOR {
        return Ok((extinction_profiles(*p.grid(), &scenario.rates)?, true));
    }
    Ok((environment_profiles(p, &scenario.rates)?, false))
}

/// One unit-CFL step with the environment frozen at the start of the step.
pub fn step(p: &Density, scenario: &Scenario) -> Result<StepOutcome> {
    let (profiles, extinct) = frozen_profiles(p, scenario)?;
    let h = p.grid().width();
    let mu = profiles.mortality.values();
    let beta = profiles.fertility.values();
    let values = p.values();
    let birth_rate = h * beta.iter().zip(values).map(|(b, v)| b * v).sum::<f64>();
    let n = values.len();
    let mut next = vec![0.0; n];
    next[0] = birth_rate * (-h * mu[0]).exp();
    for i in 1..n {
        next[i] = values[i - 1] * (-h * mu[i - 1]).exp();
    }
    Ok(StepOutcome {
        density: Density::new(*p.grid(), next)?,
        birth_rate,
        extinct,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub snapshots: Vec<(f64, Density)>,
    pub total_series: Vec<(f64, f64)>,
    pub birth_series: Vec<(f64, f64)>,
    pub final_density: Density,
    pub max_value: f64,
    pub min_value: f64,
    /// Whether the hierarchic extinction fallback was ever used.
    pub extinct: bool,
}

/// Number of steps covering `horizon`.
pub fn step_count(horizon: f64, h: f64) -> usize {
    // guard against T/h landing a rounding error above an integer
    let ratio = horizon / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Runs `⌈T/h⌉` steps from `p0`, keeping every `stride`-th density.
pub fn simulate(
    scenario: &Scenario,
    p0: &Density,
    horizon: f64,
    stride: usize,
) -> Result<SimResult> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidScenario(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidScenario("stride must be at least 1".into()));
    }
    if p0.grid() != &scenario.grid {
        return Err(Error::GridMismatch);
    }
    if !p0.is_nonnegative() {
        return Err(Error::InvalidScenario(
            "initial density takes negative values".into(),
        ));
    }
    let h = scenario.grid.width();
    let steps = step_count(horizon, h);
    let mut p = p0.clone();
    let mut snapshots = vec![(0.0, p.clone())];
    let mut total_series = Vec::with_capacity(steps + 1);
    let mut birth_series = Vec::with_capacity(steps + 1);
    let mut max_value = f64::NEG_INFINITY;
    let mut min_value = f64::INFINITY;
    let mut extinct = false;
    for k in 0..=steps {
        let t = k as f64 * h;
        let total = f2_total(&p);
        if total > BLOWUP_LIMIT {
            return Err(Error::Blowup {
                time: t,
                total,
                limit: BLOWUP_LIMIT,
            });
        }
        for &v in p.values() {
            max_value = max_value.max(v);
            min_value = min_value.min(v);
        }
        total_series.push((t, total));
        let out = step(&p, scenario)?;
        birth_series.push((t, out.birth_rate));
        if k == steps {
            break;
        }
        extinct |= out.extinct;
        p = out.density;
        if (k + 1) % stride == 0 {
            snapshots.push(((k + 1) as f64 * h, p.clone()));
        }
    }
    Ok(SimResult {
        snapshots,
        total_series,
        birth_series,
        final_density: p,
        max_value,
        min_value,
        extinct,
    })
}

/// Largest relative L¹ distance from `p_star` along a run started at `p_star`.
pub fn validate_against_steady(p_star: &Density, scenario: &Scenario, horizon: f64) -> Result<f64> {
    let h = scenario.grid.width();
    let norm = p_star.l1_norm();
    let scale = if norm > POSITIVITY_FLOOR { norm } else { 1.0 };
    let mut p = p_star.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..step_count(horizon, h) {
        p = step(&p, scenario)?.density;
        worst = worst.max(p.l1_distance(p_star)? / scale);
    }
    Ok(worst)
}

/// Least-squares slope of `ln P(t)` over `t ∈ [from, to]`.
pub fn log_slope(series: &[(f64, f64)], from: f64, to: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, p)| *t >= from && *t <= to && *p > 0.0)
        .map(|(t, p)| (*t, p.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (mut num, mut den) = (0.0, 0.0);
    for (t, y) in &pts {
        num += (t - mt) * (y - my);
        den += (t - mt) * (t - mt);
    }
    Some(num / den)
}
