//! Grids, densities, vital rates and the environmental feedback maps.
//!
//! Every integral in the crate goes through the composite midpoint rule on
//! the uniform cells of an [`AgeGrid`]; cell values are the midpoint samples.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratedsl::{self, Expr, Var};

/// Totals at or below this are treated as the zero population.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// Uniform partition of `[0, m]` into `n` cells sampled at their midpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeGrid {
    max_age: f64,
    cells: usize,
    width: f64,
}

impl AgeGrid {
    pub fn new(max_age: f64, cells: usize) -> Result<Self> {
        if !(max_age.is_finite() && max_age > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "maximum age must be positive and finite, got {max_age}"
            )));
        }
        if cells == 0 {
            return Err(Error::InvalidGrid("cell count must be at least 1".into()));
        }
        Ok(Self {
            max_age,
            cells,
            width: max_age / cells as f64,
        })
    }

    pub fn max_age(&self) -> f64 {
        self.max_age
    }

    pub fn len(&self) -> usize {
        self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells == 0
    }

    /// Cell width `h = m / n`.
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Midpoint `a_i = (i + 1/2) h`.
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.width
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.cells).map(|i| self.node(i))
    }

    /// Same interval, different resolution.
    pub fn with_cells(&self, cells: usize) -> Result<Self> {
        AgeGrid::new(self.max_age, cells)
    }
}

/// Grid function: population density, feedback profile or survival.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    grid: AgeGrid,
    values: Vec<f64>,
}

impl Density {
    pub fn new(grid: AgeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite grid value {bad}")));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: AgeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn from_fn(grid: AgeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Density::new(grid, grid.nodes().map(f).collect())
    }

    pub fn constant(grid: AgeGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> &AgeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, alpha: f64) -> Density {
        Density {
            grid: self.grid,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    fn check_grid(&self, other: &Density) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Density, b: f64) -> Result<Density> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Density {
            grid: self.grid,
            values,
        })
    }

    /// `∫ |self - other|` by the midpoint rule.
    pub fn l1_distance(&self, other: &Density) -> Result<f64> {
        self.check_grid(other)?;
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| (x - y).abs())
            .sum();
        Ok(self.grid.width() * sum)
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.width() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Rescale to unit L¹ norm.
    pub fn normalized(&self) -> Result<Density> {
        let norm = self.l1_norm();
        if norm <= POSITIVITY_FLOOR {
            return Err(Error::ZeroPopulation { total: norm });
        }
        Ok(self.scaled(1.0 / norm))
    }

    /// Piecewise-linear interpolation through the midpoints onto another grid
    /// of the same interval; constant beyond the first and last midpoints.
    pub fn interpolate_to(&self, target: AgeGrid) -> Result<Density> {
        if target.max_age() != self.grid.max_age() {
            return Err(Error::GridMismatch);
        }
        let h = self.grid.width();
        let n = self.len();
        let values = target
            .nodes()
            .map(|a| {
                let pos = a / h - 0.5;
                if pos <= 0.0 {
                    self.values[0]
                } else if pos >= (n - 1) as f64 {
                    self.values[n - 1]
                } else {
                    let i = pos.floor() as usize;
                    let t = pos - i as f64;
                    (1.0 - t) * self.values[i] + t * self.values[i + 1]
                }
            })
            .collect();
        Ok(Density {
            grid: target,
            values,
        })
    }
}

/// Built-in parametric rate families, all functions of `(a, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "family",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum RateFamily {
    /// `value`
    Constant { value: f64 },
    /// `amplitude / (1 + k·x)`
    Hyperbolic { amplitude: f64, k: f64 },
    /// `base + slope·x`
    Affine { base: f64, slope: f64 },
    /// `amplitude · exp(-rate·a)`
    AgeExponential { amplitude: f64, rate: f64 },
}

impl RateFamily {
    fn eval(&self, a: f64, x: f64) -> f64 {
        match *self {
            RateFamily::Constant { value } => value,
            RateFamily::Hyperbolic { amplitude, k } => amplitude / (1.0 + k * x),
            RateFamily::Affine { base, slope } => base + slope * x,
            RateFamily::AgeExponential { amplitude, rate } => amplitude * (-rate * a).exp(),
        }
    }
}

/// A vital rate `f(a, x)` of age and environment value.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    Family(RateFamily),
    Expr(Expr),
}

impl RateFunction {
    pub fn constant(value: f64) -> Self {
        RateFunction::Family(RateFamily::Constant { value })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(RateFunction::Expr(ratedsl::parse(text)?))
    }

    /// Negative environment values are clamped to zero before evaluation.
    pub fn eval(&self, a: f64, x: f64) -> Result<f64> {
        let x = if x < 0.0 { 0.0 } else { x };
        let value = match self {
            RateFunction::Family(family) => family.eval(a, x),
            RateFunction::Expr(expr) => expr.eval(a, x)?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFiniteRate {
                age: a,
                env: x,
                value,
            })
        }
    }

    pub fn is_zero_constant(&self) -> bool {
        match self {
            RateFunction::Family(RateFamily::Constant { value }) => *value == 0.0,
            RateFunction::Expr(Expr::Literal(v)) => *v == 0.0,
            _ => false,
        }
    }

    fn depends_on_env(&self) -> bool {
        match self {
            RateFunction::Family(RateFamily::Constant { .. })
            | RateFunction::Family(RateFamily::AgeExponential { .. }) => false,
            RateFunction::Family(_) => true,
            RateFunction::Expr(e) => e.mentions(Var::Env),
        }
    }
}

impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFunction::Family(family) => write!(f, "{family:?}"),
            RateFunction::Expr(expr) => write!(f, "{expr}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Mortality fed by `F₁` (share of older individuals), fertility by `F₂`.
    Hierarchic,
    /// Both rates fed by the total population `F₂`.
    GurtinMccamy,
    /// No feedback; rates are evaluated at environment 0.
    Linear,
}

/// Monotonicity of `β` in its second argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Decreasing,
    Increasing,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VitalRates {
    pub beta: RateFunction,
    pub mu: RateFunction,
    /// Declared lower bound `μ₀` on the mortality.
    pub mu_lower_bound: f64,
    pub beta_monotonicity: Monotonicity,
    pub kind: ModelKind,
}

const PROBE_AGES: usize = 17;
const PROBE_ENVS: [f64; 12] = [
    0.0, 1e-3, 0.01, 0.1, 0.25, 0.5, 0.75, 1.0, 2.0, 10.0, 100.0, 1e4,
];

/// A probe-lattice finding that does not prevent computation.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeFinding {
    MortalityBelowBound {
        age: f64,
        env: f64,
        value: f64,
    },
    NegativeRate {
        which: &'static str,
        age: f64,
        env: f64,
        value: f64,
    },
    BetaNotMonotone {
        age: f64,
        env_lo: f64,
        env_hi: f64,
    },
}

impl fmt::Display for ProbeFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeFinding::MortalityBelowBound { age, env, value } => {
                write!(f, "mu({age}, {env}) = {value} is below the declared mu0")
            }
            ProbeFinding::NegativeRate { which, age, env, value } => {
                write!(f, "{which}({age}, {env}) = {value} is negative")
            }
            ProbeFinding::BetaNotMonotone { age, env_lo, env_hi } => write!(
                f,
                "beta(a={age}, .) violates the declared monotonicity between x={env_lo} and x={env_hi}"
            ),
        }
    }
}

impl VitalRates {
    /// Environment values at which the rates are probed. Hierarchic
    /// mortality only ever sees `F₁ ∈ [0, 1]`.
    fn probe_envs(&self, for_mu: bool) -> Vec<f64> {
        if for_mu && self.kind == ModelKind::Hierarchic {
            PROBE_ENVS.iter().copied().filter(|&x| x <= 1.0).collect()
        } else {
            PROBE_ENVS.to_vec()
        }
    }

    fn probe_ages(max_age: f64) -> impl Iterator<Item = f64> {
        (0..PROBE_AGES).map(move |i| max_age * i as f64 / (PROBE_AGES - 1) as f64)
    }

    /// Evaluates both rates on the probe lattice; errors on non-finite values.
    pub fn check_finite(&self, max_age: f64) -> Result<()> {
        for a in Self::probe_ages(max_age) {
            for x in self.probe_envs(false) {
                self.beta.eval(a, x)?;
                self.mu.eval(a, x)?;
            }
        }
        Ok(())
    }

    /// Spot-checks the declared bounds and monotonicity on the probe lattice.
    pub fn probe(&self, max_age: f64) -> Result<Vec<ProbeFinding>> {
        let mut findings = Vec::new();
        for a in Self::probe_ages(max_age) {
            for x in self.probe_envs(true) {
                let mu = self.mu.eval(a, x)?;
                if mu < self.mu_lower_bound {
                    findings.push(ProbeFinding::MortalityBelowBound {
                        age: a,
                        env: x,
                        value: mu,
                    });
                }
                if mu < 0.0 {
                    findings.push(ProbeFinding::NegativeRate {
                        which: "mu",
                        age: a,
                        env: x,
                        value: mu,
                    });
                }
            }
            let envs = self.probe_envs(false);
            let betas = envs
                .iter()
                .map(|&x| self.beta.eval(a, x))
                .collect::<Result<Vec<_>>>()?;
            for (&x, &b) in envs.iter().zip(&betas) {
                if b < 0.0 {
                    findings.push(ProbeFinding::NegativeRate {
                        which: "beta",
                        age: a,
                        env: x,
                        value: b,
                    });
                }
            }
            for (w, xs) in betas.windows(2).zip(envs.windows(2)) {
                let violated = match self.beta_monotonicity {
                    Monotonicity::Decreasing => w[0] < w[1],
                    Monotonicity::Increasing => w[0] > w[1],
                    Monotonicity::None => false,
                };
                if violated {
                    findings.push(ProbeFinding::BetaNotMonotone {
                        age: a,
                        env_lo: xs[0],
                        env_hi: xs[1],
                    });
                    break;
                }
            }
        }
        Ok(findings)
    }

    /// Monotonicity of `β` read off the probe lattice (strict where it is not flat).
    pub fn infer_beta_monotonicity(&self, max_age: f64) -> Result<Monotonicity> {
        if !self.beta.depends_on_env() {
            return Ok(Monotonicity::None);
        }
        let (mut up, mut down) = (false, false);
        for a in Self::probe_ages(max_age) {
            let betas = PROBE_ENVS
                .iter()
                .map(|&x| self.beta.eval(a, x))
                .collect::<Result<Vec<_>>>()?;
            for w in betas.windows(2) {
                up |= w[1] > w[0];
                down |= w[1] < w[0];
            }
        }
        Ok(match (up, down) {
            (false, true) => Monotonicity::Decreasing,
            (true, false) => Monotonicity::Increasing,
            _ => Monotonicity::None,
        })
    }
}

/// Iteration and tolerance controls for the steady-state solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverControls {
    /// Relative L¹ step size at which the fixed-point iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Damping `ω ∈ (0, 1]`.
    pub omega: f64,
    /// Search range for the ray scale `α`.
    pub alpha_bracket: (f64, f64),
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            omega: 1.0,
            alpha_bracket: (1e-8, 1e8),
        }
    }
}

impl SolverControls {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.alpha_bracket;
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "solver.tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidScenario(
                "solver.max_iter must be at least 1".into(),
            ));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::InvalidScenario(format!(
                "solver.omega must lie in (0, 1], got {}",
                self.omega
            )));
        }
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "solver.alpha_bracket must satisfy 0 < lo < hi < inf, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// A complete, validated model run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub grid: AgeGrid,
    pub rates: VitalRates,
    /// Saturation level `K` with `max_a β(a, K) < μ₀`, when declared.
    pub saturation_k: Option<f64>,
    pub solver: SolverControls,
    /// Initial density as an expression in `a`.
    pub initial: Option<Expr>,
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn new(grid: AgeGrid, rates: VitalRates) -> Result<Self> {
        let scenario = Self {
            name: None,
            grid,
            rates,
            saturation_k: None,
            solver: SolverControls::default(),
            initial: None,
            seed: None,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.len() < 2 {
            return Err(Error::InvalidScenario("n must be at least 2".into()));
        }
        if !(self.rates.mu_lower_bound >= 0.0) {
            return Err(Error::InvalidScenario(format!(
                "mu0 must be non-negative, got {}",
                self.rates.mu_lower_bound
            )));
        }
        self.solver.validate()?;
        self.rates.check_finite(self.grid.max_age())?;
        if let Some(init) = &self.initial {
            if init.mentions(Var::Env) {
                return Err(Error::InvalidScenario(
                    "initial density may only depend on a".into(),
                ));
            }
            self.initial_density()?;
        }
        Ok(())
    }

    /// Same scenario on a grid with a different cell count.
    pub fn with_cells(&self, cells: usize) -> Result<Scenario> {
        let mut out = self.clone();
        out.grid = self.grid.with_cells(cells)?;
        Ok(out)
    }

    /// The configured initial density, or the uniform density of total 1.
    pub fn initial_density(&self) -> Result<Density> {
        match &self.initial {
            None => Ok(Density::constant(self.grid, 1.0 / self.grid.max_age())),
            Some(expr) => {
                let values = self
                    .grid
                    .nodes()
                    .map(|a| expr.eval(a, 0.0).map_err(Error::from))
                    .collect::<Result<Vec<_>>>()?;
                let density = Density::new(self.grid, values)?;
                if !density.is_nonnegative() {
                    return Err(Error::InvalidScenario(
                        "initial density takes negative values".into(),
                    ));
                }
                Ok(density)
            }
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::default();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

/// `∫₀ᵐ d` by the midpoint rule.
pub fn integrate(d: &Density) -> f64 {
    d.grid().width() * compensated_sum(d.values())
}

/// Total population `F₂(u) = ∫₀ᵐ u`.
pub fn f2_total(u: &Density) -> f64 {
    integrate(u)
}

/// Share of individuals older than `a`: `F₁(u)(a) = ∫ₐᵐ u / ∫₀ᵐ u`.
///
/// The partial integral at a midpoint takes half of its own cell:
/// `∫_{a_i}^m u ≈ h (u_i / 2 + Σ_{j>i} u_j)`.
pub fn f1_hierarchy(u: &Density) -> Result<Density> {
    let total = integrate(u);
    if total <= POSITIVITY_FLOOR {
        return Err(Error::ZeroPopulation { total });
    }
    // the cell width cancels between numerator and denominator
    let vals = u.values();
    let sum = compensated_sum(vals);
    let mut out = vec![0.0; vals.len()];
    let mut tail = CompensatedSum::default();
    for i in (0..vals.len()).rev() {
        out[i] = (0.5 * vals[i] + tail.value()) / sum;
        tail.add(vals[i]);
    }
    Ok(Density::from_vec_unchecked(*u.grid(), out))
}

/// Cumulative hazard `H_i = ∫₀^{a_i} μ` with the half-cell convention.
pub(crate) fn cumulative_hazard(grid: &AgeGrid, mortality: &[f64]) -> Vec<f64> {
    let h = grid.width();
    let mut acc = 0.0;
    mortality
        .iter()
        .map(|&m| {
            let value = h * (acc + 0.5 * m);
            acc += m;
            value
        })
        .collect()
}

/// Survival `π(a) = exp(-∫₀ᵃ μ)` from a mortality profile.
pub fn survival_from_mortality(mortality: &Density) -> Density {
    let hazard = cumulative_hazard(mortality.grid(), mortality.values());
    Density::from_vec_unchecked(
        *mortality.grid(),
        hazard.into_iter().map(|x| (-x).exp()).collect(),
    )
}

/// Survival `π(a) = exp(-∫₀ᵃ μ(r, q(r)) dr)` for an environment profile `q`.
pub fn survival(q: &Density, mu: &RateFunction) -> Result<Density> {
    let grid = *q.grid();
    let mortality = grid
        .nodes()
        .zip(q.values())
        .map(|(a, &x)| mu.eval(a, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(survival_from_mortality(&Density::from_vec_unchecked(
        grid, mortality,
    )))
}

/// Mortality and fertility felt by individuals in the environment set by `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct VitalProfiles {
    pub mortality: Density,
    pub fertility: Density,
}

fn profiles_at(
    grid: AgeGrid,
    rates: &VitalRates,
    mu_env: impl Fn(usize) -> f64,
    beta_env: f64,
) -> Result<VitalProfiles> {
    let mut mortality = Vec::with_capacity(grid.len());
    let mut fertility = Vec::with_capacity(grid.len());
    for (i, a) in grid.nodes().enumerate() {
        mortality.push(rates.mu.eval(a, mu_env(i))?);
        fertility.push(rates.beta.eval(a, beta_env)?);
    }
    Ok(VitalProfiles {
        mortality: Density::from_vec_unchecked(grid, mortality),
        fertility: Density::from_vec_unchecked(grid, fertility),
    })
}

/// `μ(a, E_μ(u)(a))` and `β(a, E_β(u))` for the model kind.
pub fn environment_profiles(u: &Density, rates: &VitalRates) -> Result<VitalProfiles> {
    let grid = *u.grid();
    match rates.kind {
        ModelKind::Hierarchic => {
            let q = f1_hierarchy(u)?;
            let total = f2_total(u);
            profiles_at(grid, rates, |i| q.values()[i], total)
        }
        ModelKind::GurtinMccamy => {
            let total = f2_total(u);
            profiles_at(grid, rates, |_| total, total)
        }
        ModelKind::Linear => extinction_profiles(grid, rates),
    }
}

/// Both rates evaluated in the extinction environment (all feedback at 0).
pub fn extinction_profiles(grid: AgeGrid, rates: &VitalRates) -> Result<VitalProfiles> {
    profiles_at(grid, rates, |_| 0.0, 0.0)
}
