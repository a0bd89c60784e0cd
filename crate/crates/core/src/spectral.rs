//! Spectral quantities of the linear generator `B_u` in a frozen environment.
//!
//! The spectral bound is the unique real root of the characteristic equation
//!
//! ```text
//! K(u, λ) = ∫₀ᵐ β(a, F₂(u)) exp(-∫₀ᵃ (λ + μ(r, F₁(u)(r))) dr) da = 1,
//! ```
//!
//! and the net reproduction functional is `R(u) = K(u, 0)`. `K` is strictly
//! decreasing in `λ` as long as the fertility profile is not identically zero,
//! so the root is bracketed and bisected.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    cumulative_hazard, environment_profiles, extinction_profiles, AgeGrid, Density, Scenario,
    VitalProfiles,
};

const LAMBDA_LIMIT: f64 = 1e6;
const MAX_BISECTIONS: usize = 200;
const SIGN_GAP_R: f64 = 1e-6;
const SIGN_GAP_S: f64 = 1e-8;
const RESOLVENT_GAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralReport {
    pub spectral_bound: f64,
    pub net_reproduction: f64,
    /// Whether `sign(s) = sign(R - 1)`; vacuously true near the thresholds.
    pub sign_consistent: bool,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// `sign(s) = sign(R - 1)` unless either is within its threshold band.
pub fn signs_agree(spectral_bound: f64, net_reproduction: f64) -> bool {
    if (net_reproduction - 1.0).abs() <= SIGN_GAP_R || spectral_bound.abs() <= SIGN_GAP_S {
        return true;
    }
    (spectral_bound > 0.0) == (net_reproduction > 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub root: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// The characteristic function of one frozen environment.
///
/// Stores the fertility profile and cumulative hazard so repeated `K(λ)`
/// evaluations cost one exponential per cell.
#[derive(Debug, Clone)]
pub struct Characteristic {
    grid: AgeGrid,
    fertility: Vec<f64>,
    mortality: Vec<f64>,
    hazard: Vec<f64>,
}

impl Characteristic {
    pub fn from_profiles(profiles: VitalProfiles) -> Self {
        let grid = *profiles.mortality.grid();
        let mortality = profiles.mortality.into_values();
        let hazard = cumulative_hazard(&grid, &mortality);
        Self {
            grid,
            fertility: profiles.fertility.into_values(),
            mortality,
            hazard,
        }
    }

    pub fn new(u: &Density, scenario: &Scenario) -> Result<Self> {
        Ok(Self::from_profiles(environment_profiles(
            u,
            &scenario.rates,
        )?))
    }

    /// The extinction environment `u = 0`.
    pub fn extinction(scenario: &Scenario) -> Result<Self> {
        Ok(Self::from_profiles(extinction_profiles(
            scenario.grid,
            &scenario.rates,
        )?))
    }

    pub fn grid(&self) -> &AgeGrid {
        &self.grid
    }

    pub fn fertility(&self) -> &[f64] {
        &self.fertility
    }

    pub fn mortality(&self) -> &[f64] {
        &self.mortality
    }

    /// `∫₀^{a_i} μ` at every midpoint.
    pub fn hazard(&self) -> &[f64] {
        &self.hazard
    }

    pub fn survival(&self) -> Density {
        Density::from_vec_unchecked(self.grid, self.hazard.iter().map(|x| (-x).exp()).collect())
    }

    /// `K(λ) = h Σ β_i exp(-λ a_i - H_i)`.
    pub fn k(&self, lambda: f64) -> f64 {
        let h = self.grid.width();
        let sum: f64 = self
            .fertility
            .iter()
            .zip(&self.hazard)
            .enumerate()
            .filter(|(_, (&b, _))| b != 0.0)
            .map(|(i, (&b, &hz))| b * (-lambda * self.grid.node(i) - hz).exp())
            .sum();
        h * sum
    }

    /// `∂K/∂λ = -h Σ a_i β_i exp(-λ a_i - H_i)`.
    pub fn k_derivative(&self, lambda: f64) -> f64 {
        let h = self.grid.width();
        let sum: f64 = self
            .fertility
            .iter()
            .zip(&self.hazard)
            .enumerate()
            .filter(|(_, (&b, _))| b != 0.0)
            .map(|(i, (&b, &hz))| {
                let a = self.grid.node(i);
                a * b * (-lambda * a - hz).exp()
            })
            .sum();
        -h * sum
    }

    pub fn net_reproduction(&self) -> f64 {
        self.k(0.0)
    }

    /// Whether fertility is positive in the oldest cell (irreducibility).
    pub fn fertile_at_max_age(&self) -> bool {
        self.fertility.last().is_some_and(|&b| b > 0.0)
    }

    /// Real root of `K(λ) = 1`: bracket doubling from `[-1, 1]`, then bisection.
    pub fn spectral_bound(&self) -> Result<RootBracket> {
        if self.fertility.iter().all(|&b| b == 0.0) {
            return Err(Error::ZeroFertility);
        }
        let g = |lambda: f64| self.k(lambda) - 1.0;
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let mut iterations = 0;
        while g(hi) >= 0.0 {
            lo = hi;
            hi *= 2.0;
            iterations += 1;
            if hi > LAMBDA_LIMIT {
                return Err(Error::BracketFailure {
                    lo,
                    hi,
                    limit: LAMBDA_LIMIT,
                });
            }
        }
        while g(lo) <= 0.0 {
            hi = lo;
            lo *= 2.0;
            iterations += 1;
            if lo < -LAMBDA_LIMIT {
                return Err(Error::BracketFailure {
                    lo,
                    hi,
                    limit: LAMBDA_LIMIT,
                });
            }
        }
        let bracket = (lo, hi);
        let mut bisections = 0;
        while bisections < MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-12 * mid.abs().max(1.0) || mid <= lo || mid >= hi {
                break;
            }
            let value = g(mid);
            if value == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if value > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            bisections += 1;
        }
        let root = [lo, hi, 0.5 * (lo + hi)]
            .into_iter()
            .min_by(|x, y| g(*x).abs().total_cmp(&g(*y).abs()))
            .unwrap_or(lo);
        Ok(RootBracket {
            root,
            bracket,
            iterations: iterations + bisections,
        })
    }

    pub fn report(&self) -> Result<SpectralReport> {
        let root = self.spectral_bound()?;
        let net_reproduction = self.net_reproduction();
        Ok(SpectralReport {
            spectral_bound: root.root,
            net_reproduction,
            sign_consistent: signs_agree(root.root, net_reproduction),
            bracket: root.bracket,
            iterations: root.iterations,
        })
    }

    /// `g = (λ - B_u)⁻¹ f` by the explicit variation-of-constants formula:
    ///
    /// ```text
    /// g(a) = c e^{-Λ(a)} + w(a),   w(a) = ∫₀ᵃ f(x) e^{-(Λ(a) - Λ(x))} dx,
    /// c = ∫ β w / (1 - K(λ)),       Λ(a) = ∫₀ᵃ (λ + μ).
    /// ```
    pub fn resolvent_apply(&self, lambda: f64, f: &Density) -> Result<Density> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let denominator = 1.0 - self.k(lambda);
        if denominator.abs() <= RESOLVENT_GAP {
            return Err(Error::SingularResolvent {
                lambda,
                denominator,
            });
        }
        let h = self.grid.width();
        let n = self.grid.len();
        // Λ at midpoints shares the hazard array
        let big_lambda: Vec<f64> = (0..n)
            .map(|i| lambda * self.grid.node(i) + self.hazard[i])
            .collect();
        let fv = f.values();
        let mut w = vec![0.0; n];
        // carry = Σ_{j<i} f_j e^{-(Λ_i - Λ_j)}
        let mut carry = 0.0;
        for i in 0..n {
            if i > 0 {
                carry = (carry + fv[i - 1]) * (big_lambda[i - 1] - big_lambda[i]).exp();
            }
            w[i] = h * (carry + 0.5 * fv[i]);
        }
        let birth: f64 = h * self
            .fertility
            .iter()
            .zip(&w)
            .map(|(b, wi)| b * wi)
            .sum::<f64>();
        let c = birth / denominator;
        let g = w
            .iter()
            .zip(&big_lambda)
            .map(|(wi, l)| c * (-l).exp() + wi)
            .collect::<Vec<_>>();
        Density::new(self.grid, g)
    }
}

/// `K(u, λ)`.
pub fn characteristic_k(u: &Density, lambda: f64, scenario: &Scenario) -> Result<f64> {
    Ok(Characteristic::new(u, scenario)?.k(lambda))
}

/// Spectral bound `s(B_u)` together with `R(u)`.
pub fn spectral_bound(u: &Density, scenario: &Scenario) -> Result<SpectralReport> {
    Characteristic::new(u, scenario)?.report()
}

/// `s(B_0)` of the extinction environment.
pub fn spectral_bound_extinction(scenario: &Scenario) -> Result<SpectralReport> {
    Characteristic::extinction(scenario)?.report()
}

/// `R(u) = K(u, 0)`.
pub fn net_reproduction(u: &Density, scenario: &Scenario) -> Result<f64> {
    Ok(Characteristic::new(u, scenario)?.net_reproduction())
}

/// `R(0) = ∫₀ᵐ β(a, 0) exp(-∫₀ᵃ μ(r, 0) dr) da`.
pub fn net_reproduction_extinction(scenario: &Scenario) -> Result<f64> {
    Ok(Characteristic::extinction(scenario)?.net_reproduction())
}

pub fn resolvent_apply(
    u: &Density,
    lambda: f64,
    f: &Density,
    scenario: &Scenario,
) -> Result<Density> {
    Characteristic::new(u, scenario)?.resolvent_apply(lambda, f)
}

/// Residuals of `(λ - B_u) g = f` on the grid, each scaled to be
/// dimensionless:
///
/// * `equation`: `‖λg + g' + μg - f‖₁ / (‖f‖₁ + |λ|‖g‖₁ + ‖μg‖₁)` with central
///   differences for `g'` on interior cells,
/// * `boundary`: `|g(0⁺) - ∫βg| / max(‖g‖_∞, ∫|βg|)` with `g(0⁺)` linearly
///   extrapolated from the first two midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventResidual {
    pub equation: f64,
    pub boundary: f64,
}

pub fn resolvent_residual(
    characteristic: &Characteristic,
    lambda: f64,
    f: &Density,
    g: &Density,
) -> ResolventResidual {
    let grid = characteristic.grid();
    let h = grid.width();
    let n = grid.len();
    let (gv, fv, mu) = (g.values(), f.values(), characteristic.mortality());
    let mut res = 0.0;
    let mut scale = 0.0;
    for i in 1..n.saturating_sub(1) {
        let dg = (gv[i + 1] - gv[i - 1]) / (2.0 * h);
        res += (lambda * gv[i] + dg + mu[i] * gv[i] - fv[i]).abs();
        scale += fv[i].abs() + (lambda * gv[i]).abs() + (mu[i] * gv[i]).abs();
    }
    let g0 = if n >= 2 {
        1.5 * gv[0] - 0.5 * gv[1]
    } else {
        gv[0]
    };
    let births: f64 = h * characteristic
        .fertility()
        .iter()
        .zip(gv)
        .map(|(b, x)| b * x)
        .sum::<f64>();
    let births_abs: f64 = h * characteristic
        .fertility()
        .iter()
        .zip(gv)
        .map(|(b, x)| (b * x).abs())
        .sum::<f64>();
    let sup = gv.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let bscale = sup.max(births_abs);
    ResolventResidual {
        equation: if scale > 0.0 { res / scale } else { 0.0 },
        boundary: if bscale > 0.0 {
            (g0 - births).abs() / bscale
        } else {
            0.0
        },
    }
}
