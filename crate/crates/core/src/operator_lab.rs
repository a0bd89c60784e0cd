//! Finite-dimensional boundary perturbation.
//!
//! First-order upwind in age with implicit mortality gives the generator
//!
//! ```text
//! (B_h p)_i = (p_{i-1} - p_i)/h - μ_i p_i,      p_{-1} = Φ_h(p)/h · h = Σ_j φ_j p_j / h,
//! ```
//!
//! where the ghost inflow `Φ_h(p) = h Σ β_j p_j` carries the birth law. Zero
//! inflow gives the lower-bidiagonal `B̂_h`; the birth law is exactly the
//! rank-one term `b φᵀ` with `b = e₀ / h` and `φ_j = h β_j`.

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{environment_profiles, AgeGrid, Density, ModelKind, Monotonicity, Scenario};

const POWER_MAX_ITER: usize = 100_000;
const PLAIN_ITER: usize = 5_000;
const PLAIN_WINDOW: usize = 50;
const PLAIN_PROJECTED_MAX: f64 = 500.0;
const POWER_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GeneratorKind {
    /// `B_h`, with the birth law.
    Full,
    /// `B̂_h`, zero inflow at `a = 0`.
    Homogeneous,
}

/// Lower-bidiagonal transport part plus (for `Full`) a dense first row.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGenerator {
    grid: AgeGrid,
    kind: GeneratorKind,
    diagonal: Vec<f64>,
    subdiagonal: f64,
    /// Inflow coefficients added to row 0; empty for `Homogeneous`.
    first_row: Vec<f64>,
}

/// `b φᵀ` with `b = e₀ / h`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneBoundary {
    /// The single nonzero entry `b₀ = 1/h`.
    pub b0: f64,
    /// `φ_j = h β_j`.
    pub phi: Vec<f64>,
    /// `β_j`.
    pub fertility: Vec<f64>,
}

impl RankOneBoundary {
    pub fn b(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.phi.len()];
        b[0] = self.b0;
        b
    }
}

impl DiscreteGenerator {
    pub fn grid(&self) -> &AgeGrid {
        &self.grid
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn subdiagonal(&self) -> f64 {
        self.subdiagonal
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let mut v = 0.0;
        if i == j {
            v = self.diagonal[i];
        } else if i == j + 1 {
            v = self.subdiagonal;
        }
        if i == 0 && !self.first_row.is_empty() {
            v += self.first_row[j];
        }
        v
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    /// `y = (B + shift·I) x` in O(n).
    fn apply_shifted(&self, shift: f64, x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in (1..n).rev() {
            y[i] = (self.diagonal[i] + shift) * x[i] + self.subdiagonal * x[i - 1];
        }
        let inflow: f64 = self.first_row.iter().zip(x).map(|(c, v)| c * v).sum();
        y[0] = (self.diagonal[0] + shift) * x[0] + inflow;
    }

    /// `y = (τI - B)⁻¹ x` by Sherman-Morrison on the bidiagonal part; `None`
    /// unless the inverse is nonnegative, i.e. `τ` lies above the dominant
    /// eigenvalue.
    fn apply_resolvent(&self, tau: f64, x: &[f64], y: &mut [f64]) -> Option<()> {
        let n = x.len();
        let solve = |rhs: &dyn Fn(usize) -> f64, out: &mut [f64]| -> Option<()> {
            let mut prev = 0.0;
            for i in 0..n {
                let d = tau - self.diagonal[i];
                if !(d > 0.0) {
                    return None;
                }
                prev = (rhs(i) + self.subdiagonal * prev) / d;
                out[i] = prev;
            }
            Some(())
        };
        let mut z = vec![0.0; n];
        solve(&|i| if i == 0 { 1.0 } else { 0.0 }, &mut z)?;
        solve(&|i| x[i], y)?;
        let c_z: f64 = self.first_row.iter().zip(&z).map(|(c, v)| c * v).sum();
        let denominator = 1.0 - c_z;
        if !(denominator > 0.0) {
            return None;
        }
        let c_y: f64 = self
            .first_row
            .iter()
            .zip(y.iter())
            .map(|(c, v)| c * v)
            .sum();
        let factor = c_y / denominator;
        for (yi, zi) in y.iter_mut().zip(&z) {
            *yi += factor * zi;
        }
        Some(())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_shifted(0.0, x, &mut y);
        y
    }

    /// Row-major text dump: a comment header, then one row per line.
    pub fn dump(&self) -> String {
        let n = self.dim();
        let mut out = format!(
            "# {:?} generator n={} h={:e}\n",
            self.kind,
            n,
            self.grid.width()
        );
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:e}", self.entry(i, j))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn transport_part(grid: AgeGrid, mortality: &[f64]) -> (Vec<f64>, f64) {
    let inv_h = 1.0 / grid.width();
    (mortality.iter().map(|m| -inv_h - m).collect(), inv_h)
}

/// `B̂_h` and the rank-one boundary term for the environment `u`.
pub fn assemble_split(
    u: &Density,
    scenario: &Scenario,
) -> Result<(DiscreteGenerator, RankOneBoundary)> {
    let profiles = environment_profiles(u, &scenario.rates)?;
    Ok(split_from_profiles(
        *u.grid(),
        profiles.mortality.values(),
        profiles.fertility.values(),
    ))
}

pub fn split_from_profiles(
    grid: AgeGrid,
    mortality: &[f64],
    fertility: &[f64],
) -> (DiscreteGenerator, RankOneBoundary) {
    let (diagonal, inv_h) = transport_part(grid, mortality);
    let h = grid.width();
    let hat = DiscreteGenerator {
        grid,
        kind: GeneratorKind::Homogeneous,
        diagonal,
        subdiagonal: inv_h,
        first_row: Vec::new(),
    };
    let boundary = RankOneBoundary {
        b0: inv_h,
        phi: fertility.iter().map(|b| h * b).collect(),
        fertility: fertility.to_vec(),
    };
    (hat, boundary)
}

/// `B_h` assembled directly from the ghost-cell inflow `Φ_h(p) / h`.
pub fn assemble_full(u: &Density, scenario: &Scenario) -> Result<DiscreteGenerator> {
    let profiles = environment_profiles(u, &scenario.rates)?;
    Ok(full_from_profiles(
        *u.grid(),
        profiles.mortality.values(),
        profiles.fertility.values(),
    ))
}

pub fn full_from_profiles(
    grid: AgeGrid,
    mortality: &[f64],
    fertility: &[f64],
) -> DiscreteGenerator {
    let (diagonal, inv_h) = transport_part(grid, mortality);
    let h = grid.width();
    // Φ_h(p) = Σ_j (h β_j) p_j enters row 0 scaled by 1/h
    let first_row = fertility.iter().map(|b| (h * b) * inv_h).collect();
    DiscreteGenerator {
        grid,
        kind: GeneratorKind::Full,
        diagonal,
        subdiagonal: inv_h,
        first_row,
    }
}

/// Largest entrywise deviation of `B_h` from `B̂_h + b φᵀ`, in units of the
/// last place of the larger operand.
pub fn split_reconstruction_ulps(
    full: &DiscreteGenerator,
    hat: &DiscreteGenerator,
    boundary: &RankOneBoundary,
) -> f64 {
    let n = full.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let rank_one = if i == 0 {
                boundary.b0 * boundary.phi[j]
            } else {
                0.0
            };
            let h_ij = hat.entry(i, j);
            let reconstructed = h_ij + rank_one;
            let direct = full.entry(i, j);
            let diff = (direct - reconstructed).abs();
            if diff == 0.0 {
                continue;
            }
            let scale = h_ij.abs().max(rank_one.abs()).max(direct.abs());
            worst = worst.max(diff / ulp(scale));
        }
    }
    worst
}

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        f64::from_bits(1)
    } else {
        f64::from_bits(x.to_bits() + 1) - x
    }
}

/// `w = -B̂_h⁻¹ b` by forward substitution: the implicit-Euler survival
/// `w_0 = 1/(1 + hμ_0)`, `w_i = w_{i-1}/(1 + hμ_i)`.
pub fn discrete_survival(hat: &DiscreteGenerator, boundary: &RankOneBoundary) -> Vec<f64> {
    let n = hat.dim();
    let mut w = vec![0.0; n];
    w[0] = -boundary.b0 / hat.diagonal[0];
    for i in 1..n {
        w[i] = -hat.subdiagonal * w[i - 1] / hat.diagonal[i];
    }
    debug_assert!(w.iter().all(|v| *v <= 1.0 + 1e-15));
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenReport {
    /// Dominant eigenvalue of `B_h`.
    pub dominant: f64,
    /// `φᵀ w`, the only nonzero eigenvalue of `-b φᵀ B̂_h⁻¹`.
    pub nonzero_rank_one_eig: f64,
    /// `h Σ β_i w_i`.
    pub discrete_r: f64,
    /// `‖B_h v - dominant·v‖₁ / ‖v‖₁` for the Perron vector `v`.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankOneSpectrum {
    pub nonzero_rank_one_eig: f64,
    pub discrete_r: f64,
}

pub fn rank_one_spectrum(hat: &DiscreteGenerator, boundary: &RankOneBoundary) -> RankOneSpectrum {
    let w = discrete_survival(hat, boundary);
    let eig: f64 = boundary.phi.iter().zip(&w).map(|(p, wi)| p * wi).sum();
    let h = hat.grid.width();
    let discrete_r = h * boundary
        .fertility
        .iter()
        .zip(&w)
        .map(|(b, wi)| b * wi)
        .sum::<f64>();
    RankOneSpectrum {
        nonzero_rank_one_eig: eig,
        discrete_r,
    }
}

/// The dense matrix `-b φᵀ B̂_h⁻¹`.
pub fn rank_one_operator(hat: &DiscreteGenerator, boundary: &RankOneBoundary) -> DMatrix<f64> {
    let n = hat.dim();
    // ψᵀ = φᵀ B̂⁻¹  ⇔  B̂ᵀ ψ = φ, upper bidiagonal back substitution
    let mut psi = vec![0.0; n];
    psi[n - 1] = boundary.phi[n - 1] / hat.diagonal[n - 1];
    for i in (0..n - 1).rev() {
        psi[i] = (boundary.phi[i] - hat.subdiagonal * psi[i + 1]) / hat.diagonal[i];
    }
    DMatrix::from_fn(
        n,
        n,
        |i, j| if i == 0 { -boundary.b0 * psi[j] } else { 0.0 },
    )
}

/// Eigenvalues of a small dense matrix via the real Schur form.
pub fn dense_eigenvalues(matrix: &DMatrix<f64>) -> Vec<Complex<f64>> {
    matrix
        .clone()
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronEstimate {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Dominant eigenvalue of `B_h` by power iteration on the nonnegative
/// matrix `B_h + σI`, `σ = 1/h + max_i μ_i`.
///
/// Iterates until the Collatz-Wielandt bounds `min_i (Ax)_i/x_i ≤ ρ ≤
/// max_i (Ax)_i/x_i` agree to a relative `1e-12`. When the subdominant
/// moduli crowd the Perron root the iteration moves on to the resolvent
/// `(τI - B_h)⁻¹`, again nonnegative, with `τ` just above the current upper
/// bound. Without inflow the matrix is triangular and the diagonal is
/// returned directly.
pub fn dominant_eigenvalue(generator: &DiscreteGenerator) -> Result<f64> {
    Ok(perron(generator)?.value)
}

/// Collatz-Wielandt bounds of `y = Mx` against `x`.
fn cw_bounds(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for (yi, xi) in y.iter().zip(x) {
        if *xi > 0.0 {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

fn renormalize(x: &mut [f64], y: &[f64]) -> bool {
    let norm: f64 = y.iter().sum();
    if !(norm > 0.0) {
        return false;
    }
    for (xi, yi) in x.iter_mut().zip(y) {
        *xi = yi / norm;
    }
    true
}

pub fn perron(generator: &DiscreteGenerator) -> Result<PerronEstimate> {
    perron_with_budget(generator, PLAIN_ITER)
}

fn perron_with_budget(generator: &DiscreteGenerator, plain_iter: usize) -> Result<PerronEstimate> {
    let n = generator.dim();
    if n == 1 {
        return Ok(PerronEstimate {
            value: generator.entry(0, 0),
            vector: vec![1.0],
            iterations: 0,
        });
    }
    if generator.first_row.iter().all(|&c| c == 0.0) {
        let (idx, value) = generator
            .diagonal
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let mut vector = vec![0.0; n];
        vector[idx] = 1.0;
        return Ok(PerronEstimate {
            value,
            vector,
            iterations: 0,
        });
    }
    let max_mu = generator
        .diagonal
        .iter()
        .map(|d| -d - generator.subdiagonal)
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = generator.subdiagonal + max_mu;
    let abs_tol = |scale: f64| POWER_REL_TOL * scale;
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut upper = f64::INFINITY;
    let mut estimate = f64::NAN;
    let mut checkpoint = f64::INFINITY;
    let mut plain_done = plain_iter;
    for iter in 1..=plain_iter {
        generator.apply_shifted(shift, &x, &mut y);
        let (lo, hi) = cw_bounds(&x, &y);
        estimate = y.iter().sum::<f64>() / x.iter().sum::<f64>() - shift;
        upper = upper.min(hi - shift);
        if !renormalize(&mut x, &y) {
            plain_done = iter;
            break;
        }
        let width = hi - lo;
        if lo.is_finite() && width <= abs_tol(hi) {
            return Ok(PerronEstimate {
                value: 0.5 * (lo + hi) - shift,
                vector: x,
                iterations: iter,
            });
        }
        if iter % PLAIN_WINDOW == 0 {
            // projected steps left at the contraction rate of the last window
            let rate = (width / checkpoint).powf(1.0 / PLAIN_WINDOW as f64);
            let remaining = (abs_tol(hi) / width).ln() / rate.ln();
            checkpoint = width;
            if width.is_finite() && !(rate < 1.0 && remaining <= PLAIN_PROJECTED_MAX) {
                plain_done = iter;
                break;
            }
        }
    }

    // inverse phase: Perron value of (τ - B)⁻¹ is 1/(τ - d)
    let scale = shift + upper.abs();
    let mut tau = upper + 1e-6 * scale;
    let mut lower = f64::NEG_INFINITY;
    let mut iterations = plain_done;
    let mut stalled = 0;
    while iterations < POWER_MAX_ITER {
        iterations += 1;
        if generator.apply_resolvent(tau, &x, &mut y).is_none() {
            tau = upper + 2.0 * (tau - upper).max(abs_tol(scale));
            continue;
        }
        let (lo, hi) = cw_bounds(&x, &y);
        if !(lo > 0.0) || !hi.is_finite() {
            stalled += 1;
            if stalled > 50 {
                break;
            }
            continue;
        }
        // lo ≤ 1/(τ - d) ≤ hi
        let d_lo = tau - 1.0 / lo;
        let d_hi = tau - 1.0 / hi;
        lower = lower.max(d_lo);
        upper = upper.min(d_hi);
        estimate = 0.5 * (lower + upper);
        renormalize(&mut x, &y);
        if upper - lower <= abs_tol(scale) {
            return Ok(PerronEstimate {
                value: estimate,
                vector: x,
                iterations,
            });
        }
        // tighten the shift while staying strictly above the root
        let gap = upper - lower;
        tau = upper + gap.max(abs_tol(scale));
    }
    Err(Error::ConvergenceFailure {
        iterations,
        estimate,
    })
}

/// Dominant eigenvalue, rank-one spectrum and the eigen-residual for `u`.
pub fn eigen_report(u: &Density, scenario: &Scenario) -> Result<EigenReport> {
    let (hat, boundary) = assemble_split(u, scenario)?;
    let full = assemble_full(u, scenario)?;
    let rank_one = rank_one_spectrum(&hat, &boundary);
    let perron = perron(&full)?;
    let bv = full.apply(&perron.vector);
    let norm: f64 = perron.vector.iter().map(|v| v.abs()).sum();
    let residual: f64 = bv
        .iter()
        .zip(&perron.vector)
        .map(|(b, v)| (b - perron.value * v).abs())
        .sum();
    Ok(EigenReport {
        dominant: perron.value,
        nonzero_rank_one_eig: rank_one.nonzero_rank_one_eig,
        discrete_r: rank_one.discrete_r,
        residual_norm: residual / norm,
    })
}

/// Spectral bounds of `B_h(α u)` along the ray, checked for strict
/// monotonicity in the direction implied by the declared monotonicity of
/// `β` (decreasing `β` ⇒ decreasing bound).
pub fn ray_monotonicity_scan(u: &Density, alphas: &[f64], scenario: &Scenario) -> Result<Vec<f64>> {
    if alphas.iter().any(|&a| !(a > 0.0)) || alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidScenario(
            "ray scan needs strictly increasing positive scale factors".into(),
        ));
    }
    let results: Vec<(DiscreteGenerator, f64)> = alphas
        .par_iter()
        .map(|&alpha| {
            let scaled = u.scaled(alpha);
            let (hat, _) = assemble_split(&scaled, scenario)?;
            let full = assemble_full(&scaled, scenario)?;
            Ok((hat, dominant_eigenvalue(&full)?))
        })
        .collect::<Result<_>>()?;
    let increasing = scenario.rates.beta_monotonicity == Monotonicity::Increasing;
    for (k, pair) in results.windows(2).enumerate() {
        let (s1, s2) = (pair[0].1, pair[1].1);
        let strict = if increasing { s1 < s2 } else { s1 > s2 };
        if !strict {
            return Err(Error::MonotonicityViolation {
                alpha_1: alphas[k],
                alpha_2: alphas[k + 1],
                bound_1: s1,
                bound_2: s2,
            });
        }
        if scenario.rates.kind == ModelKind::Hierarchic && pair[0].0 != pair[1].0 {
            return Err(Error::RayInvariance {
                alpha_1: alphas[k],
                alpha_2: alphas[k + 1],
            });
        }
    }
    Ok(results.into_iter().map(|(_, s)| s).collect())
}

/// Dense resolvent `(λI - B_h)⁻¹` via Sherman-Morrison on `λI - B̂_h - bφᵀ`.
pub fn resolvent_matrix(
    hat: &DiscreteGenerator,
    boundary: &RankOneBoundary,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    let n = hat.dim();
    // T = λI - B̂_h is lower bidiagonal: diag λ - d_i, sub -1/h
    let t_diag: Vec<f64> = hat.diagonal.iter().map(|d| lambda - d).collect();
    let t_sub = -hat.subdiagonal;
    let mut t_inv = DMatrix::zeros(n, n);
    for j in 0..n {
        t_inv[(j, j)] = 1.0 / t_diag[j];
        for i in j + 1..n {
            t_inv[(i, j)] = -t_sub * t_inv[(i - 1, j)] / t_diag[i];
        }
    }
    // T⁻¹ b is b₀ times the first column
    let t_inv_b: Vec<f64> = (0..n).map(|i| boundary.b0 * t_inv[(i, 0)]).collect();
    let denominator = 1.0
        - boundary
            .phi
            .iter()
            .zip(&t_inv_b)
            .map(|(p, v)| p * v)
            .sum::<f64>();
    if denominator.abs() <= 1e-12 {
        return Err(Error::SingularResolvent {
            lambda,
            denominator,
        });
    }
    let phi_t_inv: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| boundary.phi[i] * t_inv[(i, j)]).sum())
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        t_inv[(i, j)] + t_inv_b[i] * phi_t_inv[j] / denominator
    }))
}
