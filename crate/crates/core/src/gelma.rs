//! Weighted ℓ1 recovery with a noise collector.
//!
//! Solves
//!
//! ```text
//! min τ‖χ‖₁ + ‖η‖₁   subject to   T χ + C η = d
//! ```
//!
//! through the saddle point of
//! `λ(τ‖χ‖₁ + ‖η‖₁) + ½‖Tχ + Cη − d‖² + ⟨z, d − Tχ − Cη⟩`, iterating
//!
//! ```text
//! r     = d − T χ_k − C η_k
//! χ_k+1 = S_{τλΔt₁}(χ_k + Δt₁ T*(z_k + r))
//! η_k+1 = S_{λΔt₁}(η_k + Δt₁ C*(z_k + r))
//! z_k+1 = z_k + Δt₂ r
//! ```
//!
//! from zero. The fixed point solves the constrained problem for every
//! `λ > 0`; `λ` and the step sizes only affect the speed of convergence.

use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationSystem;
use crate::error::{check_len, Error, Result};
use crate::operator::{norm_estimate, HStack, LinearOperator};
use crate::rng::{derive_seed, rng_from_seed, unit_complex_gaussian_vec};
use crate::{linalg, C64};

/// Complex soft thresholding: shrinks `|y|` by `r`, keeping the phase.
pub fn soft_threshold(y: C64, r: f64) -> C64 {
    // Compared in squares: most entries of a collector iterate are cut.
    let m2 = y.norm_sqr();
    if m2 <= r * r {
        C64::default()
    } else {
        let m = m2.sqrt();
        y * ((m - r) / m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub dt1: f64,
    pub dt2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// No-phantom weight on `‖χ‖₁`.
    pub tau: f64,
    pub lambda: f64,
    /// Fixed step sizes; estimated from operator norms when absent.
    pub step_sizes: Option<StepSizes>,
    pub step_safety: f64,
    pub power_iterations: usize,
    pub power_tol: f64,
    pub power_seed: u64,
    pub max_iterations: usize,
    /// Relative iterate change regarded as stagnation.
    pub tol_rel: f64,
    /// Consecutive stagnant iterations required to stop.
    pub window: usize,
    /// Required `‖r‖₂ / ‖d‖₂` at the stopping point.
    pub residual_tol: f64,
    /// Support is `{k : |χ_k| > θ ‖χ‖_∞}`.
    pub support_threshold: f64,
    /// Solve for `d / ‖d‖₂` and scale the result back.
    pub normalize_data: bool,
    /// Record a history row every this many iterations (0 disables).
    pub history_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            lambda: 1.0,
            step_sizes: None,
            step_safety: 0.9,
            power_iterations: 50,
            power_tol: 1e-3,
            power_seed: 0x5eed,
            max_iterations: 20_000,
            tol_rel: 1e-8,
            window: 50,
            residual_tol: 1e-6,
            support_threshold: 1e-3,
            normalize_data: true,
            history_stride: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::domain("tau and lambda must be positive"));
        }
        if !(self.support_threshold > 0.0 && self.support_threshold < 1.0) {
            return Err(Error::domain("support threshold must lie in (0, 1)"));
        }
        if !(self.step_safety > 0.0 && self.step_safety < 1.0) {
            return Err(Error::domain("step safety factor must lie in (0, 1)"));
        }
        if let Some(s) = self.step_sizes {
            if !(s.dt1 > 0.0 && s.dt2 > 0.0) {
                return Err(Error::domain("step sizes must be positive"));
            }
        }
        Ok(())
    }
}

/// Step sizes from power-iteration estimates of `‖[T | C]‖` and `‖T‖`:
/// `Δt₁ = safety · 2 / ‖[T|C]‖²`, `Δt₂ = safety · λ / ‖T‖`.
pub fn estimate_step_sizes(
    t: &dyn LinearOperator,
    c: &dyn LinearOperator,
    lambda: f64,
    safety: f64,
    cfg: &SolverConfig,
) -> Result<StepSizes> {
    let stacked = HStack { left: t, right: c };
    let seed = cfg.power_seed;
    let sigma_tc = norm_estimate(&stacked, cfg.power_iterations, cfg.power_tol, seed);
    let sigma_t = norm_estimate(t, cfg.power_iterations, cfg.power_tol, derive_seed(seed, &[1]));
    if !(sigma_tc > 0.0) || !(sigma_t > 0.0) {
        return Err(Error::domain("operator norm estimate is zero"));
    }
    Ok(StepSizes {
        dt1: safety * 2.0 / (sigma_tc * sigma_tc),
        dt2: safety * lambda / sigma_t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub residual_norm: f64,
    pub chi_change: f64,
    pub nnz_chi: usize,
}

/// Raw iterates of a run on generic operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub chi: Vec<C64>,
    pub eta: Vec<C64>,
    /// Dual iterate of the normalized problem; `z/λ` certifies optimality.
    pub z: Vec<C64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖r‖₂ / ‖d‖₂` at the last iteration.
    pub relative_residual: f64,
    pub history: Vec<HistoryRow>,
}

/// Runs the iteration on `T χ + C η = d`.
pub fn solve_operators(
    t: &dyn LinearOperator,
    c: &dyn LinearOperator,
    d: &[C64],
    cfg: &SolverConfig,
    steps: StepSizes,
) -> Result<SolverState> {
    cfg.validate()?;
    let n = t.nrows();
    check_len("collector rows", n, c.nrows())?;
    check_len("data", n, d.len())?;
    let (k, sigma) = (t.ncols(), c.ncols());

    let dnorm = linalg::norm2(d);
    let scale = if cfg.normalize_data && dnorm > 0.0 { dnorm } else { 1.0 };
    let d: Vec<C64> = d.iter().map(|v| v / scale).collect();
    let dref = if dnorm > 0.0 { dnorm / scale } else { 1.0 };

    let StepSizes { dt1, dt2 } = steps;
    let thr_chi = cfg.tau * cfg.lambda * dt1;
    let thr_eta = cfg.lambda * dt1;

    let mut chi = vec![C64::default(); k];
    let mut eta = vec![C64::default(); sigma];
    let mut z = vec![C64::default(); n];
    let mut t_chi = vec![C64::default(); n];
    let mut c_eta = vec![C64::default(); n];
    let mut w = vec![C64::default(); n];
    let mut g_chi = vec![C64::default(); k];
    let mut g_eta = vec![C64::default(); sigma];
    let mut history = Vec::new();
    let mut stagnant = 0usize;
    let mut converged = false;
    let mut iterations = 0;
    let mut rel_res = linalg::norm2(&d) / dref;
    let mut chi_nonzero = false;
    let mut eta_nonzero = false;

    for it in 0..cfg.max_iterations {
        // Products of all-zero iterates are skipped.
        if chi_nonzero {
            t.apply(&chi, &mut t_chi);
        } else {
            t_chi.iter_mut().for_each(|v| *v = C64::default());
        }
        if eta_nonzero {
            c.apply(&eta, &mut c_eta);
        } else {
            c_eta.iter_mut().for_each(|v| *v = C64::default());
        }
        let mut res_sq = 0.0;
        for (((wi, zi), di), (a, b)) in w.iter_mut().zip(&z).zip(&d).zip(t_chi.iter().zip(&c_eta)) {
            let r = di - a - b;
            res_sq += r.norm_sqr();
            *wi = zi + r;
        }
        let res = res_sq.sqrt();
        if !res.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                detail: format!("residual norm is {res}"),
            });
        }
        rel_res = res / dref;

        t.apply_adjoint(&w, &mut g_chi);
        c.apply_adjoint(&w, &mut g_eta);

        let mut change_sq = 0.0;
        let mut chi_sq = 0.0;
        let mut nnz = 0;
        for (x, g) in chi.iter_mut().zip(&g_chi) {
            let next = soft_threshold(*x + g * dt1, thr_chi);
            change_sq += (next - *x).norm_sqr();
            chi_sq += next.norm_sqr();
            nnz += usize::from(next != C64::default());
            *x = next;
        }
        chi_nonzero = nnz > 0;
        eta_nonzero = false;
        for (x, g) in eta.iter_mut().zip(&g_eta) {
            *x = soft_threshold(*x + g * dt1, thr_eta);
            eta_nonzero |= *x != C64::default();
        }

        // w - z = r
        for (zi, wi) in z.iter_mut().zip(&w) {
            let r = wi - *zi;
            *zi += r * dt2;
        }
        iterations = it + 1;

        let change = change_sq.sqrt();
        if cfg.history_stride > 0 && it % cfg.history_stride == 0 {
            history.push(HistoryRow {
                iteration: it,
                residual_norm: res * scale,
                chi_change: change * scale,
                nnz_chi: nnz,
            });
        }

        if change <= cfg.tol_rel * chi_sq.sqrt().max(1.0) {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        if stagnant >= cfg.window && rel_res <= cfg.residual_tol {
            converged = true;
            break;
        }
    }

    chi.iter_mut().for_each(|v| *v *= scale);
    eta.iter_mut().for_each(|v| *v *= scale);
    Ok(SolverState {
        chi,
        eta,
        z,
        iterations,
        converged,
        relative_residual: rel_res,
        history,
    })
}

/// `{k : |χ_k| > θ ‖χ‖_∞}`; empty when `χ = 0`.
pub fn support_of(chi: &[C64], threshold: f64) -> Vec<usize> {
    let max = linalg::norm_inf(chi);
    if max == 0.0 {
        return Vec::new();
    }
    chi.iter()
        .enumerate()
        .filter(|(_, v)| v.norm() > threshold * max)
        .map(|(k, _)| k)
        .collect()
}

/// First-stage result on a correlation system.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    /// `χ_τ` in the column scaling of `T`.
    pub chi: Vec<C64>,
    /// `χ_τ,k / s_k`: estimates of `|ρ_k|²`.
    pub amplitudes: Vec<C64>,
    pub support: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub relative_residual: f64,
    pub steps: StepSizes,
    pub tau: f64,
    /// `‖η‖₁`, the mass absorbed by the collector.
    pub collector_l1: f64,
    pub dual: Vec<C64>,
    pub history: Vec<HistoryRow>,
}

pub fn resolve_steps(t: &dyn LinearOperator, c: &dyn LinearOperator, cfg: &SolverConfig) -> Result<StepSizes> {
    match cfg.step_sizes {
        Some(s) => Ok(s),
        None => estimate_step_sizes(t, c, cfg.lambda, cfg.step_safety, cfg),
    }
}

pub fn gelma_solve(
    sys: &CorrelationSystem,
    collector: &dyn LinearOperator,
    cfg: &SolverConfig,
) -> Result<RecoveryReport> {
    let t = sys.matrix();
    let steps = resolve_steps(t, collector, cfg)?;
    let state = solve_operators(t, collector, sys.data(), cfg, steps)?;
    Ok(RecoveryReport {
        support: support_of(&state.chi, cfg.support_threshold),
        amplitudes: sys.from_system_coords(&state.chi),
        collector_l1: linalg::norm1(&state.eta),
        chi: state.chi,
        iterations: state.iterations,
        converged: state.converged,
        relative_residual: state.relative_residual,
        steps,
        tau: cfg.tau,
        dual: state.z,
        history: state.history,
    })
}

/// Outcome of a `τ` calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCalibration {
    pub tau: f64,
    /// Every probed `(τ, χ = 0 on all trials)` pair, in probe order.
    pub probes: Vec<(f64, bool)>,
    pub trials: usize,
}

pub const TAU_GRID_MIN: f64 = 0.5;
pub const TAU_GRID_MAX: f64 = 8.0;
pub const TAU_GRID_STEP: f64 = 0.1;
/// `‖χ‖_∞ / ‖d‖₂` below which a pure-noise solve counts as `χ = 0`.
pub const ZERO_CHI_TOL: f64 = 1e-6;

/// Smallest `τ` on the grid `0.5, 0.6, …, 8.0` for which pure-noise data
/// (unit-norm complex Gaussian `d`) yields `χ = 0` in every trial.
///
/// Bisection assumes the zero verdict is monotone in `τ`.
pub fn calibrate_tau(
    t: &dyn LinearOperator,
    c: &dyn LinearOperator,
    cfg: &SolverConfig,
    trials: usize,
    seed: u64,
) -> Result<TauCalibration> {
    if trials == 0 {
        return Err(Error::domain("calibration needs at least one trial"));
    }
    let steps = resolve_steps(t, c, cfg)?;
    let noise: Vec<Vec<C64>> = (0..trials)
        .map(|i| unit_complex_gaussian_vec(&mut rng_from_seed(derive_seed(seed, &[i as u64])), t.nrows()))
        .collect();
    let grid_len = ((TAU_GRID_MAX - TAU_GRID_MIN) / TAU_GRID_STEP).round() as usize + 1;
    let tau_at = |i: usize| ((TAU_GRID_MIN + i as f64 * TAU_GRID_STEP) * 10.0).round() / 10.0;

    let mut probes = Vec::new();
    let mut zero_at = |i: usize| -> Result<bool> {
        let run_cfg = SolverConfig {
            tau: tau_at(i),
            ..cfg.clone()
        };
        let mut all_zero = true;
        for d in &noise {
            let state = solve_operators(t, c, d, &run_cfg, steps)?;
            if linalg::norm_inf(&state.chi) > ZERO_CHI_TOL {
                all_zero = false;
                break;
            }
        }
        probes.push((tau_at(i), all_zero));
        Ok(all_zero)
    };

    let (mut lo, mut hi) = (0, grid_len - 1);
    if !zero_at(hi)? {
        return Err(Error::CalibrationFailed {
            lo: TAU_GRID_MIN,
            hi: TAU_GRID_MAX,
        });
    }
    if zero_at(lo)? {
        hi = lo;
    } else {
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if zero_at(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    Ok(TauCalibration {
        tau: tau_at(hi),
        probes,
        trials,
    })
}
