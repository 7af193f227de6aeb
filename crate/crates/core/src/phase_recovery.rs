//! Second stage: the full lifted system restricted to a recovered support.
//!
//! On a support `Ŝ` of size `m` the unknowns are the `m²` entries
//! `X[k, l] = ρ_k ρ̄_l`, `k, l ∈ Ŝ`. Sampled row `(i, j)` of the lifted system
//! reads `Σ_{k,l} a[i,k] conj(a[j,l]) X[k,l] = B[i,j]`. The least-squares
//! solution is symmetrized to a Hermitian `X̂` whose leading eigenpair gives
//! `ρ̂` up to a global phase.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::correlation::RowSelection;
use crate::error::{check_len, Error, Result};
use crate::wave_model::MeasurementMatrix;
use crate::C64;

/// Normal-equation condition number above which QR is used instead.
pub const QR_FALLBACK_CONDITION: f64 = 1e8;
/// Normal-equation condition number regarded as numerically singular.
pub const RANK_DEFICIENT_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeastSquaresMethod {
    NormalEquations,
    Qr,
    MinimumNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedLiftedSolution {
    pub support: Vec<usize>,
    /// Hermitian `m × m` estimate of `X` on `Ŝ × Ŝ`.
    pub x_hat: DMatrix<C64>,
    /// Rank-one factor; first entry real and nonnegative.
    pub rho_hat: Vec<C64>,
    pub leading_eigenvalue: f64,
    /// `‖M vec(X̂) − d‖₂` for the symmetrized solution.
    pub residual_norm: f64,
    /// Same residual before symmetrization.
    pub raw_residual_norm: f64,
    /// `max |d_(i,j) − conj(d_(j,i))|` over row pairs sampled in both orders.
    pub conjugate_inconsistency: f64,
    /// Condition number estimate of the normal matrix `M* M`.
    pub condition_estimate: f64,
    pub method: LeastSquaresMethod,
    /// Set when the restricted system is numerically rank deficient.
    pub rank_deficient: bool,
}

impl RestrictedLiftedSolution {
    /// Source amplitudes `α̂_k = ρ̂_k / c_k` on the support.
    pub fn amplitudes(&self, a: &MeasurementMatrix) -> Vec<C64> {
        self.support
            .iter()
            .zip(&self.rho_hat)
            .map(|(&k, r)| r / a.normalizers()[k])
            .collect()
    }
}

fn restricted_matrix(a: &MeasurementMatrix, rows: &RowSelection, support: &[usize]) -> DMatrix<C64> {
    let m = support.len();
    let pairs: Vec<(usize, usize)> = rows.pairs().collect();
    DMatrix::from_fn(pairs.len(), m * m, |r, q| {
        let (i, j) = pairs[r];
        let (kk, l) = (q % m, q / m);
        a.get(i, support[kk]) * a.get(j, support[l]).conj()
    })
}

fn conjugate_inconsistency(rows: &RowSelection, d: &[C64]) -> f64 {
    let n = rows.n();
    let mut worst: f64 = 0.0;
    for (r, &idx) in rows.indices().iter().enumerate() {
        let (i, j) = (idx % n, idx / n);
        if i >= j {
            continue;
        }
        if let Ok(s) = rows.indices().binary_search(&(i * n + j)) {
            worst = worst.max((d[r] - d[s].conj()).norm());
        }
    }
    worst
}

/// Least squares over the `m²` lifted unknowns on `support`.
pub fn solve_restricted(
    a: &MeasurementMatrix,
    d: &[C64],
    rows: &RowSelection,
    support: &[usize],
) -> Result<RestrictedLiftedSolution> {
    if support.is_empty() {
        return Err(Error::domain("restricted solve needs a nonempty support"));
    }
    if let Some(&k) = support.iter().find(|&&k| k >= a.ncols()) {
        return Err(Error::domain(format!("support index {k} outside the grid")));
    }
    check_len("restricted data", rows.len(), d.len())?;
    check_len("row selection size", a.nrows(), rows.n())?;
    let m = support.len();

    let mat = restricted_matrix(a, rows, support);
    let rhs = DVector::from_column_slice(d);
    let gram = mat.adjoint() * &mat;
    let gram_eigs = SymmetricEigen::new(gram.clone()).eigenvalues;
    let (emin, emax) = gram_eigs
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let condition_estimate = if emin > 0.0 { emax / emin } else { f64::INFINITY };

    let (solution, method, rank_deficient) = if condition_estimate <= QR_FALLBACK_CONDITION {
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::domain("normal matrix is not positive definite"))?;
        (chol.solve(&(mat.adjoint() * &rhs)), LeastSquaresMethod::NormalEquations, false)
    } else if condition_estimate <= RANK_DEFICIENT_CONDITION && mat.nrows() >= mat.ncols() {
        let qr = mat.clone().qr();
        let qtb = qr.q().adjoint() * &rhs;
        let sol = qr
            .r()
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::domain("triangular factor is singular"))?;
        (sol, LeastSquaresMethod::Qr, false)
    } else {
        let svd = mat.clone().svd(true, true);
        let tol = svd.singular_values.max() * 1e-12 * (mat.nrows().max(mat.ncols()) as f64);
        let sol = svd
            .solve(&rhs, tol)
            .map_err(|e| Error::domain(format!("minimum-norm solve failed: {e}")))?;
        (sol, LeastSquaresMethod::MinimumNorm, true)
    };

    let raw_residual_norm = (&mat * &solution - &rhs).norm();
    let z = DMatrix::from_column_slice(m, m, solution.as_slice());
    let x_hat = (&z + z.adjoint()) * C64::new(0.5, 0.0);
    let residual_norm = (&mat * DVector::from_column_slice(x_hat.as_slice()) - &rhs).norm();

    let (leading_eigenvalue, rho_hat) = leading_factor(&x_hat);
    Ok(RestrictedLiftedSolution {
        support: support.to_vec(),
        x_hat,
        rho_hat,
        leading_eigenvalue,
        residual_norm,
        raw_residual_norm,
        conjugate_inconsistency: conjugate_inconsistency(rows, d),
        condition_estimate,
        method,
        rank_deficient,
    })
}

/// Leading eigenpair `(λ, √λ v)` of a Hermitian matrix, phase-fixed so the first entry is real ≥ 0.
pub fn leading_factor(x: &DMatrix<C64>) -> (f64, Vec<C64>) {
    let eig = SymmetricEigen::new(x.clone());
    let (idx, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty matrix");
    let v = eig.eigenvectors.column(idx);
    let phase = if v[0].norm() > 0.0 {
        v[0].conj() / v[0].norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let amp = lambda.max(0.0).sqrt();
    (lambda, v.iter().map(|c| c * phase * amp).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleErrorStats {
    /// `(row, col, error)` for every compared entry, after alignment, in radians.
    pub per_entry: Vec<(usize, usize, f64)>,
    pub mean_abs: f64,
    pub max_abs: f64,
    /// Rotation applied to the estimate.
    pub global_phase: f64,
    pub unaligned_mean_abs: f64,
    pub unaligned_max_abs: f64,
    /// Entries skipped because either value is (numerically) zero.
    pub excluded: usize,
}

fn wrap(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * std::f64::consts::PI);
    if t > std::f64::consts::PI {
        t - 2.0 * std::f64::consts::PI
    } else {
        t
    }
}

/// Entrywise phase differences between `estimate` and `truth`.
///
/// The global rotation is the circular mean of the differences; entries with
/// magnitude below `1e-12` of the largest are excluded.
pub fn angle_error(estimate: &DMatrix<C64>, truth: &DMatrix<C64>) -> Result<AngleErrorStats> {
    if estimate.shape() != truth.shape() {
        return Err(Error::domain("angle comparison needs equally sized matrices"));
    }
    let cutoff = |m: &DMatrix<C64>| 1e-12 * m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let (ce, ct) = (cutoff(estimate), cutoff(truth));
    let mut raw = Vec::new();
    let mut excluded = 0;
    for j in 0..truth.ncols() {
        for i in 0..truth.nrows() {
            let (e, t) = (estimate[(i, j)], truth[(i, j)]);
            if e.norm() <= ce || t.norm() <= ct || e.norm() == 0.0 || t.norm() == 0.0 {
                excluded += 1;
                continue;
            }
            raw.push((i, j, wrap(e.arg() - t.arg())));
        }
    }
    if raw.is_empty() {
        return Err(Error::domain("no nonzero entries to compare"));
    }
    let mean_dir: C64 = raw.iter().map(|&(_, _, d)| C64::from_polar(1.0, -d)).sum();
    let global_phase = if mean_dir.norm() > 0.0 { mean_dir.arg() } else { 0.0 };
    let per_entry: Vec<(usize, usize, f64)> =
        raw.iter().map(|&(i, j, d)| (i, j, wrap(d + global_phase))).collect();
    let stats = |v: &mut dyn Iterator<Item = f64>| {
        let (mut sum, mut max, mut n) = (0.0, 0.0f64, 0usize);
        for x in v {
            sum += x.abs();
            max = max.max(x.abs());
            n += 1;
        }
        (sum / n as f64, max)
    };
    let (mean_abs, max_abs) = stats(&mut per_entry.iter().map(|e| e.2));
    let (unaligned_mean_abs, unaligned_max_abs) = stats(&mut raw.iter().map(|e| e.2));
    Ok(AngleErrorStats {
        per_entry,
        mean_abs,
        max_abs,
        global_phase,
        unaligned_mean_abs,
        unaligned_max_abs,
        excluded,
    })
}

/// `X = ρρ*` restricted to `support`.
pub fn lifted_truth(rho: &[C64], support: &[usize]) -> DMatrix<C64> {
    let m = support.len();
    DMatrix::from_fn(m, m, |i, j| rho[support[i]] * rho[support[j]].conj())
}
