//! Dense reference implementations for small problems.
//!
//! Nothing here calls the matrix-free operators; every product is an explicit
//! `nalgebra` matrix product so the two code paths can check each other.

use nalgebra::{DMatrix, DVector};

use crate::correlation::RowSelection;
use crate::error::{Error, Result};
use crate::noise_collector::NoiseCollector;
use crate::wave_model::MeasurementMatrix;
use crate::C64;

/// Largest `N` accepted by [`dense_kronecker`].
pub const MAX_KRONECKER_ROWS: usize = 8;
/// Largest `K` accepted by [`dense_kronecker`].
pub const MAX_KRONECKER_COLS: usize = 10;
/// Largest `K + Σ` accepted by [`dense_l1_solve`].
pub const MAX_L1_COLUMNS: usize = 500;
/// Largest collector dimension accepted by [`dense_collector`].
pub const MAX_COLLECTOR_DIM: usize = 512;

fn cap(what: &str, value: usize, limit: usize) -> Result<()> {
    if value > limit {
        Err(Error::SizeCap(format!("{what} = {value} exceeds the oracle cap {limit}")))
    } else {
        Ok(())
    }
}

pub fn to_dmatrix(a: &MeasurementMatrix) -> DMatrix<C64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, k| a.get(i, k))
}

/// `P ⊗ Q`.
pub fn kronecker(p: &DMatrix<C64>, q: &DMatrix<C64>) -> DMatrix<C64> {
    let (pr, pc) = p.shape();
    let (qr, qc) = q.shape();
    DMatrix::from_fn(pr * qr, pc * qc, |r, c| p[(r / qr, c / qc)] * q[(r % qr, c % qc)])
}

/// Column-stacking `vec`.
pub fn vec_of(x: &DMatrix<C64>) -> DVector<C64> {
    DVector::from_column_slice(x.as_slice())
}

/// The explicit lifted system `(Ā ⊗ A) vec(X) = vec(B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLiftedSystem {
    pub a: DMatrix<C64>,
    /// `Ā ⊗ A`, `N² × K²`.
    pub lifted: DMatrix<C64>,
}

pub fn dense_kronecker(a: &MeasurementMatrix) -> Result<DenseLiftedSystem> {
    cap("N", a.nrows(), MAX_KRONECKER_ROWS)?;
    cap("K", a.ncols(), MAX_KRONECKER_COLS)?;
    let a = to_dmatrix(a);
    let lifted = kronecker(&a.conjugate(), &a);
    Ok(DenseLiftedSystem { a, lifted })
}

impl DenseLiftedSystem {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn k(&self) -> usize {
        self.a.ncols()
    }

    /// `vec(B)` for `B = b b*`, `b = A ρ`.
    pub fn data_vec(&self, rho: &[C64]) -> DVector<C64> {
        let b = &self.a * DVector::from_column_slice(rho);
        vec_of(&(&b * b.adjoint()))
    }

    /// `vec(A X A*)` computed directly (not through the Kronecker product).
    pub fn sandwich(&self, x: &DMatrix<C64>) -> DVector<C64> {
        vec_of(&(&self.a * x * self.a.adjoint()))
    }

    pub fn apply(&self, x: &DMatrix<C64>) -> DVector<C64> {
        &self.lifted * vec_of(x)
    }

    /// Column of `Ā ⊗ A` multiplying `X[k, k]`.
    pub fn diagonal_column(&self, k: usize) -> DVector<C64> {
        self.lifted.column(k * self.k() + k).into_owned()
    }

    /// Reduced matrix on `rows`, optionally with unit-norm columns.
    pub fn reduced(&self, rows: &RowSelection, renormalize: bool) -> DMatrix<C64> {
        let k = self.k();
        let mut t = DMatrix::from_fn(rows.len(), k, |r, kk| self.lifted[(rows.indices()[r], kk * k + kk)]);
        if renormalize {
            for mut col in t.column_iter_mut() {
                let s = col.norm();
                col /= C64::new(s, 0.0);
            }
        }
        t
    }
}

/// Circulant matrix whose column `q` is `c` cyclically shifted down by `q`.
pub fn dense_circulant(c: &[C64]) -> DMatrix<C64> {
    let n = c.len();
    DMatrix::from_fn(n, n, |i, q| c[(i + n - q) % n])
}

/// `[C_1 | … | C_P]` from the collector's generators.
pub fn dense_collector(nc: &NoiseCollector) -> Result<DMatrix<C64>> {
    cap("collector dimension", nc.dim(), MAX_COLLECTOR_DIM)?;
    let n = nc.dim();
    let mut m = DMatrix::zeros(n, nc.width());
    for p in 0..nc.blocks() {
        m.columns_mut(p * n, n).copy_from(&dense_circulant(nc.generator(p)));
    }
    Ok(m)
}

/// Largest singular value from a full SVD.
pub fn largest_singular_value(m: &DMatrix<C64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Options of the reference `ℓ1` solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Options {
    /// ADMM penalty.
    pub rho: f64,
    pub max_iterations: usize,
    /// Stop once the duality gap falls below this (relative to `max(1, primal)`).
    pub gap_tol: f64,
}

impl Default for L1Options {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iterations: 2_000_000,
            gap_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Solution {
    pub chi: Vec<C64>,
    pub eta: Vec<C64>,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
    /// `‖[T | C] x − d‖₂`; nonzero only when `d` is outside the range.
    pub feasibility_violation: f64,
}

impl L1Solution {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual
    }
}

fn soft(v: C64, r: f64) -> C64 {
    let m = v.norm();
    if m <= r {
        C64::new(0.0, 0.0)
    } else {
        v * ((m - r) / m)
    }
}

/// `min τ‖χ‖₁ + ‖η‖₁  s.t.  T χ + C η = d` by ADMM with exact affine projection.
///
/// The dual certificate `y` comes from the ADMM multiplier, projected onto
/// the range of `[T | C]*` and scaled into the dual feasible set
/// `|[T | C]* y|_i ≤ w_i`, so `primal − dual` bounds the suboptimality.
pub fn dense_l1_solve(
    t: &DMatrix<C64>,
    c: &DMatrix<C64>,
    d: &[C64],
    tau: f64,
    opts: &L1Options,
) -> Result<L1Solution> {
    let (m, k) = t.shape();
    let sigma = c.ncols();
    cap("K + Σ", k + sigma, MAX_L1_COLUMNS)?;
    if c.nrows() != m || d.len() != m {
        return Err(Error::Dimension {
            context: "dense l1 system",
            expected: m,
            got: if c.nrows() != m { c.nrows() } else { d.len() },
        });
    }
    if !(tau > 0.0) {
        return Err(Error::domain("tau must be positive"));
    }
    let n = k + sigma;
    let mut g = DMatrix::zeros(m, n);
    g.columns_mut(0, k).copy_from(t);
    g.columns_mut(k, sigma).copy_from(c);
    let w: Vec<f64> = (0..n).map(|i| if i < k { tau } else { 1.0 }).collect();
    let dv = DVector::from_column_slice(d);

    let scale = dv.norm();
    if scale == 0.0 {
        return Ok(L1Solution {
            chi: vec![C64::new(0.0, 0.0); k],
            eta: vec![C64::new(0.0, 0.0); sigma],
            primal: 0.0,
            dual: 0.0,
            iterations: 0,
            feasibility_violation: 0.0,
        });
    }
    let dn = &dv / C64::new(scale, 0.0);
    let gram = &g * g.adjoint();
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::domain("[T | C] does not have full row rank"))?;
    // x ↦ x − G*(GG*)⁻¹(Gx − d)
    let project = |v: &DVector<C64>| -> DVector<C64> {
        let r = &g * v - &dn;
        v - g.adjoint() * chol.solve(&r)
    };
    let primal_of = |x: &DVector<C64>| -> f64 { x.iter().zip(&w).map(|(v, wi)| wi * v.norm()).sum() };
    let dual_of = |lam: &DVector<C64>| -> f64 {
        let y = chol.solve(&(&g * lam));
        let gy = g.adjoint() * &y;
        let worst = gy.iter().zip(&w).map(|(v, wi)| v.norm() / wi).fold(0.0, f64::max);
        let y = if worst > 1.0 { y / C64::new(worst, 0.0) } else { y };
        y.dotc(&dn).re
    };

    let rho = opts.rho;
    let mut z = DVector::<C64>::zeros(n);
    let mut u = DVector::<C64>::zeros(n);
    let mut x = project(&z);
    let (mut primal, mut dual) = (primal_of(&x), f64::NEG_INFINITY);
    let mut iterations = 0;
    for it in 1..=opts.max_iterations {
        x = project(&(&z - &u));
        let v = &x + &u;
        for i in 0..n {
            z[i] = soft(v[i], w[i] / rho);
        }
        u += &x - &z;
        iterations = it;
        if it % 50 == 0 {
            primal = primal_of(&project(&z));
            dual = dual_of(&(&u * C64::new(rho, 0.0)));
            if primal - dual <= opts.gap_tol * primal.max(1.0) {
                break;
            }
        }
    }
    let x = project(&z);
    let violation = (&g * &x - &dn).norm() * scale;
    Ok(L1Solution {
        chi: x.rows(0, k).iter().map(|v| v * scale).collect(),
        eta: x.rows(k, sigma).iter().map(|v| v * scale).collect(),
        primal: primal * scale,
        dual: dual * scale,
        iterations,
        feasibility_violation: violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian_vec, rng_from_seed};

    fn random(m: usize, n: usize, seed: u64) -> DMatrix<C64> {
        let v = complex_gaussian_vec(&mut rng_from_seed(seed), m * n);
        let mut a = DMatrix::from_vec(m, n, v);
        for mut col in a.column_iter_mut() {
            let s = col.norm();
            col /= C64::new(s, 0.0);
        }
        a
    }

    #[test]
    fn kronecker_shape_and_entries() {
        let p = random(2, 3, 1);
        let q = random(4, 2, 2);
        let kq = kronecker(&p, &q);
        assert_eq!(kq.shape(), (8, 6));
        assert_eq!(kq[(5, 3)], p[(1, 1)] * q[(1, 1)]);
    }

    #[test]
    fn circulant_first_column_is_generator() {
        let c = complex_gaussian_vec(&mut rng_from_seed(3), 5);
        let m = dense_circulant(&c);
        assert_eq!(m.column(0).as_slice(), &c[..]);
        assert_eq!(m[(0, 1)], c[4]);
        assert_eq!(m[(2, 1)], c[1]);
    }

    #[test]
    fn l1_zero_data_and_caps() {
        let t = random(4, 3, 4);
        let c = random(4, 8, 5);
        let s = dense_l1_solve(&t, &c, &[C64::new(0.0, 0.0); 4], 2.0, &Default::default()).unwrap();
        assert!(s.chi.iter().chain(&s.eta).all(|v| v.norm() == 0.0));
        let big = random(2, 501, 6);
        let t1 = random(2, 1, 7);
        assert!(matches!(
            dense_l1_solve(&t1, &big, &[C64::new(1.0, 0.0); 2], 2.0, &Default::default()),
            Err(Error::SizeCap(_))
        ));
    }

    #[test]
    fn l1_picks_cheap_single_column() {
        // With τ < 1 and orthonormal columns, the signal column is cheaper than any split.
        let t = DMatrix::from_fn(3, 1, |i, _| C64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0));
        let c = DMatrix::from_fn(3, 3, |i, j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0));
        let s = dense_l1_solve(&t, &c, &[C64::new(0.0, 2.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)], 0.5, &Default::default())
            .unwrap();
        assert!((s.chi[0] - C64::new(0.0, 2.0)).norm() < 1e-8);
        assert!(s.gap() <= 1e-9);
    }
}
