//! Matrix-free linear operators.

use crate::rng::{rng_from_seed, unit_complex_gaussian_vec};
use crate::{linalg, C64};

/// A complex linear map applied without materializing its matrix.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `out = A x`.
    fn apply(&self, x: &[C64], out: &mut [C64]);

    /// `out = A* y` (conjugate transpose).
    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]);
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &[C64], out: &mut [C64]) {
        (**self).apply(x, out)
    }
    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]) {
        (**self).apply_adjoint(y, out)
    }
}

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn from_columns(nrows: usize, ncols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), nrows * ncols, "column-major buffer size");
        Self { nrows, ncols, data }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(nrows * ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                data.push(f(i, j));
            }
        }
        Self { nrows, ncols, data }
    }

    pub fn column(&self, j: usize) -> &[C64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[j * self.nrows + i]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }
}

impl LinearOperator for DenseMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = C64::default());
        for (j, &xj) in x.iter().enumerate() {
            if xj == C64::default() {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.column(j)) {
                *o += a * xj;
            }
        }
    }

    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = linalg::dot(self.column(j), y);
        }
    }
}

/// Horizontal concatenation `[A | B]`.
pub struct HStack<A, B> {
    pub left: A,
    pub right: B,
}

impl<A: LinearOperator, B: LinearOperator> LinearOperator for HStack<A, B> {
    fn nrows(&self) -> usize {
        self.left.nrows()
    }
    fn ncols(&self) -> usize {
        self.left.ncols() + self.right.ncols()
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        let (xl, xr) = x.split_at(self.left.ncols());
        let mut tmp = vec![C64::default(); out.len()];
        self.left.apply(xl, out);
        self.right.apply(xr, &mut tmp);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
    }

    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]) {
        let (ol, or) = out.split_at_mut(self.left.ncols());
        self.left.apply_adjoint(y, ol);
        self.right.apply_adjoint(y, or);
    }
}

/// Operator with no columns; the empty block in `[T | ∅]`.
pub struct Empty {
    pub nrows: usize,
}

impl LinearOperator for Empty {
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        0
    }
    fn apply(&self, _x: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = C64::default());
    }
    fn apply_adjoint(&self, _y: &[C64], _out: &mut [C64]) {}
}

/// Largest singular value of `op` by power iteration on `A A*`.
///
/// Stops after `max_iter` steps or when the estimate changes by less than
/// `rel_tol` between steps. The start vector is drawn from `seed`.
pub fn norm_estimate(op: &dyn LinearOperator, max_iter: usize, rel_tol: f64, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut u = unit_complex_gaussian_vec(&mut rng, op.nrows());
    let mut w = vec![C64::default(); op.ncols()];
    let mut sigma = 0.0;
    for _ in 0..max_iter.max(1) {
        op.apply_adjoint(&u, &mut w);
        // Rayleigh quotient of A A* at unit u.
        let next = linalg::norm2(&w);
        op.apply(&w, &mut u);
        let converged = sigma > 0.0 && (next - sigma).abs() <= rel_tol * next;
        sigma = next;
        if linalg::normalize(&mut u) == 0.0 || converged {
            break;
        }
    }
    sigma
}
