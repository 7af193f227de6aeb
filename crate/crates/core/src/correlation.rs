//! Cross-correlation data and the reduced `K`-column system.
//!
//! Vectorization is column-stacking: entry `j * N + i` of `vec(B)` holds
//! `B[i, j] = b_i · conj(b_j)`. With `vec(PQR) = (Rᵀ ⊗ P) vec(Q)` the lifted
//! system reads `(Ā ⊗ A) vec(X) = vec(B)`, and the column of `Ā ⊗ A` that
//! multiplies `X[k, k] = |ρ_k|²` is `t_k = ā_k ⊗ a_k`, whose entry at row
//! `(i, j)` is `a[i, k] · conj(a[j, k])`.

use rand::seq::index;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::operator::LinearOperator;
use crate::rng::rng_from_seed;
use crate::wave_model::MeasurementMatrix;
use crate::{linalg, C64};

/// Work size above which products are split across threads.
const PAR_THRESHOLD: usize = 1 << 16;

/// `B = b b*`, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    data: Vec<C64>,
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[j * self.n + i]
    }

    /// `vec(B)` in column-stacking order.
    pub fn vec(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

pub fn cross_correlate(b: &[C64]) -> Result<CorrelationMatrix> {
    if b.is_empty() {
        return Err(Error::domain("cannot correlate empty data"));
    }
    let n = b.len();
    let mut data = Vec::with_capacity(n * n);
    for bj in b {
        let cj = bj.conj();
        data.extend(b.iter().map(|bi| bi * cj));
    }
    Ok(CorrelationMatrix { n, data })
}

/// Sorted distinct indices into `vec(B)` for an `N × N` correlation matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowSelection {
    n: usize,
    indices: Vec<usize>,
}

impl RowSelection {
    pub fn full(n: usize) -> Self {
        Self {
            n,
            indices: (0..n * n).collect(),
        }
    }

    pub fn from_indices(n: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("row selection has duplicate indices"));
        }
        if indices.last().is_some_and(|&last| last >= n * n) {
            return Err(Error::domain(format!("row index outside vec(B) of length {}", n * n)));
        }
        Ok(Self { n, indices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `(i, j)` such that the row carries `B[i, j]`.
    pub fn pair(&self, row: usize) -> (usize, usize) {
        let idx = self.indices[row];
        (idx % self.n, idx / self.n)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices.iter().map(move |&idx| (idx % self.n, idx / self.n))
    }
}

/// Draws `factor · n` of the `n²` correlation entries uniformly without replacement.
pub fn subsample_rows(n: usize, factor: usize, seed: u64) -> Result<RowSelection> {
    let count = factor
        .checked_mul(n)
        .ok_or_else(|| Error::domain("sample count overflows"))?;
    if count > n * n {
        return Err(Error::domain(format!(
            "cannot draw {count} rows from {} correlations",
            n * n
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut indices = index::sample(&mut rng, n * n, count).into_vec();
    indices.sort_unstable();
    Ok(RowSelection { n, indices })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedSystemOptions {
    /// Rescale each column of `T` to unit length after subsampling.
    pub renormalize: bool,
}

impl Default for ReducedSystemOptions {
    fn default() -> Self {
        Self { renormalize: true }
    }
}

/// The reduced matrix `T`: the `K` diagonal columns of `Ā ⊗ A` on the sampled rows.
///
/// `T` is never stored. Products run over the rows of `A` (split into real
/// and imaginary planes), grouped by the second index `j` of each sampled
/// pair, which is nondecreasing because selections are sorted.
#[derive(Debug, Clone)]
pub struct ReducedMatrix {
    nrows: usize,
    ncols: usize,
    scales: Vec<f64>,
    /// Row-major `Re A` and `Im A`, `N × K`.
    a_re: Vec<f64>,
    a_im: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    /// Row ranges sharing the same `j`.
    groups: Vec<(usize, std::ops::Range<usize>)>,
}

impl ReducedMatrix {
    fn build(a: &MeasurementMatrix, sel: &RowSelection, opts: &ReducedSystemOptions) -> Result<Self> {
        let nrows = sel.len();
        let ncols = a.ncols();
        let pairs: Vec<(usize, usize)> = sel.pairs().collect();
        let scales = if opts.renormalize {
            (0..ncols)
                .map(|k| {
                    let col = a.column(k);
                    let s = pairs
                        .iter()
                        .map(|&(i, j)| col[i].norm_sqr() * col[j].norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    if s > 0.0 {
                        Ok(s)
                    } else {
                        Err(Error::domain(format!("reduced column {k} vanishes on the sampled rows")))
                    }
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![1.0; ncols]
        };

        let n = a.nrows();
        let mut a_re = vec![0.0; n * ncols];
        let mut a_im = vec![0.0; n * ncols];
        for k in 0..ncols {
            for (i, v) in a.column(k).iter().enumerate() {
                a_re[i * ncols + k] = v.re;
                a_im[i * ncols + k] = v.im;
            }
        }
        let mut groups: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
        for (r, &(_, j)) in pairs.iter().enumerate() {
            match groups.last_mut() {
                Some((gj, range)) if *gj == j => range.end = r + 1,
                _ => groups.push((j, r..r + 1)),
            }
        }
        Ok(Self {
            nrows,
            ncols,
            scales,
            a_re,
            a_im,
            pairs,
            groups,
        })
    }

    /// Column renormalizers `s_k` (all ones without renormalization).
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    fn a(&self, i: usize, k: usize) -> C64 {
        let idx = i * self.ncols + k;
        C64::new(self.a_re[idx], self.a_im[idx])
    }

    /// Column `t_k` as an owned vector.
    pub fn column(&self, k: usize) -> Vec<C64> {
        self.pairs
            .iter()
            .map(|&(i, j)| self.a(i, k) * self.a(j, k).conj() / self.scales[k])
            .collect()
    }

    /// `out[k - k0] = Σ_r conj(T[r, k]) y_r` for `k ∈ k0..k0 + out.len()`.
    fn adjoint_block(&self, y: &[C64], k0: usize, out_re: &mut [f64], out_im: &mut [f64]) {
        let (kk, w) = (self.ncols, out_re.len());
        let mut u_re = vec![0.0; w];
        let mut u_im = vec![0.0; w];
        out_re.fill(0.0);
        out_im.fill(0.0);
        for (j, range) in &self.groups {
            u_re.fill(0.0);
            u_im.fill(0.0);
            // u = Σ_i y_r conj(a_i)
            for r in range.clone() {
                let i = self.pairs[r].0;
                let (yr, yi) = (y[r].re, y[r].im);
                let ar = &self.a_re[i * kk + k0..][..w];
                let ai = &self.a_im[i * kk + k0..][..w];
                let (ur, ui) = (&mut u_re[..w], &mut u_im[..w]);
                for q in 0..w {
                    ur[q] += ar[q] * yr + ai[q] * yi;
                    ui[q] += ar[q] * yi - ai[q] * yr;
                }
            }
            // out += a_j ⊙ u
            let br = &self.a_re[j * kk + k0..][..w];
            let bi = &self.a_im[j * kk + k0..][..w];
            let (or, oi) = (&mut out_re[..w], &mut out_im[..w]);
            for q in 0..w {
                or[q] += u_re[q] * br[q] - u_im[q] * bi[q];
                oi[q] += u_re[q] * bi[q] + u_im[q] * br[q];
            }
        }
    }
}

impl LinearOperator for ReducedMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        // Only nonzero entries of x contribute; iterates are sparse.
        let active: Vec<(usize, C64)> = x
            .iter()
            .zip(&self.scales)
            .enumerate()
            .filter(|(_, (v, _))| **v != C64::default())
            .map(|(k, (v, s))| (k, v / s))
            .collect();
        let row = |&(i, j): &(usize, usize)| -> C64 {
            active
                .iter()
                .map(|&(k, w)| self.a(i, k) * self.a(j, k).conj() * w)
                .sum()
        };
        if self.nrows * active.len() < PAR_THRESHOLD {
            out.iter_mut().zip(&self.pairs).for_each(|(o, p)| *o = row(p));
        } else {
            out.par_iter_mut().zip(self.pairs.par_iter()).for_each(|(o, p)| *o = row(p));
        }
    }

    fn apply_adjoint(&self, y: &[C64], out: &mut [C64]) {
        // Every k is summed in the same row order whatever the blocking,
        // so results do not depend on the thread count.
        let kk = self.ncols;
        let mut re = vec![0.0; kk];
        let mut im = vec![0.0; kk];
        if self.nrows * kk < PAR_THRESHOLD || rayon::current_num_threads() == 1 {
            self.adjoint_block(y, 0, &mut re, &mut im);
        } else {
            let width = kk.div_ceil(rayon::current_num_threads()).max(16);
            re.par_chunks_mut(width)
                .zip(im.par_chunks_mut(width))
                .enumerate()
                .for_each(|(c, (r, i))| self.adjoint_block(y, c * width, r, i));
        }
        for (((o, r), i), s) in out.iter_mut().zip(&re).zip(&im).zip(&self.scales) {
            *o = C64::new(*r, *i) / s;
        }
    }
}

/// The reduced system `T χ + C η = d` (collector supplied separately).
#[derive(Debug, Clone)]
pub struct CorrelationSystem {
    selection: RowSelection,
    d: Vec<C64>,
    t: ReducedMatrix,
    renormalized: bool,
    truth: Option<Vec<f64>>,
}

pub fn build_reduced_system(
    a: &MeasurementMatrix,
    b: &CorrelationMatrix,
    selection: &RowSelection,
    opts: &ReducedSystemOptions,
) -> Result<CorrelationSystem> {
    check_len("correlation size", a.nrows(), b.n())?;
    check_len("row selection size", a.nrows(), selection.n())?;
    let d: Vec<C64> = selection.indices().iter().map(|&idx| b.vec()[idx]).collect();
    CorrelationSystem::from_data(a, selection.clone(), d, opts)
}

impl CorrelationSystem {
    /// Builds the system from already subsampled data `d` (one entry per selected row).
    pub fn from_data(
        a: &MeasurementMatrix,
        selection: RowSelection,
        d: Vec<C64>,
        opts: &ReducedSystemOptions,
    ) -> Result<Self> {
        if selection.is_empty() {
            return Err(Error::domain("row selection is empty"));
        }
        check_len("row selection size", a.nrows(), selection.n())?;
        check_len("subsampled data", selection.len(), d.len())?;
        let t = ReducedMatrix::build(a, &selection, opts)?;
        Ok(Self {
            selection,
            d,
            t,
            renormalized: opts.renormalize,
            truth: None,
        })
    }

    /// Records `χ = (|ρ_1|², …, |ρ_K|²)` for diagnostics.
    pub fn with_ground_truth(mut self, rho: &[C64]) -> Result<Self> {
        check_len("ground truth", self.t.ncols(), rho.len())?;
        self.truth = Some(rho.iter().map(|r| r.norm_sqr()).collect());
        Ok(self)
    }

    pub fn selection(&self) -> &RowSelection {
        &self.selection
    }

    pub fn data(&self) -> &[C64] {
        &self.d
    }

    pub fn matrix(&self) -> &ReducedMatrix {
        &self.t
    }

    pub fn scales(&self) -> &[f64] {
        self.t.scales()
    }

    pub fn is_renormalized(&self) -> bool {
        self.renormalized
    }

    pub fn ground_truth(&self) -> Option<&[f64]> {
        self.truth.as_deref()
    }

    /// Maps `|ρ_k|²` values to the unknown multiplying the (rescaled) `T`: `s_k χ_k`.
    pub fn to_system_coords(&self, chi: &[f64]) -> Vec<C64> {
        chi.iter()
            .zip(self.scales())
            .map(|(c, s)| C64::new(c * s, 0.0))
            .collect()
    }

    /// Inverse of [`Self::to_system_coords`]: `χ_k / s_k`.
    pub fn from_system_coords(&self, chi: &[C64]) -> Vec<C64> {
        chi.iter().zip(self.scales()).map(|(c, s)| c / s).collect()
    }
}

/// `e = d − T χ`: everything the diagonal model does not explain.
#[derive(Debug, Clone, PartialEq)]
pub struct OffDiagonalResidual {
    pub e: Vec<C64>,
    pub norm_e: f64,
    pub norm_t_chi: f64,
}

/// `chi` is expressed in the column scaling of `T` (see [`CorrelationSystem::to_system_coords`]).
pub fn off_diagonal_residual(sys: &CorrelationSystem, chi: &[C64]) -> Result<OffDiagonalResidual> {
    check_len("chi", sys.t.ncols(), chi.len())?;
    let mut t_chi = vec![C64::default(); sys.t.nrows()];
    sys.t.apply(chi, &mut t_chi);
    let e = linalg::sub(&sys.d, &t_chi);
    Ok(OffDiagonalResidual {
        norm_e: linalg::norm2(&e),
        norm_t_chi: linalg::norm2(&t_chi),
        e,
    })
}
