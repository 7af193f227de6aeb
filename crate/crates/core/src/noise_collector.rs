//! Noise collector built from concatenated circulant blocks.
//!
//! Block `p` is the circulant matrix whose column `q` is the generator
//! `c⁽ᵖ⁾` cyclically shifted down by `q`, i.e. `C_p[i, q] = c⁽ᵖ⁾[(i − q) mod n]`.
//! Only the generators and their DFTs are stored. With an unnormalized
//! forward DFT `F` and inverse `F⁻¹` carrying `1/n`, `C_p = F⁻¹ diag(F c⁽ᵖ⁾) F`,
//! so `C_p η = F⁻¹(F c ⊙ F η)` and `C_p* z = F⁻¹(conj(F c) ⊙ F z)`.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{check_len, Error, Result};
use crate::operator::LinearOperator;
use crate::rng::{rng_from_seed, unit_complex_gaussian_vec};
use crate::C64;

#[derive(Clone)]
pub struct NoiseCollector {
    dim: usize,
    beta: f64,
    seed: u64,
    generators: Vec<Vec<C64>>,
    spectra: Vec<Vec<C64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for NoiseCollector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseCollector")
            .field("dim", &self.dim)
            .field("beta", &self.beta)
            .field("blocks", &self.generators.len())
            .field("seed", &self.seed)
            .finish()
    }
}

/// `⌈n^(β−1)⌉`, snapping values within rounding error of an integer.
pub fn block_count(n: usize, beta: f64) -> usize {
    let x = (n as f64).powf(beta - 1.0);
    let r = x.round();
    let p = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    (p as usize).max(1)
}

pub fn build_collector(n: usize, beta: f64, seed: u64) -> Result<NoiseCollector> {
    if n < 2 {
        return Err(Error::domain("collector dimension must be at least 2"));
    }
    if !(beta > 1.0) || !beta.is_finite() {
        return Err(Error::domain(format!("collector exponent beta = {beta} must exceed 1")));
    }
    let mut rng = rng_from_seed(seed);
    let generators = (0..block_count(n, beta))
        .map(|_| unit_complex_gaussian_vec(&mut rng, n))
        .collect();
    Ok(NoiseCollector::from_generators(generators, beta, seed))
}

impl NoiseCollector {
    /// Assembles a collector from explicit generators (each assumed unit-norm, all of equal length).
    pub fn from_generators(generators: Vec<Vec<C64>>, beta: f64, seed: u64) -> Self {
        let dim = generators.first().map_or(0, Vec::len);
        assert!(generators.iter().all(|g| g.len() == dim), "generator lengths differ");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(dim);
        let inverse = planner.plan_fft_inverse(dim);
        let spectra = generators
            .iter()
            .map(|g| {
                let mut s = g.clone();
                forward.process(&mut s);
                s
            })
            .collect();
        Self {
            dim,
            beta,
            seed,
            generators,
            spectra,
            forward,
            inverse,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn blocks(&self) -> usize {
        self.generators.len()
    }

    /// Number of columns `Σ = P · n`.
    pub fn width(&self) -> usize {
        self.blocks() * self.dim
    }

    pub fn generator(&self, p: usize) -> &[C64] {
        &self.generators[p]
    }

    /// Complex values held in memory (generators plus cached spectra).
    pub fn stored_values(&self) -> usize {
        self.generators.iter().chain(&self.spectra).map(Vec::len).sum()
    }

    /// `C η`.
    pub fn matvec(&self, eta: &[C64]) -> Result<Vec<C64>> {
        check_len("collector matvec", self.width(), eta.len())?;
        let mut out = vec![C64::default(); self.dim];
        self.apply(eta, &mut out);
        Ok(out)
    }

    /// `C* z`.
    pub fn adjoint(&self, z: &[C64]) -> Result<Vec<C64>> {
        check_len("collector adjoint", self.dim, z.len())?;
        let mut out = vec![C64::default(); self.width()];
        self.apply_adjoint(z, &mut out);
        Ok(out)
    }

    fn scratch(&self) -> Vec<C64> {
        let len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        vec![C64::default(); len]
    }
}

impl LinearOperator for NoiseCollector {
    fn nrows(&self) -> usize {
        self.dim
    }

    fn ncols(&self) -> usize {
        self.width()
    }

    fn apply(&self, eta: &[C64], out: &mut [C64]) {
        let n = self.dim;
        let mut scratch = self.scratch();
        let mut buf = vec![C64::default(); n];
        // Blocks are summed in the frequency domain; one inverse transform at the end.
        out.iter_mut().for_each(|o| *o = C64::default());
        for (block, spectrum) in eta.chunks_exact(n).zip(&self.spectra) {
            if block.iter().all(|v| *v == C64::default()) {
                continue;
            }
            buf.copy_from_slice(block);
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for ((o, b), s) in out.iter_mut().zip(&buf).zip(spectrum) {
                *o += b * s;
            }
        }
        self.inverse.process_with_scratch(out, &mut scratch);
        let scale = 1.0 / n as f64;
        out.iter_mut().for_each(|o| *o *= scale);
    }

    fn apply_adjoint(&self, z: &[C64], out: &mut [C64]) {
        let n = self.dim;
        let mut scratch = self.scratch();
        let mut zhat = z.to_vec();
        self.forward.process_with_scratch(&mut zhat, &mut scratch);
        let scale = 1.0 / n as f64;
        for (block, spectrum) in out.chunks_exact_mut(n).zip(&self.spectra) {
            for ((o, zh), s) in block.iter_mut().zip(&zhat).zip(spectrum) {
                *o = s.conj() * zh * scale;
            }
            self.inverse.process_with_scratch(block, &mut scratch);
        }
    }
}
