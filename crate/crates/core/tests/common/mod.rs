//! Helpers shared by the integration tests.
#![allow(dead_code)]

use corrnc_core::correlation::{build_reduced_system, cross_correlate, subsample_rows, ReducedSystemOptions};
use corrnc_core::gelma::{resolve_steps, solve_operators, SolverConfig, SolverState};
use corrnc_core::noise_collector::build_collector;
use corrnc_core::operator::DenseMatrix;
use corrnc_core::oracle::{dense_collector, dense_l1_solve, L1Options, L1Solution};
use corrnc_core::rng::{complex_gaussian_vec, derive_seed, rng_from_seed};
use corrnc_core::{LinearOperator, MeasurementMatrix, NoiseCollector, C64};
use nalgebra::DMatrix;
use rand::Rng;

pub fn random_matrix(n: usize, k: usize, seed: u64) -> MeasurementMatrix {
    let mut rng = rng_from_seed(seed);
    let raw = (0..k).map(|_| complex_gaussian_vec(&mut rng, n)).collect();
    MeasurementMatrix::from_raw_columns(n, 1, raw).unwrap()
}

pub fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn apply(op: &dyn LinearOperator, x: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::default(); op.nrows()];
    op.apply(x, &mut out);
    out
}

pub fn adjoint(op: &dyn LinearOperator, y: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::default(); op.ncols()];
    op.apply_adjoint(y, &mut out);
    out
}

pub fn collector_with_blocks(n: usize, p: usize, seed: u64) -> NoiseCollector {
    let beta = if p == 1 { 1.0 + 1e-12 } else { 1.0 + (p as f64).ln() / (n as f64).ln() };
    let nc = build_collector(n, beta, seed).unwrap();
    assert_eq!(nc.blocks(), p, "n = {n}, beta = {beta}");
    nc
}

/// A random small correlation system `(T, C, d)` with `𝒩 ≤ 64`, `K ≤ 32`, `Σ ≤ 256`.
pub struct Instance {
    pub t: DMatrix<C64>,
    pub collector: NoiseCollector,
    pub d: Vec<C64>,
}

pub fn instance(index: u64) -> Instance {
    let mut rng = rng_from_seed(derive_seed(61, &[index]));
    let n = 8;
    let k = rng.random_range(12..=32);
    let factor = [4usize, 6, 8][(index % 3) as usize];
    let rows = n * factor;
    let p = ((rows as f64).sqrt().ceil() as usize).min(256 / rows);
    let a = random_matrix(n, k, derive_seed(62, &[index]));
    let m = rng.random_range(1..=3);
    let mut rho = vec![C64::default(); k];
    for _ in 0..m {
        let pixel = rng.random_range(0..k);
        rho[pixel] = C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
    }
    let b = cross_correlate(&a.apply(&rho)).unwrap();
    let sel = subsample_rows(n, factor, derive_seed(63, &[index])).unwrap();
    let sys = build_reduced_system(&a, &b, &sel, &ReducedSystemOptions::default()).unwrap();
    let t = DMatrix::from_fn(rows, k, |r, kk| sys.matrix().column(kk)[r]);
    let collector = collector_with_blocks(rows, p, derive_seed(64, &[index]));
    Instance {
        t,
        collector,
        d: sys.data().to_vec(),
    }
}

pub fn solve_both(inst: &Instance, tau: f64) -> (SolverState, L1Solution) {
    let t = DenseMatrix::from_columns(inst.t.nrows(), inst.t.ncols(), inst.t.as_slice().to_vec());
    let cfg = SolverConfig {
        tau,
        max_iterations: 200_000,
        ..Default::default()
    };
    let steps = resolve_steps(&t, &inst.collector, &cfg).unwrap();
    let state = solve_operators(&t, &inst.collector, &inst.d, &cfg, steps).unwrap();
    let reference = dense_l1_solve(&inst.t, &dense_collector(&inst.collector).unwrap(), &inst.d, tau, &L1Options::default())
        .unwrap();
    (state, reference)
}

