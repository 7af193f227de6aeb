//! Quick cross-checks of the fast code paths against dense references.

use std::path::Path;

use corrnc_core::correlation::{build_reduced_system, cross_correlate, subsample_rows, ReducedSystemOptions};
use corrnc_core::gelma::{resolve_steps, solve_operators, SolverConfig};
use corrnc_core::noise_collector::{block_count, build_collector};
use corrnc_core::operator::{norm_estimate, DenseMatrix, LinearOperator};
use corrnc_core::oracle::{dense_collector, dense_kronecker, dense_l1_solve, largest_singular_value, L1Options};
use corrnc_core::rng::{complex_gaussian_vec, derive_seed, rng_from_seed};
use corrnc_core::{linalg, MeasurementMatrix, C64};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use crate::config::{apply_overrides, load_config, Overrides};
use crate::output::OutDir;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn check(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check {
        name,
        value,
        tolerance,
        passed: value <= tolerance,
    }
}

fn random_matrix(n: usize, k: usize, seed: u64) -> corrnc_core::Result<MeasurementMatrix> {
    let mut rng = rng_from_seed(seed);
    let raw = (0..k).map(|_| complex_gaussian_vec(&mut rng, n)).collect();
    MeasurementMatrix::from_raw_columns(n, 1, raw)
}

fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Runs all checks for one master seed.
pub fn checks(seed: u64) -> corrnc_core::Result<Vec<Check>> {
    let mut out = Vec::new();

    // Reduced matrix against explicit rows of the Kronecker product.
    let a = random_matrix(6, 8, derive_seed(seed, &[1]))?;
    let dense = dense_kronecker(&a)?;
    let rho = complex_gaussian_vec(&mut rng_from_seed(derive_seed(seed, &[2])), 8);
    let b = cross_correlate(&a.apply(&rho))?;
    let sel = subsample_rows(6, 4, derive_seed(seed, &[3]))?;
    let sys = build_reduced_system(&a, &b, &sel, &ReducedSystemOptions { renormalize: false })?;
    let t_dense = dense.reduced(&sel, false);
    let x = complex_gaussian_vec(&mut rng_from_seed(derive_seed(seed, &[4])), 8);
    let mut tx = vec![C64::default(); sel.len()];
    sys.matrix().apply(&x, &mut tx);
    let expect = &t_dense * DVector::from_column_slice(&x);
    out.push(check("reduced_matvec_vs_kronecker", max_abs_diff(&tx, expect.as_slice()), 1e-12));
    let full = dense.data_vec(&rho);
    let d_expect: Vec<C64> = sel.indices().iter().map(|&i| full[i]).collect();
    out.push(check("sampled_data_vs_kronecker", max_abs_diff(sys.data(), &d_expect), 1e-12));

    // Collector products against explicit circulant blocks (24 is not a power of two).
    let beta = 1.0 + 3f64.ln() / 24f64.ln();
    let nc = build_collector(24, beta, derive_seed(seed, &[5]))?;
    let cd = dense_collector(&nc)?;
    let mut rng = rng_from_seed(derive_seed(seed, &[6]));
    let eta = complex_gaussian_vec(&mut rng, nc.width());
    let z = complex_gaussian_vec(&mut rng, 24);
    let ce = nc.matvec(&eta)?;
    let ce_dense = &cd * DVector::from_column_slice(&eta);
    out.push(check("collector_blocks", (nc.blocks() as f64 - block_count(24, beta) as f64).abs(), 0.0));
    out.push(check("collector_matvec_vs_dense", max_abs_diff(&ce, ce_dense.as_slice()), 1e-10));
    let cz = nc.adjoint(&z)?;
    let cz_dense = cd.adjoint() * DVector::from_column_slice(&z);
    out.push(check("collector_adjoint_vs_dense", max_abs_diff(&cz, cz_dense.as_slice()), 1e-10));
    let identity = (linalg::dot(&z, &ce) - linalg::dot(&cz, &eta)).norm();
    out.push(check("collector_adjoint_identity", identity, 1e-10));

    // Power iteration against a full SVD.
    let m = DMatrix::from_vec(40, 30, complex_gaussian_vec(&mut rng, 1200));
    let op = DenseMatrix::from_columns(40, 30, m.as_slice().to_vec());
    let est = norm_estimate(&op, 500, 1e-12, derive_seed(seed, &[7]));
    let svd = largest_singular_value(&m);
    out.push(check("power_iteration_vs_svd", (est - svd).abs() / svd, 0.01));

    // First stage against the dense l1 reference on a small random system.
    let (rows, k) = (32, 16);
    let cols: Vec<C64> = (0..k)
        .flat_map(|_| {
            let v = complex_gaussian_vec(&mut rng, rows);
            let n = linalg::norm2(&v);
            v.into_iter().map(move |x| x / n)
        })
        .collect();
    let t = DenseMatrix::from_columns(rows, k, cols.clone());
    let nc = build_collector(rows, 1.5, derive_seed(seed, &[8]))?;
    let mut d: Vec<C64> = (0..rows).map(|i| cols[2 * rows + i] - cols[9 * rows + i] * 0.5).collect();
    for (di, e) in d.iter_mut().zip(complex_gaussian_vec(&mut rng, rows)) {
        *di += e * 0.05;
    }
    let cfg = SolverConfig {
        max_iterations: 100_000,
        ..Default::default()
    };
    let steps = resolve_steps(&t, &nc, &cfg)?;
    let state = solve_operators(&t, &nc, &d, &cfg, steps)?;
    let reference = dense_l1_solve(
        &DMatrix::from_column_slice(rows, k, &cols),
        &dense_collector(&nc)?,
        &d,
        cfg.tau,
        &L1Options::default(),
    )?;
    let gap = max_abs_diff(&state.chi, &reference.chi).max(max_abs_diff(&state.eta, &reference.eta));
    out.push(check("solver_vs_dense_l1", gap, 1e-4));
    Ok(out)
}

pub fn run(config: Option<&Path>, o: &Overrides) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    apply_overrides(&mut cfg, o)?;
    let results = checks(cfg.experiment.seed)?;
    for c in &results {
        eprintln!(
            "selftest: {:<32} {} ({:.2e} <= {:.0e})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.value,
            c.tolerance
        );
    }
    let failed: Vec<&str> = results.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let mut dir = OutDir::create(&cfg.experiment.output)?;
    dir.json("selftest.json", &json!({ "checks": results, "passed": failed.is_empty() }))?;
    dir.finish("selftest", &cfg, json!({}))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failed.join(", ")))
    }
}
