//! Fast operators and the first-stage solver against dense references.

use corrnc_core::correlation::{build_reduced_system, cross_correlate, subsample_rows, ReducedSystemOptions};
use corrnc_core::gelma::{resolve_steps, solve_operators, SolverConfig};
use corrnc_core::noise_collector::build_collector;
use corrnc_core::operator::{norm_estimate, DenseMatrix, HStack};
use corrnc_core::oracle::{
    dense_circulant, dense_collector, dense_kronecker, dense_l1_solve, largest_singular_value, to_dmatrix, vec_of, L1Options,
};
use corrnc_core::rng::{complex_gaussian_vec, derive_seed, rng_from_seed};
use corrnc_core::{linalg, C64};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

mod common;
use common::{adjoint, apply, collector_with_blocks, instance, max_diff, random_matrix, solve_both, Instance};

#[test]
fn reduced_system_matches_dense_kronecker_on_100_instances() {
    let mut worst = 0.0f64;
    for inst in 0..100u64 {
        let mut rng = rng_from_seed(derive_seed(11, &[inst]));
        let n = rng.random_range(2..=6);
        let k = rng.random_range(2..=8);
        let a = random_matrix(n, k, derive_seed(12, &[inst]));
        let dense = dense_kronecker(&a).unwrap();

        // vec(A X A*) = (Ā ⊗ A) vec(X) for a random Hermitian X.
        let g = DMatrix::from_vec(k, k, complex_gaussian_vec(&mut rng, k * k));
        let x = &g + g.adjoint();
        worst = worst.max((dense.sandwich(&x) - dense.apply(&x)).camax());

        let rho = complex_gaussian_vec(&mut rng, k);
        let b = cross_correlate(&a.apply(&rho)).unwrap();
        let full = dense.data_vec(&rho);
        worst = worst.max(max_diff(b.vec(), full.as_slice()));

        let factor = rng.random_range(1..=n);
        let renormalize = inst % 2 == 0;
        let rows = subsample_rows(n, factor, derive_seed(13, &[inst])).unwrap();
        let sys = build_reduced_system(&a, &b, &rows, &ReducedSystemOptions { renormalize }).unwrap();
        let t_dense = dense.reduced(&rows, renormalize);
        let xk = complex_gaussian_vec(&mut rng, k);
        let y = complex_gaussian_vec(&mut rng, rows.len());
        let expect_tx = &t_dense * DVector::from_column_slice(&xk);
        let expect_ty = t_dense.adjoint() * DVector::from_column_slice(&y);
        worst = worst.max(max_diff(&apply(sys.matrix(), &xk), expect_tx.as_slice()));
        worst = worst.max(max_diff(&adjoint(sys.matrix(), &y), expect_ty.as_slice()));

        let d_expect: Vec<C64> = rows.indices().iter().map(|&i| full[i]).collect();
        worst = worst.max(max_diff(sys.data(), &d_expect));

        for kk in 0..k {
            let col = sys.matrix().column(kk);
            worst = worst.max(max_diff(&col, t_dense.column(kk).as_slice()));
            if !renormalize {
                let diag = dense.diagonal_column(kk);
                let sampled: Vec<C64> = rows.indices().iter().map(|&i| diag[i]).collect();
                worst = worst.max(max_diff(&col, &sampled));
            }
        }
    }
    assert!(worst < 1e-12, "worst deviation {worst:e}");
}

#[test]
fn full_sampling_gram_is_squared_column_gram() {
    for inst in 0..100u64 {
        let mut rng = rng_from_seed(derive_seed(21, &[inst]));
        let n = rng.random_range(2..=6);
        let k = rng.random_range(2..=8);
        let a = random_matrix(n, k, derive_seed(22, &[inst]));
        let dense = dense_kronecker(&a).unwrap();
        for i in 0..k {
            for j in 0..k {
                let ti = dense.diagonal_column(i);
                let tj = dense.diagonal_column(j);
                let lhs = ti.dotc(&tj);
                let aij = linalg::dot(a.column(i), a.column(j));
                assert!((lhs - C64::new(aij.norm_sqr(), 0.0)).norm() < 1e-12, "inst {inst} ({i},{j})");
            }
        }
    }
}

#[test]
fn collector_products_match_dense_circulants() {
    for &n in &[8usize, 16, 24] {
        for &p in &[1usize, 3] {
            let nc = collector_with_blocks(n, p, derive_seed(31, &[n as u64, p as u64]));
            let dense = dense_collector(&nc).unwrap();
            for q in 0..p {
                let block = dense.columns(q * n, n).into_owned();
                assert_eq!(block, dense_circulant(nc.generator(q)));
            }
            let mut rng = rng_from_seed(derive_seed(32, &[n as u64, p as u64]));
            for _ in 0..10 {
                let eta = complex_gaussian_vec(&mut rng, nc.width());
                let z = complex_gaussian_vec(&mut rng, n);
                let ce = dense.clone() * DVector::from_column_slice(&eta);
                let cz = dense.adjoint() * DVector::from_column_slice(&z);
                assert!(max_diff(&nc.matvec(&eta).unwrap(), ce.as_slice()) < 1e-10);
                assert!(max_diff(&nc.adjoint(&z).unwrap(), cz.as_slice()) < 1e-10);
                assert!(max_diff(&apply(&nc, &eta), ce.as_slice()) < 1e-10);
                assert!(max_diff(&adjoint(&nc, &z), cz.as_slice()) < 1e-10);
            }
        }
    }
}

#[test]
fn collector_adjoint_identity_on_100_pairs() {
    for pair in 0..100u64 {
        let mut rng = rng_from_seed(derive_seed(41, &[pair]));
        let n = [8usize, 16, 24][(pair % 3) as usize];
        let p = if pair % 2 == 0 { 1 } else { 3 };
        let nc = collector_with_blocks(n, p, derive_seed(42, &[pair]));
        let x = complex_gaussian_vec(&mut rng, nc.width());
        let y = complex_gaussian_vec(&mut rng, n);
        let lhs = linalg::dot(&y, &nc.matvec(&x).unwrap());
        let rhs = linalg::dot(&nc.adjoint(&y).unwrap(), &x);
        assert!((lhs - rhs).norm() < 1e-10, "pair {pair}: {lhs} vs {rhs}");
    }
}

#[test]
fn power_iteration_is_within_one_percent_of_svd() {
    let mut rng = rng_from_seed(51);
    for (m, n) in [(30, 20), (20, 30), (64, 64), (10, 200)] {
        let g = DMatrix::from_vec(m, n, complex_gaussian_vec(&mut rng, m * n));
        let op = DenseMatrix::from_columns(m, n, g.as_slice().to_vec());
        let est = norm_estimate(&op, 500, 1e-10, 52);
        let svd = largest_singular_value(&g);
        assert!((est - svd).abs() / svd < 0.01, "{m}x{n}: {est} vs {svd}");
    }

    // [T | C] of a small correlation system.
    let a = random_matrix(6, 8, 53);
    let rho = complex_gaussian_vec(&mut rng, 8);
    let b = cross_correlate(&a.apply(&rho)).unwrap();
    let rows = subsample_rows(6, 4, 54).unwrap();
    let sys = build_reduced_system(&a, &b, &rows, &ReducedSystemOptions::default()).unwrap();
    let nc = build_collector(rows.len(), 1.5, 55).unwrap();
    let stacked = HStack {
        left: sys.matrix(),
        right: &nc,
    };
    let t_dense = dense_kronecker(&a).unwrap().reduced(&rows, true);
    let c_dense = dense_collector(&nc).unwrap();
    let mut tc = DMatrix::zeros(rows.len(), 8 + nc.width());
    tc.columns_mut(0, 8).copy_from(&t_dense);
    tc.columns_mut(8, nc.width()).copy_from(&c_dense);
    let est = norm_estimate(&stacked, 500, 1e-10, 56);
    let svd = largest_singular_value(&tc);
    assert!((est - svd).abs() / svd < 0.01, "[T|C]: {est} vs {svd}");
}

#[test]
fn gelma_matches_dense_l1_on_20_instances() {
    let mut worst = 0.0f64;
    for index in 0..20 {
        let inst = instance(index);
        assert!(inst.t.nrows() <= 64 && inst.t.ncols() <= 32 && inst.collector.width() <= 256);
        let (state, reference) = solve_both(&inst, 2.0);
        assert!(state.converged, "instance {index} did not converge");
        assert!(reference.gap() <= 1e-8 * reference.primal.max(1.0), "instance {index}: gap {}", reference.gap());
        let gap = max_diff(&state.chi, &reference.chi).max(max_diff(&state.eta, &reference.eta));
        assert!(gap < 1e-4, "instance {index}: l-inf gap {gap:e}");
        worst = worst.max(gap);
    }
    eprintln!("worst GeLMA / oracle l-inf gap: {worst:e}");
}

#[test]
fn gelma_dual_satisfies_kkt_conditions() {
    for index in 0..5 {
        let inst = instance(100 + index);
        let (tau, lambda) = (2.0, 1.0);
        let (state, _) = solve_both(&inst, tau);
        // z is the dual of the normalized problem; the KKT conditions are scale free.
        let tz = inst.t.adjoint() * DVector::from_column_slice(&state.z);
        let cz = inst.collector.adjoint(&state.z).unwrap();
        let max_chi = linalg::norm_inf(&state.chi);
        for (k, chi) in state.chi.iter().enumerate() {
            if chi.norm() > 1e-6 * max_chi {
                let target = chi / chi.norm() * (tau * lambda);
                assert!((tz[k] - target).norm() < 1e-3, "instance {index}, on-support k = {k}");
            } else {
                assert!(tz[k].norm() <= tau * lambda + 1e-3, "instance {index}, off-support k = {k}");
            }
        }
        assert!(linalg::norm_inf(&cz) <= lambda + 1e-3, "instance {index}: collector dual");
    }
}

#[test]
fn cheap_single_column_is_recovered_by_both_solvers() {
    let inst = instance(200);
    let k = 3;
    let c = C64::from_polar(0.7, 1.1);
    let d: Vec<C64> = inst.t.column(k).iter().map(|v| v * c).collect();
    let inst = Instance { d, ..inst };
    let (state, reference) = solve_both(&inst, 0.5);
    let mut expect = vec![C64::default(); inst.t.ncols()];
    expect[k] = c;
    assert!(max_diff(&reference.chi, &expect) < 1e-6);
    assert!(max_diff(&state.chi, &expect) < 1e-4);
    assert!(linalg::norm_inf(&state.eta) < 1e-4);
}

#[test]
fn zero_data_gives_zero_solutions() {
    let inst = instance(300);
    let zeros = vec![C64::default(); inst.t.nrows()];
    let reference = dense_l1_solve(&inst.t, &dense_collector(&inst.collector).unwrap(), &zeros, 2.0, &L1Options::default())
        .unwrap();
    assert!(reference.chi.iter().chain(&reference.eta).all(|v| *v == C64::default()));
    let t = DenseMatrix::from_columns(inst.t.nrows(), inst.t.ncols(), inst.t.as_slice().to_vec());
    let cfg = SolverConfig::default();
    let steps = resolve_steps(&t, &inst.collector, &cfg).unwrap();
    let state = solve_operators(&t, &inst.collector, &zeros, &cfg, steps).unwrap();
    assert!(state.chi.iter().chain(&state.eta).chain(&state.z).all(|v| *v == C64::default()));
}

#[test]
fn kronecker_vec_identity_for_random_hermitian_x() {
    let a = random_matrix(5, 7, 71);
    let dense = dense_kronecker(&a).unwrap();
    let am = to_dmatrix(&a);
    let mut rng = rng_from_seed(72);
    for _ in 0..100 {
        let g = DMatrix::from_vec(7, 7, complex_gaussian_vec(&mut rng, 49));
        let x = &g + g.adjoint();
        let direct = vec_of(&(&am * &x * am.adjoint()));
        assert!((direct - dense.apply(&x)).camax() < 1e-12);
    }
}
