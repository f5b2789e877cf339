//! Stamping and eigenmode checks against hand-built nodal matrices,
//! characteristic polynomials and finite differences.

mod common;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::sample_cell;
use readout_codesign::circuit_model::*;
use readout_codesign::eigenmode::*;

/// Nodal matrices from an explicit element list, one 2×2 stamp at a time.
fn element_list_matrices(p: &JpaCellParams, cells: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = 8 * cells + 1;
    let mut c = DMatrix::zeros(n, n);
    let mut l = DMatrix::zeros(n, n);
    let stamp = |m: &mut DMatrix<f64>, a: usize, b: Option<usize>, v: f64| {
        m[(a, a)] += v;
        if let Some(b) = b {
            m[(b, b)] += v;
            m[(a, b)] -= v;
            m[(b, a)] -= v;
        }
    };
    for node in 0..n {
        if node % 8 != 4 {
            stamp(&mut c, node, None, p.c_ground);
        }
    }
    for cell in 0..cells {
        let b = 8 * cell;
        stamp(&mut c, b + 4, None, p.c1 + p.c2 + p.c_shunt);
        stamp(&mut l, b + 4, None, 1.0 / p.l_shunt);
        for (x, y) in [(0, 4), (4, 8)] {
            stamp(&mut c, b + x, Some(b + y), p.c_primary);
            stamp(&mut l, b + x, Some(b + y), 1.0 / p.l_primary);
        }
        for k in 0..8 {
            stamp(&mut c, b + k, Some(b + k + 1), p.c_secondary);
            stamp(&mut l, b + k, Some(b + k + 1), 1.0 / p.l_secondary);
        }
    }
    (c, l)
}

fn rel_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol * b.amax()
}

#[test]
fn stamping_matches_element_list() {
    let p = sample_cell();
    for cells in [1u32, 2, 3] {
        let m = stamp_array(&JpaArrayParams {
            cell: p.clone(),
            n_cells: cells,
            line_impedance: 50.0,
            quality_factor: 100.0,
        })
        .unwrap();
        let (c, l) = element_list_matrices(&p, cells as usize);
        assert_eq!(m.n_nodes, 8 * cells as usize + 1);
        assert!(rel_close(&m.c_matrix, &c, 1e-15));
        assert!(rel_close(&m.linv_matrix, &l, 1e-15));
    }
}

#[test]
fn center_node_is_exact() {
    let p = sample_cell();
    let m = stamp_matrices(&p).unwrap();
    assert_eq!(m.c_matrix[(4, 4)], p.c1 + p.c2 + p.c_shunt + 2.0 * p.c_primary + 2.0 * p.c_secondary);
}

#[test]
fn single_node_analytic() {
    let (c, l) = (215e-15, 2.7e-9);
    let m = CircuitMatrices::from_parts(DMatrix::from_element(1, 1, c), DMatrix::from_element(1, 1, 1.0 / l)).unwrap();
    let s = solve_modes(&m, 50.0).unwrap();
    let omega = 1.0 / (l * c).sqrt();
    assert!((s.omegas[0] - omega).abs() <= 1e-12 * omega);
    assert!((s.c_eff[0] - c).abs() <= 1e-12 * c);
    assert!((s.l_eff[0].unwrap() - l).abs() <= 1e-12 * l);
    assert!((s.z_eff[0].unwrap() - (l / c).sqrt()).abs() <= 1e-12 * (l / c).sqrt());
}

#[test]
fn two_node_matches_characteristic_polynomial() {
    let c = DMatrix::from_row_slice(2, 2, &[3.0e-13, -0.4e-13, -0.4e-13, 1.7e-13]);
    let k = DMatrix::from_row_slice(2, 2, &[2.5e9, -1.1e9, -1.1e9, 4.0e9]);
    let m = CircuitMatrices::from_parts(c.clone(), k.clone()).unwrap();
    let s = solve_modes(&m, 10.0).unwrap();
    // det(K − μC) = aμ² + bμ + d
    let a = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(0, 1)];
    let b = -(k[(0, 0)] * c[(1, 1)] + k[(1, 1)] * c[(0, 0)]) + 2.0 * k[(0, 1)] * c[(0, 1)];
    let d = k[(0, 0)] * k[(1, 1)] - k[(0, 1)] * k[(0, 1)];
    let disc = (b * b - 4.0 * a * d).sqrt();
    let mut mu = [(-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a)];
    mu.sort_by(f64::total_cmp);
    for (w, m) in s.omegas.iter().zip(mu) {
        assert!((w * w - m).abs() <= 1e-10 * m, "{} vs {m}", w * w);
    }
}

#[test]
fn stamped_residuals_are_small() {
    for cells in [1u32, 3] {
        let m = stamp_array(&JpaArrayParams {
            cell: sample_cell(),
            n_cells: cells,
            line_impedance: 50.0,
            quality_factor: 100.0,
        })
        .unwrap();
        let s = solve_modes(&m, 100.0).unwrap();
        assert_eq!(s.len(), m.n_nodes);
        let tol = 1e-10 * inf_norm(&m.linv_matrix);
        assert!(max_residual(&s, &m) <= tol);
        for k in 0..s.len() {
            assert!((s.mode_vectors.column(k).norm() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn mode_vectors_are_c_orthogonal() {
    let m = stamp_matrices(&sample_cell()).unwrap();
    let s = solve_modes(&m, 100.0).unwrap();
    let gram = s.mode_vectors.transpose() * &m.c_matrix * &s.mode_vectors;
    for i in 0..s.len() {
        for j in 0..s.len() {
            if i != j {
                assert!(gram[(i, j)].abs() <= 1e-9 * (gram[(i, i)] * gram[(j, j)]).sqrt());
            }
        }
    }
}

fn central_derivative(f: impl Fn(f64) -> f64, order: usize, h: f64) -> f64 {
    // Standard central stencils.
    match order {
        2 => (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h),
        4 => (f(2.0 * h) - 4.0 * f(h) + 6.0 * f(0.0) - 4.0 * f(-h) + f(-2.0 * h)) / h.powi(4),
        _ => unreachable!(),
    }
}

#[test]
fn taylor_matches_finite_differences() {
    let p = sample_cell();
    for phi_ext in [0.0, 0.13, 0.5] {
        let flux = FluxBias::new(phi_ext);
        let a = taylor_coefficients(&p, flux, 6).unwrap();
        let u = |x: f64| nonlinear_potential(x, &p, flux);
        assert!((a[0] - u(0.0)).abs() <= 1e-12 * u(0.0).abs().max(1.0));
        let first = (u(1e-5) - u(-1e-5)) / 2e-5;
        assert!((a[1] - first).abs() <= 1e-6 * a[2].abs().max(1.0));
        let second = central_derivative(u, 2, 1e-3) / 2.0;
        assert!((a[2] - second).abs() <= 1e-5 * a[2].abs());
        let fourth = central_derivative(u, 4, 2e-2) / 24.0;
        assert!((a[4] - fourth).abs() <= 1e-3 * a[4].abs().max(1e-3), "{} vs {fourth}", a[4]);
    }
}

#[test]
fn flux_periodicity_is_joint() {
    let p = sample_cell();
    let n = f64::from(p.n_squids);
    for &phi in &[-3.0, 0.2, 1.7] {
        for &f in &[0.0, 0.31] {
            let u = nonlinear_potential(phi, &p, FluxBias::new(f));
            let shifted = nonlinear_potential(phi + 2.0 * PI, &p, FluxBias::new(f + 1.0));
            assert!((u - shifted).abs() <= 1e-9 * u.abs().max(1.0));
            let full = nonlinear_potential(phi, &p, FluxBias::new(f + 8.0 * n));
            assert!((u - full).abs() <= 1e-9 * u.abs().max(1.0));
        }
    }
}

proptest! {
    #[test]
    fn stamped_matrices_symmetric_and_pd(
        cg in 0.1..10.0f64, cj in 1.0..100.0f64, cm in 1.0..100.0f64,
        ls in 0.1..5.0f64, lm in 0.1..5.0f64, lsh in 0.1..5.0f64, cells in 1u32..4,
    ) {
        let p = JpaCellParams {
            c_ground: cg * 1e-15, c_secondary: cj * 1e-15, c_primary: cm * 1e-15,
            l_secondary: ls * 1e-9, l_primary: lm * 1e-9, l_shunt: lsh * 1e-9,
            ..sample_cell()
        };
        let m = stamp_array(&JpaArrayParams { cell: p, n_cells: cells, line_impedance: 50.0, quality_factor: 50.0 }).unwrap();
        prop_assert_eq!(&m.c_matrix, &m.c_matrix.transpose());
        prop_assert_eq!(&m.linv_matrix, &m.linv_matrix.transpose());
        prop_assert!(m.c_matrix.clone().cholesky().is_some());
        let s = solve_modes(&m, 50.0).unwrap();
        prop_assert!(s.omegas.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(max_residual(&s, &m) <= 1e-10 * inf_norm(&m.linv_matrix));
    }

    #[test]
    fn frequencies_scale_with_inductance(k in 0.1..10.0f64) {
        let m = stamp_matrices(&sample_cell()).unwrap();
        let scaled = CircuitMatrices::from_parts(m.c_matrix.clone(), &m.linv_matrix * k).unwrap();
        let a = solve_modes(&m, 10.0).unwrap();
        let b = solve_modes(&scaled, 10.0).unwrap();
        for (x, y) in a.omegas.iter().zip(&b.omegas) {
            prop_assert!((y - x * k.sqrt()).abs() <= 1e-9 * y);
        }
    }
}
