//! Normal modes of a stamped circuit and their effective LC parameters.
//!
//! The mode equation `Ω² = C⁻¹L⁻¹` is solved in its symmetric-definite form
//! `L⁻¹Ψ = ω²CΨ`: `C` is Cholesky-factored (`C = GGᵀ`), the problem is
//! reduced to the symmetric matrix `G⁻¹L⁻¹G⁻ᵀ`, and eigenvectors are mapped
//! back with `Ψ = G⁻ᵀy`.
//!
//! Returned mode vectors have unit Euclidean norm. With that normalization
//! `c_eff = ΨᵀCΨ` and `l_eff = 1/(ΨᵀL⁻¹Ψ)` are in farads and henries and
//! satisfy `ω = 1/sqrt(l_eff·c_eff)`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::circuit_model::CircuitMatrices;
use crate::{Error, Result};

/// Modes whose ω² falls below this fraction of the largest ω² are null modes.
const NULL_MODE_REL: f64 = 1e-14;
/// Reflection magnitudes are clamped to this floor (dB).
pub const S11_FLOOR_DB: f64 = -120.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSolution {
    /// Angular frequencies (rad/s), ascending.
    pub omegas: Vec<f64>,
    /// Columns are the unit-norm mode vectors Ψ_i, in the order of `omegas`.
    pub mode_vectors: DMatrix<f64>,
    pub c_eff: Vec<f64>,
    /// `None` for null (zero-frequency) modes.
    pub l_eff: Vec<Option<f64>>,
    pub z_eff: Vec<Option<f64>>,
    /// Coupling rate ω/Q_eff (rad/s).
    pub kappa_eff: Vec<f64>,
    pub quality_factor: f64,
}

impl ModeSolution {
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn is_null(&self, mode: usize) -> bool {
        self.l_eff[mode].is_none()
    }

    /// Mode frequencies in GHz.
    pub fn freqs_ghz(&self) -> Vec<f64> {
        self.omegas.iter().map(|w| w / (2.0 * PI) / 1e9).collect()
    }

    /// `mode,omega_rad_s,f_GHz,c_eff_F,l_eff_H,z_eff_ohm,kappa_eff_rad_s`;
    /// null modes leave the inductance and impedance cells empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "mode",
            "omega_rad_s",
            "f_GHz",
            "c_eff_F",
            "l_eff_H",
            "z_eff_ohm",
            "kappa_eff_rad_s",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for i in 0..self.len() {
            w.write_record([
                i.to_string(),
                self.omegas[i].to_string(),
                (self.omegas[i] / (2.0 * PI) / 1e9).to_string(),
                self.c_eff[i].to_string(),
                opt(self.l_eff[i]),
                opt(self.z_eff[i]),
                self.kappa_eff[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Effective capacitance and inductance of one mode vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveParams {
    pub c_eff: f64,
    /// `None` when `ΨᵀL⁻¹Ψ` vanishes (null mode).
    pub l_eff: Option<f64>,
}

/// Lower-triangular Cholesky factor. Reports the first node whose pivot is
/// not strictly positive.
fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let mut g = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= g[(j, k)] * g[(j, k)];
        }
        if !(d > scale * 1e-14) {
            return Err(Error::NotPositiveDefinite { node: j });
        }
        let djj = d.sqrt();
        g[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= g[(i, k)] * g[(j, k)];
            }
            g[(i, j)] = s / djj;
        }
    }
    Ok(g)
}

pub fn effective_parameters(
    mode_vector: &DVector<f64>,
    matrices: &CircuitMatrices,
) -> Result<EffectiveParams> {
    if mode_vector.len() != matrices.n_nodes {
        return Err(Error::invalid("mode_vector", "length does not match the circuit"));
    }
    if mode_vector.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("mode_vector", "must be non-null"));
    }
    let c_eff = mode_vector.dot(&(&matrices.c_matrix * mode_vector));
    let inv_l = mode_vector.dot(&(&matrices.linv_matrix * mode_vector));
    // Round-off around a true zero scales with the largest L⁻¹ entry.
    let zero_tol = 1e-13 * matrices.linv_matrix.amax() * mode_vector.norm_squared();
    let l_eff = (inv_l > zero_tol).then(|| 1.0 / inv_l);
    Ok(EffectiveParams { c_eff, l_eff })
}

/// Solves `L⁻¹Ψ = ω²CΨ` and derives per-mode `c_eff`, `l_eff`, `z_eff`,
/// `kappa_eff = ω/Q_eff`.
pub fn solve_modes(matrices: &CircuitMatrices, quality_factor: f64) -> Result<ModeSolution> {
    if !(quality_factor.is_finite() && quality_factor > 0.0) {
        return Err(Error::invalid("quality_factor", "must be > 0"));
    }
    let n = matrices.n_nodes;
    // Work in scaled units; the spectrum rescales by s_l/s_c.
    let s_c = matrices.c_matrix.amax();
    let s_l = match matrices.linv_matrix.amax() {
        v if v > 0.0 => v,
        _ => 1.0,
    };
    if !(s_c > 0.0) {
        return Err(Error::NotPositiveDefinite { node: 0 });
    }
    let c = &matrices.c_matrix / s_c;
    let l = &matrices.linv_matrix / s_l;

    let g = cholesky(&c)?;
    let g_inv = g
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("triangular inverse failed".into()))?;
    let reduced = &g_inv * &l * g_inv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let max_mu = eig.eigenvalues.amax();
    let mut omegas = Vec::with_capacity(n);
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    let mut c_eff = Vec::with_capacity(n);
    let mut l_eff = Vec::with_capacity(n);
    let mut z_eff = Vec::with_capacity(n);
    let mut kappa_eff = Vec::with_capacity(n);

    for (col, &idx) in order.iter().enumerate() {
        let mu = eig.eigenvalues[idx];
        if mu < -1e-10 * max_mu.max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!("negative eigenvalue {mu} (L⁻¹ not PSD?)")));
        }
        let null = mu <= NULL_MODE_REL * max_mu;
        let omega = if null { 0.0 } else { (mu * s_l / s_c).sqrt() };

        let y = eig.eigenvectors.column(idx);
        let mut psi = g_inv.transpose() * y;
        psi /= psi.norm();
        // Fix the sign so the largest component is positive.
        let pivot = psi.iamax();
        if psi[pivot] < 0.0 {
            psi.neg_mut();
        }

        let eff = effective_parameters(&psi, matrices)?;
        let l = if null { None } else { eff.l_eff };
        omegas.push(omega);
        c_eff.push(eff.c_eff);
        z_eff.push(l.map(|l| (l / eff.c_eff).sqrt()));
        l_eff.push(l);
        kappa_eff.push(omega / quality_factor);
        vectors.set_column(col, &psi);
    }

    Ok(ModeSolution {
        omegas,
        mode_vectors: vectors,
        c_eff,
        l_eff,
        z_eff,
        kappa_eff,
        quality_factor,
    })
}

/// Largest `‖L⁻¹Ψ − ω²CΨ‖∞` over all modes.
pub fn max_residual(solution: &ModeSolution, matrices: &CircuitMatrices) -> f64 {
    (0..solution.len())
        .map(|k| {
            let psi = solution.mode_vectors.column(k);
            let w2 = solution.omegas[k] * solution.omegas[k];
            (&matrices.linv_matrix * psi - &matrices.c_matrix * psi * w2).amax()
        })
        .fold(0.0, f64::max)
}

/// Infinity norm (max absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Reflection magnitude (dB) of the nearest mode's series-RLC equivalent
/// against a line of impedance `line_impedance`, for each frequency in GHz.
///
/// `R = z_eff/Q_eff`; `Z(f) = R + j(2πf·l_eff − 1/(2πf·c_eff))`;
/// `Γ = (Z − Z_0)/(Z + Z_0)`. Values are clamped at [`S11_FLOOR_DB`].
pub fn s11_estimate(
    solution: &ModeSolution,
    line_impedance: f64,
    freq_grid_ghz: &[f64],
) -> Result<Vec<f64>> {
    if freq_grid_ghz.is_empty() {
        return Err(Error::invalid("freq_grid", "must not be empty"));
    }
    if !(line_impedance.is_finite() && line_impedance > 0.0) {
        return Err(Error::invalid("line_impedance", "must be > 0"));
    }
    let modes: Vec<usize> = (0..solution.len()).filter(|&i| !solution.is_null(i)).collect();
    if modes.is_empty() {
        return Err(Error::invalid("solution", "has no non-null modes"));
    }
    let freqs = solution.freqs_ghz();
    let z0 = Complex64::new(line_impedance, 0.0);

    freq_grid_ghz
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f < 20.0) {
                return Err(Error::invalid("freq_grid", format!("{f} GHz outside (0, 20)")));
            }
            let m = *modes
                .iter()
                .min_by(|&&a, &&b| (freqs[a] - f).abs().total_cmp(&(freqs[b] - f).abs()))
                .expect("non-empty");
            let (c, l) = (solution.c_eff[m], solution.l_eff[m].expect("non-null"));
            let r = solution.z_eff[m].expect("non-null") / solution.quality_factor;
            let w = 2.0 * PI * f * 1e9;
            let z = Complex64::new(r, w * l - 1.0 / (w * c));
            let gamma = ((z - z0) / (z + z0)).norm();
            Ok((20.0 * gamma.log10()).max(S11_FLOOR_DB))
        })
        .collect()
}
