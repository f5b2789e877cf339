//! Lumped-element model of the coupled-Quarton JPA cell.
//!
//! One cell has nine node fluxes `ϕ_0 … ϕ_8`. Node 4 is the coupling
//! resonator between the two Quartons; nodes 0..=3 and 5..=8 sit on the
//! secondary-junction arrays, and the primary junctions bridge (0,4) and
//! (4,8). The Lagrangian quadratic forms are stamped element by element
//! into a capacitance matrix `C` (farads) and an inverse-inductance matrix
//! `L⁻¹` (1/henries), so that `L = ½ϕ̇ᵀCϕ̇ − ½ϕᵀL⁻¹ϕ`.
//!
//! Phases are dimensionless (flux normalized by Φ₀/2π).

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::csv_util::write_table;
use crate::{Error, Result};

/// Number of node fluxes in one cell.
pub const NODES_PER_CELL: usize = 9;
/// Index of the coupling-resonator node inside a cell.
pub const CENTER_NODE: usize = 4;

/// Parameters of a single JPA cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JpaCellParams {
    /// Parasitic capacitance from each array node to ground, `C_g` (F).
    pub c_ground: f64,
    /// Secondary junction capacitance `C_j` (F).
    pub c_secondary: f64,
    /// Secondary junction inductance `L_Js` (H).
    pub l_secondary: f64,
    /// Secondary Josephson energy `E_Js` (GHz·h).
    pub e_secondary: f64,
    /// Primary junction capacitance `C_m` (F).
    pub c_primary: f64,
    /// Primary junction inductance `L_Jm` (H).
    pub l_primary: f64,
    /// Primary Josephson energy `E_Jm` (GHz·h).
    pub e_primary: f64,
    /// Number of primary SQUIDs per cell, `N`.
    pub n_squids: u32,
    pub c1: f64,
    pub c2: f64,
    /// Shunt capacitance at the center node (F).
    pub c_shunt: f64,
    /// Shunt inductance at the center node (H).
    pub l_shunt: f64,
}

impl JpaCellParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_ground", self.c_ground),
            ("c_secondary", self.c_secondary),
            ("l_secondary", self.l_secondary),
            ("c_primary", self.c_primary),
            ("l_primary", self.l_primary),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c_shunt", self.c_shunt),
            ("l_shunt", self.l_shunt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("e_secondary", self.e_secondary), ("e_primary", self.e_primary)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if self.n_squids < 1 {
            return Err(Error::invalid("n_squids", "must be >= 1"));
        }
        Ok(())
    }
}

/// A linear cascade of identical cells terminated by a λ/4 line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JpaArrayParams {
    pub cell: JpaCellParams,
    pub n_cells: u32,
    /// Characteristic impedance `Z_0` of the line (Ω).
    pub line_impedance: f64,
    /// Mismatch quality factor `Q_eff`.
    pub quality_factor: f64,
}

impl JpaArrayParams {
    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        if self.n_cells < 1 {
            return Err(Error::invalid("n_cells", "must be >= 1"));
        }
        if !(self.line_impedance.is_finite() && self.line_impedance > 0.0) {
            return Err(Error::invalid("line_impedance", "must be > 0"));
        }
        if !(self.quality_factor.is_finite() && self.quality_factor > 0.0) {
            return Err(Error::invalid("quality_factor", "must be > 0"));
        }
        Ok(())
    }
}

/// External flux bias in units of the flux quantum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FluxBias {
    pub phi_ext: f64,
}

impl FluxBias {
    pub fn new(phi_ext: f64) -> Self {
        Self { phi_ext }
    }

    /// The flux expressed as a phase offset, `2π·phi_ext`.
    pub fn phase(&self) -> f64 {
        2.0 * PI * self.phi_ext
    }
}

/// Stamped capacitance and inverse-inductance matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitMatrices {
    pub c_matrix: DMatrix<f64>,
    pub linv_matrix: DMatrix<f64>,
    pub n_nodes: usize,
}

impl CircuitMatrices {
    /// Wraps externally built matrices after checking shape and symmetry.
    pub fn from_parts(c_matrix: DMatrix<f64>, linv_matrix: DMatrix<f64>) -> Result<Self> {
        let n = c_matrix.nrows();
        if n == 0 || !c_matrix.is_square() || linv_matrix.shape() != (n, n) {
            return Err(Error::invalid("matrices", "C and L⁻¹ must be square and of equal size"));
        }
        for (name, m) in [("c_matrix", &c_matrix), ("linv_matrix", &linv_matrix)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(name, "contains non-finite entries"));
            }
            let scale = m.amax().max(f64::MIN_POSITIVE);
            for i in 0..n {
                for j in 0..i {
                    if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                        return Err(Error::invalid(name, format!("not symmetric at ({i},{j})")));
                    }
                }
            }
        }
        Ok(Self {
            c_matrix,
            linv_matrix,
            n_nodes: n,
        })
    }

    /// `L⁻¹` in units of `1/L_Js`, i.e. the dimensionless 2/−1 pattern.
    pub fn normalized_linv(&self, l_secondary: f64) -> DMatrix<f64> {
        &self.linv_matrix * l_secondary
    }

    /// Writes one matrix as CSV with header `node_0..node_{n-1}`.
    pub fn write_csv<W: Write>(matrix: &DMatrix<f64>, writer: W) -> Result<()> {
        let header: Vec<String> = (0..matrix.ncols()).map(|i| format!("node_{i}")).collect();
        let rows = (0..matrix.nrows()).map(|r| matrix.row(r).iter().copied().collect());
        write_table(writer, &header, rows)
    }
}

/// Element families, in the order their contributions are summed on a
/// node's diagonal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Ground,
    Shunt,
    Primary,
    Secondary,
}

/// Accumulates a nodal matrix from two-terminal and grounded elements.
///
/// Diagonal entries are summed per element family as `count·value`, so that
/// e.g. the center node comes out as `C_1+C_2+C_s + 2C_m + 2C_j` with no
/// intermediate rounding beyond that expression.
struct Stamper {
    n: usize,
    off: DMatrix<f64>,
    diag: Vec<Vec<(Kind, f64, u32)>>,
}

impl Stamper {
    fn new(n: usize) -> Self {
        Self {
            n,
            off: DMatrix::zeros(n, n),
            diag: vec![Vec::new(); n],
        }
    }

    fn add_diag(&mut self, node: usize, kind: Kind, value: f64) {
        let slot = &mut self.diag[node];
        match slot.iter_mut().find(|(k, v, _)| *k == kind && *v == value) {
            Some(entry) => entry.2 += 1,
            None => slot.push((kind, value, 1)),
        }
    }

    fn ground(&mut self, node: usize, kind: Kind, value: f64) {
        self.add_diag(node, kind, value);
    }

    fn branch(&mut self, a: usize, b: usize, kind: Kind, value: f64) {
        self.add_diag(a, kind, value);
        self.add_diag(b, kind, value);
        self.off[(a, b)] -= value;
        self.off[(b, a)] -= value;
    }

    fn finish(mut self) -> DMatrix<f64> {
        for node in 0..self.n {
            let mut terms = std::mem::take(&mut self.diag[node]);
            terms.sort_by_key(|x| x.0);
            let sum = terms
                .iter()
                .fold(0.0, |acc, &(_, v, count)| acc + f64::from(count) * v);
            self.off[(node, node)] = sum;
        }
        self.off
    }
}

/// Stamps the kinetic and linear potential terms of `cells` chained cells.
fn stamp_cells(p: &JpaCellParams, cells: usize) -> CircuitMatrices {
    let n = 8 * cells + 1;
    let mut c = Stamper::new(n);
    let mut l = Stamper::new(n);
    let shunt_c = p.c1 + p.c2 + p.c_shunt;

    for cell in 0..cells {
        let base = 8 * cell;
        let node = |k: usize| base + k;

        // Shared boundary nodes are grounded by the cell on their left only.
        for k in 0..NODES_PER_CELL {
            if k == CENTER_NODE || (k == 0 && cell > 0) {
                continue;
            }
            c.ground(node(k), Kind::Ground, p.c_ground);
        }
        c.ground(node(CENTER_NODE), Kind::Shunt, shunt_c);
        l.ground(node(CENTER_NODE), Kind::Shunt, 1.0 / p.l_shunt);

        for (a, b) in [(0, CENTER_NODE), (CENTER_NODE, 8)] {
            c.branch(node(a), node(b), Kind::Primary, p.c_primary);
            l.branch(node(a), node(b), Kind::Primary, 1.0 / p.l_primary);
        }
        for k in 0..8 {
            c.branch(node(k), node(k + 1), Kind::Secondary, p.c_secondary);
            l.branch(node(k), node(k + 1), Kind::Secondary, 1.0 / p.l_secondary);
        }
    }

    CircuitMatrices {
        c_matrix: c.finish(),
        linv_matrix: l.finish(),
        n_nodes: n,
    }
}

/// Capacitance and inverse-inductance matrices of one cell (9×9).
pub fn stamp_matrices(params: &JpaCellParams) -> Result<CircuitMatrices> {
    params.validate()?;
    Ok(stamp_cells(params, 1))
}

/// Same as [`stamp_matrices`] without the positivity check, for studying
/// degenerate limits (e.g. zero coupling capacitances). The result may be
/// singular.
pub fn stamp_matrices_unchecked(params: &JpaCellParams) -> CircuitMatrices {
    stamp_cells(params, 1)
}

/// Matrices of `n_cells` cells where each cell's node 8 is the next cell's
/// node 0. Size is `8·n_cells + 1`.
pub fn stamp_array(params: &JpaArrayParams) -> Result<CircuitMatrices> {
    params.validate()?;
    Ok(stamp_cells(&params.cell, params.n_cells as usize))
}

/// Nonlinear junction energy (GHz·h) for a phase drop `phase` across the cell:
/// `8N·E_Js·cos((φ−2πΦ)/8N) + N·E_Jm·cos((φ−2πΦ)/N)`.
pub fn nonlinear_potential(phase: f64, params: &JpaCellParams, flux: FluxBias) -> f64 {
    let n = f64::from(params.n_squids);
    let shifted = phase - flux.phase();
    8.0 * n * params.e_secondary * (shifted / (8.0 * n)).cos()
        + n * params.e_primary * (shifted / n).cos()
}

/// Taylor coefficients `a_0..=a_max_order` of [`nonlinear_potential`] about
/// `φ = 0`, so that `U(φ) ≈ Σ a_k φ^k`.
pub fn taylor_coefficients(
    params: &JpaCellParams,
    flux: FluxBias,
    max_order: usize,
) -> Result<Vec<f64>> {
    if !matches!(max_order, 2 | 4 | 6) {
        return Err(Error::invalid("max_order", format!("must be 2, 4 or 6, got {max_order}")));
    }
    let n = f64::from(params.n_squids);
    let theta = flux.phase();
    // d^k/dφ^k [A cos((φ−θ)/s)] at φ=0 is A·s^{-k}·cos(kπ/2 − θ/s).
    let terms = [(8.0 * n * params.e_secondary, 8.0 * n), (n * params.e_primary, n)];
    let mut factorial = 1.0;
    let coeffs = (0..=max_order)
        .map(|k| {
            if k > 0 {
                factorial *= k as f64;
            }
            let kf = k as f64;
            let deriv: f64 = terms
                .iter()
                .map(|&(amp, s)| amp * s.powi(-(k as i32)) * (kf * PI / 2.0 - theta / s).cos())
                .sum();
            deriv / factorial
        })
        .collect();
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_params() -> JpaCellParams {
        JpaCellParams {
            c_ground: 1.0e-15,
            c_secondary: 40.0e-15,
            l_secondary: 0.5e-9,
            e_secondary: 300.0,
            c_primary: 30.0e-15,
            l_primary: 0.8e-9,
            e_primary: 180.0,
            n_squids: 2,
            c1: 100.0e-15,
            c2: 120.0e-15,
            c_shunt: 250.0e-15,
            l_shunt: 1.5e-9,
        }
    }

    #[test]
    fn center_node_matches_closed_form() {
        let p = sample_params();
        let m = stamp_matrices(&p).unwrap();
        assert_eq!(m.n_nodes, 9);
        let cx = p.c1 + p.c2 + p.c_shunt + 2.0 * p.c_primary + 2.0 * p.c_secondary;
        assert_eq!(m.c_matrix[(4, 4)], cx);
        let lx = 2.0 / p.l_secondary + 2.0 / p.l_primary + 1.0 / p.l_shunt;
        assert!((m.linv_matrix[(4, 4)] - lx).abs() <= 1e-15 * lx);
    }

    #[test]
    fn equal_junction_inductances_reproduce_printed_lx() {
        let mut p = sample_params();
        p.l_primary = p.l_secondary;
        let m = stamp_matrices(&p).unwrap();
        let norm = m.normalized_linv(p.l_secondary);
        let lx = 4.0 + p.l_secondary / p.l_shunt;
        assert!((norm[(4, 4)] - lx).abs() < 1e-12);
        assert!((norm[(1, 1)] - 2.0).abs() < 1e-12);
        assert!((norm[(0, 1)] + 1.0).abs() < 1e-12);
        assert!((norm[(0, 4)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrices_are_bitwise_symmetric() {
        let m = stamp_matrices(&sample_params()).unwrap();
        assert_eq!(m.c_matrix, m.c_matrix.transpose());
        assert_eq!(m.linv_matrix, m.linv_matrix.transpose());
    }

    #[test]
    fn rejects_non_positive_elements() {
        let mut p = sample_params();
        p.c_shunt = 0.0;
        assert!(matches!(stamp_matrices(&p), Err(Error::Validation { field, .. }) if field == "c_shunt"));
        let mut p = sample_params();
        p.n_squids = 0;
        assert!(stamp_matrices(&p).is_err());
    }

    #[test]
    fn decoupled_limit_leaves_center_node_empty() {
        let mut p = sample_params();
        p.c_secondary = 0.0;
        p.c_primary = 0.0;
        p.c1 = 0.0;
        p.c2 = 0.0;
        p.c_shunt = 0.0;
        let m = stamp_matrices_unchecked(&p);
        for i in 0..9 {
            for j in 0..9 {
                let expected = if i == j && i != 4 { 1.0e-15 } else { 0.0 };
                assert_eq!(m.c_matrix[(i, j)], expected);
            }
        }
    }

    #[test]
    fn single_cell_array_equals_cell() {
        let arr = JpaArrayParams {
            cell: sample_params(),
            n_cells: 1,
            line_impedance: 50.0,
            quality_factor: 100.0,
        };
        assert_eq!(stamp_array(&arr).unwrap(), stamp_matrices(&arr.cell).unwrap());
    }

    #[test]
    fn potential_at_origin() {
        let p = sample_params();
        let n = 2.0;
        let u = nonlinear_potential(0.0, &p, FluxBias::default());
        assert_eq!(u, 8.0 * n * p.e_secondary + n * p.e_primary);
    }

    #[test]
    fn taylor_rejects_odd_order() {
        assert!(taylor_coefficients(&sample_params(), FluxBias::default(), 3).is_err());
    }

    #[test]
    fn taylor_odd_terms_vanish_at_zero_flux() {
        let c = taylor_coefficients(&sample_params(), FluxBias::default(), 6).unwrap();
        assert_eq!(c.len(), 7);
        for k in [1, 3, 5] {
            assert!(c[k].abs() < 1e-12 * c[0].abs(), "a_{k} = {}", c[k]);
        }
        let p = sample_params();
        let n = 2.0;
        let expected = -(p.e_secondary / (16.0 * n) + p.e_primary / (2.0 * n));
        assert!((c[2] - expected).abs() < 1e-12 * expected.abs());
    }
}
