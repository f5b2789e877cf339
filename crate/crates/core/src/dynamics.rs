//! Coupled qubit–bus–qubit dynamics in the single-excitation-per-mode basis.
//!
//! Two qubits (`a`, `b`) and a bus resonator are truncated to two levels
//! each. Basis index `i` encodes the occupations as bits:
//! `i = n_a + 2·n_b + 4·n_bus`, giving
//! `|00,0⟩, |10,0⟩, |01,0⟩, |11,0⟩, |00,1⟩, |10,1⟩, |01,1⟩, |11,1⟩`.
//!
//! Each `(x† + x)` factor flips one bit, so a coupling term touching a set of
//! modes links every basis state to the state with those bits flipped.
//! Frequencies are entered in GHz/MHz and the coefficient matrix is in
//! rad/µs; times are in µs.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DIM: usize = 8;

pub type CoefficientMatrix = SMatrix<f64, DIM, DIM>;
pub type DensityMatrix = SMatrix<Complex64, DIM, DIM>;

const BIT_A: usize = 0b001;
const BIT_B: usize = 0b010;
const BIT_BUS: usize = 0b100;

/// MHz → rad/µs.
fn angular(mhz: f64) -> f64 {
    2.0 * PI * mhz
}

/// Occupation triple `(n_a, n_b, n_bus)` of a basis index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisLabel {
    pub n_a: u8,
    pub n_b: u8,
    pub n_bus: u8,
}

impl BasisLabel {
    pub fn from_index(index: usize) -> Self {
        assert!(index < DIM, "basis index {index} out of range");
        Self {
            n_a: (index & BIT_A != 0) as u8,
            n_b: (index & BIT_B != 0) as u8,
            n_bus: (index & BIT_BUS != 0) as u8,
        }
    }

    pub fn index(&self) -> usize {
        usize::from(self.n_a) + 2 * usize::from(self.n_b) + 4 * usize::from(self.n_bus)
    }

    /// Ket notation `|ab,bus⟩`.
    pub fn ket(&self) -> String {
        format!("|{}{},{}⟩", self.n_a, self.n_b, self.n_bus)
    }
}

/// Chip frequencies and Kerr data, e.g. from an EPR extraction.
///
/// Mode indices for `cross_kerr` run over qubits first, then resonators.
/// A diagonal entry `(i, i)` is the mode's self-Kerr.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChipSpec {
    pub qubit_freqs_ghz: Vec<f64>,
    pub anharmonicities_mhz: Vec<f64>,
    pub resonator_freqs_ghz: Vec<f64>,
    pub cross_kerr_mhz: Vec<(usize, usize, f64)>,
}

impl ChipSpec {
    /// The four-qubit chip: Q1..Q4, then Res1,3, Res2, Res4.
    pub fn four_qubit_chip() -> Self {
        Self {
            qubit_freqs_ghz: vec![5.46, 4.94, 5.6, 5.11],
            anharmonicities_mhz: vec![287.0, 280.0, 289.0, 257.0],
            resonator_freqs_ghz: vec![5.56, 4.91, 4.97],
            cross_kerr_mhz: vec![
                (0, 2, 2.34),
                (0, 4, 3.75),
                (1, 3, 0.0018),
                (1, 5, 8.01),
                (1, 6, 0.48),
                (2, 4, 3.1),
                (3, 5, 3.3),
                (3, 6, 0.16),
                (4, 4, 175.0),
                (5, 5, 154.0),
                (5, 6, 0.18),
                (6, 6, 190.0),
            ],
        }
    }

    pub fn n_modes(&self) -> usize {
        self.qubit_freqs_ghz.len() + self.resonator_freqs_ghz.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, fs) in [("qubit_freqs", &self.qubit_freqs_ghz), ("resonator_freqs", &self.resonator_freqs_ghz)] {
            if let Some(f) = fs.iter().find(|&&f| !(f > 0.0 && f < 20.0)) {
                return Err(Error::invalid(name, format!("{f} GHz outside (0, 20)")));
            }
        }
        if self.anharmonicities_mhz.len() != self.qubit_freqs_ghz.len() {
            return Err(Error::invalid("anharmonicities", "need one value per qubit"));
        }
        let n = self.n_modes();
        let mut seen: HashMap<(usize, usize), f64> = HashMap::new();
        for &(i, j, v) in &self.cross_kerr_mhz {
            if i >= n || j >= n {
                return Err(Error::invalid("cross_kerr", format!("mode index ({i},{j}) out of range")));
            }
            if !v.is_finite() {
                return Err(Error::invalid("cross_kerr", "non-finite entry"));
            }
            if let Some(&other) = seen.get(&(j, i)) {
                if other != v {
                    return Err(Error::invalid("cross_kerr", format!("asymmetric entry ({i},{j})")));
                }
            }
            seen.insert((i, j), v);
        }
        Ok(())
    }

    /// Symmetric lookup of a cross-Kerr entry.
    pub fn cross_kerr(&self, i: usize, j: usize) -> Option<f64> {
        self.cross_kerr_mhz
            .iter()
            .find(|&&(a, b, _)| (a, b) == (i, j) || (a, b) == (j, i))
            .map(|e| e.2)
    }
}

/// Coupling strengths in MHz (linear frequency; sign allowed).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingSet {
    /// qubit a – bus
    pub g1: f64,
    /// qubit b – bus
    pub g2: f64,
    /// qubit a – qubit b
    pub g3: f64,
    /// three-body qubit a – bus – qubit b
    pub g: f64,
    /// readout – bus – bus
    pub gc: f64,
}

impl CouplingSet {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("g1", self.g1), ("g2", self.g2), ("g3", self.g3), ("g", self.g), ("gc", self.gc)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Linear frequencies (GHz) of the three modes in the qubit–bus–qubit block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeFreqs {
    pub qubit_a_ghz: f64,
    pub qubit_b_ghz: f64,
    pub bus_ghz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", rename_all = "lowercase")]
pub enum FrameConfig {
    Lab,
    Rotating { drive_ghz: f64 },
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FrameConfig::Rotating { drive_ghz } if !(drive_ghz > 0.0 && drive_ghz.is_finite()) => {
                Err(Error::invalid("drive_freq", "must be > 0 in the rotating frame"))
            }
            _ => Ok(()),
        }
    }

    fn frame_ghz(&self) -> f64 {
        match *self {
            FrameConfig::Lab => 0.0,
            FrameConfig::Rotating { drive_ghz } => drive_ghz,
        }
    }

    /// Detuning of a mode from the frame, rad/µs.
    pub fn detuning(&self, f_ghz: f64) -> f64 {
        angular((f_ghz - self.frame_ghz()) * 1e3)
    }
}

/// Amplitude-damping rates per mode (MHz).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecayRates {
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub kappa_bus: f64,
}

impl DecayRates {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma_a", self.gamma_a), ("gamma_b", self.gamma_b), ("kappa_bus", self.kappa_bus)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Eight complex amplitudes, normalized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateAmplitudes {
    pub c: [Complex64; DIM],
}

impl StateAmplitudes {
    pub fn new(c: [Complex64; DIM]) -> Result<Self> {
        let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("amplitudes", format!("norm² = {norm}, expected 1")));
        }
        Ok(Self { c })
    }

    pub fn basis(index: usize) -> Self {
        let mut c = [Complex64::new(0.0, 0.0); DIM];
        c[index] = Complex64::new(1.0, 0.0);
        Self { c }
    }

    /// `|00,0⟩`.
    pub fn ground() -> Self {
        Self::basis(0)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix::from_fn(|i, j| self.c[i] * self.c[j].conj())
    }
}

/// Occupation-weighted detuning plus bit-flip couplings.
fn flip_matrix(detunings: [f64; 3], couplings: &[(usize, f64)]) -> CoefficientMatrix {
    let mut m = CoefficientMatrix::zeros();
    for i in 0..DIM {
        m[(i, i)] = (0..3)
            .filter(|&bit| i & (1 << bit) != 0)
            .map(|bit| detunings[bit])
            .sum();
        for &(mask, g) in couplings {
            m[(i, i ^ mask)] = angular(g);
        }
    }
    m
}

/// Coefficient matrix `M` (rad/µs) of `i·ċ = M·c` for the qubit–bus–qubit
/// Hamiltonian with couplings `g1 (a,bus)`, `g2 (b,bus)`, `g3 (a,b)` and
/// `g (a,b,bus)`.
pub fn build_m_matrix(
    freqs: ModeFreqs,
    couplings: &CouplingSet,
    frame: FrameConfig,
) -> Result<CoefficientMatrix> {
    frame.validate()?;
    couplings.validate()?;
    let d = [
        frame.detuning(freqs.qubit_a_ghz),
        frame.detuning(freqs.qubit_b_ghz),
        frame.detuning(freqs.bus_ghz),
    ];
    Ok(flip_matrix(
        d,
        &[
            (BIT_A | BIT_BUS, couplings.g1),
            (BIT_B | BIT_BUS, couplings.g2),
            (BIT_A | BIT_B, couplings.g3),
            (BIT_A | BIT_B | BIT_BUS, couplings.g),
        ],
    ))
}

/// Readout resonator coupled to both buses through `gc (a_r, b, c)`.
///
/// Basis bits are `(n_r, n_b, n_c)` with the same `n_r + 2n_b + 4n_c`
/// ordering as the qubit block.
pub fn build_readout_matrix(
    omega_r_ghz: f64,
    omega_b_ghz: f64,
    omega_c_ghz: f64,
    gc_mhz: f64,
    frame: FrameConfig,
) -> Result<CoefficientMatrix> {
    frame.validate()?;
    if !gc_mhz.is_finite() {
        return Err(Error::invalid("gc", "must be finite"));
    }
    let d = [
        frame.detuning(omega_r_ghz),
        frame.detuning(omega_b_ghz),
        frame.detuning(omega_c_ghz),
    ];
    Ok(flip_matrix(d, &[(0b111, gc_mhz)]))
}

/// Amplitudes at each time of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t_us: Vec<f64>,
    pub states: Vec<StateAmplitudes>,
}

impl Trajectory {
    /// `t_us,re_c0,im_c0,…,re_c7,im_c7,I_a,I_b`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut header = vec!["t_us".to_string()];
        for i in 0..DIM {
            header.push(format!("re_c{i}"));
            header.push(format!("im_c{i}"));
        }
        header.push("I_a".into());
        header.push("I_b".into());
        let (ia, ib) = current_probabilities(self);
        let rows = self.t_us.iter().zip(&self.states).enumerate().map(|(k, (&t, s))| {
            let mut row = Vec::with_capacity(2 * DIM + 3);
            row.push(t);
            for z in &s.c {
                row.push(z.re);
                row.push(z.im);
            }
            row.push(ia[k]);
            row.push(ib[k]);
            row
        });
        crate::csv_util::write_table(writer, &header, rows)
    }
}

/// `c(t) = exp(−iMt)·c(0)` through the eigendecomposition `M = V·D·Vᵀ`.
pub fn evolve_unitary(m: &CoefficientMatrix, c0: &StateAmplitudes, t_grid: &[f64]) -> Trajectory {
    let eig = SymmetricEigen::new(*m);
    let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let c0v = SMatrix::<Complex64, DIM, 1>::from_column_slice(&c0.c);
    let projected = v.transpose() * c0v;
    let states = t_grid
        .iter()
        .map(|&t| {
            let phased = SMatrix::<Complex64, DIM, 1>::from_fn(|k, _| {
                projected[k] * Complex64::from_polar(1.0, -eig.eigenvalues[k] * t)
            });
            let c = v * phased;
            let mut out = [Complex64::new(0.0, 0.0); DIM];
            out.copy_from_slice(c.as_slice());
            StateAmplitudes { c: out }
        })
        .collect();
    Trajectory {
        t_us: t_grid.to_vec(),
        states,
    }
}

/// Probe currents `I_a = |c5|² + |c7|²`, `I_b = |c6|² + |c7|²`.
pub fn current_probabilities(trajectory: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    trajectory
        .states
        .iter()
        .map(|s| {
            let p = |i: usize| s.c[i].norm_sqr();
            (p(5) + p(7), p(6) + p(7))
        })
        .unzip()
}

/// Density matrices on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladTrajectory {
    pub t_us: Vec<f64>,
    pub rho: Vec<DensityMatrix>,
}

impl LindbladTrajectory {
    /// Diagonal populations at each time.
    pub fn populations(&self) -> Vec<[f64; DIM]> {
        self.rho
            .iter()
            .map(|r| std::array::from_fn(|i| r[(i, i)].re))
            .collect()
    }

    pub fn traces(&self) -> Vec<f64> {
        self.rho.iter().map(|r| r.trace().re).collect()
    }
}

/// Two-level lowering operator of the mode on `bit`, embedded in the basis.
pub fn lowering_operator(bit: usize) -> DensityMatrix {
    let mask = 1 << bit;
    let mut l = DensityMatrix::zeros();
    for i in 0..DIM {
        if i & mask != 0 {
            l[(i ^ mask, i)] = Complex64::new(1.0, 0.0);
        }
    }
    l
}

fn validate_density(rho: &DensityMatrix) -> Result<()> {
    for i in 0..DIM {
        for j in 0..DIM {
            if (rho[(i, j)] - rho[(j, i)].conj()).norm() > 1e-9 {
                return Err(Error::invalid("rho0", format!("not Hermitian at ({i},{j})")));
            }
        }
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::invalid("rho0", format!("trace {tr} != 1")));
    }
    let herm = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    if let Some(&min) = eig.eigenvalues.iter().min_by(|a, b| a.total_cmp(b)) {
        if min < -1e-9 {
            return Err(Error::invalid("rho0", format!("not positive semidefinite (eigenvalue {min})")));
        }
    }
    Ok(())
}

/// Column-stacked Liouvillian: `vec(AρB) = (Bᵀ ⊗ A)·vec(ρ)`.
fn liouvillian(m: &CoefficientMatrix, rates: &DecayRates) -> DMatrix<Complex64> {
    let h = m.map(|x| Complex64::new(x, 0.0));
    let id = DensityMatrix::identity();
    let kron = |a: &DensityMatrix, b: &DensityMatrix| -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(DIM * DIM, DIM * DIM);
        for i in 0..DIM {
            for j in 0..DIM {
                let aij = a[(i, j)];
                if aij == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for k in 0..DIM {
                    for l in 0..DIM {
                        out[(i * DIM + k, j * DIM + l)] = aij * b[(k, l)];
                    }
                }
            }
        }
        out
    };
    let minus_i = Complex64::new(0.0, -1.0);
    let mut lv = (kron(&id, &h) - kron(&h.transpose(), &id)) * minus_i;
    let half = Complex64::new(0.5, 0.0);
    for (bit, rate) in [(0, rates.gamma_a), (1, rates.gamma_b), (2, rates.kappa_bus)] {
        if rate == 0.0 {
            continue;
        }
        let gamma = Complex64::new(angular(rate), 0.0);
        let l = lowering_operator(bit);
        let ldl = l.adjoint() * l;
        let term = kron(&l.conjugate(), &l) - (kron(&id, &ldl) + kron(&ldl.transpose(), &id)) * half;
        lv += term * gamma;
    }
    lv
}

/// Integrates `dρ/dt = −i[M,ρ] + Σ_k γ_k(L_kρL_k† − ½{L_k†L_k, ρ})` with one
/// lowering operator per mode and `γ_k = 2π·rate_k`.
///
/// Between consecutive grid points the state is advanced by the exact
/// propagator `exp(𝓛·Δt)` of the Liouvillian (cached per distinct step), so
/// a uniform grid costs one 64×64 matrix exponential. `rho0` is the state at
/// `t = 0`.
pub fn evolve_lindblad(
    m: &CoefficientMatrix,
    rates: &DecayRates,
    rho0: &DensityMatrix,
    t_grid: &[f64],
) -> Result<LindbladTrajectory> {
    rates.validate()?;
    validate_density(rho0)?;
    if t_grid.windows(2).any(|w| !(w[1] >= w[0])) || t_grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::invalid("t_grid", "must be sorted and non-negative"));
    }
    let lv = liouvillian(m, rates);
    let mut cache: Vec<(u64, DMatrix<Complex64>)> = Vec::new();
    // nalgebra storage is column-major, so this is vec(ρ) directly.
    let mut vec_rho = DVector::from_iterator(DIM * DIM, rho0.iter().copied());

    let mut t_prev = 0.0;
    let mut rho = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let dt = t - t_prev;
        if dt > 0.0 {
            let key = dt.to_bits();
            let prop = match cache.iter().position(|(k, _)| *k == key) {
                Some(pos) => &cache[pos].1,
                None => {
                    let p = (&lv * Complex64::new(dt, 0.0)).exp();
                    if cache.len() >= 4 {
                        cache.remove(0);
                    }
                    cache.push((key, p));
                    &cache.last().expect("just pushed").1
                }
            };
            vec_rho = prop * &vec_rho;
        }
        t_prev = t;
        rho.push(DensityMatrix::from_column_slice(vec_rho.as_slice()));
    }
    let traj = LindbladTrajectory {
        t_us: t_grid.to_vec(),
        rho,
    };
    if let Some(bad) = traj.traces().iter().find(|tr| (*tr - 1.0).abs() > 1e-7) {
        return Err(Error::Numerical(format!("trace drifted to {bad}")));
    }
    Ok(traj)
}

/// Uniform grid `0, dt, …, (n−1)·dt`.
pub fn uniform_grid(duration_us: f64, n: usize) -> Vec<f64> {
    let dt = duration_us / n as f64;
    (0..n).map(|k| k as f64 * dt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_system(g_factor: f64) -> (ModeFreqs, CouplingSet) {
        (
            ModeFreqs {
                qubit_a_ghz: 5.46,
                qubit_b_ghz: 5.6,
                bus_ghz: 5.56,
            },
            CouplingSet {
                g1: 0.8,
                g2: 3.7,
                g3: 2.3,
                g: g_factor * 2.3,
                gc: 0.0,
            },
        )
    }

    #[test]
    fn basis_labels_round_trip() {
        let kets: Vec<String> = (0..DIM).map(|i| BasisLabel::from_index(i).ket()).collect();
        assert_eq!(kets, ["|00,0⟩", "|10,0⟩", "|01,0⟩", "|11,0⟩", "|00,1⟩", "|10,1⟩", "|01,1⟩", "|11,1⟩"]);
        for i in 0..DIM {
            assert_eq!(BasisLabel::from_index(i).index(), i);
        }
    }

    #[test]
    fn coupling_entries() {
        let (f, c) = sample_system(1.0);
        let m = build_m_matrix(f, &c, FrameConfig::Rotating { drive_ghz: 5.5 }).unwrap();
        assert_eq!(m[(0, 3)], 2.0 * PI * c.g3);
        assert_eq!(m[(0, 7)], 2.0 * PI * c.g);
        assert_eq!(m[(0, 5)], 2.0 * PI * c.g1);
        assert_eq!(m[(0, 6)], 2.0 * PI * c.g2);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn zero_couplings_give_diagonal() {
        let (f, _) = sample_system(0.0);
        let m = build_m_matrix(f, &CouplingSet::default(), FrameConfig::Lab).unwrap();
        for i in 0..DIM {
            for j in 0..DIM {
                if i != j {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        let expected = 2.0 * PI * (5460.0 + 5600.0 + 5560.0);
        assert!((m[(7, 7)] - expected).abs() < 1e-9);
    }

    #[test]
    fn rotating_frame_requires_positive_drive() {
        let (f, c) = sample_system(1.0);
        assert!(build_m_matrix(f, &c, FrameConfig::Rotating { drive_ghz: 0.0 }).is_err());
    }

    #[test]
    fn unitary_identity_at_t0_and_stationary_ground() {
        let (f, c) = sample_system(1.8);
        let m = build_m_matrix(f, &c, FrameConfig::Rotating { drive_ghz: 5.5 }).unwrap();
        let c0 = StateAmplitudes::basis(3);
        let tr = evolve_unitary(&m, &c0, &[0.0]);
        for i in 0..DIM {
            assert!((tr.states[0].c[i] - c0.c[i]).norm() < 1e-14);
        }
        let m0 = build_m_matrix(f, &CouplingSet::default(), FrameConfig::Rotating { drive_ghz: 5.5 }).unwrap();
        let tr = evolve_unitary(&m0, &StateAmplitudes::ground(), &uniform_grid(10.0, 100));
        for s in &tr.states {
            assert!((s.c[0] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn currents_for_basis_states() {
        let tr = Trajectory {
            t_us: vec![0.0, 1.0, 2.0],
            states: vec![StateAmplitudes::basis(5), StateAmplitudes::basis(7), StateAmplitudes::ground()],
        };
        let (ia, ib) = current_probabilities(&tr);
        assert_eq!(ia, vec![1.0, 1.0, 0.0]);
        assert_eq!(ib, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn readout_matrix_couples_antipodes() {
        let m = build_readout_matrix(5.56, 4.91, 4.97, 1.5, FrameConfig::Lab).unwrap();
        let off: Vec<(usize, usize)> = (0..DIM)
            .flat_map(|i| (i + 1..DIM).map(move |j| (i, j)))
            .filter(|&(i, j)| m[(i, j)] != 0.0)
            .collect();
        assert_eq!(off, vec![(0, 7), (1, 6), (2, 5), (3, 4)]);
        assert_eq!(m[(0, 7)], 2.0 * PI * 1.5);
        let m0 = build_readout_matrix(5.56, 4.91, 4.97, 0.0, FrameConfig::Lab).unwrap();
        assert_eq!(m0, CoefficientMatrix::from_diagonal(&m0.diagonal()));
    }

    #[test]
    fn lindblad_rejects_bad_density() {
        let m = CoefficientMatrix::zeros();
        let mut rho = StateAmplitudes::ground().density_matrix();
        rho[(0, 0)] = Complex64::new(0.5, 0.0);
        assert!(evolve_lindblad(&m, &DecayRates::default(), &rho, &[0.0]).is_err());
        let mut rho = StateAmplitudes::ground().density_matrix();
        rho[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(evolve_lindblad(&m, &DecayRates::default(), &rho, &[0.0]).is_err());
    }

    #[test]
    fn single_mode_decay() {
        let m = build_m_matrix(sample_system(0.0).0, &CouplingSet::default(), FrameConfig::Rotating { drive_ghz: 5.5 }).unwrap();
        let rates = DecayRates {
            gamma_a: 0.05,
            ..Default::default()
        };
        let rho0 = StateAmplitudes::basis(1).density_matrix();
        let t = uniform_grid(10.0, 200);
        let tr = evolve_lindblad(&m, &rates, &rho0, &t).unwrap();
        for (p, &t) in tr.populations().iter().zip(&t) {
            let expected = (-2.0 * PI * 0.05 * t).exp();
            assert!((p[1] - expected).abs() <= 1e-4 * expected, "t={t}: {} vs {expected}", p[1]);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn chip_spec_validation() {
        let chip = ChipSpec::four_qubit_chip();
        chip.validate().unwrap();
        assert_eq!(chip.cross_kerr(2, 0), Some(2.34));
        let mut bad = chip.clone();
        bad.cross_kerr_mhz.push((2, 0, 9.0));
        assert!(bad.validate().is_err());
        let mut bad = chip;
        bad.qubit_freqs_ghz[0] = 25.0;
        assert!(bad.validate().is_err());
    }
}
