//! Oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use readout_codesign::circuit_model::JpaCellParams;
use readout_codesign::dynamics::{CoefficientMatrix, CouplingSet, FrameConfig, ModeFreqs, DIM};
use readout_codesign::gain_profile::GainProfile;
use readout_codesign::planner::PlanningConstraints;

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `slow ⊗ mid ⊗ fast`: the fast factor acts on the lowest index bit.
pub fn kron3(slow: &DMatrix<f64>, mid: &DMatrix<f64>, fast: &DMatrix<f64>) -> DMatrix<f64> {
    kron(&kron(slow, mid), fast)
}

fn number() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])
}

fn position() -> DMatrix<f64> {
    // a† + a truncated to two levels.
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

fn frame_ghz(frame: FrameConfig) -> f64 {
    match frame {
        FrameConfig::Lab => 0.0,
        FrameConfig::Rotating { drive_ghz } => drive_ghz,
    }
}

fn to_static(m: DMatrix<f64>) -> CoefficientMatrix {
    CoefficientMatrix::from_fn(|i, j| m[(i, j)])
}

/// Three-mode Hamiltonian (rad/µs) with one- two- and three-body `x = a† + a`
/// couplings built as explicit Kronecker products.
fn three_mode(freqs_ghz: [f64; 3], pair: [(usize, usize, f64); 3], triple: f64, frame: FrameConfig) -> CoefficientMatrix {
    let id = DMatrix::<f64>::identity(2, 2);
    let embed = |ops: [&DMatrix<f64>; 3]| kron3(ops[2], ops[1], ops[0]);
    let mut h = DMatrix::<f64>::zeros(DIM, DIM);
    for (k, &f) in freqs_ghz.iter().enumerate() {
        let mut ops = [&id, &id, &id];
        let n = number();
        ops[k] = &n;
        // GHz → MHz first, then 2π·MHz, as for the couplings.
        h += embed(ops) * (2.0 * PI * ((f - frame_ghz(frame)) * 1e3));
    }
    let x = position();
    for &(p, q, g) in &pair {
        let mut ops = [&id, &id, &id];
        ops[p] = &x;
        ops[q] = &x;
        h += embed(ops) * (2.0 * PI * g);
    }
    h += embed([&x, &x, &x]) * (2.0 * PI * triple);
    to_static(h)
}

pub fn tensor_hamiltonian(f: ModeFreqs, c: &CouplingSet, frame: FrameConfig) -> CoefficientMatrix {
    three_mode(
        [f.qubit_a_ghz, f.qubit_b_ghz, f.bus_ghz],
        [(0, 2, c.g1), (1, 2, c.g2), (0, 1, c.g3)],
        c.g,
        frame,
    )
}

pub fn tensor_readout(r: f64, b: f64, c: f64, gc: f64, frame: FrameConfig) -> CoefficientMatrix {
    three_mode([r, b, c], [(0, 1, 0.0), (1, 2, 0.0), (0, 2, 0.0)], gc, frame)
}

/// Classic RK4 on `dc/dt = −i·M·c`, `substeps` per output interval `dt`.
/// Returns `n_out + 1` states starting with `c0`.
pub fn rk4_amplitudes(m: &CoefficientMatrix, c0: &[Complex64; DIM], dt: f64, n_out: usize, substeps: usize) -> Vec<[Complex64; DIM]> {
    let h = dt / substeps as f64;
    let mi = m.map(|x| Complex64::new(0.0, -x));
    let f = |c: &[Complex64; DIM]| -> [Complex64; DIM] {
        std::array::from_fn(|i| (0..DIM).map(|j| mi[(i, j)] * c[j]).sum())
    };
    let axpy = |c: &[Complex64; DIM], k: &[Complex64; DIM], s: f64| -> [Complex64; DIM] {
        std::array::from_fn(|i| c[i] + k[i] * s)
    };
    let mut c = *c0;
    let mut out = Vec::with_capacity(n_out + 1);
    out.push(c);
    for _ in 0..n_out {
        for _ in 0..substeps {
            let k1 = f(&c);
            let k2 = f(&axpy(&c, &k1, h / 2.0));
            let k3 = f(&axpy(&c, &k2, h / 2.0));
            let k4 = f(&axpy(&c, &k3, h));
            c = std::array::from_fn(|i| c[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0));
        }
        out.push(c);
    }
    out
}

/// A cell with well-separated element values.
pub fn sample_cell() -> JpaCellParams {
    JpaCellParams {
        c_ground: 1e-15,
        c_secondary: 40e-15,
        l_secondary: 0.5e-9,
        e_secondary: 300.0,
        c_primary: 30e-15,
        l_primary: 0.8e-9,
        e_primary: 180.0,
        n_squids: 2,
        c1: 100e-15,
        c2: 120e-15,
        c_shunt: 250e-15,
        l_shunt: 1.5e-9,
    }
}

/// `(GHz, dB)` samples.
pub type Sites = Vec<(f64, f64)>;

/// Strict three-point extrema; valid for profiles without plateaus.
pub fn scan_extrema(p: &GainProfile) -> (Sites, Sites) {
    let (f, g) = (p.freqs(), p.gains());
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for i in 1..g.len() - 1 {
        if g[i] > g[i - 1] && g[i] > g[i + 1] {
            maxima.push((f[i], g[i]));
        }
        if g[i] < g[i - 1] && g[i] < g[i + 1] {
            minima.push((f[i], g[i]));
        }
    }
    (maxima, minima)
}

pub struct Best {
    pub objective: f64,
    pub qubits: Vec<f64>,
    pub resonators: Vec<f64>,
    pub runner_up: f64,
}

/// Every pair of `n`-subsets of the candidate sites, as bitmasks.
pub fn brute_force_plan(p: &GainProfile, n: usize, c: &PlanningConstraints) -> Option<Best> {
    let (maxima, mut minima) = scan_extrema(p);
    if c.admit_band_edges {
        let (f, g) = (p.freqs(), p.gains());
        let last = g.len() - 1;
        if g[0] < g[1] {
            minima.push((f[0], g[0]));
        }
        if g[last] < g[last - 1] {
            minima.push((f[last], g[last]));
        }
    }
    let in_band = |f: f64| f >= c.band_lo_ghz && f <= c.band_hi_ghz;
    let q: Vec<(f64, f64)> = minima.into_iter().filter(|&(f, g)| in_band(f) && g <= c.qubit_max_gain_db).collect();
    let r: Vec<(f64, f64)> = maxima.into_iter().filter(|&(f, g)| in_band(f) && g >= c.resonator_min_gain_db).collect();
    let mut best: Option<Best> = None;
    for qm in 0u32..(1 << q.len()) {
        if qm.count_ones() as usize != n {
            continue;
        }
        for rm in 0u32..(1 << r.len()) {
            if rm.count_ones() as usize != n {
                continue;
            }
            let qs: Vec<(f64, f64)> = (0..q.len()).filter(|b| qm >> b & 1 == 1).map(|b| q[b]).collect();
            let rs: Vec<(f64, f64)> = (0..r.len()).filter(|b| rm >> b & 1 == 1).map(|b| r[b]).collect();
            let all: Vec<f64> = qs.iter().chain(&rs).map(|s| s.0).collect();
            let ok = all
                .iter()
                .enumerate()
                .all(|(i, a)| all[i + 1..].iter().all(|b| (a - b).abs() >= c.min_spacing_mhz * 1e-3));
            if !ok {
                continue;
            }
            let obj = rs.iter().map(|s| s.1).sum::<f64>() - qs.iter().map(|s| s.1).sum::<f64>();
            match &mut best {
                Some(b) if obj <= b.objective => b.runner_up = b.runner_up.max(obj),
                _ => {
                    let runner_up = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.objective);
                    best = Some(Best {
                        objective: obj,
                        qubits: sorted(qs.iter().map(|s| s.0).collect()),
                        resonators: sorted(rs.iter().map(|s| s.0).collect()),
                        runner_up,
                    });
                }
            }
        }
    }
    best
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

