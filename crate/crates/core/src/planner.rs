//! Qubit and resonator placement on a JPA gain profile.
//!
//! Qubits sit in gain valleys, where the amplifier reflects little power
//! back toward them, and resonators sit on gain peaks. Candidate sites are
//! the discrete extrema of the sampled profile.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gain_profile::{find_extrema, gain_at, GainProfile};
use crate::{Error, Result};

/// Above this many candidate combinations the search falls back to greedy
/// placement with local repair.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

const GREEDY_RESTARTS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningConstraints {
    pub band_lo_ghz: f64,
    pub band_hi_ghz: f64,
    /// Between any two assigned frequencies, qubit or resonator.
    pub min_spacing_mhz: f64,
    pub qubit_max_gain_db: f64,
    pub resonator_min_gain_db: f64,
    /// Minimum prominence (dB) for an extremum to count as a site.
    pub min_prominence_db: f64,
    /// Also offer the profile's first/last sample as qubit sites when the
    /// gain rises away from them.
    pub admit_band_edges: bool,
}

impl PlanningConstraints {
    pub fn with_band(band_lo_ghz: f64, band_hi_ghz: f64) -> Self {
        Self {
            band_lo_ghz,
            band_hi_ghz,
            min_spacing_mhz: 15.0,
            qubit_max_gain_db: 3.0,
            resonator_min_gain_db: 20.0,
            min_prominence_db: 0.0,
            admit_band_edges: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band_lo_ghz.is_finite() && self.band_hi_ghz.is_finite() && self.band_lo_ghz < self.band_hi_ghz) {
            return Err(Error::invalid("band", "need band_lo < band_hi"));
        }
        if !(self.min_spacing_mhz >= 0.0 && self.min_spacing_mhz.is_finite()) {
            return Err(Error::invalid("min_spacing", "must be >= 0"));
        }
        if !self.qubit_max_gain_db.is_finite() || !self.resonator_min_gain_db.is_finite() {
            return Err(Error::invalid("gain bounds", "must be finite"));
        }
        if !(self.min_prominence_db >= 0.0) {
            return Err(Error::invalid("min_prominence", "must be >= 0"));
        }
        Ok(())
    }

    fn in_band(&self, f: f64) -> bool {
        f >= self.band_lo_ghz && f <= self.band_hi_ghz
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan {
    #[serde(rename = "qubits_GHz")]
    pub qubit_freqs: Vec<f64>,
    #[serde(rename = "resonators_GHz")]
    pub resonator_freqs: Vec<f64>,
    #[serde(rename = "objective_dB")]
    pub objective: f64,
    /// True when the plan came from exhaustive search.
    pub exact: bool,
}

impl FrequencyPlan {
    /// `role,freq_GHz,gain_dB`, qubits first.
    pub fn write_csv<W: Write>(&self, profile: &GainProfile, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["role", "freq_GHz", "gain_dB"])?;
        for (role, fs) in [("qubit", &self.qubit_freqs), ("resonator", &self.resonator_freqs)] {
            for &f in fs.iter() {
                let g = gain_at(profile, f)?;
                w.write_record([role.to_string(), f.to_string(), g.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SiteRole {
    Qubit,
    Resonator,
}

impl fmt::Display for SiteRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SiteRole::Qubit => "qubit",
            SiteRole::Resonator => "resonator",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    OutOfBand {
        role: SiteRole,
        freq_ghz: f64,
    },
    SiteGain {
        role: SiteRole,
        freq_ghz: f64,
        gain_db: f64,
        bound_db: f64,
    },
    Spacing {
        a_ghz: f64,
        b_ghz: f64,
        separation_mhz: f64,
        min_spacing_mhz: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfBand { role, freq_ghz } => write!(f, "{role} at {freq_ghz} GHz is outside the band"),
            Violation::SiteGain {
                role: SiteRole::Qubit,
                freq_ghz,
                gain_db,
                bound_db,
            } => write!(f, "qubit at {freq_ghz} GHz sees {gain_db} dB > {bound_db} dB"),
            Violation::SiteGain {
                role: SiteRole::Resonator,
                freq_ghz,
                gain_db,
                bound_db,
            } => write!(f, "resonator at {freq_ghz} GHz sees {gain_db} dB < {bound_db} dB"),
            Violation::Spacing {
                a_ghz,
                b_ghz,
                separation_mhz,
                min_spacing_mhz,
            } => write!(
                f,
                "sites {a_ghz} GHz and {b_ghz} GHz are {separation_mhz} MHz apart (< {min_spacing_mhz} MHz)"
            ),
        }
    }
}

/// Σ gain at resonators − Σ gain at qubits.
pub fn score_plan(plan: &FrequencyPlan, profile: &GainProfile) -> Result<f64> {
    let sum = |fs: &[f64]| -> Result<f64> { fs.iter().map(|&f| gain_at(profile, f)).sum() };
    Ok(sum(&plan.resonator_freqs)? - sum(&plan.qubit_freqs)?)
}

/// Every violated bound, with the measured value. Empty means valid.
pub fn validate_plan(plan: &FrequencyPlan, profile: &GainProfile, constraints: &PlanningConstraints) -> Vec<Violation> {
    let mut out = Vec::new();
    let (p_lo, p_hi) = profile.band();
    let sites: Vec<(SiteRole, f64)> = plan
        .qubit_freqs
        .iter()
        .map(|&f| (SiteRole::Qubit, f))
        .chain(plan.resonator_freqs.iter().map(|&f| (SiteRole::Resonator, f)))
        .collect();
    for &(role, f) in &sites {
        if !constraints.in_band(f) || !(f >= p_lo && f <= p_hi) {
            out.push(Violation::OutOfBand { role, freq_ghz: f });
            continue;
        }
        let g = gain_at(profile, f).expect("checked in band");
        let bad = match role {
            SiteRole::Qubit => (g > constraints.qubit_max_gain_db).then_some(constraints.qubit_max_gain_db),
            SiteRole::Resonator => (g < constraints.resonator_min_gain_db).then_some(constraints.resonator_min_gain_db),
        };
        if let Some(bound_db) = bad {
            out.push(Violation::SiteGain {
                role,
                freq_ghz: f,
                gain_db: g,
                bound_db,
            });
        }
    }
    for (i, &(_, a)) in sites.iter().enumerate() {
        for &(_, b) in &sites[i + 1..] {
            let sep = (a - b).abs() * 1e3;
            if sep < constraints.min_spacing_mhz {
                out.push(Violation::Spacing {
                    a_ghz: a,
                    b_ghz: b,
                    separation_mhz: sep,
                    min_spacing_mhz: constraints.min_spacing_mhz,
                });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Site {
    freq: f64,
    gain: f64,
}

/// Qubit and resonator candidate sites, ascending in frequency.
fn candidate_sites(profile: &GainProfile, c: &PlanningConstraints) -> Result<(Vec<Site>, Vec<Site>)> {
    let ext = find_extrema(profile, c.min_prominence_db)?;
    let mut minima = ext.minima;
    if c.admit_band_edges && profile.len() >= 2 {
        let (f, g) = (profile.freqs(), profile.gains());
        let n = f.len();
        if g[0] < g[1] {
            minima.push((f[0], g[0]));
        }
        if g[n - 1] < g[n - 2] {
            minima.push((f[n - 1], g[n - 1]));
        }
        minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let keep = |v: Vec<(f64, f64)>, ok: &dyn Fn(f64) -> bool| -> Vec<Site> {
        v.into_iter()
            .filter(|&(f, g)| c.in_band(f) && ok(g))
            .map(|(freq, gain)| Site { freq, gain })
            .collect()
    };
    let qubits = keep(minima, &|g| g <= c.qubit_max_gain_db);
    let resonators = keep(ext.maxima, &|g| g >= c.resonator_min_gain_db);
    Ok((qubits, resonators))
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn spaced(a: f64, b: f64, min_spacing_ghz: f64) -> bool {
    (a - b).abs() >= min_spacing_ghz
}

/// Index subsets of size `k` of `0..n` in lexicographic order whose sites are
/// pairwise spaced, with their summed gain.
fn spaced_combinations(sites: &[Site], k: usize, min_spacing_ghz: f64) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::with_capacity(k);
    fn rec(
        sites: &[Site],
        k: usize,
        start: usize,
        min_spacing_ghz: f64,
        stack: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        if stack.len() == k {
            let gain = stack.iter().map(|&i| sites[i].gain).sum();
            out.push((stack.clone(), gain));
            return;
        }
        for i in start..sites.len() {
            if stack.iter().all(|&j| spaced(sites[i].freq, sites[j].freq, min_spacing_ghz)) {
                stack.push(i);
                rec(sites, k, i + 1, min_spacing_ghz, stack, out);
                stack.pop();
            }
        }
    }
    rec(sites, k, 0, min_spacing_ghz, &mut stack, &mut out);
    out
}

fn build_plan(q: &[Site], r: &[Site], qi: &[usize], ri: &[usize], exact: bool) -> FrequencyPlan {
    let qubit_freqs: Vec<f64> = qi.iter().map(|&i| q[i].freq).collect();
    let resonator_freqs: Vec<f64> = ri.iter().map(|&i| r[i].freq).collect();
    let objective = ri.iter().map(|&i| r[i].gain).sum::<f64>() - qi.iter().map(|&i| q[i].gain).sum::<f64>();
    FrequencyPlan {
        qubit_freqs,
        resonator_freqs,
        objective,
        exact,
    }
}

fn exhaustive(q: &[Site], r: &[Site], n: usize, min_spacing_ghz: f64) -> Option<FrequencyPlan> {
    let qc = spaced_combinations(q, n, min_spacing_ghz);
    let rc = spaced_combinations(r, n, min_spacing_ghz);
    let mut best: Option<(f64, usize, usize)> = None;
    for (a, (qi, qg)) in qc.iter().enumerate() {
        for (b, (ri, rg)) in rc.iter().enumerate() {
            let objective = rg - qg;
            // Lexicographic enumeration plus a strict comparison keeps the
            // lowest-frequency choice among equal objectives.
            if best.is_some_and(|(o, _, _)| objective <= o) {
                continue;
            }
            let compatible = qi
                .iter()
                .all(|&i| ri.iter().all(|&j| spaced(q[i].freq, r[j].freq, min_spacing_ghz)));
            if compatible {
                best = Some((objective, a, b));
            }
        }
    }
    best.map(|(_, a, b)| build_plan(q, r, &qc[a].0, &rc[b].0, true))
}

/// Picks sites in the given preference orders, alternating roles, skipping
/// any that would break spacing.
fn greedy_pass(q: &[Site], r: &[Site], q_order: &[usize], r_order: &[usize], n: usize, min_spacing_ghz: f64) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut qi: Vec<usize> = Vec::new();
    let mut ri: Vec<usize> = Vec::new();
    let fits = |f: f64, qi: &[usize], ri: &[usize]| {
        qi.iter().all(|&i| spaced(f, q[i].freq, min_spacing_ghz)) && ri.iter().all(|&j| spaced(f, r[j].freq, min_spacing_ghz))
    };
    let (mut qp, mut rp) = (0, 0);
    while qi.len() < n || ri.len() < n {
        let mut progressed = false;
        if ri.len() < n {
            while rp < r_order.len() {
                let j = r_order[rp];
                rp += 1;
                if fits(r[j].freq, &qi, &ri) {
                    ri.push(j);
                    progressed = true;
                    break;
                }
            }
        }
        if qi.len() < n {
            while qp < q_order.len() {
                let i = q_order[qp];
                qp += 1;
                if fits(q[i].freq, &qi, &ri) {
                    qi.push(i);
                    progressed = true;
                    break;
                }
            }
        }
        if !progressed {
            return None;
        }
    }
    Some((qi, ri))
}

/// Single-site swaps that raise the objective, until none is left.
fn repair(q: &[Site], r: &[Site], qi: &mut [usize], ri: &mut [usize], min_spacing_ghz: f64) {
    loop {
        let mut improved = false;
        for role in [SiteRole::Qubit, SiteRole::Resonator] {
            let (sites, chosen_len) = match role {
                SiteRole::Qubit => (q, qi.len()),
                SiteRole::Resonator => (r, ri.len()),
            };
            for slot in 0..chosen_len {
                let current = match role {
                    SiteRole::Qubit => qi[slot],
                    SiteRole::Resonator => ri[slot],
                };
                for cand in 0..sites.len() {
                    let better = match role {
                        SiteRole::Qubit => sites[cand].gain < sites[current].gain,
                        SiteRole::Resonator => sites[cand].gain > sites[current].gain,
                    };
                    let taken = match role {
                        SiteRole::Qubit => qi.contains(&cand),
                        SiteRole::Resonator => ri.contains(&cand),
                    };
                    if !better || taken {
                        continue;
                    }
                    let f = sites[cand].freq;
                    let ok_q = qi
                        .iter()
                        .enumerate()
                        .all(|(s, &i)| (role == SiteRole::Qubit && s == slot) || spaced(f, q[i].freq, min_spacing_ghz));
                    let ok_r = ri.iter().enumerate().all(|(s, &j)| {
                        (role == SiteRole::Resonator && s == slot) || spaced(f, r[j].freq, min_spacing_ghz)
                    });
                    if ok_q && ok_r {
                        match role {
                            SiteRole::Qubit => qi[slot] = cand,
                            SiteRole::Resonator => ri[slot] = cand,
                        }
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            return;
        }
    }
}

fn greedy(q: &[Site], r: &[Site], n: usize, min_spacing_ghz: f64, seed: u64) -> Option<FrequencyPlan> {
    let by_gain = |sites: &[Site], ascending: bool| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..sites.len()).collect();
        idx.sort_by(|&a, &b| {
            let o = sites[a].gain.total_cmp(&sites[b].gain);
            let o = if ascending { o } else { o.reverse() };
            o.then(sites[a].freq.total_cmp(&sites[b].freq))
        });
        idx
    };
    let mut q_order = by_gain(q, true);
    let mut r_order = by_gain(r, false);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<FrequencyPlan> = None;
    for attempt in 0..=GREEDY_RESTARTS {
        if attempt > 0 {
            q_order.shuffle(&mut rng);
            r_order.shuffle(&mut rng);
        }
        let Some((mut qi, mut ri)) = greedy_pass(q, r, &q_order, &r_order, n, min_spacing_ghz) else {
            continue;
        };
        repair(q, r, &mut qi, &mut ri, min_spacing_ghz);
        qi.sort_unstable();
        ri.sort_unstable();
        let plan = build_plan(q, r, &qi, &ri, false);
        let replace = match &best {
            None => true,
            Some(b) => {
                plan.objective > b.objective
                    || (plan.objective == b.objective
                        && (&plan.qubit_freqs, &plan.resonator_freqs) < (&b.qubit_freqs, &b.resonator_freqs))
            }
        };
        if replace {
            best = Some(plan);
        }
    }
    best
}

/// Places `n_qubits` qubits on gain minima and as many resonators on gain
/// maxima, maximizing Σ gain(resonators) − Σ gain(qubits) under the global
/// spacing constraint. Frequencies in each list are ascending.
///
/// `seed` drives the randomized restarts of the greedy fallback; the
/// exhaustive path does not use it.
pub fn plan_frequencies(
    profile: &GainProfile,
    n_qubits: usize,
    constraints: &PlanningConstraints,
    seed: u64,
) -> Result<FrequencyPlan> {
    constraints.validate()?;
    if n_qubits == 0 {
        return Err(Error::invalid("n_qubits", "must be >= 1"));
    }
    let (lo, hi) = profile.band();
    if lo > constraints.band_lo_ghz || hi < constraints.band_hi_ghz {
        return Err(Error::invalid(
            "band",
            format!("profile [{lo}, {hi}] GHz does not span [{}, {}] GHz", constraints.band_lo_ghz, constraints.band_hi_ghz),
        ));
    }
    let (q, r) = candidate_sites(profile, constraints)?;
    if q.len() < n_qubits {
        return Err(Error::Infeasible(format!(
            "qubit_max_gain: {} minima at or below {} dB, need {n_qubits}",
            q.len(),
            constraints.qubit_max_gain_db
        )));
    }
    if r.len() < n_qubits {
        return Err(Error::Infeasible(format!(
            "resonator_min_gain: {} maxima at or above {} dB, need {n_qubits}",
            r.len(),
            constraints.resonator_min_gain_db
        )));
    }
    let spacing = constraints.min_spacing_mhz * 1e-3;
    let combos = binomial(q.len(), n_qubits).saturating_mul(binomial(r.len(), n_qubits));
    let plan = if combos <= EXHAUSTIVE_LIMIT {
        exhaustive(&q, &r, n_qubits, spacing)
    } else {
        greedy(&q, &r, n_qubits, spacing, seed)
    };
    plan.ok_or_else(|| {
        Error::Infeasible(format!(
            "min_spacing: no placement keeps {} MHz between all sites",
            constraints.min_spacing_mhz
        ))
    })
}
