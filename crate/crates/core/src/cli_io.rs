//! Configuration documents, subcommand pipelines and run reports.
//!
//! A config is a JSON object with optional sections (`jpa`, `gain`,
//! `dynamics`, `spectral`, `planner`, `chain`, `chain_sim`) plus `seed` and
//! `output_dir`. Numeric keys carry their unit as a suffix (`drive_GHz`,
//! `g1_MHz`, `c_ground_fF`, …). Unknown keys and wrong suffixes are
//! rejected with the dotted path of the offending key.

// Section fields are named exactly like their config keys, unit case included.
#![allow(non_snake_case)]

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::circuit_model::{self, FluxBias, JpaArrayParams, JpaCellParams};
use crate::dynamics::{self, CouplingSet, DecayRates, FrameConfig, ModeFreqs, StateAmplitudes};
use crate::eigenmode;
use crate::gain_profile::{self, CombSpec, GainProfile};
use crate::planner::{self, PlanningConstraints};
use crate::rf_chain::{self, CapacityModel, ChainBlock, ChainSimParams, ChainSpec, ToneSignal};
use crate::spectral::{self, TimeTrace, Window};
use crate::{Error, Result};

pub const SUBCOMMANDS: [&str; 10] = [
    "jpa-modes",
    "jpa-potential",
    "gain-synth",
    "gain-extrema",
    "dyn-simulate",
    "spec-fft",
    "spec-classify",
    "plan",
    "chain-budget",
    "chain-simulate",
];

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "READOUT_CODESIGN_OUT";

const UNIT_SUFFIXES: [&str; 19] = [
    "GHz", "MHz", "kHz", "Hz", "mW", "W", "fF", "pF", "pH", "nH", "dB", "dBm", "ohm", "ns", "us", "V", "GSps", "uA",
    "rad",
];

/// Eigenmode residual tolerance relative to `‖L⁻¹‖∞`.
const MODE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JpaSection {
    pub c_ground_fF: f64,
    pub c_secondary_fF: f64,
    pub l_secondary_pH: f64,
    pub e_secondary_GHz: f64,
    pub c_primary_fF: f64,
    pub l_primary_pH: f64,
    pub e_primary_GHz: f64,
    pub n_squids: u32,
    pub c1_fF: f64,
    pub c2_fF: f64,
    pub c_shunt_fF: f64,
    pub l_shunt_pH: f64,
    pub n_cells: u32,
    pub line_impedance_ohm: f64,
    pub quality_factor: f64,
    /// External flux in units of Φ₀.
    pub flux_phi0: f64,
    pub taylor_order: usize,
    pub phase_min_rad: f64,
    pub phase_max_rad: f64,
    pub phase_points: usize,
    pub s11_start_GHz: f64,
    pub s11_stop_GHz: f64,
    pub s11_points: usize,
}

impl Default for JpaSection {
    fn default() -> Self {
        Self {
            c_ground_fF: 1.0,
            c_secondary_fF: 40.0,
            l_secondary_pH: 500.0,
            e_secondary_GHz: 300.0,
            c_primary_fF: 30.0,
            l_primary_pH: 800.0,
            e_primary_GHz: 180.0,
            n_squids: 2,
            c1_fF: 100.0,
            c2_fF: 120.0,
            c_shunt_fF: 250.0,
            l_shunt_pH: 1500.0,
            n_cells: 1,
            line_impedance_ohm: 50.0,
            quality_factor: 100.0,
            flux_phi0: 0.0,
            taylor_order: 6,
            phase_min_rad: -4.0 * std::f64::consts::PI,
            phase_max_rad: 4.0 * std::f64::consts::PI,
            phase_points: 401,
            s11_start_GHz: 1.0,
            s11_stop_GHz: 19.0,
            s11_points: 1801,
        }
    }
}

impl JpaSection {
    pub fn cell(&self) -> JpaCellParams {
        JpaCellParams {
            c_ground: self.c_ground_fF * 1e-15,
            c_secondary: self.c_secondary_fF * 1e-15,
            l_secondary: self.l_secondary_pH * 1e-12,
            e_secondary: self.e_secondary_GHz,
            c_primary: self.c_primary_fF * 1e-15,
            l_primary: self.l_primary_pH * 1e-12,
            e_primary: self.e_primary_GHz,
            n_squids: self.n_squids,
            c1: self.c1_fF * 1e-15,
            c2: self.c2_fF * 1e-15,
            c_shunt: self.c_shunt_fF * 1e-15,
            l_shunt: self.l_shunt_pH * 1e-12,
        }
    }

    pub fn array(&self) -> JpaArrayParams {
        JpaArrayParams {
            cell: self.cell(),
            n_cells: self.n_cells,
            line_impedance: self.line_impedance_ohm,
            quality_factor: self.quality_factor,
        }
    }

    fn validate(&self) -> Result<()> {
        self.array().validate()?;
        if !matches!(self.taylor_order, 2 | 4 | 6) {
            return Err(Error::invalid("taylor_order", "must be 2, 4 or 6"));
        }
        if !(self.phase_min_rad < self.phase_max_rad) || self.phase_points < 2 {
            return Err(Error::invalid("phase_points", "need phase_min < phase_max and >= 2 points"));
        }
        if !(self.s11_start_GHz > 0.0 && self.s11_start_GHz < self.s11_stop_GHz && self.s11_stop_GHz < 20.0)
            || self.s11_points < 2
        {
            return Err(Error::invalid("s11_points", "need 0 < start < stop < 20 GHz and >= 2 points"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainSection {
    pub band_lo_GHz: f64,
    pub band_hi_GHz: f64,
    pub n_peaks: usize,
    pub peak_gain_dB: f64,
    pub floor_gain_dB: f64,
    /// Half width at half maximum of each Lorentzian line.
    pub linewidth_MHz: f64,
    pub n_samples: usize,
    /// Measured `freq_GHz,gain_dB` profile; replaces the synthetic comb.
    pub profile_csv: Option<PathBuf>,
    pub min_prominence_dB: f64,
}

impl Default for GainSection {
    fn default() -> Self {
        Self {
            band_lo_GHz: 4.0,
            band_hi_GHz: 8.0,
            n_peaks: 4,
            peak_gain_dB: 24.0,
            floor_gain_dB: 0.0,
            linewidth_MHz: 5.0,
            n_samples: 4001,
            profile_csv: None,
            min_prominence_dB: 0.0,
        }
    }
}

impl GainSection {
    pub fn comb(&self) -> CombSpec {
        CombSpec {
            band_lo_ghz: self.band_lo_GHz,
            band_hi_ghz: self.band_hi_GHz,
            n_peaks: self.n_peaks,
            peak_gain_db: self.peak_gain_dB,
            floor_gain_db: self.floor_gain_dB,
            linewidth_mhz: self.linewidth_MHz,
            n_samples: self.n_samples,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.min_prominence_dB >= 0.0) {
            return Err(Error::invalid("min_prominence_dB", "must be >= 0"));
        }
        match self.profile_csv {
            Some(_) => Ok(()),
            None => self.comb().validate(),
        }
    }

    pub fn profile(&self) -> Result<GainProfile> {
        match &self.profile_csv {
            Some(path) => GainProfile::read_csv(File::open(path)?),
            None => gain_profile::synth_comb(&self.comb()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Lab,
    Rotating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Probe {
    A,
    B,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsSection {
    pub qubit_a_GHz: f64,
    pub qubit_b_GHz: f64,
    pub bus_GHz: f64,
    pub g1_MHz: f64,
    pub g2_MHz: f64,
    pub g3_MHz: f64,
    pub g_MHz: f64,
    pub frame: FrameKind,
    pub drive_GHz: f64,
    pub duration_us: f64,
    pub n_steps: usize,
    /// Basis index `n_a + 2·n_b + 4·n_bus` of the initial state.
    pub initial_state: usize,
    /// Evolve the density matrix with these decay rates as well.
    pub lindblad: bool,
    pub gamma_a_MHz: f64,
    pub gamma_b_MHz: f64,
    pub kappa_bus_MHz: f64,
    /// Which probe current feeds the spectrum.
    pub probe: Probe,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            qubit_a_GHz: 5.46,
            qubit_b_GHz: 5.6,
            bus_GHz: 5.56,
            g1_MHz: 0.0,
            g2_MHz: 0.0,
            g3_MHz: 0.0,
            g_MHz: 0.0,
            frame: FrameKind::Rotating,
            drive_GHz: 5.5,
            duration_us: 10.0,
            n_steps: 4096,
            initial_state: 0,
            lindblad: false,
            gamma_a_MHz: 0.0,
            gamma_b_MHz: 0.0,
            kappa_bus_MHz: 0.0,
            probe: Probe::Sum,
        }
    }
}

impl DynamicsSection {
    pub fn freqs(&self) -> ModeFreqs {
        ModeFreqs {
            qubit_a_ghz: self.qubit_a_GHz,
            qubit_b_ghz: self.qubit_b_GHz,
            bus_ghz: self.bus_GHz,
        }
    }

    pub fn couplings(&self) -> CouplingSet {
        CouplingSet {
            g1: self.g1_MHz,
            g2: self.g2_MHz,
            g3: self.g3_MHz,
            g: self.g_MHz,
            gc: 0.0,
        }
    }

    pub fn frame(&self) -> FrameConfig {
        match self.frame {
            FrameKind::Lab => FrameConfig::Lab,
            FrameKind::Rotating => FrameConfig::Rotating {
                drive_ghz: self.drive_GHz,
            },
        }
    }

    pub fn rates(&self) -> DecayRates {
        DecayRates {
            gamma_a: self.gamma_a_MHz,
            gamma_b: self.gamma_b_MHz,
            kappa_bus: self.kappa_bus_MHz,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, f) in [("qubit_a_GHz", self.qubit_a_GHz), ("qubit_b_GHz", self.qubit_b_GHz), ("bus_GHz", self.bus_GHz)] {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::invalid(name, "must be > 0"));
            }
        }
        self.couplings().validate()?;
        self.frame().validate()?;
        self.rates().validate()?;
        if !(self.duration_us > 0.0 && self.duration_us.is_finite()) {
            return Err(Error::invalid("duration_us", "must be > 0"));
        }
        if self.n_steps < spectral::MIN_TRACE_LEN {
            return Err(Error::invalid("n_steps", format!("must be >= {}", spectral::MIN_TRACE_LEN)));
        }
        if self.initial_state >= dynamics::DIM {
            return Err(Error::invalid("initial_state", "basis index must be < 8"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralSection {
    pub window: Window,
    pub zero_pad: usize,
    pub rel_threshold: f64,
    pub base_mode_count: usize,
    /// Trace file for `spec-fft`/`spec-classify`; without it the
    /// `dynamics` section is simulated.
    pub trace_csv: Option<PathBuf>,
    /// Columns of `trace_csv` summed into the trace; time is `t_us`.
    pub trace_columns: Vec<String>,
}

impl Default for SpectralSection {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            zero_pad: 4,
            rel_threshold: spectral::DEFAULT_THRESHOLD,
            base_mode_count: 2,
            trace_csv: None,
            trace_columns: vec!["I_a".into(), "I_b".into()],
        }
    }
}

impl SpectralSection {
    fn validate(&self) -> Result<()> {
        if ![1, 2, 4, 8].contains(&self.zero_pad) {
            return Err(Error::invalid("zero_pad", "must be 1, 2, 4 or 8"));
        }
        if !(self.rel_threshold > 0.0 && self.rel_threshold < 1.0) {
            return Err(Error::invalid("rel_threshold", "must lie in (0, 1)"));
        }
        if self.base_mode_count == 0 {
            return Err(Error::invalid("base_mode_count", "must be >= 1"));
        }
        if self.trace_columns.is_empty() {
            return Err(Error::invalid("trace_columns", "need at least one column"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerSection {
    pub n_qubits: usize,
    pub band_lo_GHz: f64,
    pub band_hi_GHz: f64,
    pub min_spacing_MHz: f64,
    pub qubit_max_gain_dB: f64,
    pub resonator_min_gain_dB: f64,
    pub min_prominence_dB: f64,
    pub admit_band_edges: bool,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let c = PlanningConstraints::with_band(4.0, 8.0);
        Self {
            n_qubits: 4,
            band_lo_GHz: c.band_lo_ghz,
            band_hi_GHz: c.band_hi_ghz,
            min_spacing_MHz: c.min_spacing_mhz,
            qubit_max_gain_dB: c.qubit_max_gain_db,
            resonator_min_gain_dB: c.resonator_min_gain_db,
            min_prominence_dB: c.min_prominence_db,
            admit_band_edges: c.admit_band_edges,
        }
    }
}

impl PlannerSection {
    pub fn constraints(&self) -> PlanningConstraints {
        PlanningConstraints {
            band_lo_ghz: self.band_lo_GHz,
            band_hi_ghz: self.band_hi_GHz,
            min_spacing_mhz: self.min_spacing_MHz,
            qubit_max_gain_db: self.qubit_max_gain_dB,
            resonator_min_gain_db: self.resonator_min_gain_dB,
            min_prominence_db: self.min_prominence_dB,
            admit_band_edges: self.admit_band_edges,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::invalid("n_qubits", "must be >= 1"));
        }
        self.constraints().validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockConfig {
    pub name: String,
    pub gain_dB: f64,
    pub nf_dB: f64,
    pub power_mW: f64,
    pub band_lo_GHz: f64,
    pub band_hi_GHz: f64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self::from(&ChainSpec::reference_design().blocks[0])
    }
}

impl From<&ChainBlock> for BlockConfig {
    fn from(b: &ChainBlock) -> Self {
        Self {
            name: b.name.clone(),
            gain_dB: b.gain_db,
            nf_dB: b.noise_figure_db,
            power_mW: b.power_mw,
            band_lo_GHz: b.band_lo_ghz,
            band_hi_GHz: b.band_hi_ghz,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainSection {
    pub blocks: Vec<BlockConfig>,
    pub receiver_bw_MHz: f64,
    pub per_qubit_bw_MHz: f64,
    pub spacing_MHz: f64,
    pub qubits_per_channel: u32,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            blocks: ChainSpec::reference_design().blocks.iter().map(BlockConfig::from).collect(),
            receiver_bw_MHz: 4000.0,
            per_qubit_bw_MHz: 10.0,
            spacing_MHz: 15.0,
            qubits_per_channel: 1,
        }
    }
}

impl ChainSection {
    pub fn chain(&self) -> Result<ChainSpec> {
        ChainSpec::new(
            self.blocks
                .iter()
                .map(|b| ChainBlock::new(&b.name, b.gain_dB, b.nf_dB, b.power_mW, (b.band_lo_GHz, b.band_hi_GHz)))
                .collect(),
        )
    }

    pub fn capacity(&self) -> CapacityModel {
        CapacityModel {
            per_qubit_bw_mhz: self.per_qubit_bw_MHz,
            spacing_mhz: self.spacing_MHz,
            qubits_per_channel: self.qubits_per_channel,
        }
    }

    fn validate(&self) -> Result<()> {
        self.chain()?;
        self.capacity().validate()?;
        if !(self.receiver_bw_MHz >= 0.0) {
            return Err(Error::invalid("receiver_bw_MHz", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainSimSection {
    pub tone_GHz: f64,
    pub amplitude_V: f64,
    pub lo_GHz: f64,
    pub lna_gain_dB: f64,
    pub if_gain_dB: f64,
    pub if_cutoff_MHz: f64,
    pub duration_ns: f64,
    pub sample_rate_GSps: f64,
    /// Leading filter transient excluded from output measurements.
    pub settle_ns: f64,
}

impl Default for ChainSimSection {
    fn default() -> Self {
        let p = ChainSimParams::reference_design();
        Self {
            tone_GHz: 5.2,
            amplitude_V: 100e-9,
            lo_GHz: 5.0,
            lna_gain_dB: p.lna_gain_db,
            if_gain_dB: p.if_gain_db,
            if_cutoff_MHz: p.if_cutoff_mhz,
            duration_ns: 100.0,
            sample_rate_GSps: 40.0,
            settle_ns: 20.0,
        }
    }
}

impl ChainSimSection {
    pub fn tone(&self) -> ToneSignal {
        ToneSignal {
            freq_ghz: self.tone_GHz,
            amplitude_v: self.amplitude_V,
        }
    }

    pub fn params(&self) -> ChainSimParams {
        ChainSimParams {
            lna_gain_db: self.lna_gain_dB,
            if_gain_db: self.if_gain_dB,
            if_cutoff_mhz: self.if_cutoff_MHz,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.settle_ns >= 0.0 && self.settle_ns < self.duration_ns) {
            return Err(Error::invalid("settle_ns", "must lie in [0, duration_ns)"));
        }
        // A short dry run exercises every precondition of the simulator.
        rf_chain::simulate_chain(&self.tone(), self.lo_GHz, &self.params(), 1.0, self.sample_rate_GSps).map(|_| ())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub jpa: Option<JpaSection>,
    pub gain: Option<GainSection>,
    pub dynamics: Option<DynamicsSection>,
    pub spectral: Option<SpectralSection>,
    pub planner: Option<PlannerSection>,
    pub chain: Option<ChainSection>,
    pub chain_sim: Option<ChainSimSection>,
}

impl RunConfig {
    /// A config with every section present at its defaults; its key set is
    /// the schema used for unknown-key and unit-suffix checks.
    pub fn template() -> Self {
        Self {
            seed: 0,
            output_dir: Some(PathBuf::from("out")),
            jpa: Some(JpaSection::default()),
            gain: Some(GainSection::default()),
            dynamics: Some(DynamicsSection::default()),
            spectral: Some(SpectralSection::default()),
            planner: Some(PlannerSection::default()),
            chain: Some(ChainSection::default()),
            chain_sim: Some(ChainSimSection::default()),
        }
    }

    fn validate(&self) -> Result<()> {
        fn section<T>(name: &str, s: &Option<T>, f: impl Fn(&T) -> Result<()>) -> Result<()> {
            match s {
                Some(v) => f(v).map_err(|e| prefix_path(e, name)),
                None => Ok(()),
            }
        }
        section("jpa", &self.jpa, JpaSection::validate)?;
        section("gain", &self.gain, GainSection::validate)?;
        section("dynamics", &self.dynamics, DynamicsSection::validate)?;
        section("spectral", &self.spectral, SpectralSection::validate)?;
        section("planner", &self.planner, PlannerSection::validate)?;
        section("chain", &self.chain, ChainSection::validate)?;
        section("chain_sim", &self.chain_sim, ChainSimSection::validate)?;
        Ok(())
    }

    fn spectral_or_default(&self) -> SpectralSection {
        self.spectral.clone().unwrap_or_default()
    }

    /// Makes relative input paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        if let Some(g) = &mut self.gain {
            fix(&mut g.profile_csv);
        }
        if let Some(s) = &mut self.spectral {
            fix(&mut s.trace_csv);
        }
    }
}

fn prefix_path(e: Error, section: &str) -> Error {
    match e {
        Error::Validation { field, reason } => Error::Validation {
            field: format!("{section}.{field}"),
            reason,
        },
        other => other,
    }
}

fn split_unit(key: &str) -> (&str, Option<&str>) {
    match key.rsplit_once('_') {
        Some((stem, unit)) if UNIT_SUFFIXES.contains(&unit) => (stem, Some(unit)),
        _ => (key, None),
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Rejects keys of `doc` that the template does not know about.
fn check_keys(doc: &Value, template: &Value, path: &str) -> Result<()> {
    match (doc, template) {
        (Value::Object(d), Value::Object(t)) => {
            for (key, value) in d {
                match t.get(key) {
                    Some(tv) => check_keys(value, tv, &join(path, key))?,
                    None => return Err(unknown_key(key, t, &join(path, key))),
                }
            }
            Ok(())
        }
        (Value::Array(d), Value::Array(t)) => match t.first() {
            Some(tv) => d
                .iter()
                .enumerate()
                .try_for_each(|(i, v)| check_keys(v, tv, &format!("{path}[{i}]"))),
            None => Ok(()),
        },
        _ => Ok(()),
    }
}

fn unknown_key(key: &str, known: &Map<String, Value>, path: &str) -> Error {
    let (stem, unit) = split_unit(key);
    let expected = known.keys().find(|k| {
        let (s, u) = split_unit(k);
        s == stem && u.is_some() && u != unit
    });
    match expected {
        Some(expected) => Error::UnitSuffix {
            path: path.to_string(),
            expected: expected.clone(),
        },
        None => Error::UnknownKey { path: path.to_string() },
    }
}

fn section_value<T: DeserializeOwned>(doc: &Map<String, Value>, name: &str) -> Result<Option<T>> {
    match doc.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::invalid(name, e.to_string())),
    }
}

/// Parses and fully validates a JSON config document.
pub fn parse_config(document: &str) -> Result<RunConfig> {
    let doc: Value = serde_json::from_str(document)?;
    let template = serde_json::to_value(RunConfig::template())?;
    let Value::Object(map) = &doc else {
        return Err(Error::invalid("config", "top level must be an object"));
    };
    check_keys(&doc, &template, "")?;
    let seed = match map.get("seed") {
        None | Some(Value::Null) => 0,
        Some(v) => v.as_u64().ok_or_else(|| Error::invalid("seed", "must be a non-negative integer"))?,
    };
    let config = RunConfig {
        seed,
        output_dir: section_value(map, "output_dir")?,
        jpa: section_value(map, "jpa")?,
        gain: section_value(map, "gain")?,
        dynamics: section_value(map, "dynamics")?,
        spectral: section_value(map, "spectral")?,
        planner: section_value(map, "planner")?,
        chain: section_value(map, "chain")?,
        chain_sim: section_value(map, "chain_sim")?,
    };
    config.validate()?;
    Ok(config)
}

pub fn serialize_config(config: &RunConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(config)?)
}

/// Reads a config file; relative input paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let mut config = parse_config(&text)?;
    config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(config)
}

/// Echo of inputs, derived values and every emitted file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub inputs: Value,
    pub derived: Value,
    /// File names relative to the output directory, in emission order.
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.files.push(name.to_string());
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        self.files.push(name.to_string());
        fs::write(self.dir.join(name), text)?;
        Ok(())
    }
}

fn require<'a, T>(section: &'a Option<T>, name: &str, command: &str) -> Result<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| Error::invalid(name, format!("section required by `{command}`")))
}

/// Runs `name` against `config`, writing artifacts and `report.json` into
/// `out_dir` (created if missing).
pub fn run_subcommand(name: &str, config: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    if !SUBCOMMANDS.contains(&name) {
        return Err(Error::invalid(
            "subcommand",
            format!("unknown `{name}`; expected one of {}", SUBCOMMANDS.join(", ")),
        ));
    }
    let start = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut out = Outputs {
        dir: out_dir,
        files: Vec::new(),
    };
    let derived = match name {
        "jpa-modes" => jpa_modes(config, &mut out)?,
        "jpa-potential" => jpa_potential(config, &mut out)?,
        "gain-synth" => gain_synth(config, &mut out)?,
        "gain-extrema" => gain_extrema(config, &mut out)?,
        "dyn-simulate" => dyn_simulate(config, &mut out)?,
        "spec-fft" => spec_fft(config, &mut out, false)?,
        "spec-classify" => spec_fft(config, &mut out, true)?,
        "plan" => plan(config, &mut out)?,
        "chain-budget" => chain_budget(config, &mut out)?,
        "chain-simulate" => chain_simulate(config, &mut out)?,
        _ => unreachable!("checked against SUBCOMMANDS"),
    };
    out.files.push("report.json".into());
    let report = RunReport {
        command: name.to_string(),
        seed: config.seed,
        inputs: serde_json::to_value(config)?,
        derived,
        files: out.files,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(out_dir.join("report.json"), text)?;
    Ok(report)
}

fn jpa_modes(config: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let jpa = require(&config.jpa, "jpa", "jpa-modes")?;
    let array = jpa.array();
    let matrices = circuit_model::stamp_array(&array)?;
    let modes = eigenmode::solve_modes(&matrices, array.quality_factor)?;
    let residual = eigenmode::max_residual(&modes, &matrices);
    let scale = eigenmode::inf_norm(&matrices.linv_matrix);
    if residual > MODE_RESIDUAL_TOL * scale {
        return Err(Error::Numerical(format!(
            "eigenmode residual {residual:e} exceeds {MODE_RESIDUAL_TOL:e}·‖L⁻¹‖∞ = {:e}",
            MODE_RESIDUAL_TOL * scale
        )));
    }
    circuit_model::CircuitMatrices::write_csv(&matrices.c_matrix, out.create("c_matrix.csv")?)?;
    circuit_model::CircuitMatrices::write_csv(&matrices.linv_matrix, out.create("linv_matrix.csv")?)?;
    modes.write_csv(out.create("modes.csv")?)?;
    let step = (jpa.s11_stop_GHz - jpa.s11_start_GHz) / (jpa.s11_points - 1) as f64;
    let grid: Vec<f64> = (0..jpa.s11_points).map(|k| jpa.s11_start_GHz + k as f64 * step).collect();
    let s11 = eigenmode::s11_estimate(&modes, array.line_impedance, &grid)?;
    crate::csv_util::write_table(
        out.create("s11.csv")?,
        &["f_GHz".to_string(), "S11_dB".to_string()],
        grid.iter().zip(&s11).map(|(&f, &s)| vec![f, s]),
    )?;
    Ok(json!({
        "n_nodes": matrices.n_nodes,
        "mode_freqs_GHz": modes.freqs_ghz(),
        "max_residual": residual,
        "linv_inf_norm": scale,
    }))
}

fn jpa_potential(config: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let jpa = require(&config.jpa, "jpa", "jpa-potential")?;
    let cell = jpa.cell();
    let flux = FluxBias::new(jpa.flux_phi0);
    let step = (jpa.phase_max_rad - jpa.phase_min_rad) / (jpa.phase_points - 1) as f64;
    crate::csv_util::write_table(
        out.create("potential.csv")?,
        &["phase_rad".to_string(), "U_GHz".to_string()],
        (0..jpa.phase_points).map(|k| {
            let phi = jpa.phase_min_rad + k as f64 * step;
            vec![phi, circuit_model::nonlinear_potential(phi, &cell, flux)]
        }),
    )?;
    let coeffs = circuit_model::taylor_coefficients(&cell, flux, jpa.taylor_order)?;
    crate::csv_util::write_table(
        out.create("taylor.csv")?,
        &["order".to_string(), "coefficient_GHz".to_string()],
        coeffs.iter().enumerate().map(|(k, &a)| vec![k as f64, a]),
    )?;
    Ok(json!({ "taylor_coefficients_GHz": coeffs }))
}

fn gain_synth(config: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let gain = require(&config.gain, "gain", "gain-synth")?;
    let profile = gain.profile()?;
    profile.write_csv(out.create("gain_profile.csv")?)?;
    let max = profile.gains().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = profile.gains().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(json!({ "n_samples": profile.len(), "max_gain_dB": max, "min_gain_dB": min }))
}

fn gain_extrema(config: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let gain = require(&config.gain, "gain", "gain-extrema")?;
    let profile = gain.profile()?;
    let ext = gain_profile::find_extrema(&profile, gain.min_prominence_dB)?;
    out.json("extrema.json", &ext)?;
    let mut w = csv::Writer::from_writer(out.create("extrema.csv")?);
    w.write_record(["kind", "freq_GHz", "gain_dB"])?;
    for (kind, list) in [("max", &ext.maxima), ("min", &ext.minima)] {
        for (f, g) in list {
            w.write_record([kind.to_string(), f.to_string(), g.to_string()])?;
        }
    }
    w.flush()?;
    Ok(json!({ "n_maxima": ext.maxima.len(), "n_minima": ext.minima.len() }))
}

/// Runs the dynamics section, returning the time grid and the chosen probe.
fn simulate_dynamics(dynamics: &DynamicsSection, probe: Probe) -> Result<(dynamics::Trajectory, TimeTrace)> {
    let m = dynamics::build_m_matrix(dynamics.freqs(), &dynamics.couplings(), dynamics.frame())?;
    let t = dynamics::uniform_grid(dynamics.duration_us, dynamics.n_steps);
    let traj = dynamics::evolve_unitary(&m, &StateAmplitudes::basis(dynamics.initial_state), &t);
    let (ia, ib) = dynamics::current_probabilities(&traj);
    let values = match probe {
        Probe::A => ia,
        Probe::B => ib,
        Probe::Sum => ia.iter().zip(&ib).map(|(a, b)| a + b).collect(),
    };
    let trace = TimeTrace::new(t, values)?;
    Ok((traj, trace))
}

fn write_spectrum(
    trace: &TimeTrace,
    spectral_cfg: &SpectralSection,
    out: &mut Outputs,
    classify: bool,
) -> Result<Value> {
    let spectrum = spectral::fft_spectrum(trace, spectral_cfg.window, spectral_cfg.zero_pad)?;
    spectrum.write_csv(out.create("spectrum.csv")?)?;
    let peaks = spectral::detect_peaks(&spectrum, spectral_cfg.rel_threshold)?;
    out.json("peaks.json", &peaks)?;
    let mut derived = json!({
        "dc": spectrum.dc(),
        "bin_width_MHz": spectrum.bin_width(),
        "peaks_MHz": peaks.freqs(),
    });
    if classify {
        let verdict = spectral::classify_entanglement(&peaks, spectral_cfg.base_mode_count)?;
        out.json("verdict.json", &verdict)?;
        derived["verdict"] = serde_json::to_value(verdict)?;
    }
    Ok(derived)
}

fn dyn_simulate(config: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let dynamics = require(&config.dynamics, "dynamics", "dyn-simulate")?;
    let spectral_cfg = config.spectral_or_default();
    let (traj, trace) = simulate_dynamics(dynamics, dynamics.probe)?;
    traj.write_csv(out.create("trajectory.csv")?)?;
    let mut derived = write_spectrum(&trace, &spectral_cfg, out, true)?;
    if dynamics.lindblad {
        let m = dynamics::build_m_matrix(dynamics.freqs(), &dynamics.couplings(), dynamics.frame())?;
        let rho0 = StateAmplitudes::basis(dynamics.initial_state).density_matrix();
        let lt = dynamics::evolve_lindblad(&m, &dynamics.rates(), &rho0, &traj.t_us)?;
        let mut header = vec!["t_us".to_string()];
        header.extend((0..dynamics::DIM).map(|i| format!("p{i}")));
        crate::csv_util::write_table(
            out.create("populations.csv")?,
            &header,
            lt.t_us.iter().zip(lt.populations()).map(|(&t, p)| {
                let mut row = vec![t];
                row.extend(p);
                row
            }),
        )?;
        let drift = lt.traces().iter().map(|tr| (tr - 1.0).abs()).fold(0.0, f64::max);
        derived["lindblad_max_trace_drift"] = json!(drift);
    }
    Ok(derived)
}

fn read_trace(path: &Path, columns: &[String]) -> Result<TimeTrace> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid("spectral.trace_columns", format!("column `{name}` not in {}", path.display())))
    };
    let t_col = index("t_us")?;
    let cols: Vec<usize> = columns.iter().map(|c| index(c)).collect::<Result<_>>()?;
    let parse = |s: &str, row: usize| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::invalid("spectral.trace_csv", format!("row {row}: `{s}` is not a number")))
    };
    let (mut t, mut v) = (Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        t.push(parse(&record[t_col], row + 1)?);
        let mut sum = 0.0;
        for &c in &cols {
            sum += parse(&record[c], row + 1)?;
        }
        v.push(sum);
    }
    TimeTrace::new(t, v)
}

fn spec_fft(config: &RunConfig, out: &mut Outputs, classify: bool) -> Result<Value> {
    let spectral_cfg = config.spectral_or_default();
    let command = if classify { "spec-classify" } else { "spec-fft" };
    let trace = match (&spectral_cfg.trace_csv, &config.dynamics) {
        (Some(path), _) => read_trace(path, &spectral_cfg.trace_columns)?,
        (None, Some(d)) => simulate_dynamics(d, d.probe)?.1,
        (None, None) => {
            return Err(Error::invalid(
                "spectral.trace_csv",
                format!("`{command}` needs a trace file or a dynamics section"),
            ))
        }
    };
    write_spectrum(&trace, &spectral_cfg, out, classify)
}

fn plan(config: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let gain = require(&config.gain, "gain", "plan")?;
    let planner_cfg = require(&config.planner, "planner", "plan")?;
    let profile = gain.profile()?;
    let constraints = planner_cfg.constraints();
    let plan = planner::plan_frequencies(&profile, planner_cfg.n_qubits, &constraints, config.seed)?;
    let violations = planner::validate_plan(&plan, &profile, &constraints);
    out.json("plan.json", &plan)?;
    plan.write_csv(&profile, out.create("plan.csv")?)?;
    Ok(json!({
        "objective_dB": plan.objective,
        "exact": plan.exact,
        "violations": violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
    }))
}

fn chain_budget(config: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let section = config.chain.clone().unwrap_or_default();
    let chain = section.chain()?;
    chain.write_budget_csv(out.create("budget.csv")?)?;
    let table = chain.budget_table()?;
    out.text("budget.txt", &table)?;
    let total = rf_chain::total_power(&chain);
    let capacity = rf_chain::qubit_capacity(section.receiver_bw_MHz, &section.capacity())?;
    let per_qubit = if capacity > 0 {
        Some(rf_chain::power_per_qubit(total, capacity)?)
    } else {
        None
    };
    Ok(json!({
        "total_power_mW": total,
        "cascade_gain_dB": rf_chain::cascade_gain(&chain)?,
        "cascade_nf_dB": rf_chain::cascade_noise_figure(&chain)?,
        "qubit_capacity": capacity,
        "power_per_qubit_mW": per_qubit,
    }))
}

fn chain_simulate(config: &RunConfig, out: &mut Outputs) -> Result<Value> {
    let sim = config.chain_sim.clone().unwrap_or_default();
    let waves = rf_chain::simulate_chain(&sim.tone(), sim.lo_GHz, &sim.params(), sim.duration_ns, sim.sample_rate_GSps)?;
    waves.write_csv(out.create("waveforms.csv")?)?;
    let trace = waves.settled_trace("if_out", sim.settle_ns)?;
    let spectrum = spectral::fft_spectrum(&trace, Window::None, 1)?;
    spectrum.write_csv(out.create("output_spectrum.csv")?)?;
    let (k_max, _) = spectrum
        .magnitude
        .iter()
        .enumerate()
        .skip(1)
        .fold((0, f64::NEG_INFINITY), |best, (k, &m)| if m > best.1 { (k, m) } else { best });
    Ok(json!({
        "output_peak_to_peak_V": waves.output_peak_to_peak(sim.settle_ns),
        "dominant_freq_MHz": spectrum.freq[k_max],
    }))
}
