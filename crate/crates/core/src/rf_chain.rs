//! Room-temperature receiver: link budget and a behavioral down-conversion
//! model (LNA → mixer → IF low-pass → IF gain).

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::spectral::TimeTrace;
use crate::{Error, Result};

fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn db_to_voltage(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainBlock {
    pub name: String,
    pub gain_db: f64,
    pub noise_figure_db: f64,
    pub power_mw: f64,
    pub band_lo_ghz: f64,
    pub band_hi_ghz: f64,
}

impl ChainBlock {
    pub fn new(name: &str, gain_db: f64, noise_figure_db: f64, power_mw: f64, band: (f64, f64)) -> Self {
        Self {
            name: name.to_string(),
            gain_db,
            noise_figure_db,
            power_mw,
            band_lo_ghz: band.0,
            band_hi_ghz: band.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("{}.{f}", self.name);
        if !self.gain_db.is_finite() {
            return Err(Error::invalid(field("gain"), "must be finite"));
        }
        if !(self.noise_figure_db >= 0.0 && self.noise_figure_db.is_finite()) {
            return Err(Error::invalid(field("noise_figure"), "must be >= 0"));
        }
        if !(self.power_mw >= 0.0 && self.power_mw.is_finite()) {
            return Err(Error::invalid(field("power"), "must be >= 0"));
        }
        if !(self.band_lo_ghz >= 0.0 && self.band_lo_ghz < self.band_hi_ghz && self.band_hi_ghz.is_finite()) {
            return Err(Error::invalid(field("band"), "need 0 <= lo < hi"));
        }
        Ok(())
    }
}

/// Blocks in signal order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub blocks: Vec<ChainBlock>,
}

impl ChainSpec {
    pub fn new(blocks: Vec<ChainBlock>) -> Result<Self> {
        let spec = Self { blocks };
        spec.validate()?;
        Ok(spec)
    }

    /// LNA, VCO, mixer and four IF amplifiers of the C-band receiver.
    ///
    /// Mixer and IF noise figures are not published for this chain; 10 dB is
    /// assumed for both and only matters behind the 72 dB LNA.
    pub fn reference_design() -> Self {
        let rf = (4.1, 8.2);
        let if_band = (0.0, 0.25);
        let mut blocks = vec![
            ChainBlock::new("LNA", 72.0, 0.94, 28.2, rf),
            ChainBlock::new("VCO", 0.0, 0.0, 0.18, rf),
            ChainBlock::new("Mixer", 0.0, 10.0, 1.6, rf),
        ];
        for k in 1..=4 {
            blocks.push(ChainBlock::new(&format!("IF{k}"), 8.0, 10.0, 9.5, if_band));
        }
        Self { blocks }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::invalid("blocks", "chain must not be empty"));
        }
        self.blocks.iter().try_for_each(ChainBlock::validate)
    }

    /// `block,gain_dB,nf_dB,power_mW`, one row per block then a `total` row.
    pub fn write_budget_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["block", "gain_dB", "nf_dB", "power_mW"])?;
        for b in &self.blocks {
            w.write_record([b.name.clone(), b.gain_db.to_string(), b.noise_figure_db.to_string(), b.power_mw.to_string()])?;
        }
        w.write_record([
            "total".to_string(),
            cascade_gain(self)?.to_string(),
            cascade_noise_figure(self)?.to_string(),
            total_power(self).to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }

    /// Aligned plain-text budget.
    pub fn budget_table(&self) -> Result<String> {
        let width = self.blocks.iter().map(|b| b.name.len()).max().unwrap_or(0).max(5);
        let mut s = String::new();
        let line = |s: &mut String, name: &str, g: f64, nf: f64, p: f64| {
            let _ = writeln!(s, "{name:<width$}  {g:>9.2}  {nf:>8.3}  {p:>10.2}");
        };
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>8}  {:>10}", "block", "gain_dB", "nf_dB", "power_mW");
        for b in &self.blocks {
            line(&mut s, &b.name, b.gain_db, b.noise_figure_db, b.power_mw);
        }
        line(&mut s, "total", cascade_gain(self)?, cascade_noise_figure(self)?, total_power(self));
        Ok(s)
    }
}

/// Sum of block gains in dB.
pub fn cascade_gain(chain: &ChainSpec) -> Result<f64> {
    chain.validate()?;
    Ok(chain.blocks.iter().map(|b| b.gain_db).sum())
}

/// Friis cascade: `F = F₁ + Σ_{k≥2} (F_k − 1) / Π_{j<k} G_j`, in dB.
pub fn cascade_noise_figure(chain: &ChainSpec) -> Result<f64> {
    chain.validate()?;
    let mut f_total = 0.0;
    let mut g_before = 1.0;
    for (k, b) in chain.blocks.iter().enumerate() {
        let f = db_to_power(b.noise_figure_db);
        f_total += if k == 0 { f } else { (f - 1.0) / g_before };
        g_before *= db_to_power(b.gain_db);
    }
    Ok(10.0 * f_total.log10())
}

pub fn total_power(chain: &ChainSpec) -> f64 {
    chain.blocks.iter().map(|b| b.power_mw).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityModel {
    pub per_qubit_bw_mhz: f64,
    pub spacing_mhz: f64,
    /// Qubits served per allocated channel: 1 for individually read qubits,
    /// 2 when a coupled pair shares one channel.
    pub qubits_per_channel: u32,
}

impl CapacityModel {
    pub fn single(per_qubit_bw_mhz: f64, spacing_mhz: f64) -> Self {
        Self {
            per_qubit_bw_mhz,
            spacing_mhz,
            qubits_per_channel: 1,
        }
    }

    pub fn pairs(per_pair_bw_mhz: f64) -> Self {
        Self {
            per_qubit_bw_mhz: per_pair_bw_mhz,
            spacing_mhz: 0.0,
            qubits_per_channel: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.per_qubit_bw_mhz >= 0.0 && self.spacing_mhz >= 0.0) {
            return Err(Error::invalid("capacity", "bandwidths must be >= 0"));
        }
        if !(self.per_qubit_bw_mhz + self.spacing_mhz > 0.0) {
            return Err(Error::invalid("capacity", "per_qubit_bw + spacing must be > 0"));
        }
        if self.qubits_per_channel == 0 {
            return Err(Error::invalid("qubits_per_channel", "must be >= 1"));
        }
        Ok(())
    }
}

/// `floor(receiver_bw / (per_qubit_bw + spacing)) · qubits_per_channel`.
pub fn qubit_capacity(receiver_bw_mhz: f64, model: &CapacityModel) -> Result<u64> {
    model.validate()?;
    if !(receiver_bw_mhz >= 0.0 && receiver_bw_mhz.is_finite()) {
        return Err(Error::invalid("receiver_bw", "must be >= 0"));
    }
    let channels = (receiver_bw_mhz / (model.per_qubit_bw_mhz + model.spacing_mhz)).floor() as u64;
    Ok(channels * u64::from(model.qubits_per_channel))
}

pub fn power_per_qubit(total_mw: f64, count: u64) -> Result<f64> {
    if count == 0 {
        return Err(Error::invalid("count", "must be >= 1"));
    }
    Ok(total_mw / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneSignal {
    pub freq_ghz: f64,
    /// Peak amplitude, V.
    pub amplitude_v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSimParams {
    pub lna_gain_db: f64,
    pub if_gain_db: f64,
    pub if_cutoff_mhz: f64,
}

impl ChainSimParams {
    pub fn reference_design() -> Self {
        Self {
            lna_gain_db: 72.0,
            if_gain_db: 32.0,
            if_cutoff_mhz: 250.0,
        }
    }
}

pub const STAGES: [&str; 5] = ["input", "lna", "mixer", "lowpass", "if_out"];

/// Waveforms after each stage on a shared time grid (ns).
#[derive(Clone, Debug, PartialEq)]
pub struct StagedWaveforms {
    pub t_ns: Vec<f64>,
    pub input: Vec<f64>,
    pub lna: Vec<f64>,
    pub mixer: Vec<f64>,
    pub lowpass: Vec<f64>,
    pub if_out: Vec<f64>,
}

impl StagedWaveforms {
    pub fn stage(&self, name: &str) -> Option<&[f64]> {
        Some(match name {
            "input" => &self.input,
            "lna" => &self.lna,
            "mixer" => &self.mixer,
            "lowpass" => &self.lowpass,
            "if_out" => &self.if_out,
            _ => return None,
        })
    }

    fn settled_start(&self, skip_ns: f64) -> usize {
        self.t_ns.partition_point(|&t| t < skip_ns)
    }

    /// Peak-to-peak of the IF output after `skip_ns` of filter settling.
    pub fn output_peak_to_peak(&self, skip_ns: f64) -> f64 {
        let tail = &self.if_out[self.settled_start(skip_ns)..];
        let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// A stage after `skip_ns`, with time in µs so that spectra come out in MHz.
    pub fn settled_trace(&self, stage: &str, skip_ns: f64) -> Result<TimeTrace> {
        let v = self
            .stage(stage)
            .ok_or_else(|| Error::invalid("stage", format!("unknown stage `{stage}`")))?;
        let start = self.settled_start(skip_ns);
        let t = self.t_ns[start..].iter().map(|t| t * 1e-3).collect();
        TimeTrace::new(t, v[start..].to_vec())
    }

    /// Long format `t_ns,stage,voltage_V`, stage by stage.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_ns", "stage", "voltage_V"])?;
        for name in STAGES {
            let v = self.stage(name).expect("known stage");
            for (t, x) in self.t_ns.iter().zip(v) {
                w.write_record([t.to_string(), name.to_string(), x.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Second-order Butterworth low-pass, bilinear transform with prewarping so
/// the −3 dB point lands exactly on `cutoff_hz`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    pub fn butterworth_lowpass(cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
            return Err(Error::invalid("if_cutoff", "must lie in (0, sample_rate/2)"));
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let norm = 1.0 / (1.0 + SQRT_2 * k + k * k);
        let b0 = k * k * norm;
        Ok(Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - SQRT_2 * k + k * k) * norm],
        })
    }

    /// Magnitude response at `f_hz`.
    pub fn gain_at(&self, f_hz: f64, sample_rate_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / sample_rate_hz;
        let z1 = num_complex::Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z1 * self.a[0] + z2 * self.a[1];
        (num / den).norm()
    }

    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
                (x2, x1, y2, y1) = (x1, x0, y1, y0);
                y0
            })
            .collect()
    }
}

/// Runs a tone through LNA gain, an ideal multiplier against a unit cosine
/// LO, the IF low-pass and IF gain. The filter starts at rest, so the first
/// few nanoseconds of the lowpass/IF stages carry its transient.
pub fn simulate_chain(
    input: &ToneSignal,
    lo_freq_ghz: f64,
    params: &ChainSimParams,
    duration_ns: f64,
    sample_rate_gsps: f64,
) -> Result<StagedWaveforms> {
    if !(input.amplitude_v >= 0.0 && input.amplitude_v.is_finite()) {
        return Err(Error::invalid("amplitude", "must be >= 0"));
    }
    if !(input.freq_ghz > 0.0 && lo_freq_ghz > 0.0) {
        return Err(Error::invalid("freq", "tone and LO frequencies must be > 0"));
    }
    if !(sample_rate_gsps > 4.0 * input.freq_ghz.max(lo_freq_ghz)) {
        return Err(Error::invalid(
            "sample_rate",
            format!("{sample_rate_gsps} GS/s does not exceed 4× the highest tone"),
        ));
    }
    if !(duration_ns > 0.0 && duration_ns.is_finite()) {
        return Err(Error::invalid("duration", "must be > 0"));
    }
    if !params.lna_gain_db.is_finite() || !params.if_gain_db.is_finite() {
        return Err(Error::invalid("gain", "must be finite"));
    }
    let n = (duration_ns * sample_rate_gsps).round() as usize;
    let dt = 1.0 / sample_rate_gsps;
    let t_ns: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let rf: Vec<f64> = t_ns
        .iter()
        .map(|t| input.amplitude_v * (2.0 * PI * input.freq_ghz * t).cos())
        .collect();
    let g_lna = db_to_voltage(params.lna_gain_db);
    let lna: Vec<f64> = rf.iter().map(|x| x * g_lna).collect();
    let mixer: Vec<f64> = lna
        .iter()
        .zip(&t_ns)
        .map(|(x, t)| x * (2.0 * PI * lo_freq_ghz * t).cos())
        .collect();
    let lp = Biquad::butterworth_lowpass(params.if_cutoff_mhz * 1e6, sample_rate_gsps * 1e9)?;
    let lowpass = lp.filter(&mixer);
    let g_if = db_to_voltage(params.if_gain_db);
    let if_out = lowpass.iter().map(|x| x * g_if).collect();
    Ok(StagedWaveforms {
        t_ns,
        input: rf,
        lna,
        mixer,
        lowpass,
        if_out,
    })
}
