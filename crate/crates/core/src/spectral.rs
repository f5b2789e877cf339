//! Spectra of probe-current traces, peak picking and the entanglement verdict.
//!
//! Times are in µs, so frequencies come out in MHz.

use std::io::Write;

use rustfft::FftPlanner;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MIN_TRACE_LEN: usize = 16;
pub const DEFAULT_THRESHOLD: f64 = 0.1;
const ROUNDOFF_FLOOR: f64 = 1e-12;

/// Samples on a uniform time grid (µs).
#[derive(Clone, Debug, PartialEq)]
pub struct TimeTrace {
    t: Vec<f64>,
    values: Vec<f64>,
}

impl TimeTrace {
    pub fn new(t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t.len() != values.len() {
            return Err(Error::invalid("trace", "time and value lengths differ"));
        }
        if t.len() < MIN_TRACE_LEN {
            return Err(Error::invalid("trace", format!("need at least {MIN_TRACE_LEN} samples, got {}", t.len())));
        }
        if values.iter().chain(&t).any(|v| !v.is_finite()) {
            return Err(Error::invalid("trace", "non-finite sample"));
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::invalid("trace.t", "must be increasing"));
        }
        for (k, w) in t.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-12 * dt.max(t[t.len() - 1].abs()) {
                return Err(Error::invalid("trace.t", format!("non-uniform spacing at sample {}", k + 1)));
            }
        }
        Ok(Self { t, values })
    }

    /// Uniform trace starting at `t0` with step `dt`.
    pub fn uniform(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        let t = (0..values.len()).map(|k| t0 + k as f64 * dt).collect();
        Self::new(t, values)
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dt(&self) -> f64 {
        (self.t[self.t.len() - 1] - self.t[0]) / (self.t.len() - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    None,
    Hann,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            // Periodic Hann: coherent gain is exactly ½.
            Window::Hann => (0..n)
                .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
                .collect(),
        }
    }

    fn amplitude_correction(self) -> f64 {
        match self {
            Window::None => 1.0,
            Window::Hann => 2.0,
        }
    }
}

/// One-sided amplitude spectrum; bin 0 carries the removed mean.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub freq: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        self.freq.get(1).copied().unwrap_or(0.0)
    }

    pub fn dc(&self) -> f64 {
        self.magnitude[0]
    }

    /// `freq_MHz,magnitude`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let header = ["freq_MHz".to_string(), "magnitude".to_string()];
        let rows = self.freq.iter().zip(&self.magnitude).map(|(&f, &m)| vec![f, m]);
        crate::csv_util::write_table(writer, &header, rows)
    }
}

pub fn fft_spectrum(trace: &TimeTrace, window: Window, zero_pad_factor: usize) -> Result<Spectrum> {
    if ![1, 2, 4, 8].contains(&zero_pad_factor) {
        return Err(Error::invalid("zero_pad_factor", "must be 1, 2, 4 or 8"));
    }
    let n = trace.len();
    let mean = trace.values.iter().sum::<f64>() / n as f64;
    let w = window.weights(n);
    let n_fft = n * zero_pad_factor;
    let mut buf: Vec<Complex64> = trace
        .values
        .iter()
        .zip(&w)
        .map(|(&x, &wk)| Complex64::new((x - mean) * wk, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);

    let scale = window.amplitude_correction() / n as f64;
    let n_half = n_fft / 2;
    let df = 1.0 / (n_fft as f64 * trace.dt());
    let mut magnitude: Vec<f64> = buf[..=n_half]
        .iter()
        .enumerate()
        .map(|(k, z)| {
            // Nyquist bin of an even-length transform has no mirror.
            let fold = if k == 0 || (n_fft.is_multiple_of(2) && k == n_half) { 1.0 } else { 2.0 };
            fold * z.norm() * scale
        })
        .collect();
    magnitude[0] = mean.abs();
    let freq = (0..=n_half).map(|k| k as f64 * df).collect();
    Ok(Spectrum { freq, magnitude })
}

/// Peaks in descending magnitude.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub peaks: Vec<(f64, f64)>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn freqs(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.0).collect()
    }
}

/// Non-DC local maxima at or above `rel_threshold` of the largest non-DC
/// magnitude. Maxima within one bin of a stronger one are merged into it.
/// A spectrum whose non-DC content is at round-off level has no peaks.
pub fn detect_peaks(spectrum: &Spectrum, rel_threshold: f64) -> Result<PeakSet> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::invalid("rel_threshold", "must lie in (0, 1)"));
    }
    let m = &spectrum.magnitude;
    let max = m.iter().skip(1).copied().fold(0.0, f64::max);
    // Round-off left behind by mean subtraction is not a spectral line.
    if m.len() < 2 || max <= ROUNDOFF_FLOOR * (1.0 + m[0]) {
        return Ok(PeakSet::default());
    }
    let floor = rel_threshold * max;
    let last = m.len() - 1;
    let mut idx: Vec<usize> = (1..=last)
        .filter(|&k| {
            let left = if k > 1 { m[k - 1] } else { f64::NEG_INFINITY };
            let right = if k < last { m[k + 1] } else { f64::NEG_INFINITY };
            m[k] >= floor && m[k] >= left && m[k] >= right
        })
        .collect();
    // Strongest first, lower bin on ties.
    idx.sort_by(|&a, &b| m[b].total_cmp(&m[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for k in idx {
        if kept.iter().all(|&j| j.abs_diff(k) > 1) {
            kept.push(k);
        }
    }
    Ok(PeakSet {
        peaks: kept.into_iter().map(|k| (spectrum.freq[k], m[k])).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntanglementVerdict {
    pub entangled: bool,
    #[serde(rename = "f0_MHz")]
    pub f0: Option<f64>,
    #[serde(rename = "f1_MHz")]
    pub f1: Option<f64>,
    #[serde(rename = "fc_MHz")]
    pub fc: Option<f64>,
}

/// Entangled when more than `base_mode_count` significant peaks are present.
/// `f0`, `f1` are the two largest peaks and `fc` the largest of the rest.
pub fn classify_entanglement(peaks: &PeakSet, base_mode_count: usize) -> Result<EntanglementVerdict> {
    if base_mode_count == 0 {
        return Err(Error::invalid("base_mode_count", "must be >= 1"));
    }
    let f = |i: usize| peaks.peaks.get(i).map(|p| p.0);
    let entangled = peaks.len() > base_mode_count;
    Ok(EntanglementVerdict {
        entangled,
        f0: f(0),
        f1: f(1),
        fc: if entangled { f(base_mode_count) } else { None },
    })
}

/// Like [`classify_entanglement`], but `fc` is the strongest peak that does
/// not coincide (within `tolerance_mhz`) with any peak of a reference run
/// taken in the unentangled regime.
pub fn classify_against_reference(
    peaks: &PeakSet,
    reference: &PeakSet,
    tolerance_mhz: f64,
) -> Result<EntanglementVerdict> {
    if !(tolerance_mhz >= 0.0) {
        return Err(Error::invalid("tolerance_mhz", "must be >= 0"));
    }
    let new_peak = peaks
        .peaks
        .iter()
        .find(|p| reference.peaks.iter().all(|r| (r.0 - p.0).abs() > tolerance_mhz))
        .map(|p| p.0);
    let f = |i: usize| peaks.peaks.get(i).map(|p| p.0);
    Ok(EntanglementVerdict {
        entangled: new_peak.is_some(),
        f0: f(0),
        f1: f(1),
        fc: new_peak,
    })
}
