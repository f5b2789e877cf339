//! Sampled JPA gain spectra.
//!
//! The quantitative gain curve is treated as data: it is either loaded from a
//! `freq_GHz,gain_dB` table or synthesized as a Lorentzian comb in linear
//! power. Nothing here derives gain from junction parameters.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::csv_util::write_table;
use crate::{Error, Result};

fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Pump/signal conditions a profile was recorded at. Carried as provenance
/// only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JpaOperatingPoint {
    pub pump_freq_ghz: f64,
    pub pump_current_ua: f64,
    pub signal_power_dbm: f64,
}

impl JpaOperatingPoint {
    pub fn validate(&self) -> Result<()> {
        if !(self.pump_freq_ghz > 0.0) {
            return Err(Error::invalid("pump_freq", "must be > 0"));
        }
        Ok(())
    }
}

/// Frequency → gain curve with strictly ascending frequencies (GHz) and
/// gains in dB.
#[derive(Clone, Debug, PartialEq)]
pub struct GainProfile {
    freqs: Vec<f64>,
    gains: Vec<f64>,
    operating_point: Option<JpaOperatingPoint>,
}

impl GainProfile {
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn band(&self) -> (f64, f64) {
        (self.freqs[0], self.freqs[self.freqs.len() - 1])
    }

    pub fn operating_point(&self) -> Option<&JpaOperatingPoint> {
        self.operating_point.as_ref()
    }

    pub fn with_operating_point(mut self, op: JpaOperatingPoint) -> Result<Self> {
        op.validate()?;
        self.operating_point = Some(op);
        Ok(self)
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.freqs.iter().copied().zip(self.gains.iter().copied())
    }

    /// Strict `freq_GHz,gain_dB` reader: extra or missing columns are errors.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() != 2 || &header[0] != "freq_GHz" || &header[1] != "gain_dB" {
            return Err(Error::invalid(
                "profile header",
                format!("expected `freq_GHz,gain_dB`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
            ));
        }
        let mut samples = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::invalid(format!("profile row {}", row + 1), "expected 2 columns"));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("profile row {}", row + 1), e.to_string()))
            };
            samples.push((parse(&rec[0])?, parse(&rec[1])?));
        }
        load_profile(samples)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_table(
            writer,
            &["freq_GHz".into(), "gain_dB".into()],
            self.samples().map(|(f, g)| vec![f, g]),
        )
    }
}

/// Validates and sorts `(GHz, dB)` samples into a profile.
pub fn load_profile(mut samples: Vec<(f64, f64)>) -> Result<GainProfile> {
    if samples.len() < 2 {
        return Err(Error::invalid("samples", "need at least 2 samples"));
    }
    if samples.iter().any(|(f, g)| !f.is_finite() || !g.is_finite()) {
        return Err(Error::invalid("samples", "contain NaN or infinite values"));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = samples.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("samples", format!("duplicate frequency {} GHz", w[0].0)));
    }
    let (freqs, gains) = samples.into_iter().unzip();
    Ok(GainProfile {
        freqs,
        gains,
        operating_point: None,
    })
}

/// Parameters of a synthetic Lorentzian gain comb.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    pub band_lo_ghz: f64,
    pub band_hi_ghz: f64,
    pub n_peaks: usize,
    pub peak_gain_db: f64,
    pub floor_gain_db: f64,
    /// Lorentzian half width at half maximum (MHz).
    pub linewidth_mhz: f64,
    pub n_samples: usize,
}

impl CombSpec {
    /// Peak centers, equally spaced: `lo + (k + ½)·(hi − lo)/n`.
    pub fn peak_centers(&self) -> Vec<f64> {
        let span = self.band_hi_ghz - self.band_lo_ghz;
        (0..self.n_peaks)
            .map(|k| self.band_lo_ghz + (k as f64 + 0.5) * span / self.n_peaks as f64)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band_lo_ghz.is_finite() && self.band_hi_ghz.is_finite() && self.band_lo_ghz < self.band_hi_ghz) {
            return Err(Error::invalid("band", "band_lo must be < band_hi"));
        }
        if self.n_peaks < 1 {
            return Err(Error::invalid("n_peaks", "must be >= 1"));
        }
        if !(self.peak_gain_db > self.floor_gain_db) {
            return Err(Error::invalid("peak_gain", "must exceed floor_gain"));
        }
        if !(self.linewidth_mhz > 0.0) {
            return Err(Error::invalid("linewidth", "must be > 0"));
        }
        if self.n_samples < 2 {
            return Err(Error::invalid("n_samples", "must be >= 2"));
        }
        Ok(())
    }
}

/// Linear-power Lorentzian comb sampled on a uniform grid over the band.
///
/// `g(f) = g_floor + Σ_k (g_peak − g_floor)/(1 + ((f − f_k)/Δ)²)` in linear
/// power, returned in dB. The peak centers are added to the grid so that
/// every peak is sampled exactly.
pub fn synth_comb(spec: &CombSpec) -> Result<GainProfile> {
    spec.validate()?;
    synth_comb_at(
        spec.band_lo_ghz,
        spec.band_hi_ghz,
        &spec.peak_centers(),
        spec.peak_gain_db,
        spec.floor_gain_db,
        spec.linewidth_mhz,
        spec.n_samples,
    )
}

/// Lorentzian comb with explicit peak centers (GHz).
pub fn synth_comb_at(
    band_lo: f64,
    band_hi: f64,
    centers: &[f64],
    peak_gain_db: f64,
    floor_gain_db: f64,
    linewidth_mhz: f64,
    n_samples: usize,
) -> Result<GainProfile> {
    if !(band_lo < band_hi) {
        return Err(Error::invalid("band", "band_lo must be < band_hi"));
    }
    if centers.is_empty() {
        return Err(Error::invalid("centers", "need at least one peak"));
    }
    if let Some(c) = centers.iter().find(|&&c| !(c >= band_lo && c <= band_hi)) {
        return Err(Error::invalid("centers", format!("{c} GHz outside the band")));
    }
    if !(peak_gain_db > floor_gain_db) {
        return Err(Error::invalid("peak_gain", "must exceed floor_gain"));
    }
    if !(linewidth_mhz > 0.0) || n_samples < 2 {
        return Err(Error::invalid("linewidth/n_samples", "linewidth > 0 and n_samples >= 2 required"));
    }
    let g_floor = db_to_lin(floor_gain_db);
    let amp = db_to_lin(peak_gain_db) - g_floor;
    let hw = linewidth_mhz * 1e-3;

    let step = (band_hi - band_lo) / (n_samples - 1) as f64;
    let mut grid: Vec<f64> = (0..n_samples).map(|i| band_lo + i as f64 * step).collect();
    grid[n_samples - 1] = band_hi;
    grid.extend_from_slice(centers);
    grid.sort_by(f64::total_cmp);
    // Drop grid points that would sit on top of an inserted center.
    let min_gap = step * 1e-6;
    let mut freqs: Vec<f64> = Vec::with_capacity(grid.len());
    for f in grid {
        match freqs.last() {
            Some(&last) if f - last <= min_gap => {
                if centers.contains(&f) {
                    *freqs.last_mut().expect("non-empty") = f;
                }
            }
            _ => freqs.push(f),
        }
    }

    let gains = freqs
        .iter()
        .map(|&f| {
            let lin = g_floor
                + centers
                    .iter()
                    .map(|&c| amp / (1.0 + ((f - c) / hw).powi(2)))
                    .sum::<f64>();
            lin_to_db(lin)
        })
        .collect();
    Ok(GainProfile {
        freqs,
        gains,
        operating_point: None,
    })
}

/// Linear interpolation in dB between the bracketing samples.
pub fn gain_at(profile: &GainProfile, f: f64) -> Result<f64> {
    let (lo, hi) = profile.band();
    if !(f >= lo && f <= hi) {
        return Err(Error::invalid("f", format!("{f} GHz outside band [{lo}, {hi}]")));
    }
    let fs = &profile.freqs;
    let i = fs.partition_point(|&x| x <= f);
    if i == 0 {
        return Ok(profile.gains[0]);
    }
    let i = i - 1;
    if fs[i] == f || i + 1 == fs.len() {
        return Ok(profile.gains[i]);
    }
    let t = (f - fs[i]) / (fs[i + 1] - fs[i]);
    Ok(profile.gains[i] + t * (profile.gains[i + 1] - profile.gains[i]))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtremaSet {
    /// `(GHz, dB)`, ascending in frequency.
    pub maxima: Vec<(f64, f64)>,
    pub minima: Vec<(f64, f64)>,
}

/// Interior discrete local maxima of `v`. A plateau counts once, at its first
/// sample, when it rises from the left and falls on the right.
fn local_maxima(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if v[i] > v[i - 1] {
            let mut j = i + 1;
            while j < n && v[j] == v[i] {
                j += 1;
            }
            if j < n && v[j] < v[i] {
                out.push(i);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

/// Topographic prominence of the peak at `i`.
fn prominence(v: &[f64], i: usize) -> f64 {
    let peak = v[i];
    let mut left_min = peak;
    for &x in v[..i].iter().rev() {
        if x > peak {
            break;
        }
        left_min = left_min.min(x);
    }
    let mut right_min = peak;
    for &x in &v[i + 1..] {
        if x > peak {
            break;
        }
        right_min = right_min.min(x);
    }
    peak - left_min.max(right_min)
}

/// Interior local maxima/minima whose prominence is at least `min_prominence`
/// dB. Band-edge samples are never reported.
pub fn find_extrema(profile: &GainProfile, min_prominence: f64) -> Result<ExtremaSet> {
    if !(min_prominence >= 0.0) {
        return Err(Error::invalid("prominence", "must be >= 0"));
    }
    let g = &profile.gains;
    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
    let pick = |v: &[f64]| -> Vec<(f64, f64)> {
        local_maxima(v)
            .into_iter()
            .filter(|&i| prominence(v, i) >= min_prominence)
            .map(|i| (profile.freqs[i], g[i]))
            .collect()
    };
    Ok(ExtremaSet {
        maxima: pick(g),
        minima: pick(&neg),
    })
}

/// Soft-limiter compression pinned to the input 1-dB point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressionModel {
    pub small_signal_gain_db: f64,
    pub p1db_in_dbm: f64,
}

impl CompressionModel {
    pub fn new(small_signal_gain_db: f64, p1db_in_dbm: f64) -> Result<Self> {
        if !(small_signal_gain_db > 0.0) {
            return Err(Error::invalid("small_signal_gain", "must be > 0"));
        }
        if !p1db_in_dbm.is_finite() {
            return Err(Error::invalid("p1db_in", "must be finite"));
        }
        Ok(Self {
            small_signal_gain_db,
            p1db_in_dbm,
        })
    }

    /// Saturation power (mW) such that the gain is exactly 1 dB down at
    /// `p1db_in_dbm`.
    pub fn p_sat_mw(&self) -> f64 {
        db_to_lin(self.p1db_in_dbm) / (10f64.powf(0.1) - 1.0)
    }
}

/// `G(P) = G_0 − 10·log10(1 + P/P_sat)` with `P` in mW.
pub fn compressed_gain(model: &CompressionModel, p_in_dbm: f64) -> f64 {
    let p = db_to_lin(p_in_dbm);
    model.small_signal_gain_db - 10.0 * (p / model.p_sat_mw()).ln_1p() / std::f64::consts::LN_10
}
