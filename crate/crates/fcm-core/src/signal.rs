//! Measurement conditioning: low-pass filtering, rate differentiation and
//! time-series alignment.
//!
//! All series are uniformly sampled. A [`Channel`] carries its values plus the
//! index range that holds meaningful samples; shifting and differentiation
//! shrink that range instead of inventing data at the edges.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::SignalError;

/// Largest allowed alignment shift in samples.
pub const MAX_SHIFT: i32 = 16;

/// A uniformly sampled series with an explicit valid index range.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub values: Vec<f64>,
    pub valid: Range<usize>,
}

impl Channel {
    /// A channel whose every sample is valid.
    pub fn full(values: Vec<f64>) -> Self {
        let n = values.len();
        Self { values, valid: 0..n }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Single forward pass; usable online, introduces group delay.
    Causal,
    /// Forward-backward pass; offline only, no group delay.
    ZeroPhase,
}

/// Second-order Butterworth low-pass specification.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
    pub mode: FilterMode,
}

impl FilterSpec {
    pub fn new(cutoff_hz: f64, sample_rate_hz: f64, mode: FilterMode) -> Self {
        Self { cutoff_hz, sample_rate_hz, mode }
    }

    /// Warm-up length (samples) below which filtering is refused.
    pub fn warmup_samples(&self) -> usize {
        (3.0 / self.cutoff_hz * self.sample_rate_hz).ceil() as usize
    }

    /// Low-frequency group delay of the causal filter, in samples.
    pub fn group_delay_samples(&self) -> f64 {
        match self.mode {
            FilterMode::ZeroPhase => 0.0,
            FilterMode::Causal => {
                // analog prototype group delay at DC: √2 / ω_c
                std::f64::consts::SQRT_2 / (2.0 * std::f64::consts::PI * self.cutoff_hz)
                    * self.sample_rate_hz
            }
        }
    }

    fn validate(&self, len: usize) -> Result<(), SignalError> {
        let nyquist = self.sample_rate_hz / 2.0;
        if !(self.cutoff_hz > 0.0) || self.cutoff_hz >= nyquist {
            return Err(SignalError::CutoffAboveNyquist {
                cutoff_hz: self.cutoff_hz,
                nyquist_hz: nyquist,
            });
        }
        let min = self.warmup_samples();
        if len <= min {
            return Err(SignalError::TooShort { len, min });
        }
        Ok(())
    }
}

/// Transposed direct-form-II biquad.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    z1: f64,
    z2: f64,
}

impl Biquad {
    /// Bilinear-transform Butterworth low-pass (Q = 1/√2).
    pub fn lowpass(cutoff_hz: f64, sample_rate_hz: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / sample_rate_hz;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin * std::f64::consts::FRAC_1_SQRT_2;

        let b0 = (1.0 - cos) * 0.5;
        let b1 = 1.0 - cos;
        let b2 = b0;
        let a0 = 1.0 + alpha;
        let a1 = -2.0 * cos;
        let a2 = 1.0 - alpha;

        Self {
            b0: b0 / a0,
            b1: b1 / a0,
            b2: b2 / a0,
            a1: a1 / a0,
            a2: a2 / a0,
            z1: 0.0,
            z2: 0.0,
        }
    }

    /// Set the internal state to the steady-state response for constant
    /// input `x0`, so the filter starts settled instead of from zero.
    pub fn prime(&mut self, x0: f64) {
        let k = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        self.z1 = (k - self.b0) * x0;
        self.z2 = (self.b2 - self.a2 * k) * x0;
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.z1;
        self.z1 = self.b1 * x - self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }
}

fn filter_pass(values: &[f64], spec: &FilterSpec) -> Vec<f64> {
    let mut bq = Biquad::lowpass(spec.cutoff_hz, spec.sample_rate_hz);
    if let Some(&x0) = values.first() {
        bq.prime(x0);
    }
    values.iter().map(|&x| bq.step(x)).collect()
}

/// Apply the 2nd-order Butterworth low-pass. Zero-phase mode runs a
/// forward-backward pass over an odd-reflected extension of the series.
pub fn lowpass(values: &[f64], spec: &FilterSpec) -> Result<Vec<f64>, SignalError> {
    spec.validate(values.len())?;
    match spec.mode {
        FilterMode::Causal => Ok(filter_pass(values, spec)),
        FilterMode::ZeroPhase => {
            let n = values.len();
            let pad = ((spec.sample_rate_hz / spec.cutoff_hz).ceil() as usize)
                .max(9)
                .min(n - 1);
            let mut ext = Vec::with_capacity(n + 2 * pad);
            let first = values[0];
            let last = values[n - 1];
            for i in (1..=pad).rev() {
                ext.push(2.0 * first - values[i]);
            }
            ext.extend_from_slice(values);
            for i in 1..=pad {
                ext.push(2.0 * last - values[n - 1 - i]);
            }
            let mut fwd = filter_pass(&ext, spec);
            fwd.reverse();
            let mut back = filter_pass(&fwd, spec);
            back.reverse();
            Ok(back[pad..pad + n].to_vec())
        }
    }
}

/// Filter a channel; validity is preserved (filtering does not shrink the
/// valid range, the warm-up contract is handled by the caller's shift/warm-up
/// bookkeeping).
pub fn lowpass_channel(ch: &Channel, spec: &FilterSpec) -> Result<Channel, SignalError> {
    Ok(Channel { values: lowpass(&ch.values, spec)?, valid: ch.valid.clone() })
}

/// First-order backward difference (x_k − x_{k−1}) / dt. The first sample has
/// no predecessor and is marked invalid.
pub fn differentiate_rates(ch: &Channel, dt: f64) -> Channel {
    let n = ch.values.len();
    let mut out = vec![0.0; n];
    for k in 1..n {
        out[k] = (ch.values[k] - ch.values[k - 1]) / dt;
    }
    let start = ch.valid.start.saturating_add(1).min(n);
    Channel { values: out, valid: start..ch.valid.end }
}

/// Per-channel integer shifts used to undo estimation lag before the
/// detector pairs the series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesAlignment {
    /// Shift per channel in samples: output[i] = input[i − shift].
    /// Negative values advance a lagging channel.
    pub shifts: Vec<i32>,
}

impl SeriesAlignment {
    pub fn identity(n: usize) -> Self {
        Self { shifts: vec![0; n] }
    }
}

/// Shift each channel by its alignment and restrict all channels to the
/// common valid index range.
pub fn synchronize(
    channels: &[Channel],
    alignment: &SeriesAlignment,
) -> Result<Vec<Channel>, SignalError> {
    if channels.len() != alignment.shifts.len() {
        return Err(SignalError::ChannelCountMismatch {
            channels: channels.len(),
            shifts: alignment.shifts.len(),
        });
    }
    for &s in &alignment.shifts {
        if s.abs() > MAX_SHIFT {
            return Err(SignalError::ShiftOutOfBounds { shift: s, bound: MAX_SHIFT });
        }
    }

    let mut shifted = Vec::with_capacity(channels.len());
    let mut common: Option<Range<usize>> = None;
    for (ch, &s) in channels.iter().zip(&alignment.shifts) {
        let n = ch.values.len();
        let mut values = vec![0.0; n];
        for i in 0..n {
            let src = i as i64 - s as i64;
            if src >= 0 && (src as usize) < n {
                values[i] = ch.values[src as usize];
            }
        }
        let start = (ch.valid.start as i64 + s as i64).clamp(0, n as i64) as usize;
        let end = (ch.valid.end as i64 + s as i64).clamp(0, n as i64) as usize;
        let valid = start..end.max(start);
        common = Some(match common {
            None => valid.clone(),
            Some(c) => c.start.max(valid.start)..c.end.min(valid.end.max(valid.start)),
        });
        shifted.push(Channel { values, valid });
    }
    let common = common.unwrap_or(0..0);
    if common.start >= common.end {
        return Err(SignalError::EmptyOverlap);
    }
    for ch in &mut shifted {
        ch.valid = common.clone();
    }
    Ok(shifted)
}
