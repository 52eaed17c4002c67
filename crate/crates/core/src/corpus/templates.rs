//! Parametric word templates.
//!
//! Each word is a Hann-windowed linear chirp with a word-specific
//! frequency signature. Words come in pairs that share a base frequency
//! and differ by a small offset, so the corpus contains genuinely
//! confusable classes while any two templates stay separable (normalized
//! cross-correlation below 0.9 at the optimal lag, checked at
//! construction).

use crate::error::{Error, Result};

/// Frequency signature of one word: a linear chirp from `f_start` to
/// `f_end` Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpParams {
    pub f_start: f64,
    pub f_end: f64,
}

#[derive(Debug, Clone)]
pub struct WordBank {
    sample_rate: u32,
    params: Vec<ChirpParams>,
}

/// Chirp rise over a word.
const RISE_HZ: f64 = 80.0;
/// Frequency offset between the two members of a confusable pair.
const PAIR_OFFSET_HZ: f64 = 30.0;
const F_LO: f64 = 250.0;
/// Maximal NCC allowed between any two distinct templates.
const SEPARABILITY_LIMIT: f64 = 0.9;

impl WordBank {
    /// Bank of `words` templates at a sample rate, verified separable at
    /// the given canonical duration.
    pub fn new(words: usize, sample_rate: u32, canonical_duration: usize) -> Result<Self> {
        if words < 2 {
            return Err(Error::InvalidConfig("word bank needs at least 2 words".into()));
        }
        let f_hi = 0.45 * sample_rate as f64;
        let pairs = words.div_ceil(2);
        let span = f_hi - F_LO - RISE_HZ - PAIR_OFFSET_HZ;
        if span < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sample rate {sample_rate} is too low for the template frequency plan"
            )));
        }
        let spacing = if pairs > 1 { span / (pairs - 1) as f64 } else { 0.0 };
        let params: Vec<ChirpParams> = (0..words)
            .map(|w| {
                let base = F_LO + (w / 2) as f64 * spacing;
                let offset = if w % 2 == 1 { PAIR_OFFSET_HZ } else { 0.0 };
                ChirpParams { f_start: base + offset, f_end: base + offset + RISE_HZ }
            })
            .collect();
        let bank = WordBank { sample_rate, params };
        bank.check_separability(canonical_duration)?;
        Ok(bank)
    }

    pub fn words(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self, word: usize) -> ChirpParams {
        self.params[word]
    }

    /// Synthesize one word occurrence. Phase is fixed so a template is a
    /// pure function of (word, duration, amplitude).
    pub fn synthesize(&self, word: usize, duration: usize, amplitude: f64) -> Vec<f64> {
        let p = self.params[word];
        let fs = self.sample_rate as f64;
        let dur_s = duration as f64 / fs;
        let rate = (p.f_end - p.f_start) / dur_s;
        (0..duration)
            .map(|i| {
                let t = i as f64 / fs;
                let envelope = hann(i, duration);
                let phase = std::f64::consts::TAU * (p.f_start * t + 0.5 * rate * t * t);
                amplitude * envelope * phase.sin()
            })
            .collect()
    }

    /// Error out if any two distinct templates correlate at or above the
    /// separability limit at their optimal lag.
    pub fn check_separability(&self, duration: usize) -> Result<()> {
        let templates: Vec<Vec<f64>> = (0..self.words())
            .map(|w| self.synthesize(w, duration, 1.0))
            .collect();
        for a in 0..templates.len() {
            for b in (a + 1)..templates.len() {
                let ncc = max_normalized_cross_correlation(&templates[a], &templates[b]);
                if ncc >= SEPARABILITY_LIMIT {
                    return Err(Error::TemplateCollision { word_a: a, word_b: b, ncc });
                }
            }
        }
        Ok(())
    }
}

fn hann(i: usize, len: usize) -> f64 {
    if len <= 1 {
        return 1.0;
    }
    let x = i as f64 / (len - 1) as f64;
    0.5 * (1.0 - (std::f64::consts::TAU * x).cos())
}

/// Maximum of |sum_i x[i] y[i+lag]| / (||x|| ||y||) over all integer lags.
pub fn max_normalized_cross_correlation(x: &[f64], y: &[f64]) -> f64 {
    let ex: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ey: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ex == 0.0 || ey == 0.0 {
        return 0.0;
    }
    let mut best = 0.0f64;
    let nx = x.len() as i64;
    let ny = y.len() as i64;
    for lag in -(ny - 1)..nx {
        let mut dot = 0.0;
        for i in 0..nx {
            let j = i - lag;
            if j >= 0 && j < ny {
                dot += x[i as usize] * y[j as usize];
            }
        }
        best = best.max(dot.abs() / (ex * ey));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bank_is_separable() {
        let bank = WordBank::new(10, 2000, 160).unwrap();
        assert_eq!(bank.words(), 10);
        bank.check_separability(80).unwrap();
        bank.check_separability(240).unwrap();
    }

    #[test]
    fn pair_members_share_a_base_frequency() {
        let bank = WordBank::new(10, 2000, 160).unwrap();
        for p in 0..5 {
            let a = bank.params(2 * p);
            let b = bank.params(2 * p + 1);
            assert!((b.f_start - a.f_start - PAIR_OFFSET_HZ).abs() < 1e-9);
        }
    }

    #[test]
    fn synthesis_is_deterministic_and_windowed() {
        let bank = WordBank::new(4, 2000, 160).unwrap();
        let a = bank.synthesize(1, 120, 0.8);
        let b = bank.synthesize(1, 120, 0.8);
        assert_eq!(a, b);
        assert_eq!(a.len(), 120);
        assert_eq!(a[0], 0.0); // Hann edges
        assert!(a.iter().all(|v| v.abs() <= 0.8 + 1e-12));
        assert!(a.iter().any(|v| v.abs() > 0.1));
    }

    #[test]
    fn ncc_detects_identical_templates() {
        let bank = WordBank::new(4, 2000, 160).unwrap();
        let x = bank.synthesize(0, 160, 1.0);
        let ncc = max_normalized_cross_correlation(&x, &x);
        assert!((ncc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_small_banks_are_rejected() {
        assert!(WordBank::new(1, 2000, 160).is_err());
    }
}
