//! Mono 16-bit PCM WAV reading and writing.
//!
//! Deliberately narrow: anything that is not mono PCM16 is rejected with
//! an explicit message rather than resampled or converted.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct WavAudio {
    /// Samples normalized to [-1, 1] (PCM value / 32768).
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::WavFormat { path: path.into(), message: message.into() }
}

/// Read a mono PCM16 WAV file.
pub fn read_wav(path: &Path) -> Result<WavAudio> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(format_err(path, "missing RIFF/WAVE header"));
    }

    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(format_err(path, "truncated chunk"));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(format_err(path, "fmt chunk too small"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        pos = body_start + size + (size & 1);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| format_err(path, "no fmt chunk"))?;
    if format != 1 {
        return Err(format_err(path, format!("16-bit PCM required, got format tag {format}")));
    }
    if channels != 1 {
        return Err(format_err(path, format!("mono required, got {channels} channels")));
    }
    if bits != 16 {
        return Err(format_err(path, format!("16-bit PCM required, got {bits} bits")));
    }
    let data = data.ok_or_else(|| format_err(path, "no data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(format_err(path, "odd data chunk length"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Ok(WavAudio { samples, sample_rate: rate })
}

/// Read a WAV file, enforcing an expected sample rate unless overridden.
pub fn load_audio(path: &Path, expected_rate: Option<u32>) -> Result<WavAudio> {
    let audio = read_wav(path)?;
    if let Some(rate) = expected_rate {
        if audio.sample_rate != rate {
            return Err(format_err(
                path,
                format!(
                    "sample rate {} does not match the expected {rate} \
                     (pass an explicit rate override to accept it)",
                    audio.sample_rate
                ),
            ));
        }
    }
    Ok(audio)
}

/// Write a mono PCM16 WAV file; samples are clamped to [-1, 1] and scaled
/// by 32767.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silence.wav");
        write_wav(&path, &vec![0.0; 16000], 16000).unwrap();
        let audio = read_wav(&path).unwrap();
        assert_eq!(audio.sample_rate, 16000);
        assert_eq!(audio.samples.len(), 16000);
        assert!(audio.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_scale_square_wave_hits_pcm16_extremes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("square.wav");
        let samples: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        write_wav(&path, &samples, 2000).unwrap();
        let audio = read_wav(&path).unwrap();
        let hi = 32767.0 / 32768.0;
        for (i, &s) in audio.samples.iter().enumerate() {
            if i % 2 == 0 {
                assert_eq!(s, hi);
            } else {
                assert_eq!(s, -hi);
            }
        }
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        // hand-build a 2-channel header
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 4).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        std::fs::write(&path, bytes).unwrap();
        let err = read_wav(&path).unwrap_err().to_string();
        assert!(err.contains("mono required"), "{err}");
    }

    #[test]
    fn rate_mismatch_needs_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rate.wav");
        write_wav(&path, &vec![0.0; 100], 8000).unwrap();
        assert!(load_audio(&path, Some(2000)).is_err());
        assert!(load_audio(&path, None).is_ok());
        assert!(load_audio(&path, Some(8000)).is_ok());
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("noise.bin");
        std::fs::write(&path, b"definitely not a wav").unwrap();
        assert!(matches!(read_wav(&path), Err(Error::WavFormat { .. })));
    }
}
