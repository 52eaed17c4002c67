//! Versioned checkpoint container.
//!
//! A checkpoint is a structured text header (TOML) describing the model
//! and training state, followed by raw little-endian 32-bit float
//! parameter blocks in the declared order. When training state is saved
//! for resumption, full-precision (f64) master parameters and Adam moments
//! follow the f32 blocks; inference never needs them.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneSpec, ConvBackbone};
use crate::error::{Error, Result};
use crate::heads::HeadParams;
use crate::labeling::Lexicon;
use crate::model::Model;

const MAGIC: &str = "wordspot-checkpoint v1";

/// Training metadata stored alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_completed: usize,
    pub total_epochs: usize,
    pub seed: u64,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub batch_size: usize,
    pub max_leading_cut: usize,
    pub teacher_force: bool,
    pub positive_min: f64,
    pub negative_max: f64,
}

/// Full-precision optimizer state appended for exact training resumption.
#[derive(Debug, Clone, PartialEq)]
pub struct ResumeState {
    pub master: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_step: u64,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub training: TrainingMeta,
    pub resume: Option<ResumeState>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Block {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    sample_rate: u32,
    receptive_field: usize,
    stride: usize,
    feature_dim: usize,
    lexicon: Vec<String>,
    backbone: BackboneSpec,
    training: TrainingMeta,
    blocks: Vec<Block>,
    resume_blocks: Vec<Block>,
    adam_step: u64,
}

pub fn save_bytes(
    model: &Model,
    training: &TrainingMeta,
    resume: Option<&ResumeState>,
) -> Result<Vec<u8>> {
    let geometry = model.geometry();
    let params = model.flatten();
    let blocks: Vec<Block> = model
        .parameter_blocks()
        .into_iter()
        .map(|(name, len)| Block { name, len })
        .collect();

    let (resume_blocks, adam_step) = match resume {
        Some(state) => {
            let n = params.len();
            for (name, v) in [
                ("master", &state.master),
                ("adam_m", &state.adam_m),
                ("adam_v", &state.adam_v),
            ] {
                if v.len() != n {
                    return Err(Error::CheckpointFormat(format!(
                        "resume block {name} has {} values, model has {n} parameters",
                        v.len()
                    )));
                }
            }
            let blocks = ["master", "adam_m", "adam_v"]
                .iter()
                .map(|name| Block { name: (*name).into(), len: n })
                .collect();
            (blocks, state.adam_step)
        }
        None => (Vec::new(), 0),
    };

    let header = Header {
        format_version: 1,
        sample_rate: model.sample_rate,
        receptive_field: geometry.receptive_field(),
        stride: geometry.stride(),
        feature_dim: model.backbone.spec().feature_dim,
        lexicon: model.lexicon.words().to_vec(),
        backbone: model.backbone.spec().clone(),
        training: training.clone(),
        blocks,
        resume_blocks,
        adam_step,
    };
    let header_toml = toml::to_string(&header)
        .map_err(|e| Error::CheckpointFormat(format!("header serialization: {e}")))?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(format!("header_bytes {}\n", header_toml.len()).as_bytes());
    out.extend_from_slice(header_toml.as_bytes());
    for &v in &params {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    if let Some(state) = resume {
        for block in [&state.master, &state.adam_m, &state.adam_v] {
            for &v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn save(
    path: &Path,
    model: &Model,
    training: &TrainingMeta,
    resume: Option<&ResumeState>,
) -> Result<()> {
    let bytes = save_bytes(model, training, resume)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |msg: &str| Error::CheckpointFormat(msg.to_string());

    let mut cursor = 0usize;
    let mut read_line = || -> Result<&str> {
        let rest = &bytes[cursor..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated header"))?;
        let line = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("non-UTF8 header"))?;
        cursor += nl + 1;
        Ok(line)
    };

    if read_line()? != MAGIC {
        return Err(bad("not a wordspot checkpoint (bad magic)"));
    }
    let size_line = read_line()?;
    let header_len: usize = size_line
        .strip_prefix("header_bytes ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing header_bytes line"))?;
    if bytes.len() < cursor + header_len {
        return Err(bad("truncated header"));
    }
    let header_str = std::str::from_utf8(&bytes[cursor..cursor + header_len])
        .map_err(|_| bad("non-UTF8 header"))?;
    cursor += header_len;
    let header: Header =
        toml::from_str(header_str).map_err(|e| Error::CheckpointFormat(format!("header: {e}")))?;
    if header.format_version != 1 {
        return Err(Error::CheckpointFormat(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }

    let lexicon = Lexicon::new(header.lexicon.clone())?;
    let backbone = ConvBackbone::zeros(header.backbone.clone())?;
    let derived = header.backbone.derived_geometry()?;
    if derived.receptive_field() != header.receptive_field || derived.stride() != header.stride {
        return Err(bad("geometry in header disagrees with the backbone layers"));
    }
    let heads = HeadParams::zeros(lexicon.len(), header.backbone.feature_dim);
    let mut model = Model { backbone, heads, lexicon, sample_rate: header.sample_rate };

    let expected_blocks = model.parameter_blocks();
    if expected_blocks.len() != header.blocks.len()
        || expected_blocks
            .iter()
            .zip(&header.blocks)
            .any(|((en, el), b)| *en != b.name || *el != b.len)
    {
        return Err(bad("parameter blocks disagree with the declared architecture"));
    }

    let param_count: usize = expected_blocks.iter().map(|(_, l)| l).sum();
    let f32_bytes = param_count * 4;
    if bytes.len() < cursor + f32_bytes {
        return Err(bad("truncated parameter data"));
    }
    let mut params = Vec::with_capacity(param_count);
    {
        let mut data = &bytes[cursor..cursor + f32_bytes];
        let mut buf = [0u8; 4];
        for _ in 0..param_count {
            data.read_exact(&mut buf).map_err(|_| bad("truncated parameter data"))?;
            params.push(f32::from_le_bytes(buf) as f64);
        }
    }
    cursor += f32_bytes;
    model.unflatten(&params);

    let resume = if header.resume_blocks.is_empty() {
        None
    } else {
        if header.resume_blocks.len() != 3
            || header.resume_blocks.iter().any(|b| b.len != param_count)
        {
            return Err(bad("malformed resume blocks"));
        }
        let need = 3 * param_count * 8;
        if bytes.len() < cursor + need {
            return Err(bad("truncated resume data"));
        }
        let read_f64_block = |cursor: &mut usize| -> Vec<f64> {
            let mut v = Vec::with_capacity(param_count);
            for _ in 0..param_count {
                let mut buf = [0u8; 8];
                buf.copy_from_slice(&bytes[*cursor..*cursor + 8]);
                *cursor += 8;
                v.push(f64::from_le_bytes(buf));
            }
            v
        };
        let master = read_f64_block(&mut cursor);
        let adam_m = read_f64_block(&mut cursor);
        let adam_v = read_f64_block(&mut cursor);
        Some(ResumeState { master, adam_m, adam_v, adam_step: header.adam_step })
    };

    Ok(Checkpoint { model, training: header.training, resume })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_bytes(&bytes)
}
