//! Binary model checkpoints.
//!
//! Layout: an 8-byte magic, a little-endian `u32` length, that many bytes of
//! UTF-8 JSON header, then every parameter as a little-endian `f32` in flat
//! layout order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{CodylinConfig, CodylinModel, DylinConfig, DylinModel, ModelGraph, RayModel};
use crate::scene::{IntegrationTeacher, TeacherConfig};
use crate::{Error, Result};

pub const DYLIN_MAGIC: &[u8; 8] = b"DYLIN\0v1";
pub const CODYLIN_MAGIC: &[u8; 8] = b"CODYL\0v1";

/// Free-form provenance stored next to the configuration.
pub type Meta = serde_json::Map<String, serde_json::Value>;

#[derive(Serialize, Deserialize)]
struct Header<C> {
    config: C,
    n_params: usize,
    #[serde(default)]
    meta: Meta,
}

/// A loaded model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Dylin(DylinModel),
    Codylin(CodylinModel),
}

impl AnyModel {
    pub fn as_dyn(&self) -> &dyn RayModel<f32> {
        match self {
            AnyModel::Dylin(m) => m,
            AnyModel::Codylin(m) => m,
        }
    }

    /// JSON view of the configuration.
    pub fn config_json(&self) -> serde_json::Value {
        match self {
            AnyModel::Dylin(m) => serde_json::to_value(m.config()),
            AnyModel::Codylin(m) => serde_json::to_value(m.config()),
        }
        .expect("configs serialize")
    }
}

impl RayModel<f32> for AnyModel {
    fn graph(&self) -> &ModelGraph {
        self.as_dyn().graph()
    }

    fn params(&self) -> &[f32] {
        self.as_dyn().params()
    }

    fn params_mut(&mut self) -> &mut [f32] {
        match self {
            AnyModel::Dylin(m) => m.params_mut(),
            AnyModel::Codylin(m) => m.params_mut(),
        }
    }

    fn label(&self) -> String {
        self.as_dyn().label()
    }
}

impl From<DylinModel> for AnyModel {
    fn from(m: DylinModel) -> Self {
        AnyModel::Dylin(m)
    }
}

impl From<CodylinModel> for AnyModel {
    fn from(m: CodylinModel) -> Self {
        AnyModel::Codylin(m)
    }
}

fn encode<C: Serialize>(magic: &[u8; 8], config: &C, params: &[f32], meta: &Meta) -> Vec<u8> {
    let header = Header { config, n_params: params.len(), meta: meta.clone() };
    let json = serde_json::to_vec(&header).expect("headers serialize");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * params.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn to_bytes(model: &AnyModel, meta: &Meta) -> Vec<u8> {
    match model {
        AnyModel::Dylin(m) => encode(DYLIN_MAGIC, m.config(), m.params(), meta),
        AnyModel::Codylin(m) => encode(CODYLIN_MAGIC, m.config(), m.params(), meta),
    }
}

/// Splits a length-prefixed JSON block off the front of `bytes`.
pub(crate) fn split_json_block(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    if bytes.len() < 4 {
        return Err(Error::malformed("truncated header length"));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().expect("four bytes")) as usize;
    let rest = &bytes[4..];
    if rest.len() < len {
        return Err(Error::malformed("truncated header"));
    }
    Ok(rest.split_at(len))
}

pub(crate) fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect()
}

fn decode_body<C: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<(C, Vec<f32>, Meta)> {
    let (json, blob) = split_json_block(body)?;
    let header: Header<C> =
        serde_json::from_slice(json).map_err(|e| Error::malformed(format!("bad header: {e}")))?;
    if blob.len() != 4 * header.n_params {
        return Err(Error::malformed(format!(
            "parameter blob holds {} bytes, header declares {} parameters",
            blob.len(),
            header.n_params
        )));
    }
    Ok((header.config, read_f32s(blob), header.meta))
}

fn count_checked<M: RayModel<f32>>(model: Result<M>) -> Result<M> {
    model.map_err(|e| match e {
        Error::LengthMismatch { left, right } => {
            Error::malformed(format!("{left} parameters stored, configuration needs {right}"))
        }
        other => other,
    })
}

pub fn from_bytes(bytes: &[u8]) -> Result<(AnyModel, Meta)> {
    if bytes.len() < 8 {
        return Err(Error::malformed("file shorter than its magic"));
    }
    let (magic, body) = bytes.split_at(8);
    if magic == DYLIN_MAGIC {
        let (config, params, meta) = decode_body::<DylinConfig>(body)?;
        Ok((count_checked(DylinModel::from_params(config, params))?.into(), meta))
    } else if magic == CODYLIN_MAGIC {
        let (config, params, meta) = decode_body::<CodylinConfig>(body)?;
        Ok((count_checked(CodylinModel::from_params(config, params))?.into(), meta))
    } else {
        Err(Error::malformed("unrecognized checkpoint magic"))
    }
}

pub fn save(path: &Path, model: &AnyModel, meta: &Meta) -> Result<()> {
    std::fs::write(path, to_bytes(model, meta))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(AnyModel, Meta)> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes).map_err(|e| e.with_path(path))
}

pub const TEACHER_MAGIC: &[u8; 8] = b"TEACH\0v1";

#[derive(Serialize, Deserialize)]
struct TeacherHeader {
    config: TeacherConfig,
    n_params: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
}

/// Serializes an integration teacher in the checkpoint layout.
pub fn teacher_to_bytes(teacher: &IntegrationTeacher<f32>) -> Vec<u8> {
    let finite = |v: f64| v.is_finite().then_some(v);
    let header = TeacherHeader {
        config: teacher.config.clone(),
        n_params: teacher.params.len(),
        initial_loss: finite(teacher.initial_loss),
        final_loss: finite(teacher.final_loss),
    };
    let json = serde_json::to_vec(&header).expect("headers serialize");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * teacher.params.len());
    out.extend_from_slice(TEACHER_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &teacher.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn teacher_from_bytes(bytes: &[u8]) -> Result<IntegrationTeacher<f32>> {
    if bytes.len() < 8 || &bytes[..8] != TEACHER_MAGIC {
        return Err(Error::malformed("unrecognized teacher magic"));
    }
    let (json, blob) = split_json_block(&bytes[8..])?;
    let header: TeacherHeader =
        serde_json::from_slice(json).map_err(|e| Error::malformed(format!("bad header: {e}")))?;
    let mut teacher = IntegrationTeacher::<f32>::new(header.config)?;
    if blob.len() != 4 * header.n_params || header.n_params != teacher.params.len() {
        return Err(Error::malformed("teacher parameter count does not match its configuration"));
    }
    teacher.params = read_f32s(blob);
    teacher.initial_loss = header.initial_loss.unwrap_or(f64::NAN);
    teacher.final_loss = header.final_loss.unwrap_or(f64::NAN);
    Ok(teacher)
}

pub fn save_teacher(path: &Path, teacher: &IntegrationTeacher<f32>) -> Result<()> {
    std::fs::write(path, teacher_to_bytes(teacher))?;
    Ok(())
}

pub fn load_teacher(path: &Path) -> Result<IntegrationTeacher<f32>> {
    teacher_from_bytes(&std::fs::read(path)?).map_err(|e| e.with_path(path))
}
