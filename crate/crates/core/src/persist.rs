//! Versioned binary persistence for trained models.
//!
//! A bundle stores everything prediction needs: the feature geometry, the
//! train-fitted scaler, and the model itself (flat f64 parameters for
//! neural models, pre-order trees for boosted ensembles). All numbers are
//! little-endian; loading is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureSpec, Mode, Scaler};
use crate::gbrt::{RegressionTree, Stage, TreeEnsemble, TreeNode};
use crate::neural::{Model, ModelConfig, ModelKind};

const MAGIC: &[u8; 4] = b"GHIM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelPayload {
    Neural(Model),
    Gbrt(TreeEnsemble),
}

impl ModelPayload {
    pub fn input_dim(&self) -> usize {
        match self {
            ModelPayload::Neural(m) => m.input_dim(),
            ModelPayload::Gbrt(e) => e.dim,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ModelPayload::Neural(m) => m.kind().label(),
            ModelPayload::Gbrt(_) => "GBRT",
        }
    }
}

impl crate::eval::Predictor for ModelPayload {
    fn predict_batch(&self, x: &crate::numerics::Matrix) -> Result<Vec<f64>> {
        match self {
            ModelPayload::Neural(m) => m.predict(x),
            ModelPayload::Gbrt(e) => e.predict(x),
        }
    }
}

/// One trained artifact: feature geometry + scaler + model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub spec: FeatureSpec,
    pub scaler: Scaler,
    pub payload: ModelPayload,
}

impl ModelBundle {
    fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let expected = self.spec.input_dim();
        let got = self.payload.input_dim();
        if expected != got {
            return Err(Error::Dimension { expected, got });
        }
        Ok(())
    }
}

pub fn save_model(path: &Path, bundle: &ModelBundle) -> Result<()> {
    bundle.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    write_bundle(&mut w, bundle)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let mut r = BufReader::new(File::open(path)?);
    let bundle = read_bundle(&mut r)?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Persist("trailing bytes after model data".into()));
    }
    bundle.validate()?;
    Ok(bundle)
}

fn kind_code(payload: &ModelPayload) -> u8 {
    match payload {
        ModelPayload::Neural(m) => match m.kind() {
            ModelKind::Ffnn => 0,
            ModelKind::Rnn => 1,
            ModelKind::Gru => 2,
            ModelKind::Lstm => 3,
            ModelKind::BiLstm => 4,
        },
        ModelPayload::Gbrt(_) => 5,
    }
}

fn write_bundle<W: Write>(w: &mut W, bundle: &ModelBundle) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    put_u8(w, kind_code(&bundle.payload))?;
    let s = &bundle.spec;
    put_u8(w, match s.mode {
        Mode::Single => 0,
        Mode::Multi => 1,
    })?;
    put_u32(w, s.p as u32)?;
    put_u32(w, s.p_prime as u32)?;
    put_u32(w, s.n_neighbors as u32)?;
    put_u32(w, s.lead as u32)?;
    put_f64(w, bundle.scaler.ghi_max)?;
    put_f64(w, bundle.scaler.wind_speed_max)?;
    match &bundle.payload {
        ModelPayload::Neural(m) => {
            put_u32(w, m.config().hidden as u32)?;
            put_u32(w, m.config().decoder_steps as u32)?;
            put_u64(w, m.params().len() as u64)?;
            for &p in m.params() {
                put_f64(w, p)?;
            }
        }
        ModelPayload::Gbrt(e) => {
            put_f64(w, e.f0)?;
            put_u32(w, e.dim as u32)?;
            put_u32(w, e.stages.len() as u32)?;
            if e.deltas.len() != e.stages.len() {
                return Err(Error::Persist(format!(
                    "ensemble has {} stages but {} deltas",
                    e.stages.len(),
                    e.deltas.len()
                )));
            }
            for (stage, &delta) in e.stages.iter().zip(&e.deltas) {
                put_f64(w, stage.shrinkage)?;
                put_f64(w, delta)?;
                let nodes = stage.tree.nodes();
                put_u32(w, nodes.len() as u32)?;
                for node in nodes {
                    match node {
                        TreeNode::Leaf { value } => {
                            put_u8(w, 0)?;
                            put_f64(w, *value)?;
                        }
                        TreeNode::Split { feature, threshold, left, right } => {
                            put_u8(w, 1)?;
                            put_u32(w, *feature as u32)?;
                            put_f64(w, *threshold)?;
                            put_u32(w, *left as u32)?;
                            put_u32(w, *right as u32)?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn read_bundle<R: Read>(r: &mut R) -> Result<ModelBundle> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Persist("file too short for header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Persist(format!("bad magic {magic:?}; not a model file")));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Persist(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let kind = get_u8(r)?;
    let mode = match get_u8(r)? {
        0 => Mode::Single,
        1 => Mode::Multi,
        other => return Err(Error::Persist(format!("bad mode byte {other}"))),
    };
    let spec = FeatureSpec {
        mode,
        p: get_u32(r)? as usize,
        p_prime: get_u32(r)? as usize,
        n_neighbors: get_u32(r)? as usize,
        lead: get_u32(r)? as usize,
    };
    let scaler = Scaler { ghi_max: get_f64(r)?, wind_speed_max: get_f64(r)? };
    let payload = match kind {
        0..=4 => {
            let model_kind = match kind {
                0 => ModelKind::Ffnn,
                1 => ModelKind::Rnn,
                2 => ModelKind::Gru,
                3 => ModelKind::Lstm,
                _ => ModelKind::BiLstm,
            };
            let hidden = get_u32(r)? as usize;
            let decoder_steps = get_u32(r)? as usize;
            let n = get_u64(r)? as usize;
            let mut params = Vec::with_capacity(n);
            for _ in 0..n {
                params.push(get_f64(r)?);
            }
            let cfg = ModelConfig {
                kind: model_kind,
                input_dim: spec.input_dim(),
                hidden,
                decoder_steps,
            };
            ModelPayload::Neural(Model::from_params(cfg, params)?)
        }
        5 => {
            let f0 = get_f64(r)?;
            let dim = get_u32(r)? as usize;
            let n_stages = get_u32(r)? as usize;
            let mut stages = Vec::with_capacity(n_stages);
            let mut deltas = Vec::with_capacity(n_stages);
            for _ in 0..n_stages {
                let shrinkage = get_f64(r)?;
                deltas.push(get_f64(r)?);
                let n_nodes = get_u32(r)? as usize;
                let mut nodes = Vec::with_capacity(n_nodes);
                for _ in 0..n_nodes {
                    nodes.push(match get_u8(r)? {
                        0 => TreeNode::Leaf { value: get_f64(r)? },
                        1 => TreeNode::Split {
                            feature: get_u32(r)? as usize,
                            threshold: get_f64(r)?,
                            left: get_u32(r)? as usize,
                            right: get_u32(r)? as usize,
                        },
                        other => {
                            return Err(Error::Persist(format!("bad node tag {other}")))
                        }
                    });
                }
                stages.push(Stage { tree: RegressionTree::from_nodes(nodes)?, shrinkage });
            }
            ModelPayload::Gbrt(TreeEnsemble { f0, stages, deltas, dim })
        }
        other => return Err(Error::Persist(format!("bad model kind byte {other}"))),
    };
    Ok(ModelBundle { spec, scaler, payload })
}

fn put_u8<W: Write>(w: &mut W, v: u8) -> Result<()> {
    Ok(w.write_all(&[v])?)
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(b[0])
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn truncated(_: std::io::Error) -> Error {
    Error::Persist("model file is truncated".into())
}
