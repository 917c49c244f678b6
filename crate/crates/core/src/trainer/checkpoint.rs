//! Single-file checkpoints in the safetensors container.
//!
//! Tensors are keyed `params.{net}.{name}`, `adam.{net}.m.{name}` and
//! `adam.{net}.v.{name}`. Everything else lives in one metadata entry,
//! [`METADATA_KEY`], holding a JSON object with the format version,
//! iteration, full training config, its hash and each optimizer's step count.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::steps::TrainState;
use crate::autograd::{Adam, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::nets::{init_models, tensor_bytes, tensor_from_view, Mode};

pub const FORMAT_VERSION: u32 = 1;
pub const METADATA_KEY: &str = "chronolapse";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    iteration: u64,
    mode: Mode,
    config_hash: String,
    adam_steps: BTreeMap<String, u64>,
    config: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub config_hash: String,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    /// Fails with `CONFIG_MISMATCH` unless `config` hashes like the saved one.
    pub fn check_config(&self, config: &TrainConfig) -> Result<()> {
        let expected = config.hash();
        if expected != self.config_hash {
            return Err(Error::ConfigMismatch {
                expected,
                found: self.config_hash.clone(),
            });
        }
        Ok(())
    }
}

/// Serializes to bytes; the output is a pure function of `state` and `config`.
pub fn checkpoint_bytes(state: &TrainState, config: &TrainConfig) -> Result<Vec<u8>> {
    let mut entries: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    let mut adam_steps = BTreeMap::new();
    for (net, store) in state.bundle.stores() {
        let opt = state
            .optimizers
            .get(net)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("no optimizer for {net}")))?;
        adam_steps.insert(net.to_string(), opt.step);
        for (i, (name, t)) in store.iter().enumerate() {
            entries.push((format!("params.{net}.{name}"), t.shape().to_vec(), tensor_bytes(t)));
            entries.push((format!("adam.{net}.m.{name}"), t.shape().to_vec(), tensor_bytes(&opt.m[i])));
            entries.push((format!("adam.{net}.v.{name}"), t.shape().to_vec(), tensor_bytes(&opt.v[i])));
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        iteration: state.iteration,
        mode: state.bundle.mode,
        config_hash: config.hash(),
        adam_steps,
        config: config.clone(),
    };
    let metadata = HashMap::from([(
        METADATA_KEY.to_string(),
        serde_json::to_string(&header).expect("header serializes"),
    )]);
    let views = entries
        .iter()
        .map(|(n, s, b)| TensorView::new(Dtype::F32, s.clone(), b).map(|v| (n.clone(), v)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    safetensors::serialize(views, Some(metadata)).map_err(|e| Error::CorruptCheckpoint(e.to_string()))
}

/// Writes next to `path` first and renames, so a crash never leaves a
/// truncated checkpoint under the final name.
pub fn save_checkpoint(state: &TrainState, config: &TrainConfig, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(state, config)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    checkpoint_from_bytes(&bytes)
        .map_err(|e| match e {
            Error::CorruptCheckpoint(m) => Error::CorruptCheckpoint(format!("{}: {m}", path.display())),
            other => other,
        })
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let corrupt = |m: String| Error::CorruptCheckpoint(m);
    let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|e| corrupt(e.to_string()))?;
    let file = SafeTensors::deserialize(bytes).map_err(|e| corrupt(e.to_string()))?;
    let raw = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(METADATA_KEY))
        .ok_or_else(|| corrupt("missing header".into()))?;
    let header: Header =
        serde_json::from_str(raw).map_err(|e| corrupt(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "format version {} (this build reads {FORMAT_VERSION})",
            header.format_version
        )));
    }
    if header.config.hash() != header.config_hash {
        return Err(corrupt("stored config does not match its hash".into()));
    }
    let mut net = header.config.net.clone();
    net.pretrained_encoder = None;
    let mut bundle = init_models(&net, header.mode, header.config.seed)?;
    bundle.config = header.config.net.clone();

    let mut state = TrainState::new(bundle, header.config.adam());
    state.iteration = header.iteration;
    let TrainState {
        bundle, optimizers, ..
    } = &mut state;
    for (name, store) in bundle.stores_mut() {
        let opt = optimizers.get_mut(name).expect("optimizer per network");
        opt.step = *header
            .adam_steps
            .get(name)
            .ok_or_else(|| corrupt(format!("no optimizer step for {name}")))?;
        fill(store, opt, name, &file)?;
    }
    let expected: usize = state.bundle.stores().iter().map(|(_, s)| 3 * s.len()).sum();
    if file.len() != expected {
        return Err(corrupt(format!(
            "{} tensors, expected {expected}",
            file.len()
        )));
    }
    Ok(Checkpoint {
        config: header.config,
        config_hash: header.config_hash,
        state,
    })
}

fn read_tensor(file: &SafeTensors, key: &str, like: &Tensor) -> Result<Tensor> {
    let corrupt = |m: String| Error::CorruptCheckpoint(m);
    let view = file
        .tensor(key)
        .map_err(|_| corrupt(format!("missing tensor {key}")))?;
    let t = tensor_from_view(&view).map_err(|e| corrupt(format!("{key}: {e}")))?;
    if t.shape() != like.shape() {
        return Err(corrupt(format!(
            "{key}: shape {:?}, expected {:?}",
            t.shape(),
            like.shape()
        )));
    }
    Ok(t)
}

fn fill(store: &mut ParamStore, opt: &mut Adam, net: &str, file: &SafeTensors) -> Result<()> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        let i = id.index();
        let p = read_tensor(file, &format!("params.{net}.{name}"), store.get(id))?;
        opt.m[i] = read_tensor(file, &format!("adam.{net}.m.{name}"), &p)?;
        opt.v[i] = read_tensor(file, &format!("adam.{net}.v.{name}"), &p)?;
        *store.get_mut(id) = p;
    }
    Ok(())
}
