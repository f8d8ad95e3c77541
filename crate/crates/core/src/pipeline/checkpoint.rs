//! Checkpoints: float64 parameters, optimizer state, the run configuration,
//! the step counter and the RNG stream.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::archive::{Archive, ArchiveWriter, TensorData};
use crate::params::ParamSet;
use crate::pipeline::config::RunConfig;
use crate::pipeline::model::Model;
use crate::pipeline::optim::Optimizer;
use crate::pipeline::train::Trainer;
use crate::tensor::Matrix;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RSMBCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub step: u64,
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub params: ParamSet,
    pub optimizer: Optimizer,
}

fn add_matrix(w: &mut ArchiveWriter, name: &str, m: &Matrix) -> Result<()> {
    w.add(name, &[m.rows, m.cols], TensorData::F64(m.data.clone()))
}

fn read_matrix(a: &Archive, name: &str) -> Result<Matrix> {
    let (shape, data) = a.f64s(name)?;
    if shape.len() != 2 {
        return Err(Error::Load { offset: 16, detail: format!("tensor `{name}` is not two-dimensional") });
    }
    Ok(Matrix::from_vec(shape[0], shape[1], data))
}

fn load_err(detail: impl Into<String>) -> Error {
    Error::Load { offset: 16, detail: detail.into() }
}

impl Checkpoint {
    pub fn of(trainer: &Trainer) -> Checkpoint {
        Checkpoint {
            config: trainer.cfg.clone(),
            step: trainer.step,
            epoch: trainer.epoch,
            rng: trainer.rng.clone(),
            params: trainer.model.params.clone(),
            optimizer: trainer.optimizer.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ArchiveWriter::new();
        let names: Vec<&str> = self.params.iter().map(|(n, _)| n).collect();
        for (name, m) in self.params.iter() {
            add_matrix(&mut w, &format!("param/{name}"), m)?;
        }
        for (i, m) in self.optimizer.first.iter().enumerate() {
            add_matrix(&mut w, &format!("opt.first/{}", names[i]), m)?;
        }
        for (i, m) in self.optimizer.second.iter().enumerate() {
            add_matrix(&mut w, &format!("opt.second/{}", names[i]), m)?;
        }
        let header = json!({
            "format": "reassembly-checkpoint",
            "version": CHECKPOINT_VERSION,
            "dtype": "f64",
            "config": self.config,
            "step": self.step,
            "epoch": self.epoch,
            "rng": self.rng,
            "optimizer": { "config": self.optimizer.cfg, "step": self.optimizer.step },
            "params": names,
        });
        w.to_bytes(CHECKPOINT_MAGIC, header)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Checkpoint> {
        let a = Archive::from_bytes(bytes, CHECKPOINT_MAGIC)?;
        let h = a.header();
        if h["version"].as_u64() != Some(CHECKPOINT_VERSION as u64) {
            return Err(load_err(format!("checkpoint version {}, expected {CHECKPOINT_VERSION}", h["version"])));
        }
        if h["dtype"] != "f64" {
            return Err(load_err(format!("unsupported parameter dtype {}", h["dtype"])));
        }
        let config: RunConfig = serde_json::from_value(h["config"].clone()).map_err(|e| load_err(format!("config: {e}")))?;
        let rng: ChaCha8Rng = serde_json::from_value(h["rng"].clone()).map_err(|e| load_err(format!("rng: {e}")))?;
        let names: Vec<String> = serde_json::from_value(h["params"].clone()).map_err(|e| load_err(format!("params: {e}")))?;
        let mut params = ParamSet::new();
        for n in &names {
            params.push(n, read_matrix(&a, &format!("param/{n}"))?);
        }
        let opt_cfg = serde_json::from_value(h["optimizer"]["config"].clone()).map_err(|e| load_err(format!("optimizer: {e}")))?;
        let mut optimizer = Optimizer::new(opt_cfg, &params);
        optimizer.step = h["optimizer"]["step"].as_u64().unwrap_or(0);
        for (i, n) in names.iter().enumerate() {
            optimizer.first[i] = read_matrix(&a, &format!("opt.first/{n}"))?;
            if !optimizer.second.is_empty() {
                optimizer.second[i] = read_matrix(&a, &format!("opt.second/{n}"))?;
            }
        }
        Ok(Checkpoint {
            config,
            step: h["step"].as_u64().unwrap_or(0),
            epoch: h["epoch"].as_u64().unwrap_or(0) as usize,
            rng,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(std::fs::read(path)?)
    }

    /// Rebuilds the model described by the stored configuration and installs
    /// the stored parameters.
    pub fn model(&self) -> Result<Model> {
        let mut model = Model::new(&self.config)?;
        if !model.params.same_layout(&self.params) {
            return Err(Error::Config("stored parameters do not match the configured architecture".into()));
        }
        model.params = self.params.clone();
        Ok(model)
    }

    pub fn trainer(&self) -> Result<Trainer> {
        Trainer::resume(self.config.clone(), self.model()?, self.optimizer.clone(), self.rng.clone(), self.step, self.epoch)
    }
}
