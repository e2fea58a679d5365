//! Checkpoint directory: `params.eqtn` holds the parameter tensors in
//! registry order, `model.json` the config and the parameter table.

use super::config::DetectorConfig;
use super::model::Detector;
use super::params::ParamInfo;
use crate::error::{Error, Result};
use crate::tensor::{read_tensors, write_tensors};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub const PARAMS_FILE: &str = "params.eqtn";
pub const MODEL_FILE: &str = "model.json";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: DetectorConfig,
    params: Vec<ParamInfo>,
}

pub fn save_checkpoint(model: &Detector, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(PARAMS_FILE))?);
    write_tensors(&mut w, &model.params.values())?;
    w.flush()?;
    let side = Sidecar {
        config: model.cfg.clone(),
        params: model.params.infos(),
    };
    std::fs::write(dir.join(MODEL_FILE), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

/// Values are stored as `f32`, so a reloaded model matches the saved one to
/// single precision.
pub fn load_checkpoint(dir: &Path) -> Result<Detector> {
    let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(dir.join(MODEL_FILE))?)?;
    let mut model = Detector::new(side.config, 0)?;
    if model.params.infos().iter().map(|i| &i.name).ne(side.params.iter().map(|i| &i.name)) {
        return Err(Error::Format {
            what: "checkpoint",
            detail: "parameter table does not match the config".into(),
        });
    }
    let values = read_tensors(&mut BufReader::new(File::open(dir.join(PARAMS_FILE))?))?;
    model.params.set_values(values)?;
    Ok(model)
}
