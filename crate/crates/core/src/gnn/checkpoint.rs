//! JSON checkpoints, gzip-compressed when the path ends in `.gz`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::model::{Dims, ModelParams, BLOCK_NAMES};
use super::train::TrainConfig;
use super::{GnnError, Model};
use crate::graph::Scaler;
use crate::labels::NodeClass;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Block {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    schema_version: u32,
    dims: Dims,
    class_names: Vec<NodeClass>,
    weights: Vec<Block>,
    train_config: TrainConfig,
    seed: u64,
    scaler: Scaler,
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn err(path: &Path, e: impl std::fmt::Display) -> GnnError {
    GnnError::Checkpoint { path: path.display().to_string(), message: e.to_string() }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), GnnError> {
    let p = &ck.model.params;
    let doc = Doc {
        schema_version: SCHEMA_VERSION,
        dims: p.dims(),
        class_names: ck.model.classes.clone(),
        weights: p
            .blocks()
            .iter()
            .zip(BLOCK_NAMES)
            .map(|(b, name)| Block { name: name.to_string(), rows: b.rows, cols: b.cols, data: b.data.clone() })
            .collect(),
        train_config: ck.config.clone(),
        seed: ck.seed,
        scaler: ck.model.scaler.clone(),
    };
    let file = File::create(path).map_err(|e| err(path, e))?;
    let mut w: Box<dyn Write> = if is_gz(path) {
        Box::new(GzEncoder::new(BufWriter::new(file), Compression::default()))
    } else {
        Box::new(BufWriter::new(file))
    };
    serde_json::to_writer(&mut w, &doc).map_err(|e| err(path, e))?;
    w.flush().map_err(|e| err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, GnnError> {
    let file = File::open(path).map_err(|e| err(path, e))?;
    let r: Box<dyn Read> =
        if is_gz(path) { Box::new(GzDecoder::new(BufReader::new(file))) } else { Box::new(BufReader::new(file)) };
    let doc: Doc = serde_json::from_reader(r).map_err(|e| err(path, e))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(err(path, format!("schema version {} (expected {SCHEMA_VERSION})", doc.schema_version)));
    }
    if doc.class_names.len() != doc.dims.classes {
        return Err(err(path, "class_names length differs from dims.classes"));
    }
    if doc.scaler.mean.len() != doc.dims.input || doc.scaler.std.len() != doc.dims.input {
        return Err(err(path, "scaler width differs from dims.input"));
    }
    let mut blocks = Vec::with_capacity(doc.weights.len());
    for (b, name) in doc.weights.into_iter().zip(BLOCK_NAMES) {
        if b.name != name {
            return Err(err(path, format!("block `{}` where `{name}` was expected", b.name)));
        }
        if b.data.len() != b.rows * b.cols {
            return Err(err(path, format!("block `{name}` has {} values for {}x{}", b.data.len(), b.rows, b.cols)));
        }
        blocks.push(Matrix::from_vec(b.rows, b.cols, b.data));
    }
    let params = ModelParams::from_blocks(doc.dims, blocks).map_err(|e| err(path, e))?;
    Ok(Checkpoint {
        model: Model { params, classes: doc.class_names, scaler: doc.scaler },
        config: doc.train_config,
        seed: doc.seed,
    })
}
