//! On-disk layout of trained models and scene sets.
//!
//! A model directory holds `config.json` (the full [`ToyConfig`]) and
//! `model.bfpt` (every parameter tensor, in [`ModelParams::tensors`] order).
//! A scene directory holds `NNNN.image.bfpt` and `NNNN.labels.pgm` pairs.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::labels::{read_pgm, write_pgm, LabelMap};
use crate::tensor::{read_tensor, read_tensors, write_tensor, write_tensors};
use crate::{Error, Result};

use super::model::Model;
use super::synth::SynthScene;
use super::train::ToyConfig;

pub const CONFIG_FILE: &str = "config.json";
pub const WEIGHTS_FILE: &str = "model.bfpt";
pub const METRICS_FILE: &str = "metrics.json";

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn save_model(dir: &Path, cfg: &ToyConfig, model: &Model<f32>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(CONFIG_FILE), cfg)?;
    let mut out = BufWriter::new(File::create(dir.join(WEIGHTS_FILE))?);
    write_tensors(&mut out, &model.params.tensors())?;
    out.flush()?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<(ToyConfig, Model<f32>)> {
    let cfg: ToyConfig =
        serde_json::from_reader(BufReader::new(File::open(dir.join(CONFIG_FILE))?))?;
    let mut model = Model::<f32>::new(cfg.model.clone())?;
    let stored = read_tensors::<f32, _>(&mut BufReader::new(File::open(dir.join(WEIGHTS_FILE))?))?;
    let slots = model.params.tensors_mut();
    if stored.len() != slots.len() {
        return Err(Error::format(
            "bfpt",
            format!(
                "{} tensors stored, model expects {}",
                stored.len(),
                slots.len()
            ),
        ));
    }
    for (slot, t) in slots.into_iter().zip(stored) {
        if slot.shape() != t.shape() {
            return Err(Error::format(
                "bfpt",
                format!(
                    "tensor of shape {:?} where {:?} was expected",
                    t.shape(),
                    slot.shape()
                ),
            ));
        }
        *slot = t;
    }
    Ok((cfg, model))
}

pub fn save_scenes(dir: &Path, scenes: &[SynthScene]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, s) in scenes.iter().enumerate() {
        let mut img = BufWriter::new(File::create(dir.join(format!("{i:04}.image.bfpt")))?);
        write_tensor(&mut img, &s.image)?;
        img.flush()?;
        let mut lab = BufWriter::new(File::create(dir.join(format!("{i:04}.labels.pgm")))?);
        write_pgm(&mut lab, &s.labels.to_pgm())?;
        lab.flush()?;
    }
    Ok(())
}

/// Reads scenes `0000`, `0001`, ... until the first missing index.
pub fn load_scenes(dir: &Path, num_classes: usize, ignore: u16) -> Result<Vec<SynthScene>> {
    if !dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a directory", dir.display()),
        )));
    }
    let mut scenes = Vec::new();
    loop {
        let i = scenes.len();
        let img_path = dir.join(format!("{i:04}.image.bfpt"));
        if !img_path.exists() {
            break;
        }
        let image = read_tensor::<f32, _>(&mut BufReader::new(File::open(&img_path)?))?;
        let pgm = read_pgm(&mut BufReader::new(File::open(
            dir.join(format!("{i:04}.labels.pgm")),
        )?))?;
        let labels = LabelMap::from_pgm(&pgm, Some(num_classes), ignore)?;
        let (_, h, w) = image.dims3("load_scenes")?;
        if labels.height() != h || labels.width() != w {
            return Err(Error::format(
                "scene",
                format!("scene {i}: image and labels differ in size"),
            ));
        }
        scenes.push(SynthScene { image, labels });
    }
    Ok(scenes)
}
