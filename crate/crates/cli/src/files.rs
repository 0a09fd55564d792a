//! Rasters, label tables and the per-run record of inputs and outputs.

use std::fs;
use std::path::{Path, PathBuf};

use gmlf::nn::Dataset;
use gmlf::render::RgbImage;
use gmlf::synth::to_model_input;
use gmlf::vae::VaeModel;
use gmlf::nn::{LayeredNetwork, ModelFile};
use gmlf::Tensor;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::manifest::FileHash;
use crate::CliError;

pub const LABELS_FILE: &str = "labels.csv";

/// Inputs read and files written by one run.
#[derive(Debug, Default)]
pub struct RunRecord {
    pub inputs: Vec<FileHash>,
    out_dir: Option<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunRecord {
    pub fn track_input(&mut self, path: &Path) -> Result<(), CliError> {
        if !self.inputs.iter().any(|f| f.path == path) {
            self.inputs.push(FileHash::of(path)?);
        }
        Ok(())
    }

    /// Creates the output directory; call only once every input is validated.
    pub fn open_output(&mut self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        self.out_dir = Some(dir.to_path_buf());
        Ok(())
    }

    pub fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }

    /// Path of an output file, recorded for the manifest.
    pub fn output(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let dir = self
            .out_dir
            .as_ref()
            .expect("output directory opened before writing");
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        if !self.outputs.contains(&path) {
            self.outputs.push(path.clone());
        }
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.output(name)?;
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("value serializes");
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let path = self.output(name)?;
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        for row in rows {
            w.serialize(row).map_err(|e| CliError::csv(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_rgb(&mut self, name: &str, img: &RgbImage) -> Result<PathBuf, CliError> {
        let path = self.output(name)?;
        write_pnm(&path, &img.to_raw(), img.width, img.height, ExtendedColorType::Rgb8)?;
        Ok(path)
    }

    /// Writes a [0, 1] image as 8-bit PGM (one channel) or PPM (three).
    pub fn write_image(&mut self, name: &str, image: &Tensor) -> Result<PathBuf, CliError> {
        let (h, w, c) = image.image_dims()?;
        let bytes: Vec<u8> = image
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let path = self.output(name)?;
        let color = match c {
            1 => ExtendedColorType::L8,
            3 => ExtendedColorType::Rgb8,
            _ => return Err(CliError::Validation(format!("cannot write a {c}-channel image"))),
        };
        write_pnm(&path, &bytes, w, h, color)?;
        Ok(path)
    }

    /// Region ids as a binary PGM whose maxval is the largest id (at least 1),
    /// with 16-bit big-endian samples past 255.
    pub fn write_labels(&mut self, name: &str, width: usize, height: usize, labels: &[usize]) -> Result<PathBuf, CliError> {
        let maxval = labels.iter().copied().max().unwrap_or(0).max(1);
        if maxval > u16::MAX as usize {
            return Err(CliError::Validation(format!("{maxval} regions do not fit a PGM")));
        }
        let path = self.output(name)?;
        let mut bytes = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
        for &l in labels {
            if maxval > 255 {
                bytes.extend_from_slice(&(l as u16).to_be_bytes());
            } else {
                bytes.push(l as u8);
            }
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read_image(&mut self, path: &Path) -> Result<Tensor, CliError> {
        let img = read_image(path)?;
        self.track_input(path)?;
        Ok(img)
    }

    pub fn load_classifier(&mut self, path: &Path) -> Result<LayeredNetwork, CliError> {
        let file = self.load_model_file(path)?;
        file.networks
            .into_iter()
            .next()
            .map(|(_, net)| net)
            .ok_or_else(|| CliError::Validation(format!("{}: model file holds no network", path.display())))
    }

    pub fn load_vae(&mut self, path: &Path) -> Result<VaeModel, CliError> {
        let file = self.load_model_file(path)?;
        VaeModel::from_model_file(&file)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    fn load_model_file(&mut self, path: &Path) -> Result<ModelFile, CliError> {
        let file = ModelFile::load(path).map_err(|e| match e {
            gmlf::Error::Io(io) => CliError::io(path, io),
            other => CliError::Validation(format!("{}: {other}", path.display())),
        })?;
        self.track_input(path)?;
        self.track_input(&path.with_extension("bin"))?;
        Ok(file)
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&mut self, path: &Path) -> Result<T, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let value = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        self.track_input(path)?;
        Ok(value)
    }

    /// Labelled images listed in `dir/labels.csv`, as model inputs.
    pub fn read_dataset(&mut self, dir: &Path) -> Result<LabeledSet, CliError> {
        let table = dir.join(LABELS_FILE);
        let mut reader = csv::Reader::from_path(&table).map_err(|e| CliError::csv(&table, e))?;
        let mut rows = Vec::new();
        for row in reader.deserialize::<LabelRow>() {
            rows.push(row.map_err(|e| CliError::csv(&table, e))?);
        }
        if rows.is_empty() {
            return Err(CliError::Validation(format!("{}: no images listed", table.display())));
        }
        self.track_input(&table)?;
        let classes = rows.iter().map(|r| r.label).max().unwrap_or(0) + 1;
        let mut names = vec![String::new(); classes];
        let mut inputs = Vec::with_capacity(rows.len());
        for r in &rows {
            names[r.label] = r.class.clone();
            inputs.push(to_model_input(&self.read_image(&dir.join(&r.file))?).into_data());
        }
        let labels = rows.iter().map(|r| r.label).collect();
        let data = Dataset::new(inputs, labels, classes)
            .map_err(|e| CliError::Validation(format!("{}: {e}", table.display())))?;
        Ok(LabeledSet { data, class_names: names })
    }
}

pub struct LabeledSet {
    pub data: Dataset,
    pub class_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub file: String,
    pub label: usize,
    pub class: String,
}

/// Binary PGM (gray) or PPM (RGB).
fn write_pnm(path: &Path, bytes: &[u8], width: usize, height: usize, color: ExtendedColorType) -> Result<(), CliError> {
    let subtype = match color {
        ExtendedColorType::Rgb8 => PnmSubtype::Pixmap(SampleEncoding::Binary),
        _ => PnmSubtype::Graymap(SampleEncoding::Binary),
    };
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    PnmEncoder::new(&mut writer)
        .with_subtype(subtype)
        .write_image(bytes, width as u32, height as u32, color)
        .map_err(|e| CliError::image(path, e))?;
    std::io::Write::flush(&mut writer).map_err(|e| CliError::io(path, e))
}

/// Reads a PGM or PPM as a [0, 1] tensor with one or three channels.
pub fn read_image(path: &Path) -> Result<Tensor, CliError> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => CliError::io(path, io),
        other => CliError::image(path, other),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma16(buf) => (1, buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageRgb16(buf) => (3, buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect()),
        other if other.color().has_color() => {
            (3, other.to_rgb8().into_raw().iter().map(|&v| v as f64 / 255.0).collect())
        }
        other => (1, other.to_luma8().into_raw().iter().map(|&v| v as f64 / 255.0).collect()),
    };
    Ok(Tensor::image(h, w, channels, data)?)
}

/// PGM/PPM files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && matches!(ext.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
