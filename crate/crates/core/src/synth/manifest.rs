use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::CorpusConfig;
use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CORPUS_FILE: &str = "corpus.json";

/// One corpus entry. Labels are optional so unlabeled image folders can be
/// embedded and clustered; training the triplet model and evaluation need them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    /// Relative to the manifest's directory.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
    /// Generator settings, when the corpus came from [`super::generate_corpus`].
    pub corpus: Option<CorpusConfig>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Result<Self> {
        let m = Self {
            root: root.into(),
            records,
            corpus: None,
        };
        m.check_unique()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (line, r) in self.records.iter().enumerate() {
            if !seen.insert(r.path.as_str()) {
                return Err(Error::format(
                    "manifest",
                    format!("line {}: duplicate path `{}`", line + 1, r.path),
                ));
            }
        }
        Ok(())
    }

    /// Reads `manifest.jsonl` (and `corpus.json` beside it, if present).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord = serde_json::from_str(&line).map_err(|e| {
                Error::format(path.display().to_string(), format!("line {}: {e}", i + 1))
            })?;
            records.push(record);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let corpus_path = root.join(CORPUS_FILE);
        let corpus = if corpus_path.exists() {
            let text = fs::read_to_string(&corpus_path).map_err(|e| Error::io(&corpus_path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| {
                Error::format(corpus_path.display().to_string(), format!("line {}: {e}", e.line()))
            })?)
        } else {
            None
        };
        let m = Self { root, records, corpus };
        m.check_unique()?;
        Ok(m)
    }

    /// Writes `manifest.jsonl` and, when known, `corpus.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for r in &self.records {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        if let Some(cfg) = &self.corpus {
            let cpath = dir.join(CORPUS_FILE);
            let text = serde_json::to_string_pretty(cfg).expect("config serializes");
            fs::write(&cpath, text + "\n").map_err(|e| Error::io(&cpath, e))?;
        }
        Ok(path)
    }

    pub fn image_path(&self, index: usize) -> PathBuf {
        self.root.join(&self.records[index].path)
    }

    /// Sample identifiers (the manifest paths), in record order.
    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.path.clone()).collect()
    }

    pub fn load_images(&self) -> Result<Vec<Tensor<f32>>> {
        (0..self.records.len())
            .map(|i| load_image(self.image_path(i)))
            .collect()
    }

    /// Style ids in record order; every record must be labeled.
    pub fn style_labels(&self) -> Result<Vec<u32>> {
        self.records
            .iter()
            .map(|r| {
                r.style_id
                    .ok_or_else(|| Error::Label(format!("`{}` has no style_id", r.path)))
            })
            .collect()
    }
}

/// Reads an image as `[3, H, W]` in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    let mut data = vec![0f32; 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px[c] as f32 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

/// Writes a `[3, H, W]` image in `[0, 1]` as 8-bit RGB PNG.
pub fn save_png(image: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = image.chw()?;
    if c != 3 {
        return Err(Error::dim("save_png", format!("expected 3 channels on axis 0, got {c}")));
    }
    let plane = h * w;
    let d = image.data();
    let mut bytes = Vec::with_capacity(3 * plane);
    for i in 0..plane {
        for ch in 0..3 {
            bytes.push((d[ch * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    image::save_buffer_with_format(path, &bytes, w as u32, h as u32, image::ColorType::Rgb8, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        fs::write(&p, "{\"path\":\"a.png\",\"style_id\":1}\n{\"path\": 3}\n").unwrap();
        let err = Manifest::load(&p).unwrap_err();
        assert_eq!(err.kind(), "format");
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_keys_and_duplicates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        fs::write(&p, "{\"path\":\"a.png\",\"colour\":1}\n").unwrap();
        assert!(Manifest::load(&p).is_err());
        fs::write(&p, "{\"path\":\"a.png\"}\n{\"path\":\"a.png\"}\n").unwrap();
        assert!(Manifest::load(&p).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn unlabeled_records_are_label_errors() {
        let m = Manifest::new(
            ".",
            vec![ManifestRecord {
                path: "x.png".into(),
                style_id: None,
                color_id: None,
            }],
        )
        .unwrap();
        assert_eq!(m.style_labels().unwrap_err().kind(), "label");
    }

    #[test]
    fn png_round_trip_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::from_vec(&[3, 2, 2], (0..12).map(|i| i as f32 / 11.0).collect()).unwrap();
        let p = dir.path().join("x.png");
        save_png(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.shape(), &[3, 2, 2]);
        assert!(back.max_abs_diff(&img) <= 0.5 / 255.0 + 1e-6);
    }
}
