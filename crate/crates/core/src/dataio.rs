//! Manifests, radiographs, masks and the feature table.
//!
//! Every image and mask is brought into a canonical frame at load: right
//! knees are mirrored horizontally so the medial compartment sits on the
//! image-left. Mask labels are anatomical (1 = medial, 2 = lateral) and keep
//! their meaning under that mirror.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{StructuredVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::grid::Grid;

/// Expected radiograph edge length.
pub const EXPECTED_SIZE: usize = 224;

pub const MANIFEST_COLUMNS: [&str; 10] = [
    "image_path",
    "mask_path",
    "split",
    "kl_grade",
    "side",
    "osp_mf",
    "osp_lf",
    "osp_mt",
    "osp_lt",
    "sclerosis",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownName {
                kind: "split",
                value: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Side::Left),
            "right" | "r" => Ok(Side::Right),
            other => Err(Error::UnknownName {
                kind: "side",
                value: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    /// Stable identifier derived from the image file stem.
    pub id: String,
    pub image_path: String,
    pub mask_path: Option<String>,
    pub split: Split,
    pub kl_grade: u8,
    pub side: Side,
    /// Medial femur, lateral femur, medial tibia, lateral tibia.
    pub osteophyte_grades: Option<[u8; 4]>,
    pub sclerosis_label: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub base_dir: Option<PathBuf>,
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    /// Resolves a manifest path relative to the manifest's directory.
    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for row in &self.rows {
            counts[row.split as usize] += 1;
        }
        counts
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(file)?;
    manifest.base_dir = path.parent().map(Path::to_path_buf);
    Ok(manifest)
}

/// Parses manifest CSV content. Row numbers in errors count the header as row 1.
pub fn parse_manifest<R: Read>(reader: R) -> Result<DatasetManifest> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    for required in ["image_path", "split", "kl_grade", "side"] {
        if !index.contains_key(required) {
            return Err(Error::MissingColumn(required.to_string()));
        }
    }
    let col = |name: &str| index.get(name).copied();

    let mut rows = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let cell = |name: &str| -> &str {
            col(name)
                .and_then(|c| record.get(c))
                .map(str::trim)
                .unwrap_or("")
        };
        let invalid = |column: &str, message: String| Error::InvalidCell {
            row,
            column: column.to_string(),
            message,
        };

        let image_path = cell("image_path").to_string();
        if image_path.is_empty() {
            return Err(invalid("image_path", "empty path".into()));
        }
        let mask_path = Some(cell("mask_path").to_string()).filter(|s| !s.is_empty());
        let split = cell("split")
            .parse::<Split>()
            .map_err(|e| invalid("split", e.to_string()))?;
        let kl_grade = parse_bounded(cell("kl_grade"), 4).map_err(|m| invalid("kl_grade", m))?;
        let side = cell("side")
            .parse::<Side>()
            .map_err(|e| invalid("side", e.to_string()))?;

        let osp_cols = ["osp_mf", "osp_lf", "osp_mt", "osp_lt"];
        let present = osp_cols.iter().filter(|c| !cell(c).is_empty()).count();
        let osteophyte_grades = match present {
            0 => None,
            4 => {
                let mut grades = [0u8; 4];
                for (g, c) in grades.iter_mut().zip(osp_cols) {
                    *g = parse_bounded(cell(c), 3).map_err(|m| invalid(c, m))?;
                }
                Some(grades)
            }
            _ => {
                let missing = osp_cols.iter().find(|c| cell(c).is_empty()).unwrap();
                return Err(invalid(missing, "osteophyte grades must be all present or all empty".into()));
            }
        };
        let sclerosis_label = match cell("sclerosis") {
            "" => None,
            s => Some(parse_bounded(s, 1).map_err(|m| invalid("sclerosis", m))?),
        };

        let stem = Path::new(&image_path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("row{row}"));
        let n = seen_ids.entry(stem.clone()).or_insert(0);
        *n += 1;
        let id = if *n == 1 { stem } else { format!("{stem}_{row}") };

        rows.push(ManifestRow {
            id,
            image_path,
            mask_path,
            split,
            kl_grade,
            side,
            osteophyte_grades,
            sclerosis_label,
        });
    }
    Ok(DatasetManifest {
        base_dir: None,
        rows,
    })
}

fn parse_bounded(s: &str, max: u8) -> std::result::Result<u8, String> {
    let v: i64 = s
        .parse()
        .map_err(|_| format!("`{s}` is not an integer"))?;
    if !(0..=max as i64).contains(&v) {
        return Err(format!("value {v} outside 0..={max}"));
    }
    Ok(v as u8)
}

/// Grayscale radiograph with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Radiograph {
    pub pixels: Grid,
    pub side: Side,
    /// True once mirrored (if needed) so the medial compartment is image-left.
    pub canonical: bool,
}

impl Radiograph {
    /// Wraps acquisition-frame pixels and canonicalizes them.
    pub fn from_acquisition(pixels: Grid, side: Side) -> Self {
        let pixels = match side {
            Side::Left => pixels,
            Side::Right => pixels.mirrored(),
        };
        Radiograph {
            pixels,
            side,
            canonical: true,
        }
    }

    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }
}

pub fn load_radiograph(path: impl AsRef<Path>, side: Side) -> Result<Radiograph> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let grid = match img {
        DynamicImage::ImageLuma8(buf) => Grid::from_vec(
            buf.width() as usize,
            buf.height() as usize,
            buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        ),
        DynamicImage::ImageLuma16(buf) => Grid::from_vec(
            buf.width() as usize,
            buf.height() as usize,
            buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        ),
        _ => return Err(Error::NotGrayscale(path.to_path_buf())),
    };
    if grid.width() != EXPECTED_SIZE || grid.height() != EXPECTED_SIZE {
        log::warn!(
            "{}: {}x{} radiograph, expected {EXPECTED_SIZE}x{EXPECTED_SIZE}",
            path.display(),
            grid.width(),
            grid.height()
        );
    }
    Ok(Radiograph::from_acquisition(grid, side))
}

/// Writes a `[0, 1]` grid as an 8-bit grayscale PNG (values clamped, rounded).
pub fn save_gray_png(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_fn(grid.width() as u32, grid.height() as u32, |x, y| {
        let v = grid.get(x as usize, y as usize).clamp(0.0, 1.0);
        Luma([(v * 255.0).round() as u8])
    });
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_MEDIAL: u8 = 1;
pub const LABEL_LATERAL: u8 = 2;

/// Per-pixel compartment labels: 0 background, 1 medial, 2 lateral joint space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize) -> Self {
        LabelMask {
            width,
            height,
            labels: vec![LABEL_BACKGROUND; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                found: labels.len(),
            });
        }
        if let Some(i) = labels.iter().position(|&l| l > LABEL_LATERAL) {
            return Err(Error::InvalidMaskValue {
                x: i % width,
                y: i / width,
                value: labels[i],
            });
        }
        Ok(LabelMask {
            width,
            height,
            labels,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Panics on labels outside `{0,1,2}`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        assert!(label <= LABEL_LATERAL, "mask label {label}");
        self.labels[y * self.width + x] = label;
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Horizontal mirror; labels keep their anatomical meaning.
    pub fn mirrored(&self) -> LabelMask {
        let mut out = LabelMask::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.labels[y * self.width + x] = self.get(self.width - 1 - x, y);
            }
        }
        out
    }

    /// Horizontal mirror with medial/lateral labels exchanged, i.e. the
    /// geometric reflection of the joint in the canonical frame.
    pub fn reflected(&self) -> LabelMask {
        let mut out = self.mirrored();
        for l in &mut out.labels {
            *l = match *l {
                LABEL_MEDIAL => LABEL_LATERAL,
                LABEL_LATERAL => LABEL_MEDIAL,
                other => other,
            };
        }
        out
    }

    pub fn check_matches(&self, img: &Radiograph) -> Result<()> {
        if self.width != img.width() || self.height != img.height() {
            return Err(Error::DimensionMismatch {
                a_width: self.width,
                a_height: self.height,
                b_width: img.width(),
                b_height: img.height(),
            });
        }
        Ok(())
    }
}

/// Loads an 8-bit label PNG and brings it into the canonical frame for `side`.
pub fn load_mask(path: impl AsRef<Path>, side: Side) -> Result<LabelMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let buf = match img {
        DynamicImage::ImageLuma8(buf) => buf,
        _ => return Err(Error::NotGrayscale(path.to_path_buf())),
    };
    let mask = LabelMask::from_vec(
        buf.width() as usize,
        buf.height() as usize,
        buf.into_raw(),
    )?;
    Ok(match side {
        Side::Left => mask,
        Side::Right => mask.mirrored(),
    })
}

pub fn save_mask_png(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img = GrayImage::from_raw(mask.width as u32, mask.height as u32, mask.labels.clone())
        .expect("mask buffer size");
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Columns preceding the 50 feature columns in the feature table.
pub const FEATURE_TABLE_PREFIX: [&str; 3] = ["id", "split", "kl_grade"];

pub fn feature_table_header() -> Vec<&'static str> {
    FEATURE_TABLE_PREFIX
        .iter()
        .chain(FEATURE_NAMES.iter())
        .copied()
        .collect()
}

/// Writes the feature table. Missing values (NaN) are written as empty cells;
/// finite values use the shortest round-tripping decimal form.
pub fn write_feature_table<W: Write>(writer: W, rows: &[StructuredVector]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(feature_table_header())?;
    for row in rows {
        if row.values.len() != FEATURE_COUNT {
            return Err(Error::LengthMismatch {
                expected: FEATURE_COUNT,
                found: row.values.len(),
            });
        }
        let mut record = Vec::with_capacity(FEATURE_COUNT + 3);
        record.push(row.id.clone());
        record.push(row.split.to_string());
        record.push(row.kl_grade.to_string());
        for v in &row.values {
            record.push(if v.is_nan() { String::new() } else { format!("{v:?}") });
        }
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| Error::io("<feature table>", e))?;
    Ok(())
}

pub fn read_feature_table<R: Read>(reader: R) -> Result<Vec<StructuredVector>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = feature_table_header();
    for (position, name) in expected.iter().enumerate() {
        match headers.get(position) {
            Some(h) if h.trim() == *name => {}
            Some(h) => {
                if !headers.iter().any(|x| x.trim() == *name) {
                    return Err(Error::MissingColumn(name.to_string()));
                }
                return Err(Error::HeaderMismatch {
                    position,
                    expected: name.to_string(),
                    found: h.to_string(),
                });
            }
            None => return Err(Error::MissingColumn(name.to_string())),
        }
    }
    if headers.len() != expected.len() {
        return Err(Error::HeaderMismatch {
            position: expected.len(),
            expected: "<end of header>".into(),
            found: headers.get(expected.len()).unwrap_or("").to_string(),
        });
    }

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let invalid = |column: &str, message: String| Error::InvalidCell {
            row,
            column: column.to_string(),
            message,
        };
        let id = record[0].trim().to_string();
        let split = record[1]
            .parse::<Split>()
            .map_err(|e| invalid("split", e.to_string()))?;
        let kl_grade = parse_bounded(record[2].trim(), 4).map_err(|m| invalid("kl_grade", m))?;
        let mut values = Vec::with_capacity(FEATURE_COUNT);
        for (j, name) in FEATURE_NAMES.iter().enumerate() {
            let cell = record[j + 3].trim();
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>()
                    .map_err(|_| invalid(name, format!("`{cell}` is not numeric")))?
            };
            values.push(v);
        }
        rows.push(StructuredVector {
            id,
            split,
            kl_grade,
            values,
        });
    }
    Ok(rows)
}

pub fn write_feature_table_file(path: impl AsRef<Path>, rows: &[StructuredVector]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_feature_table(std::io::BufWriter::new(file), rows)
}

pub fn read_feature_table_file(path: impl AsRef<Path>) -> Result<Vec<StructuredVector>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_table(std::io::BufReader::new(file))
}
