//! Voxel grids and their on-disk layout.
//!
//! A volume is stored as two files side by side: `<name>.bin`, the raw
//! little-endian payload with no framing, and `<name>.meta.json`, a small
//! header carrying dims and dtype. Confidences are `f32`, masks are one byte
//! per voxel. Voxel `(d, h, w)` lives at flat index `d*H*W + h*W + w`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ORDER_TAG: &str = "dhw-row-major";
pub const ENDIANNESS_TAG: &str = "little";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 3]", into = "[usize; 3]")]
pub struct GridDims {
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl TryFrom<[usize; 3]> for GridDims {
    type Error = Error;

    fn try_from([d, h, w]: [usize; 3]) -> Result<Self> {
        Self::new(d, h, w)
    }
}

impl From<GridDims> for [usize; 3] {
    fn from(dims: GridDims) -> Self {
        dims.as_array()
    }
}

impl GridDims {
    pub fn new(d: usize, h: usize, w: usize) -> Result<Self> {
        let invalid = || Error::InvalidDims {
            d: d as u64,
            h: h as u64,
            w: w as u64,
        };
        if d == 0 || h == 0 || w == 0 {
            return Err(invalid());
        }
        (d as u64)
            .checked_mul(h as u64)
            .and_then(|x| x.checked_mul(w as u64))
            .and_then(|x| usize::try_from(x).ok())
            .ok_or_else(invalid)?;
        Ok(Self { d, h, w })
    }

    pub fn len(&self) -> usize {
        self.d * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, d: usize, h: usize, w: usize) -> usize {
        debug_assert!(d < self.d && h < self.h && w < self.w);
        (d * self.h + h) * self.w + w
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.d, self.h, self.w]
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.d, self.h, self.w)
    }
}

/// Per-voxel lesion probabilities, each in `[0, 1]`.
///
/// Values are held at storage precision (`f32`) so that a volume read back
/// from disk is identical to the one written; every computation widens them
/// to `f64` first.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceVolume {
    dims: GridDims,
    values: Vec<f32>,
}

impl ConfidenceVolume {
    pub fn new(dims: GridDims, values: Vec<f32>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::PayloadSize {
                expected: dims.len() as u64,
                actual: values.len() as u64,
            });
        }
        // NaN fails the range check too.
        if let Some((index, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::ConfidenceOutOfRange {
                index,
                value: f64::from(v),
            });
        }
        Ok(Self { dims, values })
    }

    /// Narrows `f64` values to storage precision after validation.
    pub fn from_f64(dims: GridDims, values: &[f64]) -> Result<Self> {
        if let Some((index, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::ConfidenceOutOfRange { index, value: v });
        }
        Self::new(dims, values.iter().map(|&v| v as f32).collect())
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        f64::from(self.values[index])
    }

    pub fn at(&self, d: usize, h: usize, w: usize) -> f64 {
        self.get(self.dims.index(d, h, w))
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|&v| f64::from(v))
    }
}

/// Binary mask over a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    dims: GridDims,
    values: Vec<u8>,
}

impl LabelVolume {
    pub fn new(dims: GridDims, values: Vec<u8>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::PayloadSize {
                expected: dims.len() as u64,
                actual: values.len() as u64,
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(Error::MaskValue { index, value });
        }
        Ok(Self { dims, values })
    }

    pub fn from_flags(dims: GridDims, flags: impl IntoIterator<Item = bool>) -> Result<Self> {
        Self::new(dims, flags.into_iter().map(u8::from).collect())
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn is_set(&self, index: usize) -> bool {
        self.values[index] == 1
    }

    pub fn positive_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// Voxelwise `self ⊆ other`.
    pub fn is_subset_of(&self, other: &LabelVolume) -> bool {
        self.dims == other.dims
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(&a, &b)| a <= b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Confidence(ConfidenceVolume),
    Label(LabelVolume),
}

impl Volume {
    pub fn dims(&self) -> GridDims {
        match self {
            Volume::Confidence(v) => v.dims(),
            Volume::Label(v) => v.dims(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Volume::Confidence(_) => "f32",
            Volume::Label(_) => "u8",
        }
    }
}

impl From<ConfidenceVolume> for Volume {
    fn from(v: ConfidenceVolume) -> Self {
        Volume::Confidence(v)
    }
}

impl From<LabelVolume> for Volume {
    fn from(v: LabelVolume) -> Self {
        Volume::Label(v)
    }
}

/// One calibration or test example: a model confidence map with its
/// ground-truth mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub id: String,
    pub confidence: ConfidenceVolume,
    pub label: LabelVolume,
}

impl SamplePair {
    pub fn new(
        id: impl Into<String>,
        confidence: ConfidenceVolume,
        label: LabelVolume,
    ) -> Result<Self> {
        let id = id.into();
        if confidence.dims() != label.dims() {
            return Err(Error::DimsMismatch {
                id,
                confidence: confidence.dims().to_string(),
                label: label.dims().to_string(),
            });
        }
        Ok(Self {
            id,
            confidence,
            label,
        })
    }

    pub fn dims(&self) -> GridDims {
        self.confidence.dims()
    }

    pub fn lesion_count(&self) -> usize {
        self.label.positive_count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VolumeHeader {
    dims: [u64; 3],
    dtype: String,
    order: String,
    endianness: String,
}

/// `foo.bin` → `foo.meta.json`.
pub fn header_path(payload: &Path) -> PathBuf {
    let stem = match payload.extension() {
        Some(ext) if ext == "bin" => payload.with_extension(""),
        _ => payload.to_path_buf(),
    };
    let mut name = stem.into_os_string();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let meta_path = header_path(path);
    let header_bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let header: VolumeHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| Error::Header {
            path: meta_path.clone(),
            message: e.to_string(),
        })?;
    let bad_header = |message: String| Error::Header {
        path: meta_path.clone(),
        message,
    };
    if header.order != ORDER_TAG {
        return Err(bad_header(format!("unsupported order {:?}", header.order)));
    }
    if header.endianness != ENDIANNESS_TAG {
        return Err(bad_header(format!(
            "unsupported endianness {:?}",
            header.endianness
        )));
    }
    let [d, h, w] = header.dims;
    let to_usize = |x: u64| usize::try_from(x).map_err(|_| Error::InvalidDims { d, h, w });
    let dims = GridDims::new(to_usize(d)?, to_usize(h)?, to_usize(w)?)?;

    let elem_size = match header.dtype.as_str() {
        "f32" => 4,
        "u8" => 1,
        other => return Err(Error::UnknownDtype(other.to_string())),
    };
    let payload = fs::read(path).map_err(|e| Error::io(path, e))?;
    if payload.len() != dims.len() * elem_size {
        return Err(Error::PayloadSize {
            expected: dims.len() as u64,
            actual: (payload.len() / elem_size) as u64,
        });
    }
    if elem_size == 4 {
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Volume::Confidence(ConfidenceVolume::new(dims, values)?))
    } else {
        Ok(Volume::Label(LabelVolume::new(dims, payload)?))
    }
}

pub fn read_confidence(path: impl AsRef<Path>) -> Result<ConfidenceVolume> {
    match read_volume(path)? {
        Volume::Confidence(v) => Ok(v),
        other => Err(Error::WrongVolumeKind {
            expected: "f32",
            found: other.kind(),
        }),
    }
}

pub fn read_label(path: impl AsRef<Path>) -> Result<LabelVolume> {
    match read_volume(path)? {
        Volume::Label(v) => Ok(v),
        other => Err(Error::WrongVolumeKind {
            expected: "u8",
            found: other.kind(),
        }),
    }
}

pub fn write_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dims = vol.dims();
    let payload: Vec<u8> = match vol {
        Volume::Confidence(v) => v.values().iter().flat_map(|x| x.to_le_bytes()).collect(),
        Volume::Label(v) => v.values().to_vec(),
    };
    let header = VolumeHeader {
        dims: dims.as_array().map(|x| x as u64),
        dtype: vol.kind().to_string(),
        order: ORDER_TAG.to_string(),
        endianness: ENDIANNESS_TAG.to_string(),
    };
    let meta_path = header_path(path);
    let header_json = serde_json::to_vec(&header).expect("header serializes");
    fs::write(&meta_path, header_json).map_err(|e| Error::io(&meta_path, e))?;
    fs::write(path, payload).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub confidence: String,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let mut seen = HashSet::new();
        for entry in &manifest.entries {
            if !seen.insert(entry.id.as_str()) {
                return Err(Error::DuplicateId(entry.id.clone()));
            }
        }
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        json.push(b'\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// What a loaded dataset will be used for. Calibration needs every sample to
/// have at least one lesion voxel; evaluation tolerates empty masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadContext {
    Calibration,
    Evaluation,
}

/// Loads every pair listed in the manifest, in manifest order. Volume paths
/// resolve relative to the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>, context: LoadContext) -> Result<Vec<SamplePair>> {
    use rayon::prelude::*;

    let path = path.as_ref();
    let manifest = DatasetManifest::read(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    manifest
        .entries
        .par_iter()
        .map(|entry| {
            let confidence = read_confidence(base.join(&entry.confidence))?;
            let label = read_label(base.join(&entry.label))?;
            let pair = SamplePair::new(entry.id.clone(), confidence, label)?;
            if context == LoadContext::Calibration && pair.lesion_count() == 0 {
                return Err(Error::EmptyGroundTruth(pair.id));
            }
            Ok(pair)
        })
        .collect()
}
