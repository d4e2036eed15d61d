//! Synthetic exchangeable (confidence, mask) pairs.
//!
//! Each sample carries one ellipsoidal lesion. Lesion and background voxel
//! confidences are drawn i.i.d. from configurable distributions, and
//! samples are i.i.d. given the seed, so any dataset produced here is
//! exchangeable. Sample `i` draws from its own stream derived from
//! `(seed, i)`, which keeps generation order-independent and parallel.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;

use crate::error::{Error, Result};
use crate::seed;
use crate::volume::{
    write_volume, ConfidenceVolume, DatasetManifest, GridDims, LabelVolume, ManifestEntry,
    SamplePair,
};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const CONFIG_NAME: &str = "generator.json";

/// Knots of the tabulated Beta CDF.
const BETA_TABLE_INTERVALS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConfidenceDist {
    Uniform01,
    Beta { a: f64, b: f64 },
}

impl ConfidenceDist {
    pub fn mean(&self) -> f64 {
        match *self {
            ConfidenceDist::Uniform01 => 0.5,
            ConfidenceDist::Beta { a, b } => a / (a + b),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ConfidenceDist::Uniform01 => 1.0 / 12.0,
            ConfidenceDist::Beta { a, b } => a * b / ((a + b).powi(2) * (a + b + 1.0)),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ConfidenceDist::Uniform01 => Ok(()),
            ConfidenceDist::Beta { a, b } if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => {
                Ok(())
            }
            ConfidenceDist::Beta { a, b } => Err(Error::GeneratorConfig(format!(
                "beta parameters must be positive, got ({a}, {b})"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesionShape {
    #[default]
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub dims: GridDims,
    pub n_samples: usize,
    #[serde(default)]
    pub lesion_shape: LesionShape,
    /// Per-axis semi-axis range in voxels, `[min, max]`.
    pub radius_range: [f64; 2],
    pub lesion_conf: ConfidenceDist,
    pub background_conf: ConfidenceDist,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            dims: GridDims { d: 32, h: 32, w: 32 },
            n_samples: 100,
            lesion_shape: LesionShape::Ellipsoid,
            radius_range: [4.0, 10.0],
            lesion_conf: ConfidenceDist::Uniform01,
            background_conf: ConfidenceDist::Beta { a: 1.0, b: 20.0 },
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let GridDims { d, h, w } = self.dims;
        GridDims::new(d, h, w)?;
        if self.n_samples == 0 {
            return Err(Error::EmptyDataset);
        }
        let [rmin, rmax] = self.radius_range;
        if !(rmin >= 1.0) {
            return Err(Error::GeneratorConfig(format!(
                "radius_min {rmin} < 1 admits an empty lesion"
            )));
        }
        if !(rmin <= rmax) {
            return Err(Error::GeneratorConfig(format!(
                "radius range [{rmin}, {rmax}] is empty"
            )));
        }
        let limit = d.min(h).min(w) as f64 / 2.0 - 1.0;
        if rmax > limit {
            return Err(Error::GeneratorConfig(format!(
                "radius_max {rmax} exceeds {limit} for dims {}",
                self.dims
            )));
        }
        self.lesion_conf.validate()?;
        self.background_conf.validate()
    }
}

/// Inverse-transform sampler. Beta draws invert a piecewise-linear
/// interpolation of the CDF tabulated on a uniform grid over `[0, 1]`.
#[derive(Debug, Clone)]
enum Sampler {
    Uniform,
    Table(Vec<f64>),
}

impl Sampler {
    fn new(dist: ConfidenceDist) -> Self {
        match dist {
            ConfidenceDist::Uniform01 => Sampler::Uniform,
            ConfidenceDist::Beta { a, b } => {
                let n = BETA_TABLE_INTERVALS;
                let mut cdf: Vec<f64> = (0..=n)
                    .map(|j| {
                        checked_beta_reg(a, b, j as f64 / n as f64)
                            .expect("validated beta parameters")
                    })
                    .collect();
                cdf[0] = 0.0;
                cdf[n] = 1.0;
                // Enforce monotonicity against tiny evaluation noise.
                for j in 1..=n {
                    cdf[j] = cdf[j].max(cdf[j - 1]);
                }
                Sampler::Table(cdf)
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let x = match self {
            Sampler::Uniform => u,
            Sampler::Table(cdf) => {
                let n = cdf.len() - 1;
                // cdf[j] <= u < cdf[j + 1]
                let j = (cdf.partition_point(|&c| c <= u) - 1).min(n - 1);
                let frac = (u - cdf[j]) / (cdf[j + 1] - cdf[j]);
                (j as f64 + frac) / n as f64
            }
        };
        x.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3)
            .map(|a| {
                let z = (p[a] as f64 - self.center[a]) / self.radii[a];
                z * z
            })
            .sum::<f64>()
            <= 1.0
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radii.iter().product::<f64>()
    }
}

fn sample_id(index: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(4);
    format!("sample_{index:0width$}")
}

struct Samplers {
    lesion: Sampler,
    background: Sampler,
}

fn generate_one(cfg: &GeneratorConfig, samplers: &Samplers, index: usize) -> (SamplePair, Ellipsoid) {
    let mut rng = seed::stream(cfg.seed, index as u64);
    let dims = cfg.dims;
    let [rmin, rmax] = cfg.radius_range;
    let radii = [0; 3].map(|_| {
        if rmin == rmax {
            rmin
        } else {
            rng.random_range(rmin..=rmax)
        }
    });
    let extent = dims.as_array();
    let center = extent.map(|len| {
        let hi = len as f64 - 1.0 - rmax;
        if hi <= rmax {
            rmax
        } else {
            rng.random_range(rmax..=hi)
        }
    });
    let lesion = Ellipsoid { center, radii };

    let mut conf = Vec::with_capacity(dims.len());
    let mut mask = Vec::with_capacity(dims.len());
    for d in 0..dims.d {
        for h in 0..dims.h {
            for w in 0..dims.w {
                let inside = lesion.contains([d, h, w]);
                let sampler = if inside {
                    &samplers.lesion
                } else {
                    &samplers.background
                };
                conf.push(sampler.draw(&mut rng) as f32);
                mask.push(u8::from(inside));
            }
        }
    }
    let pair = SamplePair::new(
        sample_id(index, cfg.n_samples),
        ConfidenceVolume::new(dims, conf).expect("draws lie in [0, 1]"),
        LabelVolume::new(dims, mask).expect("flags are 0 or 1"),
    )
    .expect("shared dims");
    (pair, lesion)
}

/// Samples together with the ellipsoid each mask was rasterized from.
pub fn generate_with_geometry(cfg: &GeneratorConfig) -> Result<Vec<(SamplePair, Ellipsoid)>> {
    cfg.validate()?;
    let samplers = Samplers {
        lesion: Sampler::new(cfg.lesion_conf),
        background: Sampler::new(cfg.background_conf),
    };
    Ok((0..cfg.n_samples)
        .into_par_iter()
        .map(|i| generate_one(cfg, &samplers, i))
        .collect())
}

pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<SamplePair>> {
    Ok(generate_with_geometry(cfg)?
        .into_iter()
        .map(|(pair, _)| pair)
        .collect())
}

/// Writes every sample plus a manifest under `out_dir` and returns the
/// manifest path. An existing manifest is only replaced when `force` is set.
pub fn generate_to_disk(cfg: &GeneratorConfig, out_dir: impl AsRef<Path>, force: bool) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    cfg.validate()?;
    let manifest_path = out_dir.join(MANIFEST_NAME);
    if manifest_path.exists() && !force {
        return Err(Error::AlreadyExists(manifest_path));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let samples = generate(cfg)?;
    let entries = samples
        .par_iter()
        .map(|s| {
            let confidence = format!("{}_conf.bin", s.id);
            let label = format!("{}_mask.bin", s.id);
            write_volume(&s.confidence.clone().into(), out_dir.join(&confidence))?;
            write_volume(&s.label.clone().into(), out_dir.join(&label))?;
            Ok(ManifestEntry {
                id: s.id.clone(),
                confidence,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let config_path = out_dir.join(CONFIG_NAME);
    let mut config_json = serde_json::to_vec_pretty(cfg).expect("config serializes");
    config_json.push(b'\n');
    fs::write(&config_path, config_json).map_err(|e| Error::io(&config_path, e))?;
    DatasetManifest { entries }.write(&manifest_path)?;
    Ok(manifest_path)
}
