use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, SyntheticTaskSpec};
use crate::error::{Error, Result};
use crate::ndtensor::io::{decode, encode};

pub const MANIFEST_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.json";
const SAMPLES_DIR: &str = "samples";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub id: String,
    pub video: String,
    pub tab: String,
    pub target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub seed: u64,
    pub spec: SyntheticTaskSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub sample_count: usize,
    pub tab_dim: usize,
    pub generator: Option<GeneratorInfo>,
    pub samples: Vec<ManifestSample>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", m.version)));
        }
        if m.sample_count != m.samples.len() {
            return Err(Error::Format(format!(
                "manifest lists {} samples but declares {}",
                m.samples.len(),
                m.sample_count
            )));
        }
        let mut ids = BTreeSet::new();
        for s in &m.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Format(format!("duplicate sample id {:?}", s.id)));
            }
        }
        Ok(m)
    }
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::Format(format!("sample id {id:?} is not a safe file name")))
    }
}

/// Writes `manifest.json` and one video and one tab tensor file per sample.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir.join(SAMPLES_DIR))?;
    let mut entries = Vec::with_capacity(ds.len());
    let mut ids = BTreeSet::new();
    for s in &ds.samples {
        check_id(&s.id)?;
        if !ids.insert(s.id.as_str()) {
            return Err(Error::Format(format!("duplicate sample id {:?}", s.id)));
        }
        let video = format!("{SAMPLES_DIR}/{}.video.ndt", s.id);
        let tab = format!("{SAMPLES_DIR}/{}.tab.ndt", s.id);
        fs::write(dir.join(&video), encode(&s.video))?;
        fs::write(dir.join(&tab), encode(&s.tab))?;
        entries.push(ManifestSample {
            id: s.id.clone(),
            video,
            tab,
            target: s.target,
            latent: s.latent,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        sample_count: entries.len(),
        tab_dim: ds.tab_dim,
        generator: ds.generator.as_ref().map(|(spec, seed)| GeneratorInfo {
            seed: *seed,
            spec: spec.clone(),
        }),
        samples: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

/// Reads a dataset directory, validating every referenced tensor.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let m = Manifest::read(dir)?;
    let mut samples = Vec::with_capacity(m.samples.len());
    for e in &m.samples {
        let video = decode::<f64>(&fs::read(dir.join(&e.video))?)?;
        let tab = decode::<f64>(&fs::read(dir.join(&e.tab))?)?;
        let vs = video.shape();
        if vs.len() != 4 || vs[1] != 1 {
            return Err(Error::Format(format!("{}: video shape {vs:?} is not [T,1,H,W]", e.id)));
        }
        if tab.shape() != [m.tab_dim] {
            return Err(Error::Format(format!(
                "{}: tab shape {:?}, expected [{}]",
                e.id,
                tab.shape(),
                m.tab_dim
            )));
        }
        if !(e.target > 0.0) || !e.target.is_finite() {
            return Err(Error::Format(format!("{}: target {} must be positive", e.id, e.target)));
        }
        samples.push(Sample {
            id: e.id.clone(),
            video,
            tab,
            target: e.target,
            latent: e.latent,
        });
    }
    Ok(Dataset {
        samples,
        tab_dim: m.tab_dim,
        generator: m.generator.map(|g| (g.spec, g.seed)),
    })
}
