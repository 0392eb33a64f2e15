//! On-disk synthetic datasets and the precomputed wireframe cache.
//!
//! Layout: `images/<id>.png`, `masks/<id>.png`, `wireframes/<id>.json` (ground truth) and
//! `manifest.json`; cached detections go to `wf_cache/<digest>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{sample_mask, Image};
use crate::mask::MaskBitmap;
use crate::wireframe::{threshold_wireframe, Wireframe, WireframeJson};

use super::detector::{image_digest, WireframeDetector};
use super::scene::SyntheticScene;

pub const CORPUS_VERSION: u32 = 1;
pub const CACHE_DIR: &str = "wf_cache";

/// Detector confidence thresholds for clean and corrupted images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub unmasked: f64,
    pub masked: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            unmasked: 0.95,
            masked: 0.925,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub seed: u64,
    pub image_sha256: String,
    pub mask_coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub size: usize,
    pub seed: u64,
    pub entries: Vec<CorpusEntry>,
}

/// Scene and evaluation-mask seeds for item `i` of a corpus seeded with `seed`.
pub fn item_seeds(seed: u64, i: usize) -> (u64, u64) {
    let base = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64);
    (base, base ^ 0x5851_f42d_4c95_7f2d)
}

pub struct Sample {
    pub id: String,
    pub image: Image,
    pub mask: MaskBitmap,
    pub wireframe: Wireframe,
}

/// Scenes and masks of a corpus without touching the disk.
pub fn synthetic_samples(n: usize, size: usize, seed: u64) -> Result<Vec<Sample>> {
    (0..n)
        .map(|i| {
            let (scene_seed, mask_seed) = item_seeds(seed, i);
            let scene = SyntheticScene::generate(scene_seed, size)?;
            let (_, mask) = sample_mask(mask_seed, size, size)?;
            Ok(Sample {
                id: format!("{i:05}"),
                image: scene.image,
                mask,
                wireframe: scene.wireframe,
            })
        })
        .collect()
}

pub fn make_synthetic_corpus(root: impl AsRef<Path>, n: usize, size: usize, seed: u64) -> Result<Corpus> {
    let root = root.as_ref();
    for sub in ["images", "masks", "wireframes"] {
        fs::create_dir_all(root.join(sub))?;
    }
    let mut entries = Vec::with_capacity(n);
    for (i, s) in synthetic_samples(n, size, seed)?.into_iter().enumerate() {
        s.image.save(root.join("images").join(format!("{}.png", s.id)))?;
        s.mask.save(root.join("masks").join(format!("{}.png", s.id)))?;
        s.wireframe.save(root.join("wireframes").join(format!("{}.json", s.id)))?;
        entries.push(CorpusEntry {
            id: s.id,
            seed: item_seeds(seed, i).0,
            image_sha256: image_digest(&s.image),
            mask_coverage: s.mask.coverage(),
        });
    }
    let manifest = CorpusManifest {
        version: CORPUS_VERSION,
        size,
        seed,
        entries,
    };
    fs::write(root.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(Corpus {
        root: root.to_path_buf(),
        manifest,
    })
}

pub struct Corpus {
    root: PathBuf,
    manifest: CorpusManifest,
}

impl Corpus {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let text = fs::read_to_string(root.join("manifest.json"))?;
        let manifest: CorpusManifest = serde_json::from_str(&text)?;
        if manifest.version != CORPUS_VERSION {
            return Err(Error::InvalidInput(format!(
                "corpus version {} is not supported",
                manifest.version
            )));
        }
        Ok(Self { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    pub fn image_path(&self, id: &str) -> PathBuf {
        self.root.join("images").join(format!("{id}.png"))
    }

    pub fn load(&self, id: &str) -> Result<Sample> {
        Ok(Sample {
            id: id.to_string(),
            image: Image::load(self.image_path(id))?,
            mask: MaskBitmap::load(self.root.join("masks").join(format!("{id}.png")))?,
            wireframe: Wireframe::load(self.root.join("wireframes").join(format!("{id}.json")))?,
        })
    }

    pub fn samples(&self) -> Result<Vec<Sample>> {
        self.manifest.entries.iter().map(|e| self.load(&e.id)).collect()
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.root.join(CACHE_DIR)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CachedWireframe {
    tau: f64,
    wireframe: WireframeJson,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrecomputeReport {
    pub computed: usize,
    pub cached: usize,
    pub failed: Vec<(String, String)>,
}

pub fn cache_path(cache_dir: &Path, digest: &str) -> PathBuf {
    cache_dir.join(format!("{digest}.json"))
}

/// The cached detection for `image` at threshold `tau`, if present.
pub fn cached_wireframe(cache_dir: &Path, image: &Image, tau: f64) -> Result<Option<Wireframe>> {
    let path = cache_path(cache_dir, &image_digest(image));
    if !path.exists() {
        return Ok(None);
    }
    let cached: CachedWireframe = serde_json::from_str(&fs::read_to_string(path)?)?;
    if cached.tau != tau {
        return Ok(None);
    }
    Ok(Some(Wireframe::from_json(&cached.wireframe)?))
}

/// Runs the detector on every clean corpus image (threshold `thresholds.unmasked`) and
/// stores the result by image digest. Unchanged images with a cache entry are skipped;
/// detector failures are logged and reported, and the image is skipped.
pub fn precompute_wireframes(
    corpus: &Corpus,
    detector: &dyn WireframeDetector,
    thresholds: Thresholds,
) -> Result<PrecomputeReport> {
    let dir = corpus.cache_dir();
    fs::create_dir_all(&dir)?;
    let tau = thresholds.unmasked;
    let mut report = PrecomputeReport::default();
    for entry in &corpus.manifest.entries {
        let image = Image::load(corpus.image_path(&entry.id))?;
        if cached_wireframe(&dir, &image, tau)?.is_some() {
            report.cached += 1;
            continue;
        }
        let wf = match detector.detect(&image).and_then(|wf| threshold_wireframe(&wf, tau)) {
            Ok(wf) => wf,
            Err(e) => {
                log::warn!("wireframe detection failed for {}: {e}", entry.id);
                report.failed.push((entry.id.clone(), e.to_string()));
                continue;
            }
        };
        let record = CachedWireframe {
            tau,
            wireframe: wf.to_json(),
        };
        fs::write(
            cache_path(&dir, &image_digest(&image)),
            serde_json::to_string(&record)?,
        )?;
        report.computed += 1;
    }
    Ok(report)
}
