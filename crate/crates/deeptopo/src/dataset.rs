//! On-disk datasets: `manifest.tsv` plus `images/<id>.ppm`,
//! `masks/<id>.pgm` and `skeletons/<id>.pgm`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use deeptopo_core::metrics::BinaryMask;
use deeptopo_core::synth::{SegSample, Zone};
use deeptopo_core::Tensor;

use crate::error::{Error, Result};
use crate::pnm::{self, Raster};

pub const MANIFEST: &str = "manifest.tsv";
const IMAGES: &str = "images";
const MASKS: &str = "masks";
const SKELETONS: &str = "skeletons";

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub id: String,
    pub zone: Zone,
    pub seed: u64,
    pub limb_count: usize,
}

/// A sample as stored on disk: the image is quantized to 8 bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub entry: Entry,
    /// `3×H×W` in `[0, 1]`.
    pub image: Tensor<f64>,
    pub mask: BinaryMask,
    pub skeleton: BinaryMask,
}

impl Record {
    pub fn size(&self) -> usize {
        self.mask.h
    }

    /// The mask as a `{0, 1}` tensor.
    pub fn mask_tensor(&self) -> Tensor<f64> {
        Tensor::new(&[self.mask.h, self.mask.w], self.mask.to_f64()).expect("mask size")
    }
}

fn image_raster(image: &Tensor<f64>) -> Raster {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let plane = h * w;
    let src = image.data();
    let data = (0..plane)
        .flat_map(|p| (0..3).map(move |c| pnm::quantize(src[c * plane + p])))
        .collect();
    Raster {
        width: w,
        height: h,
        channels: 3,
        data,
    }
}

fn mask_raster(mask: &BinaryMask) -> Raster {
    Raster {
        width: mask.w,
        height: mask.h,
        channels: 1,
        data: mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
    }
}

fn paths(dir: &Path, id: &str) -> [PathBuf; 3] {
    [
        dir.join(IMAGES).join(format!("{id}.ppm")),
        dir.join(MASKS).join(format!("{id}.pgm")),
        dir.join(SKELETONS).join(format!("{id}.pgm")),
    ]
}

fn manifest_line(e: &Entry) -> String {
    format!(
        "{}\t{}\t{}\t{}\n",
        e.id,
        e.zone.name(),
        e.seed,
        e.limb_count
    )
}

/// Writes samples in id order; the manifest is written last.
pub fn write_dataset(dir: &Path, samples: &[(String, SegSample)]) -> Result<()> {
    for sub in [IMAGES, MASKS, SKELETONS] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(Error::io(&d))?;
    }
    let mut sorted: Vec<&(String, SegSample)> = samples.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut manifest = String::new();
    for (id, s) in sorted {
        let [img, mask, skel] = paths(dir, id);
        pnm::write(&img, &image_raster(&s.image))?;
        pnm::write(&mask, &mask_raster(&s.mask))?;
        pnm::write(&skel, &mask_raster(&s.skeleton))?;
        manifest.push_str(&manifest_line(&Entry {
            id: id.clone(),
            zone: s.zone,
            seed: s.seed,
            limb_count: s.limb_count,
        }));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(Error::io(&path))
}

pub fn read_manifest(dir: &Path) -> Result<Vec<Entry>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    let mut seen = BTreeSet::new();
    text.lines()
        .enumerate()
        .map(|(n, line)| {
            let bad = |what: &str| Error::manifest(&path, format!("line {}: {what}", n + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(&format!(
                    "expected 4 tab-separated fields, found {}",
                    f.len()
                )));
            }
            let valid_id = !f[0].is_empty()
                && f[0]
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !valid_id {
                return Err(bad(&format!("invalid id {:?}", f[0])));
            }
            if !seen.insert(f[0].to_string()) {
                return Err(bad(&format!("duplicate id {}", f[0])));
            }
            Ok(Entry {
                id: f[0].to_string(),
                zone: Zone::parse(f[1]).ok_or_else(|| bad(&format!("unknown zone {:?}", f[1])))?,
                seed: f[2]
                    .parse()
                    .map_err(|_| bad(&format!("invalid seed {:?}", f[2])))?,
                limb_count: f[3]
                    .parse()
                    .map_err(|_| bad(&format!("invalid limb count {:?}", f[3])))?,
            })
        })
        .collect()
}

fn listed(dir: &Path, sub: &str, ext: &str) -> Result<BTreeSet<String>> {
    let d = dir.join(sub);
    let mut out = BTreeSet::new();
    for item in fs::read_dir(&d).map_err(Error::io(&d))? {
        let p = item.map_err(Error::io(&d))?.path();
        if p.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = p.file_stem() {
                out.insert(stem.to_string_lossy().into_owned());
            }
        }
    }
    Ok(out)
}

fn to_mask(path: &Path, r: &Raster) -> Result<BinaryMask> {
    if let Some(v) = r.data.iter().find(|&&v| v != 0 && v != 255) {
        return Err(Error::manifest(
            path,
            format!("mask value {v} is neither 0 nor 255"),
        ));
    }
    Ok(BinaryMask::new(
        r.height,
        r.width,
        r.data.iter().map(|&v| v == 255).collect(),
    )?)
}

/// Reads every sample listed in the manifest. Missing files, files the
/// manifest does not list and size disagreements are manifest mismatches.
pub fn read_dataset(dir: &Path) -> Result<Vec<Record>> {
    let entries = read_manifest(dir)?;
    let ids: BTreeSet<String> = entries.iter().map(|e| e.id.clone()).collect();
    for (sub, ext) in [(IMAGES, "ppm"), (MASKS, "pgm"), (SKELETONS, "pgm")] {
        if let Some(extra) = listed(dir, sub, ext)?.difference(&ids).next() {
            let p = dir.join(sub).join(format!("{extra}.{ext}"));
            return Err(Error::manifest(&p, "file is not listed in the manifest"));
        }
    }
    entries
        .into_iter()
        .map(|entry| {
            let [img_p, mask_p, skel_p] = paths(dir, &entry.id);
            for p in [&img_p, &mask_p, &skel_p] {
                if !p.exists() {
                    return Err(Error::manifest(
                        p,
                        format!("file for manifest id {} is missing", entry.id),
                    ));
                }
            }
            let img = pnm::read(&img_p, 3)?;
            let mask_r = pnm::read(&mask_p, 1)?;
            let skel_r = pnm::read(&skel_p, 1)?;
            for (p, r) in [(&mask_p, &mask_r), (&skel_p, &skel_r)] {
                if (r.width, r.height) != (img.width, img.height) {
                    return Err(Error::manifest(
                        p,
                        format!(
                            "size {}×{} differs from the image's {}×{}",
                            r.width, r.height, img.width, img.height
                        ),
                    ));
                }
            }
            if img.width != img.height {
                return Err(Error::manifest(&img_p, "image is not square"));
            }
            let plane = img.width * img.height;
            let image = Tensor::from_fn(&[3, img.height, img.width], |i| {
                f64::from(img.data[(i % plane) * 3 + i / plane]) / 255.0
            });
            Ok(Record {
                image,
                mask: to_mask(&mask_p, &mask_r)?,
                skeleton: to_mask(&skel_p, &skel_r)?,
                entry,
            })
        })
        .collect()
}
