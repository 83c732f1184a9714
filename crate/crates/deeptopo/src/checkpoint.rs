//! Checkpoints: `manifest.txt` (format version, configuration echo and
//! parameter inventory) next to `params.bin`, the little-endian `f32` values
//! of every entry concatenated in inventory order.

use std::fs;
use std::path::Path;

use deeptopo_core::model::Model;
use deeptopo_core::params::{Kind, ParamStore};
use sha2::{Digest, Sha256};

use crate::config::{parse_pairs, RunConfig};
use crate::error::{Error, Result};

pub const FORMAT: &str = "deeptopo-checkpoint 1";
pub const MANIFEST: &str = "manifest.txt";
pub const PAYLOAD: &str = "params.bin";

/// One inventory line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub kind: Kind,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub length: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config: Vec<(String, String)>,
    pub slots: Vec<Slot>,
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Param => "param",
        Kind::Buffer => "buffer",
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn shape_text(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

/// Payload bytes and inventory of a store.
pub fn encode(store: &ParamStore<f32>) -> (Vec<u8>, Vec<Slot>) {
    let mut payload = Vec::new();
    let mut slots = Vec::with_capacity(store.len());
    for e in store.entries() {
        let offset = payload.len();
        e.value
            .data()
            .iter()
            .for_each(|v| payload.extend_from_slice(&v.to_le_bytes()));
        let bytes = &payload[offset..];
        slots.push(Slot {
            name: e.name.clone(),
            kind: e.kind,
            shape: e.value.shape().to_vec(),
            offset,
            length: bytes.len(),
            sha256: hex(&Sha256::digest(bytes)),
        });
    }
    (payload, slots)
}

/// Manifest contents. The output directory is left out of the echo so that
/// identical runs written to different places produce identical files.
pub fn manifest_text(config: &RunConfig, slots: &[Slot]) -> String {
    let echo: String = config
        .pairs()
        .iter()
        .filter(|(k, _)| k != "out_dir")
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect();
    let mut out = format!("{FORMAT}\n[config]\n{echo}[params]\n");
    for s in slots {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            s.name,
            kind_name(s.kind),
            shape_text(&s.shape),
            s.offset,
            s.length,
            s.sha256
        ));
    }
    out
}

pub fn save(dir: &Path, config: &RunConfig, model: &Model<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let (payload, slots) = encode(&model.params);
    let bin = dir.join(PAYLOAD);
    fs::write(&bin, payload).map_err(Error::io(&bin))?;
    let man = dir.join(MANIFEST);
    fs::write(&man, manifest_text(config, &slots)).map_err(Error::io(&man))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    let bad = |msg: String| Error::checkpoint(&path, msg);
    let mut lines = text.lines();
    if lines.next() != Some(FORMAT) {
        return Err(bad(format!("first line is not {FORMAT:?}")));
    }
    if lines.next() != Some("[config]") {
        return Err(bad("missing [config] section".into()));
    }
    let config_lines: Vec<&str> = lines.by_ref().take_while(|l| *l != "[params]").collect();
    let config = parse_pairs(&config_lines.join("\n")).map_err(|e| bad(e.to_string()))?;
    let slots = lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let err = |what: &str| bad(format!("inventory line {}: {what}", n + 1));
            if f.len() != 6 {
                return Err(err("expected 6 tab-separated fields"));
            }
            let kind = match f[1] {
                "param" => Kind::Param,
                "buffer" => Kind::Buffer,
                other => return Err(err(&format!("unknown kind {other:?}"))),
            };
            let shape = f[2]
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| err(&format!("invalid shape {:?}", f[2])))?;
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(&format!("invalid number {s:?}")))
            };
            Ok(Slot {
                name: f[0].to_string(),
                kind,
                shape,
                offset: num(f[3])?,
                length: num(f[4])?,
                sha256: f[5].to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Manifest { config, slots })
}

/// Verifies the whole inventory and every checksum against `store`, then
/// overwrites its values. Nothing is written when any check fails.
pub fn load_into(dir: &Path, store: &mut ParamStore<f32>) -> Result<()> {
    let manifest = read_manifest(dir)?;
    let bad = |msg: String| Error::checkpoint(dir, msg);
    if manifest.slots.len() != store.len() {
        return Err(bad(format!(
            "inventory lists {} tensors, the model has {}",
            manifest.slots.len(),
            store.len()
        )));
    }
    for (slot, e) in manifest.slots.iter().zip(store.entries()) {
        if slot.name != e.name || slot.kind != e.kind || slot.shape != e.value.shape() {
            return Err(bad(format!(
                "inventory entry {} {} [{}] does not match model entry {} {} [{}]",
                slot.name,
                kind_name(slot.kind),
                shape_text(&slot.shape),
                e.name,
                kind_name(e.kind),
                shape_text(e.value.shape())
            )));
        }
    }
    let bin = dir.join(PAYLOAD);
    let payload = fs::read(&bin).map_err(Error::io(&bin))?;
    let mut expected_offset = 0;
    let mut values = Vec::with_capacity(manifest.slots.len());
    for (slot, e) in manifest.slots.iter().zip(store.entries()) {
        let len = e.value.numel() * 4;
        if slot.offset != expected_offset || slot.length != len {
            return Err(bad(format!(
                "{}: byte range {}+{} is not contiguous",
                slot.name, slot.offset, slot.length
            )));
        }
        let Some(bytes) = payload.get(slot.offset..slot.offset + len) else {
            return Err(Error::Truncated {
                path: bin.clone(),
                expected: slot.offset + len,
                found: payload.len(),
            });
        };
        if hex(&Sha256::digest(bytes)) != slot.sha256 {
            return Err(bad(format!("{}: checksum mismatch", slot.name)));
        }
        values.push(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect::<Vec<_>>(),
        );
        expected_offset += len;
    }
    if payload.len() != expected_offset {
        return Err(bad(format!(
            "{} trailing payload bytes",
            payload.len() - expected_offset
        )));
    }
    for (e, v) in store.entries_mut().iter_mut().zip(values) {
        e.value.data_mut().copy_from_slice(&v);
    }
    Ok(())
}

/// Rebuilds the configuration from the echo and loads the parameters.
pub fn load(dir: &Path) -> Result<(RunConfig, Model<f32>)> {
    let manifest = read_manifest(dir)?;
    let config = RunConfig::resolve(&manifest.config, &[])
        .map_err(|e| Error::checkpoint(dir, format!("configuration echo: {e}")))?;
    let mut model = Model::new(config.model.clone(), config.seed)?;
    load_into(dir, &mut model.params)?;
    Ok((config, model))
}
