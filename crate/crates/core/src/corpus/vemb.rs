//! VEMB embedding files and their JSON-lines metadata sidecar.
//!
//! Layout (little-endian):
//!
//! ```text
//! header  : "VEMB" | version u32 (=1) | dim u32 | record_count u64
//! record  : id_len u16 | id (UTF-8) | slice_index u32 | dim × f32
//! ```
//!
//! Each metadata line describes one volume:
//! `{"volume_id", "task", "tumor_stage", "num_slices", "organ_slice_indices"}`
//! plus an optional `other_organ_slices` object keyed by organ name.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{Corpus, Task, VolumeRecord};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const VEMB_MAGIC: &[u8; 4] = b"VEMB";
pub const VEMB_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// One metadata line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub volume_id: String,
    pub task: Task,
    pub tumor_stage: u8,
    pub num_slices: u32,
    pub organ_slice_indices: Vec<u32>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub other_organ_slices: BTreeMap<Task, Vec<u32>>,
}

impl VolumeMeta {
    pub fn of(volume: &VolumeRecord) -> Self {
        VolumeMeta {
            volume_id: volume.volume_id.clone(),
            task: volume.task,
            tumor_stage: volume.tumor_stage,
            num_slices: volume.num_slices() as u32,
            organ_slice_indices: volume.organ_slice_indices.iter().copied().collect(),
            other_organ_slices: volume
                .other_organ_slices
                .iter()
                .map(|(k, v)| (*k, v.iter().copied().collect()))
                .collect(),
        }
    }
}

/// Default sidecar location: `foo.vemb` → `foo.meta.jsonl`.
pub fn metadata_path_for(embeddings: &Path) -> PathBuf {
    embeddings.with_extension("meta.jsonl")
}

/// Loads `path` together with its default metadata sidecar.
pub fn load_embeddings(path: &Path) -> Result<Corpus> {
    load_corpus(path, &metadata_path_for(path))
}

/// Writes `corpus` to `path` and its metadata to the default sidecar.
pub fn write_embeddings(corpus: &Corpus, path: &Path) -> Result<()> {
    write_corpus(corpus, path, &metadata_path_for(path))
}

pub fn write_corpus(corpus: &Corpus, embeddings: &Path, metadata: &Path) -> Result<()> {
    write_atomic(embeddings, |w| write_vemb(corpus, w))?;
    write_atomic(metadata, |w| write_metadata(corpus, w))
}

fn write_vemb(corpus: &Corpus, w: &mut dyn Write) -> Result<()> {
    w.write_all(VEMB_MAGIC)?;
    w.write_u32::<LittleEndian>(VEMB_VERSION)?;
    w.write_u32::<LittleEndian>(corpus.dim() as u32)?;
    w.write_u64::<LittleEndian>(corpus.total_slices() as u64)?;
    for volume in corpus.volumes() {
        let id = volume.volume_id.as_bytes();
        let id_len =
            u16::try_from(id.len()).map_err(|_| Error::Input(format!("volume id too long: {}", volume.volume_id)))?;
        for (slice, row) in volume.embeddings().chunks_exact(corpus.dim()).enumerate() {
            w.write_u16::<LittleEndian>(id_len)?;
            w.write_all(id)?;
            w.write_u32::<LittleEndian>(slice as u32)?;
            for &x in row {
                w.write_f32::<LittleEndian>(x)?;
            }
        }
    }
    Ok(())
}

pub fn write_metadata(corpus: &Corpus, w: &mut dyn Write) -> Result<()> {
    for volume in corpus.volumes() {
        serde_json::to_writer(&mut *w, &VolumeMeta::of(volume))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<Vec<VolumeMeta>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Consistency(format!("cannot open metadata {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let meta: VolumeMeta = serde_json::from_str(&line)
            .map_err(|e| Error::Consistency(format!("metadata line {}: {e}", lineno + 1)))?;
        out.push(meta);
    }
    Ok(out)
}

type RawRecords = BTreeMap<String, BTreeMap<u32, Vec<f32>>>;

fn parse_vemb(bytes: &[u8]) -> Result<(usize, RawRecords)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(0, "file shorter than the 20-byte header"));
    }
    if &bytes[0..4] != VEMB_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"VEMB\""));
    }
    let version = LittleEndian::read_u32(&bytes[4..8]);
    if version != VEMB_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let dim = LittleEndian::read_u32(&bytes[8..12]) as usize;
    if dim == 0 {
        return Err(Error::format(8, "dimension must be positive"));
    }
    let count = LittleEndian::read_u64(&bytes[12..20]);

    let mut records = RawRecords::new();
    let mut pos = HEADER_LEN;
    let truncated =
        |at: usize, what: &str| Error::CorruptCorpus(format!("truncated record at byte {at}: missing {what}"));
    for _ in 0..count {
        let start = pos;
        let id_len = bytes
            .get(pos..pos + 2)
            .map(LittleEndian::read_u16)
            .ok_or_else(|| truncated(start, "id length"))? as usize;
        pos += 2;
        let id_bytes = bytes
            .get(pos..pos + id_len)
            .ok_or_else(|| truncated(start, "volume id"))?;
        let id = std::str::from_utf8(id_bytes)
            .map_err(|_| Error::format(pos as u64, "volume id is not UTF-8"))?
            .to_owned();
        pos += id_len;
        let slice = bytes
            .get(pos..pos + 4)
            .map(LittleEndian::read_u32)
            .ok_or_else(|| truncated(start, "slice index"))?;
        pos += 4;
        let payload = bytes
            .get(pos..pos + 4 * dim)
            .ok_or_else(|| truncated(start, "embedding values"))?;
        pos += 4 * dim;
        let mut values = vec![0f32; dim];
        LittleEndian::read_f32_into(payload, &mut values);
        if records.entry(id.clone()).or_default().insert(slice, values).is_some() {
            return Err(Error::CorruptCorpus(format!(
                "duplicate record {id}:{slice} at byte {start}"
            )));
        }
    }
    if pos != bytes.len() {
        return Err(Error::CorruptCorpus(format!(
            "{} trailing bytes after {count} records at byte {pos}; record sizes disagree with dim {dim}",
            bytes.len() - pos
        )));
    }
    Ok((dim, records))
}

/// Loads an embedding file and its metadata into a normalized [`Corpus`].
pub fn load_corpus(embeddings: &Path, metadata: &Path) -> Result<Corpus> {
    let bytes = fs::read(embeddings)?;
    let (dim, mut records) = parse_vemb(&bytes)?;
    let metas = read_metadata(metadata)?;

    let mut corpus = Corpus::new(dim)?;
    for meta in metas {
        let slices = records.remove(&meta.volume_id).ok_or_else(|| {
            Error::Consistency(format!(
                "metadata references volume {} with no embeddings",
                meta.volume_id
            ))
        })?;
        let expected = meta.num_slices as usize;
        if slices.len() != expected || slices.keys().copied().ne(0..meta.num_slices) {
            return Err(Error::Consistency(format!(
                "volume {}: metadata declares {expected} slices, file holds {} (indices must be 0..{expected})",
                meta.volume_id,
                slices.len()
            )));
        }
        let flat: Vec<f32> = slices.into_values().flatten().collect();
        let organ: BTreeSet<u32> = meta.organ_slice_indices.iter().copied().collect();
        let other = meta
            .other_organ_slices
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect();
        let volume = VolumeRecord::new(meta.volume_id, meta.task, meta.tumor_stage, organ, dim, flat)?
            .with_other_organ_slices(other)?;
        corpus.insert(volume)?;
    }
    if let Some(orphan) = records.keys().next() {
        return Err(Error::Consistency(format!(
            "embeddings for volume {orphan} have no metadata entry"
        )));
    }
    Ok(corpus)
}
