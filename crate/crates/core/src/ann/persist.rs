//! Index snapshot files.
//!
//! ```text
//! "VIDX" | version u32 | dim u32 | m u32 | ef_construction u32 | ef_search u32
//! | exact u8 | seed u64 | volume_count u32 | (id_len u16, id, slice_count u32)*
//! | node_count u64 | (volume u32, slice u32)* | node_count × dim × f32
//! | [graph: entry u32 | max_level u32 | per node: layers u8, (len u32, ids u32*)*]
//! ```
//!
//! A snapshot is a cache; rebuilding from the corpus gives the same index.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::hnsw::Hnsw;
use super::{IndexConfig, SliceIndex};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const INDEX_MAGIC: &[u8; 4] = b"VIDX";
pub const INDEX_VERSION: u32 = 1;

pub fn save_index(index: &SliceIndex, path: &Path) -> Result<()> {
    write_atomic(path, |w| encode(index, w))
}

fn encode(index: &SliceIndex, w: &mut dyn Write) -> Result<()> {
    let cfg = index.config;
    w.write_all(INDEX_MAGIC)?;
    w.write_u32::<LE>(INDEX_VERSION)?;
    w.write_u32::<LE>(index.dim as u32)?;
    w.write_u32::<LE>(cfg.m as u32)?;
    w.write_u32::<LE>(cfg.ef_construction as u32)?;
    w.write_u32::<LE>(cfg.ef_search as u32)?;
    w.write_u8(u8::from(cfg.exact))?;
    w.write_u64::<LE>(cfg.seed)?;
    w.write_u32::<LE>(index.volume_ids.len() as u32)?;
    for (id, count) in index.volume_ids.iter().zip(&index.volume_counts) {
        w.write_u16::<LE>(id.len() as u16)?;
        w.write_all(id.as_bytes())?;
        w.write_u32::<LE>(*count)?;
    }
    w.write_u64::<LE>(index.nodes.len() as u64)?;
    for &(v, s) in &index.nodes {
        w.write_u32::<LE>(v)?;
        w.write_u32::<LE>(s)?;
    }
    for &x in &index.vectors {
        w.write_f32::<LE>(x)?;
    }
    if let Some(g) = &index.graph {
        w.write_u32::<LE>(g.entry)?;
        w.write_u32::<LE>(g.max_level as u32)?;
        for layers in &g.links {
            w.write_u8(layers.len() as u8)?;
            for list in layers {
                w.write_u32::<LE>(list.len() as u32)?;
                for &n in list {
                    w.write_u32::<LE>(n)?;
                }
            }
        }
    }
    Ok(())
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl Reader<'_> {
    fn fail(&self, msg: &str) -> Error {
        Error::format(self.cur.position(), msg)
    }

    fn u8(&mut self) -> Result<u8> {
        self.cur
            .read_u8()
            .map_err(|_| self.fail("unexpected end of index file"))
    }

    fn u16(&mut self) -> Result<u16> {
        self.cur
            .read_u16::<LE>()
            .map_err(|_| self.fail("unexpected end of index file"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.cur
            .read_u32::<LE>()
            .map_err(|_| self.fail("unexpected end of index file"))
    }

    fn u64(&mut self) -> Result<u64> {
        self.cur
            .read_u64::<LE>()
            .map_err(|_| self.fail("unexpected end of index file"))
    }

    fn f32(&mut self) -> Result<f32> {
        self.cur
            .read_f32::<LE>()
            .map_err(|_| self.fail("unexpected end of index file"))
    }

    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.cur
            .read_exact(&mut buf)
            .map_err(|_| self.fail("unexpected end of index file"))?;
        Ok(buf)
    }

    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }
}

pub fn load_index(path: &Path) -> Result<SliceIndex> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<SliceIndex> {
    let mut r = Reader {
        cur: Cursor::new(bytes),
    };
    if r.bytes(4)? != INDEX_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"VIDX\""));
    }
    let version = r.u32()?;
    if version != INDEX_VERSION {
        return Err(Error::format(4, format!("unsupported index version {version}")));
    }
    let dim = r.u32()? as usize;
    let config = IndexConfig {
        m: r.u32()? as usize,
        ef_construction: r.u32()? as usize,
        ef_search: r.u32()? as usize,
        exact: r.u8()? != 0,
        seed: r.u64()?,
    };
    config.validate()?;
    if dim == 0 {
        return Err(r.fail("dimension must be positive"));
    }

    let n_vol = r.u32()? as usize;
    let mut volume_ids = Vec::with_capacity(n_vol.min(r.remaining()));
    let mut volume_counts = Vec::with_capacity(n_vol.min(r.remaining()));
    for _ in 0..n_vol {
        let len = r.u16()? as usize;
        let id = String::from_utf8(r.bytes(len)?).map_err(|_| r.fail("volume id is not UTF-8"))?;
        volume_ids.push(id);
        volume_counts.push(r.u32()?);
    }
    if volume_ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(r.fail("volume ids must be strictly ascending"));
    }

    let n_nodes = r.u64()? as usize;
    if n_nodes == 0 {
        return Err(Error::EmptyIndex);
    }
    if n_nodes.saturating_mul(8 + 4 * dim) > r.remaining() {
        return Err(r.fail("node table exceeds file size"));
    }
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let v = r.u32()?;
        let s = r.u32()?;
        if v as usize >= n_vol {
            return Err(r.fail("node references unknown volume"));
        }
        nodes.push((v, s));
    }
    let mut vectors = Vec::with_capacity(n_nodes * dim);
    for _ in 0..n_nodes * dim {
        vectors.push(r.f32()?);
    }

    let graph = if config.exact {
        None
    } else {
        let entry = r.u32()?;
        let max_level = r.u32()? as usize;
        let mut links = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let layers = r.u8()? as usize;
            let mut node_links = Vec::with_capacity(layers);
            for _ in 0..layers {
                let len = r.u32()? as usize;
                if len.saturating_mul(4) > r.remaining() {
                    return Err(r.fail("neighbor list exceeds file size"));
                }
                let mut list = Vec::with_capacity(len);
                for _ in 0..len {
                    let n = r.u32()?;
                    if n as usize >= n_nodes {
                        return Err(r.fail("neighbor id out of range"));
                    }
                    list.push(n);
                }
                node_links.push(list);
            }
            links.push(node_links);
        }
        if entry as usize >= n_nodes || links[entry as usize].len() != max_level + 1 {
            return Err(r.fail("invalid graph entry point"));
        }
        Some(Hnsw {
            entry,
            max_level,
            links,
        })
    };
    if r.remaining() != 0 {
        return Err(r.fail("trailing bytes after index"));
    }
    Ok(SliceIndex {
        config,
        dim,
        volume_ids,
        nodes,
        volume_counts,
        vectors,
        graph,
    })
}
