//! Index serialization.
//!
//! Layout (all little-endian u32 unless noted): magic `NVGI`, version,
//! metric tag, d, n, m, m0, max_level, entry node, then one level per node,
//! then per layer 0..=max_level the adjacency of every node present at that
//! layer in ascending id order as `(degree, ids...)`. A flat index is the
//! same file with `max_level = 0`. Vector data is not embedded; attaching a
//! dataset on load validates metric, dimension, and count against the header.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flat::FlatIndex;
use crate::graph::{FlatGraph, LayeredGraph};
use crate::hnsw::HnswIndex;
use crate::search::{Candidate, SearchTrace};
use crate::vecstore::{Metric, VectorSet};

const MAGIC: &[u8; 4] = b"NVGI";
const VERSION: u32 = 1;

/// Borrowed view of either index kind, for serialization.
#[derive(Clone, Copy)]
pub enum IndexRef<'a> {
    Hier(&'a HnswIndex),
    Flat(&'a FlatIndex),
}

/// Owned deserialized index; flat when the stored `max_level` is zero.
pub enum AnyIndex {
    Hier(HnswIndex),
    Flat(FlatIndex),
}

impl AnyIndex {
    pub fn num_nodes(&self) -> usize {
        match self {
            AnyIndex::Hier(i) => i.num_nodes(),
            AnyIndex::Flat(i) => i.num_nodes(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyIndex::Hier(_) => "hier",
            AnyIndex::Flat(_) => "flat",
        }
    }

    pub fn search(&self, query: &[f32], k: usize, ef: usize) -> Result<Vec<Candidate>> {
        match self {
            AnyIndex::Hier(i) => i.search(query, k, ef),
            AnyIndex::Flat(i) => i.search(query, k, ef),
        }
    }

    pub fn search_traced(
        &self,
        query: &[f32],
        k: usize,
        ef: usize,
        query_id: u32,
    ) -> Result<(Vec<Candidate>, SearchTrace)> {
        match self {
            AnyIndex::Hier(i) => i.search_traced(query, k, ef, query_id),
            AnyIndex::Flat(i) => i.search_traced(query, k, ef, query_id),
        }
    }
}

pub fn serialize_index(index: IndexRef<'_>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);
    match index {
        IndexRef::Hier(i) => {
            let g = i.graph();
            let entry = g.entry().ok_or(Error::EmptyIndex)?;
            push_u32(&mut out, i.metric().tag());
            push_u32(&mut out, i.vectors().dim() as u32);
            push_u32(&mut out, g.num_nodes() as u32);
            push_u32(&mut out, g.m());
            push_u32(&mut out, g.m0());
            push_u32(&mut out, g.max_level());
            push_u32(&mut out, entry);
            for node in 0..g.num_nodes() as u32 {
                push_u32(&mut out, g.level(node));
            }
            for layer in 0..=g.max_level() as usize {
                for node in 0..g.num_nodes() as u32 {
                    if (g.level(node) as usize) < layer {
                        continue;
                    }
                    let links = g.links(layer, node);
                    push_u32(&mut out, links.len() as u32);
                    for &id in links {
                        push_u32(&mut out, id);
                    }
                }
            }
        }
        IndexRef::Flat(i) => {
            let g = i.graph();
            let entry = g.entry().ok_or(Error::EmptyIndex)?;
            push_u32(&mut out, i.metric().tag());
            push_u32(&mut out, i.vectors().dim() as u32);
            push_u32(&mut out, g.num_nodes() as u32);
            push_u32(&mut out, g.m0() / 2);
            push_u32(&mut out, g.m0());
            push_u32(&mut out, 0);
            push_u32(&mut out, entry);
            for _ in 0..g.num_nodes() {
                push_u32(&mut out, 0);
            }
            for node in 0..g.num_nodes() as u32 {
                let links = g.links(node);
                push_u32(&mut out, links.len() as u32);
                for &id in links {
                    push_u32(&mut out, id);
                }
            }
        }
    }
    Ok(out)
}

/// Rebuilds an index from bytes, re-attaching its dataset. Round-tripped
/// indexes return identical results for any query.
pub fn deserialize_index(bytes: &[u8], vectors: Arc<VectorSet>) -> Result<AnyIndex> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::BadMagic { expected: "NVGI" });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let metric = Metric::from_tag(r.u32()?)?;
    if metric != vectors.metric() {
        return Err(Error::MetricMismatch {
            index: metric.name().into(),
            data: vectors.metric().name().into(),
        });
    }
    let dim = r.u32()? as usize;
    if dim != vectors.dim() {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: vectors.dim(),
        });
    }
    let n = r.u32()? as usize;
    if n != vectors.count() {
        return Err(Error::Malformed(format!(
            "index has {n} nodes but dataset has {}",
            vectors.count()
        )));
    }
    let m = r.u32()? as usize;
    let m0 = r.u32()? as usize;
    if m < 2 || m0 < m {
        return Err(Error::Malformed(format!("bad capacities m={m} m0={m0}")));
    }
    let max_level = r.u32()?;
    let entry = r.u32()?;
    if entry as usize >= n {
        return Err(Error::Malformed(format!("entry {entry} out of range")));
    }
    let mut levels = Vec::with_capacity(n);
    for _ in 0..n {
        levels.push(r.u32()?);
    }

    if max_level == 0 {
        let mut g = FlatGraph::new(m0)?;
        for _ in 0..n {
            g.push_node();
        }
        for node in 0..n as u32 {
            let deg = r.u32()? as usize;
            if deg > m0 {
                return Err(Error::Malformed(format!("degree {deg} exceeds m0 {m0}")));
            }
            let mut ids = Vec::with_capacity(deg);
            for _ in 0..deg {
                ids.push(r.u32()?);
            }
            g.set_neighbors(node, &ids)?;
        }
        g.set_entry(entry);
        r.done()?;
        Ok(AnyIndex::Flat(FlatIndex::from_parts(vectors, g)?))
    } else {
        let mut g = LayeredGraph::new(m)?;
        for &level in &levels {
            g.push_node(level);
        }
        for layer in 0..=max_level as usize {
            for node in 0..n as u32 {
                if (levels[node as usize] as usize) < layer {
                    continue;
                }
                let deg = r.u32()? as usize;
                if deg > g.capacity_at(layer) {
                    return Err(Error::Malformed(format!(
                        "degree {deg} exceeds capacity at layer {layer}"
                    )));
                }
                let mut ids = Vec::with_capacity(deg);
                for _ in 0..deg {
                    ids.push(r.u32()?);
                }
                g.set_neighbors(layer, node, &ids)?;
            }
        }
        g.promote_entry(entry);
        r.done()?;
        Ok(AnyIndex::Hier(HnswIndex::from_parts(vectors, g)?))
    }
}

pub fn write_index_file(path: &Path, index: IndexRef<'_>) -> Result<()> {
    std::fs::write(path, serialize_index(index)?)?;
    Ok(())
}

pub fn read_index_file(path: &Path, vectors: Arc<VectorSet>) -> Result<AnyIndex> {
    let bytes = std::fs::read(path)?;
    deserialize_index(&bytes, vectors)
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated(format!(
                "need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
