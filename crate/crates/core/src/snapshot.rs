//! Binary snapshot of a trained model.
//!
//! Layout (all integers `u64`, all reals `f64`, little-endian):
//!
//! ```text
//! magic "FOLKREC\x01"
//! dim, n_layers, layer_weights[n_layers + 1]
//! n_users, n_items, n_tags
//! user0[n_users × dim], item0[n_items × dim], tag0[n_tags × dim]
//! external ids: users[n_users], items[n_items], tags[n_tags]
//! n_train, then n_train × (user, tag, item)
//! ```
//!
//! The training triples are stored so the graphs, and therefore the final
//! embeddings, can be rebuilt from layer 0 on load. Reals round-trip bit-exactly.

use std::io::{Read, Write};

use thiserror::Error;

use crate::dataset::{EntityIndex, IdMap, Triple};
use crate::graph::{build_graphs, FolksonomyGraphs};
use crate::model::{propagate, EmbeddingTable, FinalEmbeddings, Matrix, ModelConfig};

const MAGIC: &[u8; 8] = b"FOLKREC\x01";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub model: ModelConfig,
    pub table: EmbeddingTable,
    pub id_maps: IdMap,
    pub train: Vec<Triple>,
}

fn put_u64<W: Write>(out: &mut W, x: u64) -> std::io::Result<()> {
    out.write_all(&x.to_le_bytes())
}

fn put_f64s<W: Write>(out: &mut W, xs: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)
}

fn get_u64<R: Read>(src: &mut R) -> Result<u64, SnapshotError> {
    let mut b = [0u8; 8];
    src.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_usize<R: Read>(src: &mut R) -> Result<usize, SnapshotError> {
    let x = get_u64(src)?;
    usize::try_from(x).map_err(|_| SnapshotError::Corrupt(format!("count {x} too large")))
}

fn get_f64s<R: Read>(src: &mut R, n: usize) -> Result<Vec<f64>, SnapshotError> {
    let mut buf = vec![0u8; n * 8];
    src.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Guards allocations against garbage headers.
const MAX_COUNT: usize = 1 << 34;

impl Snapshot {
    pub fn n_users(&self) -> usize {
        self.table.user.rows()
    }

    pub fn n_items(&self) -> usize {
        self.table.item.rows()
    }

    pub fn n_tags(&self) -> usize {
        self.table.tag.rows()
    }

    pub fn graphs(&self) -> FolksonomyGraphs {
        build_graphs(&self.train, self.n_users(), self.n_items(), self.n_tags())
    }

    /// Final embeddings recomputed from the stored layer-0 table.
    pub fn finals(&self) -> FinalEmbeddings {
        propagate(&self.graphs(), &self.table, &self.model)
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        put_u64(&mut out, self.model.dim as u64)?;
        put_u64(&mut out, self.model.n_layers as u64)?;
        put_f64s(&mut out, &self.model.layer_weights)?;
        put_u64(&mut out, self.n_users() as u64)?;
        put_u64(&mut out, self.n_items() as u64)?;
        put_u64(&mut out, self.n_tags() as u64)?;
        for m in self.table.parts() {
            put_f64s(&mut out, m.as_slice())?;
        }
        for idx in [&self.id_maps.users, &self.id_maps.items, &self.id_maps.tags] {
            for &ext in idx.externals() {
                put_u64(&mut out, ext)?;
            }
        }
        put_u64(&mut out, self.train.len() as u64)?;
        for t in &self.train {
            put_u64(&mut out, t.user as u64)?;
            put_u64(&mut out, t.tag as u64)?;
            put_u64(&mut out, t.item as u64)?;
        }
        out.flush()
    }

    pub fn read<R: Read>(mut src: R) -> Result<Self, SnapshotError> {
        let mut magic = [0u8; 8];
        src.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let dim = get_usize(&mut src)?;
        let n_layers = get_usize(&mut src)?;
        if dim == 0 || dim > 1 << 16 || n_layers > 1 << 10 {
            return Err(SnapshotError::Corrupt(format!(
                "implausible dim {dim} / n_layers {n_layers}"
            )));
        }
        let weights = get_f64s(&mut src, n_layers + 1)?;
        let n_users = get_usize(&mut src)?;
        let n_items = get_usize(&mut src)?;
        let n_tags = get_usize(&mut src)?;
        for n in [n_users, n_items, n_tags] {
            if n.saturating_mul(dim) > MAX_COUNT {
                return Err(SnapshotError::Corrupt(format!(
                    "implausible entity count {n}"
                )));
            }
        }
        let user = Matrix::from_vec(n_users, dim, get_f64s(&mut src, n_users * dim)?);
        let item = Matrix::from_vec(n_items, dim, get_f64s(&mut src, n_items * dim)?);
        let tag = Matrix::from_vec(n_tags, dim, get_f64s(&mut src, n_tags * dim)?);
        let mut read_ids = |n: usize| -> Result<EntityIndex, SnapshotError> {
            let ids = (0..n)
                .map(|_| get_u64(&mut src))
                .collect::<Result<Vec<_>, _>>()?;
            EntityIndex::from_external(ids).map_err(|e| SnapshotError::Corrupt(e.to_string()))
        };
        let id_maps = IdMap {
            users: read_ids(n_users)?,
            items: read_ids(n_items)?,
            tags: read_ids(n_tags)?,
        };
        let n_train = get_usize(&mut src)?;
        if n_train > MAX_COUNT {
            return Err(SnapshotError::Corrupt(format!(
                "implausible triple count {n_train}"
            )));
        }
        let mut train = Vec::with_capacity(n_train);
        for _ in 0..n_train {
            let t = Triple {
                user: get_usize(&mut src)?,
                tag: get_usize(&mut src)?,
                item: get_usize(&mut src)?,
            };
            if t.user >= n_users || t.tag >= n_tags || t.item >= n_items {
                return Err(SnapshotError::Corrupt(format!("triple {t:?} out of range")));
            }
            train.push(t);
        }
        let mut rest = Vec::new();
        src.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(SnapshotError::Corrupt(format!(
                "{} trailing bytes",
                rest.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SnapshotError::Corrupt("invalid layer weights".into()));
        }
        Ok(Snapshot {
            model: ModelConfig::with_weights(dim, weights),
            table: EmbeddingTable { user, item, tag },
            id_maps,
            train,
        })
    }
}
