//! Versioned little-endian index container.
//!
//! ```text
//! header   magic[8] version:u32 scalar:u8 mode:u8 tree_type:u8 reserved:u8
//!          n_trees:u32 k:u32 d:u32 m:u32 corpus_digest[32]
//! tree*    tree_id:u64 tree_type:u8 fallbacks:u32
//!          n_nodes:u32 node*      (tag:u8 then leaf:u32, or
//!                                  axis|direction:u32 threshold:f64 left:u32 right:u32)
//!          n_directions:u32 values[n_directions * d]
//!          n_leaves:u32 leaf*     (depth:u32 n_points:u32 n_entries:u32
//!                                  then per entry varint(label delta) varint(count))
//! trailer  crc32:u32 over everything above
//! ```
//!
//! Labels within a leaf are ascending and stored as LEB128 deltas from the
//! previous label (the first from zero).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{EnsembleIndex, LeafLabelTable, Mode};
use crate::scalar::Scalar;
use crate::trees::{BuildDiagnostics, Node, PartitionTree, SplitRule, TreeType};
use crate::vectors::VectorSet;

pub const INDEX_MAGIC: &[u8; 8] = b"ANNCIDX\0";
pub const INDEX_VERSION: u32 = 1;

const TAG_LEAF: u8 = 0;
const TAG_AXIS: u8 = 1;
const TAG_DIRECTION: u8 = 2;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub fn write_index<T: Scalar, W: Write>(index: &EnsembleIndex<T>, mut w: W) -> Result<()> {
    let d = index.dim();
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    put_u32(&mut out, INDEX_VERSION);
    out.extend_from_slice(&[T::TAG, index.mode().code(), index.tree_type().code(), 0]);
    put_u32(&mut out, index.n_trees() as u32);
    put_u32(&mut out, index.k() as u32);
    put_u32(&mut out, d as u32);
    put_u32(&mut out, index.corpus().len() as u32);
    out.extend_from_slice(&index.corpus().digest());
    for tree in index.trees() {
        out.extend_from_slice(&tree.tree_id.to_le_bytes());
        out.push(tree.tree_type.code());
        put_u32(&mut out, tree.diagnostics.power_iteration_fallbacks as u32);
        put_u32(&mut out, tree.nodes.len() as u32);
        for node in &tree.nodes {
            match *node {
                Node::Leaf { leaf } => {
                    out.push(TAG_LEAF);
                    put_u32(&mut out, leaf);
                }
                Node::Split { rule, left, right } => {
                    let (tag, which, threshold) = match rule {
                        SplitRule::Axis { axis, threshold } => (TAG_AXIS, axis, threshold),
                        SplitRule::Direction { direction, threshold } => (TAG_DIRECTION, direction, threshold),
                    };
                    out.push(tag);
                    put_u32(&mut out, which);
                    out.extend_from_slice(&threshold.to_le_bytes());
                    put_u32(&mut out, left);
                    put_u32(&mut out, right);
                }
            }
        }
        put_u32(&mut out, (tree.directions.len() / d) as u32);
        for &v in &tree.directions {
            v.write_le(&mut out);
        }
        put_u32(&mut out, tree.leaves.len() as u32);
        for (table, &depth) in tree.leaves.iter().zip(&tree.leaf_depths) {
            put_u32(&mut out, depth);
            put_u32(&mut out, table.n_points());
            put_u32(&mut out, table.n_entries() as u32);
            let mut prev = 0;
            for (j, c) in table.entries() {
                put_varint(&mut out, j - prev);
                put_varint(&mut out, c);
                prev = j;
            }
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    w.write_all(&out)?;
    Ok(())
}

pub fn save_index<T: Scalar>(index: &EnsembleIndex<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_index(index, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::format("index file is truncated"))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn varint(&mut self) -> Result<u32> {
        let mut v: u64 = 0;
        for shift in (0..35).step_by(7) {
            let b = self.u8()?;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return u32::try_from(v).map_err(|_| Error::format("varint overflow"));
            }
        }
        Err(Error::format("varint too long"))
    }

    /// Length prefix bounded by the bytes left, `min_item` bytes per item.
    fn count(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.bytes.len() - self.pos {
            return Err(Error::format("length field exceeds file size"));
        }
        Ok(n)
    }
}

/// Parses an index and attaches it to `corpus`, which must be the set it
/// was built over. Nothing is returned unless the whole file checks out.
pub fn read_index<T: Scalar, R: Read>(mut r: R, corpus: Arc<VectorSet<T>>) -> Result<EnsembleIndex<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..8] != INDEX_MAGIC {
        return Err(Error::format("bad magic; not an index file"));
    }
    if bytes.len() < 12 + 4 {
        return Err(Error::format("index file is truncated"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != INDEX_VERSION {
        return Err(Error::format(format!("unsupported index version {version}")));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(Error::format("index checksum mismatch"));
    }
    let mut c = Cursor { bytes: body, pos: 12 };
    let scalar = c.u8()?;
    if scalar != T::TAG {
        return Err(Error::format(format!("index stores scalar tag {scalar}, expected {}", T::TAG)));
    }
    let mode = Mode::from_code(c.u8()?).ok_or_else(|| Error::format("unknown mode"))?;
    let tree_type = TreeType::from_code(c.u8()?).ok_or_else(|| Error::format("unknown tree type"))?;
    c.u8()?;
    let n_trees = c.u32()? as usize;
    let k = c.u32()? as usize;
    let d = c.u32()? as usize;
    let m = c.u32()? as usize;
    let digest = c.take(32)?;
    if d != corpus.dim() || m != corpus.len() {
        return Err(Error::usage(format!(
            "index was built over {m} points of dimension {d}; corpus has {} of dimension {}",
            corpus.len(),
            corpus.dim()
        )));
    }
    if digest != corpus.digest() {
        return Err(Error::usage("corpus contents differ from the set the index was built over"));
    }
    if n_trees == 0 {
        return Err(Error::format("index holds no trees"));
    }
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        trees.push(read_tree(&mut c, d, m)?);
    }
    if c.pos != body.len() {
        return Err(Error::format("trailing bytes after the last tree"));
    }
    Ok(EnsembleIndex::from_parts(trees, k, mode, tree_type, corpus))
}

fn read_tree<T: Scalar>(c: &mut Cursor<'_>, d: usize, m: usize) -> Result<PartitionTree<T>> {
    let tree_id = c.u64()?;
    let tree_type = TreeType::from_code(c.u8()?).ok_or_else(|| Error::format("unknown tree type"))?;
    let fallbacks = c.u32()? as usize;
    let n_nodes = c.count(5)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let node = match c.u8()? {
            TAG_LEAF => Node::Leaf { leaf: c.u32()? },
            tag @ (TAG_AXIS | TAG_DIRECTION) => {
                let which = c.u32()?;
                let threshold = c.f64()?;
                let rule = if tag == TAG_AXIS {
                    SplitRule::Axis { axis: which, threshold }
                } else {
                    SplitRule::Direction {
                        direction: which,
                        threshold,
                    }
                };
                Node::Split {
                    rule,
                    left: c.u32()?,
                    right: c.u32()?,
                }
            }
            other => return Err(Error::format(format!("unknown node tag {other}"))),
        };
        nodes.push(node);
    }
    let n_dirs = c.count(d * T::BYTES)?;
    let raw = c.take(n_dirs * d * T::BYTES)?;
    let directions: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
    let n_leaves = c.count(12)?;
    let mut leaves = Vec::with_capacity(n_leaves);
    let mut leaf_depths = Vec::with_capacity(n_leaves);
    for _ in 0..n_leaves {
        leaf_depths.push(c.u32()?);
        let n_points = c.u32()?;
        let n_entries = c.count(2)?;
        let mut labels = Vec::with_capacity(n_entries);
        let mut counts = Vec::with_capacity(n_entries);
        let mut prev = 0u32;
        for e in 0..n_entries {
            let delta = c.varint()?;
            if e > 0 && delta == 0 {
                return Err(Error::format("leaf labels are not strictly ascending"));
            }
            let j = prev
                .checked_add(delta)
                .filter(|&j| (j as usize) < m)
                .ok_or_else(|| Error::format("leaf label outside the corpus"))?;
            labels.push(j);
            counts.push(c.varint()?);
            prev = j;
        }
        leaves.push(LeafLabelTable::from_parts(n_points, labels, counts));
    }
    validate_structure(&nodes, n_dirs, n_leaves, d)?;
    Ok(PartitionTree {
        d,
        tree_type,
        tree_id,
        nodes,
        directions,
        leaves,
        leaf_depths,
        diagnostics: BuildDiagnostics {
            power_iteration_fallbacks: fallbacks,
        },
    })
}

// Child links must point forward so routing always terminates, every leaf
// index must be valid and every leaf reachable exactly once.
fn validate_structure(nodes: &[Node], n_dirs: usize, n_leaves: usize, d: usize) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::format("tree has no nodes"));
    }
    let mut seen = vec![false; n_leaves];
    for (i, node) in nodes.iter().enumerate() {
        match *node {
            Node::Leaf { leaf } => {
                let slot = seen
                    .get_mut(leaf as usize)
                    .ok_or_else(|| Error::format("leaf index out of range"))?;
                if std::mem::replace(slot, true) {
                    return Err(Error::format("leaf referenced twice"));
                }
            }
            Node::Split { rule, left, right } => {
                for child in [left, right] {
                    if child as usize <= i || child as usize >= nodes.len() {
                        return Err(Error::format("invalid child link"));
                    }
                }
                let ok = match rule {
                    SplitRule::Axis { axis, threshold } => (axis as usize) < d && !threshold.is_nan(),
                    SplitRule::Direction { direction, threshold } => {
                        (direction as usize) < n_dirs && !threshold.is_nan()
                    }
                };
                if !ok {
                    return Err(Error::format("invalid split rule"));
                }
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::format("unreferenced leaf"));
    }
    Ok(())
}

pub fn load_index<T: Scalar>(path: impl AsRef<Path>, corpus: Arc<VectorSet<T>>) -> Result<EnsembleIndex<T>> {
    read_index(fs::File::open(path)?, corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build, IndexParams};
    use crate::io::SyntheticRecipe;
    use crate::model::{Scale, SelectionParams};
    use crate::trees::TreeBuildParams;

    fn small_index(tt: TreeType, mode: Mode) -> EnsembleIndex<f32> {
        let corpus = Arc::new(SyntheticRecipe::gaussian(1.0, 600, 6, 3).generate::<f32>().unwrap());
        let params = IndexParams {
            tree: TreeBuildParams {
                tree_type: tt,
                max_leaf_size: 30,
                seed: 1,
                ..Default::default()
            },
            n_trees: 4,
            k: 5,
            mode,
            ..Default::default()
        };
        build(corpus, None, &params).unwrap()
    }

    #[test]
    fn roundtrip_all_types() {
        for tt in TreeType::ALL {
            for mode in [Mode::Classification, Mode::Voting] {
                let idx = small_index(tt, mode);
                let mut buf = Vec::new();
                write_index(&idx, &mut buf).unwrap();
                let back = read_index(&buf[..], idx.corpus_arc().clone()).unwrap();
                assert_eq!(back.trees(), idx.trees());
                assert_eq!((back.k(), back.mode(), back.tree_type()), (idx.k(), idx.mode(), idx.tree_type()));
                let sel = SelectionParams::new(0.0, Scale::RawCount);
                for q in idx.corpus().rows().take(20) {
                    assert_eq!(
                        crate::model::select_candidates(&idx, q, &sel),
                        crate::model::select_candidates(&back, q, &sel)
                    );
                }
            }
        }
    }

    #[test]
    fn empty_leaf_tables_roundtrip() {
        let mut idx = small_index(TreeType::Rp, Mode::Classification);
        idx.trees[0].leaves[0] = LeafLabelTable::default();
        let mut buf = Vec::new();
        write_index(&idx, &mut buf).unwrap();
        let back = read_index(&buf[..], idx.corpus_arc().clone()).unwrap();
        assert_eq!(back.trees()[0].leaf(0), &LeafLabelTable::default());
    }

    #[test]
    fn any_corrupted_byte_fails_cleanly() {
        let idx = small_index(TreeType::Kd, Mode::Classification);
        let mut buf = Vec::new();
        write_index(&idx, &mut buf).unwrap();
        for pos in [0, 5, 9, 13, 20, 40, buf.len() / 2, buf.len() - 1] {
            let mut bad = buf.clone();
            bad[pos] ^= 0x10;
            assert!(read_index(&bad[..], idx.corpus_arc().clone()).is_err(), "byte {pos}");
        }
        assert!(read_index(&buf[..buf.len() - 3], idx.corpus_arc().clone()).is_err());
        assert!(read_index(&[][..], idx.corpus_arc().clone()).is_err());
    }

    #[test]
    fn wrong_corpus_or_scalar_is_rejected() {
        let idx = small_index(TreeType::Rp, Mode::Voting);
        let mut buf = Vec::new();
        write_index(&idx, &mut buf).unwrap();
        let other = Arc::new(SyntheticRecipe::gaussian(1.0, 600, 6, 4).generate::<f32>().unwrap());
        assert!(read_index(&buf[..], other).is_err());
        let as64 = Arc::new(idx.corpus().cast::<f64>().unwrap());
        assert!(read_index(&buf[..], as64).is_err());
    }

    #[test]
    fn varint_roundtrip() {
        let mut out = Vec::new();
        for v in [0, 1, 127, 128, 300, 1 << 21, u32::MAX] {
            out.clear();
            put_varint(&mut out, v);
            let mut c = Cursor { bytes: &out, pos: 0 };
            assert_eq!(c.varint().unwrap(), v);
            assert_eq!(c.pos, out.len());
        }
    }
}
