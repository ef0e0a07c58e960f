//! Dataset ingestion, synthetic data, ground-truth caching and index files.
//!
//! Every format here is little-endian regardless of platform.

mod dataset;
mod gt_cache;
mod index_file;
mod synthetic;
mod vecs;

pub use dataset::{read_vectors, DatasetSpec, VecFormat};
pub use gt_cache::{read_ground_truth, write_ground_truth, GroundTruthCache};
pub use index_file::{load_index, read_index, save_index, write_index, INDEX_MAGIC, INDEX_VERSION};
pub use synthetic::SyntheticRecipe;
pub use vecs::{
    parse_bvecs, parse_fvecs, parse_raw_f32, read_bvecs, read_fvecs, read_ivecs, read_raw_f32, write_bvecs,
    write_fvecs, write_ivecs,
};
