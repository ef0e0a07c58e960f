//! End-to-end paths through the public API: files in, index out, queries
//! answered, for both scalar widths.

use std::sync::Arc;

use annclass::index::{self, IndexParams, Searcher};
use annclass::io::{
    load_index, read_fvecs, read_ground_truth, read_vectors, save_index, write_bvecs, write_fvecs, DatasetSpec,
    GroundTruthCache, SyntheticRecipe,
};
use annclass::knn::{exact_knn, exact_knn_self};
use annclass::metrics::mean_recall;
use annclass::model::{Mode, Scale, SelectionParams};
use annclass::trees::{TreeBuildParams, TreeType};
use annclass::{EnsembleIndex64, VectorSet, VectorSet32, VectorSet64};

fn params(tt: TreeType) -> IndexParams {
    IndexParams {
        tree: TreeBuildParams {
            tree_type: tt,
            max_leaf_size: 50,
            seed: 11,
            ..Default::default()
        },
        n_trees: 8,
        ..Default::default()
    }
}

#[test]
fn fvecs_to_index_to_recall() {
    let dir = tempfile::tempdir().unwrap();
    let corpus: VectorSet32 = SyntheticRecipe::power_law(0.5, 2000, 12, 1).generate().unwrap();
    let queries: VectorSet32 = SyntheticRecipe::power_law(0.5, 100, 12, 2).generate().unwrap();
    write_fvecs(dir.path().join("base.fvecs"), &corpus).unwrap();
    write_fvecs(dir.path().join("query.fvecs"), &queries).unwrap();

    let spec: DatasetSpec = format!("fvecs:{}", dir.path().join("base.fvecs").display()).parse().unwrap();
    let corpus = Arc::new(read_vectors::<f32>(&spec).unwrap());
    let queries = read_fvecs(dir.path().join("query.fvecs")).unwrap();
    let cache = GroundTruthCache::new(dir.path().join("gt")).unwrap();
    let truth = cache.get_or_compute(&corpus, Some(&queries), 10).unwrap();
    assert_eq!(read_ground_truth(cache.path_for(&corpus, Some(&queries), 10)).unwrap(), truth);

    for tt in TreeType::ALL {
        let idx = index::build(corpus.clone(), None, &params(tt)).unwrap();
        let path = dir.path().join(format!("{tt}.idx"));
        save_index(&idx, &path).unwrap();
        let idx = load_index(&path, corpus.clone()).unwrap();
        let mut s = Searcher::new(&idx);
        let sel = SelectionParams::new(0.0, Scale::MeanProbability);
        let found: Vec<Vec<u32>> = queries.rows().map(|x| s.query(x, 10, &sel).neighbors.indices).collect();
        let r = mean_recall(&found, &truth.rows);
        assert!(r > 0.6, "{tt}: recall {r}");
    }
}

#[test]
fn bvecs_corpus_is_read_as_integers() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Vec<f32>> = (0..50).map(|i| (0..4).map(|j| ((i * 7 + j * 3) % 256) as f32).collect()).collect();
    let set = VectorSet::from_rows(&rows).unwrap();
    let path = dir.path().join("b.bvecs");
    write_bvecs(&path, &set).unwrap();
    let spec: DatasetSpec = format!("bvecs:{}", path.display()).parse().unwrap();
    assert_eq!(read_vectors::<f32>(&spec).unwrap(), set);
}

#[test]
fn f64_index_matches_f32_on_representable_data() {
    let c32: VectorSet32 = SyntheticRecipe::gaussian(1.0, 800, 6, 5).generate().unwrap();
    let c64: VectorSet64 = c32.cast().unwrap();
    let q32: VectorSet32 = SyntheticRecipe::gaussian(1.0, 40, 6, 6).generate().unwrap();
    let q64: VectorSet64 = q32.cast().unwrap();
    assert_eq!(exact_knn(&c32, &q32, 5).unwrap(), exact_knn(&c64, &q64, 5).unwrap());

    let p = params(TreeType::Kd);
    let a = index::build(Arc::new(c32), None, &p).unwrap();
    let b: EnsembleIndex64 = index::build(Arc::new(c64), None, &p).unwrap();
    let sel = SelectionParams::new(0.05, Scale::MeanProbability);
    for (x32, x64) in q32.rows().zip(q64.rows()) {
        let ra = index::query(&a, x32, 5, &sel).unwrap();
        let rb = index::query(&b, x64, 5, &sel).unwrap();
        assert_eq!(ra.neighbors, rb.neighbors);
    }
}

#[test]
fn voting_and_training_modes() {
    let corpus = Arc::new(SyntheticRecipe::gaussian(1.0, 1000, 5, 7).generate::<f32>().unwrap());
    let training = SyntheticRecipe::gaussian(0.5, 1000, 5, 8).generate::<f32>().unwrap();
    let vote = index::build(corpus.clone(), None, &IndexParams { mode: Mode::Voting, ..params(TreeType::Rp) }).unwrap();
    assert_eq!(vote.k(), 1);
    let x = corpus.row(3);
    let sel = SelectionParams::new(7.0, Scale::RawCount);
    // a corpus point shares every one of its own leaves
    assert!(index::query(&vote, x, 1, &sel).unwrap().neighbors.indices == vec![3]);

    let trained = index::build(corpus.clone(), Some(&training), &params(TreeType::Classification)).unwrap();
    let n_train: u32 = trained.trees()[0].leaves().iter().map(|l| l.n_points()).sum();
    assert_eq!(n_train as usize, training.len());
    let self_labels = exact_knn_self(&corpus, 10).unwrap();
    assert_eq!(self_labels.rows[3].indices[0], 3);
}

#[test]
fn mismatched_inputs_are_usage_errors() {
    let corpus = Arc::new(SyntheticRecipe::gaussian(1.0, 100, 4, 1).generate::<f32>().unwrap());
    let wrong = SyntheticRecipe::gaussian(1.0, 10, 3, 2).generate::<f32>().unwrap();
    assert!(index::build(corpus.clone(), Some(&wrong), &params(TreeType::Rp)).is_err());
    let idx = index::build(corpus, None, &params(TreeType::Rp)).unwrap();
    let sel = SelectionParams::default();
    assert!(index::query(&idx, wrong.row(0), 5, &sel).is_err());
    assert!(index::query(&idx, idx.corpus().row(0), 0, &sel).is_err());
}
