#![allow(dead_code)]

//! Shared fixtures for the integration and acceptance suites.

use dsth::anchors::{build_anchor_model, AnchorModel};
use dsth::dataset::{
    is_relevant, split_dataset, synthesize_dataset, Dataset, DatasetSplit, SynthParams,
};
use dsth::eval::mean_ap;
use dsth::hash::learn_projection;
use dsth::index::{pack, PackedCodeIndex};
use dsth::optim::{DsthConfig, DsthOptimizer, FitResult, Variant};
use dsth::Matrix;

pub struct Bench {
    pub n_classes: usize,
    pub per_class: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub noise: f64,
    pub consistency: f64,
    pub n_query: usize,
    pub n_train: usize,
    pub anchors_k: usize,
    pub anchors_s: usize,
    pub code_length: usize,
}

impl Bench {
    pub fn dataset(&self, seed: u64) -> Dataset<f64> {
        synthesize_dataset(&SynthParams {
            n_classes: self.n_classes,
            per_class: self.per_class,
            d_x: self.d_x,
            d_y: self.d_y,
            noise: self.noise,
            cross_modal_consistency: self.consistency,
            seed,
        })
        .expect("synthetic dataset")
    }

    pub fn optimizer_config(&self, seed: u64, variant: Variant) -> DsthConfig<f64> {
        DsthConfig {
            code_length: self.code_length,
            variant,
            seed,
            ..DsthConfig::default()
        }
    }

    pub fn train(
        &self,
        data: &Dataset<f64>,
        split: &DatasetSplit,
        cfg: &DsthConfig<f64>,
        seed: u64,
    ) -> (FitResult<f64>, AnchorModel<f64>, Matrix<f64>, Matrix<f64>) {
        let train_x = data.visual.select_cols(&split.training_ids);
        let train_y = data.text.select_cols(&split.training_ids);
        let anchors = build_anchor_model(&train_x, self.anchors_k, self.anchors_s, None, 25, seed)
            .expect("anchor model");
        let optimizer = DsthOptimizer::new(&train_x, &train_y, &anchors, cfg).expect("optimizer");
        let fit = optimizer.fit().expect("fit");
        (fit, anchors, train_x, train_y)
    }

    /// Full pipeline: synth → split → anchors → fit → hash functions →
    /// index database → rank held-out queries → mAP at the given depth.
    pub fn map_at(&self, seed: u64, variant: Variant, depth: usize) -> f64 {
        let data = self.dataset(seed);
        let split = split_dataset(&data, self.n_query, self.n_train, seed).expect("split");
        let cfg = self.optimizer_config(seed, variant);
        let (fit, _anchors, train_x, _) = self.train(&data, &split, &cfg, seed);

        let hash = learn_projection(&train_x, &fit.codes.to_signs::<f64>(), 1e2).expect("hash");
        let db = data.visual.select_cols(&split.database_ids);
        let codes = hash.encode_matrix(&db).expect("database codes");
        let ids: Vec<u64> = split.database_ids.iter().map(|&i| i as u64).collect();
        let index = PackedCodeIndex::build(&codes, &ids).expect("index");
        let queries: Vec<_> = split
            .query_ids
            .iter()
            .map(|&q| pack(&hash.encode(data.visual.col(q)).expect("encode query")))
            .collect();
        let labels = &data.labels;
        let relevant = |q: usize, id: u64| {
            is_relevant(
                labels.labels(split.query_ids[q]),
                labels.labels(id as usize),
            )
        };
        mean_ap(&index, &queries, relevant, depth, None)
            .expect("mean ap")
            .map
    }
}

/// The retrieval benchmark used by the directional criteria: eight classes
/// whose visual noise is high enough to push visual-only retrieval into the
/// mid-accuracy band while text stays clean.
pub fn retrieval_bench() -> Bench {
    Bench {
        n_classes: 8,
        per_class: 50,
        d_x: 32,
        d_y: 16,
        noise: 0.5,
        consistency: 1.0,
        n_query: 80,
        n_train: 240,
        anchors_k: 48,
        anchors_s: 5,
        code_length: 16,
    }
}

/// The convergence benchmark: three well-separated classes at moderate
/// noise, where the 50-iteration objective trace flattens cleanly.
pub fn convergence_bench() -> Bench {
    Bench {
        n_classes: 3,
        per_class: 86,
        d_x: 32,
        d_y: 16,
        noise: 0.3,
        consistency: 1.0,
        n_query: 40,
        n_train: 200,
        anchors_k: 24,
        anchors_s: 5,
        code_length: 16,
    }
}

/// A feasible random code matrix built by the same construction the
/// optimizer uses: centered Gaussian, thin SVD, `√N·P·Qᵀ`.
pub fn random_feasible_codes(l: usize, n: usize, seed: u64) -> Option<Matrix<f64>> {
    let mut rng = dsth::rng::rng_for(seed);
    let g: Matrix<f64> = dsth::rng::gaussian_matrix(l, n, &mut rng);
    let centered = dsth::linalg::center_columns(&g);
    let svd = dsth::linalg::thin_svd(&centered, 1e-10).expect("svd");
    if svd.rank() < l {
        return None;
    }
    Some(svd.left.mul_transpose(&svd.right).scaled((n as f64).sqrt()))
}
