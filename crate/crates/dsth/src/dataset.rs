//! Dataset container, relevance judgments, splits, and a synthetic
//! multimodal generator for desk-scale verification.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, Matrix};
use crate::rng::{gaussian_vec, rng_for, sample_without_replacement, stage_seed};
use crate::scalar::{real, Real};

/// Per-sample label-id sets. Category-labeled data uses singleton sets,
/// tag-labeled data multi-element sets; relevance is set intersection in
/// both cases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    sets: Vec<Vec<u32>>,
}

impl LabelSet {
    /// Builds from per-sample id collections; ids are canonicalized
    /// (sorted, deduplicated). Every sample must carry at least one id.
    pub fn new(sets: Vec<Vec<u32>>) -> Result<Self> {
        if let Some(i) = sets.iter().position(|s| s.is_empty()) {
            return Err(Error::Config(format!("sample {i} has an empty label set")));
        }
        let sets = sets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        Ok(LabelSet { sets })
    }

    pub fn count(&self) -> usize {
        self.sets.len()
    }

    pub fn labels(&self, sample: usize) -> &[u32] {
        &self.sets[sample]
    }

    pub fn sets(&self) -> &[Vec<u32>] {
        &self.sets
    }
}

/// True iff the two label sets share at least one id. For single-category
/// data this reduces to category equality. Both slices must be sorted.
pub fn is_relevant(a: &[u32], b: &[u32]) -> bool {
    debug_assert!(a.windows(2).all(|w| w[0] < w[1]));
    debug_assert!(b.windows(2).all(|w| w[0] < w[1]));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => return true,
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    false
}

/// A paired visual/text dataset with labels.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub visual: FeatureMatrix<T>,
    pub text: FeatureMatrix<T>,
    pub labels: LabelSet,
}

impl<T: Real> Dataset<T> {
    pub fn new(visual: FeatureMatrix<T>, text: FeatureMatrix<T>, labels: LabelSet) -> Result<Self> {
        visual.validate_features()?;
        text.validate_features()?;
        if visual.cols() != text.cols() || visual.cols() != labels.count() {
            return Err(Error::Dimension(format!(
                "modalities disagree: visual N={}, text N={}, labels N={}",
                visual.cols(),
                text.cols(),
                labels.count()
            )));
        }
        Ok(Dataset {
            visual,
            text,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.visual.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Index lists defining query / database / training roles. Queries are held
/// out of the database; training is drawn from the database portion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub query_ids: Vec<usize>,
    pub database_ids: Vec<usize>,
    pub training_ids: Vec<usize>,
}

/// Samples a deterministic split: `n_query` uniform queries without
/// replacement, the remaining samples as database, and `n_train` uniform
/// training samples from the database portion.
pub fn split_dataset<T: Real>(
    d: &Dataset<T>,
    n_query: usize,
    n_train: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    let n = d.len();
    if n_query + 1 > n {
        return Err(Error::Config(format!(
            "n_query={n_query} leaves no database samples out of {n}"
        )));
    }
    if n_train > n - n_query {
        return Err(Error::Config(format!(
            "n_train={n_train} exceeds database size {}",
            n - n_query
        )));
    }
    let mut rng = rng_for(stage_seed(seed, "split/query"));
    let mut query_ids = sample_without_replacement(n, n_query, &mut rng);
    query_ids.sort_unstable();

    let mut is_query = vec![false; n];
    for &q in &query_ids {
        is_query[q] = true;
    }
    let database_ids: Vec<usize> = (0..n).filter(|&i| !is_query[i]).collect();

    let mut rng = rng_for(stage_seed(seed, "split/train"));
    let picks = sample_without_replacement(database_ids.len(), n_train, &mut rng);
    let mut training_ids: Vec<usize> = picks.into_iter().map(|i| database_ids[i]).collect();
    training_ids.sort_unstable();

    Ok(DatasetSplit {
        query_ids,
        database_ids,
        training_ids,
    })
}

/// Parameters of the synthetic multimodal generator.
#[derive(Debug, Clone)]
pub struct SynthParams {
    pub n_classes: usize,
    pub per_class: usize,
    pub d_x: usize,
    pub d_y: usize,
    /// Isotropic noise standard deviation applied to visual vectors. Text
    /// vectors receive a quarter of this noise, so the auxiliary modality
    /// stays cleaner than the visual one.
    pub noise: f64,
    /// Fraction of samples in [0, 1] whose text vector is drawn around the
    /// matching class centroid; exactly `⌊(1 − consistency)·N⌋` samples get
    /// a mismatched text centroid.
    pub cross_modal_consistency: f64,
    pub seed: u64,
}

/// Class centroids sit on the sphere of this radius in both modalities.
const CENTROID_RADIUS: f64 = 4.0;

/// Generates a labeled multimodal dataset around well-separated class
/// centroids. Deterministic per seed; the mismatch selection does not depend
/// on the noise level.
pub fn synthesize_dataset<T: Real>(p: &SynthParams) -> Result<Dataset<T>> {
    if p.n_classes == 0 || p.per_class == 0 || p.d_x == 0 || p.d_y == 0 {
        return Err(Error::Config("all synth counts must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p.cross_modal_consistency) {
        return Err(Error::Config(format!(
            "cross_modal_consistency {} outside [0, 1]",
            p.cross_modal_consistency
        )));
    }
    if p.noise < 0.0 {
        return Err(Error::Config(format!("noise {} must be >= 0", p.noise)));
    }
    let n = p.n_classes * p.per_class;

    let centroids_x =
        class_centroids::<T>(p.n_classes, p.d_x, stage_seed(p.seed, "synth/centroids-x"));
    let centroids_y =
        class_centroids::<T>(p.n_classes, p.d_y, stage_seed(p.seed, "synth/centroids-y"));

    // Mismatch draws come from their own stream so the selected set is
    // identical at every noise level.
    let n_mismatch = ((1.0 - p.cross_modal_consistency) * n as f64).floor() as usize;
    let mut rng = rng_for(stage_seed(p.seed, "synth/mismatch"));
    let mismatched = sample_without_replacement(n, n_mismatch, &mut rng);
    let mut text_class: Vec<usize> = (0..n).map(|i| i / p.per_class).collect();
    for &i in &mismatched {
        let own = i / p.per_class;
        if p.n_classes > 1 {
            let other = rng.random_range(0..p.n_classes - 1);
            text_class[i] = if other >= own { other + 1 } else { other };
        }
    }

    let mut rng = rng_for(stage_seed(p.seed, "synth/noise"));
    let sigma_x = real::<T>(p.noise);
    let sigma_y = real::<T>(p.noise / 4.0);
    let mut visual = Matrix::zeros(p.d_x, n);
    let mut text = Matrix::zeros(p.d_y, n);
    let mut sets = Vec::with_capacity(n);
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let class = i / p.per_class;
        {
            let noise = gaussian_vec::<T>(p.d_x, &mut rng);
            let col = visual.col_mut(i);
            for ((v, &c), g) in col.iter_mut().zip(centroids_x.col(class)).zip(noise) {
                *v = c + sigma_x * g;
            }
        }
        {
            let noise = gaussian_vec::<T>(p.d_y, &mut rng);
            let col = text.col_mut(i);
            for ((v, &c), g) in col
                .iter_mut()
                .zip(centroids_y.col(text_class[i]))
                .zip(noise)
            {
                *v = c + sigma_y * g;
            }
        }
        sets.push(vec![class as u32]);
    }
    Dataset::new(visual, text, LabelSet::new(sets)?)
}

/// Seeded centroids on the sphere of radius [`CENTROID_RADIUS`]. When the
/// class count fits the dimension the directions are mutually orthogonal
/// (pairwise distance `√2 · radius` exactly); otherwise each centroid is the
/// best of a batch of candidate draws under the max-min-distance rule.
fn class_centroids<T: Real>(n_classes: usize, dim: usize, seed: u64) -> Matrix<T> {
    let radius = real::<T>(CENTROID_RADIUS);
    if n_classes <= dim {
        let empty = Matrix::zeros(dim, 0);
        let mut m = crate::linalg::orthonormal_complement(&empty, None, n_classes, seed)
            .expect("n_classes <= dim directions always exist");
        m.scale(radius);
        return m;
    }
    let mut rng = rng_for(seed);
    let mut m = Matrix::zeros(dim, n_classes);
    for c in 0..n_classes {
        let mut best: Option<(T, Vec<T>)> = None;
        for _ in 0..64 {
            let mut cand = gaussian_vec::<T>(dim, &mut rng);
            let norm = cand
                .iter()
                .map(|&v| v * v)
                .fold(T::zero(), |a, b| a + b)
                .sqrt();
            if norm == T::zero() {
                continue;
            }
            for v in &mut cand {
                *v = *v / norm * radius;
            }
            let min_dist = (0..c)
                .map(|p| crate::matrix::sq_dist(&cand, m.col(p)))
                .fold(T::infinity(), |a, b| a.min(b));
            if best.as_ref().is_none_or(|(d, _)| min_dist > *d) {
                best = Some((min_dist, cand));
            }
        }
        m.col_mut(c)
            .copy_from_slice(&best.expect("candidate drawn").1);
    }
    m
}
