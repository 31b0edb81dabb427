//! Anchor-based low-rank approximation of the visual similarity graph.
//!
//! `K` anchors come from k-means. Each sample gets a sparse non-negative
//! affinity row over its `s` nearest anchors (Gaussian kernel, normalized to
//! sum 1), giving the data-to-anchor matrix `V` (N×K) and the degree diagonal
//! `Λ = diag(Vᵀ1)`. The implied affinity is `S = V Λ⁻¹ Vᵀ`, whose row sums
//! are exactly 1, so the graph Laplacian is `I − S` and products against it
//! never materialize an N×N matrix.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Cursor;
use crate::matrix::{sq_dist, Matrix};
use crate::rng::{rng_for, stage_seed};
use crate::scalar::{real, Real};

const DSPA_MAGIC: &[u8; 4] = b"DSPA";

/// K-means cluster centers.
#[derive(Debug, Clone)]
pub struct AnchorSet<T> {
    /// One anchor per column (`d_x × K`).
    pub anchors: Matrix<T>,
    /// Final clustering objective (sum of squared distances to assigned centers).
    pub distortion: T,
}

impl<T: Real> AnchorSet<T> {
    pub fn k(&self) -> usize {
        self.anchors.cols()
    }
}

/// Sparse N×K data-to-anchor affinity; row `n` holds the non-negative
/// weights of sample `n` over at most `s` anchors, summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseEmbedding<T> {
    n_cols: usize,
    rows: Vec<Vec<(u32, T)>>,
}

impl<T: Real> SparseEmbedding<T> {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, n: usize) -> &[(u32, T)] {
        &self.rows[n]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Column sums `Vᵀ1` (length K).
    pub fn col_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.n_cols];
        for row in &self.rows {
            for &(k, w) in row {
                sums[k as usize] += w;
            }
        }
        sums
    }

    /// Dense N×K assembly, for oracles and small-scale checks.
    pub fn to_dense(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n_rows(), self.n_cols);
        for (n, row) in self.rows.iter().enumerate() {
            for &(k, w) in row {
                m.set(n, k as usize, w);
            }
        }
        m
    }
}

/// Anchors plus the sparse embedding and degree diagonal: everything needed
/// to multiply by the implicit graph Laplacian.
#[derive(Debug, Clone)]
pub struct AnchorModel<T> {
    pub anchor_set: AnchorSet<T>,
    pub embedding: SparseEmbedding<T>,
    /// Diagonal of `Λ = diag(Vᵀ1)`; strictly positive.
    pub degree: Vec<T>,
    pub s: usize,
    pub sigma: T,
    /// Seed the model was built with (recorded for reproducibility).
    pub seed: u64,
}

/// Lloyd's algorithm with k-means++ seeding. Deterministic per seed; empty
/// clusters are re-seeded to the point currently farthest from its center.
pub fn kmeans<T: Real>(
    x: &Matrix<T>,
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<AnchorSet<T>> {
    let (set, _trace) = kmeans_with_trace(x, k, max_iter, seed)?;
    Ok(set)
}

pub(crate) fn kmeans_with_trace<T: Real>(
    x: &Matrix<T>,
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<(AnchorSet<T>, Vec<T>)> {
    let n = x.cols();
    let d = x.rows();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k={k} must be in 1..={n}")));
    }
    let mut rng = rng_for(seed);

    // k-means++ seeding.
    let mut centers = Matrix::zeros(d, k);
    let first = rand::Rng::random_range(&mut rng, 0..n);
    centers.col_mut(0).copy_from_slice(x.col(first));
    let mut best_d2: Vec<T> = (0..n).map(|i| sq_dist(x.col(i), centers.col(0))).collect();
    for c in 1..k {
        let total: f64 = best_d2.iter().map(|v| v.to_f64_lossy()).sum();
        let pick = if total > 0.0 {
            let mut target = rand::Rng::random_range(&mut rng, 0.0..total);
            let mut chosen = n - 1;
            for (i, v) in best_d2.iter().enumerate() {
                target -= v.to_f64_lossy();
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rand::Rng::random_range(&mut rng, 0..n)
        };
        centers.col_mut(c).copy_from_slice(x.col(pick));
        for (i, b) in best_d2.iter_mut().enumerate() {
            let d2 = sq_dist(x.col(i), centers.col(c));
            if d2 < *b {
                *b = d2;
            }
        }
    }

    let mut assignment = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut distortion = T::zero();
    for _ in 0..max_iter.max(1) {
        // Assignment step; ties go to the lower center index.
        let mut changed = false;
        distortion = T::zero();
        for (i, slot) in assignment.iter_mut().enumerate() {
            let mut best = T::infinity();
            let mut arg = 0;
            for c in 0..k {
                let d2 = sq_dist(x.col(i), centers.col(c));
                if d2 < best {
                    best = d2;
                    arg = c;
                }
            }
            if *slot != arg {
                *slot = arg;
                changed = true;
            }
            distortion += best;
        }
        trace.push(distortion);
        if !changed {
            break;
        }

        // Update step.
        let mut sums: Matrix<T> = Matrix::zeros(d, k);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            let col = x.col(i);
            for (srow, &v) in sums.col_mut(c).iter_mut().zip(col) {
                *srow += v;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = T::one() / real::<T>(count as f64);
                let sum_col = sums.col(c).to_vec();
                for (dst, s) in centers.col_mut(c).iter_mut().zip(sum_col) {
                    *dst = s * inv;
                }
            }
        }
        // Re-seed empty clusters to the farthest point from its center.
        let mut taken = vec![false; n];
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                continue;
            }
            let mut far = T::neg_infinity();
            let mut arg = 0;
            for i in 0..n {
                if taken[i] {
                    continue;
                }
                let d2 = sq_dist(x.col(i), centers.col(assignment[i]));
                if d2 > far {
                    far = d2;
                    arg = i;
                }
            }
            centers.col_mut(c).copy_from_slice(x.col(arg));
            taken[arg] = true;
        }
    }

    Ok((
        AnchorSet {
            anchors: centers,
            distortion,
        },
        trace,
    ))
}

/// Mean squared distance from each sample to its `s`-th nearest anchor.
/// Falls back to 1 when every sample coincides with an anchor.
pub fn estimate_bandwidth<T: Real>(x: &Matrix<T>, anchors: &AnchorSet<T>, s: usize) -> T {
    assert!(s >= 1 && s <= anchors.k(), "s must be in 1..=K");
    let n = x.cols();
    let mut total = T::zero();
    let mut d2 = vec![T::zero(); anchors.k()];
    for i in 0..n {
        for (c, v) in d2.iter_mut().enumerate() {
            *v = sq_dist(x.col(i), anchors.anchors.col(c));
        }
        let mut sorted = d2.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        total += sorted[s - 1];
    }
    let mean = total / real::<T>(n as f64);
    if mean > T::zero() {
        mean
    } else {
        T::one()
    }
}

/// Gaussian-kernel affinity of one vector to its `s` nearest anchors,
/// normalized to sum 1. Ties at the `s`-th distance break toward the lower
/// anchor index. Entries are returned sorted by anchor index.
pub fn anchor_embedding<T: Real>(
    v: &[T],
    anchors: &Matrix<T>,
    s: usize,
    sigma: T,
) -> Vec<(u32, T)> {
    assert!(sigma > T::zero(), "sigma must be positive");
    let k = anchors.cols();
    assert!(s >= 1 && s <= k, "s must be in 1..=K");
    let mut dists: Vec<(T, u32)> = (0..k)
        .map(|c| (sq_dist(v, anchors.col(c)), c as u32))
        .collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists.truncate(s);
    embed_over_support(&dists, sigma)
}

/// Normalized kernel weights over a fixed support of (squared distance,
/// anchor) pairs sorted by distance.
fn embed_over_support<T: Real>(support: &[(T, u32)], sigma: T) -> Vec<(u32, T)> {
    // Shift by the smallest distance so the nearest anchor's weight is
    // exp(0) = 1; the normalized result is unchanged and the row cannot
    // underflow to all zeros.
    let dmin = support[0].0;
    let mut entries: Vec<(u32, T)> = support
        .iter()
        .map(|&(d2, k)| (k, ((dmin - d2) / sigma).exp()))
        .collect();
    let sum: T = entries
        .iter()
        .map(|&(_, w)| w)
        .fold(T::zero(), |a, b| a + b);
    if !(sum > T::zero()) || !sum.is_finite() {
        return vec![(support[0].1, T::one())];
    }
    entries.retain(|&(_, w)| w > T::zero());
    for e in &mut entries {
        e.1 /= sum;
    }
    entries.sort_by_key(|&(k, _)| k);
    entries
}

/// Runs k-means, estimates the bandwidth when absent, embeds all samples,
/// and computes the degree diagonal. Anchors left with zero degree are given
/// support by re-assigning their nearest sample's row.
pub fn build_anchor_model<T: Real>(
    x: &Matrix<T>,
    k: usize,
    s: usize,
    sigma: Option<T>,
    max_iter: usize,
    seed: u64,
) -> Result<AnchorModel<T>> {
    if s == 0 || s > k {
        return Err(Error::Config(format!("s={s} must be in 1..=k={k}")));
    }
    let anchor_set = kmeans(x, k, max_iter, stage_seed(seed, "anchors/kmeans"))?;
    let sigma = match sigma {
        Some(v) => {
            if !(v > T::zero()) {
                return Err(Error::Config("sigma must be positive".into()));
            }
            v
        }
        None => estimate_bandwidth(x, &anchor_set, s),
    };

    let n = x.cols();
    let mut rows: Vec<Vec<(u32, T)>> = (0..n)
        .map(|i| anchor_embedding(x.col(i), &anchor_set.anchors, s, sigma))
        .collect();

    // Give empty anchors support: force each into its nearest sample's row,
    // evicting that row's weakest anchor. An eviction can empty another
    // anchor, so iterate; anchors still empty once the passes stop making
    // progress (duplicated centers on degenerate data) are dropped from the
    // model.
    let degrees = |rows: &[Vec<(u32, T)>]| {
        let mut degree = vec![T::zero(); k];
        for row in rows {
            for &(a, w) in row {
                degree[a as usize] += w;
            }
        }
        degree
    };
    let mut last_empty: Vec<usize> = Vec::new();
    for pass in 0..k {
        let degree = degrees(&rows);
        let empty: Vec<usize> = (0..k).filter(|&a| !(degree[a] > T::zero())).collect();
        if empty.is_empty() {
            let embedding = SparseEmbedding { n_cols: k, rows };
            return Ok(AnchorModel {
                anchor_set,
                embedding,
                degree,
                s,
                sigma,
                seed,
            });
        }
        if pass > 0 && empty == last_empty {
            break;
        }
        for &a in &empty {
            let nearest = (0..n)
                .min_by(|&i, &j| {
                    sq_dist(x.col(i), anchor_set.anchors.col(a))
                        .partial_cmp(&sq_dist(x.col(j), anchor_set.anchors.col(a)))
                        .unwrap()
                })
                .expect("non-empty dataset");
            let mut support: Vec<(T, u32)> = rows[nearest]
                .iter()
                .map(|&(idx, _)| {
                    (
                        sq_dist(x.col(nearest), anchor_set.anchors.col(idx as usize)),
                        idx,
                    )
                })
                .collect();
            support.sort_by(|p, q| p.partial_cmp(q).unwrap());
            if support.len() == s {
                support.pop();
            }
            support.push((sq_dist(x.col(nearest), anchor_set.anchors.col(a)), a as u32));
            support.sort_by(|p, q| p.partial_cmp(q).unwrap());
            rows[nearest] = embed_over_support(&support, sigma);
        }
        last_empty = empty;
    }

    // Drop the unsupported anchors and compact the index space.
    let degree = degrees(&rows);
    let keep: Vec<usize> = (0..k).filter(|&a| degree[a] > T::zero()).collect();
    if keep.is_empty() {
        return Err(Error::Numerical("no anchor received any support".into()));
    }
    let mut remap = vec![u32::MAX; k];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new as u32;
    }
    let rows: Vec<Vec<(u32, T)>> = rows
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(a, w)| (remap[a as usize], w))
                .collect()
        })
        .collect();
    let anchor_set = AnchorSet {
        anchors: anchor_set.anchors.select_cols(&keep),
        distortion: anchor_set.distortion,
    };
    let embedding = SparseEmbedding {
        n_cols: keep.len(),
        rows,
    };
    let degree = embedding.col_sums();
    let s = s.min(keep.len());
    Ok(AnchorModel {
        anchor_set,
        embedding,
        degree,
        s,
        sigma,
        seed,
    })
}

impl<T: Real> AnchorModel<T> {
    pub fn k(&self) -> usize {
        self.anchor_set.k()
    }

    pub fn n(&self) -> usize {
        self.embedding.n_rows()
    }

    /// Embeds an arbitrary vector with this model's parameters.
    pub fn embed(&self, v: &[T]) -> Vec<(u32, T)> {
        anchor_embedding(v, &self.anchor_set.anchors, self.s, self.sigma)
    }

    /// `m · (I − V Λ⁻¹ Vᵀ)` without forming the N×N Laplacian: computed as
    /// `m − ((m·V)·Λ⁻¹)·Vᵀ` in O(L·N·s + L·K) extra work.
    pub fn apply_laplacian(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.n();
        if m.cols() != n {
            return Err(Error::Dimension(format!(
                "matrix has {} columns, anchor model covers {n} samples",
                m.cols()
            )));
        }
        let l = m.rows();
        let k = self.k();
        // t = m · V  (L×K)
        let mut t = Matrix::zeros(l, k);
        for col in 0..n {
            let mcol = m.col(col);
            for &(a, w) in self.embedding.row(col) {
                let tcol = t.col_mut(a as usize);
                for (acc, &v) in tcol.iter_mut().zip(mcol) {
                    *acc += w * v;
                }
            }
        }
        // t ← t · Λ⁻¹
        for a in 0..k {
            let inv = T::one() / self.degree[a];
            for v in t.col_mut(a) {
                *v *= inv;
            }
        }
        // out = m − t · Vᵀ
        let mut out = m.clone();
        for col in 0..n {
            for &(a, w) in self.embedding.row(col) {
                let tcol = t.col(a as usize).to_vec();
                let ocol = out.col_mut(col);
                for (o, v) in ocol.iter_mut().zip(tcol) {
                    *o -= w * v;
                }
            }
        }
        Ok(out)
    }

    /// Dense `S = V Λ⁻¹ Vᵀ` (N×N); strictly a small-scale oracle.
    pub fn dense_affinity(&self) -> Matrix<T> {
        let v = self.embedding.to_dense();
        let mut scaled = v.clone();
        for a in 0..self.k() {
            let inv = T::one() / self.degree[a];
            for r in 0..scaled.rows() {
                let val = scaled.at(r, a) * inv;
                scaled.set(r, a, val);
            }
        }
        scaled.mul_transpose(&v)
    }

    /// Checks the model invariants (row stochasticity, positive degrees).
    pub fn validate(&self) -> Result<()> {
        let tol = real::<T>(1e-10).max(T::epsilon() * real::<T>(64.0));
        for n in 0..self.n() {
            let row = self.embedding.row(n);
            if row.len() > self.s {
                return Err(Error::Numerical(format!(
                    "row {n} has {} > s nonzeros",
                    row.len()
                )));
            }
            let sum: T = row.iter().map(|&(_, w)| w).fold(T::zero(), |a, b| a + b);
            if (sum - T::one()).abs() > tol {
                return Err(Error::Numerical(format!("row {n} sums to {sum}, not 1")));
            }
            if row.iter().any(|&(_, w)| w < T::zero()) {
                return Err(Error::Numerical(format!("row {n} has a negative weight")));
            }
        }
        if self.degree.iter().any(|&d| !(d > T::zero())) {
            return Err(Error::Numerical("zero-degree anchor".into()));
        }
        Ok(())
    }

    /// Persists anchors (`DMAT`), embedding (`DSPA`), degree (`DMAT`, 1×K)
    /// and a JSON sidecar into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        crate::io::write_matrix(&self.anchor_set.anchors, dir.join("anchors.dmat"))?;
        let degree = Matrix::from_row_major(1, self.k(), &self.degree);
        crate::io::write_matrix(&degree, dir.join("degree.dmat"))?;
        write_sparse(&self.embedding, dir.join("embedding.dspa"))?;
        let sidecar = AnchorSidecar {
            k: self.k(),
            s: self.s,
            sigma: self.sigma.to_f64_lossy(),
            seed: self.seed,
        };
        fs::write(
            dir.join("anchor_meta.json"),
            serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
        )?;
        Ok(())
    }

    /// Loads a model persisted by [`AnchorModel::save`]. Stored weights are
    /// float32; rows are re-normalized on load so the row-stochastic
    /// invariant holds exactly again, and degrees are recomputed to match.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let anchors: Matrix<T> = crate::io::read_matrix(dir.join("anchors.dmat"))?;
        let degree_m: Matrix<T> = crate::io::read_matrix(dir.join("degree.dmat"))?;
        let mut embedding = read_sparse::<T>(dir.join("embedding.dspa"))?;
        let sidecar: AnchorSidecar =
            serde_json::from_str(&fs::read_to_string(dir.join("anchor_meta.json"))?)
                .map_err(|e| Error::Config(format!("anchor sidecar: {e}")))?;
        if anchors.cols() != sidecar.k
            || embedding.n_cols() != sidecar.k
            || degree_m.cols() != sidecar.k
        {
            return Err(Error::Dimension("anchor artifacts disagree on K".into()));
        }
        for row in &mut embedding.rows {
            let sum: T = row.iter().map(|&(_, w)| w).fold(T::zero(), |a, b| a + b);
            if !(sum > T::zero()) {
                return Err(Error::Numerical("stored embedding row sums to zero".into()));
            }
            for e in row.iter_mut() {
                e.1 /= sum;
            }
        }
        let degree = embedding.col_sums();
        if degree.iter().any(|&d| !(d > T::zero())) {
            return Err(Error::Numerical(
                "stored model has a zero-degree anchor".into(),
            ));
        }
        Ok(AnchorModel {
            anchor_set: AnchorSet {
                anchors,
                distortion: T::zero(),
            },
            embedding,
            degree,
            s: sidecar.s,
            sigma: real::<T>(sidecar.sigma),
            seed: sidecar.seed,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AnchorSidecar {
    k: usize,
    s: usize,
    sigma: f64,
    seed: u64,
}

/// `DSPA` sparse-triplet file: magic, `u32` N, `u32` K, `u64` nnz, then
/// `(u32 row, u32 col, f32 value)` triplets sorted row-major.
fn write_sparse<T: Real>(e: &SparseEmbedding<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + 12 * e.nnz());
    buf.extend_from_slice(DSPA_MAGIC);
    buf.extend_from_slice(&(e.n_rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(e.n_cols() as u32).to_le_bytes());
    buf.extend_from_slice(&(e.nnz() as u64).to_le_bytes());
    for (n, row) in e.rows.iter().enumerate() {
        for &(k, w) in row {
            buf.extend_from_slice(&(n as u32).to_le_bytes());
            buf.extend_from_slice(&k.to_le_bytes());
            buf.extend_from_slice(&(w.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    fs::write(path.as_ref(), buf)?;
    Ok(())
}

fn read_sparse<T: Real>(path: impl AsRef<Path>) -> Result<SparseEmbedding<T>> {
    let buf = fs::read(path.as_ref())?;
    let mut cur = Cursor::new(&buf);
    cur.magic(DSPA_MAGIC)?;
    let n = cur.u32("rows")? as usize;
    let k = cur.u32("cols")? as usize;
    let nnz = cur.u64("nnz")?;
    let mut rows: Vec<Vec<(u32, T)>> = vec![Vec::new(); n];
    let mut last = None;
    for i in 0..nnz {
        let off = cur.offset();
        let r = cur.u32("triplet row")?;
        let c = cur.u32("triplet col")?;
        let w = cur.f32("triplet value")?;
        if r as usize >= n || c as usize >= k {
            return Err(Error::format(
                off,
                format!("triplet {i} out of bounds ({r},{c})"),
            ));
        }
        if !w.is_finite() {
            return Err(Error::format(off, format!("non-finite triplet value {w}")));
        }
        if let Some(prev) = last {
            if (r, c) <= prev {
                return Err(Error::format(
                    off,
                    "triplets not sorted row-major".to_string(),
                ));
            }
        }
        last = Some((r, c));
        rows[r as usize].push((c, real::<T>(w as f64)));
    }
    cur.finish()?;
    Ok(SparseEmbedding { n_cols: k, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_matrix;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn kmeans_with_k_equal_n_fits_points_exactly() {
        let mut rng = rng_for(2);
        let x: Matrix<f64> = gaussian_matrix(3, 6, &mut rng);
        let set = kmeans(&x, 6, 50, 4).unwrap();
        assert_close(set.distortion, 0.0, 1e-24);
        for i in 0..6 {
            let hit = (0..6).any(|c| sq_dist(x.col(i), set.anchors.col(c)) == 0.0);
            assert!(hit, "point {i} is not an anchor");
        }
    }

    #[test]
    fn kmeans_one_dimensional_matches_exhaustive_partition() {
        let x = Matrix::from_row_major(1, 4, &[0.0, 1.0, 10.0, 11.0]);
        // Oracle: enumerate every assignment of 4 points to 2 non-empty
        // clusters and keep the best mean-based distortion.
        let mut best = f64::INFINITY;
        let mut best_centers = (0.0, 0.0);
        for mask in 1u32..(1 << 4) - 1 {
            let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0, 0.0, 0);
            for i in 0..4 {
                let v = x.at(0, i);
                if mask & (1 << i) != 0 {
                    s0 += v;
                    n0 += 1;
                } else {
                    s1 += v;
                    n1 += 1;
                }
            }
            let (m0, m1) = (s0 / n0 as f64, s1 / n1 as f64);
            let cost: f64 = (0..4)
                .map(|i| {
                    let v = x.at(0, i);
                    let c = if mask & (1 << i) != 0 { m0 } else { m1 };
                    (v - c) * (v - c)
                })
                .sum();
            if cost < best {
                best = cost;
                best_centers = (m0.min(m1), m0.max(m1));
            }
        }
        assert_close(best_centers.0, 0.5, 1e-12);
        assert_close(best_centers.1, 10.5, 1e-12);

        for seed in 0..5 {
            let set = kmeans(&x, 2, 50, seed).unwrap();
            assert_close(set.distortion, best, 1e-12);
            let mut centers = [set.anchors.at(0, 0), set.anchors.at(0, 1)];
            centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_close(centers[0], 0.5, 1e-12);
            assert_close(centers[1], 10.5, 1e-12);
        }
    }

    #[test]
    fn kmeans_distortion_trace_is_non_increasing() {
        let mut rng = rng_for(8);
        let x: Matrix<f64> = gaussian_matrix(4, 60, &mut rng);
        let (_, trace) = kmeans_with_trace(&x, 5, 40, 9).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn bandwidth_examples() {
        // Every sample equals an anchor, s = 1 → fallback 1.
        let x = Matrix::from_row_major(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        let set = kmeans(&x, 2, 10, 0).unwrap();
        assert_close(estimate_bandwidth(&x, &set, 1), 1.0, 0.0);

        // Single sample at distance d from the sole anchor → d².
        let x = Matrix::from_row_major(2, 1, &[3.0, 4.0]);
        let set = AnchorSet {
            anchors: Matrix::from_row_major(2, 1, &[0.0, 0.0]),
            distortion: 0.0,
        };
        assert_close(estimate_bandwidth(&x, &set, 1), 25.0, 1e-12);
    }

    #[test]
    fn bandwidth_matches_brute_force() {
        let mut rng = rng_for(5);
        let x: Matrix<f64> = gaussian_matrix(2, 30, &mut rng);
        let set = kmeans(&x, 6, 30, 6).unwrap();
        let s = 3;
        let got = estimate_bandwidth(&x, &set, s);
        let mut expect = 0.0;
        for i in 0..30 {
            let mut ds: Vec<f64> = (0..6)
                .map(|c| sq_dist(x.col(i), set.anchors.col(c)))
                .collect();
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            expect += ds[s - 1];
        }
        expect /= 30.0;
        assert_close(got, expect, 1e-12);
    }

    #[test]
    fn embedding_is_one_hot_on_an_anchor() {
        let anchors = Matrix::from_row_major(2, 3, &[0.0, 1.0, 2.0, 0.0, 0.0, 0.0]);
        let row = anchor_embedding(&[0.0, 0.0], &anchors, 1, 1.0);
        assert_eq!(row, vec![(0, 1.0)]);
    }

    #[test]
    fn embedding_splits_evenly_when_equidistant() {
        let anchors = Matrix::from_row_major(1, 3, &[-1.0, 1.0, 5.0]);
        let row = anchor_embedding(&[0.0], &anchors, 2, 1.0);
        assert_eq!(row.len(), 2);
        assert_close(row[0].1, 0.5, 1e-15);
        assert_close(row[1].1, 0.5, 1e-15);
    }

    #[test]
    fn embedding_matches_independent_formula() {
        // Distances 1 and 2 to the two kept anchors with σ = 1: the first
        // weight reduces to the logistic value 1 / (1 + e^{1² − 2²}).
        let anchors = Matrix::from_row_major(1, 2, &[1.0, 2.0]);
        let row = anchor_embedding(&[0.0], &anchors, 2, 1.0);
        let expect = 1.0 / (1.0 + (-3.0f64).exp());
        assert_close(row[0].1, expect, 1e-15);
        assert_close(row[1].1, 1.0 - expect, 1e-15);
        assert_close(row[0].1, 0.9526, 1e-4);
        assert_close(row[1].1, 0.0474, 1e-4);
    }

    #[test]
    fn embedding_tie_at_sth_distance_prefers_lower_index() {
        // Anchors at ±1 and a duplicate of +1; the duplicate (index 2) must
        // lose the tie against index 1.
        let anchors = Matrix::from_row_major(1, 3, &[-1.0, 1.0, 1.0]);
        let row = anchor_embedding(&[0.0], &anchors, 2, 1.0);
        let kept: Vec<u32> = row.iter().map(|&(k, _)| k).collect();
        assert_eq!(kept, vec![0, 1]);
    }

    #[test]
    fn self_anchoring_yields_permutation_embedding() {
        let mut rng = rng_for(21);
        let x: Matrix<f64> = gaussian_matrix(3, 8, &mut rng);
        let model = build_anchor_model(&x, 8, 1, None, 50, 13).unwrap();
        model.validate().unwrap();
        for n in 0..8 {
            assert_eq!(model.embedding.row(n).len(), 1);
            assert_close(model.embedding.row(n)[0].1, 1.0, 1e-12);
        }
        for &d in &model.degree {
            assert_close(d, 1.0, 1e-12);
        }
    }

    #[test]
    fn affinity_row_sums_are_one() {
        let mut rng = rng_for(31);
        let x: Matrix<f64> = gaussian_matrix(4, 40, &mut rng);
        let model = build_anchor_model(&x, 8, 3, None, 50, 17).unwrap();
        model.validate().unwrap();
        let dense = model.dense_affinity();
        for s in dense.row_sums() {
            assert_close(s, 1.0, 1e-8);
        }
    }

    #[test]
    fn apply_laplacian_matches_dense_assembly() {
        let mut rng = rng_for(41);
        let x: Matrix<f64> = gaussian_matrix(3, 20, &mut rng);
        let model = build_anchor_model(&x, 4, 2, None, 50, 19).unwrap();
        let m: Matrix<f64> = gaussian_matrix(4, 20, &mut rng);

        let fast = model.apply_laplacian(&m).unwrap();
        let dense = model.dense_affinity();
        let slow = m.sub(&m.mul(&dense));
        let rel = fast.sub(&slow).frob_norm() / slow.frob_norm().max(1.0);
        assert!(rel < 1e-8, "relative error {rel}");

        // Zero maps to zero; a constant row maps to (numerical) zero.
        let zero = Matrix::<f64>::zeros(2, 20);
        assert_eq!(model.apply_laplacian(&zero).unwrap().frob_norm(), 0.0);
        let ones = Matrix::from_fn(1, 20, |_, _| 1.0);
        assert!(model.apply_laplacian(&ones).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn graph_energy_is_non_negative() {
        let mut rng = rng_for(51);
        let x: Matrix<f64> = gaussian_matrix(3, 30, &mut rng);
        let model = build_anchor_model(&x, 6, 3, None, 50, 23).unwrap();
        for seed in 0..10 {
            let mut rng = rng_for(seed);
            let z: Matrix<f64> = gaussian_matrix(4, 30, &mut rng);
            let energy = z.frob_dot(&model.apply_laplacian(&z).unwrap());
            assert!(energy >= -1e-8 * z.frob_norm().powi(2), "energy {energy}");
        }
    }

    #[test]
    fn model_round_trips_through_disk() {
        let mut rng = rng_for(61);
        let x: Matrix<f64> = gaussian_matrix(3, 25, &mut rng);
        let model = build_anchor_model(&x, 5, 2, None, 50, 29).unwrap();
        let dir = std::env::temp_dir().join(format!("dsth-anchor-{}", std::process::id()));
        model.save(&dir).unwrap();
        let back: AnchorModel<f64> = AnchorModel::load(&dir).unwrap();
        assert_eq!(back.s, model.s);
        assert_eq!(back.seed, model.seed);
        assert_eq!(back.embedding.nnz(), model.embedding.nnz());
        // f32 storage: embeddings agree to f32 precision.
        for n in 0..model.n() {
            for (&(ka, wa), &(kb, wb)) in model.embedding.row(n).iter().zip(back.embedding.row(n)) {
                assert_eq!(ka, kb);
                assert_close(wa, wb, 1e-6);
            }
        }
    }
}
