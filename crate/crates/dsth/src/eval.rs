//! Retrieval-quality metrics: average precision at a fixed depth, mAP, and
//! precision-scope curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{PackedCode, PackedCodeIndex};

/// Average precision over the top `depth` entries of a ranking:
/// `AP = (1/NR) Σ_{r=1..depth} Pre(r)·δ(r)` where `NR` is the number of
/// relevant items among the top `depth`, `Pre(r)` the precision of the top
/// `r`, and `δ(r)` flags a relevant item at rank `r`. Rankings shorter than
/// `depth` count as padded with non-relevant items; `NR = 0` scores 0.
pub fn average_precision(ranked: &[u64], is_relevant: impl Fn(u64) -> bool, depth: usize) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &id) in ranked.iter().take(depth).enumerate() {
        if is_relevant(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Result of a mAP evaluation.
#[derive(Debug, Clone)]
pub struct MeanApOutcome {
    /// Mean of the per-query average precisions (excluded queries omitted).
    pub map: f64,
    /// One AP per evaluated query, aligned with the query order after
    /// exclusions.
    pub per_query: Vec<(usize, f64)>,
    /// Positions of queries with no relevant item anywhere in the database;
    /// their AP is uninformative and they do not enter the mean.
    pub excluded: Vec<usize>,
}

/// Ranks every query via exact top-k search and averages per-query AP at
/// `depth`. The relevance oracle receives `(query position, database id)`.
/// `self_ids`, when given, lists one database id per query to drop from its
/// ranking (for workflows whose queries live inside the database).
pub fn mean_ap<F>(
    index: &PackedCodeIndex,
    queries: &[PackedCode],
    is_relevant: F,
    depth: usize,
    self_ids: Option<&[u64]>,
) -> Result<MeanApOutcome>
where
    F: Fn(usize, u64) -> bool,
{
    if queries.is_empty() {
        return Err(Error::Config("mean_ap needs at least one query".into()));
    }
    if let Some(ids) = self_ids {
        if ids.len() != queries.len() {
            return Err(Error::Dimension(format!(
                "{} self ids for {} queries",
                ids.len(),
                queries.len()
            )));
        }
    }
    let mut per_query = Vec::new();
    let mut excluded = Vec::new();
    for (q, code) in queries.iter().enumerate() {
        let own = self_ids.map(|ids| ids[q]);
        if !index
            .ids()
            .iter()
            .any(|&id| Some(id) != own && is_relevant(q, id))
        {
            excluded.push(q);
            continue;
        }
        let k = (depth + usize::from(own.is_some())).min(index.len());
        let ranked: Vec<u64> = index
            .search_topk(code, k)?
            .into_iter()
            .map(|(id, _)| id)
            .filter(|&id| Some(id) != own)
            .take(depth)
            .collect();
        per_query.push((
            q,
            average_precision(&ranked, |id| is_relevant(q, id), depth),
        ));
    }
    let map = if per_query.is_empty() {
        0.0
    } else {
        per_query.iter().map(|&(_, ap)| ap).sum::<f64>() / per_query.len() as f64
    };
    Ok(MeanApOutcome {
        map,
        per_query,
        excluded,
    })
}

/// Mean precision in the top `scope` results, per scope. Scopes must be
/// ascending and within the database size.
pub fn precision_scope_curve<F>(
    index: &PackedCodeIndex,
    queries: &[PackedCode],
    is_relevant: F,
    scopes: &[usize],
) -> Result<Vec<(usize, f64)>>
where
    F: Fn(usize, u64) -> bool,
{
    if queries.is_empty() {
        return Err(Error::Config(
            "precision-scope needs at least one query".into(),
        ));
    }
    if scopes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("scopes must be strictly ascending".into()));
    }
    if let Some(&worst) = scopes.last() {
        if worst > index.len() {
            return Err(Error::Config(format!(
                "scope {worst} exceeds database size {}",
                index.len()
            )));
        }
    }
    let deepest = scopes.last().copied().unwrap_or(0);
    let mut sums = vec![0.0f64; scopes.len()];
    for (q, code) in queries.iter().enumerate() {
        let ranked = index.search_topk(code, deepest)?;
        let mut hits = 0usize;
        let mut scope_iter = scopes.iter().enumerate();
        let mut current = scope_iter.next();
        for (rank, &(id, _)) in ranked.iter().enumerate() {
            if is_relevant(q, id) {
                hits += 1;
            }
            while let Some((si, &scope)) = current {
                if rank + 1 == scope {
                    sums[si] += hits as f64 / scope as f64;
                    current = scope_iter.next();
                } else {
                    break;
                }
            }
        }
    }
    Ok(scopes
        .iter()
        .zip(sums)
        .map(|(&s, total)| (s, total / queries.len() as f64))
        .collect())
}

/// Full evaluation report, serialized as JSON and CSV by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub code_length: usize,
    pub retrieval_depth: usize,
    pub map: f64,
    pub per_query_ap: Vec<PerQueryAp>,
    pub excluded_queries: Vec<usize>,
    pub precision_scope: Vec<ScopePoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerQueryAp {
    pub query: usize,
    pub ap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScopePoint {
    pub scope: usize,
    pub precision: f64,
}

impl EvalReport {
    /// One row per query AP.
    pub fn per_query_csv(&self) -> String {
        let mut out = String::from("query,ap\n");
        for p in &self.per_query_ap {
            out.push_str(&format!("{},{}\n", p.query, p.ap));
        }
        out
    }

    /// One row per scope point.
    pub fn precision_scope_csv(&self) -> String {
        let mut out = String::from("scope,precision\n");
        for p in &self.precision_scope {
            out.push_str(&format!("{},{}\n", p.scope, p.precision));
        }
        out
    }
}
