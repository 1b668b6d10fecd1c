//! Ground truth, recall, latency percentiles, and the hierarchical-vs-flat
//! sweep harness.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flat::FlatIndex;
use crate::hnsw::{BuildParams, HnswIndex};
use crate::search::Candidate;
use crate::stats::percentile_sorted;
use crate::vecstore::io::IdMatrix;
use crate::vecstore::{QueryDist, VectorSet};

/// Exact nearest neighbors per query: ordered ids and ascending distances.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub k: usize,
    pub ids: Vec<Vec<u32>>,
    /// Ascending distances; empty when loaded from an id-only file.
    pub dists: Vec<Vec<f32>>,
}

impl GroundTruth {
    /// Adopts ids loaded from an ivecs file.
    pub fn from_id_matrix(m: &IdMatrix) -> Result<Self> {
        let mut ids = Vec::with_capacity(m.rows);
        for r in 0..m.rows {
            let row: Result<Vec<u32>> = m
                .row(r)
                .iter()
                .map(|&v| {
                    u32::try_from(v)
                        .map_err(|_| Error::Malformed(format!("negative id {v} in ground truth")))
                })
                .collect();
            ids.push(row?);
        }
        Ok(Self {
            k: m.cols,
            ids,
            dists: Vec::new(),
        })
    }
}

/// Exact top-k by full scan under the dataset's metric, ties broken by
/// ascending id. Parallel over queries.
pub fn brute_force_knn(dataset: &VectorSet, queries: &VectorSet, k: usize) -> Result<GroundTruth> {
    if dataset.dim() != queries.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: queries.dim(),
        });
    }
    if k > dataset.count() {
        return Err(Error::KTooLarge {
            k,
            limit: dataset.count(),
        });
    }
    let per_query: Result<Vec<(Vec<u32>, Vec<f32>)>> = (0..queries.count())
        .into_par_iter()
        .map(|qi| {
            let qd = QueryDist::new(dataset, queries.vector(qi))?;
            let mut heap: std::collections::BinaryHeap<Candidate> =
                std::collections::BinaryHeap::with_capacity(k + 1);
            for id in 0..dataset.count() as u32 {
                let c = Candidate {
                    node: id,
                    dist: qd.dist(id),
                };
                if heap.len() < k {
                    heap.push(c);
                } else if c < *heap.peek().expect("non-empty heap") {
                    heap.push(c);
                    heap.pop();
                }
            }
            let mut sorted = heap.into_vec();
            sorted.sort_unstable();
            Ok((
                sorted.iter().map(|c| c.node).collect(),
                sorted.iter().map(|c| c.dist).collect(),
            ))
        })
        .collect();
    let per_query = per_query?;
    Ok(GroundTruth {
        k,
        ids: per_query.iter().map(|(ids, _)| ids.clone()).collect(),
        dists: per_query.into_iter().map(|(_, d)| d).collect(),
    })
}

/// Recall@k: `|O intersect G| / k` with set semantics.
pub fn recall_at_k(result: &[u32], truth: &[u32], k: usize) -> f64 {
    debug_assert!(result.len() <= k);
    debug_assert_eq!(truth.len(), k);
    let truth_set: std::collections::HashSet<u32> = truth.iter().copied().collect();
    let hits = result.iter().filter(|id| truth_set.contains(id)).count();
    hits as f64 / k as f64
}

/// Nearest-rank latency percentile: `sorted[ceil(p/100 * N)]` (1-indexed),
/// with p = 0 mapping to the minimum.
pub fn percentile(samples: &[Duration], p: f64) -> Result<Duration> {
    let mut sorted: Vec<Duration> = samples.to_vec();
    sorted.sort_unstable();
    percentile_sorted(&sorted, p)
}

/// Which index types a sweep covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexChoice {
    Hier,
    Flat,
    Both,
}

impl IndexChoice {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "hier" => Ok(IndexChoice::Hier),
            "flat" => Ok(IndexChoice::Flat),
            "both" => Ok(IndexChoice::Both),
            other => Err(Error::InvalidParameter(format!(
                "unknown index type {other:?} (expected hier, flat, or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub dataset: String,
    pub ef_grid: Vec<usize>,
    pub k: usize,
    pub params: BuildParams,
    pub index_types: IndexChoice,
    /// Timed repetitions of the query loop; recall and work counts come from
    /// a separate instrumented pass.
    pub repetitions: usize,
}

/// One measured point of a sweep. The CSV columns mirror these fields.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub dataset: String,
    pub index_type: String,
    pub ef_search: usize,
    pub k: usize,
    pub recall: f64,
    pub p50_us: u64,
    pub p99_us: u64,
    pub mean_dist_comps: f64,
    pub build_s: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepOutput {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

/// Builds the requested index types from the same data and parameters and
/// sweeps the ef grid.
///
/// With `Both`, the flat index is the hierarchical index's base layer, so
/// the two searches differ only in the hierarchy: that isolates the ablation
/// the harness exists to measure. A standalone `Flat` run constructs the
/// graph directly.
///
/// Work is measured twice: wall-clock latency in a single-threaded timed
/// loop, and distance computations in a separate instrumented pass (parallel
/// over queries, excluded from timing).
pub fn run_sweep(
    data: VectorSet,
    queries: &VectorSet,
    ground_truth: Option<GroundTruth>,
    config: &SweepConfig,
) -> Result<SweepOutput> {
    if config.ef_grid.is_empty() {
        return Err(Error::InvalidParameter("empty ef grid".into()));
    }
    let gt = match ground_truth {
        Some(gt) => gt,
        None => brute_force_knn(&data, queries, config.k)?,
    };
    if gt.k < config.k {
        return Err(Error::KTooLarge {
            k: config.k,
            limit: gt.k,
        });
    }
    if gt.ids.len() != queries.count() {
        return Err(Error::Malformed(format!(
            "ground truth covers {} queries, query set has {}",
            gt.ids.len(),
            queries.count()
        )));
    }

    let mut targets: Vec<(String, IndexKind, f64)> = Vec::new();
    match config.index_types {
        IndexChoice::Hier => {
            let (hier, secs) = timed(|| HnswIndex::build(data, config.params))?;
            targets.push(("hier".into(), IndexKind::Hier(hier), secs));
        }
        IndexChoice::Flat => {
            let (flat, secs) = timed(|| FlatIndex::build(data, config.params))?;
            targets.push(("flat".into(), IndexKind::Flat(flat), secs));
        }
        IndexChoice::Both => {
            let (hier, hier_secs) = timed(|| HnswIndex::build(data, config.params))?;
            let (flat, import_secs) = timed(|| FlatIndex::from_base_layer(&hier))?;
            targets.push(("hier".into(), IndexKind::Hier(hier), hier_secs));
            targets.push(("flat".into(), IndexKind::Flat(flat), import_secs));
        }
    }

    let mut rows = Vec::new();
    for (name, index, build_s) in &targets {
        for &ef in &config.ef_grid {
            let (recall, mean_comps) = instrumented_pass(index, queries, &gt, config.k, ef)?;
            let latencies = timed_pass(index, queries, config.k, ef, config.repetitions)?;
            rows.push(SweepRow {
                dataset: config.dataset.clone(),
                index_type: name.clone(),
                ef_search: ef,
                k: config.k,
                recall,
                p50_us: percentile(&latencies, 50.0)?.as_micros() as u64,
                p99_us: percentile(&latencies, 99.0)?.as_micros() as u64,
                mean_dist_comps: mean_comps,
                build_s: *build_s,
            });
        }
    }
    Ok(SweepOutput {
        config: config.clone(),
        rows,
    })
}

pub enum IndexKind {
    Hier(HnswIndex),
    Flat(FlatIndex),
}

impl IndexKind {
    pub fn search(&self, q: &[f32], k: usize, ef: usize) -> Result<Vec<Candidate>> {
        match self {
            IndexKind::Hier(i) => i.search(q, k, ef),
            IndexKind::Flat(i) => i.search(q, k, ef),
        }
    }

    pub fn search_traced(
        &self,
        q: &[f32],
        k: usize,
        ef: usize,
        qid: u32,
    ) -> Result<(Vec<Candidate>, crate::search::SearchTrace)> {
        match self {
            IndexKind::Hier(i) => i.search_traced(q, k, ef, qid),
            IndexKind::Flat(i) => i.search_traced(q, k, ef, qid),
        }
    }
}

fn instrumented_pass(
    index: &IndexKind,
    queries: &VectorSet,
    gt: &GroundTruth,
    k: usize,
    ef: usize,
) -> Result<(f64, f64)> {
    let per_query: Result<Vec<(f64, u64)>> = (0..queries.count())
        .into_par_iter()
        .map(|qi| {
            let (res, trace) = index.search_traced(queries.vector(qi), k, ef, qi as u32)?;
            let ids: Vec<u32> = res.iter().map(|c| c.node).collect();
            let recall = recall_at_k(&ids, &gt.ids[qi][..k], k);
            Ok((recall, trace.dist_computations))
        })
        .collect();
    let per_query = per_query?;
    let n = per_query.len() as f64;
    let recall = per_query.iter().map(|(r, _)| r).sum::<f64>() / n;
    let comps = per_query.iter().map(|(_, c)| *c as f64).sum::<f64>() / n;
    Ok((recall, comps))
}

fn timed_pass(
    index: &IndexKind,
    queries: &VectorSet,
    k: usize,
    ef: usize,
    repetitions: usize,
) -> Result<Vec<Duration>> {
    let reps = repetitions.max(1);
    let mut latencies = Vec::with_capacity(queries.count() * reps);
    for _ in 0..reps {
        for qi in 0..queries.count() {
            let q = queries.vector(qi);
            let start = Instant::now();
            let res = index.search(q, k, ef)?;
            latencies.push(start.elapsed());
            std::hint::black_box(res);
        }
    }
    Ok(latencies)
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let value = f()?;
    Ok((value, start.elapsed().as_secs_f64()))
}

/// CSV with the exact column set
/// `dataset,index_type,ef_search,k,recall,p50_us,p99_us,mean_dist_comps,build_s`.
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("dataset,index_type,ef_search,k,recall,p50_us,p99_us,mean_dist_comps,build_s\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{},{:.2},{:.3}\n",
            r.dataset,
            r.index_type,
            r.ef_search,
            r.k,
            r.recall,
            r.p50_us,
            r.p99_us,
            r.mean_dist_comps,
            r.build_s
        ));
    }
    out
}

pub fn write_outputs(
    output: &SweepOutput,
    csv_path: &std::path::Path,
    json_path: Option<&std::path::Path>,
) -> Result<()> {
    std::fs::write(csv_path, rows_to_csv(&output.rows))?;
    if let Some(json_path) = json_path {
        let json = serde_json::to_string_pretty(output)
            .map_err(|e| Error::Malformed(format!("serializing sweep output: {e}")))?;
        std::fs::write(json_path, json)?;
    }
    Ok(())
}

/// Shares one dataset across indexes without rebuilding: used by callers
/// that already hold built indexes.
pub fn paired_recall_and_comps(
    index: &IndexKind,
    queries: &VectorSet,
    gt: &GroundTruth,
    k: usize,
    ef: usize,
) -> Result<(f64, f64)> {
    instrumented_pass(index, queries, gt, k, ef)
}
