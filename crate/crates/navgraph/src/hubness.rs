//! Hubness analysis: k-occurrence skewness, node-access distributions, hub
//! labeling from access-count percentiles, hub-connectivity hypothesis
//! tests, and traversal-bin curves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::FlatGraph;
use crate::search::{Candidate, SearchTrace};
use crate::stats::{self, TestResult};
use crate::vecstore::{QueryDist, VectorSet};

/// Searchable index surface the instrumented passes need.
pub trait TracedSearch: Sync {
    fn num_nodes(&self) -> usize;
    fn search_traced(
        &self,
        query: &[f32],
        k: usize,
        ef: usize,
        query_id: u32,
    ) -> Result<(Vec<Candidate>, SearchTrace)>;
}

impl TracedSearch for crate::hnsw::HnswIndex {
    fn num_nodes(&self) -> usize {
        self.num_nodes()
    }
    fn search_traced(
        &self,
        query: &[f32],
        k: usize,
        ef: usize,
        query_id: u32,
    ) -> Result<(Vec<Candidate>, SearchTrace)> {
        HnswIndexSearch::search_traced(self, query, k, ef, query_id)
    }
}

impl TracedSearch for crate::flat::FlatIndex {
    fn num_nodes(&self) -> usize {
        self.num_nodes()
    }
    fn search_traced(
        &self,
        query: &[f32],
        k: usize,
        ef: usize,
        query_id: u32,
    ) -> Result<(Vec<Candidate>, SearchTrace)> {
        FlatIndexSearch::search_traced(self, query, k, ef, query_id)
    }
}

// Inherent-method aliases so the trait impls above stay unambiguous.
use crate::flat::FlatIndex as FlatIndexSearch;
use crate::hnsw::HnswIndex as HnswIndexSearch;

/// How many points include each point in their true k-nearest neighbors
/// (self excluded). The counts always sum to `n * k`.
#[derive(Debug, Clone, Serialize)]
pub struct KOccurrence {
    pub k: usize,
    pub counts: Vec<u32>,
}

impl KOccurrence {
    pub fn skewness(&self) -> Result<f64> {
        stats::skewness(&self.counts.iter().map(|&c| c as f64).collect::<Vec<_>>())
    }
}

/// Exact k-occurrence by brute-force k-NN per point, parallel over points.
pub fn k_occurrence(dataset: &VectorSet, k: usize) -> Result<KOccurrence> {
    let n = dataset.count();
    if k >= n {
        return Err(Error::KTooLarge {
            k,
            limit: n.saturating_sub(1),
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let counts: Vec<std::sync::atomic::AtomicU32> =
        (0..n).map(|_| std::sync::atomic::AtomicU32::new(0)).collect();
    (0..n).into_par_iter().try_for_each(|i| -> Result<()> {
        let qd = QueryDist::new(dataset, dataset.vector(i))?;
        let mut heap: std::collections::BinaryHeap<Candidate> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        for j in 0..n as u32 {
            if j as usize == i {
                continue;
            }
            let c = Candidate {
                node: j,
                dist: qd.dist(j),
            };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().expect("non-empty heap") {
                heap.push(c);
                heap.pop();
            }
        }
        for c in heap {
            counts[c.node as usize].fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        }
        Ok(())
    })?;
    Ok(KOccurrence {
        k,
        counts: counts
            .into_iter()
            .map(|a| a.into_inner())
            .collect(),
    })
}

pub use crate::stats::skewness;

/// Per-node first-visit totals over a fixed query set.
#[derive(Debug, Clone, Serialize)]
pub struct AccessCounts {
    pub counts: Vec<u64>,
    pub total_queries: usize,
    pub ef_search: usize,
    pub k: usize,
}

impl AccessCounts {
    pub fn from_traces(
        num_nodes: usize,
        traces: &[SearchTrace],
        ef_search: usize,
        k: usize,
    ) -> Self {
        let mut counts = vec![0u64; num_nodes];
        for t in traces {
            for &node in &t.visit_order {
                counts[node as usize] += 1;
            }
        }
        Self {
            counts,
            total_queries: traces.len(),
            ef_search,
            k,
        }
    }

    pub fn total_visits(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `ln(1 + count)` per node, the transform used when reporting the
    /// access distribution.
    pub fn log_normalized(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| (1.0 + c as f64).ln()).collect()
    }

    pub fn skewness_raw(&self) -> Result<f64> {
        stats::skewness(&self.counts.iter().map(|&c| c as f64).collect::<Vec<_>>())
    }

    pub fn skewness_log(&self) -> Result<f64> {
        stats::skewness(&self.log_normalized())
    }
}

/// Runs one instrumented search per query (parallel, merged in query order)
/// and returns the raw traces.
pub fn collect_traces(
    index: &dyn TracedSearch,
    queries: &VectorSet,
    ef_search: usize,
    k: usize,
) -> Result<Vec<SearchTrace>> {
    (0..queries.count())
        .into_par_iter()
        .map(|qi| {
            let (_, trace) = index.search_traced(queries.vector(qi), k, ef_search, qi as u32)?;
            Ok(trace)
        })
        .collect()
}

/// Aggregated first-visit counts for a query set.
pub fn access_counts(
    index: &dyn TracedSearch,
    queries: &VectorSet,
    ef_search: usize,
    k: usize,
) -> Result<AccessCounts> {
    let traces = collect_traces(index, queries, ef_search, k)?;
    Ok(AccessCounts::from_traces(
        index.num_nodes(),
        &traces,
        ef_search,
        k,
    ))
}

/// Binary hub assignment from a nearest-rank percentile threshold on access
/// counts: `h = 1` iff `count >= threshold`.
#[derive(Debug, Clone, Serialize)]
pub struct HubLabeling {
    pub percentile: f64,
    pub threshold: u64,
    pub labels: Vec<bool>,
}

impl HubLabeling {
    pub fn hub_count(&self) -> usize {
        self.labels.iter().filter(|&&h| h).count()
    }

    pub fn hub_ids(&self) -> Vec<u32> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &h)| h.then_some(i as u32))
            .collect()
    }

    pub fn non_hub_ids(&self) -> Vec<u32> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &h)| (!h).then_some(i as u32))
            .collect()
    }
}

pub fn select_hubs(counts: &AccessCounts, percentile: f64) -> Result<HubLabeling> {
    if !(0.0 < percentile && percentile < 100.0) {
        return Err(Error::InvalidParameter(format!(
            "percentile {percentile} outside (0, 100)"
        )));
    }
    let mut sorted = counts.counts.clone();
    sorted.sort_unstable();
    let threshold = stats::percentile_sorted(&sorted, percentile)?;
    Ok(HubLabeling {
        percentile,
        threshold,
        labels: counts.counts.iter().map(|&c| c >= threshold).collect(),
    })
}

/// Seeded hub-connectivity samples: for up to `sample_size` hub nodes drawn
/// without replacement, the number of out-neighbors labeled as hubs; same
/// statistic for a disjoint sample of non-hub nodes. If no non-hub nodes
/// exist (degenerate all-hub labeling) the comparison sample falls back to
/// the full node set, which then coincides with the hub population in law.
pub fn hub_adjacency_samples(
    graph: &FlatGraph,
    labeling: &HubLabeling,
    sample_size: usize,
    seed: u64,
) -> Result<(Vec<u32>, Vec<u32>)> {
    let hubs = labeling.hub_ids();
    if hubs.is_empty() {
        return Err(Error::NoHubs);
    }
    let mut non_hubs = labeling.non_hub_ids();
    if non_hubs.is_empty() {
        non_hubs = (0..graph.num_nodes() as u32).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hub_sample = sample_without_replacement(&hubs, sample_size, &mut rng);
    let random_sample = sample_without_replacement(&non_hubs, sample_size, &mut rng);
    let count_hub_neighbors = |node: u32| -> u32 {
        graph
            .links(node)
            .iter()
            .filter(|&&nb| labeling.labels[nb as usize])
            .count() as u32
    };
    Ok((
        hub_sample.iter().map(|&v| count_hub_neighbors(v)).collect(),
        random_sample
            .iter()
            .map(|&v| count_hub_neighbors(v))
            .collect(),
    ))
}

fn sample_without_replacement(pool: &[u32], amount: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let amount = amount.min(pool.len());
    rand::seq::index::sample(rng, pool.len(), amount)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

pub use crate::stats::{effect_size, mann_whitney_u, mann_whitney_u_exact, two_sample_t};

/// Mean hub fraction per traversal bin, averaged over the queries whose
/// trace reaches that bin. The final partial bin of each trace averages over
/// its actual length. `last_full_bin` is the largest bin index to which
/// every query contributes a complete bin.
#[derive(Debug, Clone, Serialize)]
pub struct TraversalBins {
    pub bin_size: usize,
    pub mean_fraction: Vec<f64>,
    pub coverage: Vec<u64>,
    pub last_full_bin: Option<usize>,
}

pub fn traversal_bin_fractions(
    traces: &[SearchTrace],
    labeling: &HubLabeling,
    bin_size: usize,
) -> Result<TraversalBins> {
    if bin_size == 0 {
        return Err(Error::InvalidParameter("bin_size must be >= 1".into()));
    }
    let mut sums: Vec<f64> = Vec::new();
    let mut coverage: Vec<u64> = Vec::new();
    let mut min_full_bins = usize::MAX;
    for trace in traces {
        min_full_bins = min_full_bins.min(trace.visit_order.len() / bin_size);
        for (bin, chunk) in trace.visit_order.chunks(bin_size).enumerate() {
            if bin >= sums.len() {
                sums.resize(bin + 1, 0.0);
                coverage.resize(bin + 1, 0);
            }
            let hubs = chunk
                .iter()
                .filter(|&&node| labeling.labels[node as usize])
                .count();
            sums[bin] += hubs as f64 / chunk.len() as f64;
            coverage[bin] += 1;
        }
    }
    let mean_fraction: Vec<f64> = sums
        .iter()
        .zip(&coverage)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let last_full_bin = if traces.is_empty() || min_full_bins == 0 {
        None
    } else {
        Some(min_full_bins - 1)
    };
    Ok(TraversalBins {
        bin_size,
        mean_fraction,
        coverage,
        last_full_bin,
    })
}

/// Everything the hub-highway analysis produces for one index and query set.
/// Raw samples are included so alternative effect measures can be recomputed
/// downstream.
#[derive(Debug, Serialize)]
pub struct HubnessReport {
    pub nodes: usize,
    pub queries: usize,
    pub ef_search: usize,
    pub k: usize,
    pub percentile: f64,
    pub threshold: u64,
    pub hub_count: usize,
    pub access_skewness_raw: f64,
    pub access_skewness_log: f64,
    pub mann_whitney: TestResult,
    pub welch_t: TestResult,
    pub effect_size: Option<f64>,
    pub hub_sample: Vec<u32>,
    pub random_sample: Vec<u32>,
    pub bins: TraversalBins,
}

#[derive(Debug, Clone, Copy)]
pub struct HubnessParams {
    pub ef_search: usize,
    pub k: usize,
    pub percentile: f64,
    pub bin_size: usize,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for HubnessParams {
    fn default() -> Self {
        Self {
            ef_search: 200,
            k: 100,
            percentile: 95.0,
            bin_size: 30,
            sample_size: 1000,
            seed: 0,
        }
    }
}

/// Full hub-highway analysis over a flat index: instrumented searches, hub
/// labeling, connectivity tests, and traversal bins.
pub fn analyze_hubness(
    index: &crate::flat::FlatIndex,
    queries: &VectorSet,
    params: &HubnessParams,
) -> Result<HubnessReport> {
    let traces = collect_traces(index, queries, params.ef_search, params.k)?;
    let counts = AccessCounts::from_traces(index.num_nodes(), &traces, params.ef_search, params.k);
    let labeling = select_hubs(&counts, params.percentile)?;
    let (hub_sample, random_sample) =
        hub_adjacency_samples(index.graph(), &labeling, params.sample_size, params.seed)?;
    let a: Vec<f64> = hub_sample.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = random_sample.iter().map(|&v| v as f64).collect();
    let mann_whitney = stats::mann_whitney_u(&a, &b)?;
    let welch_t = stats::two_sample_t(&a, &b)?;
    let effect = stats::effect_size(&a, &b).ok();
    let bins = traversal_bin_fractions(&traces, &labeling, params.bin_size)?;
    Ok(HubnessReport {
        nodes: index.num_nodes(),
        queries: queries.count(),
        ef_search: params.ef_search,
        k: params.k,
        percentile: params.percentile,
        threshold: labeling.threshold,
        hub_count: labeling.hub_count(),
        access_skewness_raw: counts.skewness_raw()?,
        access_skewness_log: counts.skewness_log()?,
        mann_whitney,
        welch_t,
        effect_size: effect,
        hub_sample,
        random_sample,
        bins,
    })
}

/// CSV export of a bin curve: `bin_index,mean_hub_fraction,queries_covered`.
pub fn bins_to_csv(bins: &TraversalBins) -> String {
    let mut out = String::from("bin_index,mean_hub_fraction,queries_covered\n");
    for (i, (f, c)) in bins.mean_fraction.iter().zip(&bins.coverage).enumerate() {
        out.push_str(&format!("{i},{f:.6},{c}\n"));
    }
    out
}
