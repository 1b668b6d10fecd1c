//! Flat navigable-small-world index: the base layer of a hierarchical index
//! imported verbatim, or a direct single-layer construction, searched with
//! the same beam heuristic from a fixed entry point.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::FlatGraph;
use crate::hnsw::{select_diverse, with_visited, BuildParams, HnswIndex, IndexHealth};
use crate::search::{beam_search, Candidate, SearchTrace, Tracer, VisitedSet};
use crate::vecstore::{Metric, QueryDist, VectorSet};

/// A finalized single-layer index.
pub struct FlatIndex {
    vectors: Arc<VectorSet>,
    graph: FlatGraph,
}

impl FlatIndex {
    /// Extracts the bottom layer of a hierarchical index. The adjacency is
    /// copied verbatim, the entry point keeps the hierarchical index's entry
    /// node id, and the vectors are shared.
    pub fn from_base_layer(hier: &HnswIndex) -> Result<FlatIndex> {
        if hier.num_nodes() == 0 {
            return Err(Error::EmptyIndex);
        }
        Ok(FlatIndex {
            vectors: Arc::clone(hier.vectors()),
            graph: FlatGraph::from_base_layer(hier.graph())?,
        })
    }

    /// Builds a flat graph directly: each point is inserted by a beam search
    /// from the fixed entry point (node 0) and connected to a diversity-pruned
    /// selection at capacity `2 * m`. Deterministic for any thread count, via
    /// the same batched insertion scheme as the hierarchical build.
    pub fn build(vectors: VectorSet, params: BuildParams) -> Result<FlatIndex> {
        params.validate()?;
        if vectors.metric() != params.metric {
            return Err(Error::MetricMismatch {
                index: format!("{:?}", params.metric),
                data: format!("{:?}", vectors.metric()),
            });
        }
        let n = vectors.count();
        let mut graph = FlatGraph::new(params.m0())?;

        const BOOTSTRAP: usize = 256;
        const WAVE: usize = 64;

        let bootstrap = n.min(BOOTSTRAP);
        for node in 0..bootstrap as u32 {
            graph.push_node();
            let plan = with_visited(|visited| {
                plan_flat_insert(&vectors, &graph, &params, node, visited)
            })?;
            apply_flat_insert(&vectors, &mut graph, node, plan);
        }
        let mut next = bootstrap;
        while next < n {
            let wave_end = (next + WAVE).min(n);
            for _ in next..wave_end {
                graph.push_node();
            }
            let plans = (next..wave_end)
                .into_par_iter()
                .map(|node| {
                    with_visited(|visited| {
                        Ok((
                            node as u32,
                            plan_flat_insert(&vectors, &graph, &params, node as u32, visited)?,
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            apply_flat_wave(&vectors, &mut graph, plans);
            next = wave_end;
        }

        Ok(FlatIndex {
            vectors: Arc::new(vectors),
            graph,
        })
    }

    pub(crate) fn from_parts(vectors: Arc<VectorSet>, graph: FlatGraph) -> Result<Self> {
        if graph.num_nodes() != vectors.count() {
            return Err(Error::Malformed(format!(
                "graph has {} nodes but dataset has {} vectors",
                graph.num_nodes(),
                vectors.count()
            )));
        }
        graph.validate()?;
        Ok(Self { vectors, graph })
    }

    pub fn vectors(&self) -> &Arc<VectorSet> {
        &self.vectors
    }

    pub fn graph(&self) -> &FlatGraph {
        &self.graph
    }

    pub fn metric(&self) -> Metric {
        self.vectors.metric()
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn entry(&self) -> Option<u32> {
        self.graph.entry()
    }

    /// Top-k beam search from the fixed entry point. Same contract as the
    /// hierarchical search, restricted to the single layer.
    pub fn search(&self, query: &[f32], k: usize, ef_search: usize) -> Result<Vec<Candidate>> {
        let mut out = Vec::new();
        self.search_impl(query, k, ef_search, &mut Tracer::counting(), &mut out)?;
        Ok(out)
    }

    pub fn search_traced(
        &self,
        query: &[f32],
        k: usize,
        ef_search: usize,
        query_id: u32,
    ) -> Result<(Vec<Candidate>, SearchTrace)> {
        let mut trace = SearchTrace::new(query_id);
        let mut out = Vec::new();
        let mut order = std::mem::take(&mut trace.visit_order);
        let mut tracer = Tracer::recording(&mut order);
        self.search_impl(query, k, ef_search, &mut tracer, &mut out)?;
        trace.dist_computations = tracer.comps;
        trace.visit_order = order;
        Ok((out, trace))
    }

    fn search_impl(
        &self,
        query: &[f32],
        k: usize,
        ef_search: usize,
        tracer: &mut Tracer<'_>,
        out: &mut Vec<Candidate>,
    ) -> Result<()> {
        if self.graph.num_nodes() == 0 {
            return Err(Error::EmptyIndex);
        }
        if k == 0 || ef_search == 0 {
            return Err(Error::InvalidParameter(
                "k and ef_search must be >= 1".into(),
            ));
        }
        if k > ef_search {
            return Err(Error::KTooLarge { k, limit: ef_search });
        }
        let qd = QueryDist::new(&self.vectors, query)?;
        let entry = self.graph.entry().expect("non-empty graph has an entry");
        with_visited(|visited| {
            visited.reset(self.graph.num_nodes());
            let mut results = beam_search(&self.graph, &qd, &[entry], ef_search, visited, tracer);
            results.truncate(k);
            *out = results;
        });
        Ok(())
    }

    pub fn check_invariants(&self) -> Result<IndexHealth> {
        self.graph.validate()?;
        Ok(IndexHealth {
            nodes: self.graph.num_nodes(),
            max_level: 0,
            mean_degree_layer0: self.graph.mean_degree(),
            reachable_fraction: self.graph.reachable_fraction(),
        })
    }
}

fn plan_flat_insert(
    vectors: &VectorSet,
    graph: &FlatGraph,
    params: &BuildParams,
    node: u32,
    visited: &mut VisitedSet,
) -> Result<Vec<Candidate>> {
    let entry = match graph.entry() {
        Some(e) if e != node => e,
        _ => return Ok(Vec::new()),
    };
    let qd = QueryDist::new(vectors, vectors.vector(node as usize))?;
    let mut tracer = Tracer::counting();
    visited.reset(graph.num_nodes());
    let cands = beam_search(
        graph,
        &qd,
        &[entry],
        params.ef_construction,
        visited,
        &mut tracer,
    );
    Ok(select_diverse(&cands, params.m0(), |a, b| {
        vectors.dist_between(a, b)
    }))
}

fn apply_flat_insert(
    vectors: &VectorSet,
    graph: &mut FlatGraph,
    node: u32,
    selected: Vec<Candidate>,
) {
    let cap = graph.m0() as usize;
    let ids: Vec<u32> = selected.iter().map(|c| c.node).collect();
    graph.store_links(node, &ids);
    for link in selected {
        let degree = graph.links(link.node).len();
        if degree < cap {
            graph.push_link(link.node, node);
        } else {
            let mut list: Vec<Candidate> = graph
                .links(link.node)
                .iter()
                .map(|&t| Candidate {
                    node: t,
                    dist: vectors.dist_between(link.node, t),
                })
                .collect();
            crate::hnsw::fold_reciprocal(
                vectors,
                link.node,
                cap,
                &mut list,
                Candidate {
                    node,
                    dist: link.dist,
                },
            );
            let kept: Vec<u32> = list.iter().map(|c| c.node).collect();
            graph.store_links(link.node, &kept);
        }
    }
}

/// Wave-applied flat insertions, equivalent to applying plans one by one in
/// id order; reciprocal edges grouped per target resolve in parallel.
fn apply_flat_wave(vectors: &VectorSet, graph: &mut FlatGraph, plans: Vec<(u32, Vec<Candidate>)>) {
    for (node, selected) in &plans {
        let ids: Vec<u32> = selected.iter().map(|c| c.node).collect();
        graph.store_links(*node, &ids);
    }
    let mut groups: std::collections::BTreeMap<u32, Vec<Candidate>> =
        std::collections::BTreeMap::new();
    for (node, selected) in &plans {
        for link in selected {
            groups.entry(link.node).or_default().push(Candidate {
                node: *node,
                dist: link.dist,
            });
        }
    }
    let cap = graph.m0() as usize;
    let groups: Vec<(u32, Vec<Candidate>)> = groups.into_iter().collect();
    let resolved: Vec<Vec<u32>> = groups
        .par_iter()
        .map(|(target, adds)| {
            if graph.links(*target).len() + adds.len() <= cap {
                let mut ids: Vec<u32> = graph.links(*target).to_vec();
                ids.extend(adds.iter().map(|c| c.node));
                return ids;
            }
            let mut list: Vec<Candidate> = graph
                .links(*target)
                .iter()
                .map(|&t| Candidate {
                    node: t,
                    dist: vectors.dist_between(*target, t),
                })
                .collect();
            for &add in adds {
                crate::hnsw::fold_reciprocal(vectors, *target, cap, &mut list, add);
            }
            list.iter().map(|c| c.node).collect()
        })
        .collect();
    for ((target, _), ids) in groups.iter().zip(&resolved) {
        graph.store_links(*target, ids);
    }
}
