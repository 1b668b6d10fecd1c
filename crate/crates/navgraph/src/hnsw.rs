//! Hierarchical navigable-small-world index: randomized level assignment,
//! per-layer insertion with diversity pruning, and layered search.

use std::cell::RefCell;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LayeredGraph;
use crate::search::{beam_search, greedy_step, Candidate, SearchTrace, Tracer, VisitedSet};
use crate::vecstore::{Metric, QueryDist, VectorSet};

/// Index construction parameters. Defaults follow the standard operating
/// point for these indexes: m = 32, ef_construction = 100.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BuildParams {
    /// Maximum out-degree on layers >= 1; layer 0 allows `2 * m`.
    pub m: usize,
    /// Beam width while inserting.
    pub ef_construction: usize,
    pub seed: u64,
    pub metric: Metric,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            m: 32,
            ef_construction: 100,
            seed: 0,
            metric: Metric::L2Squared,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidParameter(format!(
                "m = {} must be >= 2",
                self.m
            )));
        }
        if self.ef_construction < self.m {
            return Err(Error::InvalidParameter(format!(
                "ef_construction = {} must be >= m = {}",
                self.ef_construction, self.m
            )));
        }
        Ok(())
    }

    pub fn m0(&self) -> usize {
        2 * self.m
    }
}

/// Level for a uniform draw `u` in (0, 1]: `floor(-ln(u) * mL)` with
/// `mL = 1 / ln(m)`, so `P(level >= j) = m^-j`.
pub fn level_for_uniform(u: f64, m: usize) -> u32 {
    debug_assert!(u > 0.0 && u <= 1.0);
    let ml = 1.0 / (m as f64).ln();
    (-u.ln() * ml) as u32
}

/// Samples a node level from the exponentially decaying distribution.
pub fn sample_level<R: Rng>(rng: &mut R, m: usize) -> u32 {
    // gen::<f64>() is in [0, 1); flip to (0, 1] so ln is finite.
    level_for_uniform(1.0 - rng.gen::<f64>(), m)
}

/// Diversity-pruned neighbor selection.
///
/// `candidates` must be sorted ascending by distance to the base point.
/// Scanning in that order, a candidate is accepted iff it is closer to the
/// base than to every already-accepted neighbor; if fewer than `cap` survive,
/// the closest rejected candidates fill the remaining slots.
pub fn select_neighbors(
    candidates: &[Candidate],
    cap: usize,
    dist_between: impl FnMut(u32, u32) -> f32,
) -> Vec<u32> {
    select_diverse(candidates, cap, dist_between)
        .into_iter()
        .map(|c| c.node)
        .collect()
}

pub(crate) fn select_diverse(
    candidates: &[Candidate],
    cap: usize,
    dist_between: impl FnMut(u32, u32) -> f32,
) -> Vec<Candidate> {
    select_diverse_impl(candidates, cap, dist_between, true)
}

/// Diverse-only selection, no backfill. Used when re-pruning an overflowing
/// neighbor list: shrinking to the diverse set leaves headroom so later
/// reciprocal edges append instead of re-pruning on every touch, which is
/// what keeps construction time linear-ish. (A backfilled list sits at
/// capacity forever and pays a full diversity scan per incoming edge.)
pub(crate) fn select_diverse_strict(
    candidates: &[Candidate],
    cap: usize,
    dist_between: impl FnMut(u32, u32) -> f32,
) -> Vec<Candidate> {
    select_diverse_impl(candidates, cap, dist_between, false)
}

fn select_diverse_impl(
    candidates: &[Candidate],
    cap: usize,
    mut dist_between: impl FnMut(u32, u32) -> f32,
    backfill: bool,
) -> Vec<Candidate> {
    debug_assert!(candidates.windows(2).all(|w| w[0] <= w[1]));
    let mut accepted: Vec<Candidate> = Vec::with_capacity(cap);
    let mut rejected: Vec<Candidate> = Vec::new();
    for &c in candidates {
        if accepted.len() == cap {
            break;
        }
        let diverse = accepted
            .iter()
            .all(|s| c.dist < dist_between(c.node, s.node));
        if diverse {
            accepted.push(c);
        } else if backfill {
            rejected.push(c);
        }
    }
    // Keep pruned connections: backfill with the closest rejected candidates.
    for c in rejected {
        if accepted.len() == cap {
            break;
        }
        accepted.push(c);
    }
    accepted
}

thread_local! {
    static SCRATCH: RefCell<VisitedSet> = RefCell::new(VisitedSet::default());
}

/// Runs `f` with the calling thread's reusable visited marker.
pub(crate) fn with_visited<R>(f: impl FnOnce(&mut VisitedSet) -> R) -> R {
    SCRATCH.with(|cell| f(&mut cell.borrow_mut()))
}

/// One node's planned connections, computed against a frozen graph snapshot.
struct InsertPlan {
    node: u32,
    /// Per layer, top insertion layer first: (layer, selected links with
    /// their distance from the new node).
    layers: Vec<(usize, Vec<Candidate>)>,
}

/// Plans the insertion of `node` (already present in the graph, unlinked):
/// greedy descent from the entry point through the layers above the node's
/// level, then a beam of width `ef_construction` per insertion layer, pruned
/// to the layer capacity.
fn plan_insert(
    vectors: &VectorSet,
    graph: &LayeredGraph,
    params: &BuildParams,
    node: u32,
    level: u32,
    visited: &mut VisitedSet,
) -> Result<InsertPlan> {
    let entry = match graph.entry() {
        Some(e) => e,
        None => {
            return Ok(InsertPlan {
                node,
                layers: Vec::new(),
            })
        }
    };
    let n = graph.num_nodes();
    let qd = QueryDist::new(vectors, vectors.vector(node as usize))?;
    let mut tracer = Tracer::counting();
    let entry_level = graph.level(entry);
    let mut cur = Candidate {
        node: entry,
        dist: qd.dist(entry),
    };
    let top = level.min(entry_level);
    for layer in (top + 1..=entry_level).rev() {
        visited.reset(n);
        cur = greedy_step((graph, layer as usize), &qd, cur, visited, &mut tracer);
    }
    let mut layers = Vec::with_capacity(top as usize + 1);
    let mut eps = cur.node;
    for layer in (0..=top as usize).rev() {
        visited.reset(n);
        let cands = beam_search(
            (graph, layer),
            &qd,
            &[eps],
            params.ef_construction,
            visited,
            &mut tracer,
        );
        let cap = graph.capacity_at(layer);
        let selected = select_diverse(&cands, cap, |a, b| vectors.dist_between(a, b));
        if let Some(best) = cands.first() {
            eps = best.node;
        }
        layers.push((layer, selected));
    }
    Ok(InsertPlan { node, layers })
}

/// On overflow, a list shrinks to its diverse set at `cap - HEADROOM` so the
/// next few reciprocal edges append instead of re-running the full scan. In
/// high dimensions the heuristic rejects almost nothing, so a list shrunk
/// exactly to `cap` would pay a quadratic rescan on every single edge.
const OVERFLOW_HEADROOM: usize = 8;

fn shrink_cap(cap: usize) -> usize {
    cap.saturating_sub(OVERFLOW_HEADROOM).max(cap / 2).max(1)
}

/// Folds one reciprocal edge into a target's neighbor list: append when
/// there is room, otherwise re-select over the current list plus the new
/// candidate.
pub(crate) fn fold_reciprocal(
    vectors: &VectorSet,
    target: u32,
    cap: usize,
    list: &mut Vec<Candidate>,
    add: Candidate,
) {
    if list.len() < cap {
        list.push(add);
        return;
    }
    let mut cands = std::mem::take(list);
    cands.push(add);
    cands.sort_unstable();
    *list = select_diverse_strict(&cands, shrink_cap(cap), |a, b| vectors.dist_between(a, b));
    debug_assert!(!list.is_empty());
    let _ = target;
}

/// Applies a plan: store forward links, add reciprocal edges, and re-prune
/// any neighbor pushed past its capacity. Promotes the entry point if the
/// node's level is a new maximum.
fn apply_insert(vectors: &VectorSet, graph: &mut LayeredGraph, plan: InsertPlan) {
    let node = plan.node;
    for (layer, selected) in plan.layers {
        let ids: Vec<u32> = selected.iter().map(|c| c.node).collect();
        graph.store_links(layer, node, &ids);
        let cap = graph.capacity_at(layer);
        for link in selected {
            let degree = graph.links(layer, link.node).len();
            if degree < cap {
                graph.push_link(layer, link.node, node);
            } else {
                let mut list: Vec<Candidate> = graph
                    .links(layer, link.node)
                    .iter()
                    .map(|&t| Candidate {
                        node: t,
                        dist: vectors.dist_between(link.node, t),
                    })
                    .collect();
                fold_reciprocal(
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
                graph.store_links(layer, link.node, &kept);
            }
        }
    }
    graph.promote_entry(node);
}

/// Applies a whole wave of plans with the same result as applying them one
/// by one in id order: forward links first, then the reciprocal edges
/// grouped by target node. Each target's updates depend only on its own
/// list, so groups resolve in parallel against the shared graph and the
/// final lists are written back sequentially.
fn apply_wave(vectors: &VectorSet, graph: &mut LayeredGraph, plans: Vec<InsertPlan>) {
    for plan in &plans {
        for (layer, selected) in &plan.layers {
            let ids: Vec<u32> = selected.iter().map(|c| c.node).collect();
            graph.store_links(*layer, plan.node, &ids);
        }
    }
    let mut groups: std::collections::BTreeMap<(usize, u32), Vec<Candidate>> =
        std::collections::BTreeMap::new();
    for plan in &plans {
        for (layer, selected) in &plan.layers {
            for link in selected {
                groups.entry((*layer, link.node)).or_default().push(Candidate {
                    node: plan.node,
                    dist: link.dist,
                });
            }
        }
    }
    let groups: Vec<((usize, u32), Vec<Candidate>)> = groups.into_iter().collect();
    let resolved: Vec<Vec<u32>> = groups
        .par_iter()
        .map(|((layer, target), adds)| {
            let cap = graph.capacity_at(*layer);
            if graph.links(*layer, *target).len() + adds.len() <= cap {
                let mut ids: Vec<u32> = graph.links(*layer, *target).to_vec();
                ids.extend(adds.iter().map(|c| c.node));
                return ids;
            }
            let mut list: Vec<Candidate> = graph
                .links(*layer, *target)
                .iter()
                .map(|&t| Candidate {
                    node: t,
                    dist: vectors.dist_between(*target, t),
                })
                .collect();
            for &add in adds {
                fold_reciprocal(vectors, *target, cap, &mut list, add);
            }
            list.iter().map(|c| c.node).collect()
        })
        .collect();
    for (((layer, target), _), ids) in groups.iter().zip(&resolved) {
        graph.store_links(*layer, *target, ids);
    }
    for plan in &plans {
        graph.promote_entry(plan.node);
    }
}

/// First nodes of a bulk build are inserted one at a time; after that,
/// insertion plans are computed in parallel batches of `WAVE` against the
/// graph frozen at batch start and applied in id order, so builds are
/// deterministic for any thread count.
const BOOTSTRAP: usize = 256;
const WAVE: usize = 64;

/// Incremental builder: the index under construction.
pub struct HnswBuilder {
    params: BuildParams,
    vectors: VectorSet,
    graph: LayeredGraph,
    rng: ChaCha8Rng,
}

impl HnswBuilder {
    pub fn new(dim: usize, params: BuildParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            vectors: VectorSet::empty(dim, params.metric)?,
            graph: LayeredGraph::new(params.m)?,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn graph(&self) -> &LayeredGraph {
        &self.graph
    }

    /// Inserts one vector: samples its level, descends from the entry point,
    /// and connects it layer by layer. Returns the new node id.
    pub fn insert(&mut self, vector: &[f32]) -> Result<u32> {
        let node = self.vectors.push_row(vector)?;
        let level = sample_level(&mut self.rng, self.params.m);
        self.graph.push_node(level);
        let plan = with_visited(|visited| {
            plan_insert(
                &self.vectors,
                &self.graph,
                &self.params,
                node,
                level,
                visited,
            )
        })?;
        apply_insert(&self.vectors, &mut self.graph, plan);
        Ok(node)
    }

    pub fn finish(self) -> HnswIndex {
        HnswIndex {
            vectors: Arc::new(self.vectors),
            graph: self.graph,
        }
    }
}

/// A finalized hierarchical index: read-only, safe to search from any number
/// of threads.
pub struct HnswIndex {
    vectors: Arc<VectorSet>,
    graph: LayeredGraph,
}

impl HnswIndex {
    /// Builds an index over a whole dataset with deterministic batched
    /// insertion (parallelized over the ambient rayon pool).
    pub fn build(vectors: VectorSet, params: BuildParams) -> Result<HnswIndex> {
        params.validate()?;
        if vectors.metric() != params.metric {
            return Err(Error::MetricMismatch {
                index: format!("{:?}", params.metric),
                data: format!("{:?}", vectors.metric()),
            });
        }
        let n = vectors.count();
        let mut graph = LayeredGraph::with_capacity(params.m, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

        let bootstrap = n.min(BOOTSTRAP);
        for node in 0..bootstrap {
            let level = sample_level(&mut rng, params.m);
            graph.push_node(level);
            let plan = with_visited(|visited| {
                plan_insert(&vectors, &graph, &params, node as u32, level, visited)
            })?;
            apply_insert(&vectors, &mut graph, plan);
        }

        let mut next = bootstrap;
        let mut plan_time = std::time::Duration::ZERO;
        let mut apply_time = std::time::Duration::ZERO;
        while next < n {
            let wave_end = (next + WAVE).min(n);
            let members: Vec<(u32, u32)> = (next..wave_end)
                .map(|node| {
                    let level = sample_level(&mut rng, params.m);
                    graph.push_node(level);
                    (node as u32, level)
                })
                .collect();
            let t = std::time::Instant::now();
            let plans = members
                .par_iter()
                .map(|&(node, level)| {
                    with_visited(|visited| {
                        plan_insert(&vectors, &graph, &params, node, level, visited)
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            plan_time += t.elapsed();
            let t = std::time::Instant::now();
            apply_wave(&vectors, &mut graph, plans);
            apply_time += t.elapsed();
            next = wave_end;
        }
        if std::env::var("NAVGRAPH_BUILD_TIMING").is_ok() {
            eprintln!("build phases: plan {plan_time:.1?}, apply {apply_time:.1?}");
        }

        Ok(HnswIndex {
            vectors: Arc::new(vectors),
            graph,
        })
    }

    /// Reassembles an index from a deserialized graph and its dataset.
    pub(crate) fn from_parts(vectors: Arc<VectorSet>, graph: LayeredGraph) -> Result<Self> {
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

    pub fn graph(&self) -> &LayeredGraph {
        &self.graph
    }

    pub fn metric(&self) -> Metric {
        self.vectors.metric()
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    /// Top-k search: greedy descent through the upper layers, then a beam of
    /// width `ef_search` on the base layer.
    pub fn search(&self, query: &[f32], k: usize, ef_search: usize) -> Result<Vec<Candidate>> {
        let mut out = Vec::new();
        self.search_impl(query, k, ef_search, &mut Tracer::counting(), &mut out)?;
        Ok(out)
    }

    /// Search that also reports the base-layer first-visit order and the
    /// total distance-computation count.
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
        let n = self.graph.num_nodes();
        with_visited(|visited| {
            let mut cur = Candidate {
                node: entry,
                dist: qd.dist(entry),
            };
            tracer.comps += 1;
            for layer in (1..=self.graph.level(entry)).rev() {
                visited.reset(n);
                cur = greedy_step((&self.graph, layer as usize), &qd, cur, visited, tracer);
            }
            visited.reset(n);
            let mut results =
                beam_search((&self.graph, 0), &qd, &[cur.node], ef_search, visited, tracer);
            results.truncate(k);
            *out = results;
        });
        Ok(())
    }

    /// Hard graph invariants plus health statistics.
    pub fn check_invariants(&self) -> Result<IndexHealth> {
        self.graph.validate()?;
        Ok(IndexHealth {
            nodes: self.graph.num_nodes(),
            max_level: self.graph.max_level(),
            mean_degree_layer0: self.graph.mean_degree_layer0(),
            reachable_fraction: self.graph.reachable_fraction(),
        })
    }
}

/// Post-build structural report.
#[derive(Debug, Clone, Serialize)]
pub struct IndexHealth {
    pub nodes: usize,
    pub max_level: u32,
    pub mean_degree_layer0: f64,
    pub reachable_fraction: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Law, SynthSpec};

    fn line_graph_set(points: &[f32]) -> VectorSet {
        VectorSet::new(1, points.to_vec(), Metric::L2Squared).unwrap()
    }

    #[test]
    fn level_of_near_one_uniform_is_zero() {
        assert_eq!(level_for_uniform(0.999999, 32), 0);
        assert_eq!(level_for_uniform(1.0, 32), 0);
    }

    #[test]
    fn level_law_matches_geometric_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 1_000_000usize;
        let mut ge1 = 0usize;
        let mut ge2 = 0usize;
        for _ in 0..draws {
            let l = sample_level(&mut rng, 32);
            if l >= 1 {
                ge1 += 1;
            }
            if l >= 2 {
                ge2 += 1;
            }
        }
        let f1 = ge1 as f64 / draws as f64;
        let f2 = ge2 as f64 / draws as f64;
        // 3 standard errors around m^-1 and m^-2.
        assert!((f1 - 1.0 / 32.0).abs() <= 3.0 * (0.03125f64 * 0.96875 / 1e6).sqrt());
        let se2 = ((1.0f64 / 1024.0) * (1023.0 / 1024.0) / 1e6).sqrt();
        assert!((f2 - 1.0 / 1024.0).abs() <= 3.0 * se2);
    }

    #[test]
    fn select_neighbors_prunes_shadowed_candidate() {
        // 1-d points: base at 0, candidates at 1 (d=1) and 2 (d=4).
        // 2 is pruned because dist(2, 1) = 1 < 4, then backfilled.
        let set = line_graph_set(&[0.0, 1.0, 2.0]);
        let cands = [
            Candidate { node: 1, dist: 1.0 },
            Candidate { node: 2, dist: 4.0 },
        ];
        let picked = select_neighbors(&cands, 2, |a, b| set.dist_between(a, b));
        assert_eq!(picked, vec![1, 2]);
        let picked = select_neighbors(&cands, 1, |a, b| set.dist_between(a, b));
        assert_eq!(picked, vec![1]);
    }

    #[test]
    fn select_neighbors_single_candidate_always_accepted() {
        let set = line_graph_set(&[0.0, 5.0]);
        let cands = [Candidate { node: 1, dist: 25.0 }];
        assert_eq!(
            select_neighbors(&cands, 4, |a, b| set.dist_between(a, b)),
            vec![1]
        );
    }

    #[test]
    fn select_neighbors_collinear_chain_backfills() {
        // Chain 0,1,2,3 from base 0: only node 1 is diverse; 2 and 3 backfill.
        let set = line_graph_set(&[0.0, 1.0, 2.0, 3.0]);
        let cands = [
            Candidate { node: 1, dist: 1.0 },
            Candidate { node: 2, dist: 4.0 },
            Candidate { node: 3, dist: 9.0 },
        ];
        assert_eq!(
            select_neighbors(&cands, 3, |a, b| set.dist_between(a, b)),
            vec![1, 2, 3]
        );
        assert_eq!(
            select_neighbors(&cands, 2, |a, b| set.dist_between(a, b)),
            vec![1, 2]
        );
    }

    #[test]
    fn beam_search_on_path_graph() {
        // Path 0-1-2-3 over 1-d points {0,1,2,3}, query 3.1, entry {0}, ef=2.
        let set = line_graph_set(&[0.0, 1.0, 2.0, 3.0]);
        let mut g = crate::graph::FlatGraph::new(4).unwrap();
        for _ in 0..4 {
            g.push_node();
        }
        g.set_neighbors(0, &[1]).unwrap();
        g.set_neighbors(1, &[0, 2]).unwrap();
        g.set_neighbors(2, &[1, 3]).unwrap();
        g.set_neighbors(3, &[2]).unwrap();
        let q = [3.1f32];
        let qd = QueryDist::new(&set, &q).unwrap();
        let mut visited = VisitedSet::default();
        visited.reset(4);
        let mut order = Vec::new();
        let mut tracer = Tracer::recording(&mut order);
        let res = beam_search(&g, &qd, &[0], 2, &mut visited, &mut tracer);
        let comps = tracer.comps;
        drop(tracer);
        let ids: Vec<u32> = res.iter().map(|c| c.node).collect();
        assert_eq!(ids, vec![3, 2]);
        assert_eq!(order[0], 0, "trace begins with the entry");
        assert_eq!(comps, order.len() as u64);
        let mut dedup = order.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), order.len(), "no duplicate first visits");
    }

    #[test]
    fn single_node_search() {
        let mut b = HnswBuilder::new(2, BuildParams::default()).unwrap();
        b.insert(&[1.0, 2.0]).unwrap();
        let index = b.finish();
        let res = index.search(&[0.0, 0.0], 1, 4).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].node, 0);
        assert_eq!(res[0].dist, 5.0);
    }

    #[test]
    fn first_insert_becomes_entry() {
        let mut b = HnswBuilder::new(3, BuildParams::default()).unwrap();
        let id = b.insert(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(id, 0);
        assert_eq!(b.graph().entry(), Some(0));
        assert_eq!(
            b.graph().level(0),
            b.graph().max_level(),
            "entry holds the maximal level"
        );
    }

    #[test]
    fn incremental_inserts_keep_invariants() {
        let set = generate(&SynthSpec {
            n: 500,
            d: 32,
            law: Law::IidNormal,
            seed: 21,
        })
        .unwrap();
        let mut b = HnswBuilder::new(
            32,
            BuildParams {
                m: 8,
                ef_construction: 32,
                seed: 3,
                metric: Metric::L2Squared,
            },
        )
        .unwrap();
        for i in 0..set.count() {
            b.insert(set.vector(i)).unwrap();
        }
        let index = b.finish();
        let health = index.check_invariants().unwrap();
        assert_eq!(health.nodes, 500);
        assert!(health.reachable_fraction >= 0.99);
    }

    #[test]
    fn dimension_mismatch_on_insert() {
        let mut b = HnswBuilder::new(4, BuildParams::default()).unwrap();
        assert!(b.insert(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn bulk_build_matches_thread_count_independence() {
        let set = generate(&SynthSpec {
            n: 800,
            d: 8,
            law: Law::UniformHypercube,
            seed: 40,
        })
        .unwrap();
        let params = BuildParams {
            m: 8,
            ef_construction: 32,
            seed: 9,
            metric: Metric::L2Squared,
        };
        let a = HnswIndex::build(set.clone(), params).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| HnswIndex::build(set, params).unwrap());
        for node in 0..a.num_nodes() as u32 {
            assert_eq!(a.graph().level(node), b.graph().level(node));
            for layer in 0..=a.graph().level(node) as usize {
                assert_eq!(
                    a.graph().neighbors(layer, node).unwrap(),
                    b.graph().neighbors(layer, node).unwrap()
                );
            }
        }
    }

    #[test]
    fn recall_after_small_build() {
        let set = generate(&SynthSpec {
            n: 2000,
            d: 16,
            law: Law::UniformHypercube,
            seed: 77,
        })
        .unwrap();
        let queries = generate(&SynthSpec {
            n: 50,
            d: 16,
            law: Law::UniformHypercube,
            seed: 78,
        })
        .unwrap();
        let index = HnswIndex::build(
            set.clone(),
            BuildParams {
                m: 16,
                ef_construction: 100,
                seed: 1,
                metric: Metric::L2Squared,
            },
        )
        .unwrap();
        index.check_invariants().unwrap();
        let k = 10;
        let mut total = 0.0;
        for qi in 0..queries.count() {
            let q = queries.vector(qi);
            let got = index.search(q, k, 200).unwrap();
            let truth = brute_force(&set, q, k);
            let got_ids: std::collections::HashSet<u32> = got.iter().map(|c| c.node).collect();
            let hits = truth.iter().filter(|id| got_ids.contains(id)).count();
            total += hits as f64 / k as f64;
        }
        let recall = total / queries.count() as f64;
        assert!(recall >= 0.99, "recall {recall}");
    }

    #[test]
    fn repeated_search_is_deterministic() {
        let set = generate(&SynthSpec {
            n: 1500,
            d: 12,
            law: Law::IidNormal,
            seed: 31,
        })
        .unwrap();
        let index = HnswIndex::build(
            set,
            BuildParams {
                m: 8,
                ef_construction: 40,
                seed: 2,
                metric: Metric::L2Squared,
            },
        )
        .unwrap();
        let q: Vec<f32> = (0..12).map(|i| i as f32 * 0.1).collect();
        let a = index.search(&q, 5, 50).unwrap();
        let b = index.search(&q, 5, 50).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.node, y.node);
            assert_eq!(x.dist.to_bits(), y.dist.to_bits());
        }
    }

    #[test]
    fn stored_vector_query_returns_itself() {
        let set = generate(&SynthSpec {
            n: 400,
            d: 10,
            law: Law::IidNormal,
            seed: 15,
        })
        .unwrap();
        let index = HnswIndex::build(
            set.clone(),
            BuildParams {
                m: 8,
                ef_construction: 40,
                seed: 4,
                metric: Metric::L2Squared,
            },
        )
        .unwrap();
        let res = index.search(set.vector(123), 1, 64).unwrap();
        assert_eq!(res[0].node, 123);
        assert_eq!(res[0].dist, 0.0);
    }

    #[test]
    fn search_argument_errors() {
        let mut b = HnswBuilder::new(2, BuildParams::default()).unwrap();
        b.insert(&[0.0, 0.0]).unwrap();
        let index = b.finish();
        assert!(matches!(
            index.search(&[0.0, 0.0], 5, 2),
            Err(Error::KTooLarge { .. })
        ));
        let empty = HnswBuilder::new(2, BuildParams::default()).unwrap().finish();
        assert!(matches!(
            empty.search(&[0.0, 0.0], 1, 2),
            Err(Error::EmptyIndex)
        ));
    }

    #[test]
    fn traced_search_has_no_duplicate_visits() {
        let set = generate(&SynthSpec {
            n: 1000,
            d: 8,
            law: Law::UniformHypercube,
            seed: 61,
        })
        .unwrap();
        let index = HnswIndex::build(
            set,
            BuildParams {
                m: 8,
                ef_construction: 40,
                seed: 6,
                metric: Metric::L2Squared,
            },
        )
        .unwrap();
        let q = [0.5f32; 8];
        let (_, trace) = index.search_traced(&q, 10, 50, 0).unwrap();
        let mut ids = trace.visit_order.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), trace.visit_order.len());
        assert!(trace.dist_computations >= trace.visit_order.len() as u64);
    }

    /// Mean recall over a query batch must not decrease as ef_search grows.
    #[test]
    fn recall_monotone_in_ef() {
        let set = generate(&SynthSpec {
            n: 4000,
            d: 24,
            law: Law::IidNormal,
            seed: 51,
        })
        .unwrap();
        let queries = generate(&SynthSpec {
            n: 100,
            d: 24,
            law: Law::IidNormal,
            seed: 52,
        })
        .unwrap();
        let index = HnswIndex::build(
            set.clone(),
            BuildParams {
                m: 16,
                ef_construction: 64,
                seed: 8,
                metric: Metric::L2Squared,
            },
        )
        .unwrap();
        let k = 10;
        let truth: Vec<Vec<u32>> = (0..queries.count())
            .map(|qi| brute_force(&set, queries.vector(qi), k))
            .collect();
        let mut prev = -1.0f64;
        for ef in [10, 20, 40, 80, 160] {
            let mut total = 0.0;
            for qi in 0..queries.count() {
                let got = index.search(queries.vector(qi), k, ef).unwrap();
                let got_ids: std::collections::HashSet<u32> =
                    got.iter().map(|c| c.node).collect();
                let hits = truth[qi].iter().filter(|id| got_ids.contains(id)).count();
                total += hits as f64 / k as f64;
            }
            let recall = total / queries.count() as f64;
            assert!(
                recall >= prev,
                "mean recall regressed: {prev} -> {recall} at ef {ef}"
            );
            prev = recall;
        }
    }

    /// Test-local exact k-NN in f64, independent of the search path.
    fn brute_force(set: &VectorSet, q: &[f32], k: usize) -> Vec<u32> {
        let mut scored: Vec<(f64, u32)> = (0..set.count())
            .map(|i| {
                let d: f64 = set
                    .vector(i)
                    .iter()
                    .zip(q)
                    .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
                    .sum();
                (d, i as u32)
            })
            .collect();
        scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
        scored.iter().take(k).map(|&(_, id)| id).collect()
    }
}
