//! Best-first beam search over a graph layer, shared by the hierarchical and
//! flat indexes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::vecstore::QueryDist;

/// A scored node: its distance to the current query or insertion point.
#[derive(Debug, Clone, Copy)]
pub struct Candidate {
    pub node: u32,
    pub dist: f32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    /// Orders by distance, breaking ties by ascending node id so every
    /// traversal and result list is deterministic.
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.node.cmp(&other.node))
    }
}

/// Epoch-marked visited set, reusable across searches without clearing.
#[derive(Debug, Default)]
pub struct VisitedSet {
    epoch: u32,
    marks: Vec<u32>,
}

impl VisitedSet {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            epoch: 0,
            marks: vec![0; n],
        }
    }

    /// Starts a fresh visitation scope covering node ids below `n`.
    pub fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.fill(0);
            self.epoch = 1;
        }
    }

    /// Marks a node; returns true if it was not yet visited in this scope.
    #[inline]
    pub fn insert(&mut self, node: u32) -> bool {
        let slot = &mut self.marks[node as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

/// First-visit record of one search: the order in which nodes were first
/// scored, and how many distance computations the whole search performed.
/// For flat searches every computation is a first visit, so
/// `dist_computations == visit_order.len()`; hierarchical searches add their
/// upper-layer descent computations on top while `visit_order` keeps only the
/// base-layer traversal.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SearchTrace {
    pub query_id: u32,
    pub visit_order: Vec<u32>,
    pub dist_computations: u64,
}

impl SearchTrace {
    pub fn new(query_id: u32) -> Self {
        Self {
            query_id,
            visit_order: Vec::new(),
            dist_computations: 0,
        }
    }
}

/// Distance-computation accounting for one search, with optional first-visit
/// order recording.
pub(crate) struct Tracer<'a> {
    pub comps: u64,
    pub order: Option<&'a mut Vec<u32>>,
}

impl<'a> Tracer<'a> {
    pub fn counting() -> Self {
        Self {
            comps: 0,
            order: None,
        }
    }

    pub fn recording(order: &'a mut Vec<u32>) -> Self {
        Self {
            comps: 0,
            order: Some(order),
        }
    }

    #[inline]
    fn visit(&mut self, node: u32) {
        self.comps += 1;
        if let Some(order) = self.order.as_deref_mut() {
            order.push(node);
        }
    }

    #[inline]
    fn count_only(&mut self) {
        self.comps += 1;
    }
}

/// Read-only view of one graph layer.
pub(crate) trait LayerView {
    fn neighbor_ids(&self, node: u32) -> &[u32];
}

impl LayerView for (&crate::graph::LayeredGraph, usize) {
    #[inline]
    fn neighbor_ids(&self, node: u32) -> &[u32] {
        self.0.links(self.1, node)
    }
}

impl LayerView for &crate::graph::FlatGraph {
    #[inline]
    fn neighbor_ids(&self, node: u32) -> &[u32] {
        self.links(node)
    }
}

/// Best-first beam search on one layer.
///
/// Keeps a candidate min-heap and a bounded result max-heap of size `ef`,
/// expanding the closest unexpanded candidate until it is farther than the
/// worst kept result. Every first-time distance evaluation marks the node
/// visited and lands in the trace in evaluation order. Returns up to `ef`
/// results sorted ascending by distance, ties broken by smaller id.
pub(crate) fn beam_search<V: LayerView>(
    view: V,
    qd: &QueryDist<'_>,
    entries: &[u32],
    ef: usize,
    visited: &mut VisitedSet,
    tracer: &mut Tracer<'_>,
) -> Vec<Candidate> {
    debug_assert!(ef >= 1);
    let mut candidates: BinaryHeap<std::cmp::Reverse<Candidate>> = BinaryHeap::new();
    let mut results: BinaryHeap<Candidate> = BinaryHeap::with_capacity(ef + 1);

    for &e in entries {
        if visited.insert(e) {
            let d = qd.dist(e);
            tracer.visit(e);
            let c = Candidate { node: e, dist: d };
            candidates.push(std::cmp::Reverse(c));
            results.push(c);
            if results.len() > ef {
                results.pop();
            }
        }
    }

    while let Some(std::cmp::Reverse(current)) = candidates.pop() {
        let worst = results.peek().copied();
        if let Some(w) = worst {
            if results.len() == ef && current.dist > w.dist {
                break;
            }
        }
        let ids = view.neighbor_ids(current.node);
        for (i, &nb) in ids.iter().enumerate() {
            if i + 1 < ids.len() {
                qd.prefetch(ids[i + 1]);
            }
            if visited.insert(nb) {
                let d = qd.dist(nb);
                tracer.visit(nb);
                let worst = results.peek().copied();
                let keep = match worst {
                    Some(w) if results.len() == ef => {
                        (Candidate { node: nb, dist: d }) < w
                    }
                    _ => true,
                };
                if keep {
                    let c = Candidate { node: nb, dist: d };
                    candidates.push(std::cmp::Reverse(c));
                    results.push(c);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
    }

    let mut out = results.into_vec();
    out.sort_unstable();
    out
}

/// Greedy single-best descent on one layer: hop to the closest unvisited
/// neighbor until no neighbor improves on the current node. Used above the
/// base layer, where the beam width is fixed at one.
pub(crate) fn greedy_step<V: LayerView>(
    view: V,
    qd: &QueryDist<'_>,
    start: Candidate,
    visited: &mut VisitedSet,
    tracer: &mut Tracer<'_>,
) -> Candidate {
    let mut cur = start;
    visited.insert(cur.node);
    loop {
        let mut improved = false;
        let ids = view.neighbor_ids(cur.node);
        for (i, &nb) in ids.iter().enumerate() {
            if i + 1 < ids.len() {
                qd.prefetch(ids[i + 1]);
            }
            if visited.insert(nb) {
                let d = qd.dist(nb);
                tracer.count_only();
                if d < cur.dist {
                    cur = Candidate { node: nb, dist: d };
                    improved = true;
                }
            }
        }
        if !improved {
            return cur;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_ordering_breaks_ties_by_id() {
        let a = Candidate { node: 3, dist: 1.0 };
        let b = Candidate { node: 7, dist: 1.0 };
        let c = Candidate { node: 1, dist: 2.0 };
        assert!(a < b);
        assert!(b < c);
    }

    #[test]
    fn visited_epochs_do_not_leak() {
        let mut v = VisitedSet::with_capacity(4);
        v.reset(4);
        assert!(v.insert(2));
        assert!(!v.insert(2));
        v.reset(4);
        assert!(v.insert(2));
    }
}
