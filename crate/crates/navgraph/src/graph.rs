//! Adjacency storage for layered and flat proximity graphs.
//!
//! Neighbor lists live in fixed-capacity contiguous slots (stride `cap + 1`,
//! first word is the degree) so the search loop can prefetch a neighbor's
//! vector before scoring it. Layer 0 holds every node at capacity `m0`;
//! upper layers hold the nodes whose sampled level reaches them, at capacity
//! `m`. By convention `m0 = 2 * m`, the base-layer bound of the reference
//! implementations this artifact mirrors.
//!
//! During construction, candidate planning takes the graph by shared
//! reference and link application takes it exclusively, so readers can never
//! observe a partially written list. A finished graph is read-only.

use crate::error::{Error, Result};

/// A hierarchical adjacency structure: layer 0 holds all nodes, each upper
/// layer a geometrically thinner subset.
#[derive(Debug, Clone)]
pub struct LayeredGraph {
    m: u32,
    m0: u32,
    /// Sampled level per node.
    levels: Vec<u32>,
    /// Layer-0 slots, stride `m0 + 1`: `[degree, ids...]` per node.
    base: Vec<u32>,
    /// Upper-layer slots for nodes with level >= 1, stride `m + 1` per level.
    upper: Vec<Option<Box<[u32]>>>,
    /// Node with the maximal level, if any node exists.
    entry: Option<u32>,
    max_level: u32,
}

impl LayeredGraph {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!("m = {m} must be >= 2")));
        }
        Ok(Self {
            m: m as u32,
            m0: (2 * m) as u32,
            levels: Vec::new(),
            base: Vec::new(),
            upper: Vec::new(),
            entry: None,
            max_level: 0,
        })
    }

    pub fn with_capacity(m: usize, nodes: usize) -> Result<Self> {
        let mut g = Self::new(m)?;
        g.levels.reserve(nodes);
        g.base.reserve(nodes * (g.m0 as usize + 1));
        g.upper.reserve(nodes);
        Ok(g)
    }

    pub fn num_nodes(&self) -> usize {
        self.levels.len()
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn m0(&self) -> u32 {
        self.m0
    }

    pub fn level(&self, node: u32) -> u32 {
        self.levels[node as usize]
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// Entry node id; `None` for an empty graph.
    pub fn entry(&self) -> Option<u32> {
        self.entry
    }

    pub fn capacity_at(&self, layer: usize) -> usize {
        if layer == 0 {
            self.m0 as usize
        } else {
            self.m as usize
        }
    }

    /// Appends a node with the given level and empty adjacency everywhere.
    /// Does not touch the entry point: a node becomes the entry only via
    /// [`Self::promote_entry`], once its links exist, so searches planned
    /// concurrently never start from an unlinked node.
    pub fn push_node(&mut self, level: u32) -> u32 {
        let id = self.levels.len() as u32;
        self.levels.push(level);
        self.base.resize(self.base.len() + self.m0 as usize + 1, 0);
        self.upper.push(if level > 0 {
            Some(vec![0u32; level as usize * (self.m as usize + 1)].into_boxed_slice())
        } else {
            None
        });
        id
    }

    /// Makes `node` the entry point if its level exceeds the current maximum
    /// (or the graph had none).
    pub fn promote_entry(&mut self, node: u32) {
        let level = self.levels[node as usize];
        if self.entry.is_none() || level > self.max_level {
            self.entry = Some(node);
            self.max_level = level;
        }
    }

    /// Current adjacency of `node` at `layer`, insertion-ordered.
    pub fn neighbors(&self, layer: usize, node: u32) -> Result<&[u32]> {
        let idx = node as usize;
        if idx >= self.levels.len() || layer > self.levels[idx] as usize {
            return Err(Error::NodeNotFound { node, layer });
        }
        Ok(self.links(layer, node))
    }

    /// Unchecked adjacency lookup for the search loop.
    #[inline]
    pub(crate) fn links(&self, layer: usize, node: u32) -> &[u32] {
        if layer == 0 {
            let start = node as usize * (self.m0 as usize + 1);
            let deg = self.base[start] as usize;
            &self.base[start + 1..start + 1 + deg]
        } else {
            let slab = self.upper[node as usize].as_ref().expect("node has upper layers");
            let stride = self.m as usize + 1;
            let start = (layer - 1) * stride;
            let deg = slab[start] as usize;
            &slab[start + 1..start + 1 + deg]
        }
    }

    /// Replaces the adjacency of `node` at `layer` after validating capacity,
    /// self-loops, duplicates, and that every id exists at that layer.
    pub fn set_neighbors(&mut self, layer: usize, node: u32, ids: &[u32]) -> Result<()> {
        let idx = node as usize;
        if idx >= self.levels.len() || layer > self.levels[idx] as usize {
            return Err(Error::NodeNotFound { node, layer });
        }
        let cap = self.capacity_at(layer);
        if ids.len() > cap {
            return Err(Error::CapacityExceeded {
                got: ids.len(),
                cap,
                layer,
            });
        }
        for (i, &id) in ids.iter().enumerate() {
            if id == node {
                return Err(Error::SelfLoop(node));
            }
            if id as usize >= self.levels.len() || (self.levels[id as usize] as usize) < layer {
                return Err(Error::NodeNotFound { node: id, layer });
            }
            if ids[..i].contains(&id) {
                return Err(Error::DuplicateNeighbor(id));
            }
        }
        self.store_links(layer, node, ids);
        Ok(())
    }

    /// Fast-path link write used by the builders, which guarantee validity.
    #[inline]
    pub(crate) fn store_links(&mut self, layer: usize, node: u32, ids: &[u32]) {
        debug_assert!(ids.len() <= self.capacity_at(layer));
        debug_assert!(!ids.contains(&node));
        if layer == 0 {
            let start = node as usize * (self.m0 as usize + 1);
            self.base[start] = ids.len() as u32;
            self.base[start + 1..start + 1 + ids.len()].copy_from_slice(ids);
        } else {
            let slab = self.upper[node as usize].as_mut().expect("node has upper layers");
            let stride = self.m as usize + 1;
            let start = (layer - 1) * stride;
            slab[start] = ids.len() as u32;
            slab[start + 1..start + 1 + ids.len()].copy_from_slice(ids);
        }
    }

    /// Appends one id to the node's list; caller checks capacity beforehand.
    pub(crate) fn push_link(&mut self, layer: usize, node: u32, id: u32) {
        debug_assert!(id != node);
        if layer == 0 {
            let start = node as usize * (self.m0 as usize + 1);
            let deg = self.base[start] as usize;
            debug_assert!(deg < self.m0 as usize);
            self.base[start + 1 + deg] = id;
            self.base[start] = (deg + 1) as u32;
        } else {
            let slab = self.upper[node as usize].as_mut().expect("node has upper layers");
            let stride = self.m as usize + 1;
            let start = (layer - 1) * stride;
            let deg = slab[start] as usize;
            debug_assert!(deg < self.m as usize);
            slab[start + 1 + deg] = id;
            slab[start] = (deg + 1) as u32;
        }
    }

    /// Hard structural invariants: degree bounds, no self-loops, no
    /// duplicates, neighbor levels, entry maximality, upper-layer nesting.
    pub fn validate(&self) -> Result<()> {
        let n = self.levels.len();
        if n == 0 {
            return Ok(());
        }
        let entry = self.entry.ok_or(Error::EmptyIndex)?;
        if self.levels[entry as usize] != self.max_level {
            return Err(Error::Malformed(format!(
                "entry {} has level {}, expected max level {}",
                entry, self.levels[entry as usize], self.max_level
            )));
        }
        if self.levels.iter().any(|&l| l > self.max_level) {
            return Err(Error::Malformed("node level above max level".into()));
        }
        for node in 0..n as u32 {
            for layer in 0..=self.levels[node as usize] as usize {
                let links = self.links(layer, node);
                if links.len() > self.capacity_at(layer) {
                    return Err(Error::CapacityExceeded {
                        got: links.len(),
                        cap: self.capacity_at(layer),
                        layer,
                    });
                }
                for (i, &id) in links.iter().enumerate() {
                    if id == node {
                        return Err(Error::SelfLoop(node));
                    }
                    if id as usize >= n || (self.levels[id as usize] as usize) < layer {
                        return Err(Error::NodeNotFound { node: id, layer });
                    }
                    if links[..i].contains(&id) {
                        return Err(Error::DuplicateNeighbor(id));
                    }
                }
            }
        }
        Ok(())
    }

    /// Fraction of nodes reachable from the entry point over layer 0 viewed
    /// as an undirected graph. A health statistic, not a hard invariant.
    pub fn reachable_fraction(&self) -> f64 {
        undirected_reach(self.num_nodes(), self.entry, |node| self.links(0, node))
    }

    pub fn mean_degree_layer0(&self) -> f64 {
        if self.num_nodes() == 0 {
            return 0.0;
        }
        let total: usize = (0..self.num_nodes() as u32)
            .map(|v| self.links(0, v).len())
            .sum();
        total as f64 / self.num_nodes() as f64
    }
}

/// Single-layer adjacency with the same slot layout as a base layer.
#[derive(Debug, Clone)]
pub struct FlatGraph {
    m0: u32,
    /// Slots of stride `m0 + 1`: `[degree, ids...]` per node.
    slots: Vec<u32>,
    count: usize,
    entry: Option<u32>,
}

impl FlatGraph {
    pub fn new(m0: usize) -> Result<Self> {
        if m0 < 2 {
            return Err(Error::InvalidParameter(format!("m0 = {m0} must be >= 2")));
        }
        Ok(Self {
            m0: m0 as u32,
            slots: Vec::new(),
            count: 0,
            entry: None,
        })
    }

    /// Copies the base layer of a hierarchical graph verbatim; the entry
    /// point keeps its layer-0 identity.
    pub fn from_base_layer(g: &LayeredGraph) -> Result<Self> {
        if g.num_nodes() == 0 {
            return Err(Error::EmptyIndex);
        }
        let mut flat = Self::new(g.m0() as usize)?;
        flat.slots.reserve(g.num_nodes() * (g.m0() as usize + 1));
        for node in 0..g.num_nodes() as u32 {
            flat.push_node();
            flat.store_links(node, g.links(0, node));
        }
        flat.entry = g.entry();
        Ok(flat)
    }

    pub fn num_nodes(&self) -> usize {
        self.count
    }

    pub fn m0(&self) -> u32 {
        self.m0
    }

    pub fn entry(&self) -> Option<u32> {
        self.entry
    }

    pub fn set_entry(&mut self, node: u32) {
        self.entry = Some(node);
    }

    pub fn push_node(&mut self) -> u32 {
        let id = self.count as u32;
        self.count += 1;
        self.slots.resize(self.slots.len() + self.m0 as usize + 1, 0);
        if self.entry.is_none() {
            self.entry = Some(id);
        }
        id
    }

    pub fn neighbors(&self, node: u32) -> Result<&[u32]> {
        if node as usize >= self.count {
            return Err(Error::NodeNotFound { node, layer: 0 });
        }
        Ok(self.links(node))
    }

    #[inline]
    pub(crate) fn links(&self, node: u32) -> &[u32] {
        let start = node as usize * (self.m0 as usize + 1);
        let deg = self.slots[start] as usize;
        &self.slots[start + 1..start + 1 + deg]
    }

    pub fn set_neighbors(&mut self, node: u32, ids: &[u32]) -> Result<()> {
        if node as usize >= self.count {
            return Err(Error::NodeNotFound { node, layer: 0 });
        }
        if ids.len() > self.m0 as usize {
            return Err(Error::CapacityExceeded {
                got: ids.len(),
                cap: self.m0 as usize,
                layer: 0,
            });
        }
        for (i, &id) in ids.iter().enumerate() {
            if id == node {
                return Err(Error::SelfLoop(node));
            }
            if id as usize >= self.count {
                return Err(Error::NodeNotFound { node: id, layer: 0 });
            }
            if ids[..i].contains(&id) {
                return Err(Error::DuplicateNeighbor(id));
            }
        }
        self.store_links(node, ids);
        Ok(())
    }

    #[inline]
    pub(crate) fn store_links(&mut self, node: u32, ids: &[u32]) {
        debug_assert!(ids.len() <= self.m0 as usize);
        debug_assert!(!ids.contains(&node));
        let start = node as usize * (self.m0 as usize + 1);
        self.slots[start] = ids.len() as u32;
        self.slots[start + 1..start + 1 + ids.len()].copy_from_slice(ids);
    }

    #[inline]
    pub(crate) fn push_link(&mut self, node: u32, id: u32) {
        debug_assert!(id != node);
        let start = node as usize * (self.m0 as usize + 1);
        let deg = self.slots[start] as usize;
        debug_assert!(deg < self.m0 as usize);
        self.slots[start + 1 + deg] = id;
        self.slots[start] = (deg + 1) as u32;
    }

    pub fn validate(&self) -> Result<()> {
        for node in 0..self.count as u32 {
            let links = self.links(node);
            if links.len() > self.m0 as usize {
                return Err(Error::CapacityExceeded {
                    got: links.len(),
                    cap: self.m0 as usize,
                    layer: 0,
                });
            }
            for (i, &id) in links.iter().enumerate() {
                if id == node {
                    return Err(Error::SelfLoop(node));
                }
                if id as usize >= self.count {
                    return Err(Error::NodeNotFound { node: id, layer: 0 });
                }
                if links[..i].contains(&id) {
                    return Err(Error::DuplicateNeighbor(id));
                }
            }
        }
        Ok(())
    }

    pub fn reachable_fraction(&self) -> f64 {
        undirected_reach(self.count, self.entry, |node| self.links(node))
    }

    pub fn mean_degree(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let total: usize = (0..self.count as u32).map(|v| self.links(v).len()).sum();
        total as f64 / self.count as f64
    }
}

fn undirected_reach<'a, F>(n: usize, entry: Option<u32>, links: F) -> f64
where
    F: Fn(u32) -> &'a [u32],
{
    let entry = match entry {
        Some(e) if n > 0 => e,
        _ => return 0.0,
    };
    // Materialize undirected adjacency once; BFS from the entry point.
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for v in 0..n as u32 {
        for &w in links(v) {
            adj[v as usize].push(w);
            adj[w as usize].push(v);
        }
    }
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen[entry as usize] = true;
    queue.push_back(entry);
    let mut reached = 1usize;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v as usize] {
            if !seen[w as usize] {
                seen[w as usize] = true;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    reached as f64 / n as f64
}
