//! Vector dataset storage, metrics, and dataset file I/O.

pub mod io;
pub mod kernels;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance function tag.
///
/// `L2Squared` keeps distances squared: only the ordering matters for search,
/// and skipping the square root saves work per comparison. `Angular` is
/// `1 - cos(a, b)`, in `[0, 2]` for nonzero vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2Squared,
    Angular,
}

impl Metric {
    pub fn tag(self) -> u32 {
        match self {
            Metric::L2Squared => 0,
            Metric::Angular => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(Metric::L2Squared),
            1 => Ok(Metric::Angular),
            other => Err(Error::Malformed(format!("unknown metric tag {other}"))),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "l2" | "l2sq" | "euclidean" => Ok(Metric::L2Squared),
            "angular" | "cosine" => Ok(Metric::Angular),
            other => Err(Error::InvalidParameter(format!(
                "unknown metric {other:?} (expected l2 or angular)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::L2Squared => "l2",
            Metric::Angular => "angular",
        }
    }
}

/// Distance between two vectors of equal dimension.
///
/// Angular distance rejects zero vectors rather than defining a sentinel
/// value. Norms are computed on the fly here; index search paths use the
/// norms cached by [`VectorSet`], which come from the same kernel.
pub fn distance(metric: Metric, a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    match metric {
        Metric::L2Squared => Ok(kernels::l2sq(a, b)),
        Metric::Angular => {
            let na = kernels::norm(a);
            let nb = kernels::norm(b);
            if na == 0.0 {
                return Err(Error::ZeroVector("left operand".into()));
            }
            if nb == 0.0 {
                return Err(Error::ZeroVector("right operand".into()));
            }
            Ok(1.0 - kernels::dot(a, b) / (na * nb))
        }
    }
}

/// A contiguous row-major float32 dataset with its metric tag.
///
/// Immutable after construction; safe for unrestricted concurrent reads.
#[derive(Debug, Clone)]
pub struct VectorSet {
    dim: usize,
    count: usize,
    data: Vec<f32>,
    metric: Metric,
    /// Row norms, cached when the metric is angular.
    norms: Vec<f32>,
}

impl VectorSet {
    /// Wraps row-major data, validating shape and (for angular) nonzero rows.
    pub fn new(dim: usize, data: Vec<f32>, metric: Metric) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(Error::InvalidParameter("dim must be positive".into()));
        }
        let count = if dim == 0 { 0 } else { data.len() / dim };
        if count * dim != data.len() {
            return Err(Error::Malformed(format!(
                "data length {} is not a multiple of dim {}",
                data.len(),
                dim
            )));
        }
        let norms = match metric {
            Metric::Angular => {
                let mut norms = Vec::with_capacity(count);
                for row in 0..count {
                    let n = kernels::norm(&data[row * dim..(row + 1) * dim]);
                    if n == 0.0 {
                        return Err(Error::ZeroVector(format!("row {row}")));
                    }
                    norms.push(n);
                }
                norms
            }
            Metric::L2Squared => Vec::new(),
        };
        Ok(Self {
            dim,
            count,
            data,
            metric,
            norms,
        })
    }

    /// Re-tags the set with a different metric, revalidating invariants.
    pub fn with_metric(self, metric: Metric) -> Result<Self> {
        Self::new(self.dim, self.data, metric)
    }

    /// Empty set for incremental construction by the index builders.
    pub(crate) fn empty(dim: usize, metric: Metric) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dim must be positive".into()));
        }
        Ok(Self {
            dim,
            count: 0,
            data: Vec::new(),
            metric,
            norms: Vec::new(),
        })
    }

    /// Appends one row, keeping the set's invariants intact.
    pub(crate) fn push_row(&mut self, row: &[f32]) -> Result<u32> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        if self.metric == Metric::Angular {
            let n = kernels::norm(row);
            if n == 0.0 {
                return Err(Error::ZeroVector(format!("row {}", self.count)));
            }
            self.norms.push(n);
        }
        self.data.extend_from_slice(row);
        self.count += 1;
        Ok((self.count - 1) as u32)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Cached row norm (angular sets only).
    #[inline]
    pub(crate) fn row_norm(&self, i: usize) -> f32 {
        self.norms[i]
    }

    /// Distance between two stored vectors.
    #[inline]
    pub fn dist_between(&self, i: u32, j: u32) -> f32 {
        let a = self.vector(i as usize);
        let b = self.vector(j as usize);
        match self.metric {
            Metric::L2Squared => kernels::l2sq(a, b),
            Metric::Angular => {
                1.0 - kernels::dot(a, b) / (self.row_norm(i as usize) * self.row_norm(j as usize))
            }
        }
    }

    #[inline]
    pub(crate) fn prefetch(&self, i: u32) {
        kernels::prefetch(self.vector(i as usize));
    }
}

/// Distance evaluator for one query against a [`VectorSet`].
///
/// Precomputes the query norm once so angular scoring in the beam loop is a
/// single dot product against cached row norms.
pub struct QueryDist<'a> {
    set: &'a VectorSet,
    query: &'a [f32],
    inv_qnorm: f32,
}

impl<'a> QueryDist<'a> {
    pub fn new(set: &'a VectorSet, query: &'a [f32]) -> Result<Self> {
        if query.len() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                got: query.len(),
            });
        }
        let inv_qnorm = match set.metric() {
            Metric::L2Squared => 0.0,
            Metric::Angular => {
                let n = kernels::norm(query);
                if n == 0.0 {
                    return Err(Error::ZeroVector("query".into()));
                }
                1.0 / n
            }
        };
        Ok(Self {
            set,
            query,
            inv_qnorm,
        })
    }

    #[inline]
    pub fn dist(&self, id: u32) -> f32 {
        let v = self.set.vector(id as usize);
        match self.set.metric() {
            Metric::L2Squared => kernels::l2sq(self.query, v),
            Metric::Angular => {
                1.0 - kernels::dot(self.query, v) * self.inv_qnorm / self.set.row_norm(id as usize)
            }
        }
    }

    #[inline]
    pub fn prefetch(&self, id: u32) {
        self.set.prefetch(id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// f64 reference loop, the correctness oracle for the f32 fast path.
    fn l2sq_ref(a: &[f32], b: &[f32]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| {
                let d = x as f64 - y as f64;
                d * d
            })
            .sum()
    }

    fn dot_ref(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
    }

    fn angular_ref(a: &[f32], b: &[f32]) -> f64 {
        let na = dot_ref(a, a).sqrt();
        let nb = dot_ref(b, b).sqrt();
        1.0 - dot_ref(a, b) / (na * nb)
    }

    fn random_vec(rng: &mut StdRng, d: usize) -> Vec<f32> {
        (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
    }

    #[test]
    fn l2_three_four_five() {
        let d = distance(Metric::L2Squared, &[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!(d, 25.0);
    }

    #[test]
    fn angular_self_is_zero() {
        let mut rng = StdRng::seed_from_u64(7);
        for d in [2, 17, 64] {
            let x = random_vec(&mut rng, d);
            let dist = distance(Metric::Angular, &x, &x).unwrap();
            assert!(dist.abs() <= 1e-6, "angular self-distance {dist}");
        }
    }

    #[test]
    fn l2_matches_f64_reference_128d() {
        let mut rng = StdRng::seed_from_u64(42);
        let a = random_vec(&mut rng, 128);
        let b = random_vec(&mut rng, 128);
        let fast = distance(Metric::L2Squared, &a, &b).unwrap() as f64;
        let oracle = l2sq_ref(&a, &b);
        assert!(
            (fast - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "fast {fast} vs oracle {oracle}"
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(distance(Metric::L2Squared, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn angular_zero_vector_rejected() {
        assert!(distance(Metric::Angular, &[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(VectorSet::new(2, vec![1.0, 0.0, 0.0, 0.0], Metric::Angular).is_err());
    }

    #[test]
    fn scalar_symmetry_exact() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..200 {
            let d = rng.gen_range(1..40);
            let a = random_vec(&mut rng, d);
            let b = random_vec(&mut rng, d);
            let ab = kernels::l2sq(&a, &b);
            let ba = kernels::l2sq(&b, &a);
            assert_eq!(ab.to_bits(), ba.to_bits());
        }
    }

    #[test]
    fn triangle_inequality_on_rooted_l2() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..500 {
            let d = rng.gen_range(1..32);
            let a = random_vec(&mut rng, d);
            let b = random_vec(&mut rng, d);
            let c = random_vec(&mut rng, d);
            let ab = kernels::l2sq(&a, &b).sqrt();
            let bc = kernels::l2sq(&b, &c).sqrt();
            let ac = kernels::l2sq(&a, &c).sqrt();
            assert!(ac <= ab + bc + 1e-5);
        }
    }

    #[test]
    fn vectorized_matches_scalar_oracle_across_dims() {
        let mut rng = StdRng::seed_from_u64(2024);
        for d in [4usize, 8, 96, 100, 128, 200, 256, 960] {
            for _ in 0..1000 {
                let a = random_vec(&mut rng, d);
                let b = random_vec(&mut rng, d);
                let fast = kernels::l2sq(&a, &b) as f64;
                let oracle = l2sq_ref(&a, &b);
                assert!(
                    (fast - oracle).abs() <= 1e-6 * oracle.abs().max(1e-3),
                    "d={d}: fast {fast} vs oracle {oracle}"
                );
                // The dot sum cancels, so its error scales with the sum of
                // absolute terms, not the result.
                let fd = kernels::dot(&a, &b) as f64;
                let od = dot_ref(&a, &b);
                let scale: f64 = a
                    .iter()
                    .zip(&b)
                    .map(|(&x, &y)| (x as f64 * y as f64).abs())
                    .sum();
                assert!((fd - od).abs() <= 1e-6 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn angular_matches_f64_reference() {
        let mut rng = StdRng::seed_from_u64(5);
        for d in [4usize, 8, 100, 256, 960] {
            for _ in 0..1000 {
                let a = random_vec(&mut rng, d);
                let b = random_vec(&mut rng, d);
                let fast = distance(Metric::Angular, &a, &b).unwrap() as f64;
                let oracle = angular_ref(&a, &b);
                // Relative 1e-6 away from zero; near-zero angular distances
                // cancel catastrophically for any f32 path, so the bound
                // there is absolute at the same level (the metric spans
                // [0, 2]).
                assert!(
                    (fast - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
                    "d={d}: {fast} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn query_dist_agrees_with_distance() {
        let mut rng = StdRng::seed_from_u64(9);
        let data: Vec<f32> = (0..40 * 16).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        for metric in [Metric::L2Squared, Metric::Angular] {
            let set = VectorSet::new(16, data.clone(), metric).unwrap();
            let q = random_vec(&mut rng, 16);
            let qd = QueryDist::new(&set, &q).unwrap();
            for i in 0..set.count() {
                let via_query = qd.dist(i as u32) as f64;
                let direct = distance(metric, &q, set.vector(i)).unwrap() as f64;
                assert!((via_query - direct).abs() <= 1e-6);
            }
        }
    }
}
