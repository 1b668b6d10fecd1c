//! Statistics used by the hubness analysis and the benchmark harness:
//! population skewness, nearest-rank percentiles, Mann-Whitney U,
//! Welch's t, and Cohen's d.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Outcome of a two-sample hypothesis test. The one-sided alternative is
/// always "sample `a` is stochastically greater". `effect_size` is Cohen's d
/// with a pooled standard deviation, present when defined.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub effect_size: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
}

/// Population skewness `m3 / m2^(3/2)`.
pub fn skewness(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::EmptySample);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    for &x in samples {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    if m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(m3 / m2.powf(1.5))
}

/// Nearest-rank index (0-based) into a sorted sample of length `len`:
/// `ceil(p/100 * len)` in 1-based terms, with p = 0 mapping to the minimum.
pub fn nearest_rank_index(len: usize, p: f64) -> Result<usize> {
    if len == 0 {
        return Err(Error::EmptySample);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let rank = (p / 100.0 * len as f64).ceil() as usize;
    Ok(rank.clamp(1, len) - 1)
}

/// Nearest-rank percentile of an already-sorted slice.
pub fn percentile_sorted<T: Copy>(sorted: &[T], p: f64) -> Result<T> {
    Ok(sorted[nearest_rank_index(sorted.len(), p)?])
}

/// Mann-Whitney U for "a stochastically greater than b".
///
/// Small samples (`|a| + |b| <= 12`) use exact enumeration over all group
/// assignments; larger samples use the normal approximation with midrank tie
/// correction and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() + b.len() <= EXACT_ENUMERATION_LIMIT {
        mann_whitney_u_exact(a, b)
    } else {
        mann_whitney_u_approx(a, b)
    }
}

pub const EXACT_ENUMERATION_LIMIT: usize = 12;

/// Normal-approximation Mann-Whitney p-value (tie and continuity corrected).
pub fn mann_whitney_u_approx(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let u = u_statistic(a, b);
    let n = n1 + n2;
    let tie_term = tie_correction(a, b);
    let mean = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p = if var <= 0.0 {
        // Every pooled value tied: no evidence either way.
        0.5
    } else {
        let z = (u - mean - 0.5) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        1.0 - normal.cdf(z)
    };
    Ok(TestResult {
        statistic: u,
        p_value: p.clamp(0.0, 1.0),
        effect_size: cohen_d(a, b),
        n_a: a.len(),
        n_b: b.len(),
    })
}

/// Exact Mann-Whitney p-value by enumerating every assignment of the pooled
/// values to the two groups. Feasible only for small samples.
pub fn mann_whitney_u_exact(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = a.len() + b.len();
    if n > 20 {
        return Err(Error::InvalidParameter(format!(
            "exact enumeration over {n} pooled values is not feasible"
        )));
    }
    let u_obs = u_statistic(a, b);
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let n_a = a.len();
    let mut total = 0u64;
    let mut at_least = 0u64;
    let mut group_a = Vec::with_capacity(n_a);
    let mut group_b = Vec::with_capacity(b.len());
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n_a {
            continue;
        }
        group_a.clear();
        group_b.clear();
        for (i, &v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                group_a.push(v);
            } else {
                group_b.push(v);
            }
        }
        let u_perm = u_statistic(&group_a, &group_b);
        total += 1;
        if u_perm >= u_obs - 1e-9 {
            at_least += 1;
        }
    }
    Ok(TestResult {
        statistic: u_obs,
        p_value: at_least as f64 / total as f64,
        effect_size: cohen_d(a, b),
        n_a: a.len(),
        n_b: b.len(),
    })
}

/// U statistic for group `a` via midranks: `R_a - n_a (n_a + 1) / 2`.
fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut rank_sum_a = 0.0f64;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // 1-based midrank for the tie group [i, j)
        let midrank = (i + j + 1) as f64 / 2.0;
        for entry in &pooled[i..j] {
            if entry.1 {
                rank_sum_a += midrank;
            }
        }
        i = j;
    }
    let n1 = a.len() as f64;
    rank_sum_a - n1 * (n1 + 1.0) / 2.0
}

/// `sum(t^3 - t)` over pooled tie groups.
fn tie_correction(a: &[f64], b: &[f64]) -> f64 {
    let mut pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    pooled.sort_by(|x, y| x.total_cmp(y));
    let mut sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j] == pooled[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        sum += t * t * t - t;
        i = j;
    }
    sum
}

/// Welch's unequal-variance t-test, one-sided ("a greater").
pub fn two_sample_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::EmptySample);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let se2 = va / n1 + vb / n2;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / n1).powi(2) / (n1 - 1.0) + (vb / n2).powi(2) / (n2 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidParameter(format!("t distribution: {e}")))?;
    let p = 1.0 - dist.cdf(t);
    Ok(TestResult {
        statistic: t,
        p_value: p.clamp(0.0, 1.0),
        effect_size: cohen_d(a, b),
        n_a: a.len(),
        n_b: b.len(),
    })
}

/// Welch-Satterthwaite degrees of freedom, exposed for verification.
pub fn welch_df(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::EmptySample);
    }
    let (_, va) = mean_var(a);
    let (_, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let se2 = va / n1 + vb / n2;
    Ok(se2 * se2 / ((va / n1).powi(2) / (n1 - 1.0) + (vb / n2).powi(2) / (n2 - 1.0)))
}

/// Cohen's d: standardized mean difference over the pooled (n-1 weighted)
/// standard deviation.
pub fn effect_size(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::EmptySample);
    }
    cohen_d(a, b).ok_or(Error::ZeroVariance)
}

fn cohen_d(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let pooled = ((n1 - 1.0) * va + (n2 - 1.0) * vb) / (n1 + n2 - 2.0);
    if pooled <= 0.0 {
        return None;
    }
    Some((ma - mb) / pooled.sqrt())
}

/// Sample mean and unbiased (n-1) variance.
fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
