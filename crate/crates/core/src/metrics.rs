//! Agreement and retrieval metrics.
//!
//! Correlation-style metrics (Spearman, Pearson, RMSE, outlier ratio)
//! operate on paired score slices. Retrieval metrics (precision@1, MRR,
//! MAP) operate on per-query relevance lists ordered best-first.

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "paired slices differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::arg("need at least two pairs"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite score"));
    }
    Ok(())
}

/// Fractional ranks (1-based); tied values share the average of the ranks
/// they span.
fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the mean of ranks i+1..=j+1
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson linear correlation in [-1, 1].
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::degenerate("constant input to correlation"));
    }
    // sqrt of the product, not the product of sqrts: when a == b this keeps
    // the denominator bit-identical to cov, so self-correlation is exactly 1.
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson over fractional ranks, so ties are
/// averaged rather than broken arbitrarily.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(&fractional_ranks(a), &fractional_ranks(b))
}

/// Root mean squared error.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / n).sqrt())
}

/// Fraction of predictions farther than two standard deviations from the
/// subjective score. With per-item standard deviations the threshold is
/// `2 * std[i]`; without them it falls back to `2 * rmse` over the batch.
pub fn outlier_ratio(subjective: &[f64], predicted: &[f64], stds: Option<&[f64]>) -> Result<f64> {
    check_pair(subjective, predicted)?;
    let n = subjective.len();
    let count = match stds {
        Some(s) => {
            if s.len() != n {
                return Err(Error::arg("stds length does not match scores"));
            }
            if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::arg("stds must be finite and non-negative"));
            }
            subjective
                .iter()
                .zip(predicted)
                .zip(s)
                .filter(|((a, b), sd)| (*a - *b).abs() > 2.0 * **sd)
                .count()
        }
        None => {
            let thr = 2.0 * rmse(subjective, predicted)?;
            subjective
                .iter()
                .zip(predicted)
                .filter(|(a, b)| (*a - *b).abs() > thr)
                .count()
        }
    };
    Ok(count as f64 / n as f64)
}

fn check_relevance(queries: &[Vec<bool>]) -> Result<()> {
    if queries.is_empty() {
        return Err(Error::arg("no queries"));
    }
    if queries.iter().any(|q| q.is_empty()) {
        return Err(Error::arg("empty ranked list"));
    }
    Ok(())
}

/// Fraction of queries whose top-ranked item is relevant.
pub fn precision_at_1(queries: &[Vec<bool>]) -> Result<f64> {
    check_relevance(queries)?;
    let hits = queries.iter().filter(|q| q[0]).count();
    Ok(hits as f64 / queries.len() as f64)
}

/// Mean reciprocal rank of the first relevant item; a query with no
/// relevant item contributes 0.
pub fn mean_reciprocal_rank(queries: &[Vec<bool>]) -> Result<f64> {
    check_relevance(queries)?;
    let sum: f64 = queries
        .iter()
        .map(|q| {
            q.iter()
                .position(|&r| r)
                .map_or(0.0, |p| 1.0 / (p + 1) as f64)
        })
        .sum();
    Ok(sum / queries.len() as f64)
}

/// Mean average precision. Average precision per query is the mean of the
/// precision values at each relevant position; no relevant items gives 0.
pub fn mean_average_precision(queries: &[Vec<bool>]) -> Result<f64> {
    check_relevance(queries)?;
    let sum: f64 = queries.iter().map(|q| average_precision(q)).sum();
    Ok(sum / queries.len() as f64)
}

fn average_precision(ranked: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (i, &rel) in ranked.iter().enumerate() {
        if rel {
            hits += 1;
            acc += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        acc / hits as f64
    }
}
