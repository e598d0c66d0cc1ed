//! Exact K-nearest-neighbour distances and the discrete distance-to-measure
//! estimator
//!
//! ```text
//! d²(x) = (1/K) Σ_{i=1..K} ‖x − X_(i)(x)‖²
//! ```
//!
//! where `X_(i)(x)` orders the multiset by distance to `x`. The multiset may
//! hold repeated points; they are stored once with a multiplicity so that a
//! vocabulary of a few thousand distinct words with tens of thousands of
//! occurrences costs one scan over the distinct words per query.
//!
//! All searches are exhaustive scans, so results are exact.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{sq_euclidean, Scalar};

/// Multiset of points in `R^dim`, stored as distinct rows with multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMultiset<T> {
    dim: usize,
    coords: Vec<T>,
    counts: Vec<usize>,
    total: usize,
}

impl<T: Scalar> PointMultiset<T> {
    /// Empty multiset of the given dimension.
    pub fn new(dim: usize) -> Self {
        PointMultiset {
            dim,
            coords: Vec::new(),
            counts: Vec::new(),
            total: 0,
        }
    }

    /// One entry per point, each with multiplicity one.
    pub fn from_points<P: AsRef<[T]>>(points: &[P]) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.as_ref().len());
        let mut ms = Self::new(dim);
        for p in points {
            ms.push(p.as_ref(), 1)?;
        }
        Ok(ms)
    }

    /// Adds `point` with multiplicity `count`. Zero counts are ignored.
    pub fn push(&mut self, point: &[T], count: usize) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: point.len(),
            });
        }
        if count == 0 {
            return Ok(());
        }
        self.coords.extend_from_slice(point);
        self.counts.push(count);
        self.total += count;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total size `N`, counting multiplicity.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Number of stored rows (distinct insertions).
    pub fn distinct_len(&self) -> usize {
        self.counts.len()
    }

    /// Stored rows with their multiplicities.
    pub fn entries(&self) -> impl Iterator<Item = (&[T], usize)> + '_ {
        self.coords
            .chunks_exact(self.dim.max(1))
            .zip(self.counts.iter().copied())
    }

    /// Every point repeated according to its multiplicity.
    pub fn expanded(&self) -> Vec<Vec<T>> {
        self.entries()
            .flat_map(|(p, c)| std::iter::repeat_n(p.to_vec(), c))
            .collect()
    }

    /// Applies `f` to every stored row, keeping multiplicities.
    pub fn map_points(&self, mut f: impl FnMut(&[T]) -> Vec<T>) -> Result<Self> {
        let mut out = None::<Self>;
        for (p, c) in self.entries() {
            let q = f(p);
            out.get_or_insert_with(|| Self::new(q.len())).push(&q, c)?;
        }
        Ok(out.unwrap_or_else(|| Self::new(self.dim)))
    }
}

/// Mass parameter of the estimator; `K = max(1, round(m_hat · N))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtmParams {
    m_hat: f64,
}

impl DtmParams {
    pub fn new(m_hat: f64) -> Result<Self> {
        if !(m_hat > 0.0 && m_hat < 1.0) {
            return Err(Error::invalid(format!("m_hat must lie in (0, 1), got {m_hat}")));
        }
        Ok(DtmParams { m_hat })
    }

    pub fn m_hat(&self) -> f64 {
        self.m_hat
    }

    /// Neighbour count for a multiset of size `n`, clamped to `[1, n]`.
    pub fn k_for(&self, n: usize) -> usize {
        let k = (self.m_hat * n as f64).round() as usize;
        k.clamp(1, n.max(1))
    }
}

fn check_query<T: Scalar>(query: &[T], ms: &PointMultiset<T>, k: usize) -> Result<()> {
    if ms.is_empty() {
        return Err(Error::Empty("point multiset is empty".into()));
    }
    if query.len() != ms.dim {
        return Err(Error::Dimension {
            expected: ms.dim,
            found: query.len(),
        });
    }
    if k == 0 || k > ms.len() {
        return Err(Error::TooManyNeighbours { k, n: ms.len() });
    }
    Ok(())
}

/// Distinct rows sorted by squared distance to `query`, truncated once `k`
/// points (with multiplicity) are covered.
fn nearest_rows<T: Scalar>(query: &[T], ms: &PointMultiset<T>, k: usize) -> Vec<(T, usize)> {
    let mut d: Vec<(T, usize)> = ms.entries().map(|(p, c)| (sq_euclidean(query, p), c)).collect();
    // Rows beyond the k-th can never contribute; a partial selection keeps
    // large multisets cheap without changing the result.
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, |a, b| a.0.partial_cmp(&b.0).unwrap());
        d.truncate(k);
    }
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut covered = 0;
    let mut end = d.len();
    for (i, &(_, c)) in d.iter().enumerate() {
        covered += c;
        if covered >= k {
            end = i + 1;
            break;
        }
    }
    d.truncate(end);
    d
}

/// The `k` smallest squared Euclidean distances from `query`, ascending,
/// duplicates counted with multiplicity.
pub fn knn_sq_distances<T: Scalar>(query: &[T], ms: &PointMultiset<T>, k: usize) -> Result<Vec<T>> {
    check_query(query, ms, k)?;
    let mut out = Vec::with_capacity(k);
    for (d, c) in nearest_rows(query, ms, k) {
        let take = c.min(k - out.len());
        out.extend(std::iter::repeat_n(d, take));
    }
    Ok(out)
}

/// Mean of the `k` smallest squared distances. This is the squared-distance
/// form; take the square root for a distance.
pub fn dtm_k<T: Scalar>(query: &[T], ms: &PointMultiset<T>, k: usize) -> Result<T> {
    check_query(query, ms, k)?;
    let mut remaining = k;
    let mut sum = T::zero();
    for (d, c) in nearest_rows(query, ms, k) {
        let take = c.min(remaining);
        sum = sum + d * T::from_usize_lossy(take);
        remaining -= take;
    }
    Ok(sum / T::from_usize_lossy(k))
}

/// Empirical dtm with `K` derived from `params` and the multiset size.
pub fn dtm<T: Scalar>(query: &[T], ms: &PointMultiset<T>, params: DtmParams) -> Result<T> {
    dtm_k(query, ms, params.k_for(ms.len()))
}

/// Elementwise [`dtm`] over a batch, order preserved. Queries run in parallel.
pub fn dtm_batch<T, Q>(queries: &[Q], ms: &PointMultiset<T>, params: DtmParams) -> Result<Vec<T>>
where
    T: Scalar,
    Q: AsRef<[T]> + Sync,
{
    queries.par_iter().map(|q| dtm(q.as_ref(), ms, params)).collect()
}
