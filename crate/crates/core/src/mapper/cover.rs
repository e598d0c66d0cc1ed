//! Interval covers of the filter range and their pullback cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lens::{ColumnKind, FilterMatrix};

/// Largest accepted gain; beyond it widened intervals swallow their neighbours.
pub const MAX_GAIN: f64 = 0.9;

/// Resolution and gain for one numeric filter dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub resolution: usize,
    pub gain: f64,
}

impl IntervalSpec {
    pub fn new(resolution: usize, gain: f64) -> Result<Self> {
        let spec = IntervalSpec { resolution, gain };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.resolution == 0 {
            return Err(Error::invalid("resolution must be at least 1"));
        }
        if !(0.0..=MAX_GAIN).contains(&self.gain) {
            return Err(Error::invalid(format!(
                "gain must lie in [0, {MAX_GAIN}], got {}",
                self.gain
            )));
        }
        Ok(())
    }
}

impl Default for IntervalSpec {
    fn default() -> Self {
        IntervalSpec {
            resolution: 10,
            gain: 0.3,
        }
    }
}

/// One [`IntervalSpec`] per numeric filter column, in column order.
/// Categorical columns take no parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverSpec {
    dims: Vec<IntervalSpec>,
}

impl CoverSpec {
    pub fn new(dims: Vec<IntervalSpec>) -> Result<Self> {
        for d in &dims {
            d.validate()?;
        }
        Ok(CoverSpec { dims })
    }

    /// The same resolution and gain on `numeric_dims` dimensions.
    pub fn uniform(numeric_dims: usize, resolution: usize, gain: f64) -> Result<Self> {
        Self::new(vec![IntervalSpec { resolution, gain }; numeric_dims])
    }

    pub fn dims(&self) -> &[IntervalSpec] {
        &self.dims
    }
}

/// A widened cover interval. The first interval is closed below and the
/// last is open-ended above; every other interval is `(lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    first: bool,
    last: bool,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        (self.first || v > self.lo) && (self.last || v <= self.hi)
    }
}

/// `resolution` equal-width intervals over `[min, max]`, each widened
/// symmetrically so that consecutive intervals overlap by `gain` of their
/// widened length.
pub fn intervals(min: f64, max: f64, spec: IntervalSpec) -> Vec<Interval> {
    if max <= min {
        return vec![Interval {
            lo: min,
            hi: max,
            first: true,
            last: true,
        }];
    }
    let s = spec.resolution;
    let width = (max - min) / s as f64;
    // Widened length L satisfies L - width = gain * L.
    let ext = width * spec.gain / (2.0 * (1.0 - spec.gain));
    (0..s)
        .map(|i| Interval {
            lo: min + i as f64 * width - ext,
            hi: min + (i + 1) as f64 * width + ext,
            first: i == 0,
            last: i + 1 == s,
        })
        .collect()
}

/// Cell key: interval index per numeric column, class index per categorical
/// column, in filter column order.
pub type CellKey = Vec<usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub key: CellKey,
    /// Record indices, ascending.
    pub members: Vec<usize>,
}

/// Nonempty cover cells in key order, plus each record's cell ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverAssignment {
    pub cells: Vec<Cell>,
    pub memberships: Vec<Vec<usize>>,
}

impl CoverAssignment {
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Set of cell keys containing record `i`.
    pub fn keys_of(&self, i: usize) -> Vec<&CellKey> {
        self.memberships[i].iter().map(|&c| &self.cells[c].key).collect()
    }
}

/// Assigns every record to the Cartesian product of its interval memberships
/// (numeric columns) and its exact class cell (categorical columns).
pub fn build_cover(filters: &FilterMatrix, spec: &CoverSpec) -> Result<CoverAssignment> {
    let n = filters.rows();
    if n == 0 {
        return Err(Error::Empty("cannot cover an empty record set".into()));
    }
    let numeric = filters.numeric_columns().count();
    if numeric != spec.dims.len() {
        return Err(Error::invalid(format!(
            "cover spec has {} numeric dimensions, filters have {numeric}",
            spec.dims.len()
        )));
    }

    // Per column, per record: the indices this value falls in.
    let mut per_column: Vec<Vec<Vec<usize>>> = Vec::with_capacity(filters.width());
    let mut numeric_idx = 0;
    for (j, kind) in filters.kinds().iter().enumerate() {
        let col = filters.column(j);
        match kind {
            ColumnKind::Categorical => {
                per_column.push(col.iter().map(|&v| vec![v as usize]).collect());
            }
            ColumnKind::Numeric => {
                let (min, max) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
                let ivs = intervals(min, max, spec.dims[numeric_idx]);
                numeric_idx += 1;
                per_column.push(
                    col.iter()
                        .map(|&v| {
                            let hits: Vec<usize> = ivs
                                .iter()
                                .enumerate()
                                .filter(|(_, iv)| iv.contains(v))
                                .map(|(s, _)| s)
                                .collect();
                            debug_assert!(!hits.is_empty(), "value {v} escaped the cover");
                            hits
                        })
                        .collect(),
                );
            }
        }
    }

    let mut by_key: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let mut keys: Vec<CellKey> = vec![Vec::with_capacity(per_column.len())];
        for col in &per_column {
            keys = keys
                .into_iter()
                .flat_map(|k| {
                    col[i].iter().map(move |&s| {
                        let mut k2 = k.clone();
                        k2.push(s);
                        k2
                    })
                })
                .collect();
        }
        for k in keys {
            by_key.entry(k).or_default().push(i);
        }
    }

    let mut memberships = vec![Vec::new(); n];
    let cells: Vec<Cell> = by_key
        .into_iter()
        .enumerate()
        .map(|(c, (key, members))| {
            for &i in &members {
                memberships[i].push(c);
            }
            Cell { key, members }
        })
        .collect();
    Ok(CoverAssignment { cells, memberships })
}
