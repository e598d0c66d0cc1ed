//! Filter ("lens") matrices.
//!
//! A lens assigns each record a vector of filter values. Categorical columns
//! (the ground-truth label) partition the records exactly; numeric columns are
//! later covered by overlapping intervals.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::RecordSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterComponent {
    GroundTruthLabel,
    MeanPredConf,
    MeanTruthConf,
    /// Column `index` of a supplied per-record coordinate table.
    ExternalCoord(usize),
    /// Coordinate `axis` of a `dims`-dimensional principal-direction projection.
    LinearProjection {
        axis: usize,
        dims: usize,
    },
}

impl FilterComponent {
    pub fn is_categorical(&self) -> bool {
        matches!(self, FilterComponent::GroundTruthLabel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FilterSpec {
    components: Vec<FilterComponent>,
}

impl FilterSpec {
    pub fn new(components: Vec<FilterComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("filter spec needs at least one component"));
        }
        let labels = components.iter().filter(|c| c.is_categorical()).count();
        if labels > 1 {
            return Err(Error::invalid("at most one GroundTruthLabel component is allowed"));
        }
        for c in &components {
            if let FilterComponent::LinearProjection { axis, dims } = *c {
                if dims == 0 || axis >= dims {
                    return Err(Error::invalid(format!(
                        "linear projection axis {axis} must be below dims {dims}"
                    )));
                }
            }
        }
        Ok(FilterSpec { components })
    }

    pub fn components(&self) -> &[FilterComponent] {
        &self.components
    }

    pub fn numeric_count(&self) -> usize {
        self.components.iter().filter(|c| !c.is_categorical()).count()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.components.iter().any(FilterComponent::is_categorical)
    }

    fn needs_external(&self) -> Option<usize> {
        self.components
            .iter()
            .filter_map(|c| match c {
                FilterComponent::ExternalCoord(i) => Some(*i),
                _ => None,
            })
            .max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Categorical,
    Numeric,
}

/// Filter values, column-major: `columns[j][i]` is filter `j` on record `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMatrix {
    kinds: Vec<ColumnKind>,
    columns: Vec<Vec<f64>>,
    rows: usize,
}

impl FilterMatrix {
    /// Builds a matrix from raw columns; numeric columns must be finite and
    /// categorical columns must hold non-negative integers.
    pub fn from_columns(kinds: Vec<ColumnKind>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if kinds.len() != columns.len() || kinds.is_empty() {
            return Err(Error::invalid("one kind per column and at least one column"));
        }
        let rows = columns[0].len();
        for (j, (kind, col)) in kinds.iter().zip(&columns).enumerate() {
            if col.len() != rows {
                return Err(Error::Dimension {
                    expected: rows,
                    found: col.len(),
                });
            }
            if let Some(bad) = col.iter().find(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("filter column {j} holds {bad}")));
            }
            if *kind == ColumnKind::Categorical && col.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
                return Err(Error::invalid(format!(
                    "categorical column {j} must hold class indices"
                )));
            }
        }
        Ok(FilterMatrix { kinds, columns, rows })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn numeric_columns(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(j, _)| self.kinds[*j] == ColumnKind::Numeric)
            .map(|(j, c)| (j, c.as_slice()))
    }
}

/// Per-record coordinates keyed by record id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoordinateTable {
    dim: usize,
    coords: BTreeMap<String, Vec<f64>>,
}

impl CoordinateTable {
    pub fn new(dim: usize) -> Self {
        CoordinateTable {
            dim,
            coords: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, coords: Vec<f64>) -> Result<()> {
        if coords.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: coords.len(),
            });
        }
        self.coords.insert(id.into(), coords);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.coords.get(id).map(Vec::as_slice)
    }
}

/// Reads an external coordinate file `id,c_0,c_1,...`.
pub fn load_coordinates(path: impl AsRef<Path>) -> Result<CoordinateTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(BufReader::new(file));
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.get(0) != Some("id") || header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "expected header `id,c_0,...`".into(),
        });
    }
    let dim = header.len() - 1;
    let mut table = CoordinateTable::new(dim);
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != dim + 1 {
            return Err(Error::RaggedRow {
                line,
                expected: dim,
                found: row.len().saturating_sub(1),
            });
        }
        let coords = (1..=dim)
            .map(|j| {
                row[j].trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad coordinate `{}`", &row[j]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        table.insert(row[0].to_string(), coords)?;
    }
    Ok(table)
}

/// Builds the filter matrix for `spec`.
pub fn compose_filters(
    records: &RecordSet,
    spec: &FilterSpec,
    external: Option<&CoordinateTable>,
) -> Result<FilterMatrix> {
    if let Some(max_idx) = spec.needs_external() {
        let table = external
            .ok_or_else(|| Error::invalid("filter spec references external coordinates but none were supplied"))?;
        if max_idx >= table.dim() {
            return Err(Error::invalid(format!(
                "external coordinate {max_idx} requested but the table has {} columns",
                table.dim()
            )));
        }
    }

    let mut projections: BTreeMap<usize, Projection> = BTreeMap::new();
    let mut kinds = Vec::with_capacity(spec.components.len());
    let mut columns = Vec::with_capacity(spec.components.len());
    for comp in &spec.components {
        let col: Vec<f64> = match *comp {
            FilterComponent::GroundTruthLabel => records.iter().map(|r| r.label as f64).collect(),
            FilterComponent::MeanPredConf => records.iter().map(|r| r.mean_pred_conf).collect(),
            FilterComponent::MeanTruthConf => records.iter().map(|r| r.mean_truth_conf).collect(),
            FilterComponent::ExternalCoord(j) => {
                let table = external.expect("checked above");
                records
                    .iter()
                    .map(|r| {
                        table
                            .get(&r.id)
                            .map(|c| c[j])
                            .ok_or_else(|| Error::MissingCoordinate(r.id.clone()))
                    })
                    .collect::<Result<_>>()?
            }
            FilterComponent::LinearProjection { axis, dims } => {
                if let Entry::Vacant(e) = projections.entry(dims) {
                    e.insert(linear_projection(records, dims)?);
                }
                let proj = &projections[&dims];
                proj.scores.iter().map(|row| row[axis]).collect()
            }
        };
        kinds.push(if comp.is_categorical() {
            ColumnKind::Categorical
        } else {
            ColumnKind::Numeric
        });
        columns.push(col);
    }
    FilterMatrix::from_columns(kinds, columns)
}

/// Principal-direction projection of the centered embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `scores[i]` holds the coordinates of record `i`.
    pub scores: Vec<Vec<f64>>,
    /// Unit principal directions, one per output axis, in embedding space.
    pub axes: Vec<Vec<f64>>,
    /// Variance along each retained axis, descending.
    pub variances: Vec<f64>,
    pub total_variance: f64,
    ids: Vec<String>,
}

impl Projection {
    /// Fraction of the total variance captured by the retained axes.
    pub fn captured_fraction(&self) -> f64 {
        if self.total_variance == 0.0 {
            1.0
        } else {
            self.variances.iter().sum::<f64>() / self.total_variance
        }
    }

    pub fn to_table(&self) -> CoordinateTable {
        let mut t = CoordinateTable::new(self.axes.len());
        for (id, s) in self.ids.iter().zip(&self.scores) {
            t.insert(id.clone(), s.clone()).expect("uniform width");
        }
        t
    }
}

/// Projects embeddings onto their top `dims` principal directions.
///
/// Each axis is sign-normalised so that its largest-magnitude loading is positive.
pub fn linear_projection(records: &RecordSet, dims: usize) -> Result<Projection> {
    let d = records.embedding_dim();
    if dims == 0 || dims > d {
        return Err(Error::invalid(format!(
            "projection to {dims} dimensions from embedding dimension {d}"
        )));
    }
    let n = records.len();
    let mut mean = vec![0.0; d];
    for r in records {
        for (m, x) in mean.iter_mut().zip(&r.embedding) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| records.records()[i].embedding[j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let total_variance = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();

    let mut axes = Vec::with_capacity(dims);
    let mut variances = Vec::with_capacity(dims);
    for &k in order.iter().take(dims) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        axes.push(v);
        variances.push(eig.eigenvalues[k].max(0.0));
    }

    let scores = (0..n)
        .map(|i| {
            axes.iter()
                .map(|a| a.iter().zip(centered.row(i).iter()).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        scores,
        axes,
        variances,
        total_variance,
        ids: records.iter().map(|r| r.id.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::PredictionRecord;

    fn rec(id: &str, label: usize, emb: Vec<f64>) -> PredictionRecord {
        PredictionRecord {
            id: id.into(),
            label,
            mean_pred_conf: 0.1 * (label as f64 + 1.0),
            mean_truth_conf: 0.05 * (label as f64 + 1.0),
            tokens: vec![],
            embedding: emb,
        }
    }

    fn five() -> RecordSet {
        let labels = [0, 0, 1, 2, 1];
        let recs = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| rec(&format!("r{i}"), l, vec![i as f64, (i * i) as f64, 1.0]))
            .collect();
        RecordSet::new(recs, 3).unwrap()
    }

    #[test]
    fn ground_truth_column_is_labels() {
        let spec = FilterSpec::new(vec![FilterComponent::GroundTruthLabel]).unwrap();
        let m = compose_filters(&five(), &spec, None).unwrap();
        assert_eq!(m.column(0), [0.0, 0.0, 1.0, 2.0, 1.0]);
        assert_eq!(m.kinds(), [ColumnKind::Categorical]);
    }

    #[test]
    fn truth_conf_column() {
        let set = five();
        let spec = FilterSpec::new(vec![FilterComponent::MeanTruthConf]).unwrap();
        let m = compose_filters(&set, &spec, None).unwrap();
        let expect: Vec<f64> = set.iter().map(|r| r.mean_truth_conf).collect();
        assert_eq!(m.column(0), expect.as_slice());
    }

    #[test]
    fn full_lens_has_five_columns() {
        let set = five();
        let mut coords = CoordinateTable::new(2);
        for (i, r) in set.iter().enumerate() {
            coords.insert(r.id.clone(), vec![i as f64, -(i as f64)]).unwrap();
        }
        let spec = FilterSpec::new(vec![
            FilterComponent::GroundTruthLabel,
            FilterComponent::MeanPredConf,
            FilterComponent::MeanTruthConf,
            FilterComponent::ExternalCoord(0),
            FilterComponent::ExternalCoord(1),
        ])
        .unwrap();
        let m = compose_filters(&set, &spec, Some(&coords)).unwrap();
        assert_eq!(m.width(), 5);
        assert_eq!(m.row(3), [2.0, 0.30000000000000004, 0.15000000000000002, 3.0, -3.0]);
        assert_eq!(m.numeric_columns().count(), 4);
    }

    #[test]
    fn missing_coordinate_is_an_error() {
        let set = five();
        let mut coords = CoordinateTable::new(1);
        coords.insert("r0", vec![0.0]).unwrap();
        let spec = FilterSpec::new(vec![FilterComponent::ExternalCoord(0)]).unwrap();
        assert!(matches!(
            compose_filters(&set, &spec, Some(&coords)),
            Err(Error::MissingCoordinate(id)) if id == "r1"
        ));
        assert!(compose_filters(&set, &spec, None).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(FilterSpec::new(vec![]).is_err());
        assert!(FilterSpec::new(vec![
            FilterComponent::GroundTruthLabel,
            FilterComponent::GroundTruthLabel
        ])
        .is_err());
        assert!(FilterSpec::new(vec![FilterComponent::LinearProjection { axis: 2, dims: 2 }]).is_err());
    }

    #[test]
    fn projection_of_planar_data_is_exact() {
        // Points in the (x, z) plane of R^3.
        let pts = [
            [1.0, 0.0, 2.0],
            [-1.0, 0.0, 0.5],
            [3.0, 0.0, -1.0],
            [0.0, 0.0, 0.0],
            [2.0, 0.0, 4.0],
        ];
        let recs = pts
            .iter()
            .enumerate()
            .map(|(i, p)| rec(&format!("p{i}"), 0, p.to_vec()))
            .collect();
        let set = RecordSet::new(recs, 1).unwrap();
        let proj = linear_projection(&set, 2).unwrap();
        assert!((proj.captured_fraction() - 1.0).abs() < 1e-12);
        // Reconstruction from the two axes recovers the centered points.
        let n = pts.len() as f64;
        let mean: Vec<f64> = (0..3).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n).collect();
        for (p, s) in pts.iter().zip(&proj.scores) {
            for j in 0..3 {
                let rebuilt = mean[j] + s[0] * proj.axes[0][j] + s[1] * proj.axes[1][j];
                assert!((rebuilt - p[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sign_convention() {
        let set = five();
        let proj = linear_projection(&set, 2).unwrap();
        for a in &proj.axes {
            let pivot = a
                .iter()
                .copied()
                .fold(0.0_f64, |b, x| if x.abs() > b.abs() { x } else { b });
            assert!(pivot > 0.0);
        }
        assert!(linear_projection(&set, 4).is_err());
    }
}
