//! Prediction records, record sets and embedding tables.
//!
//! Every type here is validated on construction and immutable afterwards.
//! Loaders reject invariant violations with the offending line number; they
//! never repair input.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One model input: its document embedding, ground truth and averaged confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub label: usize,
    pub mean_pred_conf: f64,
    pub mean_truth_conf: f64,
    /// Token multiset; order is preserved but carries no meaning.
    pub tokens: Vec<String>,
    pub embedding: Vec<f64>,
}

impl PredictionRecord {
    /// Distinct tokens with their multiplicities.
    pub fn token_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for t in &self.tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Jsonl,
}

impl FromStr for RecordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(RecordFormat::Csv),
            "jsonl" | "ndjson" => Ok(RecordFormat::Jsonl),
            other => Err(Error::invalid(format!("unknown record format `{other}`"))),
        }
    }
}

/// A validated, nonempty collection of records sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    records: Vec<PredictionRecord>,
    class_count: usize,
    embedding_dim: usize,
    index: HashMap<String, usize>,
}

impl RecordSet {
    /// Validates `records` against the declared class count.
    ///
    /// Errors carry the 1-based position of the offending record.
    pub fn new(records: Vec<PredictionRecord>, class_count: usize) -> Result<Self> {
        Self::with_lines(records, class_count, None)
    }

    /// Like [`RecordSet::new`] with the class count inferred as `max(label) + 1`.
    pub fn infer_classes(records: Vec<PredictionRecord>) -> Result<Self> {
        let k = records.iter().map(|r| r.label + 1).max().unwrap_or(0);
        Self::new(records, k)
    }

    fn with_lines(records: Vec<PredictionRecord>, class_count: usize, lines: Option<&[usize]>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Empty("record set has no records".into()))?;
        let embedding_dim = first.embedding.len();
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let line = lines.map_or(i + 1, |l| l[i]);
            validate_record(r, line, embedding_dim, class_count)?;
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateId { line, id: r.id.clone() });
            }
        }
        Ok(RecordSet {
            records,
            class_count,
            embedding_dim,
            index,
        })
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn get(&self, i: usize) -> Option<&PredictionRecord> {
        self.records.get(i)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn by_id(&self, id: &str) -> Option<&PredictionRecord> {
        self.index_of(id).map(|i| &self.records[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PredictionRecord> {
        self.records.iter()
    }

    /// Labels that occur at least once, ascending.
    pub fn labels_present(&self) -> Vec<usize> {
        let mut seen = vec![false; self.class_count];
        for r in &self.records {
            seen[r.label] = true;
        }
        (0..self.class_count).filter(|&l| seen[l]).collect()
    }
}

impl<'a> IntoIterator for &'a RecordSet {
    type Item = &'a PredictionRecord;
    type IntoIter = std::slice::Iter<'a, PredictionRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

fn validate_record(r: &PredictionRecord, line: usize, dim: usize, class_count: usize) -> Result<()> {
    if r.embedding.len() != dim {
        return Err(Error::DimensionMismatch {
            line,
            expected: dim,
            found: r.embedding.len(),
        });
    }
    for &c in &[r.mean_pred_conf, r.mean_truth_conf] {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::ConfidenceOutOfRange { line, value: c });
        }
    }
    if r.label >= class_count {
        return Err(Error::LabelOutOfRange {
            label: r.label,
            class_count,
        });
    }
    if let Some(bad) = r.embedding.iter().find(|x| !x.is_finite()) {
        return Err(Error::Parse {
            line,
            message: format!("non-finite embedding component {bad}"),
        });
    }
    if r.id.is_empty() {
        return Err(Error::Parse {
            line,
            message: "empty id".into(),
        });
    }
    Ok(())
}

const FIXED_COLUMNS: [&str; 5] = ["id", "label", "mean_pred_conf", "mean_truth_conf", "tokens"];

/// Reads a record set; the class count is inferred as `max(label) + 1`.
pub fn load_records(path: impl AsRef<Path>, format: RecordFormat) -> Result<RecordSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (records, lines) = match format {
        RecordFormat::Csv => read_records_csv(BufReader::new(file))?,
        RecordFormat::Jsonl => read_records_jsonl(BufReader::new(file))?,
    };
    let k = records.iter().map(|r| r.label + 1).max().unwrap_or(0);
    RecordSet::with_lines(records, k, Some(&lines))
}

fn parse_field<T: FromStr>(raw: &str, line: usize, name: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {name} from `{raw}`"),
    })
}

fn read_records_csv<R: std::io::Read>(reader: R) -> Result<(Vec<PredictionRecord>, Vec<usize>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.is_empty() {
        return Err(Error::Empty("records file has no header".into()));
    }
    for (i, name) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(name) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column {i} to be `{name}`"),
            });
        }
    }
    let dim = header.len() - FIXED_COLUMNS.len();
    for j in 0..dim {
        let expected = format!("emb_{j}");
        if header.get(FIXED_COLUMNS.len() + j) != Some(expected.as_str()) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected embedding column `{expected}`"),
            });
        }
    }

    let mut records = Vec::new();
    let mut lines = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(records.len() + 2, |p| p.line() as usize);
        if row.len() < FIXED_COLUMNS.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected at least {} fields", FIXED_COLUMNS.len()),
            });
        }
        let found = row.len() - FIXED_COLUMNS.len();
        if found != dim {
            return Err(Error::DimensionMismatch {
                line,
                expected: dim,
                found,
            });
        }
        let embedding = (0..dim)
            .map(|j| parse_field::<f64>(&row[FIXED_COLUMNS.len() + j], line, "embedding component"))
            .collect::<Result<Vec<_>>>()?;
        records.push(PredictionRecord {
            id: row[0].to_string(),
            label: parse_field(&row[1], line, "label")?,
            mean_pred_conf: parse_field(&row[2], line, "mean_pred_conf")?,
            mean_truth_conf: parse_field(&row[3], line, "mean_truth_conf")?,
            tokens: row[4].split_whitespace().map(str::to_string).collect(),
            embedding,
        });
        lines.push(line);
    }
    Ok((records, lines))
}

fn read_records_jsonl<R: BufRead>(reader: R) -> Result<(Vec<PredictionRecord>, Vec<usize>)> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        records.push(rec);
        lines.push(line_no);
    }
    Ok((records, lines))
}

/// Writes a record set in either format; `load_records` reads it back unchanged.
pub fn write_records(path: impl AsRef<Path>, set: &RecordSet, format: RecordFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        RecordFormat::Csv => write_records_csv(&mut out, set),
        RecordFormat::Jsonl => {
            for r in set {
                let line = serde_json::to_string(r).map_err(|e| Error::Serialize(e.to_string()))?;
                writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
            }
            Ok(())
        }
    }?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn write_records_csv<W: Write>(out: W, set: &RecordSet) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..set.embedding_dim()).map(|j| format!("emb_{j}")));
    wtr.write_record(&header).map_err(ser)?;
    for r in set {
        let mut row = vec![
            r.id.clone(),
            r.label.to_string(),
            r.mean_pred_conf.to_string(),
            r.mean_truth_conf.to_string(),
            r.tokens.join(" "),
        ];
        row.extend(r.embedding.iter().map(|x| x.to_string()));
        wtr.write_record(&row).map_err(ser)?;
    }
    wtr.flush().map_err(|e| Error::Serialize(e.to_string()))
}

/// Token to vector map with one shared dimension; insertion order is kept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    vectors: IndexMap<String, Vec<f64>>,
    dim: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            vectors: IndexMap::new(),
            dim,
        }
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut iter = pairs.into_iter().peekable();
        let dim = iter
            .peek()
            .map(|(_, v)| v.len())
            .ok_or_else(|| Error::Empty("embedding table has no rows".into()))?;
        let mut table = EmbeddingTable::new(dim);
        for (line, (tok, v)) in iter.enumerate() {
            table.insert_at(tok, v, line + 1)?;
        }
        Ok(table)
    }

    fn insert_at(&mut self, token: String, vector: Vec<f64>, line: usize) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::RaggedRow {
                line,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.vectors.contains_key(&token) {
            return Err(Error::DuplicateToken { line, token });
        }
        self.vectors.insert(token, vector);
        Ok(())
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let line = self.vectors.len() + 1;
        self.insert_at(token.into(), vector, line)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Reads a `token\tv_0\t...\tv_{e-1}` file.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file))
}

pub fn read_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let mut fields = text.split('\t');
        let token = fields.next().unwrap_or_default().to_string();
        if token.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty token".into(),
            });
        }
        let vector = fields
            .map(|f| parse_field::<f64>(f, line_no, "embedding component"))
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = vector.iter().find(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("non-finite component {bad}"),
            });
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        t.insert_at(token, vector, line_no)?;
    }
    match table {
        Some(t) if t.dim > 0 => Ok(t),
        Some(_) => Err(Error::Parse {
            line: 1,
            message: "rows carry no vector components".into(),
        }),
        None => Err(Error::Empty("embedding file has no rows".into())),
    }
}

pub fn write_embeddings(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (tok, v) in table.iter() {
        write!(out, "{tok}").map_err(|e| Error::io(path, e))?;
        for x in v {
            write!(out, "\t{x}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(out).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const CSV3: &str = "\
id,label,mean_pred_conf,mean_truth_conf,tokens,emb_0,emb_1
a,0,0.9,0.9,tumor left breast,0.1,0.2
b,1,0.8,0.7,prostate gland,1.0,-1.5
c,1,0.6,0.4,,0.0,0.0
";

    #[test]
    fn loads_three_row_csv() {
        let f = write_tmp(CSV3);
        let set = load_records(f.path(), RecordFormat::Csv).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.embedding_dim(), 2);
        assert_eq!(set.class_count(), 2);
        let ids: Vec<_> = set.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(set.records()[0].tokens, ["tumor", "left", "breast"]);
        assert!(set.records()[2].tokens.is_empty());
        assert_eq!(set.by_id("b").unwrap().embedding, [1.0, -1.5]);
    }

    #[test]
    fn rejects_confidence_out_of_range_with_line() {
        let f = write_tmp("id,label,mean_pred_conf,mean_truth_conf,tokens,emb_0\nx,0,0.5,1.2,a b,0.0\n");
        let err = load_records(f.path(), RecordFormat::Csv).unwrap_err();
        assert_eq!(err.to_string(), "confidence out of range, line 2");
    }

    #[test]
    fn rejects_mixed_embedding_dims() {
        let mut header = String::from("id,label,mean_pred_conf,mean_truth_conf,tokens");
        for j in 0..300 {
            header.push_str(&format!(",emb_{j}"));
        }
        let row = |id: &str, d: usize| {
            let mut s = format!("{id},0,0.5,0.5,w");
            for _ in 0..d {
                s.push_str(",0.25");
            }
            s
        };
        let text = format!("{header}\n{}\n{}\n", row("a", 300), row("b", 299));
        let f = write_tmp(&text);
        match load_records(f.path(), RecordFormat::Csv).unwrap_err() {
            Error::DimensionMismatch { line, expected, found } => assert_eq!((line, expected, found), (3, 300, 299)),
            e => panic!("unexpected {e}"),
        }

        let jsonl = "{\"id\":\"a\",\"label\":0,\"mean_pred_conf\":0.5,\"mean_truth_conf\":0.5,\"tokens\":[],\"embedding\":[0.0,1.0]}\n\
                     {\"id\":\"b\",\"label\":0,\"mean_pred_conf\":0.5,\"mean_truth_conf\":0.5,\"tokens\":[],\"embedding\":[0.0]}\n";
        let f = write_tmp(jsonl);
        assert!(matches!(
            load_records(f.path(), RecordFormat::Jsonl),
            Err(Error::DimensionMismatch { line: 2, .. })
        ));
    }

    #[test]
    fn rejects_duplicate_id_and_bad_fields() {
        let f = write_tmp("id,label,mean_pred_conf,mean_truth_conf,tokens,emb_0\nx,0,0.5,0.5,,0\nx,0,0.5,0.5,,1\n");
        assert!(matches!(
            load_records(f.path(), RecordFormat::Csv),
            Err(Error::DuplicateId { line: 3, .. })
        ));
        let f = write_tmp("id,label,mean_pred_conf,mean_truth_conf,tokens,emb_0\nx,zero,0.5,0.5,,0\n");
        assert!(matches!(
            load_records(f.path(), RecordFormat::Csv),
            Err(Error::Parse { line: 2, .. })
        ));
        let f = write_tmp("id,label,mean_pred_conf,mean_truth_conf,tokens,emb_0\nx,0,-0.1,0.5,,0\n");
        assert!(matches!(
            load_records(f.path(), RecordFormat::Csv),
            Err(Error::ConfidenceOutOfRange { line: 2, .. })
        ));
        let f = write_tmp("id,label,mean_pred_conf,mean_truth_conf,tokens,emb_0\n");
        assert!(matches!(
            load_records(f.path(), RecordFormat::Csv),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn declared_class_count_is_enforced() {
        let r = PredictionRecord {
            id: "a".into(),
            label: 3,
            mean_pred_conf: 0.5,
            mean_truth_conf: 0.5,
            tokens: vec![],
            embedding: vec![0.0],
        };
        assert!(matches!(
            RecordSet::new(vec![r], 3),
            Err(Error::LabelOutOfRange { label: 3, .. })
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let f = write_tmp(CSV3);
        let set = load_records(f.path(), RecordFormat::Csv).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_records(out.path(), &set, RecordFormat::Jsonl).unwrap();
        assert_eq!(load_records(out.path(), RecordFormat::Jsonl).unwrap(), set);
    }

    #[test]
    fn loads_embeddings() {
        let t = read_embeddings(Cursor::new("cellular\t1\t2\t3\t4\ntissue\t0.5\t0\t0\t-1\n")).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 4);
        assert_eq!(t.get("tissue").unwrap(), [0.5, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn embedding_errors() {
        let dup = read_embeddings(Cursor::new("cellular\t1\t2\t3\t4\ncellular\t1\t2\t3\t4\n"));
        assert!(matches!(dup, Err(Error::DuplicateToken { line: 2, ref token }) if token == "cellular"));
        let ragged = read_embeddings(Cursor::new("a\t1\t2\t3\t4\nb\t1\t2\t3\t4\t5\n"));
        assert!(matches!(
            ragged,
            Err(Error::RaggedRow {
                line: 2,
                expected: 4,
                found: 5
            })
        ));
        assert!(matches!(read_embeddings(Cursor::new("")), Err(Error::Empty(_))));
    }
}
