//! Grouped tabular datasets.
//!
//! A [`GroupedDataset`] carries features `X`, binary labels `Y`, a binary
//! sensitive attribute `A`, and optional named binary transfer labels.
//! The module also owns CSV ingestion driven by a small schema file,
//! deterministic splitting (with transfer sub-splits drawn from the test
//! partition), train-statistics standardization, and seeded synthetic
//! generators that mimic the Adult/Health schemas at desk scale.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Tabular examples `(x, y, a)` plus optional transfer labels, with the
/// group/group-label partitions addressable at any time.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    pub x: Mat,
    pub y: Vec<u8>,
    pub a: Vec<u8>,
    /// Named auxiliary binary labels for transfer tasks.
    pub transfer: BTreeMap<String, Vec<u8>>,
    pub feature_names: Vec<String>,
    /// Feature columns subject to standardization.
    pub continuous_cols: Vec<usize>,
}

impl GroupedDataset {
    pub fn new(x: Mat, y: Vec<u8>, a: Vec<u8>) -> Result<Self> {
        let names = (0..x.cols()).map(|i| format!("x{}", i)).collect();
        let continuous = (0..x.cols()).collect();
        Self::with_metadata(x, y, a, BTreeMap::new(), names, continuous)
    }

    pub fn with_metadata(
        x: Mat,
        y: Vec<u8>,
        a: Vec<u8>,
        transfer: BTreeMap<String, Vec<u8>>,
        feature_names: Vec<String>,
        continuous_cols: Vec<usize>,
    ) -> Result<Self> {
        let n = x.rows();
        if y.len() != n || a.len() != n {
            return Err(Error::RejectedInput(format!(
                "inconsistent row counts: x={}, y={}, a={}",
                n,
                y.len(),
                a.len()
            )));
        }
        for labels in std::iter::once(&y)
            .chain(std::iter::once(&a))
            .chain(transfer.values())
        {
            if labels.len() != n {
                return Err(Error::RejectedInput(
                    "transfer label length differs from row count".into(),
                ));
            }
            if labels.iter().any(|&v| v > 1) {
                return Err(Error::RejectedInput("labels must be 0 or 1".into()));
            }
        }
        if feature_names.len() != x.cols() {
            return Err(Error::RejectedInput("feature name count mismatch".into()));
        }
        Ok(GroupedDataset {
            x,
            y,
            a,
            transfer,
            feature_names,
            continuous_cols,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Row subset, metadata preserved.
    pub fn select(&self, idx: &[usize]) -> GroupedDataset {
        GroupedDataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            a: idx.iter().map(|&i| self.a[i]).collect(),
            transfer: self
                .transfer
                .iter()
                .map(|(k, v)| (k.clone(), idx.iter().map(|&i| v[i]).collect()))
                .collect(),
            feature_names: self.feature_names.clone(),
            continuous_cols: self.continuous_cols.clone(),
        }
    }

    /// Dataset with `y` replaced by the named transfer label.
    pub fn with_task_label(&self, task: &str) -> Result<GroupedDataset> {
        let labels = self
            .transfer
            .get(task)
            .ok_or_else(|| Error::RejectedInput(format!("unknown transfer task {:?}", task)))?;
        let mut out = self.clone();
        out.y = labels.clone();
        Ok(out)
    }
}

/// Index lists for the sensitive-group partition `D_0, D_1` and the
/// group-label partition `D_i^j = {(x, y, a) : a = i, y = j}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cells {
    pub d0: Vec<usize>,
    pub d1: Vec<usize>,
    pub d00: Vec<usize>,
    pub d10: Vec<usize>,
    pub d01: Vec<usize>,
    pub d11: Vec<usize>,
}

/// Partition the dataset into group and group-label index cells.
pub fn partition_cells(ds: &GroupedDataset) -> Cells {
    partition_rows(&ds.a, &ds.y)
}

/// Same partition computed from raw label vectors.
pub fn partition_rows(a: &[u8], y: &[u8]) -> Cells {
    let mut cells = Cells::default();
    for i in 0..a.len() {
        match a[i] {
            0 => cells.d0.push(i),
            _ => cells.d1.push(i),
        }
        match (a[i] == 1, y[i] == 1) {
            (false, false) => cells.d00.push(i),
            (true, false) => cells.d10.push(i),
            (false, true) => cells.d01.push(i),
            (true, true) => cells.d11.push(i),
        }
    }
    cells
}

/// Split fractions plus the transfer sub-split applied inside the test
/// partition. All fractions live in (0,1) and each triple sums to 1.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub transfer_train: f64,
    pub transfer_validation: f64,
    pub transfer_test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
            transfer_train: 0.5,
            transfer_validation: 0.2,
            transfer_test: 0.3,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64, name: &str| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::RejectedInput(format!(
                    "fraction {} = {} is outside (0, 1)",
                    name, v
                )))
            }
        };
        open(self.train, "train")?;
        open(self.validation, "validation")?;
        open(self.test, "test")?;
        open(self.transfer_train, "transfer_train")?;
        open(self.transfer_validation, "transfer_validation")?;
        open(self.transfer_test, "transfer_test")?;
        if (self.train + self.validation + self.test - 1.0).abs() > 1e-9 {
            return Err(Error::RejectedInput("split fractions must sum to 1".into()));
        }
        let t = self.transfer_train + self.transfer_validation + self.transfer_test;
        if (t - 1.0).abs() > 1e-9 {
            return Err(Error::RejectedInput(
                "transfer sub-split fractions must sum to 1".into(),
            ));
        }
        Ok(())
    }
}

/// Which named split a row landed in. Transfer tags refine the test
/// partition, so `is_test` is true for all three transfer tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitTag {
    Train,
    Validation,
    Test,
    TransferTrain,
    TransferValidation,
    TransferTest,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
            SplitTag::TransferTrain => "transfer-train",
            SplitTag::TransferValidation => "transfer-validation",
            SplitTag::TransferTest => "transfer-test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => SplitTag::Train,
            "validation" => SplitTag::Validation,
            "test" => SplitTag::Test,
            "transfer-train" => SplitTag::TransferTrain,
            "transfer-validation" => SplitTag::TransferValidation,
            "transfer-test" => SplitTag::TransferTest,
            other => {
                return Err(Error::RejectedInput(format!(
                    "unknown split tag {:?}",
                    other
                )))
            }
        })
    }

    pub fn is_test(self) -> bool {
        matches!(
            self,
            SplitTag::Test
                | SplitTag::TransferTrain
                | SplitTag::TransferValidation
                | SplitTag::TransferTest
        )
    }
}

/// Row indices for each split; the transfer sets are disjoint subsets of
/// `test`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub transfer_train: Vec<usize>,
    pub transfer_validation: Vec<usize>,
    pub transfer_test: Vec<usize>,
}

impl SplitIndices {
    /// Per-row tag column, transfer tags replacing plain `test`.
    pub fn tags(&self, n: usize) -> Vec<SplitTag> {
        let mut tags = vec![SplitTag::Test; n];
        for &i in &self.train {
            tags[i] = SplitTag::Train;
        }
        for &i in &self.validation {
            tags[i] = SplitTag::Validation;
        }
        for &i in &self.transfer_train {
            tags[i] = SplitTag::TransferTrain;
        }
        for &i in &self.transfer_validation {
            tags[i] = SplitTag::TransferValidation;
        }
        for &i in &self.transfer_test {
            tags[i] = SplitTag::TransferTest;
        }
        tags
    }

    pub fn from_tags(tags: &[SplitTag]) -> SplitIndices {
        let mut s = SplitIndices {
            train: vec![],
            validation: vec![],
            test: vec![],
            transfer_train: vec![],
            transfer_validation: vec![],
            transfer_test: vec![],
        };
        for (i, t) in tags.iter().enumerate() {
            match t {
                SplitTag::Train => s.train.push(i),
                SplitTag::Validation => s.validation.push(i),
                SplitTag::Test => {}
                SplitTag::TransferTrain => s.transfer_train.push(i),
                SplitTag::TransferValidation => s.transfer_validation.push(i),
                SplitTag::TransferTest => s.transfer_test.push(i),
            }
            if t.is_test() {
                s.test.push(i);
            }
        }
        s
    }
}

fn rounded_counts(n: usize, fracs: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = fracs
        .iter()
        .take(fracs.len() - 1)
        .map(|f| (f * n as f64).round() as usize)
        .collect();
    let used: usize = counts.iter().sum();
    counts.push(n.saturating_sub(used));
    counts
}

/// Deterministic seeded split into train/validation/test, with the
/// transfer sub-split drawn only from the test partition.
pub fn split(ds: &GroupedDataset, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let counts = rounded_counts(n, &[spec.train, spec.validation, spec.test]);
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::RejectedInput(format!(
            "split sizes {:?} include an empty split for n={}",
            counts, n
        )));
    }
    let train = order[..counts[0]].to_vec();
    let validation = order[counts[0]..counts[0] + counts[1]].to_vec();
    let test = order[counts[0] + counts[1]..].to_vec();

    let tc = rounded_counts(
        test.len(),
        &[
            spec.transfer_train,
            spec.transfer_validation,
            spec.transfer_test,
        ],
    );
    if tc.iter().any(|&c| c == 0) {
        return Err(Error::RejectedInput(format!(
            "transfer sub-split sizes {:?} include an empty split for test n={}",
            tc,
            test.len()
        )));
    }
    Ok(SplitIndices {
        transfer_train: test[..tc[0]].to_vec(),
        transfer_validation: test[tc[0]..tc[0] + tc[1]].to_vec(),
        transfer_test: test[tc[0] + tc[1]..].to_vec(),
        train,
        validation,
        test,
    })
}

/// Per-column mean/scale computed on the train split.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizeStats {
    pub cols: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Compute train-split moments for the continuous columns.
pub fn standardize_stats(ds: &GroupedDataset, train_idx: &[usize]) -> StandardizeStats {
    let n = train_idx.len() as f64;
    let mut mean = Vec::new();
    let mut scale = Vec::new();
    for &c in &ds.continuous_cols {
        let mu = train_idx.iter().map(|&r| ds.x.get(r, c)).sum::<f64>() / n;
        let var = train_idx
            .iter()
            .map(|&r| {
                let d = ds.x.get(r, c) - mu;
                d * d
            })
            .sum::<f64>()
            / n;
        let sd = var.sqrt();
        mean.push(mu);
        // Constant columns are centered only.
        scale.push(if sd > 0.0 { sd } else { 1.0 });
    }
    StandardizeStats {
        cols: ds.continuous_cols.clone(),
        mean,
        scale,
    }
}

/// Apply train-split statistics to every row of the dataset.
pub fn apply_standardize(ds: &GroupedDataset, stats: &StandardizeStats) -> GroupedDataset {
    let mut out = ds.clone();
    for (k, &c) in stats.cols.iter().enumerate() {
        for r in 0..out.x.rows() {
            let v = (out.x.get(r, c) - stats.mean[k]) / stats.scale[k];
            out.x.set(r, c, v);
        }
    }
    out
}

/// Materialized splits of a standardized dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: GroupedDataset,
    pub validation: GroupedDataset,
    pub test: GroupedDataset,
    pub transfer_train: GroupedDataset,
    pub transfer_validation: GroupedDataset,
    pub transfer_test: GroupedDataset,
    pub indices: SplitIndices,
    pub stats: StandardizeStats,
}

/// Split, standardize on train statistics, and materialize every split.
pub fn prepare(ds: &GroupedDataset, spec: &SplitSpec) -> Result<Splits> {
    let indices = split(ds, spec)?;
    prepare_with_indices(ds, indices)
}

/// As [`prepare`] but with a split assignment already in hand (e.g. read
/// back from a `split` column).
pub fn prepare_with_indices(ds: &GroupedDataset, indices: SplitIndices) -> Result<Splits> {
    if indices.train.is_empty() {
        return Err(Error::RejectedInput("train split is empty".into()));
    }
    let stats = standardize_stats(ds, &indices.train);
    let std = apply_standardize(ds, &stats);
    Ok(Splits {
        train: std.select(&indices.train),
        validation: std.select(&indices.validation),
        test: std.select(&indices.test),
        transfer_train: std.select(&indices.transfer_train),
        transfer_validation: std.select(&indices.transfer_validation),
        transfer_test: std.select(&indices.transfer_test),
        indices,
        stats,
    })
}

// ---------------------------------------------------------------------------
// CSV schema and ingestion
// ---------------------------------------------------------------------------

/// How a binary column's raw values map to {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub enum BinRule {
    /// Values must literally be "0" or "1".
    Literal,
    /// Equal to the given string maps to 1, everything else to 0.
    Eq(String),
    /// Numeric nonzero maps to 1.
    Nonzero,
    /// Numeric `>= threshold` maps to 1.
    Ge(f64),
    /// Numeric `> threshold` maps to 1.
    Gt(f64),
}

impl BinRule {
    fn apply(&self, raw: &str, row: usize, col: &str) -> Result<u8> {
        let bad = |what: &str| {
            Error::RejectedInput(format!(
                "row {}, column {:?}: {} (value {:?})",
                row, col, what, raw
            ))
        };
        match self {
            BinRule::Literal => match raw {
                "0" => Ok(0),
                "1" => Ok(1),
                _ => Err(bad("expected literal 0 or 1")),
            },
            BinRule::Eq(pos) => Ok(u8::from(raw == pos)),
            BinRule::Nonzero => {
                let v: f64 = raw.parse().map_err(|_| bad("expected a number"))?;
                Ok(u8::from(v != 0.0))
            }
            BinRule::Ge(t) => {
                let v: f64 = raw.parse().map_err(|_| bad("expected a number"))?;
                Ok(u8::from(v >= *t))
            }
            BinRule::Gt(t) => {
                let v: f64 = raw.parse().map_err(|_| bad("expected a number"))?;
                Ok(u8::from(v > *t))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnRole {
    FeatureContinuous,
    FeatureCategorical,
    Label(BinRule),
    Sensitive(BinRule),
    TransferLabel(String, BinRule),
    Ignore,
    /// Split assignment written by this tool; honored on reload.
    Split,
}

/// Column-to-role mapping parsed from a key-value schema file.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub roles: Vec<(String, ColumnRole)>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Schema> {
        let mut roles = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (col, role) = line.split_once('=').ok_or_else(|| {
                Error::RejectedInput(format!("schema line {}: expected `column = role`", ln + 1))
            })?;
            roles.push((col.trim().to_string(), parse_role(role.trim(), ln + 1)?));
        }
        if roles.is_empty() {
            return Err(Error::RejectedInput("schema declares no columns".into()));
        }
        Ok(Schema { roles })
    }

    pub fn load(path: &Path) -> Result<Schema> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Schema::parse(&text)
    }

    fn role_of(&self, col: &str) -> Option<&ColumnRole> {
        self.roles.iter().find(|(c, _)| c == col).map(|(_, r)| r)
    }
}

fn parse_bin_rule(parts: &[&str], ln: usize) -> Result<BinRule> {
    match parts {
        [] => Ok(BinRule::Literal),
        ["eq", v] => Ok(BinRule::Eq((*v).to_string())),
        ["nonzero"] => Ok(BinRule::Nonzero),
        ["ge", v] => Ok(BinRule::Ge(v.parse().map_err(|_| {
            Error::RejectedInput(format!("schema line {}: bad threshold {:?}", ln, v))
        })?)),
        ["gt", v] => Ok(BinRule::Gt(v.parse().map_err(|_| {
            Error::RejectedInput(format!("schema line {}: bad threshold {:?}", ln, v))
        })?)),
        other => Err(Error::RejectedInput(format!(
            "schema line {}: unknown binarization rule {:?}",
            ln,
            other.join(":")
        ))),
    }
}

fn parse_role(role: &str, ln: usize) -> Result<ColumnRole> {
    let parts: Vec<&str> = role.split(':').collect();
    match parts.as_slice() {
        ["feature-continuous"] => Ok(ColumnRole::FeatureContinuous),
        ["feature-categorical"] => Ok(ColumnRole::FeatureCategorical),
        ["ignore"] => Ok(ColumnRole::Ignore),
        ["split"] => Ok(ColumnRole::Split),
        ["label", rest @ ..] => Ok(ColumnRole::Label(parse_bin_rule(rest, ln)?)),
        ["sensitive", rest @ ..] => Ok(ColumnRole::Sensitive(parse_bin_rule(rest, ln)?)),
        ["transfer-label", name, rest @ ..] => Ok(ColumnRole::TransferLabel(
            (*name).to_string(),
            parse_bin_rule(rest, ln)?,
        )),
        _ => Err(Error::RejectedInput(format!(
            "schema line {}: unknown role {:?}",
            ln, role
        ))),
    }
}

/// A loaded CSV: the dataset (one-hot encoded, not yet standardized) plus
/// the split assignment if the file carried a `split`-role column.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: GroupedDataset,
    pub split: Option<SplitIndices>,
}

/// Read a CSV file under the given schema. Categorical features are
/// one-hot encoded from the values observed in the file (sorted order);
/// continuous standardization happens later, at split time, from train
/// statistics only.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<LoadedCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.display().to_string(),
            source: e,
        })?
        .iter()
        .map(|s| s.to_string())
        .collect();

    let mut col_roles = Vec::with_capacity(headers.len());
    for h in &headers {
        let role = schema.role_of(h).ok_or_else(|| {
            Error::RejectedInput(format!("column {:?} has no role in the schema", h))
        })?;
        col_roles.push(role.clone());
    }
    for (col, role) in &schema.roles {
        if matches!(
            role,
            ColumnRole::Label(_) | ColumnRole::Sensitive(_) | ColumnRole::TransferLabel(..)
        ) && !headers.iter().any(|h| h == col)
        {
            return Err(Error::RejectedInput(format!(
                "schema column {:?} missing from the CSV header",
                col
            )));
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (ri, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
        if rec.len() != headers.len() {
            return Err(Error::RejectedInput(format!(
                "row {}: {} fields, header has {}",
                ri + 1,
                rec.len(),
                headers.len()
            )));
        }
        rows.push(rec.iter().map(|s| s.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::RejectedInput("CSV has no data rows".into()));
    }
    let n = rows.len();

    // Category vocabularies for one-hot columns, sorted for determinism.
    let mut vocab: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (ci, role) in col_roles.iter().enumerate() {
        if matches!(role, ColumnRole::FeatureCategorical) {
            let mut vals: Vec<String> = rows.iter().map(|r| r[ci].clone()).collect();
            vals.sort();
            vals.dedup();
            vocab.insert(ci, vals);
        }
    }

    let missing = |ri: usize, col: &str| {
        Error::RejectedInput(format!("row {}, column {:?}: missing value", ri + 1, col))
    };

    let mut feature_names = Vec::new();
    let mut continuous_cols = Vec::new();
    for (ci, role) in col_roles.iter().enumerate() {
        match role {
            ColumnRole::FeatureContinuous => {
                continuous_cols.push(feature_names.len());
                feature_names.push(headers[ci].clone());
            }
            ColumnRole::FeatureCategorical => {
                for v in &vocab[&ci] {
                    feature_names.push(format!("{}={}", headers[ci], v));
                }
            }
            _ => {}
        }
    }

    let mut x = Mat::zeros(n, feature_names.len());
    let mut y: Vec<u8> = Vec::with_capacity(n);
    let mut a: Vec<u8> = Vec::with_capacity(n);
    let mut transfer: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut tags: Vec<SplitTag> = Vec::new();
    let mut saw_label = false;
    let mut saw_sensitive = false;

    for (ri, row) in rows.iter().enumerate() {
        let mut fc = 0usize;
        for (ci, role) in col_roles.iter().enumerate() {
            let raw = row[ci].as_str();
            match role {
                ColumnRole::FeatureContinuous => {
                    if raw.is_empty() {
                        return Err(missing(ri, &headers[ci]));
                    }
                    let v: f64 = raw.parse().map_err(|_| {
                        Error::RejectedInput(format!(
                            "row {}, column {:?}: unparseable number {:?}",
                            ri + 1,
                            headers[ci],
                            raw
                        ))
                    })?;
                    x.set(ri, fc, v);
                    fc += 1;
                }
                ColumnRole::FeatureCategorical => {
                    if raw.is_empty() {
                        return Err(missing(ri, &headers[ci]));
                    }
                    let vals = &vocab[&ci];
                    let pos = vals.binary_search(&raw.to_string()).map_err(|_| {
                        Error::RejectedInput(format!(
                            "row {}, column {:?}: unmapped category value {:?}",
                            ri + 1,
                            headers[ci],
                            raw
                        ))
                    })?;
                    x.set(ri, fc + pos, 1.0);
                    fc += vals.len();
                }
                ColumnRole::Label(rule) => {
                    if raw.is_empty() {
                        return Err(missing(ri, &headers[ci]));
                    }
                    y.push(rule.apply(raw, ri + 1, &headers[ci])?);
                    saw_label = true;
                }
                ColumnRole::Sensitive(rule) => {
                    if raw.is_empty() {
                        return Err(missing(ri, &headers[ci]));
                    }
                    a.push(rule.apply(raw, ri + 1, &headers[ci])?);
                    saw_sensitive = true;
                }
                ColumnRole::TransferLabel(name, rule) => {
                    if raw.is_empty() {
                        return Err(missing(ri, &headers[ci]));
                    }
                    transfer
                        .entry(name.clone())
                        .or_default()
                        .push(rule.apply(raw, ri + 1, &headers[ci])?);
                }
                ColumnRole::Ignore => {}
                ColumnRole::Split => {
                    tags.push(SplitTag::parse(raw)?);
                }
            }
        }
    }
    if !saw_label || !saw_sensitive {
        return Err(Error::RejectedInput(
            "schema must bind one label and one sensitive column present in the CSV".into(),
        ));
    }

    let dataset =
        GroupedDataset::with_metadata(x, y, a, transfer, feature_names, continuous_cols)?;
    let split = if tags.len() == n {
        Some(SplitIndices::from_tags(&tags))
    } else {
        None
    };
    Ok(LoadedCsv { dataset, split })
}

/// Write the dataset as CSV. Feature columns keep their names; `y`, `a`,
/// transfer labels, and (optionally) a `split` column follow. The
/// `comment` line, when given, is written first prefixed with `#`.
pub fn write_csv(
    ds: &GroupedDataset,
    path: &Path,
    split: Option<&SplitIndices>,
    comment: Option<&str>,
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    if let Some(c) = comment {
        writeln!(file, "# {}", c).map_err(io_err)?;
    }
    let mut header: Vec<String> = ds.feature_names.clone();
    header.push("y".into());
    header.push("a".into());
    for name in ds.transfer.keys() {
        header.push(name.clone());
    }
    let tags = split.map(|s| s.tags(ds.len()));
    if tags.is_some() {
        header.push("split".into());
    }
    writeln!(file, "{}", header.join(",")).map_err(io_err)?;
    for r in 0..ds.len() {
        let mut fields: Vec<String> = ds.x.row(r).iter().map(|v| format!("{}", v)).collect();
        fields.push(ds.y[r].to_string());
        fields.push(ds.a[r].to_string());
        for labels in ds.transfer.values() {
            fields.push(labels[r].to_string());
        }
        if let Some(tags) = &tags {
            fields.push(tags[r].as_str().to_string());
        }
        writeln!(file, "{}", fields.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// Schema text matching [`write_csv`] output for this dataset.
pub fn roundtrip_schema(ds: &GroupedDataset, with_split: bool) -> String {
    let mut out = String::new();
    for name in &ds.feature_names {
        out.push_str(&format!("{} = feature-continuous\n", name));
    }
    out.push_str("y = label\n");
    out.push_str("a = sensitive\n");
    for name in ds.transfer.keys() {
        out.push_str(&format!("{} = transfer-label:{}\n", name, name));
    }
    if with_split {
        out.push_str("split = split\n");
    }
    out
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

/// Specification for the seeded synthetic generator standing in for the
/// Adult/Health-scale data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    /// Group imbalance p(A = 1).
    pub p_a1: f64,
    /// Per-group base rates p(Y = 1 | A = a).
    pub base_rates: [f64; 2],
    /// Strength in [0, 1] of the feature proxy for A: 0 means the features
    /// carry no direct group signal, 1 means A is linearly recoverable.
    pub proxy_strength: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 4000,
            d: 20,
            p_a1: 0.26,
            base_rates: [0.45, 0.25],
            proxy_strength: 0.8,
            seed: 0,
        }
    }
}

/// Number of auxiliary transfer labels the generator attaches.
pub const TRANSFER_TASK_COUNT: usize = 10;

/// Positive base rates for the transfer labels (evenly spanning 9%..60%).
pub fn transfer_base_rates() -> Vec<f64> {
    (0..TRANSFER_TASK_COUNT)
        .map(|t| 0.09 + (0.60 - 0.09) * t as f64 / (TRANSFER_TASK_COUNT - 1) as f64)
        .collect()
}

// Cluster separations along the group-proxy and label-signal directions.
const PROXY_SCALE: f64 = 2.0;
const LABEL_SCALE: f64 = 1.25;
// Overlap between the label direction and the proxy direction. Zero keeps
// the proxy a pure nuisance direction: group-informative, label-free.
const LABEL_PROXY_OVERLAP: f64 = 0.0;

fn unit_gaussian_vec(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

/// Generate a seeded synthetic dataset: a controllable linear proxy for A,
/// a label signal partially aligned with it, and ten auxiliary transfer
/// labels with base rates spanning 9-60% and varying correlation to Y.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<GroupedDataset> {
    if !(spec.p_a1 > 0.0 && spec.p_a1 < 1.0) {
        return Err(Error::RejectedInput("p_a1 must lie in (0, 1)".into()));
    }
    for (i, &b) in spec.base_rates.iter().enumerate() {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::RejectedInput(format!(
                "base rate p(Y=1|A={}) = {} is degenerate",
                i, b
            )));
        }
    }
    if !(0.0..=1.0).contains(&spec.proxy_strength) {
        return Err(Error::RejectedInput("proxy_strength must be in [0, 1]".into()));
    }
    if spec.d < 2 || spec.n < 8 {
        return Err(Error::RejectedInput(
            "need at least 2 features and 8 rows".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = unit_gaussian_vec(spec.d, &mut rng);
    // Label direction: fixed overlap with the proxy direction.
    let w = unit_gaussian_vec(spec.d, &mut rng);
    let dot: f64 = w.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
    let mut orth: Vec<f64> = w.iter().zip(u.iter()).map(|(wi, ui)| wi - dot * ui).collect();
    let norm = orth.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    for o in &mut orth {
        *o /= norm;
    }
    let v: Vec<f64> = u
        .iter()
        .zip(orth.iter())
        .map(|(ui, oi)| LABEL_PROXY_OVERLAP * ui + (1.0 - LABEL_PROXY_OVERLAP * LABEL_PROXY_OVERLAP).sqrt() * oi)
        .collect();

    let mut a = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    let mut x = Mat::zeros(spec.n, spec.d);
    for r in 0..spec.n {
        let ai = u8::from(rng.random_bool(spec.p_a1));
        let yi = u8::from(rng.random_bool(spec.base_rates[ai as usize]));
        let sa = spec.proxy_strength * PROXY_SCALE * (2.0 * ai as f64 - 1.0);
        let sy = LABEL_SCALE * (2.0 * yi as f64 - 1.0);
        let row = x.row_mut(r);
        for c in 0..spec.d {
            let noise: f64 = StandardNormal.sample(&mut rng);
            row[c] = sa * u[c] + sy * v[c] + noise;
        }
        a.push(ai);
        y.push(yi);
    }

    // Transfer labels: thresholded mixtures of the label direction and a
    // task-specific direction orthogonal to the group proxy, hitting each
    // target base rate exactly. Correlation with Y decays across tasks;
    // group correlation enters only through the label direction's overlap
    // with the proxy, as for Y itself.
    let mut transfer = BTreeMap::new();
    let rates = transfer_base_rates();
    for (t, &rate) in rates.iter().enumerate() {
        let cy = 1.3 - 0.08 * t as f64;
        let w = unit_gaussian_vec(spec.d, &mut rng);
        let wu: f64 = w.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
        let w_perp: Vec<f64> = w.iter().zip(u.iter()).map(|(wi, ui)| wi - wu * ui).collect();
        let mut scores: Vec<f64> = (0..spec.n)
            .map(|r| {
                let row = x.row(r);
                let py: f64 = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                let pw: f64 = row.iter().zip(w_perp.iter()).map(|(a, b)| a * b).sum();
                let noise: f64 = StandardNormal.sample(&mut rng);
                cy * py + 0.35 * pw + 0.5 * noise
            })
            .collect();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = ((1.0 - rate) * spec.n as f64).round() as usize;
        let cut = sorted[k.min(spec.n - 1)];
        let labels: Vec<u8> = scores.drain(..).map(|s| u8::from(s >= cut)).collect();
        transfer.insert(format!("task{:02}", t), labels);
    }

    let feature_names = (0..spec.d).map(|i| format!("x{}", i)).collect();
    let continuous_cols = (0..spec.d).collect();
    GroupedDataset::with_metadata(x, y, a, transfer, feature_names, continuous_cols)
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GroupedDataset {
        let x = Mat::from_rows(&[
            vec![1.0, 0.0],
            vec![2.0, 1.0],
            vec![3.0, 0.0],
            vec![4.0, 1.0],
        ]);
        GroupedDataset::new(x, vec![0, 0, 1, 1], vec![0, 1, 0, 1]).unwrap()
    }

    #[test]
    fn cells_cover_all_rows_once() {
        let ds = tiny();
        let c = partition_cells(&ds);
        assert_eq!(c.d0, vec![0, 2]);
        assert_eq!(c.d1, vec![1, 3]);
        for cell in [&c.d00, &c.d10, &c.d01, &c.d11] {
            assert_eq!(cell.len(), 1);
        }
        let mut all: Vec<usize> = [&c.d00[..], &c.d10[..], &c.d01[..], &c.d11[..]].concat();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn all_one_group_leaves_other_cell_empty() {
        let x = Mat::from_rows(&[vec![0.0], vec![1.0]]);
        let ds = GroupedDataset::new(x, vec![0, 1], vec![0, 0]).unwrap();
        let c = partition_cells(&ds);
        assert!(c.d1.is_empty());
        assert_eq!(c.d0, vec![0, 1]);
    }

    #[test]
    fn random_cells_match_counting_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1000;
        let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        let cells = partition_rows(&a, &y);
        // Naive counting oracle.
        let count = |ai: u8, yi: Option<u8>| {
            (0..n)
                .filter(|&i| a[i] == ai && yi.map_or(true, |y0| y[i] == y0))
                .count()
        };
        assert_eq!(cells.d0.len(), count(0, None));
        assert_eq!(cells.d1.len(), count(1, None));
        assert_eq!(cells.d00.len(), count(0, Some(0)));
        assert_eq!(cells.d10.len(), count(1, Some(0)));
        assert_eq!(cells.d01.len(), count(0, Some(1)));
        assert_eq!(cells.d11.len(), count(1, Some(1)));
    }

    #[test]
    fn split_sizes_are_exact_for_round_fractions() {
        let spec = SyntheticSpec {
            n: 1000,
            ..Default::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let s = split(
            &ds,
            &SplitSpec {
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.train.len(), 600);
        assert_eq!(s.validation.len(), 200);
        assert_eq!(s.test.len(), 200);
        assert_eq!(s.transfer_train.len(), 100);
        assert_eq!(s.transfer_validation.len(), 40);
        assert_eq!(s.transfer_test.len(), 60);
    }

    #[test]
    fn split_is_seed_deterministic_and_exhaustive() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 503,
            ..Default::default()
        })
        .unwrap();
        let spec = SplitSpec {
            seed: 9,
            ..Default::default()
        };
        let s1 = split(&ds, &spec).unwrap();
        let s2 = split(&ds, &spec).unwrap();
        assert_eq!(s1, s2);
        let mut all = [s1.train.clone(), s1.validation.clone(), s1.test.clone()].concat();
        all.sort();
        assert_eq!(all, (0..503).collect::<Vec<_>>());
        // Transfer subsets partition the test split.
        let mut t = [
            s1.transfer_train.clone(),
            s1.transfer_validation.clone(),
            s1.transfer_test.clone(),
        ]
        .concat();
        t.sort();
        let mut test = s1.test.clone();
        test.sort();
        assert_eq!(t, test);
    }

    #[test]
    fn degenerate_fractions_rejected() {
        let ds = tiny();
        let bad = SplitSpec {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
            ..Default::default()
        };
        assert!(split(&ds, &bad).is_err());
    }

    #[test]
    fn too_small_split_rejected() {
        let x = Mat::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let ds = GroupedDataset::new(x, vec![0, 1, 0, 1], vec![0, 0, 1, 1]).unwrap();
        // validation would round to zero rows
        let spec = SplitSpec {
            train: 0.9,
            validation: 0.05,
            test: 0.05,
            ..Default::default()
        };
        assert!(split(&ds, &spec).is_err());
    }

    #[test]
    fn synthetic_is_seed_deterministic() {
        let spec = SyntheticSpec {
            n: 200,
            seed: 5,
            ..Default::default()
        };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    }

    #[test]
    fn synthetic_group_fraction_within_three_binomial_sd() {
        let spec = SyntheticSpec {
            n: 10_000,
            p_a1: 0.26,
            seed: 12,
            ..Default::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let frac = ds.a.iter().map(|&v| v as f64).sum::<f64>() / ds.len() as f64;
        let sd = (0.26f64 * 0.74 / 10_000.0).sqrt();
        assert!(
            (frac - 0.26).abs() <= 3.0 * sd,
            "fraction {} vs 0.26 +- {}",
            frac,
            3.0 * sd
        );
    }

    #[test]
    fn degenerate_base_rate_rejected() {
        let spec = SyntheticSpec {
            base_rates: [1.0, 0.3],
            ..Default::default()
        };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn transfer_labels_hit_declared_base_rates() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 2000,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ds.transfer.len(), TRANSFER_TASK_COUNT);
        for (rate, labels) in transfer_base_rates().iter().zip(ds.transfer.values()) {
            let got = labels.iter().map(|&v| v as f64).sum::<f64>() / labels.len() as f64;
            assert!(
                (got - rate).abs() < 0.01,
                "base rate {} vs requested {}",
                got,
                rate
            );
        }
    }

    #[test]
    fn standardization_train_moments_match_two_pass_oracle() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 800,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let splits = prepare(&ds, &SplitSpec::default()).unwrap();
        // Independent two-pass oracle on the standardized train split.
        for c in 0..splits.train.dim() {
            let col = splits.train.x.col(c);
            let mu = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / col.len() as f64;
            assert!(mu.abs() < 1e-9, "col {} mean {}", c, mu);
            assert!((var.sqrt() - 1.0).abs() < 1e-9, "col {} sd {}", c, var.sqrt());
        }
    }

    #[test]
    fn schema_parses_roles_and_mappings() {
        let text = "age = feature-continuous\n\
                    workclass = feature-categorical\n\
                    income = label:eq:>50K\n\
                    sex = sensitive:eq:Male\n\
                    pcg = transfer-label:pcg:nonzero\n\
                    fnlwgt = ignore\n\
                    split = split\n";
        let s = Schema::parse(text).unwrap();
        assert_eq!(s.roles.len(), 7);
        assert_eq!(
            s.role_of("income"),
            Some(&ColumnRole::Label(BinRule::Eq(">50K".into())))
        );
        assert_eq!(
            s.role_of("pcg"),
            Some(&ColumnRole::TransferLabel("pcg".into(), BinRule::Nonzero))
        );
    }

    #[test]
    fn csv_label_mapping_and_missing_cell_errors() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("t.csv");
        fs::write(
            &csv_path,
            "age,income,sex\n25,<=50K,Male\n40,>50K,Female\n31,<=50K,Female\n52,>50K,Male\n",
        )
        .unwrap();
        let schema = Schema::parse(
            "age = feature-continuous\nincome = label:eq:>50K\nsex = sensitive:eq:Male\n",
        )
        .unwrap();
        let loaded = load_csv(&csv_path, &schema).unwrap();
        assert_eq!(loaded.dataset.y, vec![0, 1, 0, 1]);
        assert_eq!(loaded.dataset.a, vec![1, 0, 0, 1]);

        fs::write(&csv_path, "age,income,sex\n25,<=50K,Male\n,>50K,Female\n").unwrap();
        let err = load_csv(&csv_path, &schema).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("age"), "{}", msg);
    }

    #[test]
    fn csv_roundtrip_preserves_tensors_exactly() {
        let ds = generate_synthetic(&SyntheticSpec {
            n: 120,
            d: 5,
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        let idx = split(&ds, &SplitSpec::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_csv(&ds, &path, Some(&idx), Some("config_fingerprint=test")).unwrap();
        let schema = Schema::parse(&roundtrip_schema(&ds, true)).unwrap();
        let loaded = load_csv(&path, &schema).unwrap();
        assert_eq!(loaded.dataset.y, ds.y);
        assert_eq!(loaded.dataset.a, ds.a);
        assert_eq!(loaded.dataset.transfer, ds.transfer);
        for (got, want) in loaded.dataset.x.data().iter().zip(ds.x.data().iter()) {
            assert!((got - want).abs() < 1e-12);
        }
        // The reloaded split lists rows in file order; compare as sets.
        let sorted = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort();
            v
        };
        let got = loaded.split.as_ref().unwrap();
        assert_eq!(sorted(&got.train), sorted(&idx.train));
        assert_eq!(sorted(&got.validation), sorted(&idx.validation));
        assert_eq!(sorted(&got.test), sorted(&idx.test));
        assert_eq!(sorted(&got.transfer_train), sorted(&idx.transfer_train));
        assert_eq!(
            sorted(&got.transfer_validation),
            sorted(&idx.transfer_validation)
        );
        assert_eq!(sorted(&got.transfer_test), sorted(&idx.transfer_test));
    }
}
