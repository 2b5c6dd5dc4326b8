//! Tabular dataset loading, standardization and stratified fold generation.
//!
//! Two input formats are supported: KEEL `.dat` files (an ARFF-like header with
//! `@attribute` declarations followed by `@data`) and plain CSV with a header row.
//! Both produce the same [`Dataset`]: a dense feature matrix with one-hot expanded
//! nominal inputs and dense class ids assigned in first-appearance order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Lower bound applied to every fitted standard deviation.
pub const STDDEV_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub feature_names: Vec<String>,
    /// Original class tokens, indexed by class id.
    pub class_names: Vec<String>,
    pub source_name: String,
}

impl Dataset {
    /// Builds a dataset and checks its invariants: finite features, labels in
    /// range, every class present, and at least one row per class.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
        source_name: impl Into<String>,
    ) -> Result<Self> {
        let ds = Dataset {
            class_count: class_names.len(),
            features,
            labels,
            feature_names,
            class_names,
            source_name: source_name.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.features.dim();
        if self.labels.len() != n {
            return Err(Error::dims(format!(
                "{} feature rows but {} labels",
                n,
                self.labels.len()
            )));
        }
        if self.feature_names.len() != d {
            return Err(Error::dims(format!(
                "{} feature columns but {} names",
                d,
                self.feature_names.len()
            )));
        }
        if self.class_count == 0 || n < self.class_count {
            return Err(Error::invalid(format!(
                "{} rows cannot cover {} classes",
                n, self.class_count
            )));
        }
        if let Some((pos, _)) = self
            .features
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::NonFinite(format!(
                "feature at row {}, column {}",
                pos / d.max(1),
                pos % d.max(1)
            )));
        }
        let counts = self.class_counts();
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.class_count) {
            return Err(Error::invalid(format!(
                "label {} outside 0..{}",
                bad, self.class_count
            )));
        }
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("class {} has no rows", missing)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            if l < self.class_count {
                counts[l] += 1;
            }
        }
        counts
    }

    /// Copies the given rows into a new dataset with the same class space.
    ///
    /// The result may lack some classes; it is not re-validated.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            source_name: self.source_name.clone(),
        }
    }

    /// Same rows and labels with features replaced (e.g. after standardization).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Dataset> {
        if features.dim() != self.features.dim() {
            return Err(Error::dims(format!(
                "replacement features {:?} vs {:?}",
                features.dim(),
                self.features.dim()
            )));
        }
        Ok(Dataset {
            features,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

// ---------------------------------------------------------------------------
// KEEL

#[derive(Debug, Clone)]
enum AttrKind {
    Numeric,
    Nominal(Vec<String>),
}

#[derive(Debug, Clone)]
struct Attribute {
    name: String,
    kind: AttrKind,
}

fn is_missing(token: &str) -> bool {
    token == "?" || token.eq_ignore_ascii_case("<null>")
}

fn source_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Splits a KEEL attribute declaration body into (name, rest).
fn split_attr_name(body: &str) -> Option<(String, &str)> {
    let body = body.trim_start();
    if let Some(quote) = body.chars().next().filter(|c| *c == '\'' || *c == '"') {
        let rest = &body[1..];
        let end = rest.find(quote)?;
        Some((rest[..end].to_string(), &rest[end + 1..]))
    } else {
        let end = body
            .find(|c: char| c.is_whitespace() || c == '{')
            .unwrap_or(body.len());
        if end == 0 {
            return None;
        }
        Some((body[..end].to_string(), &body[end..]))
    }
}

fn parse_attribute(path: &Path, line_no: usize, body: &str) -> Result<Attribute> {
    let (name, rest) = split_attr_name(body)
        .ok_or_else(|| Error::parse(path, line_no, "attribute declaration without a name"))?;
    let rest = rest.trim();
    if let Some(inner) = rest.strip_prefix('{') {
        let inner = inner
            .strip_suffix('}')
            .ok_or_else(|| Error::parse(path, line_no, "unterminated nominal domain"))?;
        let levels: Vec<String> = inner
            .split(',')
            .map(|s| s.trim().trim_matches('\'').trim_matches('"').to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if levels.is_empty() {
            return Err(Error::parse(path, line_no, "empty nominal domain"));
        }
        return Ok(Attribute {
            name,
            kind: AttrKind::Nominal(levels),
        });
    }
    let ty = rest
        .split(|c: char| c.is_whitespace() || c == '[')
        .next()
        .unwrap_or("")
        .to_ascii_lowercase();
    match ty.as_str() {
        "real" | "integer" | "numeric" => Ok(Attribute {
            name,
            kind: AttrKind::Numeric,
        }),
        "" => Err(Error::parse(
            path,
            line_no,
            format!("attribute '{name}' has no type"),
        )),
        other => Err(Error::parse(
            path,
            line_no,
            format!("unsupported attribute type '{other}' for '{name}'"),
        )),
    }
}

fn name_list(body: &str) -> Vec<String> {
    body.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Assigns dense ids to class tokens in first-appearance order.
#[derive(Default)]
struct ClassIndex {
    ids: HashMap<String, usize>,
    names: Vec<String>,
}

impl ClassIndex {
    fn id(&mut self, token: &str) -> usize {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.names.len();
        self.ids.insert(token.to_string(), id);
        self.names.push(token.to_string());
        id
    }
}

/// Parses a KEEL `.dat` file.
///
/// The class is the attribute named in `@outputs` when present, otherwise the
/// last declared attribute. Nominal input attributes are one-hot expanded over
/// their declared levels; rows containing missing values are rejected.
pub fn parse_keel(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_keel_str(&text, path)
}

/// Parses KEEL text; `path` is used only for error messages and the source name.
pub fn parse_keel_str(text: &str, path: &Path) -> Result<Dataset> {
    let mut attributes: Vec<Attribute> = Vec::new();
    let mut inputs: Option<Vec<String>> = None;
    let mut outputs: Option<Vec<String>> = None;
    let mut data_start = None;

    let mut lines = text.lines().enumerate();
    for (idx, raw) in lines.by_ref() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !line.starts_with('@') {
            return Err(Error::parse(
                path,
                line_no,
                "expected a header directive before @data",
            ));
        }
        let (keyword, body) = line
            .split_once(|c: char| c.is_whitespace())
            .unwrap_or((line, ""));
        match keyword.to_ascii_lowercase().as_str() {
            "@relation" => {}
            "@attribute" => attributes.push(parse_attribute(path, line_no, body)?),
            "@inputs" | "@input" => inputs = Some(name_list(body)),
            "@outputs" | "@output" => outputs = Some(name_list(body)),
            "@data" => {
                data_start = Some(line_no);
                break;
            }
            other => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("unknown header directive '{other}'"),
                ))
            }
        }
    }
    let data_line = data_start
        .ok_or_else(|| Error::parse(path, text.lines().count().max(1), "missing @data section"))?;
    if attributes.len() < 2 {
        return Err(Error::parse(
            path,
            data_line,
            "need at least one input attribute and a class attribute",
        ));
    }

    let position = |name: &str| attributes.iter().position(|a| a.name == name);
    let class_pos = match &outputs {
        Some(out) => {
            if out.len() != 1 {
                return Err(Error::parse(
                    path,
                    data_line,
                    "exactly one @outputs attribute is supported",
                ));
            }
            position(&out[0]).ok_or_else(|| {
                Error::parse(
                    path,
                    data_line,
                    format!("@outputs names unknown attribute '{}'", out[0]),
                )
            })?
        }
        None => attributes.len() - 1,
    };
    let input_pos: Vec<usize> = match &inputs {
        Some(names) => names
            .iter()
            .map(|n| {
                position(n).ok_or_else(|| {
                    Error::parse(
                        path,
                        data_line,
                        format!("@inputs names unknown attribute '{n}'"),
                    )
                })
            })
            .collect::<Result<_>>()?,
        None => (0..attributes.len()).filter(|&i| i != class_pos).collect(),
    };
    if input_pos.contains(&class_pos) {
        return Err(Error::parse(
            path,
            data_line,
            "class attribute listed as an input",
        ));
    }

    let mut feature_names = Vec::new();
    for &i in &input_pos {
        let attr = &attributes[i];
        match &attr.kind {
            AttrKind::Numeric => feature_names.push(attr.name.clone()),
            AttrKind::Nominal(levels) => {
                feature_names.extend(levels.iter().map(|l| format!("{}={}", attr.name, l)))
            }
        }
    }
    let class_domain = match &attributes[class_pos].kind {
        AttrKind::Nominal(levels) => Some(levels.clone()),
        AttrKind::Numeric => None,
    };

    let d = feature_names.len();
    let mut values: Vec<f64> = Vec::new();
    let mut classes = ClassIndex::default();
    let mut labels = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
        if tokens.len() != attributes.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!(
                    "expected {} values, found {}",
                    attributes.len(),
                    tokens.len()
                ),
            ));
        }
        for &i in &input_pos {
            let token = tokens[i];
            if is_missing(token) {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("missing value for '{}'", attributes[i].name),
                ));
            }
            match &attributes[i].kind {
                AttrKind::Numeric => {
                    let v: f64 = token.parse().map_err(|_| {
                        Error::parse(
                            path,
                            line_no,
                            format!("non-numeric value '{token}' for '{}'", attributes[i].name),
                        )
                    })?;
                    if !v.is_finite() {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("non-finite value for '{}'", attributes[i].name),
                        ));
                    }
                    values.push(v);
                }
                AttrKind::Nominal(levels) => {
                    let token = token.trim_matches('\'').trim_matches('"');
                    let hit = levels.iter().position(|l| l == token).ok_or_else(|| {
                        Error::parse(
                            path,
                            line_no,
                            format!(
                                "value '{token}' not in the domain of '{}'",
                                attributes[i].name
                            ),
                        )
                    })?;
                    values.extend((0..levels.len()).map(|k| if k == hit { 1.0 } else { 0.0 }));
                }
            }
        }
        let class_token = tokens[class_pos].trim_matches('\'').trim_matches('"');
        if is_missing(class_token) {
            return Err(Error::parse(path, line_no, "missing class value"));
        }
        if let Some(domain) = &class_domain {
            if !domain.iter().any(|l| l == class_token) {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("class '{class_token}' not in the declared class domain"),
                ));
            }
        }
        labels.push(classes.id(class_token));
    }

    let n = labels.len();
    let features =
        Array2::from_shape_vec((n, d), values).map_err(|e| Error::dims(e.to_string()))?;
    Dataset::new(
        features,
        labels,
        classes.names,
        feature_names,
        source_name(path),
    )
}

// ---------------------------------------------------------------------------
// CSV

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("class".to_string())
    }
}

/// Parses a CSV file with a header row; every column except the label must be numeric.
pub fn parse_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_csv_str(&text, path, label_column)
}

pub fn parse_csv_str(text: &str, path: &Path, label_column: &LabelColumn) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let label_pos = match label_column {
        LabelColumn::Index(i) if *i < headers.len() => *i,
        LabelColumn::Index(i) => {
            return Err(Error::parse(
                path,
                1,
                format!(
                    "label column index {i} out of range ({} columns)",
                    headers.len()
                ),
            ))
        }
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, 1, format!("label column '{name}' not found")))?,
    };
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_pos)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut classes = ClassIndex::default();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line_no = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} values, found {}", headers.len(), record.len()),
            ));
        }
        for (i, cell) in record.iter().enumerate() {
            if i == label_pos {
                continue;
            }
            if cell.is_empty() || is_missing(cell) {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("missing value in column '{}'", headers[i]),
                ));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    path,
                    line_no,
                    format!("non-numeric value '{cell}' in column '{}'", headers[i]),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("non-finite value in column '{}'", headers[i]),
                ));
            }
            values.push(v);
        }
        let token = &record[label_pos];
        if token.is_empty() || is_missing(token) {
            return Err(Error::parse(path, line_no, "missing class value"));
        }
        labels.push(classes.id(token));
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, feature_names.len()), values)
        .map_err(|e| Error::dims(e.to_string()))?;
    Dataset::new(
        features,
        labels,
        classes.names,
        feature_names,
        source_name(path),
    )
}

// ---------------------------------------------------------------------------
// Standardization

/// Fits per-column mean and population standard deviation over `rows`.
pub fn fit_standardizer(features: ArrayView2<f64>, rows: &[usize]) -> Result<StandardizationStats> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot fit a standardizer on zero rows"));
    }
    let n = features.nrows();
    if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
        return Err(Error::invalid(format!("row {bad} out of range ({n} rows)")));
    }
    let d = features.ncols();
    let count = rows.len() as f64;
    let mut mean = Array1::<f64>::zeros(d);
    for &r in rows {
        mean += &features.row(r);
    }
    mean /= count;
    let mut var = Array1::<f64>::zeros(d);
    for &r in rows {
        let diff = &features.row(r) - &mean;
        var += &(&diff * &diff);
    }
    var /= count;
    Ok(StandardizationStats {
        mean: mean.to_vec(),
        stddev: var.iter().map(|v| v.sqrt().max(STDDEV_FLOOR)).collect(),
    })
}

pub fn apply_standardizer(
    features: ArrayView2<f64>,
    stats: &StandardizationStats,
) -> Result<Array2<f64>> {
    let d = features.ncols();
    if stats.mean.len() != d || stats.stddev.len() != d {
        return Err(Error::dims(format!(
            "{} feature columns, standardizer fitted on {}",
            d,
            stats.mean.len()
        )));
    }
    let mut out = features.to_owned();
    for mut row in out.rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.stddev) {
            *v = (*v - m) / s;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("standardized feature".into()));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Folds

/// Repeatable stratified k-fold split.
///
/// Each class's rows are shuffled with a seeded stream and dealt round-robin into
/// the folds. The dealing position carries over between classes so that fold
/// sizes stay balanced overall as well as per class.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    stratified_kfold_labels(&dataset.labels, dataset.class_count, k, seed)
}

pub fn stratified_kfold_labels(
    labels: &[usize],
    class_count: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    let by_class = rows_by_class(labels, class_count)?;
    for (class, rows) in by_class.iter().enumerate() {
        if rows.len() < k {
            return Err(Error::invalid(format!(
                "class {class} has {} members, fewer than k = {k}",
                rows.len()
            )));
        }
    }
    let mut rng = seed::rng(seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut cursor = 0usize;
    for mut rows in by_class {
        rows.shuffle(&mut rng);
        for r in rows {
            fold_of[r] = cursor % k;
            cursor += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| fold_of[i] == f);
            FoldSplit {
                train_indices: train,
                test_indices: test,
            }
        })
        .collect())
}

/// Stratified single holdout: roughly `fraction` of each class goes to the
/// held-out side (rounded, at least one row when the class has two or more).
pub fn stratified_holdout(
    labels: &[usize],
    class_count: usize,
    fraction: f64,
    seed: u64,
) -> Result<FoldSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "holdout fraction {fraction} not in (0, 1)"
        )));
    }
    let by_class = rows_by_class(labels, class_count)?;
    let mut rng = seed::rng(seed);
    let mut test = Vec::new();
    for mut rows in by_class {
        rows.shuffle(&mut rng);
        let mut take = (rows.len() as f64 * fraction).round() as usize;
        if rows.len() >= 2 {
            take = take.clamp(1, rows.len() - 1);
        } else {
            take = 0;
        }
        test.extend_from_slice(&rows[..take]);
    }
    test.sort_unstable();
    let mut is_test = vec![false; labels.len()];
    for &t in &test {
        is_test[t] = true;
    }
    let train = (0..labels.len()).filter(|&i| !is_test[i]).collect();
    Ok(FoldSplit {
        train_indices: train,
        test_indices: test,
    })
}

fn rows_by_class(labels: &[usize], class_count: usize) -> Result<Vec<Vec<usize>>> {
    let mut by_class = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        by_class
            .get_mut(l)
            .ok_or_else(|| Error::invalid(format!("label {l} outside 0..{class_count}")))?
            .push(i);
    }
    Ok(by_class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn keel(text: &str) -> Result<Dataset> {
        parse_keel_str(text, Path::new("mem.dat"))
    }

    const SMALL: &str = "@relation toy
@attribute x1 real [0.0, 10.0]
@attribute x2 integer [0, 5]
@attribute class {a, b}
@inputs x1, x2
@outputs class
@data
1.5, 2, a
3.0, 4, b
0.5, 1, a
";

    #[test]
    fn keel_small_file() {
        let ds = keel(SMALL).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.class_count, 2);
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.class_names, vec!["a", "b"]);
        assert_eq!(ds.features, array![[1.5, 2.0], [3.0, 4.0], [0.5, 1.0]]);
        assert_eq!(ds.source_name, "mem");
    }

    #[test]
    fn keel_class_ids_follow_first_appearance() {
        let text = SMALL
            .replace("1.5, 2, a", "1.5, 2, b")
            .replace("3.0, 4, b", "3.0, 4, a");
        let ds = keel(&text).unwrap();
        assert_eq!(ds.class_names, vec!["b", "a"]);
        assert_eq!(ds.labels, vec![0, 1, 1]);
    }

    #[test]
    fn keel_nominal_input_is_one_hot() {
        let text = "@relation t
@attribute color {red, green, blue}
@attribute w real
@attribute class {p, q}
@data
green, 1.0, p
blue, 2.0, q
red, 3.0, p
";
        let ds = keel(text).unwrap();
        assert_eq!(ds.dim(), 4);
        assert_eq!(
            ds.feature_names,
            vec!["color=red", "color=green", "color=blue", "w"]
        );
        assert_eq!(ds.features.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(ds.features.row(1).to_vec(), vec![0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn keel_errors_carry_line_numbers() {
        let bad_header = "@relation t\n@attribute x\n@attribute c {a}\n@data\n1,a\n";
        match keel(bad_header) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let arity = SMALL.replace("3.0, 4, b", "3.0, b");
        match keel(&arity) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 9);
                assert!(message.contains("expected 3"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let unseen = SMALL.replace("0.5, 1, a", "0.5, 1, c");
        match keel(&unseen) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 10);
                assert!(message.contains("class 'c'"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(keel("@relation t\n@attribute x real\n@attribute c {a}\n").is_err());
    }

    #[test]
    fn keel_rejects_missing_values() {
        let text = SMALL.replace("3.0, 4, b", "?, 4, b");
        let err = keel(&text).unwrap_err();
        assert!(err.to_string().contains("missing value"), "{err}");
    }

    #[test]
    fn csv_basic_and_label_by_index() {
        let text = "f1,f2,label\n1,2,1\n3,4,0\n5,6,1\n7,8,0\n";
        let ds =
            parse_csv_str(text, Path::new("t.csv"), &LabelColumn::Name("label".into())).unwrap();
        assert_eq!(ds.class_count, 2);
        assert_eq!(ds.labels, vec![0, 1, 0, 1]);
        assert_eq!(ds.class_names, vec!["1", "0"]);
        let by_idx = parse_csv_str(text, Path::new("t.csv"), &LabelColumn::Index(2)).unwrap();
        assert_eq!(ds, by_idx);
    }

    #[test]
    fn csv_errors() {
        let text = "f1,label\n1,a\nx,b\n";
        let err = parse_csv_str(text, Path::new("t.csv"), &LabelColumn::Name("label".into()))
            .unwrap_err();
        assert!(err.to_string().contains("non-numeric"), "{err}");
        let err = parse_csv_str(
            "f1,f2\n1,2\n",
            Path::new("t.csv"),
            &LabelColumn::Name("y".into()),
        )
        .unwrap_err();
        assert!(err.to_string().contains("'y' not found"), "{err}");
    }

    #[test]
    fn csv_constant_column_standardizes_to_zero() {
        let text = "c,v,y\n5,1,a\n5,2,b\n5,3,a\n";
        let ds = parse_csv_str(text, Path::new("t.csv"), &LabelColumn::Name("y".into())).unwrap();
        let rows: Vec<usize> = (0..ds.len()).collect();
        let stats = fit_standardizer(ds.features.view(), &rows).unwrap();
        assert_eq!(stats.stddev[0], STDDEV_FLOOR);
        let z = apply_standardizer(ds.features.view(), &stats).unwrap();
        assert!(z.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_standardizer_examples() {
        let s = fit_standardizer(array![[0.0], [2.0]].view(), &[0, 1]).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        assert_eq!(s.stddev, vec![1.0]);

        let s = fit_standardizer(array![[5.0], [5.0]].view(), &[0, 1]).unwrap();
        assert_eq!(s.mean, vec![5.0]);
        assert_eq!(s.stddev, vec![1e-8]);

        // Hand arithmetic: deviations ±1.5, ±0.5 → variance (2.25+0.25)*2/4 = 1.25.
        let s = fit_standardizer(array![[1.0], [2.0], [3.0], [4.0]].view(), &[0, 1, 2, 3]).unwrap();
        assert_eq!(s.mean, vec![2.5]);
        assert!((s.stddev[0] - 1.25f64.sqrt()).abs() < 1e-15);
        assert!((s.stddev[0] - 1.1180).abs() < 1e-4);

        assert!(fit_standardizer(array![[1.0]].view(), &[]).is_err());
    }

    #[test]
    fn standardizer_uses_only_requested_rows() {
        let x = array![[1.0, 10.0], [3.0, 10.0], [100.0, -4.0]];
        let s = fit_standardizer(x.view(), &[0, 1]).unwrap();
        assert_eq!(s.mean, vec![2.0, 10.0]);
        assert_eq!(s.stddev, vec![1.0, 1e-8]);
        // Test row standardized with train stats: (100 - 2) / 1 and (-4 - 10) / 1e-8.
        let z = apply_standardizer(x.slice(ndarray::s![2..3, ..]), &s).unwrap();
        assert_eq!(z[[0, 0]], 98.0);
        assert!((z[[0, 1]] - (-14.0 / 1e-8)).abs() < 1e-3);
        assert!(apply_standardizer(array![[1.0]].view(), &s).is_err());
    }

    fn labelled(counts: &[usize]) -> Vec<usize> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect()
    }

    #[test]
    fn kfold_balanced_small() {
        let labels = labelled(&[5, 5]);
        let folds = stratified_kfold_labels(&labels, 2, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            let per: Vec<usize> = (0..2)
                .map(|c| f.test_indices.iter().filter(|&&i| labels[i] == c).count())
                .collect();
            assert_eq!(per, vec![1, 1]);
        }
        assert_eq!(folds, stratified_kfold_labels(&labels, 2, 5, 3).unwrap());
    }

    #[test]
    fn kfold_counting_oracle() {
        // 103 = 5*20 + 3 and 47 = 5*9 + 2: each fold gets floor or ceil.
        let labels = labelled(&[103, 47]);
        let folds = stratified_kfold_labels(&labels, 2, 5, 11).unwrap();
        let mut seen = vec![0usize; labels.len()];
        for f in &folds {
            let a = f.test_indices.iter().filter(|&&i| labels[i] == 0).count();
            let b = f.test_indices.iter().filter(|&&i| labels[i] == 1).count();
            assert!((20..=21).contains(&a), "class A count {a}");
            assert!((9..=10).contains(&b), "class B count {b}");
            for &i in &f.test_indices {
                seen[i] += 1;
            }
            assert_eq!(f.train_indices.len() + f.test_indices.len(), labels.len());
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn kfold_rejects_small_class() {
        let labels = labelled(&[10, 3]);
        let err = stratified_kfold_labels(&labels, 2, 5, 0).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
        assert!(stratified_kfold_labels(&labels, 2, 1, 0).is_err());
    }

    #[test]
    fn holdout_is_stratified() {
        let labels = labelled(&[50, 10, 2]);
        let split = stratified_holdout(&labels, 3, 0.2, 9).unwrap();
        let per: Vec<usize> = (0..3)
            .map(|c| {
                split
                    .test_indices
                    .iter()
                    .filter(|&&i| labels[i] == c)
                    .count()
            })
            .collect();
        assert_eq!(per, vec![10, 2, 1]);
        assert_eq!(split.train_indices.len(), 62 - 13);
    }
}
