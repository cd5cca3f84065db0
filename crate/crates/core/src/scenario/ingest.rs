use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a raw column is reduced to {0, 1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Coding {
    /// Values must already read as 0 or 1.
    Binary,
    /// 1 iff value > sample median; ties go to 0.
    ContinuousMedianSplit,
    /// Every observed category must appear in the map.
    CategoricalCollapse { collapse_map: BTreeMap<String, u8> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderSpec {
    /// Column name in the source file.
    pub name: String,
    #[serde(flatten)]
    pub coding: Coding,
}

impl ConfounderSpec {
    pub fn binary(name: &str) -> Self {
        ConfounderSpec {
            name: name.to_string(),
            coding: Coding::Binary,
        }
    }

    pub fn median_split(name: &str) -> Self {
        ConfounderSpec {
            name: name.to_string(),
            coding: Coding::ContinuousMedianSplit,
        }
    }

    pub fn collapse(name: &str, map: &[(&str, u8)]) -> Self {
        ConfounderSpec {
            name: name.to_string(),
            coding: Coding::CategoricalCollapse {
                collapse_map: map.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Predicate {
    Eq { value: String },
    Ne { value: String },
    In { values: Vec<String> },
    NotIn { values: Vec<String> },
    Lt { value: f64 },
    Le { value: f64 },
    Gt { value: f64 },
    Ge { value: f64 },
}

/// Rows for which the predicate is false are dropped before coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFilter {
    pub column: String,
    #[serde(flatten)]
    pub predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestionConfig {
    /// Comma-separated file with a header row. Relative paths resolve against
    /// the directory of the config file when loaded with [`IngestionConfig::load`].
    pub source: PathBuf,
    pub outcome: ConfounderSpec,
    pub treatment: ConfounderSpec,
    pub confounders: Vec<ConfounderSpec>,
    #[serde(default)]
    pub row_filters: Vec<RowFilter>,
}

impl IngestionConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: IngestionConfig =
            toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        if cfg.source.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.source = dir.join(&cfg.source);
            }
        }
        Ok(cfg)
    }
}

/// Binary-coded rows ready for scenario building.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTable {
    pub confounder_names: Vec<String>,
    /// Row-major, `rows × confounder_names.len()`.
    pub z: Vec<u8>,
    pub x: Vec<u8>,
    pub y: Vec<u8>,
    pub provenance: Vec<String>,
}

impl PreparedTable {
    pub fn rows(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.confounder_names.len()
    }

    pub fn z_row(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.z[i * d..(i + 1) * d]
    }
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawTable {
    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }
}

fn read_csv(path: &Path) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, &path.display().to_string())
}

fn read_csv_from<R: std::io::Read>(reader: R, what: &str) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(what, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(what, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

fn parse_number(column: &str, row: usize, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::NonNumeric {
            column: column.to_string(),
            row,
            value: value.to_string(),
        })
}

impl Predicate {
    fn accepts(&self, column: &str, row: usize, value: &str) -> Result<bool> {
        Ok(match self {
            Predicate::Eq { value: v } => value == v,
            Predicate::Ne { value: v } => value != v,
            Predicate::In { values } => values.iter().any(|v| v == value),
            Predicate::NotIn { values } => !values.iter().any(|v| v == value),
            Predicate::Lt { value: t } => parse_number(column, row, value)? < *t,
            Predicate::Le { value: t } => parse_number(column, row, value)? <= *t,
            Predicate::Gt { value: t } => parse_number(column, row, value)? > *t,
            Predicate::Ge { value: t } => parse_number(column, row, value)? >= *t,
        })
    }
}

/// Median with the even-length midpoint convention.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Code one column over the retained rows. Returns the coded values and a
/// provenance line.
fn code_column(
    table: &RawTable,
    keep: &[usize],
    spec: &ConfounderSpec,
) -> Result<(Vec<u8>, String)> {
    let col = table.column(&spec.name)?;
    let cell = |i: usize| table.rows[i][col].as_str();
    match &spec.coding {
        Coding::Binary => {
            let coded = keep
                .iter()
                .map(|&i| match cell(i).parse::<f64>() {
                    Ok(0.0) => Ok(0),
                    Ok(1.0) => Ok(1),
                    _ => Err(Error::NonBinary {
                        column: spec.name.clone(),
                        row: i + 1,
                        value: cell(i).to_string(),
                    }),
                })
                .collect::<Result<Vec<u8>>>()?;
            Ok((coded, format!("{}: binary as-is", spec.name)))
        }
        Coding::ContinuousMedianSplit => {
            let values = keep
                .iter()
                .map(|&i| parse_number(&spec.name, i + 1, cell(i)))
                .collect::<Result<Vec<f64>>>()?;
            if values.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "median split of `{}` over zero rows",
                    spec.name
                )));
            }
            let med = median(&mut values.clone());
            let coded = values.iter().map(|&v| u8::from(v > med)).collect();
            Ok((
                coded,
                format!("{}: 1 iff value > median {med} (ties -> 0)", spec.name),
            ))
        }
        Coding::CategoricalCollapse { collapse_map } => {
            if let Some((k, v)) = collapse_map.iter().find(|(_, v)| **v > 1) {
                return Err(Error::InvalidConfig(format!(
                    "collapse_map of `{}` sends `{k}` to {v}; targets must be 0 or 1",
                    spec.name
                )));
            }
            let coded = keep
                .iter()
                .map(|&i| {
                    collapse_map
                        .get(cell(i))
                        .copied()
                        .ok_or_else(|| Error::UnmappedCategory {
                            column: spec.name.clone(),
                            value: cell(i).to_string(),
                        })
                })
                .collect::<Result<Vec<u8>>>()?;
            let ones: Vec<&str> = collapse_map
                .iter()
                .filter(|(_, v)| **v == 1)
                .map(|(k, _)| k.as_str())
                .collect();
            Ok((
                coded,
                format!("{}: 1 iff category in {{{}}}", spec.name, ones.join(", ")),
            ))
        }
    }
}

/// Read the source file and reduce every configured column to {0, 1}.
pub fn ingest(config: &IngestionConfig) -> Result<PreparedTable> {
    let raw = read_csv(&config.source)?;
    prepare(&raw, config)
}

/// As [`ingest`] but from an in-memory CSV document; `source` is ignored.
pub fn ingest_str(csv_text: &str, config: &IngestionConfig) -> Result<PreparedTable> {
    let raw = read_csv_from(csv_text.as_bytes(), "inline csv")?;
    prepare(&raw, config)
}

fn prepare(raw: &RawTable, config: &IngestionConfig) -> Result<PreparedTable> {
    let mut provenance = vec![format!(
        "source {} ({} rows)",
        config.source.display(),
        raw.rows.len()
    )];

    let filters = config
        .row_filters
        .iter()
        .map(|f| Ok((raw.column(&f.column)?, f)))
        .collect::<Result<Vec<_>>>()?;
    let mut keep = Vec::with_capacity(raw.rows.len());
    for (i, row) in raw.rows.iter().enumerate() {
        let mut ok = true;
        for (col, f) in &filters {
            if !f.predicate.accepts(&f.column, i + 1, &row[*col])? {
                ok = false;
                break;
            }
        }
        if ok {
            keep.push(i);
        }
    }
    for f in &config.row_filters {
        provenance.push(format!("filter {}: {:?}", f.column, f.predicate));
    }
    provenance.push(format!(
        "{} rows pass filters, {} removed",
        keep.len(),
        raw.rows.len() - keep.len()
    ));

    let (y, note) = code_column(raw, &keep, &config.outcome)?;
    provenance.push(format!("outcome {note}"));
    let (x, note) = code_column(raw, &keep, &config.treatment)?;
    provenance.push(format!("treatment {note}"));

    let d = config.confounders.len();
    let mut z = vec![0u8; keep.len() * d];
    for (j, spec) in config.confounders.iter().enumerate() {
        let (coded, note) = code_column(raw, &keep, spec)?;
        for (i, v) in coded.into_iter().enumerate() {
            z[i * d + j] = v;
        }
        provenance.push(format!("confounder {note}"));
    }

    Ok(PreparedTable {
        confounder_names: config.confounders.iter().map(|c| c.name.clone()).collect(),
        z,
        x,
        y,
        provenance,
    })
}
