//! Loading rating tables, player-level aggregation, listwise deletion and
//! descriptive statistics.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::stats;

/// The 28 outfield attributes of the `Player_Attributes` table in the public
/// European Soccer Database. This list is a reconstruction: goalkeeper
/// (`gk_*`) columns are excluded and every remaining 0–100 skill rating is
/// kept.
pub const DEFAULT_ATTRIBUTES: [&str; 28] = [
    "crossing",
    "finishing",
    "heading_accuracy",
    "short_passing",
    "volleys",
    "dribbling",
    "curve",
    "free_kick_accuracy",
    "long_passing",
    "ball_control",
    "acceleration",
    "sprint_speed",
    "agility",
    "reactions",
    "balance",
    "shot_power",
    "jumping",
    "stamina",
    "strength",
    "long_shots",
    "aggression",
    "interceptions",
    "positioning",
    "vision",
    "penalties",
    "marking",
    "standing_tackle",
    "sliding_tackle",
];

/// Maps logical roles to CSV column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub id_column: String,
    pub season_column: Option<String>,
    pub rating_column: String,
    pub attributes: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            id_column: "player_api_id".into(),
            season_column: Some("date".into()),
            rating_column: "overall_rating".into(),
            attributes: DEFAULT_ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingRow {
    pub player_id: String,
    pub season: Option<String>,
    pub overall: Option<f64>,
    pub attributes: Vec<Option<f64>>,
}

/// Raw rows keyed by player; every row carries one cell per attribute name.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTable {
    pub attribute_names: Vec<String>,
    pub rows: Vec<RatingRow>,
}

/// Complete-case `n × p` matrix with the overall rating alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix {
    pub values: Matrix,
    pub attribute_names: Vec<String>,
    pub player_ids: Vec<String>,
    pub overall: Vec<f64>,
}

impl AttributeMatrix {
    /// Validates shape, uniqueness of names, `p ≥ 2`, `n > p` and finiteness.
    pub fn new(
        values: Matrix,
        attribute_names: Vec<String>,
        player_ids: Vec<String>,
        overall: Vec<f64>,
    ) -> Result<Self> {
        let (n, p) = (values.rows(), values.cols());
        if attribute_names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: attribute_names.len(),
            });
        }
        if player_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: player_ids.len(),
            });
        }
        if overall.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: overall.len(),
            });
        }
        check_unique(&attribute_names)?;
        if p < 2 {
            return Err(Error::TooFewAttributes(p));
        }
        if n <= p {
            return Err(Error::TooFewRows { n, p });
        }
        if values.as_slice().iter().chain(&overall).any(|v| !v.is_finite()) {
            return Err(Error::invalid("attribute matrix contains non-finite values"));
        }
        Ok(Self {
            values,
            attribute_names,
            player_ids,
            overall,
        })
    }

    /// Convenience constructor with generated ids (`row0`, `row1`, ...).
    pub fn from_values(values: Matrix, attribute_names: Vec<String>, overall: Vec<f64>) -> Result<Self> {
        let ids = (0..values.rows()).map(|i| format!("row{i}")).collect();
        Self::new(values, attribute_names, ids, overall)
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn p(&self) -> usize {
        self.values.cols()
    }

    /// Subset of rows. Skips the `n > p` check so that folds and resamples of
    /// small inputs stay representable; callers that need it re-validate.
    pub fn select_rows(&self, idx: &[usize]) -> AttributeMatrix {
        AttributeMatrix {
            values: self.values.select_rows(idx),
            attribute_names: self.attribute_names.clone(),
            player_ids: idx.iter().map(|&i| self.player_ids[i].clone()).collect(),
            overall: idx.iter().map(|&i| self.overall[i]).collect(),
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j)
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }
    Ok(())
}

/// Parses a numeric cell. Empty, `NA`, `NaN`, `null` and anything that does
/// not parse to a finite number are missing.
pub fn parse_cell(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn load_table(path: &Path, schema: &Schema) -> Result<RatingTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, schema)
}

pub fn read_table<R: std::io::Read>(reader: R, schema: &Schema) -> Result<RatingTable> {
    check_unique(&schema.attributes)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();

    let mut position: HashMap<&str, usize> = HashMap::new();
    let mut duplicated = HashSet::new();
    for (i, h) in headers.iter().enumerate() {
        if position.insert(h.trim(), i).is_some() {
            duplicated.insert(h.trim().to_string());
        }
    }
    let locate = |name: &str| -> Result<usize> {
        if duplicated.contains(name) {
            return Err(Error::DuplicateColumn(name.to_string()));
        }
        position
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let id_at = locate(&schema.id_column)?;
    let season_at = schema.season_column.as_deref().map(locate).transpose()?;
    let rating_at = locate(&schema.rating_column)?;
    let attr_at = schema
        .attributes
        .iter()
        .map(|a| locate(a))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let player_id = field(id_at).trim().to_string();
        if player_id.is_empty() {
            return Err(Error::EmptyPlayerId(line + 1));
        }
        rows.push(RatingRow {
            player_id,
            season: season_at.map(|i| field(i).trim().to_string()),
            overall: parse_cell(field(rating_at)),
            attributes: attr_at.iter().map(|&i| parse_cell(field(i))).collect(),
        });
    }
    Ok(RatingTable {
        attribute_names: schema.attributes.clone(),
        rows,
    })
}

/// Collapses a table to one row per player: every cell becomes the unweighted
/// mean of that player's non-missing values. Players keep their first
/// appearance order; a single-row player is returned unchanged.
pub fn aggregate_players(table: &RatingTable) -> RatingTable {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&RatingRow>> = HashMap::new();
    for row in &table.rows {
        let slot = groups.entry(row.player_id.as_str()).or_default();
        if slot.is_empty() {
            order.push(row.player_id.as_str());
        }
        slot.push(row);
    }

    let p = table.attribute_names.len();
    let rows = order
        .into_iter()
        .map(|id| {
            let group = &groups[id];
            if let [only] = group.as_slice() {
                return (*only).clone();
            }
            let attributes = (0..p)
                .map(|j| mean_present(group.iter().map(|r| r.attributes[j])))
                .collect();
            RatingRow {
                player_id: id.to_string(),
                season: None,
                overall: mean_present(group.iter().map(|r| r.overall)),
                attributes,
            }
        })
        .collect();

    RatingTable {
        attribute_names: table.attribute_names.clone(),
        rows,
    }
}

fn mean_present(cells: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = cells
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Listwise deletion on `required` plus the overall rating. Columns follow the
/// order of `required`.
pub fn filter_complete(table: &RatingTable, required: &[String]) -> Result<AttributeMatrix> {
    if required.len() < 2 {
        return Err(Error::TooFewAttributes(required.len()));
    }
    check_unique(required)?;
    let cols = required
        .iter()
        .map(|name| {
            table
                .attribute_names
                .iter()
                .position(|a| a == name)
                .ok_or_else(|| Error::UnknownAttribute(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut data = Vec::new();
    let mut ids = Vec::new();
    let mut overall = Vec::new();
    'rows: for row in &table.rows {
        let Some(y) = row.overall else { continue };
        let start = data.len();
        for &c in &cols {
            match row.attributes[c] {
                Some(v) => data.push(v),
                None => {
                    data.truncate(start);
                    continue 'rows;
                }
            }
        }
        ids.push(row.player_id.clone());
        overall.push(y);
    }

    let n = ids.len();
    let values = Matrix::from_vec(n, cols.len(), data);
    AttributeMatrix::new(values, required.to_vec(), ids, overall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableStats {
    pub variable: String,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-variable descriptives. `sd` uses the sample (`n - 1`) denominator,
/// recorded in `sd_denominator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub sd_denominator: String,
    pub variables: Vec<VariableStats>,
}

pub const OVERALL_LABEL: &str = "overall_rating";

fn variable_stats(name: &str, x: &[f64]) -> VariableStats {
    VariableStats {
        variable: name.to_string(),
        count: x.len(),
        mean: stats::mean(x),
        sd: if x.len() > 1 { stats::sd(x, 1) } else { 0.0 },
        min: x.iter().copied().fold(f64::INFINITY, f64::min),
        max: x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Overall rating first, then every attribute column in order.
pub fn describe(matrix: &AttributeMatrix) -> DescriptiveStats {
    let mut variables = vec![variable_stats(OVERALL_LABEL, &matrix.overall)];
    for (j, name) in matrix.attribute_names.iter().enumerate() {
        variables.push(variable_stats(name, &matrix.column(j)));
    }
    DescriptiveStats {
        sd_denominator: "n-1".into(),
        variables,
    }
}

/// `ball_control` → `Ball Control`.
pub fn display_name(raw: &str) -> String {
    raw.split(['_', ' '])
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect::<String>(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes descriptives in the `Variable,N,Mean,Std. Dev,Min,Max` layout.
pub fn write_descriptives<W: Write>(stats: &DescriptiveStats, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["Variable", "N", "Mean", "Std. Dev", "Min", "Max"])?;
    for v in &stats.variables {
        w.write_record([
            display_name(&v.variable),
            v.count.to_string(),
            v.mean.to_string(),
            v.sd.to_string(),
            v.min.to_string(),
            v.max.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<descriptives>", e))?;
    Ok(())
}
