//! Model configuration files and CSV ingestion.
//!
//! A configuration names the family, link, response column, fixed-effect
//! terms with their priors and the random-effect levels. Terms are products
//! of factors, each a number, a column or `log(column)` / `log(column / c)`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::links::LinkFunction;

use super::{Dataset, Family, LevelSpec, ModelSpec, NormalPrior, VarianceParam};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub mean: f64,
    pub variance: f64,
}

impl From<PriorConfig> for NormalPrior {
    fn from(p: PriorConfig) -> Self {
        NormalPrior { mean: p.mean, variance: p.variance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedTerm {
    pub name: String,
    pub term: String,
    pub prior: PriorConfig,
}

/// Variance parameter of a random level. With a stratum column, `when`
/// selects the groups it applies to; a variance without `when` covers the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTerm {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    pub prior: PriorConfig,
}

/// One level of random intercepts; groups are distinct combinations of the
/// `group` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomTerm {
    pub name: String,
    pub group: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    pub variance: Vec<VarianceTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    pub link: LinkFunction,
    #[serde(default = "default_true")]
    pub marginally_interpretable: bool,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<String>,
    pub fixed: Vec<FixedTerm>,
    #[serde(default)]
    pub random: Vec<RandomTerm>,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// Builds the model and the dataset from a loaded table.
    pub fn build(&self, table: &Table) -> Result<(ModelSpec, Dataset)> {
        let terms = self
            .fixed
            .iter()
            .map(|f| f.term.parse::<Term>())
            .collect::<Result<Vec<_>>>()?;
        let y_col = table.column(&self.response)?;
        let m_col = self.trials.as_deref().map(|c| table.column(c)).transpose()?;

        let n = table.len();
        let mut y = Vec::with_capacity(n);
        let mut trials = m_col.map(|_| Vec::with_capacity(n));
        let mut x = Vec::with_capacity(n);
        for r in 0..n {
            y.push(table.number(r, y_col)?);
            if let (Some(t), Some(c)) = (trials.as_mut(), m_col) {
                t.push(table.number(r, c)?);
            }
            x.push(
                terms
                    .iter()
                    .map(|t| t.evaluate(table, r))
                    .collect::<Result<Vec<_>>>()?,
            );
        }

        let mut variances = Vec::new();
        let mut levels = Vec::new();
        let mut groups = Vec::new();
        for term in &self.random {
            let (level, index) = build_level(term, table, &mut variances)?;
            levels.push(level);
            groups.push(index);
        }

        let spec = ModelSpec::new(
            self.family,
            self.link,
            self.fixed.iter().map(|f| f.name.clone()).collect(),
            self.fixed.iter().map(|f| f.prior.into()).collect(),
            variances,
            levels,
            self.marginally_interpretable,
        )
        .map_err(|e| match e {
            Error::InvalidArgument(m) | Error::Unsupported(m) => Error::Config(m),
            other => other,
        })?;
        let data = Dataset::new(y, trials, x, groups).map_err(Table::shift_row)?;
        spec.check_data(&data).map_err(Table::shift_row)?;
        Ok((spec, data))
    }
}

fn build_level(
    term: &RandomTerm,
    table: &Table,
    variances: &mut Vec<VarianceParam>,
) -> Result<(LevelSpec, Vec<usize>)> {
    if term.group.is_empty() || term.variance.is_empty() {
        return Err(Error::Config(format!(
            "random term '{}' needs grouping columns and at least one variance",
            term.name
        )));
    }
    let cols = term
        .group
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>>>()?;
    let stratum_col = term.stratum.as_deref().map(|c| table.column(c)).transpose()?;

    let first_var = variances.len();
    for v in &term.variance {
        if variances.iter().any(|w: &VarianceParam| w.name == v.name) {
            return Err(Error::Config(format!("variance '{}' declared twice", v.name)));
        }
        variances.push(VarianceParam { name: v.name.clone(), prior: v.prior.into() });
    }
    let pick = |value: Option<&str>| -> Option<usize> {
        let matched = value.and_then(|value| {
            term.variance
                .iter()
                .position(|v| v.when.as_deref().is_some_and(|w| cell_eq(w, value)))
        });
        matched
            .or_else(|| term.variance.iter().position(|v| v.when.is_none()))
            .map(|i| first_var + i)
    };

    let mut ids: HashMap<Vec<&str>, usize> = HashMap::new();
    let mut stratum: Vec<usize> = Vec::new();
    let mut index = Vec::with_capacity(table.len());
    for r in 0..table.len() {
        let key: Vec<&str> = cols.iter().map(|&c| table.cell(r, c)).collect();
        let value = stratum_col.map(|c| table.cell(r, c));
        let s = pick(value).ok_or_else(|| Error::Data {
            row: Table::line(r),
            message: format!(
                "no variance of '{}' applies to stratum '{}'",
                term.name,
                value.unwrap_or("")
            ),
        })?;
        let next = ids.len();
        let g = *ids.entry(key).or_insert(next);
        if g == stratum.len() {
            stratum.push(s);
        } else if stratum[g] != s {
            return Err(Error::Data {
                row: Table::line(r),
                message: format!("group of '{}' changes stratum", term.name),
            });
        }
        index.push(g);
    }
    Ok((LevelSpec { name: term.name.clone(), stratum }, index))
}

fn cell_eq(a: &str, b: &str) -> bool {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a.trim() == b.trim(),
    }
}

/// A CSV file held as strings, with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data { row: 1, message: e.to_string() })?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Data { row: Self::line(r), message: e.to_string() })?;
            rows.push(record.iter().map(str::to_owned).collect());
        }
        Ok(Table { headers, rows })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Index of a named column; a missing column is reported against the header line.
    pub fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data { row: 1, message: format!("missing column '{name}'") })
    }

    pub fn cell(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    pub fn number(&self, row: usize, col: usize) -> Result<f64> {
        let text = self.cell(row, col);
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Data {
                row: Self::line(row),
                message: format!("column '{}' holds non-numeric value '{text}'", self.headers[col]),
            })
    }

    /// File line of data record `r`; the header is line 1.
    fn line(r: usize) -> usize {
        r + 2
    }

    /// Converts an observation-numbered data error into a file line.
    fn shift_row(e: Error) -> Error {
        match e {
            Error::Data { row, message } => Error::Data { row: row + 1, message },
            other => other,
        }
    }
}

/// Loads a CSV and builds the dataset described by `config`.
pub fn ingest_csv(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Dataset> {
    let table = Table::from_path(path)?;
    config.build(&table).map(|(_, data)| data)
}

#[derive(Debug, Clone, PartialEq)]
enum Factor {
    Constant(f64),
    Column(String),
    Log { column: String, divisor: f64 },
}

/// Product of factors such as `log(base/4) * trt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    factors: Vec<Factor>,
}

impl Term {
    pub fn evaluate(&self, table: &Table, row: usize) -> Result<f64> {
        let mut value = 1.0;
        for f in &self.factors {
            value *= match f {
                Factor::Constant(c) => *c,
                Factor::Column(name) => table.number(row, table.column(name)?)?,
                Factor::Log { column, divisor } => {
                    let v = table.number(row, table.column(column)?)? / divisor;
                    if v <= 0.0 {
                        return Err(Error::Data {
                            row: Table::line(row),
                            message: format!("log of nonpositive value in column '{column}'"),
                        });
                    }
                    v.ln()
                }
            };
        }
        Ok(value)
    }

    /// Column names the term reads.
    pub fn columns(&self) -> Vec<&str> {
        self.factors
            .iter()
            .filter_map(|f| match f {
                Factor::Constant(_) => None,
                Factor::Column(c) | Factor::Log { column: c, .. } => Some(c.as_str()),
            })
            .collect()
    }
}

fn parse_factor(text: &str) -> Result<Factor> {
    let bad = || Error::Config(format!("cannot parse term factor '{text}'"));
    let t = text.trim();
    if t.is_empty() {
        return Err(bad());
    }
    if let Ok(c) = t.parse::<f64>() {
        return Ok(Factor::Constant(c));
    }
    if let Some(inner) = t.strip_prefix("log(").and_then(|r| r.strip_suffix(')')) {
        let (column, divisor) = match inner.split_once('/') {
            Some((c, d)) => (c.trim(), d.trim().parse::<f64>().map_err(|_| bad())?),
            None => (inner.trim(), 1.0),
        };
        if !is_identifier(column) || !(divisor > 0.0) {
            return Err(bad());
        }
        return Ok(Factor::Log { column: column.to_owned(), divisor });
    }
    if is_identifier(t) {
        return Ok(Factor::Column(t.to_owned()));
    }
    Err(bad())
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let factors = s.split('*').map(parse_factor).collect::<Result<Vec<_>>>()?;
        Ok(Term { factors })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, factor) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str(" * ")?;
            }
            match factor {
                Factor::Constant(c) => write!(f, "{c}")?,
                Factor::Column(c) => f.write_str(c)?,
                Factor::Log { column, divisor } if *divisor == 1.0 => write!(f, "log({column})")?,
                Factor::Log { column, divisor } => write!(f, "log({column}/{divisor})")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
        family = "binomial"
        link = "logit"
        response = "y"
        trials = "m"

        [[fixed]]
        name = "b0"
        term = "1"
        prior = { mean = 0.0, variance = 25.0 }

        [[fixed]]
        name = "b1"
        term = "trt"
        prior = { mean = 0.0, variance = 10.0 }

        [[random]]
        name = "litter"
        group = ["litter"]
        stratum = "trt"
        variance = [
            { name = "s1", when = "1", prior = { mean = -0.5, variance = 1.0 } },
            { name = "s2", when = "-1", prior = { mean = -0.5, variance = 1.0 } },
        ]
    "#;

    fn table(text: &str) -> Table {
        Table::from_reader(text.as_bytes()).unwrap()
    }

    #[test]
    fn builds_stratified_model() {
        let cfg = ModelConfig::from_toml_str(CONFIG).unwrap();
        assert!(cfg.marginally_interpretable);
        let t = table("litter,trt,m,y\n1,1,5,4\n2,1,6,6\n3,-1,4,2\n");
        let (spec, data) = cfg.build(&t).unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.x[2], vec![1.0, -1.0]);
        assert_eq!(spec.levels[0].stratum, vec![0, 0, 1]);
        assert_eq!(data.groups[0], vec![0, 1, 2]);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ModelConfig::from_json_str(&json).unwrap(), cfg);
    }

    #[test]
    fn data_errors_name_the_line() {
        let cfg = ModelConfig::from_toml_str(CONFIG).unwrap();
        let err = cfg.build(&table("litter,trt,m,y\n1,1,5,4\n2,1,3,6\n")).unwrap_err();
        assert!(matches!(err, Error::Data { row: 3, .. }), "{err}");
        let err = cfg.build(&table("litter,trt,m,y\n1,1,5,x\n")).unwrap_err();
        assert!(matches!(err, Error::Data { row: 2, .. }), "{err}");
        let err = cfg.build(&table("litter,trt,m\n1,1,5\n")).unwrap_err();
        assert!(matches!(err, Error::Data { row: 1, .. }), "{err}");
    }

    #[test]
    fn terms_parse_and_evaluate() {
        let t = table("base,trt,age\n8,1,20\n");
        let term: Term = "log(base/4) * trt".parse().unwrap();
        assert!((term.evaluate(&t, 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(term.to_string(), "log(base/4) * trt");
        let age: Term = "log(age)".parse().unwrap();
        assert!((age.evaluate(&t, 0).unwrap() - 20f64.ln()).abs() < 1e-15);
        assert_eq!("1".parse::<Term>().unwrap().evaluate(&t, 0).unwrap(), 1.0);
        assert!("log(base".parse::<Term>().is_err());
        assert!("2x".parse::<Term>().is_err());
    }

    #[test]
    fn nested_groups_use_column_combinations() {
        let cfg = ModelConfig::from_toml_str(
            r#"
            family = "poisson"
            link = "log"
            response = "y"
            [[fixed]]
            name = "b0"
            term = "1"
            prior = { mean = 0.0, variance = 100.0 }
            [[random]]
            name = "subject"
            group = ["subject"]
            variance = [{ name = "sigma", prior = { mean = -1.0, variance = 2.0 } }]
            [[random]]
            name = "visit"
            group = ["subject", "visit"]
            variance = [{ name = "tau", prior = { mean = -1.0, variance = 2.0 } }]
            "#,
        )
        .unwrap();
        let t = table("subject,visit,y\n1,1,3\n1,2,0\n2,1,5\n2,2,1\n");
        let (spec, data) = cfg.build(&t).unwrap();
        assert_eq!(spec.n_effects(), 6);
        assert_eq!(data.groups[0], vec![0, 0, 1, 1]);
        assert_eq!(data.groups[1], vec![0, 1, 2, 3]);
        assert_eq!(spec.levels[1].stratum, vec![1; 4]);
    }
}
