//! Draw files, diagnostics and plot-data tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{iact, ChainOutput};

use super::manifest::write_atomic;

/// Retained draws, one column per parameter. Variances appear as standard
/// deviations under their configured names.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl DrawTable {
    pub fn from_chain(chain: &ChainOutput) -> Self {
        let names = chain.column_names();
        let mut columns = vec![Vec::with_capacity(chain.draws.len()); names.len()];
        for k in 0..chain.draws.len() {
            for (col, v) in columns.iter_mut().zip(chain.row(k)) {
                col.push(v);
            }
        }
        DrawTable { names, columns }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|j| self.columns[j].as_slice())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends the rows of `other`, which must have the same columns.
    pub fn extend(&mut self, other: DrawTable) -> Result<()> {
        if other.names != self.names {
            return Err(Error::Data {
                row: 1,
                message: format!("columns {:?} differ from {:?}", other.names, self.names),
            });
        }
        for (col, more) in self.columns.iter_mut().zip(other.columns) {
            col.extend(more);
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let rows = (0..self.len()).map(|k| self.columns.iter().map(|c| c[k]).collect::<Vec<_>>());
        table_csv(&self.names, rows)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(e, path))?;
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(e, path))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (k, record) in reader.records().enumerate() {
            let line = k + 2;
            let record = record.map_err(|e| csv_error(e, path))?;
            for (j, cell) in record.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Data {
                    row: line,
                    message: format!("{}: '{cell}' in column {} is not a number", path.display(), names[j]),
                })?;
                columns[j].push(v);
            }
        }
        Ok(DrawTable { names, columns })
    }

    /// Pools several draw files with identical columns.
    pub fn read_all(paths: &[impl AsRef<Path>]) -> Result<Self> {
        let mut iter = paths.iter();
        let first = iter.next().ok_or_else(|| Error::Config("no draw files given".into()))?;
        let mut table = DrawTable::read(first.as_ref())?;
        for p in iter {
            table.extend(DrawTable::read(p.as_ref())?)?;
        }
        Ok(table)
    }
}

fn csv_error(e: csv::Error, path: &Path) -> Error {
    let row = e.position().map_or(1, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Data { row, message: format!("{}: {kind:?}", path.display()) },
    }
}

/// CSV with a header row and `{:?}`-formatted floats, which round-trip exactly.
pub fn table_csv<I, R>(header: &[String], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = f64>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Numeric(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row.into_iter().map(|v| format!("{v:?}"))).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::Numeric(format!("csv encoding failed: {e}")))
}

/// Per-chain mixing diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub chain: usize,
    pub seed: u64,
    pub draws: usize,
    pub acceptance: BTreeMap<String, f64>,
    /// `None` where the series is too short for an estimate.
    pub iact: BTreeMap<String, Option<f64>>,
    pub wall_time_secs: f64,
    pub warnings: Vec<String>,
}

impl ChainDiagnostics {
    pub fn new(chain_index: usize, chain: &ChainOutput) -> Self {
        let acceptance = BTreeMap::from([
            ("beta".to_string(), chain.beta.rate()),
            ("alpha".to_string(), chain.alpha.rate()),
            ("u".to_string(), chain.u.rate()),
        ]);
        let iact = chain
            .column_names()
            .into_iter()
            .map(|name| {
                let value = chain.series(&name).and_then(|s| iact(&s).ok());
                (name, value)
            })
            .collect();
        ChainDiagnostics {
            chain: chain_index,
            seed: chain.config.seed,
            draws: chain.draws.len(),
            acceptance,
            iact,
            wall_time_secs: chain.wall_time_secs,
            warnings: chain.warnings.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric(format!("cannot serialize {}: {e}", path.display())))?;
    write_atomic(path, json.as_bytes())
}
