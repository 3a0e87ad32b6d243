//! Reads a CSV table and builds a reference-coded design with an intercept.

use std::collections::BTreeSet;
use std::path::Path;

use fvs_core::linalg::mat_from_rows;
use fvs_core::{DesignMatrix, FvsError, Result};

/// A categorical column and the level that is absorbed into the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalSpec {
    pub name: String,
    pub reference: String,
}

impl std::str::FromStr for CategoricalSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once('=') {
            Some((name, reference)) if !name.is_empty() && !reference.is_empty() => {
                Ok(Self { name: name.to_string(), reference: reference.to_string() })
            }
            _ => Err(format!(
                "expected NAME=REF, got '{s}'; every categorical column needs a reference level \
                 (one-hot coding without a reference is not supported)"
            )),
        }
    }
}

/// A product term between two columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub left: String,
    pub right: String,
}

impl std::str::FromStr for Interaction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() && a != b => {
                Ok(Self { left: a.to_string(), right: b.to_string() })
            }
            _ => Err(format!("expected A:B with two different column names, got '{s}'")),
        }
    }
}

/// Everything needed to turn a CSV file into a design and a response.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub response: String,
    pub categorical: Vec<CategoricalSpec>,
    pub interactions: Vec<Interaction>,
}

/// A raw table: header plus string cells.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| FvsError::Io(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut seen = BTreeSet::new();
        if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
            return Err(FvsError::InvalidInput(format!("column '{dup}' appears twice in the header")));
        }
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(|c| c.trim().to_string()).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        if rows.is_empty() {
            return Err(FvsError::InvalidInput(format!("{} has no data rows", path.display())));
        }
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FvsError::InvalidInput(format!("no column named '{name}' in the header")))
    }

    fn numeric(&self, col: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = &row[col];
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    FvsError::InvalidInput(format!(
                        "row {}, column '{}': cannot parse '{cell}' as a finite number",
                        i + 1,
                        self.header[col]
                    ))
                })
            })
            .collect()
    }
}

/// One column block of the design: a numeric column or a set of indicators.
#[derive(Debug, Clone)]
struct Block {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

/// Design matrix, response and column names built from a table.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    pub terms: Vec<String>,
}

impl DatasetSpec {
    /// Builds `[1, main effects…, interactions…]` in header order.
    pub fn build(&self, table: &Table) -> Result<Dataset> {
        let ycol = table.column(&self.response)?;
        for c in &self.categorical {
            table.column(&c.name)?;
            if c.name == self.response {
                return Err(FvsError::InvalidInput(format!("response '{}' cannot be categorical", c.name)));
            }
        }
        let y = table.numeric(ycol)?;
        let mut blocks: Vec<(String, Block)> = Vec::new();
        for (j, name) in table.header.iter().enumerate() {
            if j == ycol {
                continue;
            }
            blocks.push((name.clone(), self.block(table, j)?));
        }
        let mut names = vec!["(intercept)".to_string()];
        let mut columns = vec![vec![1.0; table.rows.len()]];
        for (_, b) in &blocks {
            names.extend(b.names.iter().cloned());
            columns.extend(b.columns.iter().cloned());
        }
        for it in &self.interactions {
            let find = |n: &str| {
                if n == self.response {
                    return Err(FvsError::InvalidInput(format!("interaction uses the response '{n}'")));
                }
                blocks
                    .iter()
                    .find(|(name, _)| name == n)
                    .map(|(_, b)| b)
                    .ok_or_else(|| FvsError::InvalidInput(format!("interaction refers to unknown column '{n}'")))
            };
            let (a, b) = (find(&it.left)?, find(&it.right)?);
            for (na, ca) in a.names.iter().zip(&a.columns) {
                for (nb, cb) in b.names.iter().zip(&b.columns) {
                    names.push(format!("{na}:{nb}"));
                    columns.push(ca.iter().zip(cb).map(|(u, v)| u * v).collect());
                }
            }
        }
        let n = table.rows.len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
        let x = DesignMatrix::new(mat_from_rows(&rows)?)?;
        if x.rank() < 2 {
            return Err(FvsError::Rank(format!("design has rank {}; at least 2 is needed", x.rank())));
        }
        Ok(Dataset { x, y, terms: names })
    }

    fn block(&self, table: &Table, col: usize) -> Result<Block> {
        let name = &table.header[col];
        let Some(spec) = self.categorical.iter().find(|c| &c.name == name) else {
            return Ok(Block { names: vec![name.clone()], columns: vec![table.numeric(col)?] });
        };
        let levels: BTreeSet<&str> = table.rows.iter().map(|r| r[col].as_str()).collect();
        if !levels.contains(spec.reference.as_str()) {
            return Err(FvsError::InvalidInput(format!(
                "reference level '{}' does not occur in column '{name}' (levels: {})",
                spec.reference,
                levels.iter().copied().collect::<Vec<_>>().join(", ")
            )));
        }
        let others: Vec<&str> = levels.into_iter().filter(|l| *l != spec.reference).collect();
        Ok(Block {
            names: others.iter().map(|l| format!("{name}[{l}]")).collect(),
            columns: others
                .iter()
                .map(|l| table.rows.iter().map(|r| if r[col] == *l { 1.0 } else { 0.0 }).collect())
                .collect(),
        })
    }

    /// The same specification with each categorical column switched to a different
    /// observed reference level (the first level after the current one, in sorted order).
    pub fn shifted_references(&self, table: &Table) -> Result<Self> {
        if self.categorical.is_empty() {
            return Err(FvsError::InvalidInput(
                "recoding needs at least one --categorical column; use the rotation transform instead".into(),
            ));
        }
        let mut next = self.clone();
        for c in &mut next.categorical {
            let col = table.column(&c.name)?;
            let levels: Vec<&str> =
                table.rows.iter().map(|r| r[col].as_str()).collect::<BTreeSet<_>>().into_iter().collect();
            if levels.len() < 2 {
                return Err(FvsError::InvalidInput(format!("column '{}' has a single level", c.name)));
            }
            let pos = levels.iter().position(|l| *l == c.reference).unwrap_or(0);
            c.reference = levels[(pos + 1) % levels.len()].to_string();
        }
        Ok(next)
    }
}
