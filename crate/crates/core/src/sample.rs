//! Estimation data: n observations of (X ∈ R^d, Y).

use crate::domain::BoxDomain;
use crate::error::{fmt_point, Error, Result};
use nalgebra::{DMatrix, DVector};
use std::io::{Read, Write};
use std::path::Path;

/// A regression sample with its covariate domain box. Every row of `x` lies
/// in the box and `y` is finite; both are checked at construction.
#[derive(Debug, Clone)]
pub struct Sample {
    x: DMatrix<f64>,
    y: DVector<f64>,
    domain: BoxDomain,
}

impl Sample {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, domain: BoxDomain) -> Result<Self> {
        let n = x.nrows();
        let d = x.ncols();
        if n == 0 || d == 0 {
            return Err(Error::invalid("sample must have n >= 1 and d >= 1"));
        }
        if y.len() != n {
            return Err(Error::invalid(format!(
                "x has {n} rows but y has {} entries",
                y.len()
            )));
        }
        if domain.dim() != d {
            return Err(Error::invalid(format!(
                "domain dimension {} does not match covariate dimension {d}",
                domain.dim()
            )));
        }
        for i in 0..n {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            if !row.iter().all(|v| v.is_finite()) || !domain.contains(&row) {
                return Err(Error::OutOfDomain {
                    point: format!("row {} = {}", i + 1, fmt_point(&row)),
                    domain: format!("{domain}"),
                });
            }
            if !y[i].is_finite() {
                return Err(Error::NonFinite {
                    context: format!("y at row {}", i + 1),
                });
            }
        }
        Ok(Self { x, y, domain })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Reads a sample from CSV with header `x1,...,xd,y`. The domain box is
    /// supplied by the caller, not inferred from the data.
    pub fn from_csv_reader<R: Read>(reader: R, domain: BoxDomain) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .clone();
        let d = domain.dim();
        let expected: Vec<String> = (1..=d)
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        let got: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
        if got != expected {
            return Err(Error::Csv(format!(
                "expected header `{}`, got `{}`",
                expected.join(","),
                got.join(",")
            )));
        }
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            if record.len() != d + 1 {
                return Err(Error::Csv(format!(
                    "row {} has {} fields, expected {}",
                    idx + 1,
                    record.len(),
                    d + 1
                )));
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Csv(format!("row {}: cannot parse `{field}`", idx + 1))
                })?;
                if j < d {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
        }
        if ys.is_empty() {
            return Err(Error::Csv("no data rows".to_string()));
        }
        let n = ys.len();
        let x = DMatrix::from_row_slice(n, d, &xs);
        Sample::new(x, DVector::from_vec(ys), domain)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P, domain: BoxDomain) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, domain)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        let header: Vec<String> = (1..=d)
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n() {
            let mut fields: Vec<String> = self.x.row(i).iter().map(|v| format!("{v}")).collect();
            fields.push(format!("{}", self.y[i]));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}
