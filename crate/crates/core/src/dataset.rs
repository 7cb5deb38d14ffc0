//! Designs of experiments paired with their observed responses, and their
//! CSV representation (`x1,…,xd,y`, header mandatory).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    design: DMatrix<f64>,
    response: DVector<f64>,
}

impl Dataset {
    /// Builds a dataset. The design must have at least one row, lie in the
    /// unit hypercube and contain no duplicated rows.
    pub fn new(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        validate_design(&design)?;
        if response.len() != design.nrows() {
            return Err(Error::DimensionMismatch {
                expected: design.nrows(),
                found: response.len(),
            });
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("responses"));
        }
        Ok(Self { design, response })
    }

    pub fn len(&self) -> usize {
        self.design.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.design.ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn response_mean(&self) -> f64 {
        self.response.mean()
    }

    /// Population variance of the responses.
    pub fn response_variance(&self) -> f64 {
        let m = self.response_mean();
        self.response.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / self.len() as f64
    }

    /// Same design with the empirical response mean subtracted; returns the mean.
    pub fn centered(&self) -> (Dataset, f64) {
        let m = self.response_mean();
        let response = self.response.map(|y| y - m);
        (
            Dataset {
                design: self.design.clone(),
                response,
            },
            m,
        )
    }

    /// Same responses with the design columns reordered: column `j` of the
    /// result is column `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Dataset> {
        if perm.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: perm.len(),
            });
        }
        let design = DMatrix::from_fn(self.len(), self.dims(), |i, j| self.design[(i, perm[j])]);
        Dataset::new(design, self.response.clone())
    }

    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let ncols = headers.len();
        if ncols < 2 {
            return Err(Error::invalid("dataset CSV needs columns x1..xd,y"));
        }
        check_x_headers(headers.iter().take(ncols - 1))?;
        if headers.get(ncols - 1).map(str::trim) != Some("y") {
            return Err(Error::invalid("last dataset CSV column must be named 'y'"));
        }
        let d = ncols - 1;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let values = parse_record(&record, line + 2)?;
            xs.extend_from_slice(&values[..d]);
            ys.push(values[d]);
        }
        if ys.is_empty() {
            return Err(Error::invalid("dataset CSV has no data rows"));
        }
        Dataset::new(DMatrix::from_row_slice(ys.len(), d, &xs), DVector::from_vec(ys))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_writer(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dims()).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.design.row(i).iter().map(|v| v.to_string()).collect();
            row.push(self.response[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }
}

pub(crate) fn validate_design(design: &DMatrix<f64>) -> Result<()> {
    if design.nrows() == 0 || design.ncols() == 0 {
        return Err(Error::invalid("design must have at least one point and one direction"));
    }
    if design.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design"));
    }
    if design.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("design coordinates must lie in [0, 1]"));
    }
    let mut rows: Vec<Vec<u64>> = design
        .row_iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort_unstable();
    if rows.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("design contains duplicated points"));
    }
    Ok(())
}

fn check_x_headers<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    for (i, name) in names.enumerate() {
        let expected = format!("x{}", i + 1);
        if name.trim() != expected {
            return Err(Error::invalid(format!(
                "expected CSV column '{expected}', found '{name}'"
            )));
        }
    }
    Ok(())
}

fn parse_record(record: &csv::StringRecord, line: usize) -> Result<Vec<f64>> {
    record
        .iter()
        .map(|field| {
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("line {line}: cannot parse '{field}' as a number")))
        })
        .collect()
}

/// Reads query points from a CSV with header `x1..xd`. A trailing `y`
/// column, if present, is ignored so dataset files can be used directly.
pub fn read_points_csv(reader: impl Read) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut d = headers.len();
    if d > 0 && headers.get(d - 1).map(str::trim) == Some("y") {
        d -= 1;
    }
    if d == 0 {
        return Err(Error::invalid("points CSV needs columns x1..xd"));
    }
    check_x_headers(headers.iter().take(d))?;
    let mut xs = Vec::new();
    let mut n = 0;
    for (line, record) in rdr.records().enumerate() {
        let values = parse_record(&record?, line + 2)?;
        xs.extend_from_slice(&values[..d]);
        n += 1;
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("query points"));
    }
    Ok(DMatrix::from_row_slice(n, d, &xs))
}
