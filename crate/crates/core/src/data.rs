//! Regression data container, preprocessing and CSV ingestion.
//!
//! Predictors are standardized with the sample standard deviation (divisor
//! `n - 1`) and the response is centered so that no intercept is estimated.
//! The offsets are kept so that coefficients can be mapped back to the
//! original measurement scale.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const CONSTANT_SD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Vec<String>,
    x_center: DVector<f64>,
    x_scale: DVector<f64>,
    y_offset: f64,
    standardized: bool,
    response_centered: bool,
}

impl RegressionData {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect();
        Self::with_names(x, y, names)
    }

    pub fn with_names(x: DMatrix<f64>, y: DVector<f64>, names: Vec<String>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 rows, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidInput("need at least one predictor".into()));
        }
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "X has {n} rows but Y has {} entries",
                y.len()
            )));
        }
        if names.len() != p {
            return Err(Error::InvalidInput(format!(
                "{} column names for {p} columns",
                names.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in data".into()));
        }
        Ok(Self {
            x,
            y,
            names,
            x_center: DVector::zeros(p),
            x_scale: DVector::from_element(p, 1.0),
            y_offset: 0.0,
            standardized: false,
            response_centered: false,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn is_response_centered(&self) -> bool {
        self.response_centered
    }

    /// Column means removed so far (in original units).
    pub fn x_center(&self) -> &DVector<f64> {
        &self.x_center
    }

    /// Column standard deviations divided out so far (in original units).
    pub fn x_scale(&self) -> &DVector<f64> {
        &self.x_scale
    }

    pub fn y_offset(&self) -> f64 {
        self.y_offset
    }

    /// Center every column and scale it to unit sample standard deviation.
    pub fn standardize(&self) -> Result<Self> {
        let n = self.n() as f64;
        let mut out = self.clone();
        for j in 0..self.p() {
            let col = self.x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            if !(sd >= CONSTANT_SD) {
                return Err(Error::ConstantColumn(j));
            }
            for v in out.x.column_mut(j).iter_mut() {
                *v = (*v - mean) / sd;
            }
            out.x_center[j] = self.x_center[j] + self.x_scale[j] * mean;
            out.x_scale[j] = self.x_scale[j] * sd;
        }
        out.standardized = true;
        Ok(out)
    }

    /// Subtract the response mean.
    pub fn center_response(&self) -> Self {
        let mean = self.y.mean();
        let mut out = self.clone();
        out.y.add_scalar_mut(-mean);
        out.y_offset = self.y_offset + mean;
        out.response_centered = true;
        out
    }

    /// Standardize predictors and center the response.
    pub fn prepare(&self) -> Result<Self> {
        Ok(self.standardize()?.center_response())
    }

    /// Recover the data on the original scale.
    pub fn unstandardize(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut x = self.x.clone();
        for j in 0..self.p() {
            let (c, s) = (self.x_center[j], self.x_scale[j]);
            for v in x.column_mut(j).iter_mut() {
                *v = *v * s + c;
            }
        }
        let y = self.y.add_scalar(self.y_offset);
        (x, y)
    }

    /// Apply this data set's preprocessing to raw rows from the same source.
    pub fn transform(&self, raw: &RegressionData) -> Result<RegressionData> {
        if raw.p() != self.p() {
            return Err(Error::InvalidInput("column count mismatch".into()));
        }
        let mut out = raw.clone();
        for j in 0..self.p() {
            let (c, s) = (self.x_center[j], self.x_scale[j]);
            for v in out.x.column_mut(j).iter_mut() {
                *v = (*v - c) / s;
            }
        }
        out.y.add_scalar_mut(-self.y_offset);
        out.x_center = self.x_center.clone();
        out.x_scale = self.x_scale.clone();
        out.y_offset = self.y_offset;
        out.standardized = self.standardized;
        out.response_centered = self.response_centered;
        Ok(out)
    }

    /// Map standardized-scale coefficients to `(intercept, slopes)` on the
    /// original scale.
    pub fn to_original_coefficients(&self, beta: &DVector<f64>) -> (f64, DVector<f64>) {
        let slopes = beta.component_div(&self.x_scale);
        let intercept = self.y_offset - self.x_center.dot(&slopes);
        (intercept, slopes)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows.iter());
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        let mut out = Self::with_names(x, y, self.names.clone())?;
        out.x_center = self.x_center.clone();
        out.x_scale = self.x_scale.clone();
        out.y_offset = self.y_offset;
        out.standardized = self.standardized;
        out.response_centered = self.response_centered;
        Ok(out)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&j| j >= self.p()) {
            return Err(Error::InvalidInput(format!("column index {bad} out of range")));
        }
        let x = self.x.select_columns(cols.iter());
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        let mut out = Self::with_names(x, self.y.clone(), names)?;
        out.x_center = DVector::from_iterator(cols.len(), cols.iter().map(|&j| self.x_center[j]));
        out.x_scale = DVector::from_iterator(cols.len(), cols.iter().map(|&j| self.x_scale[j]));
        out.y_offset = self.y_offset;
        out.standardized = self.standardized;
        out.response_centered = self.response_centered;
        Ok(out)
    }

    /// Read a CSV with a header row; `response` names the response column and
    /// every other column becomes a predictor.
    pub fn from_csv(path: impl AsRef<Path>, response: &str) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Csv(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_reader(file, response)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, response: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let resp_idx = headers
            .iter()
            .position(|h| h == response)
            .ok_or_else(|| Error::Csv(format!("response column `{response}` not found")))?;
        let pred_idx: Vec<usize> = (0..headers.len()).filter(|&j| j != resp_idx).collect();
        let names: Vec<String> = pred_idx.iter().map(|&j| headers[j].clone()).collect();

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            // header is line 1
            let line = row + 2;
            let rec = rec.map_err(|e| Error::Csv(format!("line {line}: {e}")))?;
            if rec.len() != headers.len() {
                return Err(Error::Csv(format!(
                    "line {line}: expected {} fields, found {}",
                    headers.len(),
                    rec.len()
                )));
            }
            let parse = |j: usize| -> Result<f64> {
                let raw = rec[j].trim();
                if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                    return Err(Error::Csv(format!(
                        "line {line}, column `{}`: missing value",
                        headers[j]
                    )));
                }
                raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Csv(format!(
                        "line {line}, column `{}`: cannot parse `{raw}` as a number",
                        headers[j]
                    ))
                })
            };
            ys.push(parse(resp_idx)?);
            for &j in &pred_idx {
                xs.push(parse(j)?);
            }
        }
        let n = ys.len();
        let p = pred_idx.len();
        if p == 0 {
            return Err(Error::Csv("no predictor columns".into()));
        }
        let x = DMatrix::from_row_slice(n, p, &xs);
        Self::with_names(x, DVector::from_vec(ys), names)
    }

    /// Write the (raw-scale) data as CSV with the response in the first column.
    pub fn to_csv_writer<W: std::io::Write>(&self, w: W, response: &str) -> Result<()> {
        let (x, y) = self.unstandardize();
        let mut wtr = csv::WriterBuilder::new().from_writer(w);
        let mut header = vec![response.to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
        for i in 0..self.n() {
            let mut rec = vec![format!("{}", y[i])];
            rec.extend((0..self.p()).map(|j| format!("{}", x[(i, j)])));
            wtr.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}
