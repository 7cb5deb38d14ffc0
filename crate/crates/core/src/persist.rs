//! JSON persistence of fitted models.
//!
//! Only the inputs of a fit are stored; the factorization is recomputed on
//! load, which reproduces the saved model bit for bit.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gp::FittedGp;
use crate::kernel::Kernel;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub kernel: Kernel,
    pub noise: f64,
    /// Added to every predicted mean.
    pub offset: f64,
    /// Design points, one row per point.
    pub design: Vec<Vec<f64>>,
    /// Responses the model was fitted on, offset already removed.
    pub response: Vec<f64>,
}

impl ModelFile {
    pub fn from_model(gp: &FittedGp) -> Self {
        let ds = gp.dataset();
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            kernel: gp.kernel().clone(),
            noise: gp.noise(),
            offset: gp.offset(),
            design: ds.design().row_iter().map(|r| r.iter().copied().collect()).collect(),
            response: ds.response().iter().copied().collect(),
        }
    }

    pub fn into_model(self) -> Result<FittedGp> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model schema version {} (expected {MODEL_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let n = self.design.len();
        let d = self.kernel.dims();
        if let Some(row) = self.design.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
        let design = DMatrix::from_row_iterator(n, d, self.design.into_iter().flatten());
        let dataset = Dataset::new(design, DVector::from_vec(self.response))?;
        FittedGp::fit_with_offset(&self.kernel, dataset, self.noise, self.offset)
    }
}

impl FittedGp {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let mut writer = writer;
        serde_json::to_writer_pretty(&mut writer, &ModelFile::from_model(self))?;
        writeln!(writer)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(reader)?;
        file.into_model()
    }
}
