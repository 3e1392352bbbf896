//! Per-dataset quality reports, serialised as CSV (`image,psnr_db,ssim`) or
//! JSON. An infinite PSNR is written as the string `"inf"`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub image: String,
    #[serde(with = "crate::serde_inf")]
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub image: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub rows: Vec<ImageScore>,
    #[serde(with = "crate::serde_inf")]
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub color_space: String,
    pub shave: usize,
    #[serde(default)]
    pub failures: Vec<Failure>,
}

impl QualityReport {
    pub fn new(rows: Vec<ImageScore>, color_space: &str, shave: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mean_psnr_db = if rows.is_empty() {
            f64::NAN
        } else {
            rows.iter().map(|r| r.psnr_db).sum::<f64>() / n
        };
        let mean_ssim = if rows.is_empty() {
            f64::NAN
        } else {
            rows.iter().map(|r| r.ssim).sum::<f64>() / n
        };
        QualityReport {
            rows,
            mean_psnr_db,
            mean_ssim,
            color_space: color_space.to_string(),
            shave,
            failures: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush().map_err(|e| crate::Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv_rows<R: Read>(r: R) -> Result<Vec<ImageScore>> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd.deserialize().collect::<std::result::Result<Vec<ImageScore>, _>>()?;
        Ok(rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
