//! Extractor trait and the feature-row CSV format shared by every method.

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::image_buffer::ImageBuffer;

/// Fixed-length feature vector tagged with its extractor and the wall-clock
/// time the extraction took.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub extractor: String,
    pub values: Vec<f64>,
    pub extraction_seconds: f64,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A prepared extractor: bases and filter banks are built up front so that
/// [`FeatureExtractor::extract`] times only the per-image work.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;

    fn compute(&self, image: &ImageBuffer) -> Result<Vec<f64>>;

    /// Features for several images at once. The default computes them one
    /// by one; extractors that can share work across images override it.
    fn compute_batch(&self, images: &[ImageBuffer]) -> Result<Vec<Vec<f64>>> {
        images.iter().map(|image| self.compute(image)).collect()
    }

    fn extract(&self, image: &ImageBuffer) -> Result<FeatureVector> {
        let start = Instant::now();
        let values = self.compute(image)?;
        let extraction_seconds = start.elapsed().as_secs_f64();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                extractor: self.name().to_string(),
            });
        }
        Ok(FeatureVector {
            extractor: self.name().to_string(),
            values,
            extraction_seconds,
        })
    }
}

/// Writes feature rows as
/// `dataset,image,extractor,seconds,f0,f1,...` with seconds in scientific
/// notation. No header row, since row widths vary by extractor.
pub fn write_feature_rows<'a, W: Write>(
    out: W,
    dataset: &str,
    rows: impl IntoIterator<Item = (&'a str, &'a FeatureVector)>,
) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(out);
    for (image_id, fv) in rows {
        let mut record = Vec::with_capacity(4 + fv.values.len());
        record.push(dataset.to_string());
        record.push(image_id.to_string());
        record.push(fv.extractor.clone());
        record.push(format!("{:.6e}", fv.extraction_seconds));
        record.extend(fv.values.iter().map(|v| format!("{v:e}")));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| Error::io("<feature csv>", e))?;
    Ok(())
}
