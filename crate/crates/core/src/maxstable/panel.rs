use super::SpatialDesign;
use crate::error::{Error, Result};
use crate::margins::MarginScale;
use std::sync::Arc;

/// Block maxima: `n` blocks (rows) by `D` sites (columns), stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMaximaPanel {
    values: Vec<f64>,
    n_blocks: usize,
    scale: MarginScale,
    design: Arc<SpatialDesign>,
}

impl BlockMaximaPanel {
    pub fn new(values: Vec<f64>, scale: MarginScale, design: Arc<SpatialDesign>) -> Result<Self> {
        let d = design.len();
        if values.is_empty() || !values.len().is_multiple_of(d) {
            return Err(Error::Dimension(format!(
                "{} values do not fill whole rows of {d} sites",
                values.len()
            )));
        }
        let n_blocks = values.len() / d;
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || (scale == MarginScale::UnitFrechet && *v <= 0.0) {
                return Err(Error::Transform {
                    block: i / d,
                    site: i % d,
                    reason: format!("value {v} is not admissible on the {scale} scale"),
                });
            }
        }
        Ok(Self {
            values,
            n_blocks,
            scale,
            design,
        })
    }

    pub fn from_rows(
        rows: &[Vec<f64>],
        scale: MarginScale,
        design: Arc<SpatialDesign>,
    ) -> Result<Self> {
        let d = design.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension(format!(
                "row of {} values for {d} sites",
                r.len()
            )));
        }
        Self::new(rows.concat(), scale, design)
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn n_sites(&self) -> usize {
        self.design.len()
    }

    pub fn scale(&self) -> MarginScale {
        self.scale
    }

    pub fn design(&self) -> &Arc<SpatialDesign> {
        &self.design
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, block: usize, site: usize) -> f64 {
        self.values[block * self.design.len() + site]
    }

    pub fn row(&self, block: usize) -> &[f64] {
        let d = self.design.len();
        &self.values[block * d..(block + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.design.len())
    }

    pub fn column(&self, site: usize) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .skip(site)
            .step_by(self.design.len())
            .copied()
    }

    pub(crate) fn require_scale(&self, expected: MarginScale) -> Result<()> {
        if self.scale != expected {
            return Err(Error::Scale {
                expected: expected.to_string(),
                found: self.scale.to_string(),
            });
        }
        Ok(())
    }

    /// Entrywise map producing a panel on another scale.
    pub(crate) fn map_values<F>(&self, scale: MarginScale, f: F) -> Result<Self>
    where
        F: Fn(usize, usize, f64) -> Result<f64>,
    {
        let d = self.design.len();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i / d, i % d, v))
            .collect::<Result<Vec<f64>>>()?;
        Self::new(values, scale, Arc::clone(&self.design))
    }

    /// Sign-flipped raw panel, for analysing minima as maxima of `-Y`.
    pub fn negated(&self) -> Result<Self> {
        self.require_scale(MarginScale::Raw)?;
        self.map_values(MarginScale::Raw, |_, _, v| Ok(-v))
    }

    /// Blocks in a new order; `order` must be a permutation of `0..n`.
    pub fn reorder_blocks(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_blocks {
            return Err(Error::Dimension(
                "block permutation has the wrong length".into(),
            ));
        }
        let values = order
            .iter()
            .flat_map(|&i| self.row(i).iter().copied())
            .collect();
        Self::new(values, self.scale, Arc::clone(&self.design))
    }
}
