//! Genotype encoding, decoding to the active graph, graph execution and
//! z-section aggregation.

mod genotype;
mod graph;

pub use genotype::{Genotype, GenotypeRecord, OUTPUT_COL};
pub use graph::{aggregate, decode, execute, ActiveGraph, ActiveNode};

use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, Image2D};

/// Model input for one dataset entry: either one set of channels or a
/// z-stack of per-section channel sets.
#[derive(Clone, Debug, PartialEq)]
pub enum InputVector {
    Planar(Vec<Image2D>),
    Stack(Vec<Vec<Image2D>>),
}

impl InputVector {
    pub fn sections(&self) -> &[Vec<Image2D>] {
        match self {
            InputVector::Planar(c) => std::slice::from_ref(c),
            InputVector::Stack(s) => s,
        }
    }

    pub fn channel_count(&self) -> usize {
        self.sections().first().map_or(0, |s| s.len())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.sections()
            .first()
            .and_then(|s| s.first())
            .map_or((0, 0), |i| i.dims())
    }

    /// All sections share the channel count and every image shares dimensions.
    pub fn check(&self) -> Result<()> {
        let sections = self.sections();
        if sections.is_empty() || sections[0].is_empty() {
            return Err(Error::Input("input has no channels".into()));
        }
        let iota = sections[0].len();
        let dims = sections[0][0].dims();
        for s in sections {
            if s.len() != iota {
                return Err(Error::Input(format!(
                    "z-sections disagree on channel count: {} vs {iota}",
                    s.len()
                )));
            }
            for c in s {
                ensure_same_dims(c.dims(), dims)?;
            }
        }
        Ok(())
    }
}
