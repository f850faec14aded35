//! Likelihood-free inference for spatial extremes.
//!
//! Block maxima observed at a set of sites are modelled by a Schlather
//! max-stable process with unit-Fréchet margins. The crate simulates such
//! panels, reduces them to extremal-coefficient summaries and estimates the
//! correlation parameters by rejection or adaptive ABC, or by maximum
//! pairwise composite likelihood. The [`harness`] module runs simulation
//! studies and posterior-predictive exposure calculations.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::excessive_precision
)]

pub mod abc;
pub mod corrfuncs;
pub mod error;
pub mod fsum;
pub mod harness;
pub mod margins;
pub mod maxstable;
pub mod mcle;
pub mod optim;
pub mod rng;
pub mod summaries;

pub use abc::{abc_adaptive, abc_rejection, AbcSettings, PosteriorSample, PriorSpec};
pub use corrfuncs::{CorrelationModel, Family, ParamPoint};
pub use error::{Error, Result};
pub use margins::{GevParams, MarginScale};
pub use maxstable::{BlockMaximaPanel, SchlatherSimulator, SpatialDesign};
pub use mcle::{mcle_fit, CompositeFit};
pub use summaries::{Summarizer, SummaryMethod, SummaryVector};
