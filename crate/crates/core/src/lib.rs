//! Correlation-structure analysis of wind-farm SCADA data.
//!
//! Panels of per-turbine time series ([`SignalPanel`]) are ingested and
//! cleaned, their gaps classified as failures or shutdowns, and turned into
//! sliding-window correlation matrices that can be spectrally reduced and
//! averaged by wind-direction sector. A wake simulator produces synthetic
//! panels with known ground truth.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cleaning;
pub mod correlation;
pub mod direction;
pub mod error;
pub mod ingest;
pub mod io;
pub mod layout;
pub mod panel;
pub mod simulator;

pub use cleaning::{clean_power, CleaningReport, NaLabel, NaLabels, ShutdownFill, Thresholds};
pub use correlation::{
    CenteredPanel, CorrelationMatrix, CovarianceMatrix, EigenDecomposition, MatrixSource,
    SvdFactors, WindowMode, WindowSpec,
};
pub use direction::{BinnedMatrices, DirectionBins};
pub use error::{Error, Result};
pub use layout::{FarmLayout, GridSpec, LayoutConfig, Position};
pub use panel::{validate_panel, Observable, SignalPanel, Violation};
pub use simulator::{simulate, SimulationConfig, SimulationOutput, SimulationSpec};
