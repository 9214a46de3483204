//! Wind-power ramp-event forecasting: ramp labeling, chaos analysis, wavelet
//! band features, greedy feature selection, a deep belief network classifier
//! and outcome/ROC evaluation.

pub mod chaos;
pub mod cli;
pub mod data;
pub mod dbn;
pub mod eval;
pub mod features;
pub mod wavelet;
