//! Mine time-series datasets that exhibit distributional shifts.
//!
//! The pipeline turns model-suggested queries into series fetched from
//! public APIs ([`sources`]), keeps the series in which a penalized
//! change-point search finds at least one break ([`changepoint`]), and
//! expands the survivors with time-axis augmentations ([`augment`]).
//! [`pipeline`] wires the stages together and keeps a per-dataset manifest.
//!
//! ```
//! use shiftminer::changepoint::{classify, DetectorConfig, ShiftCategory};
//! use shiftminer::series::{Source, TimeSeries};
//!
//! let dates = (0..60)
//!     .map(|i| chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(i))
//!     .collect();
//! let values = (0..60).map(|i| if i < 30 { 1.0 } else { 4.0 } + 0.1 * ((i * 7 % 5) as f64)).collect();
//! let s = TimeSeries::original("demo", Source::Synthetic, dates, values, "").unwrap();
//! assert_eq!(classify(&s, &DetectorConfig::default()).unwrap(), ShiftCategory::H1Shift);
//! ```

pub mod augment;
pub mod changepoint;
pub mod pipeline;
pub mod querygen;
pub mod series;
pub mod sources;
pub mod synthetic;

pub use augment::{augment_set, AugmentConfig};
pub use changepoint::{
    binary_segmentation, classify, exact_segmentation, ChangePointSet, DetectorConfig,
    ShiftCategory,
};
pub use pipeline::{DatasetManifest, Pipeline, PipelineConfig, PipelineError};
pub use series::{DatasetStore, Source, Stage, TimeSeries};
pub use sources::SourceQuery;

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/series.md")]
    mod series {}
    #[doc = include_str!("../../../book/src/changepoint.md")]
    mod changepoint {}
    #[doc = include_str!("../../../book/src/augment.md")]
    mod augment {}
    #[doc = include_str!("../../../book/src/sources.md")]
    mod sources {}
    #[doc = include_str!("../../../book/src/querygen.md")]
    mod querygen {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
}
