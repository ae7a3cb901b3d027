//! Spectral-fidelity toolkit for low-precision quantization.
//!
//! The crate answers one question: what does block-wise low-precision
//! quantization do to the singular-value spectrum of the matrices that
//! drive language-model training? It provides
//!
//! * [`tensorio`] — dense `f64` matrices, deterministic random streams,
//!   and bit-exact SPQT/CSV file I/O;
//! * [`synth`] — Zipf-distributed token ensembles, quasi-orthogonal unit
//!   embeddings, population covariances, and bounded output gradients;
//! * [`quant`] — global and block-wise symmetric uniform quantizers plus
//!   an E2M1-style 4-bit grid quantizer, with error extraction;
//! * [`spectral`] — singular values and derived metrics (stable rank,
//!   energy concentration, power-law fits, Weyl gaps, relative errors);
//! * [`rmt`] — closed-form random-matrix quantities: noise floor,
//!   Marchenko-Pastur bulk edge, BBP outlier map, Stieltjes transforms,
//!   and the matrix-Bernstein tail bound with its inverse;
//! * [`verify`] — seeded experiment protocols that check the predictions
//!   against Monte Carlo runs and emit CSV/JSON reports.

pub mod error;
pub mod quant;
pub mod rmt;
pub mod spectral;
pub mod synth;
pub mod tensorio;
pub mod verify;

pub use error::{Error, Result};
pub use tensorio::{make_stream, DenseMatrix, RandomStream};
