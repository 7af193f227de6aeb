//! Sparse source recovery from quadratic cross-correlation data.
//!
//! The lifted unknown `X = ρρ*` has `K²` entries. This crate keeps only its
//! diagonal `χ = diag(X)` as the unknown, lets a random circulant noise
//! collector absorb the interference terms `ρ_i ρ̄_j`, and solves the
//! resulting `K`-unknown weighted ℓ1 problem with a primal-dual soft
//! thresholding iteration. Amplitudes and relative phases on the recovered
//! support are then obtained from a small restricted least-squares solve.
//!
//! Module map:
//!
//! * [`wave_model`]: passive array geometry, Green's functions, linear data `b`.
//! * [`correlation`]: `B = bb*`, row subsampling, the reduced matrix `T`.
//! * [`noise_collector`]: concatenated circulant blocks with FFT products.
//! * [`gelma`]: the ℓ1 min-max iteration, step sizes, `τ` calibration.
//! * [`phase_recovery`]: second-stage solve on the recovered support.
//! * [`diagnostics`]: coherence, sparsity bounds, support metrics, tail checks.
//! * [`oracle`]: dense brute-force references used to validate the above.
//! * [`experiment`]: configuration and end-to-end trial / phase-diagram drivers.

pub mod correlation;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod gelma;
pub mod linalg;
pub mod noise_collector;
pub mod operator;
pub mod oracle;
pub mod phase_recovery;
pub mod rng;
pub mod wave_model;

pub use num_complex::Complex64 as C64;

pub use correlation::{CorrelationMatrix, CorrelationSystem, OffDiagonalResidual, RowSelection};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, PhaseDiagram, Scenario, TrialOutcome, TrialSeeds, TrialSpec};
pub use gelma::{RecoveryReport, SolverConfig};
pub use noise_collector::NoiseCollector;
pub use operator::LinearOperator;
pub use phase_recovery::RestrictedLiftedSolution;
pub use wave_model::{
    ArrayGeometry, FrequencyGrid, ImagingGrid, LinearData, MeasurementMatrix, Point,
    SourceConfiguration,
};
