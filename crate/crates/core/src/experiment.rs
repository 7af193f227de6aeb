//! End-to-end experiment driver: configuration, single trials, sweeps.
//!
//! A trial draws sources, synthesizes `b`, optionally adds noise, correlates,
//! subsamples, solves the reduced system, and (optionally) runs the
//! restricted second stage. All randomness is derived from one trial seed.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{
    build_reduced_system, cross_correlate, subsample_rows, CorrelationSystem, ReducedSystemOptions, RowSelection,
};
use crate::diagnostics::{compare_supports, linear_sparsity_bound, SupportMetrics};
use crate::error::{Error, Result};
use crate::gelma::{gelma_solve, RecoveryReport, SolverConfig};
use crate::noise_collector::{build_collector, NoiseCollector};
use crate::phase_recovery::{angle_error, lifted_truth, solve_restricted, AngleErrorStats, RestrictedLiftedSolution};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::wave_model::{
    add_noise, build_measurement_matrix, synthesize_data, ArrayGeometry, FrequencyGrid, ImagingGrid, LinearData,
    MeasurementMatrix, Point, SourceConfiguration, SPEED_OF_LIGHT,
};
use crate::{linalg, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub receivers: usize,
    /// Aperture in meters.
    pub aperture: f64,
    /// Array to image-window center distance in meters.
    pub range: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            receivers: 11,
            aperture: 0.5,
            range: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyConfig {
    /// Central frequency in Hz.
    pub central: f64,
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    pub count: usize,
    /// m/s.
    pub wave_speed: f64,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        Self {
            central: 60e9,
            bandwidth: 20e9,
            count: 11,
            wave_speed: SPEED_OF_LIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Pixels in cross-range.
    pub nx: usize,
    /// Pixels in range.
    pub nz: usize,
    /// Defaults to the cross-range resolution `λ0 L / a`.
    pub pitch_cross: Option<f64>,
    /// Defaults to the range resolution `c0 / B`.
    pub pitch_range: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 21,
            nz: 21,
            pitch_cross: None,
            pitch_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSettings {
    /// Sparsity `M`.
    pub count: usize,
    /// Fixed pixels; drawn at random when absent.
    pub pixels: Option<Vec<usize>>,
}

impl Default for SourceSettings {
    fn default() -> Self {
        Self { count: 5, pixels: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// `𝒩 = factor · N` correlations are used.
    pub factor: usize,
    pub renormalize: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            factor: 21,
            renormalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// SNR values in dB on the linear data `b`; `inf` means noise-free.
    pub snr_db: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![f64::INFINITY],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectorConfig {
    pub beta: f64,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        Self { beta: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SingleRun,
    PhaseDiagram,
    CalibrateTau,
    Selftest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub trials: usize,
    pub output: PathBuf,
    pub stage2: bool,
    pub calibration_trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::SingleRun,
            seed: 1,
            trials: 1,
            output: PathBuf::from("out"),
            stage2: true,
            calibration_trials: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseDiagramConfig {
    pub sparsities: Vec<usize>,
    pub factors: Vec<usize>,
    pub trials: usize,
}

impl Default for PhaseDiagramConfig {
    fn default() -> Self {
        Self {
            sparsities: (1..=24).collect(),
            factors: (2..=21).collect(),
            trials: 10,
        }
    }
}

/// Full experiment configuration; every section is optional in a config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub array: ArrayConfig,
    pub frequency: FrequencyConfig,
    pub grid: GridConfig,
    pub sources: SourceSettings,
    pub sampling: SamplingConfig,
    pub noise: NoiseConfig,
    pub collector: CollectorConfig,
    pub solver: SolverConfig,
    pub experiment: RunConfig,
    pub phase_diagram: PhaseDiagramConfig,
}

impl ExperimentConfig {
    /// 11 receivers × 11 frequencies, 21 × 21 pixels, 5 sources.
    pub fn desk_scale() -> Self {
        Self::default()
    }

    /// 21 receivers × 21 frequencies, 41 × 41 pixels, 8 sources.
    pub fn full_scale() -> Self {
        let mut cfg = Self::default();
        cfg.array.receivers = 21;
        cfg.frequency.count = 21;
        cfg.grid.nx = 41;
        cfg.grid.nz = 41;
        cfg.sources.count = 8;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.sources.count == 0 {
            return Err(Error::domain("sources.count must be positive"));
        }
        if let Some(p) = &self.sources.pixels {
            if p.len() != self.sources.count {
                return Err(Error::domain("sources.pixels must list exactly sources.count pixels"));
            }
        }
        if self.sampling.factor == 0 {
            return Err(Error::domain("sampling.factor must be positive"));
        }
        if self.noise.snr_db.is_empty() || self.noise.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::domain("noise.snr_db must list finite values or inf"));
        }
        if !(self.collector.beta > 1.0) {
            return Err(Error::domain("collector.beta must exceed 1"));
        }
        if self.experiment.trials == 0 || self.phase_diagram.trials == 0 || self.experiment.calibration_trials == 0 {
            return Err(Error::domain("trial counts must be positive"));
        }
        Ok(())
    }
}

/// Geometry and measurement matrix for a configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub frequencies: FrequencyGrid,
    pub grid: ImagingGrid,
    pub matrix: MeasurementMatrix,
}

impl Scenario {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let f = &cfg.frequency;
        let frequencies = FrequencyGrid::uniform(f.central, f.bandwidth, f.count, f.wave_speed)?;
        let geometry = ArrayGeometry::linear(cfg.array.aperture, cfg.array.range, cfg.array.receivers)?;
        let lambda = frequencies.central_wavelength();
        let pitch_cross = cfg.grid.pitch_cross.unwrap_or(lambda * cfg.array.range / cfg.array.aperture);
        let pitch_range = match cfg.grid.pitch_range {
            Some(p) => p,
            None if f.bandwidth > 0.0 => f.wave_speed / f.bandwidth,
            None => return Err(Error::domain("grid.pitch_range is required for zero bandwidth")),
        };
        let grid = ImagingGrid::centered(
            Point::planar(0.0, cfg.array.range),
            cfg.grid.nx,
            cfg.grid.nz,
            pitch_cross,
            pitch_range,
        )?;
        let matrix = build_measurement_matrix(&geometry, &frequencies, &grid)?;
        Ok(Self {
            geometry,
            frequencies,
            grid,
            matrix,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn data_len(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Seeds of the independent random streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub trial: u64,
    pub sources: u64,
    pub noise: u64,
    pub sampling: u64,
    pub collector: u64,
}

impl TrialSeeds {
    pub fn from_trial_seed(trial: u64) -> Self {
        Self {
            trial,
            sources: derive_seed(trial, &[stream::SOURCES]),
            noise: derive_seed(trial, &[stream::NOISE]),
            sampling: derive_seed(trial, &[stream::SAMPLING]),
            collector: derive_seed(trial, &[stream::COLLECTOR]),
        }
    }

    /// Seed for trial `index` of a run with master seed `master`.
    pub fn for_trial(master: u64, index: usize) -> Self {
        Self::from_trial_seed(derive_seed(master, &[index as u64]))
    }

    /// Seed for one phase-diagram realization; independent of scheduling.
    pub fn for_cell(master: u64, sparsity: usize, factor: usize, trial: usize) -> Self {
        Self::from_trial_seed(derive_seed(
            master,
            &[stream::CELL, sparsity as u64, factor as u64, trial as u64],
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub sparsity: usize,
    pub pixels: Option<Vec<usize>>,
    pub factor: usize,
    pub snr_db: f64,
    pub beta: f64,
    pub renormalize: bool,
    pub seeds: TrialSeeds,
}

impl TrialSpec {
    pub fn from_config(cfg: &ExperimentConfig, snr_db: f64, seeds: TrialSeeds) -> Self {
        Self {
            sparsity: cfg.sources.count,
            pixels: cfg.sources.pixels.clone(),
            factor: cfg.sampling.factor,
            snr_db,
            beta: cfg.collector.beta,
            renormalize: cfg.sampling.renormalize,
            seeds,
        }
    }
}

/// Synthetic data and the reduced system built from it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub sources: SourceConfiguration,
    /// Noise-free data and the normalized unknown `ρ`.
    pub clean: LinearData,
    /// Data actually correlated (noise included).
    pub measured_b: Vec<C64>,
    pub system: CorrelationSystem,
}

impl Simulation {
    /// `χ = |ρ|²` of the noise-free unknown.
    pub fn chi_true(&self) -> Vec<f64> {
        self.clean.rho.iter().map(|r| r.norm_sqr()).collect()
    }

    pub fn true_support(&self) -> Vec<usize> {
        self.sources.support()
    }
}

pub fn simulate(scenario: &Scenario, spec: &TrialSpec) -> Result<Simulation> {
    let k = scenario.pixel_count();
    let sources = match &spec.pixels {
        Some(pixels) => {
            let mut rng = rng_from_seed(spec.seeds.sources);
            let srcs = pixels
                .iter()
                .map(|&p| {
                    let phi = rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU);
                    (p, C64::from_polar(1.0, phi))
                })
                .collect();
            SourceConfiguration::new(k, srcs)?
        }
        None => SourceConfiguration::random_unit(k, spec.sparsity, &mut rng_from_seed(spec.seeds.sources))?,
    };
    let clean = synthesize_data(&scenario.matrix, &sources)?;
    let noisy = add_noise(&clean, spec.snr_db, spec.seeds.noise)?;
    let b = cross_correlate(&noisy.b)?;
    let rows = subsample_rows(scenario.data_len(), spec.factor, spec.seeds.sampling)?;
    let opts = ReducedSystemOptions {
        renormalize: spec.renormalize,
    };
    let system = build_reduced_system(&scenario.matrix, &b, &rows, &opts)?.with_ground_truth(&clean.rho)?;
    Ok(Simulation {
        sources,
        clean,
        measured_b: noisy.b,
        system,
    })
}

/// Second-stage result compared with the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Outcome {
    pub solution: RestrictedLiftedSolution,
    pub truth: DMatrix<C64>,
    /// `‖X̂ − X‖_F / ‖X‖_F` on the recovered support.
    pub relative_error: f64,
    pub angles: Option<AngleErrorStats>,
    /// Recovered source amplitudes `ρ̂_k / c_k` (global phase fixed).
    pub amplitudes: Vec<C64>,
}

pub fn run_stage2(scenario: &Scenario, sim: &Simulation, support: &[usize]) -> Result<Stage2Outcome> {
    let sys = &sim.system;
    let solution = solve_restricted(&scenario.matrix, sys.data(), sys.selection(), support)?;
    let truth = lifted_truth(&sim.clean.rho, support);
    let tnorm = truth.norm();
    let relative_error = if tnorm > 0.0 {
        (&solution.x_hat - &truth).norm() / tnorm
    } else {
        solution.x_hat.norm()
    };
    let angles = angle_error(&solution.x_hat, &truth).ok();
    let amplitudes = solution.amplitudes(&scenario.matrix);
    Ok(Stage2Outcome {
        solution,
        truth,
        relative_error,
        angles,
        amplitudes,
    })
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub seeds: TrialSeeds,
    pub simulation: Simulation,
    pub collector: NoiseCollector,
    pub report: RecoveryReport,
    pub metrics: SupportMetrics,
    pub stage2: Option<Stage2Outcome>,
    pub solve_seconds: f64,
}

/// Solves an existing simulation: collector, first stage, optional second stage.
pub fn solve_simulation(
    scenario: &Scenario,
    simulation: Simulation,
    seeds: TrialSeeds,
    beta: f64,
    solver: &SolverConfig,
    stage2: bool,
) -> Result<TrialOutcome> {
    let start = Instant::now();
    let collector = build_collector(simulation.system.data().len(), beta, seeds.collector)?;
    let report = gelma_solve(&simulation.system, &collector, solver)?;
    let solve_seconds = start.elapsed().as_secs_f64();
    let metrics = compare_supports(&simulation.chi_true(), report.support.clone());
    let stage2 = if stage2 && !report.support.is_empty() {
        Some(run_stage2(scenario, &simulation, &report.support)?)
    } else {
        None
    };
    Ok(TrialOutcome {
        seeds,
        simulation,
        collector,
        report,
        metrics,
        stage2,
        solve_seconds,
    })
}

pub fn run_trial(scenario: &Scenario, spec: &TrialSpec, solver: &SolverConfig, stage2: bool) -> Result<TrialOutcome> {
    let sim = simulate(scenario, spec)?;
    solve_simulation(scenario, sim, spec.seeds, spec.beta, solver, stage2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub sparsity: usize,
    pub factor: usize,
    /// `𝒩 = factor · N`.
    pub rows: usize,
    /// Mean exact-support score over the trials.
    pub success: f64,
    pub false_positive_trials: usize,
    /// `√𝒩 / (2√ln 𝒩)`.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub sparsities: Vec<usize>,
    pub factors: Vec<usize>,
    pub trials: usize,
    pub data_len: usize,
    /// Row-major over `sparsities × factors`.
    pub cells: Vec<PhaseCell>,
}

impl PhaseDiagram {
    pub fn cell(&self, sparsity: usize, factor: usize) -> Option<&PhaseCell> {
        self.cells.iter().find(|c| c.sparsity == sparsity && c.factor == factor)
    }

    /// Largest sparsity `M` with success ≥ `level` such that every smaller
    /// sparsity on the grid also reaches `level`, for each factor.
    pub fn boundary(&self, factor: usize, level: f64) -> usize {
        let mut best = 0;
        for &m in &self.sparsities {
            match self.cell(m, factor) {
                Some(c) if c.success >= level => best = m,
                _ => break,
            }
        }
        best
    }

    /// Cells on or below the reference curve that score under `level`.
    pub fn reference_violations(&self, level: f64) -> Vec<&PhaseCell> {
        self.cells
            .iter()
            .filter(|c| c.sparsity as f64 <= c.reference && c.success < level)
            .collect()
    }

    /// `(𝒩, M*(𝒩))` for every factor, with `M*` from [`Self::boundary`].
    pub fn boundary_curve(&self, level: f64) -> Vec<(usize, usize)> {
        self.factors
            .iter()
            .map(|&f| (f * self.data_len, self.boundary(f, level)))
            .collect()
    }

    /// Least-squares slope of `ln M*` against `ln 𝒩` over points with `M* > 0`.
    pub fn boundary_exponent(&self, level: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .boundary_curve(level)
            .into_iter()
            .filter(|&(_, m)| m > 0)
            .map(|(n, m)| ((n as f64).ln(), (m as f64).ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let len = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    /// `M*(𝒩)` never decreases as `𝒩` grows.
    pub fn boundary_is_monotone(&self, level: f64) -> bool {
        let mut curve = self.boundary_curve(level);
        curve.sort_unstable();
        curve.windows(2).all(|w| w[0].1 <= w[1].1)
    }
}

/// Exact-support success rates over a grid of sparsities and sampling factors.
///
/// Every realization runs on its own derived seed, so results do not depend
/// on the thread pool. Noise-free data, no second stage.
pub fn phase_diagram(
    scenario: &Scenario,
    cfg: &ExperimentConfig,
    sparsities: &[usize],
    factors: &[usize],
    trials: usize,
) -> Result<PhaseDiagram> {
    let k = scenario.pixel_count();
    if let Some(&m) = sparsities.iter().find(|&&m| m == 0 || m >= k) {
        return Err(Error::domain(format!("phase-diagram sparsity {m} must lie in 1..{k}")));
    }
    if trials == 0 {
        return Err(Error::domain("phase diagram needs at least one trial"));
    }
    let n = scenario.data_len();
    if let Some(&f) = factors.iter().find(|&&f| f == 0 || f > n) {
        return Err(Error::domain(format!("sampling factor {f} must lie in 1..={n}")));
    }
    let master = cfg.experiment.seed;
    let tasks: Vec<(usize, usize, usize)> = sparsities
        .iter()
        .flat_map(|&m| factors.iter().flat_map(move |&f| (0..trials).map(move |t| (m, f, t))))
        .collect();
    let outcomes = tasks
        .par_iter()
        .map(|&(m, f, t)| {
            let spec = TrialSpec {
                sparsity: m,
                pixels: None,
                factor: f,
                snr_db: f64::INFINITY,
                ..TrialSpec::from_config(cfg, f64::INFINITY, TrialSeeds::for_cell(master, m, f, t))
            };
            run_trial(scenario, &spec, &cfg.solver, false).map(|o| o.metrics)
        })
        .collect::<Result<Vec<_>>>()?;
    let cells = sparsities
        .iter()
        .enumerate()
        .flat_map(|(i, &m)| factors.iter().enumerate().map(move |(j, &f)| (i, j, m, f)))
        .map(|(i, j, m, f)| {
            let base = (i * factors.len() + j) * trials;
            let chunk = &outcomes[base..base + trials];
            PhaseCell {
                sparsity: m,
                factor: f,
                rows: f * n,
                success: chunk.iter().map(|o| o.score).sum::<f64>() / trials as f64,
                false_positive_trials: chunk.iter().filter(|o| o.false_positives > 0).count(),
                reference: linear_sparsity_bound(f * n),
            }
        })
        .collect();
    Ok(PhaseDiagram {
        sparsities: sparsities.to_vec(),
        factors: factors.to_vec(),
        trials,
        data_len: n,
        cells,
    })
}

/// Convenience: `‖d‖₂` share explained by the diagonal model for a simulation.
pub fn diagonal_energy_ratio(sim: &Simulation) -> Result<f64> {
    let chi = sim.system.to_system_coords(&sim.chi_true());
    let r = crate::correlation::off_diagonal_residual(&sim.system, &chi)?;
    Ok(r.norm_t_chi / linalg::norm2(sim.system.data()).max(f64::MIN_POSITIVE))
}

/// Loads a simulation from saved pieces (the CLI's on-disk format).
pub fn simulation_from_parts(
    scenario: &Scenario,
    sources: SourceConfiguration,
    measured_b: Vec<C64>,
    rows: RowSelection,
    d: Vec<C64>,
    renormalize: bool,
) -> Result<Simulation> {
    let clean = synthesize_data(&scenario.matrix, &sources)?;
    let opts = ReducedSystemOptions { renormalize };
    let system = CorrelationSystem::from_data(&scenario.matrix, rows, d, &opts)?.with_ground_truth(&clean.rho)?;
    Ok(Simulation {
        sources,
        clean,
        measured_b,
        system,
    })
}
