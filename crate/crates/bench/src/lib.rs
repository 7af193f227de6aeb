//! Fixtures shared by the benchmarks.

use corrnc_core::experiment::{simulate, Simulation};
use corrnc_core::noise_collector::build_collector;
use corrnc_core::rng::{complex_gaussian_vec, rng_from_seed};
use corrnc_core::{ExperimentConfig, NoiseCollector, Scenario, TrialSeeds, TrialSpec, C64};

pub struct Fixture {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub simulation: Simulation,
    pub collector: NoiseCollector,
}

impl Fixture {
    /// Noise-free trial 0 of `cfg`.
    pub fn new(cfg: ExperimentConfig) -> Self {
        let scenario = Scenario::build(&cfg).expect("valid config");
        let seeds = TrialSeeds::for_trial(cfg.experiment.seed, 0);
        let simulation = simulate(&scenario, &TrialSpec::from_config(&cfg, f64::INFINITY, seeds)).expect("simulates");
        let collector =
            build_collector(simulation.system.data().len(), cfg.collector.beta, seeds.collector).expect("collector");
        Self {
            config: cfg,
            scenario,
            simulation,
            collector,
        }
    }

    pub fn desk() -> Self {
        Self::new(ExperimentConfig::desk_scale())
    }

    pub fn with_factor(factor: usize) -> Self {
        let mut cfg = ExperimentConfig::desk_scale();
        cfg.sampling.factor = factor;
        Self::new(cfg)
    }
}

pub fn random_vec(n: usize, seed: u64) -> Vec<C64> {
    complex_gaussian_vec(&mut rng_from_seed(seed), n)
}
