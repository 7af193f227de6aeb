use std::path::Path;
use std::time::Instant;

use corrnc_core::experiment::{phase_diagram as run_phase_diagram, run_stage2, simulate as run_simulate, solve_simulation};
use corrnc_core::gelma::calibrate_tau as run_calibration;
use corrnc_core::rng::{derive_seed, stream};
use corrnc_core::{ExperimentConfig, Scenario, TrialOutcome, TrialSeeds, TrialSpec};
use serde_json::{json, Value};

use crate::config::{apply_overrides, load_config, Overrides};
use crate::output::{f, load_dataset, read_pixels, run_name, snr_label, write_dataset, DatasetInfo, OutDir};
use crate::CliError;

/// Where measurement noise enters the pipeline; recorded in dataset manifests.
pub const NOISE_INJECTION: &str = "complex gaussian added to the linear data b before correlating";

fn resolve(config: Option<&Path>, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = load_config(config)?;
    apply_overrides(&mut cfg, o)?;
    Ok(cfg)
}

/// Every `(trial, snr)` pair of a run, with its directory name when there is more than one.
fn runs(cfg: &ExperimentConfig) -> Vec<(usize, f64, Option<String>)> {
    let many = cfg.experiment.trials * cfg.noise.snr_db.len() > 1;
    (0..cfg.experiment.trials)
        .flat_map(|t| cfg.noise.snr_db.iter().map(move |&s| (t, s)))
        .map(|(t, s)| (t, s, many.then(|| run_name(t, s))))
        .collect()
}

fn subdir(root: &OutDir, name: &Option<String>) -> Result<OutDir, CliError> {
    match name {
        Some(n) => root.child(n),
        None => OutDir::create(root.path()),
    }
}

pub fn simulate(config: Option<&Path>, o: &Overrides) -> Result<(), CliError> {
    let cfg = resolve(config, o)?;
    let scenario = Scenario::build(&cfg)?;
    let root = OutDir::create(&cfg.experiment.output)?;
    for (trial, snr, name) in runs(&cfg) {
        let seeds = TrialSeeds::for_trial(cfg.experiment.seed, trial);
        let sim = run_simulate(&scenario, &TrialSpec::from_config(&cfg, snr, seeds))?;
        let mut dir = subdir(&root, &name)?;
        write_dataset(&mut dir, &scenario, &sim)?;
        let info = DatasetInfo {
            trial,
            snr_db: snr_label(snr),
            seeds,
        };
        let path = dir.finish("simulate", &cfg, json!({ "dataset": info, "noise_injection": NOISE_INJECTION }))?;
        eprintln!("simulate: trial {trial}, snr {} -> {}", snr_label(snr), path.display());
    }
    Ok(())
}

pub fn solve(config: Option<&Path>, data: Option<&Path>, o: &Overrides) -> Result<(), CliError> {
    match data {
        Some(dir) => {
            let loaded = load_dataset(dir)?;
            let mut cfg = loaded.config;
            apply_overrides(&mut cfg, o)?;
            if o.snr_db.is_some() {
                return Err(CliError::Config("--snr-db cannot change a saved dataset".into()));
            }
            let start = Instant::now();
            let out = solve_simulation(
                &loaded.scenario,
                loaded.simulation,
                loaded.info.seeds,
                cfg.collector.beta,
                &cfg.solver,
                cfg.experiment.stage2,
            )?;
            let mut dir_out = OutDir::create(&cfg.experiment.output)?;
            write_solution(&mut dir_out, &loaded.scenario, &out, start.elapsed().as_secs_f64())?;
            let extra = json!({ "dataset": loaded.info, "source": dir.display().to_string() });
            let path = dir_out.finish("solve", &cfg, extra)?;
            report_line(&out, &path);
        }
        None => {
            let cfg = resolve(config, o)?;
            let scenario = Scenario::build(&cfg)?;
            let root = OutDir::create(&cfg.experiment.output)?;
            for (trial, snr, name) in runs(&cfg) {
                let start = Instant::now();
                let seeds = TrialSeeds::for_trial(cfg.experiment.seed, trial);
                let spec = TrialSpec::from_config(&cfg, snr, seeds);
                let sim = run_simulate(&scenario, &spec)?;
                let out = solve_simulation(&scenario, sim, seeds, spec.beta, &cfg.solver, cfg.experiment.stage2)?;
                let mut dir = subdir(&root, &name)?;
                write_dataset(&mut dir, &scenario, &out.simulation)?;
                write_solution(&mut dir, &scenario, &out, start.elapsed().as_secs_f64())?;
                let info = DatasetInfo {
                    trial,
                    snr_db: snr_label(snr),
                    seeds,
                };
                let path = dir.finish("solve", &cfg, json!({ "dataset": info, "noise_injection": NOISE_INJECTION }))?;
                report_line(&out, &path);
            }
        }
    }
    Ok(())
}

fn report_line(out: &TrialOutcome, path: &Path) {
    eprintln!(
        "solve: {} iterations, support {:?} (true {:?}), exact = {} -> {}",
        out.report.iterations,
        out.report.support,
        out.metrics.true_support,
        out.metrics.exact,
        path.display()
    );
}

fn write_solution(dir: &mut OutDir, scenario: &Scenario, out: &TrialOutcome, wall: f64) -> Result<(), CliError> {
    let grid = &scenario.grid;
    let report = &out.report;
    let truth = out.simulation.chi_true();
    let support: std::collections::BTreeSet<usize> = report.support.iter().copied().collect();
    dir.csv(
        "chi.csv",
        &["pixel", "ix", "iz", "x", "z", "chi_re", "chi_im", "chi_abs", "amplitude_abs", "true_chi", "in_support"],
        (0..scenario.pixel_count()).map(|k| {
            let p = grid.points[k];
            let c = report.chi[k];
            vec![
                k.to_string(),
                (k % grid.nx).to_string(),
                (k / grid.nx).to_string(),
                f(p.x),
                f(p.z),
                f(c.re),
                f(c.im),
                f(c.norm()),
                f(report.amplitudes[k].norm()),
                f(truth[k]),
                u8::from(support.contains(&k)).to_string(),
            ]
        }),
    )?;
    let mut header = vec!["iz".to_string()];
    header.extend((0..grid.nx).map(|ix| format!("ix{ix}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    dir.csv(
        "image.csv",
        &header,
        (0..grid.nz).map(|iz| {
            std::iter::once(iz.to_string())
                .chain((0..grid.nx).map(|ix| f(report.amplitudes[iz * grid.nx + ix].norm())))
                .collect::<Vec<_>>()
        }),
    )?;
    dir.csv("support.csv", &["pixel"], report.support.iter().map(|k| vec![k.to_string()]))?;
    if !report.history.is_empty() {
        dir.csv(
            "history.csv",
            &["iteration", "residual_norm", "chi_change", "nnz_chi"],
            report.history.iter().map(|h| {
                vec![
                    h.iteration.to_string(),
                    f(h.residual_norm),
                    f(h.chi_change),
                    h.nnz_chi.to_string(),
                ]
            }),
        )?;
    }
    let stage2 = match &out.stage2 {
        Some(s2) => Some(write_stage2(dir, s2)?),
        None => None,
    };
    let m = &out.metrics;
    dir.json(
        "metrics.json",
        &json!({
            "wall_time_seconds": wall,
            "solve_seconds": out.solve_seconds,
            "iterations": report.iterations,
            "converged": report.converged,
            "relative_residual": report.relative_residual,
            "step_sizes": report.steps,
            "tau": report.tau,
            "collector_blocks": out.collector.blocks(),
            "collector_width": out.collector.width(),
            "collector_l1": report.collector_l1,
            "rows": out.simulation.system.data().len(),
            "support": report.support,
            "true_support": m.true_support,
            "exact_support": m.exact,
            "false_positives": m.false_positives,
            "false_negatives": m.false_negatives,
            "gamma": m.gamma,
            "stage2": stage2,
        }),
    )
}

fn write_stage2(dir: &mut OutDir, s2: &corrnc_core::experiment::Stage2Outcome) -> Result<Value, CliError> {
    let sol = &s2.solution;
    let m = sol.support.len();
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).collect();
    dir.csv(
        "x_hat.csv",
        &["a", "b", "pixel_a", "pixel_b", "re", "im", "true_re", "true_im"],
        cells.iter().map(|&(a, b)| {
            let (x, t) = (sol.x_hat[(a, b)], s2.truth[(a, b)]);
            vec![
                a.to_string(),
                b.to_string(),
                sol.support[a].to_string(),
                sol.support[b].to_string(),
                f(x.re),
                f(x.im),
                f(t.re),
                f(t.im),
            ]
        }),
    )?;
    let angle_rows = |x: &dyn Fn(usize, usize) -> corrnc_core::C64| -> Vec<Vec<String>> {
        (0..m)
            .map(|a| {
                std::iter::once(sol.support[a].to_string())
                    .chain((0..m).map(|b| f(x(a, b).arg())))
                    .collect()
            })
            .collect()
    };
    let mut header = vec!["pixel".to_string()];
    header.extend(sol.support.iter().map(|k| format!("p{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    dir.csv("x_hat_angle.csv", &header, angle_rows(&|a, b| sol.x_hat[(a, b)]))?;
    dir.csv("x_true_angle.csv", &header, angle_rows(&|a, b| s2.truth[(a, b)]))?;
    dir.csv(
        "amplitudes.csv",
        &["pixel", "re", "im", "abs"],
        sol.support
            .iter()
            .zip(&s2.amplitudes)
            .map(|(k, a)| vec![k.to_string(), f(a.re), f(a.im), f(a.norm())]),
    )?;
    Ok(json!({
        "relative_error": s2.relative_error,
        "method": sol.method,
        "condition_estimate": sol.condition_estimate,
        "rank_deficient": sol.rank_deficient,
        "residual_norm": sol.residual_norm,
        "leading_eigenvalue": sol.leading_eigenvalue,
        "angle_mean_abs": s2.angles.as_ref().map(|a| a.mean_abs),
        "angle_max_abs": s2.angles.as_ref().map(|a| a.max_abs),
    }))
}

pub fn recover(data: &Path, support: Option<&Path>, o: &Overrides) -> Result<(), CliError> {
    let loaded = load_dataset(data)?;
    let mut cfg = loaded.config;
    apply_overrides(&mut cfg, o)?;
    let (pixels, origin) = match support {
        Some(p) => (read_pixels(p)?, p.display().to_string()),
        None => (loaded.simulation.true_support(), "truth".to_string()),
    };
    let start = Instant::now();
    let s2 = run_stage2(&loaded.scenario, &loaded.simulation, &pixels)?;
    let mut dir = OutDir::create(&cfg.experiment.output)?;
    let summary = write_stage2(&mut dir, &s2)?;
    dir.json(
        "metrics.json",
        &json!({ "wall_time_seconds": start.elapsed().as_secs_f64(), "support": pixels, "stage2": summary }),
    )?;
    let extra = json!({ "dataset": loaded.info, "source": data.display().to_string(), "support_source": origin });
    let path = dir.finish("recover", &cfg, extra)?;
    eprintln!("recover: relative error {:.3e} -> {}", s2.relative_error, path.display());
    Ok(())
}

pub fn phase_diagram(config: Option<&Path>, o: &Overrides) -> Result<(), CliError> {
    let cfg = resolve(config, o)?;
    let scenario = Scenario::build(&cfg)?;
    let pd = &cfg.phase_diagram;
    let start = Instant::now();
    let diagram = run_phase_diagram(&scenario, &cfg, &pd.sparsities, &pd.factors, pd.trials)?;
    let wall = start.elapsed().as_secs_f64();
    let mut dir = OutDir::create(&cfg.experiment.output)?;
    dir.csv(
        "phase_diagram.csv",
        &["sparsity", "factor", "rows", "success", "false_positive_trials", "reference"],
        diagram.cells.iter().map(|c| {
            vec![
                c.sparsity.to_string(),
                c.factor.to_string(),
                c.rows.to_string(),
                f(c.success),
                c.false_positive_trials.to_string(),
                f(c.reference),
            ]
        }),
    )?;
    dir.csv(
        "boundary.csv",
        &["factor", "rows", "m_star", "reference"],
        diagram.factors.iter().map(|&fac| {
            let rows = fac * diagram.data_len;
            vec![
                fac.to_string(),
                rows.to_string(),
                diagram.boundary(fac, 0.5).to_string(),
                f(corrnc_core::diagnostics::linear_sparsity_bound(rows)),
            ]
        }),
    )?;
    let violations: Vec<Value> = diagram
        .reference_violations(0.9)
        .iter()
        .map(|c| json!({ "sparsity": c.sparsity, "factor": c.factor, "success": c.success }))
        .collect();
    dir.json(
        "metrics.json",
        &json!({
            "wall_time_seconds": wall,
            "solves": pd.sparsities.len() * pd.factors.len() * pd.trials,
            "boundary_exponent": diagram.boundary_exponent(0.5),
            "boundary_monotone": diagram.boundary_is_monotone(0.5),
            "reference_violations": violations,
        }),
    )?;
    let path = dir.finish("phase-diagram", &cfg, json!({}))?;
    eprintln!("phase-diagram: {} cells in {wall:.1} s -> {}", diagram.cells.len(), path.display());
    Ok(())
}

pub fn calibrate_tau(config: Option<&Path>, o: &Overrides) -> Result<(), CliError> {
    let cfg = resolve(config, o)?;
    let scenario = Scenario::build(&cfg)?;
    let seeds = TrialSeeds::for_trial(cfg.experiment.seed, 0);
    let sim = run_simulate(&scenario, &TrialSpec::from_config(&cfg, f64::INFINITY, seeds))?;
    let collector = corrnc_core::noise_collector::build_collector(
        sim.system.data().len(),
        cfg.collector.beta,
        seeds.collector,
    )?;
    let start = Instant::now();
    let noise_seed = derive_seed(cfg.experiment.seed, &[stream::CALIBRATION]);
    let cal = run_calibration(
        sim.system.matrix(),
        &collector,
        &cfg.solver,
        cfg.experiment.calibration_trials,
        noise_seed,
    )?;
    let mut dir = OutDir::create(&cfg.experiment.output)?;
    dir.json(
        "tau.json",
        &json!({
            "tau": cal.tau,
            "trials": cal.trials,
            "probes": cal.probes.iter().map(|(t, z)| json!({ "tau": t, "chi_zero": z })).collect::<Vec<_>>(),
            "noise_seed": noise_seed,
            "wall_time_seconds": start.elapsed().as_secs_f64(),
        }),
    )?;
    let path = dir.finish("calibrate-tau", &cfg, json!({ "seeds": seeds }))?;
    println!("{}", cal.tau);
    eprintln!("calibrate-tau: tau = {} -> {}", cal.tau, path.display());
    Ok(())
}
