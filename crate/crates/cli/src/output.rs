//! Output directories, CSV/JSON writers, manifests and saved datasets.

use std::fs;
use std::path::{Path, PathBuf};

use corrnc_core::correlation::RowSelection;
use corrnc_core::experiment::{simulation_from_parts, Simulation};
use corrnc_core::{ExperimentConfig, Scenario, SourceConfiguration, TrialSeeds, C64};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{parse_config, to_toml};
use crate::CliError;

/// Bumped whenever a CSV layout changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const MANIFEST: &str = "manifest.json";

/// An output directory that remembers what was written into it.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn child(&self, name: &str) -> Result<OutDir, CliError> {
        OutDir::create(&self.root.join(name))
    }

    /// Writes a CSV with `header` and `rows` (already formatted cells).
    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        w.write_record(header).map_err(|e| CliError::csv(&path, e))?;
        for row in rows {
            let row: Vec<String> = row.into_iter().collect();
            w.write_record(&row).map_err(|e| CliError::csv(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("json value serializes");
        self.text(name, &(text + "\n"))
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes `config.toml` and `manifest.json`; `extra` is merged into the manifest.
    pub fn finish(mut self, command: &str, cfg: &ExperimentConfig, extra: Value) -> Result<PathBuf, CliError> {
        let toml = to_toml(cfg);
        self.text("config.toml", &toml)?;
        let mut files = self.files.clone();
        files.push(MANIFEST.to_string());
        let mut manifest = json!({
            "tool": "corrnc",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "csv_schema_version": CSV_SCHEMA_VERSION,
            "seed": cfg.experiment.seed,
            "threads": rayon::current_num_threads(),
            "config": toml,
            "files": files,
        });
        if let (Value::Object(m), Value::Object(e)) = (&mut manifest, extra) {
            m.extend(e);
        }
        let path = self.root.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(self.root)
    }
}

/// `inf` for the noise-free sentinel, shortest decimal otherwise.
pub fn snr_label(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        format!("{snr}")
    }
}

pub fn f(v: f64) -> String {
    format!("{v}")
}

/// Sub-directory name when a run produces several datasets.
pub fn run_name(trial: usize, snr: f64) -> String {
    format!("trial-{trial:03}_snr-{}", snr_label(snr))
}

/// Everything needed to rebuild a saved simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub trial: usize,
    pub snr_db: String,
    pub seeds: TrialSeeds,
}

pub fn write_dataset(dir: &mut OutDir, scenario: &Scenario, sim: &Simulation) -> Result<(), CliError> {
    let grid = &scenario.grid;
    dir.csv(
        "sources.csv",
        &["pixel", "ix", "iz", "re", "im"],
        sim.sources.sources.iter().map(|&(k, a)| {
            vec![k.to_string(), (k % grid.nx).to_string(), (k / grid.nx).to_string(), f(a.re), f(a.im)]
        }),
    )?;
    let chi = sim.chi_true();
    dir.csv(
        "chi_true.csv",
        &["pixel", "ix", "iz", "chi"],
        chi.iter()
            .enumerate()
            .map(|(k, v)| vec![k.to_string(), (k % grid.nx).to_string(), (k / grid.nx).to_string(), f(*v)]),
    )?;
    dir.csv(
        "support_true.csv",
        &["pixel"],
        sim.true_support().into_iter().map(|k| vec![k.to_string()]),
    )?;
    let nr = scenario.matrix.receivers();
    dir.csv(
        "b.csv",
        &["index", "receiver", "frequency", "re", "im"],
        sim.measured_b
            .iter()
            .enumerate()
            .map(|(i, v)| vec![i.to_string(), (i % nr).to_string(), (i / nr).to_string(), f(v.re), f(v.im)]),
    )?;
    let sel = sim.system.selection();
    dir.csv(
        "rows.csv",
        &["row", "index", "i", "j"],
        sel.indices().iter().enumerate().map(|(r, &idx)| {
            let (i, j) = sel.pair(r);
            vec![r.to_string(), idx.to_string(), i.to_string(), j.to_string()]
        }),
    )?;
    dir.csv(
        "d.csv",
        &["row", "re", "im"],
        sim.system
            .data()
            .iter()
            .enumerate()
            .map(|(r, v)| vec![r.to_string(), f(v.re), f(v.im)]),
    )
}

fn read_csv(path: &Path, columns: &[&str]) -> Result<Vec<Vec<String>>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    let header = r.headers().map_err(|e| CliError::csv(path, e))?.clone();
    let idx = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| CliError::Config(format!("{}: missing column '{c}'", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| CliError::csv(path, e))?;
            Ok(idx.iter().map(|&i| rec.get(i).unwrap_or("").to_string()).collect())
        })
        .collect()
}

fn num<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{}: cannot parse '{s}'", path.display())))
}

fn complex_column(path: &Path) -> Result<Vec<C64>, CliError> {
    read_csv(path, &["re", "im"])?
        .iter()
        .map(|r| Ok(C64::new(num(path, &r[0])?, num(path, &r[1])?)))
        .collect()
}

/// Reads a `pixel` column (e.g. `support.csv` or `sources.csv`).
pub fn read_pixels(path: &Path) -> Result<Vec<usize>, CliError> {
    read_csv(path, &["pixel"])?.iter().map(|r| num(path, &r[0])).collect()
}

/// A dataset written by `simulate`, loaded back.
pub struct LoadedDataset {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub info: DatasetInfo,
    pub simulation: Simulation,
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset, CliError> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| CliError::Config(format!("cannot read dataset manifest {}: {e}", manifest_path.display())))?;
    let manifest: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", manifest_path.display())))?;
    let config_text = manifest["config"]
        .as_str()
        .ok_or_else(|| CliError::Config(format!("{}: no embedded config", manifest_path.display())))?;
    let config = parse_config(config_text, &manifest_path.display().to_string())?;
    let info: DatasetInfo = serde_json::from_value(manifest["dataset"].clone())
        .map_err(|e| CliError::Config(format!("{}: not a dataset manifest ({e})", manifest_path.display())))?;
    let scenario = Scenario::build(&config).map_err(CliError::Core)?;

    let src_path = dir.join("sources.csv");
    let sources = read_csv(&src_path, &["pixel", "re", "im"])?
        .iter()
        .map(|r| Ok((num(&src_path, &r[0])?, C64::new(num(&src_path, &r[1])?, num(&src_path, &r[2])?))))
        .collect::<Result<Vec<_>, CliError>>()?;
    let sources = SourceConfiguration::new(scenario.pixel_count(), sources).map_err(CliError::Core)?;
    let b = complex_column(&dir.join("b.csv"))?;
    let rows_path = dir.join("rows.csv");
    let indices = read_csv(&rows_path, &["index"])?
        .iter()
        .map(|r| num(&rows_path, &r[0]))
        .collect::<Result<Vec<usize>, _>>()?;
    let rows = RowSelection::from_indices(scenario.data_len(), indices).map_err(CliError::Core)?;
    let d = complex_column(&dir.join("d.csv"))?;
    let simulation = simulation_from_parts(&scenario, sources, b, rows, d, config.sampling.renormalize)
        .map_err(CliError::Core)?;
    Ok(LoadedDataset {
        config,
        scenario,
        info,
        simulation,
    })
}
