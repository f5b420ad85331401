//! Fully resolved run descriptions, written next to every result.

use std::fs;
use std::path::{Path, PathBuf};

use odeid::harness::{BenchmarkConfig, BenchmarkSystem, DropSpec, NoiseSpec};
use odeid::library::{LibraryConfig, NonlinearKind, NonlinearTermSpec};
use odeid::selection::{DiscoveryConfig, HyperGrid, SelectionConfig};
use serde::{Deserialize, Serialize};

use crate::args::{BenchmarkArgs, DiscoverArgs, LibraryArgs, NoiseArgs, ReportArgs, SearchArgs, SimulateArgs};
use crate::CliError;

pub const FILE_NAME: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunManifest {
    Simulate(SimulateManifest),
    Discover(DiscoverManifest),
    Benchmark(BenchmarkManifest),
    Report(ReportManifest),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateManifest {
    pub out: PathBuf,
    pub system: BenchmarkSystem,
    pub noise: NoiseSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoverManifest {
    pub out: PathBuf,
    pub data: PathBuf,
    /// Clean trajectory for state error.
    pub truth: Option<PathBuf>,
    /// System whose true coefficients are scored against.
    pub system: Option<BenchmarkSystem>,
    pub library: LibraryConfig,
    pub standardize: bool,
    pub discovery: DiscoveryConfig,
}

/// One `(sampling interval, refinement)` configuration of a benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub sample_interval: f64,
    pub refinement: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub out: PathBuf,
    pub cells: Vec<SweepCell>,
    pub config: BenchmarkConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub out: PathBuf,
    pub results: Vec<PathBuf>,
}

impl RunManifest {
    pub fn out(&self) -> &Path {
        match self {
            RunManifest::Simulate(m) => &m.out,
            RunManifest::Discover(m) => &m.out,
            RunManifest::Benchmark(m) => &m.out,
            RunManifest::Report(m) => &m.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            RunManifest::Simulate(m) => m.out = out,
            RunManifest::Discover(m) => m.out = out,
            RunManifest::Benchmark(m) => m.out = out,
            RunManifest::Report(m) => m.out = out,
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Run(format!("cannot serialize manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid manifest {}: {e}", path.display())))
    }

    pub fn simulate(a: &SimulateArgs) -> Result<Self, CliError> {
        let system = resample(BenchmarkSystem::default_for(a.system), a.sample_interval)?;
        let noise = NoiseSpec {
            level: a.noise,
            seed: a.seed,
            drop: drop_spec(&a.noise_args),
        };
        noise.validate().map_err(usage)?;
        system.validate().map_err(usage)?;
        Ok(RunManifest::Simulate(SimulateManifest {
            out: a.out.out.clone(),
            system,
            noise,
        }))
    }

    pub fn discover(a: &DiscoverArgs) -> Result<Self, CliError> {
        let data = absolute(&a.data)?;
        let truth = a.truth.as_deref().map(absolute).transpose()?;
        let system = a.system.map(BenchmarkSystem::default_for);
        let dim = match &system {
            Some(s) => s.dim(),
            None => {
                let file = fs::File::open(&data).map_err(|e| CliError::Run(format!("cannot read {}: {e}", data.display())))?;
                odeid::io::read_observations(file).map_err(|e| CliError::Run(format!("{}: {e}", data.display())))?.dim()
            }
        };
        let (library, standardize) = library_config(&a.library, system.as_ref(), dim)?;
        Ok(RunManifest::Discover(DiscoverManifest {
            out: a.out.out.clone(),
            data,
            truth,
            system,
            library,
            standardize,
            discovery: discovery_config(&a.search)?,
        }))
    }

    pub fn benchmark(a: &BenchmarkArgs) -> Result<Self, CliError> {
        let base = resample(BenchmarkSystem::default_for(a.system), a.sample_interval)?;
        let (library, standardize) = library_config(&a.library, Some(&base), base.dim())?;
        let system = BenchmarkSystem {
            library,
            standardize,
            ..base
        };
        let mut config = BenchmarkConfig::new(system, a.noise.0.clone(), a.seeds, a.seed);
        config.drop = drop_spec(&a.noise_args);
        config.discovery = discovery_config(&a.search)?;
        config.validate().map_err(usage)?;
        let cells = if a.refinement_sweep {
            let (lo, hi) = a.sweep_spacing;
            odeid::harness::refinement_plan(&a.sweep_intervals.0, lo, hi)
                .into_iter()
                .map(|(sample_interval, refinement)| SweepCell { sample_interval, refinement })
                .collect()
        } else {
            vec![SweepCell {
                sample_interval: config.system.sample_interval,
                refinement: config.discovery.refinement,
            }]
        };
        if cells.is_empty() {
            return Err(CliError::Usage("the refinement sweep is empty".into()));
        }
        Ok(RunManifest::Benchmark(BenchmarkManifest {
            out: a.out.out.clone(),
            cells,
            config,
        }))
    }

    pub fn report(a: &ReportArgs) -> Result<Self, CliError> {
        Ok(RunManifest::Report(ReportManifest {
            out: a.out.out.clone(),
            results: a.results.iter().map(|p| absolute(p)).collect::<Result<_, _>>()?,
        }))
    }
}

fn usage(e: odeid::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
}

fn resample(system: BenchmarkSystem, dt: Option<f64>) -> Result<BenchmarkSystem, CliError> {
    match dt {
        Some(dt) => system.with_sample_interval(dt).map_err(usage),
        None => Ok(system),
    }
}

fn drop_spec(a: &NoiseArgs) -> DropSpec {
    match (a.gap, a.drop) {
        (Some((start, end)), _) => DropSpec::ContinuousGap { start, end },
        (None, Some(fraction)) => DropSpec::RandomFraction { fraction },
        (None, None) => DropSpec::None,
    }
}

/// Library flags layered over the system's library (or a cubic polynomial
/// library without constant when no system is given).
fn library_config(a: &LibraryArgs, system: Option<&BenchmarkSystem>, dim: usize) -> Result<(LibraryConfig, bool), CliError> {
    let (mut lib, mut standardize) = match system {
        Some(s) => (s.library.clone(), s.standardize),
        None => (LibraryConfig::polynomial(dim, 3, false), false),
    };
    if let Some(deg) = a.library_degree {
        lib.max_degree = deg;
    }
    if let Some(c) = a.include_constant {
        lib.include_constant = c;
    }
    if !a.nonlinear.is_empty() {
        lib.nonlinear = a
            .nonlinear
            .iter()
            .map(|&var| NonlinearTermSpec { kind: NonlinearKind::Exp, var })
            .collect();
    }
    if let Some(s) = a.standardize {
        standardize = s;
    }
    if let Some(bad) = lib.nonlinear.iter().find(|t| t.var >= dim) {
        return Err(CliError::Usage(format!("nonlinear term refers to x{} but the state has {dim} components", bad.var + 1)));
    }
    lib.build().map_err(usage)?;
    Ok((lib, standardize))
}

fn discovery_config(a: &SearchArgs) -> Result<DiscoveryConfig, CliError> {
    let mut selection = SelectionConfig {
        k0: a.k0,
        criterion: a.criterion,
        ..SelectionConfig::default()
    };
    if let Some(m) = a.max_iters {
        selection.lm.max_iters = m;
    }
    let cfg = DiscoveryConfig {
        grid: HyperGrid {
            lambdas: a.lambda_grid.0.clone(),
            rs: a.r_grid.0.clone(),
            ..HyperGrid::default()
        },
        selection,
        epsilon: a.epsilon,
        refinement: a.refine,
        ..DiscoveryConfig::default()
    };
    if cfg.refinement == 0 || cfg.selection.k0 == 0 {
        return Err(CliError::Usage("--refine and --k0 must be positive".into()));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(CliError::Usage("--epsilon must be positive".into()));
    }
    if cfg.grid.lambdas.iter().chain(&cfg.grid.rs).any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(CliError::Usage("grid weights must be finite and nonnegative".into()));
    }
    Ok(cfg)
}
