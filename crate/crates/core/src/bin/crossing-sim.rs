use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use toml::Table;

use crossing_sim::config::{apply, BatchConfig, Override, RunConfig, VERSION};
use crossing_sim::engine::{run, DecisionMode};
use crossing_sim::io;
use crossing_sim::scenarios::ScenarioTag;
use crossing_sim::sweep::{run_assert_battery, run_cd_sweep, run_cr_sweep, run_pp_sweep, run_stochastic, SweepGrid};
use crossing_sim::{Result, SimError};

#[derive(Parser)]
#[command(name = "crossing-sim", version = env!("CARGO_PKG_VERSION"), about = "Pedestrian and vehicle interaction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file patched over the preset.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one key, e.g. `vehicle.x=60` (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Engine step (s), shorthand for `--set world.dt=..`.
    #[arg(long)]
    dt: Option<f64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "CROSSING_SIM_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes a trajectory CSV and an outcome JSON.
    Run {
        #[arg(long, value_parser = parse_tag)]
        scenario: ScenarioTag,
        /// Seed for stochastic decisions; without it decisions are deterministic.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a parameter sweep; writes CSV and JSON.
    Sweep {
        #[arg(long, value_enum)]
        name: SweepName,
        /// Grid size as ROWSxCOLS (default 32x32 for pp, 100x100 otherwise).
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the vehicle assertiveness battery.
    Assert {
        #[command(flatten)]
        common: Common,
    },
    /// Seeded trials of the stochastic crossing decision at one gap.
    Stochastic {
        #[arg(long)]
        gap: f64,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Recompute outcome JSON from stored trajectory CSVs.
    Report {
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepName {
    Pp,
    Cd,
    Cr,
}

fn parse_tag(s: &str) -> std::result::Result<ScenarioTag, String> {
    s.parse().map_err(|e: SimError| e.to_string())
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("expected ROWSxCOLS")?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}"));
    Ok((n(a)?, n(b)?))
}

/// Files produced by one invocation, written only after all computation
/// succeeded. Anything already written is removed if a later write fails.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, String)>,
}

impl Outputs {
    fn add(&mut self, dir: &Path, name: &str, text: String) {
        self.files.push((dir.join(name), text));
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        let mut created_dirs = Vec::new();
        let mut written = Vec::new();
        let result = (|| {
            for (path, text) in &self.files {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty() && !d.exists()) {
                    let mut top = dir.to_path_buf();
                    while let Some(p) = top.parent().filter(|p| !p.as_os_str().is_empty() && !p.exists()) {
                        top = p.to_path_buf();
                    }
                    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
                    created_dirs.push(top);
                }
                fs::write(path, text).map_err(|e| SimError::io(path, e))?;
                written.push(path.clone());
            }
            Ok(())
        })();
        match result {
            Ok(()) => Ok(written),
            Err(e) => {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                for d in created_dirs.iter().rev() {
                    let _ = fs::remove_dir_all(d);
                }
                Err(e)
            }
        }
    }
}

fn overrides(common: &Common) -> Result<Vec<Override>> {
    let mut o = common
        .set
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<Override>>>()?;
    if let Some(dt) = common.dt {
        o.push(format!("world.dt={dt:?}").parse()?);
    }
    Ok(o)
}

fn batch_config(tag: ScenarioTag, common: &Common) -> Result<(BatchConfig, Table)> {
    let table = apply(
        BatchConfig::preset(tag).to_table(),
        common.config.as_deref(),
        &overrides(common)?,
    )?;
    let cfg = BatchConfig::from_table(&table)?;
    // Normalized so the embedded config shows every value as used.
    Ok((cfg.clone(), cfg.to_table()))
}

fn execute(command: Command) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::default();
    match command {
        Command::Run { scenario, seed, common } => {
            let table = apply(
                RunConfig::preset(scenario)?.to_table(),
                common.config.as_deref(),
                &overrides(&common)?,
            )?;
            let cfg = RunConfig::from_table(&table)?;
            let mode = match (seed, scenario) {
                (Some(s), _) => DecisionMode::Stochastic(s),
                (None, ScenarioTag::CdStoch) => {
                    return Err(SimError::config("scenario cd_stoch needs --seed"));
                }
                (None, _) => DecisionMode::Deterministic,
            };
            let mut outcome = run(&cfg.scenario, &cfg.world, &cfg.model, mode)?;
            outcome.log = io::rounded_log(&outcome.log);
            let report = io::run_report(&cfg, seed, outcome.termination, outcome.log.clone())?;
            let stem = scenario.as_str();
            out.add(
                &common.out,
                &format!("{stem}_trajectory.csv"),
                io::trajectory_csv(&cfg, seed, &outcome)?,
            );
            out.add(
                &common.out,
                &format!("{stem}_outcome.json"),
                io::run_report_json(&report),
            );
        }
        Command::Sweep { name, grid, common } => {
            let (tag, default_n) = match name {
                SweepName::Pp => (ScenarioTag::Pp, (32, 32)),
                SweepName::Cd => (ScenarioTag::Cd, (100, 100)),
                SweepName::Cr => (ScenarioTag::Cr, (100, 100)),
            };
            let (a, b) = grid.unwrap_or(default_n);
            let (cfg, table) = batch_config(tag, &common)?;
            let threads = common.threads;
            let result = match name {
                SweepName::Pp => run_pp_sweep(&SweepGrid::pp(a, b), cfg.pp, &cfg.world, &cfg.model, threads)?,
                SweepName::Cd => run_cd_sweep(&SweepGrid::cd(a, b), &cfg.world, &cfg.model, threads)?,
                SweepName::Cr => run_cr_sweep(&SweepGrid::cr(a, b), &cfg.world, &cfg.model, threads)?,
            };
            let stem = format!("sweep_{}", result.name);
            out.add(&common.out, &format!("{stem}.csv"), io::sweep_csv(&result, &table)?);
            out.add(&common.out, &format!("{stem}.json"), io::sweep_json(&result, &table));
        }
        Command::Assert { common } => {
            let (cfg, table) = batch_config(ScenarioTag::CrAssert, &common)?;
            let report = run_assert_battery(&cfg.assert, &cfg.world, &cfg.model, common.threads)?;
            out.add(&common.out, "assert.json", io::assert_json(&report, &table));
            out.add(
                &common.out,
                "assert_encounters.csv",
                io::encounters_csv(&report, &table)?,
            );
        }
        Command::Stochastic {
            gap,
            trials,
            seed,
            common,
        } => {
            let (cfg, table) = batch_config(ScenarioTag::CdStoch, &common)?;
            let report = run_stochastic(gap, trials, seed, &cfg.world, &cfg.model, common.threads)?;
            out.add(
                &common.out,
                "stochastic_histogram.csv",
                io::histogram_csv(&report, &table)?,
            );
            out.add(&common.out, "stochastic.json", io::stochastic_json(&report, &table));
        }
        Command::Report { trajectories, out: dir } => {
            for path in trajectories {
                let text = fs::read_to_string(&path).map_err(|e| SimError::io(&path, e))?;
                let stored =
                    io::read_trajectory_csv(&text).map_err(|e| SimError::parse(path.display().to_string(), e))?;
                let report = io::run_report(&stored.config, stored.seed, stored.termination, stored.log)?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
                let stem = stem.strip_suffix("_trajectory").unwrap_or(stem);
                out.add(&dir, &format!("{stem}_outcome.json"), io::run_report_json(&report));
            }
        }
    }
    out.commit()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut record = json!({ "error": e.kind(), "message": e.to_string(), "version": VERSION });
            if let SimError::UnknownKeys(keys) = &e {
                record["keys"] = json!(keys);
            }
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
