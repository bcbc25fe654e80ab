use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixfix::geometry::{geodetic_to_ecef, GeoPoint};
use mixfix::io::{grid_to_csv, grid_to_geojson, EpochFile, FormatError, SolutionFile, SolveStatus};
use mixfix::mixed::bootstrap_solve;
use mixfix::model::{ConstellationId, MeasurementEpoch, MeasurementKind, Modulus, SatId};
use mixfix::simulator::{
    grid_scan, synthesize_epoch, worst_epoch_search, FracPolicy, SimError, SimScenario, TruthRecord,
};
use mixfix::{mixed_solve, wrap_to_fraction, GateConfig, SatelliteObservation, SolverConfig, UnknownLayout};
use serde::Serialize;
use thiserror::Error;

const EXIT_NO_VISIBLE: u8 = 5;
const EXIT_COMPARE_MISMATCH: u8 = 6;
/// Mixed and conventional solutions must agree to this per component (m).
const COMPARE_TOL_M: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "mixfix",
    version,
    about = "Positioning from mixed full and fractional pseudoranges"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an epoch file; writes a solution document.
    Solve {
        epoch: PathBuf,
        #[command(flatten)]
        gate: GateFlags,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Wrap full pseudoranges to fractions of the modulus.
    Chop {
        epoch: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        modulus_ms: f64,
        /// Satellites left as full pseudoranges (comma separated).
        #[arg(long, value_delimiter = ',')]
        keep_full: Vec<String>,
        /// Leave every observation of this constellation full.
        #[arg(long, ignore_case = true)]
        keep_constellation: Option<ConstellationArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize an epoch file and a truth sidecar from a scenario.
    Simulate {
        scenario: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        truth_lat: f64,
        #[arg(long, allow_hyphen_values = true)]
        truth_lon: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        truth_height: f64,
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1.0)]
        modulus_ms: f64,
        /// Emit every pseudorange full instead of only the fast-navigation ones.
        #[arg(long)]
        all_full: bool,
        /// Epoch file path; the truth goes to `<stem>.truth.json` beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify a ground grid by fast-navigation visibility and GDOP gate.
    GridScan {
        scenario: PathBuf,
        #[arg(long, conflicts_with = "worst_epoch_search")]
        time: Option<f64>,
        /// Scan t0, t0+step, ... up to t1 and report the epoch with the fewest gate passes.
        #[arg(long, num_args = 3, value_names = ["T0", "T1", "STEP"])]
        worst_epoch_search: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1.0)]
        grid_step_deg: f64,
        #[arg(long, default_value_t = 1.0)]
        modulus_ms: f64,
        #[command(flatten)]
        gate: GateFlags,
        #[arg(long, value_enum, default_value_t = GridFormat::Csv)]
        out: GridFormat,
    },
    /// Solve an epoch both ways and compare against its truth sidecar.
    Compare {
        epoch: PathBuf,
        /// Defaults to `<stem>.truth.json` beside the epoch file.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        gate: GateFlags,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Print the nominal two-constellation scenario as a starting point.
    NominalScenario {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct GateFlags {
    /// Defaults to half the smallest modulus in use.
    #[arg(long)]
    alpha_m: Option<f64>,
    #[arg(long, default_value_t = mixfix::mixed::DEFAULT_B_AB_BOUND_M)]
    bab_bound_m: f64,
    #[arg(long, default_value_t = mixfix::mixed::DEFAULT_MAX_UERE_M)]
    max_uere_m: f64,
}

impl GateFlags {
    fn config(&self, modulus: Modulus) -> GateConfig {
        GateConfig {
            alpha_m: self.alpha_m.unwrap_or(modulus.half()),
            b_ab_bound_m: self.bab_bound_m,
            max_uere_m: self.max_uere_m,
        }
    }
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long, default_value_t = 1e-4)]
    tol_m: f64,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
}

impl SolverFlags {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            max_iterations: self.max_iter,
            update_norm_tol_m: self.tol_m,
            ..SolverConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstellationArg {
    A,
    B,
}

impl From<ConstellationArg> for ConstellationId {
    fn from(c: ConstellationArg) -> Self {
        match c {
            ConstellationArg::A => ConstellationId::A,
            ConstellationArg::B => ConstellationId::B,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GridFormat {
    Csv,
    Geojson,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// What a command produced: its exit code. Failures that still emit a
/// document return `Ok` with a nonzero code.
type Outcome = Result<u8, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Keep exit code 2 free for gate failures.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Solve { epoch, gate, solver } => cmd_solve(&epoch, &gate, &solver),
        Command::Chop {
            epoch,
            modulus_ms,
            keep_full,
            keep_constellation,
            out,
        } => cmd_chop(
            &epoch,
            modulus_ms,
            &keep_full,
            keep_constellation.map(Into::into),
            out.as_deref(),
        ),
        Command::Simulate {
            scenario,
            truth_lat,
            truth_lon,
            truth_height,
            time,
            seed,
            modulus_ms,
            all_full,
            out,
        } => cmd_simulate(
            &scenario,
            (truth_lat, truth_lon, truth_height),
            time,
            seed,
            modulus_ms,
            all_full,
            &out,
        ),
        Command::GridScan {
            scenario,
            time,
            worst_epoch_search,
            grid_step_deg,
            modulus_ms,
            gate,
            out,
        } => cmd_grid_scan(
            &scenario,
            time,
            worst_epoch_search,
            grid_step_deg,
            modulus_ms,
            &gate,
            out,
        ),
        Command::Compare {
            epoch,
            truth,
            gate,
            solver,
        } => cmd_compare(&epoch, truth.as_deref(), &gate, &solver),
        Command::NominalScenario { seed } => {
            emit(&to_json(&SimScenario::nominal(seed)));
            Ok(0)
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes a result document to stdout. A closed pipe (e.g. `| head`) is
/// not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn load_epoch(path: &Path) -> Result<MeasurementEpoch, CliError> {
    let format = |source| CliError::Format {
        path: path.to_owned(),
        source,
    };
    EpochFile::parse(&read(path)?)
        .and_then(|f| f.to_epoch())
        .map_err(format)
}

fn load_scenario(path: &Path) -> Result<SimScenario, CliError> {
    let scenario: SimScenario = serde_json::from_str(&read(path)?).map_err(|e| CliError::Format {
        path: path.to_owned(),
        source: e.into(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn modulus_from_ms(ms: f64) -> Result<Modulus, CliError> {
    Modulus::from_millis(ms).map_err(|e| CliError::Usage(format!("--modulus-ms: {e}")))
}

fn smallest_modulus(epoch: &MeasurementEpoch) -> Modulus {
    epoch
        .observations
        .iter()
        .filter_map(|o| o.kind.modulus())
        .min_by(|a, b| a.meters().total_cmp(&b.meters()))
        .unwrap_or_default()
}

fn cmd_solve(path: &Path, gate: &GateFlags, solver: &SolverFlags) -> Outcome {
    let epoch = load_epoch(path)?;
    let gate = gate.config(smallest_modulus(&epoch));
    let doc = match mixed_solve(&epoch, &gate, &solver.config()) {
        Ok(r) => SolutionFile::from_result(&r),
        Err(e) => {
            eprintln!("{e}");
            SolutionFile::from_error(&e)
        }
    };
    emit(&doc.to_json());
    Ok(doc.status.exit_code() as u8)
}

fn cmd_chop(
    path: &Path,
    modulus_ms: f64,
    keep_full: &[String],
    keep_constellation: Option<ConstellationId>,
    out: Option<&Path>,
) -> Outcome {
    let modulus = modulus_from_ms(modulus_ms)?;
    let mut epoch = load_epoch(path)?;
    let known: HashSet<&SatId> = epoch.observations.iter().map(|o| &o.sat_id).collect();
    let keep: HashSet<SatId> = keep_full.iter().map(|s| SatId::new(s.trim())).collect();
    if let Some(unknown) = keep.iter().find(|id| !known.contains(id)) {
        return Err(CliError::Usage(format!("--keep-full: unknown sat_id {unknown}")));
    }
    for o in &mut epoch.observations {
        if !o.kind.is_full() || keep.contains(&o.sat_id) || keep_constellation == Some(o.constellation) {
            continue;
        }
        let frac = wrap_to_fraction(o.pseudorange, modulus).map_err(|e| CliError::Usage(e.to_string()))?;
        o.pseudorange = frac;
        o.kind = MeasurementKind::Fractional(modulus);
    }
    let text = EpochFile::from_epoch(&epoch).to_json();
    match out {
        Some(p) => write(p, &text)?,
        None => emit(&text),
    }
    Ok(0)
}

fn truth_sidecar_path(epoch_path: &Path) -> PathBuf {
    let stem = epoch_path.file_stem().unwrap_or_default().to_string_lossy();
    epoch_path.with_file_name(format!("{stem}.truth.json"))
}

fn cmd_simulate(
    path: &Path,
    (lat, lon, height): (f64, f64, f64),
    time: f64,
    seed: Option<u64>,
    modulus_ms: f64,
    all_full: bool,
    out: &Path,
) -> Outcome {
    let mut scenario = load_scenario(path)?;
    if let Some(seed) = seed {
        scenario.rng_seed = seed;
    }
    let point = GeoPoint::new(lat, lon, height).map_err(|e| CliError::Usage(format!("truth position: {e}")))?;
    let policy = if all_full {
        FracPolicy::AllFull
    } else {
        FracPolicy::FastNavFull(modulus_from_ms(modulus_ms)?)
    };
    let syn = synthesize_epoch(&scenario, &geodetic_to_ecef(&point), time, &policy)?;
    if syn.no_visible_satellites {
        eprintln!("no satellite above the {} deg mask", scenario.elevation_mask_deg);
        return Ok(EXIT_NO_VISIBLE);
    }
    let sidecar = truth_sidecar_path(out);
    write(out, &EpochFile::from_epoch(&syn.epoch).to_json())?;
    write(&sidecar, &to_json(&syn.truth))?;
    eprintln!(
        "{} observations ({} full) -> {}, truth -> {}",
        syn.epoch.observations.len(),
        syn.epoch.fulls().count(),
        out.display(),
        sidecar.display()
    );
    Ok(0)
}

fn cmd_grid_scan(
    path: &Path,
    time: Option<f64>,
    search: Option<Vec<f64>>,
    grid_step_deg: f64,
    modulus_ms: f64,
    gate: &GateFlags,
    format: GridFormat,
) -> Outcome {
    let scenario = load_scenario(path)?;
    let gate = gate.config(modulus_from_ms(modulus_ms)?);
    let report = match search.as_deref() {
        Some(&[t0, t1, step]) => worst_epoch_search(&scenario, t0, t1, step, grid_step_deg, &gate)?.1,
        Some(_) => unreachable!("clap enforces three values"),
        None => grid_scan(&scenario, time.unwrap_or(0.0), grid_step_deg, &gate)?,
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let s = &report.summary;
    eprintln!(
        "t={} s: {} points, {} gate pass, {} visible gate fail, {} fewer than four visible; pass ratio {:.4} (area {:.4})",
        report.time_s,
        s.total_points,
        s.gate_pass,
        s.visible_gate_fail,
        s.fewer_than_four_visible,
        s.pass_ratio_points,
        s.pass_ratio_area
    );
    match format {
        GridFormat::Csv => emit(grid_to_csv(&report).trim_end()),
        GridFormat::Geojson => emit(&to_json(&grid_to_geojson(&report))),
    }
    Ok(0)
}

#[derive(Serialize)]
struct MethodReport {
    position_ecef_m: [f64; 3],
    /// Estimate minus truth, ECEF axes.
    position_error_m: [f64; 3],
    clock_bias_error_m: f64,
}

#[derive(Serialize)]
struct CompareReport {
    mixed: MethodReport,
    conventional: MethodReport,
    /// Mixed minus conventional, ECEF axes.
    difference_m: [f64; 3],
    max_component_difference_m: f64,
    tolerance_m: f64,
    passed: bool,
}

fn method_report(position: &nalgebra::Vector3<f64>, clock_m: f64, truth: &TruthRecord) -> MethodReport {
    let err = position - truth.position();
    MethodReport {
        position_ecef_m: [position.x, position.y, position.z],
        position_error_m: [err.x, err.y, err.z],
        clock_bias_error_m: clock_m - truth.clock_bias_m,
    }
}

fn cmd_compare(path: &Path, truth_path: Option<&Path>, gate: &GateFlags, solver: &SolverFlags) -> Outcome {
    let epoch = load_epoch(path)?;
    let truth_path = truth_path.map_or_else(|| truth_sidecar_path(path), Path::to_path_buf);
    if !truth_path.exists() {
        return Err(CliError::Usage(format!(
            "truth sidecar {} not found",
            truth_path.display()
        )));
    }
    let truth: TruthRecord = serde_json::from_str(&read(&truth_path)?).map_err(|e| CliError::Format {
        path: truth_path.clone(),
        source: e.into(),
    })?;
    if truth.satellites.len() != epoch.observations.len() {
        return Err(CliError::Usage(format!(
            "truth sidecar lists {} satellites, epoch has {}",
            truth.satellites.len(),
            epoch.observations.len()
        )));
    }

    // Conventional method: every pseudorange full, taken from the truth.
    let mut fulls = Vec::with_capacity(epoch.observations.len());
    for o in &epoch.observations {
        let full = truth
            .full_for(&o.sat_id)
            .ok_or_else(|| CliError::Usage(format!("truth sidecar has no entry for {}", o.sat_id)))?;
        fulls.push(SatelliteObservation {
            pseudorange: full,
            kind: MeasurementKind::Full,
            ..o.clone()
        });
    }
    let both = [ConstellationId::A, ConstellationId::B]
        .iter()
        .all(|c| fulls.iter().any(|o| o.constellation == *c));
    let layout = if both {
        UnknownLayout::DualConstellation
    } else {
        UnknownLayout::SingleConstellation
    };

    let solver = solver.config();
    let gate = gate.config(smallest_modulus(&epoch));
    let mixed = match mixed_solve(&epoch, &gate, &solver) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("mixed method: {e}");
            let doc = SolutionFile::from_error(&e);
            emit(&doc.to_json());
            return Ok(doc.status.exit_code() as u8);
        }
    };
    let conventional = match bootstrap_solve(&fulls, layout, &solver) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("conventional method: {e}");
            return Ok(SolveStatus::NotConverged.exit_code() as u8);
        }
    };

    let d = mixed.solution.position - conventional.position;
    let max = d.abs().max();
    let report = CompareReport {
        mixed: method_report(&mixed.solution.position, mixed.solution.clock_bias_m, &truth),
        conventional: method_report(&conventional.position, conventional.clock_bias_m, &truth),
        difference_m: [d.x, d.y, d.z],
        max_component_difference_m: max,
        tolerance_m: COMPARE_TOL_M,
        passed: max <= COMPARE_TOL_M,
    };
    emit(&to_json(&report));
    if report.passed {
        Ok(0)
    } else {
        eprintln!("mixed and conventional solutions differ by {max:e} m");
        Ok(EXIT_COMPARE_MISMATCH)
    }
}
