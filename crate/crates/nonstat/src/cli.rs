//! Command-line pipeline: calibrate → fit → build → simulate / corrmap /
//! whiten, plus the estimation accuracy study.
//!
//! Every command is a pure function of its configuration, input files and
//! seed: re-running produces byte-identical outputs at any worker count.
//! Values come from flags first, then the optional TOML config file, then
//! defaults; `NONSTAT_WORKERS` sets the default worker count.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure,
//! 4 diagnostic thresholds not met.

use crate::calibrate::{build_table, AnisoOptions, CalibrationTable};
use crate::diagnostics::{run_mc_study, whiten, whiteness_stats, McDesign, WhitenessReport};
use crate::emulator::{
    build_global_model, correlation_map, default_buffer, simulate_ensemble, translate_params,
    BuildOptions, NonstatSarModel, Normalization,
};
use crate::error::{Error, Result};
use crate::grid::{standardize, ParamFields};
use crate::io;
use crate::matern::Smoothness;
use crate::mle::{fit_all_windows, Constraint, FitOptions, WindowSpec};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_DIAGNOSTIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "nonstat", version, about = "Non-stationary Gaussian field emulation on lattices")]
pub struct Cli {
    /// TOML configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: NONSTAT_WORKERS, then all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build Matérn-to-SAR translation tables and error curves.
    Calibrate(CalibrateArgs),
    /// Moving-window likelihood estimation of local Matérn parameters.
    Fit(FitArgs),
    /// Assemble the global non-stationary model and write its provenance.
    Build(BuildArgs),
    /// Draw fields from a built model.
    Simulate(SimulateArgs),
    /// Correlation maps of a built model at chosen nodes.
    Corrmap(CorrmapArgs),
    /// Apply the whitening transform and report whiteness statistics.
    Whiten(WhitenArgs),
    /// Monte Carlo study of local range estimation accuracy.
    McStudy(McStudyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// Output directory for table and curve CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Smoothness, 1 or 2.
    #[arg(long)]
    pub nu: Option<u8>,
    /// Odd comparison lattice size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Range sweep: "start:end:step" or a comma list.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Anisotropy ratio ξ₁:ξ₂; enables the anisotropic sweep.
    #[arg(long)]
    pub aniso_ratio: Option<f64>,
    /// Rotation angles in degrees for the anisotropic sweep (comma list).
    #[arg(long)]
    pub theta_deg: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Input replicate ensemble (NSF1).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output parameter-field file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-window diagnostics CSV.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Odd window size.
    #[arg(long)]
    pub window: Option<usize>,
    /// Window stride (1 = every node).
    #[arg(long)]
    pub stride: Option<usize>,
    /// Smoothness, 1 or 2.
    #[arg(long)]
    pub nu: Option<u8>,
    /// Skip per-node standardization.
    #[arg(long)]
    pub no_standardize: bool,
    /// Drop the σ² = 1 − τ² constraint.
    #[arg(long)]
    pub no_constraint: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    /// Locally estimated parameters (NSF1 parameter file).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Calibration table CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Model output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Smoothness of the parameter file, 1 or 2.
    #[arg(long)]
    pub nu: Option<u8>,
    /// Buffer width in nodes; defaults to max(10, 2·max range).
    #[arg(long)]
    pub buffer: Option<usize>,
    /// Normalization variant: "post-scale" (exact) or "row-weight".
    #[arg(long)]
    pub normalization: Option<String>,
    /// Add nugget noise to simulations from this model.
    #[arg(long)]
    pub nugget_in_simulation: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Built model directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output ensemble file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of draws.
    #[arg(long)]
    pub n: Option<usize>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct CorrmapArgs {
    /// Built model directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory for correlation-map field files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Interior node "i,j"; repeatable.
    #[arg(long = "at")]
    pub at: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct WhitenArgs {
    /// Built model directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Input replicate ensemble to whiten.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output whitened ensemble.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Whiteness report file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Threshold on the pooled |lag-1 correlation|.
    #[arg(long)]
    pub max_lag_corr: Option<f64>,
    /// Lower bound on the 5% block-variance quantile.
    #[arg(long)]
    pub var_lo: Option<f64>,
    /// Upper bound on the 95% block-variance quantile.
    #[arg(long)]
    pub var_hi: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct McStudyArgs {
    /// Output directory for rows and summary CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Odd window sizes, comma list.
    #[arg(long)]
    pub windows: Option<String>,
    /// Range multipliers (range = multiplier × window), comma list.
    #[arg(long)]
    pub multipliers: Option<String>,
    /// Smoothness values, comma subset of "1,2".
    #[arg(long)]
    pub nus: Option<String>,
    /// Replicate counts, comma list.
    #[arg(long)]
    pub replicates: Option<String>,
    /// Repetitions per factorial cell.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// TOML configuration mirror of the command flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub workers: Option<usize>,
    pub calibrate: Option<CalibrateSection>,
    pub fit: Option<FitSection>,
    pub build: Option<BuildSection>,
    pub simulate: Option<SimulateSection>,
    pub corrmap: Option<CorrmapSection>,
    pub whiten: Option<WhitenSection>,
    pub mc_study: Option<McStudySection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    pub out: Option<PathBuf>,
    pub nu: Option<u8>,
    pub n: Option<usize>,
    pub sweep: Option<String>,
    pub aniso_ratio: Option<f64>,
    pub theta_deg: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub diagnostics: Option<PathBuf>,
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub nu: Option<u8>,
    pub no_standardize: Option<bool>,
    pub no_constraint: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildSection {
    pub params: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub nu: Option<u8>,
    pub buffer: Option<usize>,
    pub normalization: Option<String>,
    pub nugget_in_simulation: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrmapSection {
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub at: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhitenSection {
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub max_lag_corr: Option<f64>,
    pub var_lo: Option<f64>,
    pub var_hi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McStudySection {
    pub out: Option<PathBuf>,
    pub windows: Option<String>,
    pub multipliers: Option<String>,
    pub nus: Option<String>,
    pub replicates: Option<String>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            if !p.exists() {
                return Err(Error::MissingInput(p.to_path_buf()));
            }
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("config file {p:?}: {e}")))
        }
    }
}

fn parse_nu(nu: u8) -> Result<Smoothness> {
    Smoothness::from_order(nu as usize)
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    // "start:end:step" or "a,b,c"
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("{what}: expected start:end:step, got {text:?}")));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("{what}: bad number in {text:?}")))?;
        let (start, end, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || end < start {
            return Err(Error::Config(format!("{what}: empty range {text:?}")));
        }
        let mut out = Vec::new();
        let mut v = start;
        while v <= end + 1e-9 * step {
            out.push(v);
            v += step;
        }
        Ok(out)
    } else {
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("{what}: bad number {s:?}")))
            })
            .collect()
    }
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{what}: bad integer {s:?}")))
        })
        .collect()
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required setting: {what}")))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

// ---------------------------------------------------------------------
// model provenance

#[derive(Debug, Serialize, Deserialize)]
struct Provenance {
    model: ProvenanceModel,
    inputs: ProvenanceInputs,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProvenanceModel {
    order: usize,
    buffer: usize,
    normalization: String,
    nugget_in_simulation: bool,
    nu: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProvenanceInputs {
    params: ProvenanceFile,
    table: ProvenanceFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProvenanceFile {
    path: String,
    sha256: String,
}

fn normalization_name(n: Normalization) -> &'static str {
    match n {
        Normalization::PostScale => "post-scale",
        Normalization::RowWeight => "row-weight",
    }
}

fn parse_normalization(name: &str) -> Result<Normalization> {
    match name {
        "post-scale" => Ok(Normalization::PostScale),
        "row-weight" => Ok(Normalization::RowWeight),
        other => Err(Error::Config(format!(
            "normalization must be \"post-scale\" or \"row-weight\", got {other:?}"
        ))),
    }
}

/// Rebuild a model from its provenance directory, verifying input hashes.
pub fn load_model(dir: &Path) -> Result<(NonstatSarModel, ParamFields, CalibrationTable)> {
    let prov_path = dir.join("provenance.toml");
    if !prov_path.exists() {
        return Err(Error::MissingInput(prov_path));
    }
    let text = std::fs::read_to_string(&prov_path)?;
    let prov: Provenance =
        toml::from_str(&text).map_err(|e| Error::Config(format!("provenance: {e}")))?;

    let check = |f: &ProvenanceFile| -> Result<PathBuf> {
        let path = PathBuf::from(&f.path);
        if !path.exists() {
            return Err(Error::MissingInput(path));
        }
        let digest = file_sha256(&path)?;
        if digest != f.sha256 {
            return Err(Error::Config(format!(
                "input {path:?} changed since the model was built (sha256 {digest} vs recorded {})",
                f.sha256
            )));
        }
        Ok(path)
    };
    let params_path = check(&prov.inputs.params)?;
    let table_path = check(&prov.inputs.table)?;

    let nu = match prov.model.nu {
        v if v == 1.0 => Smoothness::One,
        v if v == 2.0 => Smoothness::Two,
        v => return Err(Error::Config(format!("provenance: unsupported smoothness {v}"))),
    };
    let params = io::read_param_fields(&params_path, nu)?;
    let table = CalibrationTable::read_csv(&table_path)?;
    let translated = translate_params(&params, &table)?;
    let opts = BuildOptions {
        order: prov.model.order,
        buffer: prov.model.buffer,
        normalization: parse_normalization(&prov.model.normalization)?,
        nugget_in_simulation: prov.model.nugget_in_simulation,
    };
    let model = build_global_model(&translated, &opts)?;
    Ok((model, params, table))
}

// ---------------------------------------------------------------------
// commands

pub fn cmd_calibrate(args: &CalibrateArgs, section: &CalibrateSection) -> Result<()> {
    let out_dir = require(args.out.clone().or(section.out.clone()), "calibrate.out")?;
    let nu = parse_nu(args.nu.or(section.nu).unwrap_or(1))?;
    let n = args.n.or(section.n).unwrap_or(51);
    let sweep_text =
        args.sweep.clone().or(section.sweep.clone()).unwrap_or_else(|| "1:20:1".to_string());
    let sweep = parse_f64_list(&sweep_text, "calibrate.sweep")?;
    let ratio = args.aniso_ratio.or(section.aniso_ratio);
    std::fs::create_dir_all(&out_dir)?;

    // main translation table; the anisotropic section uses angle 0 (the
    // angle effect is small) and serves the emulator's eigenvalue map
    let aniso = ratio.map(|ratio| AnisoOptions { ratio, theta: 0.0 });
    let table = build_table(&sweep, nu, n, aniso)?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    let table_path = out_dir.join(format!("table_nu{}.csv", nu.value()));
    table.write_csv(&table_path)?;
    println!(
        "wrote {} ({} isotropic points{})",
        table_path.display(),
        table.iso_points.len(),
        if table.aniso_points.is_empty() {
            String::new()
        } else {
            format!(", {} anisotropic points", table.aniso_points.len())
        }
    );

    // per-angle files reproduce the rotation sweep experiment
    if let (Some(ratio), Some(theta_text)) =
        (ratio, args.theta_deg.clone().or(section.theta_deg.clone()))
    {
        let angles = parse_f64_list(&theta_text, "calibrate.theta_deg")?;
        for deg in angles {
            let theta = deg.to_radians();
            let angle_table = build_table(&sweep, nu, n, Some(AnisoOptions { ratio, theta }))?;
            let path = out_dir.join(format!("aniso_nu{}_theta{deg}.csv", nu.value()));
            angle_table.write_csv(&path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

pub fn cmd_fit(args: &FitArgs, section: &FitSection, workers: usize) -> Result<()> {
    let input = require(args.input.clone().or(section.input.clone()), "fit.input")?;
    let out = require(args.out.clone().or(section.out.clone()), "fit.out")?;
    let window = args.window.or(section.window).unwrap_or(9);
    let stride = args.stride.or(section.stride).unwrap_or(1);
    let nu = parse_nu(args.nu.or(section.nu).unwrap_or(1))?;
    let no_standardize = args.no_standardize || section.no_standardize.unwrap_or(false);
    let no_constraint = args.no_constraint || section.no_constraint.unwrap_or(false);

    let spec = WindowSpec::new(window, stride)?;
    let raw = io::read_ensemble(&input)?;
    let ensemble = if raw.len() == 1 {
        eprintln!(
            "warning: single replicate; skipping standardization, nugget/variance separation is weak"
        );
        raw
    } else if no_standardize {
        raw
    } else {
        let (standardized, _, _) = standardize(&raw)?;
        standardized
    };

    let mut options = FitOptions::standardized(window, nu);
    if no_constraint {
        options.constraint = Constraint::None;
    }
    let result = fit_all_windows(&ensemble, &spec, &options, workers)?;
    let fraction = result.fields.converged_fraction();
    if fraction < 0.8 {
        eprintln!("warning: only {:.1}% of windows converged", fraction * 100.0);
    }
    io::write_param_fields(&result.fields, &out)?;
    println!(
        "wrote {} ({} window fits, {:.1}% converged)",
        out.display(),
        result.diagnostics.len(),
        fraction * 100.0
    );

    if let Some(diag_path) = args.diagnostics.clone().or(section.diagnostics.clone()) {
        let grid = &result.fields.grid;
        let mut f = std::io::BufWriter::new(std::fs::File::create(&diag_path)?);
        writeln!(f, "node_index,i,j,negloglik,iterations,converged")?;
        for d in &result.diagnostics {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                grid.idx(d.i, d.j),
                d.i,
                d.j,
                d.negloglik,
                d.iterations,
                d.converged
            )?;
        }
        println!("wrote {}", diag_path.display());
    }
    Ok(())
}

pub fn cmd_build(args: &BuildArgs, section: &BuildSection) -> Result<()> {
    let params_path = require(args.params.clone().or(section.params.clone()), "build.params")?;
    let table_path = require(args.table.clone().or(section.table.clone()), "build.table")?;
    let out_dir = require(args.out.clone().or(section.out.clone()), "build.out")?;
    let nu = parse_nu(args.nu.or(section.nu).unwrap_or(1))?;
    let normalization = parse_normalization(
        &args
            .normalization
            .clone()
            .or(section.normalization.clone())
            .unwrap_or_else(|| "post-scale".to_string()),
    )?;
    let nugget_in_simulation =
        args.nugget_in_simulation || section.nugget_in_simulation.unwrap_or(false);

    let params = io::read_param_fields(&params_path, nu)?;
    let table = CalibrationTable::read_csv(&table_path)?;
    if table.nu != nu {
        return Err(Error::Config(format!(
            "table smoothness {} does not match --nu {}",
            table.nu.value(),
            nu.value()
        )));
    }
    let order = nu.sar_order().expect("validated smoothness");
    let buffer = args.buffer.or(section.buffer).unwrap_or_else(|| default_buffer(&params));

    let translated = translate_params(&params, &table)?;
    let clamped = translated.clamped.iter().filter(|&&c| c).count();
    if clamped > 0 {
        eprintln!(
            "warning: {clamped} of {} nodes fell outside the calibrated range and were clamped",
            translated.clamped.len()
        );
    }
    let opts = BuildOptions { order, buffer, normalization, nugget_in_simulation };
    let model = build_global_model(&translated, &opts)?;

    std::fs::create_dir_all(&out_dir)?;
    let prov = Provenance {
        model: ProvenanceModel {
            order,
            buffer,
            normalization: normalization_name(normalization).to_string(),
            nugget_in_simulation,
            nu: nu.value(),
        },
        inputs: ProvenanceInputs {
            params: ProvenanceFile {
                path: params_path.to_string_lossy().into_owned(),
                sha256: file_sha256(&params_path)?,
            },
            table: ProvenanceFile {
                path: table_path.to_string_lossy().into_owned(),
                sha256: file_sha256(&table_path)?,
            },
        },
    };
    let prov_text =
        toml::to_string(&prov).map_err(|e| Error::Config(format!("provenance encoding: {e}")))?;
    std::fs::write(out_dir.join("provenance.toml"), prov_text)?;
    println!(
        "built model: {} buffered nodes ({}x{}, buffer {}), {} nonzeros in B",
        model.operator().n_rows(),
        model.grid().buffered_nx(),
        model.grid().buffered_ny(),
        buffer,
        model.operator().nnz()
    );
    println!("wrote {}", out_dir.join("provenance.toml").display());
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs, section: &SimulateSection) -> Result<()> {
    let model_dir = require(args.model.clone().or(section.model.clone()), "simulate.model")?;
    let out = require(args.out.clone().or(section.out.clone()), "simulate.out")?;
    let n = args.n.or(section.n).unwrap_or(4);
    let seed = args.seed.or(section.seed).unwrap_or(0);
    let (model, _, _) = load_model(&model_dir)?;
    let ensemble = simulate_ensemble(&model, n, seed)?;
    io::write_ensemble(&ensemble, &out)?;
    println!("wrote {} ({} draws, seed {seed})", out.display(), n);
    Ok(())
}

pub fn cmd_corrmap(args: &CorrmapArgs, section: &CorrmapSection) -> Result<()> {
    let model_dir = require(args.model.clone().or(section.model.clone()), "corrmap.model")?;
    let out_dir = require(args.out.clone().or(section.out.clone()), "corrmap.out")?;
    let at = if args.at.is_empty() {
        section.at.clone().unwrap_or_default()
    } else {
        args.at.clone()
    };
    if at.is_empty() {
        return Err(Error::Config("corrmap needs at least one --at i,j location".into()));
    }
    let (model, _, _) = load_model(&model_dir)?;
    std::fs::create_dir_all(&out_dir)?;
    for loc in &at {
        let parts: Vec<&str> = loc.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!("--at expects \"i,j\", got {loc:?}")));
        }
        let i: usize = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("--at: bad row index {:?}", parts[0])))?;
        let j: usize = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("--at: bad column index {:?}", parts[1])))?;
        let map = correlation_map(&model, (i, j))?;
        let path = out_dir.join(format!("corrmap_{i}_{j}.nsf"));
        io::write_field(&map, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Outcome of the whiten command: thresholds met or not (exit 4).
pub fn cmd_whiten(args: &WhitenArgs, section: &WhitenSection) -> Result<bool> {
    let model_dir = require(args.model.clone().or(section.model.clone()), "whiten.model")?;
    let input = require(args.input.clone().or(section.input.clone()), "whiten.input")?;
    let out = require(args.out.clone().or(section.out.clone()), "whiten.out")?;
    let max_lag = args.max_lag_corr.or(section.max_lag_corr).unwrap_or(0.1);
    let var_lo = args.var_lo.or(section.var_lo).unwrap_or(0.7);
    let var_hi = args.var_hi.or(section.var_hi).unwrap_or(1.3);

    let (model, _, _) = load_model(&model_dir)?;
    let ensemble = io::read_ensemble(&input)?;
    let whitened = ensemble
        .replicates()
        .iter()
        .map(|f| whiten(&model, f))
        .collect::<Result<Vec<_>>>()?;
    let whitened =
        crate::grid::FieldEnsemble::new(model.grid().with_buffer(0), whitened)?;
    io::write_ensemble(&whitened, &out)?;
    println!("wrote {}", out.display());

    let report = whiteness_stats(&whitened, model.order())?;
    let passed = report.summary.max_abs_lag_corr < max_lag
        && report.summary.var_quantiles[0] >= var_lo
        && report.summary.var_quantiles[4] <= var_hi;
    if let Some(report_path) = args.report.clone().or(section.report.clone()) {
        write_whiteness_report(&report, model.order(), passed, &report_path)?;
        println!("wrote {}", report_path.display());
    }
    println!(
        "whiteness: max |lag corr| = {:.4}, block-variance 5-95% = [{:.3}, {:.3}] -> {}",
        report.summary.max_abs_lag_corr,
        report.summary.var_quantiles[0],
        report.summary.var_quantiles[4],
        if passed { "ok" } else { "thresholds not met" }
    );
    Ok(passed)
}

fn write_whiteness_report(
    report: &WhitenessReport,
    ring: usize,
    passed: bool,
    path: &Path,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "lag_corr_h = {}", report.lag_corr_h)?;
    writeln!(f, "lag_corr_v = {}", report.lag_corr_v)?;
    writeln!(f, "max_abs_lag_corr = {}", report.summary.max_abs_lag_corr)?;
    for (q, v) in [5, 25, 50, 75, 95].iter().zip(report.summary.var_quantiles) {
        writeln!(f, "var_q{q:02} = {v}")?;
    }
    writeln!(f, "ring_excluded = {ring}")?;
    writeln!(f, "pooled_single_replicate = {}", report.pooled_p1)?;
    writeln!(f, "thresholds_met = {passed}")?;
    Ok(())
}

pub fn cmd_mc_study(args: &McStudyArgs, section: &McStudySection, workers: usize) -> Result<()> {
    let out_dir = require(args.out.clone().or(section.out.clone()), "mc_study.out")?;
    let defaults = McDesign::default();
    let windows = match args.windows.clone().or(section.windows.clone()) {
        Some(t) => parse_usize_list(&t, "mc_study.windows")?,
        None => defaults.window_sizes.clone(),
    };
    let multipliers = match args.multipliers.clone().or(section.multipliers.clone()) {
        Some(t) => parse_f64_list(&t, "mc_study.multipliers")?,
        None => defaults.range_multipliers.clone(),
    };
    let nus = match args.nus.clone().or(section.nus.clone()) {
        Some(t) => parse_usize_list(&t, "mc_study.nus")?
            .into_iter()
            .map(Smoothness::from_order)
            .collect::<Result<Vec<_>>>()?,
        None => defaults.nus.clone(),
    };
    let replicates = match args.replicates.clone().or(section.replicates.clone()) {
        Some(t) => parse_usize_list(&t, "mc_study.replicates")?,
        None => defaults.replicate_counts.clone(),
    };
    let design = McDesign {
        window_sizes: windows,
        range_multipliers: multipliers,
        nus,
        replicate_counts: replicates,
        repetitions: args.repetitions.or(section.repetitions).unwrap_or(defaults.repetitions),
        seed: args.seed.or(section.seed).unwrap_or(defaults.seed),
    };
    design.validate()?;

    // extrapolate the runtime from one probe repetition and warn on
    // paper-scale designs
    let n_tasks = design.cell_count() / design.replicate_counts.len() * design.repetitions;
    let probe = McDesign {
        window_sizes: vec![*design.window_sizes.iter().max().unwrap()],
        range_multipliers: vec![design.range_multipliers[0]],
        nus: vec![design.nus[0]],
        replicate_counts: design.replicate_counts.clone(),
        repetitions: 1,
        seed: design.seed,
    };
    let t0 = std::time::Instant::now();
    run_mc_study(&probe, workers)?;
    let estimate = t0.elapsed().as_secs_f64() * n_tasks as f64;
    if estimate > 600.0 {
        eprintln!(
            "warning: estimated runtime ~{:.0} minutes for {} tasks; consider shrinking the design",
            estimate / 60.0,
            n_tasks
        );
    }

    let results = run_mc_study(&design, workers)?;
    std::fs::create_dir_all(&out_dir)?;
    let rows = out_dir.join("mc_rows.csv");
    let summary = out_dir.join("mc_summary.csv");
    results.write_rows_csv(&rows)?;
    results.write_summary_csv(&summary)?;
    println!("wrote {} ({} rows)", rows.display(), results.rows.len());
    println!("wrote {} ({} cells)", summary.display(), results.cells.len());
    Ok(())
}

// ---------------------------------------------------------------------

fn resolve_workers(cli_workers: Option<usize>, config: &RunConfig) -> usize {
    cli_workers
        .or(config.workers)
        .or_else(|| std::env::var("NONSTAT_WORKERS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0)
}

fn dispatch(cli: &Cli, config: &RunConfig, workers: usize) -> Result<bool> {
    match &cli.command {
        Command::Calibrate(args) => {
            cmd_calibrate(args, config.calibrate.as_ref().unwrap_or(&Default::default()))?;
            Ok(true)
        }
        Command::Fit(args) => {
            cmd_fit(args, config.fit.as_ref().unwrap_or(&Default::default()), workers)?;
            Ok(true)
        }
        Command::Build(args) => {
            cmd_build(args, config.build.as_ref().unwrap_or(&Default::default()))?;
            Ok(true)
        }
        Command::Simulate(args) => {
            cmd_simulate(args, config.simulate.as_ref().unwrap_or(&Default::default()))?;
            Ok(true)
        }
        Command::Corrmap(args) => {
            cmd_corrmap(args, config.corrmap.as_ref().unwrap_or(&Default::default()))?;
            Ok(true)
        }
        Command::Whiten(args) => {
            cmd_whiten(args, config.whiten.as_ref().unwrap_or(&Default::default()))
        }
        Command::McStudy(args) => {
            cmd_mc_study(args, config.mc_study.as_ref().unwrap_or(&Default::default()), workers)?;
            Ok(true)
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Factorization { .. } | Error::Calibration(_) => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}

/// Run a parsed command line to completion and return the process exit
/// code.
pub fn run(cli: &Cli) -> i32 {
    let config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    let workers = resolve_workers(cli.workers, &config);
    let outcome = if workers > 0 {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(|| dispatch(cli, &config, 0)),
            Err(e) => {
                eprintln!("error: worker pool: {e}");
                return EXIT_VALIDATION;
            }
        }
    } else {
        dispatch(cli, &config, 0)
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_DIAGNOSTIC,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_f64_list("1:3:1", "x").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_f64_list("2.5,3", "x").unwrap(), vec![2.5, 3.0]);
        assert!(parse_f64_list("3:1:1", "x").is_err());
        assert!(parse_f64_list("a,b", "x").is_err());
        assert_eq!(parse_usize_list("9,15", "x").unwrap(), vec![9, 15]);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = toml::from_str::<RunConfig>("[calibrate]\nbogus = 1\n");
        assert!(err.is_err());
        let ok = toml::from_str::<RunConfig>("workers = 2\n[calibrate]\nnu = 1\n").unwrap();
        assert_eq!(ok.workers, Some(2));
        assert_eq!(ok.calibrate.unwrap().nu, Some(1));
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code_for(&Error::Config("x".into())), EXIT_VALIDATION);
        assert_eq!(exit_code_for(&Error::MissingInput("p".into())), EXIT_VALIDATION);
        assert_eq!(
            exit_code_for(&Error::Factorization { pivot: 3, value: -1.0 }),
            EXIT_NUMERICAL
        );
        assert_eq!(exit_code_for(&Error::Calibration("x".into())), EXIT_NUMERICAL);
    }
}
