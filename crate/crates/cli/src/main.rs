//! Batch command-line surface: geometry/identity verification, weight
//! construction, evolution with checkpoints, decay scans and summary
//! reporting.
//!
//! Exit codes: 0 pass, 1 check failure, 2 infeasible configuration,
//! 3 I/O error.

mod config;

use blackwell_core::experiments::{
    run_conformal_boundedness, run_conservation, run_horizon_flux_decay, run_identity_suite,
    run_morawetz_ratio, run_pointwise_decay, write_samples_csv, ExperimentError, FAMILY_NAMES,
};
use blackwell_core::geometry::BlackHoleParams;
use blackwell_core::maxwell::save_checkpoint;
use blackwell_core::multipliers::{build_h_profile, MultiplierError};
use blackwell_core::verification::{geometry_suite, Fault};
use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "blackwell",
    about = "Maxwell-on-Schwarzschild diagnostics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// run configuration file (flat key = value with dotted sections)
    #[arg(long)]
    config: Option<PathBuf>,
    /// emit machine-readable JSON instead of the text table
    #[arg(long)]
    json: bool,
    /// parallel experiment jobs
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// divide the radial resolution by this factor
    #[arg(long, default_value_t = 1, value_parser = parse_resolution_scale)]
    resolution_scale: u32,
    /// permit the dimensionally literal h-profile constraints away from m = 1
    #[arg(long)]
    allow_nonunit_mass: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed-form geometry property suite
    VerifyGeometry(CommonArgs),
    /// Evaluate the multiplier identities and estimate ratios on an evolved run
    VerifyIdentities(CommonArgs),
    /// Construct and certify the near-horizon weight profile
    FindH(CommonArgs),
    /// Evolve the configured data, writing checkpoints and functional series
    Evolve(CommonArgs),
    /// Run the decay experiments and fit the exponents
    ScanDecay(CommonArgs),
    /// Merge JSON summaries from an output directory into one table
    Report(CommonArgs),
}

fn parse_resolution_scale(s: &str) -> Result<u32, String> {
    match s {
        "1" => Ok(1),
        "2" => Ok(2),
        "4" => Ok(4),
        other => Err(format!("resolution scale must be 1, 2 or 4, got {other}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::VerifyGeometry(a) => cmd_verify_geometry(a),
        Command::VerifyIdentities(a) => cmd_verify_identities(a),
        Command::FindH(a) => cmd_find_h(a),
        Command::Evolve(a) => cmd_evolve(a),
        Command::ScanDecay(a) => cmd_scan_decay(a),
        Command::Report(a) => cmd_report(a),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Infeasible(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Infeasible(_) => 2,
            CliError::Io(_) | CliError::Json(_) => 3,
            CliError::Experiment(ExperimentError::Io(_)) => 3,
            CliError::Experiment(ExperimentError::Multiplier(
                MultiplierError::InfeasibleR1 { .. }
                | MultiplierError::R1OutOfRange { .. }
                | MultiplierError::NonUnitMass(_),
            )) => 2,
            CliError::Experiment(_) => 1,
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Ok(RunConfig::parse(&text)?)
        }
        None => Ok(RunConfig::default()),
    }
}

fn config_hash(echo: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(echo.as_bytes());
    format!("{:x}", hasher.finalize())
}

fn write_summary(
    dir: &Path,
    experiment: &str,
    cfg: &RunConfig,
    results: serde_json::Value,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let echo = cfg.echo();
    let summary = serde_json::json!({
        "experiment": experiment,
        "config": echo,
        "config_sha256": config_hash(&echo),
        "results": results,
    });
    let path = dir.join(format!("{experiment}_summary.json"));
    std::fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn cmd_verify_geometry(args: &CommonArgs) -> Result<ExitCode, CliError> {
    let cfg = load_config(args)?;
    let p = BlackHoleParams::new(cfg.mass).map_err(|e| CliError::Infeasible(e.to_string()))?;
    // test-harness hook for the negative control
    let fault = match std::env::var("BLACKWELL_FAULT_INJECT").as_deref() {
        Ok("connection") => Some(Fault::PerturbConnection),
        _ => None,
    };
    let checks = geometry_suite(&p, fault);
    let all_pass = checks.iter().all(|c| c.pass);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&checks)?);
    } else {
        for c in &checks {
            println!(
                "{:<36} residual {:>12.3e}  threshold {:>8.1e}  {}",
                c.name,
                c.residual,
                c.threshold,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_find_h(args: &CommonArgs) -> Result<ExitCode, CliError> {
    let cfg = load_config(args)?;
    let exp = cfg.to_experiment(args.resolution_scale, args.allow_nonunit_mass);
    let ctx = exp.build()?;
    let profile = match build_h_profile(&ctx, cfg.r1, args.allow_nonunit_mass) {
        Ok(p) => p,
        Err(
            e @ (MultiplierError::InfeasibleR1 { .. }
            | MultiplierError::R1OutOfRange { .. }
            | MultiplierError::NonUnitMass(_)),
        ) => {
            eprintln!("infeasible: {e}");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(CliError::Experiment(e.into())),
    };
    let dir = PathBuf::from(&cfg.outputs_dir);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("h_profile.csv");
    {
        use std::io::Write;
        let mut f = std::fs::File::create(&path)?;
        writeln!(
            f,
            "rstar,r,h,h_prime,margin_mu_h_over_r,margin_h,margin_h_prime,margin_redshift,margin_envelope"
        )?;
        let mut cert_row = 0usize;
        for (i, rs) in profile.rstar.iter().enumerate() {
            let r = ctx.radial.r[i];
            let in_cert = r <= profile.r1;
            let margins: Vec<String> = if in_cert {
                let row: Vec<String> = (0..5)
                    .map(|j| profile.margins[j][cert_row].to_string())
                    .collect();
                cert_row += 1;
                row
            } else {
                vec![String::from(""); 5]
            };
            writeln!(
                f,
                "{},{},{},{},{}",
                rs,
                r,
                profile.h[i],
                profile.h_prime[i],
                margins.join(",")
            )?;
        }
    }
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "r1": profile.r1,
                "r1_star": profile.r1_star,
                "cutoff_star": profile.cutoff_star,
                "min_margins": profile.min_margins,
                "csv": path.display().to_string(),
            }))?
        );
    } else {
        println!(
            "certified h profile at r1 = {} -> {}",
            profile.r1,
            path.display()
        );
        println!("min margins: {:?}", profile.min_margins);
    }
    write_summary(
        &dir,
        "find_h",
        &cfg,
        serde_json::json!({
            "r1": profile.r1,
            "min_margins": profile.min_margins,
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_evolve(args: &CommonArgs) -> Result<ExitCode, CliError> {
    let cfg = load_config(args)?;
    let exp = cfg.to_experiment(args.resolution_scale, args.allow_nonunit_mass);
    let dir = PathBuf::from(&cfg.outputs_dir);
    std::fs::create_dir_all(&dir)?;
    let report = run_conservation(&exp)?;
    write_samples_csv(&dir.join("energy_T.csv"), "t,E_T", &report.series)?;
    // final checkpoint
    let ctx = exp.build()?;
    let state = exp.initial_state(&ctx)?;
    let final_state = blackwell_core::maxwell::evolve(state, exp.t_final, &[], &ctx, |_, _| {})
        .map_err(ExperimentError::from)?;
    let ck = std::fs::File::create(dir.join("checkpoint_final.bin"))?;
    save_checkpoint(&final_state, &ctx, std::io::BufWriter::new(ck))
        .map_err(ExperimentError::from)?;
    write_summary(
        &dir,
        "evolve",
        &cfg,
        serde_json::json!({
            "initial_energy": report.initial_energy,
            "max_relative_drift": report.max_relative_drift,
            "t_final": exp.t_final,
        }),
    )?;
    println!(
        "evolved to t = {}; energy drift {:.3e}",
        exp.t_final, report.max_relative_drift
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_scan_decay(args: &CommonArgs) -> Result<ExitCode, CliError> {
    let cfg = load_config(args)?;
    let exp = cfg.to_experiment(args.resolution_scale, args.allow_nonunit_mass);
    let dir = PathBuf::from(&cfg.outputs_dir);
    std::fs::create_dir_all(&dir)?;

    // the three experiments are independent; run them on up to `jobs` threads
    let exp_pw = exp.clone();
    let exp_hf = exp.clone();
    let exp_cf = exp.clone();
    let (pointwise, horizon, conformal) = if args.jobs > 1 {
        std::thread::scope(|scope| {
            let h1 = scope.spawn(move || run_pointwise_decay(&exp_pw));
            let h2 = scope.spawn(move || run_horizon_flux_decay(&exp_hf));
            let h3 = scope.spawn(move || run_conformal_boundedness(&exp_cf));
            (h1.join().unwrap(), h2.join().unwrap(), h3.join().unwrap())
        })
    } else {
        (
            run_pointwise_decay(&exp_pw),
            run_horizon_flux_decay(&exp_hf),
            run_conformal_boundedness(&exp_cf),
        )
    };
    let pointwise = pointwise?;
    let horizon = horizon?;
    let conformal = conformal?;

    // CSV series
    for st in &pointwise.stations {
        for (f, name) in FAMILY_NAMES.iter().enumerate() {
            let path = dir.join(format!("supnorm_r{}_{}.csv", st.r, name));
            write_samples_csv(&path, "v,sup", &st.series[f])?;
        }
    }
    {
        use std::io::Write;
        let mut f = std::fs::File::create(dir.join("horizon_flux.csv"))?;
        writeln!(f, "v,minus_F_H,truncation_tail")?;
        for (v, val, tail) in &horizon.series {
            writeln!(f, "{v},{val},{tail}")?;
        }
    }
    write_samples_csv(
        &dir.join("conformal_energy.csv"),
        "t,E_K",
        &conformal.ek_series,
    )?;
    write_samples_csv(
        &dir.join("local_energy.csv"),
        "t,E_T_local",
        &conformal.local_energy_series,
    )?;

    // exponents per family into the summary
    let mut families = serde_json::Map::new();
    for st in &pointwise.stations {
        let mut per = serde_json::Map::new();
        for (f, name) in FAMILY_NAMES.iter().enumerate() {
            if let Some(fit) = &st.fits[f] {
                per.insert(
                    name.to_string(),
                    serde_json::json!({
                        "exponent": fit.exponent,
                        "amplitude": fit.amplitude,
                        "residual": fit.residual,
                    }),
                );
            }
        }
        families.insert(format!("r_{}", st.r), serde_json::Value::Object(per));
    }
    let results = serde_json::json!({
        "pointwise": families,
        "horizon_flux_fit": horizon.fit,
        "conformal": {
            "trend": conformal.ek_trend,
            "bounded": conformal.ek_bounded,
            "local_decay": conformal.local_decay_fit,
        },
    });
    write_summary(&dir, "scan_decay", &cfg, results)?;
    println!("decay scan written to {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify_identities(args: &CommonArgs) -> Result<ExitCode, CliError> {
    let cfg = load_config(args)?;
    let exp = cfg.to_experiment(args.resolution_scale, args.allow_nonunit_mass);
    let rep = run_identity_suite(&exp)?;
    let morawetz = run_morawetz_ratio(&exp)?;
    let positivity_ok = rep.ih_min_pointwise >= -1e-10 * rep.ih_scale.max(1e-300);
    let residuals_ok = rep.closure_residuals.iter().all(|(_, r)| r.is_finite());
    let morawetz_ok = morawetz.stationary || morawetz.slabs.iter().all(|s| s.ratio.is_finite());
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rep)?);
    } else {
        println!(
            "{:<26} {:>5} {:>14} {:>14} {:>10}",
            "estimate", "slab", "lhs", "rhs", "ratio"
        );
        for e in &rep.estimates {
            println!(
                "{:<26} {:>5} {:>14.5e} {:>14.5e} {:>10.4}",
                e.name, e.slab, e.lhs, e.rhs, e.ratio
            );
        }
        println!(
            "-I_H pointwise minimum {:.3e} (scale {:.3e}) {}",
            rep.ih_min_pointwise,
            rep.ih_scale,
            if positivity_ok { "pass" } else { "FAIL" }
        );
        for (name, r) in &rep.closure_residuals {
            println!("closure {name}: residual {r:.3e}");
        }
        if morawetz.stationary {
            println!("morawetz ratio: stationary data, flagged (not divided)");
        } else {
            println!("morawetz ratio: max over slabs {:.4}", morawetz.max_ratio);
        }
    }
    let dir = PathBuf::from(&cfg.outputs_dir);
    write_summary(&dir, "verify_identities", &cfg, serde_json::to_value(&rep)?)?;
    write_summary(
        &dir,
        "morawetz_ratio",
        &cfg,
        serde_json::to_value(&morawetz)?,
    )?;
    Ok(if positivity_ok && residuals_ok && morawetz_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_report(args: &CommonArgs) -> Result<ExitCode, CliError> {
    let cfg = load_config(args)?;
    let dir = PathBuf::from(&cfg.outputs_dir);
    let mut rows: Vec<(String, String, String)> = Vec::new();
    if let Ok(entries) = std::fs::read_dir(&dir) {
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) {
                let name = v["experiment"].as_str().unwrap_or("?").to_string();
                let hash = v["config_sha256"].as_str().unwrap_or("?").to_string();
                let results = serde_json::to_string(&v["results"])?;
                rows.push((name, hash, results));
            }
        }
    }
    if rows.is_empty() {
        eprintln!("no experiments found in {}", dir.display());
        return Ok(ExitCode::from(1));
    }
    if args.json {
        let merged: serde_json::Map<String, serde_json::Value> = rows
            .iter()
            .map(|(name, hash, results)| {
                (
                    name.clone(),
                    serde_json::json!({
                        "config_sha256": hash,
                        "results": serde_json::from_str::<serde_json::Value>(results).unwrap(),
                    }),
                )
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&merged)?);
    } else {
        for (name, hash, results) in &rows {
            println!(
                "{name} [{short}] {results}",
                short = &hash[..12.min(hash.len())]
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
