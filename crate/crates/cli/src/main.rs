use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use telelink::config::LinkConfig;
use telelink::experiment::{
    check_hom, export_figure_data, run_hom, run_scenario, write_tag_dumps, CheckOutcome,
    TeleportReport, REPORT_SCHEMA,
};
use telelink::oracle::{run_oracle_case, ORACLE_CASES};
use telelink::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_BANDS: u8 = 3;

/// Simulate a fiber teleportation link and reconstruct the received states.
#[derive(Parser)]
#[command(name = "telelink", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario file, or the name of a bundled scenario.
    config: String,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Ten times shorter acquisitions with proportionally widened bands.
    #[arg(long)]
    fast: bool,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    /// Exit with status 3 when a result falls outside the configured bands.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Full teleportation run: tomography of every input plus the HOM scan.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Also write the coincidence-relevant tags of every acquisition.
        #[arg(long)]
        tag_dump: bool,
    },
    /// HOM visibility scan only.
    Hom {
        #[command(flatten)]
        args: RunArgs,
    },
    /// CSV figure tables from one or more report files.
    Export {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check a scenario file and print it with defaults filled in.
    Validate { config: String },
    /// Cross-check a fast implementation against its brute-force oracle.
    Oracle {
        /// One of: teleport, coincidence, table2, classical-bound, all.
        case: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load_config(spec: &str) -> Result<LinkConfig, Error> {
    let path = Path::new(spec);
    if path.is_file() {
        let source = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        LinkConfig::from_toml(&source).map_err(|e| e.context(path.display().to_string()))
    } else {
        LinkConfig::bundled(spec)
    }
}

fn prepare(args: &RunArgs) -> Result<LinkConfig, Error> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.fast {
        cfg = cfg.fast();
    }
    Ok(cfg)
}

fn run_dir(out_dir: &Path, cfg: &LinkConfig) -> Result<PathBuf, Error> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let dir = out_dir.join(format!("{}_seed{}_{stamp}", cfg.name, cfg.seed));
    std::fs::create_dir_all(&dir).map_err(|e| Error::from(e).context(dir.display().to_string()))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn print_check(check: &CheckOutcome) {
    let f = &check.average_fidelity;
    if !f.value.is_nan() {
        println!(
            "check fidelity {:.4} in [{:.3}, {:.3}]: {}",
            f.value,
            f.band[0],
            f.band[1],
            verdict(f.passed)
        );
    }
    if let Some(v) = &check.visibility {
        if !v.value.is_nan() {
            println!(
                "check visibility {:.4} in [{:.3}, {:.3}]: {}",
                v.value,
                v.band[0],
                v.band[1],
                verdict(v.passed)
            );
        }
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_run(args: &RunArgs, tag_dump: bool) -> Result<u8, Error> {
    let cfg = prepare(args)?;
    let (report, tags) = run_scenario(&cfg, tag_dump)?;
    let dir = run_dir(&args.out_dir, &cfg)?;
    write(&dir.join("report.json"), &report.to_json()?)?;
    write(&dir.join("report.schema.json"), REPORT_SCHEMA)?;
    if tag_dump {
        write_tag_dumps(&dir.join("tags"), &report, &tags)?;
    }

    println!("scenario {} seed {}", report.scenario, report.seed);
    for s in &report.evaluation.states {
        println!(
            "  {} -> {}: F = {:.4} ± {:.4}",
            s.input,
            s.target,
            s.tomography.fidelity.unwrap_or(f64::NAN),
            s.tomography.fidelity_sigma.unwrap_or(f64::NAN)
        );
    }
    println!(
        "  average F = {:.4} ± {:.4}",
        report.evaluation.average_fidelity, report.evaluation.average_sigma
    );
    println!(
        "  HOM V = {:.4} ± {:.4}",
        report.hom.visibility, report.hom.visibility_sigma
    );
    println!("  report: {}", dir.join("report.json").display());
    Ok(finish_check(args.check, report.check.as_ref()))
}

fn finish_check(enabled: bool, check: Option<&CheckOutcome>) -> u8 {
    if !enabled {
        return 0;
    }
    match check {
        Some(c) => {
            print_check(c);
            if c.passed {
                0
            } else {
                EXIT_BANDS
            }
        }
        None => {
            eprintln!("warning: scenario has no [check] bands");
            0
        }
    }
}

fn cmd_hom(args: &RunArgs) -> Result<u8, Error> {
    let cfg = prepare(args)?;
    cfg.validate()?;
    let hom = run_hom(&cfg)?;
    let dir = run_dir(&args.out_dir, &cfg)?;
    write(&dir.join("hom.json"), &serde_json::to_string_pretty(&hom)?)?;
    let mut csv = String::from("delay_ps,expected_rate,counts\n");
    for p in &hom.scan.points {
        let counts = p.counts.map(|c| c.to_string()).unwrap_or_default();
        csv.push_str(&format!("{},{:.6},{}\n", p.delay_ps, p.expected, counts));
    }
    write(&dir.join("hom.csv"), &csv)?;
    println!(
        "scenario {} seed {}: V = {:.4} ± {:.4} (expected {:.4})",
        cfg.name, cfg.seed, hom.visibility, hom.visibility_sigma, hom.expected_visibility
    );
    println!("  output: {}", dir.display());
    Ok(finish_check(args.check, check_hom(&cfg, &hom).as_ref()))
}

fn cmd_export(reports: &[PathBuf], out_dir: &Path) -> Result<u8, Error> {
    let mut loaded = Vec::new();
    for path in reports {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(path.display().to_string()))?;
        loaded.push(
            TeleportReport::from_json(&s).map_err(|e| e.context(path.display().to_string()))?,
        );
    }
    let data = export_figure_data(&loaded)?;
    std::fs::create_dir_all(out_dir)?;
    let f = out_dir.join("fidelity.csv");
    let h = out_dir.join("hom.csv");
    write(&f, &data.fidelity_csv)?;
    write(&h, &data.hom_csv)?;
    println!("{}\n{}", f.display(), h.display());
    Ok(0)
}

fn cmd_validate(spec: &str) -> Result<u8, Error> {
    let cfg = load_config(spec)?;
    print!("{}", cfg.to_toml()?);
    Ok(0)
}

fn cmd_oracle(case: &str, seed: u64) -> Result<u8, Error> {
    let cases: Vec<&str> = if case == "all" {
        ORACLE_CASES.to_vec()
    } else if ORACLE_CASES.contains(&case) {
        vec![case]
    } else {
        return Err(Error::Config(format!(
            "unknown oracle case `{case}` (available: {}, all)",
            ORACLE_CASES.join(", ")
        )));
    };
    let mut failed = false;
    for c in cases {
        let r = run_oracle_case(c, seed)?;
        println!(
            "{} {}: {} instances, max error {:.3e} ({})",
            verdict(r.passed),
            r.case,
            r.instances,
            r.max_error,
            r.detail
        );
        failed |= !r.passed;
    }
    Ok(if failed { EXIT_RUNTIME } else { 0 })
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run { args, tag_dump } => cmd_run(args, *tag_dump),
        Command::Hom { args } => cmd_hom(args),
        Command::Export { reports, out_dir } => cmd_export(reports, out_dir),
        Command::Validate { config } => cmd_validate(config),
        Command::Oracle { case, seed } => cmd_oracle(case, *seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
