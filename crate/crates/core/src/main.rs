//! Command-line front end: run experiment configs, validate them, and
//! re-verify result bundles.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 1 for runtime
//! failures (including failed bundle verification).

use clap::{Parser, Subcommand};
use distill_lab::harness::{self, ExperimentConfig, Severity};
use distill_lab::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "distill-lab",
    version,
    about = "Curriculum-distillation laboratory for sparse parities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment config and write a content-hashed result bundle.
    Run {
        /// TOML experiment description.
        #[arg(long)]
        config: PathBuf,
        /// Directory that will hold the `<run_id>/` bundle.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the enumeration kernels; results are
        /// byte-identical for any value.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and check a config, printing findings without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-verify the content hashes listed in a bundle's manifest.
    Report {
        /// Bundle directory (the one containing manifest.json).
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_toml_str(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Argument(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out, seed, threads } => {
            if let Some(t) = threads {
                if t == 0 {
                    return Err(Error::Config("--threads must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build_global()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            }
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            for finding in harness::validate(&cfg) {
                eprintln!("{finding}");
            }
            // run() re-validates and refuses configs with error findings
            let bundle = harness::run(&cfg, &out)?;
            println!("bundle: {}", bundle.dir.display());
            for f in &bundle.manifest.files {
                println!("  {}  {} bytes  sha256:{}", f.name, f.bytes, &f.sha256[..12]);
            }
            print_summary(&bundle.summary);
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let findings = harness::validate(&cfg);
            for finding in &findings {
                println!("{finding}");
            }
            let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
            if errors > 0 {
                Err(Error::Config(format!("{errors} error finding(s)")))
            } else {
                println!("config ok ({} warning(s))", findings.len());
                Ok(())
            }
        }
        Command::Report { bundle } => {
            let (manifest, checks) = harness::verify_bundle(&bundle)?;
            println!(
                "run {} (kind {}, seed {}, {} v{})",
                manifest.run_id, manifest.kind, manifest.seed, manifest.tool, manifest.version
            );
            let mut bad = 0usize;
            for (name, ok) in &checks {
                println!("  {:8} {name}", if *ok { "ok" } else { "MISMATCH" });
                if !*ok {
                    bad += 1;
                }
            }
            if bad > 0 {
                Err(Error::Parse(format!("{bad} artifact(s) failed hash verification")))
            } else {
                println!("all {} artifacts verified", checks.len());
                Ok(())
            }
        }
    }
}

fn print_summary(summary: &serde_json::Value) {
    for key in ["teacher", "curriculum", "oneshot"] {
        if let Some(m) = summary.get(key) {
            println!(
                "{key}: final accuracy {} (best {}), samples {}",
                m["final_eval_accuracy"], m["best_eval_accuracy"], m["samples_total"]
            );
        }
    }
    if let Some(c) = summary.get("comparison") {
        println!("accuracy gap (curriculum - oneshot): {}", c["accuracy_gap"]);
    }
    if let Some(w) = summary.get("weight_gap") {
        println!(
            "weight gap ratio: {}, support recovery: {}",
            w["gap_ratio"], w["support_recovery"]
        );
    }
    if let Some(c) = summary.get("correlation") {
        println!("correlation dispersion ratio (in/out): {}", c["dispersion_ratio"]);
    }
    if let Some(d) = summary.get("decomposition") {
        println!("decomposition max residual: {}", d["max_residual"]);
    }
    if let Some(p) = summary.get("pcfg") {
        println!(
            "lengths p25/p50/p75/p95: {}/{}/{}/{}",
            p["length_percentiles"]["p25"],
            p["length_percentiles"]["p50"],
            p["length_percentiles"]["p75"],
            p["length_percentiles"]["p95"]
        );
        println!("masked fraction: {}", p["masking"]["selected_fraction"]);
    }
}
