use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use decaylab::cli::{dispatch, parse_config_with, resolve_output_dir, write_outputs};

/// Run one decaylab experiment from a config file.
#[derive(Parser, Debug)]
#[command(name = "decaylab", version, about)]
struct Args {
    /// Experiment config (`key = value` lines).
    config: PathBuf,
    /// Override a config key; repeatable, e.g. `--param scale=12`.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Output directory; beats the config and DECAYLAB_OUTPUT_DIR.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn run(args: &Args) -> decaylab::Result<i32> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = parse_config_with(&text, &args.params)?;
    let out = dispatch(&cfg, &args.params)?;
    let dir = resolve_output_dir(args.output_dir.as_deref(), &cfg);
    write_outputs(&out, &dir)?;
    for v in &out.report.verdicts {
        println!(
            "{} {:?} {}{}",
            if v.pass { "PASS" } else { "FAIL" },
            v.kind,
            v.name,
            v.measured.map(|m| format!(" ({m:.6})")).unwrap_or_default()
        );
    }
    println!("wrote {}", dir.join("report.json").display());
    Ok(out.report.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(decaylab::Error::Config(violations)) => {
            eprintln!("invalid config {}:", args.config.display());
            for v in violations {
                eprintln!("  {v}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
