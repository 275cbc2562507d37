use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kp_cli::{parse_config, run, Mode, EXIT_INPUT};

#[derive(Parser, Debug)]
#[command(name = "kp", version, about = "Kirchhoff-Plateau rod and film solver")]
struct Args {
    /// rod-relax | film-relax | kp-solve | check | lsc-diagnostic
    #[arg(value_parser = parse_mode)]
    mode: Mode,
    #[arg(long)]
    config: PathBuf,
    /// output directory (default: [output] dir, else ./out)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| {
        let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
        format!("unknown mode '{s}', expected one of {}", names.join(", "))
    })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("kp: cannot set up {n} threads: {e}");
            return ExitCode::from(EXIT_INPUT as u8);
        }
    }
    let cfg = match parse_config(&args.config).and_then(|c| c.for_mode(args.mode)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("kp: invalid configuration:\n{e}");
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    let cfg = match args.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    let dir = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match run(&cfg, args.mode, &dir) {
        Ok(outcome) => {
            let e = &outcome.report["energy"];
            eprintln!(
                "kp {}: {} (e_total {}), outputs in {}",
                args.mode,
                outcome.report["termination"].as_str().unwrap_or(""),
                e["e_total"],
                dir.display()
            );
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("kp: {e}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
