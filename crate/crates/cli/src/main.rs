use std::path::PathBuf;

use aqsim_cli::{execute, RawConfig, EXIT_OK, EXIT_VALIDATION, OUT_DIR_ENV};
use clap::Parser;

fn main() {
    let flags = match RawConfig::try_parse() {
        Ok(f) => f,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let out_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    match execute(flags, out_dir.as_deref()) {
        Ok((cfg, report)) => {
            print!("{}", report.summary());
            println!("report written to {}", cfg.output_path.display());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
