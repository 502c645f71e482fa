use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod config;
mod output;

fn exit_code(err: &anyhow::Error) -> u8 {
    let non_finite = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<rntm_core::Error>(), Some(rntm_core::Error::NonFinite { .. })));
    if non_finite {
        2
    } else {
        1
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("RNTM_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow::anyhow!("RNTM_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match init_threads().and_then(|_| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
