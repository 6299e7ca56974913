use std::process::ExitCode;

use capbench::args::{Cli, Command};
use capbench::parallel::thread_cap;
use capbench::{cmd_bounds, cmd_mac, cmd_run, CliError};
use clap::Parser;

fn execute(cli: Cli) -> Result<(), CliError> {
    let (args, name) = match &cli.command {
        Command::Run(a) => (a, "run"),
        Command::Bounds(a) => (a, "bounds"),
        Command::Mac(a) => (a, "mac"),
    };
    let cfg = args.to_config()?;
    let out = match name {
        "bounds" => cmd_bounds(&cfg)?,
        "run" => cmd_run(&cfg, thread_cap()?)?,
        _ => cmd_mac(&cfg, thread_cap()?)?,
    };
    out.write_to(&cfg.out_dir)?;
    print!("{}", out.stdout);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
