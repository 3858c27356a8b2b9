use std::process::ExitCode;

use gradrobust_cli::{parse_config, run, CliError};

fn main() -> ExitCode {
    let outcome = parse_config(std::env::args_os()).and_then(|cfg| run(&cfg, &mut std::io::stdout().lock()));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("gradrobust: some runs did not converge");
            ExitCode::from(1)
        }
        Err(CliError::Args(e)) if !e.use_stderr() => {
            let _ = e.print();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gradrobust: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
