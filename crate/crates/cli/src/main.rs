use std::process::ExitCode;

use texrel_cli::{dispatch, parse_command, ParseOutcome, EXIT_USAGE};

fn main() -> ExitCode {
    let code = match parse_command(std::env::args_os()) {
        Ok(inv) => dispatch(&inv, &mut std::io::stdout().lock()),
        Err(ParseOutcome::Info(text)) => {
            print!("{text}");
            0
        }
        Err(ParseOutcome::Usage(text)) => {
            eprint!("{text}");
            if !text.ends_with('\n') {
                eprintln!();
            }
            EXIT_USAGE
        }
    };
    ExitCode::from(code as u8)
}
