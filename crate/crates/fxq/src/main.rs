use std::io;
use std::panic;
use std::process::ExitCode;

use fxq::cli::{main_with, ExitClass};

fn main() -> ExitCode {
    let status = panic::catch_unwind(|| main_with(std::env::args_os(), &mut io::stdout(), &mut io::stderr()))
        .unwrap_or(ExitClass::Internal as i32);
    ExitCode::from(status as u8)
}
