use clap::Parser;
use sparse_transfer_cli::{run, CliArgs};

fn main() {
    let args = CliArgs::parse();
    if let Err(err) = run(&args) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
