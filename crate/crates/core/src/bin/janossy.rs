use clap::Parser;
use janossy::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let (command, flags) = cli.invocation.split();
    std::process::exit(run(command, flags));
}
