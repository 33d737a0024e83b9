use clap::Parser;

fn main() -> std::process::ExitCode {
    nfield_cli::main_with(nfield_cli::Cli::parse())
}
