use clap::Parser;

fn main() {
    std::process::exit(htgn::cli::main_with(htgn::cli::Cli::parse()));
}
