use clap::Parser;

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = leosched::cli::Cli::parse();
    std::process::exit(leosched::cli::run(cli, argv));
}
