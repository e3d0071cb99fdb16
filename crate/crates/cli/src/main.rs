use clap::Parser;

fn main() {
    let cli = semires_cli::Cli::parse();
    std::process::exit(semires_cli::run(&cli));
}
