use clap::Parser;

fn main() {
    let cli = curated::cli::Cli::parse();
    if let Err(e) = curated::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
