use clap::Parser;

fn main() {
    let cli = rssnet::cli::Cli::parse();
    if let Err(e) = rssnet::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
