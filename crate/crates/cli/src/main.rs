use clap::Parser;

fn main() {
    let cli = geocurate_cli::Cli::parse();
    if let Err(e) = geocurate_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
