use clap::Parser;

fn main() {
    let cli = spinkick::cli::Cli::parse();
    if let Err(e) = spinkick::cli::execute(cli) {
        eprintln!("error[{}]: {e}", e.category());
        std::process::exit(e.exit_code());
    }
}
