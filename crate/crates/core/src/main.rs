use clap::Parser;

fn main() {
    let cli = corner_qed::cli::Cli::parse();
    std::process::exit(corner_qed::cli::dispatch(cli));
}
