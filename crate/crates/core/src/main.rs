use clap::Parser;

use wordclust::cli::{run, RunConfig};

fn main() {
    let config = RunConfig::parse();
    if let Err(e) = run(&config) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
