use clap::Parser;

use osc_conn::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("OSC_CONN_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: OSC_CONN_THREADS must be an integer >= 1, got '{v}'");
                std::process::exit(2);
            }
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
