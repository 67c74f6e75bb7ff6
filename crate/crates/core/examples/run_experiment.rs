//! Drives the experiment runner from code instead of the command line.

use wealthsim::experiment::{parse_args, run_experiment};

fn main() {
    let out = std::env::temp_dir().join("wealthsim-example");
    let cfg = parse_args([
        "wealthsim",
        "collapse",
        "--agents=500",
        "--r=0.75",
        "--checkpoints=5e4,1e5,2e5",
        "--replicas=8",
        "--binning=log-tail",
        &format!("--output={}", out.display()),
    ])
    .expect("valid arguments");
    println!("{}", cfg.command_line());
    for path in run_experiment(&cfg).expect("experiment runs") {
        println!("wrote {}", path.display());
    }
}
