use clap::Parser;

use extpart_cli::{run, Cli, JobConfig};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let job = JobConfig::from(Cli::parse());
    match run(&job) {
        Ok(out) => {
            println!("{}", out.report);
            eprintln!("{}", out.summary);
            std::process::exit(out.exit_code);
        }
        Err((e, scratch)) => {
            eprintln!("error: {e}");
            if let Some(dir) = scratch {
                eprintln!("scratch files kept in {}", dir.display());
            }
            std::process::exit(e.exit_code());
        }
    }
}
