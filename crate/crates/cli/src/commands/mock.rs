use std::path::PathBuf;

use semrec_profilegen::mock::{MockServer, Scenario};

#[derive(clap::Args)]
pub struct Args {
    /// Scenario JSON (default: every request succeeds).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Address to bind; port 0 picks a free port.
    #[arg(long, default_value = "127.0.0.1:8089")]
    addr: String,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let scenario = match &args.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    let server = MockServer::start(scenario, &args.addr)?;
    println!("{}", server.base_url());
    server.wait();
    Ok(())
}
