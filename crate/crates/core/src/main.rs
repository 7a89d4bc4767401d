use clap::Parser;

use fedtrust::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let code = execute(cli, &mut out, &mut err);
    std::process::exit(code);
}
