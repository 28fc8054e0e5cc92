use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = aqua_cli::Cli::parse();
    if let Err(e) = aqua_cli::run(cli) {
        eprintln!("{}", aqua_cli::format_error(&e));
        std::process::exit(1);
    }
}
