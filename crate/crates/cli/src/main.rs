use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::panic::set_hook(Box::new(|info| {
        eprintln!("internal error: {info}");
        std::process::exit(2);
    }));
    // usage errors are input errors; --help and --version are not errors
    let cli = mvtrack::Cli::try_parse().unwrap_or_else(|e| {
        let _ = e.print();
        std::process::exit(if e.use_stderr() { 1 } else { 0 });
    });
    if let Err(e) = mvtrack::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(mvtrack::exit_code(&e));
    }
}
