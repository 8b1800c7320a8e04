fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            use std::io::Write;
            writeln!(buf, "level={} target={} {}", record.level().as_str().to_lowercase(), record.target(), record.args())
        })
        .init();
    std::process::exit(turnclass::cli::run_from(std::env::args_os()));
}
