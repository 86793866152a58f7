use std::io::Write;

fn main() -> anyhow::Result<()> {
    let outcome = almult_cli::run_args(std::env::args_os());
    if outcome.code == almult_core::report::EXIT_USAGE {
        std::io::stderr().write_all(outcome.stdout.as_bytes())?;
    } else {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(outcome.stdout.as_bytes())?;
        stdout.flush()?;
    }
    std::process::exit(outcome.code);
}
