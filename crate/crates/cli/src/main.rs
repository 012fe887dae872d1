use radjudge_cli::config::Env;

fn main() {
    let code = radjudge_cli::run(std::env::args_os(), &Env::from_process());
    std::process::exit(code.into());
}
