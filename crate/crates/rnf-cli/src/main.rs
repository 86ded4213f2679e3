fn main() {
    let mut stdout = std::io::stdout();
    let code = rnf_cli::run(std::env::args_os(), &mut stdout);
    std::process::exit(code);
}
