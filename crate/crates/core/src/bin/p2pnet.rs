fn main() {
    let code = p2pnet::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
