fn main() {
    let code = fkmix::cli::run(std::env::args().skip(1));
    std::process::exit(code);
}
