fn main() {
    std::process::exit(tbss::cli::run(std::env::args_os()));
}
