fn main() {
    std::process::exit(tpp_cli::run(std::env::args_os()));
}
