fn main() {
    std::process::exit(riskshare::cli::run(std::env::args_os()));
}
