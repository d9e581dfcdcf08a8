fn main() {
    std::process::exit(swipt_relay::cli::run(std::env::args_os()));
}
