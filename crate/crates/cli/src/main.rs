fn main() {
    std::process::exit(sdm_suite::run(std::env::args_os()));
}
