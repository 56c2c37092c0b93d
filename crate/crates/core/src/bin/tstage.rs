fn main() {
    std::process::exit(tstage::cli::run(std::env::args_os()));
}
