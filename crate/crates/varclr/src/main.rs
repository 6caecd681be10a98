fn main() {
    std::process::exit(varclr::cli::dispatch(std::env::args_os()));
}
