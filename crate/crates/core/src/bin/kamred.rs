fn main() {
    std::process::exit(kamred::cli::dispatch(std::env::args_os()));
}
