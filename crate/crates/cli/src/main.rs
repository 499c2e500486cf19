fn main() {
    std::process::exit(attrib_cli::dispatch(std::env::args_os().skip(1)));
}
