fn main() {
    std::process::exit(nodalloc::harness::cli_main(std::env::args_os()));
}
