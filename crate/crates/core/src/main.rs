fn main() {
    std::process::exit(spmlab::cli::main_with_args(std::env::args_os()));
}
