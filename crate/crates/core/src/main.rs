fn main() {
    std::process::exit(ssc::cli::main_with_args(std::env::args_os()));
}
