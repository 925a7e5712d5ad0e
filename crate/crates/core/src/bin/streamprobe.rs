fn main() {
    std::process::exit(streamprobe::cli::main_with_args(std::env::args_os()));
}
