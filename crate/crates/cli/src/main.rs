fn main() {
    std::process::exit(i32::from(flowextract_cli::run(std::env::args_os())));
}
