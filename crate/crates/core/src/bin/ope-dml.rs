fn main() {
    std::process::exit(debiased_ope::cli::run(std::env::args_os()));
}
