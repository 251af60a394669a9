fn main() {
    std::process::exit(xupol_cli::run_from_env());
}
