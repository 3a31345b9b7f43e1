fn main() {
    std::process::exit(fmeffects::cli::run());
}
