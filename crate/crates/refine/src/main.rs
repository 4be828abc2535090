fn main() {
    std::process::exit(refine::run_cli());
}
