fn main() {
    std::process::exit(emmkgr::cli::run());
}
