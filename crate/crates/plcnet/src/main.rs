fn main() {
    std::process::exit(plcnet::cli::run());
}
