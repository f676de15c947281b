fn main() {
    std::process::exit(photon_landauer::cli::main());
}
