fn main() {
    std::process::exit(localsgd_lab::cli::main_entry());
}
