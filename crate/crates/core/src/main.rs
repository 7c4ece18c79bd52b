fn main() {
    std::process::exit(markov_dro::cli::run(std::env::args_os()));
}
