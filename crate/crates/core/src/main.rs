fn main() {
    std::process::exit(borelk::cli::run(std::env::args_os()));
}
