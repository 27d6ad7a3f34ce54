fn main() {
    match psat::cli::threads_from_env() {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: cannot start thread pool: {e}");
                std::process::exit(2);
            }
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
    std::process::exit(psat::cli::run(std::env::args_os()));
}
