use clap::Parser;
use lsp_lab::{run, Args};

fn main() {
    let args = Args::parse();
    match run(&args) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("lsp-lab: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
