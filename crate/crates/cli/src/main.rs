use clap::Parser;

fn main() {
    let cli = twoscale::app::Cli::parse();
    match twoscale::app::execute(cli, &mut std::io::stdout()) {
        Ok(()) | Err(twoscale::CliError::Closed) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
