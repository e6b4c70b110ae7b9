use clap::Parser;
use stochsplat::opts::{Cli, Command};
use stochsplat::run;

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Render(args) => run::cmd_render(args),
        Command::Bench(args) => run::cmd_bench(args),
        Command::Finetune(args) => run::cmd_finetune(args),
        Command::Gradcheck(args) => run::cmd_gradcheck(args),
        Command::Popcheck(args) => run::cmd_popcheck(args),
        Command::Taa(args) => run::cmd_taa(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(message) => {
            eprintln!("error: {message}");
            std::process::exit(2);
        }
    }
}
