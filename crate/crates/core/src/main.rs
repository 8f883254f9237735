use clap::Parser;

fn main() -> anyhow::Result<()> {
    dac::cli::execute(dac::cli::Cli::parse())
}
