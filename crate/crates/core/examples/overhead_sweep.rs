//! Safeguard overhead across step sizes and tolerances, printed as CSV.

use reproguard::cli::{rows_to_csv, sweep_rows, Cli, Command};
use clap::Parser;

fn main() -> reproguard::Result<()> {
    let cli = Cli::parse_from(["reproguard", "sweep", "--count", "30000", "--depth", "10", "--ks", "250,125", "--out", "-"]);
    let Command::Sweep(args) = cli.command else { unreachable!() };
    let rows = sweep_rows(&args, &[1])?;
    print!("{}", rows_to_csv(&rows)?);
    Ok(())
}
