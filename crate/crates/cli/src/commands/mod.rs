//! One function per subcommand. Each returns the text to print; files are
//! written only once the whole command has succeeded.

mod arch;
mod fit;
mod mix;
mod pack;
mod plan;

use anyhow::Result;
use mtscale_core::Error;

use crate::cli::Command;
use crate::run::Printed;

pub use arch::{flops, params};
pub use fit::{fit, FitDocument};
pub use mix::mix;
pub use pack::{pack, prefix, stats};
pub use plan::{plan, PlanDocument};

pub fn run(command: Command) -> Result<Printed> {
    match command {
        Command::Mix(args) => mix(&args),
        Command::Pack(args) => pack(&args),
        Command::Stats(args) => stats(&args),
        Command::Prefix(args) => prefix(&args),
        Command::Params(args) => params(&args),
        Command::Flops(args) => flops(&args),
        Command::Fit(args) => fit(&args),
        Command::Plan(args) => plan(&args),
    }
}

fn invalid(message: impl Into<String>) -> anyhow::Error {
    Error::InvalidInput(message.into()).into()
}
