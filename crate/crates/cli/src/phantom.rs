use kneeoa_core::phantom::{write_phantom_dataset, PhantomOptions};

use crate::context::{CliError, CliResult, RunContext};
use crate::PhantomArgs;

pub fn run(ctx: &RunContext, args: &PhantomArgs) -> CliResult {
    if args.n == 0 {
        return Err(CliError::invocation("--n must be positive"));
    }
    let opts = PhantomOptions {
        n: args.n,
        seed: ctx.seed,
        missing_mask_every: args.missing_mask_every,
    };
    let path = write_phantom_dataset(&ctx.out, &opts)?;
    println!("{}", path.display());
    Ok(())
}
