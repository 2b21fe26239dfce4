use anyhow::bail;
use finnews::models::check::{layer_checks, model_check, tiny_config, CheckLine};

use crate::{CheckFailed, Globals};

const ARCHITECTURES: [&str; 3] = ["rnn_plus", "dense_head", "attention_head"];

#[derive(clap::Args, Debug)]
pub struct Args {
    /// `rnn_plus`, `dense_head`, `attention_head` or `all`.
    #[arg(long, default_value = "all")]
    architecture: String,
    /// Scales analytic gradients before comparing; the check must then fail.
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

fn print_line(kind: &str, l: &CheckLine) {
    println!(
        "{kind:<6} {:<22} max rel error {:>10.3e}  threshold {:.0e}  {:>5} coords  {}",
        l.name,
        l.max_rel_error,
        l.threshold,
        l.checked,
        if l.passed() { "ok" } else { "FAIL" }
    );
}

pub fn run(g: &Globals, args: &Args) -> anyhow::Result<()> {
    let archs: Vec<&str> = match args.architecture.as_str() {
        "all" => ARCHITECTURES.to_vec(),
        a if ARCHITECTURES.contains(&a) => vec![a],
        a => bail!("unknown architecture {a:?}; expected one of {ARCHITECTURES:?} or \"all\""),
    };
    let seed = g.seed();
    let mut failed = Vec::new();
    for l in layer_checks(seed, args.corrupt_gradient)? {
        print_line("layer", &l);
        if !l.passed() {
            failed.push(l.name);
        }
    }
    for a in archs {
        let config = tiny_config(a).expect("listed architecture");
        let l = model_check(config, seed, args.corrupt_gradient)?;
        print_line("model", &l);
        if !l.passed() {
            failed.push(l.name);
        }
    }
    if !failed.is_empty() {
        return Err(CheckFailed(format!("gradient check failed for {}", failed.join(", "))).into());
    }
    Ok(())
}
