//! Writes a small synthetic corpus: `make_synthetic <dir> [n] [size] [seed]`.

use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(dir) = args.first() else {
        eprintln!("usage: make_synthetic <dir> [n] [size] [seed]");
        return ExitCode::from(1);
    };
    let num = |i: usize, default: u64| args.get(i).map_or(Ok(default), |s| s.parse::<u64>());
    let (Ok(n), Ok(size), Ok(seed)) = (num(1, 24), num(2, 64), num(3, 0)) else {
        eprintln!("n, size and seed must be non-negative integers");
        return ExitCode::from(1);
    };
    match ia_core::synth::write_synthetic_dataset(dir, n as usize, size as u32, seed) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
