//! Time ATT paths on synthetic data over a doubling grid of sizes.
//!
//! cargo run --release --example timing_benchmark -- [n] [p] [doublings]

use balpath::bench::{run_bench, BenchConfig};

fn main() -> balpath::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let cfg = BenchConfig {
        n: args.first().copied().unwrap_or(20_000),
        p: args.get(1).copied().unwrap_or(100),
        doublings: args.get(2).copied().unwrap_or(1),
        ..Default::default()
    };
    let report = run_bench(&cfg, |row| {
        eprintln!(
            "n={} p={} max.imbalance={} -> {:.2}s ({}/{} path points)",
            row.n, row.p, row.max_imbalance, row.runtime_secs, row.path_len, row.requested_len
        )
    })?;
    println!("{report}");
    Ok(())
}
