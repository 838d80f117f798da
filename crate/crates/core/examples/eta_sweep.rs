// Fading-memory sweep over eta, written as one CSV per value like the `sweep` subcommand.
use kova::harness::{emit_csv, run_experiment, RawConfig};

fn main() {
    let dir = std::env::temp_dir().join("kova_eta_sweep");
    let base =
        RawConfig::parse(include_str!("../configs/chain.conf")).expect("bundled config parses");
    for eta in ["0.1", "0.01", "0.001"] {
        let mut raw = base.clone();
        raw.set("optimizer.kova.eta", eta);
        let cfg = raw.build().expect("valid eta");
        let rows = run_experiment(&cfg).expect("no divergence");
        let path = dir.join(format!("chain_{eta}.csv"));
        emit_csv(&rows, &path).expect("writable temp dir");
        let last = rows.last().expect("iterations > 0");
        println!(
            "eta {eta:<6} final rms {:.3e}  cov trace {:.3e}  -> {}",
            last.rms_value_error,
            last.cov_trace.unwrap_or(f64::NAN),
            path.display()
        );
    }
}
