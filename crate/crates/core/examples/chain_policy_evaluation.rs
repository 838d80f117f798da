// KOVA against plain SGD on the 5-state chain, scored by RMS error to the exact value.
use kova::harness::{run_experiment, ExperimentConfig};

fn report(label: &str, text: &str) {
    let cfg = ExperimentConfig::parse(text).expect("valid config");
    let rows = run_experiment(&cfg).expect("run completes");
    let best = rows
        .iter()
        .map(|r| r.rms_value_error)
        .fold(f64::INFINITY, f64::min);
    let last = rows.last().expect("at least one iteration");
    println!(
        "{label:<28} best rms {best:.3e}  final rms {:.3e}",
        last.rms_value_error
    );
}

fn main() {
    let base = "env = chain\ngamma = 0.9\nmodel = tabular\ntarget = kstep\ntarget.k = 5\nbatch_size = 32\n";
    report(
        "kova eta=0.01, 500 it",
        &format!("{base}optimizer = kova\noptimizer.kova.eta = 0.01\niterations = 500"),
    );
    report(
        "kova eta=0.002, 3000 it",
        &format!("{base}optimizer = kova\noptimizer.kova.eta = 0.002\niterations = 3000"),
    );
    report(
        "sgd alpha=0.1, 2000 it",
        &format!("{base}optimizer = sgd\noptimizer.sgd.alpha = 0.1\niterations = 2000"),
    );
    report(
        "kova, noiseless targets",
        &format!("{base}optimizer = kova\noptimizer.kova.eta = 0.01\ntarget.noise = expected\niterations = 500"),
    );
}
