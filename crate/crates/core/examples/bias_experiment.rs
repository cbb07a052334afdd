//! Runs the synthetic bias experiment and prints the cross-seed summary.
//!
//! Usage: `cargo run --release --example bias_experiment [config.json]`

use std::time::Instant;

use fairgen_core::parallel::Exec;
use fairgen_core::toymodel::{run_bias_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = match std::env::args().nth(1) {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    let start = Instant::now();
    let result = run_bias_experiment(&config, Exec::Parallel)?;
    for run in &result.runs {
        let base = &run.baseline;
        let sel = &run.selected;
        let group_means = |r: &fairgen_core::fairness::FairnessReport| {
            r.summaries
                .iter()
                .map(|s| format!("{}={:.4}", s.key, s.metrics[&fairgen_core::metrics::Metric::Rouge1].mean))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!(
            "seed {}: p={:.2e} base[{}] sel[{}] avg_mfd {:.4} -> {:.4} ({:?}%) rouge1 change {:?}%",
            run.seed,
            run.baseline_rouge1_p().unwrap_or(f64::NAN),
            group_means(base),
            group_means(sel),
            base.average_mfd,
            sel.average_mfd,
            run.comparison.average_mfd_reduction_pct,
            run.comparison.overall_change_pct.get(&fairgen_core::metrics::Metric::Rouge1),
        );
    }
    if std::env::var_os("SHOW_ROWS").is_some() {
        for run in &result.runs {
            for row in &run.comparison.rows {
                println!(
                    "  seed {} {:<15} {:.4} -> {:.4}",
                    run.seed, row.metric.name(), row.mfd_base, row.mfd_treated
                );
            }
        }
    }
    if std::env::var_os("SHOW_EPOCHS").is_some() {
        let run = &result.runs[0];
        for (b, s) in run.baseline_epochs.iter().zip(&run.selected_epochs) {
            println!(
                "epoch {:>3}: base ce {:.3} {:?} | sel ce {:.3} rank {:?} {:?}",
                b.epoch, b.mean_ce, b.heldout_rouge1, s.mean_ce, s.mean_ranking, s.heldout_rouge1
            );
        }
    }
    println!("{}", serde_json::to_string_pretty(&result.summary)?);
    eprintln!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
