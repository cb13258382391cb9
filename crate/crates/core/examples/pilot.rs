//! Scratch pilot for corpus difficulty tuning. Not part of the test suite.

use roadgraph::synth::{split_corpus, subsample_labels, synth_corpus, SynthConfig};
use roadgraph::train::{prepare, run_seeds, TrainConfig};

fn main() {
    let per_class: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(150);
    let n_seeds: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);

    let cfg = SynthConfig {
        scenes_per_class: per_class,
        ..SynthConfig::default()
    };
    let corpus = synth_corpus(&cfg).unwrap();
    let (train, val, test, _) = split_corpus(corpus, (0.7, 0.15, 0.15), 1).unwrap();

    let tc = TrainConfig {
        seeds: (1..=n_seeds as u64).collect(),
        ..TrainConfig::default()
    };
    let val_g = prepare(&val, tc.deadband).unwrap();
    let test_g = prepare(&test, tc.deadband).unwrap();

    // Rules on the noisy test split.
    let rules = roadgraph::train::evaluate_rules(&test_g);
    eprintln!("rules noisy test macro-recall {:.4}", rules.macro_recall());

    for fraction in [1.0_f64, 0.05] {
        let sub = subsample_labels(train.to_vec(), fraction, 17).unwrap();
        let train_g = prepare(&sub, tc.deadband).unwrap();
        let mut recalls = Vec::new();
        for attention in [false, true] {
            let t0 = std::time::Instant::now();
            let (report, _) = run_seeds(&tc, attention, &train_g, &val_g, &test_g).unwrap();
            eprintln!(
                "fraction {:.2} {} macro-recall {:.4} macro-f1 {:.4} ({:?})",
                fraction,
                report.method,
                report.mean_macro_recall,
                report.mean_macro_f1,
                t0.elapsed()
            );
            recalls.push(report.mean_macro_recall);
        }
        eprintln!(
            "fraction {:.2} gap (rel_att - mrgcn) = {:.4}",
            fraction,
            recalls[1] - recalls[0]
        );
    }
}
