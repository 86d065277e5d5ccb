use std::time::Instant;

use oraldx_core::evaluation::{run_experiment, ExperimentConfig, Mode};
use oraldx_core::fusion::{CollapsedFusion, FusionWeights};
use oraldx_core::taxonomy::{Taxonomy, Zone};

#[test]
fn standard_beats_fast_on_zone_two_across_seeds() {
    let taxonomy = Taxonomy::bundled();
    let start = Instant::now();
    for seed in 0..3 {
        let fusion = FusionWeights::seeded(seed);
        let fuser = CollapsedFusion::new(&fusion);
        let config = ExperimentConfig {
            corpus_seed: seed,
            ..ExperimentConfig::default()
        };
        let r = run_experiment(&taxonomy, &fusion, &fuser, &config).unwrap();
        eprintln!("seed {seed}\n{}", r.report.render());
        let fast = r.report.column(Mode::Fast.as_str()).unwrap();
        let standard = r.report.column(Mode::Standard.as_str()).unwrap();
        let acc = |c: &oraldx_core::evaluation::ModeColumn, z| c.zones[&z].accuracy;
        assert!(
            acc(standard, Zone::Intermediate) > acc(fast, Zone::Intermediate),
            "seed {seed}"
        );
        assert!(
            acc(fast, Zone::Routine) >= acc(fast, Zone::Intermediate),
            "seed {seed}"
        );
        assert!(
            acc(fast, Zone::Intermediate) >= acc(fast, Zone::Complex),
            "seed {seed}"
        );

        let losses: Vec<f64> = r.training.epochs.iter().map(|e| e.total).collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.training.final_accuracy[4] >= 0.90);
    }
    assert!(start.elapsed().as_secs() < 300);
}
