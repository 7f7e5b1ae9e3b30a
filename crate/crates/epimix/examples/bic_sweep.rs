//! Choose the number of clusters by BIC over seeded random-restart sweeps.
//!
//! ```bash
//! cargo run -p epimix --example bic_sweep
//! ```

use epimix::mixture::sample_block;
use epimix::selection::sweep;
use epimix::{
    BicMode, BivariateCurve, Component, Covariance2, EmConfig, LogisticParams, MixtureModel,
    SweepConfig,
};

fn group(a1: f64) -> MixtureModel {
    let sd = a1 / 300.0;
    MixtureModel::new(
        vec![1.0],
        vec![Component::new(
            BivariateCurve::new(
                LogisticParams::new(a1, 4.0, 8.0, 1.3).unwrap(),
                LogisticParams::new(a1 / 10.0, 5.0, 9.0, 1.4).unwrap(),
            ),
            Covariance2::from_entries(sd * sd, (sd / 10.0) * (sd / 10.0), 0.0).unwrap(),
        )],
        1.0,
    )
    .unwrap()
}

fn main() -> Result<(), epimix::Error> {
    // Three well-separated trend groups, eight regions each.
    let times: Vec<f64> = (0..12).map(|i| -0.2 + 1.2 * i as f64 / 11.0).collect();
    let mut blocks = Vec::new();
    for (g, a1) in [150.0, 500.0, 1200.0].into_iter().enumerate() {
        let generator = group(a1);
        for i in 0..8u64 {
            let (mut b, _) = sample_block(&generator, &times, g as u64 * 100 + i)?;
            b.region_id = format!("g{g}r{i}");
            blocks.push(b);
        }
    }

    let config = SweepConfig {
        k_min: 1,
        k_max: 4,
        seed: 11,
        bic_mode: BicMode::TotalPoints,
        time_scale: 1.0,
        em: EmConfig {
            max_iter: 100,
            optimizer_max_evals: 400,
            ..EmConfig::default()
        },
    };
    let result = sweep(&blocks, &config)?;

    println!("K   starts  spurious  loglik          BIC");
    for o in &result.per_k {
        match (&o.fit, o.bic) {
            (Some(f), Some(b)) => println!(
                "{}   {:>6}  {:>8}  {:>12.3}  {:>12.3}{}",
                o.k,
                config.starts_for(o.k),
                o.n_spurious,
                f.loglik,
                b,
                if o.k == result.chosen_k { "  <- chosen" } else { "" }
            ),
            _ => println!(
                "{}   {:>6}  {:>8}  (all starts spurious)",
                o.k,
                config.starts_for(o.k),
                o.n_spurious
            ),
        }
    }

    let fit = result.chosen_fit();
    println!("\nchosen K = {}; group sizes:", result.chosen_k);
    for k in 0..result.chosen_k {
        let n = fit.assignments.iter().filter(|a| a.label == k).count();
        println!("  component {k}: {n} regions");
    }
    Ok(())
}
