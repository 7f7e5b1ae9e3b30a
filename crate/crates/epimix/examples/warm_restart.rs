//! Refit an updated dataset starting from yesterday's parameter estimates
//! instead of a fresh restart sweep.
//!
//! ```bash
//! cargo run -p epimix --example warm_restart
//! ```

use epimix::em::em_fit;
use epimix::mixture::{loglik, sample_block};
use epimix::selection::{derive_seed, random_init, warm_refit};
use epimix::{
    BivariateCurve, Block, Component, Covariance2, EmConfig, LogisticParams, MixtureModel,
};

fn main() -> Result<(), epimix::Error> {
    let component = |a1: f64| {
        Component::new(
            BivariateCurve::new(
                LogisticParams::new(a1, 5.0, 9.0, 1.3).unwrap(),
                LogisticParams::new(a1 / 8.0, 6.0, 10.0, 1.2).unwrap(),
            ),
            Covariance2::from_entries(1.0, 0.2, 0.05).unwrap(),
        )
    };
    let generator = MixtureModel::new(
        vec![0.5, 0.5],
        vec![component(60.0), component(300.0)],
        1.0,
    )?;

    // "Yesterday": 20 observed days per region.
    let times: Vec<f64> = (0..20).map(|i| i as f64 / 24.0).collect();
    let mut blocks = Vec::new();
    for i in 0..12u64 {
        let (mut b, _) = sample_block(&generator, &times, 9000 + i)?;
        b.region_id = format!("r{i:02}");
        blocks.push(b);
    }
    let init = random_init(&blocks, 2, derive_seed(1, 2, 0), 1.0)?;
    let config = EmConfig::default();
    let yesterday = em_fit(&blocks, 2, init, &config)?;
    let fitted = yesterday.fit().expect("retained").model.clone();
    println!(
        "initial fit: {} iterations, loglik {:.3}",
        yesterday.trace().iterations,
        yesterday.fit().unwrap().loglik
    );

    // "Today": five more days arrive for every region.
    let extended: Vec<Block> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let full_times: Vec<f64> = (0..25).map(|j| j as f64 / 24.0).collect();
            let (mut nb, _) = sample_block(&generator, &full_times, 9000 + i as u64).unwrap();
            nb.region_id = b.region_id.clone();
            nb
        })
        .collect();

    let warm_ll = loglik(&extended, &fitted);
    let refit = warm_refit(&fitted, &extended, &config)?;
    println!(
        "warm refit: {} iterations (vs a fresh sweep's dozens of starts)",
        refit.trace().iterations
    );
    println!(
        "loglik on the extended data: {:.3} at the warm start, {:.3} after refit",
        warm_ll,
        refit.fit().expect("retained").loglik
    );
    Ok(())
}
