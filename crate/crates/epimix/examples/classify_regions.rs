//! Classify held-out regions under a frozen model: posterior rows and Bayes
//! labels, no refitting.
//!
//! ```bash
//! cargo run -p epimix --example classify_regions
//! ```

use epimix::mixture::{classify, posterior_row, sample_block};
use epimix::{
    BivariateCurve, Component, Covariance2, LogisticParams, MixtureModel, Posteriors,
};

fn main() -> Result<(), epimix::Error> {
    let component = |a1: f64, a2: f64| {
        Component::new(
            BivariateCurve::new(
                LogisticParams::new(a1, 4.0, 9.0, 1.3).unwrap(),
                LogisticParams::new(a2, 5.0, 10.0, 1.2).unwrap(),
            ),
            Covariance2::from_entries(1.0, 0.25, 0.1).unwrap(),
        )
    };
    let model = MixtureModel::new(
        vec![0.3, 0.5, 0.2],
        vec![component(50.0, 5.0), component(220.0, 25.0), component(800.0, 90.0)],
        1.0,
    )?;

    // Round-trip the model through its JSON wire format, as `classify` does.
    let frozen = MixtureModel::from_json_str(&model.to_json_string()?)?;

    let times: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    let mut region_ids = Vec::new();
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for i in 0..9u64 {
        let (mut block, label) = sample_block(&frozen, &times, 500 + i)?;
        block.region_id = format!("held-out-{i}");
        let (row, _) = posterior_row(&block, &frozen);
        region_ids.push(block.region_id.clone());
        rows.push(row);
        truth.push(label);
    }
    let posteriors = Posteriors { region_ids, rows };
    let assignments = classify(&posteriors);

    println!("region       label  true  posteriors");
    for ((a, t), row) in assignments.iter().zip(&truth).zip(&posteriors.rows) {
        let formatted: Vec<String> = row.iter().map(|p| format!("{p:.4}")).collect();
        println!("{:<12} {:>4} {:>5}  [{}]", a.region_id, a.label, t, formatted.join(", "));
    }
    Ok(())
}
