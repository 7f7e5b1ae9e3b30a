//! Ingest the bundled fixture CSVs: population adjustment, onset alignment,
//! time rescaling, and the exported-blocks JSON format.
//!
//! ```bash
//! cargo run -p epimix --example load_csv_pipeline
//! ```

use std::path::Path;

use epimix::data::{blocks_to_json, load_dataset};
use epimix::PipelineConfig;

fn main() -> Result<(), epimix::Error> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let dataset = load_dataset(
        &fixtures.join("series.csv"),
        &fixtures.join("population.csv"),
        &PipelineConfig::default(),
    )?;

    println!(
        "{} blocks, time scale = {} days per unit, {} of {} raw rows retained",
        dataset.blocks.len(),
        dataset.time_scale,
        dataset.retained_rows,
        dataset.total_rows,
    );
    for region in &dataset.excluded {
        println!("excluded (never reaches onset threshold): {region}");
    }

    println!("\nregion      n   t range (scaled)     case rate at onset/end");
    for b in &dataset.blocks {
        println!(
            "{:<10} {:>3}   [{:.3}, {:.3}]       {:>7.2} / {:.1}",
            b.region_id,
            b.n(),
            b.times[0],
            b.times[b.n() - 1],
            b.obs[0][0],
            b.obs[b.n() - 1][0],
        );
    }

    let json = blocks_to_json(&dataset.blocks, dataset.time_scale)?;
    println!("\nblocks JSON starts with:");
    for line in json.lines().take(8) {
        println!("  {line}");
    }
    Ok(())
}
