//! Evaluate generalized logistic curves: values, asymptotes, inflection
//! points, and the analytic gradient.
//!
//! ```bash
//! cargo run -p epimix --example growth_curves
//! ```

use epimix::{BivariateCurve, LogisticParams};

fn main() -> Result<(), epimix::Error> {
    // A fast, asymmetric rise toward 232 cases per 100k.
    let cases = LogisticParams::new(232.003, 3.809, 12.197, 8.185)?;
    let deaths = LogisticParams::new(9.206, 4.983, 12.930, 9.747)?;
    let curve = BivariateCurve::new(cases, deaths);

    println!("t (scaled)   cases      deaths");
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let [y1, y2] = curve.eval(t);
        println!("{t:>9.2} {y1:>10.3} {y2:>10.3}");
    }

    let (t0, y0) = cases.inflection();
    println!("\ncases inflection: t0 = {t0:.4} (scaled), y0 = {y0:.3}");
    println!("cases upper asymptote: {}", cases.a);
    println!("value at t = 4: {:.6} (within 0.1% of the asymptote)", cases.eval(4.0));

    let g = cases.gradient(t0);
    println!("\ngradient at t0: dh/da = {:.4}, dh/db = {:.4}, dh/dc = {:.4}, dh/dgamma = {:.4}",
        g[0], g[1], g[2], g[3]);
    Ok(())
}
