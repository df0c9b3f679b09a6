//! Refits the k-component normal-CDF mixture for the inverse logit and prints
//! the constants in the layout used by `NormalMixtureApprox::logistic_k8`.
//!
//! `cargo run --release --example fit_logistic_mixture -- 8`

use miglmm::lni::{fit_logistic_mixture, MixtureFitOptions};

fn main() {
    let k: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("k must be an integer"))
        .unwrap_or(8);
    let fit = match fit_logistic_mixture(k, &MixtureFitOptions::default()) {
        Ok(fit) => fit,
        Err(e) => {
            eprintln!("fit failed: {e}");
            std::process::exit(1);
        }
    };
    println!("least-squares start max error: {:.6e}", fit.least_squares_error);
    println!("minimax max error:             {:.6e}", fit.max_error);
    println!("exchange iterations:           {}", fit.exchanges);
    println!("dense-grid check (|z| <= 40):  {:.6e}", fit.approx.max_error(40.0, 400_001));
    println!("weights:");
    for p in fit.approx.weights() {
        println!("    {p:?},");
    }
    println!("scales:");
    for s in fit.approx.scales() {
        println!("    {s:?},");
    }
}
