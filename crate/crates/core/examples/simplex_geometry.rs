//! ILR round trips, Aitchison distances and the smoothed class targets.
//!
//! cargo run --example simplex_geometry

use ilr_gp::simplex::{
    aitchison_distance, class_targets, ilr_forward, ilr_inverse, separation_delta, sigma_bound, HelmertBasis,
    ProbVector, SmoothingConfig,
};

fn main() -> ilr_gp::Result<()> {
    let basis = HelmertBasis::new(4)?;
    let p = ProbVector::new(vec![0.1, 0.2, 0.3, 0.4])?;
    let q = ProbVector::new(vec![0.25, 0.25, 0.4, 0.1])?;
    let (zp, zq) = (ilr_forward(&p, &basis)?, ilr_forward(&q, &basis)?);
    println!("phi(p) = {:?}", zp.as_slice());
    println!("phi^-1(phi(p)) = {:?}", ilr_inverse(&zp, &basis)?.as_slice());
    println!("Aitchison d(p, q) = {:.12}", aitchison_distance(&p, &q)?);
    println!("Euclidean |phi(p) - phi(q)| = {:.12}", zp.distance(&zq));

    println!("\n lambda   K   delta    sigma");
    for lambda in [0.9, 0.99, 0.999] {
        for k in [3, 10, 100] {
            let cfg = SmoothingConfig::with_default_epsilon(lambda, k)?;
            println!("{lambda:>7} {k:>3} {:>7.4} {:>8.5}", separation_delta(&cfg), sigma_bound(&cfg));
        }
    }

    let cfg = SmoothingConfig::with_default_epsilon(0.9, 3)?;
    let basis = HelmertBasis::new(3)?;
    let targets = class_targets(&cfg, &basis)?;
    println!("\nclass targets for K=3, lambda=0.9:");
    for (k, t) in targets.iter().enumerate() {
        println!("  m({k}) = {:?}", t.as_slice());
    }
    println!("pairwise distance {:.6}", targets[0].distance(&targets[1]));
    Ok(())
}
