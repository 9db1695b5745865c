//! How often a single draw from the Dirichlet baseline's noisy pseudo-targets
//! ranks the true class below another one, across K and alpha_eps.

use ilr_gp::experiments::{gpd_recovery, RecoveryConfig};

fn main() -> ilr_gp::Result<()> {
    let cfg = RecoveryConfig {
        samples: 20_000,
        ..Default::default()
    };
    let rows = gpd_recovery(&cfg)?;
    print!("{:>5}", "K");
    for a in &cfg.alpha_eps {
        print!("{:>9}", a);
    }
    println!();
    for &k in &cfg.classes {
        print!("{k:>5}");
        for &a in &cfg.alpha_eps {
            let r = rows.iter().find(|r| r.classes == k && r.alpha_eps == a).expect("row");
            print!("{:>9.4}", r.error);
        }
        println!();
    }
    Ok(())
}
