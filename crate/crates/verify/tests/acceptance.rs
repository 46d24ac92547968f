//! One PASS/FAIL line per acceptance criterion. `FBSDE_ACCEPT_SCALE` shrinks the
//! Monte Carlo sizes for quick local runs; the default is the full suite.

use fbsde_verify::{run_one, AcceptanceConfig, CRITERIA};

fn main() {
    let mut cfg = AcceptanceConfig::default();
    if let Some(s) = std::env::var("FBSDE_ACCEPT_SCALE").ok().and_then(|v| v.parse().ok()) {
        cfg.scale = s;
    }
    let only: Option<u32> = std::env::var("FBSDE_ACCEPT_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (id, _) in CRITERIA {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let r = run_one(id, &cfg);
        println!("{r}");
        failed += !r.pass as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
