//! Regenerates the bundled pool corpus and demo operator scripts.
//!
//! Run from the crate directory: `cargo run --example gen_assets`.

use std::fmt::Write as _;
use std::fs;

use hri_interface::obschannel::pnm;
use hri_interface::obschannel::synthetic::pool_corpus;

fn main() -> hri_interface::Result<()> {
    for (i, img) in pool_corpus().iter().enumerate() {
        pnm::write(format!("data/pool/pool-{i}.ppm"), img)?;
    }

    // 30 s at 20 Hz: straight, a left look, straight, a right look.
    let mut turns = String::from("t,head,body\n");
    let mut head = 0.0f64;
    for k in 0..600 {
        let t = k as f64 / 20.0;
        head += match t {
            t if (5.0..8.0).contains(&t) => 0.04,
            t if (15.0..18.0).contains(&t) => -0.04,
            _ => 0.0,
        };
        let _ = writeln!(turns, "{t},{head},0.6");
    }
    fs::write("configs/scripts/turns.csv", turns)?;

    let mut idle = String::from("t,head,body\n");
    for k in 0..200 {
        let _ = writeln!(idle, "{},0,0", k as f64 / 20.0);
    }
    fs::write("configs/scripts/idle.csv", idle)?;
    Ok(())
}
