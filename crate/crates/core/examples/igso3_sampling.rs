//! Samples the isotropic Gaussian on SO(3) and compares the angle histogram
//! with the density.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reassembly::geometry::{igso3_pdf, Igso3Table, RotationMatrix3};

fn main() -> reassembly::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bins = 12;
    let width = std::f64::consts::PI / bins as f64;
    for eps2 in [0.05, 0.2, 1.0] {
        let table = Igso3Table::new(eps2)?;
        let n = 20_000;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let w = table.sample(&RotationMatrix3::identity(), &mut rng).angle();
            counts[((w / width) as usize).min(bins - 1)] += 1;
        }
        println!("eps2 = {eps2}");
        for (b, c) in counts.iter().enumerate() {
            let mid = (b as f64 + 0.5) * width;
            let expected = igso3_pdf(mid, eps2)? * width * n as f64;
            println!("  {mid:5.2} rad  sampled {c:6}  density {expected:8.1}");
        }
    }
    Ok(())
}
