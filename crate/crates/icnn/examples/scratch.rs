use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Smooth horizontally-predictable images: right half inferable from left.
fn main() {
    let dir = std::path::Path::new("/tmp/faces16");
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (h, w) = (16usize, 16usize);
    for i in 0..400 {
        let fx = 0.4 + rng.gen::<f64>() * 1.1;
        let fy = 0.4 + rng.gen::<f64>() * 1.1;
        let phase = rng.gen::<f64>() * std::f64::consts::TAU;
        let cx = rng.gen::<f64>() * h as f64;
        let amp = 0.3 + 0.2 * rng.gen::<f64>();
        let mut px = vec![0.0f64; h * w];
        for r in 0..h {
            for c in 0..w {
                let v = 0.5
                    + amp
                        * ((std::f64::consts::TAU * (fx * c as f64 / w as f64) + phase).sin()
                            * (std::f64::consts::TAU * (fy * (r as f64 - cx) / h as f64)).cos());
                px[r * w + c] = v.clamp(0.0, 1.0);
            }
        }
        std::fs::write(
            dir.join(format!("img_{i:03}.pgm")),
            icnn::data::encode_pgm(h, w, &px),
        )
        .unwrap();
    }
    println!("wrote 120 images");
}
