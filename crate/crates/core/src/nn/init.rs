use rand::Rng;

/// `n` draws from U(−bound, bound), rounded through `f32` so freshly built
/// parameters are exactly representable in a weight file.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if bound > 0.0 {
                rng.random_range(-bound..bound) as f32 as f64
            } else {
                0.0
            }
        })
        .collect()
}

pub fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

pub const PRELU_INIT: f64 = 0.25;
pub const LSIGMOID_ALPHA_INIT: f64 = 1.0;
pub const LSIGMOID_BETA: f64 = 2.0;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_stay_in_bounds_and_are_f32_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = uniform(&mut rng, 1000, fan_in_bound(16));
        assert!(v.iter().all(|&x| x.abs() < 0.25 && (x as f32) as f64 == x));
    }
}
