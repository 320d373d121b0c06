//! Shared random-instance corpus for the integration suites. Slopes are
//! log-uniform in [0.1, 10] and intercepts uniform in [0, 10]; normalization
//! makes the intercepts distinct.

use parlink::model::Instance;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_instance(rng: &mut ChaCha8Rng, max_links: usize) -> Instance {
    let m = rng.gen_range(1..=max_links);
    let links: Vec<(f64, f64)> = (0..m)
        .map(|_| {
            let a = 10f64.powf(rng.gen_range(-1.0..1.0));
            let b = rng.gen_range(0.0..10.0);
            (a, b)
        })
        .collect();
    Instance::from_pairs(&links).normalize().expect("random instance is valid").0
}

pub fn corpus(seed: u64, count: usize, max_links: usize) -> Vec<Instance> {
    let mut rng = rng(seed);
    (0..count).map(|_| random_instance(&mut rng, max_links)).collect()
}
