//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timelowfer::{Model, ModelShape, Quadruple, TimeEncoder, Variant};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn model(variant: Variant, num_entities: usize, num_timestamps: usize, d: usize, k: usize) -> Model {
    let shape = ModelShape {
        variant,
        num_entities,
        num_relations: 10,
        d_e: d,
        d_r: d,
        d_t: d,
        k: if variant == Variant::Ftp { 1 } else { k },
    };
    Model::new(shape, Some(TimeEncoder::simple(num_timestamps)), &mut rng(1)).expect("valid shape")
}

pub fn random_quads(n: usize, num_entities: usize, num_relations: usize, num_timestamps: usize) -> Vec<Quadruple> {
    let mut r = rng(2);
    (0..n)
        .map(|_| {
            Quadruple::new(
                r.random_range(0..num_entities),
                r.random_range(0..num_relations),
                r.random_range(0..num_entities),
                r.random_range(0..num_timestamps),
            )
        })
        .collect()
}
