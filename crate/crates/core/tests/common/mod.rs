#![allow(dead_code)]

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timelowfer::scoring::DropoutMasks;
use timelowfer::train::{bce_loss, smooth_targets};
use timelowfer::{
    DenseMatrix, EncoderKind, FusedQuery, Model, ModelParams, ModelShape, QueryKey, TimeEncoder, Variant,
};

pub const NUM_ENTITIES: usize = 5;
pub const NUM_RELATIONS: usize = 3;
pub const NUM_TIMESTAMPS: usize = 4;

pub fn tiny_dates() -> Vec<NaiveDate> {
    ["2014-01-01", "2014-03-31", "2014-07-04", "2016-02-29"]
        .iter()
        .map(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").unwrap())
        .collect()
}

/// |E|=5, |R|=3, |T|=4, d=4, k=2 (k=1 for FTP).
pub fn tiny_model(variant: Variant, encoder: EncoderKind, seed: u64) -> Model {
    let k = if variant == Variant::Ftp { 1 } else { 2 };
    let shape = ModelShape {
        variant,
        num_entities: NUM_ENTITIES,
        num_relations: NUM_RELATIONS,
        d_e: 4,
        d_r: 4,
        d_t: 4,
        k,
    };
    let enc = match encoder {
        EncoderKind::Ste => TimeEncoder::simple(NUM_TIMESTAMPS),
        EncoderKind::Cte => TimeEncoder::cyclic(&tiny_dates()).unwrap(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(shape, Some(enc), &mut rng).unwrap();
    // Larger-than-default magnitudes keep every gradient coordinate well away
    // from the 1e-8 floor of the relative error.
    for (_, m) in model.params.tensors_mut() {
        for x in m.as_mut_slice() {
            *x = rng.random_range(-1.0..1.0);
        }
    }
    model
}

pub struct Row {
    pub key: QueryKey,
    pub objects: BTreeSet<usize>,
    pub masks: DropoutMasks,
}

pub fn random_rows(model: &Model, n: usize, dropout: bool, seed: u64) -> Vec<Row> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let kd = model.shape.projection_dim();
    let d_e = model.shape.d_e;
    (0..n)
        .map(|_| {
            let key = QueryKey {
                s: rng.random_range(0..NUM_ENTITIES),
                p: rng.random_range(0..2 * NUM_RELATIONS),
                t: rng.random_range(0..NUM_TIMESTAMPS),
            };
            let mut objects = BTreeSet::new();
            objects.insert(rng.random_range(0..NUM_ENTITIES));
            if rng.random_bool(0.5) {
                objects.insert(rng.random_range(0..NUM_ENTITIES));
            }
            let mut mask = |len: usize| -> Option<Vec<f64>> {
                dropout.then(|| (0..len).map(|_| if rng.random_bool(0.2) { 0.0 } else { 1.25 }).collect())
            };
            let masks = DropoutMasks {
                input: mask(kd),
                hidden: mask(d_e),
            };
            Row { key, objects, masks }
        })
        .collect()
}

fn forward_rows(model: &Model, rows: &[Row]) -> Vec<FusedQuery> {
    rows.iter().map(|r| model.forward(r.key, r.masks.clone()).unwrap()).collect()
}

/// Mean label-smoothed BCE over the rows.
pub fn batch_loss(model: &Model, rows: &[Row]) -> f64 {
    let fused = forward_rows(model, rows);
    let mut total = 0.0;
    for (f, r) in fused.iter().zip(rows) {
        let logits = model.score(f).unwrap();
        let y = smooth_targets(&r.objects, NUM_ENTITIES, 0.1).unwrap();
        total += bce_loss(logits.as_slice(), y.as_slice()).unwrap().0;
    }
    total / rows.len() as f64
}

pub fn batch_grads(model: &Model, rows: &[Row]) -> ModelParams {
    let fused = forward_rows(model, rows);
    let mut dlogits = DenseMatrix::zeros(rows.len(), NUM_ENTITIES);
    for (i, (f, r)) in fused.iter().zip(rows).enumerate() {
        let logits = model.score(f).unwrap();
        let y = smooth_targets(&r.objects, NUM_ENTITIES, 0.1).unwrap();
        let (_, g) = bce_loss(logits.as_slice(), y.as_slice()).unwrap();
        for (d, x) in dlogits.row_mut(i).iter_mut().zip(g.as_slice()) {
            *d = x / rows.len() as f64;
        }
    }
    let mut grads = model.params.zeros_like();
    model.backward(&fused, &dlogits, &mut grads).unwrap();
    grads
}

/// Finite-difference check of the batch loss for one model.
pub fn check_model(model: &Model, rows: &[Row], seed: u64) -> timelowfer::GradCheckReport {
    let grads = batch_grads(model, rows);
    let mut params = model.params.clone();
    let shape = model.shape;
    let encoder = model.time_encoder.clone();
    timelowfer::finite_diff_check(
        &mut params,
        &grads,
        |p| {
            let m = Model {
                shape,
                params: p.clone(),
                time_encoder: encoder.clone(),
            };
            batch_loss(&m, rows)
        },
        timelowfer::GradCheckOptions {
            epsilon: 1e-5,
            max_coords_per_tensor: 256,
            seed,
        },
    )
    .unwrap()
}

pub fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 { 0.0 } else { (x - y).abs() / scale }
        })
        .fold(0.0, f64::max)
}
