use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timelowfer::data::parse_date;
use timelowfer::train::PreparedData;
use timelowfer::{
    Dataset, EncoderKind, EvalMode, FilterIndex, ModelShape, QueryKey, RawQuadruple, TimeEncoder, TrainConfig,
    Trainer, Variant,
};

const VARIANTS: [Variant; 5] = [Variant::LowFer, Variant::T, Variant::Tnt, Variant::Cfb, Variant::Ftp];

fn raw(s: &str, p: &str, o: &str, t: &str) -> RawQuadruple {
    RawQuadruple {
        subject: s.into(),
        predicate: p.into(),
        object: o.into(),
        timestamp: parse_date(t).unwrap(),
    }
}

fn small_config(variant: Variant) -> TrainConfig {
    TrainConfig {
        variant,
        encoder: EncoderKind::Ste,
        d_e: 8,
        d_r: 8,
        d_t: 8,
        k: if variant == Variant::Ftp { 1 } else { 2 },
        batch_size: 4,
        epochs: 10,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn twenty_facts() -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let days = ["2014-01-01", "2014-01-08", "2014-02-14", "2014-03-01"];
    let facts: Vec<_> = (0..20)
        .map(|i| {
            raw(
                &format!("e{}", rng.random_range(0..8)),
                &format!("r{}", i % 3),
                &format!("e{}", rng.random_range(0..8)),
                days[i % days.len()],
            )
        })
        .collect();
    Dataset::from_raw(&facts, &[], &[]).unwrap()
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let data = PreparedData::new(&twenty_facts(), 1).unwrap();
    for variant in VARIANTS {
        let config = TrainConfig {
            lr: 0.0,
            ..small_config(variant)
        };
        let model = data.build_model(&config).unwrap();
        let before = model.params.clone();
        let mut trainer = Trainer::new(model, config).unwrap();
        trainer.run_epoch(&data.train_rows).unwrap();
        assert_eq!(trainer.model.params, before, "{variant}");
    }
}

#[test]
fn single_fact_is_memorized() {
    let dataset = Dataset::from_raw(&[raw("a", "likes", "b", "2014-05-05")], &[], &[]).unwrap();
    let data = PreparedData::new(&dataset, 1).unwrap();
    for variant in VARIANTS {
        let config = TrainConfig {
            epochs: 200,
            batch_size: 1,
            label_smoothing: 0.0,
            input_dropout: 0.0,
            hidden_dropout: 0.0,
            ..small_config(variant)
        };
        let mut trainer = Trainer::new(data.build_model(&config).unwrap(), config).unwrap();
        let history = trainer.fit(&data.train_rows).unwrap();
        let loss = *history.losses().last().unwrap();
        assert!(loss < 0.01, "{variant}: loss {loss}");
        let filter = FilterIndex::build(&[&data.train], data.num_relations).unwrap();
        let m = timelowfer::eval::evaluate(&trainer.model, &data.train, &filter, EvalMode::Raw, "train").unwrap();
        assert_eq!(m.mrr, 1.0, "{variant}");
    }
}

#[test]
fn same_seed_same_run() {
    let data = PreparedData::new(&twenty_facts(), 1).unwrap();
    for variant in VARIANTS {
        let run = || {
            let config = small_config(variant);
            let mut t = Trainer::new(data.build_model(&config).unwrap(), config).unwrap();
            t.fit(&data.train_rows).unwrap();
            (t.model.params, t.history.losses())
        };
        assert_eq!(run(), run(), "{variant}");
    }
}

#[test]
fn different_seed_different_run() {
    let data = PreparedData::new(&twenty_facts(), 1).unwrap();
    let run = |seed| {
        let config = TrainConfig {
            seed,
            ..small_config(Variant::Cfb)
        };
        let mut t = Trainer::new(data.build_model(&config).unwrap(), config).unwrap();
        t.fit(&data.train_rows).unwrap();
        t.model.params
    };
    assert_ne!(run(1), run(2));
}

#[test]
fn loss_decreases_for_every_variant_and_encoder() {
    let data = PreparedData::new(&twenty_facts(), 1).unwrap();
    for variant in VARIANTS {
        for encoder in [EncoderKind::Ste, EncoderKind::Cte] {
            let config = TrainConfig {
                encoder,
                epochs: 30,
                ..small_config(variant)
            };
            let mut t = Trainer::new(data.build_model(&config).unwrap(), config).unwrap();
            let losses = t.fit(&data.train_rows).unwrap().losses();
            let (first, last) = (losses[0], *losses.last().unwrap());
            assert!(last < first, "{variant} {encoder:?}: {first} -> {last}");
        }
    }
}

#[test]
fn huge_learning_rate_diverges_with_context() {
    // Adam moves each coordinate by roughly `lr` per step, so the four-factor
    // FTP score overflows once the parameters reach about 1e100.
    let data = PreparedData::new(&twenty_facts(), 1).unwrap();
    let config = TrainConfig {
        lr: 1e100,
        epochs: 50,
        label_smoothing: 0.0,
        ..small_config(Variant::Ftp)
    };
    let mut t = Trainer::new(data.build_model(&config).unwrap(), config).unwrap();
    match t.fit(&data.train_rows) {
        Err(timelowfer::Error::Diverged { epoch, batch }) => assert!((1..=50).contains(&epoch) && (1..=5).contains(&batch)),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn time_resampling_shrinks_the_model() {
    let dataset = twenty_facts();
    let fine = PreparedData::new(&dataset, 1).unwrap();
    let coarse = PreparedData::new(&dataset, 3).unwrap();
    assert_eq!(fine.num_timestamps, 4);
    assert_eq!(coarse.num_timestamps, 2);
    assert_eq!(coarse.time_dates[1], fine.time_dates[3]);
    let config = small_config(Variant::T);
    let m = coarse.build_model(&config).unwrap();
    assert_eq!(m.time_encoder.as_ref().unwrap().num_timestamps(), 2);
}

#[test]
fn filtered_ranks_never_exceed_raw_ranks() {
    let data = PreparedData::new(&twenty_facts(), 1).unwrap();
    let config = small_config(Variant::Tnt);
    let model = data.build_model(&config).unwrap();
    let filter = FilterIndex::build(&[&data.train], data.num_relations).unwrap();
    let f = timelowfer::eval::query_ranks(&model, &data.train, &filter, EvalMode::Filtered).unwrap();
    let r = timelowfer::eval::query_ranks(&model, &data.train, &filter, EvalMode::Raw).unwrap();
    assert!(f.iter().zip(&r).all(|(a, b)| a <= b));
    assert!(f.iter().zip(&r).any(|(a, b)| a < b));
}

#[test]
fn random_model_matches_monte_carlo_baseline() {
    // 50 entities, 500 distinct random facts, fresh random model scored raw.
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut facts = std::collections::BTreeSet::new();
    while facts.len() < 500 {
        facts.insert(timelowfer::Quadruple::new(
            rng.random_range(0..50),
            rng.random_range(0..5),
            rng.random_range(0..50),
            rng.random_range(0..10),
        ));
    }
    let facts: Vec<_> = facts.into_iter().collect();
    let shape = ModelShape {
        variant: Variant::Cfb,
        num_entities: 50,
        num_relations: 5,
        d_e: 16,
        d_r: 16,
        d_t: 16,
        k: 4,
    };
    let model = timelowfer::Model::new(shape, Some(TimeEncoder::simple(10)), &mut rng).unwrap();
    let filter = FilterIndex::build(&[&facts], 5).unwrap();
    let m = timelowfer::eval::evaluate(&model, &facts, &filter, EvalMode::Raw, "all").unwrap();

    let trials = 200_000;
    let mc: f64 = (0..trials).map(|_| 1.0 / (rng.random_range(0..50) + 1) as f64).sum::<f64>() / trials as f64;
    assert!((m.mrr - mc).abs() <= 0.3 * mc, "model {} vs Monte-Carlo {mc}", m.mrr);
}

#[test]
fn scores_are_independent_of_batch_context() {
    let data = PreparedData::new(&twenty_facts(), 1).unwrap();
    let model = data.build_model(&small_config(Variant::Cfb)).unwrap();
    let key = QueryKey { s: 0, p: 1, t: 2 };
    assert_eq!(model.score_query(key).unwrap(), model.score_query(key).unwrap());
}
