use glossbench_core::dataset::gen_synthetic;
use glossbench_core::tokenizer::{train_tokenizer, BOS, EOS};
use glossbench_core::{ArchTag, Dataset, SplitMix64, SubwordVocab};
use glossbench_neural::baselines::{
    generate_defmod, predict_revdict, train_defmod, train_revdict, BaselineError, DefmodExample, DefmodModel,
    ModelConfig, ModelMeta, RevdictExample, RevdictModel, TrainConfig,
};
use glossbench_neural::gradcheck::check_gradients;
use glossbench_neural::{Graph, OptimizerConfig};

const WORDS: [&str; 12] = [
    "cat", "dog", "runs", "small", "the", "a", "of", "animal", "big", "fast", "red", "tree",
];

fn fixture() -> (Dataset, SubwordVocab) {
    let ds = gen_synthetic(3, 8, 8, &WORDS).unwrap();
    let glosses: Vec<&str> = ds.items.iter().map(|i| i.gloss.as_str()).collect();
    let tok = train_tokenizer(&glosses, 80).unwrap();
    (ds, tok)
}

fn overfit_config() -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            d_model: 16,
            layers: 1,
            heads: 2,
            ff_dim: 64,
            max_len: 40,
        },
        max_epochs: 2000,
        patience: 2000,
        batch_size: 8,
        dropout: 0.0,
        label_smoothing: 0.0,
        optimizer: OptimizerConfig {
            lr: 1e-2,
            ..Default::default()
        },
        warmup_steps: 50,
        max_steps: Some(2000),
        seed: 1,
        ..Default::default()
    }
}

fn tiny_meta(vocab_size: usize, vector_dim: usize) -> ModelMeta {
    ModelMeta {
        model: ModelConfig {
            d_model: 8,
            layers: 1,
            heads: 2,
            ff_dim: 8,
            max_len: 8,
        },
        vocab_size,
        vector_dim,
        arch: ArchTag::Sgns,
    }
}

fn tiny_tokenizer() -> SubwordVocab {
    train_tokenizer(&["ab ba", "b"], 10).unwrap()
}

/// Moves every parameter off its initialization so no gradient is trivially zero.
fn jitter(store: &mut glossbench_neural::ParamStore, seed: u64) {
    let mut rng = SplitMix64::new(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data.iter_mut() {
            *v += 0.3 * rng.normal();
        }
    }
}

#[test]
fn revdict_end_to_end_gradients() {
    let tok = tiny_tokenizer();
    let mut model = RevdictModel::new(tiny_meta(tok.len(), 3), tok.clone(), 5).unwrap();
    jitter(&mut model.store, 6);
    let v = tok.len();
    let batch = [
        RevdictExample {
            ids: vec![2, 4 % v, 5 % v, 3],
            target: vec![0.5, -1.0, 0.2],
        },
        RevdictExample {
            ids: vec![2, 6 % v, 3],
            target: vec![-0.3, 0.1, 0.9],
        },
    ];
    let net = model.net.clone();
    for seed in [None, Some(3)] {
        let report = check_gradients(&mut model.store, seed, |g| {
            net.loss(g, &[&batch[0], &batch[1]], if seed.is_some() { 0.1 } else { 0.0 })
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }
}

#[test]
fn defmod_end_to_end_gradients() {
    let tok = tiny_tokenizer();
    let v = tok.len();
    // vector width differs from d_model, so the input projection is exercised
    let mut model = DefmodModel::new(tiny_meta(v, 5), tok.clone(), 7).unwrap();
    assert!(model.net.input_projection.is_some());
    jitter(&mut model.store, 8);
    let a = DefmodExample::new(vec![0.1, -0.4, 0.8, 0.0, 1.2], &[2, 4 % v, 5 % v, 3]);
    let b = DefmodExample::new(vec![-1.0, 0.3, 0.3, 0.5, -0.2], &[2, 6 % v, 3]);
    let net = model.net.clone();
    for seed in [None, Some(3)] {
        let report = check_gradients(&mut model.store, seed, |g| {
            net.loss(g, &[&a, &b], if seed.is_some() { 0.1 } else { 0.0 }, 0.1)
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }
}

#[test]
fn revdict_overfits_and_is_deterministic() {
    let (ds, tok) = fixture();
    let cfg = overfit_config();
    let (model, report, ck) = train_revdict(&ds, &ds, ArchTag::Sgns, &tok, &cfg).unwrap();
    assert!(report.steps <= 2000);
    let mse = model.mean_loss(&model.examples(&ds).unwrap()).unwrap();
    assert!(mse < 1e-3, "train mse {mse}");

    // memorized items come back through the checkpoint path too
    let ids: Vec<u32> = {
        let ex = model.examples(&ds).unwrap();
        ex[0].ids.iter().map(|&i| i as u32).collect()
    };
    let pred = predict_revdict(&ck, &ids).unwrap();
    assert_eq!(pred.len(), 8);
    let target = ds.items[0].embedding(ArchTag::Sgns).unwrap();
    let err: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / 8.0;
    assert!(err < 1e-2, "item 0 error {err}");

    let short = TrainConfig {
        max_steps: Some(15),
        ..cfg
    };
    let (_, _, a) = train_revdict(&ds, &ds, ArchTag::Sgns, &tok, &short).unwrap();
    let (_, _, b) = train_revdict(&ds, &ds, ArchTag::Sgns, &tok, &short).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn revdict_output_dimension_and_order_sensitivity() {
    let tok = tiny_tokenizer();
    for dim in [1, 3, 17] {
        let model = RevdictModel::new(tiny_meta(tok.len(), dim), tok.clone(), 1).unwrap();
        assert_eq!(model.predict(&[BOS, 4, EOS]).unwrap().len(), dim);
    }
    let model = RevdictModel::new(tiny_meta(tok.len(), 4), tok.clone(), 2).unwrap();
    let ab = model.predict(&[BOS, 4, 5, EOS]).unwrap();
    let ba = model.predict(&[BOS, 5, 4, EOS]).unwrap();
    assert_ne!(ab, ba, "positional encodings make order matter");
    let err = model.predict(&[BOS, tok.len() as u32, EOS]).unwrap_err();
    assert!(matches!(err, BaselineError::TokenOutOfRange { .. }));
}

#[test]
fn defmod_overfits_and_decodes_memorized_glosses() {
    let (ds, tok) = fixture();
    let cfg = overfit_config();
    let (model, report, ck) = train_defmod(&ds, &ds, ArchTag::Sgns, &tok, &cfg).unwrap();
    assert!(report.steps <= 2000);
    let examples = model.examples(&ds).unwrap();
    let acc = model.token_accuracy(&examples).unwrap();
    assert!(acc >= 0.99, "accuracy {acc}");

    for ex in &examples {
        let gold: Vec<u32> = ex.targets[1..].iter().map(|&t| t as u32).collect();
        let greedy = model.greedy(&ex.vector, 64).unwrap();
        let beam1 = model.generate(&ex.vector, 1, 64).unwrap();
        assert_eq!(beam1.tokens, greedy, "beam 1 must equal greedy");
        let beam4 = model.generate(&ex.vector, 4, 64).unwrap();
        assert_eq!(beam4.tokens, gold);
        for step in &beam4.trace {
            assert!(step.windows(2).all(|w| w[0] >= w[1]), "{step:?}");
        }
        assert_eq!(model.generate(&ex.vector, 4, 1).unwrap().tokens.len(), 1);
        assert_eq!(model.greedy(&ex.vector, 1).unwrap().len(), 1);
    }
    let via_ck = generate_defmod(&ck, &examples[0].vector, 4, 64).unwrap();
    assert_eq!(*via_ck.last().unwrap(), EOS);
    assert_eq!(
        model.generate_gloss(&examples[0].vector, 4, 64).unwrap(),
        ds.items[0].gloss
    );
}

#[test]
fn defmod_initial_loss_is_log_vocab() {
    let (ds, tok) = fixture();
    let cfg = overfit_config();
    let meta = ModelMeta {
        model: cfg.model.clone(),
        vocab_size: tok.len(),
        vector_dim: 8,
        arch: ArchTag::Sgns,
    };
    let model = DefmodModel::new(meta, tok.clone(), 11).unwrap();
    let examples = model.examples(&ds).unwrap();
    let ln_v = (tok.len() as f64).ln();
    for smoothing in [0.0, 0.1] {
        let loss = model.mean_loss(&examples, smoothing).unwrap();
        assert!((loss - ln_v).abs() <= 0.05 * ln_v, "loss {loss} vs ln V {ln_v}");
    }
}

#[test]
fn defmod_future_tokens_do_not_reach_earlier_positions() {
    let tok = tiny_tokenizer();
    let mut model = DefmodModel::new(tiny_meta(tok.len(), 8), tok.clone(), 4).unwrap();
    jitter(&mut model.store, 5);
    let d = [0.3, -0.2, 0.1, 0.9, -1.1, 0.4, 0.0, 0.2];
    let logits = |prefix: &[usize]| {
        let mut g = Graph::new(&model.store);
        let l = model.net.logits(&mut g, &d, prefix, 0.0).unwrap();
        g.value(l).clone()
    };
    let base = logits(&[2, 4, 5, 6, 4]);
    let changed = logits(&[2, 4, 6, 4, 5]);
    for t in 0..3 {
        assert_eq!(base.row_slice(t), changed.row_slice(t));
    }
    assert_ne!(base.row_slice(3), changed.row_slice(3));
}

#[test]
fn missing_arch_and_empty_set_are_errors() {
    let (ds, tok) = fixture();
    let cfg = TrainConfig {
        max_steps: Some(1),
        ..overfit_config()
    };
    assert!(matches!(
        train_revdict(&ds, &ds, ArchTag::Electra, &tok, &cfg),
        Err(BaselineError::MissingArch(ArchTag::Electra))
    ));
    let empty = Dataset::from_items(Vec::new(), "syn").unwrap();
    assert!(matches!(
        train_defmod(&empty, &ds, ArchTag::Sgns, &tok, &cfg),
        Err(BaselineError::EmptyTrainingSet)
    ));
}
