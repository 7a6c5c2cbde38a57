//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines always print.

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::{Map, Value};

use glossbench_core::dataset::gen_synthetic;
use glossbench_core::metrics::bleu::{sense_bleu, BleuConfig};
use glossbench_core::metrics::revdict::{cosine, mse, rank_metric, VectorBatch};
use glossbench_core::metrics::tokenize_gloss;
use glossbench_core::ot::{solve_exact, solve_sinkhorn, SinkhornConfig, TransportProblem};
use glossbench_core::tokenizer::train_tokenizer;
use glossbench_core::{ArchTag, SplitMix64};
use glossbench_harness::{build_leaderboard, Leaderboard, MetricsConfig, Track};
use glossbench_hyperopt::{optimize, random_search, ParamSpec, Scale, SearchSpace};
use glossbench_neural::baselines::{
    train_defmod, train_revdict, DefmodExample, DefmodModel, ModelConfig, ModelMeta, RevdictExample, RevdictModel,
    TrainConfig,
};
use glossbench_neural::char_ae::{pseudo_words, train_char_ae, train_char_ae_with, CharAeConfig};
use glossbench_neural::gradcheck::check_gradients;
use glossbench_neural::layers::{
    positional_encoding, Embedding, EncoderLayer, FeedForward, LayerNorm, Linear, LstmCell, MultiHeadAttention,
};
use glossbench_neural::{lr_at, EarlyStopping, Graph, LrSchedule, OptimizerConfig, ParamStore, StopVerdict, Tensor};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

fn normals(rng: &mut SplitMix64, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect()
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(1001);
    let mut items = 0;
    for fixture in 0..50 {
        let n = if fixture == 0 { 200 } else { 1 + rng.below(200) };
        let d = if fixture == 0 { 32 } else { 1 + rng.below(32) };
        let preds = normals(&mut rng, n, d);
        let targets = normals(&mut rng, n, d);
        for (p, t) in preds.iter().zip(&targets) {
            let (a, b) = (mse(p, t).unwrap(), oracles::mse_loop(p, t));
            ensure(rel_close(a, b, 1e-12), || format!("mse {a} vs {b}"))?;
            let (a, b) = (cosine(p, t).unwrap(), oracles::cosine_loop(p, t));
            ensure(rel_close(a, b, 1e-12), || format!("cosine {a} vs {b}"))?;
        }
        let fast = rank_metric(&VectorBatch::from_rows(&preds).unwrap(), &VectorBatch::from_rows(&targets).unwrap()).unwrap();
        ensure(fast == oracles::rank_loop(&preds, &targets), || format!("rank differs on fixture {fixture}"))?;
        items += n;
    }
    within(Duration::from_secs(5), start)?;
    Ok(format!("50 fixtures, {items} items, {:.2?}", start.elapsed()))
}

fn random_calibration() -> Outcome {
    let mut means = Vec::new();
    for seed in 0..10 {
        let mut rng = SplitMix64::new(500 + seed);
        let p = normals(&mut rng, 500, 16);
        let t = normals(&mut rng, 500, 16);
        let ranks = rank_metric(&VectorBatch::from_rows(&p).unwrap(), &VectorBatch::from_rows(&t).unwrap()).unwrap();
        let m = ranks.iter().sum::<f64>() / ranks.len() as f64;
        ensure((0.45..=0.55).contains(&m), || format!("seed {seed}: mean rank {m}"))?;
        means.push(m);
    }
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(format!("mean rank in [{lo:.4}, {hi:.4}] over 10 seeds"))
}

fn bleu_correctness() -> Outcome {
    let mut rng = SplitMix64::new(303);
    let words = ["a", "b", "c", "d", "e", "f"];
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let r: Vec<&str> = (0..4 + rng.below(12)).map(|_| words[rng.below(3)]).collect();
        let h: Vec<&str> = (0..1 + rng.below(15)).map(|_| words[rng.below(4)]).collect();
        let got = sense_bleu(&h, &r, BleuConfig::default()).unwrap();
        let want = oracles::naive_bleu(&h, &r, 4);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("{h:?} vs {r:?}: {got} vs {want}"))?;
    }
    let three = tokenize_gloss("x y z");
    let got = sense_bleu(&three, &three, BleuConfig::default()).unwrap();
    let hand = (1.0 / 3f64.ln()).powf(0.25);
    ensure((got - 0.9768).abs() <= 1e-4 && (got - hand).abs() <= 1e-6, || format!("#d=3 perfect match {got}"))?;
    Ok(format!("200 pairs max |diff| {worst:.1e}; #d=3 perfect match {got:.6}"))
}

fn simplex(rng: &mut SplitMix64, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.next_f64() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn ot_solvers() -> Outcome {
    let start = Instant::now();
    let mut rng = SplitMix64::new(404);
    let cfg = SinkhornConfig::default();
    let (mut gap, mut exact_err): (f64, f64) = (0.0, 0.0);
    for k in 0..100 {
        let (m, n) = (1 + rng.below(4), 1 + rng.below(4));
        let a = simplex(&mut rng, m);
        let b = simplex(&mut rng, n);
        let cost: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.next_f64()).collect()).collect();
        let brute = oracles::ot_vertex_enumeration(&a, &b, &cost);
        let p = TransportProblem::new(a, b, cost).unwrap();
        let exact = solve_exact(&p).unwrap().cost;
        let sk = solve_sinkhorn(&p, cfg).unwrap().cost;
        exact_err = exact_err.max((exact - brute).abs());
        gap = gap.max((sk - exact).abs());
        ensure((exact - brute).abs() <= 1e-6, || format!("problem {k}: exact {exact} vs enumeration {brute}"))?;
        let bound = cfg.epsilon * ((m * n) as f64).ln() + 1e-6;
        ensure((sk - exact).abs() <= bound, || format!("problem {k}: sinkhorn {sk} vs exact {exact}"))?;
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!(
        "100 problems, exact vs enumeration {exact_err:.1e}, sinkhorn gap {gap:.1e}, {:.2?}",
        start.elapsed()
    ))
}

fn grad_ok(
    label: &str,
    store: &mut ParamStore,
    seed: Option<u64>,
    build: impl Fn(&mut Graph) -> glossbench_neural::graph::Result<glossbench_neural::NodeId>,
) -> Result<f64, String> {
    let r = check_gradients(store, seed, build).map_err(|e| format!("{label}: {e}"))?;
    ensure(r.max_rel_error <= 1e-4, || {
        format!("{label}: rel err {} at {}[{}]", r.max_rel_error, r.worst_param, r.worst_index)
    })?;
    Ok(r.max_rel_error)
}

fn random(rng: &mut SplitMix64, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect())
}

fn jitter(store: &mut ParamStore, seed: u64) {
    let mut rng = SplitMix64::new(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data.iter_mut() {
            *v += 0.3 * rng.normal();
        }
    }
}

fn autodiff() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rng = SplitMix64::new(505);
    let mut target = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.normal()).collect() };
    let mut r = SplitMix64::new(506);

    let mut s = ParamStore::new();
    let x = s.add("x", random(&mut r, 3, 4));
    let lin = Linear::new(&mut s, &mut r, "lin", 4, 5, true);
    let t = target(15);
    worst = worst.max(grad_ok("linear", &mut s, None, |g| {
        let xn = g.param(x);
        let y = lin.forward(g, xn)?;
        g.mse(y, &t)
    })?);

    let mut s = ParamStore::new();
    let emb = Embedding::new(&mut s, &mut r, "emb", 6, 3);
    let t = target(12);
    worst = worst.max(grad_ok("embedding", &mut s, None, |g| {
        let y = emb.forward(g, &[1, 4, 1, 0])?;
        g.mse(y, &t)
    })?);

    let mut s = ParamStore::new();
    let x = s.add("x", random(&mut r, 3, 5));
    let ln = LayerNorm::new(&mut s, "ln", 5);
    jitter(&mut s, 1);
    let t = target(15);
    worst = worst.max(grad_ok("layer_norm", &mut s, None, |g| {
        let xn = g.param(x);
        let y = ln.forward(g, xn)?;
        g.mse(y, &t)
    })?);

    for causal in [false, true] {
        let mut s = ParamStore::new();
        let x = s.add("x", random(&mut r, 4, 6));
        let att = MultiHeadAttention::new(&mut s, &mut r, "att", 6, 2).map_err(|e| e.to_string())?;
        let t = target(24);
        worst = worst.max(grad_ok("attention", &mut s, None, |g| {
            let xn = g.param(x);
            let y = att.forward(g, xn, causal)?;
            g.mse(y, &t)
        })?);
    }

    let mut s = ParamStore::new();
    let x = s.add("x", random(&mut r, 3, 4));
    let ff = FeedForward::new(&mut s, &mut r, "ff", 4, 7);
    let t = target(12);
    worst = worst.max(grad_ok("feed_forward", &mut s, None, |g| {
        let xn = g.param(x);
        let y = ff.forward(g, xn)?;
        g.mse(y, &t)
    })?);

    let mut s = ParamStore::new();
    let x = s.add("x", random(&mut r, 3, 8));
    let layer = EncoderLayer::new(&mut s, &mut r, "enc", 8, 2, 12).map_err(|e| e.to_string())?;
    let pe = positional_encoding(3, 8);
    let t = target(24);
    for seed in [None, Some(7)] {
        worst = worst.max(grad_ok("encoder_layer", &mut s, seed, |g| {
            let xn = g.param(x);
            let p = g.input(pe.clone());
            let h = g.add(xn, p)?;
            let y = layer.forward(g, h, true, 0.2)?;
            g.mse(y, &t)
        })?);
    }

    let mut s = ParamStore::new();
    let xs = s.add("x", random(&mut r, 3, 4));
    let cell = LstmCell::new(&mut s, &mut r, "lstm", 4, 5);
    let t = target(5);
    worst = worst.max(grad_ok("lstm", &mut s, None, |g| {
        let all = g.param(xs);
        let mut h = g.input(Tensor::zeros(vec![1, 5]));
        let mut c = g.input(Tensor::zeros(vec![1, 5]));
        let mut acc = None;
        for step in 0..3 {
            let xt = g.gather(all, &[step])?;
            (h, c) = cell.step(g, xt, h, c)?;
            acc = Some(match acc {
                None => h,
                Some(a) => g.add(a, h)?,
            });
        }
        g.mse(acc.expect("three steps"), &t)
    })?);

    let mut s = ParamStore::new();
    let logits = s.add("logits", random(&mut r, 4, 6));
    worst = worst.max(grad_ok("cross_entropy", &mut s, None, |g| {
        let l = g.param(logits);
        g.cross_entropy(l, &[0, 5, 2, 3], Some(&[1.0, 0.5, 0.0, 2.0]), 0.1)
    })?);

    let tok = train_tokenizer(&["ab ba", "b"], 10).map_err(|e| e.to_string())?;
    let v = tok.len();
    let meta = |dim| ModelMeta {
        model: ModelConfig {
            d_model: 8,
            layers: 1,
            heads: 2,
            ff_dim: 8,
            max_len: 8,
        },
        vocab_size: v,
        vector_dim: dim,
        arch: ArchTag::Sgns,
    };
    let mut rd = RevdictModel::new(meta(3), tok.clone(), 5).map_err(|e| e.to_string())?;
    jitter(&mut rd.store, 6);
    let a = RevdictExample {
        ids: vec![2, 4 % v, 5 % v, 3],
        target: vec![0.5, -1.0, 0.2],
    };
    let b = RevdictExample {
        ids: vec![2, 6 % v, 3],
        target: vec![-0.3, 0.1, 0.9],
    };
    let net = rd.net.clone();
    for seed in [None, Some(3)] {
        let drop = if seed.is_some() { 0.1 } else { 0.0 };
        worst = worst.max(grad_ok("revdict model", &mut rd.store, seed, |g| net.loss(g, &[&a, &b], drop))?);
    }
    let mut dm = DefmodModel::new(meta(5), tok, 7).map_err(|e| e.to_string())?;
    jitter(&mut dm.store, 8);
    let a = DefmodExample::new(vec![0.1, -0.4, 0.8, 0.0, 1.2], &[2, 4 % v, 5 % v, 3]);
    let b = DefmodExample::new(vec![-1.0, 0.3, 0.3, 0.5, -0.2], &[2, 6 % v, 3]);
    let net = dm.net.clone();
    for seed in [None, Some(3)] {
        let drop = if seed.is_some() { 0.1 } else { 0.0 };
        worst = worst.max(grad_ok("defmod model", &mut dm.store, seed, |g| net.loss(g, &[&a, &b], drop, 0.1))?);
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!("11 layer checks and 2 models, max rel err {worst:.1e}, {:.2?}", start.elapsed()))
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let words = ["cat", "dog", "runs", "small", "the", "a", "of", "animal", "big", "fast", "red", "tree"];
    let ds = gen_synthetic(3, 8, 8, &words).map_err(|e| e.to_string())?;
    let glosses: Vec<&str> = ds.items.iter().map(|i| i.gloss.as_str()).collect();
    let tok = train_tokenizer(&glosses, 80).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
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
    };
    let (rd, rr, _) = train_revdict(&ds, &ds, ArchTag::Sgns, &tok, &cfg).map_err(|e| e.to_string())?;
    let train_mse = rd.mean_loss(&rd.examples(&ds).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(rr.steps <= 2000 && train_mse < 1e-3, || format!("revdict mse {train_mse} after {} steps", rr.steps))?;

    let (dm, dr, _) = train_defmod(&ds, &ds, ArchTag::Sgns, &tok, &cfg).map_err(|e| e.to_string())?;
    let ex = dm.examples(&ds).map_err(|e| e.to_string())?;
    let acc = dm.token_accuracy(&ex).map_err(|e| e.to_string())?;
    ensure(dr.steps <= 2000 && acc >= 0.99, || format!("defmod accuracy {acc} after {} steps", dr.steps))?;
    for e in &ex {
        let greedy = dm.greedy(&e.vector, 64).map_err(|e| e.to_string())?;
        let beam = dm.generate(&e.vector, 1, 64).map_err(|e| e.to_string())?;
        ensure(beam.tokens == greedy, || "beam 1 differs from greedy".into())?;
    }
    within(Duration::from_secs(300), start)?;
    Ok(format!(
        "revdict mse {train_mse:.1e} ({} steps), defmod acc {:.2}% ({} steps), beam1==greedy on 8 items, {:.1?}",
        rr.steps,
        acc * 100.0,
        dr.steps,
        start.elapsed()
    ))
}

fn char_autoencoder() -> Outcome {
    let start = Instant::now();
    let ten = ["cat", "act", "tack", "attic", "tic", "cacti", "tact", "at", "a", "ticket"];
    let small = CharAeConfig {
        char_dim: 16,
        hidden: 32,
        ..Default::default()
    };
    let cfg = |epochs, batch, lr| TrainConfig {
        max_epochs: epochs,
        patience: 1000,
        batch_size: batch,
        dropout: 0.0,
        label_smoothing: 0.0,
        warmup_steps: if batch == 10 { 10 } else { 100 },
        optimizer: OptimizerConfig {
            lr,
            ..Default::default()
        },
        seed: if batch == 10 { 5 } else { 1 },
        ..Default::default()
    };
    let (m10, _) = train_char_ae(&ten, &small, &cfg(300, 10, 1e-2)).map_err(|e| e.to_string())?;
    let acc10 = m10.reconstruction_accuracy(&ten).map_err(|e| e.to_string())?;
    ensure(acc10 == 1.0, || format!("10-word accuracy {acc10}"))?;

    let words = pseudo_words(7, 2000);
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let big = CharAeConfig {
        char_dim: 32,
        hidden: 64,
        ..Default::default()
    };
    let mut reached = None;
    let (m, _) = train_char_ae_with(&refs, &big, &cfg(40, 32, 5e-3), &mut |m, epoch| {
        if epoch % 10 == 0 {
            let acc = m.reconstruction_accuracy(&refs).unwrap_or(0.0);
            eprintln!("  char-ae epoch {epoch}: {:.2}% ({:.0?})", acc * 100.0, start.elapsed());
            if acc >= 0.95 && reached.is_none() {
                reached = Some(epoch);
            }
        }
    })
    .map_err(|e| e.to_string())?;
    let acc = m.reconstruction_accuracy(&refs).map_err(|e| e.to_string())?;
    ensure(acc >= 0.95, || format!("2000-word accuracy {acc}"))?;
    within(Duration::from_secs(1800), start)?;
    Ok(format!(
        "2000 words {:.2}% (>=95% by epoch {:?}), 10 words {:.0}%, {:.0?}",
        acc * 100.0,
        reached,
        acc10 * 100.0,
        start.elapsed()
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn hyperopt() -> Outcome {
    let space = SearchSpace::new(vec![ParamSpec::real("x", 0.0, 1.0, Scale::Linear)]).map_err(|e| e.to_string())?;
    let x = |c: &Map<String, Value>| c["x"].as_f64().expect("real");
    let f = |c: &Map<String, Value>| (x(c) - 0.3).powi(2);
    let (mut bo, mut rs) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let r = optimize(f, &space, 30, 10, seed).map_err(|e| e.to_string())?;
        bo.push((x(&r.best.config) - 0.3).abs());
        let r = random_search(f, &space, 30, seed).map_err(|e| e.to_string())?;
        rs.push((x(&r.best.config) - 0.3).abs());
    }
    let (mb, mr) = (median(bo), median(rs));
    let detail = format!("median |x-0.3|: bayes {mb:.2e}, random {mr:.2e}");
    ensure(mb <= 0.05 && mb < mr, || detail.clone())?;
    Ok(detail)
}

fn schedule() -> Outcome {
    let peak = 3e-4;
    let s = LrSchedule::new(100, 1100, peak).map_err(|e| e.to_string())?;
    let at = |k| lr_at(&s, k).map_err(|e| e.to_string());
    ensure(at(100)? == peak, || format!("warmup end {}", at(100).unwrap_or(f64::NAN)))?;
    ensure(at(600)? == peak / 2.0, || format!("midpoint {}", at(600).unwrap_or(f64::NAN)))?;
    ensure(at(1100)? == 0.0, || "final step not 0".into())?;
    ensure(at(50)? == peak / 2.0 && at(0)? == 0.0, || "warmup ramp".into())?;

    use StopVerdict::*;
    let mut es = EarlyStopping::new(5, 0.001);
    let curve = [1.0, 0.9995, 0.9991, 0.95, 0.9499, 0.9495, 0.9491, 0.9492, 0.9491];
    let verdicts: Vec<_> = curve.iter().map(|&v| es.observe(v)).collect();
    let want = vec![Improved, NoImprovement, NoImprovement, Improved, NoImprovement, NoImprovement, NoImprovement, NoImprovement, Stop];
    ensure(verdicts == want, || format!("verdicts {verdicts:?}"))?;
    Ok("lr peak/half/zero exact; early stop at epoch 9 of scripted curve".into())
}

fn harness() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reference = support::reference(25);
    let ref_path = dir.path().join("ref.json");
    reference.save(&ref_path).map_err(|e| e.to_string())?;
    let store = dir.path().join("store");
    let metrics = MetricsConfig {
        per_item: true,
        ..Default::default()
    };
    let rt = support::runtime();

    let subs = [
        (support::revdict_submission("rd-1", "A", &reference, 0.2), vec!["score", "revdict", "--verbose", "--arch", "sgns", "--targets"]),
        (support::defmod_submission("dm-1", "A", &reference, 1), vec!["score", "defmod", "--verbose", "--refs"]),
    ];
    let app = support::app(&reference, metrics.clone(), &store);
    for (sub, args) in &subs {
        let path = dir.path().join(format!("{}.json", sub.id));
        std::fs::write(&path, sub.to_json()).map_err(|e| e.to_string())?;
        let out = Command::new(env!("CARGO_BIN_EXE_glossbench"))
            .args(args)
            .arg(&ref_path)
            .arg("--preds")
            .arg(&path)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        let res = rt.block_on(support::call(&app, "POST", "/submissions", Some(sub.to_json())));
        ensure(res.status == 200, || format!("POST {}: {} {}", sub.id, res.status, res.body))?;
        ensure(res.body.as_bytes() == out.stdout.as_slice(), || format!("{} CLI and service reports differ", sub.id))?;
    }

    let board = |reports: &[glossbench_harness::ScoreReport]| -> Vec<(String, f64)> {
        let lb = build_leaderboard(reports);
        lb.setup(Track::Revdict, "en", Some(ArchTag::Sgns))
            .map(|s| s.entries.iter().map(|e| (e.participant.clone(), e.average_rank)).collect())
            .unwrap_or_default()
    };
    let single = board(&[support::report("a1", "A", "en", 0.3, 0.2, 0.4)]);
    ensure(single == [("A".to_string(), 1.0)], || format!("single {single:?}"))?;
    let dom = board(&support::dominance_reports());
    ensure(dom == [("A".to_string(), 1.0), ("B".to_string(), 2.0)], || format!("dominance {dom:?}"))?;
    let tie = board(&support::cyclic_reports());
    let all_two = tie.len() == 3 && tie.iter().all(|(_, a)| *a == 2.0);
    ensure(all_two, || format!("all-tie {tie:?}"))?;

    let before = rt.block_on(support::call(&app, "GET", "/leaderboard", None)).body;
    drop(app);
    let app = support::app(&reference, metrics, &store);
    let after = rt.block_on(support::call(&app, "GET", "/leaderboard", None)).body;
    let lb: Leaderboard = serde_json::from_str(&after).map_err(|e| e.to_string())?;
    ensure(before == after && lb.setups.len() == 2, || "leaderboard changed across restart".into())?;
    let got = rt.block_on(support::call(&app, "GET", "/submissions/dm-1", None));
    ensure(got.status == 200, || format!("stored report missing after restart: {}", got.status))?;
    Ok("CLI == service bytes (revdict, defmod); 3 leaderboard fixtures incl. all-tie; store restart".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 metric oracle equivalence", metric_oracles),
        ("2 random-prediction calibration", random_calibration),
        ("3 BLEU correctness", bleu_correctness),
        ("4 OT solvers", ot_solvers),
        ("5 autodiff gradient checks", autodiff),
        ("6 overfit fixtures", overfit),
        ("7 char autoencoder", char_autoencoder),
        ("8 hyperopt", hyperopt),
        ("9 training schedule", schedule),
        ("10 harness", harness),
    ];
    let only = std::env::args().nth(1).filter(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, run) in criteria {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
