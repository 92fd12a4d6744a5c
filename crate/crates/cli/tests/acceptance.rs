//! Acceptance checks, one line per criterion.
//!
//! Criteria that need the public corpora read them from `NLICHECK_DATA_DIR`
//! (SNLI and MultiNLI JSONL files, optionally `glove.6B.300d.txt` or the
//! file named by `NLICHECK_GLOVE`). Without the data they are reported as
//! FAIL (blocked) and do not change the exit status unless
//! `NLICHECK_ACCEPTANCE_STRICT=1`. The full-scale runs only start with
//! `NLICHECK_FULL_SCALE=1`. `NLICHECK_BLESS=1` rewrites the golden report.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use nlicheck_core::compliance::{verdict, Verdict};
use nlicheck_core::data::{
    encode_examples, find_split, init_embeddings, load_mnli, load_snli, tokenize, toy, Corpus, NliExample, Sample,
    Split, Vocabulary,
};
use nlicheck_core::models::{
    inter_attention, inter_attention_backward, intra_attention, intra_attention_backward, Design, EncodedPair,
    GradCheckHarness, Mode, Model, ModelConfig,
};
use nlicheck_core::nn::{
    cross_entropy, dropout, grad_check, lstm_sequence, lstm_sequence_backward, lstm_step, softmax,
    time_distributed_dense, Activation, BatchNorm, BiLstm, Dense, Differentiable, Evaluation, GradCheckConfig,
    LstmWeights, Parameter, SeededRng, Tensor,
};
use nlicheck_core::train::{decode_checkpoint, encode_checkpoint, evaluate, train, DatasetSelector, TrainConfig};
use nlicheck_core::Result;

use common::*;

enum Outcome {
    Pass(String),
    Fail(String),
    /// could not run for lack of data or because it was not requested
    Blocked(String),
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(u8, &str, Check); 10] = [
        (1, "gradient correctness", c1_gradients),
        (2, "BiLSTM oracle equivalence", c2_bilstm_oracle),
        (3, "padding invariance", c3_padding),
        (4, "overfit sanity on 200 SNLI examples", c4_overfit),
        (5, "desk-scale generalisation on 20k SNLI examples", c5_desk_scale),
        (6, "full-scale accuracy", c6_full_scale),
        (7, "determinism", c7_determinism),
        (8, "verdict mapping", c8_verdicts),
        (9, "end-to-end fixture", c9_end_to_end),
        (10, "loader counts", c10_loader_counts),
    ];
    let strict = std::env::var("NLICHECK_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = 0;
    for (id, name, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Outcome::Fail(msg)
        });
        let secs = started.elapsed().as_secs_f64();
        let (status, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Blocked(d) => {
                if strict {
                    failed += 1;
                }
                ("FAIL", format!("blocked: {d}"))
            }
        };
        println!("criterion {id:>2} {status}  {name}: {detail} [{secs:.1}s]");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Outcome::Fail(format!($($fmt)+));
        }
    };
}

macro_rules! attempt {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return Outcome::Fail(e.to_string()),
        }
    };
}

fn random(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn fingerprint(bits: impl Iterator<Item = bool>) -> u64 {
    bits.fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn input(rng: &mut SeededRng, shape: &[usize]) -> Parameter<f64> {
    Parameter::new(random(rng, shape), true)
}

fn accumulate(p: &mut Parameter<f64>, g: &Tensor<f64>) {
    p.grad.add_assign(g).unwrap();
}

/// A layer (or a few wired together) under a fixed random linear loss.
struct Harness<S> {
    state: S,
    names: Vec<String>,
    param: fn(&mut S, usize) -> &mut Parameter<f64>,
    run: fn(&mut S, bool) -> Result<(f64, u64)>,
}

impl<S> Differentiable for Harness<S> {
    fn param_count(&self) -> usize {
        self.names.len()
    }

    fn param_name(&self, i: usize) -> String {
        self.names[i].clone()
    }

    fn param(&mut self, i: usize) -> &mut Parameter<f64> {
        (self.param)(&mut self.state, i)
    }

    fn evaluate(&mut self) -> Result<Evaluation> {
        let (loss, branches) = (self.run)(&mut self.state, false)?;
        Ok(Evaluation { loss, branches })
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        for i in 0..self.names.len() {
            (self.param)(&mut self.state, i).zero_grad();
        }
        Ok((self.run)(&mut self.state, true)?.0)
    }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

struct DenseState {
    layer: Dense<f64>,
    x: Parameter<f64>,
    r: Tensor<f64>,
}

fn dense_param(s: &mut DenseState, i: usize) -> &mut Parameter<f64> {
    match i {
        0 => &mut s.layer.weight,
        1 => &mut s.layer.bias,
        _ => &mut s.x,
    }
}

fn dense_run(s: &mut DenseState, back: bool) -> Result<(f64, u64)> {
    let cache = if s.x.shape().len() == 3 {
        time_distributed_dense(&s.layer, &s.x.value)?
    } else {
        s.layer.forward(&s.x.value)?
    };
    let loss = dot(cache.output(), &s.r);
    let fp = fingerprint(cache.output().data().iter().map(|&v| v > 0.0));
    if back {
        let dx = s.layer.backward(&cache, &s.r)?;
        accumulate(&mut s.x, &dx);
    }
    Ok((loss, fp))
}

struct NormState {
    bn: BatchNorm<f64>,
    training: bool,
    x: Parameter<f64>,
    r: Tensor<f64>,
}

fn norm_param(s: &mut NormState, i: usize) -> &mut Parameter<f64> {
    if i < 4 {
        s.bn.params_mut().into_iter().nth(i).unwrap().1
    } else {
        &mut s.x
    }
}

fn norm_run(s: &mut NormState, back: bool) -> Result<(f64, u64)> {
    let (y, cache) = s.bn.forward(&s.x.value, s.training)?;
    let loss = dot(&y, &s.r);
    if back {
        let dx = s.bn.backward(&cache, &s.r)?;
        accumulate(&mut s.x, &dx);
    }
    Ok((loss, 0))
}

struct DropState {
    x: Parameter<f64>,
    r: Tensor<f64>,
}

fn drop_param(s: &mut DropState, _: usize) -> &mut Parameter<f64> {
    &mut s.x
}

fn drop_run(s: &mut DropState, back: bool) -> Result<(f64, u64)> {
    let (y, mask) = dropout(&s.x.value, 0.5, true, &mut SeededRng::new(17))?;
    let loss = dot(&y, &s.r);
    if back {
        let dx = mask.expect("training mode draws a mask").backward(&s.r);
        accumulate(&mut s.x, &dx);
    }
    Ok((loss, 0))
}

struct LstmState {
    w: LstmWeights<f64>,
    x: Parameter<f64>,
    lengths: Vec<usize>,
    r_out: Tensor<f64>,
    r_final: Tensor<f64>,
}

fn lstm_param(s: &mut LstmState, i: usize) -> &mut Parameter<f64> {
    if i < 3 {
        s.w.params_mut().into_iter().nth(i).unwrap().1
    } else {
        &mut s.x
    }
}

fn lstm_run(s: &mut LstmState, back: bool) -> Result<(f64, u64)> {
    let cache = lstm_sequence(&s.w, &s.x.value, &s.lengths)?;
    let loss = dot(&cache.outputs, &s.r_out) + dot(&cache.final_h, &s.r_final);
    if back {
        let dx = lstm_sequence_backward(&mut s.w, &cache, Some(&s.r_out), Some(&s.r_final))?;
        accumulate(&mut s.x, &dx);
    }
    Ok((loss, 0))
}

struct BiState {
    net: BiLstm<f64>,
    x: Parameter<f64>,
    lengths: Vec<usize>,
    r_out: Tensor<f64>,
    r_final: Tensor<f64>,
}

fn bi_param(s: &mut BiState, i: usize) -> &mut Parameter<f64> {
    if i < 6 {
        s.net.params_mut().into_iter().nth(i).unwrap().1
    } else {
        &mut s.x
    }
}

fn bi_run(s: &mut BiState, back: bool) -> Result<(f64, u64)> {
    let cache = s.net.forward(&s.x.value, &s.lengths)?;
    let loss = dot(&cache.outputs, &s.r_out) + dot(&cache.final_state, &s.r_final);
    if back {
        let dx = s.net.backward(&cache, Some(&s.r_out), Some(&s.r_final))?;
        accumulate(&mut s.x, &dx);
    }
    Ok((loss, 0))
}

struct IntraState {
    tokens: Parameter<f64>,
    keys: Parameter<f64>,
    lengths: Vec<usize>,
    r: Tensor<f64>,
}

fn intra_param(s: &mut IntraState, i: usize) -> &mut Parameter<f64> {
    if i == 0 {
        &mut s.tokens
    } else {
        &mut s.keys
    }
}

fn intra_run(s: &mut IntraState, back: bool) -> Result<(f64, u64)> {
    let (out, cache) = intra_attention(&s.tokens.value, &s.keys.value, &s.lengths)?;
    let loss = dot(&out, &s.r);
    if back {
        let (dt, dk) = intra_attention_backward(&s.tokens.value, &s.keys.value, &cache, &s.r)?;
        accumulate(&mut s.tokens, &dt);
        accumulate(&mut s.keys, &dk);
    }
    Ok((loss, 0))
}

struct InterState {
    /// premise, hypothesis, premise keys, hypothesis keys
    x: [Parameter<f64>; 4],
    lp: Vec<usize>,
    lh: Vec<usize>,
    rp: Tensor<f64>,
    rh: Tensor<f64>,
}

fn inter_param(s: &mut InterState, i: usize) -> &mut Parameter<f64> {
    &mut s.x[i]
}

fn inter_run(s: &mut InterState, back: bool) -> Result<(f64, u64)> {
    let [p, h, kp, kh] = &s.x;
    let out = inter_attention(&p.value, &h.value, &kp.value, &kh.value, &s.lp, &s.lh)?;
    let loss = dot(&out.premise_context, &s.rp) + dot(&out.hypothesis_context, &s.rh);
    if back {
        let g = inter_attention_backward(&p.value, &h.value, &kp.value, &kh.value, &out.cache, &s.rp, &s.rh)?;
        accumulate(&mut s.x[0], &g.premise);
        accumulate(&mut s.x[1], &g.hypothesis);
        accumulate(&mut s.x[2], &g.keys_p);
        accumulate(&mut s.x[3], &g.keys_h);
    }
    Ok((loss, 0))
}

struct SoftmaxState {
    logits: Parameter<f64>,
    labels: Vec<usize>,
}

fn softmax_param(s: &mut SoftmaxState, _: usize) -> &mut Parameter<f64> {
    &mut s.logits
}

fn softmax_run(s: &mut SoftmaxState, back: bool) -> Result<(f64, u64)> {
    let probs = softmax(&s.logits.value)?;
    let (loss, d) = cross_entropy(&probs, &s.labels)?;
    if back {
        accumulate(&mut s.logits, &d);
    }
    Ok((loss, 0))
}

fn micro(design: Design) -> ModelConfig {
    ModelConfig {
        embed_dim: 6,
        translate_dim: 5,
        dense_dims: vec![9, 6, 4],
        bilstm_units: 3,
        max_len: 5,
        ..ModelConfig::for_design(design)
    }
}

fn table(rng: &mut SeededRng, v: usize, d: usize) -> Tensor<f64> {
    Tensor::new(&[v, d], (0..v * d).map(|_| rng.uniform(-0.5, 0.5)).collect()).unwrap()
}

fn random_pair(rng: &mut SeededRng, v: usize, max_len: usize) -> EncodedPair {
    let mut side = || (0..1 + rng.below(max_len)).map(|_| 1 + rng.below(v - 1) as u32).collect::<Vec<_>>();
    let p = side();
    let h = side();
    EncodedPair::new(&p, &h, max_len).unwrap()
}

fn c1_gradients() -> Outcome {
    let cfg = GradCheckConfig {
        samples_per_param: 60,
        ..GradCheckConfig::default()
    };
    let mut rng = SeededRng::new(2024);
    let mut results: Vec<(String, f64, usize)> = Vec::new();
    let mut record = |label: &str, r: Result<nlicheck_core::nn::GradCheckReport>| match r {
        Ok(r) => results.push((label.to_string(), r.max_relative_error, r.checked)),
        Err(e) => results.push((format!("{label} ({e})"), f64::INFINITY, 0)),
    };

    for (label, act, shape) in [
        ("dense relu", Activation::Relu, vec![4, 6]),
        ("dense linear", Activation::None, vec![4, 6]),
        ("time-distributed dense", Activation::Relu, vec![2, 5, 6]),
    ] {
        let mut h = Harness {
            state: DenseState {
                layer: Dense::init(6, 5, act, &mut rng),
                x: input(&mut rng, &shape),
                r: random(&mut rng, &[shape[..shape.len() - 1].to_vec(), vec![5]].concat()),
            },
            names: names(&["weight", "bias", "input"]),
            param: dense_param,
            run: dense_run,
        };
        // non-zero bias so ReLU kinks are not hit at exactly zero
        h.state.layer.bias.value = random(&mut rng, &[5]);
        record(label, grad_check(&mut h, &cfg));
    }
    for (label, training) in [("batch norm (train)", true), ("batch norm (eval)", false)] {
        let mut bn = BatchNorm::new(5);
        {
            let ps = bn.params_mut();
            ps[0].1.value = random(&mut rng, &[5]);
            ps[1].1.value = random(&mut rng, &[5]);
            ps[2].1.value = random(&mut rng, &[5]);
            ps[3].1.value = random(&mut rng, &[5]).map(|v| 0.5 + v.abs());
        }
        let names = bn.params().iter().map(|(n, _)| n.to_string()).chain(["input".to_string()]).collect();
        let mut h = Harness {
            state: NormState {
                bn,
                training,
                x: input(&mut rng, &[6, 5]),
                r: random(&mut rng, &[6, 5]),
            },
            names,
            param: norm_param,
            run: norm_run,
        };
        record(label, grad_check(&mut h, &cfg));
    }
    let mut h = Harness {
        state: DropState {
            x: input(&mut rng, &[4, 6]),
            r: random(&mut rng, &[4, 6]),
        },
        names: names(&["input"]),
        param: drop_param,
        run: drop_run,
    };
    record("dropout", grad_check(&mut h, &cfg));

    let w = LstmWeights::init(3, 4, &mut rng);
    let lstm_names = w.params().iter().map(|(n, _)| n.to_string()).chain(["input".to_string()]).collect();
    let mut h = Harness {
        state: LstmState {
            w,
            x: input(&mut rng, &[2, 5, 3]),
            lengths: vec![5, 3],
            r_out: random(&mut rng, &[2, 5, 4]),
            r_final: random(&mut rng, &[2, 4]),
        },
        names: lstm_names,
        param: lstm_param,
        run: lstm_run,
    };
    record("lstm", grad_check(&mut h, &cfg));

    let net = BiLstm::init(3, 2, &mut rng);
    let bi_names = net.params().into_iter().map(|(n, _)| n).chain(["input".to_string()]).collect();
    let mut h = Harness {
        state: BiState {
            net,
            x: input(&mut rng, &[2, 5, 3]),
            lengths: vec![2, 5],
            r_out: random(&mut rng, &[2, 5, 4]),
            r_final: random(&mut rng, &[2, 4]),
        },
        names: bi_names,
        param: bi_param,
        run: bi_run,
    };
    record("bilstm", grad_check(&mut h, &cfg));

    let mut h = Harness {
        state: IntraState {
            tokens: input(&mut rng, &[2, 5, 4]),
            keys: input(&mut rng, &[2, 5, 3]),
            lengths: vec![5, 2],
            r: random(&mut rng, &[2, 5, 4]),
        },
        names: names(&["tokens", "keys"]),
        param: intra_param,
        run: intra_run,
    };
    record("intra-attention", grad_check(&mut h, &cfg));

    let mut h = Harness {
        state: InterState {
            x: [
                input(&mut rng, &[2, 4, 3]),
                input(&mut rng, &[2, 5, 3]),
                input(&mut rng, &[2, 4, 2]),
                input(&mut rng, &[2, 5, 2]),
            ],
            lp: vec![4, 2],
            lh: vec![3, 5],
            rp: random(&mut rng, &[2, 4, 3]),
            rh: random(&mut rng, &[2, 5, 3]),
        },
        names: names(&["premise", "hypothesis", "premise keys", "hypothesis keys"]),
        param: inter_param,
        run: inter_run,
    };
    record("inter-attention", grad_check(&mut h, &cfg));

    let mut h = Harness {
        state: SoftmaxState {
            logits: input(&mut rng, &[3, 3]),
            labels: vec![0, 2, 1],
        },
        names: names(&["logits"]),
        param: softmax_param,
        run: softmax_run,
    };
    record("softmax + cross-entropy", grad_check(&mut h, &cfg));

    // full micro-models: batch 2, T=5, V=50, 64-bit
    for (label, config, mode) in [
        ("design-I (train)", micro(Design::Design1), Mode::Train),
        ("design-I (eval)", micro(Design::Design1), Mode::Eval),
        ("design-II (train)", micro(Design::Design2), Mode::Train),
        ("design-II (eval)", micro(Design::Design2), Mode::Eval),
    ] {
        let mut model = Model::<f64>::build(&config, table(&mut rng, 50, 6), &mut rng).unwrap();
        // move batch-norm moving statistics off their initial values
        let warm: Vec<_> = (0..4).map(|_| random_pair(&mut rng, 50, 5)).collect();
        let pass = model.forward(&warm, Mode::Train, &mut rng).unwrap();
        model.commit_batch_stats(&pass);
        let batch: Vec<_> = (0..2).map(|_| random_pair(&mut rng, 50, 5)).collect();
        let labels = [0usize, 2];
        let mut h = GradCheckHarness::new(model, &batch, &labels, mode);
        h.dropout_seed = 7;
        record(label, grad_check(&mut h, &cfg));
    }

    let worst = results.iter().cloned().fold((String::new(), 0.0, 0), |a, b| if b.1 > a.1 { b } else { a });
    let checked: usize = results.iter().map(|r| r.2).sum();
    let bad: Vec<_> = results.iter().filter(|r| !(r.1 < 1e-4) || r.2 == 0).map(|r| r.0.clone()).collect();
    ensure!(bad.is_empty(), "relative error >= 1e-4 in {bad:?}; worst {} = {:.2e}", worst.0, worst.1);
    Outcome::Pass(format!(
        "{} checks, {checked} coordinates, max relative error {:.1e} ({})",
        results.len(),
        worst.1,
        worst.0
    ))
}

fn c2_bilstm_oracle() -> Outcome {
    let mut rng = SeededRng::new(77);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (b, steps, d, u) = (1 + rng.below(3), 1 + rng.below(6), 1 + rng.below(4), 1 + rng.below(4));
        let lengths: Vec<usize> = (0..b).map(|_| 1 + rng.below(steps)).collect();
        let net = BiLstm::<f64>::init(d, u, &mut rng);
        let x = random(&mut rng, &[b, steps, d]);
        let got = attempt!(net.forward(&x, &lengths));

        let mut expect = vec![0.0; b * steps * 2 * u];
        let mut expect_final = vec![0.0; b * 2 * u];
        for (i, &len) in lengths.iter().enumerate() {
            for (dir, weights) in [(0, &net.forward), (1, &net.backward)] {
                let mut h = Tensor::zeros(&[1, u]);
                let mut c = Tensor::zeros(&[1, u]);
                for k in 0..len {
                    let t = if dir == 0 { k } else { len - 1 - k };
                    let x_t = Tensor::new(&[1, d], x.row(i * steps + t).to_vec()).unwrap();
                    (h, c) = attempt!(lstm_step(&x_t, &h, &c, weights));
                    for j in 0..u {
                        expect[(i * steps + t) * 2 * u + dir * u + j] = h.data()[j];
                    }
                }
                for j in 0..u {
                    expect_final[i * 2 * u + dir * u + j] = h.data()[j];
                }
            }
        }
        for (a, e) in got.outputs.data().iter().chain(got.final_state.data()).zip(expect.iter().chain(&expect_final)) {
            worst = worst.max((a - e).abs());
        }
    }
    ensure!(worst <= 1e-10, "max deviation {worst:.3e}");
    Outcome::Pass(format!("50 instances, max deviation {worst:.1e}"))
}

fn c3_padding() -> Outcome {
    let mut rng = SeededRng::new(3);
    let v = 120;
    let mut changed = 0;
    for design in [Design::Design1, Design::Design2] {
        let config = ModelConfig::for_design(design);
        let emb = Tensor::new(&[v, 300], (0..v * 300).map(|_| rng.uniform(-0.5, 0.5) as f32).collect()).unwrap();
        let model = attempt!(Model::<f32>::build(&config, emb, &mut rng));
        let pairs: Vec<_> = (0..100).map(|_| random_pair(&mut rng, v, 20)).collect();
        let padded: Vec<_> = pairs.iter().map(|p| p.with_padding(rng.below(11), rng.below(11))).collect();
        let base = attempt!(model.predict(&pairs));
        let more = attempt!(model.predict(&padded));
        for i in 0..pairs.len() {
            let single = attempt!(model.predict(&padded[i..i + 1]));
            let same = |a: &[f32], b: &[f32]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
            if !same(base.row(i), more.row(i)) || !same(base.row(i), single.row(0)) {
                changed += 1;
            }
        }
    }
    ensure!(changed == 0, "{changed} of 200 outputs changed");
    Outcome::Pass("200 pairs over both designs, every output bit unchanged".into())
}

fn data_dir() -> Option<PathBuf> {
    std::env::var_os("NLICHECK_DATA_DIR").map(PathBuf::from).filter(|d| d.is_dir())
}

fn split_path(corpus: Corpus, split: Split) -> std::result::Result<PathBuf, String> {
    let dir = data_dir().ok_or("NLICHECK_DATA_DIR is not set to a directory")?;
    let p = find_split(&dir, corpus, split);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("{} not found", p.display()))
    }
}

fn glove() -> Option<PathBuf> {
    std::env::var_os("NLICHECK_GLOVE")
        .map(PathBuf::from)
        .or_else(|| data_dir().map(|d| d.join("glove.6B.300d.txt")))
        .filter(|p| p.is_file())
}

fn vocab_of(examples: &[NliExample]) -> Vocabulary {
    Vocabulary::build(examples.iter().map(|e| e.premise_tokens.iter().chain(e.hypothesis_tokens.iter()))).unwrap()
}

fn c4_overfit() -> Outcome {
    let path = match split_path(Corpus::Snli, Split::Train) {
        Ok(p) => p,
        Err(e) => return Outcome::Blocked(e),
    };
    let (mut examples, _) = attempt!(load_snli(&path));
    examples.truncate(200);
    let vocab = vocab_of(&examples);
    let config = ModelConfig::design_1();
    let mut rng = SeededRng::new(4);
    let emb = init_embeddings(&vocab, config.embed_dim, true, &mut rng.fork(1));
    let mut model = attempt!(Model::<f32>::build(&config, emb.matrix, &mut rng));
    let samples = attempt!(encode_examples(&examples, &vocab, config.max_len));
    let mut cfg = TrainConfig::preset(DatasetSelector::Snli);
    cfg.batch_size = 8;
    cfg.seed = 4;
    attempt!(train(&mut model, &samples, &samples[..20], &cfg, |_, _| {}));
    let report = attempt!(evaluate(&model, &samples));
    ensure!(report.accuracy >= 0.95, "training accuracy {:.3} after 30 epochs", report.accuracy);
    Outcome::Pass(format!("training accuracy {:.3} after 30 epochs", report.accuracy))
}

fn epochs_of(stdout: &str) -> Vec<serde_json::Value> {
    stdout
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|v| v.get("epoch").is_some())
        .collect()
}

fn c5_desk_scale() -> Outcome {
    if let Err(e) = split_path(Corpus::Snli, Split::Train).and(split_path(Corpus::Snli, Split::Dev)) {
        return Outcome::Blocked(e);
    }
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("snli20k.ckpt");
    let data = data_dir().unwrap();
    let mut args = vec![
        "train".to_string(), "--dataset".into(), "snli".into(), "--data-dir".into(), data.display().to_string(),
        "--limit".into(), "20000".into(), "--epochs".into(), "5".into(), "--batch-size".into(), "512".into(),
        "--out".into(), ckpt.display().to_string(),
    ];
    if let Some(g) = glove() {
        args.extend(["--embeddings".into(), g.display().to_string()]);
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = nlicheck(&args);
    ensure!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));
    let epochs = epochs_of(&String::from_utf8_lossy(&out.stdout));
    let best = epochs.iter().filter_map(|e| e["val_accuracy"].as_f64()).fold(0.0, f64::max);
    ensure!(best >= 0.55, "best validation accuracy {best:.3}");
    Outcome::Pass(format!("validation accuracy {best:.3}"))
}

fn c6_full_scale() -> Outcome {
    if std::env::var("NLICHECK_FULL_SCALE").as_deref() != Ok("1") {
        return Outcome::Blocked("long-running; not requested (set NLICHECK_FULL_SCALE=1)".into());
    }
    for (corpus, split) in [
        (Corpus::Snli, Split::Train),
        (Corpus::Snli, Split::Dev),
        (Corpus::Snli, Split::Test),
        (Corpus::Mnli, Split::Train),
        (Corpus::Mnli, Split::Dev),
        (Corpus::Mnli, Split::Test),
    ] {
        if let Err(e) = split_path(corpus, split) {
            return Outcome::Blocked(e);
        }
    }
    let Some(glove) = glove() else {
        return Outcome::Blocked("pretrained 300-d vectors not found".into());
    };
    let data = data_dir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    // (dataset, target train/val/test accuracy, tolerance)
    let runs: [(&str, [Option<f64>; 3], f64); 3] = [
        ("snli", [Some(0.85), Some(0.81), Some(0.80)], 0.03),
        ("mnli", [Some(0.70), Some(0.66), Some(0.65)], 0.04),
        ("mnli-government", [Some(0.67), Some(0.64), None], 0.04),
    ];
    for (dataset, targets, tol) in runs {
        let ckpt = dir.path().join(format!("{dataset}.ckpt"));
        let c = ckpt.display().to_string();
        let d = data.display().to_string();
        let g = glove.display().to_string();
        let out = nlicheck(&["train", "--dataset", dataset, "--data-dir", &d, "--embeddings", &g, "--out", &c]);
        ensure!(out.status.success(), "{dataset}: {}", String::from_utf8_lossy(&out.stderr));
        for (split, target) in ["train", "dev", "test"].iter().zip(targets) {
            let Some(target) = target else { continue };
            let out = nlicheck(&["evaluate", "--dataset", dataset, "--data-dir", &d, "--split", split, "--model", &c]);
            ensure!(out.status.success(), "{dataset} {split}: {}", String::from_utf8_lossy(&out.stderr));
            let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
            let acc = v["accuracy"].as_f64().unwrap();
            ensure!((acc - target).abs() <= tol, "{dataset} {split} accuracy {acc:.3}, target {target} ± {tol}");
            notes.push(format!("{dataset}/{split} {acc:.3}"));
        }
        if dataset == "mnli-government" {
            let clause = "The data subject shall have the right to withdraw his or her consent at any time.";
            let cases = [
                ("Test case one, you have no right to withdraw your consent.", "contradiction"),
                ("Test case two, at any time you can withdraw your consent.", "entailment"),
                ("Test case three, You can not withdraw your consent any time.", "contradiction"),
            ];
            let mut mismatches = 0;
            for (hypothesis, want) in cases {
                let out = nlicheck(&["predict", "--premise", clause, "--hypothesis", hypothesis, "--model", &c]);
                let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
                if v["label"] != want {
                    mismatches += 1;
                }
            }
            ensure!(mismatches <= 1, "{mismatches} of 3 policy test cases mislabelled");
            notes.push(format!("policy cases {}/3", 3 - mismatches));
        }
    }
    Outcome::Pass(notes.join(", "))
}

fn toy_samples(vocab: &Vocabulary, n: usize, seed: u64, max_len: usize) -> Vec<Sample> {
    encode_examples(&toy::toy_corpus(n, seed), vocab, max_len).unwrap()
}

fn c7_determinism() -> Outcome {
    let train_ex = toy::toy_corpus(120, 1);
    let vocab = vocab_of(&train_ex);
    let mut notes = Vec::new();
    for design in [Design::Design1, Design::Design2] {
        let config = ModelConfig {
            max_len: 16,
            dense_dims: vec![96, 64, 32],
            translate_dim: 64,
            bilstm_units: 24,
            embed_dim: 48,
            ..ModelConfig::for_design(design)
        };
        let train_set = encode_examples(&train_ex, &vocab, config.max_len).unwrap();
        let val_set = toy_samples(&vocab, 60, 2, config.max_len);
        let mut cfg = TrainConfig::preset(DatasetSelector::Toy);
        cfg.design = design;
        cfg.epochs = 3;
        cfg.batch_size = 16;
        cfg.seed = 9;
        let run = || {
            let rng = SeededRng::new(cfg.seed);
            let emb = init_embeddings(&vocab, config.embed_dim, true, &mut rng.fork(1));
            let mut model = Model::<f32>::build(&config, emb.matrix, &mut rng.fork(2)).unwrap();
            let out = train(&mut model, &train_set, &val_set, &cfg, |_, _| {}).unwrap();
            let bytes = encode_checkpoint(&out.best, &vocab.hash()).unwrap();
            (out, bytes)
        };
        let (a, bytes_a) = run();
        let (b, bytes_b) = run();
        ensure!(a.history == b.history, "{design:?}: metric histories differ");
        ensure!(bytes_a == bytes_b, "{design:?}: checkpoints differ");

        let back = attempt!(decode_checkpoint(&bytes_a));
        let pairs: Vec<_> = val_set.iter().map(|s| s.pair.clone()).collect();
        let before = attempt!(a.best.predict(&pairs));
        let after = attempt!(back.model.predict(&pairs));
        let identical = before.data().iter().zip(after.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        ensure!(identical, "{design:?}: eval outputs changed after checkpoint round trip");
        notes.push(format!("{design:?} {} bytes", bytes_a.len()));
    }
    Outcome::Pass(format!("identical histories and checkpoints; round trip bitwise ({})", notes.join(", ")))
}

fn c8_verdicts() -> Outcome {
    let cases = [
        ([0.99, 0.01, 0.00], Verdict::PotentialViolation),
        ([0.29, 0.12, 0.59], Verdict::Supported),
        ([0.41, 0.37, 0.22], Verdict::Inconclusive),
    ];
    for (probs, want) in cases {
        let got = attempt!(verdict(&probs, 0.5));
        ensure!(got == want, "{probs:?} -> {got:?}, expected {want:?}");
    }
    Outcome::Pass("3 of 3 distributions mapped as expected at threshold 0.5".into())
}

/// Naive scan: a pattern matches when each of its terms occurs as a
/// contiguous run of tokens.
fn brute_force(sentence: &str, patterns: &[(String, Vec<String>)]) -> Vec<String> {
    let tokens = tokenize(sentence);
    let contains = |term: &str| {
        let t = tokenize(term);
        !t.is_empty() && (0..tokens.len()).any(|i| tokens[i..].starts_with(&t))
    };
    patterns
        .iter()
        .filter(|(_, terms)| terms.iter().all(|t| contains(t)))
        .map(|(id, _)| id.clone())
        .collect()
}

fn c9_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (_server, manifest) = serve_policies(dir.path());
    let ckpt = toy_checkpoint(dir.path(), "9");
    let corpus = dir.path().join("corpus");
    let report = dir.path().join("report.jsonl");
    ok(&["ingest", "--manifest", p(&manifest), "--out", p(&corpus), "--delay-ms", "0"]);
    ok(&["check", "--manifest", p(&manifest), "--model", p(&ckpt), "--delay-ms", "0", "--out", p(&report)]);
    let produced = std::fs::read_to_string(&report).unwrap();

    let golden_path = fixtures().join("golden/report.jsonl");
    if std::env::var("NLICHECK_BLESS").as_deref() == Ok("1") {
        std::fs::create_dir_all(golden_path.parent().unwrap()).unwrap();
        std::fs::write(&golden_path, &produced).unwrap();
    }
    let Ok(golden) = std::fs::read_to_string(&golden_path) else {
        return Outcome::Fail(format!("{} missing; run once with NLICHECK_BLESS=1", golden_path.display()));
    };
    ensure!(produced == golden, "report differs from {}", golden_path.display());

    // keyword search against a brute-force scan of the stored sentences
    let clauses: serde_json::Value = serde_json::from_str(nlicheck_core::compliance::SHIPPED_GDPR_CLAUSES).unwrap();
    let mut patterns = Vec::new();
    for c in clauses.as_array().unwrap() {
        for (k, terms) in c["patterns"].as_array().unwrap().iter().enumerate() {
            let terms = terms.as_array().unwrap().iter().map(|t| t.as_str().unwrap().to_string()).collect();
            patterns.push((format!("{}#{k}", c["id"].as_str().unwrap()), terms));
        }
    }
    let mut expected = BTreeSet::new();
    for (id, _) in PAGES {
        let lines = std::fs::read_to_string(corpus.join(id).join("sentences.jsonl")).unwrap();
        for l in lines.lines() {
            let s: serde_json::Value = serde_json::from_str(l).unwrap();
            let hits = brute_force(s["text"].as_str().unwrap(), &patterns);
            if !hits.is_empty() {
                expected.insert((id.to_string(), s["index"].as_u64().unwrap(), hits));
            }
        }
    }
    let mut found = BTreeSet::new();
    for l in ok(&["search", "--corpus", p(&corpus)]).lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        let hits = v["matched_patterns"].as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect();
        found.insert((v["app_id"].as_str().unwrap().to_string(), v["sentence_index"].as_u64().unwrap(), hits));
    }
    ensure!(found == expected, "search returned {found:?}, brute force {expected:?}");
    let pairs = golden.lines().count() - 1;
    Outcome::Pass(format!(
        "report matches golden file ({pairs} findings); search equals brute force ({} sentences)",
        expected.len()
    ))
}

fn count(path: std::result::Result<PathBuf, String>, genre: Option<&str>) -> std::result::Result<usize, String> {
    let path = path?;
    let loaded = match genre {
        None if path.to_string_lossy().contains("snli") => load_snli(&path),
        _ => load_mnli(&path, genre),
    };
    loaded.map(|(ex, _)| ex.len()).map_err(|e| e.to_string())
}

fn c10_loader_counts() -> Outcome {
    let checks: [(&str, Corpus, Split, Option<&str>, usize); 5] = [
        ("snli train", Corpus::Snli, Split::Train, None, 549_367),
        ("mnli train", Corpus::Mnli, Split::Train, None, 392_702),
        ("mnli government train", Corpus::Mnli, Split::Train, Some("government"), 77_350),
        ("mnli validation", Corpus::Mnli, Split::Dev, None, 9_815),
        ("mnli government validation", Corpus::Mnli, Split::Dev, Some("government"), 1_945),
    ];
    let mut notes = Vec::new();
    let mut blocked = Vec::new();
    for (label, corpus, split, genre, want) in checks {
        match count(split_path(corpus, split), genre) {
            Ok(n) => {
                ensure!(n == want, "{label}: {n} examples, expected {want}");
                notes.push(format!("{label} {n}"));
            }
            Err(e) => blocked.push(format!("{label}: {e}")),
        }
    }
    if !blocked.is_empty() {
        return Outcome::Blocked(blocked.join("; "));
    }
    Outcome::Pass(notes.join(", "))
}

