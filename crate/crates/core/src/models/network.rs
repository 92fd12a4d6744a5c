//! Assembly of the two architectures and their batched forward/backward
//! passes.

use crate::error::{Error, Result};
use crate::models::attention::{
    inter_attention, inter_attention_backward, intra_attention, intra_attention_backward,
    InterAttentionCache, IntraAttentionCache,
};
use crate::models::{Design, EncodedPair, ModelConfig, ParameterReport};
use crate::nn::grad_check::mix_branch;
use crate::nn::ops::softmax_in_place;
use crate::nn::{
    dropout, time_distributed_dense, Activation, BatchNorm, BatchNormCache, BiLstm, BiLstmCache,
    Dense, DenseCache, DropoutMask, Parameter, Scalar, SeededRng, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
pub enum Encoder<T> {
    /// translate (time-distributed, ReLU) then masked sum pooling
    Pooled { translate: Dense<T> },
    /// translate1 → intra-attention → translate2 → inter-attention →
    /// BiLSTM over `[token; aligned context]`
    Attentive {
        translate1: Dense<T>,
        translate2: Dense<T>,
        bilstm: BiLstm<T>,
    },
}

#[derive(Clone, Debug)]
pub struct HeadLayer<T> {
    pub dense: Dense<T>,
    pub norm: Option<BatchNorm<T>>,
}

/// A sentence-pair classifier producing a distribution over
/// `[contradiction, neutral, entailment]`.
#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    pub embedding: Parameter<T>,
    pub encoder: Encoder<T>,
    pub head: Vec<HeadLayer<T>>,
    pub output: Dense<T>,
}

/// Builds Design-I around `embedding` (`V × embed_dim`).
pub fn build_design_1<T: Scalar>(
    config: &ModelConfig,
    embedding: Tensor<T>,
    rng: &mut SeededRng,
) -> Result<Model<T>> {
    if config.design != Design::Design1 {
        return Err(Error::Config("build_design_1 needs a design_1 config".into()));
    }
    Model::build(config, embedding, rng)
}

/// Builds Design-II around `embedding` (`V × embed_dim`).
pub fn build_design_2<T: Scalar>(
    config: &ModelConfig,
    embedding: Tensor<T>,
    rng: &mut SeededRng,
) -> Result<Model<T>> {
    if config.design != Design::Design2 {
        return Err(Error::Config("build_design_2 needs a design_2 config".into()));
    }
    Model::build(config, embedding, rng)
}

#[derive(Clone, Debug)]
struct SideInput {
    ids: Vec<u32>,
    lengths: Vec<usize>,
    steps: usize,
}

fn gather_side(batch: &[EncodedPair], premise: bool) -> SideInput {
    let lengths: Vec<usize> = batch
        .iter()
        .map(|p| if premise { p.premise_len } else { p.hypothesis_len })
        .collect();
    let steps = *lengths.iter().max().unwrap();
    let mut ids = vec![0u32; batch.len() * steps];
    for (i, p) in batch.iter().enumerate() {
        let src = if premise { p.premise() } else { p.hypothesis() };
        ids[i * steps..i * steps + src.len()].copy_from_slice(src);
    }
    SideInput { ids, lengths, steps }
}

#[derive(Clone, Debug)]
enum SideCache<T> {
    Pooled {
        translate: DenseCache<T>,
    },
    Attentive {
        embedded: Tensor<T>,
        keys1: DenseCache<T>,
        intra: IntraAttentionCache<T>,
        augmented: Tensor<T>,
        keys2: DenseCache<T>,
        bilstm: Option<BiLstmCache<T>>,
    },
}

#[derive(Clone, Debug)]
struct HeadCache<T> {
    dense: DenseCache<T>,
    norm: Option<BatchNormCache<T>>,
    dropout: Option<DropoutMask<T>>,
}

/// Everything a forward pass computed, kept for backward.
#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    inputs: [SideInput; 2],
    sides: [SideCache<T>; 2],
    inter: Option<InterAttentionCache<T>>,
    /// `b × 3s` merged feature `[p; h; |p-h|]`
    pub features: Tensor<T>,
    head: Vec<HeadCache<T>>,
    output: DenseCache<T>,
    pub probs: Tensor<T>,
}

impl<T: Scalar> ForwardPass<T> {
    /// Fingerprint of every ReLU on/off decision and every sign in the
    /// `|p-h|` block.
    pub fn branch_signature(&self) -> u64 {
        let mut sig = 0u64;
        let mut relu = |t: &Tensor<T>| {
            for &v in t.data() {
                mix_branch(&mut sig, v > T::zero());
            }
        };
        for side in &self.sides {
            match side {
                SideCache::Pooled { translate } => relu(translate.output()),
                SideCache::Attentive { keys1, keys2, .. } => {
                    relu(keys1.output());
                    relu(keys2.output());
                }
            }
        }
        for h in &self.head {
            relu(h.dense.output());
        }
        let s = self.features.last_dim() / 3;
        for r in 0..self.features.rows() {
            let row = self.features.row(r);
            for j in 0..s {
                mix_branch(&mut sig, row[j] > row[s + j]);
                mix_branch(&mut sig, row[j] == row[s + j]);
            }
        }
        sig
    }
}

fn embed<T: Scalar>(table: &Tensor<T>, side: &SideInput) -> Tensor<T> {
    let d = table.last_dim();
    let b = side.lengths.len();
    let mut out = Tensor::zeros(&[b, side.steps, d]);
    for (i, &len) in side.lengths.iter().enumerate() {
        for t in 0..len {
            let id = side.ids[i * side.steps + t] as usize;
            out.row_mut(i * side.steps + t).copy_from_slice(table.row(id));
        }
    }
    out
}

fn scatter_embedding_grad<T: Scalar>(grad: &mut Tensor<T>, side: &SideInput, d_embedded: &Tensor<T>) {
    for (i, &len) in side.lengths.iter().enumerate() {
        for t in 0..len {
            let id = side.ids[i * side.steps + t] as usize;
            let src = d_embedded.row(i * side.steps + t);
            for (g, &v) in grad.row_mut(id).iter_mut().zip(src) {
                *g += v;
            }
        }
    }
}

fn concat_last<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (da, db) = (a.last_dim(), b.last_dim());
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = da + db;
    let mut out = Tensor::zeros(&shape);
    for r in 0..a.rows() {
        let row = out.row_mut(r);
        row[..da].copy_from_slice(a.row(r));
        row[da..].copy_from_slice(b.row(r));
    }
    out
}

fn split_last<T: Scalar>(x: &Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    let d = x.last_dim();
    let mut sa = x.shape().to_vec();
    let mut sb = x.shape().to_vec();
    *sa.last_mut().unwrap() = first;
    *sb.last_mut().unwrap() = d - first;
    let mut a = Tensor::zeros(&sa);
    let mut b = Tensor::zeros(&sb);
    for r in 0..x.rows() {
        a.row_mut(r).copy_from_slice(&x.row(r)[..first]);
        b.row_mut(r).copy_from_slice(&x.row(r)[first..]);
    }
    (a, b)
}

impl<T: Scalar> Model<T> {
    /// Builds the architecture selected by `config.design`.
    pub fn build(config: &ModelConfig, embedding: Tensor<T>, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        match embedding.shape() {
            [v, d] if *d == config.embed_dim && *v >= 2 => {}
            s => {
                return Err(Error::Config(format!(
                    "embedding must be V×{} with V ≥ 2, got {s:?}",
                    config.embed_dim
                )))
            }
        }
        let mut embedding = Parameter::new(embedding, config.embedding_trainable);
        embedding.value.row_mut(0).fill(T::zero());
        embedding.pin_row(0);

        let encoder = match config.design {
            Design::Design1 => Encoder::Pooled {
                translate: Dense::init(config.embed_dim, config.translate_dim, Activation::Relu, rng),
            },
            Design::Design2 => Encoder::Attentive {
                translate1: Dense::init(config.embed_dim, config.translate_dim, Activation::Relu, rng),
                translate2: Dense::init(config.embed_dim, config.translate_dim, Activation::Relu, rng),
                bilstm: BiLstm::init(2 * config.embed_dim, config.bilstm_units, rng),
            },
        };
        let mut head = Vec::with_capacity(config.dense_dims.len());
        let mut width = 3 * config.sentence_dim();
        for &d in &config.dense_dims {
            head.push(HeadLayer {
                dense: Dense::init(width, d, Activation::Relu, rng),
                norm: config.batch_norm.then(|| BatchNorm::new(d)),
            });
            width = d;
        }
        let output = Dense::init(width, config.num_classes, Activation::None, rng);
        Ok(Model {
            config: config.clone(),
            embedding,
            encoder,
            head,
            output,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.shape()[0]
    }

    /// Parameters in a fixed order with stable dotted names.
    pub fn named_params(&self) -> Vec<(String, &Parameter<T>)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        match &self.encoder {
            Encoder::Pooled { translate } => {
                for (n, p) in translate.params() {
                    out.push((format!("translate.{n}"), p));
                }
            }
            Encoder::Attentive {
                translate1,
                translate2,
                bilstm,
            } => {
                for (n, p) in translate1.params() {
                    out.push((format!("translate1.{n}"), p));
                }
                for (n, p) in translate2.params() {
                    out.push((format!("translate2.{n}"), p));
                }
                for (n, p) in bilstm.params() {
                    out.push((format!("bilstm.{n}"), p));
                }
            }
        }
        for (i, layer) in self.head.iter().enumerate() {
            for (n, p) in layer.dense.params() {
                out.push((format!("head.{i}.dense.{n}"), p));
            }
            if let Some(norm) = &layer.norm {
                for (n, p) in norm.params() {
                    out.push((format!("head.{i}.norm.{n}"), p));
                }
            }
        }
        for (n, p) in self.output.params() {
            out.push((format!("output.{n}"), p));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Parameter<T>)> {
        let mut out = vec![("embedding".to_string(), &mut self.embedding)];
        match &mut self.encoder {
            Encoder::Pooled { translate } => {
                for (n, p) in translate.params_mut() {
                    out.push((format!("translate.{n}"), p));
                }
            }
            Encoder::Attentive {
                translate1,
                translate2,
                bilstm,
            } => {
                for (n, p) in translate1.params_mut() {
                    out.push((format!("translate1.{n}"), p));
                }
                for (n, p) in translate2.params_mut() {
                    out.push((format!("translate2.{n}"), p));
                }
                for (n, p) in bilstm.params_mut() {
                    out.push((format!("bilstm.{n}"), p));
                }
            }
        }
        for (i, layer) in self.head.iter_mut().enumerate() {
            for (n, p) in layer.dense.params_mut() {
                out.push((format!("head.{i}.dense.{n}"), p));
            }
            if let Some(norm) = &mut layer.norm {
                for (n, p) in norm.params_mut() {
                    out.push((format!("head.{i}.norm.{n}"), p));
                }
            }
        }
        for (n, p) in self.output.params_mut() {
            out.push((format!("output.{n}"), p));
        }
        out
    }

    pub fn parameter_report(&self) -> ParameterReport {
        ParameterReport::from_params(self.named_params())
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    /// Same weights in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let cast_dense = |d: &Dense<T>| Dense {
            weight: d.weight.cast(),
            bias: d.bias.cast(),
            activation: d.activation,
        };
        let encoder = match &self.encoder {
            Encoder::Pooled { translate } => Encoder::Pooled {
                translate: cast_dense(translate),
            },
            Encoder::Attentive {
                translate1,
                translate2,
                bilstm,
            } => {
                let cast_lstm = |w: &crate::nn::LstmWeights<T>| crate::nn::LstmWeights {
                    input_weight: w.input_weight.cast(),
                    recurrent_weight: w.recurrent_weight.cast(),
                    bias: w.bias.cast(),
                };
                Encoder::Attentive {
                    translate1: cast_dense(translate1),
                    translate2: cast_dense(translate2),
                    bilstm: BiLstm {
                        forward: cast_lstm(&bilstm.forward),
                        backward: cast_lstm(&bilstm.backward),
                    },
                }
            }
        };
        Model {
            config: self.config.clone(),
            embedding: self.embedding.cast(),
            encoder,
            head: self
                .head
                .iter()
                .map(|h| HeadLayer {
                    dense: cast_dense(&h.dense),
                    norm: h.norm.as_ref().map(|n| BatchNorm {
                        gamma: n.gamma.cast(),
                        beta: n.beta.cast(),
                        moving_mean: n.moving_mean.cast(),
                        moving_var: n.moving_var.cast(),
                    }),
                })
                .collect(),
            output: cast_dense(&self.output),
        }
    }

    /// Eval-mode class probabilities, one row per pair.
    pub fn predict(&self, batch: &[EncodedPair]) -> Result<Tensor<T>> {
        let mut unused = SeededRng::new(0);
        Ok(self.forward(batch, Mode::Eval, &mut unused)?.probs)
    }

    pub fn forward(&self, batch: &[EncodedPair], mode: Mode, rng: &mut SeededRng) -> Result<ForwardPass<T>> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let v = self.vocab_size();
        for pair in batch {
            pair.validate(v)?;
        }
        let training = mode == Mode::Train;
        let inputs = [true, false].map(|premise| gather_side(batch, premise));
        let table = &self.embedding.value;
        let b = batch.len();

        let (sides, inter, sentence) = match &self.encoder {
            Encoder::Pooled { translate } => {
                let mut caches = Vec::with_capacity(2);
                let mut vecs = Vec::with_capacity(2);
                for side in &inputs {
                    let tokens = embed(table, side);
                    let tr = time_distributed_dense(translate, &tokens)?;
                    let d = translate.d_out();
                    let mut pooled = Tensor::zeros(&[b, d]);
                    for (i, &len) in side.lengths.iter().enumerate() {
                        let acc = pooled.row_mut(i);
                        for t in 0..len {
                            for (a, &x) in acc.iter_mut().zip(tr.output().row(i * side.steps + t)) {
                                *a += x;
                            }
                        }
                    }
                    caches.push(SideCache::Pooled { translate: tr });
                    vecs.push(pooled);
                }
                let h_vec = vecs.pop().unwrap();
                let p_vec = vecs.pop().unwrap();
                let hc = caches.pop().unwrap();
                let pc = caches.pop().unwrap();
                ([pc, hc], None, (p_vec, h_vec))
            }
            Encoder::Attentive {
                translate1,
                translate2,
                bilstm,
            } => {
                let mut partial = Vec::with_capacity(2);
                for side in &inputs {
                    let embedded = embed(table, side);
                    let keys1 = time_distributed_dense(translate1, &embedded)?;
                    let (augmented, intra) = intra_attention(&embedded, keys1.output(), &side.lengths)?;
                    let keys2 = time_distributed_dense(translate2, &augmented)?;
                    partial.push((embedded, keys1, intra, augmented, keys2));
                }
                let (p, h) = (&partial[0], &partial[1]);
                let aligned = inter_attention(
                    &p.3,
                    &h.3,
                    p.4.output(),
                    h.4.output(),
                    &inputs[0].lengths,
                    &inputs[1].lengths,
                )?;
                let contexts = [aligned.premise_context, aligned.hypothesis_context];
                let mut caches = Vec::with_capacity(2);
                let mut vecs = Vec::with_capacity(2);
                for ((embedded, keys1, intra, augmented, keys2), (side, ctx)) in
                    partial.into_iter().zip(inputs.iter().zip(&contexts))
                {
                    let seq = concat_last(&augmented, ctx);
                    let run = bilstm.forward(&seq, &side.lengths)?;
                    vecs.push(run.final_state.clone());
                    caches.push(SideCache::Attentive {
                        embedded,
                        keys1,
                        intra,
                        augmented,
                        keys2,
                        bilstm: Some(run),
                    });
                }
                let h_vec = vecs.pop().unwrap();
                let p_vec = vecs.pop().unwrap();
                let hc = caches.pop().unwrap();
                let pc = caches.pop().unwrap();
                ([pc, hc], Some(aligned.cache), (p_vec, h_vec))
            }
        };

        let (p_vec, h_vec) = sentence;
        let s = p_vec.last_dim();
        let mut features = Tensor::zeros(&[b, 3 * s]);
        for i in 0..b {
            let row = features.row_mut(i);
            let (p, h) = (p_vec.row(i), h_vec.row(i));
            row[..s].copy_from_slice(p);
            row[s..2 * s].copy_from_slice(h);
            for j in 0..s {
                row[2 * s + j] = (p[j] - h[j]).abs();
            }
        }

        let mut x = features.clone();
        let mut head = Vec::with_capacity(self.head.len());
        for layer in &self.head {
            let dense = layer.dense.forward(&x)?;
            let mut y = dense.output().clone();
            let mut norm_cache = None;
            if let Some(norm) = &layer.norm {
                let (out, cache) = norm.forward(&y, training)?;
                y = out;
                norm_cache = Some(cache);
            }
            let (y, mask) = dropout(&y, self.config.dropout_rate, training, rng)?;
            head.push(HeadCache {
                dense,
                norm: norm_cache,
                dropout: mask,
            });
            x = y;
        }
        let output = self.output.forward(&x)?;
        output.output().check_finite("logits")?;
        let mut probs = output.output().clone();
        for r in 0..b {
            softmax_in_place(probs.row_mut(r));
        }
        Ok(ForwardPass {
            inputs,
            sides,
            inter,
            features,
            head,
            output,
            probs,
        })
    }

    /// Accumulates parameter gradients given `d_logits` (`b × 3`).
    pub fn backward(&mut self, pass: &ForwardPass<T>, d_logits: &Tensor<T>) -> Result<()> {
        let mut g = self.output.backward(&pass.output, d_logits)?;
        for (layer, cache) in self.head.iter_mut().zip(&pass.head).rev() {
            if let Some(mask) = &cache.dropout {
                g = mask.backward(&g);
            }
            if let (Some(norm), Some(nc)) = (&mut layer.norm, &cache.norm) {
                g = norm.backward(nc, &g)?;
            }
            g = layer.dense.backward(&cache.dense, &g)?;
        }

        let b = pass.features.rows();
        let s = pass.features.last_dim() / 3;
        let mut dp = Tensor::zeros(&[b, s]);
        let mut dh = Tensor::zeros(&[b, s]);
        for i in 0..b {
            let (f, gr) = (pass.features.row(i), g.row(i));
            let (dpr, dhr) = (dp.row_mut(i), dh.row_mut(i));
            for j in 0..s {
                let diff = f[j] - f[s + j];
                let sign = if diff > T::zero() {
                    T::one()
                } else if diff < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                dpr[j] = gr[j] + sign * gr[2 * s + j];
                dhr[j] = gr[s + j] - sign * gr[2 * s + j];
            }
        }

        let embed_trainable = self.embedding.trainable;
        let grads = [dp, dh];
        match &mut self.encoder {
            Encoder::Pooled { translate } => {
                for ((side, cache), dvec) in pass.inputs.iter().zip(&pass.sides).zip(&grads) {
                    let SideCache::Pooled { translate: tc } = cache else {
                        unreachable!("cache kind follows encoder kind")
                    };
                    let mut d_tr = Tensor::zeros(tc.output().shape());
                    for (i, &len) in side.lengths.iter().enumerate() {
                        for t in 0..len {
                            d_tr.row_mut(i * side.steps + t).copy_from_slice(dvec.row(i));
                        }
                    }
                    let d_embedded = translate.backward(tc, &d_tr)?;
                    if embed_trainable {
                        scatter_embedding_grad(&mut self.embedding.grad, side, &d_embedded);
                    }
                }
            }
            Encoder::Attentive {
                translate1,
                translate2,
                bilstm,
            } => {
                let d = self.config.embed_dim;
                let mut d_aug = Vec::with_capacity(2);
                let mut d_ctx = Vec::with_capacity(2);
                for (cache, dvec) in pass.sides.iter().zip(&grads) {
                    let SideCache::Attentive { bilstm: Some(run), .. } = cache else {
                        unreachable!("cache kind follows encoder kind")
                    };
                    let d_seq = bilstm.backward(run, None, Some(dvec))?;
                    let (a, c) = split_last(&d_seq, d);
                    d_aug.push(a);
                    d_ctx.push(c);
                }
                let (SideCache::Attentive { augmented: pa, keys2: pk, .. }, SideCache::Attentive { augmented: ha, keys2: hk, .. }) =
                    (&pass.sides[0], &pass.sides[1])
                else {
                    unreachable!()
                };
                let inter = pass.inter.as_ref().expect("attentive pass has inter cache");
                let ig = inter_attention_backward(pa, ha, pk.output(), hk.output(), inter, &d_ctx[0], &d_ctx[1])?;
                d_aug[0].add_assign(&ig.premise)?;
                d_aug[1].add_assign(&ig.hypothesis)?;
                let d_keys2 = [ig.keys_p, ig.keys_h];
                for (k, ((side, cache), mut da)) in
                    pass.inputs.iter().zip(&pass.sides).zip(d_aug).enumerate()
                {
                    let SideCache::Attentive {
                        embedded,
                        keys1,
                        intra,
                        augmented: _,
                        keys2,
                        ..
                    } = cache
                    else {
                        unreachable!()
                    };
                    let from_keys2 = translate2.backward(keys2, &d_keys2[k])?;
                    da.add_assign(&from_keys2)?;
                    let (mut d_embedded, d_keys1) =
                        intra_attention_backward(embedded, keys1.output(), intra, &da)?;
                    let from_keys1 = translate1.backward(keys1, &d_keys1)?;
                    d_embedded.add_assign(&from_keys1)?;
                    if embed_trainable {
                        scatter_embedding_grad(&mut self.embedding.grad, side, &d_embedded);
                    }
                }
            }
        }
        for (_, p) in self.named_params_mut() {
            p.settle_grad();
        }
        Ok(())
    }

    /// Folds training-mode batch statistics into the batch-norm moving
    /// averages.
    pub fn commit_batch_stats(&mut self, pass: &ForwardPass<T>) {
        for (layer, cache) in self.head.iter_mut().zip(&pass.head) {
            if let (Some(norm), Some(nc)) = (&mut layer.norm, &cache.norm) {
                norm.update_moving_stats(nc);
            }
        }
    }
}
