//! Trainable context encoder with exact manual gradients.
//!
//! Reference encoding of an instance `(tokens, t)`:
//!
//! ```text
//! units(tok)  = ["<tok>"] ++ char trigrams of "<tok>"      (tok lowercased)
//! vec(tok)    = mean over units u of E[hash(u) mod buckets]
//! u           = vec(tokens[t])
//! m           = mean of vec(tokens[i]) for i in [t-W, t+W], i != t
//! h           = (u + m) / 2, or u when the window holds no other token
//! f(x, t)     = P h + b
//! ```
//!
//! `h` is a fixed linear combination of embedding rows, so the encoder is
//! represented internally as a list of `(bucket, coefficient)` pairs; forward
//! and backward both read that list.
//!
//! Glosses use a separate parameter set with the same shape:
//! `f_gloss(g) = P' mean_k vec'(g_k) + b'`, and an extra `d x d` matrix `W`
//! maps gloss vectors into the context space.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub embedding_dim: usize,
    pub hash_buckets: usize,
    /// Tokens considered on each side of the target.
    pub context_window: usize,
    pub seed: u64,
    /// Allocate the gloss encoder and gloss projection.
    #[serde(default)]
    pub gloss_encoder: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embedding_dim: 32,
            hash_buckets: 4096,
            context_window: 5,
            seed: 0,
            gloss_encoder: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim < 2 {
            return Err(Error::config("embedding_dim must be at least 2"));
        }
        if self.hash_buckets < 2 {
            return Err(Error::config("hash_buckets must be at least 2"));
        }
        Ok(())
    }
}

/// Embedding table, projection and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSet {
    /// `buckets x d`, row-major.
    pub embeddings: Vec<f64>,
    /// `d x d`, row-major.
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamSet {
    fn init(buckets: usize, d: usize, rng: &mut rng::WsdRng) -> Self {
        let embeddings = (0..buckets * d).map(|_| rng.random_range(-0.05..0.05)).collect();
        ParamSet {
            embeddings,
            projection: identity(d),
            bias: vec![0.0; d],
        }
    }

    fn check_shape(&self, buckets: usize, d: usize, what: &str) -> Result<()> {
        if self.embeddings.len() != buckets * d
            || self.projection.len() != d * d
            || self.bias.len() != d
        {
            return Err(Error::Shape(format!(
                "{what}: expected {buckets}x{d} embeddings, {d}x{d} projection, {d} bias"
            )));
        }
        Ok(())
    }
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// An encoded instance or gloss.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector(pub Vec<f64>);

impl ContextVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl AsRef<[f64]> for ContextVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for ContextVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Gradient accumulators, one flat array per entry of
/// [`ContextEncoder::parameters`], in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub tensors: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn zeros_like(shapes: &[usize]) -> Self {
        GradBuffer {
            tensors: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn add_assign(&mut self, other: &GradBuffer) -> Result<()> {
        if self.shapes() != other.shapes() {
            return Err(Error::Shape("gradient buffers differ in shape".into()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.tensors.iter().map(Vec::len).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().flatten().all(|&x| x == 0.0)
    }
}

/// The interface the metric head and trainer program against. A heavier
/// contextual encoder can replace [`EncoderModel`] by implementing it.
pub trait ContextEncoder {
    fn dim(&self) -> usize;

    fn encode(&self, instance: &Instance) -> ContextVector;

    /// Adds `d(upstream . encode(instance)) / d(params)` into `grads`.
    fn backward(&self, instance: &Instance, upstream: &[f64], grads: &mut GradBuffer) -> Result<()>;

    /// Gloss representation mapped into the context space (`W f_gloss(g)`).
    fn encode_gloss(&self, gloss: &[String]) -> Result<ContextVector>;

    /// Adds `d(upstream . encode_gloss(gloss)) / d(params)` into `grads`.
    fn backward_gloss(&self, gloss: &[String], upstream: &[f64], grads: &mut GradBuffer) -> Result<()>;

    fn parameters(&self) -> Vec<(&'static str, &[f64])>;

    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    fn zero_grads(&self) -> GradBuffer {
        let shapes: Vec<usize> = self.parameters().iter().map(|(_, p)| p.len()).collect();
        GradBuffer::zeros_like(&shapes)
    }
}

/// Hash-bucket reference encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub theta: ParamSet,
    pub phi: Option<ParamSet>,
    /// Gloss-to-context projection, `d x d` row-major.
    pub gloss_projection: Option<Vec<f64>>,
}

// Tensor indices in `parameters()` order; projection and bias follow each
// embedding table.
const THETA_EMB: usize = 0;
const PHI_EMB: usize = 3;
const GLOSS_W: usize = 6;

/// Sub-units of a token: the boundary-marked lowercase word, then its
/// character trigrams.
pub fn sub_units(token: &str) -> Vec<String> {
    let marked: Vec<char> = std::iter::once('<')
        .chain(token.to_lowercase().chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut units = Vec::with_capacity(marked.len().saturating_sub(1));
    units.push(marked.iter().collect());
    for tri in marked.windows(3) {
        units.push(tri.iter().collect());
    }
    units
}

pub fn bucket_of(unit: &str, buckets: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(unit.as_bytes());
    (h.finish() % buckets as u64) as usize
}

impl EncoderModel {
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let (b, d) = (config.hash_buckets, config.embedding_dim);
        let theta = ParamSet::init(b, d, &mut rng::derive(config.seed, &["theta".into()]));
        let (phi, gloss_projection) = if config.gloss_encoder {
            let phi = ParamSet::init(b, d, &mut rng::derive(config.seed, &["phi".into()]));
            (Some(phi), Some(identity(d)))
        } else {
            (None, None)
        };
        Ok(EncoderModel {
            config,
            theta,
            phi,
            gloss_projection,
        })
    }

    /// Checks parameter shapes against the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let (b, d) = (self.config.hash_buckets, self.config.embedding_dim);
        self.theta.check_shape(b, d, "theta")?;
        match (&self.phi, &self.gloss_projection, self.config.gloss_encoder) {
            (Some(phi), Some(w), true) => {
                phi.check_shape(b, d, "phi")?;
                if w.len() != d * d {
                    return Err(Error::Shape(format!("W: expected {d}x{d}")));
                }
            }
            (None, None, false) => {}
            _ => {
                return Err(Error::Shape(
                    "gloss parameters must be present exactly when gloss_encoder is set".into(),
                ))
            }
        }
        if self.parameters().iter().any(|(_, p)| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::Numeric("non-finite encoder parameter".into()));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, p)| p.len()).sum()
    }

    fn d(&self) -> usize {
        self.config.embedding_dim
    }

    /// Embedding rows and weights for one token's sub-unit mean, scaled by `scale`.
    fn push_token(&self, token: &str, scale: f64, out: &mut Vec<(usize, f64)>) {
        let units = sub_units(token);
        let w = scale / units.len() as f64;
        for u in &units {
            out.push((bucket_of(u, self.config.hash_buckets), w));
        }
    }

    /// The pooled input `h` of an instance as weighted embedding rows.
    pub fn pooling(&self, instance: &Instance) -> Vec<(usize, f64)> {
        let t = instance.target_index;
        let w = self.config.context_window;
        let lo = t.saturating_sub(w);
        let hi = (t + w).min(instance.tokens.len() - 1);
        let n_ctx = hi - lo;
        let mut out = Vec::new();
        if n_ctx == 0 {
            self.push_token(&instance.tokens[t], 1.0, &mut out);
            return out;
        }
        self.push_token(&instance.tokens[t], 0.5, &mut out);
        let scale = 0.5 / n_ctx as f64;
        for (i, tok) in instance.tokens.iter().enumerate().take(hi + 1).skip(lo) {
            if i != t {
                self.push_token(tok, scale, &mut out);
            }
        }
        out
    }

    fn gloss_pooling(&self, gloss: &[String]) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let scale = 1.0 / gloss.len() as f64;
        for tok in gloss {
            self.push_token(tok, scale, &mut out);
        }
        out
    }

    fn pooled(&self, emb: &[f64], pooling: &[(usize, f64)]) -> Vec<f64> {
        let d = self.d();
        let mut h = vec![0.0; d];
        for &(b, c) in pooling {
            for (hk, ek) in h.iter_mut().zip(&emb[b * d..(b + 1) * d]) {
                *hk += c * ek;
            }
        }
        h
    }

    fn affine(&self, params: &ParamSet, h: &[f64]) -> Vec<f64> {
        let d = self.d();
        let mut out = params.bias.clone();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &params.projection[r * d..(r + 1) * d];
            *o += row.iter().zip(h).map(|(p, x)| p * x).sum::<f64>();
        }
        out
    }

    /// Backprop through `P h + b` with `h` pooled from `emb`, into the three
    /// gradient tensors starting at `base`.
    fn backward_affine(
        &self,
        params: &ParamSet,
        pooling: &[(usize, f64)],
        upstream: &[f64],
        grads: &mut GradBuffer,
        base: usize,
    ) {
        let d = self.d();
        let h = self.pooled(&params.embeddings, pooling);
        {
            let gp = &mut grads.tensors[base + 1];
            for r in 0..d {
                let g = upstream[r];
                if g == 0.0 {
                    continue;
                }
                for c in 0..d {
                    gp[r * d + c] += g * h[c];
                }
            }
        }
        for (gb, g) in grads.tensors[base + 2].iter_mut().zip(upstream) {
            *gb += g;
        }
        // dh = P^T upstream
        let mut dh = vec![0.0; d];
        for r in 0..d {
            let g = upstream[r];
            if g == 0.0 {
                continue;
            }
            for c in 0..d {
                dh[c] += params.projection[r * d + c] * g;
            }
        }
        let ge = &mut grads.tensors[base];
        for &(b, coef) in pooling {
            for (gk, dk) in ge[b * d..(b + 1) * d].iter_mut().zip(&dh) {
                *gk += coef * dk;
            }
        }
    }

    fn check_grads(&self, upstream: &[f64], grads: &GradBuffer) -> Result<()> {
        if upstream.len() != self.d() {
            return Err(Error::Shape(format!(
                "upstream gradient has length {}, expected {}",
                upstream.len(),
                self.d()
            )));
        }
        let expected: Vec<usize> = self.parameters().iter().map(|(_, p)| p.len()).collect();
        if grads.shapes() != expected {
            return Err(Error::Shape("gradient buffer does not match the model".into()));
        }
        Ok(())
    }

    fn gloss_parts(&self) -> Result<(&ParamSet, &[f64])> {
        match (&self.phi, &self.gloss_projection) {
            (Some(phi), Some(w)) => Ok((phi, w)),
            _ => Err(Error::config("model has no gloss encoder (set gloss_encoder)")),
        }
    }

    /// Gloss encoding before the `W` projection.
    pub fn encode_gloss_raw(&self, gloss: &[String]) -> Result<ContextVector> {
        let (phi, _) = self.gloss_parts()?;
        if gloss.is_empty() {
            return Err(Error::validation("empty gloss"));
        }
        let h = self.pooled(&phi.embeddings, &self.gloss_pooling(gloss));
        Ok(ContextVector(self.affine(phi, &h)))
    }
}

impl ContextEncoder for EncoderModel {
    fn dim(&self) -> usize {
        self.d()
    }

    fn encode(&self, instance: &Instance) -> ContextVector {
        let h = self.pooled(&self.theta.embeddings, &self.pooling(instance));
        ContextVector(self.affine(&self.theta, &h))
    }

    fn backward(&self, instance: &Instance, upstream: &[f64], grads: &mut GradBuffer) -> Result<()> {
        self.check_grads(upstream, grads)?;
        if upstream.iter().all(|&g| g == 0.0) {
            return Ok(());
        }
        let pooling = self.pooling(instance);
        self.backward_affine(&self.theta, &pooling, upstream, grads, THETA_EMB);
        Ok(())
    }

    fn encode_gloss(&self, gloss: &[String]) -> Result<ContextVector> {
        let raw = self.encode_gloss_raw(gloss)?;
        let (_, w) = self.gloss_parts()?;
        Ok(ContextVector(mat_vec(w, &raw, self.d())))
    }

    fn backward_gloss(&self, gloss: &[String], upstream: &[f64], grads: &mut GradBuffer) -> Result<()> {
        self.check_grads(upstream, grads)?;
        let (phi, w) = self.gloss_parts()?;
        if gloss.is_empty() {
            return Err(Error::validation("empty gloss"));
        }
        let d = self.d();
        let raw = self.encode_gloss_raw(gloss)?;
        let gw = &mut grads.tensors[GLOSS_W];
        for r in 0..d {
            for c in 0..d {
                gw[r * d + c] += upstream[r] * raw[c];
            }
        }
        let mut d_raw = vec![0.0; d];
        for r in 0..d {
            for c in 0..d {
                d_raw[c] += w[r * d + c] * upstream[r];
            }
        }
        let pooling = self.gloss_pooling(gloss);
        self.backward_affine(phi, &pooling, &d_raw, grads, PHI_EMB);
        Ok(())
    }

    fn parameters(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![
            ("theta.embeddings", &self.theta.embeddings),
            ("theta.projection", &self.theta.projection),
            ("theta.bias", &self.theta.bias),
        ];
        if let (Some(phi), Some(w)) = (&self.phi, &self.gloss_projection) {
            out.push(("phi.embeddings", &phi.embeddings));
            out.push(("phi.projection", &phi.projection));
            out.push(("phi.bias", &phi.bias));
            out.push(("W", w));
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            ("theta.embeddings", &mut self.theta.embeddings),
            ("theta.projection", &mut self.theta.projection),
            ("theta.bias", &mut self.theta.bias),
        ];
        if let (Some(phi), Some(w)) = (&mut self.phi, &mut self.gloss_projection) {
            out.push(("phi.embeddings", &mut phi.embeddings));
            out.push(("phi.projection", &mut phi.projection));
            out.push(("phi.bias", &mut phi.bias));
            out.push(("W", w));
        }
        out
    }
}

pub(crate) fn mat_vec(m: &[f64], v: &[f64], d: usize) -> Vec<f64> {
    (0..d)
        .map(|r| m[r * d..(r + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}
