//! Encoder/decoder pair trained so that squared latent distances reproduce a
//! given contextual distance, with a reconstruction penalty.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ot::{barycenter_free_support, ContextDistance, OtError, Particles, SquaredL2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("invalid embedding configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite activation")]
    NonFinite,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("metric evaluation failed: {0}")]
    Metric(String),
    #[error(transparent)]
    Ot(#[from] OtError),
}

/// Layer widths of the encoder; the decoder mirrors them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub context_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Architecture {
    /// `dim -> 32 -> 32 -> 2`.
    pub fn standard(context_dim: usize) -> Self {
        Self { context_dim, hidden: vec![32, 32], latent_dim: 2 }
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.context_dim];
        w.extend(&self.hidden);
        w.push(self.latent_dim);
        w
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = self.encoder_widths();
        w.reverse();
        w
    }

    fn validate(&self) -> Result<(), EmbedError> {
        if self.context_dim == 0 || self.latent_dim == 0 || self.hidden.contains(&0) {
            return Err(EmbedError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

fn layer_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Which network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Net {
    Encoder,
    Decoder,
}

/// One tagged parameter: weights are `(row, col)` with `row` the output unit,
/// biases have `col = None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamEntry {
    pub net: Net,
    pub layer: usize,
    pub row: usize,
    pub col: Option<usize>,
    pub value: f64,
}

/// Encoder and decoder parameters in one flat vector: per layer, the
/// row-major weight matrix (outputs x inputs) followed by the bias. Hidden
/// layers use tanh, output layers are linear.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    arch: Architecture,
    theta: Vec<f64>,
}

impl MlpParams {
    /// Weights and biases uniform in `[-0.5, 0.5] / sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self, EmbedError> {
        arch.validate()?;
        let mut theta = Vec::new();
        for widths in [arch.encoder_widths(), arch.decoder_widths()] {
            for w in widths.windows(2) {
                let scale = 1.0 / (w[0] as f64).sqrt();
                for _ in 0..(w[0] * w[1] + w[1]) {
                    theta.push(rng.random_range(-0.5..=0.5) * scale);
                }
            }
        }
        Ok(Self { arch: arch.clone(), theta })
    }

    pub fn from_flat(arch: &Architecture, theta: Vec<f64>) -> Result<Self, EmbedError> {
        arch.validate()?;
        let n = layer_count(&arch.encoder_widths()) + layer_count(&arch.decoder_widths());
        if theta.len() != n {
            return Err(EmbedError::Dimension { expected: n, got: theta.len() });
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self { arch: arch.clone(), theta })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn flat(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn split(&self) -> (&[f64], &[f64]) {
        self.theta.split_at(layer_count(&self.arch.encoder_widths()))
    }

    /// Every parameter with its network, layer and position.
    pub fn entries(&self) -> Vec<ParamEntry> {
        let mut out = Vec::with_capacity(self.theta.len());
        let mut k = 0;
        for (net, widths) in [(Net::Encoder, self.arch.encoder_widths()), (Net::Decoder, self.arch.decoder_widths())] {
            for (layer, w) in widths.windows(2).enumerate() {
                for row in 0..w[1] {
                    for col in 0..w[0] {
                        out.push(ParamEntry { net, layer, row, col: Some(col), value: self.theta[k] });
                        k += 1;
                    }
                }
                for row in 0..w[1] {
                    out.push(ParamEntry { net, layer, row, col: None, value: self.theta[k] });
                    k += 1;
                }
            }
        }
        out
    }

    pub fn encode_point(&self, x: &[f64]) -> Result<Vec<f64>, EmbedError> {
        check_dim(self.arch.context_dim, x.len())?;
        let acts = forward(&self.arch.encoder_widths(), self.split().0, x)?;
        Ok(acts.last().expect("at least one layer").clone())
    }

    pub fn decode_point(&self, z: &[f64]) -> Result<Vec<f64>, EmbedError> {
        check_dim(self.arch.latent_dim, z.len())?;
        let acts = forward(&self.arch.decoder_widths(), self.split().1, z)?;
        Ok(acts.last().expect("at least one layer").clone())
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), EmbedError> {
    if expected == got {
        Ok(())
    } else {
        Err(EmbedError::Dimension { expected, got })
    }
}

/// Activations of every layer, input first.
fn forward(widths: &[usize], theta: &[f64], x: &[f64]) -> Result<Vec<Vec<f64>>, EmbedError> {
    let n_layers = widths.len() - 1;
    let mut acts = vec![x.to_vec()];
    let mut off = 0;
    for (l, w) in widths.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let (weights, bias) = theta[off..off + n_in * n_out + n_out].split_at(n_in * n_out);
        off += n_in * n_out + n_out;
        let prev = &acts[l];
        let mut next = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let z: f64 = bias[o] + weights[o * n_in..(o + 1) * n_in].iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
            let a = if l + 1 < n_layers { z.tanh() } else { z };
            if !a.is_finite() {
                return Err(EmbedError::NonFinite);
            }
            next.push(a);
        }
        acts.push(next);
    }
    Ok(acts)
}

/// Accumulates the parameter gradient for upstream gradient `g_out` on the
/// output into `grad`, and returns the gradient with respect to the input.
fn backward(widths: &[usize], theta: &[f64], acts: &[Vec<f64>], g_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let n_layers = widths.len() - 1;
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for w in widths.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    let mut g = g_out.to_vec();
    for l in (0..n_layers).rev() {
        let (n_in, n_out) = (widths[l], widths[l + 1]);
        if l + 1 < n_layers {
            for (gi, a) in g.iter_mut().zip(&acts[l + 1]) {
                *gi *= 1.0 - a * a;
            }
        }
        let o = offsets[l];
        let prev = &acts[l];
        let mut g_in = vec![0.0; n_in];
        for r in 0..n_out {
            let row = o + r * n_in;
            for c in 0..n_in {
                grad[row + c] += g[r] * prev[c];
                g_in[c] += theta[row + c] * g[r];
            }
            grad[o + n_in * n_out + r] += g[r];
        }
        g = g_in;
    }
    g
}

/// The two terms of the embedding objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    /// `sum_i (|e(c1) - e(c2)|^2 - d_i)^2`.
    pub distance: f64,
    /// `sum_i sum_k |dec(enc(c_k)) - c_k|^2`, before weighting.
    pub recon: f64,
    /// `distance + lambda * recon`.
    pub total: f64,
}

fn check_batch(params: &MlpParams, pairs: &[(Vec<f64>, Vec<f64>)], distances: &[f64], lambda: f64) -> Result<(), EmbedError> {
    if pairs.len() != distances.len() {
        return Err(EmbedError::Dimension { expected: pairs.len(), got: distances.len() });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(EmbedError::Config(format!("lambda must be nonnegative, got {lambda}")));
    }
    if let Some(d) = distances.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(EmbedError::Config(format!("distances must be finite and nonnegative, got {d}")));
    }
    for (a, b) in pairs {
        check_dim(params.arch.context_dim, a.len())?;
        check_dim(params.arch.context_dim, b.len())?;
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Value of the embedding objective on a batch of context pairs.
pub fn embed_loss(
    params: &MlpParams,
    pairs: &[(Vec<f64>, Vec<f64>)],
    distances: &[f64],
    lambda: f64,
) -> Result<LossParts, EmbedError> {
    check_batch(params, pairs, distances, lambda)?;
    let mut distance = 0.0;
    let mut recon = 0.0;
    for ((a, b), &d) in pairs.iter().zip(distances) {
        let (ea, eb) = (params.encode_point(a)?, params.encode_point(b)?);
        let r = sq_dist(&ea, &eb) - d;
        distance += r * r;
        if lambda > 0.0 {
            recon += sq_dist(&params.decode_point(&ea)?, a) + sq_dist(&params.decode_point(&eb)?, b);
        }
    }
    let total = distance + lambda * recon;
    if !total.is_finite() {
        return Err(EmbedError::NonFinite);
    }
    Ok(LossParts { distance, recon, total })
}

/// Analytic gradient of [`embed_loss`]'s `total`, laid out like
/// [`MlpParams::flat`].
pub fn embed_grad(
    params: &MlpParams,
    pairs: &[(Vec<f64>, Vec<f64>)],
    distances: &[f64],
    lambda: f64,
) -> Result<Vec<f64>, EmbedError> {
    check_batch(params, pairs, distances, lambda)?;
    let enc_w = params.arch.encoder_widths();
    let dec_w = params.arch.decoder_widths();
    let (enc, dec) = params.split();
    let mut grad = vec![0.0; params.theta.len()];
    let (g_enc, g_dec) = grad.split_at_mut(enc.len());
    for ((a, b), &d) in pairs.iter().zip(distances) {
        let acts_a = forward(&enc_w, enc, a)?;
        let acts_b = forward(&enc_w, enc, b)?;
        let ea = acts_a.last().expect("output layer");
        let eb = acts_b.last().expect("output layer");
        let r = sq_dist(ea, eb) - d;
        let mut ga: Vec<f64> = ea.iter().zip(eb).map(|(x, y)| 4.0 * r * (x - y)).collect();
        let mut gb: Vec<f64> = ga.iter().map(|g| -g).collect();
        if lambda > 0.0 {
            for (x, e, g) in [(a, ea, &mut ga), (b, eb, &mut gb)] {
                let acts_d = forward(&dec_w, dec, e)?;
                let y = acts_d.last().expect("output layer");
                let g_y: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| 2.0 * lambda * (yi - xi)).collect();
                let g_e = backward(&dec_w, dec, &acts_d, &g_y, g_dec);
                for (gi, ge) in g.iter_mut().zip(g_e) {
                    *gi += ge;
                }
            }
        }
        backward(&enc_w, enc, &acts_a, &ga, g_enc);
        backward(&enc_w, enc, &acts_b, &gb, g_enc);
    }
    Ok(grad)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbedTrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_pairs: usize,
    pub seed: u64,
}

impl Default for EmbedTrainConfig {
    fn default() -> Self {
        Self { lambda: 1.0, learning_rate: 1e-2, epochs: 200, batch_size: 32, n_pairs: 1000, seed: 0 }
    }
}

impl EmbedTrainConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(EmbedError::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbedError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.n_pairs == 0 {
            return Err(EmbedError::Config("batch_size and n_pairs must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch training losses, averaged over the pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss: f64,
    pub distance_term: f64,
    pub recon_term: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedEmbedding {
    pub params: MlpParams,
    /// Epoch 0 is the initial parameters.
    pub report: Vec<EpochReport>,
    /// Spearman correlation between squared latent distances and targets
    /// on the training pairs.
    pub correlation: f64,
}

fn report(epoch: usize, parts: LossParts, n: usize) -> EpochReport {
    let n = n as f64;
    EpochReport { epoch, loss: parts.total / n, distance_term: parts.distance / n, recon_term: parts.recon / n }
}

/// Samples `n_pairs` context pairs with `sampler`, evaluates `metric` on them
/// and runs mini-batch gradient descent on the embedding objective, each
/// step using the batch-mean gradient.
pub fn train_embedding<S, D>(
    mut sampler: S,
    metric: &D,
    arch: &Architecture,
    cfg: &EmbedTrainConfig,
) -> Result<TrainedEmbedding, EmbedError>
where
    S: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    D: ContextDistance<[f64]> + ?Sized,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = MlpParams::init(arch, &mut rng)?;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_pairs).map(|_| (sampler(&mut rng), sampler(&mut rng))).collect();
    let distances = pairs
        .iter()
        .map(|(a, b)| metric.distance(a, b).map_err(|e| EmbedError::Metric(e.to_string())))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut history = vec![report(0, embed_loss(&params, &pairs, &distances, cfg.lambda)?, pairs.len())];
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let bp: Vec<(Vec<f64>, Vec<f64>)> = batch.iter().map(|&i| pairs[i].clone()).collect();
            let bd: Vec<f64> = batch.iter().map(|&i| distances[i]).collect();
            let g = embed_grad(&params, &bp, &bd, cfg.lambda).map_err(|_| EmbedError::Diverged { epoch })?;
            let step = cfg.learning_rate / batch.len() as f64;
            for (t, gi) in params.theta.iter_mut().zip(&g) {
                *t -= step * gi;
            }
        }
        let parts = embed_loss(&params, &pairs, &distances, cfg.lambda).map_err(|_| EmbedError::Diverged { epoch })?;
        if params.theta.iter().any(|t| !t.is_finite()) {
            return Err(EmbedError::Diverged { epoch });
        }
        history.push(report(epoch, parts, pairs.len()));
    }
    let latent = pairs
        .iter()
        .map(|(a, b)| Ok(sq_dist(&params.encode_point(a)?, &params.encode_point(b)?)))
        .collect::<Result<Vec<f64>, EmbedError>>()?;
    let correlation = spearman(&latent, &distances);
    Ok(TrainedEmbedding { params, report: history, correlation })
}

pub fn encode(params: &MlpParams, particles: &Particles) -> Result<Particles, EmbedError> {
    check_dim(params.arch.context_dim, particles.dim())?;
    let points = particles.points().iter().map(|p| params.encode_point(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(Particles::new(points, particles.weights().to_vec())?)
}

pub fn decode(params: &MlpParams, latent: &Particles) -> Result<Particles, EmbedError> {
    check_dim(params.arch.latent_dim, latent.dim())?;
    let points = latent.points().iter().map(|p| params.decode_point(p)).collect::<Result<Vec<_>, _>>()?;
    Ok(Particles::new(points, latent.weights().to_vec())?)
}

/// Interpolates the encoded clouds in latent space under squared L2 and
/// decodes the result.
pub fn latent_interpolation(params: &MlpParams, src: &Particles, tgt: &Particles, alpha: f64) -> Result<Particles, EmbedError> {
    let z = barycenter_free_support(&encode(params, src)?, &encode(params, tgt)?, alpha, &SquaredL2)?;
    decode(params, &z)
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman inputs must align");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}


#[cfg(test)]
mod oracle_tests {
    use super::*;

    fn mlp(theta: &[f64], widths: &[usize], x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..widths.len() - 1 {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                z[o] = theta[off + n_in * n_out + o];
                for i in 0..n_in {
                    z[o] += theta[off + o * n_in + i] * a[i];
                }
            }
            off += n_in * n_out + n_out;
            a = if l + 2 < widths.len() { z.iter().map(|v| v.tanh()).collect() } else { z };
        }
        a
    }

    fn straight_loss(p: &MlpParams, pairs: &[(Vec<f64>, Vec<f64>)], d: &[f64], lambda: f64) -> f64 {
        let arch = p.architecture();
        let enc_w = arch.encoder_widths();
        let dec_w = arch.decoder_widths();
        let split = layer_count(&enc_w);
        let (te, td) = p.flat().split_at(split);
        let mut total = 0.0;
        for ((a, b), di) in pairs.iter().zip(d) {
            let (ea, eb) = (mlp(te, &enc_w, a), mlp(te, &enc_w, b));
            let s: f64 = ea.iter().zip(&eb).map(|(x, y)| (x - y).powi(2)).sum();
            total += (s - di).powi(2);
            for (x, e) in [(a, &ea), (b, &eb)] {
                let r = mlp(td, &dec_w, e);
                total += lambda * r.iter().zip(x).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
            }
        }
        total
    }

    type Batch = (MlpParams, Vec<(Vec<f64>, Vec<f64>)>, Vec<f64>);

    fn seeded(seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = MlpParams::init(&Architecture::standard(2), &mut rng).unwrap();
        let mut pt = || vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let pairs: Vec<_> = (0..6).map(|_| (pt(), pt())).collect();
        let d = (0..6).map(|i| 0.3 * i as f64).collect();
        (p, pairs, d)
    }

    #[test]
    fn loss_matches_straight_line_evaluation() {
        for seed in 0..5 {
            let (p, pairs, d) = seeded(seed);
            for lambda in [0.0, 0.1, 1.0] {
                let got = embed_loss(&p, &pairs, &d, lambda).unwrap().total;
                let want = straight_loss(&p, &pairs, &d, lambda);
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-5;
        for lambda in [0.0, 0.1, 1.0] {
            let (p, pairs, d) = seeded(11);
            let g = embed_grad(&p, &pairs, &d, lambda).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let i = rng.random_range(0..p.len());
                let mut plus = p.flat().to_vec();
                let mut minus = plus.clone();
                plus[i] += h;
                minus[i] -= h;
                let arch = p.architecture();
                let fp = straight_loss(&MlpParams::from_flat(arch, plus).unwrap(), &pairs, &d, lambda);
                let fm = straight_loss(&MlpParams::from_flat(arch, minus).unwrap(), &pairs, &d, lambda);
                let fd = (fp - fm) / (2.0 * h);
                worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6));
            }
            assert!(worst <= 1e-4, "lambda {lambda}: {worst}");
        }
    }
}
