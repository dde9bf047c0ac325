//! Self-alignment math over a bias-free linear projection `f(x) = W x`.
//!
//! Hard pairs are mined from triplets `(a, p, n)` with `label(a) = label(p) ≠
//! label(n)` that satisfy
//!
//! ```text
//! ‖f(a) − f(p)‖² < ‖f(a) − f(n)‖² + λ
//! ```
//!
//! and every such triplet contributes `(a, p)` to the positive set and
//! `(a, n)` to the negative set. The multi-similarity loss over a batch of
//! size `M` with cosine similarity matrix `S` is
//!
//! ```text
//! L = 1/M Σ_i [ 1/α · log(1 + Σ_{n∈N_i} exp(α(S_in − ε)))
//!             + 1/β · log(1 + Σ_{p∈P_i} exp(−β(S_ip − ε))) ]
//! ```

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVector {
    pub x: DVector<f64>,
    pub label: String,
}

impl LabeledVector {
    pub fn new(x: impl Into<Vec<f64>>, label: impl Into<String>) -> Self {
        LabeledVector {
            x: DVector::from_vec(x.into()),
            label: label.into(),
        }
    }
}

/// `W` of shape `d_out × d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub w: DMatrix<f64>,
}

impl ProjectionModel {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("projection has non-finite entries".into()));
        }
        Ok(ProjectionModel { w })
    }

    pub fn identity(dim: usize) -> Self {
        ProjectionModel {
            w: DMatrix::identity(dim, dim),
        }
    }

    /// Uniform entries in `[-1, 1) / sqrt(d_in)`.
    pub fn random(d_out: usize, d_in: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d_in as f64).sqrt();
        ProjectionModel {
            w: DMatrix::from_fn(d_out, d_in, |_, _| rng.random_range(-1.0..1.0) * scale),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w.nrows()
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.d_in() {
            return Err(Error::Dimension { expected: self.d_in(), got: x.len() });
        }
        Ok(&self.w * x)
    }

    fn project_batch(&self, batch: &[LabeledVector]) -> Result<Vec<DVector<f64>>> {
        batch.iter().map(|v| self.project(&v.x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningParams {
    pub lambda: f64,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams { lambda: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsLossParams {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl Default for MsLossParams {
    fn default() -> Self {
        MsLossParams {
            alpha: 2.0,
            beta: 50.0,
            epsilon: 0.5,
        }
    }
}

/// Mined `(anchor, positive)` and `(anchor, negative)` index pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSets {
    pub positives: BTreeSet<(usize, usize)>,
    pub negatives: BTreeSet<(usize, usize)>,
}

impl PairSets {
    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }

    fn check(&self, m: usize) -> Result<()> {
        for &(a, b) in self.positives.iter().chain(&self.negatives) {
            if a >= m || b >= m {
                return Err(Error::Invalid(format!("pair ({a}, {b}) outside a batch of {m}")));
            }
        }
        Ok(())
    }
}

fn cosine(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Invalid("projected vector is zero".into()));
    }
    Ok(u.dot(v) / (nu * nv))
}

fn similarities(projected: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let m = projected.len();
    let mut s = DMatrix::zeros(m, m);
    for i in 0..m {
        s[(i, i)] = 1.0;
        for j in i + 1..m {
            let c = cosine(&projected[i], &projected[j])?;
            s[(i, j)] = c;
            s[(j, i)] = c;
        }
    }
    // a lone vector still needs a non-zero check
    if m == 1 {
        cosine(&projected[0], &projected[0])?;
    }
    Ok(s)
}

/// Cosine similarities of the projected batch; symmetric with unit diagonal.
pub fn similarity_matrix(batch: &[LabeledVector], model: &ProjectionModel) -> Result<DMatrix<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    similarities(&model.project_batch(batch)?)
}

/// The mining predicate as written: `d_ap < d_an + λ` on squared distances.
pub fn margin_predicate(d_ap: f64, d_an: f64, lambda: f64) -> bool {
    d_ap < d_an + lambda
}

pub fn mine_hard_pairs(
    batch: &[LabeledVector],
    model: &ProjectionModel,
    params: MiningParams,
) -> Result<PairSets> {
    mine_hard_pairs_with(batch, model, params, margin_predicate)
}

/// Mining with a custom predicate over `(d_ap, d_an, λ)`, where distances are
/// squared Euclidean between projections.
pub fn mine_hard_pairs_with(
    batch: &[LabeledVector],
    model: &ProjectionModel,
    params: MiningParams,
    predicate: impl Fn(f64, f64, f64) -> bool,
) -> Result<PairSets> {
    let f = model.project_batch(batch)?;
    let m = f.len();
    let mut d = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let v = (&f[i] - &f[j]).norm_squared();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut sets = PairSets::default();
    for a in 0..m {
        let label = &batch[a].label;
        let negatives: Vec<usize> = (0..m).filter(|&n| &batch[n].label != label).collect();
        for p in (0..m).filter(|&p| p != a && &batch[p].label == label) {
            for &n in &negatives {
                if predicate(d[a][p], d[a][n], params.lambda) {
                    sets.positives.insert((a, p));
                    sets.negatives.insert((a, n));
                }
            }
        }
    }
    Ok(sets)
}

/// `log(1 + Σ exp(z))` without overflow, together with the softmax-style
/// weights `exp(z_k) / (1 + Σ exp(z))`.
fn log1p_sum_exp(z: &[f64]) -> (f64, Vec<f64>) {
    if z.is_empty() {
        return (0.0, Vec::new());
    }
    let m = z.iter().copied().fold(0.0f64, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let denom = (-m).exp() + sum;
    let value = if m == 0.0 { sum.ln_1p() } else { m + denom.ln() };
    (value, exps.into_iter().map(|e| e / denom).collect())
}

/// Partner indices of one anchor with their exponents.
type Terms = (Vec<usize>, Vec<f64>);

fn anchor_terms(
    s: &DMatrix<f64>,
    pairs: &PairSets,
    i: usize,
    params: MsLossParams,
) -> (Terms, Terms) {
    let neg: Vec<usize> = pairs.negatives.range((i, 0)..(i + 1, 0)).map(|p| p.1).collect();
    let pos: Vec<usize> = pairs.positives.range((i, 0)..(i + 1, 0)).map(|p| p.1).collect();
    let zn = neg.iter().map(|&n| params.alpha * (s[(i, n)] - params.epsilon)).collect();
    let zp = pos.iter().map(|&p| -params.beta * (s[(i, p)] - params.epsilon)).collect();
    ((neg, zn), (pos, zp))
}

/// Multi-similarity loss over a similarity matrix and mined pairs.
pub fn ms_loss(s: &DMatrix<f64>, pairs: &PairSets, params: MsLossParams) -> Result<f64> {
    let m = s.nrows();
    if m == 0 || s.ncols() != m {
        return Err(Error::Invalid("similarity matrix must be square and non-empty".into()));
    }
    pairs.check(m)?;
    let mut total = 0.0;
    for i in 0..m {
        let ((_, zn), (_, zp)) = anchor_terms(s, pairs, i, params);
        total += log1p_sum_exp(&zn).0 / params.alpha + log1p_sum_exp(&zp).0 / params.beta;
    }
    Ok(total / m as f64)
}

/// Loss of a batch under a model for fixed pairs.
pub fn batch_loss(
    batch: &[LabeledVector],
    model: &ProjectionModel,
    pairs: &PairSets,
    params: MsLossParams,
) -> Result<f64> {
    ms_loss(&similarity_matrix(batch, model)?, pairs, params)
}

/// Analytic gradient of [`batch_loss`] with respect to `W`, pairs held fixed.
pub fn ms_loss_gradient(
    batch: &[LabeledVector],
    model: &ProjectionModel,
    pairs: &PairSets,
    params: MsLossParams,
) -> Result<DMatrix<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let f = model.project_batch(batch)?;
    let s = similarities(&f)?;
    let m = f.len();
    pairs.check(m)?;
    let norms: Vec<f64> = f.iter().map(|v| v.norm()).collect();

    // dL/dS_ij for the (anchor, other) entries that appear in the loss
    let mut ds: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..m {
        let ((neg, zn), (pos, zp)) = anchor_terms(&s, pairs, i, params);
        let (_, wn) = log1p_sum_exp(&zn);
        let (_, wp) = log1p_sum_exp(&zp);
        for (n, w) in neg.into_iter().zip(wn) {
            ds.push((i, n, w / m as f64));
        }
        for (p, w) in pos.into_iter().zip(wp) {
            ds.push((i, p, -w / m as f64));
        }
    }

    // back through cos(f_i, f_j) into the projected vectors
    let mut grad_f: Vec<DVector<f64>> = vec![DVector::zeros(model.d_out()); m];
    for (i, j, g) in ds {
        let c = s[(i, j)];
        let nn = norms[i] * norms[j];
        let gi = &f[j] / nn - &f[i] * (c / (norms[i] * norms[i]));
        let gj = &f[i] / nn - &f[j] * (c / (norms[j] * norms[j]));
        grad_f[i] += gi * g;
        grad_f[j] += gj * g;
    }
    let mut grad = DMatrix::zeros(model.d_out(), model.d_in());
    for (gk, v) in grad_f.iter().zip(batch) {
        grad += gk * v.x.transpose();
    }
    Ok(grad)
}

/// Hinge triplet loss `max(‖a − p‖² − ‖a − n‖² + λ, 0)` on embedded vectors.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], lambda: f64) -> Result<f64> {
    Ok(triplet_margin(a, p, n, lambda)?.max(0.0))
}

/// The unclamped argument of [`triplet_loss`].
pub fn triplet_margin(a: &[f64], p: &[f64], n: &[f64], lambda: f64) -> Result<f64> {
    if a.len() != p.len() || a.len() != n.len() {
        return Err(Error::Dimension { expected: a.len(), got: if a.len() != p.len() { p.len() } else { n.len() } });
    }
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    Ok(sq(a, p) - sq(a, n) + lambda)
}

/// Training-config file contents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let ms = MsLossParams::default();
        TrainConfig {
            alpha: ms.alpha,
            beta: ms.beta,
            epsilon: ms.epsilon,
            lambda: MiningParams::default().lambda,
            rate: 0.01,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn ms(&self) -> MsLossParams {
        MsLossParams {
            alpha: self.alpha,
            beta: self.beta,
            epsilon: self.epsilon,
        }
    }

    pub fn mining(&self) -> MiningParams {
        MiningParams { lambda: self.lambda }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ProjectionModel,
    /// Mean batch loss per epoch, measured before each batch's update.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    /// `epoch,loss` CSV, epochs numbered from 1.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

/// Plain gradient descent: for every batch in order, mine pairs under the
/// current model, then step `W -= rate · ∇L`.
pub fn train(
    batches: &[Vec<LabeledVector>],
    mut model: ProjectionModel,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if batches.is_empty() || batches.iter().any(Vec::is_empty) {
        return Err(Error::Empty("training batches"));
    }
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut sum = 0.0;
        for batch in batches {
            let pairs = mine_hard_pairs(batch, &model, config.mining())?;
            let loss = batch_loss(batch, &model, &pairs, config.ms())?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            sum += loss;
            let grad = ms_loss_gradient(batch, &model, &pairs, config.ms())?;
            model.w -= grad * config.rate;
            if model.w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch, loss: f64::NAN });
            }
        }
        losses.push(sum / batches.len() as f64);
    }
    Ok(TrainOutcome { model, losses })
}

/// Mean cosine over same-label and over cross-label pairs (`i < j`) of the
/// projected batch. A side with no pairs is `NaN`.
pub fn mean_cosines(batch: &[LabeledVector], model: &ProjectionModel) -> Result<(f64, f64)> {
    let s = similarity_matrix(batch, model)?;
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..batch.len() {
        for j in i + 1..batch.len() {
            if batch[i].label == batch[j].label {
                intra += s[(i, j)];
                ni += 1;
            } else {
                inter += s[(i, j)];
                nx += 1;
            }
        }
    }
    Ok((intra / ni as f64, inter / nx as f64))
}
