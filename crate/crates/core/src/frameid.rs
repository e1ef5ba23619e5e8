//! Frame identification: context block vectors, a WSABIE-style bilinear
//! scorer trained with WARP, and a log-linear baseline.

use std::collections::{BTreeMap, HashMap};

use crate::error::{ensure_dim, Error, Result};
use crate::evalkit::argmax;
use crate::lexicon::{EmbeddingTable, Vocab};
use crate::numerics::{axpy, dot, gaussian_init, DenseMatrix, DenseVector, RngStream};
use crate::optimize::{lbfgs_minimize, LbfgsConfig, LbfgsResult, ParamVector, SegmentId};

/// A predicate occurrence with the words found at each syntactic position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameInstance {
    /// Lemma plus coarse part of speech, e.g. `run.v`.
    pub lexical_unit: String,
    pub frame: Option<String>,
    pub slots: Vec<(String, Vec<String>)>,
}

/// Position labels in block order, and the input embedding width.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInventory {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
}

impl BlockInventory {
    pub fn new<I, S>(labels: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut inv = BlockInventory {
            labels: Vec::new(),
            index: HashMap::new(),
            dim,
        };
        for l in labels {
            inv.push(l.as_ref());
        }
        inv
    }

    /// Every position label seen in `instances`, in first-seen order.
    pub fn mine(instances: &[FrameInstance], dim: usize) -> Self {
        BlockInventory::new(
            instances
                .iter()
                .flat_map(|i| i.slots.iter().map(|(l, _)| l.as_str())),
            dim,
        )
    }

    fn push(&mut self, label: &str) {
        if !self.index.contains_key(label) {
            self.index.insert(label.to_string(), self.labels.len());
            self.labels.push(label.to_string());
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Number of blocks, `k`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Embedding width per block, `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of a block vector, `k·n`.
    pub fn input_dim(&self) -> usize {
        self.labels.len() * self.dim
    }
}

/// Things skipped while building a block vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockStats {
    pub unknown_labels: usize,
    pub unknown_words: usize,
}

impl BlockStats {
    pub fn merge(&mut self, other: BlockStats) {
        self.unknown_labels += other.unknown_labels;
        self.unknown_words += other.unknown_words;
    }
}

/// Concatenation of per-position mean embeddings; empty positions are zero.
/// Labels outside the inventory and words outside the lexicon are skipped
/// and counted.
pub fn build_block_vector(
    inst: &FrameInstance,
    inv: &BlockInventory,
    lexicon: &EmbeddingTable,
) -> Result<(DenseVector, BlockStats)> {
    let n = inv.dim();
    ensure_dim(n, lexicon.dim(), "embedding width vs block width")?;
    let mut x = vec![0.0; inv.input_dim()];
    let mut counts = vec![0usize; inv.len()];
    let mut stats = BlockStats::default();
    for (label, words) in &inst.slots {
        let Some(b) = inv.get(label) else {
            stats.unknown_labels += 1;
            continue;
        };
        for w in words {
            match lexicon.vector(w) {
                Some(v) => {
                    axpy(1.0, v, &mut x[b * n..(b + 1) * n]);
                    counts[b] += 1;
                }
                None => stats.unknown_words += 1,
            }
        }
    }
    for (b, &c) in counts.iter().enumerate() {
        if c > 1 {
            let inv_c = 1.0 / c as f64;
            x[b * n..(b + 1) * n].iter_mut().for_each(|v| *v *= inv_c);
        }
    }
    Ok((x.into(), stats))
}

/// Frame names and the confusion set of each lexical unit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameLexicon {
    pub frames: Vocab,
    units: BTreeMap<String, Vec<usize>>,
}

impl FrameLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record that `unit` can evoke `frame`.
    pub fn add(&mut self, unit: &str, frame: &str) -> usize {
        let id = self.frames.add(frame);
        let set = self.units.entry(unit.to_string()).or_default();
        if let Err(pos) = set.binary_search(&id) {
            set.insert(pos, id);
        }
        id
    }

    /// Extend with the gold pairs of training instances.
    pub fn add_training(&mut self, instances: &[FrameInstance]) {
        for inst in instances {
            if let Some(f) = &inst.frame {
                self.add(&inst.lexical_unit, f);
            }
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_id(&self, name: &str) -> Option<usize> {
        self.frames.get(name)
    }

    pub fn frame_name(&self, id: usize) -> Option<&str> {
        self.frames.word(id)
    }

    pub fn confusion_set(&self, unit: &str) -> Option<&[usize]> {
        self.units.get(unit).map(Vec::as_slice)
    }

    pub fn units(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.units.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// `F_ℓ` for a seen unit, otherwise every frame.
    pub fn candidates(&self, unit: &str) -> Result<Vec<usize>> {
        if self.frames.is_empty() {
            return Err(Error::InvalidState("frame inventory is empty".into()));
        }
        Ok(match self.units.get(unit) {
            Some(set) => set.clone(),
            None => (0..self.frames.len()).collect(),
        })
    }
}

// ---------------------------------------------------------------------------
// WSABIE

#[derive(Debug, Clone, PartialEq)]
pub struct WsabieConfig {
    /// Joint space size `m`.
    pub embed_dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Variance of the initial weights.
    pub init_variance: f64,
    pub seed: u64,
}

impl Default for WsabieConfig {
    fn default() -> Self {
        WsabieConfig {
            embed_dim: 256,
            margin: 0.01,
            learning_rate: 1e-4,
            epochs: 10,
            init_variance: 0.01,
            seed: 0,
        }
    }
}

/// `s(x, y) = (M x) · Y_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct WsabieModel {
    params: ParamVector,
    m: SegmentId,
    y: SegmentId,
    margin: f64,
    lexicon: FrameLexicon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WarpOutcome {
    /// `|F_ℓ| < 2`: nothing to rank against.
    Skipped,
    /// Every negative satisfied the margin.
    Exhausted { samples: usize },
    Updated {
        negative: usize,
        samples: usize,
        rank: usize,
        weight: f64,
        loss: f64,
    },
}

/// `⌊(|F_ℓ| − 1) / N⌋` after the first violation on draw `N`.
pub fn rank_estimate(num_candidates: usize, samples: usize) -> usize {
    num_candidates.saturating_sub(1).checked_div(samples).unwrap_or(0)
}

/// `L(η) = Σ_{i=1..η} 1/i`.
pub fn warp_weight(eta: usize) -> f64 {
    (1..=eta).map(|i| 1.0 / i as f64).sum()
}

/// Draw negatives from `candidates` without replacement until
/// `γ + s(ȳ) − s(y) > 0`. Returns the violating negative and the draw count.
pub fn sample_violation(
    scores: &dyn Fn(usize) -> f64,
    gold: usize,
    candidates: &[usize],
    margin: f64,
    rng: &mut RngStream,
) -> (Option<usize>, usize) {
    let mut pool: Vec<usize> = candidates.iter().copied().filter(|&c| c != gold).collect();
    let s_gold = scores(gold);
    let mut drawn = 0;
    while !pool.is_empty() {
        let j = rng.uniform_index(pool.len());
        let neg = pool.swap_remove(j);
        drawn += 1;
        if margin + scores(neg) - s_gold > 0.0 {
            return (Some(neg), drawn);
        }
    }
    (None, drawn)
}

impl WsabieModel {
    pub fn new(
        input_dim: usize,
        lexicon: FrameLexicon,
        cfg: &WsabieConfig,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if cfg.margin <= 0.0 {
            return Err(Error::InvalidArgument("margin must be positive".into()));
        }
        if cfg.embed_dim == 0 || input_dim == 0 {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        let mut params = ParamVector::new();
        let m = params.insert(
            "M",
            gaussian_init(cfg.embed_dim, input_dim, 0.0, cfg.init_variance, rng)?,
        )?;
        let y = params.insert(
            "Y",
            gaussian_init(lexicon.num_frames(), cfg.embed_dim, 0.0, cfg.init_variance, rng)?,
        )?;
        Ok(WsabieModel {
            params,
            m,
            y,
            margin: cfg.margin,
            lexicon,
        })
    }

    /// Assemble from explicit matrices.
    pub fn from_parts(
        m: DenseMatrix,
        y: DenseMatrix,
        margin: f64,
        lexicon: FrameLexicon,
    ) -> Result<Self> {
        ensure_dim(m.rows(), y.cols(), "joint space width")?;
        ensure_dim(lexicon.num_frames(), y.rows(), "frame embeddings")?;
        if margin <= 0.0 {
            return Err(Error::InvalidArgument("margin must be positive".into()));
        }
        let mut params = ParamVector::new();
        let mi = params.insert("M", m)?;
        let yi = params.insert("Y", y)?;
        Ok(WsabieModel {
            params,
            m: mi,
            y: yi,
            margin,
            lexicon,
        })
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if !self.params.same_layout(&params) {
            return Err(Error::InvalidArgument("parameter layout differs from model".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn projection(&self) -> &DenseMatrix {
        self.params.seg(self.m)
    }

    pub fn frame_embeddings(&self) -> &DenseMatrix {
        self.params.seg(self.y)
    }

    pub fn frame_embeddings_mut(&mut self) -> &mut DenseMatrix {
        self.params.seg_mut(self.y)
    }

    pub fn projection_mut(&mut self) -> &mut DenseMatrix {
        self.params.seg_mut(self.m)
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn lexicon(&self) -> &FrameLexicon {
        &self.lexicon
    }

    pub fn input_dim(&self) -> usize {
        self.projection().cols()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.input_dim(), x.len(), "block vector")?;
        Ok(self.projection().mul_vec(x))
    }

    pub fn score(&self, x: &[f64], frame: usize) -> Result<f64> {
        let p = self.project(x)?;
        self.score_projected(&p, frame)
    }

    fn score_projected(&self, p: &[f64], frame: usize) -> Result<f64> {
        let y = self.frame_embeddings();
        if frame >= y.rows() {
            return Err(Error::InvalidArgument(format!(
                "frame id {frame} out of range ({} frames)",
                y.rows()
            )));
        }
        Ok(dot(p, y.row(frame)))
    }

    /// Highest-scoring frame in the confusion set of `unit` (all frames when
    /// the unit is unseen); ties go to the lowest id.
    pub fn predict_frame(&self, x: &[f64], unit: &str) -> Result<usize> {
        let cands = self.lexicon.candidates(unit)?;
        if cands.len() == 1 {
            return Ok(cands[0]);
        }
        let p = self.project(x)?;
        let scores = cands
            .iter()
            .map(|&f| self.score_projected(&p, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(cands[argmax(&scores)])
    }

    /// `w·[γ + s(x,ȳ) − s(x,y)]₊` and its gradient w.r.t. the parameters.
    pub fn hinge_and_grad(
        &self,
        x: &[f64],
        gold: usize,
        negative: usize,
        weight: f64,
    ) -> Result<(f64, ParamVector)> {
        let p = self.project(x)?;
        let v = self.margin + self.score_projected(&p, negative)? - self.score_projected(&p, gold)?;
        let mut grads = self.params.zeros_like();
        if v <= 0.0 {
            return Ok((0.0, grads));
        }
        let y = self.frame_embeddings();
        let diff: Vec<f64> = y.row(negative).iter().zip(y.row(gold)).map(|(a, b)| a - b).collect();
        grads.seg_mut(self.m).add_outer(weight, &diff, x);
        let gy = grads.seg_mut(self.y);
        axpy(weight, &p, gy.row_mut(negative));
        axpy(-weight, &p, gy.row_mut(gold));
        Ok((weight * v, grads))
    }

    /// One WARP step for a training instance.
    pub fn warp_update(
        &mut self,
        x: &[f64],
        gold: usize,
        unit: &str,
        lr: f64,
        rng: &mut RngStream,
    ) -> Result<WarpOutcome> {
        if gold >= self.lexicon.num_frames() {
            return Err(Error::InvalidArgument(format!("gold frame {gold} out of range")));
        }
        let cands = self.lexicon.candidates(unit)?;
        if cands.len() < 2 {
            return Ok(WarpOutcome::Skipped);
        }
        let p = self.project(x)?;
        let y = self.frame_embeddings();
        let scores = |f: usize| dot(&p, y.row(f));
        let (neg, samples) = sample_violation(&scores, gold, &cands, self.margin, rng);
        let Some(neg) = neg else {
            return Ok(WarpOutcome::Exhausted { samples });
        };
        let rank = rank_estimate(cands.len(), samples);
        let weight = warp_weight(rank);
        let loss = weight * (self.margin + scores(neg) - scores(gold));
        // Gradients first, then the update.
        let diff: Vec<f64> = y.row(neg).iter().zip(y.row(gold)).map(|(a, b)| a - b).collect();
        let step = lr * weight;
        self.params.seg_mut(self.m).add_outer(-step, &diff, x);
        let ym = self.params.seg_mut(self.y);
        axpy(-step, &p, ym.row_mut(neg));
        axpy(step, &p, ym.row_mut(gold));
        Ok(WarpOutcome::Updated {
            negative: neg,
            samples,
            rank,
            weight,
            loss,
        })
    }
}

/// A training example after feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub x: DenseVector,
    pub gold: usize,
    pub unit: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WarpEpochStats {
    pub updates: usize,
    pub skipped: usize,
    pub exhausted: usize,
    pub loss: f64,
}

/// Shuffled WARP passes over `data`.
pub fn train_wsabie(
    model: &mut WsabieModel,
    data: &[EncodedInstance],
    cfg: &WsabieConfig,
    rng: &mut RngStream,
) -> Result<Vec<WarpEpochStats>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut st = WarpEpochStats::default();
        for &i in &order {
            let d = &data[i];
            match model.warp_update(&d.x, d.gold, &d.unit, cfg.learning_rate, rng)? {
                WarpOutcome::Skipped => st.skipped += 1,
                WarpOutcome::Exhausted { .. } => st.exhausted += 1,
                WarpOutcome::Updated { loss, .. } => {
                    st.updates += 1;
                    st.loss += loss;
                }
            }
        }
        log::info!(
            "wsabie_epoch epoch={} updates={} exhausted={} skipped={} loss={:.6}",
            epoch + 1,
            st.updates,
            st.exhausted,
            st.skipped,
            st.loss
        );
        history.push(st);
    }
    Ok(history)
}

/// Encode instances with gold frames known to `lexicon`.
pub fn encode_instances(
    instances: &[FrameInstance],
    inv: &BlockInventory,
    embeddings: &EmbeddingTable,
    lexicon: &FrameLexicon,
) -> Result<(Vec<EncodedInstance>, BlockStats)> {
    let mut stats = BlockStats::default();
    let mut out = Vec::with_capacity(instances.len());
    for inst in instances {
        let frame = inst
            .frame
            .as_deref()
            .ok_or_else(|| Error::InvalidInput(format!("instance of `{}` lacks a gold frame", inst.lexical_unit)))?;
        let gold = lexicon
            .frame_id(frame)
            .ok_or_else(|| Error::InvalidInput(format!("frame `{frame}` not in the frame lexicon")))?;
        let (x, s) = build_block_vector(inst, inv, embeddings)?;
        stats.merge(s);
        out.push(EncodedInstance {
            x,
            gold,
            unit: inst.lexical_unit.clone(),
        });
    }
    if stats.unknown_labels + stats.unknown_words > 0 {
        log::warn!(
            "block_vectors unknown_labels={} unknown_words={}",
            stats.unknown_labels,
            stats.unknown_words
        );
    }
    Ok((out, stats))
}

// ---------------------------------------------------------------------------
// Log-linear baseline

/// Indicator features of an instance; each is conjoined with a candidate frame.
pub fn loglinear_features(inst: &FrameInstance) -> Vec<String> {
    let mut f = vec![format!("lu={}", inst.lexical_unit)];
    for (slot, words) in &inst.slots {
        for w in words {
            f.push(format!("{slot}={w}"));
            f.push(format!("w={w}"));
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoglinearModel {
    /// `(frame, feature)` → weight index.
    index: HashMap<(usize, String), usize>,
    pub weights: Vec<f64>,
    lexicon: FrameLexicon,
}

/// A training instance reduced to its gold frame, candidates and features.
#[derive(Debug, Clone)]
struct LlExample {
    gold: usize,
    candidates: Vec<usize>,
    /// Per candidate: active weight indices.
    active: Vec<Vec<usize>>,
}

impl LoglinearModel {
    /// Index every `(candidate frame, feature)` pair in the training data.
    pub fn new(instances: &[FrameInstance], lexicon: FrameLexicon) -> Result<Self> {
        let mut index = HashMap::new();
        for inst in instances {
            let feats = loglinear_features(inst);
            for f in lexicon.candidates(&inst.lexical_unit)? {
                for feat in &feats {
                    let next = index.len();
                    index.entry((f, feat.clone())).or_insert(next);
                }
            }
        }
        let weights = vec![0.0; index.len()];
        Ok(LoglinearModel {
            index,
            weights,
            lexicon,
        })
    }

    /// `frame_id<TAB>feature` for every weight, in weight order.
    pub fn feature_keys(&self) -> Vec<String> {
        let mut keys = vec![String::new(); self.index.len()];
        for ((f, feat), &i) in &self.index {
            keys[i] = format!("{f}\t{feat}");
        }
        keys
    }

    /// Rebuild from [`feature_keys`](Self::feature_keys) and weights.
    pub fn from_keys(keys: &[String], weights: Vec<f64>, lexicon: FrameLexicon) -> Result<Self> {
        ensure_dim(keys.len(), weights.len(), "feature weights")?;
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            let (f, feat) = k
                .split_once('\t')
                .ok_or_else(|| Error::InvalidInput(format!("bad feature key `{k}`")))?;
            let f: usize = f
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad frame id in `{k}`")))?;
            if f >= lexicon.num_frames() {
                return Err(Error::InvalidInput(format!("frame id {f} out of range")));
            }
            index.insert((f, feat.to_string()), i);
        }
        Ok(LoglinearModel {
            index,
            weights,
            lexicon,
        })
    }

    pub fn num_features(&self) -> usize {
        self.weights.len()
    }

    pub fn lexicon(&self) -> &FrameLexicon {
        &self.lexicon
    }

    fn active(&self, frame: usize, feats: &[String]) -> Vec<usize> {
        feats
            .iter()
            .filter_map(|f| self.index.get(&(frame, f.clone())).copied())
            .collect()
    }

    fn examples(&self, instances: &[FrameInstance]) -> Result<Vec<LlExample>> {
        instances
            .iter()
            .map(|inst| {
                let frame = inst.frame.as_deref().ok_or_else(|| {
                    Error::InvalidInput(format!("instance of `{}` lacks a gold frame", inst.lexical_unit))
                })?;
                let gold = self.lexicon.frame_id(frame).ok_or_else(|| {
                    Error::InvalidInput(format!("frame `{frame}` not in the frame lexicon"))
                })?;
                let feats = loglinear_features(inst);
                let candidates = self.lexicon.candidates(&inst.lexical_unit)?;
                if !candidates.contains(&gold) {
                    return Err(Error::InvalidInput(format!(
                        "gold frame `{frame}` not among candidates of `{}`",
                        inst.lexical_unit
                    )));
                }
                let active = candidates.iter().map(|&f| self.active(f, &feats)).collect();
                Ok(LlExample {
                    gold,
                    candidates,
                    active,
                })
            })
            .collect()
    }

    /// `p(y | x, ℓ)` over the candidates of the instance's unit.
    pub fn probabilities(&self, inst: &FrameInstance) -> Result<Vec<(usize, f64)>> {
        let feats = loglinear_features(inst);
        let cands = self.lexicon.candidates(&inst.lexical_unit)?;
        let scores: Vec<f64> = cands
            .iter()
            .map(|&f| self.active(f, &feats).iter().map(|&i| self.weights[i]).sum())
            .collect();
        let probs = softmax(&scores);
        Ok(cands.into_iter().zip(probs).collect())
    }

    pub fn predict(&self, inst: &FrameInstance) -> Result<usize> {
        let probs = self.probabilities(inst)?;
        let scores: Vec<f64> = probs.iter().map(|p| p.1).collect();
        Ok(probs[argmax(&scores)].0)
    }

    /// Negative regularized log-likelihood `−Σ log p + C‖ψ‖²` and its gradient.
    pub fn objective(
        &self,
        instances: &[FrameInstance],
        c: f64,
        psi: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let ex = self.examples(instances)?;
        Ok(ll_objective(&ex, c, psi))
    }

    /// Fit ψ with L-BFGS.
    pub fn train(
        &mut self,
        instances: &[FrameInstance],
        c: f64,
        cfg: &LbfgsConfig,
    ) -> Result<LbfgsResult> {
        if c <= 0.0 {
            return Err(Error::InvalidArgument("regularization constant must be positive".into()));
        }
        let ex = self.examples(instances)?;
        let res = lbfgs_minimize(|psi| Ok(ll_objective(&ex, c, psi)), &self.weights, cfg)?;
        self.weights = res.theta.clone();
        log::info!(
            "loglinear_train features={} iterations={} objective={:.6}",
            self.weights.len(),
            res.iterations,
            res.value
        );
        Ok(res)
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

fn ll_objective(ex: &[LlExample], c: f64, psi: &[f64]) -> (f64, Vec<f64>) {
    let mut value = c * psi.iter().map(|v| v * v).sum::<f64>();
    let mut grad: Vec<f64> = psi.iter().map(|v| 2.0 * c * v).collect();
    for e in ex {
        let scores: Vec<f64> = e
            .active
            .iter()
            .map(|a| a.iter().map(|&i| psi[i]).sum())
            .collect();
        let probs = softmax(&scores);
        let g = e.candidates.iter().position(|&f| f == e.gold).expect("gold checked");
        value -= probs[g].ln();
        for (k, act) in e.active.iter().enumerate() {
            let coef = probs[k] - if k == g { 1.0 } else { 0.0 };
            for &i in act {
                grad[i] += coef;
            }
        }
    }
    (value, grad)
}
