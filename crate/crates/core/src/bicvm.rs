//! Multilingual compositional sentence and document models trained with a
//! noise-contrastive hinge loss on parallel data.

use std::fmt;
use std::str::FromStr;

use crate::compose::Cvm;
use crate::error::{ensure_dim, Error, Result};
use crate::evalkit::{cldc_evaluate_vectors, mean_vector, CldcReport, LabeledDocVectors, PerceptronConfig};
use crate::lexicon::{UnknownPolicy, Vocab};
use crate::numerics::{axpy, gaussian_init, norm_sq, sq_dist, DenseMatrix, RngStream};
use crate::optimize::{AdaGradState, ParamVector, SegmentId};

pub type Sentence = Vec<usize>;

/// Index of a language inside a [`BicvmModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LangId(pub usize);

/// A document pair; sentences may or may not be aligned one-to-one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignedDocument {
    pub labels: Vec<String>,
    pub src: Vec<Sentence>,
    pub tgt: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    pub src_lang: String,
    pub tgt_lang: String,
    pub pairs: Vec<(Sentence, Sentence)>,
    pub documents: Option<Vec<AlignedDocument>>,
}

impl ParallelCorpus {
    pub fn new(src_lang: &str, tgt_lang: &str, pairs: Vec<(Sentence, Sentence)>) -> Result<Self> {
        if let Some(i) = pairs.iter().position(|(a, b)| a.is_empty() || b.is_empty()) {
            return Err(Error::InvalidInput(format!("pair {i} has an empty sentence")));
        }
        Ok(ParallelCorpus {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            pairs,
            documents: None,
        })
    }

    /// Document-level corpus. Documents whose sentence counts agree also
    /// contribute their sentences as aligned pairs.
    pub fn from_documents(src_lang: &str, tgt_lang: &str, documents: Vec<AlignedDocument>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, d) in documents.iter().enumerate() {
            if d.src.is_empty() || d.tgt.is_empty() {
                return Err(Error::InvalidInput(format!("document {i} has no sentences")));
            }
            if d.src.iter().chain(&d.tgt).any(Vec::is_empty) {
                return Err(Error::InvalidInput(format!("document {i} has an empty sentence")));
            }
            if d.src.len() == d.tgt.len() {
                pairs.extend(d.src.iter().cloned().zip(d.tgt.iter().cloned()));
            }
        }
        Ok(ParallelCorpus {
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            pairs,
            documents: Some(documents),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// What a hinge term compares: a sentence or a document of sentences.
#[derive(Debug, Clone, Copy)]
pub enum Text<'a> {
    Sentence(&'a [usize]),
    Document(&'a [Sentence]),
}

/// `[m + E(a,b) − E(a,nᵢ)]₊` summed over the noise items.
#[derive(Debug, Clone)]
pub struct HingeTerm<'a> {
    pub src: LangId,
    pub a: Text<'a>,
    pub tgt: LangId,
    pub b: Text<'a>,
    pub noise: Vec<Text<'a>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegMode {
    /// One `(λ/2)‖θ‖²` per minibatch, scaled by the batch's share of the corpus.
    #[default]
    BatchFraction,
    /// One `(λ/2)‖θ‖²` per training pair.
    PerPair,
}

impl FromStr for RegMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" | "batch-fraction" => Ok(RegMode::BatchFraction),
            "pair" | "per-pair" => Ok(RegMode::PerPair),
            _ => Err(Error::InvalidArgument(format!("unknown regularizer mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicvmConfig {
    pub dim: usize,
    pub margin: f64,
    pub noise: usize,
    pub lambda: f64,
    pub cvm: Cvm,
    pub doc_cvm: Cvm,
    /// Variance of the initial embeddings.
    pub init_variance: f64,
}

impl Default for BicvmConfig {
    fn default() -> Self {
        BicvmConfig {
            dim: 128,
            margin: 128.0,
            noise: 10,
            lambda: 1.0,
            cvm: Cvm::Add,
            doc_cvm: Cvm::Add,
            init_variance: 0.1,
        }
    }
}

impl BicvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfiguration("dimension must be positive".into()));
        }
        if self.margin <= 0.0 || !self.margin.is_finite() {
            return Err(Error::InvalidConfiguration("margin must be positive".into()));
        }
        if self.noise == 0 {
            return Err(Error::InvalidConfiguration("need at least one noise sample".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidConfiguration("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Language {
    pub name: String,
    pub vocab: Vocab,
    pub table: SegmentId,
    pub cvm: Cvm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicvmModel {
    pub config: BicvmConfig,
    languages: Vec<Language>,
    params: ParamVector,
}

impl BicvmModel {
    /// One randomly initialised table per `(language, vocabulary)`.
    pub fn new(config: BicvmConfig, languages: Vec<(String, Vocab)>, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let mut params = ParamVector::new();
        let mut langs = Vec::new();
        for (name, vocab) in languages {
            let table = gaussian_init(vocab.len(), config.dim, 0.0, config.init_variance, rng)?;
            let seg = params.insert(format!("E.{name}"), table)?;
            langs.push(Language {
                name,
                vocab,
                table: seg,
                cvm: config.cvm,
            });
        }
        Ok(BicvmModel {
            config,
            languages: langs,
            params,
        })
    }

    /// Assemble from explicit tables, one per language.
    pub fn from_tables(config: BicvmConfig, tables: Vec<(String, Vocab, DenseMatrix)>) -> Result<Self> {
        config.validate()?;
        let mut params = ParamVector::new();
        let mut langs = Vec::new();
        for (name, vocab, m) in tables {
            ensure_dim(vocab.len(), m.rows(), "embedding rows vs vocabulary")?;
            if m.cols() != config.dim {
                return Err(Error::InvalidConfiguration(format!(
                    "table for `{name}` has width {}, model dimension is {}",
                    m.cols(),
                    config.dim
                )));
            }
            let seg = params.insert(format!("E.{name}"), m)?;
            langs.push(Language {
                name,
                vocab,
                table: seg,
                cvm: config.cvm,
            });
        }
        Ok(BicvmModel {
            config,
            languages: langs,
            params,
        })
    }

    pub fn lang(&self, name: &str) -> Result<LangId> {
        self.languages
            .iter()
            .position(|l| l.name == name)
            .map(LangId)
            .ok_or_else(|| Error::InvalidConfiguration(format!("model has no language `{name}`")))
    }

    pub fn language(&self, id: LangId) -> &Language {
        &self.languages[id.0]
    }

    pub fn languages(&self) -> &[Language] {
        &self.languages
    }

    /// Use a different sentence composer for one language.
    pub fn set_cvm(&mut self, id: LangId, cvm: Cvm) {
        self.languages[id.0].cvm = cvm;
    }

    pub fn table(&self, id: LangId) -> &DenseMatrix {
        self.params.seg(self.languages[id.0].table)
    }

    pub fn table_mut(&mut self, id: LangId) -> &mut DenseMatrix {
        let seg = self.languages[id.0].table;
        self.params.seg_mut(seg)
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn compose(&self, lang: LangId, text: Text<'_>) -> Result<Vec<f64>> {
        let l = &self.languages[lang.0];
        let table = self.params.seg(l.table);
        match text {
            Text::Sentence(s) => l.cvm.compose_words(s, table),
            Text::Document(doc) => {
                let sents = doc
                    .iter()
                    .map(|s| l.cvm.compose_words(s, table))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&[f64]> = sents.iter().map(Vec::as_slice).collect();
                self.config.doc_cvm.compose(&refs)
            }
        }
    }

    pub fn encode_sentence(&self, lang: LangId, sentence: &[usize]) -> Result<Vec<f64>> {
        self.compose(lang, Text::Sentence(sentence))
    }

    /// Map tokens to ids under `policy` and compose.
    pub fn encode_tokens(&self, lang: LangId, tokens: &[&str], policy: UnknownPolicy) -> Result<Vec<f64>> {
        let vocab = &self.languages[lang.0].vocab;
        let ids = tokens
            .iter()
            .map(|t| vocab.lookup(t, policy))
            .collect::<Result<Vec<_>>>()?;
        self.encode_sentence(lang, &ids)
    }

    /// Mean of the sentence vectors of a document.
    pub fn document_vector(&self, lang: LangId, sentences: &[Sentence]) -> Result<Vec<f64>> {
        let vecs = sentences
            .iter()
            .map(|s| self.encode_sentence(lang, s))
            .collect::<Result<Vec<_>>>()?;
        mean_vector(&vecs)
    }

    /// `‖f(a) − g(b)‖²`.
    pub fn bi_energy(&self, src: LangId, a: Text<'_>, tgt: LangId, b: Text<'_>) -> Result<f64> {
        Ok(sq_dist(&self.compose(src, a)?, &self.compose(tgt, b)?))
    }

    /// `[m + E(a,b) − E(a,n)]₊`.
    pub fn hinge_energy(&self, src: LangId, a: Text<'_>, tgt: LangId, b: Text<'_>, n: Text<'_>) -> Result<f64> {
        let fa = self.compose(src, a)?;
        let e_ab = sq_dist(&fa, &self.compose(tgt, b)?);
        let e_an = sq_dist(&fa, &self.compose(tgt, n)?);
        Ok(hinge(self.config.margin, e_ab, e_an))
    }

    fn backward(&self, lang: LangId, text: Text<'_>, delta: &[f64], grads: &mut ParamVector) -> Result<()> {
        let l = &self.languages[lang.0];
        let table = self.params.seg(l.table);
        let sentence_backward = |s: &[usize], delta: &[f64], g: &mut DenseMatrix| -> Result<()> {
            let rows: Vec<&[f64]> = s.iter().map(|&w| table.row(w)).collect();
            for (&w, d) in s.iter().zip(l.cvm.backward(&rows, delta)) {
                axpy(1.0, &d, g.row_mut(w));
            }
            Ok(())
        };
        let g = grads.seg_mut(l.table);
        match text {
            Text::Sentence(s) => sentence_backward(s, delta, g),
            Text::Document(doc) => {
                let sents = doc
                    .iter()
                    .map(|s| l.cvm.compose_words(s, table))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&[f64]> = sents.iter().map(Vec::as_slice).collect();
                for (s, d) in doc.iter().zip(self.config.doc_cvm.backward(&refs, delta)) {
                    sentence_backward(s, &d, g)?;
                }
                Ok(())
            }
        }
    }
}

pub fn hinge(margin: f64, e_ab: f64, e_an: f64) -> f64 {
    (margin + e_ab - e_an).max(0.0)
}

/// Summed hinge terms plus `reg_scale · (λ/2)‖θ_ℓ‖²` for every language
/// touched by `terms`, with gradients.
pub fn bicvm_objective(terms: &[HingeTerm<'_>], model: &BicvmModel, reg_scale: f64) -> Result<(f64, ParamVector)> {
    let mut grads = model.params.zeros_like();
    let mut value = 0.0;
    let mut involved = vec![false; model.languages.len()];
    for t in terms {
        involved[t.src.0] = true;
        involved[t.tgt.0] = true;
        let fa = model.compose(t.src, t.a)?;
        let gb = model.compose(t.tgt, t.b)?;
        let e_ab = sq_dist(&fa, &gb);
        let mut d_fa = vec![0.0; fa.len()];
        let mut d_gb = vec![0.0; fa.len()];
        for &n in &t.noise {
            let gn = model.compose(t.tgt, n)?;
            let e_an = sq_dist(&fa, &gn);
            let h = model.config.margin + e_ab - e_an;
            if h <= 0.0 {
                continue;
            }
            value += h;
            for k in 0..fa.len() {
                d_fa[k] += 2.0 * (gn[k] - gb[k]);
                d_gb[k] -= 2.0 * (fa[k] - gb[k]);
            }
            let d_gn: Vec<f64> = fa.iter().zip(&gn).map(|(f, g)| 2.0 * (f - g)).collect();
            model.backward(t.tgt, n, &d_gn, &mut grads)?;
        }
        model.backward(t.src, t.a, &d_fa, &mut grads)?;
        model.backward(t.tgt, t.b, &d_gb, &mut grads)?;
    }
    let lambda = model.config.lambda * reg_scale;
    if lambda != 0.0 {
        for (i, l) in model.languages.iter().enumerate() {
            if involved[i] {
                let th = model.params.seg(l.table).as_slice();
                value += 0.5 * lambda * norm_sq(th);
                axpy(lambda, th, grads.seg_mut(l.table).as_mut_slice());
            }
        }
    }
    Ok((value, grads))
}

/// `k` indices drawn uniformly from `0..n` excluding `aligned`.
pub fn sample_noise(n: usize, aligned: usize, k: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InvalidInput("noise sampling needs at least two items".into()));
    }
    Ok((0..k)
        .map(|_| {
            let j = rng.uniform_index(n - 1);
            if j >= aligned {
                j + 1
            } else {
                j
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainMode {
    /// One corpus after another within each epoch.
    #[default]
    Single,
    /// Minibatches from all corpora interleaved round-robin.
    Joint,
}

impl FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(TrainMode::Single),
            "joint" => Ok(TrainMode::Joint),
            _ => Err(Error::InvalidArgument(format!("unknown training mode `{s}`"))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Single => "single",
            TrainMode::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch: usize,
    pub step: f64,
    pub reg_mode: RegMode,
    pub seed: u64,
    /// Add the sentence objective when training on documents.
    pub sentence_signal: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Single,
            epochs: 10,
            batch: 50,
            step: 0.05,
            reg_mode: RegMode::BatchFraction,
            seed: 0,
            sentence_signal: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochStats {
    pub objective: f64,
    pub batches: usize,
}

/// One corpus's plan for an epoch: shuffled unit order and noise indices.
struct EpochPlan {
    corpus: usize,
    order: Vec<usize>,
    noise: Vec<Vec<usize>>,
    sentence_noise: Vec<Vec<usize>>,
}

fn plan_epoch(
    corpora: &[ParallelCorpus],
    docs: bool,
    cfg: &TrainConfig,
    k: usize,
    rng: &mut RngStream,
) -> Result<Vec<EpochPlan>> {
    corpora
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let units = if docs {
                c.documents.as_ref().map_or(0, Vec::len)
            } else {
                c.pairs.len()
            };
            let mut order: Vec<usize> = (0..units).collect();
            rng.shuffle(&mut order);
            let noise = (0..units)
                .map(|j| sample_noise(units, j, k, rng))
                .collect::<Result<Vec<_>>>()?;
            let sentence_noise = if docs && cfg.sentence_signal && !c.pairs.is_empty() {
                (0..c.pairs.len())
                    .map(|j| sample_noise(c.pairs.len(), j, k, rng))
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            Ok(EpochPlan {
                corpus: ci,
                order,
                noise,
                sentence_noise,
            })
        })
        .collect()
}

/// Minibatch AdaGrad on sentence pairs.
pub fn train_bicvm(
    corpora: &[ParallelCorpus],
    model: &mut BicvmModel,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    train_impl(corpora, model, cfg, false)
}

/// Minibatch AdaGrad on document pairs, optionally adding the sentence
/// objective for sentence-aligned documents.
pub fn train_doc(corpora: &[ParallelCorpus], model: &mut BicvmModel, cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
    if let Some(c) = corpora.iter().find(|c| c.documents.is_none()) {
        return Err(Error::InvalidConfiguration(format!(
            "corpus {}-{} has no document boundaries",
            c.src_lang, c.tgt_lang
        )));
    }
    train_impl(corpora, model, cfg, true)
}

fn train_impl(corpora: &[ParallelCorpus], model: &mut BicvmModel, cfg: &TrainConfig, docs: bool) -> Result<Vec<EpochStats>> {
    if cfg.batch == 0 {
        return Err(Error::InvalidConfiguration("batch size must be positive".into()));
    }
    let langs = corpora
        .iter()
        .map(|c| Ok((model.lang(&c.src_lang)?, model.lang(&c.tgt_lang)?)))
        .collect::<Result<Vec<_>>>()?;
    for (c, &(s, t)) in corpora.iter().zip(&langs) {
        let (vs, vt) = (model.language(s).vocab.len(), model.language(t).vocab.len());
        let bad = c.pairs.iter().any(|(a, b)| a.iter().any(|&w| w >= vs) || b.iter().any(|&w| w >= vt))
            || c.documents.iter().flatten().any(|d| {
                d.src.iter().flatten().any(|&w| w >= vs) || d.tgt.iter().flatten().any(|&w| w >= vt)
            });
        if bad {
            return Err(Error::InvalidInput(format!(
                "corpus {}-{} has word ids outside the vocabulary",
                c.src_lang, c.tgt_lang
            )));
        }
    }
    let mut ada = AdaGradState::new(&model.params, cfg.step)?;
    let mut rng = RngStream::new(cfg.seed);
    let k = model.config.noise;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let plans = plan_epoch(corpora, docs, cfg, k, &mut rng)?;
        let schedule = batch_schedule(&plans, cfg);
        let mut stats = EpochStats::default();
        for (pi, range) in schedule {
            let plan = &plans[pi];
            let corpus = &corpora[plan.corpus];
            let (src, tgt) = langs[plan.corpus];
            let (start, end) = (range.start, range.end);
            let batch_units = &plan.order[start..end];
            let mut terms = Vec::with_capacity(batch_units.len());
            for &u in batch_units {
                if docs {
                    let documents = corpus.documents.as_ref().expect("checked");
                    let d = &documents[u];
                    terms.push(HingeTerm {
                        src,
                        a: Text::Document(&d.src),
                        tgt,
                        b: Text::Document(&d.tgt),
                        noise: plan.noise[u].iter().map(|&n| Text::Document(&documents[n].tgt)).collect(),
                    });
                } else {
                    terms.push(sentence_term(corpus, src, tgt, u, &plan.noise[u]));
                }
            }
            let mut reg_units = terms.len();
            let mut total_units = plan.order.len();
            if docs && !plan.sentence_noise.is_empty() {
                // Sentence pairs ride along with the batch that holds their share.
                let np = corpus.pairs.len();
                let lo = start * np / plan.order.len();
                let hi = end * np / plan.order.len();
                for j in lo..hi {
                    terms.push(sentence_term(corpus, src, tgt, j, &plan.sentence_noise[j]));
                }
                reg_units += hi - lo;
                total_units += np;
            }
            let reg_scale = match cfg.reg_mode {
                RegMode::PerPair => reg_units as f64,
                RegMode::BatchFraction => reg_units as f64 / total_units.max(1) as f64,
            };
            let (value, grads) = bicvm_objective(&terms, model, reg_scale)?;
            ada.step(&mut model.params, &grads)?;
            stats.objective += value;
            stats.batches += 1;
        }
        log::info!(
            "bicvm_epoch epoch={} batches={} objective={:.6}",
            epoch + 1,
            stats.batches,
            stats.objective
        );
        history.push(stats);
    }
    Ok(history)
}

fn sentence_term<'a>(corpus: &'a ParallelCorpus, src: LangId, tgt: LangId, j: usize, noise: &[usize]) -> HingeTerm<'a> {
    let (a, b) = &corpus.pairs[j];
    HingeTerm {
        src,
        a: Text::Sentence(a),
        tgt,
        b: Text::Sentence(b),
        noise: noise.iter().map(|&n| Text::Sentence(&corpus.pairs[n].1)).collect(),
    }
}

/// `(plan index, range into its order)` for every minibatch of an epoch.
fn batch_schedule(plans: &[EpochPlan], cfg: &TrainConfig) -> Vec<(usize, std::ops::Range<usize>)> {
    let per_plan: Vec<Vec<std::ops::Range<usize>>> = plans
        .iter()
        .map(|p| {
            (0..p.order.len())
                .step_by(cfg.batch)
                .map(|s| s..(s + cfg.batch).min(p.order.len()))
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    match cfg.mode {
        TrainMode::Single => {
            for (pi, batches) in per_plan.into_iter().enumerate() {
                out.extend(batches.into_iter().map(|r| (pi, r)));
            }
        }
        TrainMode::Joint => {
            let longest = per_plan.iter().map(Vec::len).max().unwrap_or(0);
            for b in 0..longest {
                for (pi, batches) in per_plan.iter().enumerate() {
                    if let Some(r) = batches.get(b) {
                        out.push((pi, r.clone()));
                    }
                }
            }
        }
    }
    out
}

/// Mean aligned-pair and mean shifted-pair energies over a corpus.
pub fn pair_energies(corpus: &ParallelCorpus, model: &BicvmModel) -> Result<(f64, f64)> {
    let src = model.lang(&corpus.src_lang)?;
    let tgt = model.lang(&corpus.tgt_lang)?;
    let n = corpus.pairs.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two pairs".into()));
    }
    let mut aligned = 0.0;
    let mut random = 0.0;
    for (i, (a, b)) in corpus.pairs.iter().enumerate() {
        let other = &corpus.pairs[(i + n / 2) % n].1;
        aligned += model.bi_energy(src, Text::Sentence(a), tgt, Text::Sentence(b))?;
        random += model.bi_energy(src, Text::Sentence(a), tgt, Text::Sentence(other))?;
    }
    Ok((aligned / n as f64, random / n as f64))
}

/// A labelled monolingual document set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDocs {
    pub ids: Vec<String>,
    pub labels: Vec<Vec<String>>,
    pub docs: Vec<Vec<Sentence>>,
}

/// Train a perceptron on documents of `train_lang` and test on `test_lang`,
/// each document being the mean of its sentence vectors. Only the first
/// label of each document is used.
pub fn cldc_evaluate(
    model: &BicvmModel,
    train_lang: LangId,
    train: &LabeledDocs,
    test_lang: LangId,
    test: &LabeledDocs,
    cfg: &PerceptronConfig,
) -> Result<CldcReport> {
    let names = |d: &LabeledDocs| -> Result<Vec<String>> {
        let mut v: Vec<String> = d
            .labels
            .iter()
            .map(|l| {
                l.first()
                    .cloned()
                    .ok_or_else(|| Error::InvalidInput("document without a label".into()))
            })
            .collect::<Result<_>>()?;
        v.sort();
        v.dedup();
        Ok(v)
    };
    let train_names = names(train)?;
    let test_names = names(test)?;
    if test_names.iter().any(|n| !train_names.contains(n)) {
        return Err(Error::InvalidConfiguration(
            "test labels not covered by the training labels".into(),
        ));
    }
    let build = |lang: LangId, d: &LabeledDocs| -> Result<LabeledDocVectors> {
        let vectors = d
            .docs
            .iter()
            .map(|doc| model.document_vector(lang, doc))
            .collect::<Result<Vec<_>>>()?;
        let labels = d
            .labels
            .iter()
            .map(|l| train_names.binary_search(&l[0]).expect("covered"))
            .collect();
        Ok(LabeledDocVectors {
            vectors,
            labels,
            label_names: train_names.clone(),
        })
    };
    cldc_evaluate_vectors(&build(train_lang, train)?, &build(test_lang, test)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::grad_check;

    fn toy_model(cvm: Cvm, dim: usize, seed: u64) -> BicvmModel {
        let cfg = BicvmConfig {
            dim,
            margin: 1.0,
            noise: 1,
            lambda: 0.1,
            cvm,
            ..Default::default()
        };
        BicvmModel::new(
            cfg,
            vec![
                ("en".into(), Vocab::from_words(["a", "b", "c", "d"])),
                ("de".into(), Vocab::from_words(["w", "x", "y", "z"])),
            ],
            &mut RngStream::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn energy_examples() {
        let cfg = BicvmConfig { dim: 2, margin: 1.0, noise: 1, ..Default::default() };
        let v = Vocab::from_words(["p", "q"]);
        let t1 = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let t2 = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.5]]).unwrap();
        let m = BicvmModel::from_tables(cfg, vec![("x".into(), v.clone(), t1.clone()), ("y".into(), v, t2)]).unwrap();
        let (x, y) = (LangId(0), LangId(1));
        assert_eq!(m.bi_energy(x, Text::Sentence(&[0]), y, Text::Sentence(&[0])).unwrap(), 2.0);
        assert_eq!(m.bi_energy(x, Text::Sentence(&[0]), x, Text::Sentence(&[0])).unwrap(), 0.0);
        assert!(m.bi_energy(x, Text::Sentence(&[]), y, Text::Sentence(&[0])).is_err());
        assert_eq!(hinge(1.0, 0.25, 0.5), 0.75);
        assert_eq!(hinge(1.0, 0.25, 1.25), 0.0);
        let n = m.hinge_energy(x, Text::Sentence(&[0]), y, Text::Sentence(&[1]), Text::Sentence(&[1])).unwrap();
        assert_eq!(n, 1.0);
    }

    #[test]
    fn add_energy_ignores_order() {
        let m = toy_model(Cvm::Add, 3, 1);
        let (x, y) = (LangId(0), LangId(1));
        let e1 = m.bi_energy(x, Text::Sentence(&[0, 1, 2]), y, Text::Sentence(&[3, 1])).unwrap();
        let e2 = m.bi_energy(x, Text::Sentence(&[2, 0, 1]), y, Text::Sentence(&[1, 3])).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn inactive_hinge_zero_gradient() {
        let mut m = toy_model(Cvm::Add, 2, 1);
        m.config.lambda = 0.0;
        m.config.margin = 1e-3;
        let (x, y) = (LangId(0), LangId(1));
        m.table_mut(x).row_mut(0).copy_from_slice(&[1.0, 1.0]);
        m.table_mut(y).row_mut(0).copy_from_slice(&[1.0, 1.0]);
        m.table_mut(y).row_mut(1).copy_from_slice(&[-5.0, -5.0]);
        let terms = vec![HingeTerm {
            src: x,
            a: Text::Sentence(&[0]),
            tgt: y,
            b: Text::Sentence(&[0]),
            noise: vec![Text::Sentence(&[1])],
        }];
        let (v, g) = bicvm_objective(&terms, &m, 1.0).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.flatten().iter().all(|&z| z == 0.0));
    }

    fn check(m: &BicvmModel, terms: &[HingeTerm<'_>]) -> f64 {
        let mut work = m.clone();
        grad_check(
            |th| {
                work.params_mut().assign_flat(th)?;
                let (v, g) = bicvm_objective(terms, &work, 2.0)?;
                Ok((v, g.flatten()))
            },
            &m.params().flatten(),
            1e-5,
        )
        .unwrap()
    }

    #[test]
    fn sentence_gradients() {
        for cvm in [Cvm::Add, Cvm::Bi] {
            let mut m = toy_model(cvm, 4, 3);
            m.config.margin = 4.0;
            let (x, y) = (LangId(0), LangId(1));
            let terms = vec![
                HingeTerm { src: x, a: Text::Sentence(&[0, 1]), tgt: y, b: Text::Sentence(&[2]), noise: vec![Text::Sentence(&[3, 0])] },
                HingeTerm { src: x, a: Text::Sentence(&[2, 3, 3]), tgt: y, b: Text::Sentence(&[1, 0]), noise: vec![Text::Sentence(&[2])] },
            ];
            assert!(check(&m, &terms) < 1e-4);
        }
    }

    #[test]
    fn document_gradients() {
        let mut m = toy_model(Cvm::Bi, 4, 5);
        m.config.doc_cvm = Cvm::Bi;
        m.config.margin = 4.0;
        let (x, y) = (LangId(0), LangId(1));
        let da = vec![vec![0, 1], vec![2]];
        let db = vec![vec![3], vec![1, 2]];
        let dn = vec![vec![0], vec![0, 3], vec![2]];
        let terms = vec![
            HingeTerm { src: x, a: Text::Document(&da), tgt: y, b: Text::Document(&db), noise: vec![Text::Document(&dn)] },
            HingeTerm { src: x, a: Text::Sentence(&da[0]), tgt: y, b: Text::Sentence(&db[0]), noise: vec![Text::Sentence(&dn[1])] },
        ];
        assert!(check(&m, &terms) < 1e-4);
    }

    #[test]
    fn noise_excludes_aligned() {
        let mut rng = RngStream::new(0);
        for j in 0..5 {
            let n = sample_noise(5, j, 200, &mut rng).unwrap();
            assert!(n.iter().all(|&i| i != j && i < 5));
        }
        assert!(sample_noise(1, 0, 1, &mut rng).is_err());
    }

    fn toy_corpus() -> ParallelCorpus {
        ParallelCorpus::new(
            "en",
            "de",
            vec![(vec![0, 1], vec![0, 1]), (vec![2], vec![2]), (vec![3, 0], vec![3, 0]), (vec![1, 2], vec![1, 2])],
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_is_noop() {
        let mut m = toy_model(Cvm::Add, 3, 2);
        let before = m.clone();
        train_bicvm(&[toy_corpus()], &mut m, &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn joint_with_one_corpus_equals_single() {
        let mut a = toy_model(Cvm::Add, 3, 2);
        let mut b = a.clone();
        let cfg = TrainConfig { epochs: 3, batch: 2, ..Default::default() };
        train_bicvm(&[toy_corpus()], &mut a, &cfg).unwrap();
        train_bicvm(&[toy_corpus()], &mut b, &TrainConfig { mode: TrainMode::Joint, ..cfg }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn doc_training_requires_boundaries() {
        let mut m = toy_model(Cvm::Add, 3, 2);
        assert!(matches!(
            train_doc(&[toy_corpus()], &mut m, &TrainConfig::default()),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn one_sentence_documents_match_sentence_objective() {
        let m = toy_model(Cvm::Add, 3, 9);
        let (x, y) = (LangId(0), LangId(1));
        let a = vec![vec![0, 1]];
        let b = vec![vec![2]];
        let n = vec![vec![3]];
        let doc = [HingeTerm { src: x, a: Text::Document(&a), tgt: y, b: Text::Document(&b), noise: vec![Text::Document(&n)] }];
        let sen = [HingeTerm { src: x, a: Text::Sentence(&a[0]), tgt: y, b: Text::Sentence(&b[0]), noise: vec![Text::Sentence(&n[0])] }];
        let (v1, g1) = bicvm_objective(&doc, &m, 1.0).unwrap();
        let (v2, g2) = bicvm_objective(&sen, &m, 1.0).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(g1, g2);
    }
}
