//! Similarity metrics, TF-IDF, the averaged perceptron, F1 and the
//! cross-lingual document classification harness.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{sq_dist, DenseMatrix, RngStream};

// ---------------------------------------------------------------------------
// Metrics

pub fn dot(x: &[f64], y: &[f64]) -> Result<f64> {
    ensure_dim(x.len(), y.len(), "dot product")?;
    Ok(crate::numerics::dot(x, y))
}

pub fn euclidean(x: &[f64], y: &[f64]) -> Result<f64> {
    ensure_dim(x.len(), y.len(), "euclidean distance")?;
    Ok(sq_dist(x, y).sqrt())
}

pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    ensure_dim(x.len(), y.len(), "cosine")?;
    let nx = crate::numerics::norm_sq(x).sqrt();
    let ny = crate::numerics::norm_sq(y).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::UndefinedSimilarity("cosine of a zero vector".into()));
    }
    Ok((crate::numerics::dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

/// `√((x−y)ᵀ S⁻¹ (x−y))`, solving against `S` by LU with partial pivoting.
pub fn mahalanobis(x: &[f64], y: &[f64], s: &DenseMatrix) -> Result<f64> {
    ensure_dim(x.len(), y.len(), "mahalanobis inputs")?;
    square(s, x.len(), "covariance")?;
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let z = lu_solve(s, &diff)?;
    let q = crate::numerics::dot(&diff, &z);
    if q < -1e-12 {
        return Err(Error::InvalidArgument(
            "covariance yields a negative quadratic form".into(),
        ));
    }
    Ok(q.max(0.0).sqrt())
}

/// Squared pseudometric `(x−y)ᵀ M (x−y)` for a positive semidefinite `M`.
pub fn pseudo_metric(x: &[f64], y: &[f64], m: &DenseMatrix) -> Result<f64> {
    ensure_dim(x.len(), y.len(), "pseudo-metric inputs")?;
    square(m, x.len(), "metric matrix")?;
    check_psd(m)?;
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(crate::numerics::dot(&diff, &m.mul_vec(&diff)).max(0.0))
}

fn square(m: &DenseMatrix, n: usize, what: &'static str) -> Result<()> {
    ensure_dim(n, m.rows(), what)?;
    ensure_dim(n, m.cols(), what)
}

/// Symmetry plus a Cholesky factorisation of `M + εI`.
pub fn check_psd(m: &DenseMatrix) -> Result<()> {
    let n = m.rows();
    let scale = m.as_slice().iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-10 * scale;
    for i in 0..n {
        for j in 0..i {
            if (m.get(i, j) - m.get(j, i)).abs() > tol {
                return Err(Error::InvalidArgument("metric matrix is not symmetric".into()));
            }
        }
    }
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = m.get(j, j) + tol;
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if diag <= 0.0 {
            return Err(Error::InvalidArgument(
                "metric matrix is not positive semidefinite".into(),
            ));
        }
        let djj = diag.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut v = m.get(i, j);
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / djj;
        }
    }
    Ok(())
}

fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    let mut m = a.as_slice().to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::InvalidArgument("covariance matrix is singular".into()));
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .expect("non-empty range");
        if m[piv * n + col].abs() <= 1e-12 * scale {
            return Err(Error::InvalidArgument("covariance matrix is singular".into()));
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    m[r * n + k] -= f * m[col * n + k];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut v = x[r];
        for k in r + 1..n {
            v -= m[r * n + k] * x[k];
        }
        x[r] = v / m[r * n + r];
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// TF-IDF

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdfVariant {
    /// `ln(N/df)`.
    #[default]
    Plain,
    /// `ln((1+N)/(1+df)) + 1`.
    Smoothed,
}

/// Document frequencies over a fixed vocabulary of term ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdf {
    pub num_docs: usize,
    pub df: Vec<usize>,
    pub variant: IdfVariant,
}

impl TfIdf {
    pub fn fit(docs: &[Vec<usize>], vocab_size: usize, variant: IdfVariant) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::InvalidInput("tf-idf needs at least one document".into()));
        }
        let mut df = vec![0usize; vocab_size];
        for doc in docs {
            let seen: BTreeSet<usize> = doc.iter().copied().collect();
            for t in seen {
                *df.get_mut(t).ok_or_else(|| {
                    Error::InvalidInput(format!("term id {t} outside vocabulary of {vocab_size}"))
                })? += 1;
            }
        }
        Ok(TfIdf {
            num_docs: docs.len(),
            df,
            variant,
        })
    }

    /// Inverse document frequency; terms never seen get 0.
    pub fn idf(&self, term: usize) -> f64 {
        match self.df.get(term).copied().unwrap_or(0) {
            0 => 0.0,
            df => idf(self.num_docs, df, self.variant),
        }
    }

    /// Raw term counts times idf, indexed by term id.
    pub fn weights(&self, doc: &[usize]) -> Vec<f64> {
        let mut w = vec![0.0; self.df.len()];
        for &t in doc {
            if t < w.len() {
                w[t] += 1.0;
            }
        }
        for (t, v) in w.iter_mut().enumerate() {
            if *v != 0.0 {
                *v *= self.idf(t);
            }
        }
        w
    }
}

/// Weight for a single term: `tf · idf(N, df)`; `df = 0` gives 0.
pub fn tfidf_weight(tf: f64, num_docs: usize, df: usize, variant: IdfVariant) -> f64 {
    if df == 0 {
        0.0
    } else {
        tf * idf(num_docs, df, variant)
    }
}

fn idf(n: usize, df: usize, variant: IdfVariant) -> f64 {
    let (n, df) = (n as f64, df as f64);
    match variant {
        IdfVariant::Plain => (n / df).ln(),
        IdfVariant::Smoothed => ((1.0 + n) / (1.0 + df)).ln() + 1.0,
    }
}

// ---------------------------------------------------------------------------
// Averaged perceptron

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for PerceptronConfig {
    fn default() -> Self {
        PerceptronConfig {
            epochs: 10,
            learning_rate: 1.0,
            seed: 0,
            shuffle: true,
        }
    }
}

/// Document vectors with label ids into `labels`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDocVectors {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
}

impl LabeledDocVectors {
    pub fn validate(&self) -> Result<usize> {
        ensure_dim(self.vectors.len(), self.labels.len(), "labels per vector")?;
        let dim = self.vectors.first().map_or(0, Vec::len);
        for v in &self.vectors {
            ensure_dim(dim, v.len(), "document vector")?;
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.label_names.len()) {
            return Err(Error::InvalidInput(format!("label id {l} out of range")));
        }
        Ok(dim)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Multiclass perceptron; the last column of each row is a bias weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronModel {
    /// Final (non-averaged) weights.
    pub weights: DenseMatrix,
    /// Mean of the weights after every training example.
    pub averaged: DenseMatrix,
    pub epochs: usize,
}

impl PerceptronModel {
    pub fn num_labels(&self) -> usize {
        self.averaged.rows()
    }

    pub fn dim(&self) -> usize {
        self.averaged.cols() - 1
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim(), x.len(), "perceptron input")?;
        Ok(scores(&self.averaged, x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.scale(s);
        self.averaged.scale(s);
    }
}

fn scores(w: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..w.rows())
        .map(|c| {
            let row = w.row(c);
            crate::numerics::dot(&row[..d], x) + row[d]
        })
        .collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate().skip(1) {
        if s > v[best] {
            best = i;
        }
    }
    best
}

pub fn perceptron_train(
    data: &LabeledDocVectors,
    cfg: &PerceptronConfig,
) -> Result<PerceptronModel> {
    let dim = data.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("perceptron needs training data".into()));
    }
    if cfg.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let labels = data.label_names.len().max(1);
    let mut w = DenseMatrix::zeros(labels, dim + 1);
    // u accumulates c·Δ so the average is w − u/c after c examples.
    let mut u = DenseMatrix::zeros(labels, dim + 1);
    let mut c = 1.0;
    let mut rng = RngStream::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut xb = vec![0.0; dim + 1];
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        for &i in &order {
            let x = &data.vectors[i];
            let gold = data.labels[i];
            let pred = argmax(&scores(&w, x));
            if pred != gold {
                xb[..dim].copy_from_slice(x);
                xb[dim] = 1.0;
                let lr = cfg.learning_rate;
                crate::numerics::axpy(lr, &xb, w.row_mut(gold));
                crate::numerics::axpy(-lr, &xb, w.row_mut(pred));
                crate::numerics::axpy(c * lr, &xb, u.row_mut(gold));
                crate::numerics::axpy(-c * lr, &xb, u.row_mut(pred));
            }
            c += 1.0;
        }
    }
    let averaged = if c > 1.0 { average_from(&w, &u, c) } else { w.clone() };
    Ok(PerceptronModel {
        weights: w,
        averaged,
        epochs: cfg.epochs,
    })
}

/// Mean of the snapshots after examples 1..c−1 given `u = Σ cᵢΔᵢ`.
fn average_from(w: &DenseMatrix, u: &DenseMatrix, c: f64) -> DenseMatrix {
    let n = c - 1.0;
    let mut out = w.clone();
    for (o, (&wv, &uv)) in out
        .as_mut_slice()
        .iter_mut()
        .zip(w.as_slice().iter().zip(u.as_slice()))
    {
        // Σ_{t=1..n} w_t = Σ_i Δ_i (n − c_i + 1) = (n+1)·w − u.
        *o = ((n + 1.0) * wv - uv) / n;
    }
    out
}

pub fn perceptron_predict(model: &PerceptronModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}

// ---------------------------------------------------------------------------
// F1

#[derive(Debug, Clone, PartialEq)]
pub struct LabelScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Report {
    pub per_label: Vec<LabelScore>,
    /// Mean F1 over labels that occur in gold or predictions.
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if tp == 0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Single-label scores.
pub fn f1_report(gold: &[usize], pred: &[usize], num_labels: usize) -> Result<F1Report> {
    ensure_dim(gold.len(), pred.len(), "predictions vs gold")?;
    if let Some(&l) = gold.iter().chain(pred).find(|&&l| l >= num_labels) {
        return Err(Error::InvalidInput(format!("label id {l} out of range")));
    }
    let gold_sets: Vec<Vec<bool>> = gold.iter().map(|&g| one_hot(g, num_labels)).collect();
    let pred_sets: Vec<Vec<bool>> = pred.iter().map(|&p| one_hot(p, num_labels)).collect();
    let mut rep = multilabel_f1(&gold_sets, &pred_sets)?;
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    rep.accuracy = if gold.is_empty() { 0.0 } else { correct as f64 / gold.len() as f64 };
    Ok(rep)
}

fn one_hot(i: usize, n: usize) -> Vec<bool> {
    let mut v = vec![false; n];
    v[i] = true;
    v
}

/// One-vs-rest scores where each document carries a set of labels.
/// Accuracy is the exact-match rate.
pub fn multilabel_f1(gold: &[Vec<bool>], pred: &[Vec<bool>]) -> Result<F1Report> {
    ensure_dim(gold.len(), pred.len(), "predictions vs gold")?;
    let n = gold.first().map_or(0, Vec::len);
    for (g, p) in gold.iter().zip(pred) {
        ensure_dim(n, g.len(), "gold label set")?;
        ensure_dim(n, p.len(), "predicted label set")?;
    }
    let mut per_label = Vec::with_capacity(n);
    let (mut stp, mut sfp, mut sfn) = (0, 0, 0);
    let mut macro_sum = 0.0;
    let mut active = 0;
    for l in 0..n {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (g, p) in gold.iter().zip(pred) {
            match (g[l], p[l]) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let (precision, recall, f1) = prf(tp, fp, fn_);
        if tp + fp + fn_ > 0 {
            macro_sum += f1;
            active += 1;
        }
        stp += tp;
        sfp += fp;
        sfn += fn_;
        per_label.push(LabelScore {
            precision,
            recall,
            f1,
            support: tp + fn_,
        });
    }
    let exact = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(F1Report {
        per_label,
        macro_f1: if active == 0 { 0.0 } else { macro_sum / active as f64 },
        micro_f1: prf(stp, sfp, sfn).2,
        accuracy: if gold.is_empty() { 0.0 } else { exact as f64 / gold.len() as f64 },
    })
}

// ---------------------------------------------------------------------------
// CLDC

/// Mean of a document's sentence vectors.
pub fn mean_vector(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot average zero vectors".into()))?;
    let mut out = vec![0.0; first.len()];
    for v in vectors {
        ensure_dim(out.len(), v.len(), "averaged vector")?;
        crate::numerics::axpy(1.0, v, &mut out);
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CldcReport {
    pub predictions: Vec<usize>,
    pub gold: Vec<usize>,
    pub label_names: Vec<String>,
    pub scores: F1Report,
}

impl CldcReport {
    pub fn accuracy(&self) -> f64 {
        self.scores.accuracy
    }

    /// `doc_id<TAB>gold<TAB>predicted` per test document.
    pub fn write_predictions<W: Write>(&self, out: &mut W, doc_ids: &[String]) -> Result<()> {
        ensure_dim(self.gold.len(), doc_ids.len(), "document ids")?;
        for ((id, &g), &p) in doc_ids.iter().zip(&self.gold).zip(&self.predictions) {
            writeln!(out, "{id}\t{}\t{}", self.label_names[g], self.label_names[p])
                .map_err(|e| Error::io("<predictions>", e))?;
        }
        Ok(())
    }

    /// Metrics as `key=value` lines.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "accuracy={:.4}\nmacro_f1={:.4}\nmicro_f1={:.4}\n",
            self.scores.accuracy, self.scores.macro_f1, self.scores.micro_f1
        );
        for (name, ls) in self.label_names.iter().zip(&self.scores.per_label) {
            s.push_str(&format!("f1[{name}]={:.4}\n", ls.f1));
        }
        s
    }
}

/// Train a perceptron on `train` and evaluate it on `test`.
pub fn cldc_evaluate_vectors(
    train: &LabeledDocVectors,
    test: &LabeledDocVectors,
    cfg: &PerceptronConfig,
) -> Result<CldcReport> {
    if train.label_names != test.label_names {
        return Err(Error::InvalidConfiguration(
            "train and test label vocabularies differ".into(),
        ));
    }
    let model = perceptron_train(train, cfg)?;
    test.validate()?;
    let predictions = test
        .vectors
        .iter()
        .map(|v| model.predict(v))
        .collect::<Result<Vec<_>>>()?;
    let scores = f1_report(&test.labels, &predictions, train.label_names.len())?;
    Ok(CldcReport {
        predictions,
        gold: test.labels.clone(),
        label_names: train.label_names.clone(),
        scores,
    })
}

/// Map label strings to ids in first-seen order over both sides.
pub fn label_index<'a>(labels: impl IntoIterator<Item = &'a str>) -> (Vec<String>, HashMap<String, usize>) {
    let mut names = Vec::new();
    let mut idx = HashMap::new();
    for l in labels {
        if !idx.contains_key(l) {
            idx.insert(l.to_string(), names.len());
            names.push(l.to_string());
        }
    }
    (names, idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn metric_examples() {
        assert!((cosine(&[3.0, -1.0], &[3.0, -1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::UndefinedSimilarity(_))
        ));
        assert!(dot(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mahalanobis_and_pseudo_metric() {
        let x = [1.0, 2.0, -1.0];
        let y = [0.5, -1.0, 2.0];
        let id = DenseMatrix::identity(3);
        let e = euclidean(&x, &y).unwrap();
        assert!((mahalanobis(&x, &y, &id).unwrap() - e).abs() < 1e-12);
        assert!((pseudo_metric(&x, &y, &id).unwrap() - e * e).abs() < 1e-12);
        assert_eq!(pseudo_metric(&x, &y, &DenseMatrix::zeros(3, 3)).unwrap(), 0.0);
        let singular = DenseMatrix::from_rows(&[
            vec![1.0, 2.0, 0.0],
            vec![2.0, 4.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(mahalanobis(&x, &y, &singular).is_err());
        let indefinite = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(pseudo_metric(&x, &y, &indefinite).is_err());
        // Diagonal covariance scales each axis.
        let diag = DenseMatrix::from_rows(&[
            vec![4.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.25],
        ])
        .unwrap();
        let expect = (0.25f64 / 4.0 + 9.0 + 9.0 / 0.25).sqrt();
        assert!((mahalanobis(&x, &y, &diag).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn tfidf_examples() {
        assert!((tfidf_weight(2.0, 10, 1, IdfVariant::Plain) - 4.605170185988091).abs() < 1e-12);
        assert_eq!(tfidf_weight(3.0, 7, 0, IdfVariant::Plain), 0.0);
        let docs = vec![vec![0, 1, 1], vec![0, 2], vec![0]];
        let t = TfIdf::fit(&docs, 4, IdfVariant::Plain).unwrap();
        assert_eq!(t.idf(0), 0.0);
        assert_eq!(t.idf(3), 0.0);
        let w = t.weights(&[1, 1, 2]);
        assert!((w[1] - 2.0 * 3f64.ln()).abs() < 1e-12);
        assert!((w[2] - 3f64.ln()).abs() < 1e-12);
        let w2 = t.weights(&[1, 1, 1, 1, 2]);
        assert!((w2[1] - 2.0 * w[1]).abs() < 1e-12);
    }

    fn toy_separable() -> LabeledDocVectors {
        LabeledDocVectors {
            vectors: vec![
                vec![2.0, 1.0],
                vec![1.5, 2.0],
                vec![3.0, 0.5],
                vec![2.5, 2.5],
                vec![-2.0, -1.0],
                vec![-1.0, -2.5],
                vec![-3.0, 0.2],
                vec![-0.5, -1.5],
            ],
            labels: vec![0, 0, 0, 0, 1, 1, 1, 1],
            label_names: vec!["pos".into(), "neg".into()],
        }
    }

    #[test]
    fn perceptron_separable() {
        let data = toy_separable();
        let m = perceptron_train(&data, &PerceptronConfig::default()).unwrap();
        for (v, &l) in data.vectors.iter().zip(&data.labels) {
            assert_eq!(m.predict(v).unwrap(), l);
        }
        assert!(m.predict(&[1.0]).is_err());
    }

    #[test]
    fn perceptron_single_label() {
        let data = LabeledDocVectors {
            vectors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            labels: vec![0, 0],
            label_names: vec!["only".into()],
        };
        let m = perceptron_train(&data, &PerceptronConfig::default()).unwrap();
        assert_eq!(m.predict(&[-5.0, 3.0]).unwrap(), 0);
    }

    /// Brute force: record weights after every example and average them.
    fn brute_average(data: &LabeledDocVectors, cfg: &PerceptronConfig) -> DenseMatrix {
        let dim = data.vectors[0].len();
        let labels = data.label_names.len();
        let mut w = DenseMatrix::zeros(labels, dim + 1);
        let mut sum = DenseMatrix::zeros(labels, dim + 1);
        let mut count = 0.0;
        let mut rng = RngStream::new(cfg.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..cfg.epochs {
            if cfg.shuffle {
                rng.shuffle(&mut order);
            }
            for &i in &order {
                let x = &data.vectors[i];
                let pred = argmax(&scores(&w, x));
                let gold = data.labels[i];
                if pred != gold {
                    for k in 0..dim {
                        w.set(gold, k, w.get(gold, k) + x[k]);
                        w.set(pred, k, w.get(pred, k) - x[k]);
                    }
                    w.set(gold, dim, w.get(gold, dim) + 1.0);
                    w.set(pred, dim, w.get(pred, dim) - 1.0);
                }
                for (s, v) in sum.as_mut_slice().iter_mut().zip(w.as_slice()) {
                    *s += v;
                }
                count += 1.0;
            }
        }
        sum.scale(1.0 / count);
        sum
    }

    #[test]
    fn averaging_matches_brute_force() {
        let mut rng = RngStream::new(3);
        let data = LabeledDocVectors {
            vectors: (0..30)
                .map(|_| vec![rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5])
                .collect(),
            labels: (0..30).map(|i| i % 3).collect(),
            label_names: vec!["a".into(), "b".into(), "c".into()],
        };
        let cfg = PerceptronConfig { epochs: 4, seed: 11, ..Default::default() };
        let m = perceptron_train(&data, &cfg).unwrap();
        let brute = brute_average(&data, &cfg);
        for (a, b) in m.averaged.as_slice().iter().zip(brute.as_slice()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn duplicated_training_set_same_predictions() {
        let data = toy_separable();
        let mut dup = data.clone();
        dup.vectors.extend(data.vectors.clone());
        dup.labels.extend(data.labels.clone());
        let cfg = PerceptronConfig::default();
        let a = perceptron_train(&data, &cfg).unwrap();
        let b = perceptron_train(&dup, &cfg).unwrap();
        for v in &data.vectors {
            assert_eq!(a.predict(v).unwrap(), b.predict(v).unwrap());
        }
    }

    #[test]
    fn ties_go_to_lowest_label() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn random_labels_near_chance() {
        let mut accs = Vec::new();
        for seed in 0..20 {
            let mut rng = RngStream::new(seed);
            let mk = |rng: &mut RngStream| LabeledDocVectors {
                vectors: (0..200).map(|_| vec![rng.uniform() - 0.5, rng.uniform() - 0.5]).collect(),
                labels: (0..200).map(|i| i % 2).collect(),
                label_names: vec!["x".into(), "y".into()],
            };
            let mut train = mk(&mut rng);
            rng.shuffle(&mut train.labels);
            let mut test = mk(&mut rng);
            rng.shuffle(&mut test.labels);
            let rep = cldc_evaluate_vectors(&train, &test, &PerceptronConfig { seed, ..Default::default() }).unwrap();
            accs.push(rep.accuracy());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() < 0.1, "{mean}");
    }

    #[test]
    fn label_vocab_mismatch() {
        let a = toy_separable();
        let mut b = toy_separable();
        b.label_names.reverse();
        assert!(matches!(
            cldc_evaluate_vectors(&a, &b, &PerceptronConfig::default()),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn memorization() {
        let a = toy_separable();
        let rep = cldc_evaluate_vectors(&a, &a, &PerceptronConfig::default()).unwrap();
        assert_eq!(rep.accuracy(), 1.0);
        let mut buf = Vec::new();
        let ids: Vec<String> = (0..a.len()).map(|i| format!("d{i}")).collect();
        rep.write_predictions(&mut buf, &ids).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "d0\tpos\tpos");
        assert!(rep.summary().contains("accuracy=1.0000"));
    }

    fn brute_f1(gold: &[usize], pred: &[usize], n: usize) -> (Vec<f64>, f64) {
        let mut conf = vec![vec![0usize; n]; n];
        for (&g, &p) in gold.iter().zip(pred) {
            conf[g][p] += 1;
        }
        let mut f1s = Vec::new();
        let mut tp_all = 0;
        for l in 0..n {
            let tp = conf[l][l];
            let col: usize = (0..n).map(|g| conf[g][l]).sum();
            let row: usize = conf[l].iter().sum();
            tp_all += tp;
            let p = if col == 0 { 0.0 } else { tp as f64 / col as f64 };
            let r = if row == 0 { 0.0 } else { tp as f64 / row as f64 };
            f1s.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
        }
        (f1s, tp_all as f64 / gold.len() as f64)
    }

    proptest! {
        #[test]
        fn cosine_bounded(x in proptest::collection::vec(-5.0f64..5.0, 4), y in proptest::collection::vec(-5.0f64..5.0, 4)) {
            if let Ok(c) = cosine(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&c));
            }
            let e = euclidean(&x, &y).unwrap();
            prop_assert!(e >= 0.0);
            prop_assert_eq!(euclidean(&x, &x).unwrap(), 0.0);
        }

        #[test]
        fn pseudo_metric_symmetric(a in proptest::collection::vec(-2.0f64..2.0, 9), x in proptest::collection::vec(-3.0f64..3.0, 3), y in proptest::collection::vec(-3.0f64..3.0, 3)) {
            // M = AᵀA is PSD.
            let am = DenseMatrix::from_vec(3, 3, a).unwrap();
            let mut m = DenseMatrix::zeros(3, 3);
            for i in 0..3 { for j in 0..3 {
                let v: f64 = (0..3).map(|k| am.get(k, i) * am.get(k, j)).sum();
                m.set(i, j, v);
            }}
            for i in 0..3 { for j in 0..i { let v = m.get(i, j); m.set(j, i, v); } }
            let xy = pseudo_metric(&x, &y, &m).unwrap();
            let yx = pseudo_metric(&y, &x, &m).unwrap();
            prop_assert!((xy - yx).abs() <= 1e-9 * (1.0 + xy.abs()));
            prop_assert!(xy >= 0.0);
        }

        #[test]
        fn f1_matches_confusion_oracle(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..40)) {
            let gold: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let rep = f1_report(&gold, &pred, 4).unwrap();
            let (f1s, acc) = brute_f1(&gold, &pred, 4);
            for (a, b) in rep.per_label.iter().zip(&f1s) {
                prop_assert!((a.f1 - b).abs() < 1e-12);
            }
            prop_assert!((rep.accuracy - acc).abs() < 1e-12);
            // Single-label micro F1 equals accuracy.
            prop_assert!((rep.micro_f1 - acc).abs() < 1e-12);
        }

        #[test]
        fn perceptron_scale_invariant(s in 0.01f64..100.0, seed in 0u64..50) {
            let data = toy_separable();
            let mut m = perceptron_train(&data, &PerceptronConfig { seed, ..Default::default() }).unwrap();
            let probes: Vec<[f64; 2]> = (0..20).map(|i| [(i as f64) * 0.3 - 3.0, 1.5 - (i as f64) * 0.17]).collect();
            let before: Vec<usize> = probes.iter().map(|p| m.predict(p).unwrap()).collect();
            m.scale(s);
            let after: Vec<usize> = probes.iter().map(|p| m.predict(p).unwrap()).collect();
            prop_assert_eq!(before, after);
        }
    }
}
