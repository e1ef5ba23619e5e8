//! Composition functions: sequence CVMs (ADD, BI, two-level DOC) and the
//! CCG-conditioned recursive autoencoders CCAE-A to CCAE-D.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{ensure_dim, Error, Result};
use crate::io::ParsedTree;
use crate::lexicon::{UnknownPolicy, Vocab};
use crate::numerics::{
    axpy, gaussian_init, tanh_backward_in_place, tanh_in_place, xavier_init, DenseMatrix,
    DenseVector, RngStream,
};
use crate::optimize::{lbfgs_minimize, LbfgsConfig, LbfgsResult, ParamVector, SegmentId};
use crate::treegrad::{
    backprop_tree_into, forward_tree_with, rae_loss, unfolding_loss, ClassifierHead, Composer,
    NodeContext, NodeDeltas, NodeKind, Tree, TreeNode,
};

// ---------------------------------------------------------------------------
// Sequence composition

/// A compositional vector model over a sequence of input vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Cvm {
    /// Sum of the inputs.
    #[default]
    Add,
    /// `Σ tanh(x_{i−1} + x_i)` with a zero vector before the first input.
    Bi,
}

impl Cvm {
    pub fn compose(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot compose an empty sequence".into()))?;
        let d = first.len();
        for x in inputs {
            ensure_dim(d, x.len(), "composition input")?;
        }
        let mut out = vec![0.0; d];
        match self {
            Cvm::Add => inputs.iter().for_each(|x| axpy(1.0, x, &mut out)),
            Cvm::Bi => {
                for i in 0..inputs.len() {
                    for k in 0..d {
                        let prev = if i == 0 { 0.0 } else { inputs[i - 1][k] };
                        out[k] += (prev + inputs[i][k]).tanh();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Deltas w.r.t. each input given `delta` on the composed output.
    pub fn backward(&self, inputs: &[&[f64]], delta: &[f64]) -> Vec<Vec<f64>> {
        let d = delta.len();
        match self {
            Cvm::Add => vec![delta.to_vec(); inputs.len()],
            Cvm::Bi => {
                let mut out = vec![vec![0.0; d]; inputs.len()];
                for i in 0..inputs.len() {
                    for k in 0..d {
                        let prev = if i == 0 { 0.0 } else { inputs[i - 1][k] };
                        let t = (prev + inputs[i][k]).tanh();
                        let g = delta[k] * (1.0 - t * t);
                        out[i][k] += g;
                        if i > 0 {
                            out[i - 1][k] += g;
                        }
                    }
                }
                out
            }
        }
    }

    /// Compose the embeddings of `sentence` (rows of `lexicon`).
    pub fn compose_words(&self, sentence: &[usize], lexicon: &DenseMatrix) -> Result<Vec<f64>> {
        let rows = word_rows(sentence, lexicon)?;
        self.compose(&rows)
    }
}

impl FromStr for Cvm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "add" => Ok(Cvm::Add),
            "bi" => Ok(Cvm::Bi),
            other => Err(Error::InvalidArgument(format!("unknown composition `{other}`"))),
        }
    }
}

impl fmt::Display for Cvm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cvm::Add => "add",
            Cvm::Bi => "bi",
        })
    }
}

fn word_rows<'a>(sentence: &[usize], lexicon: &'a DenseMatrix) -> Result<Vec<&'a [f64]>> {
    if sentence.is_empty() {
        return Err(Error::InvalidInput("empty sentence".into()));
    }
    sentence
        .iter()
        .map(|&w| {
            if w < lexicon.rows() {
                Ok(lexicon.row(w))
            } else {
                Err(Error::InvalidInput(format!("word id {w} outside lexicon")))
            }
        })
        .collect()
}

pub fn add_compose(sentence: &[usize], lexicon: &DenseMatrix) -> Result<DenseVector> {
    Cvm::Add.compose_words(sentence, lexicon).map(DenseVector::from)
}

pub fn bi_compose(sentence: &[usize], lexicon: &DenseMatrix) -> Result<DenseVector> {
    Cvm::Bi.compose_words(sentence, lexicon).map(DenseVector::from)
}

/// Second-level composition of sentence vectors into a document vector.
pub fn doc_compose(sentence_vectors: &[Vec<f64>], cvm: Cvm) -> Result<DenseVector> {
    if sentence_vectors.is_empty() {
        return Err(Error::InvalidInput("empty document".into()));
    }
    let refs: Vec<&[f64]> = sentence_vectors.iter().map(Vec::as_slice).collect();
    cvm.compose(&refs).map(DenseVector::from)
}

// ---------------------------------------------------------------------------
// CCG inventory

pub const COMBINATORS: [&str; 14] = [
    "FA", "BA", "LEX", "CONJ", "RP", "LP", "BX", "TR", "FC", "BC", "FUNNY", "RTC", "LTC", "GBX",
];

/// The 25 most frequent categories; anything else falls to [`CATCH_ALL`].
pub const CATEGORIES: [&str; 25] = [
    "N",
    "NP",
    "S[dcl]",
    "N/N",
    "NP[nb]",
    "S[dcl]\\NP",
    "NP[nb]/N",
    "NP\\NP",
    "(NP\\NP)/NP",
    ",",
    "(S[X]\\NP)\\(S[X]\\NP)",
    ".",
    "S[b]\\NP",
    "conj",
    "(S[dcl]\\NP)/NP",
    "S[pss]\\NP",
    "((S\\NP)\\(S\\NP))/NP",
    "S[adj]\\NP",
    "(S\\NP)\\(S\\NP)",
    "PP",
    "S[ng]\\NP",
    "PP/NP",
    "(S[dcl]\\NP)/(S[b]\\NP)",
    "(S[b]\\NP)/NP",
    "(S[to]\\NP)/(S[b]\\NP)",
];

pub const CATCH_ALL: &str = "*";

#[derive(Debug, Clone, PartialEq)]
pub struct CcgInventory {
    combinators: Vec<String>,
    categories: Vec<String>,
    combinator_index: HashMap<String, usize>,
    category_index: HashMap<String, usize>,
}

impl Default for CcgInventory {
    fn default() -> Self {
        Self::standard()
    }
}

impl CcgInventory {
    pub fn standard() -> Self {
        Self::new(COMBINATORS.iter().copied(), CATEGORIES.iter().copied())
            .expect("builtin inventory is valid")
    }

    /// Build from token lists; the catch-all category is appended if absent.
    pub fn new<'a>(
        combinators: impl IntoIterator<Item = &'a str>,
        categories: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let combinators: Vec<String> = combinators.into_iter().map(str::to_string).collect();
        let mut categories: Vec<String> = categories
            .into_iter()
            .filter(|c| *c != CATCH_ALL)
            .map(str::to_string)
            .collect();
        categories.push(CATCH_ALL.to_string());
        let combinator_index = index_unique(&combinators, "combinator")?;
        let category_index = index_unique(&categories, "category")?;
        if combinators.is_empty() {
            return Err(Error::InvalidArgument("combinator inventory is empty".into()));
        }
        Ok(CcgInventory {
            combinators,
            categories,
            combinator_index,
            category_index,
        })
    }

    /// Parse the one-token-per-line lists written by [`combinator_list`](Self::combinator_list)
    /// and [`category_list`](Self::category_list).
    pub fn from_lists(combinators: &str, categories: &str) -> Result<Self> {
        let toks = |s: &'_ str| -> Vec<String> {
            s.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect()
        };
        let c = toks(combinators);
        let t = toks(categories);
        Self::new(c.iter().map(String::as_str), t.iter().map(String::as_str))
    }

    pub fn combinator_list(&self) -> String {
        self.combinators.iter().map(|c| format!("{c}\n")).collect()
    }

    pub fn category_list(&self) -> String {
        self.categories.iter().map(|c| format!("{c}\n")).collect()
    }

    pub fn combinators(&self) -> &[String] {
        &self.combinators
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn num_combinators(&self) -> usize {
        self.combinators.len()
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn catch_all(&self) -> usize {
        self.categories.len() - 1
    }

    pub fn combinator(&self, name: &str) -> Result<usize> {
        self.combinator_index
            .get(name)
            .or_else(|| self.combinator_index.get(&name.to_ascii_uppercase()))
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown combinator `{name}`")))
    }

    /// Never fails: unknown categories map to the catch-all.
    pub fn category(&self, name: &str) -> usize {
        self.category_index
            .get(name)
            .copied()
            .unwrap_or_else(|| self.catch_all())
    }

    /// Resolve a parsed tree into word ids and inventory indices. Words are
    /// added to `vocab` when `grow` is set, otherwise looked up under `policy`.
    pub fn resolve_tree(
        &self,
        parsed: &ParsedTree,
        vocab: &mut Vocab,
        grow: bool,
        policy: UnknownPolicy,
    ) -> Result<Tree> {
        let mut nodes = Vec::new();
        self.push_resolved(parsed, vocab, grow, policy, &mut nodes)?;
        Tree::new(nodes)
    }

    fn push_resolved(
        &self,
        parsed: &ParsedTree,
        vocab: &mut Vocab,
        grow: bool,
        policy: UnknownPolicy,
        nodes: &mut Vec<TreeNode>,
    ) -> Result<usize> {
        let node = match parsed {
            ParsedTree::Leaf { category, word } => {
                let id = if grow {
                    vocab.add(word)
                } else {
                    vocab.lookup(word, policy)?
                };
                TreeNode::leaf(id).with_category(self.category(category))
            }
            ParsedTree::Internal {
                rule,
                category,
                left,
                right,
            } => {
                let l = self.push_resolved(left, vocab, grow, policy, nodes)?;
                let r = self.push_resolved(right, vocab, grow, policy, nodes)?;
                TreeNode::internal(l, r)
                    .with_rule(self.combinator(rule)?)
                    .with_category(self.category(category))
            }
        };
        nodes.push(node);
        Ok(nodes.len() - 1)
    }
}

fn index_unique(items: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (i, it) in items.iter().enumerate() {
        if it.chars().any(char::is_whitespace) || it.is_empty() {
            return Err(Error::InvalidArgument(format!("bad {what} token `{it}`")));
        }
        if map.insert(it.clone(), i).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate {what} `{it}`")));
        }
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// CCAE models

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcaeKind {
    /// One encoder/decoder pair for every node.
    A,
    /// Weights per combinator.
    B,
    /// Sum of per-combinator and per-category terms.
    C,
    /// Child categories transform the inputs, then a per-combinator map.
    D,
}

impl FromStr for CcaeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.to_ascii_lowercase();
        match t.trim_start_matches("ccae-").trim_start_matches("ccae") {
            "a" => Ok(CcaeKind::A),
            "b" => Ok(CcaeKind::B),
            "c" => Ok(CcaeKind::C),
            "d" => Ok(CcaeKind::D),
            _ => Err(Error::InvalidArgument(format!("unknown CCAE model `{s}`"))),
        }
    }
}

impl fmt::Display for CcaeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CcaeKind::A => "ccae-a",
            CcaeKind::B => "ccae-b",
            CcaeKind::C => "ccae-c",
            CcaeKind::D => "ccae-d",
        })
    }
}

/// One encoder or decoder weight table.
#[derive(Debug, Clone, Copy)]
struct Affine {
    w: SegmentId,
    b: SegmentId,
}

#[derive(Debug, Clone)]
pub struct CcaeModel {
    kind: CcaeKind,
    dim: usize,
    label_dim: usize,
    inventory: CcgInventory,
    vocab: Vocab,
    params: ParamVector,
    lex: SegmentId,
    head: ClassifierHead,
    /// A: 1 entry; B, D: per combinator; C: per combinator then per category.
    enc: Vec<Affine>,
    rec: Vec<Affine>,
    /// D only: per-category input transforms (shared by left and right positions).
    enc_cat: Vec<SegmentId>,
    rec_cat: Vec<SegmentId>,
}

impl CcaeModel {
    /// Fresh model with random weights and embeddings.
    pub fn new(
        kind: CcaeKind,
        dim: usize,
        label_dim: usize,
        inventory: CcgInventory,
        vocab: Vocab,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let lexicon = gaussian_init(vocab.len(), dim, 0.0, 0.1, rng)?;
        Self::with_lexicon(kind, label_dim, inventory, vocab, lexicon, rng)
    }

    /// Fresh model around an existing embedding matrix (one row per vocab entry).
    pub fn with_lexicon(
        kind: CcaeKind,
        label_dim: usize,
        inventory: CcgInventory,
        vocab: Vocab,
        lexicon: DenseMatrix,
        rng: &mut RngStream,
    ) -> Result<Self> {
        ensure_dim(vocab.len(), lexicon.rows(), "lexicon rows")?;
        let d = lexicon.cols();
        let mut p = ParamVector::new();
        let lex = p.insert("L", lexicon)?;
        let mut enc = Vec::new();
        let mut rec = Vec::new();
        let mut enc_cat = Vec::new();
        let mut rec_cat = Vec::new();

        let affine = |p: &mut ParamVector, name: &str, rows: usize, cols: usize, rng: &mut RngStream| -> Result<Affine> {
            let w = p.insert(format!("{name}.W"), xavier_init(rows, cols, rng))?;
            let b = p.insert(format!("{name}.b"), DenseMatrix::zeros(rows, 1))?;
            Ok(Affine { w, b })
        };
        let rules: Vec<String> = inventory
            .combinators()
            .iter()
            .map(|c| format!("rule.{c}"))
            .collect();
        let cats: Vec<String> = inventory
            .categories()
            .iter()
            .map(|c| format!("cat.{c}"))
            .collect();
        match kind {
            CcaeKind::A => {
                enc.push(affine(&mut p, "enc", d, 2 * d, rng)?);
                rec.push(affine(&mut p, "rec", 2 * d, d, rng)?);
            }
            CcaeKind::B => {
                for r in &rules {
                    enc.push(affine(&mut p, &format!("enc.{r}"), d, 2 * d, rng)?);
                    rec.push(affine(&mut p, &format!("rec.{r}"), 2 * d, d, rng)?);
                }
            }
            CcaeKind::C => {
                for r in rules.iter().chain(&cats) {
                    enc.push(affine(&mut p, &format!("enc.{r}"), d, 2 * d, rng)?);
                    rec.push(affine(&mut p, &format!("rec.{r}"), 2 * d, d, rng)?);
                }
            }
            CcaeKind::D => {
                for r in &rules {
                    enc.push(affine(&mut p, &format!("enc.{r}"), d, d, rng)?);
                    rec.push(affine(&mut p, &format!("rec.{r}"), d, d, rng)?);
                }
                for c in &cats {
                    enc_cat.push(p.insert(format!("enc.T.{c}"), xavier_init(d, d, rng))?);
                    rec_cat.push(p.insert(format!("rec.T.{c}"), xavier_init(d, d, rng))?);
                }
            }
        }
        let head = ClassifierHead {
            weights: p.insert("label.W", xavier_init(label_dim, d, rng))?,
            bias: p.insert("label.b", DenseMatrix::zeros(label_dim, 1))?,
        };
        Ok(CcaeModel {
            kind,
            dim: d,
            label_dim,
            inventory,
            vocab,
            params: p,
            lex,
            head,
            enc,
            rec,
            enc_cat,
            rec_cat,
        })
    }

    pub fn kind(&self) -> CcaeKind {
        self.kind
    }

    pub fn label_dim(&self) -> usize {
        self.label_dim
    }

    pub fn inventory(&self) -> &CcgInventory {
        &self.inventory
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn lexicon_table(&self) -> &DenseMatrix {
        self.params.seg(self.lex)
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    /// Replace all parameters; the layout must match.
    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if !self.params.same_layout(&params) {
            return Err(Error::InvalidArgument("parameter layout differs from model".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn head(&self) -> ClassifierHead {
        self.head
    }

    /// Named segment access for tests and tooling, e.g. `enc.rule.FA.W`.
    pub fn segment_mut(&mut self, name: &str) -> Option<&mut DenseMatrix> {
        let id = self.params.id(name)?;
        Some(self.params.seg_mut(id))
    }

    /// Rules are required for every model except A.
    pub fn check_tree(&self, tree: &Tree) -> Result<()> {
        for (i, n) in tree.nodes().iter().enumerate() {
            match n.kind {
                NodeKind::Leaf { word } if word >= self.vocab.len() => {
                    return Err(Error::InvalidInput(format!("leaf {i} word id {word} unknown")));
                }
                NodeKind::Internal { .. } if self.kind != CcaeKind::A => match n.rule {
                    Some(r) if r < self.inventory.num_combinators() => {}
                    _ => {
                        return Err(Error::InvalidInput(format!(
                            "node {i} lacks a valid combinator for {}",
                            self.kind
                        )))
                    }
                },
                _ => {}
            }
        }
        Ok(())
    }

    pub fn encode_tree(&self, tree: &Tree) -> Result<DenseVector> {
        self.check_tree(tree)?;
        let fwd = forward_tree_with(tree, self, None, false)?;
        Ok(fwd.root().into())
    }

    /// Classifier output on the root encoding.
    pub fn predict(&self, tree: &Tree) -> Result<DenseVector> {
        let e = self.encode_tree(tree)?;
        self.head.predict(&self.params, &e)
    }

    /// Single encoding step for explicit inputs.
    pub fn encode_pair(
        &self,
        x: &[f64],
        y: &[f64],
        rule: usize,
        category: usize,
        child_categories: (usize, usize),
    ) -> Result<DenseVector> {
        ensure_dim(self.dim, x.len(), "left input")?;
        ensure_dim(self.dim, y.len(), "right input")?;
        if rule >= self.inventory.num_combinators() {
            return Err(Error::InvalidArgument(format!("combinator index {rule} out of range")));
        }
        let ncat = self.inventory.num_categories();
        let clamp = |c: usize| if c < ncat { c } else { self.inventory.catch_all() };
        let ctx = NodeContext {
            rule: Some(rule),
            category: Some(clamp(category)),
            left_category: Some(clamp(child_categories.0)),
            right_category: Some(clamp(child_categories.1)),
        };
        Ok(self.encode(&ctx, x, y).into())
    }

    fn rule_of(&self, ctx: &NodeContext) -> usize {
        // Unannotated nodes use the first combinator; check_tree rejects them
        // on the public entry points.
        ctx.rule.unwrap_or(0)
    }

    fn cat_of(&self, c: Option<usize>) -> usize {
        c.filter(|&c| c < self.inventory.num_categories())
            .unwrap_or_else(|| self.inventory.catch_all())
    }

    /// Encoder/decoder tables active at a node (one, or two for model C).
    fn tables(&self, ctx: &NodeContext) -> ([usize; 2], usize) {
        match self.kind {
            CcaeKind::A => ([0, 0], 1),
            CcaeKind::B | CcaeKind::D => ([self.rule_of(ctx), 0], 1),
            CcaeKind::C => (
                [
                    self.rule_of(ctx),
                    self.inventory.num_combinators() + self.cat_of(ctx.category),
                ],
                2,
            ),
        }
    }

    fn d_transforms(&self, ctx: &NodeContext) -> (usize, usize) {
        (self.cat_of(ctx.left_category), self.cat_of(ctx.right_category))
    }

    fn d_premix(&self, ctx: &NodeContext, x: &[f64], y: &[f64]) -> Vec<f64> {
        let (tx, ty) = self.d_transforms(ctx);
        let mut z = vec![0.0; self.dim];
        self.params.seg(self.enc_cat[tx]).mul_vec_acc(x, &mut z);
        self.params.seg(self.enc_cat[ty]).mul_vec_acc(y, &mut z);
        z
    }
}

impl Composer for CcaeModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &ParamVector {
        &self.params
    }

    fn lexicon(&self) -> SegmentId {
        self.lex
    }

    fn encode(&self, ctx: &NodeContext, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut pre = vec![0.0; self.dim];
        if self.kind == CcaeKind::D {
            let z = self.d_premix(ctx, x, y);
            let a = self.enc[self.rule_of(ctx)];
            self.params.seg(a.w).mul_vec_acc(&z, &mut pre);
            axpy(1.0, self.params.seg(a.b).as_slice(), &mut pre);
        } else {
            let xy = crate::numerics::concat(x, y);
            let (tabs, n) = self.tables(ctx);
            for &t in &tabs[..n] {
                let a = self.enc[t];
                self.params.seg(a.w).mul_vec_acc(&xy, &mut pre);
                axpy(1.0, self.params.seg(a.b).as_slice(), &mut pre);
            }
        }
        tanh_in_place(&mut pre);
        pre
    }

    fn encode_backward(
        &self,
        ctx: &NodeContext,
        x: &[f64],
        y: &[f64],
        e: &[f64],
        delta_e: &[f64],
        grads: &mut ParamVector,
        dx: &mut [f64],
        dy: &mut [f64],
    ) {
        let d = self.dim;
        let mut dpre = delta_e.to_vec();
        tanh_backward_in_place(e, &mut dpre);
        if self.kind == CcaeKind::D {
            let z = self.d_premix(ctx, x, y);
            let a = self.enc[self.rule_of(ctx)];
            grads.seg_mut(a.w).add_outer(1.0, &dpre, &z);
            axpy(1.0, &dpre, grads.seg_mut(a.b).as_mut_slice());
            let dz = self.params.seg(a.w).tmul_vec(&dpre);
            let (tx, ty) = self.d_transforms(ctx);
            grads.seg_mut(self.enc_cat[tx]).add_outer(1.0, &dz, x);
            grads.seg_mut(self.enc_cat[ty]).add_outer(1.0, &dz, y);
            self.params.seg(self.enc_cat[tx]).tmul_vec_acc(&dz, dx);
            self.params.seg(self.enc_cat[ty]).tmul_vec_acc(&dz, dy);
        } else {
            let xy = crate::numerics::concat(x, y);
            let mut dxy = vec![0.0; 2 * d];
            let (tabs, n) = self.tables(ctx);
            for &t in &tabs[..n] {
                let a = self.enc[t];
                grads.seg_mut(a.w).add_outer(1.0, &dpre, &xy);
                axpy(1.0, &dpre, grads.seg_mut(a.b).as_mut_slice());
                self.params.seg(a.w).tmul_vec_acc(&dpre, &mut dxy);
            }
            axpy(1.0, &dxy[..d], dx);
            axpy(1.0, &dxy[d..], dy);
        }
    }

    fn reconstruct(&self, ctx: &NodeContext, e: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut r = vec![0.0; 2 * d];
        if self.kind == CcaeKind::D {
            let a = self.rec[self.rule_of(ctx)];
            let mut h = self.params.seg(a.w).mul_vec(e);
            axpy(1.0, self.params.seg(a.b).as_slice(), &mut h);
            let (tx, ty) = self.d_transforms(ctx);
            self.params.seg(self.rec_cat[tx]).mul_vec_acc(&h, &mut r[..d]);
            self.params.seg(self.rec_cat[ty]).mul_vec_acc(&h, &mut r[d..]);
        } else {
            let (tabs, n) = self.tables(ctx);
            for &t in &tabs[..n] {
                let a = self.rec[t];
                self.params.seg(a.w).mul_vec_acc(e, &mut r);
                axpy(1.0, self.params.seg(a.b).as_slice(), &mut r);
            }
        }
        tanh_in_place(&mut r);
        r
    }

    fn reconstruct_backward(
        &self,
        ctx: &NodeContext,
        e: &[f64],
        r: &[f64],
        delta_r: &[f64],
        grads: &mut ParamVector,
        de: &mut [f64],
    ) {
        let d = self.dim;
        let mut dpre = delta_r.to_vec();
        tanh_backward_in_place(r, &mut dpre);
        if self.kind == CcaeKind::D {
            let a = self.rec[self.rule_of(ctx)];
            let mut h = self.params.seg(a.w).mul_vec(e);
            axpy(1.0, self.params.seg(a.b).as_slice(), &mut h);
            let (tx, ty) = self.d_transforms(ctx);
            grads.seg_mut(self.rec_cat[tx]).add_outer(1.0, &dpre[..d], &h);
            grads.seg_mut(self.rec_cat[ty]).add_outer(1.0, &dpre[d..], &h);
            let mut dh = vec![0.0; d];
            self.params.seg(self.rec_cat[tx]).tmul_vec_acc(&dpre[..d], &mut dh);
            self.params.seg(self.rec_cat[ty]).tmul_vec_acc(&dpre[d..], &mut dh);
            grads.seg_mut(a.w).add_outer(1.0, &dh, e);
            axpy(1.0, &dh, grads.seg_mut(a.b).as_mut_slice());
            self.params.seg(a.w).tmul_vec_acc(&dh, de);
        } else {
            let (tabs, n) = self.tables(ctx);
            for &t in &tabs[..n] {
                let a = self.rec[t];
                grads.seg_mut(a.w).add_outer(1.0, &dpre, e);
                axpy(1.0, &dpre, grads.seg_mut(a.b).as_mut_slice());
                self.params.seg(a.w).tmul_vec_acc(&dpre, de);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// CCAE objective

#[derive(Debug, Clone)]
pub struct LabeledTree {
    pub tree: Tree,
    /// Target in [0, 1] per output unit.
    pub label: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelScope {
    #[default]
    Root,
    /// Every internal node.
    AllNodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ReconstructionSignal {
    /// Node-wise reconstruction of the two children.
    #[default]
    Rae,
    /// Recursive decoding from the root down to the leaves.
    Unfolding,
    /// Node-wise reconstruction from leaf inputs corrupted by fixed masks.
    Denoising,
}

/// L2 strength per parameter class (the segment-name prefix before the first `.`).
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    pub default: f64,
    pub per_class: HashMap<String, f64>,
}

impl Default for Regularizer {
    fn default() -> Self {
        Regularizer::uniform(1e-4)
    }
}

impl Regularizer {
    pub fn uniform(lambda: f64) -> Self {
        Regularizer {
            default: lambda,
            per_class: HashMap::new(),
        }
    }

    pub fn lambda_for(&self, segment: &str) -> f64 {
        let class = segment.split('.').next().unwrap_or(segment);
        self.per_class.get(class).copied().unwrap_or(self.default)
    }

    /// Adds `Σ (λ/2)‖θ_s‖²` scaled by `scale`, and `scale·λθ` to `grads`.
    pub fn apply(&self, params: &ParamVector, scale: f64, grads: &mut ParamVector) -> f64 {
        let mut value = 0.0;
        for ((name, p), (_, g)) in params.iter().zip(grads.iter_mut()) {
            let lambda = self.lambda_for(name) * scale;
            if lambda == 0.0 {
                continue;
            }
            value += 0.5 * lambda * crate::numerics::norm_sq(p.as_slice());
            axpy(lambda, p.as_slice(), g.as_mut_slice());
        }
        value
    }
}

#[derive(Debug, Clone)]
pub struct CcaeObjective {
    /// Weight of the reconstruction term; `1 − alpha` goes to the label term.
    pub alpha: f64,
    pub regularizer: Regularizer,
    pub label_scope: LabelScope,
    pub signal: ReconstructionSignal,
}

impl Default for CcaeObjective {
    fn default() -> Self {
        CcaeObjective {
            alpha: 0.2,
            regularizer: Regularizer::default(),
            label_scope: LabelScope::Root,
            signal: ReconstructionSignal::Rae,
        }
    }
}

/// Per-tree leaf masks for the denoising signal.
pub type CorpusMasks = Vec<Vec<Option<Vec<f64>>>>;

/// Mean node-wise mixed loss over the corpus plus the L2 term, with its gradient.
pub fn ccae_objective(
    corpus: &[LabeledTree],
    model: &CcaeModel,
    cfg: &CcaeObjective,
    masks: Option<&CorpusMasks>,
) -> Result<(f64, ParamVector)> {
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(Error::InvalidConfiguration(format!(
            "alpha must lie in [0, 1], got {}",
            cfg.alpha
        )));
    }
    if cfg.alpha < 1.0 {
        if let Some(i) = corpus.iter().position(|t| t.label.is_none()) {
            return Err(Error::InvalidConfiguration(format!(
                "alpha < 1 requires labels, tree {i} has none"
            )));
        }
    }
    if cfg.signal == ReconstructionSignal::Denoising {
        let m = masks.ok_or_else(|| {
            Error::InvalidConfiguration("denoising signal needs corruption masks".into())
        })?;
        ensure_dim(corpus.len(), m.len(), "mask sets per tree")?;
    }
    let normalizer = corpus
        .iter()
        .map(|t| t.tree.internal_count())
        .sum::<usize>()
        .max(1) as f64;
    let scale = 1.0 / normalizer;
    let mut grads = model.params.zeros_like();
    let mut total = 0.0;

    for (ti, item) in corpus.iter().enumerate() {
        let tree = &item.tree;
        model.check_tree(tree)?;
        let tree_masks = match (cfg.signal, masks) {
            (ReconstructionSignal::Denoising, Some(m)) => Some(m[ti].clone()),
            _ => None,
        };
        let needs_rec = cfg.alpha > 0.0 && cfg.signal != ReconstructionSignal::Unfolding;
        let fwd = forward_tree_with(tree, model, tree_masks, needs_rec)?;
        let mut deltas = NodeDeltas::new(tree.len());

        if cfg.alpha > 0.0 && tree.internal_count() > 0 {
            let w = cfg.alpha * scale;
            let (loss, mut d) = match cfg.signal {
                ReconstructionSignal::Unfolding => {
                    let mut dec = model.params.zeros_like();
                    let (l, d) = unfolding_loss(tree, model, &fwd, &mut dec)?;
                    grads.axpy(w, &dec)?;
                    (l, d)
                }
                _ => rae_loss(tree, &fwd)?,
            };
            scale_deltas(&mut d, w);
            deltas.merge(&d);
            total += w * loss;
        }
        if cfg.alpha < 1.0 {
            let label = item.label.as_deref().expect("checked above");
            ensure_dim(model.label_dim, label.len(), "label width")?;
            let w = (1.0 - cfg.alpha) * scale;
            let nodes: Vec<usize> = match cfg.label_scope {
                LabelScope::Root => vec![tree.root()],
                LabelScope::AllNodes => (0..tree.len())
                    .filter(|&i| !tree.node(i).is_leaf())
                    .collect(),
            };
            for n in nodes {
                let (loss, de) =
                    model
                        .head
                        .loss_and_grad(&model.params, label, &fwd.encodings[n], w, &mut grads)?;
                total += loss;
                deltas.add_encoding(n, &de);
            }
        }
        backprop_tree_into(tree, model, &fwd, &deltas, &mut grads)?;
    }
    total += cfg.regularizer.apply(&model.params, 1.0, &mut grads);
    Ok((total, grads))
}

fn scale_deltas(d: &mut NodeDeltas, s: f64) {
    for v in d.encoding.iter_mut().chain(d.reconstruction.iter_mut()).flatten() {
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Fit a CCAE with L-BFGS; the model's parameters are replaced by the result.
pub fn train_ccae(
    corpus: &[LabeledTree],
    model: &mut CcaeModel,
    cfg: &CcaeObjective,
    masks: Option<&CorpusMasks>,
    lbfgs: &LbfgsConfig,
) -> Result<LbfgsResult> {
    let theta0 = model.params.flatten();
    let mut work = model.clone();
    let result = lbfgs_minimize(
        |theta| {
            work.params.assign_flat(theta)?;
            let (v, g) = ccae_objective(corpus, &work, cfg, masks)?;
            Ok((v, g.flatten()))
        },
        &theta0,
        lbfgs,
    )?;
    model.params.assign_flat(&result.theta)?;
    log::info!(
        "ccae_train iterations={} objective={:.6} status={:?}",
        result.iterations,
        result.value,
        result.status
    );
    Ok(result)
}
