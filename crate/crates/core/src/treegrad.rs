//! Forward evaluation and backpropagation through binary composition trees.
//!
//! A [`Tree`] stores its nodes in post-order: children always precede their
//! parent and the root is the last node. The forward pass therefore walks
//! the node list front to back, and the backward pass walks it back to front,
//! so every node's delta is complete (summed over all of its successors)
//! before it is pushed further down.
//!
//! Loss signals are expressed as [`NodeDeltas`]: the derivative of the loss
//! with respect to each node's encoding, and with respect to each node's
//! reconstruction. [`backprop_tree`] turns those into parameter gradients.

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{axpy, concat, dot, sigmoid, DenseMatrix, DenseVector, RngStream};
use crate::optimize::{ParamVector, SegmentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf { word: usize },
    Internal { left: usize, right: usize },
}

/// A tree node with optional CCG annotation (inventory indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub rule: Option<usize>,
    pub category: Option<usize>,
}

impl TreeNode {
    pub fn leaf(word: usize) -> Self {
        TreeNode {
            kind: NodeKind::Leaf { word },
            rule: None,
            category: None,
        }
    }

    pub fn internal(left: usize, right: usize) -> Self {
        TreeNode {
            kind: NodeKind::Internal { left, right },
            rule: None,
            category: None,
        }
    }

    pub fn with_rule(mut self, rule: usize) -> Self {
        self.rule = Some(rule);
        self
    }

    pub fn with_category(mut self, category: usize) -> Self {
        self.category = Some(category);
        self
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    /// Validate a post-ordered node list: children precede parents, every
    /// non-root node has exactly one parent, and the root is last.
    pub fn new(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("tree has no nodes".into()));
        }
        let mut parents = vec![0u32; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            if let NodeKind::Internal { left, right } = n.kind {
                if left >= i || right >= i || left == right {
                    return Err(Error::InvalidInput(format!(
                        "node {i} has invalid children ({left}, {right})"
                    )));
                }
                parents[left] += 1;
                parents[right] += 1;
            }
        }
        let last = nodes.len() - 1;
        for (i, &p) in parents.iter().enumerate() {
            let expected = u32::from(i != last);
            if p != expected {
                return Err(Error::InvalidInput(format!(
                    "node {i} has {p} parents, expected {expected}"
                )));
            }
        }
        Ok(Tree { nodes })
    }

    /// Left-branching tree over `words`: ((w0 w1) w2) ...
    pub fn left_branching(words: &[usize]) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::InvalidInput("empty sentence".into()));
        }
        let mut nodes = vec![TreeNode::leaf(words[0])];
        let mut acc = 0;
        for &w in &words[1..] {
            nodes.push(TreeNode::leaf(w));
            let leaf = nodes.len() - 1;
            nodes.push(TreeNode::internal(acc, leaf));
            acc = nodes.len() - 1;
        }
        Tree::new(nodes)
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }

    pub fn leaf_words(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Leaf { word } => Some(word),
                NodeKind::Internal { .. } => None,
            })
            .collect()
    }

    pub fn context(&self, i: usize) -> NodeContext {
        let n = &self.nodes[i];
        let (left_category, right_category) = match n.kind {
            NodeKind::Internal { left, right } => {
                (self.nodes[left].category, self.nodes[right].category)
            }
            NodeKind::Leaf { .. } => (None, None),
        };
        NodeContext {
            rule: n.rule,
            category: n.category,
            left_category,
            right_category,
        }
    }
}

/// Annotation visible to a composer at one internal node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeContext {
    pub rule: Option<usize>,
    pub category: Option<usize>,
    pub left_category: Option<usize>,
    pub right_category: Option<usize>,
}

/// A binary composition function with a symmetric reconstruction step.
///
/// The backward methods receive the delta with respect to the *output*
/// (post-activation) and must add their contributions into `grads` and the
/// input deltas.
pub trait Composer {
    fn dim(&self) -> usize;
    fn params(&self) -> &ParamVector;
    /// Segment holding the word embeddings, one row per word id.
    fn lexicon(&self) -> SegmentId;

    fn encode(&self, ctx: &NodeContext, x: &[f64], y: &[f64]) -> Vec<f64>;

    #[allow(clippy::too_many_arguments)]
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
    );

    /// Decode an encoding back into a `2·dim` vector `(x'‖y')`.
    fn reconstruct(&self, ctx: &NodeContext, e: &[f64]) -> Vec<f64>;

    fn reconstruct_backward(
        &self,
        ctx: &NodeContext,
        e: &[f64],
        r: &[f64],
        delta_r: &[f64],
        grads: &mut ParamVector,
        de: &mut [f64],
    );
}

/// Cached forward values for one tree.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Clean value per node: leaf embedding or internal encoding `e_n`.
    pub encodings: Vec<Vec<f64>>,
    /// Corrupted leaf inputs and their masks, when denoising.
    pub leaf_masks: Option<Vec<Option<Vec<f64>>>>,
    /// `r_n` for internal nodes, when requested.
    pub reconstructions: Option<Vec<Option<Vec<f64>>>>,
}

impl Forward {
    pub fn root(&self) -> &[f64] {
        self.encodings.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// The value a node feeds into its parent.
    fn input(&self, i: usize) -> std::borrow::Cow<'_, [f64]> {
        match self.leaf_masks.as_ref().and_then(|m| m[i].as_ref()) {
            Some(mask) => std::borrow::Cow::Owned(
                self.encodings[i].iter().zip(mask).map(|(v, m)| v * m).collect(),
            ),
            None => std::borrow::Cow::Borrowed(&self.encodings[i]),
        }
    }
}

/// Bottom-up evaluation caching `e_n` at every node; returns the cache.
pub fn forward_tree<C: Composer + ?Sized>(tree: &Tree, composer: &C) -> Result<Forward> {
    forward_tree_with(tree, composer, None, false)
}

/// Forward pass with optional per-leaf corruption masks and reconstructions.
pub fn forward_tree_with<C: Composer + ?Sized>(
    tree: &Tree,
    composer: &C,
    leaf_masks: Option<Vec<Option<Vec<f64>>>>,
    reconstruct: bool,
) -> Result<Forward> {
    let lex = composer.params().seg(composer.lexicon());
    let d = composer.dim();
    ensure_dim(d, lex.cols(), "lexicon width")?;
    if let Some(m) = &leaf_masks {
        ensure_dim(tree.len(), m.len(), "leaf mask count")?;
    }
    let mut fwd = Forward {
        encodings: Vec::with_capacity(tree.len()),
        leaf_masks,
        reconstructions: reconstruct.then(|| vec![None; tree.len()]),
    };
    for (i, node) in tree.nodes().iter().enumerate() {
        match node.kind {
            NodeKind::Leaf { word } => {
                if word >= lex.rows() {
                    return Err(Error::InvalidInput(format!(
                        "word id {word} outside lexicon of {} entries",
                        lex.rows()
                    )));
                }
                fwd.encodings.push(lex.row(word).to_vec());
            }
            NodeKind::Internal { left, right } => {
                let ctx = tree.context(i);
                let e = composer.encode(&ctx, &fwd.input(left), &fwd.input(right));
                if let Some(recs) = fwd.reconstructions.as_mut() {
                    recs[i] = Some(composer.reconstruct(&ctx, &e));
                }
                fwd.encodings.push(e);
            }
        }
    }
    Ok(fwd)
}

/// Loss derivatives attached to tree nodes.
#[derive(Debug, Clone)]
pub struct NodeDeltas {
    /// dE/d(clean node value).
    pub encoding: Vec<Option<Vec<f64>>>,
    /// dE/d(r_n).
    pub reconstruction: Vec<Option<Vec<f64>>>,
}

impl NodeDeltas {
    pub fn new(n: usize) -> Self {
        NodeDeltas {
            encoding: vec![None; n],
            reconstruction: vec![None; n],
        }
    }

    pub fn add_encoding(&mut self, node: usize, delta: &[f64]) {
        match &mut self.encoding[node] {
            Some(acc) => axpy(1.0, delta, acc),
            slot @ None => *slot = Some(delta.to_vec()),
        }
    }

    pub fn add_reconstruction(&mut self, node: usize, delta: &[f64]) {
        match &mut self.reconstruction[node] {
            Some(acc) => axpy(1.0, delta, acc),
            slot @ None => *slot = Some(delta.to_vec()),
        }
    }

    /// Elementwise sum with another set of deltas for the same tree.
    pub fn merge(&mut self, other: &NodeDeltas) {
        for (i, d) in other.encoding.iter().enumerate() {
            if let Some(d) = d {
                self.add_encoding(i, d);
            }
        }
        for (i, d) in other.reconstruction.iter().enumerate() {
            if let Some(d) = d {
                self.add_reconstruction(i, d);
            }
        }
    }
}

/// Parameter gradients plus the total delta reaching each node.
#[derive(Debug, Clone)]
pub struct GradAccumulator {
    pub grads: ParamVector,
    pub node_deltas: Vec<Vec<f64>>,
}

/// Backpropagation through structure. Each node's delta is the sum over its
/// successors: its parent's encoder, its own reconstruction, and any direct
/// loss term on its value.
pub fn backprop_tree<C: Composer + ?Sized>(
    tree: &Tree,
    composer: &C,
    fwd: &Forward,
    deltas: &NodeDeltas,
) -> Result<GradAccumulator> {
    let mut grads = composer.params().zeros_like();
    let node_deltas = backprop_tree_into(tree, composer, fwd, deltas, &mut grads)?;
    Ok(GradAccumulator { grads, node_deltas })
}

/// As [`backprop_tree`], accumulating into an existing gradient.
pub fn backprop_tree_into<C: Composer + ?Sized>(
    tree: &Tree,
    composer: &C,
    fwd: &Forward,
    deltas: &NodeDeltas,
    grads: &mut ParamVector,
) -> Result<Vec<Vec<f64>>> {
    let n = tree.len();
    let d = composer.dim();
    if fwd.encodings.len() != n {
        return Err(Error::ContractViolation(format!(
            "forward cache holds {} nodes, tree has {n}",
            fwd.encodings.len()
        )));
    }
    if deltas.encoding.len() != n || deltas.reconstruction.len() != n {
        return Err(Error::ContractViolation("delta count differs from node count".into()));
    }
    if deltas.reconstruction.iter().any(Option::is_some) && fwd.reconstructions.is_none() {
        return Err(Error::ContractViolation(
            "reconstruction deltas given but forward pass cached no reconstructions".into(),
        ));
    }
    let lex_id = composer.lexicon();
    // Delta arriving from the parent's encoder, w.r.t. the node's *input* value.
    let mut from_parent = vec![vec![0.0; d]; n];
    let mut totals = vec![vec![0.0; d]; n];

    for i in (0..n).rev() {
        let mut total = std::mem::take(&mut from_parent[i]);
        match tree.node(i).kind {
            NodeKind::Leaf { word } => {
                if let Some(mask) = fwd.leaf_masks.as_ref().and_then(|m| m[i].as_ref()) {
                    total.iter_mut().zip(mask).for_each(|(t, m)| *t *= m);
                }
                if let Some(ext) = &deltas.encoding[i] {
                    axpy(1.0, ext, &mut total);
                }
                axpy(1.0, &total, grads.seg_mut(lex_id).row_mut(word));
            }
            NodeKind::Internal { left, right } => {
                if let Some(ext) = &deltas.encoding[i] {
                    axpy(1.0, ext, &mut total);
                }
                let ctx = tree.context(i);
                let e = &fwd.encodings[i];
                if let Some(dr) = &deltas.reconstruction[i] {
                    let r = fwd
                        .reconstructions
                        .as_ref()
                        .and_then(|rs| rs[i].as_ref())
                        .ok_or_else(|| {
                            Error::ContractViolation(format!("node {i} has no cached reconstruction"))
                        })?;
                    composer.reconstruct_backward(&ctx, e, r, dr, grads, &mut total);
                }
                if total.iter().any(|&v| v != 0.0) {
                    let x = fwd.input(left);
                    let y = fwd.input(right);
                    let (lo, hi) = from_parent.split_at_mut(right.max(left));
                    let (dx, dy) = if left < right {
                        (&mut lo[left], &mut hi[0])
                    } else {
                        (&mut hi[0], &mut lo[right])
                    };
                    composer.encode_backward(&ctx, &x, &y, e, &total, grads, dx, dy);
                }
            }
        }
        totals[i] = total;
    }
    Ok(totals)
}

/// `½‖r − (x‖y)‖²` for a single node.
pub fn rae_node_loss(x: &[f64], y: &[f64], r: &[f64]) -> f64 {
    let t = concat(x, y);
    0.5 * r.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// Summed reconstruction error over all internal nodes. Targets are the clean
/// child values, so with corruption masks this is the denoising error.
pub fn rae_loss(tree: &Tree, fwd: &Forward) -> Result<(f64, NodeDeltas)> {
    let recs = fwd.reconstructions.as_ref().ok_or_else(|| {
        Error::ContractViolation("reconstruction loss needs cached reconstructions".into())
    })?;
    let mut deltas = NodeDeltas::new(tree.len());
    let mut loss = 0.0;
    for (i, node) in tree.nodes().iter().enumerate() {
        if let NodeKind::Internal { left, right } = node.kind {
            let r = recs[i]
                .as_ref()
                .ok_or_else(|| Error::ContractViolation(format!("node {i} not reconstructed")))?;
            let d = fwd.encodings[left].len();
            let diff: Vec<f64> = r
                .iter()
                .zip(fwd.encodings[left].iter().chain(&fwd.encodings[right]))
                .map(|(a, b)| a - b)
                .collect();
            loss += 0.5 * dot(&diff, &diff);
            let neg: Vec<f64> = diff.iter().map(|v| -v).collect();
            deltas.add_encoding(left, &neg[..d]);
            deltas.add_encoding(right, &neg[d..]);
            deltas.add_reconstruction(i, &diff);
        }
    }
    Ok((loss, deltas))
}

/// Unfolding reconstruction error from the root. Decoding recurses until
/// leaf positions; only original leaf vectors serve as targets.
///
/// Decoder parameter gradients are added to `grads`; the returned deltas
/// carry the root-encoding and leaf-target terms for [`backprop_tree`].
pub fn unfolding_loss<C: Composer + ?Sized>(
    tree: &Tree,
    composer: &C,
    fwd: &Forward,
    grads: &mut ParamVector,
) -> Result<(f64, NodeDeltas)> {
    let n = tree.len();
    let root = tree.root();
    if tree.node(root).is_leaf() {
        return Err(Error::InvalidInput("unfolding needs an internal root".into()));
    }
    let d = composer.dim();
    let mut decoded: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut recon: Vec<Vec<f64>> = vec![Vec::new(); n];
    decoded[root] = fwd.encodings[root].clone();
    for i in (0..n).rev() {
        if let NodeKind::Internal { left, right } = tree.node(i).kind {
            let r = composer.reconstruct(&tree.context(i), &decoded[i]);
            decoded[left] = r[..d].to_vec();
            decoded[right] = r[d..].to_vec();
            recon[i] = r;
        }
    }
    let mut deltas = NodeDeltas::new(n);
    let mut ddec: Vec<Vec<f64>> = vec![vec![0.0; d]; n];
    let mut loss = 0.0;
    for i in 0..n {
        match tree.node(i).kind {
            NodeKind::Leaf { .. } => {
                let diff: Vec<f64> = decoded[i]
                    .iter()
                    .zip(&fwd.encodings[i])
                    .map(|(a, b)| a - b)
                    .collect();
                loss += 0.5 * dot(&diff, &diff);
                let neg: Vec<f64> = diff.iter().map(|v| -v).collect();
                deltas.add_encoding(i, &neg);
                ddec[i] = diff;
            }
            NodeKind::Internal { left, right } => {
                let dr = concat(&ddec[left], &ddec[right]);
                let mut de = vec![0.0; d];
                composer.reconstruct_backward(&tree.context(i), &decoded[i], &recon[i], &dr, grads, &mut de);
                ddec[i] = de;
            }
        }
    }
    deltas.add_encoding(root, &ddec[root]);
    Ok((loss, deltas))
}

/// 0/1 mask zeroing each coordinate independently with probability `drop_prob`.
pub fn corruption_mask(dim: usize, drop_prob: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&drop_prob) {
        return Err(Error::InvalidArgument(format!(
            "drop probability must lie in [0, 1], got {drop_prob}"
        )));
    }
    Ok((0..dim)
        .map(|_| {
            if drop_prob > 0.0 && rng.uniform() < drop_prob {
                0.0
            } else {
                1.0
            }
        })
        .collect())
}

pub fn denoising_corrupt(x: &[f64], drop_prob: f64, rng: &mut RngStream) -> Result<DenseVector> {
    let mask = corruption_mask(x.len(), drop_prob, rng)?;
    Ok(x.iter().zip(&mask).map(|(v, m)| v * m).collect::<Vec<_>>().into())
}

/// One mask per leaf, for [`forward_tree_with`].
pub fn leaf_masks(
    tree: &Tree,
    dim: usize,
    drop_prob: f64,
    rng: &mut RngStream,
) -> Result<Vec<Option<Vec<f64>>>> {
    tree.nodes()
        .iter()
        .map(|n| {
            if n.is_leaf() {
                corruption_mask(dim, drop_prob, rng).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Sigmoid prediction `σ(W e + b)`.
pub fn classifier_head(e: &[f64], w_label: &DenseMatrix, b_label: &[f64]) -> Result<DenseVector> {
    ensure_dim(w_label.cols(), e.len(), "classifier input")?;
    ensure_dim(w_label.rows(), b_label.len(), "classifier bias")?;
    let mut z = w_label.mul_vec(e);
    axpy(1.0, b_label, &mut z);
    Ok(z.iter().map(|&v| sigmoid(v)).collect::<Vec<_>>().into())
}

/// `½‖l − σ(W e + b)‖²`
pub fn label_loss(l: &[f64], e: &[f64], w_label: &DenseMatrix, b_label: &[f64]) -> Result<f64> {
    let o = classifier_head(e, w_label, b_label)?;
    ensure_dim(o.len(), l.len(), "label target")?;
    Ok(0.5 * o.iter().zip(l).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

/// Segments of a sigmoid classifier inside a parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierHead {
    pub weights: SegmentId,
    pub bias: SegmentId,
}

impl ClassifierHead {
    pub fn predict(&self, params: &ParamVector, e: &[f64]) -> Result<DenseVector> {
        classifier_head(e, params.seg(self.weights), params.seg(self.bias).as_slice())
    }

    /// Loss, parameter gradients (accumulated) and dE/de.
    pub fn loss_and_grad(
        &self,
        params: &ParamVector,
        l: &[f64],
        e: &[f64],
        scale: f64,
        grads: &mut ParamVector,
    ) -> Result<(f64, Vec<f64>)> {
        let w = params.seg(self.weights);
        let o = self.predict(params, e)?;
        ensure_dim(o.len(), l.len(), "label target")?;
        let mut loss = 0.0;
        let dz: Vec<f64> = o
            .iter()
            .zip(l)
            .map(|(&oi, &li)| {
                loss += 0.5 * (li - oi) * (li - oi);
                scale * (oi - li) * oi * (1.0 - oi)
            })
            .collect();
        grads.seg_mut(self.weights).add_outer(1.0, &dz, e);
        axpy(1.0, &dz, grads.seg_mut(self.bias).as_mut_slice());
        Ok((scale * loss, w.tmul_vec(&dz)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// e = x + y; r = (e/2 ‖ e/2) scaled by a trainable scalar `s`.
    struct Additive {
        params: ParamVector,
        lex: SegmentId,
        s: SegmentId,
    }

    impl Additive {
        fn new(lex: DenseMatrix) -> Self {
            let mut params = ParamVector::new();
            let lex_id = params.insert("L", lex).unwrap();
            let s = params
                .insert("s", DenseMatrix::from_vec(1, 1, vec![0.5]).unwrap())
                .unwrap();
            Additive {
                params,
                lex: lex_id,
                s,
            }
        }
    }

    impl Composer for Additive {
        fn dim(&self) -> usize {
            self.params.seg(self.lex).cols()
        }
        fn params(&self) -> &ParamVector {
            &self.params
        }
        fn lexicon(&self) -> SegmentId {
            self.lex
        }
        fn encode(&self, _: &NodeContext, x: &[f64], y: &[f64]) -> Vec<f64> {
            crate::numerics::add(x, y)
        }
        fn encode_backward(
            &self,
            _: &NodeContext,
            _: &[f64],
            _: &[f64],
            _: &[f64],
            delta: &[f64],
            _: &mut ParamVector,
            dx: &mut [f64],
            dy: &mut [f64],
        ) {
            axpy(1.0, delta, dx);
            axpy(1.0, delta, dy);
        }
        fn reconstruct(&self, _: &NodeContext, e: &[f64]) -> Vec<f64> {
            let s = self.params.seg(self.s).get(0, 0);
            e.iter().chain(e).map(|v| s * v).collect()
        }
        fn reconstruct_backward(
            &self,
            _: &NodeContext,
            e: &[f64],
            _: &[f64],
            dr: &[f64],
            grads: &mut ParamVector,
            de: &mut [f64],
        ) {
            let s = self.params.seg(self.s).get(0, 0);
            let d = e.len();
            let mut gs = 0.0;
            for k in 0..d {
                de[k] += s * (dr[k] + dr[k + d]);
                gs += e[k] * (dr[k] + dr[k + d]);
            }
            grads.seg_mut(self.s).as_mut_slice()[0] += gs;
        }
    }

    fn lex3() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 3.0]]).unwrap()
    }

    #[test]
    fn tree_validation() {
        assert!(Tree::new(vec![]).is_err());
        assert!(Tree::new(vec![TreeNode::leaf(0), TreeNode::internal(0, 0)]).is_err());
        // dangling leaf
        assert!(Tree::new(vec![TreeNode::leaf(0), TreeNode::leaf(1)]).is_err());
        // child after parent
        assert!(Tree::new(vec![TreeNode::internal(1, 2), TreeNode::leaf(0), TreeNode::leaf(1)]).is_err());
        let t = Tree::left_branching(&[0, 1, 2]).unwrap();
        assert_eq!(t.internal_count(), 2);
        assert_eq!(t.leaf_words(), vec![0, 1, 2]);
    }

    #[test]
    fn single_leaf_forward_is_embedding() {
        let c = Additive::new(lex3());
        let t = Tree::new(vec![TreeNode::leaf(2)]).unwrap();
        assert_eq!(forward_tree(&t, &c).unwrap().root(), &[-1.0, 3.0]);
    }

    #[test]
    fn additive_forward_sums_leaves() {
        let c = Additive::new(lex3());
        let t = Tree::left_branching(&[0, 1, 2]).unwrap();
        assert_eq!(forward_tree(&t, &c).unwrap().root(), &[0.0, 5.0]);
    }

    #[test]
    fn unknown_leaf_word_rejected() {
        let c = Additive::new(lex3());
        let t = Tree::new(vec![TreeNode::leaf(7)]).unwrap();
        assert!(forward_tree(&t, &c).is_err());
    }

    #[test]
    fn zero_deltas_give_zero_gradients() {
        let c = Additive::new(lex3());
        let t = Tree::left_branching(&[0, 1, 2]).unwrap();
        let fwd = forward_tree_with(&t, &c, None, true).unwrap();
        let acc = backprop_tree(&t, &c, &fwd, &NodeDeltas::new(t.len())).unwrap();
        assert!(acc.grads.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_reconstruction_cache_is_contract_violation() {
        let c = Additive::new(lex3());
        let t = Tree::left_branching(&[0, 1]).unwrap();
        let fwd = forward_tree(&t, &c).unwrap();
        let mut deltas = NodeDeltas::new(t.len());
        deltas.add_reconstruction(2, &[1.0; 4]);
        assert!(matches!(
            backprop_tree(&t, &c, &fwd, &deltas),
            Err(Error::ContractViolation(_))
        ));
        assert!(rae_loss(&t, &fwd).is_err());
    }

    #[test]
    fn deltas_sum_over_successors() {
        let c = Additive::new(lex3());
        let t = Tree::left_branching(&[0, 1, 2]).unwrap();
        let fwd = forward_tree_with(&t, &c, None, true).unwrap();
        // Node 2 feeds two successors: the root encoder and a direct loss term.
        let mut via_parent = NodeDeltas::new(t.len());
        via_parent.add_encoding(4, &[0.5, -1.0]);
        let mut direct = NodeDeltas::new(t.len());
        direct.add_encoding(2, &[2.0, 0.25]);
        let mut both = via_parent.clone();
        both.merge(&direct);
        let a = backprop_tree(&t, &c, &fwd, &via_parent).unwrap();
        let b = backprop_tree(&t, &c, &fwd, &direct).unwrap();
        let ab = backprop_tree(&t, &c, &fwd, &both).unwrap();
        for k in 0..2 {
            assert_eq!(ab.node_deltas[2][k], a.node_deltas[2][k] + b.node_deltas[2][k]);
        }
        let mut sum = a.grads.clone();
        sum.axpy(1.0, &b.grads).unwrap();
        assert_eq!(ab.grads, sum);
    }

    #[test]
    fn rae_node_examples() {
        assert_eq!(rae_node_loss(&[1.0, 2.0], &[3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]), 0.0);
        assert_eq!(rae_node_loss(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]), 0.5);
    }

    #[test]
    fn unfolding_equals_rae_on_depth_one() {
        let c = Additive::new(lex3());
        let t = Tree::left_branching(&[0, 2]).unwrap();
        let fwd = forward_tree_with(&t, &c, None, true).unwrap();
        let (rae, _) = rae_loss(&t, &fwd).unwrap();
        let mut g = c.params().zeros_like();
        let (unf, _) = unfolding_loss(&t, &c, &fwd, &mut g).unwrap();
        assert!((rae - unf).abs() < 1e-12);
    }

    #[test]
    fn corruption_edges() {
        let mut rng = RngStream::new(3);
        let x = [1.0, -2.0, 3.0];
        assert_eq!(denoising_corrupt(&x, 0.0, &mut rng).unwrap().as_ref(), &x);
        assert!(denoising_corrupt(&x, 1.0, &mut rng).unwrap().iter().all(|&v| v == 0.0));
        assert!(denoising_corrupt(&x, 1.5, &mut rng).is_err());
    }

    #[test]
    fn corruption_rate() {
        let mut rng = RngStream::new(11);
        let ones = vec![1.0; 100_000];
        let c = denoising_corrupt(&ones, 0.3, &mut rng).unwrap();
        let frac = c.iter().filter(|&&v| v == 0.0).count() as f64 / c.len() as f64;
        assert!((frac - 0.3).abs() < 0.01, "{frac}");
    }

    #[test]
    fn denoising_with_no_drop_equals_rae() {
        let c = Additive::new(lex3());
        let t = Tree::left_branching(&[0, 1, 2]).unwrap();
        let masks = leaf_masks(&t, 2, 0.0, &mut RngStream::new(1)).unwrap();
        let noisy = forward_tree_with(&t, &c, Some(masks), true).unwrap();
        let clean = forward_tree_with(&t, &c, None, true).unwrap();
        assert_eq!(rae_loss(&t, &noisy).unwrap().0, rae_loss(&t, &clean).unwrap().0);
    }

    #[test]
    fn classifier_examples() {
        let w = DenseMatrix::zeros(1, 3);
        let e = [0.3, -0.2, 0.9];
        assert_eq!(classifier_head(&e, &w, &[0.0]).unwrap()[0], 0.5);
        assert_eq!(label_loss(&[0.5], &e, &w, &[0.0]).unwrap(), 0.0);
        assert_eq!(label_loss(&[1.0], &e, &w, &[0.0]).unwrap(), 0.125);
        // o → 1
        assert!(label_loss(&[1.0], &e, &w, &[60.0]).unwrap() < 1e-20);
        assert!(classifier_head(&[1.0], &w, &[0.0]).is_err());
        assert!(label_loss(&[1.0, 0.0], &e, &w, &[0.0]).is_err());
    }
}
