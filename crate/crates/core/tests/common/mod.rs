#![allow(dead_code)]

use cvsm::bicvm::{AlignedDocument, LabeledDocs, ParallelCorpus};
use cvsm::compose::CcgInventory;
use cvsm::treegrad::{Tree, TreeNode};
use cvsm::{RngStream, Vocab};

pub const CIPHER_VOCAB: usize = 200;

/// Deterministic renaming of language-A word ids into language B.
pub fn cipher(id: usize) -> usize {
    (id * 7 + 3) % CIPHER_VOCAB
}

pub fn cipher_vocabs() -> (Vocab, Vocab) {
    (
        Vocab::from_words((0..CIPHER_VOCAB).map(|i| format!("a{i}"))),
        Vocab::from_words((0..CIPHER_VOCAB).map(|i| format!("b{i}"))),
    )
}

/// Two topics, each preferring its own half of the vocabulary.
pub fn topic_sentence(topic: usize, rng: &mut RngStream) -> Vec<usize> {
    let half = CIPHER_VOCAB / 2;
    let len = 6 + rng.uniform_index(5);
    (0..len)
        .map(|_| {
            if rng.uniform() < 0.6 {
                topic * half + rng.uniform_index(half)
            } else {
                rng.uniform_index(CIPHER_VOCAB)
            }
        })
        .collect()
}

/// `per_topic` documents of `sentences` sentences for each of two topics,
/// with the B side the ciphered copy of the A side.
pub fn cipher_documents(per_topic: usize, sentences: usize, rng: &mut RngStream) -> Vec<AlignedDocument> {
    let mut docs = Vec::new();
    for i in 0..2 * per_topic {
        let topic = i % 2;
        let src: Vec<Vec<usize>> = (0..sentences).map(|_| topic_sentence(topic, rng)).collect();
        let tgt = src.iter().map(|s| s.iter().map(|&w| cipher(w)).collect()).collect();
        docs.push(AlignedDocument {
            labels: vec![format!("topic{topic}")],
            src,
            tgt,
        });
    }
    docs
}

pub fn cipher_corpus(per_topic: usize, sentences: usize, rng: &mut RngStream) -> ParallelCorpus {
    ParallelCorpus::from_documents("a", "b", cipher_documents(per_topic, sentences, rng)).expect("valid corpus")
}

/// One side of a document range as labelled monolingual documents.
pub fn side(docs: &[AlignedDocument], range: std::ops::Range<usize>, target: bool) -> LabeledDocs {
    let mut out = LabeledDocs::default();
    for i in range {
        let d = &docs[i];
        out.ids.push(format!("doc{i}"));
        out.labels.push(d.labels.clone());
        out.docs.push(if target { d.tgt.clone() } else { d.src.clone() });
    }
    out
}

/// Random binary bracketing over `words` with random rule and category annotations.
pub fn bracket(words: &[usize], inv: &CcgInventory, rng: &mut RngStream) -> Tree {
    fn build(words: &[usize], inv: &CcgInventory, rng: &mut RngStream, out: &mut Vec<TreeNode>) -> usize {
        let cat = rng.uniform_index(inv.num_categories());
        let node = if words.len() == 1 {
            TreeNode::leaf(words[0])
        } else {
            let split = 1 + rng.uniform_index(words.len() - 1);
            let l = build(&words[..split], inv, rng, out);
            let r = build(&words[split..], inv, rng, out);
            TreeNode::internal(l, r).with_rule(rng.uniform_index(inv.num_combinators()))
        };
        out.push(node.with_category(cat));
        out.len() - 1
    }
    let mut nodes = Vec::new();
    build(words, inv, rng, &mut nodes);
    Tree::new(nodes).expect("well-formed tree")
}

/// Same shape and words as `tree`, with every rule annotation shifted.
pub fn shift_rules(tree: &Tree, inv: &CcgInventory) -> Tree {
    let nodes = tree
        .nodes()
        .iter()
        .map(|n| {
            let mut n = *n;
            if let Some(r) = n.rule {
                n.rule = Some((r + 1) % inv.num_combinators());
            }
            n
        })
        .collect();
    Tree::new(nodes).expect("well-formed tree")
}

pub const SENTIMENT_VOCAB: usize = 40;
pub const POSITIVE: std::ops::Range<usize> = 0..4;
pub const NEGATIVE: std::ops::Range<usize> = 4..8;

/// Trees of 3 to 6 words holding exactly one marker word; the label is 1
/// when the marker is positive.
pub fn sentiment_trees(n: usize, inv: &CcgInventory, rng: &mut RngStream) -> Vec<(Tree, f64)> {
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let len = 3 + rng.uniform_index(4);
            let mut words: Vec<usize> = (0..len - 1).map(|_| 8 + rng.uniform_index(SENTIMENT_VOCAB - 8)).collect();
            let marker = if positive {
                POSITIVE.start + rng.uniform_index(POSITIVE.len())
            } else {
                NEGATIVE.start + rng.uniform_index(NEGATIVE.len())
            };
            words.insert(rng.uniform_index(len), marker);
            (bracket(&words, inv, rng), if positive { 1.0 } else { 0.0 })
        })
        .collect()
}

pub fn sentiment_vocab() -> Vocab {
    Vocab::from_words((0..SENTIMENT_VOCAB).map(|i| format!("w{i}")))
}
