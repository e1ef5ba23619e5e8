//! Finite-difference checks of every trainable objective on random small
//! instances.

use std::fmt;
use std::str::FromStr;

use crate::bicvm::{bicvm_objective, BicvmConfig, BicvmModel, HingeTerm, LangId, Text};
use crate::compose::{
    ccae_objective, CcaeKind, CcaeModel, CcaeObjective, CcgInventory, CorpusMasks, Cvm, LabelScope, LabeledTree,
    ReconstructionSignal, Regularizer,
};
use crate::error::{Error, Result};
use crate::frameid::{FrameInstance, FrameLexicon, LoglinearModel, WsabieConfig, WsabieModel};
use crate::lexicon::Vocab;
use crate::numerics::RngStream;
use crate::optimize::grad_check;
use crate::treegrad::{leaf_masks, Tree, TreeNode};

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTarget {
    Rae,
    Unfolding,
    Denoising,
    Ccae(CcaeKind),
    Warp,
    Loglinear,
    BicvmSentence,
    BicvmDoc,
}

impl GradTarget {
    pub fn all() -> Vec<GradTarget> {
        vec![
            GradTarget::Rae,
            GradTarget::Unfolding,
            GradTarget::Denoising,
            GradTarget::Ccae(CcaeKind::A),
            GradTarget::Ccae(CcaeKind::B),
            GradTarget::Ccae(CcaeKind::C),
            GradTarget::Ccae(CcaeKind::D),
            GradTarget::Warp,
            GradTarget::Loglinear,
            GradTarget::BicvmSentence,
            GradTarget::BicvmDoc,
        ]
    }
}

impl FromStr for GradTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "rae" => GradTarget::Rae,
            "unfolding" => GradTarget::Unfolding,
            "denoising" => GradTarget::Denoising,
            "warp" | "wsabie" => GradTarget::Warp,
            "loglinear" => GradTarget::Loglinear,
            "bicvm" | "bicvm-sentence" => GradTarget::BicvmSentence,
            "bicvm-doc" | "doc" => GradTarget::BicvmDoc,
            other => GradTarget::Ccae(other.parse().map_err(|_| {
                Error::InvalidArgument(format!("no gradient check for model `{s}`"))
            })?),
        })
    }
}

impl fmt::Display for GradTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradTarget::Rae => f.write_str("rae"),
            GradTarget::Unfolding => f.write_str("unfolding"),
            GradTarget::Denoising => f.write_str("denoising"),
            GradTarget::Ccae(k) => write!(f, "{k}"),
            GradTarget::Warp => f.write_str("warp"),
            GradTarget::Loglinear => f.write_str("loglinear"),
            GradTarget::BicvmSentence => f.write_str("bicvm"),
            GradTarget::BicvmDoc => f.write_str("bicvm-doc"),
        }
    }
}

/// Maximum relative gradient error on one random instance.
pub fn check(target: GradTarget, dim: usize, seed: u64) -> Result<f64> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let mut rng = RngStream::new(seed);
    match target {
        GradTarget::Rae => check_ccae(CcaeKind::A, 1.0, ReconstructionSignal::Rae, dim, &mut rng),
        GradTarget::Unfolding => check_ccae(CcaeKind::A, 1.0, ReconstructionSignal::Unfolding, dim, &mut rng),
        GradTarget::Denoising => check_ccae(CcaeKind::A, 1.0, ReconstructionSignal::Denoising, dim, &mut rng),
        GradTarget::Ccae(k) => check_ccae(k, 0.2 + 0.6 * rng.uniform(), ReconstructionSignal::Rae, dim, &mut rng),
        GradTarget::Warp => check_warp(dim, &mut rng),
        GradTarget::Loglinear => check_loglinear(&mut rng),
        GradTarget::BicvmSentence => check_bicvm(false, dim, &mut rng),
        GradTarget::BicvmDoc => check_bicvm(true, dim, &mut rng),
    }
}

/// Random binary tree over `leaves` random words with random annotations.
pub fn random_tree(leaves: usize, vocab: usize, inv: &CcgInventory, rng: &mut RngStream) -> Result<Tree> {
    fn build(n: usize, vocab: usize, inv: &CcgInventory, rng: &mut RngStream, out: &mut Vec<TreeNode>) -> usize {
        let cat = rng.uniform_index(inv.num_categories());
        let node = if n == 1 {
            TreeNode::leaf(rng.uniform_index(vocab))
        } else {
            let split = 1 + rng.uniform_index(n - 1);
            let l = build(split, vocab, inv, rng, out);
            let r = build(n - split, vocab, inv, rng, out);
            TreeNode::internal(l, r).with_rule(rng.uniform_index(inv.num_combinators()))
        };
        out.push(node.with_category(cat));
        out.len() - 1
    }
    let mut nodes = Vec::new();
    build(leaves.max(1), vocab, inv, rng, &mut nodes);
    Tree::new(nodes)
}

fn check_ccae(kind: CcaeKind, alpha: f64, signal: ReconstructionSignal, dim: usize, rng: &mut RngStream) -> Result<f64> {
    let inv = CcgInventory::standard();
    let vocab = Vocab::from_words((0..6).map(|i| format!("w{i}")));
    let model = CcaeModel::new(kind, dim, 2, inv.clone(), vocab, rng)?;
    let corpus = (0..2)
        .map(|_| {
            let tree = random_tree(2 + rng.uniform_index(4), 6, &inv, rng)?;
            let label = Some(vec![rng.uniform(), rng.uniform()]);
            Ok(LabeledTree { tree, label })
        })
        .collect::<Result<Vec<_>>>()?;
    let masks: Option<CorpusMasks> = match signal {
        ReconstructionSignal::Denoising => Some(
            corpus
                .iter()
                .map(|t| leaf_masks(&t.tree, dim, 0.3, rng))
                .collect::<Result<_>>()?,
        ),
        _ => None,
    };
    let cfg = CcaeObjective {
        alpha,
        regularizer: Regularizer::uniform(1e-2),
        label_scope: if rng.uniform() < 0.5 { LabelScope::Root } else { LabelScope::AllNodes },
        signal,
    };
    let mut work = model.clone();
    grad_check(
        |th| {
            work.params_mut().assign_flat(th)?;
            let (v, g) = ccae_objective(&corpus, &work, &cfg, masks.as_ref())?;
            Ok((v, g.flatten()))
        },
        &crate::treegrad::Composer::params(&model).flatten(),
        EPS,
    )
}

fn check_warp(dim: usize, rng: &mut RngStream) -> Result<f64> {
    let mut lex = FrameLexicon::new();
    for f in 0..5 {
        lex.frames.add(&format!("F{f}"));
    }
    let input = 2 * dim;
    let cfg = WsabieConfig {
        embed_dim: dim,
        margin: 1.0,
        init_variance: 0.25,
        ..Default::default()
    };
    let model = WsabieModel::new(input, lex, &cfg, rng)?;
    let x: Vec<f64> = (0..input).map(|_| rng.uniform() * 2.0 - 1.0).collect();
    let gold = rng.uniform_index(5);
    let neg = (gold + 1 + rng.uniform_index(4)) % 5;
    let weight = crate::frameid::warp_weight(1 + rng.uniform_index(4));
    let mut work = model.clone();
    grad_check(
        |th| {
            let p = work.params().unflatten(th)?;
            work.set_params(p)?;
            let (v, g) = work.hinge_and_grad(&x, gold, neg, weight)?;
            Ok((v, g.flatten()))
        },
        &model.params().flatten(),
        EPS,
    )
}

fn check_loglinear(rng: &mut RngStream) -> Result<f64> {
    let frames = ["A", "B", "C", "D"];
    let mut lex = FrameLexicon::new();
    for (u, fs) in [("u1", &frames[..3]), ("u2", &frames[1..]), ("u3", &frames[..2])] {
        for f in fs {
            lex.add(u, f);
        }
    }
    let words = ["w0", "w1", "w2", "w3", "w4"];
    let slots = ["nsubj", "dobj", "prep"];
    let data: Vec<FrameInstance> = (0..6)
        .map(|_| {
            let unit = ["u1", "u2", "u3"][rng.uniform_index(3)];
            let cands = lex.candidates(unit).expect("non-empty");
            let gold = cands[rng.uniform_index(cands.len())];
            FrameInstance {
                lexical_unit: unit.into(),
                frame: Some(frames[gold].into()),
                slots: (0..1 + rng.uniform_index(2))
                    .map(|_| {
                        (
                            slots[rng.uniform_index(3)].to_string(),
                            vec![words[rng.uniform_index(5)].to_string()],
                        )
                    })
                    .collect(),
            }
        })
        .collect();
    let model = LoglinearModel::new(&data, lex)?;
    let psi: Vec<f64> = (0..model.num_features()).map(|_| rng.uniform() - 0.5).collect();
    grad_check(|p| model.objective(&data, 0.1, p), &psi, EPS)
}

fn check_bicvm(docs: bool, dim: usize, rng: &mut RngStream) -> Result<f64> {
    let cvm = if rng.uniform() < 0.5 { Cvm::Add } else { Cvm::Bi };
    let cfg = BicvmConfig {
        dim,
        margin: dim as f64 * 0.5,
        noise: 2,
        lambda: 0.1,
        cvm,
        doc_cvm: if rng.uniform() < 0.5 { Cvm::Add } else { Cvm::Bi },
        init_variance: 0.1,
    };
    let model = BicvmModel::new(
        cfg,
        vec![
            ("a".into(), Vocab::from_words((0..5).map(|i| format!("a{i}")))),
            ("b".into(), Vocab::from_words((0..5).map(|i| format!("b{i}")))),
        ],
        rng,
    )?;
    let sentence = |rng: &mut RngStream| -> Vec<usize> { (0..1 + rng.uniform_index(3)).map(|_| rng.uniform_index(5)).collect() };
    let n_units = 3;
    let src: Vec<Vec<Vec<usize>>> = (0..n_units)
        .map(|_| (0..if docs { 1 + rng.uniform_index(3) } else { 1 }).map(|_| sentence(rng)).collect())
        .collect();
    let tgt: Vec<Vec<Vec<usize>>> = (0..n_units)
        .map(|_| (0..if docs { 1 + rng.uniform_index(3) } else { 1 }).map(|_| sentence(rng)).collect())
        .collect();
    let (la, lb) = (LangId(0), LangId(1));
    let mut terms: Vec<HingeTerm<'_>> = Vec::new();
    for i in 0..n_units {
        let noise: Vec<usize> = crate::bicvm::sample_noise(n_units, i, 2, rng)?;
        if docs {
            terms.push(HingeTerm {
                src: la,
                a: Text::Document(&src[i]),
                tgt: lb,
                b: Text::Document(&tgt[i]),
                noise: noise.iter().map(|&n| Text::Document(&tgt[n])).collect(),
            });
        }
        terms.push(HingeTerm {
            src: la,
            a: Text::Sentence(&src[i][0]),
            tgt: lb,
            b: Text::Sentence(&tgt[i][0]),
            noise: noise.iter().map(|&n| Text::Sentence(&tgt[n][0])).collect(),
        });
    }
    let reg_scale = terms.len() as f64;
    let mut work = model.clone();
    grad_check(
        |th| {
            work.params_mut().assign_flat(th)?;
            let (v, g) = bicvm_objective(&terms, &work, reg_scale)?;
            Ok((v, g.flatten()))
        },
        &model.params().flatten(),
        EPS,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for t in GradTarget::all() {
            assert_eq!(t.to_string().parse::<GradTarget>().unwrap(), t);
        }
        assert!("nope".parse::<GradTarget>().is_err());
    }

    #[test]
    fn each_target_passes_once() {
        for t in GradTarget::all() {
            let e = check(t, 3, 1).unwrap();
            assert!(e < TOLERANCE, "{t}: {e}");
        }
    }
}
