use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use cvsm::bicvm::{cldc_evaluate, train_bicvm as fit_bicvm, train_doc, BicvmConfig, BicvmModel, LabeledDocs, TrainConfig};
use cvsm::checkpoint::{
    bicvm_from_checkpoint, bicvm_to_checkpoint, ccae_from_checkpoint, ccae_to_checkpoint, loglinear_to_checkpoint,
    wsabie_to_checkpoint, Checkpoint,
};
use cvsm::compose::{
    train_ccae as fit_ccae, CcaeModel, CcaeObjective, CcgInventory, LabelScope, LabeledTree, ReconstructionSignal,
    Regularizer,
};
use cvsm::evalkit::PerceptronConfig;
use cvsm::frameid::{encode_instances, train_wsabie, BlockInventory, FrameLexicon, LoglinearModel, WsabieConfig, WsabieModel};
use cvsm::gradcheck::{self, TOLERANCE};
use cvsm::io::{
    index_parallel, index_parallel_docs, load_docs, load_embeddings, load_frame_lexicon, load_frames, load_parallel,
    load_parallel_docs, load_trees, write_atomic, RawDocument,
};
use cvsm::numerics::gaussian_init;
use cvsm::optimize::LbfgsConfig;
use cvsm::{Error, RngStream, UnknownPolicy, Vocab};

use crate::{BicvmMode, Encode, EvalCldc, FrameModel, GradCheck, Nn, Signal, TrainBicvm, TrainCcae, TrainFrameid};

#[derive(Debug)]
pub enum Failure {
    /// Bad combination of flags; reported with exit status 2.
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Run(e) => write!(f, "{e}"),
        }
    }
}

pub type Outcome = Result<ExitCode, Failure>;

pub fn train_bicvm(a: &TrainBicvm, seed: u64) -> Outcome {
    if a.src_lang == a.tgt_lang {
        return Err(Failure::Usage("--src-lang and --tgt-lang must differ".into()));
    }
    let cfg = BicvmConfig {
        dim: a.dim,
        margin: a.margin,
        noise: a.noise,
        lambda: a.lambda,
        cvm: a.model,
        doc_cvm: a.model,
        ..Default::default()
    };
    cfg.validate()?;
    let (mut vs, mut vt) = (Vocab::new(), Vocab::new());
    let corpus = match a.mode {
        BicvmMode::Sentence => {
            let raw = load_parallel(&a.src, &a.tgt)?;
            index_parallel(&raw, &a.src_lang, &a.tgt_lang, &mut vs, &mut vt)?
        }
        BicvmMode::Doc => {
            let raw = load_parallel_docs(&a.src, &a.tgt)?;
            index_parallel_docs(&raw, &a.src_lang, &a.tgt_lang, &mut vs, &mut vt)?
        }
    };
    log::info!(
        "corpus pairs={} documents={} src_vocab={} tgt_vocab={}",
        corpus.pairs.len(),
        corpus.documents.as_ref().map_or(0, Vec::len),
        vs.len(),
        vt.len()
    );
    let mut rng = RngStream::new(seed);
    let mut model = BicvmModel::new(cfg, vec![(a.src_lang.clone(), vs), (a.tgt_lang.clone(), vt)], &mut rng)?;
    let tc = TrainConfig {
        epochs: a.epochs,
        batch: a.batch,
        step: a.step,
        seed,
        ..Default::default()
    };
    let corpora = [corpus];
    match a.mode {
        BicvmMode::Sentence => fit_bicvm(&corpora, &mut model, &tc)?,
        BicvmMode::Doc => train_doc(&corpora, &mut model, &tc)?,
    };
    bicvm_to_checkpoint(&model, seed).save(&a.out)?;
    log::info!("checkpoint path={}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn train_ccae(a: &TrainCcae, seed: u64) -> Outcome {
    if !(0.0..=1.0).contains(&a.alpha) {
        return Err(Failure::Usage(format!("--alpha must lie in [0, 1], got {}", a.alpha)));
    }
    let records = load_trees(&a.trees)?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no trees", a.trees.display())).into());
    }
    let inventory = CcgInventory::standard();
    let mut vocab = Vocab::with_unk();
    let mut label_dim = None;
    let mut corpus = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if let Some(l) = &r.label {
            match label_dim {
                None => label_dim = Some(l.len()),
                Some(d) if d != l.len() => {
                    return Err(Error::InvalidInput(format!(
                        "tree {} has {} label values, expected {d}",
                        i + 1,
                        l.len()
                    ))
                    .into())
                }
                _ => {}
            }
        }
        corpus.push(LabeledTree {
            tree: inventory.resolve_tree(&r.tree, &mut vocab, true, UnknownPolicy::Unk)?,
            label: r.label.clone(),
        });
    }
    let mut rng = RngStream::new(seed);
    let label_dim = label_dim.unwrap_or(1);
    let mut model = match &a.embeddings {
        Some(path) => {
            let emb = load_embeddings(path)?;
            let mut lexicon = gaussian_init(vocab.len(), emb.dim(), 0.0, 0.1, &mut rng)?;
            let mut found = 0;
            for (id, w) in vocab.words().iter().enumerate() {
                if let Some(v) = emb.vector(w) {
                    lexicon.row_mut(id).copy_from_slice(v);
                    found += 1;
                }
            }
            log::info!("lexicon words={} pretrained={} dim={}", vocab.len(), found, emb.dim());
            CcaeModel::with_lexicon(a.model, label_dim, inventory, vocab, lexicon, &mut rng)?
        }
        None => CcaeModel::new(a.model, a.dim, label_dim, inventory, vocab, &mut rng)?,
    };
    let cfg = CcaeObjective {
        alpha: a.alpha,
        regularizer: Regularizer::uniform(a.lambda),
        label_scope: LabelScope::Root,
        signal: match a.mode {
            Signal::Rae => ReconstructionSignal::Rae,
            Signal::Unfolding => ReconstructionSignal::Unfolding,
        },
    };
    let lbfgs = LbfgsConfig {
        max_iter: a.epochs,
        ..Default::default()
    };
    fit_ccae(&corpus, &mut model, &cfg, None, &lbfgs)?;
    let (mut hit, mut total) = (0, 0);
    for t in &corpus {
        if let Some(l) = &t.label {
            let p = model.predict(&t.tree)?;
            total += 1;
            if p.iter().zip(l).all(|(p, g)| (*p >= 0.5) == (*g >= 0.5)) {
                hit += 1;
            }
        }
    }
    if total > 0 {
        log::info!("train_accuracy={:.4} labelled={total}", hit as f64 / total as f64);
    }
    ccae_to_checkpoint(&model, seed).save(&a.out)?;
    log::info!("checkpoint path={}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn train_frameid(a: &TrainFrameid, seed: u64) -> Outcome {
    let instances = load_frames(&a.frames)?;
    if instances.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no instances", a.frames.display())).into());
    }
    let mut lexicon = match &a.lexicon {
        Some(p) => load_frame_lexicon(p)?,
        None => FrameLexicon::new(),
    };
    lexicon.add_training(&instances);
    let mut rng = RngStream::new(seed);
    match a.model {
        FrameModel::Wsabie => {
            let emb_path = a
                .embeddings
                .as_ref()
                .ok_or_else(|| Failure::Usage("--embeddings is required for --model wsabie".into()))?;
            let emb = load_embeddings(emb_path)?;
            let blocks = BlockInventory::mine(&instances, emb.dim());
            let (data, _) = encode_instances(&instances, &blocks, &emb, &lexicon)?;
            let cfg = WsabieConfig {
                embed_dim: a.dim,
                margin: a.margin,
                learning_rate: a.step,
                epochs: a.epochs,
                seed,
                ..Default::default()
            };
            let mut model = WsabieModel::new(blocks.input_dim(), lexicon, &cfg, &mut rng)?;
            train_wsabie(&mut model, &data, &cfg, &mut rng)?;
            let mut hit = 0;
            for d in &data {
                if model.predict_frame(&d.x, &d.unit)? == d.gold {
                    hit += 1;
                }
            }
            log::info!("train_accuracy={:.4} instances={}", hit as f64 / data.len() as f64, data.len());
            wsabie_to_checkpoint(&model, &blocks, seed).save(&a.out)?;
        }
        FrameModel::Loglinear => {
            let mut model = LoglinearModel::new(&instances, lexicon)?;
            let lbfgs = LbfgsConfig {
                max_iter: a.epochs,
                ..Default::default()
            };
            model.train(&instances, a.lambda, &lbfgs)?;
            let mut hit = 0;
            for inst in &instances {
                let gold = inst.frame.as_deref().and_then(|f| model.lexicon().frame_id(f));
                if Some(model.predict(inst)?) == gold {
                    hit += 1;
                }
            }
            log::info!(
                "train_accuracy={:.4} instances={}",
                hit as f64 / instances.len() as f64,
                instances.len()
            );
            loglinear_to_checkpoint(&model, seed).save(&a.out)?;
        }
    }
    log::info!("checkpoint path={}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

/// Known-word ids per sentence; sentences with no known word are dropped.
fn index_known(doc: &RawDocument, vocab: &Vocab) -> Vec<Vec<usize>> {
    doc.sentences
        .iter()
        .map(|s| s.iter().filter_map(|w| vocab.get(w)).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

fn labeled_docs(path: &Path, vocab: &Vocab) -> Result<LabeledDocs, Failure> {
    let raw = load_docs(path)?;
    let mut out = LabeledDocs::default();
    let mut skipped = 0;
    for (i, d) in raw.iter().enumerate() {
        let sentences = index_known(d, vocab);
        if sentences.is_empty() {
            skipped += 1;
            continue;
        }
        out.ids.push(format!("doc{}", i + 1));
        out.labels.push(d.labels.clone());
        out.docs.push(sentences);
    }
    if skipped > 0 {
        log::warn!("documents path={} skipped_no_known_words={skipped}", path.display());
    }
    if out.docs.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no usable documents", path.display())).into());
    }
    Ok(out)
}

pub fn eval_cldc(a: &EvalCldc, seed: u64) -> Outcome {
    let model = bicvm_from_checkpoint(&Checkpoint::load(&a.checkpoint)?)?;
    let train_lang = model.lang(&a.src_lang)?;
    let test_lang = model.lang(&a.tgt_lang)?;
    let train = labeled_docs(&a.src, &model.language(train_lang).vocab)?;
    let test = labeled_docs(&a.tgt, &model.language(test_lang).vocab)?;
    let cfg = PerceptronConfig {
        epochs: a.epochs,
        seed,
        ..Default::default()
    };
    let report = cldc_evaluate(&model, train_lang, &train, test_lang, &test, &cfg)?;
    print!("{}", report.summary());
    if let Some(out) = &a.out {
        let mut buf = Vec::new();
        report.write_predictions(&mut buf, &test.ids)?;
        write_atomic(out, &String::from_utf8_lossy(&buf))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn format_row(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn encode(a: &Encode) -> Outcome {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mut lines = Vec::new();
    match ck.kind.as_str() {
        "bicvm" => {
            let path = a
                .src
                .as_ref()
                .ok_or_else(|| Failure::Usage("--src is required to encode with a bicvm checkpoint".into()))?;
            let model = bicvm_from_checkpoint(&ck)?;
            let lang = match &a.src_lang {
                Some(l) => model.lang(l)?,
                None => cvsm::bicvm::LangId(0),
            };
            let vocab = &model.language(lang).vocab;
            let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
            for line in text.lines() {
                let ids: Vec<usize> = line.split_whitespace().filter_map(|w| vocab.get(w)).collect();
                let v = if ids.is_empty() {
                    vec![0.0; model.config.dim]
                } else {
                    model.encode_sentence(lang, &ids)?
                };
                lines.push(format_row(&v));
            }
        }
        "ccae" => {
            let path = a
                .trees
                .as_ref()
                .ok_or_else(|| Failure::Usage("--trees is required to encode with a ccae checkpoint".into()))?;
            let model = ccae_from_checkpoint(&ck)?;
            let mut vocab = model.vocab().clone();
            for r in load_trees(path)? {
                let tree = model.inventory().resolve_tree(&r.tree, &mut vocab, false, UnknownPolicy::Unk)?;
                lines.push(format_row(&model.encode_tree(&tree)?));
            }
        }
        k => return Err(Error::InvalidInput(format!("cannot encode with a `{k}` checkpoint")).into()),
    }
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    match &a.out {
        Some(out) => write_atomic(out, &text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn nn(a: &Nn) -> Outcome {
    let table = match (&a.checkpoint, &a.embeddings) {
        (Some(ck), _) => {
            let mut tables = Checkpoint::load(ck)?.embedding_tables()?;
            match &a.src_lang {
                Some(l) => {
                    let i = tables
                        .iter()
                        .position(|(n, _)| n == l)
                        .ok_or_else(|| Error::InvalidInput(format!("checkpoint has no table `{l}`")))?;
                    tables.swap_remove(i).1
                }
                None => tables.swap_remove(0).1,
            }
        }
        (None, Some(e)) => load_embeddings(e)?,
        (None, None) => return Err(Failure::Usage("one of --checkpoint or --embeddings is required".into())),
    };
    for (w, s) in table.nearest(&a.query, a.k)? {
        println!("{w}\t{s:.6}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn grad_check(a: &GradCheck, seed: u64) -> Outcome {
    if a.instances == 0 {
        return Err(Failure::Usage("--instances must be positive".into()));
    }
    let mut worst: f64 = 0.0;
    for &t in &a.model.0 {
        let mut m: f64 = 0.0;
        for i in 0..a.instances {
            m = m.max(gradcheck::check(t, a.dim, seed.wrapping_add(i as u64))?);
        }
        log::info!("grad_check model={t} instances={} max_rel_error={m:.3e}", a.instances);
        worst = worst.max(m);
    }
    println!("max_rel_error={worst:.6e}");
    Ok(if worst < TOLERANCE {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
