mod common;

use std::fs;

use cvsm::bicvm::{train_bicvm, BicvmConfig, BicvmModel, TrainConfig};
use cvsm::checkpoint::{
    bicvm_from_checkpoint, bicvm_to_checkpoint, ccae_from_checkpoint, ccae_to_checkpoint, loglinear_from_checkpoint,
    loglinear_to_checkpoint, wsabie_from_checkpoint, wsabie_to_checkpoint, Checkpoint,
};
use cvsm::compose::{CcaeKind, CcaeModel, CcgInventory};
use cvsm::frameid::{encode_instances, train_wsabie, BlockInventory, FrameInstance, FrameLexicon, LoglinearModel, WsabieConfig, WsabieModel};
use cvsm::optimize::LbfgsConfig;
use cvsm::{DenseMatrix, EmbeddingTable, RngStream, Vocab};
use tempfile::TempDir;

fn trained_bicvm(seed: u64) -> BicvmModel {
    let mut rng = RngStream::new(seed);
    let corpus = common::cipher_corpus(5, 2, &mut rng);
    let (va, vb) = common::cipher_vocabs();
    let cfg = BicvmConfig {
        dim: 6,
        margin: 6.0,
        noise: 2,
        ..Default::default()
    };
    let mut m = BicvmModel::new(cfg, vec![("a".into(), va), ("b".into(), vb)], &mut rng).unwrap();
    let tc = TrainConfig {
        epochs: 2,
        batch: 4,
        seed,
        ..Default::default()
    };
    train_bicvm(&[corpus], &mut m, &tc).unwrap();
    m
}

#[test]
fn bicvm_save_load_same_predictions() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("b.ck");
    let m = trained_bicvm(1);
    bicvm_to_checkpoint(&m, 1).save(&path).unwrap();
    let back = bicvm_from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    let probes: [&[usize]; 3] = [&[1, 2, 3], &[199], &[0, 0, 5, 7]];
    for lang in ["a", "b"] {
        for p in probes {
            let x = m.encode_sentence(m.lang(lang).unwrap(), p).unwrap();
            let y = back.encode_sentence(back.lang(lang).unwrap(), p).unwrap();
            assert_eq!(x, y);
        }
    }
}

#[test]
fn identical_runs_identical_checkpoints() {
    let a = bicvm_to_checkpoint(&trained_bicvm(9), 9).to_text().unwrap();
    let b = bicvm_to_checkpoint(&trained_bicvm(9), 9).to_text().unwrap();
    assert_eq!(a, b);
    let c = bicvm_to_checkpoint(&trained_bicvm(10), 10).to_text().unwrap();
    assert_ne!(a, c);
}

#[test]
fn ccae_save_load_same_predictions() {
    let dir = TempDir::new().unwrap();
    let inv = CcgInventory::standard();
    let mut rng = RngStream::new(3);
    let trees = common::sentiment_trees(10, &inv, &mut rng);
    for kind in [CcaeKind::A, CcaeKind::B, CcaeKind::C, CcaeKind::D] {
        let m = CcaeModel::new(kind, 4, 1, inv.clone(), common::sentiment_vocab(), &mut rng).unwrap();
        let path = dir.path().join(format!("{kind}.ck"));
        ccae_to_checkpoint(&m, 3).save(&path).unwrap();
        let back = ccae_from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
        assert_eq!(back.kind(), kind);
        for (t, _) in &trees {
            assert_eq!(m.encode_tree(t).unwrap(), back.encode_tree(t).unwrap());
            assert_eq!(m.predict(t).unwrap(), back.predict(t).unwrap());
        }
    }
}

fn frame_data() -> (Vec<FrameInstance>, EmbeddingTable) {
    let inst = |u: &str, f: &str, slots: &[(&str, &str)]| FrameInstance {
        lexical_unit: u.into(),
        frame: Some(f.into()),
        slots: slots.iter().map(|(s, w)| (s.to_string(), vec![w.to_string()])).collect(),
    };
    let data = vec![
        inst("run.v", "Self_motion", &[("nsubj", "dog")]),
        inst("run.v", "Operating", &[("nsubj", "man"), ("dobj", "company")]),
        inst("walk.v", "Self_motion", &[("nsubj", "man")]),
    ];
    let vocab = Vocab::from_words(["dog", "man", "company"]);
    let emb = EmbeddingTable::new(
        vocab,
        DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.7]]).unwrap(),
    )
    .unwrap();
    (data, emb)
}

#[test]
fn wsabie_save_load_same_predictions() {
    let dir = TempDir::new().unwrap();
    let (data, emb) = frame_data();
    let mut lex = FrameLexicon::new();
    lex.add_training(&data);
    let blocks = BlockInventory::mine(&data, emb.dim());
    let (enc, _) = encode_instances(&data, &blocks, &emb, &lex).unwrap();
    let cfg = WsabieConfig {
        embed_dim: 4,
        learning_rate: 0.1,
        epochs: 5,
        ..Default::default()
    };
    let mut rng = RngStream::new(4);
    let mut m = WsabieModel::new(blocks.input_dim(), lex, &cfg, &mut rng).unwrap();
    train_wsabie(&mut m, &enc, &cfg, &mut rng).unwrap();
    let path = dir.path().join("w.ck");
    wsabie_to_checkpoint(&m, &blocks, 4).save(&path).unwrap();
    let (back, bblocks) = wsabie_from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(bblocks, blocks);
    for e in &enc {
        assert_eq!(m.predict_frame(&e.x, &e.unit).unwrap(), back.predict_frame(&e.x, &e.unit).unwrap());
        for f in 0..m.lexicon().num_frames() {
            assert_eq!(m.score(&e.x, f).unwrap().to_bits(), back.score(&e.x, f).unwrap().to_bits());
        }
    }
}

#[test]
fn loglinear_save_load_same_predictions() {
    let dir = TempDir::new().unwrap();
    let (data, _) = frame_data();
    let mut lex = FrameLexicon::new();
    lex.add_training(&data);
    let mut m = LoglinearModel::new(&data, lex).unwrap();
    m.train(&data, 0.01, &LbfgsConfig::default()).unwrap();
    let path = dir.path().join("l.ck");
    loglinear_to_checkpoint(&m, 0).save(&path).unwrap();
    let back = loglinear_from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    for inst in &data {
        assert_eq!(m.probabilities(inst).unwrap(), back.probabilities(inst).unwrap());
    }
}

#[test]
fn truncated_and_foreign_files_fail() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("b.ck");
    bicvm_to_checkpoint(&trained_bicvm(2), 2).save(&path).unwrap();
    let text = fs::read_to_string(&path).unwrap();

    let cut = dir.path().join("cut.ck");
    fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert!(Checkpoint::load(&cut).is_err());

    let old = dir.path().join("old.ck");
    fs::write(&old, text.replacen("cvsm-checkpoint v1", "cvsm-checkpoint v0", 1)).unwrap();
    assert!(Checkpoint::load(&old).unwrap_err().to_string().contains("v0"));

    let renamed = dir.path().join("renamed.ck");
    fs::write(&renamed, text.replacen("tensor E.a ", "tensor E.zz ", 1)).unwrap();
    let msg = match Checkpoint::load(&renamed).and_then(|c| bicvm_from_checkpoint(&c)) {
        Ok(_) => panic!("renamed tensor accepted"),
        Err(e) => e.to_string(),
    };
    assert!(msg.contains("`E.zz`"), "{msg}");
}

#[test]
fn embedding_tables_from_checkpoints() {
    let m = trained_bicvm(5);
    let tables = bicvm_to_checkpoint(&m, 5).embedding_tables().unwrap();
    assert_eq!(tables.len(), 2);
    assert_eq!(tables[0].0, "a");
    assert_eq!(tables[1].1.len(), common::CIPHER_VOCAB);
    let near = tables[0].1.nearest("a3", 5).unwrap();
    assert_eq!(near.len(), 5);
    assert!(near.windows(2).all(|w| w[0].1 >= w[1].1));
}
