use std::fs;
use std::path::PathBuf;

use cvsm::io::{
    index_parallel, index_parallel_docs, load_docs, load_embeddings, load_frame_lexicon, load_frames, load_parallel,
    load_parallel_docs, load_trees, save_embeddings,
};
use cvsm::{Error, Vocab};
use tempfile::TempDir;

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn embeddings_from_file() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "e.txt", "2 3\ncat 1 2 3\ndog 0.5 -1 2e-1\n");
    let t = load_embeddings(&p).unwrap();
    assert_eq!((t.len(), t.dim()), (2, 3));
    assert_eq!(t.vector("dog").unwrap(), &[0.5, -1.0, 0.2]);

    let empty = load_embeddings(&write(&dir, "z.txt", "0 5\n")).unwrap();
    assert_eq!((empty.len(), empty.dim()), (0, 5));

    let err = load_embeddings(&write(&dir, "bad.txt", "2 3\ncat 1 2 3\ndog 1 2\n")).unwrap_err();
    match err {
        Error::Parse { line, .. } => assert_eq!(line, 3),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn embeddings_save_load_round_trip() {
    let dir = TempDir::new().unwrap();
    let t = load_embeddings(&write(&dir, "e.txt", "2 2\nx 0.1 0.30000000000000004\ny -1e-300 7\n")).unwrap();
    let out = dir.path().join("copy.txt");
    save_embeddings(&t, &out).unwrap();
    let back = load_embeddings(&out).unwrap();
    assert_eq!(back, t);
}

#[test]
fn duplicate_embedding_last_wins() {
    let dir = TempDir::new().unwrap();
    let t = load_embeddings(&write(&dir, "e.txt", "2 1\na 1\na 2\n")).unwrap();
    assert_eq!(t.vector("a").unwrap(), &[2.0]);
}

#[test]
fn parallel_alignment_and_empty_lines() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.txt", "the cat\n\na dog\n");
    let b = write(&dir, "b.txt", "le chat\nla maison\nun chien\n");
    let raw = load_parallel(&a, &b).unwrap();
    assert_eq!(raw.pairs.len(), 2);
    assert_eq!(raw.dropped, 1);
    assert_eq!(raw.pairs[1].1, vec!["un", "chien"]);

    let three = load_parallel(&write(&dir, "x", "a\nb\nc\n"), &write(&dir, "y", "d\ne\nf\n")).unwrap();
    assert_eq!(three.pairs.len(), 3);

    let short = write(&dir, "short.txt", "one line\n");
    assert!(matches!(load_parallel(&a, &short), Err(Error::Alignment(_))));

    let (mut va, mut vb) = (Vocab::new(), Vocab::new());
    let corpus = index_parallel(&raw, "en", "fr", &mut va, &mut vb).unwrap();
    assert_eq!(corpus.len(), 2);
    assert_eq!(va.len(), 4);
}

#[test]
fn documents_and_parallel_documents() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.txt", "ECON\tGOV\nprices rose\nbanks lent\n\nSPORT\nteam won\n");
    let b = write(&dir, "b.txt", "ECON\npreise stiegen\nbanken liehen\n\nSPORT\nteam gewann\nheute\n");
    let docs = load_docs(&a).unwrap();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[0].labels, vec!["ECON", "GOV"]);
    assert_eq!(docs[1].sentences, vec![vec!["team", "won"]]);

    let raw = load_parallel_docs(&a, &b).unwrap();
    let (mut va, mut vb) = (Vocab::new(), Vocab::new());
    let corpus = index_parallel_docs(&raw, "en", "de", &mut va, &mut vb).unwrap();
    assert_eq!(corpus.documents.as_ref().unwrap().len(), 2);
    // Only the first document has equal sentence counts on both sides.
    assert_eq!(corpus.pairs.len(), 2);

    let one = write(&dir, "one.txt", "X\nonly\n");
    assert!(matches!(load_parallel_docs(&a, &one), Err(Error::Alignment(_))));
    let headless = write(&dir, "h.txt", "X\n\n");
    assert!(load_docs(&headless).is_err());
}

#[test]
fn tree_file() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "t.txt",
        "1\t(FA:S (lex:NP good) (lex:S\\NP film))\n\n(BA:S (lex:NP (lex:N x)) (lex:S\\NP y))\n",
    );
    assert!(load_trees(&p).is_err());
    let p = write(
        &dir,
        "t2.txt",
        "1\t(FA:S (lex:NP good) (lex:S\\NP film))\n0.2,0.8\t(BA:S (lex:NP bad) (lex:S\\NP film))\n(lex:N alone)\n",
    );
    let trees = load_trees(&p).unwrap();
    assert_eq!(trees.len(), 3);
    assert_eq!(trees[1].label.as_deref(), Some(&[0.2, 0.8][..]));
    assert_eq!(trees[2].label, None);
    assert_eq!(trees[0].tree.leaves(), vec!["good", "film"]);

    let bad = write(&dir, "bad.txt", "((FA:NP (lex:N a) (lex:N b))\n");
    match load_trees(&bad).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 1),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn frames_and_lexicon() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "f.txt",
        "run.v\tSelf_motion\tnsubj:dog\nrun.v\t_\tnsubj:man;dobj:company,firm\n",
    );
    let inst = load_frames(&f).unwrap();
    assert_eq!(inst.len(), 2);
    assert_eq!(inst[1].frame, None);
    assert_eq!(inst[1].slots[1].1, vec!["company", "firm"]);

    let l = write(&dir, "l.txt", "run.v\tSelf_motion,Operating\nwalk.v\tSelf_motion\n");
    let lex = load_frame_lexicon(&l).unwrap();
    assert_eq!(lex.num_frames(), 2);
    assert_eq!(lex.confusion_set("run.v").unwrap().len(), 2);

    let bad = write(&dir, "bad.txt", "run.v\n");
    assert!(matches!(load_frames(&bad), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn missing_file_is_io_error() {
    let err = load_embeddings(std::path::Path::new("/nonexistent/e.txt")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}
