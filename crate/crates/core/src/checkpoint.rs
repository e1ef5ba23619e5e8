//! Versioned plain-text checkpoints holding named tensors, word lists and
//! hyperparameters, plus conversions for every trainable model.

use std::path::Path;

use indexmap::IndexMap;

use crate::bicvm::{BicvmConfig, BicvmModel, LangId};
use crate::compose::{CcaeKind, CcaeModel, CcgInventory, Cvm};
use crate::error::{Error, Result};
use crate::frameid::{BlockInventory, FrameLexicon, LoglinearModel, WsabieModel};
use crate::lexicon::{EmbeddingTable, Vocab};
use crate::numerics::{DenseMatrix, RngStream};
use crate::optimize::ParamVector;

pub const VERSION: &str = "cvsm-checkpoint v1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub kind: String,
    pub seed: u64,
    pub hyper: IndexMap<String, String>,
    pub lists: IndexMap<String, Vec<String>>,
    pub tensors: IndexMap<String, DenseMatrix>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(kind: &str, seed: u64) -> Self {
        Checkpoint {
            kind: kind.into(),
            seed,
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.hyper.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.hyper
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(format!("missing hyperparameter `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| bad(format!("hyperparameter `{key}` has bad value `{v}`")))
    }

    pub fn list(&self, name: &str) -> Result<&[String]> {
        self.lists
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| bad(format!("missing list `{name}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<&DenseMatrix> {
        self.tensors
            .get(name)
            .ok_or_else(|| bad(format!("missing tensor `{name}`")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(bad(format!("checkpoint holds a `{}` model, expected `{kind}`", self.kind)))
        }
    }

    /// Every tensor must be one of `names`.
    pub fn check_tensor_names<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let known: Vec<&str> = names.into_iter().collect();
        match self.tensors.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(bad(format!("unknown tensor section `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str(VERSION);
        out.push('\n');
        check_token(&self.kind, "model kind")?;
        out.push_str(&format!("kind {}\nseed {}\n", self.kind, self.seed));
        for (k, v) in &self.hyper {
            check_token(k, "hyperparameter name")?;
            check_token(v, "hyperparameter value")?;
            out.push_str(&format!("hyper {k} {v}\n"));
        }
        for (name, items) in &self.lists {
            check_token(name, "list name")?;
            out.push_str(&format!("list {name} {}\n", items.len()));
            for it in items {
                if it.contains('\n') || it.contains('\r') {
                    return Err(bad(format!("list `{name}` entry contains a newline")));
                }
                out.push_str(it);
                out.push('\n');
            }
        }
        for (name, m) in &self.tensors {
            check_token(name, "tensor name")?;
            out.push_str(&format!("tensor {name} {} {}\n", m.rows(), m.cols()));
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| bad(format!("truncated checkpoint: expected {what}")))
        };
        let (_, v) = next("version line")?;
        if v != VERSION {
            return Err(bad(format!("unsupported checkpoint version `{v}`, expected `{VERSION}`")));
        }
        let mut ck = Checkpoint::default();
        let (_, kind) = next("kind line")?;
        ck.kind = kind
            .strip_prefix("kind ")
            .ok_or_else(|| bad("second line must be `kind <name>`"))?
            .to_string();
        let (ln, seed) = next("seed line")?;
        ck.seed = seed
            .strip_prefix("seed ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("line {ln}: expected `seed <integer>`")))?;
        loop {
            let (ln, line) = next("`end`")?;
            let parts: Vec<&str> = line.split(' ').collect();
            match parts.as_slice() {
                ["end"] => break,
                ["hyper", k, v] => {
                    ck.hyper.insert(k.to_string(), v.to_string());
                }
                ["list", name, n] => {
                    let n: usize = n.parse().map_err(|_| bad(format!("line {ln}: bad list length")))?;
                    let mut items = Vec::with_capacity(n);
                    for _ in 0..n {
                        items.push(next("list entry")?.1.to_string());
                    }
                    if ck.lists.insert(name.to_string(), items).is_some() {
                        return Err(bad(format!("line {ln}: duplicate list `{name}`")));
                    }
                }
                ["tensor", name, r, c] => {
                    let rows: usize = r.parse().map_err(|_| bad(format!("line {ln}: bad row count")))?;
                    let cols: usize = c.parse().map_err(|_| bad(format!("line {ln}: bad column count")))?;
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rl, row) = next("tensor row")?;
                        let vals = if row.is_empty() {
                            Vec::new()
                        } else {
                            row.split(' ')
                                .map(|v| v.parse::<f64>())
                                .collect::<std::result::Result<Vec<_>, _>>()
                                .map_err(|_| bad(format!("line {rl}: bad number in tensor `{name}`")))?
                        };
                        if vals.len() != cols {
                            return Err(bad(format!(
                                "line {rl}: tensor `{name}` row has {} values, expected {cols}",
                                vals.len()
                            )));
                        }
                        data.extend(vals);
                    }
                    let m = DenseMatrix::from_vec(rows, cols, data)?;
                    if ck.tensors.insert(name.to_string(), m).is_some() {
                        return Err(bad(format!("line {ln}: duplicate tensor `{name}`")));
                    }
                }
                _ => return Err(bad(format!("line {ln}: unknown section `{line}`"))),
            }
        }
        if let Some((ln, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(bad(format!("line {}: content after `end`: `{l}`", ln + 1)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_text()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    fn put_params(&mut self, params: &ParamVector) {
        for (name, m) in params.iter() {
            self.tensors.insert(name.to_string(), m.clone());
        }
    }

    /// Fill every segment of `template` from the matching tensor.
    fn take_params(&self, template: &ParamVector) -> Result<ParamVector> {
        self.check_tensor_names(template.iter().map(|(n, _)| n))?;
        let mut out = template.clone();
        for (name, m) in out.iter_mut() {
            let t = self.tensor(name)?;
            if t.rows() != m.rows() || t.cols() != m.cols() {
                return Err(bad(format!(
                    "tensor `{name}` is {}x{}, expected {}x{}",
                    t.rows(),
                    t.cols(),
                    m.rows(),
                    m.cols()
                )));
            }
            *m = t.clone();
        }
        Ok(out)
    }

    /// Word embedding tables in the checkpoint, keyed by language or `lexicon`.
    pub fn embedding_tables(&self) -> Result<Vec<(String, EmbeddingTable)>> {
        match self.kind.as_str() {
            "bicvm" => {
                let m = bicvm_from_checkpoint(self)?;
                Ok(m.languages()
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        let t = EmbeddingTable::new(l.vocab.clone(), m.table(LangId(i)).clone())
                            .expect("model tables match vocabularies");
                        (l.name.clone(), t)
                    })
                    .collect())
            }
            "ccae" => {
                let m = ccae_from_checkpoint(self)?;
                let t = EmbeddingTable::new(m.vocab().clone(), m.params().get("L").expect("lexicon").clone())?;
                Ok(vec![("lexicon".into(), t)])
            }
            k => Err(bad(format!("`{k}` checkpoints hold no word embeddings"))),
        }
    }
}

fn check_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        Err(bad(format!("{what} `{s}` must be a non-empty token without whitespace")))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// BiCVM

pub fn bicvm_to_checkpoint(model: &BicvmModel, seed: u64) -> Checkpoint {
    let mut ck = Checkpoint::new("bicvm", seed);
    let c = &model.config;
    ck.set("dim", c.dim);
    ck.set("margin", format!("{:.16e}", c.margin));
    ck.set("noise", c.noise);
    ck.set("lambda", format!("{:.16e}", c.lambda));
    ck.set("doc_cvm", c.doc_cvm);
    ck.set("init_variance", format!("{:.16e}", c.init_variance));
    let names: Vec<String> = model.languages().iter().map(|l| l.name.clone()).collect();
    ck.lists.insert("languages".into(), names);
    for l in model.languages() {
        ck.set(&format!("cvm.{}", l.name), l.cvm);
        ck.lists.insert(format!("vocab.{}", l.name), l.vocab.words().to_vec());
    }
    ck.put_params(model.params());
    ck
}

pub fn bicvm_from_checkpoint(ck: &Checkpoint) -> Result<BicvmModel> {
    ck.expect_kind("bicvm")?;
    let config = BicvmConfig {
        dim: ck.parse("dim")?,
        margin: ck.parse("margin")?,
        noise: ck.parse("noise")?,
        lambda: ck.parse("lambda")?,
        cvm: Cvm::Add,
        doc_cvm: ck.parse("doc_cvm")?,
        init_variance: ck.parse("init_variance")?,
    };
    let langs = ck.list("languages")?;
    let names: Vec<String> = langs.iter().map(|l| format!("E.{l}")).collect();
    ck.check_tensor_names(names.iter().map(String::as_str))?;
    let tables = langs
        .iter()
        .map(|l| {
            let vocab = Vocab::from_words(ck.list(&format!("vocab.{l}"))?);
            Ok((l.clone(), vocab, ck.tensor(&format!("E.{l}"))?.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = BicvmModel::from_tables(config, tables)?;
    for (i, l) in langs.iter().enumerate() {
        model.set_cvm(LangId(i), ck.parse(&format!("cvm.{l}"))?);
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// CCAE

pub fn ccae_to_checkpoint(model: &CcaeModel, seed: u64) -> Checkpoint {
    let mut ck = Checkpoint::new("ccae", seed);
    ck.set("model", model.kind());
    ck.set("dim", crate::treegrad::Composer::dim(model));
    ck.set("label_dim", model.label_dim());
    ck.lists.insert("vocab".into(), model.vocab().words().to_vec());
    ck.lists.insert("combinators".into(), model.inventory().combinators().to_vec());
    ck.lists.insert("categories".into(), model.inventory().categories().to_vec());
    ck.put_params(crate::treegrad::Composer::params(model));
    ck
}

pub fn ccae_from_checkpoint(ck: &Checkpoint) -> Result<CcaeModel> {
    ck.expect_kind("ccae")?;
    let kind: CcaeKind = ck.get("model")?.parse()?;
    let label_dim: usize = ck.parse("label_dim")?;
    let vocab = Vocab::from_words(ck.list("vocab")?);
    let inv = CcgInventory::new(
        ck.list("combinators")?.iter().map(String::as_str),
        ck.list("categories")?.iter().map(String::as_str),
    )?;
    let lexicon = ck.tensor("L")?.clone();
    let mut model = CcaeModel::with_lexicon(kind, label_dim, inv, vocab, lexicon, &mut RngStream::new(0))?;
    let params = ck.take_params(crate::treegrad::Composer::params(&model))?;
    model.set_params(params)?;
    Ok(model)
}

// ---------------------------------------------------------------------------
// Frame identification

fn put_frame_lexicon(ck: &mut Checkpoint, lex: &FrameLexicon) {
    ck.lists.insert("frames".into(), lex.frames.words().to_vec());
    let units = lex
        .units()
        .map(|(u, fs)| {
            let ids: Vec<String> = fs.iter().map(|f| f.to_string()).collect();
            format!("{u}\t{}", ids.join(","))
        })
        .collect();
    ck.lists.insert("units".into(), units);
}

fn take_frame_lexicon(ck: &Checkpoint) -> Result<FrameLexicon> {
    let frames = ck.list("frames")?;
    let mut lex = FrameLexicon::new();
    for f in frames {
        lex.frames.add(f);
    }
    for entry in ck.list("units")? {
        let (u, ids) = entry
            .split_once('\t')
            .ok_or_else(|| bad(format!("bad unit entry `{entry}`")))?;
        for id in ids.split(',').filter(|s| !s.is_empty()) {
            let id: usize = id.parse().map_err(|_| bad(format!("bad frame id in `{entry}`")))?;
            let name = frames
                .get(id)
                .ok_or_else(|| bad(format!("frame id {id} out of range in `{entry}`")))?;
            lex.add(u, name);
        }
    }
    Ok(lex)
}

pub fn wsabie_to_checkpoint(model: &WsabieModel, blocks: &BlockInventory, seed: u64) -> Checkpoint {
    let mut ck = Checkpoint::new("wsabie", seed);
    ck.set("margin", format!("{:.16e}", model.margin()));
    ck.set("block_dim", blocks.dim());
    ck.lists.insert("blocks".into(), blocks.labels().to_vec());
    put_frame_lexicon(&mut ck, model.lexicon());
    ck.put_params(model.params());
    ck
}

pub fn wsabie_from_checkpoint(ck: &Checkpoint) -> Result<(WsabieModel, BlockInventory)> {
    ck.expect_kind("wsabie")?;
    ck.check_tensor_names(["M", "Y"])?;
    let blocks = BlockInventory::new(ck.list("blocks")?, ck.parse("block_dim")?);
    let model = WsabieModel::from_parts(
        ck.tensor("M")?.clone(),
        ck.tensor("Y")?.clone(),
        ck.parse("margin")?,
        take_frame_lexicon(ck)?,
    )?;
    if model.input_dim() != blocks.input_dim() {
        return Err(bad("projection width does not match the block inventory"));
    }
    Ok((model, blocks))
}

pub fn loglinear_to_checkpoint(model: &LoglinearModel, seed: u64) -> Checkpoint {
    let mut ck = Checkpoint::new("loglinear", seed);
    put_frame_lexicon(&mut ck, model.lexicon());
    ck.lists.insert("features".into(), model.feature_keys());
    ck.tensors.insert(
        "psi".into(),
        DenseMatrix::from_vec(model.weights.len(), 1, model.weights.clone()).expect("column vector"),
    );
    ck
}

pub fn loglinear_from_checkpoint(ck: &Checkpoint) -> Result<LoglinearModel> {
    ck.expect_kind("loglinear")?;
    ck.check_tensor_names(["psi"])?;
    let lex = take_frame_lexicon(ck)?;
    let psi = ck.tensor("psi")?.as_slice().to_vec();
    LoglinearModel::from_keys(ck.list("features")?, psi, lex).map_err(|e| bad(e.to_string()))
}
