//! Readers and writers for the plain-text corpus, tree, frame and embedding
//! formats.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::bicvm::{AlignedDocument, ParallelCorpus, Sentence};
use crate::error::{Error, Result};
use crate::frameid::{FrameInstance, FrameLexicon};
use crate::lexicon::{EmbeddingTable, UnknownPolicy, Vocab};
use crate::numerics::DenseMatrix;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write `contents` next to `path` and rename it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.flush())
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Embeddings

/// Header `V d`, then one `word v1 … vd` line per entry. Later duplicates
/// replace earlier ones.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    parse_embeddings(&read(path)?, path)
}

pub fn parse_embeddings(text: &str, path: &Path) -> Result<EmbeddingTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing `V d` header"))?;
    let nums: Vec<&str> = header.split_whitespace().collect();
    let (v, d) = match nums.as_slice() {
        [v, d] => (
            v.parse::<usize>().map_err(|_| Error::parse(path, hl + 1, "bad vocabulary size"))?,
            d.parse::<usize>().map_err(|_| Error::parse(path, hl + 1, "bad dimension"))?,
        ),
        _ => return Err(Error::parse(path, hl + 1, "header must be `V d`")),
    };
    let mut vocab = Vocab::new();
    let mut data: Vec<f64> = Vec::with_capacity(v * d);
    let mut entries = 0;
    let mut duplicates = 0;
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-blank line");
        let values = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(path, i + 1, format!("non-numeric value for `{word}`")))?;
        if values.len() != d {
            return Err(Error::parse(
                path,
                i + 1,
                format!("`{word}` has {} values, expected {d}", values.len()),
            ));
        }
        entries += 1;
        match vocab.get(word) {
            Some(id) => {
                duplicates += 1;
                data[id * d..(id + 1) * d].copy_from_slice(&values);
            }
            None => {
                vocab.add(word);
                data.extend(values);
            }
        }
    }
    if entries != v {
        return Err(Error::parse(
            path,
            text.lines().count(),
            format!("header announces {v} entries, found {entries}"),
        ));
    }
    if duplicates > 0 {
        log::warn!("embeddings path={} duplicates={duplicates} policy=last-wins", path.display());
    }
    EmbeddingTable::new(vocab.clone(), DenseMatrix::from_vec(vocab.len(), d, data)?)
}

pub fn format_embeddings(table: &EmbeddingTable) -> String {
    let mut out = format!("{} {}\n", table.len(), table.dim());
    for (i, w) in table.vocab().words().iter().enumerate() {
        out.push_str(w);
        for v in table.row(i) {
            out.push_str(&format!(" {v:.17e}"));
        }
        out.push('\n');
    }
    out
}

pub fn save_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    write_atomic(path, &format_embeddings(table))
}

// ---------------------------------------------------------------------------
// Parallel sentences and documents

pub type Tokens = Vec<String>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawParallel {
    pub pairs: Vec<(Tokens, Tokens)>,
    /// Pairs removed because one side was empty.
    pub dropped: usize,
}

fn tokens(line: &str) -> Tokens {
    line.split_whitespace().map(str::to_string).collect()
}

/// Line-aligned sentence files. Pairs with an empty side are dropped from both.
pub fn load_parallel(path_a: &Path, path_b: &Path) -> Result<RawParallel> {
    let a = read(path_a)?;
    let b = read(path_b)?;
    let la: Vec<&str> = a.lines().collect();
    let lb: Vec<&str> = b.lines().collect();
    if la.len() != lb.len() {
        return Err(Error::Alignment(format!(
            "{} has {} lines but {} has {}",
            path_a.display(),
            la.len(),
            path_b.display(),
            lb.len()
        )));
    }
    let mut out = RawParallel::default();
    for (x, y) in la.iter().zip(&lb) {
        let (tx, ty) = (tokens(x), tokens(y));
        if tx.is_empty() || ty.is_empty() {
            out.dropped += 1;
        } else {
            out.pairs.push((tx, ty));
        }
    }
    if out.dropped > 0 {
        log::info!(
            "parallel src={} tgt={} kept={} dropped_empty={}",
            path_a.display(),
            path_b.display(),
            out.pairs.len(),
            out.dropped
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawDocument {
    pub labels: Vec<String>,
    pub sentences: Vec<Tokens>,
}

/// Blank-line separated documents; each starts with a line of
/// tab-separated labels followed by one sentence per line.
pub fn load_docs(path: &Path) -> Result<Vec<RawDocument>> {
    parse_docs(&read(path)?, path)
}

pub fn parse_docs(text: &str, path: &Path) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    let mut current: Option<(usize, RawDocument)> = None;
    let finish = |cur: Option<(usize, RawDocument)>, docs: &mut Vec<RawDocument>| -> Result<()> {
        if let Some((line, d)) = cur {
            if d.sentences.is_empty() {
                return Err(Error::parse(path, line, "document has labels but no sentences"));
            }
            docs.push(d);
        }
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            finish(current.take(), &mut docs)?;
            continue;
        }
        match current.as_mut() {
            None => {
                let labels: Vec<String> = line
                    .split('\t')
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_string)
                    .collect();
                current = Some((i + 1, RawDocument { labels, sentences: Vec::new() }));
            }
            Some((_, d)) => d.sentences.push(tokens(line)),
        }
    }
    finish(current, &mut docs)?;
    Ok(docs)
}

/// Two document files with the same number of documents; labels come from
/// the first.
pub fn load_parallel_docs(path_a: &Path, path_b: &Path) -> Result<Vec<(RawDocument, RawDocument)>> {
    let a = load_docs(path_a)?;
    let b = load_docs(path_b)?;
    if a.len() != b.len() {
        return Err(Error::Alignment(format!(
            "{} has {} documents but {} has {}",
            path_a.display(),
            a.len(),
            path_b.display(),
            b.len()
        )));
    }
    Ok(a.into_iter().zip(b).collect())
}

/// Map tokens to ids, growing `vocab` when `grow` is set.
pub fn index_tokens(toks: &[String], vocab: &mut Vocab, grow: bool, policy: UnknownPolicy) -> Result<Sentence> {
    toks.iter()
        .map(|t| if grow { Ok(vocab.add(t)) } else { vocab.lookup(t, policy) })
        .collect()
}

pub fn index_parallel(
    raw: &RawParallel,
    src_lang: &str,
    tgt_lang: &str,
    src_vocab: &mut Vocab,
    tgt_vocab: &mut Vocab,
) -> Result<ParallelCorpus> {
    let pairs = raw
        .pairs
        .iter()
        .map(|(a, b)| {
            Ok((
                index_tokens(a, src_vocab, true, UnknownPolicy::Error)?,
                index_tokens(b, tgt_vocab, true, UnknownPolicy::Error)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    ParallelCorpus::new(src_lang, tgt_lang, pairs)
}

pub fn index_parallel_docs(
    raw: &[(RawDocument, RawDocument)],
    src_lang: &str,
    tgt_lang: &str,
    src_vocab: &mut Vocab,
    tgt_vocab: &mut Vocab,
) -> Result<ParallelCorpus> {
    let docs = raw
        .iter()
        .map(|(a, b)| {
            Ok(AlignedDocument {
                labels: a.labels.clone(),
                src: a
                    .sentences
                    .iter()
                    .map(|s| index_tokens(s, src_vocab, true, UnknownPolicy::Error))
                    .collect::<Result<_>>()?,
                tgt: b
                    .sentences
                    .iter()
                    .map(|s| index_tokens(s, tgt_vocab, true, UnknownPolicy::Error))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ParallelCorpus::from_documents(src_lang, tgt_lang, docs)
}

// ---------------------------------------------------------------------------
// Trees

/// A bracketed derivation before its tokens are resolved to ids.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedTree {
    Leaf {
        category: String,
        word: String,
    },
    Internal {
        rule: String,
        category: String,
        left: Box<ParsedTree>,
        right: Box<ParsedTree>,
    },
}

impl fmt::Display for ParsedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParsedTree::Leaf { category, word } => write!(f, "(lex:{category} {word})"),
            ParsedTree::Internal {
                rule,
                category,
                left,
                right,
            } => write!(f, "({rule}:{category} {left} {right})"),
        }
    }
}

impl ParsedTree {
    pub fn leaves(&self) -> Vec<&str> {
        match self {
            ParsedTree::Leaf { word, .. } => vec![word.as_str()],
            ParsedTree::Internal { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }
}

/// A tree line with its optional `label<TAB>` prefix (comma-separated reals).
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRecord {
    pub label: Option<Vec<f64>>,
    pub tree: ParsedTree,
}

struct TreeParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> TreeParser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn take_while(&mut self, stop: impl Fn(u8) -> bool) -> &'a str {
        let start = self.pos;
        while self.pos < self.s.len() && !stop(self.s[self.pos]) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).expect("split on ASCII boundaries")
    }

    fn expect(&mut self, c: u8) -> std::result::Result<(), String> {
        self.skip_ws();
        if self.pos < self.s.len() && self.s[self.pos] == c {
            self.pos += 1;
            Ok(())
        } else if self.pos >= self.s.len() {
            Err(format!("unbalanced brackets: expected `{}` at end of line", c as char))
        } else {
            Err(format!(
                "expected `{}` at column {}, found `{}`",
                c as char,
                self.pos + 1,
                self.s[self.pos] as char
            ))
        }
    }

    fn node(&mut self) -> std::result::Result<ParsedTree, String> {
        self.expect(b'(')?;
        let header = self.take_while(|c| c.is_ascii_whitespace());
        if header.is_empty() {
            return Err(format!("missing node header at column {}", self.pos + 1));
        }
        if header.starts_with('(') {
            return Err(format!("unbalanced brackets: unexpected `(` at column {}", self.pos - header.len() + 1));
        }
        let (head, category) = header
            .split_once(':')
            .ok_or_else(|| format!("node header `{header}` lacks `:`"))?;
        if !head.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(format!("bad rule name `{head}`"));
        }
        if category.is_empty() {
            return Err(format!("node header `{header}` lacks a category"));
        }
        self.skip_ws();
        let tree = if head == "lex" {
            let word = self.take_while(|c| c.is_ascii_whitespace() || c == b')');
            if word.is_empty() {
                return Err(format!("leaf `{header}` has no word"));
            }
            ParsedTree::Leaf {
                category: category.to_string(),
                word: word.to_string(),
            }
        } else {
            if head.is_empty() {
                return Err(format!("node header `{header}` lacks a rule"));
            }
            let left = self.node()?;
            let right = self.node()?;
            ParsedTree::Internal {
                rule: head.to_string(),
                category: category.to_string(),
                left: Box::new(left),
                right: Box::new(right),
            }
        };
        self.expect(b')')?;
        Ok(tree)
    }
}

/// Parse one bracketed tree; trailing text is an error.
pub fn parse_tree(line: &str) -> std::result::Result<ParsedTree, String> {
    let mut p = TreeParser {
        s: line.as_bytes(),
        pos: 0,
    };
    let t = p.node()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(format!("unbalanced brackets: trailing text at column {}", p.pos + 1));
    }
    Ok(t)
}

pub fn parse_tree_record(line: &str) -> std::result::Result<TreeRecord, String> {
    let (label, body) = match line.split_once('\t') {
        Some((l, b)) if !l.trim_start().starts_with('(') => {
            let vals = l
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| format!("bad label `{l}`"))?;
            (Some(vals), b)
        }
        _ => (None, line),
    };
    Ok(TreeRecord {
        label,
        tree: parse_tree(body.trim())?,
    })
}

/// One tree per non-blank line.
pub fn load_trees(path: &Path) -> Result<Vec<TreeRecord>> {
    parse_trees(&read(path)?, path)
}

pub fn parse_trees(text: &str, path: &Path) -> Result<Vec<TreeRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_tree_record(l).map_err(|m| Error::parse(path, i + 1, m)))
        .collect()
}

pub fn format_tree_record(r: &TreeRecord) -> String {
    match &r.label {
        Some(l) => {
            let ls: Vec<String> = l.iter().map(|v| v.to_string()).collect();
            format!("{}\t{}", ls.join(","), r.tree)
        }
        None => r.tree.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Frames

/// `lexical_unit<TAB>frame<TAB>slot:w,w;slot:w`. A frame of `_` or an empty
/// field means unknown.
pub fn parse_frame_line(line: &str) -> std::result::Result<FrameInstance, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 2 || fields.len() > 3 {
        return Err(format!("expected 2 or 3 tab-separated fields, found {}", fields.len()));
    }
    let unit = fields[0].trim();
    if unit.is_empty() {
        return Err("empty lexical unit".into());
    }
    let frame = match fields[1].trim() {
        "" | "_" => None,
        f => Some(f.to_string()),
    };
    let mut slots = Vec::new();
    if let Some(spec) = fields.get(2) {
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (label, words) = part
                .split_once(':')
                .ok_or_else(|| format!("slot `{part}` lacks `:`"))?;
            let words: Vec<String> = words
                .split(',')
                .map(str::trim)
                .filter(|w| !w.is_empty())
                .map(str::to_string)
                .collect();
            if label.is_empty() || words.is_empty() {
                return Err(format!("slot `{part}` needs a label and at least one word"));
            }
            slots.push((label.to_string(), words));
        }
    }
    Ok(FrameInstance {
        lexical_unit: unit.to_string(),
        frame,
        slots,
    })
}

pub fn load_frames(path: &Path) -> Result<Vec<FrameInstance>> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_frame_line(l).map_err(|m| Error::parse(path, i + 1, m)))
        .collect()
}

pub fn format_frame_instance(inst: &FrameInstance) -> String {
    let slots: Vec<String> = inst
        .slots
        .iter()
        .map(|(l, ws)| format!("{l}:{}", ws.join(",")))
        .collect();
    format!(
        "{}\t{}\t{}",
        inst.lexical_unit,
        inst.frame.as_deref().unwrap_or("_"),
        slots.join(";")
    )
}

/// `lexical_unit<TAB>frame[,frame…]` per line.
pub fn load_frame_lexicon(path: &Path) -> Result<FrameLexicon> {
    parse_frame_lexicon(&read(path)?, path)
}

pub fn parse_frame_lexicon(text: &str, path: &Path) -> Result<FrameLexicon> {
    let mut lex = FrameLexicon::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (unit, frames) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `unit<TAB>frames`"))?;
        let frames: Vec<&str> = frames.split(',').map(str::trim).filter(|f| !f.is_empty()).collect();
        if unit.trim().is_empty() || frames.is_empty() {
            return Err(Error::parse(path, i + 1, "lexicon entry needs a unit and a frame"));
        }
        for f in frames {
            lex.add(unit.trim(), f);
        }
    }
    Ok(lex)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("<test>")
    }

    #[test]
    fn embeddings_format() {
        let t = parse_embeddings("2 3\na 1 2 3\nb 4 5 6\n", p()).unwrap();
        assert_eq!((t.len(), t.dim()), (2, 3));
        assert_eq!(t.vector("b").unwrap(), &[4.0, 5.0, 6.0]);
        let e = parse_embeddings("0 5\n", p()).unwrap();
        assert_eq!((e.len(), e.dim()), (0, 5));
        match parse_embeddings("2 3\na 1 2 3\nb 4 5\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let dup = parse_embeddings("2 1\na 1\na 2\n", p()).unwrap();
        assert_eq!(dup.len(), 1);
        assert_eq!(dup.vector("a").unwrap(), &[2.0]);
        let again = parse_embeddings(&format_embeddings(&t), p()).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn tree_round_trip() {
        let s = "(BA:S[dcl] (lex:NP john) (FA:S[dcl]\\NP (lex:(S[dcl]\\NP)/NP loves) (lex:NP mary)))";
        let t = parse_tree(s).unwrap();
        assert_eq!(t.to_string(), s);
        assert_eq!(t.leaves(), vec!["john", "loves", "mary"]);
        let r = parse_tree_record(&format!("1\t{s}")).unwrap();
        assert_eq!(r.label, Some(vec![1.0]));
        assert_eq!(format_tree_record(&r), format!("1\t{s}"));
    }

    #[test]
    fn tree_errors() {
        assert!(parse_tree("((FA:NP (lex:N a) (lex:N b))").is_err());
        assert!(parse_tree("(FA:NP (lex:N a) (lex:N b)").is_err());
        assert!(parse_tree("(FA:NP (lex:N a) (lex:N b)))").is_err());
        assert!(parse_tree("(lex:N )").is_err());
        assert!(parse_tree("(FA (lex:N a) (lex:N b))").is_err());
        match parse_trees("(lex:N a)\n((FA:NP (lex:N a) (lex:N b))\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn docs_format() {
        let text = "econ\tgov\nthe market fell\nprices rose\n\n\nsport\nthey won\n";
        let d = parse_docs(text, p()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].labels, vec!["econ", "gov"]);
        assert_eq!(d[0].sentences.len(), 2);
        assert_eq!(d[1].sentences[0], vec!["they", "won"]);
        assert!(parse_docs("lonely-label\n\nx\ny\n", p()).is_err());
    }

    #[test]
    fn frame_lines() {
        let f = parse_frame_line("buy.v\tCommerce_buy\tnsubj:john;dobj:the,car").unwrap();
        assert_eq!(f.frame.as_deref(), Some("Commerce_buy"));
        assert_eq!(f.slots[1], ("dobj".to_string(), vec!["the".to_string(), "car".to_string()]));
        assert_eq!(parse_frame_line(&format_frame_instance(&f)).unwrap(), f);
        let g = parse_frame_line("buy.v\t_\t").unwrap();
        assert!(g.frame.is_none() && g.slots.is_empty());
        // Only the first colon separates label and words.
        let h = parse_frame_line("x.n\tF\tprep:with:w").unwrap();
        assert_eq!(h.slots[0].0, "prep");
        assert_eq!(h.slots[0].1, vec!["with:w"]);
        assert!(parse_frame_line("buy.v").is_err());
        assert!(parse_frame_line("buy.v\tF\tnsubj:").is_err());
        let lx = parse_frame_lexicon("buy.v\tA,B\nsell.v\tB\n", p()).unwrap();
        assert_eq!(lx.confusion_set("buy.v").unwrap(), &[0, 1]);
        assert_eq!(lx.confusion_set("sell.v").unwrap(), &[1]);
    }
}
