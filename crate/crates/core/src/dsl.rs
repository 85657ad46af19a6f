//! The `.rtpl` workload format and the JSON schedule format.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::*;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Name(String),
    Sym(&'static str),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (l, cl) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Name(chars[start..i].iter().collect()),
                line: l,
                col: cl,
            });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let sym = match two.as_str() {
            "->" => Some("->"),
            "!=" => Some("!="),
            _ => None,
        };
        let sym = match sym {
            Some(s) => s,
            None => match c {
                '{' => "{",
                '}' => "}",
                '(' => "(",
                ')' => ")",
                ',' => ",",
                ':' => ":",
                '=' => "=",
                _ => {
                    return Err(Error::Parse {
                        line,
                        col,
                        msg: format!("unexpected character {c:?}"),
                    })
                }
            },
        };
        i += sym.len();
        col += sym.len();
        out.push(Token {
            tok: Tok::Sym(sym),
            line: l,
            col: cl,
        });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.end, |t| (t.line, t.col))
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (line, col) = self.here();
        Err(Error::Parse {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_name(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Name(n)) if n == s)
    }

    fn peek_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn sym(&mut self, s: &str) -> Result<()> {
        if self.peek_sym(s) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{s}'"))
        }
    }

    fn name(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Name(n)) => {
                let n = n.clone();
                self.pos += 1;
                Ok(n)
            }
            _ => self.err("expected a name"),
        }
    }

    fn keyword(&mut self, k: &str) -> Result<()> {
        if self.peek_name(k) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{k}'"))
        }
    }

    fn name_list(&mut self, open: &str, close: &str, allow_empty: bool) -> Result<Vec<String>> {
        self.sym(open)?;
        let mut v = Vec::new();
        if allow_empty && self.peek_sym(close) {
            self.pos += 1;
            return Ok(v);
        }
        loop {
            v.push(self.name()?);
            if self.peek_sym(",") {
                self.pos += 1;
                continue;
            }
            self.sym(close)?;
            return Ok(v);
        }
    }
}

enum RawConstraint {
    Eq { target: String, func: String, source: String, at: (usize, usize) },
    Neq { x: String, y: String, at: (usize, usize) },
}

pub fn parse_workload(text: &str) -> Result<Workload> {
    let toks = lex(text)?;
    let end = toks.last().map_or((1, 1), |t| (t.line, t.col + 1));
    let mut p = Parser { toks, pos: 0, end };
    let mut schema = Schema::default();
    p.keyword("schema")?;
    p.sym("{")?;
    let mut pending_fns = Vec::new();
    while !p.peek_sym("}") {
        if p.peek_name("relation") {
            p.pos += 1;
            let name = p.name()?;
            let attrs = p.name_list("(", ")", false)?;
            schema.relations.push(Relation { name, attrs });
        } else if p.peek_name("function") {
            p.pos += 1;
            let at = p.here();
            let name = p.name()?;
            p.sym(":")?;
            let dom = p.name()?;
            p.sym("->")?;
            let range = p.name()?;
            pending_fns.push((name, dom, range, at));
        } else {
            return p.err("expected 'relation', 'function' or '}'");
        }
    }
    p.sym("}")?;
    for (name, dom, range, (line, col)) in pending_fns {
        let lookup = |r: &str| {
            schema.relation(r).ok_or_else(|| Error::Parse {
                line,
                col,
                msg: format!("unknown relation {r}"),
            })
        };
        let (dom, range) = (lookup(&dom)?, lookup(&range)?);
        schema.functions.push(Function { name, dom, range });
    }
    schema.validate()?;

    let mut templates = Vec::new();
    while p.peek().is_some() {
        p.keyword("template")?;
        let name = p.name()?;
        p.sym("{")?;
        let mut t = Template {
            name,
            vars: Vec::new(),
            ops: Vec::new(),
            eqs: Vec::new(),
            neqs: Vec::new(),
        };
        let mut raw = Vec::new();
        while !p.peek_sym("}") {
            let at = p.here();
            let kw = p.name()?;
            match kw.as_str() {
                "R" | "W" | "U" => {
                    if !raw.is_empty() {
                        return Err(Error::Parse {
                            line: at.0,
                            col: at.1,
                            msg: "operations must precede constraints".into(),
                        });
                    }
                    let var = p.name()?;
                    p.sym(":")?;
                    let rel_at = p.here();
                    let rel_name = p.name()?;
                    let Some(rel) = schema.relation(&rel_name) else {
                        return Err(Error::Parse {
                            line: rel_at.0,
                            col: rel_at.1,
                            msg: format!("unknown relation {rel_name}"),
                        });
                    };
                    let set_at = p.here();
                    let first = p.name_list("{", "}", true)?;
                    let second = if kw == "U" { Some(p.name_list("{", "}", true)?) } else { None };
                    let to_set = |names: &[String]| -> Result<AttrSet> {
                        let mut s = AttrSet::EMPTY;
                        for n in names {
                            let Some(i) = schema.relations[rel].attr_index(n) else {
                                return Err(Error::Parse {
                                    line: set_at.0,
                                    col: set_at.1,
                                    msg: format!("unknown attribute {rel_name}.{n}"),
                                });
                            };
                            s.insert(i);
                        }
                        Ok(s)
                    };
                    let (kind, read_set, write_set) = match kw.as_str() {
                        "R" => (OpKind::R, to_set(&first)?, AttrSet::EMPTY),
                        "W" => (OpKind::W, AttrSet::EMPTY, to_set(&first)?),
                        _ => (OpKind::U, to_set(&first)?, to_set(second.as_deref().unwrap())?),
                    };
                    let v = match t.var(&var) {
                        Some(v) if t.vars[v].rel != rel => {
                            return Err(Error::Parse {
                                line: rel_at.0,
                                col: rel_at.1,
                                msg: format!("variable {var} used with two types"),
                            })
                        }
                        Some(v) => v,
                        None => {
                            t.vars.push(Variable { name: var, rel });
                            t.vars.len() - 1
                        }
                    };
                    if t.ops.iter().any(|o| o.var == v && o.kind == kind) {
                        return Err(Error::Parse {
                            line: at.0,
                            col: at.1,
                            msg: format!("duplicate {kind} operation over {}", t.vars[v].name),
                        });
                    }
                    t.ops.push(TemplateOp {
                        kind,
                        var: v,
                        read_set,
                        write_set,
                    });
                }
                "eq" => {
                    let target = p.name()?;
                    p.sym("=")?;
                    let func = p.name()?;
                    p.sym("(")?;
                    let source = p.name()?;
                    p.sym(")")?;
                    raw.push(RawConstraint::Eq { target, func, source, at });
                }
                "neq" => {
                    let x = p.name()?;
                    p.sym("!=")?;
                    let y = p.name()?;
                    raw.push(RawConstraint::Neq { x, y, at });
                }
                _ => {
                    return Err(Error::Parse {
                        line: at.0,
                        col: at.1,
                        msg: format!("expected an operation or constraint, found {kw}"),
                    })
                }
            }
        }
        p.sym("}")?;
        resolve_constraints(&schema, &mut t, raw)?;
        templates.push(t);
    }
    let w = Workload { schema, templates };
    w.validate()?;
    Ok(w)
}

/// Variables that occur only in equality constraints take their type from
/// the function signature.
fn resolve_constraints(schema: &Schema, t: &mut Template, raw: Vec<RawConstraint>) -> Result<()> {
    let perr = |at: (usize, usize), msg: String| Error::Parse {
        line: at.0,
        col: at.1,
        msg,
    };
    for c in &raw {
        let RawConstraint::Eq { target, func, source, at } = c else { continue };
        let Some(f) = schema.function(func) else {
            return Err(perr(*at, format!("unknown function {func}")));
        };
        let (dom, range) = (schema.functions[f].dom, schema.functions[f].range);
        let mut var_of = |name: &str, ty: usize| -> Result<usize> {
            match t.var(name) {
                Some(v) if t.vars[v].rel != ty => Err(perr(
                    *at,
                    format!("type mismatch: {name} is not a {}", schema.relations[ty].name),
                )),
                Some(v) => Ok(v),
                None => {
                    t.vars.push(Variable {
                        name: name.to_string(),
                        rel: ty,
                    });
                    Ok(t.vars.len() - 1)
                }
            }
        };
        let target = var_of(target, range)?;
        let source = var_of(source, dom)?;
        t.eqs.push(EqConstraint { target, func: f, source });
    }
    for c in &raw {
        let RawConstraint::Neq { x, y, at } = c else { continue };
        let (Some(a), Some(b)) = (t.var(x), t.var(y)) else {
            return Err(perr(*at, format!("unknown variable in {x} != {y}")));
        };
        if t.vars[a].rel != t.vars[b].rel {
            return Err(perr(*at, format!("type mismatch in {x} != {y}")));
        }
        t.neqs.push((a, b));
    }
    Ok(())
}

pub fn emit_workload(w: &Workload) -> String {
    let mut s = String::new();
    let sc = &w.schema;
    s.push_str("schema {\n");
    for r in &sc.relations {
        let _ = writeln!(s, "  relation {}({})", r.name, r.attrs.join(", "));
    }
    for f in &sc.functions {
        let _ = writeln!(
            s,
            "  function {} : {} -> {}",
            f.name, sc.relations[f.dom].name, sc.relations[f.range].name
        );
    }
    s.push_str("}\n");
    for t in &w.templates {
        let _ = writeln!(s, "\ntemplate {} {{", t.name);
        for op in &t.ops {
            let v = &t.vars[op.var];
            let rel = &sc.relations[v.rel];
            let ordered = |a: AttrSet| {
                a.iter().map(|i| rel.attrs[i].clone()).collect::<Vec<_>>().join(",")
            };
            match op.kind {
                OpKind::R => {
                    let _ = writeln!(s, "  R {}:{}{{{}}}", v.name, rel.name, ordered(op.read_set));
                }
                OpKind::W => {
                    let _ = writeln!(s, "  W {}:{}{{{}}}", v.name, rel.name, ordered(op.write_set));
                }
                OpKind::U => {
                    let _ = writeln!(
                        s,
                        "  U {}:{}{{{}}}{{{}}}",
                        v.name,
                        rel.name,
                        ordered(op.read_set),
                        ordered(op.write_set)
                    );
                }
            }
        }
        for c in &t.eqs {
            let _ = writeln!(
                s,
                "  eq {} = {}({})",
                t.vars[c.target].name, sc.functions[c.func].name, t.vars[c.source].name
            );
        }
        for &(x, y) in &t.neqs {
            let _ = writeln!(s, "  neq {} != {}", t.vars[x].name, t.vars[y].name);
        }
        s.push_str("}\n");
    }
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpDoc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuple: Option<String>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub ty: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub read: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub write: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxDoc {
    pub id: u32,
    /// Operations in transaction order, ending with `{"kind": "C"}`.
    pub ops: Vec<OpDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VersionRef {
    Op([u32; 2]),
    Initial(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub read: [u32; 2],
    pub write: VersionRef,
}

/// Operations are referenced as `[transaction id, index within transaction]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleDocument {
    pub transactions: Vec<TxDoc>,
    pub order: Vec<[u32; 2]>,
    pub version_fn: Vec<VersionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version_order: Option<BTreeMap<String, Vec<[u32; 2]>>>,
}

pub fn parse_schedule(json: &str) -> Result<Schedule> {
    let doc: ScheduleDocument =
        serde_json::from_str(json).map_err(|e| Error::Schedule(format!("json: {e}")))?;
    schedule_from_document(&doc)
}

pub fn schedule_from_document(doc: &ScheduleDocument) -> Result<Schedule> {
    let bad = |m: String| Error::Schedule(m);
    let mut txs: HashMap<u32, &TxDoc> = HashMap::new();
    for t in &doc.transactions {
        if t.id == 0 || txs.insert(t.id, t).is_some() {
            return Err(bad(format!("bad or duplicate transaction id {}", t.id)));
        }
        match t.ops.last() {
            Some(o) if o.kind == "C" => {}
            _ => return Err(bad(format!("T{} must end with a commit", t.id))),
        }
        if t.ops[..t.ops.len() - 1].iter().any(|o| o.kind == "C") {
            return Err(bad(format!("T{} commits before its last operation", t.id)));
        }
    }
    let mut ops = vec![ConcreteOp::init()];
    let mut pos_of: HashMap<[u32; 2], usize> = HashMap::new();
    let mut next: HashMap<u32, u32> = HashMap::new();
    for &r in &doc.order {
        let Some(t) = txs.get(&r[0]) else {
            return Err(bad(format!("order references unknown T{}", r[0])));
        };
        let n = next.entry(r[0]).or_insert(0);
        if r[1] != *n {
            return Err(bad(format!("order violates the sequence of T{}", r[0])));
        }
        *n += 1;
        let o = &t.ops[r[1] as usize];
        let kind = match o.kind.as_str() {
            "R" => ConcreteKind::R,
            "W" => ConcreteKind::W,
            "U" => ConcreteKind::U,
            "C" => ConcreteKind::Commit,
            k => return Err(bad(format!("unknown operation kind {k}"))),
        };
        let tuple = match (kind, &o.tuple, &o.ty) {
            (ConcreteKind::Commit, None, None) => None,
            (ConcreteKind::Commit, _, _) => return Err(bad("commit with a tuple".into())),
            (_, Some(id), Some(ty)) => Some(Tuple::new(id, ty)),
            _ => return Err(bad(format!("operation {r:?} lacks tuple or type"))),
        };
        pos_of.insert(r, ops.len());
        ops.push(ConcreteOp {
            tx: r[0],
            kind,
            tuple,
            read_set: o.read.iter().cloned().collect(),
            write_set: o.write.iter().cloned().collect(),
        });
    }
    for t in &doc.transactions {
        if next.get(&t.id).copied().unwrap_or(0) as usize != t.ops.len() {
            return Err(bad(format!("order omits operations of T{}", t.id)));
        }
    }
    let mut version_fn = BTreeMap::new();
    for e in &doc.version_fn {
        let Some(&a) = pos_of.get(&e.read) else {
            return Err(bad(format!("dangling version-function read {:?}", e.read)));
        };
        let w = match &e.write {
            VersionRef::Initial(s) if s == "initial" => 0,
            VersionRef::Initial(s) => return Err(bad(format!("bad version reference {s}"))),
            VersionRef::Op(r) => *pos_of
                .get(r)
                .ok_or_else(|| bad(format!("dangling version-function write {r:?}")))?,
        };
        if version_fn.insert(a, w).is_some() {
            return Err(bad(format!("read {:?} has two versions", e.read)));
        }
    }
    let mut version_order = commit_version_order(&ops);
    if let Some(vo) = &doc.version_order {
        for (t, refs) in vo {
            let mut v = vec![0];
            for r in refs {
                v.push(*pos_of.get(r).ok_or_else(|| bad(format!("dangling version-order entry {r:?}")))?);
            }
            version_order.insert(Arc::from(t.as_str()), v);
        }
    }
    Schedule::new(ops, version_order, version_fn)
}

pub fn schedule_to_document(s: &Schedule) -> ScheduleDocument {
    let mut txs: BTreeMap<u32, TxDoc> = BTreeMap::new();
    let mut refs: Vec<[u32; 2]> = vec![[0, 0]];
    let mut tx_order = Vec::new();
    for op in &s.ops[1..] {
        let t = txs.entry(op.tx).or_insert_with(|| {
            tx_order.push(op.tx);
            TxDoc { id: op.tx, ops: Vec::new() }
        });
        refs.push([op.tx, t.ops.len() as u32]);
        t.ops.push(OpDoc {
            kind: match op.kind {
                ConcreteKind::R => "R",
                ConcreteKind::W => "W",
                ConcreteKind::U => "U",
                _ => "C",
            }
            .into(),
            tuple: op.tuple.as_ref().map(|t| t.id.to_string()),
            ty: op.tuple.as_ref().map(|t| t.rel.to_string()),
            read: op.read_set.iter().cloned().collect(),
            write: op.write_set.iter().cloned().collect(),
        });
    }
    let version_fn = s
        .version_fn
        .iter()
        .map(|(&a, &w)| VersionEntry {
            read: refs[a],
            write: if w == 0 {
                VersionRef::Initial("initial".into())
            } else {
                VersionRef::Op(refs[w])
            },
        })
        .collect();
    let default = commit_version_order(&s.ops);
    let version_order = if default == s.version_order {
        None
    } else {
        Some(
            s.version_order
                .iter()
                .map(|(t, v)| (t.to_string(), v[1..].iter().map(|&i| refs[i]).collect()))
                .collect(),
        )
    };
    ScheduleDocument {
        transactions: tx_order.into_iter().map(|id| txs.remove(&id).unwrap()).collect(),
        order: refs[1..].to_vec(),
        version_fn,
        version_order,
    }
}

pub fn emit_schedule(s: &Schedule) -> String {
    serde_json::to_string_pretty(&schedule_to_document(s)).expect("schedule documents serialize")
}

/// Attribute names appearing in a schedule document, per type; used to
/// sanity check a schedule against a workload schema.
pub fn schedule_types(s: &Schedule) -> BTreeMap<String, BTreeSet<String>> {
    let mut m: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for op in &s.ops {
        if let Some(t) = &op.tuple {
            let e = m.entry(t.rel.to_string()).or_default();
            e.extend(op.read_set.iter().cloned());
            e.extend(op.write_set.iter().cloned());
        }
    }
    m
}
