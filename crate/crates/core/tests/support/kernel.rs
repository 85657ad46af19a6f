//! Definition-level oracles for conflict serializability and RC, and an
//! exhaustive enumerator of small schedules.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rcrobust::model::{is_conflict_serializable, is_rc_allowed, ConcreteOp, OpKind, Schedule, Tuple};

fn tuple_of(op: &ConcreteOp) -> Option<&str> {
    op.tuple.as_ref().map(|t| &*t.id)
}

fn inter(a: &BTreeSet<String>, b: &BTreeSet<String>) -> bool {
    a.iter().any(|x| b.contains(x))
}

/// Version-order rank; op0 precedes every write.
fn before(s: &Schedule, t: &str, x: usize, y: usize) -> bool {
    let rank = |w: usize| {
        if w == 0 {
            0
        } else {
            s.version_order[t].iter().position(|&v| v == w).unwrap()
        }
    };
    rank(x) < rank(y)
}

/// `(tx, index in tx)` of every non-control position.
fn identities(s: &Schedule) -> Vec<(u32, usize)> {
    let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
    s.ops
        .iter()
        .map(|o| {
            let n = seen.entry(o.tx).or_insert(0);
            *n += 1;
            (o.tx, *n - 1)
        })
        .collect()
}

pub type Deps = BTreeSet<((u32, usize), (u32, usize), u8)>;

/// Every dependency `b -> a` between conflicting operations, by kind.
fn dependencies(s: &Schedule) -> Deps {
    let ids = identities(s);
    let mut out = BTreeSet::new();
    for (b, ob) in s.ops.iter().enumerate() {
        for (a, oa) in s.ops.iter().enumerate() {
            let (Some(tb), Some(ta)) = (tuple_of(ob), tuple_of(oa)) else { continue };
            if tb != ta || ob.tx == oa.tx {
                continue;
            }
            if inter(&ob.write_set, &oa.write_set) && before(s, tb, b, a) {
                out.insert((ids[b], ids[a], 0));
            }
            if inter(&ob.write_set, &oa.read_set) {
                let v = s.version_fn[&a];
                if v == b || before(s, tb, b, v) {
                    out.insert((ids[b], ids[a], 1));
                }
            }
            if inter(&ob.read_set, &oa.write_set) && before(s, tb, s.version_fn[&b], a) {
                out.insert((ids[b], ids[a], 2));
            }
        }
    }
    out
}

/// Single-version serial schedule running the transactions in `order`.
fn serial(s: &Schedule, order: &[u32]) -> Schedule {
    let mut ops = vec![s.ops[0].clone()];
    for &t in order {
        ops.extend(s.ops.iter().filter(|o| o.tx == t).cloned());
    }
    let mut version_order: BTreeMap<Arc<str>, Vec<usize>> = BTreeMap::new();
    let mut version_fn = BTreeMap::new();
    let mut last: BTreeMap<String, usize> = BTreeMap::new();
    for (i, o) in ops.iter().enumerate() {
        let Some(t) = tuple_of(o) else { continue };
        if o.is_read() {
            version_fn.insert(i, last.get(t).copied().unwrap_or(0));
        }
        if o.is_write() {
            version_order.entry(Arc::from(t)).or_insert_with(|| vec![0]).push(i);
            last.insert(t.to_string(), i);
        }
    }
    Schedule::new(ops, version_order, version_fn).expect("serial schedule is well formed")
}

fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Conflict equivalence to some single-version serial schedule.
pub fn def_serializable(s: &Schedule) -> bool {
    let deps = dependencies(s);
    let txs: Vec<u32> = s.transactions().into_iter().collect();
    permutations(&txs).iter().any(|order| dependencies(&serial(s, order)) == deps)
}

/// Read-last-committed without dirty writes, with the version order
/// following the order of commits.
pub fn def_rc_allowed(s: &Schedule) -> bool {
    let commit = |tx: u32| {
        if tx == 0 {
            0
        } else {
            s.commit_position(tx).unwrap()
        }
    };
    let n = s.ops.len();
    for b in 1..n {
        for a in 1..n {
            let (ob, oa) = (&s.ops[b], &s.ops[a]);
            let (Some(tb), Some(ta)) = (tuple_of(ob), tuple_of(oa)) else { continue };
            if tb != ta || ob.tx == oa.tx || !ob.is_write() || !oa.is_write() {
                continue;
            }
            if inter(&ob.write_set, &oa.write_set) && b < a && a < commit(ob.tx) {
                return false;
            }
            if before(s, tb, b, a) != (commit(ob.tx) < commit(oa.tx)) {
                return false;
            }
        }
    }
    for (&a, &v) in &s.version_fn {
        let t = tuple_of(&s.ops[a]).unwrap();
        if v != 0 && commit(s.ops[v].tx) >= a {
            return false;
        }
        for c in 1..n {
            let oc = &s.ops[c];
            if oc.is_write() && tuple_of(oc) == Some(t) && commit(oc.tx) < a && before(s, t, v, c) {
                return false;
            }
        }
    }
    true
}

fn interleavings(a: usize, b: usize) -> Vec<Vec<bool>> {
    if a == 0 && b == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    if a > 0 {
        for mut r in interleavings(a - 1, b) {
            r.insert(0, true);
            out.push(r);
        }
    }
    if b > 0 {
        for mut r in interleavings(a, b - 1) {
            r.insert(0, false);
            out.push(r);
        }
    }
    out
}

fn for_each_choice(sizes: &[usize], f: &mut dyn FnMut(&[usize])) {
    let mut cur = vec![0; sizes.len()];
    if sizes.contains(&0) {
        return;
    }
    loop {
        f(&cur);
        let mut i = 0;
        loop {
            if i == sizes.len() {
                return;
            }
            cur[i] += 1;
            if cur[i] < sizes[i] {
                break;
            }
            cur[i] = 0;
            i += 1;
        }
    }
}

fn op(tx: u32, (kind, tuple): (OpKind, &str)) -> ConcreteOp {
    let t = Tuple::new(tuple, "R");
    match kind {
        OpKind::R => ConcreteOp::new(tx, kind, t, &["v"], &[]),
        OpKind::W => ConcreteOp::new(tx, kind, t, &[], &["v"]),
        OpKind::U => ConcreteOp::new(tx, kind, t, &["v"], &["v"]),
    }
}

/// Visits schedules of two 3-operation transactions over tuples `x` and
/// `y` under every interleaving. T1 issues the first operation and starts on
/// `x`, which loses nothing since both checks are invariant under renaming
/// transactions and tuples. Two families are produced per interleaving:
/// every version function with versions in commit order, and every version
/// order with reads of the last committed version. `visit` also receives
/// the dependency sets of the two serial orders.
pub fn enumerate_small(visit: &mut dyn FnMut(&Schedule, &[Deps; 2])) -> usize {
    let items: Vec<(OpKind, &str)> = [OpKind::R, OpKind::W, OpKind::U]
        .into_iter()
        .flat_map(|k| [(k, "x"), (k, "y")])
        .collect();
    let mut txs: Vec<Vec<(OpKind, &str)>> = Vec::new();
    for a in &items {
        for b in &items {
            for c in &items {
                if a != b && b != c && a != c {
                    txs.push(vec![*a, *b, *c]);
                }
            }
        }
    }
    let shapes: Vec<Vec<bool>> = interleavings(4, 4).into_iter().filter(|s| s[0]).collect();
    let mut count = 0;
    for t1 in txs.iter().filter(|t| t[0].1 == "x") {
        for t2 in &txs {
            let mut serial_deps: Option<[Deps; 2]> = None;
            for shape in &shapes {
                let mut ops = vec![ConcreteOp::init()];
                let (mut i, mut j) = (0, 0);
                for &first in shape {
                    let (tx, t, k) = if first { (1, t1, &mut i) } else { (2, t2, &mut j) };
                    ops.push(if *k < 3 { op(tx, t[*k]) } else { ConcreteOp::commit(tx) });
                    *k += 1;
                }
                let commit = |tx: u32| ops.iter().position(|o| o.tx == tx && o.tuple.is_none()).unwrap();
                let mut writes: BTreeMap<Arc<str>, Vec<usize>> = BTreeMap::new();
                for (p, o) in ops.iter().enumerate() {
                    if o.is_write() {
                        writes.entry(Arc::from(tuple_of(o).unwrap())).or_default().push(p);
                    }
                }
                let commit_order: BTreeMap<Arc<str>, Vec<usize>> = writes
                    .iter()
                    .map(|(k, ws)| {
                        let mut ws = ws.clone();
                        ws.sort_by_key(|&w| (commit(ops[w].tx), w));
                        (k.clone(), std::iter::once(0).chain(ws).collect())
                    })
                    .collect();
                let reads: Vec<usize> = (1..ops.len()).filter(|&p| ops[p].is_read()).collect();
                let candidates: Vec<Vec<usize>> = reads
                    .iter()
                    .map(|&r| {
                        let mut c = vec![0];
                        c.extend((1..r).filter(|&w| ops[w].is_write() && tuple_of(&ops[w]) == tuple_of(&ops[r])));
                        c
                    })
                    .collect();
                let last_committed: BTreeMap<usize, usize> = reads
                    .iter()
                    .map(|&r| {
                        let t = tuple_of(&ops[r]).unwrap();
                        let v = commit_order
                            .get(t)
                            .and_then(|o| o.iter().rev().find(|&&w| w != 0 && commit(ops[w].tx) < r).copied())
                            .unwrap_or(0);
                        (r, v)
                    })
                    .collect();
                let mut s = Schedule {
                    ops,
                    version_order: commit_order.clone(),
                    version_fn: last_committed.clone(),
                };
                let serial_deps = serial_deps.get_or_insert_with(|| [dependencies(&serial(&s, &[1, 2])), dependencies(&serial(&s, &[2, 1]))]);
                let cand_sizes: Vec<usize> = candidates.iter().map(|c| c.len()).collect();
                for_each_choice(&cand_sizes, &mut |vc| {
                    s.version_fn = reads.iter().enumerate().map(|(i, &r)| (r, candidates[i][vc[i]])).collect();
                    count += 1;
                    visit(&s, serial_deps);
                });
                s.version_fn = last_committed;
                let keys: Vec<Arc<str>> = writes.keys().cloned().collect();
                let orders: Vec<Vec<Vec<usize>>> = keys
                    .iter()
                    .map(|k| {
                        let ws: Vec<u32> = writes[k].iter().map(|&p| p as u32).collect();
                        permutations(&ws)
                            .into_iter()
                            .map(|p| std::iter::once(0).chain(p.into_iter().map(|x| x as usize)).collect())
                            .collect()
                    })
                    .collect();
                let order_sizes: Vec<usize> = orders.iter().map(|o| o.len()).collect();
                for_each_choice(&order_sizes, &mut |oc| {
                    s.version_order = keys.iter().enumerate().map(|(i, k)| (k.clone(), orders[i][oc[i]].clone())).collect();
                    if s.version_order != commit_order {
                        count += 1;
                        visit(&s, serial_deps);
                    }
                });
            }
        }
    }
    count
}

/// Runs both kernel checks against their oracles on every small schedule;
/// returns the number of schedules, how many are RC-allowed, and the
/// disagreements found.
pub fn check_kernel() -> (usize, usize, Vec<String>) {
    let mut bad = Vec::new();
    let mut rc = 0;
    let show = |s: &Schedule| format!("{:?} v={:?} order={:?}", s.ops.iter().map(|o| o.to_string()).collect::<Vec<_>>(), s.version_fn, s.version_order);
    let n = enumerate_small(&mut |s, serial_deps| {
        let r = is_rc_allowed(s);
        rc += r as usize;
        if r != def_rc_allowed(s) {
            bad.push(format!("is_rc_allowed = {r} on {}", show(s)));
        }
        let deps = dependencies(s);
        let c = is_conflict_serializable(s);
        if c != serial_deps.contains(&deps) {
            bad.push(format!("is_conflict_serializable = {c} on {}", show(s)));
        }
    });
    (n, rc, bad)
}
