//! Bounded oracle, witness verification, e-graph and random workloads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcrobust::dsl::parse_workload;
use rcrobust::egraph::EGraph;
use rcrobust::fixtures::fixture;
use rcrobust::model::Workload;
use rcrobust::oracle::{oracle_decide, random_workload, verify_witness, BoundedVerdict, FragmentBias, RandomParams};
use rcrobust::schema::{classify, is_restricted, Fragment};
use rcrobust::witness::{assemble, Database};
use rcrobust::{Error, Verdict};

fn gp(fixture_name: &str) -> Workload {
    fixture(fixture_name).unwrap().subset(&["GoPremium"]).unwrap()
}

fn params(bias: FragmentBias) -> RandomParams {
    RandomParams { fragment_bias: bias, ..RandomParams::default() }
}

#[test]
fn gopremium_without_constraints_fails_at_two() {
    let BoundedVerdict::NotRobust(c) = oracle_decide(&gp("smallbank-nofc"), 2).unwrap() else {
        panic!("expected a counterexample")
    };
    assert_eq!(c.steps.len(), 2);
    assert!(verify_witness(&gp("smallbank-nofc"), &c.witness).is_counterexample());
    assert!(oracle_decide(&gp("smallbank"), 3).unwrap().is_robust());
}

#[test]
fn maximal_set_is_robust_up_to_four() {
    let w = fixture("smallbank").unwrap().subset(&["Balance", "DepositChecking", "GoPremium"]).unwrap();
    assert!(matches!(oracle_decide(&w, 4).unwrap(), BoundedVerdict::RobustUpTo(4)));
}

#[test]
fn conflict_free_workloads_are_robust_at_any_bound() {
    for text in [
        "schema {\n relation A(a)\n}\ntemplate T {\n R X:A{a}\n}",
        "schema {\n relation A(a)\n}\ntemplate T {\n W X:A{a}\n}",
    ] {
        let w = parse_workload(text).unwrap();
        assert!(matches!(oracle_decide(&w, 5).unwrap(), BoundedVerdict::RobustUpTo(5)));
    }
    assert!(matches!(oracle_decide(&gp("smallbank"), 1), Err(Error::Usage(_))));
}

/// The two GoPremium instances both on `s1`, over a database where
/// `fAS(a2) = s2`.
fn shared_savings_witness(w: &Workload) -> rcrobust::witness::Witness {
    let t = &w.templates[0];
    let r = |n: &str| w.schema.relation(n).unwrap();
    let f = |n: &str| w.schema.function(n).unwrap();
    let id = |s: &str| -> Arc<str> { Arc::from(s) };
    let mut db = Database::new(&w.schema);
    for i in 1..=2 {
        let (a, s) = (id(&format!("a{i}")), id(&format!("s{i}")));
        db.add_tuple(&a, r("Account")).unwrap();
        db.add_tuple(&s, r("Savings")).unwrap();
        db.set(f("fAS"), &a, &s).unwrap();
        db.set(f("fSA"), &s, &a).unwrap();
    }
    let (x, y) = (t.var("X").unwrap(), t.var("Y").unwrap());
    let mut mu1 = vec![id(""); 2];
    mu1[x] = id("a1");
    mu1[y] = id("s1");
    let mut mu2 = mu1.clone();
    mu2[x] = id("a2");
    let ry = t.ops.iter().position(|o| o.var == y && o.write_set.is_empty()).unwrap();
    let uy = t.ops.iter().rposition(|o| o.var == y).unwrap();
    assemble(w, &[(0, ry, uy), (0, uy, uy)], vec![mu1, mu2], db).unwrap()
}

#[test]
fn shared_savings_schedule_is_inconsistent_with_constraints() {
    let nofc = gp("smallbank-nofc");
    let r = verify_witness(&nofc, &shared_savings_witness(&nofc));
    assert!(r.is_counterexample(), "{r:?}");

    let w = gp("smallbank");
    let r = verify_witness(&w, &shared_savings_witness(&w));
    assert!(r.rc_allowed && !r.serializable);
    assert!(!r.consistent);
    assert!(r.problems.iter().any(|p| p.contains("fAS") && p.contains("a2")), "{:?}", r.problems);
}

#[test]
fn mutated_witnesses_fail() {
    let w = gp("smallbank-nofc");
    let Verdict::NotRobust(c) = rcrobust::decide(&w, 64).unwrap().1 else { panic!() };
    let good = c.witness;
    assert!(verify_witness(&w, &good).is_counterexample());

    let y = w.templates[0].var("Y").unwrap();
    let mut bad = good.clone();
    bad.transactions[1].assignment[y] = Arc::from("elsewhere");
    assert!(!verify_witness(&w, &bad).is_counterexample());

    let mut bad = good.clone();
    let pos = bad.schedule.ops.iter().rposition(|o| o.tx == 2 && o.tuple.is_some()).unwrap();
    bad.schedule.ops[pos].tuple.as_mut().unwrap().id = Arc::from("elsewhere");
    assert!(!verify_witness(&w, &bad).is_counterexample());

    let mut bad = good.clone();
    bad.transactions[0].template = 7;
    assert!(!verify_witness(&w, &bad).is_counterexample());

    let mut bad = good;
    let s = bad.database.tuples.keys().find(|k| k.contains("Savings")).cloned();
    if let Some(s) = s {
        bad.database.tuples.insert(s, 0);
        assert!(!verify_witness(&fixture("smallbank").unwrap(), &bad).is_counterexample());
    }
}

#[test]
fn random_workloads_are_deterministic() {
    for seed in 0..30 {
        let p = params(FragmentBias::Any);
        assert_eq!(random_workload(seed, &p).unwrap(), random_workload(seed, &p).unwrap());
    }
    let p = params(FragmentBias::Any);
    let distinct: std::collections::BTreeSet<String> =
        (0..30).map(|s| rcrobust::dsl::emit_workload(&random_workload(s, &p).unwrap())).collect();
    assert!(distinct.len() > 20);
}

#[test]
fn fragment_bias_is_respected() {
    assert_eq!(classify(&random_workload(1, &params(FragmentBias::MTBTemp)).unwrap()).fragment, Fragment::MTBTemp);
    let w = random_workload(2, &params(FragmentBias::AcyclicRestricted)).unwrap();
    assert!(w.templates.iter().all(|t| is_restricted(&w.schema, t).unwrap()));
    for seed in 0..40 {
        let f = |b| classify(&random_workload(seed, &params(b)).unwrap()).fragment;
        assert_eq!(f(FragmentBias::VarTemp), Fragment::VarTemp);
        assert!(f(FragmentBias::Acyclic).is_acyclic());
        assert!(matches!(f(FragmentBias::AcyclicBoundedK), Fragment::AcyclicBoundedK(_)));
    }
    let tight = RandomParams { n_functions: 1, ..params(FragmentBias::AcyclicGeneral) };
    assert!(matches!(random_workload(0, &tight), Err(Error::Usage(_))));
}

#[test]
fn egraph_inconsistency_is_permanent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..300 {
        let mut g = EGraph::new();
        let nodes: Vec<usize> = (0..6).map(|_| g.add_node()).collect();
        let mut broken = false;
        for _ in 0..12 {
            let a = nodes[rng.gen_range(0..nodes.len())];
            let b = nodes[rng.gen_range(0..nodes.len())];
            match rng.gen_range(0..3) {
                0 => g.add_neq(a, b),
                1 => g.union(a, b),
                _ => g.add_eq(a, rng.gen_range(0..2), b),
            }
            if broken {
                assert!(!g.consistent());
            }
            broken = !g.consistent();
        }
    }
}

#[test]
fn egraph_congruence() {
    let mut g = EGraph::new();
    let (x, y, a, b) = (g.add_node(), g.add_node(), g.add_node(), g.add_node());
    g.add_eq(a, 0, x);
    g.add_eq(b, 0, y);
    assert!(!g.same(a, b));
    g.union(x, y);
    assert!(g.same(a, b));
    let (c1, c2) = (g.add_constant(Arc::from("t1")), g.add_constant(Arc::from("t2")));
    assert!(g.consistent());
    g.union(c1, c2);
    assert!(!g.consistent());
}
