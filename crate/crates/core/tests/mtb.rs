//! The multi-tree decider on SmallBank and synthetic workloads.

use rcrobust::dsl::parse_workload;
use rcrobust::fixtures::fixture;
use rcrobust::model::{OpKind, Workload};
use rcrobust::mtb::{decide_mtb, enumerate_mtb_quintuples, materialize_mtb_witness, MtbQuintuple};
use rcrobust::oracle::{oracle_decide, random_workload, FragmentBias, RandomParams};
use rcrobust::witness::verify_witness;
use rcrobust::Verdict;

const ALL: [&str; 6] = ["Balance", "DepositChecking", "TransactSavings", "Amalgamate", "WriteCheck", "GoPremium"];

fn smallbank(names: &[&str]) -> Workload {
    fixture("smallbank").unwrap().subset(names).unwrap()
}

fn op_on(w: &Workload, t: &str, kind: OpKind, var: &str) -> usize {
    let tpl = w.template(t).unwrap();
    let v = tpl.var(var).unwrap();
    tpl.ops.iter().position(|o| o.kind == kind && o.var == v).unwrap()
}

fn maximal_sets() -> [Vec<&'static str>; 3] {
    [
        vec!["Amalgamate", "DepositChecking", "GoPremium", "TransactSavings"],
        vec!["Balance", "DepositChecking", "GoPremium"],
        vec!["Balance", "TransactSavings", "GoPremium"],
    ]
}

#[test]
fn gopremium_quintuples() {
    let w = smallbank(&["GoPremium"]);
    let qs = enumerate_mtb_quintuples(&w).unwrap();
    let uy = op_on(&w, "GoPremium", OpKind::U, "Y");
    let ux = op_on(&w, "GoPremium", OpKind::U, "X");
    assert!(qs.contains(&MtbQuintuple { template: 0, o: uy, c_o: 1, p: uy, c_p: 1 }));
    assert!(!qs.contains(&MtbQuintuple { template: 0, o: ux, c_o: 1, p: uy, c_p: 2 }));
    assert!(qs.contains(&MtbQuintuple { template: 0, o: ux, c_o: 1, p: uy, c_p: 1 }));
}

#[test]
fn amalgamate_disequality_separates_its_halves() {
    let w = smallbank(&["Amalgamate"]);
    let qs = enumerate_mtb_quintuples(&w).unwrap();
    let z1 = op_on(&w, "Amalgamate", OpKind::U, "Z1");
    let z2 = op_on(&w, "Amalgamate", OpKind::U, "Z2");
    for c in 1..=4 {
        assert!(!qs.contains(&MtbQuintuple { template: 0, o: z1, c_o: c, p: z2, c_p: c }));
    }
    assert!(qs.contains(&MtbQuintuple { template: 0, o: z1, c_o: 1, p: z2, c_p: 2 }));
    let nofc = fixture("smallbank-nofc").unwrap().subset(&["Amalgamate"]).unwrap();
    assert_eq!(decide_mtb(&nofc).unwrap().is_robust(), oracle_decide(&nofc, 3).unwrap().is_robust());
}

#[test]
fn maximal_robust_sets() {
    for set in maximal_sets() {
        assert!(decide_mtb(&smallbank(&set)).unwrap().is_robust(), "{set:?}");
        for extra in ALL.iter().filter(|n| !set.contains(n)) {
            let mut ext = set.clone();
            ext.push(extra);
            let v = decide_mtb(&smallbank(&ext)).unwrap();
            let c = v.counterexample().unwrap_or_else(|| panic!("{ext:?} should not be robust"));
            assert!(verify_witness(&smallbank(&ext), &c.witness).is_counterexample(), "{ext:?}");
        }
    }
}

#[test]
fn gopremium_needs_its_constraints() {
    assert!(decide_mtb(&smallbank(&["GoPremium"])).unwrap().is_robust());
    let w = fixture("smallbank-nofc").unwrap().subset(&["GoPremium"]).unwrap();
    let Verdict::NotRobust(c) = decide_mtb(&w).unwrap() else { panic!("robust without constraints") };
    assert_eq!(c.steps.len(), 2);
    let r = verify_witness(&w, &c.witness);
    assert!(r.is_counterexample(), "{r:?}");
    let y = w.templates[0].var("Y").unwrap();
    let x = w.templates[0].var("X").unwrap();
    let txs = &c.witness.transactions;
    assert_eq!(txs.len(), 2);
    assert_eq!(txs[0].assignment[y], txs[1].assignment[y]);
    assert_ne!(txs[0].assignment[x], txs[1].assignment[x]);
    // T1 is split around all of T2.
    let order: Vec<u32> = c.witness.schedule.ops.iter().skip(1).map(|o| o.tx).collect();
    let first = order.iter().position(|&t| t == 2).unwrap();
    let last = order.iter().rposition(|&t| t == 2).unwrap();
    assert!(order[..first].iter().all(|&t| t == 1) && order[last + 1..].iter().all(|&t| t == 1));
}

#[test]
fn materialized_sequence_verifies() {
    let w = parse_workload(
        "schema {\n relation A(a)\n}\n\
         template P {\n R X:A{a}\n W Y:A{a}\n}\n\
         template Q {\n R X:A{a}\n W Y:A{a}\n}",
    )
    .unwrap();
    let qs = enumerate_mtb_quintuples(&w).unwrap();
    let mut built = 0;
    for a in qs.iter().filter(|q| q.c_o == 1) {
        for b in &qs {
            let Ok(wit) = materialize_mtb_witness(&w, &[*a, *b]) else { continue };
            assert!(verify_witness(&w, &wit).is_counterexample(), "{a:?} {b:?}");
            built += 1;
        }
    }
    assert!(built > 0);
    assert!(decide_mtb(&w).unwrap().counterexample().is_some());
}

#[test]
fn cyclic_non_mtb_workloads_are_rejected() {
    assert!(decide_mtb(&fixture("pcp").unwrap()).is_err());
}

#[test]
fn verdict_ignores_template_order() {
    let params = RandomParams {
        n_templates: 3,
        n_ops: 4,
        n_relations: 3,
        n_functions: 4,
        p_constraint: 0.5,
        fragment_bias: FragmentBias::MTBTemp,
    };
    for seed in 0..60 {
        let w = random_workload(seed, &params).unwrap();
        let mut rev = w.clone();
        rev.templates.reverse();
        let (a, b) = (decide_mtb(&w).unwrap(), decide_mtb(&rev).unwrap());
        assert_eq!(a.is_robust(), b.is_robust(), "seed {seed}");
        if let Some(c) = b.counterexample() {
            assert!(verify_witness(&rev, &c.witness).is_counterexample());
        }
    }
}

#[test]
fn smallbank_verdicts_match_oracle() {
    for set in maximal_sets() {
        assert!(oracle_decide(&smallbank(&set), 3).unwrap().is_robust(), "{set:?}");
    }
    assert!(!oracle_decide(&smallbank(&["Balance", "WriteCheck"]), 3).unwrap().is_robust());
}
