mod common;

use adtape::adjoint::{max_rel_error, propagate, AdjointError, Strategy};
use adtape::program::{evaluate, fd_gradient, record};
use adtape::store::StoreConfig;
use adtape::tape::Mode;
use common::*;
use proptest::prelude::*;

fn sweep(p: &RandomProgram, mode: Mode, strategy: Strategy) -> Result<Vec<f64>, AdjointError> {
    let r = record(p, &p.point, mode, StoreConfig::in_memory()).unwrap();
    propagate(strategy, &r.tape, &vec![1.0; r.outputs.len()])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn flat_and_lvalue_agree_on_cyclic_tapes(p in random_program(80)) {
        let flat = sweep(&p, Mode::Dcg, Strategy::Flat).unwrap();
        let lval = sweep(&p, Mode::Dcg, Strategy::LValue).unwrap();
        let bitwise = flat.iter().zip(&lval).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(bitwise, "{:?} vs {:?}", flat, lval);
    }

    #[test]
    fn both_recordings_give_one_gradient(mut p in random_program(80)) {
        p.all_outputs = false;
        let dag = sweep(&p, Mode::Dag, Strategy::Flat).unwrap();
        let dcg = sweep(&p, Mode::Dcg, Strategy::LValue).unwrap();
        prop_assert!(agree(&dag, &dcg, 1e-12), "{:?} vs {:?}", dag, dcg);
    }

    #[test]
    fn gradients_match_central_differences(mut p in random_program(40)) {
        p.all_outputs = false;
        let g = sweep(&p, Mode::Dcg, Strategy::LValue).unwrap();
        let fd = fd_gradient(&p, &p.point, &[1.0], 1e-6).unwrap();
        let err = max_rel_error(&g, &fd);
        prop_assert!(err < 1e-5, "err {} for {:?} vs {:?}", err, g, fd);
    }

    #[test]
    fn slot_counts_are_ordered(p in random_program(80)) {
        let dag = record(&p, &p.point, Mode::Dag, StoreConfig::in_memory()).unwrap();
        let dcg = record(&p, &p.point, Mode::Dcg, StoreConfig::in_memory()).unwrap();
        let (ds, cs) = (dag.tape.stats(), dcg.tape.stats());
        prop_assert!(Strategy::Bandwidth.slot_count(ds) <= Strategy::Flat.slot_count(ds));
        prop_assert!(Strategy::LValue.slot_count(cs) <= Strategy::Flat.slot_count(cs));
        prop_assert_eq!(Strategy::Flat.slot_count(ds), ds.num_vertices);
    }

    #[test]
    fn recording_preserves_primal_values(p in random_program(80)) {
        let plain = evaluate(&p, &p.point).unwrap();
        for mode in [Mode::Dag, Mode::Dcg] {
            let r = record(&p, &p.point, mode, StoreConfig::in_memory()).unwrap();
            let bits: Vec<u64> = r.outputs.iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = plain.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, want);
        }
    }

    #[test]
    fn builder_streams_parse_back(raw in raw_tape()) {
        let (tape, expected) = raw.build();
        let got: Vec<_> = tape
            .elementals()
            .unwrap()
            .into_iter()
            .map(|e| (e.preds, e.result))
            .collect();
        prop_assert_eq!(got, expected);
        let stats = tape.stats();
        let (s, d) = tape.dump().unwrap();
        prop_assert_eq!((s.len(), d.len()), (stats.s_len, stats.d_len));
        prop_assert_eq!(d.len(), stats.num_edges);
    }
}
