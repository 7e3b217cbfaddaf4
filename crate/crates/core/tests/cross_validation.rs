mod common;

use common::{trace_mem_vrf, trace_mx};
use mx_core::config::{validate, ProblemShape, SubTileConfig, TileConfig};
use mx_core::cost_model::{mem_vrf_transfers, mx_transfers, BufferingOptions};
use mx_core::kernels::Layout;
use mx_core::machine::Memory;
use mx_core::sim::{run_random, simulate, Exec};
use proptest::prelude::*;
use rand::SeedableRng;

fn pow2(lo: u32, hi: u32) -> impl Strategy<Value = usize> {
    (lo..=hi).prop_map(|e| 1usize << e)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, max_global_rejects: 1 << 20, ..ProptestConfig::default() })]

    #[test]
    fn mem_vrf_matches_trace_on_larger_shapes(
        t in (1usize..=8, 1usize..=8, 1usize..=8),
        r in (1usize..=6, 1usize..=6, 1usize..=6),
        interk_vrf in any::<bool>(),
        c_is_zero in any::<bool>(),
    ) {
        let tile = TileConfig::new(t.0, t.1, t.2);
        let p = ProblemShape::new(t.0 * r.0, t.1 * r.1, t.2 * r.2);
        let o = BufferingOptions { interk_vrf, c_is_zero, ..Default::default() };
        prop_assert_eq!(mem_vrf_transfers(&p, &tile, &o), trace_mem_vrf(p, tile, o));
    }

    #[test]
    fn mx_kernel_ledger_matches_formula_and_trace(
        sm in pow2(2, 3), sn in pow2(2, 3), sk in pow2(2, 3), b in pow2(0, 2),
        r in (1usize..=4, 1usize..=3, 1usize..=6),
        cores in 1usize..=4,
    ) {
        let cfg = mx_core::MachineConfig { cores, ..common::exhaustive::machine() };
        let s = SubTileConfig::new(sm, sn, sk, b);
        let t = TileConfig::new(sm, sn * b, sk);
        let p = ProblemShape::new(t.m * r.0, t.n * r.1, t.k * r.2);
        prop_assume!(validate(p, t, Some(s), &cfg).is_ok());
        let v = validate(p, t, Some(s), &cfg).unwrap();
        let out = simulate(&v, &Memory::new(Layout::new(p, cfg.element).bytes), Exec::Parallel).unwrap();
        let formula = mx_transfers(&p, &t, &s, cfg.fpus);
        prop_assert_eq!(formula, trace_mx(p, t, s, cfg.fpus));
        prop_assert_eq!(formula, out.report.ledgers);
        prop_assert!(out.report.buffer_peak_bytes <= cfg.buffer_bytes);
    }
}

#[test]
fn runs_are_deterministic() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for seed in 0..20 {
        let v = common::random::config(&mut rng);
        let first = run_random(&v, seed, Exec::Parallel).unwrap();
        let second = run_random(&v, seed, Exec::Sequential).unwrap();
        assert_eq!(first.2, second.2);
        assert_eq!(first.3, second.3);
    }
}

#[test]
fn counters_never_decrease() {
    use mx_core::kernels::gen_kernel;
    use mx_core::machine::MachineState;
    let cfg = mx_core::MachineConfig::default();
    let v =
        validate(ProblemShape::cube(16), TileConfig::new(8, 8, 4), Some(SubTileConfig::new(8, 4, 4, 2)), &cfg).unwrap();
    let program = gen_kernel(&v);
    let mut last = None;
    // Re-run growing prefixes; every counter of a prefix bounds the next.
    for len in (0..=program.len()).step_by(7) {
        let prefix = mx_core::isa::Program::new(
            program.instructions()[..len].iter().filter(|i| i.branch_target().is_none()).cloned().collect(),
            Default::default(),
            program.element(),
        )
        .unwrap();
        let mut s = MachineState::new(cfg, Memory::new(Layout::new(v.problem, cfg.element).bytes));
        let r = s.run(&prefix).unwrap();
        let now: Vec<u64> = r
            .ledgers
            .mem_vrf
            .as_array()
            .into_iter()
            .chain(r.ledgers.vrf_buf.as_array())
            .chain([r.macs, r.insns.total])
            .collect();
        if let Some(prev) = last.replace(now.clone()) {
            let prev: Vec<u64> = prev;
            assert!(prev.iter().zip(&now).all(|(a, b)| a <= b), "{prev:?} -> {now:?}");
        }
    }
}
