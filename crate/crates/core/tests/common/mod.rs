//! Brute-force transfer counting: walks the tiled loop nest element by
//! element, tracking what each storage level holds, and tallies every
//! element that crosses a boundary.

#![allow(dead_code)]

use std::collections::HashSet;

use mx_core::config::{ProblemShape, SubTileConfig, TileConfig};
use mx_core::cost_model::{BufResidency, BufferingOptions};
use mx_core::ledger::{Terms, TransferLedger};

/// Memory ↔ VRF traffic of the generic tiled loop: tiles `(i, j)` outer,
/// `k`-steps inner; A and B tiles are loaded at every step.
pub fn trace_mem_vrf(p: ProblemShape, t: TileConfig, opts: BufferingOptions) -> Terms {
    let mut terms = Terms::default();
    // Elements of D that memory holds a meaningful value for.
    let mut written = vec![false; p.m * p.n];
    for i0 in (0..p.m).step_by(t.m) {
        for j0 in (0..p.n).step_by(t.n) {
            let mut resident = false;
            for k0 in (0..p.k).step_by(t.k) {
                for _i in i0..i0 + t.m {
                    for _p in k0..k0 + t.k {
                        terms.a_down += 1;
                    }
                }
                for _p in k0..k0 + t.k {
                    for _j in j0..j0 + t.n {
                        terms.b_down += 1;
                    }
                }
                if !resident {
                    for i in i0..i0 + t.m {
                        for j in j0..j0 + t.n {
                            // A zero C is produced in place the first time.
                            if !(opts.c_is_zero && !written[i * p.n + j]) {
                                terms.cd_down += 1;
                            }
                        }
                    }
                    resident = true;
                }
                if !opts.interk_vrf {
                    for i in i0..i0 + t.m {
                        for j in j0..j0 + t.n {
                            terms.d_up += 1;
                            written[i * p.n + j] = true;
                        }
                    }
                    resident = false;
                }
            }
            if opts.interk_vrf {
                for i in i0..i0 + t.m {
                    for j in j0..j0 + t.n {
                        terms.d_up += 1;
                        written[i * p.n + j] = true;
                    }
                }
            }
        }
    }
    terms
}

/// Which output sub-tile the near-FPU buffer holds, and whether it was ever
/// loaded before.
struct Buffer {
    held: Option<(usize, usize)>,
    touched: HashSet<(usize, usize)>,
}

/// VRF ↔ buffer traffic: each VRF tile `(i, j, k-step)` runs one matrix
/// instruction per `n'`-wide sub-tile column.
pub fn trace_vrf_buf(p: ProblemShape, t: TileConfig, s: SubTileConfig, opts: BufferingOptions) -> Terms {
    let mut terms = Terms::default();
    let mut buf = Buffer { held: None, touched: HashSet::new() };
    let flush = |buf: &mut Buffer, terms: &mut Terms| {
        if buf.held.take().is_some() {
            terms.d_up += (s.m * s.n) as u64;
        }
    };
    for i0 in (0..p.m).step_by(t.m) {
        for j0 in (0..p.n).step_by(t.n) {
            for k0 in (0..p.k).step_by(t.k) {
                for si in (i0..i0 + t.m).step_by(s.m) {
                    for sj in (j0..j0 + t.n).step_by(s.n) {
                        for sk in (k0..k0 + t.k).step_by(s.k) {
                            for _ in 0..s.m * s.k {
                                terms.a_down += 1;
                            }
                            for _ in 0..s.k * s.n {
                                terms.b_down += 1;
                            }
                            let id = (si, sj);
                            if buf.held != Some(id) {
                                flush(&mut buf, &mut terms);
                                let fresh = buf.touched.insert(id);
                                let reset = fresh && opts.c_is_zero && opts.interk_buf != BufResidency::None;
                                if !reset {
                                    for _ in 0..s.m * s.n {
                                        terms.cd_down += 1;
                                    }
                                }
                                buf.held = Some(id);
                            }
                            let last_k_of_tile = sk + s.k == k0 + t.k;
                            let keep = match opts.interk_buf {
                                BufResidency::None => false,
                                BufResidency::TileK => !last_k_of_tile,
                                BufResidency::FullK => true,
                            };
                            if !keep {
                                flush(&mut buf, &mut terms);
                            }
                        }
                    }
                }
            }
        }
    }
    flush(&mut buf, &mut terms);
    terms
}

/// Buffer ↔ FPU traffic of one `m'×n'×k'` instruction, lane by lane: an A
/// element is fetched once per `F`-wide group of output columns it feeds,
/// a B element once per `F`-wide group of output rows.
pub fn trace_buf_fpu_insn(s: SubTileConfig, fpus: usize) -> Terms {
    let mut terms = Terms::default();
    for _i in 0..s.m {
        for _p in 0..s.k {
            for j in 0..s.n {
                if j % fpus == 0 {
                    terms.a_down += 1;
                }
            }
        }
    }
    for _p in 0..s.k {
        for _j in 0..s.n {
            for i in 0..s.m {
                if i % fpus == 0 {
                    terms.b_down += 1;
                }
            }
        }
    }
    for _ in 0..s.m * s.n * s.k {
        terms.cd_down += 1;
        terms.d_up += 1;
    }
    terms
}

/// Full ledger of the matrix-extension kernel: VRF tile `(m', B·n', k')`
/// with register-resident, zero-started accumulators.
pub fn trace_mx(p: ProblemShape, t: TileConfig, s: SubTileConfig, fpus: usize) -> TransferLedger {
    let wide = TileConfig::new(s.m, s.bcast * s.n, t.k);
    let insns = (p.m / s.m) * (p.n / s.n) * (p.k / s.k);
    let mut buf_fpu = Terms::default();
    let per = trace_buf_fpu_insn(s, fpus);
    for _ in 0..insns {
        buf_fpu += per;
    }
    TransferLedger {
        mem_vrf: trace_mem_vrf(p, wide, BufferingOptions::KERNEL),
        vrf_buf: trace_vrf_buf(p, t, s, BufferingOptions::default()),
        buf_fpu,
        ..Default::default()
    }
}

/// Full ledger of the scalar-vector kernel for a tile that divides the problem.
pub fn trace_baseline(p: ProblemShape, t: TileConfig, fpus: usize) -> TransferLedger {
    let mut l = TransferLedger { mem_vrf: trace_mem_vrf(p, t, BufferingOptions::KERNEL), ..Default::default() };
    for _tile in 0..(p.m / t.m) * (p.n / t.n) {
        for _k in 0..p.k {
            for _r in 0..t.m {
                for lane in 0..t.n {
                    l.vrf_fpu.b_down += 1;
                    l.vrf_fpu.cd_down += 1;
                    l.vrf_fpu.d_up += 1;
                    if lane % fpus == 0 {
                        l.srf_fpu.a_down += 1;
                    }
                }
            }
        }
    }
    l
}

pub fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
}

pub fn all_options() -> Vec<BufferingOptions> {
    let mut v = Vec::new();
    for interk_vrf in [false, true] {
        for interk_buf in [BufResidency::None, BufResidency::TileK, BufResidency::FullK] {
            for c_is_zero in [false, true] {
                v.push(BufferingOptions { interk_vrf, interk_buf, c_is_zero });
            }
        }
    }
    v
}

pub mod exhaustive {
    use super::*;
    use mx_core::config::{validate, MachineConfig};
    use mx_core::cost_model::{baseline_transfers, mem_vrf_transfers, mx_transfers, vrf_buf_transfers};
    use mx_core::kernels::Layout;
    use mx_core::machine::Memory;
    use mx_core::sim::{simulate, Exec};

    #[derive(Debug, Default)]
    pub struct Outcome {
        pub checked: usize,
        pub mismatches: Vec<String>,
    }

    impl Outcome {
        fn check<T: PartialEq + std::fmt::Debug>(&mut self, what: impl FnOnce() -> String, formula: T, trace: T) {
            self.checked += 1;
            if formula != trace && self.mismatches.len() < 20 {
                self.mismatches.push(format!("{}: formula {formula:?} trace {trace:?}", what()));
            }
        }
    }

    fn pow2_divisors(n: usize) -> Vec<usize> {
        divisors(n).into_iter().filter(|d| d.is_power_of_two() && *d >= 2).collect()
    }

    /// Relaxed sub-tile sizes and a buffer large enough for any of them.
    pub fn machine() -> MachineConfig {
        MachineConfig { strict_subtile_sizes: false, buffer_bytes: 2048, ..MachineConfig::default() }
    }

    /// Closed form vs trace for every divisor tiling of every problem up to
    /// `limit` in each dimension, and closed form vs trace vs simulator for
    /// every valid kernel configuration among them.
    pub fn run(limit: usize) -> Outcome {
        let mut out = Outcome::default();
        let cfg = machine();
        let mem_opts: Vec<BufferingOptions> =
            all_options().into_iter().filter(|o| o.interk_buf == BufResidency::None).collect();
        for pm in 1..=limit {
            for pn in 1..=limit {
                for pk in 1..=limit {
                    let p = ProblemShape::new(pm, pn, pk);
                    for &m in &divisors(pm) {
                        for &n in &divisors(pn) {
                            for &k in &divisors(pk) {
                                let t = TileConfig::new(m, n, k);
                                for o in &mem_opts {
                                    out.check(
                                        || format!("mem_vrf {p} tile {t} {o:?}"),
                                        mem_vrf_transfers(&p, &t, o),
                                        trace_mem_vrf(p, t, *o),
                                    );
                                }
                            }
                            let t = TileConfig::new(m, n, 1);
                            for fpus in [1, 2, 4, 8] {
                                out.check(
                                    || format!("baseline {p} tile {t} F={fpus}"),
                                    baseline_transfers(&p, &t, fpus).unwrap(),
                                    trace_baseline(p, t, fpus),
                                );
                            }
                            if validate(p, t, None, &cfg).is_ok() {
                                out.check(
                                    || format!("baseline run {p} tile {t}"),
                                    baseline_transfers(&p, &t, cfg.fpus).unwrap(),
                                    run_ledger(p, t, None, &cfg),
                                );
                            }
                        }
                    }
                    mx_configs(p, &cfg, &mut out);
                }
            }
        }
        out
    }

    fn mx_configs(p: ProblemShape, cfg: &MachineConfig, out: &mut Outcome) {
        for &sm in &pow2_divisors(p.m) {
            for &sn in &pow2_divisors(p.n) {
                for &sk in &pow2_divisors(p.k) {
                    let mut b = 1;
                    while b * sn <= p.n {
                        if p.n.is_multiple_of(b * sn) {
                            let t = TileConfig::new(sm, b * sn, sk);
                            let s = SubTileConfig::new(sm, sn, sk, b);
                            if validate(p, t, Some(s), cfg).is_ok() {
                                mx_one(p, t, s, cfg, out);
                            }
                        }
                        b *= 2;
                    }
                }
            }
        }
    }

    fn mx_one(p: ProblemShape, t: TileConfig, s: SubTileConfig, cfg: &MachineConfig, out: &mut Outcome) {
        for fpus in [1, 2, 4, 8] {
            out.check(
                || format!("mx {p} tile {t} sub {s} F={fpus}"),
                mx_transfers(&p, &t, &s, fpus),
                trace_mx(p, t, s, fpus),
            );
        }
        for o in all_options() {
            if o.interk_buf == BufResidency::FullK && s.bcast != 1 {
                continue;
            }
            out.check(
                || format!("vrf_buf {p} tile {t} sub {s} {o:?}"),
                vrf_buf_transfers(&p, &t, &s, &o),
                trace_vrf_buf(p, t, s, o),
            );
        }
        out.check(
            || format!("mx run {p} tile {t} sub {s}"),
            mx_transfers(&p, &t, &s, cfg.fpus),
            run_ledger(p, t, Some(s), cfg),
        );
    }

    fn run_ledger(p: ProblemShape, t: TileConfig, s: Option<SubTileConfig>, cfg: &MachineConfig) -> TransferLedger {
        let v = validate(p, t, s, cfg).unwrap();
        let image = Memory::new(Layout::new(p, cfg.element).bytes);
        simulate(&v, &image, Exec::Sequential).expect("valid configuration runs").report.ledgers
    }
}

pub mod random {
    use mx_core::config::{validate, ElementType, MachineConfig, ProblemShape, SubTileConfig, TileConfig, Validated};
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn pick<R: Rng>(rng: &mut R, xs: &[usize]) -> usize {
        *xs.choose(rng).unwrap()
    }

    /// A random valid configuration: either kernel, any element type, strict
    /// or relaxed sub-tile sizes, one to three cores.
    pub fn config<R: Rng>(rng: &mut R) -> Validated {
        loop {
            let element = *[ElementType::F64, ElementType::F32, ElementType::I32].choose(rng).unwrap();
            let strict = rng.gen_bool(0.5);
            let machine = MachineConfig {
                element,
                strict_subtile_sizes: strict,
                buffer_bytes: if strict { 256 } else { 1024 },
                cores: rng.gen_range(1..=3),
                ..MachineConfig::default()
            };
            let reps = |rng: &mut R| rng.gen_range(1..=3);
            let (tile, sub) = if rng.gen_bool(0.4) {
                (TileConfig::new(rng.gen_range(1..=8), pick(rng, &[1, 2, 3, 4, 8, 16, 32]), 1), None)
            } else {
                let sizes: &[usize] = if strict { &[4, 8] } else { &[2, 4, 8] };
                let s = SubTileConfig::new(pick(rng, sizes), pick(rng, sizes), pick(rng, sizes), pick(rng, &[1, 2, 4]));
                (TileConfig::new(s.m, s.n * s.bcast, s.k), Some(s))
            };
            let p = ProblemShape::new(tile.m * reps(rng), tile.n * reps(rng), tile.k.max(1) * rng.gen_range(1..=8));
            if let Ok(v) = validate(p, tile, sub, &machine) {
                return v;
            }
        }
    }
}

pub mod oracle {
    use mx_core::config::Validated;
    use mx_core::kernels::{golden_matmul, max_relative_error, relative_tolerance, Matrix, SumOrder};
    use mx_core::sim::{run_random, Exec};

    #[derive(Debug)]
    pub struct Check {
        pub bit_exact: bool,
        pub rel_error: f64,
        pub tolerance: f64,
    }

    impl Check {
        pub fn passed(&self) -> bool {
            self.bit_exact && self.rel_error <= self.tolerance
        }
    }

    pub fn check(v: &Validated, seed: u64) -> Check {
        let (a, b, d, _) = run_random(v, seed, Exec::Parallel).expect("valid configuration runs");
        let c = Matrix::zeros(v.problem.m, v.problem.n, v.machine.element);
        let defined = golden_matmul(&a, &b, &c, SumOrder::Defined).unwrap();
        let free = golden_matmul(&a, &b, &c, SumOrder::Free).unwrap();
        Check {
            bit_exact: d == defined,
            rel_error: max_relative_error(&d, &free, &a, &b, &c),
            tolerance: relative_tolerance(v.machine.element),
        }
    }
}
