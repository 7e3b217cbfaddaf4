//! Whole-problem entry points: analytic prediction, multi-core simulation and
//! the simulate-vs-predict-vs-oracle cross-check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::TileConfig;
use crate::config::{KernelKind, Validated};
use crate::cost_model::{
    arithmetic_intensity, baseline_transfers, buf_fpu_transfers, energy_estimate, mem_vrf_transfers, operand_reach,
    predicted_simd_ratio, vrf_buf_transfers, BufferingOptions, EnergyCoefficients,
};
use crate::kernels::{
    analytic_census_all, gen_kernel_tiles, golden_matmul, max_relative_error, partition, relative_tolerance,
    swap_mac_operands, Layout, Matrix, SumOrder, TileGrid,
};
use crate::ledger::{Boundary, TransferLedger};
use crate::machine::{Counters, InstructionCensus, MachineState, Memory, RunReport, SimError};

/// How independent cores are evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, and runs
    /// sequentially otherwise.
    #[default]
    Parallel,
}

/// Maps `f` over `items`, in parallel when requested and available.
pub fn map_exec<T, R, F>(exec: Exec, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}

/// Buffering assumptions behind a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostOptions {
    pub mem_vrf: BufferingOptions,
    pub vrf_buf: BufferingOptions,
}

impl Default for CostOptions {
    /// What the generated kernels and the default machine do.
    fn default() -> Self {
        Self { mem_vrf: BufferingOptions::KERNEL, vrf_buf: BufferingOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub kind: KernelKind,
    pub ledgers: TransferLedger,
    pub mem_vrf_total: u64,
    pub arithmetic_intensity: f64,
    /// MACs per computational instruction.
    pub simd_ratio: f64,
    pub instructions: InstructionCensus,
    pub energy: f64,
}

/// Closed-form ledgers and metrics; no simulation involved.
pub fn predict(v: &Validated, opts: &CostOptions, coeffs: &EnergyCoefficients) -> Prediction {
    let p = v.problem;
    let f = v.machine.fpus;
    let ledgers = match v.sub {
        None => {
            let mut l = baseline_transfers(&p, &v.tile, f).expect("validated baseline has k = 1");
            l.mem_vrf = mem_vrf_transfers(&p, &v.tile, &opts.mem_vrf);
            l
        }
        Some(s) => TransferLedger {
            mem_vrf: mem_vrf_transfers(&p, &TileConfig::new(s.m, s.bcast * s.n, v.tile.k), &opts.mem_vrf),
            vrf_buf: vrf_buf_transfers(&p, &v.tile, &s, &opts.vrf_buf),
            buf_fpu: buf_fpu_transfers(&p, operand_reach(s.m, f), operand_reach(s.n, f)),
            ..Default::default()
        },
    };
    let instructions = analytic_census_all(v);
    let mem = ledgers.mem_vrf.total();
    Prediction {
        kind: v.kind(),
        ledgers,
        mem_vrf_total: mem,
        arithmetic_intensity: arithmetic_intensity(&p, mem, v.machine.element.width_bytes()),
        simd_ratio: predicted_simd_ratio(v.kind(), &v.tile, v.sub.as_ref()),
        energy: energy_estimate(&ledgers, instructions.total, coeffs),
        instructions,
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: RunReport,
    pub memory: Memory,
    pub per_core: Vec<RunReport>,
}

/// Runs the kernel for `v` on `v.machine.cores` independent machines, each
/// owning a contiguous block of output tiles, and merges the results.
pub fn simulate(v: &Validated, image: &Memory, exec: Exec) -> Result<SimOutput, SimError> {
    simulate_with(v, image, exec, |p| p)
}

/// As [`simulate`], with every per-core program passed through `rewrite`.
pub fn simulate_with(
    v: &Validated,
    image: &Memory,
    exec: Exec,
    rewrite: impl Fn(crate::isa::Program) -> crate::isa::Program + Sync + Send,
) -> Result<SimOutput, SimError> {
    let ranges = partition(TileGrid::of(v).count(), v.machine.cores);
    let results = map_exec(exec, ranges, |r| {
        let program = rewrite(gen_kernel_tiles(v, r));
        let mut state = MachineState::new(v.machine, image.clone());
        let report = state.run(&program)?;
        Ok::<_, SimError>((state, report))
    });
    let mut memory = image.clone();
    let mut parts: Vec<(Counters, u64)> = Vec::with_capacity(results.len());
    let mut per_core = Vec::with_capacity(results.len());
    for r in results {
        let (state, report) = r?;
        memory.merge_written(&state.memory);
        parts.push((state.counters().clone(), report.cycles));
        per_core.push(report);
    }
    let report = RunReport::combine(&parts, v.machine.cores, v.machine.fpus);
    Ok(SimOutput { report, memory, per_core })
}

/// Random A and B for `v`, reproducible from `seed`.
pub fn random_inputs(v: &Validated, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = v.problem;
    let e = v.machine.element;
    let a = Matrix::random(p.m, p.k, e, &mut rng);
    let b = Matrix::random(p.k, p.n, e, &mut rng);
    (a, b)
}

/// Simulates on random inputs and returns the computed D with the report.
pub fn run_random(v: &Validated, seed: u64, exec: Exec) -> Result<(Matrix, Matrix, Matrix, RunReport), SimError> {
    let (a, b) = random_inputs(v, seed);
    let layout = Layout::new(v.problem, v.machine.element);
    let image = layout.image(&a, &b).expect("inputs match the layout");
    let out = simulate(v, &image, exec)?;
    Ok((a, b, layout.read_d(&out.memory), out.report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerDiff {
    pub boundary: Boundary,
    pub term: &'static str,
    pub expected: u64,
    pub actual: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    pub predicted: TransferLedger,
    pub measured: TransferLedger,
    pub first_diff: Option<LedgerDiff>,
    pub census_matches: bool,
    pub bit_exact: bool,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub report: RunReport,
    pub passed: bool,
}

impl Verification {
    pub fn ledgers_match(&self) -> bool {
        self.first_diff.is_none()
    }

    pub fn numerics_pass(&self) -> bool {
        self.bit_exact && self.max_relative_error <= self.tolerance
    }
}

/// Simulates with random inputs, then compares the ledgers with [`predict`]
/// and D with the golden result. `swap_operands` injects a faulty kernel.
pub fn verify(
    v: &Validated,
    opts: &CostOptions,
    seed: u64,
    exec: Exec,
    swap_operands: bool,
) -> Result<Verification, SimError> {
    let (a, b) = random_inputs(v, seed);
    let layout = Layout::new(v.problem, v.machine.element);
    let image = layout.image(&a, &b).expect("inputs match the layout");
    let out = if swap_operands {
        simulate_with(v, &image, exec, |p| swap_mac_operands(&p))?
    } else {
        simulate(v, &image, exec)?
    };
    let d = layout.read_d(&out.memory);
    let c = Matrix::zeros(v.problem.m, v.problem.n, v.machine.element);
    let defined = golden_matmul(&a, &b, &c, SumOrder::Defined).expect("conformant");
    let free = golden_matmul(&a, &b, &c, SumOrder::Free).expect("conformant");

    let prediction = predict(v, opts, &EnergyCoefficients::ZERO);
    let measured = out.report.ledgers;
    let first_diff = prediction.ledgers.first_difference(&measured).map(|(boundary, idx, expected, actual)| {
        LedgerDiff { boundary, term: crate::ledger::TERM_NAMES[idx], expected, actual }
    });
    let census_matches = prediction.instructions == out.report.insns;
    let bit_exact = d == defined;
    let max_rel = max_relative_error(&d, &free, &a, &b, &c);
    let tolerance = relative_tolerance(v.machine.element);
    let passed = first_diff.is_none() && census_matches && bit_exact && max_rel <= tolerance;
    Ok(Verification {
        predicted: prediction.ledgers,
        measured,
        first_diff,
        census_matches,
        bit_exact,
        max_relative_error: max_rel,
        tolerance,
        report: out.report,
        passed,
    })
}
