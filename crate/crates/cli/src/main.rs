//! `mxsim`: cost-model predictions, kernel simulation, verification and
//! configuration search for the matrix-extension machine.

mod args;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mx_core::config::{KernelKind, MachineConfig};
use mx_core::config_file::{Expected, RunConfig};
use mx_core::cost_model::EnergyCoefficients;
use mx_core::explore::{explore, Candidate, RankBy, SearchSpace};
use mx_core::isa::parse_assembly;
use mx_core::kernels::{
    gen_kernel_tiles, golden_matmul, max_relative_error, partition, relative_tolerance, Matrix, SumOrder, TileGrid,
};
use mx_core::sim::{run_random, CostOptions, Exec, Prediction, Verification};
use mx_core::{MachineState, Memory, RunReport, Validated};
use serde::Serialize;

use args::{parse_cost_options, parse_energy, ConfigArgs, Format};
use error::CliError;
use output::{config_columns, describe, ledger_columns, ledger_table, metric, write_csv, write_json, Row};

#[derive(Debug, Parser)]
#[command(name = "mxsim", version, about = "Matrix-extension cost model and simulator")]
struct Cli {
    /// Evaluate cores and candidates on one thread
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form transfer ledgers and metrics
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        /// Buffering assumptions, e.g. interk_vrf=0,c_zero=1,interk_buf=fullk
        #[arg(long, default_value = "")]
        opts: String,
        /// Energy coefficients, e.g. e_mem=10,e_vrf=3
        #[arg(long, default_value = "")]
        energy: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Run a generated kernel or an assembly file
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        kernel: Option<KernelArg>,
        /// Assembly program (`.mxasm`) to run instead of a generated kernel
        #[arg(long, conflicts_with = "kernel")]
        asm: Option<PathBuf>,
        /// Initial memory image for --asm
        #[arg(long, requires = "asm")]
        init: Option<PathBuf>,
        /// Memory size in bytes for --asm without --init
        #[arg(long, default_value_t = 1 << 16, requires = "asm")]
        mem_bytes: usize,
        /// Write the final memory image here
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Compare D with the golden result on random inputs
        #[arg(long, conflicts_with = "asm")]
        check: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Simulate, predict and check numerics; exit 3 on any difference
    Verify {
        #[command(flatten)]
        config: ConfigArgs,
        /// Verify every `.cfg` file in a directory
        #[arg(long, conflicts_with = "config")]
        dir: Option<PathBuf>,
        #[arg(long, default_value = "")]
        opts: String,
        /// Swap the MAC source operands in the generated kernel
        #[arg(long)]
        swap_operands: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Rank every valid tiling in a search space
    Explore {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        tile_m: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        tile_n: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        tile_k: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        sub_m: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        sub_n: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        sub_k: Option<Vec<usize>>,
        /// Kernel families to include
        #[arg(long, value_enum, value_delimiter = ',')]
        kinds: Option<Vec<KernelArg>>,
        #[arg(long, value_enum, default_value_t = RankArg::Energy)]
        rank: RankArg,
        #[arg(long, default_value = "")]
        energy: String,
        /// Show only the best N
        #[arg(long)]
        top: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Print the generated kernel as `.mxasm` text
    Emit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Emit the program of this core only
        #[arg(long)]
        core: Option<usize>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Baseline,
    Mx,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Baseline => KernelKind::Baseline,
            KernelArg::Mx => KernelKind::Mx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankArg {
    Energy,
    Ai,
    Transfers,
}

impl From<RankArg> for RankBy {
    fn from(r: RankArg) -> Self {
        match r {
            RankArg::Energy => RankBy::Energy,
            RankArg::Ai => RankBy::Ai,
            RankArg::Transfers => RankBy::Transfers,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mxsim: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command, exec: Exec) -> Result<(), CliError> {
    match command {
        Command::Predict { config, opts, energy, format } => cmd_predict(&config, &opts, &energy, format),
        Command::Simulate { config, kernel, asm, init, mem_bytes, dump, check, seed, format } => match asm {
            Some(path) => cmd_simulate_asm(&config, &path, init.as_deref(), mem_bytes, dump.as_deref(), format),
            None => cmd_simulate(&config, kernel, check, seed, dump.as_deref(), format, exec),
        },
        Command::Verify { config, dir, opts, swap_operands, seed, format } => {
            let opts = parse_cost_options(&opts)?;
            let configs = match dir {
                Some(dir) => load_dir(&dir, &config)?,
                None => vec![config.resolve()?],
            };
            cmd_verify(&configs, &opts, swap_operands, seed, format, exec)
        }
        Command::Explore { config, tile_m, tile_n, tile_k, sub_m, sub_n, sub_k, kinds, rank, energy, top, format } => {
            let d = SearchSpace::default();
            let space = SearchSpace {
                tile_m: tile_m.unwrap_or(d.tile_m),
                tile_n: tile_n.unwrap_or(d.tile_n),
                tile_k: tile_k.unwrap_or(d.tile_k),
                sub_m: sub_m.unwrap_or(d.sub_m),
                sub_n: sub_n.unwrap_or(d.sub_n),
                sub_k: sub_k.unwrap_or(d.sub_k),
                kinds: kinds.map(|k| k.into_iter().map(Into::into).collect()).unwrap_or(d.kinds),
            };
            cmd_explore(&config, &space, rank.into(), &parse_energy(&energy)?, top, format, exec)
        }
        Command::Emit { config, core, output } => cmd_emit(&config, core, output.as_deref()),
    }
}

fn validated(rc: &RunConfig) -> Result<Validated, CliError> {
    rc.validate().map_err(|e| CliError::Validation(e.to_string()))
}

#[derive(Serialize)]
struct PredictOut<'a> {
    name: Option<&'a str>,
    config: &'a Validated,
    options: &'a CostOptions,
    prediction: &'a Prediction,
}

fn cmd_predict(config: &ConfigArgs, opts: &str, energy: &str, format: Format) -> Result<(), CliError> {
    let rc = config.resolve()?;
    let v = validated(&rc)?;
    let opts = parse_cost_options(opts)?;
    let p = mx_core::predict(&v, &opts, &parse_energy(energy)?);
    match format {
        Format::Json => {
            write_json(&PredictOut { name: rc.name.as_deref(), config: &v, options: &opts, prediction: &p })
        }
        Format::Csv => write_csv(&[prediction_row(rc.name.as_deref(), &v, &p)]),
        Format::Table => {
            println!("{}", describe(rc.name.as_deref(), &v));
            print!("{}", ledger_table(&p.ledgers, None));
            println!("mem_vrf total         {}", p.mem_vrf_total);
            println!("arithmetic intensity  {:.4} FLOP/B", p.arithmetic_intensity);
            println!("SIMD ratio            {} MAC/insn", p.simd_ratio);
            println!("instructions          {}", p.instructions.total);
            println!("energy                {}", p.energy);
            Ok(())
        }
    }
}

fn prediction_row(name: Option<&str>, v: &Validated, p: &Prediction) -> Row {
    let mut row = config_columns(name, v);
    ledger_columns(&mut row, &p.ledgers);
    metric(&mut row, "mem_vrf_total", p.mem_vrf_total);
    metric(&mut row, "arithmetic_intensity", p.arithmetic_intensity);
    metric(&mut row, "simd_ratio", p.simd_ratio);
    metric(&mut row, "instructions", p.instructions.total);
    metric(&mut row, "energy", p.energy);
    row
}

fn report_row(name: Option<&str>, v: &Validated, r: &RunReport) -> Row {
    let mut row = config_columns(name, v);
    ledger_columns(&mut row, &r.ledgers);
    report_metrics(&mut row, r);
    row
}

fn report_metrics(row: &mut Row, r: &RunReport) {
    metric(row, "mem_vrf_total", r.ledgers.mem_vrf.total());
    metric(row, "macs", r.macs);
    metric(row, "instructions", r.insns.total);
    metric(row, "cycles", r.cycles);
    metric(row, "utilization", r.utilization);
    metric(row, "simd_ratio_comp", r.simd_ratio_comp);
    metric(row, "simd_ratio_all", r.simd_ratio_all);
    metric(row, "buffer_peak_bytes", r.buffer_peak_bytes);
}

fn report_table(r: &RunReport) {
    print!("{}", ledger_table(&r.ledgers, None));
    println!("mem_vrf total     {}", r.ledgers.mem_vrf.total());
    println!("MACs              {}", r.macs);
    println!("instructions      {}", r.insns.total);
    println!("cycles            {}", r.cycles);
    println!("utilization       {:.4}", r.utilization);
    println!("SIMD ratio        {} (comp), {} (all)", r.simd_ratio_comp, r.simd_ratio_all);
    println!("buffer peak       {} B", r.buffer_peak_bytes);
}

struct Check {
    bit_exact: bool,
    max_relative_error: f64,
    tolerance: f64,
}

fn oracle_check(a: &Matrix, b: &Matrix, d: &Matrix) -> Check {
    let c = Matrix::zeros(d.rows, d.cols, d.element);
    let defined = golden_matmul(a, b, &c, SumOrder::Defined).expect("conformant");
    let free = golden_matmul(a, b, &c, SumOrder::Free).expect("conformant");
    Check {
        bit_exact: *d == defined,
        max_relative_error: max_relative_error(d, &free, a, b, &c),
        tolerance: relative_tolerance(d.element),
    }
}

fn cmd_simulate(
    config: &ConfigArgs,
    kernel: Option<KernelArg>,
    check: bool,
    seed: u64,
    dump: Option<&Path>,
    format: Format,
    exec: Exec,
) -> Result<(), CliError> {
    let rc = config.resolve()?;
    let v = validated(&rc)?;
    if let Some(k) = kernel {
        let wanted: KernelKind = k.into();
        if wanted != v.kind() {
            let hint = match wanted {
                KernelKind::Mx => "--kernel mx needs --subtile",
                KernelKind::Baseline => "--kernel baseline takes no --subtile",
            };
            return Err(CliError::Validation(hint.into()));
        }
    }
    let (a, b, d, report) = run_random(&v, seed, exec)?;
    if let Some(path) = dump {
        let layout = mx_core::kernels::Layout::new(v.problem, v.machine.element);
        let mut image = layout.image(&a, &b).expect("inputs match the layout");
        for i in 0..d.rows {
            for j in 0..d.cols {
                let addr = layout.d + (i * d.cols + j) * v.machine.element.width_bytes();
                image.write(addr as i64, v.machine.element.width_bytes(), d.bits(i, j)).expect("D fits the layout");
            }
        }
        std::fs::write(path, image.as_bytes()).map_err(|e| CliError::io(path, e))?;
    }
    emit_report(rc.name.as_deref(), Some(&v), &report, format)?;
    if check {
        let c = oracle_check(&a, &b, &d);
        let ok = c.bit_exact && c.max_relative_error <= c.tolerance;
        eprintln!(
            "check: {} (bit-exact {}, max relative error {:.3e}, tolerance {:.0e})",
            if ok { "PASS" } else { "FAIL" },
            c.bit_exact,
            c.max_relative_error,
            c.tolerance
        );
        if !ok {
            return Err(CliError::Mismatch("D differs from the golden result".into()));
        }
    }
    Ok(())
}

fn emit_report(name: Option<&str>, v: Option<&Validated>, r: &RunReport, format: Format) -> Result<(), CliError> {
    match (format, v) {
        (Format::Json, _) => write_json(r),
        (Format::Csv, Some(v)) => write_csv(&[report_row(name, v, r)]),
        (Format::Csv, None) => {
            let mut row = Row::new();
            ledger_columns(&mut row, &r.ledgers);
            report_metrics(&mut row, r);
            write_csv(&[row])
        }
        (Format::Table, v) => {
            if let Some(v) = v {
                println!("{}", describe(name, v));
            }
            report_table(r);
            Ok(())
        }
    }
}

fn cmd_simulate_asm(
    config: &ConfigArgs,
    path: &Path,
    init: Option<&Path>,
    mem_bytes: usize,
    dump: Option<&Path>,
    format: Format,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let program = parse_assembly(&text).map_err(|errors| {
        let list: Vec<String> = errors.iter().map(ToString::to_string).collect();
        CliError::Validation(format!("{}: {}", path.display(), list.join("; ")))
    })?;
    let mut machine = MachineConfig::default();
    if let Some(e) = program.element() {
        machine.element = e;
    }
    let machine = config.machine_overrides(machine)?;
    if let Some(e) = program.element() {
        if e != machine.element {
            return Err(CliError::Validation(format!(
                "program declares {e} but the machine is configured for {}",
                machine.element
            )));
        }
    }
    let memory = match init {
        Some(p) => Memory::from_bytes(std::fs::read(p).map_err(|e| CliError::io(p, e))?),
        None => Memory::new(mem_bytes),
    };
    let mut state = MachineState::new(machine, memory);
    let report = state.run(&program)?;
    if let Some(p) = dump {
        std::fs::write(p, state.memory.as_bytes()).map_err(|e| CliError::io(p, e))?;
    }
    emit_report(None, None, &report, format)
}

#[derive(Serialize)]
struct VerifyOut<'a> {
    name: Option<&'a str>,
    config: &'a Validated,
    verification: &'a Verification,
    expected_mismatches: &'a [String],
    passed: bool,
}

/// Differences from the reference values recorded in a config file.
fn expected_mismatches(e: Option<&Expected>, v: &Verification, p: &Prediction) -> Vec<String> {
    let Some(e) = e else { return Vec::new() };
    let mut out = Vec::new();
    if let Some(t) = e.mem_vrf_total {
        for (what, got) in [("predicted", p.mem_vrf_total), ("simulated", v.measured.mem_vrf.total())] {
            if got != t {
                out.push(format!("{what} mem_vrf total {got} != expected {t}"));
            }
        }
    }
    if let Some(ai) = e.arithmetic_intensity {
        let got = (p.arithmetic_intensity * 100.0).round() / 100.0;
        if (got - ai).abs() > 1e-9 {
            out.push(format!("arithmetic intensity {got:.2} != expected {ai:.2}"));
        }
    }
    if let Some(r) = e.simd_ratio {
        if (v.report.simd_ratio_comp - r).abs() > 1e-9 {
            out.push(format!("measured SIMD ratio {} != expected {r}", v.report.simd_ratio_comp));
        }
    }
    out
}

fn cmd_verify(
    configs: &[RunConfig],
    opts: &CostOptions,
    swap: bool,
    seed: u64,
    format: Format,
    exec: Exec,
) -> Result<(), CliError> {
    let mut failed = Vec::new();
    let mut json = Vec::new();
    let mut rows = Vec::new();
    for rc in configs {
        let v = validated(rc)?;
        let name = rc.name.as_deref();
        let ver = mx_core::verify(&v, opts, seed, exec, swap)?;
        let p = mx_core::predict(&v, opts, &EnergyCoefficients::ZERO);
        let exp = expected_mismatches(rc.expected.as_ref(), &ver, &p);
        let passed = ver.passed && exp.is_empty();
        if !passed {
            failed.push(name.map(str::to_owned).unwrap_or_else(|| describe(None, &v)));
        }
        match format {
            Format::Json => json.push(
                serde_json::to_value(VerifyOut {
                    name,
                    config: &v,
                    verification: &ver,
                    expected_mismatches: &exp,
                    passed,
                })
                .expect("reports serialize"),
            ),
            Format::Csv => {
                let mut row = config_columns(name, &v);
                ledger_columns(&mut row, &ver.measured);
                metric(&mut row, "passed", passed);
                let diff = ver.first_diff.as_ref().map(|d| format!("{}.{}", d.boundary.name(), d.term));
                metric(&mut row, "first_diff", diff.unwrap_or_default());
                metric(&mut row, "census_matches", ver.census_matches);
                metric(&mut row, "bit_exact", ver.bit_exact);
                metric(&mut row, "max_relative_error", ver.max_relative_error);
                metric(&mut row, "tolerance", ver.tolerance);
                rows.push(row);
            }
            Format::Table => print_verification(name, &v, &ver, &exp, passed),
        }
    }
    match format {
        Format::Json => write_json(&json)?,
        Format::Csv => write_csv(&rows)?,
        Format::Table => {}
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Mismatch(format!("verification failed: {}", failed.join(", "))))
    }
}

fn print_verification(name: Option<&str>, v: &Validated, ver: &Verification, exp: &[String], passed: bool) {
    println!("{} {}", if passed { "PASS" } else { "FAIL" }, describe(name, v));
    if !ver.ledgers_match() {
        print!("{}", ledger_table(&ver.predicted, Some(&ver.measured)));
    }
    if let Some(d) = &ver.first_diff {
        println!("  first difference: {}.{} predicted {} measured {}", d.boundary.name(), d.term, d.expected, d.actual);
    }
    if !ver.census_matches {
        println!("  instruction census differs from the analytic count");
    }
    if !ver.numerics_pass() {
        println!(
            "  oracle check failed: bit-exact {}, max relative error {:.3e} (tolerance {:.0e})",
            ver.bit_exact, ver.max_relative_error, ver.tolerance
        );
    }
    for e in exp {
        println!("  {e}");
    }
}

fn load_dir(dir: &Path, overrides: &ConfigArgs) -> Result<Vec<RunConfig>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Validation(format!("no .cfg files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let rc = RunConfig::load(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            Ok(RunConfig { machine: overrides.machine_overrides(rc.machine)?, ..rc })
        })
        .collect()
}

fn cmd_explore(
    config: &ConfigArgs,
    space: &SearchSpace,
    rank: RankBy,
    coeffs: &EnergyCoefficients,
    top: Option<usize>,
    format: Format,
    exec: Exec,
) -> Result<(), CliError> {
    let (problem, machine) = match &config.config {
        Some(_) => {
            let rc = config.resolve()?;
            (rc.problem, rc.machine)
        }
        None => {
            let p = config.problem.ok_or_else(|| CliError::Validation("--problem is required".into()))?;
            (p, config.machine_overrides(MachineConfig::default())?)
        }
    };
    let mut ranked = explore(problem, &machine, space, rank, coeffs, exec)
        .map_err(|e| CliError::Validation(format!("{e} for {problem}")))?;
    if let Some(n) = top {
        ranked.truncate(n);
    }
    match format {
        Format::Json => write_json(&ranked),
        Format::Csv => {
            let rows: Vec<Row> = ranked
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let v = Validated { problem, tile: c.tile, sub: c.sub, machine };
                    let mut row = vec![("rank".to_string(), (i + 1).to_string())];
                    row.extend(prediction_row(None, &v, &c.prediction));
                    row
                })
                .collect();
            write_csv(&rows)
        }
        Format::Table => {
            println!(
                "{:>4}  {:<9}{:<10}{:<14}{:>12}{:>8}{:>10}{:>14}",
                "rank", "kind", "tile", "sub-tile", "mem_vrf", "AI", "SIMD", "energy"
            );
            for (i, c) in ranked.iter().enumerate() {
                print_candidate(i + 1, c);
            }
            Ok(())
        }
    }
}

fn print_candidate(rank: usize, c: &Candidate) {
    let kind = if c.sub.is_some() { "mx" } else { "baseline" };
    let sub = c.sub.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
    let p = &c.prediction;
    println!(
        "{rank:>4}  {kind:<9}{:<10}{sub:<14}{:>12}{:>8.2}{:>10}{:>14}",
        c.tile.to_string(),
        p.mem_vrf_total,
        p.arithmetic_intensity,
        p.simd_ratio,
        p.energy
    );
}

fn cmd_emit(config: &ConfigArgs, core: Option<usize>, output: Option<&Path>) -> Result<(), CliError> {
    let rc = config.resolve()?;
    let v = validated(&rc)?;
    let ranges = partition(TileGrid::of(&v).count(), v.machine.cores);
    let cores: Vec<usize> = match core {
        Some(c) if c < ranges.len() => vec![c],
        Some(c) => return Err(CliError::Validation(format!("core {c} does not exist ({} cores)", ranges.len()))),
        None => (0..ranges.len()).collect(),
    };
    let mut text = String::new();
    for c in cores {
        if ranges.len() > 1 {
            text.push_str(&format!("# core {c}: output tiles {:?}\n", ranges[c]));
        }
        text.push_str(&gen_kernel_tiles(&v, ranges[c].clone()).to_string());
    }
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
