use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mx_core::config::{validate, MachineConfig, ProblemShape, SubTileConfig, TileConfig};
use mx_core::cost_model::EnergyCoefficients;
use mx_core::explore::{explore, RankBy, SearchSpace};
use mx_core::kernels::Layout;
use mx_core::machine::Memory;
use mx_core::sim::{simulate, Exec};

fn multi_core_simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_128_cube_64_cores");
    group.sample_size(10);
    let cfg = MachineConfig::many_core();
    let v = validate(ProblemShape::cube(128), TileConfig::new(8, 32, 8), Some(SubTileConfig::new(8, 4, 8, 8)), &cfg)
        .unwrap();
    let image = Memory::new(Layout::new(v.problem, cfg.element).bytes);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| simulate(&v, &image, exec).unwrap())
        });
    }
    group.finish();
}

fn explore_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("explore_256_cube");
    let space = SearchSpace {
        tile_m: vec![2, 4, 8],
        tile_n: vec![4, 8, 16, 32, 64],
        tile_k: vec![1, 2, 4, 8],
        sub_m: vec![2, 4, 8],
        sub_n: vec![2, 4, 8],
        sub_k: vec![2, 4, 8],
        kinds: vec![mx_core::KernelKind::Baseline, mx_core::KernelKind::Mx],
    };
    let cfg = MachineConfig { strict_subtile_sizes: false, ..MachineConfig::many_core() };
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| {
                explore(ProblemShape::cube(256), &cfg, &space, RankBy::Energy, &EnergyCoefficients::default(), exec)
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, multi_core_simulation, explore_sweep);
criterion_main!(benches);
