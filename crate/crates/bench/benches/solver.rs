use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use milacbeam::linalg::cn_matrix;
use milacbeam::optimizer::{
    project_spectral_ball, solve_hybrid_milac, update_equalizers, update_milac_matrix,
    update_weights, PgdSettings, PgdWorkspace, WSubproblem,
};
use milacbeam::{DigitalPrecoders, MiLACMatrix, SolverOptions};
use milacbeam_bench::fixture;

fn state(
    n: usize,
    nt: usize,
    k: usize,
    nrf: usize,
) -> (
    milacbeam::SystemConfig,
    milacbeam::FreqChannel,
    MiLACMatrix,
    DigitalPrecoders,
) {
    let (cfg, ch) = fixture(n, nt, k, nrf, 1);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let p = project_spectral_ball(&cn_matrix(&mut rng, nt, nrf, 1.0));
    let mut w =
        DigitalPrecoders::new((0..n).map(|_| cn_matrix(&mut rng, nrf, k, 1.0)).collect()).unwrap();
    w.scale((cfg.total_power / w.power()).sqrt());
    (cfg, ch, p, w)
}

fn block_updates(c: &mut Criterion) {
    let mut g = c.benchmark_group("block-updates");
    for &(n, nt) in &[(16, 16), (64, 64)] {
        let (cfg, ch, p, w) = state(n, nt, 4, 4);
        let noise = cfg.scaled_noise_grid();
        let u = update_equalizers(&ch, &p, &w, &noise).unwrap();
        let om = update_weights(&ch, &p, &w, &u, &noise).unwrap();
        let id = format!("N{n}-NT{nt}");
        g.bench_with_input(BenchmarkId::new("equalizers+weights", &id), &(), |b, _| {
            b.iter(|| {
                let u = update_equalizers(&ch, &p, &w, &noise).unwrap();
                update_weights(&ch, &p, &w, &u, &noise).unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("precoder-bisection", &id), &(), |b, _| {
            b.iter(|| {
                WSubproblem::from_state(&ch, &p, &u, &om)
                    .unwrap()
                    .solve(cfg.total_power, 1e-8)
                    .unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("milac-pgd", &id), &(), |b, _| {
            let settings = PgdSettings {
                max_iters: 100,
                tol: 1e-6,
            };
            b.iter(|| {
                let ws = PgdWorkspace::from_state(&ch, &w, &u, &om).unwrap();
                update_milac_matrix(&p, &ws, settings).unwrap()
            })
        });
    }
    g.finish();
}

fn full_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("hybrid-milac-solve");
    g.sample_size(10);
    for &(n, nt, k) in &[(16, 16, 2), (64, 64, 4)] {
        let (cfg, ch) = fixture(n, nt, k, k, 3);
        let opts = SolverOptions::default();
        g.bench_function(format!("N{n}-NT{nt}-K{k}"), |b| {
            b.iter(|| {
                let mut rng = ChaCha20Rng::seed_from_u64(4);
                solve_hybrid_milac(&cfg, &ch, &opts, &mut rng).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, block_updates, full_solve);
criterion_main!(benches);
