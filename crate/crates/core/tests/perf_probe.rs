//! Manual timing probes (ignored by default): `cargo test -p mpsntk-core
//! --test perf_probe -- --ignored --nocapture`.

use std::time::Instant;

use mpsntk_core::chain::{ChainSpec, TensorChain};
use mpsntk_core::features::FeatureMap;
use mpsntk_core::flow::{integrate_flow, Integrator, RecordOptions, RegressionTask};
use mpsntk_core::ntk::empirical_ntk;

#[test]
#[ignore]
fn probe_gemm_and_flow() {
    let n = 4;
    let d = 128;
    let spec = ChainSpec::uniform(n, 2, d, true);
    let chain = TensorChain::init_random(&spec, &vec![1.0; n], 1).unwrap();
    let maps: Vec<FeatureMap> = (0..n).map(|_| FeatureMap::trig()).collect();
    let points = mpsntk_core::dataset::equispaced(8, n, 0.0, 1.0).unwrap();

    // raw matmul throughput
    let a = chain.site(0).mat(0).clone();
    let b = chain.site(1).mat(0).clone();
    let reps = 2000;
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..reps {
        let c = &a * &b;
        acc += c[(0, 0)];
    }
    let dt = t0.elapsed().as_secs_f64();
    let flops = 2.0 * (d as f64).powi(3) * reps as f64;
    println!("gemm {d}x{d}: {:.3} ms/mult, {:.2} GFLOPS (acc {acc:.3})", 1e3 * dt / reps as f64, flops / dt / 1e9);

    // one empirical ntk (m = 8)
    let t0 = Instant::now();
    let k = empirical_ntk(&chain, &maps, &points).unwrap();
    println!("empirical ntk m=8 n=4 D=128: {:.1} ms (k00 {:.3})", 1e3 * t0.elapsed().as_secs_f64(), k.values()[(0, 0)]);

    // flow steps
    let labels: Vec<f64> = (0..8).map(|j| (j as f64 * 0.9).sin()).collect();
    let task = RegressionTask::new(points, labels, maps).unwrap();
    let t0 = Instant::now();
    let out = integrate_flow(
        chain,
        &task,
        1.0,
        Integrator::Rk4 { dt: 0.1 },
        &RecordOptions { stride: usize::MAX, snapshot_ntk: false },
    )
    .unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "rk4 10 steps D=128 n=4 m=8: {:.2} s ({:.1} ms/step), terminal loss {:.4}",
        dt,
        1e3 * dt / 10.0,
        out.trajectory.loss.last().unwrap()
    );
}
