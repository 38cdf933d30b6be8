use mpsntk_core::born::{integrate_born_flow, BornModel};
use mpsntk_core::chain::{ChainSpec, TensorChain};
use mpsntk_core::dataset;
use mpsntk_core::flow::Integrator;

fn main() {
    let n = 6;
    let spec = ChainSpec::uniform(n, 2, 64, true);
    let strings = dataset::random_binary_strings(4, n, 17).unwrap();
    for seed in 0..20u64 {
        let chain = TensorChain::init_random(&spec, &[1.0; 6], 100 + seed).unwrap();
        let model = BornModel::new(chain, strings.clone()).unwrap();
        let traj0 = integrate_born_flow(&model, 0.0, Integrator::Rk4 { dt: 1.0 }, 1).unwrap();
        let t_char = traj0.characteristic_time_at_init(4).unwrap();
        let traj = integrate_born_flow(&model, 10.0 * t_char, Integrator::Rk4 { dt: t_char / 40.0 }, 4).unwrap();
        for j in 0..4 {
            let probs: Vec<f64> = traj.probs.iter().map(|p| p[j]).collect();
            let r = mpsntk_core::stats::fit_decay_rate_with_floor(&traj.times, &probs, 0.25, 0.1);
            if r.is_none() {
                println!("seed {seed} string {j}: None. P head: {:?}", &probs[..6.min(probs.len())]);
                println!("  P0 = {:.6}, residual0 = {:.6}", probs[0], (probs[0]-0.25f64).abs());
            }
        }
    }
    println!("done");
}
