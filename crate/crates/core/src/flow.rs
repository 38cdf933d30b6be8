//! Continuous-time gradient flow for squared-error regression on tensor
//! chains.
//!
//! The integrated system is the full nonlinear parameter-space flow
//!
//! ```text
//! dA(k)/dt = -eta_k * sum_j d_j * d psi(x_j) / d A(k),    d_j = psi_j - y_j,
//! ```
//!
//! with the same per-site rates `eta_k = (l_k r_k)^{-1/2}` that define the
//! empirical tangent kernel, so the induced response dynamics are exactly
//! `d psi_i / dt = -sum_j K_ij d_j`. The recorded loss is
//! `sum_j (psi_j - y_j)^2`. In the large-bond-dimension limit the kernel is
//! static and the response ODE has the closed-form solution
//! `psi(t) = y + exp(-t K) (psi(0) - y)`, evaluated spectrally by
//! [`ClosedFormResponse`]; [`compare_flow_to_closed_form`] measures the gap
//! between the two routes on one chain.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::chain::{ChainSpec, ChainTangent, TensorChain};
use crate::csvio;
use crate::error::{Error, Result};
use crate::features::{map_kernels, FeatureMap};
use crate::ntk::{analytic_ntk, empirical_ntk, KernelMatrix};
use crate::stats::{median, quantile, TrialPlan};

/// Loss blow-up factor that aborts an integration (signals `dt` too large).
const DIVERGENCE_FACTOR: f64 = 1e6;

/// Explicit integrators for the parameter flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Integrator {
    Euler { dt: f64 },
    Rk4 { dt: f64 },
}

impl Integrator {
    pub fn dt(&self) -> f64 {
        match self {
            Integrator::Euler { dt } | Integrator::Rk4 { dt } => *dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dt = self.dt();
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("integrator step must be positive, got {dt}")));
        }
        Ok(())
    }
}

/// Squared-error regression task: dataset, labels and per-site maps.
#[derive(Clone, Debug)]
pub struct RegressionTask {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub maps: Vec<FeatureMap>,
}

impl RegressionTask {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<f64>, maps: Vec<FeatureMap>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("regression task needs at least one sample".into()));
        }
        if points.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::Config("labels must be finite".into()));
        }
        let n = maps.len();
        for p in &points {
            if p.len() != n {
                return Err(Error::Shape(format!(
                    "point of length {} for {} feature maps",
                    p.len(),
                    n
                )));
            }
        }
        Ok(Self { points, labels, maps })
    }

    pub fn sample_count(&self) -> usize {
        self.points.len()
    }

    pub fn input_dim(&self) -> usize {
        self.maps.len()
    }

    pub fn label_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.labels)
    }

    /// Training direction `d = psi - y`.
    pub fn direction(&self, responses: &DVector<f64>) -> DVector<f64> {
        responses - self.label_vector()
    }

    pub fn loss(&self, responses: &DVector<f64>) -> f64 {
        self.labels
            .iter()
            .zip(responses.iter())
            .map(|(y, p)| (p - y) * (p - y))
            .sum()
    }

    /// Large-bond-limit kernel of this task for a chain with `sigmas`.
    pub fn analytic_kernel(&self, sigmas: &[f64]) -> Result<KernelMatrix> {
        analytic_ntk(&map_kernels(&self.maps), sigmas, &self.points)
    }
}

/// What [`integrate_flow`] records along the way.
#[derive(Clone, Copy, Debug)]
pub struct RecordOptions {
    /// Record every `stride`-th step (the initial and final states are
    /// always recorded).
    pub stride: usize,
    /// Take empirical-kernel snapshots on a doubling step grid
    /// (steps 0, 1, 2, 4, 8, ... and the final step).
    pub snapshot_ntk: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self { stride: 1, snapshot_ntk: false }
    }
}

/// Time-indexed record of one training run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Response vector over the dataset at each recorded time.
    pub responses: Vec<DVector<f64>>,
    pub loss: Vec<f64>,
    /// Running sup over sites of the max-abs tensor change from `t = 0`.
    pub param_drift: Vec<f64>,
    pub ntk_snapshots: Vec<(f64, KernelMatrix)>,
}

impl Trajectory {
    /// CSV columns: `t, loss, param_drift, psi_0..psi_{m-1}`.
    pub fn to_csv(&self) -> String {
        let m = self.responses.first().map_or(0, |r| r.len());
        let mut names: Vec<String> = vec!["t".into(), "loss".into(), "param_drift".into()];
        names.extend((0..m).map(|i| format!("psi_{i}")));
        let header: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let rows: Vec<Vec<String>> = (0..self.times.len())
            .map(|i| {
                let mut row = vec![
                    csvio::fmt_f64(self.times[i]),
                    csvio::fmt_f64(self.loss[i]),
                    csvio::fmt_f64(self.param_drift[i]),
                ];
                row.extend(self.responses[i].iter().map(|v| csvio::fmt_f64(*v)));
                row
            })
            .collect();
        csvio::render_csv(&header, &rows)
    }

    pub fn terminal_responses(&self) -> &DVector<f64> {
        self.responses.last().expect("trajectory has at least the initial snapshot")
    }
}

/// Result of one integration: the record plus the trained chain.
pub struct FlowOutcome {
    pub trajectory: Trajectory,
    pub chain: TensorChain,
}

/// Velocity of the parameter flow at the current state, plus the responses
/// and loss used for recording.
fn velocity(chain: &TensorChain, task: &RegressionTask) -> Result<(ChainTangent, DVector<f64>, f64)> {
    let etas = chain.learning_rates();
    let mut tangent = ChainTangent::zeros_like(chain);
    let mut responses = DVector::zeros(task.sample_count());
    for (j, x) in task.points.iter().enumerate() {
        let env = chain.environments(&task.maps, x)?;
        responses[j] = env.value();
        let d_j = env.value() - task.labels[j];
        if d_j == 0.0 {
            continue;
        }
        for (k, eta) in etas.iter().enumerate() {
            let grad = env.grad(k);
            for (s, &phi_s) in grad.phi.iter().enumerate() {
                let coef = -eta * d_j * phi_s;
                if coef != 0.0 {
                    crate::chain::mat_axpy(&mut tangent.sites[k][s], coef, &grad.core);
                }
            }
        }
    }
    let loss = task.loss(&responses);
    Ok((tangent, responses, loss))
}

fn responses_only(chain: &TensorChain, task: &RegressionTask) -> Result<DVector<f64>> {
    let mut r = DVector::zeros(task.sample_count());
    for (j, x) in task.points.iter().enumerate() {
        r[j] = chain.evaluate(&task.maps, x)?;
    }
    Ok(r)
}

/// Integrate the parameter-space flow to `t_end`, recording responses,
/// loss, parameter drift and optional kernel snapshots.
pub fn integrate_flow(
    chain: TensorChain,
    task: &RegressionTask,
    t_end: f64,
    integrator: Integrator,
    opts: &RecordOptions,
) -> Result<FlowOutcome> {
    integrator.validate()?;
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Config(format!("t_end must be nonnegative, got {t_end}")));
    }
    if opts.stride == 0 {
        return Err(Error::Config("record stride must be >= 1".into()));
    }
    chain.check_maps(&task.maps)?;

    let initial = chain.clone();
    let mut state = chain;
    let mut traj = Trajectory {
        times: Vec::new(),
        responses: Vec::new(),
        loss: Vec::new(),
        param_drift: Vec::new(),
        ntk_snapshots: Vec::new(),
    };

    let dt = integrator.dt();
    let steps = if t_end == 0.0 { 0 } else { (t_end / dt).ceil() as usize };
    let mut t = 0.0;
    let mut sup_drift = 0.0f64;
    let mut loss0 = f64::INFINITY;
    let mut next_snap = 0usize;

    for step in 0..=steps {
        let last = step == steps;
        let record = step % opts.stride == 0 || last;

        // Velocity at the current state; its responses/loss describe the
        // state before the step, which is what gets recorded.
        let (tangent, responses, loss) = if last {
            let r = responses_only(&state, task)?;
            let l = task.loss(&r);
            (ChainTangent::zeros_like(&state), r, l)
        } else {
            velocity(&state, task)?
        };

        if step == 0 {
            loss0 = loss;
        } else if loss > DIVERGENCE_FACTOR * loss0.max(1e-12) {
            return Err(Error::Numerical(format!(
                "loss diverged at t = {t}: {loss} vs initial {loss0}; reduce dt"
            )));
        }

        if record {
            sup_drift = sup_drift.max(state.max_param_diff(&initial));
            traj.times.push(t);
            traj.responses.push(responses);
            traj.loss.push(loss);
            traj.param_drift.push(sup_drift);
            if opts.snapshot_ntk && (step >= next_snap || last) {
                let snap = empirical_ntk(&state, &task.maps, &task.points)?.with_time(t);
                traj.ntk_snapshots.push((t, snap));
                next_snap = if step == 0 { 1 } else { step.saturating_mul(2) };
            }
        }
        if last {
            break;
        }

        // Last step is shortened to land exactly on t_end.
        let h = if step + 1 == steps { t_end - t } else { dt };
        match integrator {
            Integrator::Euler { .. } => {
                state.add_scaled_tangent(&tangent, h);
            }
            Integrator::Rk4 { .. } => {
                let k1 = tangent;
                let mut s2 = state.clone();
                s2.add_scaled_tangent(&k1, h / 2.0);
                let (k2, _, _) = velocity(&s2, task)?;
                let mut s3 = state.clone();
                s3.add_scaled_tangent(&k2, h / 2.0);
                let (k3, _, _) = velocity(&s3, task)?;
                let mut s4 = state.clone();
                s4.add_scaled_tangent(&k3, h);
                let (k4, _, _) = velocity(&s4, task)?;
                state.add_scaled_tangent(&k1, h / 6.0);
                state.add_scaled_tangent(&k2, h / 3.0);
                state.add_scaled_tangent(&k3, h / 3.0);
                state.add_scaled_tangent(&k4, h / 6.0);
            }
        }
        t += h;
    }

    Ok(FlowOutcome { trajectory: traj, chain: state })
}

/// Spectral evaluation of `psi(t) = y + exp(-t K)(psi(0) - y)` for a
/// symmetric PSD kernel; the exponential acts through the
/// eigendecomposition, never a power series.
pub struct ClosedFormResponse {
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
    /// Initial residual in the eigenbasis, `Q^T (psi0 - y)`.
    coeffs: DVector<f64>,
    y: DVector<f64>,
}

impl ClosedFormResponse {
    pub fn new(kernel: &KernelMatrix, psi0: &DVector<f64>, y: &DVector<f64>) -> Result<Self> {
        let m = kernel.dim();
        if psi0.len() != m || y.len() != m {
            return Err(Error::Shape(format!(
                "kernel is {m}x{m} but psi0 has length {} and y has length {}",
                psi0.len(),
                y.len()
            )));
        }
        let sym = (kernel.values() + kernel.values().transpose()) * 0.5;
        let eigen = SymmetricEigen::new(sym);
        let coeffs = eigen.eigenvectors.transpose() * (psi0 - y);
        Ok(Self {
            eigvals: eigen.eigenvalues,
            eigvecs: eigen.eigenvectors,
            coeffs,
            y: y.clone(),
        })
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            self.coeffs.len(),
            self.coeffs
                .iter()
                .zip(self.eigvals.iter())
                .map(|(c, l)| c * (-t * l).exp()),
        );
        &self.y + &self.eigvecs * scaled
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigvals
    }
}

/// One-shot closed-form response at time `t`.
pub fn closed_form_response(
    kernel: &KernelMatrix,
    psi0: &DVector<f64>,
    y: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    Ok(ClosedFormResponse::new(kernel, psi0, y)?.at(t))
}

/// `(t, mean response)` rows of a recorded series.
pub fn mean_response_curve(times: &[f64], responses: &[DVector<f64>]) -> Vec<(f64, f64)> {
    times
        .iter()
        .zip(responses)
        .map(|(&t, r)| (t, r.mean()))
        .collect()
}

/// One row of a lazy-training study.
#[derive(Clone, Debug)]
pub struct LazyTrainRow {
    pub bond_dim: usize,
    pub median_drift: f64,
    pub q1_drift: f64,
    pub q3_drift: f64,
    pub drifts: Vec<f64>,
}

/// Study setup for [`lazy_training_report`].
#[derive(Clone, Debug)]
pub struct LazyTrainPlan {
    pub bond_dims: Vec<usize>,
    pub trials: usize,
    pub sigmas: Vec<f64>,
    pub periodic: bool,
    pub t_end: f64,
    pub integrator: Integrator,
    pub base_seed: u64,
}

/// Sup-drift of the site tensors over training, per bond dimension and
/// seeded trial.
pub fn lazy_training_report(plan: &LazyTrainPlan, task: &RegressionTask) -> Result<Vec<LazyTrainRow>> {
    if plan.trials < 5 {
        return Err(Error::Input(format!(
            "lazy-training study needs at least 5 trials, got {}",
            plan.trials
        )));
    }
    let n = task.input_dim();
    let phys: Vec<usize> = task.maps.iter().map(|m| m.phys_dim()).collect();
    let seeds = TrialPlan::new(plan.base_seed, plan.trials);
    let opts = RecordOptions { stride: usize::MAX, snapshot_ntk: false };
    let mut rows = Vec::with_capacity(plan.bond_dims.len());
    for &d in &plan.bond_dims {
        let spec = ChainSpec {
            phys_dims: phys.clone(),
            bonds: ChainSpec::uniform(n, 2, d, plan.periodic).bonds,
            periodic: plan.periodic,
        };
        let drifts: Vec<f64> = crate::stats::run_trials(&seeds, |_, seed| {
            let chain = TensorChain::init_random(&spec, &plan.sigmas, seed).expect("validated spec");
            let out = integrate_flow(chain, task, plan.t_end, plan.integrator, &opts)
                .expect("flow diverged in lazy-training study");
            *out.trajectory.param_drift.last().unwrap()
        });
        rows.push(LazyTrainRow {
            bond_dim: d,
            median_drift: median(&drifts),
            q1_drift: quantile(&drifts, 0.25),
            q3_drift: quantile(&drifts, 0.75),
            drifts,
        });
    }
    Ok(rows)
}

/// Step size with `lambda_max(K_emp(0)) * dt = target`, clamped to
/// `[1e-4, 0.1]`. The response-space rates are the kernel eigenvalues, so
/// this pins the integrator's stability margin; small bond dimensions need
/// a smaller target because the kernel (and its spectrum) still moves
/// during training.
pub fn stable_dt(chain: &TensorChain, task: &RegressionTask, target: f64) -> Result<f64> {
    let kernel = empirical_ntk(chain, &task.maps, &task.points)?;
    let eigen = SymmetricEigen::new((kernel.values() + kernel.values().transpose()) * 0.5);
    let lambda_max = eigen.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    if lambda_max <= 0.0 {
        return Ok(0.1);
    }
    Ok((target / lambda_max).clamp(1e-4, 0.1))
}

/// Integrate the nonlinear flow and compare its responses against the
/// closed-form solution driven by the analytic kernel (same initial
/// responses, same labels). Returns `(t, max-abs response gap)` on the
/// trajectory's recorded grid.
pub fn compare_flow_to_closed_form(
    chain: TensorChain,
    task: &RegressionTask,
    t_end: f64,
    integrator: Integrator,
) -> Result<Vec<(f64, f64)>> {
    let sigmas = chain.sigmas();
    let kernel = task.analytic_kernel(&sigmas)?;
    let out = integrate_flow(chain, task, t_end, integrator, &RecordOptions::default())?;
    let traj = &out.trajectory;
    let closed = ClosedFormResponse::new(&kernel, &traj.responses[0], &task.label_vector())?;
    Ok(traj
        .times
        .iter()
        .zip(&traj.responses)
        .map(|(&t, num)| {
            let cf = closed.at(t);
            (t, (num - cf).amax())
        })
        .collect())
}
