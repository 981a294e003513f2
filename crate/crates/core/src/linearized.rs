//! Backward adjoint equation `∂_t φ + P'(ρ) Δφ = ψ` and forward linearized
//! equation `∂_t w = Δ(P'(ρ) w)` along a frozen diffusion trajectory.
//!
//! The coefficients are frozen per interval as averages `ᾱ_k` of `P'(ρ)`.
//! The backward scheme is the implicit step
//! `(I + τ ᾱ_k (-Δ)) φ_k = φ_{k+1} - τ ψ_k`;
//! the forward step is *defined* as its exact adjoint in the `m`-weighted
//! inner product, which realizes the divergence-form implicit step
//! `(I + τ (-Δ) ᾱ_k) w_{k+1} = w_k` and makes the duality pairing
//! `Σ w_k φ_k m` a machine-precision invariant of the pair of schemes.
//! Both steps share the SPD system matrix `diag(m/ᾱ_k) + τ(Deg - W)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::diffusion::DiffusionTrajectory;
use crate::error::{Error, Result};
use crate::report::{CheckReport, Verdict, Witness};
use crate::space::{DensityField, Field, FiniteSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Backward,
    Forward,
}

/// Time-gridded solution of a linearized equation, sharing the grid and the
/// frozen coefficients of the diffusion trajectory it came from.
#[derive(Debug, Clone)]
pub struct LinearizedTrajectory {
    direction: Direction,
    times: Vec<f64>,
    /// φ_k (backward) or w_k (forward) at the grid times.
    fields: Vec<Field>,
    /// Interval averages of P'(ρ), one per step.
    alphas: Vec<Field>,
    /// True when the backward solve carried a source ψ.
    has_source: bool,
    /// Residual of the discrete energy identity (backward only).
    energy_residual: Option<f64>,
}

impl LinearizedTrajectory {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn field(&self, k: usize) -> &Field {
        &self.fields[k]
    }

    pub fn alphas(&self) -> &[Field] {
        &self.alphas
    }

    pub fn has_source(&self) -> bool {
        self.has_source
    }

    /// Residual of the backward energy identity over the whole interval.
    pub fn energy_residual(&self) -> Option<f64> {
        self.energy_residual
    }

    /// CSV export in the trajectory format (`t,x0,...`).
    pub fn to_csv(&self) -> String {
        let n = self.fields.first().map(|f| f.len()).unwrap_or(0);
        let mut out = String::from("t");
        for x in 0..n {
            out.push_str(&format!(",x{x}"));
        }
        out.push('\n');
        for (t, f) in self.times.iter().zip(&self.fields) {
            out.push_str(&format!("{t}"));
            for v in f.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Interval averages `ᾱ_k = (P'(ρ_k) + P'(ρ_{k+1}))/2` of the coefficient.
fn interval_alphas(traj: &DiffusionTrajectory) -> Vec<Field> {
    let model = traj.model();
    (0..traj.steps())
        .map(|k| {
            let a = traj.state(k).values().map(|v| model.dp(v));
            let b = traj.state(k + 1).values().map(|v| model.dp(v));
            (a + b) * 0.5
        })
        .collect()
}

/// SPD step matrix `diag(m/ᾱ) + τ (Deg - W)` shared by both directions.
fn step_factor(space: &FiniteSpace, alpha: &Field, tau: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = space.len();
    let w = space.conductances();
    let mut a = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut deg = 0.0;
        for y in 0..n {
            let wxy = w[(x, y)];
            if wxy > 0.0 {
                a[(x, y)] = -tau * wxy;
                deg += wxy;
            }
        }
        a[(x, x)] = space.measure()[x] / alpha[x] + tau * deg;
    }
    a.cholesky()
        .ok_or_else(|| Error::Numerical("singular linearized step system".into()))
}

/// Solve the backward adjoint equation down from the terminal datum `phi_t`.
///
/// `psi`, when present, supplies one source field per interval (`steps`
/// entries, indexed like the intervals). With `psi = None` the scheme obeys
/// the maximum principle `max_k |φ_k|_∞ <= |φ_T|_∞` step by step.
pub fn backward_solve(
    traj: &DiffusionTrajectory,
    phi_t: &Field,
    psi: Option<&[Field]>,
) -> Result<LinearizedTrajectory> {
    let space = traj.space();
    let n = space.len();
    if phi_t.len() != n {
        return Err(Error::InvalidInput("terminal datum length mismatch".into()));
    }
    let steps = traj.steps();
    if let Some(src) = psi {
        if src.len() != steps {
            return Err(Error::InvalidInput(format!(
                "psi needs one field per interval ({steps}), got {}",
                src.len()
            )));
        }
    }
    let tau = traj.step_size();
    let alphas = interval_alphas(traj);
    let mut fields = vec![Field::zeros(n); steps + 1];
    fields[steps] = phi_t.clone();
    for k in (0..steps).rev() {
        let chol = step_factor(space, &alphas[k], tau)?;
        let mut rhs = fields[k + 1].clone();
        if let Some(src) = psi {
            rhs -= &src[k] * tau;
        }
        // multiply by diag(m/ᾱ) to match the symmetrized system
        let scaled = DVector::from_fn(n, |x, _| rhs[x] * space.measure()[x] / alphas[k][x]);
        fields[k] = chol.solve(&scaled);
    }

    // Discrete energy identity residual over [0, T].
    let mut kinetic = 0.0;
    let mut source_term = 0.0;
    for k in 0..steps {
        for x in 0..n {
            let rate = (fields[k + 1][x] - fields[k][x]) / tau;
            kinetic += tau * rate * rate / alphas[k][x] * space.measure()[x];
            if let Some(src) = psi {
                source_term += tau * src[k][x] * rate / alphas[k][x] * space.measure()[x];
            }
        }
    }
    let energy_residual = kinetic + 0.5 * space.dirichlet(&fields[0], &fields[0])
        - source_term
        - 0.5 * space.dirichlet(phi_t, phi_t);

    Ok(LinearizedTrajectory {
        direction: Direction::Backward,
        times: traj.times().to_vec(),
        fields,
        alphas,
        has_source: psi.is_some(),
        energy_residual: Some(energy_residual),
    })
}

/// Solve the forward linearized equation up from `w0`; each step is the
/// `m`-adjoint of the backward step, so `Σ w m` is conserved exactly and the
/// duality pairing with any sourceless backward solution is constant.
pub fn forward_linearized_solve(
    traj: &DiffusionTrajectory,
    w0: &Field,
) -> Result<LinearizedTrajectory> {
    let space = traj.space();
    let n = space.len();
    if w0.len() != n {
        return Err(Error::InvalidInput("initial datum length mismatch".into()));
    }
    let steps = traj.steps();
    let tau = traj.step_size();
    let alphas = interval_alphas(traj);
    let mut fields = vec![Field::zeros(n); steps + 1];
    fields[0] = w0.clone();
    for k in 0..steps {
        let chol = step_factor(space, &alphas[k], tau)?;
        let scaled = DVector::from_fn(n, |x, _| fields[k][x] * space.measure()[x]);
        let u = chol.solve(&scaled);
        fields[k + 1] = DVector::from_fn(n, |x, _| u[x] / alphas[k][x]);
    }
    Ok(LinearizedTrajectory {
        direction: Direction::Forward,
        times: traj.times().to_vec(),
        fields,
        alphas,
        has_source: false,
        energy_residual: None,
    })
}

/// Duality-pairing conservation `Σ_x w_k(x) φ_k(x) m(x) = const`, exact by
/// the adjoint construction.
pub fn pairing_check(
    space: &FiniteSpace,
    fwd: &LinearizedTrajectory,
    bwd: &LinearizedTrajectory,
) -> Result<CheckReport> {
    if fwd.direction != Direction::Forward || bwd.direction != Direction::Backward {
        return Err(Error::InvalidInput("pairing_check needs (forward, backward)".into()));
    }
    if bwd.has_source {
        return Err(Error::InvalidInput("pairing_check needs a sourceless backward solve".into()));
    }
    if fwd.times.len() != bwd.times.len()
        || fwd
            .times
            .iter()
            .zip(&bwd.times)
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
    {
        return Err(Error::InvalidInput("pairing_check: time grids differ".into()));
    }
    for (a, b) in fwd.alphas.iter().zip(&bwd.alphas) {
        if (a - b).amax() > 1e-12 {
            return Err(Error::InvalidInput("pairing_check: coefficient fields differ".into()));
        }
    }
    let base = space.inner(&fwd.fields[0], &bwd.fields[0]);
    let scale = 1.0 + base.abs();
    let mut worst = 0.0f64;
    let mut worst_k = 0;
    let mut residuals = Vec::with_capacity(fwd.times.len());
    for k in 0..fwd.times.len() {
        let dev = space.inner(&fwd.fields[k], &bwd.fields[k]) - base;
        residuals.push(dev);
        if dev.abs() > worst {
            worst = dev.abs();
            worst_k = k;
        }
    }
    Ok(CheckReport::new("pairing", Verdict::from_bool(worst <= 1e-12 * scale), -worst)
        .with_witness(Witness::time(fwd.times[worst_k]))
        .with_residuals(residuals)
        .with_note("base_pairing", base))
}

/// First-order consistency of the forward linearization:
/// `(S_t(ρ̄ + ε w̄) - S_t ρ̄)/ε → w_t` in `L¹(m)` as `ε ↓ 0`.
///
/// `eps_list` must be positive; errors are reported per ε (sorted
/// descending) and must not increase as ε decreases.
pub fn perturbation_derivative_check(
    space: &std::sync::Arc<FiniteSpace>,
    model: &crate::entropy::EntropyModel,
    rho_bar: &DensityField,
    w_bar: &Field,
    eps_list: &[f64],
    t: f64,
    steps: usize,
) -> Result<CheckReport> {
    if eps_list.is_empty() || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidInput("eps_list needs positive entries".into()));
    }
    let mut eps_sorted = eps_list.to_vec();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let base = crate::diffusion::evolve(space, model, rho_bar, t, steps)?;
    let lin = forward_linearized_solve(&base, w_bar)?;
    let w_t = lin.fields().last().unwrap();

    let mut errors = Vec::with_capacity(eps_sorted.len());
    for &eps in &eps_sorted {
        let perturbed = DVector::from_fn(space.len(), |x, _| rho_bar.values()[x] + eps * w_bar[x]);
        if perturbed.min() < 0.0 {
            return Err(Error::InvalidInput(format!(
                "perturbed datum is negative at eps = {eps}"
            )));
        }
        let rho_eps = DensityField::new(space, perturbed)?;
        let evolved = crate::diffusion::evolve(space, model, &rho_eps, t, steps)?;
        let quotient: Field =
            (evolved.final_state().values() - base.final_state().values()) / eps;
        errors.push(space.norm_l1(&(quotient - w_t)));
    }
    let scale = 1.0 + space.norm_l1(w_t);
    let mut margin = f64::INFINITY;
    let mut worst = 0;
    for i in 1..errors.len() {
        let gap = errors[i - 1] - errors[i];
        if gap < margin {
            margin = gap;
            worst = i;
        }
    }
    if errors.len() == 1 {
        margin = 0.0;
    }
    Ok(CheckReport::new(
        "perturbation-derivative",
        Verdict::from_bool(margin >= -1e-12 * scale),
        margin,
    )
    .with_witness(Witness::scalar(eps_sorted[worst]))
    .with_residuals(errors))
}
