//! Discrete energies, their gradients, and the proximal (implicit Euler) flow.

use serde::Serialize;

use crate::domain::{flux_density, Diffusion, DiffusionFamily, Domain1D};
use crate::error::{Error, Result};
use crate::lebesgue::{ExponentField, NodalField, SampledField};
use crate::state::{Layout, Space, State};
use crate::trajectory::Trajectory;
use crate::tridiag;

/// Which member of the diffusion family drives the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Regime {
    /// d_λ = d₀ + ψ/λ on the full grid.
    Lambda(f64),
    /// The λ → 0 limit: u constant on every subdomain, d₀ on Ω₁.
    Limit,
}

impl Regime {
    pub fn space(self) -> Space {
        match self {
            Regime::Lambda(_) => Space::Full,
            Regime::Limit => Space::Limit,
        }
    }
}

/// B(u)(x) = κ·tanh(u(x)) + g(x).
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    kappa: f64,
    forcing: NodalField,
}

impl Reaction {
    pub fn new(kappa: f64, forcing: NodalField) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::Config(format!("κ must be finite and ≥ 0, got {kappa}")));
        }
        if forcing.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("forcing must be finite".into()));
        }
        Ok(Self { kappa, forcing })
    }

    /// κ·tanh(u) with no forcing.
    pub fn unforced(dom: &Domain1D, kappa: f64) -> Result<Self> {
        Self::new(kappa, NodalField::zeros(dom))
    }

    /// Forcing g(x) = c + A·sin(mπx).
    pub fn with_profile(dom: &Domain1D, kappa: f64, constant: f64, amplitude: f64, mode: u32) -> Result<Self> {
        let k = f64::from(mode) * std::f64::consts::PI;
        Self::new(kappa, NodalField::from_fn(dom, |x| constant + amplitude * (k * x).sin()))
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// L_B = κ since |tanh′| ≤ 1.
    pub fn lipschitz(&self) -> f64 {
        self.kappa
    }

    pub fn forcing(&self) -> &NodalField {
        &self.forcing
    }

    /// ‖B(0)‖_H = ‖g‖_H.
    pub fn b0_norm(&self, dom: &Domain1D) -> Result<f64> {
        crate::domain::l2_norm(&self.forcing, dom.weights())
    }

    pub fn apply(&self, u: &NodalField) -> Result<NodalField> {
        u.grid().ensure(self.forcing.grid())?;
        let mut out = self.forcing.clone();
        for (o, v) in out.values_mut().iter_mut().zip(u.values()) {
            *o += self.kappa * v.tanh();
        }
        Ok(out)
    }

    fn apply_values(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.forcing.values())
            .map(|(v, g)| self.kappa * v.tanh() + g)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyParams {
    pub eta: f64,
    pub regime: Regime,
    pub reaction: Reaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tau: f64,
    pub sample_dt: f64,
    pub newton_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tau: 1.0 / 512.0,
            sample_dt: 1.0 / 64.0,
            newton_tol: 1e-9,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub newton_iterations: usize,
    pub residual_norm: f64,
    pub energy_before: f64,
    pub energy_after: f64,
}

const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;

/// Returns n with n·unit = span, or an error when `span` is not an integer multiple of `unit`.
pub(crate) fn integer_ratio(span: f64, unit: f64, what: &str) -> Result<u64> {
    let r = (span / unit).round();
    if !(r >= 1.0) || ((r * unit - span).abs() > 1e-9 * span.abs().max(unit)) {
        return Err(Error::Precondition(format!(
            "{what}: {span} is not a positive integer multiple of {unit}"
        )));
    }
    Ok(r as u64)
}

/// Like [`integer_ratio`] but accepts a zero span.
pub(crate) fn integer_ratio_or_zero(span: f64, unit: f64) -> Result<usize> {
    if span == 0.0 {
        return Ok(0);
    }
    if span < 0.0 {
        return Err(Error::Precondition(format!("shift {span} is negative")));
    }
    Ok(integer_ratio(span, unit, "shift")? as usize)
}

/// The semiflow T_λ(t) (or T(t) in the limit regime) on a fixed grid.
#[derive(Debug, Clone)]
pub struct Semiflow {
    dom: Domain1D,
    p: ExponentField,
    params: EnergyParams,
    options: SolverOptions,
    diffusion: Diffusion,
    m0: f64,
    layout: Layout,
}

impl Semiflow {
    pub fn new(
        dom: &Domain1D,
        p: &ExponentField,
        family: &DiffusionFamily,
        params: EnergyParams,
        options: SolverOptions,
    ) -> Result<Self> {
        dom.grid_id().ensure(p.grid())?;
        if !(params.eta > 0.0 && params.eta.is_finite()) {
            return Err(Error::Config(format!("η must be positive, got {}", params.eta)));
        }
        if !(options.tau > 0.0) || options.tau > options.sample_dt * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "need 0 < τ ≤ sample_dt, got τ = {}, sample_dt = {}",
                options.tau, options.sample_dt
            )));
        }
        integer_ratio(options.sample_dt, options.tau, "sample_dt / τ")?;
        if options.newton_tol <= 0.0 || options.max_iterations == 0 {
            return Err(Error::Config("solver tolerance and iteration cap must be positive".into()));
        }
        let diffusion = match params.regime {
            Regime::Lambda(l) => family.diffusion_at(l)?,
            Regime::Limit => family.limit_diffusion(),
        };
        Ok(Self {
            dom: dom.clone(),
            p: p.clone(),
            layout: Layout::new(dom, params.regime.space()),
            params,
            options,
            diffusion,
            m0: family.m0(),
        })
    }

    /// Same grid, exponent and options under a different regime.
    pub fn with_regime(&self, family: &DiffusionFamily, regime: Regime) -> Result<Self> {
        let params = EnergyParams {
            regime,
            ..self.params.clone()
        };
        Self::new(&self.dom, &self.p, family, params, self.options)
    }

    pub fn with_options(&self, options: SolverOptions) -> Result<Self> {
        let mut out = self.clone();
        if !(options.tau > 0.0) || options.tau > options.sample_dt * (1.0 + 1e-12) {
            return Err(Error::Config("need 0 < τ ≤ sample_dt".into()));
        }
        integer_ratio(options.sample_dt, options.tau, "sample_dt / τ")?;
        out.options = options;
        Ok(out)
    }

    pub fn domain(&self) -> &Domain1D {
        &self.dom
    }

    pub fn exponent(&self) -> &ExponentField {
        &self.p
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn space(&self) -> Space {
        self.layout.space
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    /// Lower bound m₀ of d₀.
    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    /// The zero state in this flow's space.
    pub fn zero_state(&self) -> State {
        State::zeros(&self.dom, self.space())
    }

    /// Puts a nodal field into this flow's space.
    pub fn state_from_nodal(&self, u: &NodalField) -> Result<State> {
        State::from_nodal(u, &self.dom, self.space())
    }

    // ---- DOF-level kernels ----

    fn cell_term(&self, c: usize, g: f64) -> f64 {
        let p = self.p.cell_values()[c];
        let d = self.diffusion.values.values()[c];
        d * (g.abs().powf(p) / p + 0.5 * self.params.eta * g * g)
    }

    fn energy_dofs(&self, v: &[f64]) -> f64 {
        let u = self.layout.expand(v);
        let h = self.dom.h();
        let w = self.dom.weights().node_weights();
        let pn = self.p.node_values();
        let nodes: f64 = u
            .iter()
            .zip(w)
            .zip(pn)
            .map(|((u, w), p)| w * u.abs().powf(*p) / p)
            .sum();
        let cells: f64 = self
            .layout
            .links
            .iter()
            .map(|l| self.cell_term(l.cell, (u[l.cell + 1] - u[l.cell]) / h))
            .sum();
        nodes + h * cells
    }

    fn raw_gradient(&self, v: &[f64]) -> Vec<f64> {
        let u = self.layout.expand(v);
        let h = self.dom.h();
        let w = self.dom.weights().node_weights();
        let pn = self.p.node_values();
        let pc = self.p.cell_values();
        let d = self.diffusion.values.values();
        let mut raw = vec![0.0; self.layout.len()];
        for (k, dof) in self.layout.node_dof.iter().enumerate() {
            if let Some(j) = dof {
                raw[*j] += w[k] * u[k].abs().powf(pn[k] - 2.0) * u[k];
            }
        }
        for l in &self.layout.links {
            let g = (u[l.cell + 1] - u[l.cell]) / h;
            let s = flux_density(d[l.cell], g, pc[l.cell], self.params.eta);
            if let Some(a) = l.left {
                raw[a] -= s;
            }
            if let Some(b) = l.right {
                raw[b] += s;
            }
        }
        raw
    }

    /// Entrywise magnitudes of the terms summed into `raw_gradient`, used to
    /// bound its floating-point error.
    fn gradient_scale(&self, v: &[f64]) -> Vec<f64> {
        let u = self.layout.expand(v);
        let h = self.dom.h();
        let w = self.dom.weights().node_weights();
        let pn = self.p.node_values();
        let pc = self.p.cell_values();
        let d = self.diffusion.values.values();
        let mut mag = vec![0.0; self.layout.len()];
        for (k, dof) in self.layout.node_dof.iter().enumerate() {
            if let Some(j) = dof {
                mag[*j] += w[k] * u[k].abs().powf(pn[k] - 1.0);
            }
        }
        for l in &self.layout.links {
            let g = (u[l.cell + 1] - u[l.cell]) / h;
            let s = flux_density(d[l.cell], g, pc[l.cell], self.params.eta).abs()
                + d[l.cell] * (u[l.cell + 1].abs() + u[l.cell].abs()) / h;
            if let Some(a) = l.left {
                mag[a] += s;
            }
            if let Some(b) = l.right {
                mag[b] += s;
            }
        }
        mag
    }

    fn hessian(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let u = self.layout.expand(v);
        let h = self.dom.h();
        let w = self.dom.weights().node_weights();
        let pn = self.p.node_values();
        let pc = self.p.cell_values();
        let d = self.diffusion.values.values();
        let n = self.layout.len();
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        for (k, dof) in self.layout.node_dof.iter().enumerate() {
            if let Some(j) = dof {
                diag[*j] += w[k] * (pn[k] - 1.0) * u[k].abs().powf(pn[k] - 2.0);
            }
        }
        for l in &self.layout.links {
            let c = l.cell;
            let g = (u[c + 1] - u[c]) / h;
            let q = d[c] * ((pc[c] - 1.0) * g.abs().powf(pc[c] - 2.0) + self.params.eta) / h;
            if let Some(a) = l.left {
                diag[a] += q;
            }
            if let Some(b) = l.right {
                diag[b] += q;
            }
            if let (Some(a), Some(_)) = (l.left, l.right) {
                off[a] -= q;
            }
        }
        (diag, off)
    }

    /// ⟨B(u), ·⟩_H as a DOF load vector.
    fn reaction_load(&self, v: &[f64]) -> Vec<f64> {
        let b = self.params.reaction.apply_values(&self.layout.expand(v));
        let w = self.dom.weights().node_weights();
        let mut load = vec![0.0; self.layout.len()];
        for (k, dof) in self.layout.node_dof.iter().enumerate() {
            if let Some(j) = dof {
                load[*j] += w[k] * b[k];
            }
        }
        load
    }

    fn h_norm_of_raw(&self, raw: &[f64]) -> f64 {
        raw.iter()
            .zip(&self.layout.mass)
            .map(|(r, m)| r * r / m)
            .sum::<f64>()
            .sqrt()
    }

    // ---- public operations ----

    /// The discrete energy φ^λ (or the limit energy).
    pub fn energy(&self, u: &State) -> Result<f64> {
        Ok(self.energy_dofs(&self.layout.dofs_of(u, &self.dom)?))
    }

    /// A u: the energy gradient divided by the lumped DOF masses.
    pub fn gradient(&self, u: &State) -> Result<State> {
        let v = self.layout.dofs_of(u, &self.dom)?;
        let g: Vec<f64> = self
            .raw_gradient(&v)
            .iter()
            .zip(&self.layout.mass)
            .map(|(r, m)| r / m)
            .collect();
        Ok(self.layout.state_of(&g, &self.dom))
    }

    /// B(u) expressed in this flow's space (H-orthogonal projection for the limit space).
    pub fn reaction_state(&self, u: &State) -> Result<State> {
        let v = self.layout.dofs_of(u, &self.dom)?;
        let b: Vec<f64> = self
            .reaction_load(&v)
            .iter()
            .zip(&self.layout.mass)
            .map(|(r, m)| r / m)
            .collect();
        Ok(self.layout.state_of(&b, &self.dom))
    }

    /// One implicit Euler step: argmin_v φ(v) + ‖v−u‖²_H/(2τ) − ⟨B(u), v⟩_H.
    pub fn proximal_step(&self, u: &State, tau: f64) -> Result<(State, StepReport)> {
        if !(tau > 0.0) {
            return Err(Error::Precondition(format!("τ must be positive, got {tau}")));
        }
        let v = self.layout.dofs_of(u, &self.dom)?;
        let load = self.reaction_load(&v);
        let (next, report) = self.prox_dofs(&v, &load, tau)?;
        Ok((self.layout.state_of(&next, &self.dom), report))
    }

    fn prox_dofs(&self, u: &[f64], load: &[f64], tau: f64) -> Result<(Vec<f64>, StepReport)> {
        let mass = &self.layout.mass;
        let objective = |v: &[f64]| -> f64 {
            let mut j = self.energy_dofs(v);
            for ((vj, uj), (m, b)) in v.iter().zip(u).zip(mass.iter().zip(load)) {
                j += 0.5 * m * (vj - uj) * (vj - uj) / tau - b * vj;
            }
            j
        };
        let full_gradient = |v: &[f64]| -> Vec<f64> {
            let mut g = self.raw_gradient(v);
            for (j, gj) in g.iter_mut().enumerate() {
                *gj += mass[j] * (v[j] - u[j]) / tau - load[j];
            }
            g
        };
        let tol = self.options.newton_tol * self.layout.norm_sq(u).sqrt().max(1.0);
        let energy_before = self.energy_dofs(u);

        let mut v = u.to_vec();
        let mut j_v = objective(&v);
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut residual = f64::INFINITY;
        for iter in 0..=self.options.max_iterations {
            let g = full_gradient(&v);
            residual = self.h_norm_of_raw(&g);
            let scale: Vec<f64> = self
                .gradient_scale(&v)
                .iter()
                .enumerate()
                .map(|(j, s)| s + mass[j] * (v[j].abs() + u[j].abs()) / tau + load[j].abs())
                .collect();
            let floor = 64.0 * f64::EPSILON * self.h_norm_of_raw(&scale);
            if residual <= tol || residual <= floor {
                return Ok((
                    v.clone(),
                    StepReport {
                        newton_iterations: iter,
                        residual_norm: residual,
                        energy_before,
                        energy_after: self.energy_dofs(&v),
                    },
                ));
            }
            if iter == self.options.max_iterations {
                break;
            }

            let (mut diag, off) = self.hessian(&v);
            for (d, m) in diag.iter_mut().zip(mass) {
                *d += m / tau;
            }
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let newton = tridiag::solve_symmetric(&diag, &off, &rhs)
                .filter(|dir| dir.iter().zip(&g).map(|(d, g)| d * g).sum::<f64>() < 0.0);

            let mut accepted = None;
            if let Some(dir) = newton {
                let slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
                let noise = 1e-12 * (j_v.abs() + self.energy_dofs(&v));
                if -slope <= noise {
                    // the predicted decrease is below the roundoff of the objective,
                    // so a line search cannot tell steps apart: take the full Newton step
                    let next: Vec<f64> = v.iter().zip(&dir).map(|(a, b)| a + b).collect();
                    let j_next = objective(&next);
                    accepted = Some((next, j_next));
                } else {
                    accepted = self.armijo(&objective, &v, j_v, &g, &dir);
                }
            }
            if accepted.is_none() {
                // gradient descent in the H metric with a secant (Barzilai–Borwein) step
                let alpha = prev
                    .as_ref()
                    .and_then(|(pv, pg)| {
                        let mut num = 0.0;
                        let mut den = 0.0;
                        for j in 0..v.len() {
                            let dv = v[j] - pv[j];
                            num += mass[j] * dv * dv;
                            den += dv * (g[j] - pg[j]);
                        }
                        (den > 0.0).then_some(num / den)
                    })
                    .unwrap_or(tau);
                let dir: Vec<f64> = g.iter().zip(mass).map(|(g, m)| -alpha * g / m).collect();
                accepted = self.armijo(&objective, &v, j_v, &g, &dir);
            }
            match accepted {
                Some((next, j_next)) => {
                    prev = Some((std::mem::replace(&mut v, next), g));
                    j_v = j_next;
                }
                None => break,
            }
        }
        Err(Error::NonConvergence {
            iterations: self.options.max_iterations,
            residual,
            tolerance: tol,
        })
    }

    fn armijo(
        &self,
        objective: &impl Fn(&[f64]) -> f64,
        v: &[f64],
        j_v: f64,
        g: &[f64],
        dir: &[f64],
    ) -> Option<(Vec<f64>, f64)> {
        let slope: f64 = g.iter().zip(dir).map(|(g, d)| g * d).sum();
        if !(slope < 0.0) {
            return None;
        }
        let mut t = 1.0;
        let mut trial = vec![0.0; v.len()];
        while t > 1e-20 {
            for j in 0..v.len() {
                trial[j] = v[j] + t * dir[j];
            }
            let j_t = objective(&trial);
            if j_t <= j_v + ARMIJO * t * slope {
                return Some((trial, j_t));
            }
            t *= BACKTRACK;
        }
        None
    }

    /// Iterates the proximal step from `u0` over `[0, horizon]`, sampling every `sample_dt`.
    pub fn evolve(&self, u0: &State, horizon: f64) -> Result<Trajectory> {
        let intervals = integer_ratio(horizon, self.options.sample_dt, "horizon / sample_dt")?;
        let v0 = self.layout.dofs_of(u0, &self.dom)?;
        self.evolve_dofs(v0, 0, intervals)
    }

    pub(crate) fn evolve_dofs(&self, v0: Vec<f64>, t0_steps: u64, intervals: u64) -> Result<Trajectory> {
        let steps = integer_ratio(self.options.sample_dt, self.options.tau, "sample_dt / τ")?;
        let tau = self.options.tau;
        let mut samples = Vec::with_capacity(intervals as usize + 1);
        let mut velocity = Vec::with_capacity(intervals as usize);
        samples.push(self.layout.state_of(&v0, &self.dom));
        let mut cur = v0;
        for _ in 0..intervals {
            let mut acc = 0.0;
            for _ in 0..steps {
                let load = self.reaction_load(&cur);
                let (next, _) = self.prox_dofs(&cur, &load, tau)?;
                let diff: Vec<f64> = next.iter().zip(&cur).map(|(a, b)| a - b).collect();
                acc += self.layout.norm_sq(&diff) / tau;
                cur = next;
            }
            samples.push(self.layout.state_of(&cur, &self.dom));
            velocity.push(acc);
        }
        Ok(Trajectory::new(
            t0_steps,
            tau,
            steps,
            samples,
            velocity,
        ))
    }

    /// A solution segment on [0, 1].
    pub fn sample_l_trajectory(&self, u0: &State) -> Result<Trajectory> {
        self.evolve(u0, 1.0)
    }

    /// L(t)χ: continues χ by `t` and returns the window [t, t+1].
    pub fn apply_shift(&self, chi: &Trajectory, t: f64) -> Result<Trajectory> {
        self.check_trajectory(chi)?;
        if !chi.is_l_trajectory() {
            return Err(Error::Precondition("shift needs an l-trajectory spanning [t0, t0+1]".into()));
        }
        if t == 0.0 {
            return Ok(chi.clone());
        }
        let shift = integer_ratio(t, chi.sample_dt(), "shift / sample_dt")? as usize;
        let end = self.layout.dofs_of(chi.end_state(), &self.dom)?;
        let end_steps = chi.t0_steps() + chi.intervals() as u64 * chi.steps_per_sample();
        let cont = self.evolve_dofs(end, end_steps, shift as u64)?;
        Ok(chi.concat_window(&cont, shift))
    }

    fn check_trajectory(&self, chi: &Trajectory) -> Result<()> {
        if (chi.step_dt() - self.options.tau).abs() > 1e-15 * self.options.tau
            || chi.steps_per_sample() != integer_ratio(self.options.sample_dt, self.options.tau, "sample_dt / τ")?
        {
            return Err(Error::Precondition(
                "trajectory was produced with a different time step or sampling".into(),
            ));
        }
        let first = chi.samples().first().ok_or(Error::DegenerateInput("empty trajectory".into()))?;
        if first.space() != self.space() {
            return Err(Error::SpaceMismatch {
                expected: self.space().name(),
                found: first.space().name(),
            });
        }
        Ok(())
    }

    /// |ṡ_i + (F_i + Σ w|s_i|^{p−2}s_i)/M_i − ⟨B(u)⟩_i| at sample `k` of a limit trajectory,
    /// with ṡ_i the centered sample difference, F_i the flux through Γ₀,i and M_i the
    /// lumped mass of the subdomain block.
    pub fn shadow_ode_residual(&self, traj: &Trajectory, i: usize, k: usize) -> Result<f64> {
        if self.space() != Space::Limit {
            return Err(Error::SpaceMismatch {
                expected: Space::Limit.name(),
                found: self.space().name(),
            });
        }
        let s_dom = self.dom.subdomain(i)?;
        let n = traj.samples().len();
        if k == 0 || k + 1 >= n {
            return Err(Error::IndexOutOfRange {
                what: "interior sample",
                index: k,
                len: n,
            });
        }
        let value = |st: &State| -> Result<f64> {
            match st {
                State::Limit(l) => Ok(l.subdomain_values()[i]),
                State::Full(_) => Err(Error::SpaceMismatch {
                    expected: "limit",
                    found: "full",
                }),
            }
        };
        let samples = traj.samples();
        let s_dot = (value(&samples[k + 1])? - value(&samples[k - 1])?) / (2.0 * traj.sample_dt());
        let u = samples[k].to_nodal(&self.dom)?;
        let flux = crate::domain::boundary_flux(
            &u,
            &self.dom,
            &self.diffusion.values,
            &self.p,
            self.params.eta,
            i,
        )?;
        let s = value(&samples[k])?;
        let w = self.dom.weights().node_weights();
        let pn = self.p.node_values();
        let mut absorption = 0.0;
        let mut reaction = 0.0;
        let b = self.params.reaction.apply(&u)?;
        for kk in s_dom.left..=s_dom.right {
            absorption += w[kk] * s.abs().powf(pn[kk] - 2.0) * s;
            reaction += w[kk] * b.values()[kk];
        }
        let mass = self.layout.mass[self.layout.subdomain_dof[i]];
        Ok((s_dot + (flux + absorption) / mass - reaction / mass).abs())
    }

    /// Step-level check that consecutive samples solve the discrete evolution:
    /// re-runs the stepping between samples `k` and `k+1` and returns the H distance.
    pub fn replay_defect(&self, traj: &Trajectory, k: usize) -> Result<f64> {
        self.check_trajectory(traj)?;
        let n = traj.samples().len();
        if k + 1 >= n {
            return Err(Error::IndexOutOfRange {
                what: "sample",
                index: k,
                len: n,
            });
        }
        let v = self.layout.dofs_of(&traj.samples()[k], &self.dom)?;
        let re = self.evolve_dofs(v, 0, 1)?;
        re.end_state().dist_h(&traj.samples()[k + 1], &self.dom)
    }
}

/// e(χ) = χ(end).
pub fn end_map(chi: &Trajectory) -> &State {
    chi.end_state()
}
