//! Sampled solution segments, their distances, and CSV serialization.

use std::io::Write;

use serde::Serialize;

use crate::domain::Domain1D;
use crate::error::{Error, Result};
use crate::lebesgue::SampledField;
use crate::state::{Layout, State};
use crate::tridiag;

/// Equally spaced samples of one discrete solution.
///
/// Times are kept as integer step counts so that shifted windows line up exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    t0_steps: u64,
    step_dt: f64,
    steps_per_sample: u64,
    samples: Vec<State>,
    /// ∫‖u_t‖²_H over each sampling interval, accumulated step by step.
    velocity_sq: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn new(
        t0_steps: u64,
        step_dt: f64,
        steps_per_sample: u64,
        samples: Vec<State>,
        velocity_sq: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(velocity_sq.len() + 1, samples.len());
        Self {
            t0_steps,
            step_dt,
            steps_per_sample,
            samples,
            velocity_sq,
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0_steps as f64 * self.step_dt
    }

    pub fn t0_steps(&self) -> u64 {
        self.t0_steps
    }

    pub fn step_dt(&self) -> f64 {
        self.step_dt
    }

    pub fn steps_per_sample(&self) -> u64 {
        self.steps_per_sample
    }

    pub fn sample_dt(&self) -> f64 {
        self.steps_per_sample as f64 * self.step_dt
    }

    pub fn samples(&self) -> &[State] {
        &self.samples
    }

    pub fn intervals(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.intervals() as f64 * self.sample_dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len())
            .map(|k| (self.t0_steps + k as u64 * self.steps_per_sample) as f64 * self.step_dt)
            .collect()
    }

    /// True when the span is exactly one time unit.
    pub fn is_l_trajectory(&self) -> bool {
        (self.duration() - 1.0).abs() < 1e-9
    }

    pub fn end_state(&self) -> &State {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// Step-level ∫‖u_t‖²_H over each sampling interval.
    pub fn velocity_sq(&self) -> &[f64] {
        &self.velocity_sq
    }

    /// ∫‖u_t‖²_H over sample indices [from, to].
    pub fn velocity_integral(&self, from: usize, to: usize) -> f64 {
        self.velocity_sq[from..to].iter().sum()
    }

    /// Sub-trajectory of samples [from, to].
    pub fn window(&self, from: usize, to: usize) -> Result<Trajectory> {
        if from >= to || to >= self.samples.len() {
            return Err(Error::IndexOutOfRange {
                what: "trajectory window end",
                index: to,
                len: self.samples.len(),
            });
        }
        Ok(Self {
            t0_steps: self.t0_steps + from as u64 * self.steps_per_sample,
            step_dt: self.step_dt,
            steps_per_sample: self.steps_per_sample,
            samples: self.samples[from..=to].to_vec(),
            velocity_sq: self.velocity_sq[from..to].to_vec(),
        })
    }

    /// Appends `cont` (which starts at this trajectory's end) and keeps the window
    /// that starts `shift` samples in and has this trajectory's length.
    pub(crate) fn concat_window(&self, cont: &Trajectory, shift: usize) -> Trajectory {
        let len = self.intervals();
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&cont.samples[1..]);
        let mut vel = self.velocity_sq.clone();
        vel.extend_from_slice(&cont.velocity_sq);
        Self {
            t0_steps: self.t0_steps + shift as u64 * self.steps_per_sample,
            step_dt: self.step_dt,
            steps_per_sample: self.steps_per_sample,
            samples: samples[shift..=shift + len].to_vec(),
            velocity_sq: vel[shift..shift + len].to_vec(),
        }
    }

    /// CSV with header `t,node_0,...,node_N` (full space) or
    /// `t,omega1_0,...,s_1,...,s_m` (limit space), 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = String::from("t");
        match &self.samples[0] {
            State::Full(u) => {
                for k in 0..u.len() {
                    header.push_str(&format!(",node_{k}"));
                }
            }
            State::Limit(l) => {
                for k in 0..l.omega1_values().len() {
                    header.push_str(&format!(",omega1_{k}"));
                }
                for i in 1..=l.subdomain_values().len() {
                    header.push_str(&format!(",s_{i}"));
                }
            }
        }
        writeln!(out, "{header}")?;
        for (t, s) in self.times().iter().zip(&self.samples) {
            let mut line = format!("{t:.16e}");
            let vals: Vec<f64> = match s {
                State::Full(u) => u.values().to_vec(),
                State::Limit(l) => l
                    .omega1_values()
                    .iter()
                    .chain(l.subdomain_values())
                    .copied()
                    .collect(),
            };
            for v in vals {
                line.push_str(&format!(",{v:.16e}"));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Distances between two equally sampled trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryMetrics {
    /// ‖χ₁ − χ₂‖ in L²(0, T; H).
    pub dist_l2h: f64,
    /// ‖∇w‖_{L²(0,T;L²)} + ‖w_t‖_{L²(0,T;V′)} for w = χ₁ − χ₂.
    pub dist_y: f64,
    pub gradient_part: f64,
    pub dual_part: f64,
    /// ‖w_t‖_{L²(0,T;H)} with the same sample differences, for comparison with the dual part.
    pub velocity_part: f64,
}

/// Trapezoid weights in time for `n` samples spaced `dt`.
fn time_weights(n: usize, dt: f64) -> Vec<f64> {
    (0..n)
        .map(|k| if k == 0 || k + 1 == n { 0.5 * dt } else { dt })
        .collect()
}

pub fn trajectory_metrics(dom: &Domain1D, a: &Trajectory, b: &Trajectory) -> Result<TrajectoryMetrics> {
    let n = a.samples.len();
    if n != b.samples.len() {
        return Err(Error::LengthMismatch {
            what: "trajectory samples",
            expected: n,
            found: b.samples.len(),
        });
    }
    if n < 2 || (a.sample_dt() - b.sample_dt()).abs() > 1e-15 * a.sample_dt() {
        return Err(Error::Precondition("trajectories must share their sampling".into()));
    }
    let space = a.samples[0].space();
    if b.samples[0].space() != space {
        return Err(Error::SpaceMismatch {
            expected: space.name(),
            found: b.samples[0].space().name(),
        });
    }
    let layout = Layout::new(dom, space);
    let dt = a.sample_dt();
    let w: Vec<Vec<f64>> = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| {
            let dx = layout.dofs_of(x, dom)?;
            let dy = layout.dofs_of(y, dom)?;
            Ok(dx.iter().zip(&dy).map(|(p, q)| p - q).collect())
        })
        .collect::<Result<_>>()?;
    let tw = time_weights(n, dt);
    let h = dom.h();
    let (kd, ko) = layout.stiffness(h);
    let kw = |v: &[f64]| tridiag::apply_symmetric(&kd, &ko, v);

    let mut l2h = 0.0;
    let mut grad = 0.0;
    let mut dual = 0.0;
    let mut vel = 0.0;
    let (md, mo): (Vec<f64>, Vec<f64>) = (
        kd.iter().zip(&layout.mass).map(|(k, m)| k + m).collect(),
        ko.clone(),
    );
    for k in 0..n {
        let wk = &w[k];
        l2h += tw[k] * layout.norm_sq(wk);
        let kwk = kw(wk);
        grad += tw[k] * wk.iter().zip(&kwk).map(|(a, b)| a * b).sum::<f64>();
        let wt: Vec<f64> = if k == 0 {
            w[1].iter().zip(&w[0]).map(|(a, b)| (a - b) / dt).collect()
        } else if k + 1 == n {
            w[k].iter().zip(&w[k - 1]).map(|(a, b)| (a - b) / dt).collect()
        } else {
            w[k + 1].iter().zip(&w[k - 1]).map(|(a, b)| (a - b) / (2.0 * dt)).collect()
        };
        let r: Vec<f64> = wt.iter().zip(&layout.mass).map(|(v, m)| v * m).collect();
        let z = tridiag::solve_symmetric(&md, &mo, &r)
            .ok_or_else(|| Error::DegenerateInput("singular dual-norm system".into()))?;
        dual += tw[k] * r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        vel += tw[k] * layout.norm_sq(&wt);
    }
    let gradient_part = grad.max(0.0).sqrt();
    let dual_part = dual.max(0.0).sqrt();
    Ok(TrajectoryMetrics {
        dist_l2h: l2h.sqrt(),
        dist_y: gradient_part + dual_part,
        gradient_part,
        dual_part,
        velocity_part: vel.sqrt(),
    })
}
