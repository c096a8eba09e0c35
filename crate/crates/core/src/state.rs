//! Phase-space elements for the full flow and for the limit (shadow) flow.
//!
//! Both spaces are handled through a common degree-of-freedom layout: a DOF is a
//! contiguous block of interior nodes that share one value. In the full space
//! every interior node is its own block; in the limit space each closed
//! subdomain [a_i, b_i] collapses to a single block.

use serde::Serialize;

use crate::domain::{Domain1D, Region};
use crate::error::{Error, Result};
use crate::lebesgue::{GridId, NodalField, SampledField};

/// Which phase space a state or flow lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Space {
    Full,
    Limit,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Full => "full",
            Space::Limit => "limit",
        }
    }
}

/// Element of the constrained space: a field on the closure of Ω₁ plus one
/// constant per subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitState {
    omega1_values: Vec<f64>,
    subdomain_values: Vec<f64>,
    grid: GridId,
}

impl LimitState {
    /// `omega1_values` follows `dom.omega1_nodes()`; interface entries must equal the
    /// matching subdomain constant and boundary entries must vanish.
    pub fn new(dom: &Domain1D, omega1_values: Vec<f64>, subdomain_values: Vec<f64>) -> Result<Self> {
        let nodes = dom.omega1_nodes();
        if omega1_values.len() != nodes.len() {
            return Err(Error::LengthMismatch {
                what: "limit state Ω₁ values",
                expected: nodes.len(),
                found: omega1_values.len(),
            });
        }
        if subdomain_values.len() != dom.subdomains().len() {
            return Err(Error::LengthMismatch {
                what: "limit state subdomain values",
                expected: dom.subdomains().len(),
                found: subdomain_values.len(),
            });
        }
        for (&k, &v) in nodes.iter().zip(&omega1_values) {
            match dom.node_regions()[k] {
                Region::Boundary if v != 0.0 => {
                    return Err(Error::Precondition(format!(
                        "boundary value at node {k} is {v}, expected 0"
                    )))
                }
                Region::Interface(i) if v != subdomain_values[i] => {
                    return Err(Error::Precondition(format!(
                        "trace at node {k} is {v} but subdomain {i} carries {}",
                        subdomain_values[i]
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            omega1_values,
            subdomain_values,
            grid: dom.grid_id(),
        })
    }

    pub fn omega1_values(&self) -> &[f64] {
        &self.omega1_values
    }

    pub fn subdomain_values(&self) -> &[f64] {
        &self.subdomain_values
    }

    pub fn grid(&self) -> GridId {
        self.grid
    }

    /// The nodal field that equals `s_i` on every node of [a_i, b_i].
    pub fn embed(&self, dom: &Domain1D) -> Result<NodalField> {
        dom.grid_id().ensure(self.grid)?;
        let mut u = vec![0.0; dom.node_count()];
        for (&k, &v) in dom.omega1_nodes().iter().zip(&self.omega1_values) {
            u[k] = v;
        }
        for (s, &v) in dom.subdomains().iter().zip(&self.subdomain_values) {
            u[s.left..=s.right].fill(v);
        }
        NodalField::new(dom, u)
    }
}

/// Replaces u on each closed subdomain by its mean value.
pub fn project_to_limit_space(u: &NodalField, dom: &Domain1D) -> Result<LimitState> {
    dom.grid_id().ensure(u.grid())?;
    let v = u.values();
    let h = dom.h();
    let means: Vec<f64> = dom
        .subdomains()
        .iter()
        .map(|s| {
            // offset by the left value so that constant blocks project exactly
            let base = v[s.left];
            let inner: f64 = v[s.left + 1..s.right].iter().map(|x| x - base).sum();
            base + h * (inner + 0.5 * (v[s.right] - base)) / s.measure()
        })
        .collect();
    let omega1 = dom
        .omega1_nodes()
        .iter()
        .map(|&k| match dom.node_regions()[k] {
            Region::Interface(i) => means[i],
            Region::Boundary => 0.0,
            _ => v[k],
        })
        .collect();
    LimitState::new(dom, omega1, means)
}

/// A point of either phase space.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Full(NodalField),
    Limit(LimitState),
}

impl State {
    pub fn space(&self) -> Space {
        match self {
            State::Full(_) => Space::Full,
            State::Limit(_) => Space::Limit,
        }
    }

    pub fn grid(&self) -> GridId {
        match self {
            State::Full(u) => u.grid(),
            State::Limit(u) => u.grid(),
        }
    }

    pub fn zeros(dom: &Domain1D, space: Space) -> Self {
        match space {
            Space::Full => State::Full(NodalField::zeros(dom)),
            Space::Limit => State::Limit(LimitState {
                omega1_values: vec![0.0; dom.omega1_nodes().len()],
                subdomain_values: vec![0.0; dom.subdomains().len()],
                grid: dom.grid_id(),
            }),
        }
    }

    /// Puts a nodal field into `space`, projecting when the target is the limit space.
    /// Boundary values are zeroed.
    pub fn from_nodal(u: &NodalField, dom: &Domain1D, space: Space) -> Result<Self> {
        dom.grid_id().ensure(u.grid())?;
        let mut v = u.clone();
        let n = v.len() - 1;
        v.values_mut()[0] = 0.0;
        v.values_mut()[n] = 0.0;
        Ok(match space {
            Space::Full => State::Full(v),
            Space::Limit => State::Limit(project_to_limit_space(&v, dom)?),
        })
    }

    /// Nodal representation (identity for full states, embedding for limit states).
    pub fn to_nodal(&self, dom: &Domain1D) -> Result<NodalField> {
        match self {
            State::Full(u) => {
                dom.grid_id().ensure(u.grid())?;
                Ok(u.clone())
            }
            State::Limit(u) => u.embed(dom),
        }
    }

    pub fn norm_h(&self, dom: &Domain1D) -> Result<f64> {
        let u = self.to_nodal(dom)?;
        crate::domain::l2_norm(&u, dom.weights())
    }

    pub fn dist_h(&self, other: &State, dom: &Domain1D) -> Result<f64> {
        let d = self.to_nodal(dom)?.sub(&other.to_nodal(dom)?)?;
        crate::domain::l2_norm(&d, dom.weights())
    }

    pub fn inner_h(&self, other: &State, dom: &Domain1D) -> Result<f64> {
        crate::domain::l2_inner(&self.to_nodal(dom)?, &other.to_nodal(dom)?, dom.weights())
    }
}

/// A cell whose endpoints belong to different DOFs (or to a DOF and the boundary).
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellLink {
    pub cell: usize,
    pub left: Option<usize>,
    pub right: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub space: Space,
    /// Inclusive node ranges, in increasing node order.
    pub groups: Vec<(usize, usize)>,
    /// Lumped mass of each DOF: the sum of its trapezoid node weights.
    pub mass: Vec<f64>,
    pub node_dof: Vec<Option<usize>>,
    pub links: Vec<CellLink>,
    /// DOF index of each subdomain block (limit space only).
    pub subdomain_dof: Vec<usize>,
    pub grid: GridId,
}

impl Layout {
    pub fn new(dom: &Domain1D, space: Space) -> Self {
        let n = dom.cell_count();
        let mut groups = Vec::new();
        let mut subdomain_dof = Vec::new();
        let mut k = 1;
        while k < n {
            match (space, dom.node_regions()[k]) {
                (Space::Limit, Region::Interface(i)) => {
                    let s = dom.subdomains()[i];
                    subdomain_dof.push(groups.len());
                    groups.push((s.left, s.right));
                    k = s.right + 1;
                }
                _ => {
                    groups.push((k, k));
                    k += 1;
                }
            }
        }
        let mut node_dof = vec![None; n + 1];
        for (j, &(lo, hi)) in groups.iter().enumerate() {
            for slot in &mut node_dof[lo..=hi] {
                *slot = Some(j);
            }
        }
        let w = dom.weights().node_weights();
        let mass = groups.iter().map(|&(lo, hi)| w[lo..=hi].iter().sum()).collect();
        let links = (0..n)
            .filter_map(|c| {
                let (l, r) = (node_dof[c], node_dof[c + 1]);
                (l.is_none() || l != r).then_some(CellLink {
                    cell: c,
                    left: l,
                    right: r,
                })
            })
            .collect();
        Self {
            space,
            groups,
            mass,
            node_dof,
            links,
            subdomain_dof,
            grid: dom.grid_id(),
        }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    /// Nodal values of a DOF vector (zero on the outer boundary).
    pub fn expand(&self, dofs: &[f64]) -> Vec<f64> {
        self.node_dof
            .iter()
            .map(|d| d.map_or(0.0, |j| dofs[j]))
            .collect()
    }

    /// DOF values read off a nodal vector that is already constant on every block.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.groups.iter().map(|&(lo, _)| nodal[lo]).collect()
    }

    pub fn dofs_of(&self, u: &State, dom: &Domain1D) -> Result<Vec<f64>> {
        if u.space() != self.space {
            return Err(Error::SpaceMismatch {
                expected: self.space.name(),
                found: u.space().name(),
            });
        }
        self.grid.ensure(u.grid())?;
        Ok(self.restrict(u.to_nodal(dom)?.values()))
    }

    pub fn state_of(&self, dofs: &[f64], dom: &Domain1D) -> State {
        let nodal = self.expand(dofs);
        match self.space {
            Space::Full => State::Full(NodalField::new(dom, nodal).expect("layout matches domain")),
            Space::Limit => {
                let omega1 = dom.omega1_nodes().iter().map(|&k| nodal[k]).collect();
                let subs = dom.subdomains().iter().map(|s| nodal[s.left]).collect();
                State::Limit(LimitState {
                    omega1_values: omega1,
                    subdomain_values: subs,
                    grid: self.grid,
                })
            }
        }
    }

    /// H-norm squared of a DOF vector.
    pub fn norm_sq(&self, dofs: &[f64]) -> f64 {
        dofs.iter().zip(&self.mass).map(|(v, m)| m * v * v).sum()
    }

    /// Tridiagonal stiffness of the Dirichlet seminorm Σ_c h g_c².
    pub fn stiffness(&self, h: f64) -> (Vec<f64>, Vec<f64>) {
        let mut diag = vec![0.0; self.len()];
        let mut off = vec![0.0; self.len().saturating_sub(1)];
        for link in &self.links {
            let q = 1.0 / h;
            if let Some(a) = link.left {
                diag[a] += q;
            }
            if let Some(b) = link.right {
                diag[b] += q;
            }
            if let (Some(a), Some(_)) = (link.left, link.right) {
                off[a] -= q;
            }
        }
        (diag, off)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SubdomainSpec;

    fn dom() -> Domain1D {
        Domain1D::new(50, &[SubdomainSpec::new(0.4, 0.6)]).unwrap()
    }

    #[test]
    fn projection_of_constant_plateau() {
        let dom = dom();
        let u = NodalField::from_fn(&dom, |x| if (0.4 - 1e-9..=0.6 + 1e-9).contains(&x) { 2.5 } else { x * (1.0 - x) });
        let s = project_to_limit_space(&u, &dom).unwrap();
        assert!((s.subdomain_values()[0] - 2.5).abs() < 1e-14);
        let back = s.embed(&dom).unwrap();
        for (a, b) in back.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_of_identity_is_midpoint() {
        let dom = dom();
        let u = NodalField::from_fn(&dom, |x| x);
        let s = project_to_limit_space(&u, &dom).unwrap();
        assert!((s.subdomain_values()[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn projection_is_idempotent() {
        let dom = dom();
        let u = NodalField::from_fn(&dom, |x| (7.0 * x).sin() * x * (1.0 - x));
        let p1 = project_to_limit_space(&u, &dom).unwrap();
        let p2 = project_to_limit_space(&p1.embed(&dom).unwrap(), &dom).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn limit_state_rejects_broken_trace() {
        let dom = dom();
        let mut omega1 = vec![0.0; dom.omega1_nodes().len()];
        let pos = dom.omega1_nodes().iter().position(|&k| k == 20).unwrap();
        omega1[pos] = 1.0;
        let pos_b = dom.omega1_nodes().iter().position(|&k| k == 30).unwrap();
        omega1[pos_b] = 1.0;
        assert!(LimitState::new(&dom, omega1.clone(), vec![0.0]).is_err());
        assert!(LimitState::new(&dom, omega1, vec![1.0]).is_ok());
        let mut bad = vec![0.0; dom.omega1_nodes().len()];
        bad[0] = 0.1;
        assert!(LimitState::new(&dom, bad, vec![0.0]).is_err());
    }

    #[test]
    fn layout_mass_matches_trapezoid() {
        let dom = dom();
        for space in [Space::Full, Space::Limit] {
            let l = Layout::new(&dom, space);
            let total: f64 = l.mass.iter().sum();
            // all nodes except the two boundary ones
            assert!((total - (1.0 - dom.h())).abs() < 1e-13);
            let u = NodalField::from_fn(&dom, |x| (3.0 * x).sin() * x * (1.0 - x));
            let st = State::from_nodal(&u, &dom, space).unwrap();
            let d = l.dofs_of(&st, &dom).unwrap();
            let n2 = st.norm_h(&dom).unwrap().powi(2);
            assert!((l.norm_sq(&d) - n2).abs() < 1e-14);
            assert_eq!(l.state_of(&d, &dom), st);
        }
        let l = Layout::new(&dom, Space::Limit);
        assert_eq!(l.subdomain_dof.len(), 1);
        let j = l.subdomain_dof[0];
        assert!((l.mass[j] - (0.2 + dom.h())).abs() < 1e-14);
    }
}
