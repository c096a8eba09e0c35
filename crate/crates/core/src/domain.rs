//! Uniform grid on Ω = (0, 1) with labelled high-diffusion subdomains.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lebesgue::{CellField, ExponentField, GridId, NodalField, QuadratureWeights, SampledField};

/// Requested closed interval [a, b] ⊂ (0, 1) for one high-diffusion subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubdomainSpec {
    pub a: f64,
    pub b: f64,
}

impl SubdomainSpec {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }
}

/// A subdomain after snapping its endpoints to grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Subdomain {
    pub requested: SubdomainSpec,
    /// Node index of the left endpoint a_i.
    pub left: usize,
    /// Node index of the right endpoint b_i.
    pub right: usize,
    pub a: f64,
    pub b: f64,
    /// Largest of the two endpoint displacements caused by snapping.
    pub snap_displacement: f64,
}

impl Subdomain {
    pub fn measure(&self) -> f64 {
        self.b - self.a
    }

    /// Node indices strictly inside (a_i, b_i).
    pub fn interior_nodes(&self) -> std::ops::Range<usize> {
        self.left + 1..self.right
    }
}

/// Region label of a node or cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// Outer boundary Γ = {0, 1}.
    Boundary,
    /// Ω₁ = Ω minus the closed subdomains.
    Outer,
    /// Γ₀,i = {a_i, b_i}.
    Interface(usize),
    /// Interior of Ω₀,i.
    Inner(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Domain1D {
    n: usize,
    h: f64,
    nodes: Vec<f64>,
    midpoints: Vec<f64>,
    subdomains: Vec<Subdomain>,
    node_regions: Vec<Region>,
    cell_regions: Vec<Region>,
    weights: QuadratureWeights,
    id: GridId,
}

fn fnv1a(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for byte in w.to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
    }
    hash
}

impl Domain1D {
    /// Builds the labelled grid with `n` cells, snapping each subdomain endpoint
    /// to its nearest node.
    pub fn new(n: usize, specs: &[SubdomainSpec]) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("need at least 2 cells, got {n}")));
        }
        let h = 1.0 / n as f64;
        let mut sorted = specs.to_vec();
        sorted.sort_by(|x, y| x.a.total_cmp(&y.a));

        let mut subdomains = Vec::with_capacity(sorted.len());
        for spec in sorted {
            if !(spec.a.is_finite() && spec.b.is_finite()) || spec.a >= spec.b {
                return Err(Error::Config(format!(
                    "subdomain [{}, {}] is not a proper interval",
                    spec.a, spec.b
                )));
            }
            if spec.a <= 0.0 || spec.b >= 1.0 {
                return Err(Error::Config(format!(
                    "subdomain [{}, {}] touches the outer boundary",
                    spec.a, spec.b
                )));
            }
            let left = (spec.a / h).round() as usize;
            let right = (spec.b / h).round() as usize;
            if left == 0 || right >= n {
                return Err(Error::Config(format!(
                    "subdomain [{}, {}] touches the outer boundary after snapping to the grid",
                    spec.a, spec.b
                )));
            }
            if right <= left {
                return Err(Error::Config(format!(
                    "subdomain [{}, {}] collapses to a point at N = {n}",
                    spec.a, spec.b
                )));
            }
            let (a, b) = (left as f64 * h, right as f64 * h);
            subdomains.push(Subdomain {
                requested: spec,
                left,
                right,
                a,
                b,
                snap_displacement: (a - spec.a).abs().max((b - spec.b).abs()),
            });
        }
        for pair in subdomains.windows(2) {
            if pair[0].right >= pair[1].left {
                return Err(Error::Config(format!(
                    "subdomains [{}, {}] and [{}, {}] overlap or touch on the grid",
                    pair[0].requested.a, pair[0].requested.b, pair[1].requested.a, pair[1].requested.b
                )));
            }
        }

        let mut node_regions = vec![Region::Outer; n + 1];
        node_regions[0] = Region::Boundary;
        node_regions[n] = Region::Boundary;
        let mut cell_regions = vec![Region::Outer; n];
        for (i, s) in subdomains.iter().enumerate() {
            node_regions[s.left] = Region::Interface(i);
            node_regions[s.right] = Region::Interface(i);
            for k in s.interior_nodes() {
                node_regions[k] = Region::Inner(i);
            }
            for c in s.left..s.right {
                cell_regions[c] = Region::Inner(i);
            }
        }

        let id = GridId(fnv1a(
            std::iter::once(n as u64).chain(subdomains.iter().flat_map(|s| [s.left as u64, s.right as u64])),
        ));
        let nodes = (0..=n).map(|k| k as f64 * h).collect();
        let midpoints = (0..n).map(|c| (c as f64 + 0.5) * h).collect();
        Ok(Self {
            n,
            h,
            nodes,
            midpoints,
            subdomains,
            node_regions,
            cell_regions,
            weights: QuadratureWeights::uniform(n, h, id),
            id,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.n + 1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// |Ω|
    pub fn measure(&self) -> f64 {
        1.0
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn cell_midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn subdomain(&self, i: usize) -> Result<&Subdomain> {
        self.subdomains.get(i).ok_or(Error::IndexOutOfRange {
            what: "subdomain",
            index: i,
            len: self.subdomains.len(),
        })
    }

    pub fn node_regions(&self) -> &[Region] {
        &self.node_regions
    }

    pub fn cell_regions(&self) -> &[Region] {
        &self.cell_regions
    }

    pub fn weights(&self) -> &QuadratureWeights {
        &self.weights
    }

    pub fn grid_id(&self) -> GridId {
        self.id
    }

    /// Nodes of the closure of Ω₁ (everything except subdomain interiors), in order.
    pub fn omega1_nodes(&self) -> Vec<usize> {
        (0..=self.n)
            .filter(|&k| !matches!(self.node_regions[k], Region::Inner(_)))
            .collect()
    }
}

/// ∇u on cells: g_c = (u_{c+1} − u_c)/h.
pub fn gradient(u: &NodalField, dom: &Domain1D) -> Result<CellField> {
    dom.grid_id().ensure(u.grid())?;
    let inv_h = 1.0 / dom.h();
    let g = u.values().windows(2).map(|w| (w[1] - w[0]) * inv_h).collect();
    Ok(CellField::from_parts(g, dom.grid_id()))
}

/// Discrete L²(Ω) inner product with trapezoid weights.
pub fn l2_inner(u: &NodalField, v: &NodalField, w: &QuadratureWeights) -> Result<f64> {
    u.grid().ensure(v.grid())?;
    u.grid().ensure(w.grid())?;
    Ok(u
        .values()
        .iter()
        .zip(v.values())
        .zip(w.node_weights())
        .map(|((a, b), w)| w * a * b)
        .sum())
}

pub fn l2_norm(u: &NodalField, w: &QuadratureWeights) -> Result<f64> {
    Ok(l2_inner(u, u, w)?.sqrt())
}

/// Flux density d(|g|^{p−2} + η)g on one cell.
#[inline]
pub(crate) fn flux_density(d: f64, g: f64, p: f64, eta: f64) -> f64 {
    d * (g.abs().powf(p - 2.0) + eta) * g
}

/// ∫_{Γ₀,i} d(|∇u|^{p−2}+η) ∂u/∂n dS with n the inward normal to Ω₀,i, using
/// one-sided gradients from the Ω₁ cells adjacent to a_i and b_i.
pub fn boundary_flux(
    u: &NodalField,
    dom: &Domain1D,
    diffusion: &CellField,
    p: &ExponentField,
    eta: f64,
    i: usize,
) -> Result<f64> {
    dom.grid_id().ensure(u.grid())?;
    dom.grid_id().ensure(diffusion.grid())?;
    dom.grid_id().ensure(p.grid())?;
    let s = dom.subdomain(i)?;
    let u = u.values();
    let (d, pc) = (diffusion.values(), p.cell_values());
    let inv_h = 1.0 / dom.h();
    let left = s.left - 1;
    let right = s.right;
    let g_left = (u[left + 1] - u[left]) * inv_h;
    let g_right = (u[right + 1] - u[right]) * inv_h;
    // inward normal is +x at a_i and −x at b_i
    Ok(flux_density(d[left], g_left, pc[left], eta) - flux_density(d[right], g_right, pc[right], eta))
}

/// The λ-parametrized diffusion d_λ = d₀ + ψ/λ.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionFamily {
    d0: Vec<f64>,
    bump: Vec<f64>,
    m0: f64,
    big_m0: f64,
    grid: GridId,
}

/// Per-cell diffusion values for one member of the family.
#[derive(Debug, Clone, PartialEq)]
pub struct Diffusion {
    pub values: CellField,
    /// M_λ (or M₀ for the limit): the largest cell value.
    pub max: f64,
}

impl DiffusionFamily {
    /// Default order of vanishing of the bump at the subdomain edges.
    pub const DEFAULT_BUMP_ORDER: f64 = 1.0;

    /// `d0` is sampled at cell midpoints; the bump is
    /// ψ(x) = Σ_i [((x−a_i)(b_i−x))₊ / ((b_i−a_i)/2)²]^k with k = `DEFAULT_BUMP_ORDER`,
    /// so ψ peaks at 1 on every subdomain and vanishes on Ω₁.
    pub fn new(dom: &Domain1D, d0: impl Fn(f64) -> f64) -> Result<Self> {
        Self::with_bump_order(dom, d0, Self::DEFAULT_BUMP_ORDER)
    }

    /// As [`DiffusionFamily::new`] with bump order `k ≥ 1`: ψ vanishes like dist(x, Γ₀)^k
    /// at the subdomain edges (k = 2 gives a C¹ profile with a C² polynomial inside).
    pub fn with_bump_order(dom: &Domain1D, d0: impl Fn(f64) -> f64, order: f64) -> Result<Self> {
        if !(order >= 1.0 && order.is_finite()) {
            return Err(Error::Config(format!("bump order must be ≥ 1, got {order}")));
        }
        let d0: Vec<f64> = dom.cell_midpoints().iter().map(|&x| d0(x)).collect();
        let m0 = d0.iter().copied().fold(f64::INFINITY, f64::min);
        if !(m0 > 0.0) || d0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "d0 must be positive and finite everywhere (min {m0})"
            )));
        }
        let bump = dom
            .cell_midpoints()
            .iter()
            .map(|&x| {
                dom.subdomains()
                    .iter()
                    .map(|s| {
                        let half = 0.5 * (s.b - s.a);
                        let q = ((x - s.a) * (s.b - x)).max(0.0) / (half * half);
                        q.powf(order)
                    })
                    .sum()
            })
            .collect();
        let big_m0 = d0
            .iter()
            .zip(dom.cell_regions())
            .filter(|(_, r)| matches!(r, Region::Outer))
            .map(|(d, _)| *d)
            .fold(m0, f64::max);
        Ok(Self {
            d0,
            bump,
            m0,
            big_m0,
            grid: dom.grid_id(),
        })
    }

    pub fn constant(dom: &Domain1D, d0: f64) -> Result<Self> {
        Self::new(dom, |_| d0)
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    /// M₀ = sup of d₀ over Ω₁.
    pub fn big_m0(&self) -> f64 {
        self.big_m0
    }

    pub fn d0_values(&self) -> &[f64] {
        &self.d0
    }

    pub fn bump_values(&self) -> &[f64] {
        &self.bump
    }

    pub fn diffusion_at(&self, lambda: f64) -> Result<Diffusion> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Precondition(format!(
                "λ must lie in (0, 1], got {lambda}"
            )));
        }
        let values: Vec<f64> = self
            .d0
            .iter()
            .zip(&self.bump)
            .map(|(d, psi)| d + psi / lambda)
            .collect();
        let max = values.iter().copied().fold(0.0, f64::max);
        Ok(Diffusion {
            values: CellField::from_parts(values, self.grid),
            max,
        })
    }

    /// d₀ on every cell; cells inside Ω₀ never carry a gradient in the limit space.
    pub fn limit_diffusion(&self) -> Diffusion {
        Diffusion {
            values: CellField::from_parts(self.d0.clone(), self.grid),
            max: self.big_m0,
        }
    }
}
