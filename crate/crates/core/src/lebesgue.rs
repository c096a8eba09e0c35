//! Variable-exponent Lebesgue structure on a discrete grid.
//!
//! Nodal quantities (the solution `u`) are integrated with trapezoid node
//! weights against the nodal exponent samples; cell quantities (gradients)
//! use midpoint cell weights against the cell-midpoint exponent samples.

use serde::Serialize;

use crate::domain::Domain1D;
use crate::error::{Error, Result};

/// Identifies the grid a sampled field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct GridId(pub u64);

impl GridId {
    pub(crate) fn ensure(self, other: GridId) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.0,
                found: other.0,
            })
        }
    }
}

/// Where a sampled field lives on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Nodes,
    Cells,
}

/// Common surface of grid-sampled scalar fields.
pub trait SampledField {
    const LOCATION: Location;
    fn values(&self) -> &[f64];
    fn grid(&self) -> GridId;
}

/// One real per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
    grid: GridId,
}

impl NodalField {
    pub fn new(dom: &Domain1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != dom.node_count() {
            return Err(Error::LengthMismatch {
                what: "nodal field",
                expected: dom.node_count(),
                found: values.len(),
            });
        }
        Ok(Self {
            values,
            grid: dom.grid_id(),
        })
    }

    pub fn zeros(dom: &Domain1D) -> Self {
        Self {
            values: vec![0.0; dom.node_count()],
            grid: dom.grid_id(),
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(dom: &Domain1D, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            values: dom.nodes().iter().map(|&x| f(x)).collect(),
            grid: dom.grid_id(),
        }
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when both outer boundary entries vanish (membership in the Dirichlet space).
    pub fn satisfies_dirichlet(&self) -> bool {
        self.values.first() == Some(&0.0) && self.values.last() == Some(&0.0)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            grid: self.grid,
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.grid.ensure(other.grid)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            grid: self.grid,
        })
    }
}

impl SampledField for NodalField {
    const LOCATION: Location = Location::Nodes;
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn grid(&self) -> GridId {
        self.grid
    }
}

/// One real per grid cell (gradient-like quantities).
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    values: Vec<f64>,
    grid: GridId,
}

impl CellField {
    pub fn new(dom: &Domain1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != dom.cell_count() {
            return Err(Error::LengthMismatch {
                what: "cell field",
                expected: dom.cell_count(),
                found: values.len(),
            });
        }
        Ok(Self {
            values,
            grid: dom.grid_id(),
        })
    }

    pub(crate) fn from_parts(values: Vec<f64>, grid: GridId) -> Self {
        Self { values, grid }
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl SampledField for CellField {
    const LOCATION: Location = Location::Cells;
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn grid(&self) -> GridId {
        self.grid
    }
}

/// Trapezoid weights on nodes and midpoint weights on cells.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureWeights {
    node_weights: Vec<f64>,
    cell_weights: Vec<f64>,
    grid: GridId,
}

impl QuadratureWeights {
    pub(crate) fn uniform(n_cells: usize, h: f64, grid: GridId) -> Self {
        let mut node_weights = vec![h; n_cells + 1];
        node_weights[0] = 0.5 * h;
        node_weights[n_cells] = 0.5 * h;
        Self {
            node_weights,
            cell_weights: vec![h; n_cells],
            grid,
        }
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn cell_weights(&self) -> &[f64] {
        &self.cell_weights
    }

    pub fn grid(&self) -> GridId {
        self.grid
    }

    fn for_location(&self, loc: Location) -> &[f64] {
        match loc {
            Location::Nodes => &self.node_weights,
            Location::Cells => &self.cell_weights,
        }
    }
}

/// Exponent samples p(x) at nodes and at cell midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentField {
    node_values: Vec<f64>,
    cell_values: Vec<f64>,
    p_minus: f64,
    p_plus: f64,
    grid: GridId,
}

impl ExponentField {
    /// Validates `2 < p⁻` and `p⁺ < ∞`; the bounds are recomputed from the samples.
    pub fn from_samples(dom: &Domain1D, node_values: Vec<f64>, cell_values: Vec<f64>) -> Result<Self> {
        if node_values.len() != dom.node_count() {
            return Err(Error::LengthMismatch {
                what: "nodal exponent samples",
                expected: dom.node_count(),
                found: node_values.len(),
            });
        }
        if cell_values.len() != dom.cell_count() {
            return Err(Error::LengthMismatch {
                what: "cell exponent samples",
                expected: dom.cell_count(),
                found: cell_values.len(),
            });
        }
        let all = node_values.iter().chain(&cell_values);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &p in all {
            if !p.is_finite() {
                return Err(Error::Config("exponent samples must be finite".into()));
            }
            lo = lo.min(p);
            hi = hi.max(p);
        }
        if lo <= 2.0 {
            return Err(Error::Config(format!(
                "exponent must exceed 2 (the theory requires 2 < p⁻); got p⁻ = {lo}"
            )));
        }
        Ok(Self {
            node_values,
            cell_values,
            p_minus: lo,
            p_plus: hi,
            grid: dom.grid_id(),
        })
    }

    pub fn constant(dom: &Domain1D, p: f64) -> Result<Self> {
        Self::from_samples(dom, vec![p; dom.node_count()], vec![p; dom.cell_count()])
    }

    /// p(x) = p0 + p1·x.
    pub fn affine(dom: &Domain1D, p0: f64, p1: f64) -> Result<Self> {
        let nodes = dom.nodes().iter().map(|x| p0 + p1 * x).collect();
        let cells = dom.cell_midpoints().iter().map(|x| p0 + p1 * x).collect();
        Self::from_samples(dom, nodes, cells)
    }

    /// Nodal table; cell samples are the mean of the two adjacent nodes.
    pub fn from_node_table(dom: &Domain1D, table: Vec<f64>) -> Result<Self> {
        if table.len() != dom.node_count() {
            return Err(Error::LengthMismatch {
                what: "exponent table",
                expected: dom.node_count(),
                found: table.len(),
            });
        }
        let cells = table.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self::from_samples(dom, table, cells)
    }

    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }

    pub fn cell_values(&self) -> &[f64] {
        &self.cell_values
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    pub fn grid(&self) -> GridId {
        self.grid
    }

    fn for_location(&self, loc: Location) -> &[f64] {
        match loc {
            Location::Nodes => &self.node_values,
            Location::Cells => &self.cell_values,
        }
    }
}

fn aligned<'a, F: SampledField>(
    v: &'a F,
    p: &'a ExponentField,
    w: &'a QuadratureWeights,
) -> Result<(&'a [f64], &'a [f64], &'a [f64])> {
    v.grid().ensure(p.grid())?;
    v.grid().ensure(w.grid())?;
    let exps = p.for_location(F::LOCATION);
    let weights = w.for_location(F::LOCATION);
    if v.values().len() != exps.len() {
        return Err(Error::LengthMismatch {
            what: "sampled field",
            expected: exps.len(),
            found: v.values().len(),
        });
    }
    Ok((v.values(), exps, weights))
}

fn modular_scaled(values: &[f64], exps: &[f64], weights: &[f64], inv_scale: f64) -> f64 {
    values
        .iter()
        .zip(exps)
        .zip(weights)
        .map(|((v, p), w)| w * (v * inv_scale).abs().powf(*p))
        .sum()
}

/// ρ(v) = Σ w_k |v_k|^{p_k}.
pub fn modular<F: SampledField>(v: &F, p: &ExponentField, w: &QuadratureWeights) -> Result<f64> {
    let (values, exps, weights) = aligned(v, p, w)?;
    Ok(modular_scaled(values, exps, weights, 1.0))
}

const LUX_REL_TOL: f64 = 1e-12;

/// Luxemburg norm inf{s > 0 : ρ(v/s) ≤ 1}, by bisection on s.
pub fn luxemburg_norm<F: SampledField>(
    v: &F,
    p: &ExponentField,
    w: &QuadratureWeights,
) -> Result<f64> {
    let (values, exps, weights) = aligned(v, p, w)?;
    let rho = modular_scaled(values, exps, weights, 1.0);
    if rho == 0.0 {
        return Ok(0.0);
    }
    let (pm, pp) = (p.p_minus(), p.p_plus());
    let a = rho.powf(1.0 / pm);
    let b = rho.powf(1.0 / pp);
    let mut lo = 0.5 * a.min(b);
    let mut hi = 2.0 * a.max(b);
    let excess = |s: f64| modular_scaled(values, exps, weights, 1.0 / s) - 1.0;
    // ρ(v/s) is strictly decreasing in s
    while excess(lo) < 0.0 {
        lo *= 0.5;
    }
    while excess(hi) > 0.0 {
        hi *= 2.0;
    }
    while hi - lo > LUX_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of the norm–modular sandwich check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormModularMargins {
    pub modular: f64,
    pub norm: f64,
    pub lower: f64,
    pub upper: f64,
    /// norm − lower
    pub lower_margin: f64,
    /// upper − norm
    pub upper_margin: f64,
}

/// min{ρ^{1/p⁻}, ρ^{1/p⁺}} ≤ ‖v‖ ≤ max{ρ^{1/p⁻}, ρ^{1/p⁺}}.
pub fn check_norm_modular_bounds<F: SampledField>(
    v: &F,
    p: &ExponentField,
    w: &QuadratureWeights,
) -> Result<NormModularMargins> {
    let rho = modular(v, p, w)?;
    if rho == 0.0 {
        return Err(Error::DegenerateInput(
            "norm/modular bounds need a nonzero field".into(),
        ));
    }
    let norm = luxemburg_norm(v, p, w)?;
    let a = rho.powf(1.0 / p.p_minus());
    let b = rho.powf(1.0 / p.p_plus());
    let (lower, upper) = (a.min(b), a.max(b));
    Ok(NormModularMargins {
        modular: rho,
        norm,
        lower,
        upper,
        lower_margin: norm - lower,
        upper_margin: upper - norm,
    })
}

/// Margins of the two-sided power inequality for a, b ≥ 0 and α ≥ β ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerMargins {
    pub sum: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_margin: f64,
    pub upper_margin: f64,
}

pub fn check_power_inequality(a: f64, b: f64, alpha: f64, beta: f64) -> Result<PowerMargins> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::Precondition(format!(
            "power inequality needs a, b ≥ 0 (got a = {a}, b = {b})"
        )));
    }
    if !(beta >= 0.0 && alpha >= beta) {
        return Err(Error::Precondition(format!(
            "power inequality needs α ≥ β ≥ 0 (got α = {alpha}, β = {beta})"
        )));
    }
    let s = a + b;
    let sum = a.powf(alpha) + b.powf(beta);
    let scale = 0.5_f64.powf(alpha);
    let lower = if s < 1.0 {
        scale * s.powf(alpha)
    } else {
        scale * s.powf(beta)
    };
    let upper = if s >= 1.0 {
        2.0 * s.powf(alpha)
    } else {
        2.0 * s.powf(beta)
    };
    Ok(PowerMargins {
        sum,
        lower,
        upper,
        lower_margin: sum - lower,
        upper_margin: upper - sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Domain1D, SubdomainSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Domain1D {
        Domain1D::new(n, &[]).unwrap()
    }

    fn unit_with(n: usize) -> Domain1D {
        Domain1D::new(n, &[SubdomainSpec::new(0.4, 0.6)]).unwrap()
    }

    #[test]
    fn modular_of_zero_is_zero() {
        let dom = unit(32);
        let p = ExponentField::affine(&dom, 2.5, 1.0).unwrap();
        let v = NodalField::zeros(&dom);
        assert_eq!(modular(&v, &p, dom.weights()).unwrap(), 0.0);
    }

    #[test]
    fn modular_of_constant() {
        let dom = unit(64);
        let p = ExponentField::constant(&dom, 3.0).unwrap();
        let v = NodalField::from_fn(&dom, |_| 2.0);
        let rho = modular(&v, &p, dom.weights()).unwrap();
        assert!((rho - 8.0).abs() < 1e-12);
    }

    #[test]
    fn modular_of_identity_quartic() {
        // ∫₀¹ x⁴ dx = 1/5
        let dom = unit(1000);
        let p = ExponentField::constant(&dom, 4.0).unwrap();
        let v = NodalField::from_fn(&dom, |x| x);
        let rho = modular(&v, &p, dom.weights()).unwrap();
        assert!((rho - 0.2).abs() < 1e-4, "{rho}");
    }

    #[test]
    fn mismatched_grid_is_structural_error() {
        let a = unit(32);
        let b = unit(64);
        let p = ExponentField::constant(&a, 3.0).unwrap();
        let v = NodalField::zeros(&b);
        assert!(matches!(
            modular(&v, &p, a.weights()),
            Err(Error::GridMismatch { .. })
        ));
        // same N, different subdomains: still a different grid
        let c = unit_with(32);
        let v = NodalField::zeros(&c);
        assert!(matches!(
            luxemburg_norm(&v, &p, a.weights()),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn exponent_at_or_below_two_rejected() {
        let dom = unit(16);
        assert!(ExponentField::constant(&dom, 2.0).is_err());
        assert!(ExponentField::affine(&dom, 1.9, 1.0).is_err());
        let p = ExponentField::affine(&dom, 2.5, 1.0).unwrap();
        assert_eq!(p.p_minus(), 2.5);
        assert_eq!(p.p_plus(), 3.5);
    }

    #[test]
    fn luxemburg_simple_values() {
        let dom = unit(50);
        let p = ExponentField::constant(&dom, 4.0).unwrap();
        let w = dom.weights();
        assert_eq!(luxemburg_norm(&NodalField::zeros(&dom), &p, w).unwrap(), 0.0);
        let one = NodalField::from_fn(&dom, |_| 1.0);
        assert!((luxemburg_norm(&one, &p, w).unwrap() - 1.0).abs() < 1e-11);
        let two = NodalField::from_fn(&dom, |_| 2.0);
        // (∫|v|⁴)^{1/4} = 2
        assert!((luxemburg_norm(&two, &p, w).unwrap() - 2.0).abs() < 1e-11);
    }

    #[test]
    fn luxemburg_matches_classical_norm_for_constant_exponent() {
        let dom = unit(80);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &pc in &[2.5, 3.0, 4.5] {
            let p = ExponentField::constant(&dom, pc).unwrap();
            let v = NodalField::from_fn(&dom, |_| rng.random_range(-3.0..3.0));
            let classical: f64 = v
                .values()
                .iter()
                .zip(dom.weights().node_weights())
                .map(|(x, w)| w * x.abs().powf(pc))
                .sum::<f64>()
                .powf(1.0 / pc);
            let lux = luxemburg_norm(&v, &p, dom.weights()).unwrap();
            assert!((lux - classical).abs() <= 1e-10 * classical);
        }
    }

    #[test]
    fn luxemburg_bisection_residual() {
        let dom = unit(64);
        let p = ExponentField::affine(&dom, 2.2, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let scale = 10f64.powf(rng.random_range(-3.0..3.0));
            let v = NodalField::from_fn(&dom, |_| scale * rng.random_range(-1.0..1.0));
            let s = luxemburg_norm(&v, &p, dom.weights()).unwrap();
            let r = modular(&v.scaled(1.0 / s), &p, dom.weights()).unwrap();
            assert!((r - 1.0).abs() <= 1e-10, "residual {r}");
        }
    }

    #[test]
    fn cell_fields_use_cell_samples() {
        let dom = unit(10);
        let p = ExponentField::affine(&dom, 3.0, 1.0).unwrap();
        let g = CellField::new(&dom, vec![2.0; 10]).unwrap();
        let rho = modular(&g, &p, dom.weights()).unwrap();
        let expected: f64 = dom
            .cell_midpoints()
            .iter()
            .map(|x| 0.1 * 2f64.powf(3.0 + x))
            .sum();
        assert!((rho - expected).abs() < 1e-13);
    }

    #[test]
    fn norm_modular_bounds_constant_exponent_coincide() {
        let dom = unit(40);
        let p = ExponentField::constant(&dom, 3.0).unwrap();
        let v = NodalField::from_fn(&dom, |x| (3.0 * x).sin() + 0.2);
        let m = check_norm_modular_bounds(&v, &p, dom.weights()).unwrap();
        assert!(m.lower_margin.abs() < 1e-10 && m.upper_margin.abs() < 1e-10);
    }

    #[test]
    fn norm_modular_bounds_unit_field() {
        let dom = unit(40);
        let p = ExponentField::affine(&dom, 3.0, 1.0).unwrap();
        let v = NodalField::from_fn(&dom, |_| 1.0);
        let m = check_norm_modular_bounds(&v, &p, dom.weights()).unwrap();
        assert!((m.modular - 1.0).abs() < 1e-12);
        assert!(m.lower_margin >= -1e-10 && m.upper_margin >= -1e-10);
    }

    #[test]
    fn norm_modular_bounds_zero_field_is_degenerate() {
        let dom = unit(16);
        let p = ExponentField::constant(&dom, 3.0).unwrap();
        assert!(matches!(
            check_norm_modular_bounds(&NodalField::zeros(&dom), &p, dom.weights()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn norm_modular_bounds_random_sweep() {
        let dom = unit(48);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p0 = rng.random_range(2.01..5.0);
            let p1 = rng.random_range(0.0..3.0);
            let p = ExponentField::affine(&dom, p0, p1).unwrap();
            let scale = 10f64.powf(rng.random_range(-2.0..2.0));
            let v = NodalField::from_fn(&dom, |_| scale * rng.random_range(-1.0..1.0));
            let m = check_norm_modular_bounds(&v, &p, dom.weights()).unwrap();
            assert!(m.lower_margin >= -1e-10 * m.norm.max(1.0), "{m:?}");
            assert!(m.upper_margin >= -1e-10 * m.norm.max(1.0), "{m:?}");
        }
    }

    #[test]
    fn power_inequality_examples() {
        let m = check_power_inequality(0.0, 0.0, 2.0, 2.0).unwrap();
        assert_eq!((m.sum, m.lower, m.upper), (0.0, 0.0, 0.0));
        let m = check_power_inequality(1.0, 1.0, 2.0, 2.0).unwrap();
        assert_eq!(m.sum, 2.0);
        assert_eq!(m.lower, 1.0);
        assert_eq!(m.upper, 8.0);
        assert_eq!((m.lower_margin, m.upper_margin), (1.0, 6.0));
        assert!(matches!(
            check_power_inequality(1.0, 1.0, 1.0, 2.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn power_inequality_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let a = rng.random_range(0.0..3.0);
            let b = rng.random_range(0.0..3.0);
            let alpha = rng.random_range(0.0..6.0);
            let beta = rng.random_range(0.0..=alpha);
            let m = check_power_inequality(a, b, alpha, beta).unwrap();
            assert!(m.lower_margin >= -1e-12 && m.upper_margin >= -1e-12, "{a} {b} {alpha} {beta} {m:?}");
        }
    }

    proptest::proptest! {
        #[test]
        fn scaling_sandwich(c in 1.0f64..6.0, seed in 0u64..500) {
            let dom = unit(24);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = ExponentField::affine(&dom, 2.3, 1.7).unwrap();
            let v = NodalField::from_fn(&dom, |_| rng.random_range(-2.0..2.0));
            let w = dom.weights();
            let rho = modular(&v, &p, w).unwrap();
            let rho_c = modular(&v.scaled(c), &p, w).unwrap();
            let tol = 1e-12 * rho_c.max(1.0);
            proptest::prop_assert!(c.powf(p.p_minus()) * rho <= rho_c + tol);
            proptest::prop_assert!(rho_c <= c.powf(p.p_plus()) * rho + tol);
        }
    }
}
