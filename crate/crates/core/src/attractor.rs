//! Snapshot clouds as attractor proxies: semidistances, dimension estimates, attraction
//! rates and the small-λ study.

use std::collections::HashSet;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{DiffusionFamily, Domain1D};
use crate::error::{Error, Result};
use crate::initial::{ensemble_field, member_rng};
use crate::lebesgue::{GridId, NodalField, SampledField};
use crate::semiflow::{integer_ratio, Regime, Semiflow};
use crate::state::{Space, State};
use crate::stats::linear_fit;

/// Distances at or below this are treated as zero when fitting attraction rates.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Clouds with diameter at or below this are reported as zero-dimensional.
pub const DEFAULT_DEGENERATE_DIAMETER: f64 = 1e-6;

/// Finite set of states with time and ensemble-member labels.
///
/// Points are stored with their nodal values scaled by the square roots of the
/// trapezoid weights, so Euclidean distances between coordinates are H distances.
#[derive(Debug, Clone)]
pub struct SnapshotCloud {
    grid: GridId,
    space: Space,
    states: Vec<State>,
    coords: Vec<Vec<f64>>,
    times: Vec<f64>,
    members: Vec<usize>,
}

impl SnapshotCloud {
    pub fn new(dom: &Domain1D, states: Vec<State>, times: Vec<f64>, members: Vec<usize>) -> Result<Self> {
        let first = states.first().ok_or(Error::EmptyCloud)?;
        let (space, grid) = (first.space(), first.grid());
        if times.len() != states.len() {
            return Err(Error::LengthMismatch {
                what: "cloud times",
                expected: states.len(),
                found: times.len(),
            });
        }
        if members.len() != states.len() {
            return Err(Error::LengthMismatch {
                what: "cloud member ids",
                expected: states.len(),
                found: members.len(),
            });
        }
        dom.grid_id().ensure(grid)?;
        let sqrt_w: Vec<f64> = dom.weights().node_weights().iter().map(|w| w.sqrt()).collect();
        let mut coords = Vec::with_capacity(states.len());
        for s in &states {
            if s.space() != space {
                return Err(Error::SpaceMismatch {
                    expected: space.name(),
                    found: s.space().name(),
                });
            }
            let v = s.to_nodal(dom)?;
            if v.values().iter().any(|x| !x.is_finite()) {
                return Err(Error::DegenerateInput("cloud point has non-finite values".into()));
            }
            coords.push(v.values().iter().zip(&sqrt_w).map(|(a, b)| a * b).collect());
        }
        Ok(Self {
            grid,
            space,
            states,
            coords,
            times,
            members,
        })
    }

    /// Cloud of full-space points with zero times and member ids 0, 1, 2, ...
    pub fn from_nodal(dom: &Domain1D, fields: Vec<NodalField>) -> Result<Self> {
        let n = fields.len();
        Self::new(
            dom,
            fields.into_iter().map(State::Full).collect(),
            vec![0.0; n],
            (0..n).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn grid(&self) -> GridId {
        self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Largest H norm over the cloud.
    pub fn max_norm(&self) -> f64 {
        self.coords.iter().map(|c| norm(c)).fold(0.0, f64::max)
    }

    /// Largest pairwise H distance.
    pub fn diameter(&self) -> f64 {
        (0..self.coords.len())
            .into_par_iter()
            .map(|i| {
                self.coords[i + 1..]
                    .iter()
                    .map(|c| dist(&self.coords[i], c))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// One row per snapshot: `member,t,node_0,...,node_N` with nodal values.
    pub fn write_csv<W: Write>(&self, dom: &Domain1D, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::DegenerateInput(format!("write failed: {e}"));
        let n = dom.node_count();
        let mut header = String::from("member,t");
        for k in 0..n {
            header.push_str(&format!(",node_{k}"));
        }
        writeln!(out, "{header}").map_err(io)?;
        for ((s, t), m) in self.states.iter().zip(&self.times).zip(&self.members) {
            let mut line = format!("{m},{t:.16e}");
            for v in s.to_nodal(dom)?.values() {
                line.push_str(&format!(",{v:.16e}"));
            }
            writeln!(out, "{line}").map_err(io)?;
        }
        Ok(())
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// sup_{a∈A} inf_{b∈B} ‖a − b‖_H by brute force.
pub fn hausdorff_semidistance(a: &SnapshotCloud, b: &SnapshotCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    a.grid.ensure(b.grid)?;
    if a.space != b.space {
        return Err(Error::SpaceMismatch {
            expected: a.space.name(),
            found: b.space.name(),
        });
    }
    Ok(a.coords
        .par_iter()
        .map(|x| b.coords.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max))
}

/// A bounded set of initial data: `size` ensemble fields with values in [−radius, radius].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub size: usize,
    pub radius: f64,
    pub seed: u64,
}

fn ensemble_states(flow: &Semiflow, spec: &EnsembleSpec) -> Result<Vec<State>> {
    if spec.size == 0 {
        return Err(Error::EmptyCloud);
    }
    if !(spec.radius >= 0.0 && spec.radius.is_finite()) {
        return Err(Error::Config(format!("ensemble radius must be finite and ≥ 0, got {}", spec.radius)));
    }
    (0..spec.size)
        .map(|m| {
            let mut rng = member_rng(spec.seed, m as u64);
            flow.state_from_nodal(&ensemble_field(flow.domain(), spec.radius, &mut rng))
        })
        .collect()
}

/// Evolves the ensemble, discards [0, t_transient] and keeps the samples on
/// [t_transient, t_transient + t_sample], ordered by (member, time).
pub fn approximate_attractor(
    flow: &Semiflow,
    ensemble: &EnsembleSpec,
    t_transient: f64,
    t_sample: f64,
) -> Result<SnapshotCloud> {
    if !(t_transient >= 2.0) {
        return Err(Error::Precondition(format!(
            "transient must be at least 2 to pass the absorbing time, got {t_transient}"
        )));
    }
    let dt = flow.options().sample_dt;
    let skip = integer_ratio(t_transient, dt, "transient time")? as usize;
    let keep = if t_sample == 0.0 {
        0
    } else {
        integer_ratio(t_sample, dt, "sampling time")? as usize
    };
    let starts = ensemble_states(flow, ensemble)?;
    let runs: Vec<Vec<(f64, State)>> = starts
        .par_iter()
        .map(|u0| {
            let tr = flow.evolve(u0, (skip + keep) as f64 * dt)?;
            let times = tr.times();
            Ok(tr.samples()[skip..]
                .iter()
                .zip(&times[skip..])
                .map(|(s, t)| (*t, s.clone()))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut states = Vec::new();
    let mut times = Vec::new();
    let mut members = Vec::new();
    for (m, run) in runs.into_iter().enumerate() {
        for (t, s) in run {
            states.push(s);
            times.push(t);
            members.push(m);
        }
    }
    SnapshotCloud::new(flow.domain(), states, times, members)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimensionMethod {
    /// Slope of log C(ε) against log ε, with C the fraction of pairs closer than ε.
    Correlation,
    /// Box counting on the projection onto the leading principal components (at most 3).
    BoxPca { components: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionEstimate {
    pub method: DimensionMethod,
    pub slope: f64,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub r_squared: f64,
    pub fit_points: usize,
    pub diameter: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimensionOptions {
    pub degenerate_diameter: f64,
    /// Fraction of the log-scale range trimmed from each end before fitting.
    pub trim: f64,
    pub correlation_scales: usize,
}

impl Default for DimensionOptions {
    fn default() -> Self {
        Self {
            degenerate_diameter: DEFAULT_DEGENERATE_DIAMETER,
            trim: 0.2,
            correlation_scales: 16,
        }
    }
}

pub fn fractal_dimension(cloud: &SnapshotCloud, method: DimensionMethod) -> Result<DimensionEstimate> {
    fractal_dimension_with(cloud, method, &DimensionOptions::default())
}

pub fn fractal_dimension_with(
    cloud: &SnapshotCloud,
    method: DimensionMethod,
    opts: &DimensionOptions,
) -> Result<DimensionEstimate> {
    let diameter = cloud.diameter();
    if diameter <= opts.degenerate_diameter {
        return Ok(DimensionEstimate {
            method,
            slope: 0.0,
            eps_lo: diameter,
            eps_hi: diameter,
            r_squared: 1.0,
            fit_points: 0,
            diameter,
            note: Some(format!(
                "degenerate cloud: diameter {diameter:.3e} ≤ {:.1e}",
                opts.degenerate_diameter
            )),
        });
    }
    match method {
        DimensionMethod::Correlation => correlation_dimension(cloud, diameter, opts),
        DimensionMethod::BoxPca { components } => box_pca_dimension(cloud, components, diameter, opts),
    }
}

/// Median nearest-neighbor distance, falling back to the smallest positive distance.
fn nearest_neighbor_scale(points: &[Vec<f64>]) -> f64 {
    let nn: Vec<(f64, f64)> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            let mut best_pos = f64::INFINITY;
            for (j, q) in points.iter().enumerate() {
                if j != i {
                    let d = dist(&points[i], q);
                    best = best.min(d);
                    if d > 0.0 {
                        best_pos = best_pos.min(d);
                    }
                }
            }
            (best, best_pos)
        })
        .collect();
    let mut all: Vec<f64> = nn.iter().map(|p| p.0).collect();
    all.sort_by(f64::total_cmp);
    let median = all[all.len() / 2];
    if median > 0.0 {
        median
    } else {
        nn.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    }
}

fn scaling_range(nn: f64, diameter: f64, trim: f64) -> (f64, f64) {
    let (lo, hi) = (nn.ln(), diameter.ln());
    let span = hi - lo;
    ((lo + trim * span).exp(), (hi - trim * span).exp())
}

fn correlation_dimension(cloud: &SnapshotCloud, diameter: f64, opts: &DimensionOptions) -> Result<DimensionEstimate> {
    let n = cloud.len();
    if n < 100 {
        return Err(Error::Precondition(format!(
            "correlation dimension needs at least 100 points, got {n}"
        )));
    }
    let pts = &cloud.coords;
    let mut d: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| pts[i + 1..].iter().map(move |q| dist(&pts[i], q)))
        .collect();
    d.par_sort_unstable_by(f64::total_cmp);
    let nn = nearest_neighbor_scale(pts);
    let (eps_lo, eps_hi) = scaling_range(nn, diameter, opts.trim);
    let m = opts.correlation_scales.max(3);
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for k in 0..m {
        let eps = (eps_lo.ln() + (eps_hi.ln() - eps_lo.ln()) * k as f64 / (m - 1) as f64).exp();
        let count = d.partition_point(|&x| x < eps);
        if count > 0 {
            xs.push(eps.ln());
            ys.push((count as f64 / d.len() as f64).ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "only {} nonempty correlation scales in [{eps_lo:.3e}, {eps_hi:.3e}]",
            xs.len()
        )));
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(DimensionEstimate {
        method: DimensionMethod::Correlation,
        slope: fit.slope.max(0.0),
        eps_lo,
        eps_hi,
        r_squared: fit.r_squared,
        fit_points: xs.len(),
        diameter,
        note: None,
    })
}

fn box_pca_dimension(
    cloud: &SnapshotCloud,
    components: usize,
    diameter: f64,
    opts: &DimensionOptions,
) -> Result<DimensionEstimate> {
    if !(1..=3).contains(&components) {
        return Err(Error::Config(format!("box-on-PCA uses 1 to 3 components, got {components}")));
    }
    let pts = &cloud.coords;
    let (n, dim) = (pts.len(), pts[0].len());
    if n < 2 {
        return Err(Error::Precondition("box counting needs at least 2 points".into()));
    }
    let mean: Vec<f64> = (0..dim).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, dim, |i, j| pts[i][j] - mean[j]);
    let cov = x.transpose() * &x / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    let k = order
        .iter()
        .take(components)
        .filter(|&&j| eig.eigenvalues[j] > 1e-12 * top)
        .count()
        .max(1);
    let proj: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            order[..k]
                .iter()
                .map(|&c| (0..dim).map(|j| x[(i, j)] * eig.eigenvectors[(j, c)]).sum())
                .collect()
        })
        .collect();
    let mins: Vec<f64> = (0..k).map(|c| proj.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min)).collect();
    let extent = (0..k)
        .map(|c| proj.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max) - mins[c])
        .fold(0.0, f64::max);
    let nn = nearest_neighbor_scale(&proj);
    let (eps_lo, eps_hi) = scaling_range(nn, extent, opts.trim);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut eps = extent;
    while eps >= nn {
        if eps >= eps_lo * (1.0 - 1e-12) && eps <= eps_hi * (1.0 + 1e-12) {
            let boxes: HashSet<Vec<i64>> = proj
                .iter()
                .map(|p| (0..k).map(|c| ((p[c] - mins[c]) / eps).floor() as i64).collect())
                .collect();
            xs.push(eps.ln());
            ys.push((boxes.len() as f64).ln());
        }
        eps *= 0.5;
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "fewer than 2 dyadic box sizes in [{eps_lo:.3e}, {eps_hi:.3e}]"
        )));
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok(DimensionEstimate {
        method: DimensionMethod::BoxPca { components: k },
        slope: (-fit.slope).max(0.0),
        eps_lo,
        eps_hi,
        r_squared: fit.r_squared,
        fit_points: xs.len(),
        diameter,
        note: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractionFit {
    pub c1: f64,
    pub c2: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub samples_used: usize,
    /// RMS residual of the fit of log dist.
    pub residual: f64,
    /// Fewer than 5 samples above the noise floor.
    pub degenerate: bool,
    /// c₂ > 0 on a non-degenerate fit.
    pub attracting: bool,
    pub note: Option<String>,
}

/// Fits dist ≈ c₁e^{−c₂t} by least squares on (t, log dist) over the samples above
/// [`NOISE_FLOOR`].
pub fn fit_exponential_attraction(series: &[(f64, f64)]) -> Result<AttractionFit> {
    if series.iter().any(|(t, d)| !t.is_finite() || !d.is_finite() || *d < 0.0) {
        return Err(Error::DegenerateInput("attraction series needs finite t and dist ≥ 0".into()));
    }
    let kept: Vec<&(f64, f64)> = series.iter().filter(|(_, d)| *d > NOISE_FLOOR).collect();
    if kept.len() < 5 {
        return Ok(AttractionFit {
            c1: NOISE_FLOOR,
            c2: 0.0,
            t_start: series.first().map_or(0.0, |s| s.0),
            t_end: series.last().map_or(0.0, |s| s.0),
            samples_used: kept.len(),
            residual: 0.0,
            degenerate: true,
            attracting: false,
            note: Some(format!("only {} samples above the noise floor {NOISE_FLOOR:e}", kept.len())),
        });
    }
    let xs: Vec<f64> = kept.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = kept.iter().map(|s| s.1.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    let c2 = -fit.slope;
    // a flat series fits a slope at roundoff level
    let attracting = c2 > 1e-9;
    Ok(AttractionFit {
        c1: fit.intercept.exp(),
        c2,
        t_start: xs[0],
        t_end: xs[xs.len() - 1],
        samples_used: xs.len(),
        residual: fit.rms_residual,
        degenerate: false,
        attracting,
        note: (!attracting).then(|| "non-attracting: fitted rate is not positive".to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractionExperiment {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub fit: AttractionFit,
}

/// Evolves the ensemble `d` over [0, horizon] and fits the decay of
/// dist_H(T(t)D, M) at every sample time.
pub fn attraction_experiment(
    flow: &Semiflow,
    d: &EnsembleSpec,
    m: &SnapshotCloud,
    horizon: f64,
) -> Result<AttractionExperiment> {
    let starts = ensemble_states(flow, d)?;
    let runs = starts
        .par_iter()
        .map(|u0| flow.evolve(u0, horizon))
        .collect::<Result<Vec<_>>>()?;
    let times = runs[0].times();
    let mut distances = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let states: Vec<State> = runs.iter().map(|r| r.samples()[k].clone()).collect();
        let n = states.len();
        let snap = SnapshotCloud::new(flow.domain(), states, vec![times[k]; n], (0..n).collect())?;
        distances.push(hausdorff_semidistance(&snap, m)?);
    }
    let series: Vec<(f64, f64)> = times.iter().copied().zip(distances.iter().copied()).collect();
    let fit = fit_exponential_attraction(&series)?;
    Ok(AttractionExperiment { times, distances, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaRow {
    pub lambda: f64,
    /// max_i sup_t (max − min) of u^λ over interior nodes of the i-th subdomain.
    pub osc: f64,
    /// sup_t ‖u^λ(t) − u⁰(t)‖_H.
    pub dist: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaStudy {
    pub window: (f64, f64),
    pub rows: Vec<LambdaRow>,
}

impl LambdaStudy {
    /// Oscillation at the smallest λ relative to the largest.
    pub fn osc_ratio(&self) -> f64 {
        let first = self.rows[0].osc;
        let last = self.rows[self.rows.len() - 1].osc;
        if first == 0.0 {
            if last == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            last / first
        }
    }

    /// True when each distance is at most (1 + slack) times the previous one.
    pub fn dist_decreasing(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].dist <= (1.0 + slack) * w[0].dist)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lambda,osc,dist")?;
        for r in &self.rows {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", r.lambda, r.osc, r.dist)?;
        }
        Ok(())
    }
}

/// Runs the full problem for every λ of a decreasing ladder and the limit problem from the
/// projected datum, comparing them over the sample window [t0, t1].
pub fn lambda_limit_study(
    flow: &Semiflow,
    family: &DiffusionFamily,
    ladder: &[f64],
    u0: &NodalField,
    window: (f64, f64),
) -> Result<LambdaStudy> {
    if ladder.is_empty() {
        return Err(Error::Precondition("empty λ ladder".into()));
    }
    if ladder.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
        return Err(Error::Precondition(format!("λ values must lie in (0, 1], got {ladder:?}")));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition(format!("λ ladder must be strictly decreasing, got {ladder:?}")));
    }
    let dom = flow.domain();
    if dom.subdomains().is_empty() {
        return Err(Error::Precondition("λ study needs at least one subdomain".into()));
    }
    let dt = flow.options().sample_dt;
    let k0 = if window.0 == 0.0 { 0 } else { integer_ratio(window.0, dt, "window start")? as usize };
    let k1 = integer_ratio(window.1, dt, "window end")? as usize;
    if k0 > k1 {
        return Err(Error::Precondition(format!("empty window [{}, {}]", window.0, window.1)));
    }
    let horizon = k1 as f64 * dt;
    let limit_flow = flow.with_regime(family, Regime::Limit)?;
    let (limit, full) = rayon::join(
        || -> Result<Vec<State>> {
            let tr = limit_flow.evolve(&limit_flow.state_from_nodal(u0)?, horizon)?;
            Ok(tr.samples()[k0..=k1].to_vec())
        },
        || -> Result<Vec<Vec<State>>> {
            ladder
                .par_iter()
                .map(|&l| {
                    let f = flow.with_regime(family, Regime::Lambda(l))?;
                    let tr = f.evolve(&f.state_from_nodal(u0)?, horizon)?;
                    Ok(tr.samples()[k0..=k1].to_vec())
                })
                .collect()
        },
    );
    let (limit, full) = (limit?, full?);
    let mut rows = Vec::with_capacity(ladder.len());
    for (&lambda, samples) in ladder.iter().zip(&full) {
        let mut osc: f64 = 0.0;
        let mut d: f64 = 0.0;
        for (s, l) in samples.iter().zip(&limit) {
            let v = s.to_nodal(dom)?;
            for sd in dom.subdomains() {
                let vals = &v.values()[sd.interior_nodes()];
                if !vals.is_empty() {
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    osc = osc.max(hi - lo);
                }
            }
            d = d.max(s.dist_h(l, dom)?);
        }
        rows.push(LambdaRow { lambda, osc, dist: d });
    }
    Ok(LambdaStudy { window, rows })
}
