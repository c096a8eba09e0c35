//! Line-based `[section]` / `key = value` run configuration.

use std::fmt::Write as _;

use pxflow_core::domain::{DiffusionFamily, Domain1D, SubdomainSpec};
use pxflow_core::lebesgue::ExponentField;
use pxflow_core::semiflow::{EnergyParams, Reaction, Regime, Semiflow, SolverOptions};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}` in [{section}]; valid keys: {valid}")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
        valid: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExponentSpec {
    Constant(f64),
    Affine { p0: f64, p1: f64 },
    Table(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Value(f64),
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    /// sin πx + ½ sin 2πx scaled by the amplitude.
    Sine,
    /// Random Fourier field with H norm equal to the amplitude.
    Smooth,
    /// Uniform values in [−amplitude, amplitude], smoothed once.
    Ensemble,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub subdomains: Vec<(f64, f64)>,
    pub exponent: ExponentSpec,
    pub d0: f64,
    pub d0_slope: f64,
    pub bump_order: f64,
    pub eta: f64,
    pub lambda: LambdaSpec,
    pub ladder: Vec<f64>,
    pub kappa: f64,
    pub forcing_constant: f64,
    pub forcing_amplitude: f64,
    pub forcing_mode: u32,
    pub tau: f64,
    pub sample_dt: f64,
    pub newton_tol: f64,
    pub max_iterations: usize,
    pub initial: InitialKind,
    pub initial_amplitude: f64,
    pub initial_modes: usize,
    pub horizon: f64,
    pub tolerance: f64,
    pub tartar_samples: usize,
    pub power_samples: usize,
    pub norm_samples: usize,
    pub gronwall_pairs: usize,
    pub gronwall_horizon: f64,
    pub monotone_probes: usize,
    pub gradient_states: usize,
    pub absorbing_members: usize,
    pub absorbing_horizon: f64,
    pub integral_runs: usize,
    pub integral_horizon: f64,
    pub ltraj_pairs: usize,
    pub holder_samples: usize,
    pub probe_fields: usize,
    pub probe_trajectories: usize,
    pub proxy_radius: f64,
    pub ensemble_size: usize,
    pub ensemble_radius: f64,
    pub t_transient: f64,
    pub t_sample: f64,
    pub attraction_horizon: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub seed: u64,
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 256,
            subdomains: vec![(0.4, 0.6)],
            exponent: ExponentSpec::Constant(3.0),
            d0: 1.0,
            d0_slope: 0.0,
            bump_order: DiffusionFamily::DEFAULT_BUMP_ORDER,
            eta: 0.5,
            lambda: LambdaSpec::Limit,
            ladder: vec![1.0, 0.3, 0.1, 0.03, 0.01],
            kappa: 1.0,
            forcing_constant: 0.0,
            forcing_amplitude: 0.0,
            forcing_mode: 1,
            tau: 1.0 / 512.0,
            sample_dt: 1.0 / 64.0,
            newton_tol: 1e-9,
            max_iterations: 50,
            initial: InitialKind::Sine,
            initial_amplitude: 1.0,
            initial_modes: 6,
            horizon: 2.0,
            tolerance: 1e-6,
            tartar_samples: 100_000,
            power_samples: 10_000,
            norm_samples: 200,
            gronwall_pairs: 20,
            gronwall_horizon: 2.0,
            monotone_probes: 50,
            gradient_states: 5,
            absorbing_members: 10,
            absorbing_horizon: 5.0,
            integral_runs: 10,
            integral_horizon: 2.0,
            ltraj_pairs: 50,
            holder_samples: 50,
            probe_fields: 40,
            probe_trajectories: 4,
            proxy_radius: 1.0,
            ensemble_size: 8,
            ensemble_radius: 1.0,
            t_transient: 4.0,
            t_sample: 2.0,
            attraction_horizon: 4.0,
            window_start: 1.0,
            window_end: 2.0,
            seed: 42,
            out: "pxflow-out".to_string(),
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("domain", &["n", "subdomains"]),
    ("exponent", &["kind", "p_constant", "p0", "p1", "table"]),
    ("diffusion", &["d0", "d0_slope", "bump_order"]),
    ("flow", &["eta", "lambda", "ladder"]),
    ("reaction", &["kappa", "forcing_constant", "forcing_amplitude", "forcing_mode"]),
    ("solver", &["tau", "sample_dt", "newton_tol", "max_iterations"]),
    ("initial", &["kind", "amplitude", "modes"]),
    (
        "verify",
        &[
            "horizon",
            "tolerance",
            "tartar_samples",
            "power_samples",
            "norm_samples",
            "gronwall_pairs",
            "gronwall_horizon",
            "monotone_probes",
            "gradient_states",
            "absorbing_members",
            "absorbing_horizon",
            "integral_runs",
            "integral_horizon",
            "ltraj_pairs",
            "holder_samples",
            "probe_fields",
            "probe_trajectories",
            "proxy_radius",
        ],
    ),
    (
        "attractor",
        &["ensemble_size", "ensemble_radius", "t_transient", "t_sample", "attraction_horizon"],
    ),
    ("limit_study", &["window_start", "window_end"]),
    ("run", &["seed", "out"]),
];

fn parse_f64(v: &str, line: usize) -> Result<f64, ConfigError> {
    // fractions such as 1/512 are accepted for step sizes
    let parsed = match v.split_once('/') {
        Some((a, b)) => match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(a), Ok(b)) => Ok(a / b),
            _ => Err(()),
        },
        None => v.parse::<f64>().map_err(|_| ()),
    };
    match parsed {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(ConfigError::Parse {
            line,
            message: format!("expected a finite number, got `{v}`"),
        }),
    }
}

fn parse_usize(v: &str, line: usize) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| ConfigError::Parse {
        line,
        message: format!("expected a nonnegative integer, got `{v}`"),
    })
}

fn parse_list(v: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(s.trim(), line)).collect()
}

fn parse_intervals(v: &str, line: usize) -> Result<Vec<(f64, f64)>, ConfigError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| {
            let (a, b) = s.split_once(':').ok_or_else(|| ConfigError::Parse {
                line,
                message: format!("expected an interval `a:b`, got `{}`", s.trim()),
            })?;
            Ok((parse_f64(a.trim(), line)?, parse_f64(b.trim(), line)?))
        })
        .collect()
}

/// Parses and validates a configuration. Missing keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut c = RunConfig::default();
    let mut section: Option<&str> = None;
    let mut exponent_kind = "constant".to_string();
    let (mut p_constant, mut p0, mut p1, mut table) = (3.0, 3.0, 0.0, Vec::new());
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        // `#` starts a comment anywhere on the line
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() || s.starts_with(';') {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Parse {
                line,
                message: format!("unterminated section header `{s}`"),
            })?;
            let name = name.trim();
            let known = SECTIONS.iter().find(|(n, _)| *n == name).ok_or_else(|| ConfigError::Parse {
                line,
                message: format!(
                    "unknown section [{name}]; valid sections: {}",
                    SECTIONS.iter().map(|s| s.0).collect::<Vec<_>>().join(", ")
                ),
            })?;
            section = Some(known.0);
            continue;
        }
        let (key, value) = s.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("expected `key = value`, got `{s}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| ConfigError::Parse {
            line,
            message: format!("key `{key}` appears before any [section] header"),
        })?;
        let valid = SECTIONS.iter().find(|(n, _)| *n == sec).map(|s| s.1).unwrap_or(&[]);
        if !valid.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                section: sec.to_string(),
                key: key.to_string(),
                valid: valid.join(", "),
            });
        }
        let f = |v: &str| parse_f64(v, line);
        let u = |v: &str| parse_usize(v, line);
        match (sec, key) {
            ("domain", "n") => c.n = u(value)?,
            ("domain", "subdomains") => c.subdomains = parse_intervals(value, line)?,
            ("exponent", "kind") => exponent_kind = value.to_ascii_lowercase(),
            ("exponent", "p_constant") => p_constant = f(value)?,
            ("exponent", "p0") => p0 = f(value)?,
            ("exponent", "p1") => p1 = f(value)?,
            ("exponent", "table") => table = parse_list(value, line)?,
            ("diffusion", "d0") => c.d0 = f(value)?,
            ("diffusion", "d0_slope") => c.d0_slope = f(value)?,
            ("diffusion", "bump_order") => c.bump_order = f(value)?,
            ("flow", "eta") => c.eta = f(value)?,
            ("flow", "lambda") => {
                c.lambda = if value.eq_ignore_ascii_case("limit") {
                    LambdaSpec::Limit
                } else {
                    LambdaSpec::Value(f(value)?)
                }
            }
            ("flow", "ladder") => c.ladder = parse_list(value, line)?,
            ("reaction", "kappa") => c.kappa = f(value)?,
            ("reaction", "forcing_constant") => c.forcing_constant = f(value)?,
            ("reaction", "forcing_amplitude") => c.forcing_amplitude = f(value)?,
            ("reaction", "forcing_mode") => {
                c.forcing_mode = value.parse().map_err(|_| ConfigError::Parse {
                    line,
                    message: format!("expected a nonnegative integer, got `{value}`"),
                })?
            }
            ("solver", "tau") => c.tau = f(value)?,
            ("solver", "sample_dt") => c.sample_dt = f(value)?,
            ("solver", "newton_tol") => c.newton_tol = f(value)?,
            ("solver", "max_iterations") => c.max_iterations = u(value)?,
            ("initial", "kind") => {
                c.initial = match value.to_ascii_lowercase().as_str() {
                    "sine" => InitialKind::Sine,
                    "smooth" => InitialKind::Smooth,
                    "ensemble" => InitialKind::Ensemble,
                    other => {
                        return Err(ConfigError::Parse {
                            line,
                            message: format!("initial kind must be sine, smooth or ensemble, got `{other}`"),
                        })
                    }
                }
            }
            ("initial", "amplitude") => c.initial_amplitude = f(value)?,
            ("initial", "modes") => c.initial_modes = u(value)?,
            ("verify", "horizon") => c.horizon = f(value)?,
            ("verify", "tolerance") => c.tolerance = f(value)?,
            ("verify", "tartar_samples") => c.tartar_samples = u(value)?,
            ("verify", "power_samples") => c.power_samples = u(value)?,
            ("verify", "norm_samples") => c.norm_samples = u(value)?,
            ("verify", "gronwall_pairs") => c.gronwall_pairs = u(value)?,
            ("verify", "gronwall_horizon") => c.gronwall_horizon = f(value)?,
            ("verify", "monotone_probes") => c.monotone_probes = u(value)?,
            ("verify", "gradient_states") => c.gradient_states = u(value)?,
            ("verify", "absorbing_members") => c.absorbing_members = u(value)?,
            ("verify", "absorbing_horizon") => c.absorbing_horizon = f(value)?,
            ("verify", "integral_runs") => c.integral_runs = u(value)?,
            ("verify", "integral_horizon") => c.integral_horizon = f(value)?,
            ("verify", "ltraj_pairs") => c.ltraj_pairs = u(value)?,
            ("verify", "holder_samples") => c.holder_samples = u(value)?,
            ("verify", "probe_fields") => c.probe_fields = u(value)?,
            ("verify", "probe_trajectories") => c.probe_trajectories = u(value)?,
            ("verify", "proxy_radius") => c.proxy_radius = f(value)?,
            ("attractor", "ensemble_size") => c.ensemble_size = u(value)?,
            ("attractor", "ensemble_radius") => c.ensemble_radius = f(value)?,
            ("attractor", "t_transient") => c.t_transient = f(value)?,
            ("attractor", "t_sample") => c.t_sample = f(value)?,
            ("attractor", "attraction_horizon") => c.attraction_horizon = f(value)?,
            ("limit_study", "window_start") => c.window_start = f(value)?,
            ("limit_study", "window_end") => c.window_end = f(value)?,
            ("run", "seed") => {
                c.seed = value.parse().map_err(|_| ConfigError::Parse {
                    line,
                    message: format!("expected a nonnegative integer seed, got `{value}`"),
                })?
            }
            ("run", "out") => c.out = value.to_string(),
            _ => unreachable!("key list and match arms agree"),
        }
    }
    c.exponent = match exponent_kind.as_str() {
        "constant" => ExponentSpec::Constant(p_constant),
        "affine" => ExponentSpec::Affine { p0, p1 },
        "table" => ExponentSpec::Table(table),
        other => {
            return Err(ConfigError::Invalid(format!(
                "exponent kind must be constant, affine or table, got `{other}`"
            )))
        }
    };
    c.validate()?;
    Ok(c)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    /// Canonical text form; `parse_config(&c.serialize()) == Ok(c)`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[domain]\nn = {}", self.n);
        let iv: Vec<String> = self.subdomains.iter().map(|(a, b)| format!("{a:?}:{b:?}")).collect();
        let _ = writeln!(s, "subdomains = {}\n", iv.join(", "));
        match &self.exponent {
            ExponentSpec::Constant(p) => {
                let _ = writeln!(s, "[exponent]\nkind = constant\np_constant = {p:?}\n");
            }
            ExponentSpec::Affine { p0, p1 } => {
                let _ = writeln!(s, "[exponent]\nkind = affine\np0 = {p0:?}\np1 = {p1:?}\n");
            }
            ExponentSpec::Table(t) => {
                let _ = writeln!(s, "[exponent]\nkind = table\ntable = {}\n", fmt_list(t));
            }
        }
        let _ = writeln!(
            s,
            "[diffusion]\nd0 = {:?}\nd0_slope = {:?}\nbump_order = {:?}\n",
            self.d0, self.d0_slope, self.bump_order
        );
        let lambda = match self.lambda {
            LambdaSpec::Limit => "LIMIT".to_string(),
            LambdaSpec::Value(l) => format!("{l:?}"),
        };
        let _ = writeln!(
            s,
            "[flow]\neta = {:?}\nlambda = {lambda}\nladder = {}\n",
            self.eta,
            fmt_list(&self.ladder)
        );
        let _ = writeln!(
            s,
            "[reaction]\nkappa = {:?}\nforcing_constant = {:?}\nforcing_amplitude = {:?}\nforcing_mode = {}\n",
            self.kappa, self.forcing_constant, self.forcing_amplitude, self.forcing_mode
        );
        let _ = writeln!(
            s,
            "[solver]\ntau = {:?}\nsample_dt = {:?}\nnewton_tol = {:?}\nmax_iterations = {}\n",
            self.tau, self.sample_dt, self.newton_tol, self.max_iterations
        );
        let kind = match self.initial {
            InitialKind::Sine => "sine",
            InitialKind::Smooth => "smooth",
            InitialKind::Ensemble => "ensemble",
        };
        let _ = writeln!(
            s,
            "[initial]\nkind = {kind}\namplitude = {:?}\nmodes = {}\n",
            self.initial_amplitude, self.initial_modes
        );
        let _ = writeln!(s, "[verify]");
        let _ = writeln!(s, "horizon = {:?}", self.horizon);
        let _ = writeln!(s, "tolerance = {:?}", self.tolerance);
        let _ = writeln!(s, "tartar_samples = {}", self.tartar_samples);
        let _ = writeln!(s, "power_samples = {}", self.power_samples);
        let _ = writeln!(s, "norm_samples = {}", self.norm_samples);
        let _ = writeln!(s, "gronwall_pairs = {}", self.gronwall_pairs);
        let _ = writeln!(s, "gronwall_horizon = {:?}", self.gronwall_horizon);
        let _ = writeln!(s, "monotone_probes = {}", self.monotone_probes);
        let _ = writeln!(s, "gradient_states = {}", self.gradient_states);
        let _ = writeln!(s, "absorbing_members = {}", self.absorbing_members);
        let _ = writeln!(s, "absorbing_horizon = {:?}", self.absorbing_horizon);
        let _ = writeln!(s, "integral_runs = {}", self.integral_runs);
        let _ = writeln!(s, "integral_horizon = {:?}", self.integral_horizon);
        let _ = writeln!(s, "ltraj_pairs = {}", self.ltraj_pairs);
        let _ = writeln!(s, "holder_samples = {}", self.holder_samples);
        let _ = writeln!(s, "probe_fields = {}", self.probe_fields);
        let _ = writeln!(s, "probe_trajectories = {}", self.probe_trajectories);
        let _ = writeln!(s, "proxy_radius = {:?}\n", self.proxy_radius);
        let _ = writeln!(
            s,
            "[attractor]\nensemble_size = {}\nensemble_radius = {:?}\nt_transient = {:?}\nt_sample = {:?}\nattraction_horizon = {:?}\n",
            self.ensemble_size, self.ensemble_radius, self.t_transient, self.t_sample, self.attraction_horizon
        );
        let _ = writeln!(
            s,
            "[limit_study]\nwindow_start = {:?}\nwindow_end = {:?}\n",
            self.window_start, self.window_end
        );
        let _ = writeln!(s, "[run]\nseed = {}\nout = {}", self.seed, self.out);
        s
    }

    /// Checks every invariant that does not need the grid, then builds the flow once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let p_minus = match &self.exponent {
            ExponentSpec::Constant(p) => *p,
            ExponentSpec::Affine { p0, p1 } => p0.min(p0 + p1),
            ExponentSpec::Table(t) => {
                if t.is_empty() {
                    return bad("exponent table is empty".into());
                }
                t.iter().copied().fold(f64::INFINITY, f64::min)
            }
        };
        if !(p_minus > 2.0) {
            return bad(format!("exponent must exceed 2 (need 2 < p⁻), got p⁻ = {p_minus}"));
        }
        if !(self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if let LambdaSpec::Value(l) = self.lambda {
            if !(l > 0.0 && l <= 1.0) {
                return bad(format!("lambda must lie in (0, 1] or be LIMIT, got {l}"));
            }
        }
        if !(self.tolerance >= 0.0) {
            return bad(format!("tolerance must be nonnegative, got {}", self.tolerance));
        }
        self.build().map(|_| ())
    }

    pub fn domain(&self) -> Result<Domain1D, ConfigError> {
        let specs: Vec<SubdomainSpec> = self.subdomains.iter().map(|&(a, b)| SubdomainSpec::new(a, b)).collect();
        Domain1D::new(self.n, &specs).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn exponent_field(&self, dom: &Domain1D) -> Result<ExponentField, ConfigError> {
        let r = match &self.exponent {
            ExponentSpec::Constant(p) => ExponentField::constant(dom, *p),
            ExponentSpec::Affine { p0, p1 } => ExponentField::affine(dom, *p0, *p1),
            ExponentSpec::Table(t) => ExponentField::from_node_table(dom, t.clone()),
        };
        r.map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn family(&self, dom: &Domain1D) -> Result<DiffusionFamily, ConfigError> {
        let (d0, slope) = (self.d0, self.d0_slope);
        DiffusionFamily::with_bump_order(dom, move |x| d0 + slope * x, self.bump_order)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn regime(&self) -> Regime {
        match self.lambda {
            LambdaSpec::Limit => Regime::Limit,
            LambdaSpec::Value(l) => Regime::Lambda(l),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tau: self.tau,
            sample_dt: self.sample_dt,
            newton_tol: self.newton_tol,
            max_iterations: self.max_iterations,
        }
    }

    /// Domain, diffusion family and flow described by this configuration.
    pub fn build(&self) -> Result<(Domain1D, DiffusionFamily, Semiflow), ConfigError> {
        let dom = self.domain()?;
        let p = self.exponent_field(&dom)?;
        let fam = self.family(&dom)?;
        let reaction = Reaction::with_profile(&dom, self.kappa, self.forcing_constant, self.forcing_amplitude, self.forcing_mode)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let params = EnergyParams {
            eta: self.eta,
            regime: self.regime(),
            reaction,
        };
        let flow = Semiflow::new(&dom, &p, &fam, params, self.solver_options())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok((dom, fam, flow))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.n, 256);
        assert_eq!(c.subdomains, vec![(0.4, 0.6)]);
        assert_eq!(c.exponent, ExponentSpec::Constant(3.0));
        assert_eq!((c.eta, c.kappa, c.tau), (0.5, 1.0, 1.0 / 512.0));
    }

    #[test]
    fn inline_comments_are_ignored() {
        let c = parse_config("# run\n[flow]\nlambda = 0.25   # full problem\n[solver]\ntau = 1/1024 # fine\n").unwrap();
        assert_eq!(c.lambda, LambdaSpec::Value(0.25));
        assert_eq!(c.tau, 1.0 / 1024.0);
    }

    #[test]
    fn exponent_two_rejected() {
        let e = parse_config("[exponent]\np_constant = 2.0\n").unwrap_err();
        assert!(e.to_string().contains("exponent must exceed 2"), "{e}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let e = parse_config("[domain]\n\nn 12\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 3, .. }), "{e:?}");
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let e = parse_config("[flow]\nzeta = 1\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("zeta") && msg.contains("eta, lambda, ladder"), "{msg}");
    }

    #[test]
    fn fractions_and_limit() {
        let c = parse_config("[solver]\ntau = 1/1024\n[flow]\nlambda = 0.25\n").unwrap();
        assert_eq!(c.tau, 1.0 / 1024.0);
        assert_eq!(c.lambda, LambdaSpec::Value(0.25));
        assert!(parse_config("[flow]\nlambda = 2\n").is_err());
    }
}
