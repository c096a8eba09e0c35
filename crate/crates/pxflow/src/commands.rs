//! Experiment orchestration and artifact emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use pxflow_core::attractor::{
    approximate_attractor, attraction_experiment, fractal_dimension, lambda_limit_study, DimensionEstimate,
    DimensionMethod, EnsembleSpec,
};
use pxflow_core::domain::Domain1D;
use pxflow_core::estimates::{self, MarginReport, ProbeBudget, TheoreticalConstants};
use pxflow_core::initial::{ensemble_field, member_rng, smooth_random_field};
use pxflow_core::lebesgue::NodalField;
use pxflow_core::semiflow::Semiflow;

use crate::config::{ConfigError, InitialKind, RunConfig};
use crate::svg::{line_chart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Verify,
    Constants,
    Attractor,
    LimitStudy,
    Ltraj,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{check} failed: {source}")]
    Core {
        check: String,
        source: pxflow_core::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// What a command did: the asserted checks it ran and whether all passed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub lines: Vec<String>,
}

fn core<T>(check: &str, r: pxflow_core::Result<T>) -> Result<T, RunError> {
    r.map_err(|source| RunError::Core {
        check: check.to_string(),
        source,
    })
}

/// sha256 of the canonical configuration with the output directory cleared.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.out.clear();
    let digest = Sha256::digest(c.serialize().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| RunError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        fs::write(&path, bytes).map_err(|source| RunError::Io { path, source })
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), RunError> {
        let mut s = serde_json::to_string_pretty(value).expect("serializable artifact");
        s.push('\n');
        self.write(name, s)
    }
}

/// Initial datum selected by the `[initial]` section.
pub fn initial_field(cfg: &RunConfig, dom: &Domain1D) -> Result<NodalField, RunError> {
    let a = cfg.initial_amplitude;
    Ok(match cfg.initial {
        InitialKind::Sine => NodalField::from_fn(dom, |x| {
            use std::f64::consts::PI;
            a * ((PI * x).sin() + 0.5 * (2.0 * PI * x).sin())
        }),
        InitialKind::Smooth => core(
            "initial datum",
            smooth_random_field(dom, cfg.initial_modes.max(1), a, &mut member_rng(cfg.seed, 0)),
        )?,
        InitialKind::Ensemble => ensemble_field(dom, a, &mut member_rng(cfg.seed, 0)),
    })
}

#[derive(Serialize)]
struct ReportEntry<'a> {
    #[serde(flatten)]
    report: &'a MarginReport,
    config_hash: &'a str,
    seed: u64,
}

fn report_line(r: &MarginReport) -> String {
    let status = if !r.asserted {
        "INFO"
    } else if r.pass {
        "PASS"
    } else {
        "FAIL"
    };
    let mut line = format!(
        "{status} {}: bound {:.6e}, empirical {:.6e}, margin {:.6e} (tolerance {:.1e}, {} samples)",
        r.name, r.bound, r.empirical, r.margin, r.tolerance, r.samples
    );
    for n in &r.notes {
        line.push_str(&format!(" [{n}]"));
    }
    line
}

fn finish_reports(art: &Artifacts, cfg: &RunConfig, reports: &[MarginReport], mut lines: Vec<String>) -> Result<Outcome, RunError> {
    let hash = config_hash(cfg);
    let entries: Vec<ReportEntry> = reports
        .iter()
        .map(|r| ReportEntry {
            report: r,
            config_hash: &hash,
            seed: cfg.seed,
        })
        .collect();
    art.json("report.json", &entries)?;
    let pass = reports.iter().all(|r| r.pass);
    lines.extend(reports.iter().map(report_line));
    Ok(Outcome { pass, lines })
}

fn probe_budget(cfg: &RunConfig) -> ProbeBudget {
    ProbeBudget {
        fields: cfg.probe_fields,
        trajectories: cfg.probe_trajectories,
        seed: cfg.seed,
        initial_radius: cfg.proxy_radius,
    }
}

fn write_summary(art: &Artifacts, cmd: Command, cfg: &RunConfig, outcome: &Outcome) -> Result<(), RunError> {
    let mut s = format!(
        "pxflow {:?}\nconfig hash {}\nseed {}\nresult {}\n\n",
        cmd,
        config_hash(cfg),
        cfg.seed,
        if outcome.pass { "PASS" } else { "FAIL" }
    );
    for l in &outcome.lines {
        s.push_str(l);
        s.push('\n');
    }
    art.write("summary.txt", s)
}

/// Runs `cmd`, writes its artifacts under `out` and the summary last.
pub fn run_command(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome, RunError> {
    let art = Artifacts::new(out)?;
    let (dom, fam, flow) = cfg.build()?;
    let outcome = match cmd {
        Command::Simulate => simulate(&art, cfg, &dom, &flow)?,
        Command::Verify => verify(&art, cfg, &dom, &flow)?,
        Command::Constants => constants(&art, cfg, &flow)?,
        Command::Attractor => attractor(&art, cfg, &flow)?,
        Command::LimitStudy => limit_study(&art, cfg, &dom, &fam, &flow)?,
        Command::Ltraj => ltraj(&art, cfg, &flow)?,
    };
    write_summary(&art, cmd, cfg, &outcome)?;
    Ok(outcome)
}

fn simulate(art: &Artifacts, cfg: &RunConfig, dom: &Domain1D, flow: &Semiflow) -> Result<Outcome, RunError> {
    let u0 = core("initial datum", flow.state_from_nodal(&initial_field(cfg, dom)?))?;
    let tr = core("simulate", flow.evolve(&u0, cfg.horizon))?;
    let mut csv = Vec::new();
    tr.write_csv(&mut csv).map_err(|source| RunError::Io {
        path: art.dir.join("trajectory.csv"),
        source,
    })?;
    art.write("trajectory.csv", csv)?;

    let mut series = String::from("t,energy,norm_h,norm_v,sup_abs\n");
    let (mut energy, mut norm) = (Vec::new(), Vec::new());
    for (t, s) in tr.times().into_iter().zip(tr.samples()) {
        let e = core("energy", flow.energy(s))?;
        let h = core("norm", s.norm_h(dom))?;
        let v = core("V norm", estimates::v_norm(flow, s))?;
        let sup = core("sup norm", s.to_nodal(dom))?.sup_abs();
        series.push_str(&format!("{t:.16e},{e:.16e},{h:.16e},{v:.16e},{sup:.16e}\n"));
        energy.push((t, e));
        norm.push((t, h));
    }
    art.write("energy.csv", series)?;
    art.write(
        "plots/energy.svg",
        line_chart("Energy", "t", "energy", &[Series { name: "energy", points: energy }], true),
    )?;
    art.write(
        "plots/norm.svg",
        line_chart("H norm", "t", "norm", &[Series { name: "norm", points: norm }], true),
    )?;
    let (su, sg) = core("sup bounds", estimates::check_sup_bounds(flow, &tr))?;
    let mut lines = vec![format!(
        "simulated {} samples on [0, {}] in the {} space",
        tr.samples().len(),
        tr.duration(),
        flow.space().name()
    )];
    lines.push(report_line(&su));
    lines.push(report_line(&sg));
    Ok(Outcome { pass: true, lines })
}

fn verify(art: &Artifacts, cfg: &RunConfig, dom: &Domain1D, flow: &Semiflow) -> Result<Outcome, RunError> {
    let tol = cfg.tolerance;
    let seed = cfg.seed;
    let mut reports = Vec::new();
    let mut lines = Vec::new();

    reports.extend(core("norm/modular", estimates::check_norm_modular_suite(flow, cfg.norm_samples, seed, tol))?);
    reports.extend(core("power inequality", estimates::check_power_suite(cfg.power_samples, seed, tol))?);
    reports.push(estimates::check_tartar_suite(cfg.tartar_samples, seed, tol));
    reports.push(core(
        "gronwall contraction",
        estimates::check_gronwall_suite(flow, cfg.gronwall_pairs, cfg.gronwall_horizon, seed, cfg.initial_amplitude, tol),
    )?);
    let (mono, coer) = core("monotonicity", estimates::check_monotone_coercive(flow, cfg.monotone_probes, seed, tol))?;
    reports.push(mono);
    reports.push(coer);
    reports.push(core(
        "gradient consistency",
        estimates::check_gradient_consistency(flow, cfg.gradient_states, seed, 1e-6),
    )?);

    let constants = core("constants", estimates::compute_constants(flow, &probe_budget(cfg)))?;
    let initial = core(
        "absorbing data",
        estimates::absorbing_data(flow, cfg.absorbing_members, seed, cfg.initial_modes, constants.r0),
    )?;
    let (h, v) = core(
        "absorbing",
        estimates::check_absorbing(flow, &constants, &initial, cfg.absorbing_horizon, tol),
    )?;
    reports.push(h);
    reports.push(v);

    let mut integral = Vec::new();
    for k in 0..cfg.integral_runs {
        let u = core(
            "integral data",
            smooth_random_field(dom, 2, cfg.initial_amplitude, &mut member_rng(seed, (1 << 43) + k as u64)),
        )?;
        let u0 = core("integral data", flow.state_from_nodal(&u))?;
        match estimates::check_integral_bounds(flow, &u0, cfg.integral_horizon, tol) {
            Ok(pair) => integral.push(pair),
            Err(pxflow_core::Error::Precondition(msg)) => {
                lines.push(format!("SKIP integral bounds: {msg}"));
                break;
            }
            Err(source) => {
                return Err(RunError::Core {
                    check: "integral bounds".into(),
                    source,
                })
            }
        }
    }
    if !integral.is_empty() {
        let (us, gs): (Vec<_>, Vec<_>) = integral.into_iter().unzip();
        reports.push(estimates::merge_worst("integral bound |u|^p", us));
        reports.push(estimates::merge_worst("integral bound |grad u|^p", gs));
    }

    let u0 = core("initial datum", flow.state_from_nodal(&initial_field(cfg, dom)?))?;
    let tr = core("sup bounds", flow.evolve(&u0, cfg.horizon))?;
    let (su, sg) = core("sup bounds", estimates::check_sup_bounds(flow, &tr))?;
    reports.push(su);
    reports.push(sg);

    reports.extend(ltraj_reports(cfg, flow, &constants)?);
    finish_reports(art, cfg, &reports, lines)
}

fn ltraj_reports(cfg: &RunConfig, flow: &Semiflow, constants: &TheoreticalConstants) -> Result<Vec<MarginReport>, RunError> {
    let tol = cfg.tolerance;
    let pairs = core(
        "l-trajectory pairs",
        estimates::l_trajectory_pairs(flow, cfg.ltraj_pairs, cfg.seed, cfg.proxy_radius),
    )?;
    Ok(vec![
        core("shift Lipschitz", estimates::estimate_l1_lipschitz(flow, constants, &pairs, tol))?,
        core("end map Lipschitz", estimates::check_end_map_lipschitz(flow, &pairs, tol))?,
        core(
            "shift Hoelder",
            estimates::check_shift_holder_suite(flow, constants, &pairs, cfg.holder_samples, cfg.seed, tol),
        )?,
    ])
}

fn ltraj(art: &Artifacts, cfg: &RunConfig, flow: &Semiflow) -> Result<Outcome, RunError> {
    let constants = core("constants", estimates::compute_constants(flow, &probe_budget(cfg)))?;
    let reports = ltraj_reports(cfg, flow, &constants)?;
    finish_reports(art, cfg, &reports, Vec::new())
}

#[derive(Serialize)]
struct ConstantsArtifact<'a> {
    config_hash: String,
    seed: u64,
    constants: &'a TheoreticalConstants,
}

fn constants(art: &Artifacts, cfg: &RunConfig, flow: &Semiflow) -> Result<Outcome, RunError> {
    let c = core("constants", estimates::compute_constants(flow, &probe_budget(cfg)))?;
    art.json(
        "constants.json",
        &ConstantsArtifact {
            config_hash: config_hash(cfg),
            seed: cfg.seed,
            constants: &c,
        },
    )?;
    Ok(Outcome {
        pass: c.gamma_small > 0.0,
        lines: vec![
            format!("r0 = {:.6e}, r_V = {:.6e}", c.r0, c.r_v),
            format!("gamma_small = {:.6e} at epsilon = {:.6e}", c.gamma_small, c.epsilon_star),
            format!("rho1 = {:.6e}, c3 = {:.6e}", c.rho1, c.c3),
        ],
    })
}

#[derive(Serialize)]
struct DimensionArtifact {
    config_hash: String,
    seed: u64,
    points: usize,
    diameter: f64,
    max_norm: f64,
    correlation: Option<DimensionEstimate>,
    box_pca: Option<DimensionEstimate>,
    notes: Vec<String>,
}

fn attractor(art: &Artifacts, cfg: &RunConfig, flow: &Semiflow) -> Result<Outcome, RunError> {
    let dom = flow.domain();
    let spec = EnsembleSpec {
        size: cfg.ensemble_size,
        radius: cfg.ensemble_radius,
        seed: cfg.seed,
    };
    let cloud = core(
        "attractor cloud",
        approximate_attractor(flow, &spec, cfg.t_transient, cfg.t_sample),
    )?;
    let mut csv = Vec::new();
    core("attractor cloud", cloud.write_csv(dom, &mut csv))?;
    art.write("attractor_cloud.csv", csv)?;

    let mut notes = Vec::new();
    let mut estimate = |method| match fractal_dimension(&cloud, method) {
        Ok(d) => Some(d),
        Err(e) => {
            notes.push(format!("{method:?}: {e}"));
            None
        }
    };
    let correlation = estimate(DimensionMethod::Correlation);
    let box_pca = estimate(DimensionMethod::BoxPca { components: 3 });
    let dim = DimensionArtifact {
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        points: cloud.len(),
        diameter: cloud.diameter(),
        max_norm: cloud.max_norm(),
        correlation,
        box_pca,
        notes,
    };
    art.json("dimension.json", &dim)?;

    let d = EnsembleSpec {
        seed: cfg.seed.wrapping_add(1),
        ..spec
    };
    let exp = core("attraction", attraction_experiment(flow, &d, &cloud, cfg.attraction_horizon))?;
    #[derive(Serialize)]
    struct FitArtifact<'a> {
        config_hash: String,
        seed: u64,
        #[serde(flatten)]
        experiment: &'a pxflow_core::attractor::AttractionExperiment,
    }
    art.json(
        "attraction_fit.json",
        &FitArtifact {
            config_hash: config_hash(cfg),
            seed: cfg.seed,
            experiment: &exp,
        },
    )?;
    let points: Vec<(f64, f64)> = exp.times.iter().copied().zip(exp.distances.iter().copied()).collect();
    art.write(
        "plots/attraction.svg",
        line_chart("Semidistance to the attractor proxy", "t", "dist", &[Series { name: "dist", points }], true),
    )?;
    let mut lines = vec![format!(
        "cloud: {} points, diameter {:.3e}, max norm {:.3e}",
        dim.points, dim.diameter, dim.max_norm
    )];
    for (name, d) in [("correlation", &dim.correlation), ("box-on-PCA", &dim.box_pca)] {
        if let Some(d) = d {
            lines.push(format!("{name} dimension {:.4} (R² {:.4})", d.slope, d.r_squared));
        }
    }
    lines.extend(dim.notes.iter().cloned());
    lines.push(format!(
        "{} attraction rate c2 = {:.6e}, c1 = {:.6e}{}",
        if exp.fit.attracting { "PASS" } else { "FAIL" },
        exp.fit.c2,
        exp.fit.c1,
        if exp.fit.degenerate { " (degenerate fit)" } else { "" }
    ));
    Ok(Outcome {
        pass: exp.fit.attracting,
        lines,
    })
}

fn limit_study(
    art: &Artifacts,
    cfg: &RunConfig,
    dom: &Domain1D,
    fam: &pxflow_core::domain::DiffusionFamily,
    flow: &Semiflow,
) -> Result<Outcome, RunError> {
    let u0 = initial_field(cfg, dom)?;
    let study = core(
        "limit study",
        lambda_limit_study(flow, fam, &cfg.ladder, &u0, (cfg.window_start, cfg.window_end)),
    )?;
    let mut csv = Vec::new();
    study.write_csv(&mut csv).map_err(|source| RunError::Io {
        path: art.dir.join("lambda_study.csv"),
        source,
    })?;
    art.write("lambda_study.csv", csv)?;
    let osc: Vec<(f64, f64)> = study.rows.iter().map(|r| (r.lambda.log10(), r.osc)).collect();
    let dist: Vec<(f64, f64)> = study.rows.iter().map(|r| (r.lambda.log10(), r.dist)).collect();
    art.write(
        "plots/lambda_study.svg",
        line_chart(
            "Small-λ study",
            "log10 λ",
            "value",
            &[
                Series { name: "oscillation on subdomains", points: osc },
                Series { name: "distance to limit", points: dist },
            ],
            true,
        ),
    )?;
    let ratio = study.osc_ratio();
    let monotone = study.dist_decreasing(0.1);
    let mut lines: Vec<String> = study
        .rows
        .iter()
        .map(|r| format!("lambda {:.4}: osc {:.6e}, dist {:.6e}", r.lambda, r.osc, r.dist))
        .collect();
    lines.push(format!(
        "{} oscillation ratio {ratio:.4} (need ≤ 0.1)",
        if ratio <= 0.1 { "PASS" } else { "FAIL" }
    ));
    lines.push(format!(
        "{} distance to the limit decreasing within 10% slack",
        if monotone { "PASS" } else { "FAIL" }
    ));
    Ok(Outcome {
        pass: ratio <= 0.1 && monotone,
        lines,
    })
}
