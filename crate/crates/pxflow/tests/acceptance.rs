//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the libtest harness
//! so the lines reach the console.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command as Process, ExitCode};
use std::time::{Duration, Instant};

use pxflow::commands::{initial_field, run_command, Command};
use pxflow::config::{LambdaSpec, RunConfig};
use pxflow_core::attractor::{
    approximate_attractor, attraction_experiment, fit_exponential_attraction, fractal_dimension, lambda_limit_study,
    DimensionMethod, EnsembleSpec, SnapshotCloud,
};
use pxflow_core::domain::Domain1D;
use pxflow_core::estimates::{self, MarginReport, ProbeBudget};
use pxflow_core::initial::{member_rng, smooth_random_field};
use pxflow_core::lebesgue::NodalField;
use pxflow_core::semiflow::Semiflow;
use rand::Rng;

type Outcome = Result<String, String>;

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let e = start.elapsed();
    require(e <= limit, || format!("runtime {e:.1?} exceeds {limit:?}"))?;
    Ok(e)
}

fn asserted_pass(r: &MarginReport) -> Result<(), String> {
    require(r.pass, || {
        format!(
            "{}: bound {:e}, empirical {:e}, margin {:e}",
            r.name, r.bound, r.empirical, r.margin
        )
    })
}

fn budget(cfg: &RunConfig) -> ProbeBudget {
    ProbeBudget {
        fields: cfg.probe_fields,
        trajectories: cfg.probe_trajectories,
        seed: cfg.seed,
        initial_radius: cfg.proxy_radius,
    }
}

fn build(cfg: &RunConfig) -> Result<(Domain1D, Semiflow), String> {
    let (dom, _, flow) = ok(cfg.build())?;
    Ok((dom, flow))
}

/// Inequality suite of the `verify` command on the default configuration.
fn inequality_suite() -> Outcome {
    let start = Instant::now();
    let dir = ok(tempfile::tempdir())?;
    let cfg = RunConfig::default();
    let outcome = ok(run_command(Command::Verify, &cfg, dir.path()))?;
    let elapsed = within(start, Duration::from_secs(300))?;
    let text = ok(std::fs::read_to_string(dir.path().join("report.json")))?;
    let report: serde_json::Value = ok(serde_json::from_str(&text))?;
    let entries = report.as_array().ok_or("report is not an array")?;
    let required = [
        "norm/modular lower",
        "norm/modular upper",
        "power inequality lower",
        "power inequality upper",
        "tartar",
        "gronwall contraction",
        "monotonicity",
        "coercivity growth",
    ];
    let mut worst: f64 = f64::INFINITY;
    for name in required {
        let e = entries
            .iter()
            .find(|e| e["name"] == name)
            .ok_or_else(|| format!("missing report {name}"))?;
        let margin = e["margin"].as_f64().unwrap_or(f64::NAN);
        let scale = e["bound"].as_f64().unwrap_or(0.0).abs().max(e["empirical"].as_f64().unwrap_or(0.0).abs());
        let rel = if scale > 0.0 { margin / scale } else { margin };
        require(rel >= -1e-6 && e["pass"] == true, || format!("{name}: relative margin {rel:e}"))?;
        worst = worst.min(rel);
    }
    let tartar = entries.iter().find(|e| e["name"] == "tartar").unwrap();
    require(tartar["samples"].as_u64() == Some(100_000), || "tartar sample count".into())?;
    let gron = entries.iter().find(|e| e["name"] == "gronwall contraction").unwrap();
    require(gron["samples"].as_u64().unwrap_or(0) >= 20, || "gronwall sample count".into())?;
    require(outcome.pass, || "verify reported a failing check".into())?;
    Ok(format!("worst relative margin {worst:.3e}, runtime {elapsed:.1?}"))
}

/// Absorbing balls in H and V for 10 data up to 10·r₀.
fn absorbing_set() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let (dom, flow) = build(&cfg)?;
    let c = ok(estimates::compute_constants(&flow, &budget(&cfg)))?;
    let data = ok(estimates::absorbing_data(&flow, 10, cfg.seed, cfg.initial_modes, c.r0))?;
    let largest = data.iter().map(|u| u.norm_h(&dom).unwrap()).fold(0.0, f64::max);
    require((largest - 10.0 * c.r0).abs() <= 1e-9 * c.r0, || format!("largest datum {largest}"))?;
    let (h, v) = ok(estimates::check_absorbing(&flow, &c, &data, 5.0, cfg.tolerance))?;
    asserted_pass(&h)?;
    asserted_pass(&v)?;
    let elapsed = within(start, Duration::from_secs(600))?;
    Ok(format!(
        "sup ‖u‖_H on [1,5] = {:.3e} ≤ r0 = {:.3e}; sup V norm on [2,5] = {:.3e} ≤ r = {:.3e}; runtime {elapsed:.1?}",
        h.empirical, c.r0, v.empirical, c.r_v
    ))
}

/// Space-time integral bounds and their stability under one refinement.
fn integral_bounds() -> Outcome {
    let coarse = RunConfig {
        lambda: LambdaSpec::Value(1.0),
        tau: 1.0 / 2048.0,
        ..RunConfig::default()
    };
    let fine = RunConfig {
        n: 512,
        tau: 1.0 / 4096.0,
        ..coarse.clone()
    };
    let (cd, cf) = build(&coarse)?;
    let (fd, ff) = build(&fine)?;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_margin = f64::INFINITY;
    for k in 0..10u64 {
        let radius = if k % 2 == 0 { 0.5 } else { 1.0 };
        let mut runs = Vec::new();
        for (dom, flow) in [(&cd, &cf), (&fd, &ff)] {
            let u = ok(smooth_random_field(dom, 2, radius, &mut member_rng(coarse.seed, (1 << 43) + k)))?;
            let u0 = ok(flow.state_from_nodal(&u))?;
            let (a, b) = ok(estimates::check_integral_bounds(flow, &u0, 2.0, 1e-6))?;
            for r in [&a, &b] {
                require(r.margin >= 0.0, || format!("run {k}: {} margin {:e}", r.name, r.margin))?;
                worst_margin = worst_margin.min(r.margin / r.bound);
            }
            runs.push((a, b));
        }
        let (c, f) = (&runs[0], &runs[1]);
        for (x, y) in [(&c.0, &f.0), (&c.1, &f.1)] {
            for (p, q, what) in [(x.empirical, y.empirical, "integral"), (x.margin, y.margin, "margin")] {
                let dev = (p / q - 1.0).abs();
                require(dev <= 0.05, || format!("run {k}: {} {what} moved by {:.1}%", x.name, 100.0 * dev))?;
                worst_ratio = worst_ratio.max(dev);
            }
        }
    }
    Ok(format!(
        "10 runs, smallest relative margin {worst_margin:.3}, largest refinement change {:.2}%",
        100.0 * worst_ratio
    ))
}

/// Shift Lipschitz and Hölder bounds on 50 l-trajectory pairs.
fn shift_operator() -> Outcome {
    let cfg = RunConfig::default();
    let (_, flow) = build(&cfg)?;
    let c = ok(estimates::compute_constants(&flow, &budget(&cfg)))?;
    let closed = estimates::rho1_closed_form(c.alpha1_embed, c.gamma_big, c.l_b, c.m0, c.eta);
    require((closed - c.rho1).abs() <= 1e-12 * closed, || "ρ₁ differs from its closed form".into())?;
    let pairs = ok(estimates::l_trajectory_pairs(&flow, 50, cfg.seed, cfg.proxy_radius))?;
    let lip = ok(estimates::estimate_l1_lipschitz(&flow, &c, &pairs, cfg.tolerance))?;
    asserted_pass(&lip)?;
    require(lip.empirical <= c.rho1, || format!("ratio {} > ρ₁ {}", lip.empirical, c.rho1))?;
    let hold = ok(estimates::check_shift_holder_suite(&flow, &c, &pairs, 50, cfg.seed, cfg.tolerance))?;
    asserted_pass(&hold)?;
    require(hold.samples == 50, || format!("{} Hölder samples", hold.samples))?;
    Ok(format!(
        "max ratio {:.3e} ≤ ρ1 = {:.3e} on {} pairs; Hölder margin {:.3e} on {} samples",
        lip.empirical, c.rho1, lip.samples, hold.margin, hold.samples
    ))
}

/// Gradient against central differences of the energy in both spaces.
fn gradient_correctness() -> Outcome {
    let mut parts = Vec::new();
    for (name, lambda) in [("full", LambdaSpec::Value(0.5)), ("limit", LambdaSpec::Limit)] {
        let cfg = RunConfig {
            lambda,
            ..RunConfig::default()
        };
        let (_, flow) = build(&cfg)?;
        let r = ok(estimates::check_gradient_consistency(&flow, 50, cfg.seed, 1e-6))?;
        require(r.empirical <= 1e-6 && r.samples == 50, || format!("{name}: relative error {:e}", r.empirical))?;
        parts.push(format!("{name} {:.2e}", r.empirical));
    }
    Ok(format!("max relative error over 50 states: {}", parts.join(", ")))
}

fn max_shadow_residual(flow: &Semiflow, u: &NodalField, window: (f64, f64)) -> Result<f64, String> {
    let dt = flow.options().sample_dt;
    let tr = ok(flow.evolve(&ok(flow.state_from_nodal(u))?, window.1 + dt))?;
    let (k0, k1) = ((window.0 / dt).round() as usize, (window.1 / dt).round() as usize);
    let mut worst: f64 = 0.0;
    for k in k0..=k1 {
        worst = worst.max(ok(flow.shadow_ode_residual(&tr, 0, k))?);
    }
    Ok(worst)
}

/// Shadow ODE residual under refinement and at a steady state.
fn limit_consistency() -> Outcome {
    let coarse = RunConfig::default();
    let fine = RunConfig {
        n: 512,
        tau: coarse.tau / 2.0,
        ..coarse.clone()
    };
    let (cd, cf) = build(&coarse)?;
    let (fd, ff) = build(&fine)?;
    let mut smallest = f64::INFINITY;
    for seed in 0..5u64 {
        let uc = ok(smooth_random_field(&cd, 2, 1.0, &mut member_rng(seed, 0)))?;
        let uf = ok(smooth_random_field(&fd, 2, 1.0, &mut member_rng(seed, 0)))?;
        let rc = max_shadow_residual(&cf, &uc, (0.5, 1.0))?;
        let rf = max_shadow_residual(&ff, &uf, (0.5, 1.0))?;
        let ratio = rc / rf;
        require(ratio >= 1.5, || format!("seed {seed}: residual {rc:e} → {rf:e}, factor {ratio:.3}"))?;
        smallest = smallest.min(ratio);
    }
    let steady = RunConfig {
        forcing_constant: 1.0,
        ..RunConfig::default()
    };
    let (sd, sf) = build(&steady)?;
    let u = ok(smooth_random_field(&sd, 2, 1.0, &mut member_rng(0, 0)))?;
    let tr = ok(sf.evolve(&ok(sf.state_from_nodal(&u))?, 8.0))?;
    let last = tr.samples().len() - 2;
    let rs = ok(sf.shadow_ode_residual(&tr, 0, last))?;
    require(rs <= 1e-3, || format!("steady residual {rs:e}"))?;
    Ok(format!("smallest refinement factor {smallest:.3} over 5 runs; steady residual {rs:.2e}"))
}

/// Oscillation on Ω₀ and distance to the limit along the λ ladder.
fn singular_limit() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let (dom, fam, flow) = ok(cfg.build())?;
    let u0 = ok(initial_field(&cfg, &dom))?;
    let study = ok(lambda_limit_study(&flow, &fam, &[1.0, 0.3, 0.1, 0.03, 0.01], &u0, (1.0, 2.0)))?;
    let ratio = study.osc_ratio();
    require(ratio <= 0.1, || format!("oscillation ratio {ratio:.4}"))?;
    require(study.dist_decreasing(0.1), || format!("distances {:?}", study.rows))?;
    let elapsed = within(start, Duration::from_secs(1800))?;
    let dists: Vec<String> = study.rows.iter().map(|r| format!("{:.2e}", r.dist)).collect();
    Ok(format!("osc ratio {ratio:.4}; distances {}; runtime {elapsed:.1?}", dists.join(" ")))
}

fn combination(dom: &Domain1D, c: &[f64]) -> NodalField {
    NodalField::from_fn(dom, |x| {
        c.iter()
            .enumerate()
            .map(|(k, a)| a * 2f64.sqrt() * ((k + 1) as f64 * PI * x).sin())
            .sum()
    })
}

/// Point attractor without reaction, synthetic dimension fixtures and exact exponential fits.
fn attractor_characterization() -> Outcome {
    let cfg = RunConfig {
        kappa: 0.0,
        ..RunConfig::default()
    };
    let (_, flow) = build(&cfg)?;
    let spec = EnsembleSpec {
        size: cfg.ensemble_size,
        radius: cfg.ensemble_radius,
        seed: cfg.seed,
    };
    let cloud = ok(approximate_attractor(&flow, &spec, cfg.t_transient, cfg.t_sample))?;
    let dim = ok(fractal_dimension(&cloud, DimensionMethod::Correlation))?;
    require(dim.slope <= 0.2, || format!("dimension {}", dim.slope))?;
    let exp = ok(attraction_experiment(
        &flow,
        &EnsembleSpec {
            seed: cfg.seed + 1,
            ..spec
        },
        &cloud,
        cfg.attraction_horizon,
    ))?;
    require(exp.fit.c2 > 0.0 && exp.fit.attracting, || format!("{:?}", exp.fit))?;

    let grid = ok(Domain1D::new(64, &[]))?;
    let mut rng = member_rng(cfg.seed, 0);
    let segment: Vec<NodalField> = (0..1000)
        .map(|_| {
            let s: f64 = rng.random_range(0.0..1.0);
            combination(&grid, &[s, 0.5 * s])
        })
        .collect();
    let torus: Vec<NodalField> = (0..2500)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..2.0 * PI);
            let b: f64 = rng.random_range(0.0..2.0 * PI);
            combination(&grid, &[a.cos(), a.sin(), b.cos(), b.sin()])
        })
        .collect();
    let mut fixtures = Vec::new();
    for (k, pts) in [(1.0, segment), (2.0, torus)] {
        let c = ok(SnapshotCloud::from_nodal(&grid, pts))?;
        for method in [DimensionMethod::Correlation, DimensionMethod::BoxPca { components: 3 }] {
            let d = ok(fractal_dimension(&c, method))?;
            require((d.slope - k).abs() <= 0.4, || format!("fixture {k}: {method:?} gave {}", d.slope))?;
            fixtures.push(format!("{:.2}", d.slope));
        }
    }

    let mut worst: f64 = 0.0;
    for (c1, c2) in [(3.0, 0.7), (0.5, 2.0), (10.0, 0.05)] {
        let series: Vec<(f64, f64)> = (0..=40).map(|i| (0.1 * i as f64, c1 * f64::exp(-c2 * 0.1 * i as f64))).collect();
        let fit = ok(fit_exponential_attraction(&series))?;
        let err = ((fit.c1 - c1) / c1).abs().max(((fit.c2 - c2) / c2).abs());
        require(err <= 1e-6, || format!("fit of ({c1}, {c2}) off by {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!(
        "dimension {:.3} (diameter {:.1e}), c2 = {:.3}; fixtures {}; fit error {worst:.1e}",
        dim.slope,
        dim.diameter,
        exp.fit.c2,
        fixtures.join(" ")
    ))
}

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

/// Two runs of every command produce identical artifacts.
fn determinism() -> Outcome {
    let dir = ok(tempfile::tempdir())?;
    let cfg = RunConfig {
        n: 64,
        tau: 1.0 / 128.0,
        sample_dt: 1.0 / 32.0,
        tartar_samples: 2000,
        power_samples: 500,
        norm_samples: 20,
        gronwall_pairs: 3,
        monotone_probes: 10,
        absorbing_members: 3,
        integral_runs: 2,
        ltraj_pairs: 6,
        holder_samples: 6,
        probe_fields: 8,
        probe_trajectories: 2,
        ensemble_size: 4,
        ladder: vec![1.0, 0.1],
        ..RunConfig::default()
    };
    let config = dir.path().join("run.toml");
    ok(std::fs::write(&config, cfg.serialize()))?;
    let mut checked = 0;
    for cmd in ["simulate", "verify", "constants", "attractor", "limit-study", "ltraj"] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{cmd}-{run}"));
            let status = ok(Process::new(env!("CARGO_BIN_EXE_pxflow"))
                .arg(cmd)
                .arg("--config")
                .arg(&config)
                .arg("--seed")
                .arg("17")
                .arg("--out")
                .arg(&out)
                .output())?;
            require(matches!(status.status.code(), Some(0 | 1)), || {
                format!("{cmd} exited with {:?}: {}", status.status, String::from_utf8_lossy(&status.stderr))
            })?;
            outputs.push(artifact_bytes(&out));
        }
        let names: Vec<&String> = outputs[0].iter().map(|f| &f.0).collect();
        require(outputs[0] == outputs[1], || format!("{cmd}: artifacts differ among {names:?}"))?;
        checked += outputs[0]
            .iter()
            .filter(|f| f.0.ends_with(".csv") || f.0.ends_with(".json"))
            .count();
    }
    Ok(format!("{checked} CSV/JSON artifacts identical across 6 commands"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 inequality suite", inequality_suite),
        ("2 absorbing set", absorbing_set),
        ("3 space-time integral bounds", integral_bounds),
        ("4 shift operator bounds", shift_operator),
        ("5 gradient correctness", gradient_correctness),
        ("6 limit-problem consistency", limit_consistency),
        ("7 singular limit", singular_limit),
        ("8 attractor characterization", attractor_characterization),
        ("9 determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match run() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
