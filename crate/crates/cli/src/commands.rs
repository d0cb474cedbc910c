use std::path::{Path, PathBuf};

use milnor_core::first_method::{weak_attractor_test, AnalysisOptions, Verdict as AttractorVerdict, DEFAULT_SEED};
use milnor_core::observer::{
    check_c1_c4, construct_mky, extended_regressor, fit_exponential_rate, lemma1_bound_check, lyapunov_increase,
    pe_check, simulate_observer, ObserverSystem,
};
use milnor_core::ode::{integrate, Method, Trajectory};
use milnor_core::region::{check_condition4, verify_forward_invariance, Condition4, Psi, RegionOmegaA};
use milnor_core::report::{fmt12, KeyValueReport};
use milnor_core::scenario::Scenario;
use milnor_core::system::Smoothness;
use milnor_core::tightness::{
    example_cone, example_threshold, line_starts, sweep, sweep_csv, Example1Params, ThresholdSearch, Verdict,
};
use nalgebra::{dvector, DVector};

use crate::svg::{emit_svg, PlotOptions, Viewport};
use crate::{Failure, Invocation, Verb};

pub struct Outcome {
    pub report: String,
    pub passed: bool,
}

fn usage(m: impl Into<String>) -> Failure {
    Failure::Usage(m.into())
}

fn numeric(e: impl std::fmt::Display) -> Failure {
    Failure::Numeric(e.to_string())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Numeric(format!("cannot write {}: {e}", path.display())))
}

/// `dir/stem.ext` becomes `dir/stem_<index>.ext`.
fn indexed(path: &Path, index: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{index}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{index}"),
    };
    path.with_file_name(name)
}

fn plot(inv: &Invocation, trajectories: &[Trajectory], viewport: Option<Viewport>, inset: bool) -> Result<(), Failure> {
    let Some(path) = &inv.out_svg else { return Ok(()) };
    let viewport = viewport.or_else(|| Viewport::fit(trajectories)).ok_or_else(|| numeric("nothing to plot"))?;
    let options = PlotOptions {
        viewport,
        x_label: "x1".into(),
        y_label: "x2".into(),
        inset,
    };
    let svg = emit_svg(trajectories, &options).map_err(numeric)?;
    write(path, &svg)
}

fn no_plot(inv: &Invocation) -> Result<(), Failure> {
    match inv.out_svg {
        Some(_) => Err(usage(format!("{:?} does not produce a plot", inv.verb).to_lowercase())),
        None => Ok(()),
    }
}

fn example_params(s: &Scenario, verb: &str) -> Result<Example1Params, Failure> {
    s.system
        .example1()
        .ok_or_else(|| usage(format!("{verb} needs system.name = example1, got {}", s.system.name())))
}

fn observer_system(s: &Scenario, verb: &str) -> Result<ObserverSystem, Failure> {
    s.system
        .observer()
        .ok_or_else(|| usage(format!("{verb} needs system.name = observer, got {}", s.system.name())))?
        .map_err(numeric)
}

fn atol(s: &Scenario) -> f64 {
    match s.integrator.method {
        Method::Rk45 { atol, .. } => atol,
        Method::Rk4 { step } => step.powi(4),
    }
}

pub fn dispatch(inv: &Invocation) -> Result<Outcome, Failure> {
    match inv.verb {
        Verb::Analyze => analyze(inv),
        Verb::Region => region(inv),
        Verb::Simulate => simulate(inv),
        Verb::PeCheck => pe(inv),
        Verb::Observer => observer(inv),
        Verb::Example => example(inv),
        Verb::BisectThreshold => bisect(inv),
    }
}

fn analyze(inv: &Invocation) -> Result<Outcome, Failure> {
    let s = &inv.scenario;
    let system = s
        .system
        .autonomous()
        .ok_or_else(|| usage("analyze needs an autonomous system"))?
        .map_err(numeric)?;
    if system.smoothness() < Smoothness::C2AtOrigin {
        return Err(usage(format!("analyze needs a C2 system; {} is {}", s.system.name(), system.smoothness())));
    }
    no_plot(inv)?;
    let options = AnalysisOptions {
        radius: s.run_value("radius", 0.5),
        samples: s.run_value("samples", 2000.0) as usize,
        seed: s.run.get("seed").map_or(DEFAULT_SEED, |v| *v as u64),
        ..AnalysisOptions::default()
    };
    let cert = weak_attractor_test(&system, &options).map_err(numeric)?;
    if let Some(path) = &inv.out_csv {
        write(path, &cert.matrices_csv())?;
    }
    Ok(Outcome {
        report: cert.to_report().render(),
        passed: cert.verdict == AttractorVerdict::WeakAttractor,
    })
}

fn region(inv: &Invocation) -> Result<Outcome, Failure> {
    let s = &inv.scenario;
    let params = example_params(s, "region")?;
    no_plot(inv)?;
    let p = s.run_value("p", example_cone(params.tau1, params.c1).slope);
    let a = s.run_value("a", 1.0);
    let data = params.comparison_data();
    let condition = check_condition4(&data, &Psi::SqrtFamily(p), a, s.run_value("grid", 1000.0) as usize).map_err(numeric)?;
    let omega = RegionOmegaA::new(a, Psi::SqrtFamily(p), data.v.clone()).map_err(numeric)?;
    let report = verify_forward_invariance(
        &params.cascade(),
        &omega,
        s.run_value("samples", 100.0) as usize,
        s.tf_or(100.0) - s.t0,
        None,
        &s.integrator,
        s.run.get("seed").map_or(DEFAULT_SEED, |v| *v as u64),
    )
    .map_err(numeric)?;
    if let Some(path) = &inv.out_csv {
        write(path, &report.to_csv())?;
    }
    let mut r = KeyValueReport::new();
    r.num("p", p).num("a", a);
    match condition {
        Condition4::Holds { max_slack } => r.text("condition", "holds").num("max_slack", max_slack),
        Condition4::Violated { v_worst, value } => r.text("condition", "violated").num("v_worst", v_worst).num("value", value),
    };
    Ok(Outcome {
        report: r.render() + &report.summary(),
        passed: condition.holds() && report.stay_count == report.outcomes.len(),
    })
}

fn full_start(s: &Scenario, x0: &DVector<f64>) -> DVector<f64> {
    match s.system.observer() {
        Some(Ok(sys)) => {
            let mut z = DVector::zeros(x0.len() + 1);
            z.rows_mut(0, x0.len()).copy_from(x0);
            z[x0.len()] = sys.lambda0();
            z
        }
        _ => x0.clone(),
    }
}

fn simulate(inv: &Invocation) -> Result<Outcome, Failure> {
    let s = &inv.scenario;
    if s.starts.is_empty() {
        return Err(usage("simulate needs run.x0"));
    }
    let field = s.system.time_field().map_err(numeric)?;
    let tf = s.tf_or(100.0);
    let mut r = KeyValueReport::new();
    let mut trajectories = Vec::new();
    for (i, x0) in s.starts.iter().enumerate() {
        let traj = integrate(|t, z| field(t, z), &full_start(s, x0), s.t0, tf, &s.integrator, &s.events).map_err(numeric)?;
        let key = |k: &str| format!("run{}.{k}", i + 1);
        r.num(&key("end_time"), traj.end_time())
            .text(&key("samples"), traj.len().to_string())
            .num(&key("final_norm"), traj.last_state().norm())
            .text(
                &key("events"),
                traj.events.iter().map(|e| format!("{}@{}", e.kind, fmt12(e.time))).collect::<Vec<_>>().join(" "),
            );
        trajectories.push(traj);
    }
    if let Some(path) = &inv.out_csv {
        if trajectories.len() == 1 {
            write(path, &trajectories[0].to_csv())?;
        } else {
            for (i, traj) in trajectories.iter().enumerate() {
                write(&indexed(path, i + 1), &traj.to_csv())?;
            }
        }
    }
    if s.system.dim() >= 2 {
        plot(inv, &trajectories, None, false)?;
    } else {
        no_plot(inv)?;
    }
    Ok(Outcome {
        report: r.render(),
        passed: true,
    })
}

fn observer_start(s: &Scenario) -> DVector<f64> {
    s.starts.first().cloned().unwrap_or_else(|| dvector![1.0, 1.0])
}

fn pe(inv: &Invocation) -> Result<Outcome, Failure> {
    let s = &inv.scenario;
    let sys = observer_system(s, "pe-check")?;
    no_plot(inv)?;
    let tf = s.tf_or(200.0);
    let traj = simulate_observer(&sys, &observer_start(s), &s.integrator, tf).map_err(numeric)?;
    let last = sys.k() + sys.m();
    let regressor = extended_regressor(&sys, |t| traj.interpolate(t)[last]);
    let cert = pe_check(
        regressor,
        s.run_value("window", std::f64::consts::TAU),
        0.0,
        traj.end_time(),
        s.run_value("scan_step", 0.5),
    )
    .map_err(numeric)?;
    if let Some(path) = &inv.out_csv {
        write(path, &traj.to_csv())?;
    }
    let mut r = cert.to_report();
    r.num("dv", sys.dv()).num("dv_window", sys.params().dv_window);
    Ok(Outcome {
        report: r.render(),
        passed: cert.is_pe(),
    })
}

fn observer(inv: &Invocation) -> Result<Outcome, Failure> {
    let s = &inv.scenario;
    let sys = observer_system(s, "observer")?;
    let traj = simulate_observer(&sys, &observer_start(s), &s.integrator, s.tf_or(200.0)).map_err(numeric)?;
    let (p, _, _) = construct_mky(&sys.params().a, &sys.params().b).map_err(numeric)?;
    let c14 = check_c1_c4(&traj, sys.k()).map_err(numeric)?;
    let fit = fit_exponential_rate(&traj, s.run_value("transient_skip", 0.0)).map_err(numeric)?;
    let combined = lemma1_bound_check(&traj, c14.lemma_constant());
    let increase = lyapunov_increase(&sys, &p, &traj);
    let lambda = traj.component(sys.k() + sys.m());
    let lambda_monotone = lambda.windows(2).all(|w| w[1] <= w[0] + 10.0 * atol(s));
    let lambda_positive = lambda.iter().all(|&l| l > 0.0);
    let v_monotone = increase <= 10.0 * atol(s);
    if let Some(path) = &inv.out_csv {
        write(path, &traj.to_csv())?;
    }
    plot(inv, std::slice::from_ref(&traj), None, false)?;
    let mut r = c14.to_report();
    r.text("lambda_monotone", lambda_monotone.to_string())
        .text("lambda_positive", lambda_positive.to_string())
        .num("v_max_increase", increase)
        .text("v_monotone", v_monotone.to_string());
    let report = r.render() + &fit.to_report().render() + &format!("lemma1_holds_combined = {combined}\n");
    Ok(Outcome {
        report,
        passed: c14.all_hold
            && fit.fitted_rate > 0.0
            && fit.fit_quality > 0.95
            && fit.lemma1_holds
            && lambda_monotone
            && lambda_positive
            && v_monotone,
    })
}

fn example(inv: &Invocation) -> Result<Outcome, Failure> {
    let s = &inv.scenario;
    let params = example_params(s, "example")?;
    let height = s.run_value("height", 2.0);
    let width = s.run_value("width", 2.0);
    let starts = if s.starts.is_empty() {
        line_starts(&example_cone(params.tau1, params.c1), height, width, s.run_value("count", 21.0) as usize)
    } else {
        s.starts.clone()
    };
    let conv_norm = s.run_value("conv_norm", 1e-3);
    let rows = sweep(&params, &starts, &s.integrator, s.tf_or(500.0) - s.t0, conv_norm);
    let threshold = example_threshold(params.tau1, params.c1);
    let expected = if params.c2 <= threshold { Verdict::Converges } else { Verdict::Escapes };
    let count = |v: Verdict| rows.iter().filter(|r| r.result.verdict == v).count();
    if let Some(path) = &inv.out_csv {
        write(path, &sweep_csv(&rows))?;
    }
    let trajectories: Vec<Trajectory> = rows.iter().filter_map(|r| r.trajectory.clone()).collect();
    if !trajectories.is_empty() {
        let view = Viewport {
            x_min: -width - 0.5,
            x_max: width + 0.5,
            y_min: -1.0,
            y_max: height + 0.5,
        };
        plot(inv, &trajectories, Some(view), true)?;
    }
    let mut r = KeyValueReport::new();
    r.num("c2", params.c2)
        .num("threshold", threshold)
        .text("expected", expected.to_string())
        .text("starts", rows.len().to_string())
        .text("converges", count(Verdict::Converges).to_string())
        .text("escapes", count(Verdict::Escapes).to_string())
        .text("undecided", count(Verdict::Undecided).to_string());
    Ok(Outcome {
        report: r.render(),
        passed: !rows.is_empty() && rows.iter().all(|r| r.result.verdict == expected),
    })
}

fn bisect(inv: &Invocation) -> Result<Outcome, Failure> {
    let s = &inv.scenario;
    let params = example_params(s, "bisect-threshold")?;
    no_plot(inv)?;
    let x0 = s.starts.first().cloned().unwrap_or_else(|| dvector![0.0, 2.0]);
    let search = ThresholdSearch {
        horizon: s.tf_or(500.0) - s.t0,
        conv_norm: s.run_value("conv_norm", 1e-3),
    };
    let analytic = example_threshold(params.tau1, params.c1);
    let found = milnor_core::tightness::empirical_threshold(
        params.tau1,
        params.c1,
        &x0,
        s.run_value("bisect_tol", 1e-3),
        &s.integrator,
        &search,
    )
    .map_err(numeric)?;
    if let Some(path) = &inv.out_csv {
        write(path, &format!("tau1,c1,threshold,analytic\n{},{},{},{}\n", fmt12(params.tau1), fmt12(params.c1), fmt12(found), fmt12(analytic)))?;
    }
    let mut r = KeyValueReport::new();
    r.num("tau1", params.tau1)
        .num("c1", params.c1)
        .num("threshold", found)
        .num("analytic", analytic)
        .num("relative_error", (found - analytic).abs() / analytic);
    Ok(Outcome {
        report: r.render(),
        passed: true,
    })
}
