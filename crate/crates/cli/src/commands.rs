use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use invsq_core::angular::angular_spectrum;
use invsq_core::approxefn::{self, PhiConfig};
use invsq_core::config::PotentialSpec;
use invsq_core::counterexamples::{hemisphere_e_grid, hemisphere_experiment, sharpness_experiment, CounterexampleT};
use invsq_core::exterior::{evaluate_exterior_on, ExteriorOptions};
use invsq_core::ladder::{compute_ladder, localization, InteriorModel, LadderOptions, PhaseData};
use invsq_core::numerics::fit_line;
use invsq_core::oscillation::{count_report, default_e_grid, slope_fit_raw, CountOptions, DEFAULT_ODE_TOL};
use invsq_core::potential::{Envelope, RadialPerturbation};

use crate::output::{fmt_f64, manifest_path, write_csv, write_json, write_series, Table};
use crate::{Cli, CliError, Command, GlobalOpts, Sign};

const ANGULAR_TOL: f64 = 1e-8;
const PROBE_N: usize = 12;

/// What a run records next to its output.
struct Manifest {
    command: &'static str,
    parameters: Value,
    potential: Option<Value>,
    tolerances: Value,
    outputs: Vec<PathBuf>,
    summary: Value,
}

impl Manifest {
    fn new(command: &'static str, parameters: Value, tolerances: Value) -> Self {
        Self {
            command,
            parameters,
            potential: None,
            tolerances,
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    fn write(self, out: &Path) -> Result<Vec<PathBuf>, CliError> {
        let path = manifest_path(out);
        let mut outputs = vec![out.to_path_buf()];
        outputs.extend(self.outputs);
        let value = json!({
            "command": self.command,
            "parameters": self.parameters,
            "potential": self.potential.unwrap_or(Value::Null),
            "tolerances": self.tolerances,
            "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "summary": self.summary,
            "versions": { "invsq-cli": env!("CARGO_PKG_VERSION"), "invsq-core": invsq_core::VERSION },
        });
        write_json(&path, &value)?;
        outputs.push(path);
        Ok(outputs)
    }
}

fn load(path: &Path) -> Result<PotentialSpec, CliError> {
    Ok(PotentialSpec::from_path(path)?)
}

fn ladder_options(g: &GlobalOpts, base: LadderOptions) -> LadderOptions {
    let mut o = base;
    if let Some(t) = g.tol_ode {
        o.ode_tol = t;
        o.exterior.tol = t;
    }
    if let Some(t) = g.tol_eig {
        o.root_tol = t;
    }
    o
}

fn ladder_tolerances(o: &LadderOptions) -> Value {
    json!({ "ode": o.ode_tol, "count": o.count_tol, "root": o.root_tol, "exterior": o.exterior.tol })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn dispatch(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Angular { potential, out } => angular(g, potential, out),
        Command::Count {
            potential,
            e_grid,
            sign,
            all_modes,
            out,
            plot,
        } => count(g, potential, e_grid.clone().unwrap_or_else(default_e_grid), *sign, *all_modes, out, plot.as_deref()),
        Command::Slope { input, out } => slope(input, out),
        Command::Exterior {
            mode_mu,
            lambda,
            dimension,
            x_min,
            x_max,
            points,
            out,
        } => exterior(g, *mode_mu, *lambda, *dimension, (*x_min, *x_max), *points, out),
        Command::Ladder { potential, n_max, out, plot } => ladder(g, potential, *n_max, out, plot.as_deref()),
        Command::Localize { potential, n, epsilon, out } => localize(g, potential.as_deref(), *n, *epsilon, out),
        Command::PhiResidual {
            potential,
            n_range,
            delta,
            mode_cut,
            psi,
            out,
            plot,
        } => phi_residual(g, potential, *n_range, *delta, *mode_cut, psi.clone(), out, plot.as_deref()),
        Command::Counterexample { e_grid, out } => counterexample(g, e_grid.clone().unwrap_or_else(|| vec![1e-3, 1e-5, 1e-7]), out),
        Command::Hemisphere { epsilon, e_grid, out } => hemisphere(g, *epsilon, e_grid.clone().unwrap_or_else(hemisphere_e_grid), out),
    }
}

fn angular(g: &GlobalOpts, potential: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let spec = load(potential)?;
    let tol = g.tol_eig.unwrap_or(ANGULAR_TOL);
    let s = angular_spectrum(&spec.angular, g.basis, tol)?;
    let mut t = Table::new(&["index", "eigenvalue", "mu", "multiplicity", "critical", "tau", "alpha_re", "alpha_im"]);
    for m in &s.modes {
        t.push(vec![
            m.index.to_string(),
            fmt_f64(m.eigenvalue),
            fmt_f64(m.mu),
            m.multiplicity.to_string(),
            m.critical.to_string(),
            fmt_f64(m.tau),
            fmt_f64(m.alpha.re),
            fmt_f64(m.alpha.im),
        ]);
    }
    write_csv(out, &t)?;
    let mut man = Manifest::new("angular", json!({ "basis": g.basis }), json!({ "eig": tol }));
    man.potential = Some(spec.source.clone());
    man.summary = json!({ "galerkin_residual": s.galerkin_residual, "near_degenerate_pairs": s.near_degenerate.len() });
    man.write(out)
}

#[allow(clippy::too_many_arguments)]
fn count(
    g: &GlobalOpts,
    potential: &Path,
    e_grid: Vec<f64>,
    sign: Option<Sign>,
    all_modes: bool,
    out: &Path,
    plot: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let spec = load(potential)?;
    let eig_tol = g.tol_eig.unwrap_or(ANGULAR_TOL);
    let ode_tol = g.tol_ode.unwrap_or(DEFAULT_ODE_TOL);
    let s = angular_spectrum(&spec.angular, g.basis, eig_tol)?;
    let mut t = spec.radial.clone();
    if let Some(sg) = sign {
        t.envelope = match sg {
            Sign::Plus => Envelope::Plus,
            Sign::Minus => Envelope::Minus,
        };
    }
    let rep = count_report(&s, &t, &e_grid, CountOptions { tol: ode_tol, exhaustive: all_modes })?;

    let mut table = Table::new(&["E", "mode_index", "count", "predicted", "total"]);
    for (j, &e) in rep.e_grid.iter().enumerate() {
        let (pred, total) = (fmt_f64(rep.predicted[j]), rep.totals[j].to_string());
        if rep.mode_indices.is_empty() {
            table.push(vec![fmt_f64(e), String::new(), "0".into(), pred, total]);
            continue;
        }
        for (i, idx) in rep.mode_indices.iter().enumerate() {
            table.push(vec![fmt_f64(e), idx.to_string(), rep.per_mode_counts[i][j].to_string(), pred.clone(), total.clone()]);
        }
    }
    write_csv(out, &table)?;

    let mut man = Manifest::new(
        "count",
        json!({
            "basis": g.basis,
            "E_grid": e_grid,
            "sign": match t.envelope { Envelope::Plus => "plus", Envelope::Minus => "minus" },
            "all_modes": all_modes,
        }),
        json!({ "ode": ode_tol, "eig": eig_tol }),
    );
    if let Some(p) = plot {
        let pts: Vec<(f64, f64)> = rep.e_grid.iter().zip(&rep.totals).map(|(e, n)| ((1.0 / e).ln(), *n as f64)).collect();
        write_series(p, "ln_inv_E", "total", &pts)?;
        man.outputs.push(p.to_path_buf());
    }
    man.potential = Some(spec.source.clone());
    man.summary = json!({
        "slope": rep.slope_fit.map(|f| f.slope),
        "predicted_slope": invsq_core::oscillation::predicted_slope(&s),
    });
    man.write(out)
}

fn slope(input: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut rdr = csv::Reader::from_path(input).map_err(|e| CliError::Io(format!("{}: {e}", input.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("{}: missing column `{name}`", input.display())))
    };
    let (ie, ip, it) = (col("E")?, col("predicted")?, col("total")?);
    // One point per E, in file order.
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let (mut es, mut pred, mut tot) = (Vec::new(), Vec::new(), Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
        let field = |i: usize| -> Result<f64, CliError> {
            rec[i]
                .parse()
                .map_err(|e| CliError::Usage(format!("{}: row {}: `{}`: {e}", input.display(), k + 2, &rec[i])))
        };
        if seen.insert(rec[ie].to_string(), es.len()).is_none() {
            es.push(field(ie)?);
            pred.push(field(ip)?);
            tot.push(field(it)?);
        }
    }
    let fit = slope_fit_raw(&es, &tot)?;
    let x: Vec<f64> = es.iter().map(|e| (1.0 / e).ln()).collect();
    let predicted_slope = fit_line(&x, &pred)?.slope;
    let result = json!({
        "slope": fit.slope,
        "intercept": fit.intercept,
        "predicted_slope": predicted_slope,
        "max_residual": fit.max_abs_residual,
        "points": es.len(),
    });
    write_json(out, &result)?;
    Manifest::new("slope", json!({ "input": input.display().to_string() }), json!({})).write(out)
}

fn exterior(g: &GlobalOpts, mu: f64, lambda: f64, d: usize, x_range: (f64, f64), points: usize, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if x_range.1 <= x_range.0 || points < 2 {
        return Err(CliError::Usage("need x-min < x-max and at least 2 points".into()));
    }
    let opts = ExteriorOptions {
        tol: g.tol_ode.unwrap_or(ExteriorOptions::default().tol),
        points,
        ..ExteriorOptions::default()
    };
    let (a, b) = ((x_range.0 / lambda.sqrt()).ln(), (x_range.1 / lambda.sqrt()).ln());
    let grid: Vec<f64> = (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect();
    let sol = evaluate_exterior_on(mu, d, lambda, &grid, &opts)?;
    let scale = sol.log_scale.exp();
    let mut t = Table::new(&["r", "X", "Xprime", "logderiv"]);
    for (i, ld) in sol.log_derivatives().into_iter().enumerate() {
        let r = sol.r[i];
        t.push(vec![
            fmt_f64(r),
            fmt_f64(sol.mantissa[i] * scale),
            fmt_f64(sol.r_derivative[i] / r * scale),
            fmt_f64(ld),
        ]);
    }
    write_csv(out, &t)?;
    let mut man = Manifest::new(
        "exterior",
        json!({ "mode_mu": mu, "lambda": lambda, "dimension": d, "x_min": x_range.0, "x_max": x_range.1, "points": points }),
        json!({ "ode": opts.tol, "seed_x": opts.seed_x }),
    );
    man.summary = json!({ "log_scale": sol.log_scale, "sign_changes": sol.sign_changes() });
    man.write(out)
}

fn ladder(g: &GlobalOpts, potential: &Path, n_max: usize, out: &Path, plot: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let spec = load(potential)?;
    let model = spec.interior_model()?;
    let opts = ladder_options(g, LadderOptions::default());
    let lad = compute_ladder(&model, n_max, &opts)?;
    let mut t = Table::new(&["n", "lambda_n", "xi_n", "ratio", "a_estimate"]);
    for (i, &n) in lad.n.iter().enumerate() {
        t.push(vec![
            n.to_string(),
            fmt_f64(lad.lambda[i]),
            fmt_f64(lad.xi[i]),
            lad.ratios.get(i).map(|r| fmt_f64(*r)).unwrap_or_default(),
            fmt_f64(lad.a_estimates[i]),
        ]);
    }
    write_csv(out, &t)?;
    let mut man = Manifest::new("ladder", json!({ "n_max": n_max }), ladder_tolerances(&opts));
    if let Some(p) = plot {
        let pts: Vec<(f64, f64)> = lad.n.iter().zip(&lad.lambda).map(|(&n, l)| (n as f64, l.ln())).collect();
        write_series(p, "n", "ln_lambda", &pts)?;
        man.outputs.push(p.to_path_buf());
    }
    man.potential = Some(spec.source.clone());
    man.summary = json!({
        "sigma": lad.sigma,
        "mu1": lad.mu1,
        "xi_onset": lad.xi_onset,
        "phase_c": lad.phase.c.c_value,
        "phase_d": lad.phase.d.d_value,
        "branch_shift": lad.phase.branch_shift,
        "bracket_source": lad.bracket_source,
    });
    man.write(out)
}

fn localize(g: &GlobalOpts, potential: Option<&Path>, n: usize, epsilon: f64, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !(epsilon < 1.0) || n == 0 {
        return Err(CliError::Usage("need n >= 1 and 0 < epsilon < 1".into()));
    }
    let (model, source) = match potential {
        Some(p) => {
            let spec = load(p)?;
            (spec.interior_model()?, Some(spec.source))
        }
        None => (InteriorModel::sigma_half(), None),
    };
    let opts = ladder_options(g, LadderOptions::default());
    let lad = compute_ladder(&model, n, &opts)?;
    let rep = localization(&model, &lad, n, epsilon, &opts)?;
    let result = json!({
        "n": rep.n,
        "lambda": rep.lambda,
        "epsilon": rep.epsilon,
        "sigma": lad.sigma,
        "mass_fraction": rep.mass_fraction,
        "r_inner": rep.annulus.0,
        "r_outer": rep.annulus.1,
        "c_minus": rep.c_minus,
        "c_plus": rep.c_plus,
        "interior_fraction": rep.interior_fraction,
    });
    write_json(out, &result)?;
    let mut man = Manifest::new(
        "localize",
        json!({ "n": n, "epsilon": epsilon, "model": if source.is_some() { "spec" } else { "sigma_half" } }),
        ladder_tolerances(&opts),
    );
    man.potential = source;
    man.write(out)
}

#[allow(clippy::too_many_arguments)]
fn phi_residual(
    g: &GlobalOpts,
    potential: &Path,
    range: (usize, usize),
    delta: f64,
    mode_cut: usize,
    psi: Option<Vec<f64>>,
    out: &Path,
    plot: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    let spec = load(potential)?;
    let model = spec.interior_model()?;
    let opts = ladder_options(g, approxefn::default_options());
    let cfg = PhiConfig {
        delta,
        mode_cut,
        psi: psi.unwrap_or_else(|| PhiConfig::default().psi),
    };
    let pd = PhaseData::new(&model, PROBE_N, &opts)?;
    let ns: Vec<usize> = (range.0..=range.1).collect();
    let rows = approxefn::residual_sweep(&model, &pd, &ns, &cfg, &opts)?;
    let mut t = Table::new(&["n", "lambda", "rho", "residual", "ratio", "phi1", "norm"]);
    for r in &rows {
        t.push(vec![
            r.n.to_string(),
            fmt_f64(r.lambda),
            fmt_f64(r.rho),
            fmt_f64(r.residual),
            fmt_f64(r.ratio),
            fmt_f64(r.phi1),
            fmt_f64(r.norm),
        ]);
    }
    write_csv(out, &t)?;
    let mut man = Manifest::new(
        "phi-residual",
        json!({ "n_range": [range.0, range.1], "delta": delta, "mode_cut": mode_cut, "psi": cfg.psi }),
        ladder_tolerances(&opts),
    );
    if let Some(p) = plot {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.lambda, r.residual)).collect();
        write_series(p, "lambda", "residual", &pts)?;
        man.outputs.push(p.to_path_buf());
    }
    man.potential = Some(spec.source.clone());
    let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.lambda.ln(), r.ratio.ln())).unzip();
    man.summary = json!({
        "ratio_slope": fit_line(&x, &y).map(|f| f.slope).ok(),
        "xi_constant": pd.xi_constant,
        "delta_limit": finite_or_null(approxefn::delta_limit(&model)),
    });
    man.write(out)
}

fn counterexample(g: &GlobalOpts, e_grid: Vec<f64>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let tol = g.tol_ode.unwrap_or(DEFAULT_ODE_TOL);
    let ce = CounterexampleT::default_construction()?.perturbation();
    let fast = RadialPerturbation::log_power(1.0, 2.5, Envelope::Minus)?;
    let a = sharpness_experiment(&ce, 3, &e_grid, tol)?;
    let b = sharpness_experiment(&fast, 3, &e_grid, tol)?;
    let mut t = Table::new(&["E", "counterexample_count", "log_power_count"]);
    for (j, &e) in e_grid.iter().enumerate() {
        t.push(vec![fmt_f64(e), a[j].to_string(), b[j].to_string()]);
    }
    write_csv(out, &t)?;
    Manifest::new(
        "counterexample",
        json!({ "E_grid": e_grid, "dimension": 3, "contrast": { "kind": "log_power", "c": 1.0, "p": 2.5 } }),
        json!({ "ode": tol }),
    )
    .write(out)
}

fn hemisphere(g: &GlobalOpts, epsilon: f64, e_grid: Vec<f64>, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let tol = g.tol_ode.unwrap_or(DEFAULT_ODE_TOL);
    let rep = hemisphere_experiment(epsilon, &e_grid, g.basis, tol)?;
    let mut t = Table::new(&["E", "count_even", "count_odd", "predicted_even"]);
    for (j, &e) in rep.e_grid.iter().enumerate() {
        t.push(vec![fmt_f64(e), rep.counts_even[j].to_string(), rep.counts_odd[j].to_string(), fmt_f64(rep.predicted_even[j])]);
    }
    write_csv(out, &t)?;
    let mut man = Manifest::new("hemisphere", json!({ "epsilon": epsilon, "E_grid": e_grid, "basis": g.basis }), json!({ "ode": tol }));
    man.summary = json!({
        "lambda_min_even": rep.lambda_min_even,
        "lambda_min_odd": rep.lambda_min_odd,
        "critical_even": rep.critical_even,
        "critical_odd": rep.critical_odd,
        "convergence_even": rep.convergence_even,
        "convergence_odd": rep.convergence_odd,
    });
    man.write(out)
}
