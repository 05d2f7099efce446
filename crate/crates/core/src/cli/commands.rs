use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::output::{num, save_gnuplot, save_json, Csv, Header};
use super::recipe::{Recipe, SpectrumSpec};
use super::Report;
use crate::bifurcation::{
    attractor_census, continue_equilibria, cycle_onset, find_codim2, homoclinic_turning_point, phase_portrait,
    BifurcationKind, BifurcationPoint, ManifoldKind,
};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::moments::{self, OdeConfig};
use crate::network::{run_coupled, run_ensemble, RecordMode, SimConfig};
use crate::stats::{independence_test, ks_gaussian_test, power_spectrum, SpectrumResult, TestReport};

pub(crate) struct Context<'a> {
    pub recipe: &'a Recipe,
    pub out: &'a Path,
    pub header: &'a Header,
}

impl Context<'_> {
    fn path(&self, name: &str) -> std::path::PathBuf {
        self.out.join(name)
    }
}

/// Moment trajectory sampled every `sample_dt` up to `t_end`.
fn mean_field_run(spec: &ModelSpec, recipe: &Recipe, t_end: f64, sample_dt: f64) -> Result<moments::MomentTrajectory> {
    let cfg = OdeConfig::adaptive(t_end).with_sample_dt(sample_dt);
    moments::integrate(spec, &recipe.init()?.to_moment_state(), &cfg)
}

fn moments_csv(ctx: &Context, traj: &moments::MomentTrajectory, name: &str) -> Result<std::path::PathBuf> {
    let mut csv = Csv::new(ctx.header, "t,population,mu,v");
    let times = traj.times();
    for a in 0..traj.last().mean.len() {
        for ((t, m), v) in times.iter().zip(traj.mean_series(a)).zip(traj.variance_series(a)) {
            csv.row(&[num(*t), (a + 1).to_string(), num(m), num(v)]);
        }
    }
    csv.save(&ctx.path(name))
}

pub(crate) fn simulate_net(ctx: &Context, report: &mut Report, extra: &mut Map<String, Value>) -> Result<()> {
    let recipe = ctx.recipe;
    let spec = recipe.model()?;
    let sim = recipe.sim()?;
    let init = recipe.init()?;
    report.warnings.extend(sim.warnings());
    let start = Instant::now();
    let run = run_ensemble(spec, sim, &init)?;
    let wall = start.elapsed().as_secs_f64();
    let neuron_steps = (sim.n_total * sim.n_steps() * sim.n_realizations) as f64;
    extra.insert("network_wall_time_s".into(), json!(wall));
    extra.insert("neuron_steps_per_s".into(), json!(if wall > 0.0 { neuron_steps / wall } else { 0.0 }));
    extra.insert("population_sizes".into(), json!(run.population_sizes));

    if let Some(stats) = &run.stats {
        let mut csv = Csv::new(ctx.header, "t,population,emp_mean,emp_var");
        for a in 0..stats.mean.len() {
            for (k, t) in stats.times.iter().enumerate() {
                csv.row(&[num(*t), (a + 1).to_string(), num(stats.mean[a][k]), num(stats.variance[a][k])]);
            }
        }
        report.files.push(csv.save(&ctx.path("stats.csv"))?);
    }
    if let Some((times, snaps)) = &run.trajectories {
        let pop = &run.final_state.population_of;
        let mut csv = Csv::new(ctx.header, "t,realization,neuron,population,V");
        for (t, snap) in times.iter().zip(snaps) {
            for (r, v) in snap.iter().enumerate() {
                for (i, x) in v.iter().enumerate() {
                    csv.row(&[num(*t), r.to_string(), i.to_string(), (pop[i] + 1).to_string(), num(*x)]);
                }
            }
        }
        report.files.push(csv.save(&ctx.path("trajectories.csv"))?);
    }
    if sim.record_mode == RecordMode::FinalState {
        let fs = &run.final_state;
        let mut csv = Csv::new(&ctx.header.with(format!("time: {}", num(fs.time))), "realization,neuron,population,V");
        for (r, v) in fs.voltages.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                csv.row(&[r.to_string(), i.to_string(), (fs.population_of[i] + 1).to_string(), num(*x)]);
            }
        }
        report.files.push(csv.save(&ctx.path("final_state.csv"))?);
    }
    let sample_dt = sim.dt * sim.record_every as f64;
    if let Some(traj) = report.attempt("mean-field companion", mean_field_run(spec, recipe, sim.t_end, sample_dt)) {
        report.files.push(moments_csv(ctx, &traj, "moments.csv")?);
    }
    if run.stats.is_some() {
        let gp = "plot 'stats.csv' using 1:($2==1?$3:1/0) with lines title 'network, population 1', \\\n     \
                  'moments.csv' using 1:($2==1?$3:1/0) with lines dt 2 title 'mean field, population 1'";
        report.files.push(save_gnuplot(&ctx.path("stats.gp"), ctx.header, gp)?);
    }

    if let Some(scan) = &recipe.scan {
        if let Some(path) = report.attempt("scan", scan_csv(ctx, scan)) {
            report.files.push(path);
            let gp = "plot 'scan.csv' using 1:($3==1?$4:1/0):5 with yerrorbars title 'network', \\\n     \
                      'scan.csv' using 1:($3==1?$7:1/0) with lines title 'mean field'";
            report.files.push(save_gnuplot(&ctx.path("scan.gp"), ctx.header, gp)?);
        }
    }
    Ok(())
}

/// Endpoint of the network and of the moment equations at every scan value and size.
fn scan_csv(ctx: &Context, scan: &super::recipe::ScanSpec) -> Result<std::path::PathBuf> {
    let recipe = ctx.recipe;
    let base = recipe.model()?;
    let sim = recipe.sim()?;
    let sizes = if scan.sizes.is_empty() { vec![sim.n_total] } else { scan.sizes.clone() };
    let mut csv = Csv::new(ctx.header, "param,n,population,emp_mean,emp_mean_se,emp_var,mf_mu,mf_v");
    for &x in &scan.values {
        let spec = scan.parameter.apply(base, x);
        let mf = moments::integrate(&spec, &recipe.init()?.to_moment_state(), &OdeConfig::adaptive(sim.t_end))?;
        let end = mf.last();
        for &n in &sizes {
            let cfg = SimConfig {
                n_total: n,
                record_mode: RecordMode::PopulationStats,
                record_every: sim.n_steps().max(1),
                ..sim.clone()
            };
            let run = run_ensemble(&spec, &cfg, &recipe.init()?)?;
            let stats = run.stats.as_ref().expect("population statistics were requested");
            let k = stats.times.len() - 1;
            for a in 0..stats.mean.len() {
                csv.row(&[
                    num(x),
                    n.to_string(),
                    (a + 1).to_string(),
                    num(stats.mean[a][k]),
                    num(stats.mean_standard_error(a, k)),
                    num(stats.variance[a][k]),
                    num(end.mean[a]),
                    num(end.variance[a]),
                ]);
            }
        }
    }
    csv.save(&ctx.path("scan.csv"))
}

pub(crate) fn simulate_mf(ctx: &Context, report: &mut Report) -> Result<()> {
    let recipe = ctx.recipe;
    let spec = recipe.model()?;
    let cfg = match &recipe.ode {
        Some(cfg) => cfg.clone(),
        None => OdeConfig::adaptive(recipe.sim.as_ref().map_or(50.0, |s| s.t_end)).with_sample_dt(0.01),
    };
    let traj = moments::integrate(spec, &recipe.init()?.to_moment_state(), &cfg)?;
    report.files.push(moments_csv(ctx, &traj, "moments.csv")?);
    let gp = "plot 'moments.csv' using 1:($2==1?$3:1/0) with lines title 'mu_1', \\\n     \
              'moments.csv' using 1:($2==2?$3:1/0) with lines title 'mu_2'";
    report.files.push(save_gnuplot(&ctx.path("moments.gp"), ctx.header, gp)?);
    Ok(())
}

pub(crate) fn sweep(ctx: &Context, report: &mut Report) -> Result<()> {
    let recipe = ctx.recipe;
    let spec = recipe.model()?;
    let sw = recipe
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig(format!("recipe `{}` has no `sweep` section", recipe.name)))?;
    let cycle = sw.cycle.clone().unwrap_or_else(|| sw.census.cycle.clone());
    let mut census_opts = sw.census.clone();
    census_opts.cycle = cycle.clone();
    let mut bifurcations: Vec<BifurcationPoint> = Vec::new();

    if !sw.axes.is_empty() {
        if let Some(res) = report.attempt("census", attractor_census(spec, &sw.axes, &census_opts)) {
            let columns = if sw.axes.len() == 1 { "p1,label" } else { "p1,p2,label" };
            let names: Vec<String> = sw.axes.iter().map(|a| a.parameter.to_string()).collect();
            let mut csv = Csv::new(&ctx.header.with(format!("axes: {}", names.join(","))), columns);
            for cell in &res.cells {
                let mut row: Vec<String> = cell.params.iter().map(|p| num(*p)).collect();
                row.push(cell.label.as_str().to_string());
                csv.row(&row);
            }
            report.files.push(csv.save(&ctx.path("census.csv"))?);
            report.files.push(save_json(&ctx.path("census.json"), &res)?);
            bifurcations.extend(res.bifurcations.iter().cloned());
            let gp = if sw.axes.len() == 1 {
                format!("set xlabel '{}'\nplot 'census.csv' using 1:(0):2 with labels title ''", names[0])
            } else {
                format!(
                    "set xlabel '{}'\nset ylabel '{}'\nplot 'census.csv' using 1:2:3 with labels font ',6' title ''",
                    names[0], names[1]
                )
            };
            report.files.push(save_gnuplot(&ctx.path("census.gp"), ctx.header, &gp)?);
        }
    }

    if let Some(c) = &sw.continuation {
        if let Some(res) =
            report.attempt("continuation", continue_equilibria(spec, c.parameter, (c.min, c.max), &c.options))
        {
            let p = spec.n_populations();
            let mus: Vec<String> = (1..=p).map(|a| format!("mu_{a}")).collect();
            let columns = format!("param,{},stability", mus.join(","));
            let mut plots = Vec::new();
            for (k, branch) in res.branches.iter().enumerate() {
                let mut csv = Csv::new(&ctx.header.with(format!("parameter: {}", branch.parameter)), &columns);
                for bp in &branch.points {
                    let mut row = vec![num(bp.param)];
                    row.extend(bp.mu.iter().map(|m| num(*m)));
                    row.push(serde_json::to_value(bp.stability)?.as_str().unwrap_or_default().to_string());
                    csv.row(&row);
                }
                let name = format!("branch_{k}.csv");
                report.files.push(csv.save(&ctx.path(&name))?);
                plots.push(format!("'{name}' using 1:2 with lines title 'branch {k}'"));
            }
            if !plots.is_empty() {
                let gp = format!("set xlabel '{}'\nplot {}", c.parameter, plots.join(", \\\n     "));
                report.files.push(save_gnuplot(&ctx.path("branches.gp"), ctx.header, &gp)?);
            }
            bifurcations.extend(res.bifurcations);
        }
    }

    if let Some(c) = &sw.codim2 {
        if let Some(found) = report.attempt("codim2", find_codim2(spec, c.p1, c.p2, &c.search_box, &c.options)) {
            bifurcations.extend(found);
        }
        if let Some(bracket) = c.homoclinic_bracket {
            let est = homoclinic_turning_point(spec, c.p1, c.p2, c.search_box.p1, bracket, &c.homoclinic);
            if let Some(point) = report.attempt("homoclinic turning point", est) {
                bifurcations.push(point);
            }
        }
    }

    if let Some(o) = &sw.onset {
        if let Some((at, periods)) =
            report.attempt("cycle onset", cycle_onset(spec, o.parameter, o.min, o.max, o.tolerance, &cycle))
        {
            let mut csv = Csv::new(ctx.header, "param,period");
            for (x, period) in &periods {
                csv.row(&[num(*x), num(*period)]);
            }
            report.files.push(csv.save(&ctx.path("onset.csv"))?);
            bifurcations.push(onset_point(o.parameter.to_string(), at, o.tolerance, &periods));
        }
    }

    if let Some(pp) = &sw.portrait {
        if let Some(portrait) = report.attempt("portrait", phase_portrait(spec, &pp.bounds, pp.resolution)) {
            report.files.push(save_json(&ctx.path("portrait.json"), &portrait)?);
            let mut csv = Csv::new(ctx.header, "population,x0,y0,x1,y1");
            for nc in &portrait.nullclines {
                for [a, b] in &nc.segments {
                    csv.row(&[(nc.population + 1).to_string(), num(a[0]), num(a[1]), num(b[0]), num(b[1])]);
                }
            }
            report.files.push(csv.save(&ctx.path("nullclines.csv"))?);
            let mut csv = Csv::new(ctx.header, "manifold,kind,x,y");
            for (k, m) in portrait.manifolds.iter().enumerate() {
                let kind = match m.kind {
                    ManifoldKind::Stable => "stable",
                    ManifoldKind::Unstable => "unstable",
                };
                for p in &m.path {
                    csv.row(&[k.to_string(), kind.to_string(), num(p[0]), num(p[1])]);
                }
            }
            report.files.push(csv.save(&ctx.path("manifolds.csv"))?);
            let mut csv = Csv::new(ctx.header, "mu_1,mu_2,stability");
            for e in &portrait.equilibria {
                let stab = serde_json::to_value(e.stability)?;
                csv.row(&[num(e.mu_star[0]), num(e.mu_star[1]), stab.as_str().unwrap_or_default().to_string()]);
            }
            report.files.push(csv.save(&ctx.path("equilibria.csv"))?);
            let gp = "set xlabel 'mu_1'\nset ylabel 'mu_2'\n\
                      plot 'nullclines.csv' using 2:3:($4-$2):($5-$3) with vectors nohead title 'nullclines', \\\n     \
                      'manifolds.csv' using 3:4 with dots title 'manifolds', \\\n     \
                      'equilibria.csv' using 1:2 with points pt 7 title 'equilibria'";
            report.files.push(save_gnuplot(&ctx.path("portrait.gp"), ctx.header, gp)?);
        }
    }

    report.files.push(save_json(&ctx.path("bifurcations.json"), &bifurcations)?);
    Ok(())
}

fn onset_point(parameter: String, at: f64, tolerance: f64, periods: &[(f64, f64)]) -> BifurcationPoint {
    let mut p = BifurcationPoint {
        kind: BifurcationKind::HomoclinicEstimate,
        parameters: [(parameter, at)].into_iter().collect(),
        state: Vec::new(),
        auxiliary: [("tolerance".to_string(), 0.03_f64.max(tolerance))].into_iter().collect(),
    };
    if let Some(&(_, period)) = periods.last() {
        p.auxiliary.insert("last_period".into(), period);
    }
    p
}

#[derive(Serialize)]
struct ConvergePoint {
    n: usize,
    mean_sup: f64,
    standard_error: f64,
}

pub(crate) fn converge(ctx: &Context, report: &mut Report) -> Result<()> {
    let recipe = ctx.recipe;
    let spec = recipe.model()?;
    let sim = recipe.sim()?;
    let sizes = &recipe
        .converge
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("recipe has no `converge` section (or pass --sizes)".into()))?
        .sizes;
    if sizes.is_empty() {
        return Err(Error::InvalidConfig("converge needs at least one network size".into()));
    }
    let init = recipe.init()?;
    let mut points = Vec::new();
    let mut csv = Csv::new(ctx.header, "n,mean_sup,standard_error");
    for &n in sizes {
        let cfg = SimConfig { n_total: n, ..sim.clone() };
        if let Some(run) = report.attempt(&format!("coupled run N={n}"), run_coupled(spec, &cfg, &init)) {
            csv.row(&[n.to_string(), num(run.mean_sup()), num(run.standard_error())]);
            points.push(ConvergePoint { n, mean_sup: run.mean_sup(), standard_error: run.standard_error() });
        }
    }
    report.files.push(csv.save(&ctx.path("converge.csv"))?);
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.mean_sup)).collect();
    let fit = if pairs.len() >= 3 { report.attempt("rate fit", crate::stats::convergence_rate(&pairs)) } else { None };
    report.files.push(save_json(&ctx.path("converge.json"), &json!({ "points": points, "fit": fit }))?);
    let gp =
        "set logscale xy\nset xlabel 'N'\nplot 'converge.csv' using 1:2:3 with yerrorbars title 'mean sup discrepancy'";
    report.files.push(save_gnuplot(&ctx.path("converge.gp"), ctx.header, gp)?);
    Ok(())
}

/// Realization-averaged spectrum of the population-1 mean of the network
/// after the transient, and the spectrum of the moment solution over a window
/// of the same length.
fn spectra_at(
    spec: &ModelSpec,
    recipe: &Recipe,
    sim: &SimConfig,
    sp: &SpectrumSpec,
) -> Result<(SpectrumResult, SpectrumResult, usize)> {
    let cfg = SimConfig { record_mode: RecordMode::PopulationStats, ..sim.clone() };
    let run = run_ensemble(spec, &cfg, &recipe.init()?)?;
    let stats = run.stats.as_ref().expect("population statistics were requested");
    let dt = sim.dt * sim.record_every as f64;
    let skip = stats.times.iter().position(|t| *t >= sp.transient - 1e-9).unwrap_or(stats.times.len());
    let mut net: Option<SpectrumResult> = None;
    for rm in &stats.realization_means {
        let s = power_spectrum(&rm[0][skip..], dt, sp.window)?;
        match &mut net {
            None => net = Some(s),
            Some(acc) => {
                acc.power.iter_mut().zip(&s.power).for_each(|(a, b)| *a += b);
                acc.energy += s.energy;
            }
        }
    }
    let mut net = net.ok_or_else(|| Error::InvalidConfig("no realizations".into()))?;
    let r = stats.realization_means.len() as f64;
    net.power.iter_mut().for_each(|p| *p /= r);
    net.energy /= r;
    // Same window length as the network, after a longer settling time.
    let traj = mean_field_run(spec, recipe, sim.t_end + sp.mf_settle, dt)?;
    let mu = traj.mean_series(0);
    let len = stats.times.len() - skip;
    let mf = power_spectrum(&mu[mu.len().saturating_sub(len)..], dt, sp.window)?;
    Ok((net, mf, run.population_sizes[0]))
}

pub(crate) fn spectrum(ctx: &Context, report: &mut Report) -> Result<()> {
    let recipe = ctx.recipe;
    let base = recipe.model()?;
    let sim = recipe.sim()?;
    let sp = recipe
        .spectrum
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig(format!("recipe `{}` has no `spectrum` section", recipe.name)))?;
    if sp.values.is_empty() {
        return Err(Error::InvalidConfig("spectrum needs at least one parameter value".into()));
    }
    if !(sp.transient >= 0.0 && sp.transient < sim.t_end) {
        return Err(Error::InvalidConfig("spectrum transient must lie in [0, t_end)".into()));
    }
    let mut summary = Csv::new(
        ctx.header,
        "value,net_peak_freq,net_rms,net_threshold,net_oscillating,mf_peak_freq,mf_rms,mf_oscillating,bin_width",
    );
    let mut map = Csv::new(ctx.header, "value,freq,net_power,mf_power");
    let peak = |s: &SpectrumResult| s.dominant_below(sp.max_frequency).map_or(f64::NAN, |(f, _)| f);
    for (k, &x) in sp.values.iter().enumerate() {
        let spec = sp.parameter.apply(base, x);
        let Some((net, mf, n1)) =
            report.attempt(&format!("spectrum {}={x}", sp.parameter), spectra_at(&spec, recipe, sim, sp))
        else {
            continue;
        };
        for (s, tag) in [(&net, "net"), (&mf, "mf")] {
            let mut csv = Csv::new(&ctx.header.with(format!("{} = {}", sp.parameter, num(x))), "freq,power");
            for (f, p) in s.frequencies.iter().zip(&s.power) {
                csv.row(&[num(*f), num(*p)]);
            }
            report.files.push(csv.save(&ctx.path(&format!("spectrum_{tag}_{k:03}.csv")))?);
        }
        for ((f, a), b) in net.frequencies.iter().zip(&net.power).zip(&mf.power) {
            if *f <= sp.max_frequency {
                map.row(&[num(x), num(*f), num(*a), num(*b)]);
            }
        }
        let threshold = sp.noise_multiple * (spec.populations[0].stationary_variance() / n1 as f64).sqrt();
        summary.row(&[
            num(x),
            num(peak(&net)),
            num(net.rms()),
            num(threshold),
            (net.rms() >= threshold).to_string(),
            num(peak(&mf)),
            num(mf.rms()),
            (mf.rms() >= sp.mf_floor).to_string(),
            num(net.bin_width()),
        ]);
    }
    report.files.push(summary.save(&ctx.path("spectrum_summary.csv"))?);
    report.files.push(map.save(&ctx.path("spectrum_map.csv"))?);
    let gp = format!(
        "set xlabel 'frequency'\nset ylabel '{}'\nset logscale cb\n\
         plot 'spectrum_map.csv' using 2:1:3 with image title 'network'",
        sp.parameter
    );
    report.files.push(save_gnuplot(&ctx.path("spectrum.gp"), ctx.header, &gp)?);
    Ok(())
}

#[derive(Serialize)]
struct PairReport {
    pair: String,
    pearson_r: f64,
    report: TestReport,
}

pub(crate) fn validate(ctx: &Context, report: &mut Report) -> Result<()> {
    let recipe = ctx.recipe;
    let spec = recipe.model()?;
    let alpha = recipe.validate.as_ref().map_or(0.05, |v| v.alpha);
    let sim = SimConfig { record_mode: RecordMode::FinalState, ..recipe.sim()?.clone() };
    let run = run_ensemble(spec, &sim, &recipe.init()?)?;
    let traj = moments::integrate(spec, &recipe.init()?.to_moment_state(), &OdeConfig::adaptive(sim.t_end))?;
    let law = traj.last();
    let fs = &run.final_state;
    let sizes = &run.population_sizes;
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    // Neuron `r mod N_α` of realization `r`: one draw per realization, so samples are independent.
    let pick = |a: usize, shift: usize, r: usize| fs.voltages[r][offsets[a] + (r + shift) % sizes[a]];
    let n_real = fs.voltages.len();

    let mut samples = Csv::new(ctx.header, "realization,population,neuron,V");
    let mut ks = Vec::new();
    for a in 0..sizes.len() {
        let xs: Vec<f64> = (0..n_real).map(|r| pick(a, 0, r)).collect();
        for (r, x) in xs.iter().enumerate() {
            samples.row(&[r.to_string(), (a + 1).to_string(), (offsets[a] + r % sizes[a]).to_string(), num(*x)]);
        }
        if let Some(t) = report
            .attempt(&format!("KS population {}", a + 1), ks_gaussian_test(&xs, law.mean[a], law.variance[a], alpha))
        {
            ks.push(json!({ "population": a + 1, "mu": law.mean[a], "v": law.variance[a], "report": t }));
        }
    }
    report.files.push(samples.save(&ctx.path("samples.csv"))?);

    let mut pairs = Vec::new();
    let mut pair = |name: String, x: Vec<f64>, y: Vec<f64>, report: &mut Report| {
        let res = crate::stats::pearson(&x, &y).and_then(|r| Ok((r, independence_test(&x, &y, alpha)?)));
        if let Some((r, t)) = report.attempt(&format!("independence {name}"), res) {
            pairs.push(PairReport { pair: name, pearson_r: r, report: t });
        }
    };
    for a in 0..sizes.len() {
        let x = (0..n_real).map(|r| pick(a, 0, r)).collect();
        let y = (0..n_real).map(|r| pick(a, 1, r)).collect();
        pair(format!("within population {}", a + 1), x, y, report);
    }
    for a in 0..sizes.len() {
        for b in a + 1..sizes.len() {
            let x = (0..n_real).map(|r| pick(a, 0, r)).collect();
            let y = (0..n_real).map(|r| pick(b, 0, r)).collect();
            pair(format!("populations {} and {}", a + 1, b + 1), x, y, report);
        }
    }
    let doc = json!({ "time": fs.time, "alpha": alpha, "gaussianity": ks, "independence": pairs });
    report.files.push(save_json(&ctx.path("validate.json"), &doc)?);
    Ok(())
}

pub(crate) fn bench(ctx: &Context, report: &mut Report) -> Result<()> {
    let recipe = ctx.recipe;
    let spec = recipe.model()?;
    let sim = recipe.sim()?;
    let sizes = &recipe
        .bench
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("recipe has no `bench` section (or pass --sizes)".into()))?
        .sizes;
    if sizes.is_empty() {
        return Err(Error::InvalidConfig("bench needs at least one network size".into()));
    }
    let init = recipe.init()?;
    let mut csv = Csv::new(ctx.header, "n,wall_s,neuron_steps_per_s,ratio");
    let mut previous: Option<f64> = None;
    for &n in sizes {
        let cfg = SimConfig { n_total: n, record_mode: RecordMode::FinalState, ..sim.clone() };
        let start = Instant::now();
        if report.attempt(&format!("bench N={n}"), run_ensemble(spec, &cfg, &init)).is_none() {
            continue;
        }
        let wall = start.elapsed().as_secs_f64();
        let rate = (n * cfg.n_steps() * cfg.n_realizations) as f64 / wall.max(1e-12);
        let ratio = previous.map_or(f64::NAN, |p| wall / p);
        csv.row(&[n.to_string(), num(wall), num(rate), num(ratio)]);
        previous = Some(wall);
    }
    report.files.push(csv.save(&ctx.path("bench.csv"))?);
    let gp = "set logscale xy\nset xlabel 'N'\nplot 'bench.csv' using 1:2 with linespoints title 'wall time (s)'";
    report.files.push(save_gnuplot(&ctx.path("bench.gp"), ctx.header, gp)?);
    Ok(())
}
