//! One function per subcommand. Each writes its data files into `out` and a
//! short line-oriented summary to stdout.

use std::path::Path;

use anyhow::{bail, Result};
use serde_json::json;
use spinfield_core::critical;
use spinfield_core::equilibria::{phase_diagram_scan, solve_fixed_points};
use spinfield_core::fluctuations::{empirical_fluctuations, propagate_joint, relative_frobenius, FluctuationModel};
use spinfield_core::io::{self, fmt_f64, write_json, VERSION};
use spinfield_core::limit::{self, rhs_norm};
use spinfield_core::{oracle, sim, stats, InitialLaw, ModelParams, SimOptions};

use crate::config::{CltConfig, CriticalConfig, CriticalMode, OdeConfig, PhaseConfig, SimulateConfig};

const COORDS: [&str; 6] = ["x", "y", "z", "u", "v", "w"];

/// Rows of a square matrix stored column-major.
fn rows(col_major: &[f64], dim: usize) -> Vec<Vec<f64>> {
    (0..dim).map(|i| (0..dim).map(|j| col_major[i + dim * j]).collect()).collect()
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> Result<()> {
    let p = ModelParams::new(cfg.model.beta, cfg.model.gamma, cfg.model.h, cfg.n)?;
    if cfg.oracle {
        if cfg.n != 2 {
            bail!("the exact oracle needs N = 2, got N = {}", cfg.n);
        }
        let cmp = oracle::compare(&p, cfg.lambda, cfg.t_end, cfg.oracle_replicas, cfg.run.seed)?;
        let tv = cmp.total_variation();
        write_json(
            &out.join("oracle.json"),
            &json!({
                "version": VERSION,
                "params": p,
                "t": cfg.t_end,
                "replicas": cmp.replicas,
                "eta": oracle::ORACLE_ETA,
                "total_variation": tv,
                "max_z": cmp.max_z(),
                "exact": cmp.exact,
                "empirical": cmp.empirical,
            }),
        )?;
        println!("max TV distance: {tv:.6e}");
        println!("max |z| over states: {:.3}", cmp.max_z());
        return Ok(());
    }
    let law = InitialLaw::Product { lambda: cfg.lambda, eta: cfg.eta.clone() };
    let opts = SimOptions { max_events: cfg.max_events };
    let recs = sim::run_replicas(p, &law, cfg.t_end, cfg.sample_dt, cfg.replicas, cfg.run.seed, opts)?;
    for rec in &recs {
        let stem = format!("trajectory_{:04}", rec.stream);
        io::write_moments_csv(&out.join(format!("{stem}.csv")), &rec.sample_times, &rec.moments)?;
        write_json(
            &out.join(format!("{stem}.json")),
            &json!({
                "version": VERSION,
                "params": rec.params,
                "n": rec.params.n,
                "seed": rec.seed,
                "stream": rec.stream,
                "events": rec.events,
                "r0": rec.r0,
            }),
        )?;
    }
    let events: u64 = recs.iter().map(|r| r.events).sum();
    println!("simulated {} replica(s), {events} events", recs.len());
    Ok(())
}

pub fn ode(cfg: &OdeConfig, out: &Path) -> Result<()> {
    let p = ModelParams::limit(cfg.model.beta, cfg.model.gamma, cfg.model.h)?;
    let m0 = cfg.start_moments(&p);
    let path = limit::integrate(&m0, &p, cfg.t_end, cfg.sample_dt, cfg.tolerances)?;
    io::write_moments_csv(&out.join("ode.csv"), &path.times, &path.states)?;
    let last = path.last();
    let residual = rhs_norm(last, &p);
    // distance to the closest equilibrium, when the phase analysis applies
    let nearest = if p.beta > 0.0 && p.gamma > 0.0 && last.eta() == 0.0 {
        let pp = solve_fixed_points(&p)?;
        pp.roots
            .iter()
            .map(|r| (0..7).map(|i| (r.equilibrium.0[i] - last.0[i]).abs()).fold(0.0, f64::max))
            .reduce(f64::min)
    } else {
        None
    };
    write_json(
        &out.join("ode_report.json"),
        &json!({
            "version": VERSION,
            "params": p,
            "tolerances": cfg.tolerances,
            "t_end": path.times.last(),
            "final_state": last.0,
            "stationarity_residual": residual,
            "distance_to_nearest_equilibrium": nearest,
        }),
    )?;
    println!("stationarity residual |V(m(t_end))| = {}", fmt_f64(residual));
    if let Some(d) = nearest {
        println!("distance to nearest equilibrium = {}", fmt_f64(d));
    }
    Ok(())
}

pub fn phase(cfg: &PhaseConfig, out: &Path) -> Result<()> {
    let scan = phase_diagram_scan(cfg.beta, cfg.gamma_range, cfg.h_range, cfg.resolution)?;
    let table: Vec<Vec<String>> = scan
        .points
        .iter()
        .map(|pt| {
            vec![
                fmt_f64(pt.gamma),
                fmt_f64(pt.h),
                pt.phase.map_or_else(|| "NA".into(), |x| x.to_string()),
                fmt_f64(pt.m_star_max),
                fmt_f64(pt.lambda1),
            ]
        })
        .collect();
    io::write_table_csv(&out.join("phase.csv"), &["gamma", "h", "phase", "m_star_max", "lambda1"], &table)?;
    write_json(
        &out.join("curves.json"),
        &json!({
            "version": VERSION,
            "beta": scan.beta,
            "continuous_curve": scan.continuous_curve,
            "fold_curve": scan.fold_curve,
            "tricritical": scan.tricritical,
            "h0_endpoint_gamma": 1.0 / cfg.beta.tanh(),
        }),
    )?;
    let mut counts = [0usize; 3];
    let mut failed = 0;
    for pt in &scan.points {
        match pt.phase {
            Some(k) => counts[usize::from(k.min(2))] += 1,
            None => failed += 1,
        }
    }
    println!("phase counts: 0: {}, 1: {}, 2: {}, failed: {failed}", counts[0], counts[1], counts[2]);
    println!("tricritical point: gamma = {:.6}, h = {:.6}", scan.tricritical.gamma, scan.tricritical.h);
    Ok(())
}

pub fn clt(cfg: &CltConfig, out: &Path) -> Result<()> {
    let p = ModelParams::new(cfg.model.beta, cfg.model.gamma, cfg.model.h, cfg.n)?;
    let law = InitialLaw::product(cfg.lambda);
    let m0 = law.moments();
    let path = limit::integrate(&m0, &p, cfg.t_end, cfg.sample_dt, cfg.tolerances)?;
    let model = FluctuationModel::new(p, &m0)?;
    let joint = propagate_joint(&model, &path)?;
    let blocks: Vec<_> = (0..joint.times.len()).map(|k| joint.x_block(k)).collect();
    io::write_covariance_csv(&out.join("covariance.csv"), &joint.times, &blocks)?;

    let recs = sim::run_replicas(p, &law, cfg.t_end, cfg.sample_dt, cfg.replicas, cfg.run.seed, SimOptions::default())?;
    let mut samples = Vec::with_capacity(recs.len());
    for rec in &recs {
        let f = empirical_fluctuations(rec, &path)?;
        samples.push(f.values.last().expect("nonempty grid")[1..7].to_vec());
    }
    let sc = stats::sample_covariance(&samples);
    let sc6 = spinfield_core::equilibria::Matrix6::from_fn(|i, j| sc[(i, j)]);
    let t_last = *joint.times.last().expect("nonempty grid");
    let target = *blocks.last().expect("nonempty grid");
    io::write_covariance_csv(&out.join("sample_covariance.csv"), &[t_last], &[sc6])?;
    let frob = relative_frobenius(&sc6, &target);
    let mut normality = Vec::new();
    for (k, name) in COORDS.iter().enumerate() {
        let xs: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        let ad = stats::anderson_darling(&xs)?;
        println!("{name}: Anderson-Darling A*2 = {:.4}, p = {:.4}", ad.a2_star, ad.p_value);
        normality.push(json!({ "coordinate": name, "a2_star": ad.a2_star, "p_value": ad.p_value, "rejects_at_1pct": ad.rejects_at_1pct() }));
    }
    write_json(
        &out.join("clt_report.json"),
        &json!({
            "version": VERSION,
            "params": p,
            "coordinates": COORDS,
            "t": t_last,
            "replicas": recs.len(),
            "relative_frobenius": frob,
            "init_covariance": rows(model.init_cov.as_slice(), 7),
            "propagated_covariance": rows(target.as_slice(), 6),
            "sample_covariance": rows(sc6.as_slice(), 6),
            "normality": normality,
        }),
    )?;
    println!("relative Frobenius distance at t = {t_last}: {:.4}", frob);
    Ok(())
}

pub fn critical(cfg: &CriticalConfig, out: &Path) -> Result<()> {
    match cfg.mode {
        CriticalMode::Inhomogeneous => {
            let rep = critical::run_inhomogeneous_critical(&cfg.inhomogeneous)?;
            let mut table = Vec::new();
            for s in &rep.per_n {
                io::write_table_csv(
                    &out.join(format!("replicas_N{}.csv", s.n)),
                    &critical::REPLICA_CSV_HEADER,
                    &critical::replica_rows(s),
                )?;
                println!(
                    "N={}: slope correlation {:.4}, median sup |y|,|z|,|u|,|v|,|w| = {:.4?}",
                    s.n, s.correlation, s.median_sup
                );
                table.push(json!({
                    "n": s.n,
                    "correlation": s.correlation,
                    "median_sup": { "ybar": s.median_sup[0], "zbar": s.median_sup[1], "ubar": s.median_sup[2],
                                    "vbar": s.median_sup[3], "wbar": s.median_sup[4] },
                    "median_abs_slope": s.median_abs_slope,
                    "r_constant": s.replicas.iter().all(|r| r.r_constant),
                }));
            }
            write_json(&out.join("summary.json"), &json!({ "version": VERSION, "params": rep.params, "per_n": table }))?;
        }
        CriticalMode::Homogeneous => {
            let rep = critical::run_homogeneous_critical(&cfg.homogeneous)?;
            let (q2, q4) = critical::quartic_moments(&rep.sde);
            println!("SDE oracle: m2 {:.4}, m4 {:.4}; quadrature: m2 {q2:.4}, m4 {q4:.4}", rep.oracle.m2, rep.oracle.m4);
            let mut table = Vec::new();
            for s in &rep.per_n {
                let rows: Vec<Vec<String>> =
                    s.theta_terminal.iter().enumerate().map(|(i, t)| vec![i.to_string(), fmt_f64(*t)]).collect();
                io::write_table_csv(&out.join(format!("theta_N{}.csv", s.n)), &["replica", "theta"], &rows)?;
                println!(
                    "N={}: m2 {:.4} ({:.1}%), m4 {:.4} ({:.1}%), excess kurtosis {:.3} +- {:.3}",
                    s.n,
                    s.theta.m2,
                    100.0 * s.m2_rel_err,
                    s.theta.m4,
                    100.0 * s.m4_rel_err,
                    s.theta.excess_kurtosis,
                    s.theta.kurtosis_se
                );
                table.push(json!({
                    "n": s.n,
                    "theta": s.theta,
                    "m2_rel_err": s.m2_rel_err,
                    "m4_rel_err": s.m4_rel_err,
                    "median_sup_xi": s.median_sup_xi,
                    "median_sup_zeta": s.median_sup_zeta,
                }));
            }
            write_json(
                &out.join("summary.json"),
                &json!({
                    "version": VERSION,
                    "params": rep.params,
                    "sde": rep.sde,
                    "oracle": rep.oracle,
                    "oracle_aborted": rep.oracle_aborted,
                    "quadrature": { "m2": q2, "m4": q4 },
                    "per_n": table,
                }),
            )?;
        }
    }
    Ok(())
}
