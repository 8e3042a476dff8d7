use anyhow::{Context, Result};
use pdmp_harvest::analysis::{
    dual_sensitivity, epsilon_scaling, growth_sensitivity, lambda_sensitivity,
};
use pdmp_harvest::flow::FeedbackLaw;
use pdmp_harvest::kernels::KernelKind;
use pdmp_harvest::simulator::{
    monte_carlo_value, simulate_stream, JumpSystem, SimOptions, Trajectory,
};
use pdmp_harvest::solver::{
    critical_value_1d, policy_from_curve, policy_from_value, solve_value_1d, solve_value_2d,
    ThresholdPolicy, ValueGrid, ValueGrid2D,
};

use crate::config::Resolved;
use crate::output::{ensure_dir, num, CsvOut};

pub enum Solved {
    One(ValueGrid),
    Two(ValueGrid2D),
}

impl Solved {
    pub fn gap_history(&self) -> &[f64] {
        match self {
            Solved::One(v) => &v.gap_history,
            Solved::Two(v) => &v.gap_history,
        }
    }

    pub fn residual(&self) -> f64 {
        match self {
            Solved::One(v) => v.residual,
            Solved::Two(v) => v.residual,
        }
    }

    pub fn value_at(&self, x: f64, r: f64) -> f64 {
        match self {
            Solved::One(v) => v.value_at(x),
            Solved::Two(v) => v.eval(x, r).0,
        }
    }

    pub fn policy(&self, run: &Resolved) -> Result<ThresholdPolicy> {
        Ok(match self {
            Solved::One(v) => policy_from_value(v.x_star, &run.model)?,
            Solved::Two(v) => policy_from_curve(&v.nodes_r, &v.x_star, &run.model)?,
        })
    }
}

/// Solves the configured problem: 1-D unless growth-rate jumps are on.
pub fn solve_model(run: &Resolved) -> Result<Solved> {
    let cfg = &run.config;
    Ok(if run.two_d() {
        Solved::Two(solve_value_2d(
            &run.model,
            &run.biomass_kernel,
            run.growth_kernel.as_ref(),
            cfg.rates,
            &cfg.solver,
            &cfg.r_grid,
        )?)
    } else {
        Solved::One(solve_value_1d(
            &run.model,
            &run.biomass_kernel,
            cfg.rates.lambda_x,
            &cfg.solver,
        )?)
    })
}

pub fn cmd_solve(run: &Resolved) -> Result<()> {
    ensure_dir(&run.output_dir)?;
    let solved = solve_model(run)?;
    let e_max = run.model.econ.e_max;
    match &solved {
        Solved::One(v) => {
            let mut out = CsvOut::create(run, "value.csv", &["x", "V", "V_prime"])?;
            for i in 0..v.nodes.len() {
                out.row([num(v.nodes[i]), num(v.v[i]), num(v.v_prime[i])])?;
            }
            out.finish()?;
            let cv = critical_value_1d(
                v,
                &run.model,
                &run.biomass_kernel,
                run.config.rates.lambda_x,
            )?;
            let mut out = CsvOut::create(
                run,
                "xstar.csv",
                &[
                    "x_star",
                    "singular_effort",
                    "residual",
                    "iterations",
                    "switch_roots",
                    "conditions_agree",
                ],
            )?;
            out.row([
                num(v.x_star),
                num(run.model.singular_effort(v.x_star, run.model.bio.r)),
                num(v.residual),
                v.iterations.to_string(),
                v.switch_roots.len().to_string(),
                cv.agree.to_string(),
            ])?;
            out.finish()?;
            let mut out = CsvOut::create(run, "policy.csv", &["region", "x_lo", "x_hi", "effort"])?;
            let (lo, hi) = (v.nodes[0], *v.nodes.last().unwrap());
            let es = run.model.singular_effort(v.x_star, run.model.bio.r);
            out.row(["below".into(), num(lo), num(v.x_star), num(0.0)])?;
            out.row(["arc".into(), num(v.x_star), num(v.x_star), num(es)])?;
            out.row(["above".into(), num(v.x_star), num(hi), num(e_max)])?;
            out.finish()?;
        }
        Solved::Two(v) => {
            let mut out = CsvOut::create(run, "value2d.csv", &["x", "r", "V", "V_x"])?;
            for (j, &r) in v.nodes_r.iter().enumerate() {
                for (i, &x) in v.nodes_x.iter().enumerate() {
                    out.row([num(x), num(r), num(v.v[j][i]), num(v.v_x[j][i])])?;
                }
            }
            out.finish()?;
            let mut out =
                CsvOut::create(run, "xstar_curve.csv", &["r", "x_star", "singular_effort"])?;
            for (&r, &x) in v.nodes_r.iter().zip(&v.x_star) {
                out.row([num(r), num(x), num(run.model.singular_effort(x, r))])?;
            }
            out.finish()?;
        }
    }
    let mut out = CsvOut::create(run, "residual.csv", &["iteration", "gap", "final_residual"])?;
    for (k, g) in solved.gap_history().iter().enumerate() {
        out.row([(k + 1).to_string(), num(*g), num(solved.residual())])?;
    }
    out.finish()?;
    Ok(())
}

fn trajectory_rows(out: &mut CsvOut, traj: &Trajectory, policy: &ThresholdPolicy) -> Result<()> {
    for (s, seg) in traj.segments.iter().enumerate() {
        let level = policy.switch_level(seg.r).unwrap_or(f64::NAN);
        for (i, p) in seg.samples.iter().enumerate() {
            let flag = u8::from(s > 0 && i == 0);
            out.row([
                num(p.t),
                num(p.x),
                num(seg.r),
                num(p.effort),
                flag.to_string(),
                num(level),
            ])?;
        }
    }
    Ok(())
}

pub fn cmd_simulate(run: &Resolved) -> Result<()> {
    ensure_dir(&run.output_dir)?;
    let solved = solve_model(run)?;
    let policy = solved.policy(run)?;
    let cfg = &run.config;
    let sys = JumpSystem::new(
        run.model.clone(),
        cfg.rates,
        run.biomass_kernel.clone(),
        run.growth_kernel.clone(),
    )?;
    let opts = SimOptions {
        horizon: run.horizon(),
        dt: cfg.simulate.dt,
        record: true,
    };
    let (x0, r0) = (cfg.simulate.x0, run.r0());
    for k in 0..cfg.simulate.trajectories {
        let traj = simulate_stream(&sys, x0, r0, &policy, opts, run.seed(), k as u64)?;
        let mut out = CsvOut::create(
            run,
            &format!("trajectory_{k}.csv"),
            &[
                "time",
                "biomass",
                "growth_rate",
                "effort",
                "event_flag",
                "x_star_level",
            ],
        )?;
        trajectory_rows(&mut out, &traj, &policy)?;
        out.finish()?;
    }
    let est = monte_carlo_value(
        &sys,
        x0,
        r0,
        &policy,
        opts,
        cfg.simulate.replicates,
        run.seed(),
    )
    .context("Monte Carlo estimate failed")?;
    let v0 = solved.value_at(x0, r0);
    let mut out = CsvOut::create(
        run,
        "mc_summary.csv",
        &[
            "x0",
            "r0",
            "replicates",
            "horizon",
            "mean",
            "ci_half_width",
            "std_dev",
            "truncation_bound",
            "solver_value",
            "abs_diff",
        ],
    )?;
    out.row([
        num(x0),
        num(r0),
        est.n.to_string(),
        num(opts.horizon),
        num(est.mean),
        num(est.half_width),
        num(est.std_dev),
        num(est.truncation_bound),
        num(v0),
        num((est.mean - v0).abs()),
    ])?;
    out.finish()?;
    Ok(())
}

pub fn cmd_sensitivity(run: &Resolved) -> Result<()> {
    ensure_dir(&run.output_dir)?;
    let cfg = &run.config;
    let lambda1 = run.lambda1();
    let rep = lambda_sensitivity(&run.model, &run.biomass_kernel, lambda1, &cfg.solver)?;
    let mut out = CsvOut::create(run, "lambda_ladder.csv", &["lambda", "x_star"])?;
    for (l, x) in rep.lambdas.iter().zip(&rep.x_stars) {
        out.row([num(*l), num(*x)])?;
    }
    out.finish()?;
    let mut out = CsvOut::create(run, "sensitivity.csv", &["quantity", "value"])?;
    let rows = [
        ("slope_at_zero", num(rep.slope_at_zero)),
        ("slope_half_step", num(rep.slope_half_step)),
        ("slope_noise", num(rep.slope_noise)),
        ("discriminant", num(rep.discriminant)),
        ("discriminant_fd", num(rep.discriminant_fd)),
        ("prediction", rep.prediction.to_string()),
        ("measured", rep.measured.to_string()),
        (
            "agree",
            rep.agree.map_or("unresolved".into(), |a| a.to_string()),
        ),
        ("rate_small_enough", rep.rate_small_enough().to_string()),
    ];
    for (k, v) in rows {
        out.row([k.to_string(), v])?;
    }
    out.finish()?;

    let growth = growth_sensitivity(&run.model, &cfg.sensitivity.r_sweep, &cfg.solver)?;
    let mut out = CsvOut::create(run, "growth_sweep.csv", &["r", "x_star"])?;
    for (r, x) in growth.r.iter().zip(&growth.x_star) {
        out.row([num(*r), num(*x)])?;
    }
    out.finish()?;

    if let KernelKind::CenteredMultiplicative { law, .. } = &run.biomass_kernel.spec().kind {
        let base = solve_value_1d(&run.model, &run.biomass_kernel, 0.0, &cfg.solver)?;
        let s = epsilon_scaling(&base, law, &cfg.sensitivity.epsilons)?;
        let mut out = CsvOut::create(
            run,
            "epsilon_scaling.csv",
            &["epsilon", "discriminant", "log_slope"],
        )?;
        for (e, d) in s.epsilons.iter().zip(&s.discriminants) {
            out.row([num(*e), num(*d), num(s.log_slope)])?;
        }
        out.finish()?;
    }

    if let Some(gk) = &run.growth_kernel {
        let rep = dual_sensitivity(
            &run.model,
            &run.biomass_kernel,
            gk,
            lambda1,
            &cfg.solver,
            &cfg.r_grid,
        )?;
        let mut out = CsvOut::create(
            run,
            "dual_sensitivity.csv",
            &[
                "r", "x_star", "effort", "slope_x", "noise_x", "disc_x", "slope_r", "noise_r",
                "disc_r",
            ],
        )?;
        for row in &rep.rows {
            out.row([
                num(row.r),
                num(row.x_star),
                num(row.effort),
                num(row.slope_x),
                num(row.noise_x),
                num(row.disc_x),
                num(row.slope_r),
                num(row.noise_r),
                num(row.disc_r),
            ])?;
        }
        out.finish()?;
    }
    Ok(())
}
