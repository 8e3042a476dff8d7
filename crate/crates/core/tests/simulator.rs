use pdmp_harvest::flow::ConstantEffort;
use pdmp_harvest::kernels::{DiscreteLaw, Kernel, KernelSpec};
use pdmp_harvest::model::{JumpRates, Model};
use pdmp_harvest::simulator::{
    replicate_rng, simulate, simulate_from, EventKind, JumpSystem, SimOptions,
};
use pdmp_harvest::solver::policy_from_value;

fn system(lx: f64, lr: f64) -> JumpSystem {
    JumpSystem::new(
        Model::baseline(),
        JumpRates::new(lx, lr).unwrap(),
        Kernel::new(KernelSpec::uniform(0.8, 1.2)).unwrap(),
        Some(Kernel::new(KernelSpec::growth(0.1, DiscreteLaw::symmetric_pair())).unwrap()),
    )
    .unwrap()
}

#[test]
fn clock_gaps_and_thinning() {
    // at carrying capacity with no effort the flow is at rest, so only the clock matters
    let sys = JumpSystem::new(
        Model::baseline(),
        JumpRates::new(1.0, 1.0).unwrap(),
        Kernel::new(KernelSpec::identity()).unwrap(),
        Some(Kernel::new(KernelSpec::identity()).unwrap()),
    )
    .unwrap();
    let opts = SimOptions {
        horizon: 5.0e4,
        dt: 0.5,
        record: false,
    };
    let traj = simulate(&sys, 1.0, 1.0, &ConstantEffort(0.0), opts, 7).unwrap();
    let n = traj.events.len();
    assert!(n > 99_000, "{n} events");
    let times: Vec<f64> = traj.events.iter().map(|e| e.time).collect();
    let mean_gap = (times[n - 1] - 0.0) / n as f64;
    assert!((mean_gap - 0.5).abs() < 0.005, "mean gap {mean_gap}");
    let biomass = traj
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Biomass)
        .count() as f64
        / n as f64;
    assert!((biomass - 0.5).abs() < 0.005, "biomass fraction {biomass}");
}

fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

#[test]
fn restart_at_first_jump_has_same_law() {
    let sys = system(1.0, 0.5);
    let policy = policy_from_value(0.7, &sys.model).unwrap();
    let opts = SimOptions {
        horizon: 3.0,
        dt: 1e-3,
        record: false,
    };
    let reps = 1000u64;
    let straight: Vec<f64> = (0..reps)
        .map(|k| {
            simulate_from(&sys, 0.3, 1.0, 0.0, &policy, opts, &mut replicate_rng(1, k))
                .unwrap()
                .segments
                .last()
                .unwrap()
                .x_end
        })
        .collect();
    let restarted: Vec<f64> = (0..reps)
        .map(|k| {
            let first = simulate_from(&sys, 0.3, 1.0, 0.0, &policy, opts, &mut replicate_rng(2, k))
                .unwrap();
            match first.events.first() {
                None => first.segments.last().unwrap().x_end,
                Some(ev) => {
                    let rest = simulate_from(
                        &sys,
                        ev.x_post,
                        ev.r_post,
                        ev.time,
                        &policy,
                        opts,
                        &mut replicate_rng(3, k),
                    )
                    .unwrap();
                    rest.segments.last().unwrap().x_end
                }
            }
        })
        .collect();
    let d = ks_statistic(straight, restarted);
    let n = reps as f64;
    let critical = 1.628 * ((2.0 * n) / (n * n)).sqrt();
    assert!(d < critical, "KS {d} against {critical}");
}
