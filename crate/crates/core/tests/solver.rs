use pdmp_harvest::kernels::{DiscreteLaw, Kernel, KernelSpec};
use pdmp_harvest::model::{EconParams, Model};
use pdmp_harvest::solver::{critical_value_1d, solve_value_1d, GridSpec};

fn uniform() -> Kernel {
    Kernel::new(KernelSpec::uniform(0.8, 1.2)).unwrap()
}

#[test]
fn uniform_kernel_default_grid() {
    let m = Model::baseline();
    let t = std::time::Instant::now();
    let v = solve_value_1d(&m, &uniform(), 0.1, &GridSpec::default()).unwrap();
    eprintln!("solve: {:?}, {} iterations", t.elapsed(), v.iterations);
    assert_eq!(v.nodes.len(), 2001);
    assert!(v.residual < 1e-8, "residual {}", v.residual);
    assert!(v.v.windows(2).all(|w| w[1] >= w[0]));
    let kappa = 0.1 / 0.15;
    let ratios = v.contraction_ratios(1e-9);
    assert!(ratios[2..].iter().all(|&q| q <= kappa + 0.05), "{ratios:?}");
    let cv = critical_value_1d(&v, &m, &uniform(), 0.1).unwrap();
    assert!(cv.agree, "{cv:?}");
    assert!((cv.x_star - v.x_star).abs() < 1e-8);
}

#[test]
fn value_is_continuous_with_matching_slope_at_threshold() {
    let m = Model::baseline();
    let v = solve_value_1d(&m, &uniform(), 0.1, &GridSpec::default()).unwrap();
    let xs = v.x_star;
    let h = 1e-7;
    let (l, r) = (v.slope_at(xs - h), v.slope_at(xs + h));
    assert!((l - r).abs() < 1e-6);
    assert!((v.slope_at(xs) - m.margin_eval(xs).unwrap().m).abs() < 1e-10);
}

#[test]
fn price_scaling_with_zero_cost() {
    // with c = 0 the value is linear in p and the threshold does not move
    let k = Kernel::new(KernelSpec::centered(0.1, DiscreteLaw::symmetric_pair())).unwrap();
    let grid = GridSpec {
        nodes: 401,
        ..GridSpec::default()
    };
    let solve = |p: f64| {
        let m = Model::baseline()
            .with_econ(EconParams::new(p, 1.0, 0.0, 0.05, 1.0).unwrap())
            .unwrap();
        solve_value_1d(&m, &k, 0.2, &grid).unwrap()
    };
    let (a, b) = (solve(1.0), solve(3.0));
    assert!((a.x_star - b.x_star).abs() < 1e-10);
    for (x, y) in a.v.iter().zip(&b.v) {
        assert!((3.0 * x - y).abs() < 1e-9 * y.abs().max(1.0));
    }
}
