use std::time::Instant;

use pdmp_harvest::analysis::{
    centered_prediction, dual_regularity_check, dual_sensitivity, epsilon_scaling, flip_threshold,
    growth_sensitivity, lambda_sensitivity, regularity_check,
};
use pdmp_harvest::kernels::{DiscreteLaw, Kernel, KernelSpec};
use pdmp_harvest::model::{EconParams, JumpRates, Model};
use pdmp_harvest::solver::{solve_value_1d, solve_value_2d, GridSpec, RGridSpec};

fn identity() -> Kernel {
    Kernel::new(KernelSpec::identity()).unwrap()
}

#[test]
fn smooth_fit_and_kink() {
    let m = Model::baseline();
    let v = solve_value_1d(&m, &identity(), 0.0, &GridSpec::with_spacing(1e-3)).unwrap();
    let rep = regularity_check(&v, &m).unwrap();
    assert!(rep.smooth_fit_error() < 0.05);
    assert!(rep.kink_ordered());
    assert!(rep.sigma_at_star > 0.0);
    let (l, r) = rep.kink_errors();
    assert!(l < 0.1 && r < 0.1, "{l} {r}");
}

#[test]
fn sign_laws_in_the_jump_rate() {
    let m = Model::baseline();
    let grid = GridSpec {
        nodes: 1001,
        ..GridSpec::default()
    };
    let t = Instant::now();
    for mean in [0.5, -0.5] {
        let k = Kernel::new(KernelSpec::centered(
            0.05,
            DiscreteLaw::pair_with_mean(mean),
        ))
        .unwrap();
        let rep = lambda_sensitivity(&m, &k, 0.02 * 0.05, &grid).unwrap();
        eprintln!("mean {mean}: {rep:?}");
        assert_eq!(rep.measured, if mean > 0.0 { 1 } else { -1 });
        assert_eq!(rep.agree, Some(true));
        assert!(rep.rate_small_enough());
    }
    let k = Kernel::new(KernelSpec::centered(0.05, DiscreteLaw::symmetric_pair())).unwrap();
    for e_max in [1.0, 0.4] {
        let mm = m
            .with_econ(EconParams::new(2.0, 1.0, 1.0, 0.05, e_max).unwrap())
            .unwrap();
        let rep = lambda_sensitivity(&mm, &k, 0.02 * 0.05, &grid).unwrap();
        let predicted = centered_prediction(&mm, rep.x_stars[0]);
        eprintln!("e_max {e_max}: threshold {} {rep:?}", flip_threshold(&mm));
        assert_eq!(rep.measured, predicted);
        assert_eq!(rep.prediction, predicted);
    }
    eprintln!("sensitivity: {:?}", t.elapsed());
}

#[test]
fn centered_discriminant_is_second_order() {
    let m = Model::baseline();
    let v = solve_value_1d(&m, &identity(), 0.0, &GridSpec::default()).unwrap();
    let s = epsilon_scaling(&v, &DiscreteLaw::symmetric_pair(), &[0.02, 0.04, 0.08]).unwrap();
    eprintln!("{s:?}");
    assert!((s.log_slope - 2.0).abs() < 0.2);
    let a = epsilon_scaling(&v, &DiscreteLaw::pair_with_mean(0.5), &[0.02, 0.04, 0.08]).unwrap();
    assert!((a.log_slope - 1.0).abs() < 0.2, "{a:?}");
}

#[test]
fn threshold_rises_with_growth_rate() {
    let rep =
        growth_sensitivity(&Model::baseline(), &[0.8, 1.0, 1.2], &GridSpec::default()).unwrap();
    eprintln!("{rep:?}");
    assert!(rep.increasing);
}

#[test]
fn dual_regularity() {
    let m = Model::baseline();
    let none = Kernel::new(KernelSpec::identity()).unwrap();
    let rates = JumpRates::new(0.0, 0.0).unwrap();
    let rg = RGridSpec::default();
    let t = Instant::now();
    let fine_grid = GridSpec {
        ode_step: 2.5e-4,
        ..GridSpec::with_spacing(5e-4)
    };
    let coarse_grid = GridSpec {
        ode_step: 5e-4,
        ..GridSpec::with_spacing(1e-3)
    };
    let fine = solve_value_2d(&m, &none, None, rates, &fine_grid, &rg).unwrap();
    let coarse = solve_value_2d(&m, &none, None, rates, &coarse_grid, &rg).unwrap();
    eprintln!("2-D solves: {:?}", t.elapsed());
    let rep = dual_regularity_check(&fine, &coarse, &m).unwrap();
    for row in rep.rows.iter().step_by(10) {
        eprintln!("{row:?}");
    }
    let worst = rep.rows.iter().map(|r| r.ratio_error()).fold(0.0, f64::max);
    eprintln!("worst ratio error {worst}");
    assert!(rep.rows.iter().all(|r| r.mixed_vanishes()));
    assert!(rep.rows.iter().all(|r| r.signs_ordered()));
    assert!(rep.rows.iter().all(|r| r.linkage_holds()));
    assert!(worst < 0.1);
}

#[test]
fn dual_sensitivity_laws() {
    let m = Model::baseline();
    let kx = Kernel::new(KernelSpec::centered(0.05, DiscreteLaw::pair_with_mean(0.5))).unwrap();
    let grid = GridSpec {
        nodes: 1001,
        ..GridSpec::default()
    };
    let rg = RGridSpec::default();
    let t = Instant::now();
    let mut signs = Vec::new();
    for mean in [0.1, -0.1] {
        let kr = Kernel::new(KernelSpec::growth(0.1, DiscreteLaw::pair_with_mean(mean))).unwrap();
        let rep = dual_sensitivity(&m, &kx, &kr, 0.02 * 0.05, &grid, &rg).unwrap();
        for row in rep.rows.iter().step_by(10) {
            eprintln!("{row:?}");
        }
        assert!(rep.rows.iter().all(|r| r.measured_x() == 1));
        assert!(rep.rows.iter().all(|r| r.estimates_agree()));
        signs.push(rep.rows.iter().map(|r| r.measured_r()).collect::<Vec<_>>());
    }
    eprintln!("dual sensitivity: {:?}", t.elapsed());
    assert_eq!(signs[0], signs[1]);
    assert!(signs[0].iter().all(|&s| s != 0));
}
