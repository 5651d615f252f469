use hilfer_lab::picard_solver::raw_solution;
use hilfer_lab::problem_model::search_delta;
use hilfer_lab::psi_calculus::weighted_norm;
use hilfer_lab::special_functions::{gamma, mittag_leffler, MlfParams};
use hilfer_lab::*;

fn order(alpha: f64, beta: f64) -> FractionalOrder {
    FractionalOrder::new(alpha, beta).unwrap()
}

fn worked() -> DelayFFIDE {
    DelayFFIDE::new(order(0.5, 1.0), PsiFunction::identity(), 1.0, 0.5)
        .with_forcing(|_, u1, u2, u3| 0.05 * (u1 + u2 + u3))
        .with_kernel(|_, _, v1, v2| 0.1 * (v1 + v2))
        .with_delay(|t| t - 0.5)
        .with_history(|_| 1.0)
        .with_initial(1.0)
        .with_lipschitz(0.05, 0.1)
}

fn with_grid(n: usize) -> SolveConfig {
    SolveConfig {
        grid_size: n,
        ..SolveConfig::default()
    }
}

#[test]
fn unit_forcing_follows_power_rule() {
    for beta in [0.0, 0.3, 1.0] {
        let p = DelayFFIDE::new(order(0.5, beta), PsiFunction::identity(), 1.0, 0.5).with_forcing(|_, _, _, _| 1.0);
        let result = solve(&p, &with_grid(1000)).unwrap();
        let gamma_ = p.order.gamma();
        let coeff = 1.0 / gamma(1.5).unwrap();
        let traj = &result.trajectory;
        for (w, &x) in traj.weighted.iter().zip(traj.grid.offsets()) {
            assert!((w - coeff * x.powf(1.5 - gamma_)).abs() < 1e-3, "beta={beta} x={x}");
        }
    }
}

#[test]
fn linear_problem_closed_form() {
    for beta in [0.0, 0.5, 1.0] {
        let p = DelayFFIDE::new(order(0.5, beta), PsiFunction::identity(), 1.0, 0.5)
            .with_forcing(|_, u1, _, _| 0.2 * u1)
            .with_initial(1.0)
            .with_lipschitz(0.2, 0.0);
        let result = solve(&p, &with_grid(1000)).unwrap();
        assert!(result.converged && result.iterations <= 30);
        let params = MlfParams::two(0.5, p.order.gamma());
        let traj = &result.trajectory;
        for (w, &x) in traj.weighted.iter().zip(traj.grid.offsets()) {
            let exact = mittag_leffler(&params, 0.2 * x.sqrt()).unwrap();
            assert!((w - exact).abs() < 1e-3);
        }
    }
}

#[test]
fn weighted_start_is_the_homogeneous_coefficient() {
    let p = DelayFFIDE::new(order(0.4, 0.5), PsiFunction::exponential(), 1.0, 0.5)
        .with_forcing(|_, u1, _, _| 0.1 * u1)
        .with_initial(2.0)
        .with_lipschitz(0.1, 0.0);
    let expected = 2.0 / gamma(p.order.gamma()).unwrap();
    let mut gaps = Vec::new();
    for n in [250, 500, 1000] {
        let result = solve(&p, &with_grid(n)).unwrap();
        let w = &result.trajectory.weighted;
        assert!((w[0] - expected).abs() < 1e-12);
        gaps.push((w[1] - w[0]).abs());
        assert!(raw_solution(&result)[0].is_infinite());
    }
    assert!(gaps[2] < gaps[1] && gaps[1] < gaps[0]);
}

#[test]
fn contraction_rate_respects_theta() {
    let p = worked();
    let result = solve(&p, &with_grid(1000)).unwrap();
    assert!(result.converged && result.iterations <= 25);
    assert!(result.observed_ratio <= check_theta(&p) + 0.05);
    let tail = &result.residual_history[1..];
    assert!(tail.windows(2).all(|w| w[1] < w[0]));
    assert!(!result.outside_guarantee);
    assert_eq!(result.certifying_delta, None);
}

#[test]
fn stopping_norm_does_not_change_the_answer() {
    let p = worked();
    let tol = 1e-10;
    let weighted = solve(&p, &with_grid(400)).unwrap();
    let bielecki = solve(
        &p,
        &SolveConfig {
            norm_kind: NormKind::Bielecki(1.0),
            ..with_grid(400)
        },
    )
    .unwrap();
    let gap = weighted
        .trajectory
        .weighted
        .iter()
        .zip(&bielecki.trajectory.weighted)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap <= 5.0 * tol, "{gap}");
}

#[test]
fn reductions_match_bit_for_bit() {
    let reduced = worked();
    let reduced = DelayFFIDE { h_kernel: None, ..reduced };
    let zero_kernel = worked().with_kernel(|_, _, _, _| 0.0);
    let cfg = with_grid(300);
    let a = solve(&reduced, &cfg).unwrap();
    let b = solve(&zero_kernel, &cfg).unwrap();
    assert_eq!(a.trajectory.weighted, b.trajectory.weighted);
    assert_eq!(a.residual_history, b.residual_history);
}

#[test]
fn large_constants_leave_the_guarantee() {
    let p = worked().with_lipschitz(20.0, 0.1).with_forcing(|_, u1, _, _| 0.01 * u1);
    assert!(check_theta(&p) >= 1.0);
    assert!(search_delta(&p).1 >= 1.0);
    let result = solve(&p, &with_grid(100)).unwrap();
    assert!(result.outside_guarantee);
    assert!(result.converged);
}

#[test]
fn shifted_power_transform_solves() {
    let p = DelayFFIDE::new(order(0.7, 0.2), PsiFunction::shifted_power(1.5), 1.0, 0.3)
        .with_forcing(|t, u1, u2, u3| 0.1 * (u1 + u2.sin() + u3) + t)
        .with_kernel(|t, s, v1, v2| 0.05 * (v1 - v2) * (t - s))
        .with_delay(|t| 0.5 * t - 0.3)
        .with_history(|t| (3.0 * t).cos())
        .with_initial(0.5)
        .with_lipschitz(0.1, 0.05);
    let result = solve(&p, &with_grid(400)).unwrap();
    assert!(result.converged);
    assert!(weighted_norm(&result.trajectory).is_finite());
    assert_eq!(result.trajectory.history_values[0], (3.0 * -0.3f64).cos());
}
