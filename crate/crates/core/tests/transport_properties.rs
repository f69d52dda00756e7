use fracflow::measures::{bl_distance, EmpiricalMeasure, MeasurePath};
use fracflow::specfun::{inverse_moment_coeff, mittag_leffler, FracOrder};
use fracflow::transport::{
    integrate_flow, solve_linear, solve_linear_mc, solve_nonlinear, solve_with_source, AffineField, AffineKernel,
    AffineMap, ConstantField, ExpDecayField, ExplicitField, InteractionKernel, PointwiseVelocity, RepulsionKernel,
    SolverConfig, VelocityField,
};
use proptest::prelude::*;

fn b(beta: f64) -> FracOrder {
    FracOrder::new(beta).unwrap()
}

fn config(beta: f64, q: usize, m: usize) -> SolverConfig {
    let mut c = SolverConfig::uniform(b(beta), 1.0, m);
    c.q_h = q;
    c.q_g = q;
    c
}

fn line(xs: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::on_line(xs, &vec![1.0 / xs.len() as f64; xs.len()]).unwrap()
}

fn reflect(m: &EmpiricalMeasure) -> EmpiricalMeasure {
    m.push_forward(|x, y| y.iter_mut().zip(x).for_each(|(y, x)| *y = -x))
}

/// Classical RK4 on the particle system `ẋ_i = f(t, x)` with a fine fixed step.
fn classical(x0: &[f64], horizon: f64, f: impl Fn(f64, &[f64]) -> Vec<f64>) -> Vec<f64> {
    let n = 4000;
    let h = horizon / n as f64;
    let mut x = x0.to_vec();
    let axpy = |x: &[f64], k: &[f64], a: f64| x.iter().zip(k).map(|(x, k)| x + a * k).collect::<Vec<_>>();
    for j in 0..n {
        let t = j as f64 * h;
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * h, &axpy(&x, &k1, 0.5 * h));
        let k3 = f(t + 0.5 * h, &axpy(&x, &k2, 0.5 * h));
        let k4 = f(t + h, &axpy(&x, &k3, h));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

fn max_gap(a: &[f64], c: &[f64]) -> f64 {
    a.iter().zip(c).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max)
}

#[test]
fn holder_modulus_bounds_increments() {
    for &beta in &[0.3, 0.5, 0.7] {
        for (v, mu) in [
            (vec![1.0], EmpiricalMeasure::dirac(&[0.0], 1.0).unwrap()),
            (
                vec![-0.6, 0.8],
                EmpiricalMeasure::from_points(&[vec![0.0, 0.0], vec![1.0, -1.0]], vec![0.5, 1.5]).unwrap(),
            ),
        ] {
            let field = ConstantField { v };
            let v0 = field.bound();
            let path = solve_linear(&VelocityField::explicit(field), &mu, &config(beta, 32, 10)).unwrap();
            let c = inverse_moment_coeff(b(beta), 1.0).unwrap();
            for (w, ts) in path.measures().windows(2).zip(path.times().windows(2)) {
                let d = bl_distance(&w[0], &w[1]).unwrap();
                let bound = c * v0 * mu.total_mass() * (ts[1] - ts[0]).powf(beta);
                assert!(d <= 1.05 * bound, "β={beta} t={}: {d} > {bound}", ts[1]);
            }
        }
    }
}

#[test]
fn centre_of_mass_is_constant_for_odd_affine_kernels() {
    let mu1 = EmpiricalMeasure::on_line(&[-1.0, 0.2, 1.5], &[0.5, 0.3, 0.2]).unwrap();
    let mu2 = EmpiricalMeasure::from_points(&[vec![0.0, 1.0], vec![2.0, -0.5], vec![-1.0, 0.3]], vec![0.2, 0.5, 0.3])
        .unwrap();
    let spiral = AffineKernel { map: AffineMap::new(vec![-1.0, 0.5, -0.5, -1.0], vec![0.0, 0.0]).unwrap() };
    for (mu, k) in [(mu1, AffineKernel::attraction(1)), (mu2, spiral)] {
        assert!(k.is_odd());
        let cfg = config(0.7, 32, 5);
        let sol = solve_nonlinear(&VelocityField::interaction(k), &mu, &cfg).unwrap();
        let x0 = mu.mean();
        for (t, m) in sol.path.times().iter().zip(sol.path.measures()) {
            let gap = max_gap(&m.mean(), &x0);
            assert!(gap <= cfg.picard_tol + 1e-6, "t={t}: {:?} vs {x0:?}", m.mean());
        }
    }
}

/// The averaged-clock formula with a time-dependent field: for `v = e^{-t}` and
/// `μ_0 = δ_0` the mean is `E[1 − e^{−E_t}] = 1 − ℰ_β(−t^β)`, which differs from
/// the fractional integral `I^β e^{−t}` of the field.
#[test]
fn time_dependent_field_mean_follows_averaged_clock() {
    let mu = EmpiricalMeasure::dirac(&[0.0], 1.0).unwrap();
    let v = VelocityField::explicit(ExpDecayField { rate: 1.0, u: vec![1.0] });
    let path = solve_linear(&v, &mu, &config(0.5, 64, 4)).unwrap();
    for (t, m) in path.times().iter().zip(path.measures()) {
        let want = 1.0 - mittag_leffler(FracOrder::HALF, -t.sqrt()).unwrap();
        assert!((m.expectation(|x| x[0]) - want).abs() < 1e-6, "t={t}");
    }
    // I^{1/2} e^{−t} at t = 1 is e^{−1} erfi(1) ≈ 0.607158.
    let mean = path.measures().last().unwrap().expectation(|x| x[0]);
    assert!((mean - 0.607_158).abs() > 0.03);
}

#[test]
fn classical_order_matches_direct_particle_solver() {
    let xs = [-1.0, 0.25, 2.0];
    let mu = line(&xs);
    let cfg = config(1.0, 64, 4);
    let t_end = 1.0;

    let decay = ExpDecayField { rate: 0.8, u: vec![1.5] };
    let direct = classical(&xs, t_end, |t, x| x.iter().map(|_| 1.5 * (-0.8 * t).exp()).collect());
    let solved = solve_linear(&VelocityField::explicit(decay.clone()), &mu, &cfg).unwrap();
    assert!(max_gap(solved.measures().last().unwrap().points(), &direct) < 1e-9);
    let mc = solve_linear_mc(&VelocityField::explicit(decay), &mu, &cfg, 4).unwrap();
    assert!(max_gap(&mc.path.measures().last().unwrap().points()[..3], &direct) < 1e-9);

    let damping = AffineField::damping(1);
    let direct = classical(&xs, t_end, |_, x| x.iter().map(|x| -x).collect());
    let solved = solve_linear(&VelocityField::explicit(damping), &mu, &cfg).unwrap();
    assert!(max_gap(solved.measures().last().unwrap().points(), &direct) < 1e-9);

    let w = mu.weights().to_vec();
    let repulsion = |_: f64, x: &[f64]| -> Vec<f64> {
        x.iter().map(|xi| x.iter().zip(&w).map(|(xj, wj)| wj * (xi - xj) / (1.0 + (xi - xj).powi(2))).sum()).collect()
    };
    let direct = classical(&xs, t_end, repulsion);
    let kernel = VelocityField::interaction(RepulsionKernel { dim: 1 });
    let solved = solve_nonlinear(&kernel, &mu, &cfg).unwrap();
    assert!(max_gap(solved.path.measures().last().unwrap().points(), &direct) < 1e-9);
    let silent = MeasurePath::constant(&EmpiricalMeasure::empty(1), vec![0.0], FracOrder::ONE).unwrap();
    let with_source = solve_with_source(&kernel, &mu, &silent, &cfg).unwrap();
    assert_eq!(with_source.path, solved.path);
}

#[test]
fn attraction_spread_over_time_follows_mittag_leffler() {
    let mu = line(&[-1.0, 1.0]);
    let cfg = config(0.5, 64, 4);
    let sol = solve_nonlinear(&VelocityField::interaction(AffineKernel::attraction(1)), &mu, &cfg).unwrap();
    for (t, m) in sol.path.times().iter().zip(sol.path.measures()) {
        let spread = m.expectation(|x| x[0].abs());
        let want = mittag_leffler(FracOrder::HALF, -t.sqrt()).unwrap();
        assert!((spread - want).abs() < 1e-5, "t={t}: {spread} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn linear_solver_conserves_mass(
        xs in prop::collection::vec(-3.0..3.0f64, 1..5),
        ws in prop::collection::vec(0.1..3.0f64, 5),
        v0 in -2.0..2.0f64,
        beta in 0.3..0.95f64,
    ) {
        let mu = EmpiricalMeasure::on_line(&xs, &ws[..xs.len()]).unwrap();
        let path = solve_linear(&VelocityField::explicit(ConstantField { v: vec![v0] }), &mu, &config(beta, 16, 4)).unwrap();
        prop_assert!(path.check_mass_conservation(1e-14).is_ok());
    }

    #[test]
    fn linear_stability_under_damping(
        a in -2.0..2.0f64,
        c in -2.0..2.0f64,
        delta in prop::sample::select(vec![0.01, -0.01]),
        beta in 0.3..0.9f64,
    ) {
        let mu1 = line(&[a, c]);
        let mu2 = line(&[a + delta, c + delta]);
        let v = VelocityField::explicit(AffineField::damping(1));
        let lip = v.lipschitz(1.0);
        let cfg = config(beta, 32, 4);
        let (p1, p2) = (solve_linear(&v, &mu1, &cfg).unwrap(), solve_linear(&v, &mu2, &cfg).unwrap());
        let d0 = bl_distance(&mu1, &mu2).unwrap();
        for ((t, m1), m2) in p1.times().iter().zip(p1.measures()).zip(p2.measures()) {
            let bound = lip * mittag_leffler(b(beta), lip * t.powf(beta)).unwrap() * d0;
            let d = bl_distance(m1, m2).unwrap();
            prop_assert!(d <= bound + 1e-9, "t={}: {} > {}", t, d, bound);
        }
    }

    #[test]
    fn symmetric_data_stay_symmetric(x in 0.1..2.0f64, y in 0.1..2.0f64) {
        let mu = line(&[-x, -y, y, x]);
        let v = VelocityField::interaction(RepulsionKernel { dim: 1 });
        let mut cfg = config(0.6, 16, 3);
        cfg.picard_max_iters = 200;
        let sol = solve_nonlinear(&v, &mu, &cfg).unwrap();
        for m in sol.path.measures() {
            prop_assert!(bl_distance(m, &reflect(m)).unwrap() < 1e-6);
        }
    }

    #[test]
    fn flow_displacement_is_bounded_by_speed(
        u in prop::collection::vec(-2.0..2.0f64, 2),
        rate in 0.0..3.0f64,
        x0 in prop::collection::vec(-3.0..3.0f64, 6),
    ) {
        let field = ExpDecayField { rate, u };
        let v0 = field.bound();
        let vel = PointwiseVelocity { dim: 2, lipschitz: 0.0, f: |x: &[f64], s: f64, out: &mut [f64]| field.eval(x, s, out) };
        let mu = EmpiricalMeasure::new(2, x0.clone(), vec![1.0; 3]).unwrap();
        let nodes: Vec<f64> = (0..8).map(|k| 0.25 * k as f64).collect();
        let table = integrate_flow(&vel, &mu, &nodes, 0.01).unwrap();
        prop_assert_eq!(&table.positions[0], &x0);
        for (s, pos) in table.nodes.iter().zip(&table.positions) {
            for (p, q) in pos.chunks(2).zip(x0.chunks(2)) {
                let moved = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                prop_assert!(moved <= v0 * s + 1e-12);
            }
        }
    }
}
