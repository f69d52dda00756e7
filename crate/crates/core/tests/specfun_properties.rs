use fracflow::integrate::gauss_legendre;
use fracflow::specfun::{
    h_quadrature, inverse_moment_coeff, inverse_subordinator_density, mittag_leffler, subordinator_density, FracOrder,
};
use proptest::prelude::*;

const BETAS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
const TIMES: [f64; 3] = [0.5, 1.0, 2.0];

fn b(beta: f64) -> FracOrder {
    FracOrder::new(beta).unwrap()
}

/// Composite 30-point Gauss–Legendre nodes and weights on the given breakpoints.
fn composite(breaks: &[f64]) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(30);
    breaks
        .windows(2)
        .flat_map(|p| {
            let (h, m) = (0.5 * (p[1] - p[0]), 0.5 * (p[0] + p[1]));
            x.iter().zip(&w).map(move |(x, w)| (m + h * x, h * w)).collect::<Vec<_>>()
        })
        .collect()
}

/// Breakpoints for `s ↦ h_β(s, t)`: the law of `E_t` scales like `t^β` and its
/// upper tail decays like `exp(-c s^{1/(1-β)})`.
fn h_breaks(beta: f64, t: f64) -> Vec<f64> {
    let scale = t.powf(beta);
    let mut v = vec![0.0];
    let mut s = 0.05;
    while s < 80.0 {
        v.push(s * scale);
        s *= 1.5;
    }
    v
}

fn h(beta: f64, s: f64, t: f64) -> f64 {
    inverse_subordinator_density(b(beta), s, t).unwrap()
}

/// `∫ f(s) h_β(s, t) ds` for each `f`, sharing the density evaluations.
fn against_h(beta: f64, t: f64, fs: &[&dyn Fn(f64) -> f64]) -> Vec<f64> {
    let rule: Vec<(f64, f64)> =
        composite(&h_breaks(beta, t)).into_iter().map(|(s, w)| (s, w * h(beta, s, t))).collect();
    fs.iter().map(|f| rule.iter().map(|(s, w)| w * f(*s)).sum()).collect()
}

#[test]
fn clock_law_mass_moments_and_laplace_transform() {
    let lambdas = [-1.0, -0.5, 0.5, 1.0];
    for &beta in &BETAS {
        for &t in &TIMES {
            let mut fs: Vec<Box<dyn Fn(f64) -> f64>> =
                vec![Box::new(|_| 1.0), Box::new(|s: f64| s), Box::new(|s: f64| s * s)];
            fs.extend(lambdas.iter().map(|&l| Box::new(move |s: f64| (l * s).exp()) as Box<dyn Fn(f64) -> f64>));
            let refs: Vec<&dyn Fn(f64) -> f64> = fs.iter().map(|f| f.as_ref()).collect();
            let got = against_h(beta, t, &refs);
            assert!((got[0] - 1.0).abs() < 1e-6, "mass β={beta} t={t}: {}", got[0]);
            for (k, gamma) in [1.0, 2.0].into_iter().enumerate() {
                let want = inverse_moment_coeff(b(beta), gamma).unwrap() * t.powf(gamma * beta);
                let rel = got[1 + k] / want - 1.0;
                assert!(rel.abs() < 1e-5, "β={beta} t={t} γ={gamma}: {} vs {want}", got[1 + k]);
            }
            for (k, lam) in lambdas.iter().enumerate() {
                let want = mittag_leffler(b(beta), lam * t.powf(beta)).unwrap();
                let rel = got[3 + k] / want - 1.0;
                assert!(rel.abs() < 1e-5, "β={beta} t={t} λ={lam}: {} vs {want}", got[3 + k]);
            }
        }
    }
}

#[test]
fn subordinator_density_is_normalized() {
    // g has a power tail: integrate in y = ln s and add the asymptotic remainder t·X^{-β}/Γ(1-β).
    let mut breaks: Vec<f64> = (0..30).map(|k| -40.0 + k as f64).collect();
    breaks.extend((0..60).map(|k| -10.0 + 0.5 * k as f64));
    breaks.extend((0..=32).map(|k| 20.0 + 5.0 * k as f64));
    let rule = composite(&breaks);
    for &beta in &BETAS {
        for &t in &TIMES {
            let body: f64 =
                rule.iter().map(|(y, w)| w * subordinator_density(b(beta), y.exp(), t).unwrap() * y.exp()).sum();
            let remainder = t * (180f64).exp().powf(-beta) / libm::tgamma(1.0 - beta);
            let mass = body + remainder;
            assert!((mass - 1.0).abs() < 1e-6, "g β={beta} t={t}: {mass}");
        }
    }
}

#[test]
fn clock_density_tail_decays_superpolynomially() {
    for &beta in &BETAS {
        // Start past the mode of h_β(·, 1), which lies below 1.5 for every β.
        let mut r = 1.5;
        let mut last = f64::INFINITY;
        let mut ratio = f64::INFINITY;
        while r < 6.0 {
            let (a, c) = (h(beta, r, 1.0), h(beta, 2.0 * r, 1.0));
            if c == 0.0 {
                ratio = 0.0;
                break;
            }
            ratio = c / a;
            assert!(ratio < last, "β={beta} r={r}: ratio {ratio} did not decrease");
            last = ratio;
            r *= 1.25;
        }
        assert!(ratio < 1e-3, "β={beta}: final ratio {ratio}");
    }
}

#[test]
fn first_moment_of_rule_tracks_eps_tail() {
    for &beta in &BETAS {
        for &eps in &[1e-5, 1e-7] {
            let r = h_quadrature(b(beta), 1.0, 64, eps).unwrap();
            let want = inverse_moment_coeff(b(beta), 1.0).unwrap();
            let got = r.apply(|s| s);
            assert!((got / want - 1.0).abs() <= 10.0 * eps, "β={beta} eps={eps}: {got} vs {want}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn clock_density_is_self_similar(beta in 0.2..0.95f64, s in 0.01..4.0f64, t in 0.2..5.0f64, c in 0.3..3.0f64) {
        // h(s, ct) = c^{-β} h(c^{-β} s, t)
        let lhs = h(beta, s, c * t);
        let rhs = c.powf(-beta) * h(beta, c.powf(-beta) * s, t);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-300) + 1e-300, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn rule_nodes_scale_with_time(beta in 0.2..0.95f64, t in 0.1..8.0f64) {
        let unit = h_quadrature(b(beta), 1.0, 32, 1e-6).unwrap();
        let r = h_quadrature(b(beta), t, 32, 1e-6).unwrap();
        prop_assert_eq!(&unit.weights, &r.weights);
        let scale = t.powf(beta);
        for (a, c) in unit.nodes.iter().zip(&r.nodes) {
            prop_assert!((a * scale - c).abs() <= 1e-14 * c.abs());
        }
    }

    #[test]
    fn mittag_leffler_is_monotone_on_the_negative_axis(beta in 0.1..1.0f64, z in -20.0..-0.01f64) {
        let a = mittag_leffler(b(beta), z).unwrap();
        let c = mittag_leffler(b(beta), 1.01 * z).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(c <= a + 1e-15);
    }
}
