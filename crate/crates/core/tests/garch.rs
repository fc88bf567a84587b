use volcast::garch::{filter, fit, nll, simulate, GarchParams, GarchSpec, Variant, MEAN_ABS_NORMAL};
use volcast::tensor::Rng;

fn true_params() -> GarchParams<f64> {
    GarchParams::garch(0.05, 0.10, 0.85)
}

#[test]
fn mle_recovers_garch_parameters() {
    let p = true_params();
    let spec = GarchSpec::order_one(Variant::Garch);
    let (mut err_a, mut err_b) = (0.0, 0.0);
    let seeds = 4;
    for seed in 0..seeds {
        let (r, _) = simulate(&p, 3000, 1.0, &mut Rng::new(seed)).unwrap();
        let f = fit(&spec, &r, seed).unwrap();
        err_a += (f.params.alpha[0] - 0.10).abs();
        err_b += (f.params.beta[0] - 0.85).abs();
        let at_truth = nll(&p, &r, f.init).unwrap().value;
        assert!(-f.log_likelihood <= at_truth + 1e-9, "seed {seed}");
    }
    assert!(err_a / seeds as f64 <= 0.05);
    assert!(err_b / seeds as f64 <= 0.05);
}

#[test]
fn gjr_without_asymmetry_is_garch() {
    let g = true_params();
    let gjr = GarchParams::with_gamma(Variant::Gjr, 0.05, 0.10, 0.0, 0.85);
    let (r, _) = simulate(&g, 500, 1.0, &mut Rng::new(9)).unwrap();
    let a = filter(&g, &r, 1.0).unwrap();
    let b = filter(&gjr, &r, 1.0).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn egarch_magnitude_term_is_centred_by_sqrt_two_over_pi() {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    assert!((MEAN_ABS_NORMAL - c).abs() < 1e-12);
    let (omega, alpha, gamma, beta) = (-0.1, 0.2, 0.3, 0.9);
    let p = GarchParams::with_gamma(Variant::Egarch, omega, alpha, gamma, beta);
    // A zero presample shock contributes −γ·√(2/π).
    let s1 = omega - gamma * c;
    // A shock of exactly √(2/π) standard deviations cancels the magnitude term.
    let r1 = c * (0.5 * s1).exp();
    let s = filter(&p, &[r1, 0.0], 0.0).unwrap();
    assert!((s[0] - s1).abs() < 1e-12);
    assert!((s[1] - (omega + alpha * c + beta * s1)).abs() < 1e-12);
}

#[test]
fn scaling_shifts_nll_by_n_log_c() {
    let p = true_params();
    let (r, _) = simulate(&p, 800, 1.0, &mut Rng::new(4)).unwrap();
    let c: f64 = 3.0;
    let scaled_r: Vec<f64> = r.iter().map(|x| c * x).collect();
    let scaled = GarchParams::garch(c * c * 0.05, 0.10, 0.85);
    let base = nll(&p, &r, 1.0).unwrap().value;
    let shifted = nll(&scaled, &scaled_r, c * c).unwrap().value;
    assert!((shifted - base - r.len() as f64 * c.ln()).abs() < 1e-8);
}
