use rand::Rng;
use rand_distr::StandardNormal;
use uavloc::defense::folded_abs_error_cdf;
use uavloc::rng::stream;

/// Empirical CDF of |E| from 10^6 draws against the closed form.
fn sup_distance(mu: f64, sigma: f64, seed: u64) -> f64 {
    let mut rng = stream(seed, &[]);
    let mut xs: Vec<f64> = (0..1_000_000).map(|_| (mu + sigma * rng.sample::<f64, _>(StandardNormal)).abs()).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = folded_abs_error_cdf(x, mu, sigma).unwrap();
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn matches_empirical_cdf() {
    for (k, &(mu, sigma)) in [(0.0, 1.0), (1.5, 0.7), (-3.0, 2.0)].iter().enumerate() {
        let d = sup_distance(mu, sigma, k as u64);
        assert!(d < 2e-3, "sup distance {d} for mu={mu} sigma={sigma}");
    }
}

#[test]
fn central_quantile() {
    for sigma in [0.1, 1.0, 7.5] {
        let p = folded_abs_error_cdf(1.96 * sigma, 0.0, sigma).unwrap();
        assert!((p - 0.95).abs() < 1e-3, "{p}");
    }
}

#[test]
fn monotone_and_bounded() {
    let mut last = 0.0;
    for i in 0..2000 {
        let p = folded_abs_error_cdf(i as f64 * 0.01, 0.8, 1.3).unwrap();
        assert!((0.0..=1.0).contains(&p) && p >= last);
        last = p;
    }
}
