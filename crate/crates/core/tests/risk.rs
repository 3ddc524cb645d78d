use corisk_core::gev::GevParams;
use corisk_core::risk::{
    exceedance_prob, group_cor, posterior_bands, roc_auc, threshold_sweep, total_cf, CORConfig, GroupCor, SummaryMode,
    DEFAULT_OMEGA_GRID,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_params(rng: &mut ChaCha8Rng) -> GevParams {
    GevParams::new(rng.random_range(-2.5..0.0), rng.random_range(0.1..1.5), rng.random_range(-0.9..0.4)).unwrap()
}

fn cfg(omega: f64, exposure: f64) -> CORConfig {
    CORConfig { omega, exposure, mode: SummaryMode::PlugIn }
}

#[test]
fn exceedance_is_cdf_complement() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let p = random_params(&mut rng);
        let w: f64 = rng.random_range(-1.5..-0.05);
        let direct = 1.0 - corisk_core::gev::gev_cdf(w, &p).unwrap();
        assert!((exceedance_prob(&p, w).unwrap() - direct).abs() <= 1e-12);
    }
}

#[test]
fn group_cor_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let blocks: Vec<(usize, GevParams)> = (0..100).map(|_| (rng.random_range(1..6), random_params(&mut rng))).collect();
    let c = cfg(-0.5, 3600.0);
    let g = group_cor(3, &blocks, &c).unwrap();
    let mut acc = 0.0;
    for (y, p) in &blocks {
        acc += *y as f64 * (1.0 - p.cdf(-0.5));
    }
    assert!((g.cor - acc / 3600.0).abs() <= 1e-12);
}

#[test]
fn total_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = cfg(-0.4, 900.0);
    let mut groups = Vec::new();
    let mut flat = 0.0;
    for k in 1..=8 {
        let blocks: Vec<(usize, GevParams)> =
            (0..rng.random_range(1..40)).map(|_| (rng.random_range(1..4), random_params(&mut rng))).collect();
        for (y, p) in &blocks {
            flat += *y as f64 * exceedance_prob(p, c.omega).unwrap() / c.exposure;
        }
        groups.push(group_cor(k, &blocks, &c).unwrap());
    }
    let cf = total_cf(&groups);
    assert!((cf.total - flat).abs() <= 1e-9);
    assert!((cf.total - cf.per_group.iter().map(|g| g.1).sum::<f64>()).abs() <= 1e-9);
}

fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let (mut n1, mut n0) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            n1 += 1.0;
        } else {
            n0 += 1.0;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if !lj {
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / (n1 * n0)
}

#[test]
fn auc_equals_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        // Coarse scores force many ties.
        let scores: Vec<f64> = (0..500).map(|_| (rng.random_range(0..40) as f64) / 40.0).collect();
        let labels: Vec<bool> = scores.iter().map(|s| rng.random_bool(0.2 + 0.6 * s)).collect();
        assert_eq!(roc_auc(&scores, &labels).unwrap().auc, pair_count_auc(&scores, &labels));
    }
}

#[test]
fn plug_in_inside_posterior_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let nm = Normal::new(0.0, 1.0).unwrap();
    let centres: Vec<(f64, f64, f64)> = (0..20)
        .map(|_| (rng.random_range(-2.0..-0.8), rng.random_range(-1.2..-0.3), rng.random_range(-0.4..-0.1)))
        .collect();
    let draws = 2000;
    let mut matrix = Vec::with_capacity(draws * centres.len());
    let mut means = vec![(0.0, 0.0, 0.0); centres.len()];
    for _ in 0..draws {
        for (j, &(m, t, x)) in centres.iter().enumerate() {
            let d = (m + 0.05 * nm.sample(&mut rng), t + 0.05 * nm.sample(&mut rng), x + 0.02 * nm.sample(&mut rng));
            means[j].0 += d.0 / draws as f64;
            means[j].1 += d.1 / draws as f64;
            means[j].2 += d.2 / draws as f64;
            matrix.push(exceedance_prob(&GevParams::new(d.0, d.1.exp(), d.2).unwrap(), -0.5).unwrap());
        }
    }
    let bands = posterior_bands(&matrix, centres.len());
    for (b, &(m, t, x)) in bands.iter().zip(&means) {
        let plug = exceedance_prob(&GevParams::new(m, t.exp(), x).unwrap(), -0.5).unwrap();
        assert!(b.q025 <= plug && plug <= b.q975, "{b:?} vs {plug}");
    }
}

/// Blocks whose location shifts with a covariate of strength `signal`;
/// scores are the true exceedance probabilities.
fn signal_aucs(signal: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 3000;
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let us: Vec<f64> = (0..n).map(|_| rng.random_range(1e-12..1.0)).collect();
    let params: Vec<GevParams> = xs.iter().map(|x| GevParams::new(-1.2 + signal * x, 0.35, -0.2).unwrap()).collect();
    let ttc: Vec<f64> = params.iter().zip(&us).map(|(p, u)| -p.quantile(*u)).collect();
    let rows =
        threshold_sweep(&DEFAULT_OMEGA_GRID, &ttc, |w| params.iter().map(|p| exceedance_prob(p, w)).collect()).unwrap();
    rows.iter().map(|r| r.auc.expect("both classes present")).collect()
}

#[test]
fn sweep_tracks_injected_signal() {
    let levels: Vec<Vec<f64>> = [0.1, 0.3, 0.6].iter().map(|&s| signal_aucs(s)).collect();
    for i in 0..DEFAULT_OMEGA_GRID.len() {
        assert!(levels[0][i] > 0.5);
        assert!(levels[0][i] < levels[1][i] && levels[1][i] < levels[2][i], "omega {}", DEFAULT_OMEGA_GRID[i]);
    }
}

proptest! {
    #[test]
    fn exceedance_grows_with_threshold_magnitude(m in -2.5..0.0f64, s in 0.1..1.5f64, x in -0.9..0.4f64, w in 0.05..1.0f64, d in 0.0..1.0f64) {
        let p = GevParams::new(m, s, x).unwrap();
        prop_assert!(exceedance_prob(&p, -w).unwrap() <= exceedance_prob(&p, -(w + d)).unwrap());
    }

    #[test]
    fn cor_is_linear_in_counts(ys in prop::collection::vec(1usize..20, 1..30), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<(usize, GevParams)> = ys.iter().map(|&y| (y, random_params(&mut rng))).collect();
        let doubled: Vec<(usize, GevParams)> = blocks.iter().map(|&(y, p)| (2 * y, p)).collect();
        let c = cfg(-0.6, 120.0);
        let a: GroupCor = group_cor(1, &blocks, &c).unwrap();
        let b = group_cor(1, &doubled, &c).unwrap();
        prop_assert_eq!(b.cor, 2.0 * a.cor);
    }

    #[test]
    fn auc_invariant_under_monotone_transform(v in prop::collection::vec((0.0..1.0f64, any::<bool>()), 2..100)) {
        let scores: Vec<f64> = v.iter().map(|p| (p.0 * 20.0).round() / 20.0).collect();
        let labels: Vec<bool> = v.iter().map(|p| p.1).collect();
        prop_assume!(labels.iter().any(|l| *l) && labels.iter().any(|l| !*l));
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap().auc, roc_auc(&transformed, &labels).unwrap().auc);
    }
}
