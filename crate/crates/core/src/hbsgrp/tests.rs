use super::*;
use crate::detection::EventKind;
use crate::gev::{gev_sample, link_params};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rec(group: usize, z: f64, cov: &[(&str, f64)]) -> BlockRecord {
    let mut covariates = vec![0.0; COVARIATES.len()];
    for (n, v) in cov {
        covariates[covariate_index(n).unwrap()] = *v;
    }
    BlockRecord {
        kind: EventKind::VehicleVehicle,
        group,
        block: 0,
        z,
        y: 1,
        frame_t: 0.0,
        ego: "a".into(),
        other: "b".into(),
        covariates,
    }
}

fn terms(fixed: &[&str], random: &[&str]) -> ParamTerms {
    ParamTerms {
        fixed: fixed.iter().map(|s| s.to_string()).collect(),
        random: random.iter().map(|s| s.to_string()).collect(),
    }
}

fn grp_spec(k: usize) -> ModelSpec {
    ModelSpec {
        variant: Variant::Hbsgrp,
        location: terms(&["jerk"], &["rel_speed", INTERCEPT]),
        log_scale: terms(&[], &["heading_diff"]),
        shape: terms(&[], &[]),
        groups: k,
    }
}

fn ln_norm(x: f64, m: f64, sd: f64) -> f64 {
    -0.5 * ((x - m) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * PI).ln()
}

#[test]
fn spec_validation() {
    assert!(grp_spec(3).validate().is_ok());
    let mut s = grp_spec(3);
    s.variant = Variant::Hbsfp;
    assert!(matches!(s.validate(), Err(Error::Spec(_))));
    assert!(ModelSpec { variant: Variant::Hbsgrp, ..ModelSpec::intercept_only(2) }.validate().is_err());
    let mut s = ModelSpec::intercept_only(1);
    s.location.fixed.push("no_such".into());
    assert!(s.validate().is_err());
    let mut s = ModelSpec::intercept_only(1);
    s.location.fixed.push(INTERCEPT.into());
    assert!(s.validate().is_err());
    assert!(grp_spec(3).to_fixed().validate().is_ok());
}

#[test]
fn layout_names() {
    let l = Layout::new(&grp_spec(2)).unwrap();
    let names: Vec<&str> = l.names().iter().map(|s| s.as_str()).collect();
    assert_eq!(
        names,
        [
            "mu.jerk",
            "mu.rel_speed.mean",
            "mu.rel_speed[1]",
            "mu.rel_speed[2]",
            "mu.rel_speed.tau2",
            "mu.intercept.mean",
            "mu.intercept[1]",
            "mu.intercept[2]",
            "mu.intercept.tau2",
            "theta.intercept",
            "theta.heading_diff.mean",
            "theta.heading_diff[1]",
            "theta.heading_diff[2]",
            "theta.heading_diff.tau2",
            "xi.intercept",
        ]
    );
    let labels = block_labels(&grp_spec(2)).unwrap();
    assert_eq!(
        labels,
        [
            "mu-fixed",
            "mu-random[1]",
            "mu-random[2]",
            "mu-means",
            "theta-fixed",
            "theta-random[1]",
            "theta-random[2]",
            "theta-means",
            "xi",
            "tau2"
        ]
    );
    // Blocks partition the parameters.
    let model = HbModel::new(&[], &grp_spec(2), &PriorConfig::default()).unwrap();
    let mut all: Vec<usize> = model.blocks().concat();
    all.sort();
    assert_eq!(all, (0..l.dim()).collect::<Vec<_>>());
}

#[test]
fn zero_records_prior_only() {
    let spec = ModelSpec::intercept_only(1);
    let pr = PriorConfig::default();
    let theta = [-1.5, -0.4, -0.2];
    let lp = log_posterior(&theta, &[], &spec, &pr).unwrap();
    let expect: f64 = theta.iter().map(|&v| ln_norm(v, 0.0, 10.0)).sum();
    assert!((lp - expect).abs() < 1e-12);

    let spec = grp_spec(2);
    let model = HbModel::new(&[], &spec, &pr).unwrap();
    let mut theta = vec![0.3; model.layout().dim()];
    let xi = model.layout().index_of("xi.intercept").unwrap();
    theta[xi] = -0.2;
    let parts = model.log_posterior_parts(&theta).unwrap();
    assert_eq!(parts.data, 0.0);
    // Three population variances at 0.3 with IG(0.01, 0.01).
    let ig = |x: f64| 0.01 * 0.01f64.ln() - libm::lgamma(0.01) - 1.01 * x.ln() - 0.01 / x;
    let n_norm = ["mu.jerk", "mu.rel_speed.mean", "mu.intercept.mean", "theta.intercept", "theta.heading_diff.mean"];
    let expect: f64 = n_norm.len() as f64 * ln_norm(0.3, 0.0, 10.0) + ln_norm(-0.2, 0.0, 10.0) + 3.0 * ig(0.3);
    assert!((parts.prior - expect).abs() < 1e-12);
    // Each group coefficient sits at its population mean.
    assert!((parts.process - 6.0 * ln_norm(0.0, 0.0, 0.3f64.sqrt())).abs() < 1e-12);
}

#[test]
fn single_record_composition() {
    let spec = ModelSpec::intercept_only(1);
    let pr = PriorConfig::default();
    let theta = [-1.8, -0.5, -0.3];
    let lp = log_posterior(&theta, &[rec(1, -1.2, &[])], &spec, &pr).unwrap();
    let p = GevParams::new(-1.8, (-0.5f64).exp(), -0.3).unwrap();
    let expect = p.ln_pdf(-1.2) + theta.iter().map(|&v| ln_norm(v, 0.0, 10.0)).sum::<f64>();
    assert!((lp - expect).abs() < 1e-12);
    // Out of support and outside the shape bounds.
    assert_eq!(log_posterior(&theta, &[rec(1, 5.0, &[])], &spec, &pr).unwrap(), f64::NEG_INFINITY);
    assert_eq!(log_posterior(&[-1.8, -0.5, 0.7], &[], &spec, &pr).unwrap(), f64::NEG_INFINITY);
    assert!(matches!(log_posterior(&theta[..2], &[], &spec, &pr), Err(Error::Spec(_))));
    assert!(matches!(log_posterior(&theta, &[rec(2, -1.0, &[])], &spec, &pr), Err(Error::UnknownGroup(2))));
}

fn synthetic(k: usize, n: usize, seed: u64) -> Vec<BlockRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let g = i % k + 1;
            let s: f64 = rng.random_range(-1.5..1.5);
            let h: f64 = rng.random_range(-1.0..1.0);
            let j: f64 = rng.random_range(-1.0..1.0);
            let p = GevParams::new(-1.8 + 0.3 * s * (g as f64 - 1.5) + 0.1 * j, (-0.6 + 0.1 * h).exp(), -0.2).unwrap();
            let z = gev_sample(&p, 1, seed * 1000 + i as u64)[0];
            rec(g, z, &[("rel_speed", s), ("heading_diff", h), ("jerk", j)])
        })
        .collect()
}

#[test]
fn direct_predictor_matches_link() {
    let spec = grp_spec(3);
    let recs = synthetic(3, 60, 1);
    let model = HbModel::new(&recs, &spec, &PriorConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let theta: Vec<f64> = (0..model.layout().dim()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let coeffs = model.layout().coefficients(&theta);
        for r in &recs {
            let a = link_params(&coeffs, r.group, &r.covariates).unwrap();
            let b = model.layout().gev_params(&theta, r.group - 1, &r.covariates);
            assert!((a.mu - b.mu).abs() < 1e-12 && (a.sigma - b.sigma).abs() < 1e-12 && a.xi == b.xi);
        }
    }
}

#[test]
fn record_order_invariance() {
    let spec = grp_spec(3);
    let pr = PriorConfig::default();
    let recs = synthetic(3, 90, 2);
    let model = HbModel::new(&recs, &spec, &pr).unwrap();
    let theta = model.initial_values();
    let mut rev = recs.clone();
    rev.reverse();
    let a = log_posterior(&theta, &recs, &spec, &pr).unwrap();
    let b = log_posterior(&theta, &rev, &spec, &pr).unwrap();
    assert!(a.is_finite());
    assert!((a - b).abs() <= 1e-9 * a.abs());
}

#[test]
fn finite_difference_is_stable() {
    let spec = grp_spec(3);
    let pr = PriorConfig::default();
    let recs = synthetic(3, 90, 3);
    let model = HbModel::new(&recs, &spec, &pr).unwrap();
    let theta = model.initial_values();
    for j in 0..theta.len() {
        let quotient = |h: f64| {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[j] += h;
            b[j] -= h;
            let fa = model.log_posterior_parts(&a).unwrap().total();
            let fb = model.log_posterior_parts(&b).unwrap().total();
            (fa - fb) / (2.0 * h)
        };
        let (g4, g5) = (quotient(1e-4), quotient(1e-5));
        assert!((g4 - g5).abs() <= 1e-4 * g4.abs().max(1.0), "{}: {g4} vs {g5}", model.layout().names()[j]);
    }
}

#[test]
fn fixed_variant_matches_single_group_likelihood() {
    let pr = PriorConfig::default();
    let recs = synthetic(1, 50, 4);
    let fp = ModelSpec { location: terms(&["rel_speed"], &[]), ..ModelSpec::intercept_only(1) };
    let grp = ModelSpec { variant: Variant::Hbsgrp, location: terms(&["rel_speed"], &[INTERCEPT]), ..fp.clone() };
    let m_fp = HbModel::new(&recs, &fp, &pr).unwrap();
    let m_grp = HbModel::new(&recs, &grp, &pr).unwrap();
    // (mu.intercept, mu.rel_speed, theta.intercept, xi.intercept)
    let coef = [-1.7, 0.05, -0.55, -0.25];
    let a = m_fp.log_posterior_parts(&coef).unwrap();
    let l = m_grp.layout();
    let mut th = vec![0.0; l.dim()];
    th[l.index_of("mu.rel_speed").unwrap()] = coef[1];
    th[l.index_of("mu.intercept.mean").unwrap()] = coef[0];
    th[l.index_of("mu.intercept[1]").unwrap()] = coef[0];
    th[l.index_of("mu.intercept.tau2").unwrap()] = 1e-12;
    th[l.index_of("theta.intercept").unwrap()] = coef[2];
    th[l.index_of("xi.intercept").unwrap()] = coef[3];
    let b = m_grp.log_posterior_parts(&th).unwrap();
    assert!((a.data - b.data).abs() < 1e-9);
    // With the group coefficient at its mean, the process layer is the
    // normalising constant alone.
    assert!((b.process - ln_norm(0.0, 0.0, 1e-6)).abs() < 1e-9);
}

#[test]
fn initial_values_in_support() {
    let recs = synthetic(3, 90, 5);
    let model = HbModel::new(&recs, &grp_spec(3), &PriorConfig::default()).unwrap();
    let theta = model.initial_values();
    let l = model.layout();
    assert_eq!(theta[l.index_of("xi.intercept").unwrap()], -0.1);
    let zs: Vec<f64> = recs.iter().map(|r| r.z).collect();
    assert!((theta[l.index_of("mu.intercept[2]").unwrap()] - stats::mean(&zs)).abs() < 1e-12);
    assert!(model.log_posterior_parts(&theta).unwrap().total().is_finite());
    let cfg = McmcConfig { chains: 3, ..Default::default() };
    let inits = model.chain_inits(&cfg).unwrap();
    assert_eq!(inits.len(), 3);
    assert_ne!(inits[1], inits[0]);
}

#[test]
fn fit_is_deterministic_and_reports_natural_scale() {
    let recs = synthetic(2, 80, 6);
    let spec =
        ModelSpec { variant: Variant::Hbsgrp, location: terms(&[], &[INTERCEPT]), ..ModelSpec::intercept_only(2) };
    let model = HbModel::new(&recs, &spec, &PriorConfig::default()).unwrap();
    let cfg = McmcConfig { iterations: 2000, burn_in: 1000, seed: 11, ..Default::default() };
    let a = model.fit(&cfg).unwrap();
    let b = model.fit(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_draws(), 1000);
    let t = a.index_of("mu.intercept.tau2").unwrap();
    assert!(a.pooled(t).iter().all(|v| *v > 0.0));
}

#[test]
fn degenerate_chain_metrics() {
    let recs = synthetic(1, 50, 7);
    let model = HbModel::new(&recs, &ModelSpec::intercept_only(1), &PriorConfig::default()).unwrap();
    let theta = vec![-1.8, -0.6, -0.2];
    let flat: Vec<f64> = (0..10).flat_map(|_| theta.clone()).collect();
    let chain = PosteriorChain {
        names: model.layout().names().to_vec(),
        chains: vec![flat.clone(), flat],
        burn_in: 0,
        thin: 1,
        seed: 0,
        acceptance: vec![],
    };
    let m = fit_metrics(&chain, &model);
    let d = -2.0 * model.log_likelihood(&theta);
    assert!(m.p_dic.abs() < 1e-9);
    assert!((m.dic - d).abs() < 1e-9);
    assert!(m.p_waic.abs() < 1e-12);
    assert!((m.waic - d).abs() < 1e-9 && (m.looic - d).abs() < 1e-9);
    assert_eq!(m.loglik.len(), 20 * 50);
}
