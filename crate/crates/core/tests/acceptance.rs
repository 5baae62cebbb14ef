//! Acceptance suite: one line per criterion, run with
//! `cargo test -p esip-core --test acceptance`.
//!
//! Every criterion runs at its stated tolerance. The process exits nonzero on
//! a failure only when `ESIP_ACCEPTANCE_STRICT` is set.

use std::time::Instant;

use num_rational::Ratio;
use num_traits::Zero;

use esip_core::data_io::{ball_observations, fit_beta_mle_with, BallSubset, SupportRule, BALL_SUPPORT};
use esip_core::experiments::{
    convergence_sweep, expdecay_reference, expdecay_study_config, run_accept_reject_study, run_calibration,
    variance_slope_study, AcceptRejectSpec, PriorSpec, StudyConfig, EXPDECAY_GRID,
};
use esip_core::models::QoiModel;
use esip_core::oracles::{
    discrete_entropy_exact, discrete_posterior, parity_informed_prior, parity_observed, parity_uniform_prior,
    DiscreteSip, ExpDecayOracle, Rational,
};
use esip_core::output_measure::{default_kde_bandwidth, kde_cell_probs, PartitionD};
use esip_core::posterior::{compute_weights, event_probability, pushforward_check, sample_heatmap, tv_distance};
use esip_core::random::{sample_beta, sample_uniform_box, RandomStream};
use esip_core::special::beta_pdf;
use esip_core::{BoxEvent, ObservedData, Result};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn r(n: i128, d: i128) -> Rational {
    Ratio::new(n, d)
}

fn discrete_exactness() -> Result<Outcome> {
    let truth = esip_core::oracles::parity_data_generating();
    let sip = DiscreteSip::parity(truth.clone(), parity_observed())?;
    let induced = sip.induced_measure(&truth);
    let mut ok = induced == vec![r(29, 90), r(61, 90)];

    let uni = DiscreteSip::parity(parity_uniform_prior(), parity_observed())?;
    for (j, w) in uni.conditional_weights().iter().enumerate() {
        let expect = if uni.qmap[j] == 0 { r(1, 4) } else { r(1, 5) };
        ok &= *w == Some(expect);
    }
    let inf = DiscreteSip::parity(parity_informed_prior(), parity_observed())?;
    let w = inf.conditional_weights();
    let expect = [
        r(2, 21),
        r(2, 19),
        r(2, 21),
        r(15, 38),
        r(5, 14),
        r(2, 19),
        r(5, 14),
        r(15, 38),
        r(2, 21),
    ];
    ok &= w.iter().zip(&expect).all(|(a, b)| *a == Some(*b));
    let distinct: Vec<String> = [w[1], w[3], w[0], w[4]]
        .iter()
        .map(|x| x.map_or("-".into(), |v| v.to_string()))
        .collect();
    outcome(
        ok,
        format!(
            "induced ({}, {}), uniform weights (1/4, 1/5), informed weights ({})",
            induced[0],
            induced[1],
            distinct.join(", ")
        ),
    )
}

fn discrete_entropies() -> Result<Outcome> {
    let uni = discrete_posterior(&DiscreteSip::parity(parity_uniform_prior(), parity_observed())?)?;
    let inf = discrete_posterior(&DiscreteSip::parity(parity_informed_prior(), parity_observed())?)?;
    let (hu, hi) = (discrete_entropy_exact(&uni), discrete_entropy_exact(&inf));
    outcome(
        (hu - 2.1746).abs() <= 5e-4 && (hi - 1.9805).abs() <= 5e-4,
        format!("uniform {hu:.5} (target 2.1746), informed {hi:.5} (target 1.9805), tol 5e-4"),
    )
}

fn beta_fits() -> Result<Outcome> {
    let all = fit_beta_mle_with(&ball_observations(BallSubset::All)?, BALL_SUPPORT)?;
    let red = fit_beta_mle_with(&ball_observations(BallSubset::Reduced)?, BALL_SUPPORT)?;
    let fixed = fit_beta_mle_with(&ball_observations(BallSubset::All)?, SupportRule::Fixed { lo: 2.55, hi: 3.19 })?;
    let ok = (all.alpha - 2.191).abs() <= 0.02
        && (all.beta - 2.047).abs() <= 0.02
        && (red.alpha - 1.394).abs() <= 0.02
        && (red.beta - 2.030).abs() <= 0.02;
    outcome(
        ok,
        format!(
            "all ({:.3}, {:.3}), reduced ({:.3}, {:.3}), tol 0.02 [fixed-D fit for reference: ({:.3}, {:.3})]",
            all.alpha, all.beta, red.alpha, red.beta, fixed.alpha, fixed.beta
        ),
    )
}

fn estimator_vs_oracle() -> Result<Outcome> {
    let cfg = expdecay_study_config(2.0, 200_000, 100, 1_000_000, 2024);
    let cal = run_calibration(&cfg)?;
    let oracle = ExpDecayOracle::new(2.0, 12.0, 12.0)?;
    let reference = oracle.heatmap([EXPDECAY_GRID, EXPDECAY_GRID])?;
    let tv = tv_distance(cal.heatmap.as_ref().unwrap(), &reference)?;
    let a = BoxEvent(vec![(0.0, 0.5), (0.0, 0.5)]);
    let p_hat = event_probability(&cal.posterior, &a);
    let p_oracle = oracle.box_probability([(0.0, 0.5), (0.0, 0.5)], 40)?;

    // Same data and cells with ten times the prior sample, to separate
    // Monte Carlo noise in the heatmap from estimator bias.
    let mut big = cfg.clone();
    big.n_samples = Some(10_000_000);
    let tv_big = tv_distance(run_calibration(&big)?.heatmap.as_ref().unwrap(), &reference)?;
    outcome(
        tv <= 0.02 && (p_hat - p_oracle).abs() <= 0.01,
        format!(
            "TV {tv:.4} (<= 0.02), P(A) {p_hat:.4} vs oracle {p_oracle:.4} (|diff| <= 0.01) [TV at N=1e7: {tv_big:.4}]"
        ),
    )
}

fn pushforward_consistency() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    let mut configs = Vec::new();
    for &t in &[0.5, 2.0] {
        for &m in &[12, 100] {
            for &n in &[2_500, 100_000] {
                let mut cfg = expdecay_study_config(t, 20_000, m, n, 9);
                cfg.empty_mass_threshold = 1.0;
                configs.push(cfg);
            }
        }
    }
    let mut kde = expdecay_study_config(2.0, 20_000, 50, 50_000, 10);
    kde.density = esip_core::experiments::DensitySpec::Kde { bandwidth: None };
    configs.push(kde);
    let mut beta_prior = expdecay_study_config(2.0, 20_000, 50, 50_000, 11);
    beta_prior.prior = PriorSpec::BetaProduct {
        alpha: vec![5.0, 2.0],
        beta: vec![2.0, 5.0],
    };
    beta_prior.empty_mass_threshold = 1.0;
    configs.push(beta_prior);
    for v in esip_core::experiments::BallVariant::ALL {
        configs.push(esip_core::experiments::falling_ball_config(v, 100_000, 12));
    }
    configs.push(StudyConfig::from_json(include_str!("../../../configs/parity-uniform.json"))?);
    for cfg in &configs {
        let cal = run_calibration(cfg)?;
        worst = worst.max(pushforward_check(&cal.posterior).max_discrepancy);
        runs += 1;
    }
    // Disk model, uniform prior, radius data.
    let disk = QoiModel::disk_radius();
    let prior = sample_uniform_box(disk.domain(), 200_000, RandomStream::new(3, 0)).evaluated(&disk)?;
    let r = sample_beta(3.0, 2.0, 50_000, RandomStream::new(3, 1))?;
    let data = ObservedData::scalar(r, 0.0, std::f64::consts::SQRT_2)?;
    let part = PartitionD::uniform(&[(0.0, std::f64::consts::SQRT_2)], &[40])?;
    let probs = esip_core::output_measure::histogram_probs(&data, &part)?;
    worst = worst.max(pushforward_check(&compute_weights(prior, &probs)?).max_discrepancy);
    runs += 1;
    outcome(worst <= 1e-12, format!("max discrepancy {worst:.2e} over {runs} runs (<= 1e-12)"))
}

fn maximum_entropy() -> Result<Outcome> {
    let mut hu = Vec::new();
    let mut hb = Vec::new();
    for s in 0..10u64 {
        let cfg = expdecay_study_config(2.0, 200_000, 100, 1_000_000, 500 + s);
        hu.push(run_calibration(&cfg)?.diagnostics.entropy.unwrap());
        let mut b = cfg;
        b.prior = PriorSpec::BetaProduct {
            alpha: vec![5.0, 2.0],
            beta: vec![2.0, 5.0],
        };
        hb.push(run_calibration(&b)?.diagnostics.entropy.unwrap());
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    };
    let ((mu, su), (mb, sb)) = (stats(&hu), stats(&hb));
    let se = su.hypot(sb);
    let continuous = mu - mb > 3.0 * se;

    // Random priors on the parity example never beat the uniform prior.
    let uni = discrete_entropy_exact(&discrete_posterior(&DiscreteSip::parity(parity_uniform_prior(), parity_observed())?)?);
    let stream = RandomStream::new(77, 0);
    let mut discrete_ok = true;
    let mut closest = f64::INFINITY;
    for k in 0..100u64 {
        let raw: Vec<i128> = (0..9).map(|j| 1 + (stream.substream(k).u64_at(j) % 1000) as i128).collect();
        let total: i128 = raw.iter().sum();
        let prior: Vec<Rational> = raw.iter().map(|&x| r(x, total)).collect();
        if prior.iter().all(|p| !p.is_zero()) {
            let h = discrete_entropy_exact(&discrete_posterior(&DiscreteSip::parity(prior, parity_observed())?)?);
            discrete_ok &= h <= uni;
            closest = closest.min(uni - h);
        }
    }
    outcome(
        continuous && discrete_ok,
        format!(
            "uniform {mu:.4}±{su:.4} vs Beta(5,2)xBeta(2,5) {mb:.4}±{sb:.4}, gap {:.4} > 3·SE {:.4}; \
             100 random discrete priors below uniform {uni:.4} (closest gap {closest:.2e})",
            mu - mb,
            3.0 * se
        ),
    )
}

fn variance_scaling() -> Result<Outcome> {
    let cfg = expdecay_study_config(2.0, 1000, 100, 1_000_000, 31);
    let event = BoxEvent(vec![(0.0, 0.5), (0.0, 0.5)]);
    let v = variance_slope_study(&cfg, &event, &[1_000, 4_000, 16_000], 50)?;
    let slope = v.slope.unwrap_or(f64::NAN);
    outcome(
        (slope + 1.0).abs() <= 0.3,
        format!(
            "slope {slope:.3} (-1 ± 0.3), variances {:?}",
            v.variances.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()
        ),
    )
}

fn accept_reject_reproduction() -> Result<Outcome> {
    let mut cfg = expdecay_study_config(0.5, 1_000_000, 100, 1_000_000, 8);
    cfg.accept_reject = Some(AcceptRejectSpec { proposals: Some(40_000) });
    let (_, ar) = run_accept_reject_study(&cfg)?;
    let rate = ar.acceptance_rate();

    // Full input: filter the calibration prior sample itself and compare
    // with the reweighting heatmap built from it.
    cfg.accept_reject = None;
    let (_, full) = run_accept_reject_study(&cfg)?;
    let cal = run_calibration(&cfg)?;
    let grid = PartitionD::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[EXPDECAY_GRID, EXPDECAY_GRID])?;
    let ar_map = sample_heatmap(&full.accepted, &[0, 1], grid)?;
    let tv = tv_distance(&ar_map, cal.heatmap.as_ref().unwrap())?;
    outcome(
        (rate - 0.267).abs() <= 0.03 && tv <= 0.05,
        format!(
            "acceptance {rate:.4} ({} of 40000, target 0.267 ± 0.03), TV to reweighting {tv:.4} (<= 0.05)",
            ar.accept_count
        ),
    )
}

fn convergence_ordering() -> Result<Outcome> {
    let base = expdecay_study_config(2.0, 200_000, 100, 2_500, 0);
    let mut base = base;
    base.empty_mass_threshold = 1.0;
    let reference = expdecay_reference(2.0, 12.0, 12.0, [EXPDECAY_GRID, EXPDECAY_GRID])?;
    let seeds: Vec<u64> = (0..5).map(|s| 900 + s).collect();
    let rows = convergence_sweep(&base, &[2_500, 2_560_000], &[12, 100], &seeds, Some(&reference))?;
    let tv = |n: usize, m: usize| rows.iter().find(|r| r.n == n && r.m == m).unwrap().tv;
    let (small_n, big_lo_m, big) = (tv(2_500, 100), tv(2_560_000, 12), tv(2_560_000, 100));
    outcome(
        big < small_n && big < big_lo_m,
        format!("TV (50², 100) {small_n:.4} > (1600², 100) {big:.4} < (1600², 12) {big_lo_m:.4}"),
    )
}

fn kde_consistency() -> Result<Outcome> {
    let part = PartitionD::uniform(&[(0.0, 1.0)], &[100])?;
    let exact: Vec<f64> = (0..part.len())
        .map(|i| {
            let (a, b) = part.cell_bounds(i)[0];
            esip_core::quadrature::adaptive_simpson(|x| beta_pdf(x, 12.0, 12.0), a, b, 1e-13)
        })
        .collect::<Result<_>>()?;
    let mut means = Vec::new();
    for (ki, &k) in [1_000usize, 10_000, 100_000].iter().enumerate() {
        let mut total = 0.0;
        for s in 0..20u64 {
            let v = sample_beta(12.0, 12.0, k, RandomStream::new(4000 + s, ki as u64))?;
            let data = ObservedData::scalar(v, 0.0, 1.0)?;
            let h = default_kde_bandwidth(&data)?;
            let p = kde_cell_probs(&data, &part, h)?;
            total += p.probs().iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        means.push(total / 20.0);
    }
    outcome(
        means[0] > means[1] && means[1] > means[2],
        format!("mean L1 {:.4} > {:.4} > {:.4}", means[0], means[1], means[2]),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("discrete exactness", discrete_exactness),
        ("discrete entropies", discrete_entropies),
        ("Beta MLE fits", beta_fits),
        ("estimator vs oracle", estimator_vs_oracle),
        ("pushforward consistency", pushforward_consistency),
        ("maximum entropy", maximum_entropy),
        ("variance scaling", variance_scaling),
        ("accept-reject reproduction", accept_reject_reproduction),
        ("convergence ordering", convergence_ordering),
        ("KDE consistency", kde_consistency),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let res = run();
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(o) => {
                if !o.pass {
                    failed += 1;
                }
                println!("{} {id:>2} {name}: {} ({secs:.1}s)", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            }
            Err(e) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: error: {e} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var_os("ESIP_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
