//! `esip`: calibration, accept-reject, forecasting, oracles and studies from
//! JSON configs.
//!
//! Exit codes: 0 ok, 2 configuration, 3 data, 4 under-resolved prior,
//! 5 numerical failure. Failures print one JSON error record on stderr and
//! leave the output directory untouched.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use serde::Serialize;

use esip_core::experiments::{
    convergence_sweep, falling_ball_study, run_accept_reject_study, run_calibration, run_forecast,
    variance_slope_study, BallVariant, DataSpec, ForecastConfig, PriorSpec, BALL_PRIOR_SAMPLES,
};
use esip_core::oracles::{
    disk_conditional_density, expdecay_contour_arclength, expdecay_pushforward_density,
    expdecay_pushforward_density_quadrature, discrete_entropy_exact, discrete_posterior, parity_informed_prior,
    parity_observed, parity_uniform_prior, DiscreteSip, ExpDecayOracle, Rational,
};
use esip_core::posterior::GridHeatmap;
use esip_core::{BoxEvent, Error, Result, StudyConfig};

use output::{Outputs, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "esip", version, about = "Posterior estimation for stochastic inverse problems")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reweight prior samples against the data distribution.
    Calibrate,
    /// Filter prior samples with the accept-reject algorithm.
    AcceptReject,
    /// Push a saved posterior through a new model.
    Forecast,
    /// Closed-form and exact reference solutions.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Scripted studies.
    Experiment {
        #[command(subcommand)]
        which: ExperimentCommand,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DiscretePrior {
    Uniform,
    Informed,
}

#[derive(Subcommand, Debug)]
enum OracleCommand {
    /// Exact posterior of the 3×3 parity example.
    Discrete {
        #[arg(long, value_enum, default_value = "uniform")]
        prior: DiscretePrior,
        /// Observed output probabilities, as fractions or decimals.
        #[arg(long, value_delimiter = ',', default_value = "17/50,33/50")]
        data: Vec<String>,
    },
    /// Pushforward density of the uniform distribution under exp-decay.
    ExpdecayPushforward {
        #[arg(long = "T", default_value_t = 2.0)]
        t: f64,
        #[arg(long, default_value_t = 199)]
        points: usize,
    },
    /// Contour arclength of exp-decay as a function of q.
    Arclength {
        #[arg(long = "T", default_value_t = 2.0)]
        t: f64,
        #[arg(long, default_value_t = 0.2)]
        q_min: f64,
        #[arg(long, default_value_t = 0.99)]
        q_max: f64,
        #[arg(long, default_value_t = 80)]
        points: usize,
    },
    /// Angular conditional density on a circle of the disk.
    Disk(DiskArgs),
}

#[derive(Args, Debug)]
struct DiskArgs {
    /// Uniform density on the square (the default).
    #[arg(long, conflicts_with = "tilt")]
    uniform: bool,
    /// Density proportional to `max(0, 1 + a·x)` instead.
    #[arg(long)]
    tilt: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 64)]
    points: usize,
}

#[derive(Subcommand, Debug)]
enum ExperimentCommand {
    /// Falling-ball calibration scenarios.
    Ball {
        #[arg(long, value_parser = parse_variant)]
        variant: BallVariant,
        #[arg(long, default_value_t = BALL_PRIOR_SAMPLES)]
        n_samples: usize,
    },
    /// TV to a reference over prior sizes and cell counts of the config.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        ms: Vec<usize>,
        /// Number of seeds, derived from the config seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Variance of an event probability against the data size.
    Variance {
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        repeats: usize,
        /// Event box as `lo,hi` per dimension separated by `;`.
        #[arg(long, value_parser = parse_box)]
        event: BoxEvent,
    },
}

fn parse_variant(s: &str) -> std::result::Result<BallVariant, String> {
    BallVariant::parse(s).map_err(|e| e.to_string())
}

fn parse_box(s: &str) -> std::result::Result<BoxEvent, String> {
    s.split(';')
        .map(|pair| {
            let v: Vec<f64> = pair
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
                .collect::<std::result::Result<_, _>>()?;
            match v[..] {
                [lo, hi] if lo <= hi => Ok((lo, hi)),
                _ => Err(format!("expected lo,hi with lo <= hi, got {pair:?}")),
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(BoxEvent)
}

fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::Config(format!("cannot read {s:?} as a probability"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let (n, d): (i128, i128) = (n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?);
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let scale = 10i128.pow(frac.len() as u32);
    let whole: i128 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let part: i128 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    Ok(Ratio::new(whole * scale + part, scale))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::ShapeMismatch(_) | Error::DegeneratePrior { .. } => 2,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::EmptyData { .. }
        | Error::DegenerateData(_)
        | Error::InfeasiblePrior { .. } => 3,
        Error::UnderResolvedPrior { .. } => 4,
        Error::Boundary { .. }
        | Error::Optimization { .. }
        | Error::SingularContour(_)
        | Error::UnsupportedContour(_)
        | Error::Numeric(_) => 5,
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    exit_code: u8,
    message: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let rec = ErrorRecord {
                error: ErrorBody {
                    kind: e.kind(),
                    exit_code: code,
                    message: e.to_string(),
                },
            };
            eprintln!("{}", serde_json::to_string(&rec).expect("error record serializes"));
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot set up {k} threads: {e}")))?;
    }
    match &cli.command {
        Command::Calibrate => calibrate(cli),
        Command::AcceptReject => accept_reject(cli),
        Command::Forecast => forecast(cli),
        Command::Oracle { which } => oracle(cli, which),
        Command::Experiment { which } => experiment(cli, which),
    }
}

fn study_config(cli: &Cli) -> Result<(StudyConfig, PathBuf)> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| Error::Config("this command needs --config <path>".into()))?;
    let mut cfg = StudyConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok((cfg, path))
}

fn manifest_for(command: &str, cfg: &StudyConfig, config_path: &Path) -> Result<RunManifest> {
    let mut inputs = vec![config_path.to_path_buf()];
    inputs.extend(cfg.input_files().into_iter().filter(|p| p.exists()));
    let mut m = RunManifest::new(command).with_inputs(&inputs)?;
    m.config = Some(serde_json::from_str(&cfg.to_json()).expect("config is JSON"));
    m.seed = Some(cfg.seed);
    Ok(m)
}

fn heatmap_files(out: &mut Outputs, stem: &str, h: &GridHeatmap) -> Result<()> {
    out.render(&format!("{stem}.csv"), |w| h.write_csv(w))?;
    if h.dims.len() == 2 {
        out.render(&format!("{stem}.pgm"), |w| h.write_pgm(w, false))?;
    }
    Ok(())
}

fn calibrate(cli: &Cli) -> Result<()> {
    let (cfg, path) = study_config(cli)?;
    let cal = run_calibration(&cfg)?;
    let mut out = Outputs::default();
    out.render("posterior.csv", |w| cal.posterior.write_csv(w))?;
    out.render("data_probs.csv", |w| cal.data_probs.write_csv(w))?;
    if let Some(h) = &cal.heatmap {
        heatmap_files(&mut out, "heatmap", h)?;
    }
    #[derive(Serialize)]
    struct Report<'a> {
        diagnostics: &'a esip_core::Diagnostics,
        fit: Option<esip_core::BetaFit>,
    }
    out.json(
        "diagnostics.json",
        &Report {
            diagnostics: &cal.diagnostics,
            fit: cal.fit,
        },
    );
    let manifest = manifest_for("calibrate", &cfg, &path)?;
    out.commit(&cli.out, manifest)
}

fn accept_reject(cli: &Cli) -> Result<()> {
    let (cfg, path) = study_config(cli)?;
    let (_, ar) = run_accept_reject_study(&cfg)?;
    let mut out = Outputs::default();
    out.render("accepted.csv", |w| ar.write_csv(w))?;
    #[derive(Serialize)]
    struct Report {
        proposals: usize,
        accepted: usize,
        acceptance_rate: f64,
        expected_rate: Option<f64>,
        c: f64,
        unreachable_mass: f64,
    }
    out.json(
        "report.json",
        &Report {
            proposals: ar.proposals,
            accepted: ar.accept_count,
            acceptance_rate: ar.acceptance_rate(),
            expected_rate: Some(ar.expected_rate).filter(|r| r.is_finite()),
            c: ar.c(),
            unreachable_mass: ar.table.unreachable_mass,
        },
    );
    let manifest = manifest_for("accept-reject", &cfg, &path)?;
    out.commit(&cli.out, manifest)
}

fn forecast(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .clone()
        .ok_or_else(|| Error::Config("forecast needs --config <path>".into()))?;
    let cfg = ForecastConfig::load(&path)?;
    let probs = run_forecast(&cfg)?;
    let mut out = Outputs::default();
    out.render("forecast.csv", |w| probs.write_csv(w))?;
    out.json("report.json", &serde_json::json!({ "overflow_mass": probs.outside_mass }));
    let mut manifest = RunManifest::new("forecast").with_inputs(&[path, cfg.posterior_path()])?;
    manifest.config = Some(serde_json::to_value(&cfg).expect("config is JSON"));
    out.commit(&cli.out, manifest)
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
}

fn csv_text(header: &str, rows: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s.into_bytes()
}

fn oracle(cli: &Cli, which: &OracleCommand) -> Result<()> {
    let mut out = Outputs::default();
    let name;
    match which {
        OracleCommand::Discrete { prior, data } => {
            name = "oracle discrete";
            let data: Vec<Rational> = data.iter().map(|s| parse_rational(s)).collect::<Result<_>>()?;
            let data = if data.is_empty() { parity_observed() } else { data };
            let prior_pmf = match prior {
                DiscretePrior::Uniform => parity_uniform_prior(),
                DiscretePrior::Informed => parity_informed_prior(),
            };
            let sip = DiscreteSip::parity(prior_pmf, data).map_err(|e| match e {
                Error::Domain(m) | Error::ShapeMismatch(m) => Error::Config(m),
                other => other,
            })?;
            let post = discrete_posterior(&sip)?;
            let weights = sip.conditional_weights();
            let rows = (0..sip.points.len()).map(|j| {
                let p = &sip.points[j];
                let w = weights[j].map_or("".to_string(), |w| w.to_string());
                let f = post[j].numer().to_owned() as f64 / post[j].denom().to_owned() as f64;
                format!("{},{},{},{},{w},{},{f}", p[0], p[1], sip.qmap[j], sip.prior_pmf[j], post[j])
            });
            out.add(
                "discrete.csv",
                csv_text("lam_1,lam_2,q,prior,conditional_weight,posterior,posterior_float", rows),
            );
            out.json(
                "summary.json",
                &serde_json::json!({
                    "entropy": discrete_entropy_exact(&post),
                    "induced_prior": sip.induced_measure(&sip.prior_pmf).iter().map(|r| r.to_string()).collect::<Vec<_>>(),
                }),
            );
        }
        OracleCommand::ExpdecayPushforward { t, points } => {
            name = "oracle expdecay-pushforward";
            let rows = grid(0.0, 1.0, points + 2)
                .skip(1)
                .take(*points)
                .map(|q| {
                    Ok(format!(
                        "{q},{},{}",
                        expdecay_pushforward_density(q, *t)?,
                        expdecay_pushforward_density_quadrature(q, *t)?
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            out.add("pushforward.csv", csv_text("q,closed_form,quadrature", rows));
        }
        OracleCommand::Arclength { t, q_min, q_max, points } => {
            name = "oracle arclength";
            if !(q_min < q_max) {
                return Err(Error::Config("arclength needs q_min < q_max".into()));
            }
            let rows = grid(*q_min, *q_max, *points)
                .map(|q| Ok(format!("{q},{}", expdecay_contour_arclength(q, *t)?)))
                .collect::<Result<Vec<_>>>()?;
            out.add("arclength.csv", csv_text("q,arclength", rows));
        }
        OracleCommand::Disk(args) => {
            name = "oracle disk";
            let a = if args.uniform { 0.0 } else { args.tilt.unwrap_or(0.0) };
            let rows = (0..args.points)
                .map(|i| {
                    let theta = std::f64::consts::TAU * i as f64 / args.points as f64;
                    Ok(format!("{theta},{}", disk_conditional_density(theta, args.q, |x, _| (1.0 + a * x).max(0.0))?))
                })
                .collect::<Result<Vec<_>>>()?;
            out.add("disk.csv", csv_text("theta,density", rows));
        }
    }
    let manifest = RunManifest::new(name);
    out.commit(&cli.out, manifest)
}

/// Oracle heatmap when the config is the uniform-prior exp-decay problem
/// with Beta(a, b)² synthetic data and a unit-square grid.
fn oracle_reference(cfg: &StudyConfig) -> Result<Option<GridHeatmap>> {
    let model = cfg.model.build()?;
    if model.name() != "exp_decay" || cfg.prior != PriorSpec::Uniform || cfg.data_prep.is_some() {
        return Ok(None);
    }
    let (DataSpec::Synthetic { distribution: PriorSpec::BetaProduct { alpha, beta }, .. }, Some(g)) = (&cfg.data, &cfg.grid)
    else {
        return Ok(None);
    };
    if alpha[0] != alpha[1] || beta[0] != beta[1] || g.dims != [0, 1] {
        return Ok(None);
    }
    let t = cfg.model.params.get("T").copied().unwrap_or(2.0);
    Ok(Some(ExpDecayOracle::new(t, alpha[0], beta[0])?.heatmap([g.cells[0], g.cells[1]])?))
}

fn experiment(cli: &Cli, which: &ExperimentCommand) -> Result<()> {
    let mut out = Outputs::default();
    let manifest = match which {
        ExperimentCommand::Ball { variant, n_samples } => {
            let seed = cli.seed.unwrap_or(0);
            let s = falling_ball_study(*variant, *n_samples, seed)?;
            for (h, stem) in s.marginals.iter().zip(["marginal_h0_v0", "marginal_h0_g", "marginal_v0_g"]) {
                heatmap_files(&mut out, stem, h)?;
            }
            let (h0, g) = s.modal_h0_g();
            out.json(
                "summary.json",
                &serde_json::json!({
                    "variant": variant.name(),
                    "fit": s.calibration.fit,
                    "g_event": [9.78, 9.82],
                    "g_event_probability": s.g_event_probability,
                    "modal_h0_g": [h0, g],
                    "diagnostics": s.calibration.diagnostics,
                }),
            );
            let mut m = RunManifest::new("experiment ball");
            m.seed = Some(seed);
            m
        }
        ExperimentCommand::Sweep { ns, ms, seeds } => {
            let (cfg, path) = study_config(cli)?;
            let reference = oracle_reference(&cfg)?;
            let seeds: Vec<u64> = (0..*seeds).map(|i| cfg.seed.wrapping_add(i)).collect();
            let rows = convergence_sweep(&cfg, ns, ms, &seeds, reference.as_ref())?;
            let body = rows
                .iter()
                .map(|r| format!("{},{},{},{}", r.n, r.m, r.tv, r.empty_cell_mass));
            out.add("sweep.csv", csv_text("n,m,tv,empty_cell_mass", body));
            out.json(
                "summary.json",
                &serde_json::json!({ "reference": if reference.is_some() { "oracle" } else { "largest budget" } }),
            );
            manifest_for("experiment sweep", &cfg, &path)?
        }
        ExperimentCommand::Variance { ks, repeats, event } => {
            let (cfg, path) = study_config(cli)?;
            let v = variance_slope_study(&cfg, event, ks, *repeats)?;
            let body = (0..v.ks.len()).map(|i| format!("{},{},{}", v.ks[i], v.means[i], v.variances[i]));
            out.add("variance.csv", csv_text("k,mean,variance", body));
            out.json("summary.json", &serde_json::json!({ "slope": v.slope, "event": event.0 }));
            manifest_for("experiment variance", &cfg, &path)?
        }
    };
    out.commit(&cli.out, manifest)
}
