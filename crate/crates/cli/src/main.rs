use clap::{Args, Parser, Subcommand};
use spabc::abc::{credible_band, posterior_mean_curve};
use spabc::harness::io::{self, PanelMeta};
use spabc::harness::{mse_domain, predict_exposure, run_simulation_study, ExposureSettings};
use spabc::margins::{fit_panel_margins, frechet_to_gev, to_unit_frechet};
use spabc::maxstable::DEFAULT_TRUNCATION_BOUND;
use spabc::rng::{labeled_seed, substream};
use spabc::{
    abc_adaptive, abc_rejection, mcle_fit, AbcSettings, BlockMaximaPanel, CorrelationModel, Error,
    Family, GevParams, MarginScale, PriorSpec, Result, SchlatherSimulator, SpatialDesign,
    Summarizer, SummaryMethod, SummaryVector,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

/// Spatial extremes by approximate Bayesian computation.
#[derive(Parser, Debug)]
#[command(name = "spabc", version, about)]
struct Cli {
    /// Master seed; every stochastic step derives its stream from it
    /// [default: 1, or the config's seed for `study`].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    output: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a Schlather panel with unit-Fréchet (or GEV) margins.
    Simulate(SimulateArgs),
    /// Fit GEV margins per site and map the panel to unit Fréchet.
    Transform(TransformArgs),
    /// Compute the summary statistic of a unit-Fréchet panel.
    Summarize(SummarizeArgs),
    /// Rejection ABC.
    Abc(AbcArgs),
    /// Two-stage adaptive ABC.
    Aabc(AabcArgs),
    /// Maximum pairwise composite likelihood.
    Mcle(McleArgs),
    /// Integrated squared error of an estimated correlation curve.
    Evaluate(EvaluateArgs),
    /// Run a simulation study described by a TOML config.
    Study(StudyArgs),
    /// Posterior-predictive exposure at a set of target sites.
    Predict(PredictArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, default_value = "whittle-matern")]
    family: Family,
    #[arg(long)]
    c2: f64,
    #[arg(long)]
    nu: f64,
    /// Correlation at distance zero; below 1 adds a nugget.
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
}

impl ModelArgs {
    fn model(&self) -> Result<CorrelationModel> {
        CorrelationModel::new(self.family, self.c1, self.c2, self.nu)
    }
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Sites CSV with header `id,x,y`.
    #[arg(long)]
    sites: PathBuf,
    /// Panel CSV with one column per site id.
    #[arg(long)]
    panel: PathBuf,
}

impl DataArgs {
    fn load(&self) -> Result<BlockMaximaPanel> {
        let design = Arc::new(io::read_sites(&self.sites)?);
        Ok(io::read_panel(&self.panel, design)?.0)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    blocks: usize,
    /// Existing sites CSV. Without it, sites are drawn uniformly on a square.
    #[arg(long, conflicts_with = "n_sites")]
    sites: Option<PathBuf>,
    #[arg(long)]
    n_sites: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    side: f64,
    #[arg(long, default_value_t = DEFAULT_TRUNCATION_BOUND)]
    bound: f64,
    /// Map the margins to GEV(mu, sigma, xi), producing a raw panel.
    #[arg(
        long,
        value_delimiter = ',',
        value_name = "MU,SIGMA,XI",
        allow_hyphen_values = true
    )]
    gev: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[command(flatten)]
    data: DataArgs,
    /// The panel holds minima; they are negated before fitting.
    #[arg(long)]
    minima: bool,
}

#[derive(Args, Debug)]
struct SummaryArgs {
    #[arg(long, default_value = "triplet")]
    method: SummaryMethod,
    #[arg(long, default_value = "whittle-matern")]
    family: Family,
    /// Number of triplet clusters.
    #[arg(long, default_value_t = 50)]
    clusters: usize,
}

impl SummaryArgs {
    fn summarizer(&self, design: Arc<SpatialDesign>) -> Result<Summarizer> {
        Summarizer::build(self.method, self.family, design, self.clusters)
    }
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    summary: SummaryArgs,
}

#[derive(Args, Debug)]
struct AbcArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    summary: SummaryArgs,
    #[arg(long, default_value_t = 20_000)]
    iterations: usize,
    #[arg(long, default_value_t = 0.005)]
    percentile: f64,
    /// Uniform prior box, e.g. `c2=0:10,nu=0:10`.
    #[arg(long, default_value = "c2=0:10,nu=0:10")]
    prior: PriorSpec,
    #[arg(long, default_value_t = DEFAULT_TRUNCATION_BOUND)]
    bound: f64,
}

#[derive(Args, Debug)]
struct AabcArgs {
    #[command(flatten)]
    abc: AbcArgs,
    #[arg(long, default_value_t = 20_000)]
    stage2_iterations: usize,
}

#[derive(Args, Debug)]
struct McleArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "whittle-matern")]
    family: Family,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// True correlation model.
    #[command(flatten)]
    truth: ModelArgs,
    /// Sites CSV; its diameter bounds the integration domain.
    #[arg(long)]
    sites: PathBuf,
    /// Posterior CSV from `abc` or `aabc`.
    #[arg(long, required_unless_present = "mcle", conflicts_with = "mcle")]
    posterior: Option<PathBuf>,
    /// Fit CSV from `mcle`.
    #[arg(long)]
    mcle: Option<PathBuf>,
    /// Pointwise credible band level for posterior input.
    #[arg(long, default_value_t = 0.95)]
    band_level: f64,
}

#[derive(Args, Debug)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    posterior: PathBuf,
    /// Target sites CSV.
    #[arg(long)]
    sites: PathBuf,
    /// Per-site GEV fits CSV as written by `transform`.
    #[arg(long)]
    margins: PathBuf,
    /// Per-site exposure weights CSV `id,weight`; all ones when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    sims: usize,
    /// Margins describe negated minima; exposure means falling below a threshold.
    #[arg(long)]
    minima: bool,
    #[arg(long, default_value_t = DEFAULT_TRUNCATION_BOUND)]
    bound: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 3 } else { 4 })
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let out = cli.output.as_path();
    let seed = cli.seed.unwrap_or(1);
    std::fs::create_dir_all(out)?;
    match &cli.command {
        Command::Simulate(a) => simulate(a, seed, out),
        Command::Transform(a) => transform(a, out),
        Command::Summarize(a) => summarize(a, out),
        Command::Abc(a) => abc(a, None, seed, out),
        Command::Aabc(a) => abc(&a.abc, Some(a.stage2_iterations), seed, out),
        Command::Mcle(a) => mcle(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Study(a) => study(a, cli.seed, out),
        Command::Predict(a) => predict(a, seed, out),
    }
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

fn simulate(a: &SimulateArgs, seed: u64, out: &Path) -> Result<()> {
    let model = a.model.model()?;
    let design = match (&a.sites, a.n_sites) {
        (Some(path), _) => io::read_sites(path)?,
        (None, Some(d)) => {
            let design = SpatialDesign::uniform_square(
                d,
                a.side,
                &mut substream(labeled_seed(seed, "sites"), 0),
            )?;
            let path = out.join("sites.csv");
            io::write_sites(&path, &design)?;
            wrote(&path);
            design
        }
        (None, None) => return Err(Error::Config("give either --sites or --n-sites".into())),
    };
    let design = Arc::new(design);
    let simulator = SchlatherSimulator::with_bound(a.bound)?;
    let mut panel = simulator.simulate(&design, &model, a.blocks, labeled_seed(seed, "data"))?;
    if let Some(g) = &a.gev {
        if g.len() != 3 {
            return Err(Error::Config(format!(
                "--gev takes MU,SIGMA,XI, got {} values",
                g.len()
            )));
        }
        let p = GevParams::new(g[0], g[1], g[2])?;
        let values = panel
            .values()
            .iter()
            .map(|&z| frechet_to_gev(&p, z))
            .collect();
        panel = BlockMaximaPanel::new(values, MarginScale::Raw, design)?;
    }
    let meta = PanelMeta {
        scale: panel.scale(),
        seed: Some(seed),
        model: Some(model),
        truncation_bound: Some(a.bound),
        source: None,
    };
    let path = out.join("panel.csv");
    io::write_panel(&path, &panel, &meta)?;
    wrote(&path);
    Ok(())
}

fn transform(a: &TransformArgs, out: &Path) -> Result<()> {
    let mut panel = a.data.load()?;
    if a.minima {
        panel = panel.negated()?;
    }
    let fits = fit_panel_margins(&panel)?;
    let params: Vec<GevParams> = fits.iter().map(|f| f.params).collect();
    let frechet = to_unit_frechet(&panel, &params)?;
    let fits_path = out.join("gev_fits.csv");
    io::write_gev_fits(&fits_path, panel.design(), &fits)?;
    wrote(&fits_path);
    let mut meta = PanelMeta::new(MarginScale::UnitFrechet);
    let origin = a.data.panel.display();
    meta.source = Some(if a.minima {
        format!("negated minima of {origin}")
    } else {
        origin.to_string()
    });
    let path = out.join("frechet.csv");
    io::write_panel(&path, &frechet, &meta)?;
    wrote(&path);
    Ok(())
}

fn summarize(a: &SummarizeArgs, out: &Path) -> Result<()> {
    let panel = a.data.load()?;
    let summarizer = a.summary.summarizer(panel.design().clone())?;
    match summarizer.summarize(&panel)? {
        SummaryVector::Curve(c) => {
            let path = out.join("curve.csv");
            io::write_curve(&path, &c)?;
            wrote(&path);
        }
        SummaryVector::Triplet(t) => {
            let clustering = summarizer
                .clustering()
                .expect("triplet summarizer has a clustering");
            let path = out.join("clustering.csv");
            io::write_clustering(&path, panel.design(), clustering)?;
            wrote(&path);
            let path = out.join("summary.csv");
            io::write_triplet_summary(&path, &t)?;
            wrote(&path);
        }
    }
    Ok(())
}

fn abc(a: &AbcArgs, stage2: Option<usize>, seed: u64, out: &Path) -> Result<()> {
    let start = Instant::now();
    let panel = a.data.load()?;
    let summarizer = a.summary.summarizer(panel.design().clone())?;
    let observed = summarizer.summarize(&panel)?;
    let mut settings = AbcSettings::new(panel.n_blocks(), a.prior, a.percentile);
    settings.simulator = SchlatherSimulator::with_bound(a.bound)?;
    let sample = match stage2 {
        None => abc_rejection(&observed, &summarizer, &settings, a.iterations, seed)?,
        Some(i2) => abc_adaptive(&observed, &summarizer, &settings, a.iterations, i2, seed)?,
    };
    let path = out.join("posterior.csv");
    io::write_posterior(&path, &sample, start.elapsed().as_secs_f64())?;
    wrote(&path);
    let mean = sample.mean();
    println!(
        "{} particles, epsilon {:.6e}, posterior mean c2 {:.6} nu {:.6}",
        sample.len(),
        sample.epsilon,
        mean.c2,
        mean.nu
    );
    Ok(())
}

fn mcle(a: &McleArgs, out: &Path) -> Result<()> {
    let panel = a.data.load()?;
    let fit = mcle_fit(&panel, a.family)?;
    let path = out.join("mcle.csv");
    io::write_mcle(&path, &fit)?;
    wrote(&path);
    println!(
        "c2 {:.6} nu {:.6} loglik {:.6} converged {}",
        fit.phi_hat.c2, fit.phi_hat.nu, fit.loglik, fit.converged
    );
    Ok(())
}

fn evaluate(a: &EvaluateArgs, out: &Path) -> Result<()> {
    let truth = a.truth.model()?;
    let design = io::read_sites(&a.sites)?;
    let domain = mse_domain(&truth, design.max_distance())?;
    let family = a.truth.family;
    let (estimate, band) = match (&a.posterior, &a.mcle) {
        (Some(path), _) => {
            let sample = io::read_posterior(path)?;
            if sample.provenance.family != family {
                return Err(Error::Config(format!(
                    "posterior was fitted with {} but the truth is {family}",
                    sample.provenance.family
                )));
            }
            let curve = posterior_mean_curve(&sample, family, &domain.grid)?;
            let band = match credible_band(&sample, family, &domain.grid, a.band_level) {
                Ok(band) => Some(band),
                Err(Error::EmptySample(reason)) => {
                    log::warn!("no credible band: {reason}");
                    None
                }
                Err(e) => return Err(e),
            };
            (curve, band)
        }
        (None, Some(path)) => {
            let model = CorrelationModel::from_point(family, io::read_mcle(path)?.phi)?;
            (domain.grid.iter().map(|&h| model.rho(h)).collect(), None)
        }
        (None, None) => unreachable!("clap requires one estimate"),
    };
    let mse = domain.mse(&truth, &estimate)?;

    let path = out.join("evaluate.csv");
    let mut text = String::from(if band.is_some() {
        "h,truth,estimate,lower,upper\n"
    } else {
        "h,truth,estimate\n"
    });
    for (i, &h) in domain.grid.iter().enumerate() {
        text.push_str(&format!(
            "{h:.16e},{:.16e},{:.16e}",
            truth.rho(h),
            estimate[i]
        ));
        if let Some(b) = &band {
            text.push_str(&format!(",{:.16e},{:.16e}", b.lower[i], b.upper[i]));
        }
        text.push('\n');
    }
    std::fs::write(&path, text)?;
    wrote(&path);
    let coverage = band
        .as_ref()
        .map(|b| domain.coverage(&truth, &b.lower, &b.upper));
    let summary = serde_json::json!({
        "mse": mse,
        "h_star": domain.h_star,
        "truncated": domain.truncated,
        "band_coverage": coverage,
    });
    println!("{summary}");
    Ok(())
}

fn study(a: &StudyArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut config = io::load_config(&a.config)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let report = run_simulation_study(&config)?;
    io::write_study_report(out, &report)?;
    for s in &report.summaries {
        println!(
            "{:<10} {:<16} mse {} (se {}) failures {}/{}",
            s.model,
            s.estimator,
            s.mean_mse.map_or("-".into(), |m| format!("{m:.4e}")),
            s.se_mse.map_or("-".into(), |m| format!("{m:.1e}")),
            s.failures,
            s.runs
        );
    }
    wrote(&out.join("summary.csv"));
    Ok(())
}

fn predict(a: &PredictArgs, seed: u64, out: &Path) -> Result<()> {
    let sample = io::read_posterior(&a.posterior)?;
    let design = Arc::new(io::read_sites(&a.sites)?);
    let margins = io::read_gev_fits(&a.margins, &design)?;
    let weights = match &a.weights {
        Some(path) => io::read_weights(path, &design)?,
        None => vec![1.0; design.len()],
    };
    let settings = ExposureSettings {
        family: sample.provenance.family,
        thresholds: a.thresholds.clone(),
        n_sims: a.sims,
        minima: a.minima,
        simulator: SchlatherSimulator::with_bound(a.bound)?,
        seed: labeled_seed(seed, "predict"),
    };
    let exposure = predict_exposure(&sample, &design, &margins, &weights, &settings)?;
    let path = out.join("exposure.csv");
    io::write_exposure(&path, &exposure)?;
    wrote(&path);
    for s in &exposure.summaries {
        println!(
            "threshold {:>8.3}: mean exposed weight {:.4}, none {:.3}, all {:.3}, intermediate {:.3}",
            s.threshold, s.mean_total, s.none, s.all, s.intermediate
        );
    }
    Ok(())
}
