use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use topkcert::harness::io::{read_example_csv, write_curve, write_curve_csv, ExampleRow};
use topkcert::harness::{uniform_grid, DEFAULT_GRID_MAX, DEFAULT_GRID_STEP, DEFAULT_RHO};
use topkcert::radius::{certify_bounds, DEFAULT_MU, EXACT_MU};
use topkcert::smoothing::derive_seed;
use topkcert::{
    certified_accuracy_curve, construct_worst_case, is_consistent, measure_shifted, predict_topk,
    run_batch, verify_violation, AccuracyCurve, BoundMethod, Dataset, DatasetExample,
    EvaluationConfig, NoiseModel, ProbabilityBounds, ShiftRatio,
};

/// Certified top-k robustness for Gaussian-smoothed classifiers.
#[derive(Parser, Debug)]
#[command(name = "topkcert", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalOpts {
    /// Standard deviation of the Gaussian noise.
    #[arg(long, global = true, default_value_t = 0.5)]
    sigma: f64,

    /// Size of the predicted label set.
    #[arg(long, global = true, default_value_t = 3)]
    k: usize,

    /// Monte Carlo samples per example.
    #[arg(long, global = true, default_value_t = 100_000)]
    n: u64,

    /// Error probability per certificate or prediction.
    #[arg(long, global = true, default_value_t = 0.001)]
    alpha: f64,

    /// Bisection width of the radius solver.
    #[arg(long, global = true, default_value_t = DEFAULT_MU)]
    mu: f64,

    /// Probability bound estimator: binocp or simuem.
    #[arg(long = "bound-method", global = true, default_value = "simuem")]
    bound_method: BoundMethod,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output location. A directory for `certify`, a file otherwise.
    /// Defaults to standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ExampleInput {
    /// JSON dataset of examples with probability rows.
    #[arg(long, conflicts_with = "probabilities")]
    dataset: Option<PathBuf>,

    /// Only process the example with this id.
    #[arg(long, requires = "dataset")]
    example: Option<String>,

    /// Inline probability row for a single example, comma separated.
    #[arg(long, value_delimiter = ',')]
    probabilities: Option<Vec<f64>>,

    /// Label to certify for the inline example; defaults to the most
    /// probable one.
    #[arg(long, requires = "probabilities")]
    label: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct GridOpts {
    /// Largest radius on the curve grid.
    #[arg(long, default_value_t = DEFAULT_GRID_MAX)]
    grid_max: f64,

    #[arg(long, default_value_t = DEFAULT_GRID_STEP)]
    grid_step: f64,

    /// Failure probability of the accuracy lower bound.
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify the radius of every example and write result tables.
    Certify {
        #[command(flatten)]
        input: ExampleInput,
        #[command(flatten)]
        grid: GridOpts,
    },
    /// Predict the top-k set of every example, abstaining when unsure.
    Predict {
        #[command(flatten)]
        input: ExampleInput,
    },
    /// Certified accuracy against radius.
    Curve {
        /// Per-example CSV from a previous `certify` run.
        #[arg(long, conflicts_with_all = ["dataset", "probabilities"])]
        results: Option<PathBuf>,
        #[command(flatten)]
        input: ExampleInput,
        #[command(flatten)]
        grid: GridOpts,
    },
    /// Build worst-case classifiers for given bounds over a grid of shifts.
    Tightness {
        /// Lower bound of the target label.
        #[arg(long, requires = "uppers", conflicts_with = "bounds")]
        lower: Option<f64>,
        /// Upper bounds of the other labels, comma separated.
        #[arg(long, value_delimiter = ',')]
        uppers: Option<Vec<f64>>,
        /// Target label index among all labels.
        #[arg(long, default_value_t = 0)]
        target: usize,
        /// JSON file `{"target": 0, "lower": 0.6, "uppers": [0.3, 0.1]}`.
        #[arg(long)]
        bounds: Option<PathBuf>,
        /// Shift ratios |delta| / sigma, comma separated. Defaults to
        /// 0..=3 in steps of 0.1.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Certify { input, grid } => certify_cmd(g, input, grid),
        Command::Predict { input } => predict_cmd(g, input),
        Command::Curve {
            results,
            input,
            grid,
        } => curve_cmd(g, results.as_deref(), input, grid),
        Command::Tightness {
            lower,
            uppers,
            target,
            bounds,
            lambdas,
        } => tightness_cmd(
            g,
            *lower,
            uppers.as_deref(),
            *target,
            bounds.as_deref(),
            lambdas.as_deref(),
        ),
    }
}

fn load_dataset(input: &ExampleInput) -> Result<Dataset> {
    let mut dataset = match (&input.dataset, &input.probabilities) {
        (Some(path), _) => Dataset::load(path)?,
        (None, Some(p)) => Dataset {
            num_labels: p.len(),
            dimension: 1,
            examples: vec![DatasetExample {
                id: "0".into(),
                true_label: input.label,
                probabilities: p.clone(),
                features: None,
            }],
        },
        (None, None) => bail!("provide --dataset FILE or --probabilities P1,P2,..."),
    };
    if let Some(id) = &input.example {
        dataset.examples.retain(|e| &e.id == id);
        ensure!(!dataset.examples.is_empty(), "no example with id `{id}`");
    }
    dataset.validate()?;
    Ok(dataset)
}

fn config(g: &GlobalOpts, grid: &GridOpts) -> Result<EvaluationConfig> {
    Ok(EvaluationConfig {
        sigma: g.sigma,
        k: g.k,
        n: g.n,
        alpha: g.alpha,
        mu: g.mu,
        method: g.bound_method,
        seed: g.seed,
        grid: uniform_grid(grid.grid_max, grid.grid_step)?,
        rho: grid.rho,
    })
}

/// Standard output or the `--out` file.
fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(io::stdout().lock()),
    })
}

fn certify_cmd(g: &GlobalOpts, input: &ExampleInput, grid: &GridOpts) -> Result<()> {
    let dataset = load_dataset(input)?;
    let cfg = config(g, grid)?;
    let out = run_batch(&cfg, &dataset)?;
    match &g.out {
        Some(dir) => {
            out.write(dir, &cfg)?;
            let certified = out
                .results
                .iter()
                .filter(|r| !r.certificate.abstained)
                .count();
            eprintln!(
                "certified {certified}/{} examples; results in {}",
                out.results.len(),
                dir.display()
            );
        }
        None => {
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            for r in &out.results {
                w.serialize(ExampleRow::from(r))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn predict_cmd(g: &GlobalOpts, input: &ExampleInput) -> Result<()> {
    let dataset = load_dataset(input)?;
    let noise = NoiseModel::new(g.sigma)?;
    let mut w = csv::Writer::from_writer(output(g.out.as_deref())?);
    w.write_record(["example_id", "abstained", "labels", "pvalues"])?;
    for (index, ex) in dataset.examples.iter().enumerate() {
        let f = ex.classifier(index, dataset.dimension)?;
        let x = ex.point(dataset.dimension)?;
        let seed = derive_seed(g.seed, index as u64);
        let pred = predict_topk(&f, &x, g.k, noise, g.n, g.alpha, seed)?;
        let join = |items: Vec<String>| items.join(" ");
        w.write_record([
            ex.id.clone(),
            u8::from(pred.abstained()).to_string(),
            join(
                pred.labels
                    .unwrap_or_default()
                    .iter()
                    .map(|l| l.to_string())
                    .collect(),
            ),
            join(pred.pvalues.iter().map(|p| format!("{p:e}")).collect()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn curve_cmd(
    g: &GlobalOpts,
    results: Option<&Path>,
    input: &ExampleInput,
    grid: &GridOpts,
) -> Result<()> {
    let cfg = config(g, grid)?;
    let curve: AccuracyCurve = match results {
        Some(path) => {
            let rows = read_example_csv(path)?;
            ensure!(!rows.is_empty(), "{} has no rows", path.display());
            let radii: Vec<Option<f64>> = rows.iter().map(ExampleRow::radius).collect();
            certified_accuracy_curve(&radii, &cfg.grid, Some((cfg.alpha, cfg.rho)))?
        }
        None => run_batch(&cfg, &load_dataset(input)?)?.curve,
    };
    match &g.out {
        Some(path) => write_curve_csv(path, &curve)?,
        None => write_curve(io::stdout().lock(), &curve)?,
    }
    Ok(())
}

fn read_bounds_file(path: &Path) -> Result<ProbabilityBounds> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let target = v.get("target").and_then(|t| t.as_u64()).unwrap_or(0) as usize;
    let lower = v
        .get("lower")
        .and_then(|l| l.as_f64())
        .context("bounds file needs a numeric `lower`")?;
    let uppers = v
        .get("uppers")
        .and_then(|u| u.as_array())
        .context("bounds file needs an `uppers` array")?
        .iter()
        .map(|u| u.as_f64().context("`uppers` must be numbers"))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ProbabilityBounds::from_parts(target, lower, &uppers)?)
}

fn tightness_cmd(
    g: &GlobalOpts,
    lower: Option<f64>,
    uppers: Option<&[f64]>,
    target: usize,
    bounds_file: Option<&Path>,
    lambdas: Option<&[f64]>,
) -> Result<()> {
    let bounds = match (bounds_file, lower, uppers) {
        (Some(path), _, _) => read_bounds_file(path)?,
        (None, Some(lower), Some(uppers)) => ProbabilityBounds::from_parts(target, lower, uppers)?,
        _ => bail!("provide --lower and --uppers, or --bounds FILE"),
    };
    let k = g.k;
    let radius = certify_bounds(&bounds, k, g.sigma, EXACT_MU, g.seed)?.radius_lower;
    let lambdas = match lambdas {
        Some(l) => l.to_vec(),
        None => uniform_grid(3.0, 0.1)?,
    };

    let mut w = csv::Writer::from_writer(output(g.out.as_deref())?);
    w.write_record([
        "lambda",
        "radius_over_sigma",
        "consistent",
        "violation",
        "target_shifted",
        "threshold",
    ])?;
    for lambda in lambdas {
        let shift = ShiftRatio::new(lambda)?;
        let wc = construct_worst_case(&bounds, k, shift, g.seed)?;
        let l = bounds.target();
        w.write_record([
            lambda.to_string(),
            (radius / g.sigma).to_string(),
            u8::from(is_consistent(&wc, &bounds)).to_string(),
            u8::from(verify_violation(&wc, &bounds, k, shift, l)).to_string(),
            measure_shifted(wc.region(l), shift).to_string(),
            wc.threshold.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
