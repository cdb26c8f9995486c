//! Command-line front end for the `lpnested` library.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lpnested::bayes::{location_posterior_grid, GridSpec};
use lpnested::check::run_checks;
use lpnested::data::{write_table, Dataset};
use lpnested::fitting::{fit, FitConfig};
use lpnested::nrf::transform_dataset;
use lpnested::radial::RadialFamily;
use lpnested::sampler::sample_seeded;
use lpnested::{Error, LpNestedModel, LpTree};

#[derive(Parser)]
#[command(name = "lpnested", version, about = "Fit, sample and transform L_p-nested symmetric distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit radial law, exponents and rotation to data
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Tree file, or the tree itself when the value starts with '('
        #[arg(long)]
        tree: String,
        /// lognormal, gammap[:P] or lnmix[:K]
        #[arg(long, default_value = "lognormal")]
        radial: String,
        /// JSON fit configuration
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model JSON destination (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Log-likelihood trace CSV destination
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Number of random restarts (overrides the config)
        #[arg(long)]
        starts: Option<usize>,
        /// Restart seed (overrides the config)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw samples from a model
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "n-samples")]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply nested radial factorization to data
    Transform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-sample log-density of data under a model
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Location posterior on a grid with the scale integrated out
    Posterior {
        #[arg(long)]
        tree: String,
        #[arg(long)]
        data: PathBuf,
        /// JSON grid specification
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Values of f on a grid over [-1.5, 1.5]^2 in the first two coordinates
    Contour {
        #[arg(long)]
        tree: String,
        /// Comma-separated levels
        #[arg(long, value_delimiter = ',', default_value = "1")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in numerical self-check
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
    },
}

enum Failure {
    Data(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Numeric(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Fit {
            data,
            tree,
            radial,
            config,
            out,
            trace,
            starts,
            seed,
        } => {
            let mut cfg = read_config(config.as_deref())?;
            cfg.starts = starts.unwrap_or(cfg.starts);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cmd_fit(&data, &tree, &radial, &cfg, out.as_deref(), trace.as_deref())
        }
        Command::Sample {
            model,
            n_samples,
            seed,
            threads,
            out,
        } => {
            let model = LpNestedModel::load(&model)?;
            let data = sample_seeded(&model, seed, n_samples, threads);
            with_output(out.as_deref(), |w| Ok(data.write_csv(w)?))
        }
        Command::Transform { model, data, out } => {
            let model = LpNestedModel::load(&model)?;
            let data = read_data(&data)?;
            let (z, logjac) = transform_dataset(&model, &data)?;
            let mut labels = z.labels().to_vec();
            labels.push("logjac".into());
            let rows: Vec<Vec<f64>> = z
                .rows()
                .zip(&logjac)
                .map(|(r, l)| r.iter().copied().chain([*l]).collect())
                .collect();
            with_output(out.as_deref(), |w| Ok(write_table(w, &labels, rows.iter().map(Vec::as_slice))?))
        }
        Command::Eval { model, data, out } => {
            let model = LpNestedModel::load(&model)?;
            let data = read_data(&data)?;
            let ld = model.log_densities(&data)?;
            let mean = ld.iter().sum::<f64>() / ld.len() as f64;
            let sd = (ld.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ld.len() as f64 - 1.0).max(1.0)).sqrt();
            with_output(out.as_deref(), |w| Ok(write_table(w, &["log_density"], ld.chunks(1))?))?;
            eprintln!(
                "{} samples: mean log-density {mean:.6} nats ({:.6} nats/dim), standard error {:.6}",
                ld.len(),
                mean / model.n() as f64,
                sd / (ld.len() as f64).sqrt()
            );
            Ok(())
        }
        Command::Posterior { tree, data, grid, out } => {
            let tree = read_tree(&tree)?;
            let data = read_data(&data)?;
            let text = std::fs::read_to_string(&grid).map_err(|e| Failure::Data(format!("cannot read {}: {e}", grid.display())))?;
            let spec = GridSpec::from_json(&text)?;
            let post = location_posterior_grid(&tree, &data, spec.points(tree.n())?, &spec.prior)?;
            let mut labels: Vec<String> = (0..tree.n()).map(|i| format!("mu{i}")).collect();
            labels.extend(["log_joint", "log_posterior", "posterior"].map(String::from));
            let rows: Vec<Vec<f64>> = post
                .points
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let lp = post.log_posterior[k];
                    p.iter().copied().chain([post.log_joint[k], lp, lp.exp()]).collect()
                })
                .collect();
            with_output(out.as_deref(), |w| Ok(write_table(w, &labels, rows.iter().map(Vec::as_slice))?))
        }
        Command::Contour {
            tree,
            levels,
            resolution,
            out,
        } => {
            let tree = read_tree(&tree)?;
            cmd_contour(&tree, &levels, resolution, out.as_deref())
        }
        Command::Check { seed, samples } => {
            let results = run_checks(seed, samples);
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!("{r}");
            }
            println!("{} of {} checks passed", results.len() - failed, results.len());
            if failed > 0 {
                return Err(Failure::Numeric(format!("{failed} checks failed")));
            }
            Ok(())
        }
    }
}

fn cmd_fit(
    data: &Path,
    tree: &str,
    radial: &str,
    cfg: &FitConfig,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Outcome {
    let data = read_data(data)?;
    let tree = read_tree(tree)?;
    let family: RadialFamily = radial.parse()?;
    cfg.validate()?;
    let outcome = fit(&tree, family, &data, cfg)?;
    if let Some(path) = trace {
        let mut w = csv_writer(path)?;
        writeln!(w, "start,cycle,block,loglik")?;
        for e in &outcome.trace {
            writeln!(w, "{},{},{},{:?}", e.start, e.cycle, e.block, e.loglik)?;
        }
        w.flush()?;
    }
    let json = outcome.model.to_json();
    with_output(out, |w| {
        writeln!(w, "{json}")?;
        Ok(())
    })?;
    eprintln!(
        "log-likelihood {:.6} ({:.6} nats/dim per sample)",
        outcome.loglik,
        outcome.loglik / (data.m() * data.n()) as f64
    );
    Ok(())
}

fn read_config(path: Option<&Path>) -> Result<FitConfig, Failure> {
    let Some(path) = path else {
        return Ok(FitConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Data(format!("config: {e}")))
}

fn cmd_contour(tree: &LpTree, levels: &[f64], resolution: usize, out: Option<&Path>) -> Outcome {
    if tree.n() < 2 {
        return Err(Failure::Data("contour needs at least two leaves".into()));
    }
    if resolution < 2 {
        return Err(Failure::Data("resolution must be at least 2".into()));
    }
    if levels.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Failure::Data("levels must be positive".into()));
    }
    let mut labels: Vec<String> = vec!["x0".into(), "x1".into(), "f".into()];
    labels.extend((0..levels.len()).map(|k| format!("le_{k}")));
    let step = 3.0 / (resolution - 1) as f64;
    let mut x = vec![0.0; tree.n()];
    let mut rows = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            x[0] = -1.5 + step * i as f64;
            x[1] = -1.5 + step * j as f64;
            let f = tree.value(&x)?;
            let mut row = vec![x[0], x[1], f];
            row.extend(levels.iter().map(|&l| if f <= l { 1.0 } else { 0.0 }));
            rows.push(row);
        }
    }
    with_output(out, |w| Ok(write_table(w, &labels, rows.iter().map(Vec::as_slice))?))
}

fn read_data(path: &Path) -> Result<Dataset, Failure> {
    Ok(Dataset::read_csv_path(path)?)
}

fn read_tree(arg: &str) -> Result<LpTree, Failure> {
    let text = if arg.trim_start().starts_with('(') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| Failure::Data(format!("cannot read tree file {arg}: {e}")))?
    };
    Ok(LpTree::parse(text.trim())?)
}

fn csv_writer(path: &Path) -> Result<BufWriter<File>, Failure> {
    let file = File::create(path).map_err(|e| Failure::Data(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn with_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Outcome) -> Outcome {
    match path {
        Some(path) => {
            let mut w = csv_writer(path)?;
            body(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            body(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}
