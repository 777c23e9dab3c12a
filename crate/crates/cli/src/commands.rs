//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};
use serde_json::json;

use orderflow::config::RunConfig;
use orderflow::estimators::{self, EstimateReport};
use orderflow::hawkes::{aggregate_flows, simulate_core, simulate_two_layer, EventStream};
use orderflow::impact::{self, Injection, MetaorderSpec, PropagatorSpec};
use orderflow::ingest::{self, Session};
use orderflow::kernels::{resolvent as renewal_resolvent, KernelSpec};
use orderflow::limits::{self, MixedFbmParams, Noise, VolterraGrid};
use orderflow::rng::derive_seed;
use orderflow::scaling;
use orderflow::{PathGrid, UniformGrid};

use crate::{Flow, Method, Process};

pub struct Context {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Context {
    /// Output file, or stdout when `--out` is absent.
    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent)?;
                }
                Box::new(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
            }
            None => Box::new(io::stdout().lock()),
        })
    }

    fn dir(&self, cfg: &RunConfig) -> Result<PathBuf> {
        let dir = match (&self.out, cfg.out_dir.is_empty()) {
            (Some(p), _) => p.clone(),
            (None, false) => PathBuf::from(&cfg.out_dir),
            (None, true) => bail!("this subcommand writes a directory; pass --out DIR"),
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn config(&self, path: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => RunConfig::from_file(p).with_context(|| format!("reading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        eprint!("# resolved config\n{}", cfg.resolved());
        Ok(cfg)
    }
}

pub fn ml_eval(alpha: f64, beta: f64, x: f64) -> Result<()> {
    println!("{:?}", orderflow::specialfn::mittag_leffler(alpha, beta, x)?);
    Ok(())
}

pub fn ml_density(alpha: f64, lambda: f64, x: f64) -> Result<()> {
    println!("{:?}", orderflow::specialfn::ml_density(alpha, lambda, x)?);
    Ok(())
}

pub fn ml_cdf(alpha: f64, lambda: f64, x: f64) -> Result<()> {
    println!("{:?}", orderflow::specialfn::ml_cdf(alpha, lambda, x)?);
    Ok(())
}

pub fn resolvent(ctx: &Context, alpha: f64, a: f64, h: f64, horizon: f64) -> Result<()> {
    if !(h > 0.0 && horizon >= h) {
        bail!("need 0 < h ≤ horizon");
    }
    let grid = UniformGrid::new(h, (horizon / h).round() as usize)?;
    let kernel = KernelSpec::shifted_pareto(alpha)?.sample_on(grid);
    let psi = renewal_resolvent(&kernel, a)?;
    psi.write_csv(ctx.sink()?, "psi")?;
    Ok(())
}

pub fn simulate(ctx: &Context, config: Option<&Path>, paths: Option<usize>, core_only: bool) -> Result<()> {
    let mut cfg = ctx.config(config)?;
    if let Some(m) = paths {
        cfg.paths = m;
    }
    let params = cfg.two_layer()?;
    let dir = ctx.dir(&cfg)?;
    fs::write(dir.join("config.txt"), cfg.resolved())?;
    for m in 0..cfg.paths {
        let seed = derive_seed(cfg.seed, m as u64);
        let stream = if core_only {
            simulate_core(params.nu, params.a0, &params.core_kernel, cfg.T, seed)?
        } else {
            simulate_two_layer(&params, cfg.T, seed)?
        };
        let file = File::create(dir.join(format!("events_{m:04}.csv")))?;
        stream.write_csv(BufWriter::new(file))?;
    }
    eprintln!("wrote {} event files to {}", cfg.paths, dir.display());
    Ok(())
}

/// Copies `column` to a leading `value` column followed by every column.
fn with_value(path: &PathGrid, column: &str) -> Result<PathGrid> {
    let mut out = PathGrid::new(path.t0, path.step).with("value", path.series(column)?.to_vec())?;
    for name in path.names() {
        out.push(name, path.series(name)?.to_vec())?;
    }
    Ok(out)
}

pub fn limit_simulate(ctx: &Context, process: Process, config: Option<&Path>) -> Result<()> {
    let cfg = ctx.config(config)?;
    let noise = Noise::Seeded(cfg.seed);
    let n = cfg.steps;
    let path = match process {
        Process::Fbm => limits::simulate_fbm(cfg.hurst, n, 1.0, cfg.seed)?,
        Process::Mixed => {
            let p = MixedFbmParams::new(cfg.hurst, cfg.sigma_w, cfg.sigma_h)?;
            limits::simulate_mixed_fbm(&p, n, 1.0, cfg.seed)?
        }
        Process::Core | Process::Reaction | Process::Signed => {
            let lp = cfg.limit_params()?;
            let core_grid = VolterraGrid::new(lp.alpha0, lp.lambda0, n)?;
            let core = limits::simulate_core_limit(lp.mu0, &core_grid, noise)?;
            if let Process::Core = process {
                with_value(&core, "F")?
            } else {
                let reaction_grid = VolterraGrid::new(lp.alpha1(), lp.lambda1, n)?;
                let reaction = limits::simulate_reaction_limit(lp.lambda1, lp.mu1(), &core, &reaction_grid, noise)?;
                if let Process::Reaction = process {
                    with_value(&reaction, "U")?
                } else {
                    let signed = limits::simulate_signed_limit(&lp, &cfg.reaction_matrix()?, &core, &reaction)?;
                    with_value(&signed, "S")?
                }
            }
        }
    };
    path.write_csv(ctx.sink()?)?;
    Ok(())
}

pub fn rescale(ctx: &Context, config: Option<&Path>, input: &Path, kind: Flow) -> Result<()> {
    let cfg = ctx.config(config)?;
    let fh = cfg.finite_horizon()?;
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let stream = EventStream::read_csv(file, Some(cfg.T))?;
    let grid = UniformGrid::over(cfg.T, cfg.grid_points)?;
    let flows = aggregate_flows(&stream, &grid);
    let column = |p: &PathGrid, name: &str| -> Result<Vec<f64>> { Ok(p.series(name)?.to_vec()) };
    let out = match kind {
        Flow::Core => {
            let both = PathGrid::on(&grid)
                .with("value", column(&flows.core_unsigned, "F")?)?
                .with("F", column(&flows.core_unsigned, "F")?)?
                .with("V", column(&flows.core_signed, "V")?)?;
            scaling::rescale_core(&both, &fh)
        }
        Flow::Unsigned => scaling::rescale_unsigned(&with_value(&flows.unsigned, "U")?, &fh),
        Flow::Signed => scaling::rescale_signed(&with_value(&flows.signed, "S")?, &fh),
    };
    out.write_csv(ctx.sink()?)?;
    Ok(())
}

/// Named columns of a CSV file with a header row.
struct Table {
    names: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let names = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader.records().collect::<std::result::Result<_, _>>()?;
        Ok(Self { names, rows })
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index(name).ok_or_else(|| anyhow!("no column `{name}` (have {})", self.names.join(",")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| row[i].trim().parse::<f64>().with_context(|| format!("row {}, column `{name}`", r + 1)))
            .collect()
    }
}

fn estimate_path(method: Method, path: &[f64], delta: usize, max_lag: usize, truncate: f64) -> Result<EstimateReport> {
    Ok(match method {
        Method::Fbm => estimators::hurst_fbm(path, &[delta, 2 * delta, 4 * delta])?,
        Method::Mixed => estimators::hurst_mixed(path, delta)?,
        Method::Volume => estimators::hurst_volume_from_path(path, delta, max_lag, truncate)?,
    })
}

pub fn estimate(
    ctx: &Context,
    method: Method,
    input: &Path,
    column: Option<&str>,
    delta: usize,
    max_lag: usize,
    truncate: f64,
) -> Result<()> {
    let table = Table::read(input)?;
    let report = match table.index("date") {
        None => {
            let values = table.numbers(column.unwrap_or("value"))?;
            estimate_path(method, &values, delta, max_lag, truncate)?
        }
        Some(date_col) => {
            // binned trade files: estimate each day on its own and average
            let default = if let Method::Volume = method { "cum_unsigned" } else { "cum_signed" };
            let values = table.numbers(column.unwrap_or(default))?;
            let mut reports = Vec::new();
            let mut start = 0;
            while start < table.rows.len() {
                let day = &table.rows[start][date_col];
                let end = (start..table.rows.len()).find(|&r| &table.rows[r][date_col] != day).unwrap_or(table.rows.len());
                let mut path = vec![0.0];
                path.extend_from_slice(&values[start..end]);
                reports.push(estimate_path(method, &path, delta, max_lag, truncate)?);
                start = end;
            }
            let kind = reports.first().map(|r| r.method).ok_or_else(|| anyhow!("no rows in {}", input.display()))?;
            estimators::average_over_days(kind, &reports)
        }
    };
    let mut sink = ctx.sink()?;
    writeln!(sink, "{}", report.to_json()?)?;
    Ok(())
}

pub fn impact_curve(ctx: &Context, h0: f64, t_max: f64, points: usize) -> Result<()> {
    if !(t_max > 0.0) || points == 0 {
        bail!("need t_max > 0 and at least one point");
    }
    let grid = UniformGrid::over(t_max, points)?;
    impact::mi_curve(h0, &grid)?.write_csv(ctx.sink()?)?;
    Ok(())
}

pub fn metaorder(
    ctx: &Context,
    config: Option<&Path>,
    rate: f64,
    duration: f64,
    paths: usize,
    exogenous: bool,
) -> Result<()> {
    let cfg = ctx.config(config)?;
    let params = cfg.two_layer()?;
    let prop = PropagatorSpec::two_layer(&params, cfg.kappa)?;
    let injection = if exogenous { Injection::Exogenous } else { Injection::Core };
    let spec = MetaorderSpec { injection, ..MetaorderSpec::new(rate, duration, cfg.T, paths) };
    let result = impact::metaorder_experiment(&params, &prop, &spec, cfg.seed)?;
    let dir = ctx.dir(&cfg)?;
    fs::write(dir.join("config.txt"), cfg.resolved())?;
    result.curve.write_csv(BufWriter::new(File::create(dir.join("curve.csv"))?))?;
    let report = json!({
        "schema_version": estimators::SCHEMA_VERSION,
        "fitted_exponent": result.exponent,
        "fit_range": [0.1, 1.0],
        "peak": result.peak,
        "max_stderr": result.max_stderr,
        "rate": rate,
        "duration": duration,
        "paths": paths,
        "injection": injection,
        "kappa": cfg.kappa,
        "seed": cfg.seed,
    });
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(())
}

pub fn ingest(ctx: &Context, pattern: &str, session: &str, delta: f64) -> Result<()> {
    let session = Session::parse(session)?;
    let mut files: Vec<PathBuf> = glob::glob(pattern)
        .with_context(|| format!("bad glob `{pattern}`"))?
        .collect::<std::result::Result<_, _>>()?;
    files.sort();
    if files.is_empty() {
        bail!("no files match `{pattern}`");
    }
    let loaded = ingest::load_many(&files, &session)?;
    eprintln!(
        "{} files: {} trades kept, {} outside the session, {} malformed",
        files.len(),
        loaded.records.len(),
        loaded.filtered,
        loaded.malformed
    );
    let binned = ingest::bin_flows(&loaded.records, &session, delta)?;
    binned.write_csv(ctx.sink()?)?;
    Ok(())
}
