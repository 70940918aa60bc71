//! Batch driver for the potential-recovery toolkit.
//!
//! One experiment per invocation. Numeric results land in `--out` as CSV
//! (traces, coefficients, fields) and JSON (experiment reports); stdout gets
//! a one-line summary per artifact. Exit codes: 0 success, 1 bad input
//! (flags, config, shapes, CFL), 2 numerical failure (the march blew up).
//!
//! Parameters resolve in order: built-in default, then `--config` file
//! (flat `key=value` lines, `#` comments), then explicit flags. A config
//! line with a key this tool does not know is an error, not a warning:
//! silently ignored knobs are how wrong results get published.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use acougrad_core::adjoint::{residual, solve_adjoint_continuous, solve_adjoint_discrete};
use acougrad_core::error::{Error, Result};
use acougrad_core::experiments::{
    fixtures, gradcheck_report, gradient_comparison_study, inversion_report, stability_study,
    synthesize_data, SynthesisMode,
};
use acougrad_core::forward::{
    solve_forward, trace_at_zero, FirstLayer, InitialData, NeumannMode, SchemeOptions,
    SchemeVariant,
};
use acougrad_core::gradient::{gradient_continuous, gradient_discrete, GradientBoundary};
use acougrad_core::grid::{CoefficientVector, Grid, GridOptions, ObservedTrace};
use acougrad_core::io;
use acougrad_core::objective::{landweber_run, run_inversion, DescentConfig, LineSearch};
use acougrad_core::transforms::{impedance_profile, impedance_to_potential};

#[derive(Parser)]
#[command(
    name = "acougrad",
    version,
    about = "1D acoustic potential recovery: forward runs, adjoint gradients, inversion",
    after_help = "Exit codes: 0 success, 1 invalid input, 2 numerical blow-up."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for every random choice this run makes
    #[arg(long, global = true, env = "ACOUGRAD_SEED")]
    seed: Option<u64>,

    /// Flat key=value parameter file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for output files
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Thread count for the parallel parts (finite-difference sweeps)
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem and write the boundary trace
    Forward {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        source: SourceArgs,
        /// Initial displacement CSV; default is the coefficient itself
        #[arg(long)]
        init: Option<PathBuf>,
        /// Also write the full space-time field
        #[arg(long)]
        field: bool,
    },
    /// Solve the backward (adjoint) problem for a residual and write its field
    Adjoint {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        source: SourceArgs,
        /// discrete | continuous
        #[arg(long)]
        formulation: Option<String>,
    },
    /// Compute the misfit gradient at a coefficient and write it
    Gradient {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        source: SourceArgs,
        /// discrete | continuous
        #[arg(long)]
        formulation: Option<String>,
        /// half-cell | replicate | zero (node-0 convention)
        #[arg(long)]
        boundary: Option<String>,
    },
    /// Check the adjoint gradient against centered finite differences
    Gradcheck {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        source: SourceArgs,
        /// Comma-separated finite-difference steps
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Compare discrete and continuous gradients under grid refinement
    CompareGradients {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        source: SourceArgs,
        /// Number of 2x refinements
        #[arg(long)]
        refinements: Option<usize>,
    },
    /// Recover the coefficient by line-searched descent
    Invert {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        descent: DescentArgs,
        /// Starting coefficient CSV; default zero
        #[arg(long)]
        p0: Option<PathBuf>,
    },
    /// Recover the coefficient by fixed-step iteration
    Landweber {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        descent: DescentArgs,
        /// Starting coefficient CSV; default zero
        #[arg(long)]
        p0: Option<PathBuf>,
        /// Fixed step size
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Generate observed data from a known coefficient
    Synthesize {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Convert a depth-domain medium profile into a potential on a grid
    Transform {
        #[command(flatten)]
        grid: GridArgs,
        /// Medium CSV with header k,z,c,rho
        #[arg(long)]
        medium: PathBuf,
    },
    /// March just under and just over the stability bound, report both
    Stability {
        #[command(flatten)]
        grid: GridArgs,
        /// Time layers for both runs
        #[arg(long)]
        steps: Option<usize>,
        /// tau/h for the bounded run
        #[arg(long)]
        ratio_stable: Option<f64>,
        /// tau/h for the divergent run
        #[arg(long)]
        ratio_unstable: Option<f64>,
    },
}

#[derive(Args, Default)]
struct GridArgs {
    /// Domain length
    #[arg(long = "L")]
    length: Option<f64>,
    /// Time horizon
    #[arg(long = "T")]
    duration: Option<f64>,
    /// Space intervals
    #[arg(long = "N")]
    n: Option<usize>,
    /// Time layers
    #[arg(long = "M")]
    m: Option<usize>,
}

#[derive(Args, Default)]
struct SchemeArgs {
    /// plain | hat (where the potential enters the update)
    #[arg(long)]
    variant: Option<String>,
    /// taylor | euler (first computed layer)
    #[arg(long)]
    start: Option<String>,
    /// mirror | one-sided (left boundary condition)
    #[arg(long)]
    neumann: Option<String>,
}

#[derive(Args, Default)]
struct SourceArgs {
    /// Named fixture: `recovery` (Gaussian target on the unit domain)
    #[arg(long)]
    preset: Option<String>,
    /// Coefficient CSV (i,x,value)
    #[arg(long)]
    coeff: Option<PathBuf>,
    /// Observed trace CSV (j,t,value); otherwise data are synthesized
    #[arg(long)]
    data: Option<PathBuf>,
    /// Relative noise level for synthesized data
    #[arg(long)]
    noise: Option<f64>,
    /// same-grid | refined-2x (inverse-crime control for synthesized data)
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args, Default)]
struct DescentArgs {
    #[arg(long)]
    max_iter: Option<usize>,
    /// backtracking | golden | quadratic
    #[arg(long)]
    line_search: Option<String>,
    #[arg(long)]
    alpha_init: Option<f64>,
    #[arg(long)]
    armijo_c: Option<f64>,
    #[arg(long)]
    shrink: Option<f64>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Absolute misfit target; default is 1e-12 of the starting misfit
    #[arg(long)]
    j_tol: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; they are not failures
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

/// Keys a config file may define. Anything else is rejected by name.
const CONFIG_KEYS: &[&str] = &[
    "L",
    "T",
    "N",
    "M",
    "seed",
    "preset",
    "noise",
    "mode",
    "variant",
    "start",
    "neumann",
    "formulation",
    "boundary",
    "eps",
    "refinements",
    "max_iter",
    "line_search",
    "alpha_init",
    "armijo_c",
    "shrink",
    "grad_tol",
    "j_tol",
    "alpha",
    "steps",
    "ratio_stable",
    "ratio_unstable",
];

struct Config(BTreeMap<String, String>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self> {
        let map = match path {
            Some(p) => io::read_config(p)?,
            None => BTreeMap::new(),
        };
        for key in map.keys() {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "unknown config key `{key}`"
                )));
            }
        }
        Ok(Config(map))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("config key `{key}`: cannot parse `{raw}`"))
            }),
        }
    }

    fn string(&self, key: &str) -> Option<String> {
        self.0.get(key).cloned()
    }
}

struct Ctx {
    cfg: Config,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::File {
            path: self.out.display().to_string(),
            source: e,
        })?;
        Ok(self.out.join(name))
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::InvalidConfig("--jobs must be at least 1".into()));
        }
        // ignore the error if a pool already exists (only possible in tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let seed = cli.seed.or(cfg.parsed::<u64>("seed")?).unwrap_or(0);
    let out = cli.out.unwrap_or_else(|| PathBuf::from("."));
    let ctx = Ctx { cfg, seed, out };

    match cli.command {
        Command::Forward {
            grid,
            scheme,
            source,
            init,
            field,
        } => cmd_forward(&ctx, &grid, &scheme, &source, init.as_deref(), field),
        Command::Adjoint {
            grid,
            scheme,
            source,
            formulation,
        } => cmd_adjoint(&ctx, &grid, &scheme, &source, formulation),
        Command::Gradient {
            grid,
            scheme,
            source,
            formulation,
            boundary,
        } => cmd_gradient(&ctx, &grid, &scheme, &source, formulation, boundary),
        Command::Gradcheck {
            grid,
            scheme,
            source,
            eps,
        } => cmd_gradcheck(&ctx, &grid, &scheme, &source, eps),
        Command::CompareGradients {
            grid,
            scheme,
            source,
            refinements,
        } => cmd_compare_gradients(&ctx, &grid, &scheme, &source, refinements),
        Command::Invert {
            grid,
            scheme,
            source,
            descent,
            p0,
        } => cmd_invert(&ctx, &grid, &scheme, &source, &descent, p0.as_deref(), None),
        Command::Landweber {
            grid,
            scheme,
            source,
            descent,
            p0,
            alpha,
        } => cmd_invert(
            &ctx,
            &grid,
            &scheme,
            &source,
            &descent,
            p0.as_deref(),
            Some(alpha),
        ),
        Command::Synthesize {
            grid,
            scheme,
            source,
        } => cmd_synthesize(&ctx, &grid, &scheme, &source),
        Command::Transform { grid, medium } => cmd_transform(&ctx, &grid, &medium),
        Command::Stability {
            grid,
            steps,
            ratio_stable,
            ratio_unstable,
        } => cmd_stability(&ctx, &grid, steps, ratio_stable, ratio_unstable),
    }
}

// ---- parameter resolution ----------------------------------------------

fn pick<T>(flag: Option<T>, cfg: Option<T>, default: T) -> T {
    flag.or(cfg).unwrap_or(default)
}

#[derive(Clone, Copy)]
enum Preset {
    Recovery,
}

impl Preset {
    fn target(self, grid: Grid) -> CoefficientVector {
        match self {
            Preset::Recovery => fixtures::canonical_q_true(grid),
        }
    }
}

fn preset_of(source: &SourceArgs, cfg: &Config) -> Result<Option<Preset>> {
    match source.preset.clone().or(cfg.string("preset")) {
        None => Ok(None),
        Some(name) => match name.as_str() {
            "recovery" => Ok(Some(Preset::Recovery)),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset `{other}` (available: recovery)"
            ))),
        },
    }
}

fn grid_of(ga: &GridArgs, cfg: &Config) -> Result<Grid> {
    let length = pick(ga.length, cfg.parsed("L")?, 1.0);
    let duration = pick(ga.duration, cfg.parsed("T")?, 2.0);
    let n = pick(ga.n, cfg.parsed("N")?, 50);
    let m = pick(ga.m, cfg.parsed("M")?, 200);
    Grid::new(length, duration, n, m)
}

fn scheme_of(sa: &SchemeArgs, cfg: &Config) -> Result<SchemeOptions> {
    let mut opts = SchemeOptions::default();
    if let Some(v) = sa.variant.clone().or(cfg.string("variant")) {
        opts.variant = match v.as_str() {
            "plain" => SchemeVariant::Plain,
            "hat" => SchemeVariant::HatPotential,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "variant must be plain or hat, got `{other}`"
                )))
            }
        };
    }
    if let Some(v) = sa.start.clone().or(cfg.string("start")) {
        opts.first_layer = match v.as_str() {
            "taylor" => FirstLayer::TaylorSecondOrder,
            "euler" => FirstLayer::EulerFirstOrder,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "start must be taylor or euler, got `{other}`"
                )))
            }
        };
    }
    if let Some(v) = sa.neumann.clone().or(cfg.string("neumann")) {
        opts.neumann = match v.as_str() {
            "mirror" => NeumannMode::MirrorGhost,
            "one-sided" => NeumannMode::OneSidedFirstOrder,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "neumann must be mirror or one-sided, got `{other}`"
                )))
            }
        };
    }
    Ok(opts)
}

fn boundary_of(flag: Option<String>, cfg: &Config) -> Result<GradientBoundary> {
    match flag.or(cfg.string("boundary")).as_deref() {
        None | Some("half-cell") => Ok(GradientBoundary::HalfCellExact),
        Some("replicate") => Ok(GradientBoundary::ReplicateFirstInterior),
        Some("zero") => Ok(GradientBoundary::ZeroBoundary),
        Some(other) => Err(Error::InvalidConfig(format!(
            "boundary must be half-cell, replicate, or zero, got `{other}`"
        ))),
    }
}

fn mode_of(source: &SourceArgs, cfg: &Config) -> Result<SynthesisMode> {
    match source.mode.clone().or(cfg.string("mode")).as_deref() {
        None | Some("same-grid") => Ok(SynthesisMode::SameGrid),
        Some("refined-2x") => Ok(SynthesisMode::Refined2x),
        Some(other) => Err(Error::InvalidConfig(format!(
            "mode must be same-grid or refined-2x, got `{other}`"
        ))),
    }
}

fn descent_of(
    da: &DescentArgs,
    cfg: &Config,
    scheme: SchemeOptions,
    alpha: Option<Option<f64>>,
) -> Result<DescentConfig> {
    let mut c = DescentConfig {
        scheme,
        ..DescentConfig::default()
    };
    c.max_iter = pick(da.max_iter, cfg.parsed("max_iter")?, c.max_iter);
    if let Some(v) = da.line_search.clone().or(cfg.string("line_search")) {
        c.line_search = match v.as_str() {
            "backtracking" => LineSearch::Backtracking,
            "golden" => LineSearch::GoldenSection,
            "quadratic" => LineSearch::QuadraticFit,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "line_search must be backtracking, golden, or quadratic, got `{other}`"
                )))
            }
        };
    }
    c.alpha_init = pick(da.alpha_init, cfg.parsed("alpha_init")?, c.alpha_init);
    c.armijo_c = pick(da.armijo_c, cfg.parsed("armijo_c")?, c.armijo_c);
    c.shrink = pick(da.shrink, cfg.parsed("shrink")?, c.shrink);
    c.grad_tol = pick(da.grad_tol, cfg.parsed("grad_tol")?, c.grad_tol);
    c.j_tol = da.j_tol.or(cfg.parsed("j_tol")?).or(c.j_tol);
    if let Some(flag) = alpha {
        c.landweber_alpha = pick(flag, cfg.parsed("alpha")?, c.landweber_alpha);
    }
    c.validate()?;
    Ok(c)
}

/// Coefficient from a CSV file, shape-checked against the grid.
fn coeff_from_file(grid: Grid, path: &Path) -> Result<CoefficientVector> {
    let raw = io::read_coeff_csv(path)?;
    if raw.values.len() != grid.nodes() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "{}: {} nodes, grid wants {}",
                path.display(),
                raw.values.len(),
                grid.nodes()
            ),
        });
    }
    Ok(CoefficientVector {
        grid,
        values: raw.values.into(),
    })
}

/// The coefficient an experiment treats as ground truth.
fn target_of(grid: Grid, source: &SourceArgs, cfg: &Config) -> Result<CoefficientVector> {
    if let Some(path) = &source.coeff {
        return coeff_from_file(grid, path);
    }
    match preset_of(source, cfg)? {
        Some(p) => Ok(p.target(grid)),
        None => Err(Error::InvalidConfig(
            "no coefficient: pass --coeff FILE or --preset recovery".into(),
        )),
    }
}

/// Observed data for commands that consume a trace: an explicit file, or a
/// preset target synthesized on the spot. Returns the generating coefficient
/// when we know it. `--coeff` never feeds this path; there it names the
/// point the command evaluates at, not the truth behind the data.
fn data_of(
    grid: Grid,
    source: &SourceArgs,
    cfg: &Config,
    scheme: SchemeOptions,
    seed: u64,
) -> Result<(ObservedTrace, Option<CoefficientVector>, f64)> {
    if let Some(path) = &source.data {
        let raw = io::read_trace_csv(path)?;
        if raw.values.len() != grid.layers() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "{}: {} layers, grid wants {}",
                    path.display(),
                    raw.values.len(),
                    grid.layers()
                ),
            });
        }
        let t_end = raw.t[raw.t.len() - 1];
        if (t_end - grid.duration).abs() > 1e-9 * grid.duration.max(1.0) {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "{}: trace ends at t = {t_end}, grid ends at T = {}",
                    path.display(),
                    grid.duration
                ),
            });
        }
        let trace = ObservedTrace {
            grid,
            values: raw.values.into(),
        };
        return Ok((trace, None, 0.0));
    }
    let q = match preset_of(source, cfg)? {
        Some(p) => p.target(grid),
        None => {
            return Err(Error::InvalidConfig(
                "no data: pass --data FILE or --preset recovery".into(),
            ))
        }
    };
    let noise = pick(source.noise, cfg.parsed("noise")?, 0.0);
    let mode = mode_of(source, cfg)?;
    let f = synthesize_data(grid, &q, noise, seed, mode, scheme)?;
    Ok((f, Some(q), noise))
}

/// Starting point for inversions: explicit file or zero.
fn start_of(grid: Grid, p0: Option<&Path>) -> Result<CoefficientVector> {
    match p0 {
        Some(path) => coeff_from_file(grid, path),
        None => Ok(CoefficientVector::zeros(grid)),
    }
}

fn note(path: &Path, what: &str) {
    println!("wrote {} ({what})", path.display());
}

// ---- subcommands ---------------------------------------------------------

fn cmd_forward(
    ctx: &Ctx,
    ga: &GridArgs,
    sa: &SchemeArgs,
    source: &SourceArgs,
    init: Option<&Path>,
    field: bool,
) -> Result<()> {
    let grid = grid_of(ga, &ctx.cfg)?;
    let scheme = scheme_of(sa, &ctx.cfg)?;
    let p = target_of(grid, source, &ctx.cfg)?;
    let initial = match init {
        Some(path) => InitialData::Explicit(coeff_from_file(grid, path)?.values),
        None => InitialData::CoefficientAsInitial,
    };
    let y = solve_forward(grid, &p, &initial, scheme)?;

    let trace_path = ctx.path("trace.csv")?;
    io::write_trace_csv(&trace_path, &trace_at_zero(&y))?;
    note(&trace_path, "boundary trace");
    if field {
        let field_path = ctx.path("field.csv")?;
        io::write_field_csv(&field_path, &y)?;
        note(&field_path, "space-time field");
    }
    Ok(())
}

fn cmd_adjoint(
    ctx: &Ctx,
    ga: &GridArgs,
    sa: &SchemeArgs,
    source: &SourceArgs,
    formulation: Option<String>,
) -> Result<()> {
    let grid = grid_of(ga, &ctx.cfg)?;
    let scheme = scheme_of(sa, &ctx.cfg)?;
    let (f, _, _) = data_of(grid, source, &ctx.cfg, scheme, ctx.seed)?;
    // the adjoint is evaluated at the inversion's starting point
    let p = start_of(grid, source.coeff.as_deref())?;
    let y = solve_forward(grid, &p, &InitialData::CoefficientAsInitial, scheme)?;
    let r = residual(&trace_at_zero(&y), &f)?;
    let phi = match formulation
        .or(ctx.cfg.string("formulation"))
        .as_deref()
        .unwrap_or("discrete")
    {
        "discrete" => solve_adjoint_discrete(grid, &p, &r, scheme)?,
        "continuous" => solve_adjoint_continuous(grid, &p, &r)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "formulation must be discrete or continuous, got `{other}`"
            )))
        }
    };
    let path = ctx.path("adjoint_field.csv")?;
    io::write_field_csv(&path, &phi)?;
    note(&path, "adjoint field");
    Ok(())
}

fn cmd_gradient(
    ctx: &Ctx,
    ga: &GridArgs,
    sa: &SchemeArgs,
    source: &SourceArgs,
    formulation: Option<String>,
    boundary: Option<String>,
) -> Result<()> {
    let grid = grid_of(ga, &ctx.cfg)?;
    let scheme = scheme_of(sa, &ctx.cfg)?;
    let bnd = boundary_of(boundary, &ctx.cfg)?;
    let (f, _, _) = data_of(grid, source, &ctx.cfg, scheme, ctx.seed)?;
    let p = start_of(grid, source.coeff.as_deref())?;
    let y = solve_forward(grid, &p, &InitialData::CoefficientAsInitial, scheme)?;
    let r = residual(&trace_at_zero(&y), &f)?;
    let g = match formulation
        .or(ctx.cfg.string("formulation"))
        .as_deref()
        .unwrap_or("discrete")
    {
        "discrete" => {
            let phi = solve_adjoint_discrete(grid, &p, &r, scheme)?;
            gradient_discrete(&y, &phi, scheme, bnd)?
        }
        "continuous" => {
            let psi = solve_adjoint_continuous(grid, &p, &r)?;
            gradient_continuous(&y, &psi, bnd)?
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "formulation must be discrete or continuous, got `{other}`"
            )))
        }
    };
    let path = ctx.path("gradient.csv")?;
    io::write_coeff_csv(&path, &g)?;
    note(&path, "misfit gradient");
    Ok(())
}

fn cmd_gradcheck(
    ctx: &Ctx,
    ga: &GridArgs,
    sa: &SchemeArgs,
    source: &SourceArgs,
    eps: Option<Vec<f64>>,
) -> Result<()> {
    let grid = grid_of(ga, &ctx.cfg)?;
    let scheme = scheme_of(sa, &ctx.cfg)?;
    let (f, _, noise) = data_of(grid, source, &ctx.cfg, scheme, ctx.seed)?;
    let p = start_of(grid, source.coeff.as_deref())?;
    let eps = match eps {
        Some(list) => list,
        None => match ctx.cfg.string("eps") {
            Some(raw) => parse_eps_list(&raw)?,
            None => vec![1e-3, 1e-4, 1e-5, 1e-6],
        },
    };
    let mut rep = gradcheck_report(grid, &p, &f, &eps, scheme)?;
    rep.seed = ctx.seed;
    rep.params.insert("noise_level".into(), noise);

    let path = ctx.path("gradcheck.json")?;
    io::write_report_json(&path, &rep)?;
    note(&path, "gradient check report");
    println!(
        "max relative error {:.3e} at the best step",
        rep.metrics["max_rel_err_best"]
    );
    Ok(())
}

fn parse_eps_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|tok| {
            tok.trim().parse::<f64>().map_err(|_| {
                Error::InvalidConfig(format!("config key `eps`: cannot parse `{tok}`"))
            })
        })
        .collect()
}

fn cmd_compare_gradients(
    ctx: &Ctx,
    ga: &GridArgs,
    sa: &SchemeArgs,
    source: &SourceArgs,
    refinements: Option<usize>,
) -> Result<()> {
    let grid = grid_of(ga, &ctx.cfg)?;
    let scheme = scheme_of(sa, &ctx.cfg)?;
    let q = target_of(grid, source, &ctx.cfg)?;
    let p = CoefficientVector::zeros(grid);
    let refinements = pick(refinements, ctx.cfg.parsed("refinements")?, 3);
    let mut rep = gradient_comparison_study(grid, refinements, &p, &q, scheme)?;
    rep.seed = ctx.seed;

    let path = ctx.path("compare_gradients.json")?;
    io::write_report_json(&path, &rep)?;
    note(&path, "formulation comparison report");
    if let Some(order) = rep.metrics.get("fitted_order") {
        println!("fitted order {order:.3} over {refinements} refinements");
    }
    Ok(())
}

fn cmd_invert(
    ctx: &Ctx,
    ga: &GridArgs,
    sa: &SchemeArgs,
    source: &SourceArgs,
    da: &DescentArgs,
    p0: Option<&Path>,
    alpha: Option<Option<f64>>,
) -> Result<()> {
    let grid = grid_of(ga, &ctx.cfg)?;
    let scheme = scheme_of(sa, &ctx.cfg)?;
    let cfg = descent_of(da, &ctx.cfg, scheme, alpha)?;
    let (f, q_true, noise) = data_of(grid, source, &ctx.cfg, scheme, ctx.seed)?;
    let start = start_of(grid, p0)?;

    let fixed_step = alpha.is_some();
    let state = if fixed_step {
        landweber_run(grid, start, &f, &cfg)?
    } else {
        run_inversion(grid, start, &f, &cfg)?
    };

    let name = if fixed_step { "landweber" } else { "invert" };
    let p_final = state.iterate.clone();
    let stop = state.stop_reason;
    let mut rep = inversion_report(name, grid, ctx.seed, state, q_true.as_ref())?;
    if q_true.is_some() {
        rep.params.insert("noise_level".into(), noise);
    }
    if fixed_step {
        rep.params.insert("alpha".into(), cfg.landweber_alpha);
    }

    let report_path = ctx.path(&format!("{name}.json"))?;
    io::write_report_json(&report_path, &rep)?;
    note(&report_path, "inversion report");
    let coeff_path = ctx.path("p_final.csv")?;
    io::write_coeff_csv(&coeff_path, &p_final)?;
    note(&coeff_path, "recovered coefficient");
    println!(
        "J {:.6e} -> {:.6e} in {} iterations, stopped by {}",
        rep.metrics["j_initial"],
        rep.metrics["j_final"],
        rep.metrics["iterations"],
        stop.map(|s| s.to_string()).unwrap_or_else(|| "none".into())
    );
    Ok(())
}

fn cmd_synthesize(ctx: &Ctx, ga: &GridArgs, sa: &SchemeArgs, source: &SourceArgs) -> Result<()> {
    let grid = grid_of(ga, &ctx.cfg)?;
    let scheme = scheme_of(sa, &ctx.cfg)?;
    let q = target_of(grid, source, &ctx.cfg)?;
    let noise = pick(source.noise, ctx.cfg.parsed("noise")?, 0.0);
    let mode = mode_of(source, &ctx.cfg)?;
    let f = synthesize_data(grid, &q, noise, ctx.seed, mode, scheme)?;

    let path = ctx.path("data.csv")?;
    io::write_trace_csv(&path, &f)?;
    note(&path, "synthesized trace");
    Ok(())
}

fn cmd_transform(ctx: &Ctx, ga: &GridArgs, medium: &Path) -> Result<()> {
    let grid = grid_of(ga, &ctx.cfg)?;
    let m = io::read_medium_csv(medium)?;
    let prof = impedance_profile(&m)?;
    let depth = prof.x[prof.x.len() - 1];
    let q = impedance_to_potential(&prof, grid)?;

    let path = ctx.path("potential.csv")?;
    io::write_coeff_csv(&path, &q)?;
    note(&path, "potential from medium profile");
    println!(
        "profile reaches travel time {depth} over {} samples",
        m.z.len()
    );
    Ok(())
}

fn cmd_stability(
    ctx: &Ctx,
    ga: &GridArgs,
    steps: Option<usize>,
    ratio_stable: Option<f64>,
    ratio_unstable: Option<f64>,
) -> Result<()> {
    let n = pick(ga.n, ctx.cfg.parsed("N")?, 50);
    let length = pick(ga.length, ctx.cfg.parsed("L")?, 1.0);
    let steps = pick(steps, ctx.cfg.parsed("steps")?, 10_000);
    let rs = pick(ratio_stable, ctx.cfg.parsed("ratio_stable")?, 0.95);
    let ru = pick(ratio_unstable, ctx.cfg.parsed("ratio_unstable")?, 1.05);
    if !(rs > 0.0 && ru > 0.0) {
        return Err(Error::InvalidConfig(
            "stability ratios must be positive".into(),
        ));
    }
    // both grids opt out of the construction guard: probing the boundary is
    // the whole point here
    let free = GridOptions {
        allow_unstable: true,
        ..GridOptions::default()
    };
    let h = length / n as f64;
    let stable = Grid::with_options(length, rs * h * steps as f64, n, steps, free)?;
    let unstable = Grid::with_options(length, ru * h * steps as f64, n, steps, free)?;
    let mut rep = stability_study(stable, unstable)?;
    rep.seed = ctx.seed;

    let path = ctx.path("stability.json")?;
    io::write_report_json(&path, &rep)?;
    note(&path, "stability report");
    let blew = rep.metrics["unstable_blew_up"] == 1.0;
    println!(
        "growth {:.3} at ratio {rs}; ratio {ru} {}",
        rep.metrics["stable_growth_factor"],
        if blew { "blew up" } else { "stayed finite" }
    );
    Ok(())
}
