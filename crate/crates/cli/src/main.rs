use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use densilim::clarke::CalculusRule;
use densilim::exprcli::expr::Atan2Range;
use densilim::exprcli::{run, Command, Inputs, OutputFormat, RunConfig};
use densilim::measure::{DeltaSchedule, QuadMode};
use densilim::Error;

/// Density ratios, approximate limits, Clarke gradients and Gauss-Green checks.
#[derive(Parser)]
#[command(name = "densilim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Density of --set within --domain at --at (or near --near); cone densities with --direction.
    Density(Common),
    /// Approximate lim inf / lim sup of --f at --at, or the density interval near --near.
    Aplim(Common),
    /// Precise representative and Lebesgue-point test.
    Representative(Common),
    /// Jump normal and one-sided values.
    Jump(Common),
    /// Clarke generalized gradient; calculus rules with --rule.
    Clarke(Common),
    /// Gauss-Green residual on a registry domain.
    GaussGreen(Common),
    /// Difference of means over two disjoint sets meeting at --at.
    DemoVanishing(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Scalar field: registry name, `indicator:<region>` or expression in x1..xn.
    #[arg(long)]
    f: Option<String>,
    /// Second scalar field for calculus rules.
    #[arg(long)]
    g: Option<String>,
    /// Vector field, comma-joined components.
    #[arg(long)]
    phi: Option<String>,
    /// Region whose density is measured.
    #[arg(long)]
    set: Option<String>,
    /// Ambient region Ω (default: the whole space).
    #[arg(long)]
    domain: Option<String>,
    /// Null set C to work near instead of a point.
    #[arg(long)]
    near: Option<String>,
    /// Query point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    at: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Cone axis or directional-derivative direction, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    direction: Option<String>,
    /// Cone half-angle in radians.
    #[arg(long)]
    angle: Option<f64>,
    /// Search for the direction of maximal cone density.
    #[arg(long)]
    concentration: bool,
    /// scale:S, sum:A,B or product.
    #[arg(long, allow_hyphen_values = true)]
    rule: Option<String>,
    #[arg(long)]
    e1: Option<String>,
    #[arg(long)]
    e2: Option<String>,
    /// Gauss-Green refinement sweep over lattice resolutions, comma separated.
    #[arg(long)]
    sweep: Option<String>,
    /// delta0,ratio,K,w
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, default_value = "grid")]
    quad: String,
    /// Lattice points per δ-diameter.
    #[arg(long)]
    res: Option<usize>,
    /// Gauss-Green lattice points along the longest side of the domain.
    #[arg(long)]
    gg_res: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Half side of the bounding box for inline predicates.
    #[arg(long, default_value_t = 1.0)]
    window: f64,
    #[arg(long)]
    n_dirs: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    tol_density: Option<f64>,
    #[arg(long)]
    tol_alpha: Option<f64>,
    #[arg(long)]
    tol_jump: Option<f64>,
    #[arg(long)]
    tol_fd: Option<f64>,
    #[arg(long)]
    tol_cap: Option<f64>,
    #[arg(long)]
    tol_estimator: Option<f64>,
    /// Convergence tolerance of δ-sequences.
    #[arg(long)]
    tol_schedule: Option<f64>,
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    #[arg(long)]
    csv: bool,
    #[arg(long, default_value = "pmpi")]
    atan2_range: String,
}

fn numbers<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} component `{p}`")))
        })
        .collect()
}

fn parse_rule(s: &str) -> Result<CalculusRule, Error> {
    let (name, args) = s.split_once(':').unwrap_or((s, ""));
    let bad = || Error::InvalidArgument(format!("bad rule `{s}`"));
    match name {
        "scale" => Ok(CalculusRule::Scale {
            s: args.parse().map_err(|_| bad())?,
        }),
        "sum" => match numbers::<f64>(args, "rule")?.as_slice() {
            [alpha, beta] => Ok(CalculusRule::Sum {
                alpha: *alpha,
                beta: *beta,
            }),
            _ => Err(bad()),
        },
        "product" => Ok(CalculusRule::Product),
        _ => Err(bad()),
    }
}

fn build(c: &Common) -> Result<(Inputs, RunConfig, Option<usize>), Error> {
    let opt_nums =
        |s: &Option<String>, what: &str| s.as_deref().map(|s| numbers::<f64>(s, what)).transpose();
    let inputs = Inputs {
        f: c.f.clone(),
        g: c.g.clone(),
        phi: c
            .phi
            .as_ref()
            .map(|p| p.split(',').map(|s| s.trim().to_string()).collect()),
        set: c.set.clone(),
        domain: c.domain.clone(),
        near: c.near.clone(),
        at: opt_nums(&c.at, "point")?,
        dim: c.dim,
        direction: opt_nums(&c.direction, "direction")?,
        angle: c.angle,
        concentration: c.concentration,
        rule: c.rule.as_deref().map(parse_rule).transpose()?,
        e1: c.e1.clone(),
        e2: c.e2.clone(),
        sweep: c
            .sweep
            .as_deref()
            .map(|s| numbers::<usize>(s, "sweep"))
            .transpose()?,
    };
    let mut cfg = RunConfig::default();
    if let Some(s) = &c.schedule {
        let p = numbers::<f64>(s, "schedule")?;
        if p.len() != 4 || p[2].fract() != 0.0 || p[3].fract() != 0.0 || p[2] < 0.0 || p[3] < 0.0 {
            return Err(Error::InvalidArgument(
                "--schedule expects delta0,ratio,K,w".into(),
            ));
        }
        let mut sched = DeltaSchedule::new(p[0], p[1], p[2] as usize, p[3] as usize)?;
        if let Some(t) = c.tol_schedule {
            sched = sched.with_tol(t);
        }
        cfg.schedule = Some(sched);
    }
    let est = &mut cfg.estimator;
    est.quad.mode = match c.quad.as_str() {
        "grid" => QuadMode::Grid,
        "mc" => QuadMode::MonteCarlo,
        other => {
            return Err(Error::InvalidArgument(format!(
                "--quad must be grid or mc, got `{other}`"
            )))
        }
    };
    if let Some(r) = c.res {
        est.quad.resolution = r;
    }
    if let Some(r) = c.gg_res {
        est.gauss_green.resolution = r;
    }
    let env_seed = std::env::var("DENSILIM_SEED").ok();
    if let Some(s) = env_seed {
        est.quad.seed = s.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("DENSILIM_SEED must be an integer, got `{s}`"))
        })?;
    } else if let Some(s) = c.seed {
        est.quad.seed = s;
    }
    if let Some(n) = c.n_samples {
        est.clarke.n_samples = n;
    }
    let t = &mut est.tol;
    for (dst, src) in [
        (&mut t.density_tol, c.tol_density),
        (&mut t.alpha_rel_tol, c.tol_alpha),
        (&mut t.jump_rel_tol, c.tol_jump),
        (&mut t.fd_tol, c.tol_fd),
        (&mut t.cap, c.tol_cap),
        (&mut t.estimator_tol, c.tol_estimator),
    ] {
        if let Some(v) = src {
            *dst = v;
        }
    }
    cfg.atan2_range = c.atan2_range.parse::<Atan2Range>()?;
    cfg.window = c.window;
    cfg.n_dirs = c.n_dirs;
    cfg.format = if c.csv {
        OutputFormat::Csv
    } else {
        OutputFormat::Json
    };
    Ok((inputs, cfg, c.threads))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match &cli.cmd {
        Cmd::Density(c) => (Command::Density, c),
        Cmd::Aplim(c) => (Command::Aplim, c),
        Cmd::Representative(c) => (Command::Representative, c),
        Cmd::Jump(c) => (Command::Jump, c),
        Cmd::Clarke(c) => (Command::Clarke, c),
        Cmd::GaussGreen(c) => (Command::GaussGreen, c),
        Cmd::DemoVanishing(c) => (Command::DemoVanishing, c),
    };
    let result = build(common).and_then(|(inputs, cfg, threads)| {
        let go = || run(cmd, &inputs, &cfg).map(|o| (o, cfg.format));
        match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .install(go),
            None => go(),
        }
    });
    match result {
        Ok((outcome, format)) => {
            println!("{}", outcome.render(format));
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
