use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lattice_distances::density::BoundaryMode;
use lattice_distances::par;
use lattice_distances::report::{
    config_from_report, execute, render, timestamp, Command, ExperimentConfig, Format, Output,
    VerifyMode,
};
use lattice_distances::Error;

/// Experiments on distances realised by dense subsets of the integer lattice.
#[derive(Parser)]
#[command(name = "latdist", version, about)]
struct Cli {
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the report here instead of stdout
    #[arg(long = "out", global = true)]
    out: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate r_d(lambda) for lambda = 0..=lambda-max
    Enumerate {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        lambda_max: u64,
        /// csv or json
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Sample |sigma_hat| away from the major arcs
    Expsum {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        lambda: u64,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 1.0)]
        c_keyu: f64,
        /// Largest t with Q = lcm(1..t)
        #[arg(long, default_value_t = 12)]
        q_cap: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample the small ball around the origin instead
        #[arg(long)]
        inside_arcs: bool,
    },
    /// Distance-set checks on a point set
    Verify {
        /// unpinned, pinned, dichotomy, dichotomy-pinned or identity
        #[arg(long)]
        mode: VerifyMode,
        #[command(flatten)]
        set: SetArgs,
        #[arg(long)]
        lambda: Option<u64>,
        #[arg(long)]
        lambda0: Option<u64>,
        #[arg(long)]
        lambda1: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 1)]
        q: u64,
        #[command(flatten)]
        consts: ConstArgs,
    },
    /// Run the density increment iteration
    Increment {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 1.0)]
        c_qeta: f64,
        #[arg(long, default_value_t = 64)]
        max_steps: usize,
        /// json or csv
        #[arg(long, default_value = "json")]
        format: Format,
    },
    /// Test equidistribution over residue classes mod q_eta
    Uniformity {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 1.0)]
        c_qeta: f64,
        /// Test inside every aligned subcube of this side
        #[arg(long)]
        subcube: Option<usize>,
    },
    /// Largest density over sub-boxes of the given sides
    Density {
        #[command(flatten)]
        set: SetArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        sides: Vec<usize>,
    },
    /// Re-run the experiment recorded in a report
    Replay {
        report: String,
        /// Exit 1 unless the new result equals the recorded one
        #[arg(long)]
        check: bool,
    },
}

#[derive(Args)]
struct SetArgs {
    /// Point set file
    #[arg(long = "in")]
    input: Option<String>,
    /// Generator, e.g. bernoulli:p=0.3,seed=7 or congruence:r=2,shift=0
    #[arg(long = "gen")]
    generator: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    side: Option<usize>,
    /// periodic or truncate
    #[arg(long, default_value = "periodic")]
    boundary: BoundaryMode,
}

#[derive(Args)]
struct ConstArgs {
    #[arg(long, default_value_t = 1.0)]
    c_qeta: f64,
    #[arg(long, default_value_t = 1.0)]
    c_branch: f64,
    #[arg(long, default_value_t = 1.0)]
    c_exceptional: f64,
}

fn apply_set(cfg: &mut ExperimentConfig, s: SetArgs) {
    cfg.input = s.input;
    cfg.generator = s.generator;
    cfg.dim = s.dim;
    cfg.side = s.side;
    cfg.boundary = s.boundary;
}

fn build_config(cmd: Cmd) -> ExperimentConfig {
    match cmd {
        Cmd::Enumerate {
            dim,
            lambda_max,
            format,
        } => {
            let mut c = ExperimentConfig::new(Command::Enumerate);
            c.dim = Some(dim);
            c.lambda_max = Some(lambda_max);
            c.format = format;
            c
        }
        Cmd::Expsum {
            dim,
            lambda,
            eta,
            c_keyu,
            q_cap,
            samples,
            seed,
            inside_arcs,
        } => {
            let mut c = ExperimentConfig::new(Command::Expsum);
            c.dim = Some(dim);
            c.lambda = Some(lambda);
            c.eta = Some(eta);
            c.c_keyu = c_keyu;
            c.q_cap = q_cap;
            c.samples = samples;
            c.seed = seed;
            c.inside_arcs = inside_arcs;
            c
        }
        Cmd::Verify {
            mode,
            set,
            lambda,
            lambda0,
            lambda1,
            epsilon,
            eta,
            q,
            consts,
        } => {
            let mut c = ExperimentConfig::new(Command::Verify);
            c.mode = Some(mode);
            apply_set(&mut c, set);
            c.lambda = lambda;
            c.lambda0 = lambda0;
            c.lambda1 = lambda1;
            c.epsilon = epsilon;
            c.eta = eta;
            c.q = q;
            c.c_qeta = consts.c_qeta;
            c.c_branch = consts.c_branch;
            c.c_exceptional = consts.c_exceptional;
            c
        }
        Cmd::Increment {
            set,
            eta,
            c_qeta,
            max_steps,
            format,
        } => {
            let mut c = ExperimentConfig::new(Command::Increment);
            apply_set(&mut c, set);
            c.eta = Some(eta);
            c.c_qeta = c_qeta;
            c.max_steps = max_steps;
            c.format = format;
            c
        }
        Cmd::Uniformity {
            set,
            eta,
            c_qeta,
            subcube,
        } => {
            let mut c = ExperimentConfig::new(Command::Uniformity);
            apply_set(&mut c, set);
            c.eta = Some(eta);
            c.c_qeta = c_qeta;
            c.subcube = subcube;
            c
        }
        Cmd::Density { set, sides } => {
            let mut c = ExperimentConfig::new(Command::Density);
            apply_set(&mut c, set);
            c.sides = sides;
            c
        }
        Cmd::Replay { .. } => unreachable!("replay is dispatched in main"),
    }
}

fn emit(text: &str, out: Option<&str>) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io(format!("{path}: {e}"))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io(e.to_string())),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("latdist: {e}");
    if e.is_usage() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn run_config(mut cfg: ExperimentConfig, out: Option<String>) -> Result<Output, Error> {
    cfg.output = out.clone();
    let output = execute(&cfg)?;
    emit(&render(&cfg, &output, timestamp()), out.as_deref())?;
    Ok(output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out;
    let job = move || -> Result<ExitCode, Error> {
        match cli.cmd {
            Cmd::Replay { report, check } => {
                let text = fs::read_to_string(&report).map_err(|e| {
                    Error::InvalidParameter(format!("cannot read report {report:?}: {e}"))
                })?;
                let cfg = config_from_report(&text)?;
                let target = out;
                let fresh = execute(&cfg)?;
                let mut cfg_out = cfg.clone();
                cfg_out.output = target.clone();
                emit(&render(&cfg_out, &fresh, timestamp()), target.as_deref())?;
                if check && !same_result(&text, &fresh) {
                    eprintln!("latdist: replayed result differs from {report}");
                    return Ok(ExitCode::from(1));
                }
                Ok(ExitCode::SUCCESS)
            }
            cmd => {
                run_config(build_config(cmd), out)?;
                Ok(ExitCode::SUCCESS)
            }
        }
    };
    let result = match cli.threads {
        Some(0) => return fail(&Error::InvalidParameter("--threads must be >= 1".into())),
        Some(n) => par::with_threads(n, job),
        None => job(),
    };
    match result {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn same_result(recorded: &str, fresh: &Output) -> bool {
    match fresh {
        Output::Csv(body) => recorded.lines().skip(1).eq(body.lines()),
        Output::Json(v) => serde_json::from_str::<serde_json::Value>(recorded)
            .ok()
            .and_then(|r| r.get("result").cloned())
            .is_some_and(|r| &r == v),
    }
}
