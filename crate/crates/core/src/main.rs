use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use radiocast::families::{
    family_cache_get_or_build, scf, selective, FamilyRequest, Strategy, VerifyMode,
    DEFAULT_EXHAUSTIVE_LIMIT, DEFAULT_SAMPLE_TRIALS,
};
use radiocast::harness::{
    export, gen_topology, run_experiment, ExperimentConfig, ExportFormat, GenSpec, HarnessError,
    LabelMode, Protocol, Shape, SweepResult, TopologySource,
};

/// Acknowledged broadcast and gossip in unknown radio networks.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write results here as JSON (overrides the config).
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sweep one protocol over generated networks of several sizes.
    Sweep {
        #[arg(long)]
        protocol: Protocol,
        /// `a..b` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "2..16", value_parser = parse_sizes)]
        sizes: Sizes,
        /// Number of seeds, starting at 0.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Generator shape; defaults to a directed cycle, or a path for bidir.
        #[arg(long)]
        shape: Option<String>,
        #[arg(long, default_value_t = 0)]
        extra_edges: usize,
        #[arg(long, value_enum, default_value_t = Labels::Random)]
        labels: Labels,
        #[arg(long, default_value_t = 2)]
        c: u32,
        #[arg(long, default_value_t = 4)]
        min_phase: u32,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a topology file from a generator spec (JSON).
    GenTopology {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build (or load from cache) a set family and print a summary.
    Family {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Network-size parameter of the selecting-colliding family.
        #[arg(long)]
        l: Option<u64>,
        #[arg(long, default_value_t = 2)]
        c: u32,
        #[arg(long)]
        k: Option<u64>,
        #[arg(long)]
        m: Option<u64>,
        #[arg(long, default_value_t = scf::DEFAULT_D)]
        d: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Re-verify the family (exhaustive when feasible, else sampled).
        #[arg(long)]
        verify: bool,
        /// Write the family as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a JSON result file.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Labels {
    Identity,
    Random,
    Adversarial,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Scf,
    Selective,
    StronglySelective,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug)]
struct Sizes(Vec<usize>);

fn parse_sizes(s: &str) -> Result<Sizes, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    let v = match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty range {s}"));
            }
            (a..=b).collect()
        }
        None => s.split(',').map(num).collect::<Result<_, _>>()?,
    };
    Ok(Sizes(v))
}

/// Failure classes mapped onto exit codes.
enum Fail {
    Incorrect,
    Setup(String),
}

impl From<HarnessError> for Fail {
    fn from(e: HarnessError) -> Self {
        Fail::Setup(e.to_string())
    }
}

fn setup(e: impl std::fmt::Display) -> Fail {
    Fail::Setup(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Incorrect) => ExitCode::from(1),
        Err(Fail::Setup(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Fail> {
    match cmd {
        Cmd::Run { config, json, csv } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| setup(format!("{}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            cfg.output.json = json.or(cfg.output.json);
            cfg.output.csv = csv.or(cfg.output.csv);
            report(&run_experiment(&cfg)?)
        }
        Cmd::Sweep {
            protocol,
            sizes,
            seeds,
            shape,
            extra_edges,
            labels,
            c,
            min_phase,
            json,
            csv,
        } => {
            let shape = shape.unwrap_or_else(|| {
                match protocol {
                    Protocol::BidirBroadcast => "bidir_path",
                    _ => "directed_cycle",
                }
                .to_string()
            });
            let shape: Shape =
                serde_json::from_value(json!({"shape": shape, "n": 2, "extra_edges": extra_edges}))
                    .map_err(|e| setup(format!("shape: {e}")))?;
            let labels = match labels {
                Labels::Identity => LabelMode::Identity,
                Labels::Random => LabelMode::Random,
                Labels::Adversarial => LabelMode::Adversarial,
            };
            let spec = GenSpec::new(shape, labels, c);
            let mut cfg = ExperimentConfig::new(
                protocol,
                TopologySource::Generated {
                    spec,
                    sizes: sizes.0,
                },
            );
            cfg.c = c;
            cfg.min_phase = min_phase;
            cfg.seeds = (0..seeds).collect();
            cfg.output.json = json;
            cfg.output.csv = csv;
            report(&run_experiment(&cfg)?)
        }
        Cmd::GenTopology { spec, seed, out } => {
            let text =
                fs::read_to_string(&spec).map_err(|e| setup(format!("{}: {e}", spec.display())))?;
            let spec: GenSpec = serde_json::from_str(&text).map_err(setup)?;
            let g = gen_topology(&spec, seed)?;
            fs::write(&out, g.topology.to_json()).map_err(setup)?;
            println!(
                "{} nodes, {} arcs, source {}",
                g.topology.len(),
                g.topology.edge_count(),
                g.source.0
            );
            Ok(())
        }
        Cmd::Family {
            kind,
            l,
            c,
            k,
            m,
            d,
            seed,
            verify,
            out,
        } => family(kind, l, c, k, m, d, seed, verify, out.as_deref()),
        Cmd::Export { input, format, out } => {
            let text = fs::read_to_string(&input)
                .map_err(|e| setup(format!("{}: {e}", input.display())))?;
            let res = SweepResult::from_json(&text)?;
            let format = match format {
                Format::Json => ExportFormat::Json,
                Format::Csv => ExportFormat::Csv,
            };
            export(&res, format, &out)?;
            Ok(())
        }
    }
}

fn report(res: &SweepResult) -> Result<(), Fail> {
    print!("{}", res.to_csv());
    let bad = res.rows.iter().filter(|r| !r.correct).count();
    if bad == 0 {
        Ok(())
    } else {
        eprintln!("{bad} of {} runs incorrect", res.rows.len());
        Err(Fail::Incorrect)
    }
}

#[allow(clippy::too_many_arguments)]
fn family(
    kind: Kind,
    l: Option<u64>,
    c: u32,
    k: Option<u64>,
    m: Option<u64>,
    d: f64,
    seed: u64,
    verify: bool,
    out: Option<&Path>,
) -> Result<(), Fail> {
    let need = |v: Option<u64>, name: &str| v.ok_or_else(|| setup(format!("--{name} is required")));
    let req = match kind {
        Kind::Scf => FamilyRequest::Scf {
            l: need(l, "l")?,
            c,
            d,
        },
        Kind::Selective => FamilyRequest::Selective {
            k: need(k, "k")?,
            m: need(m, "m")?,
            strategy: Strategy::Randomized,
        },
        Kind::StronglySelective => FamilyRequest::StronglySelective {
            k: need(k, "k")?,
            m: need(m, "m")?,
            strategy: Strategy::Randomized,
        },
    };
    let f = family_cache_get_or_build(&req, seed, None).map_err(setup)?;
    let sizes: Vec<usize> = f.sets.iter().map(Vec::len).collect();
    println!(
        "{} sets over 1..={}, set sizes {}..={}, {:?}",
        f.len(),
        f.universe_max,
        sizes.iter().min().unwrap_or(&0),
        sizes.iter().max().unwrap_or(&0),
        f.provenance
    );
    if let Some(path) = out {
        fs::write(path, serde_json::to_string(&*f).map_err(setup)?).map_err(setup)?;
    }
    if verify {
        let ok = verify_family(&req, &f)?;
        println!("verified: {ok}");
        if !ok {
            return Err(Fail::Incorrect);
        }
    }
    Ok(())
}

fn verify_family(req: &FamilyRequest, f: &radiocast::families::SetFamily) -> Result<bool, Fail> {
    let check = |mode| match *req {
        FamilyRequest::Scf { l, c, .. } => scf::verify_scf(f, l, c, mode),
        FamilyRequest::Selective { k, m, .. } => selective::verify_selective(f, k, m, mode),
        FamilyRequest::StronglySelective { k, m, .. } => {
            selective::verify_strongly_selective(f, k, m, mode)
        }
    };
    match check(VerifyMode::Exhaustive {
        limit: DEFAULT_EXHAUSTIVE_LIMIT,
    }) {
        Err(radiocast::families::FamilyError::LimitExceeded { .. }) => {
            eprintln!("exhaustive check too large, sampling");
            check(VerifyMode::Sampled {
                trials: DEFAULT_SAMPLE_TRIALS,
                seed: 0,
            })
            .map_err(setup)
        }
        r => r.map_err(setup),
    }
}
