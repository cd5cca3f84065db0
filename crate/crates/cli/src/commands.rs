use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;

use atesim::bootstrap::estimate_with_interval;
use atesim::estimators::{Estimator, EstimatorSpec, ModelSpec, Strategy};
use atesim::harness::{parse_metrics_csv, run_study_with_progress, write_report, ReportFormat, ReportOptions};
use atesim::models::protocol::Server;
use atesim::models::{LogisticLearner, Task};
use atesim::scenario::{ingest, read_scenario, simulate, write_scenario, IngestionConfig};
use atesim::{build_scenario, BootstrapConfig, Error, Result, SimulatedDataset, StudyConfig};

use crate::{Command, EstimateArgs, Format, ServeArgs, StudyArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::ScenarioBuild { config, out } => scenario_build(&config, &out),
        Command::ScenarioTruth { scenario, verbose } => scenario_truth(&scenario, verbose),
        Command::Simulate { scenario, n, seed, out } => {
            let s = read_scenario(&scenario)?;
            let d = simulate(&s, n, seed);
            with_output(out.as_deref(), |w| d.write_csv(w))
        }
        Command::Estimate(args) => estimate(args),
        Command::StudyRun(args) => study_run(args),
        Command::Report { metrics, format, out } => {
            let file = File::open(&metrics).map_err(|e| io_error(&metrics, e))?;
            let rows = parse_metrics_csv(BufReader::new(file))?;
            let opts = ReportOptions { include_timing: true };
            with_output(out.as_deref(), |w| write_report(&rows, report_format(format), opts, w))
        }
        Command::Serve(args) => serve(args),
    }
}

fn io_error(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Run `f` against the file at `path`, or standard output.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?);
            f(&mut w)?;
            w.flush().map_err(|e| io_error(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush().map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
        Format::Table => ReportFormat::Table,
    }
}

fn scenario_build(config: &Path, out: &Path) -> Result<()> {
    let cfg = IngestionConfig::load(config)?;
    let table = ingest(&cfg)?;
    let s = build_scenario(&table)?;
    write_scenario(&s, out)?;
    eprintln!(
        "{}: K={} strata, n={} rows, true ATE {:.4}",
        out.display(),
        s.k(),
        s.source_rows,
        s.true_ate()
    );
    Ok(())
}

fn scenario_truth(path: &Path, verbose: bool) -> Result<()> {
    let s = read_scenario(path)?;
    println!("{:.3}", s.true_ate());
    if verbose {
        let (m1, m0) = s.counterfactual_means();
        println!("strata {}", s.k());
        println!("rows {}", s.source_rows);
        println!("treated mean {m1:.6}");
        println!("control mean {m0:.6}");
        println!("true ate {:.10}", s.true_ate());
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let strategy = Strategy::parse(&args.strategy)?;
    let model = match &args.model {
        Some(m) => Some(ModelSpec::parse(m, args.endpoint.as_deref())?),
        None => None,
    };
    let spec = EstimatorSpec {
        strategy,
        endpoint: match strategy {
            Strategy::ExternalDirect => args.endpoint.clone(),
            _ => None,
        },
        model,
        name: None,
    };
    let est = Estimator::from_spec(&spec)?;
    let file = File::open(&args.data).map_err(|e| io_error(&args.data, e))?;
    let data = SimulatedDataset::read_csv(BufReader::new(file))?;
    let cfg = BootstrapConfig {
        iterations: args.bootstrap,
        level: args.level,
        seed: args.seed,
        workers: args.workers,
        ..BootstrapConfig::default()
    };
    let result = estimate_with_interval(&data, &est, &cfg)?;
    let report = serde_json::json!({
        "estimator": est.label(),
        "n": data.n(),
        "level": args.level,
        "bootstrap_iterations": args.bootstrap,
        "result": result,
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Protocol(e.to_string()))?;
    with_output(None, |w| writeln!(w, "{text}").map_err(|e| io_error(Path::new("<stdout>"), e)))
}

fn parse_override(raw: &str) -> Result<(String, String)> {
    match raw.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::InvalidConfig(format!("override `{raw}` is not KEY=VALUE"))),
    }
}

fn study_run(args: StudyArgs) -> Result<()> {
    let mut overrides: Vec<(String, String)> = args.overrides.iter().map(|s| parse_override(s)).collect::<Result<_>>()?;
    let flags = [
        ("base_seed", args.seed.map(|v| v.to_string())),
        ("workers", args.workers.map(|v| v.to_string())),
        ("bootstrap.iterations", args.bootstrap.map(|v| v.to_string())),
        ("bootstrap.level", args.level.map(|v| format!("{v:?}"))),
    ];
    overrides.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    let cfg = StudyConfig::load(&args.config, &overrides)?;
    let scenario = cfg.load_scenario()?;

    let quiet = args.quiet;
    let progress = move |n: usize, done: usize, total: usize| {
        if !quiet && (done == total || done.is_multiple_of(10)) {
            eprint!("\rn={n}: {done}/{total} replicates");
            if done == total {
                eprintln!();
            }
        }
    };
    let output = run_study_with_progress(&cfg, &scenario, &progress)?;

    if let Some(path) = &args.audit {
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        let mut w = BufWriter::new(file);
        output.write_audit(&mut w)?;
        w.flush().map_err(|e| io_error(path, e))?;
    }
    let opts = ReportOptions {
        include_timing: args.timing,
    };
    with_output(args.out.as_deref(), |w| write_report(&output.rows, report_format(args.format), opts, w))
}

fn serve(args: ServeArgs) -> Result<()> {
    let model = ModelSpec::parse(&args.model, None)?;
    let mut server = Server::new(model.learner(Task::Outcome)?);
    if let Some(iterations) = args.direct_bootstrap {
        let cfg = BootstrapConfig {
            iterations,
            seed: args.seed,
            ..BootstrapConfig::default()
        };
        cfg.validate()?;
        let est = Estimator::with_learner(Strategy::Gcomp, Arc::new(LogisticLearner::default()), "gcomp/logistic");
        server = server.with_direct(Arc::new(move |d: &SimulatedDataset| {
            let r = estimate_with_interval(d, &est, &cfg)?;
            Ok((r.point, r.lo, r.hi))
        }));
    }
    if args.listen == "stdio" {
        let stdin = io::stdin();
        return server.serve_lines(stdin.lock(), io::stdout().lock());
    }
    let listener = TcpListener::bind(&args.listen).map_err(|e| Error::Connection {
        endpoint: args.listen.clone(),
        message: e.to_string(),
    })?;
    if let Ok(addr) = listener.local_addr() {
        eprintln!("listening on {addr}");
    }
    Arc::new(server).serve_tcp(listener)
}
