use pli_cli::config::{RunConfig, TaskOptions};
use pli_cli::error::{CliError, Result};
use pli_cli::refgen::generate_reference;
use pli_cli::run::run;
use pli_cli::sweep::{render_table, report, sweep, GridSpec};
use pli_core::textio::KvBlock;
use std::path::PathBuf;

const USAGE: &str = "\
pli — simulation-based inference runs over benchmark simulators

USAGE:
    pli gen-ref --task <name> --n <N> [--seed <S>] [--out <dir>] [--config <file>]
    pli run     --config <file> [--seed <S>] [--out <dir>] [--threads <T>]
    pli sweep   --config <grid file> [--out <dir>] [--threads <T>]
    pli report  [--out <dir>]
    pli help

FLAGS:
    --config <file>   run or grid configuration (key = value lines)
    --seed <S>        override the configured seed
    --out <dir>       output root (default: $PLI_OUT or ./out)
    --threads <T>     worker threads for intra-run parallelism
    --task, --n       gen-ref only: task name and reference size

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
";

struct Args {
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    task: Option<String>,
    n: Option<usize>,
}

fn parse_flags(args: &[String]) -> Result<Args> {
    let mut parsed = Args {
        config: None,
        seed: None,
        out: None,
        threads: None,
        task: None,
        n: None,
    };
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let mut value = || {
            it.next()
                .ok_or_else(|| CliError::Config(format!("flag {flag} needs a value")))
        };
        match flag.as_str() {
            "--config" => parsed.config = Some(PathBuf::from(value()?)),
            "--seed" => {
                parsed.seed = Some(value()?.parse().map_err(|e| {
                    CliError::Config(format!("bad --seed: {e}"))
                })?)
            }
            "--out" => parsed.out = Some(PathBuf::from(value()?)),
            "--threads" => {
                parsed.threads = Some(value()?.parse().map_err(|e| {
                    CliError::Config(format!("bad --threads: {e}"))
                })?)
            }
            "--task" => parsed.task = Some(value()?.clone()),
            "--n" => {
                parsed.n = Some(value()?.parse().map_err(|e| {
                    CliError::Config(format!("bad --n: {e}"))
                })?)
            }
            other => return Err(CliError::Config(format!("unknown flag `{other}`"))),
        }
    }
    Ok(parsed)
}

fn out_root(args: &Args) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os("PLI_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn configure_threads(args: &Args) -> Result<()> {
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    Ok(())
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let code = match dispatch(&argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn dispatch(argv: &[String]) -> Result<()> {
    let Some(command) = argv.first() else {
        print!("{USAGE}");
        return Err(CliError::Config("missing subcommand".into()));
    };
    let args = parse_flags(&argv[1..])?;
    match command.as_str() {
        "gen-ref" => {
            configure_threads(&args)?;
            let task = args
                .task
                .clone()
                .ok_or_else(|| CliError::Config("gen-ref needs --task".into()))?;
            let n = args
                .n
                .ok_or_else(|| CliError::Config("gen-ref needs --n".into()))?;
            let options = match &args.config {
                Some(path) => {
                    let kv = KvBlock::read(path).map_err(|e| CliError::Config(e.to_string()))?;
                    TaskOptions::from_kv(&kv)?
                }
                None => TaskOptions::default(),
            };
            let seed = args.seed.unwrap_or(0);
            let set = generate_reference(&task, &options, n, seed, &out_root(&args))?;
            println!("reference: {}", set.obs_path.display());
            if let Some(states) = &set.states_path {
                println!("initial states: {}", states.display());
            }
            Ok(())
        }
        "run" => {
            configure_threads(&args)?;
            let path = args
                .config
                .clone()
                .ok_or_else(|| CliError::Config("run needs --config".into()))?;
            let mut cfg = RunConfig::from_file(&path)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let outcome = run(&cfg, &out_root(&args))?;
            println!("completed: {}", outcome.run_dir.display());
            println!(
                "{}",
                pli_cli::metrics::format_metrics_row(&outcome.report)
            );
            Ok(())
        }
        "sweep" => {
            configure_threads(&args)?;
            let path = args
                .config
                .clone()
                .ok_or_else(|| CliError::Config("sweep needs --config".into()))?;
            let spec = GridSpec::from_file(&path)?;
            let outcome = sweep(&spec, &out_root(&args))?;
            if outcome.table.is_empty() {
                eprintln!("warning: empty grid, nothing to aggregate");
            }
            for cell in &outcome.missing {
                eprintln!("missing cell: {cell}");
            }
            eprintln!(
                "executed {} runs, reused {}",
                outcome.executed, outcome.reused
            );
            print!("{}", render_table(&outcome.table));
            Ok(())
        }
        "report" => {
            let table = report(&out_root(&args))?;
            if table.is_empty() {
                eprintln!("warning: no metrics found");
            }
            print!("{}", render_table(&table));
            Ok(())
        }
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            Ok(())
        }
        other => {
            eprint!("{USAGE}");
            Err(CliError::Config(format!("unknown subcommand `{other}`")))
        }
    }
}
