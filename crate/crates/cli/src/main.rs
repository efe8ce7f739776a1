//! `underlay` command line: run a named scenario, or re-run one from its
//! manifest.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use underlay::scenario::{self, Format, Params, Scenario, ScenarioSpec, KEYS};

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn cli() -> Command {
    let scenarios: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
    let mut run = Command::new("run")
        .about("Run a scenario and write its tables plus a <out>.manifest.json sidecar")
        .arg(
            Arg::new("scenario")
                .required(true)
                .value_parser(scenarios)
                .help("Scenario name"),
        )
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(value_parser!(PathBuf))
                .help("Flat key = value parameter file"),
        )
        .arg(
            Arg::new("seed")
                .long("seed")
                .value_name("U64")
                .default_value("1")
                .value_parser(value_parser!(u64)),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("PATH")
                .required(true)
                .value_parser(value_parser!(PathBuf)),
        )
        .arg(
            Arg::new("format")
                .long("format")
                .value_parser(["csv", "json"])
                .default_value("csv"),
        )
        .arg(workers());
    for (key, doc, default) in KEYS {
        let help = if default.is_empty() {
            doc.to_string()
        } else {
            format!("{doc} [default: {default}]")
        };
        run = run.arg(
            Arg::new(*key)
                .long(flag(key))
                .value_name("VALUE")
                .allow_hyphen_values(true)
                .help_heading("Parameters")
                .help(help),
        );
    }
    Command::new("underlay")
        .version(env!("CARGO_PKG_VERSION"))
        .about("CDMA IoT underlay simulator")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(run)
        .subcommand(
            Command::new("rerun")
                .about("Re-run the spec recorded in a manifest")
                .arg(
                    Arg::new("manifest")
                        .required(true)
                        .value_parser(value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_name("PATH")
                        .value_parser(value_parser!(PathBuf))
                        .help("Write here instead of the recorded output path"),
                )
                .arg(workers()),
        )
        .subcommand(Command::new("keys").about("List every parameter with its default"))
}

fn workers() -> Arg {
    Arg::new("workers")
        .long("workers")
        .value_name("N")
        .value_parser(value_parser!(usize))
        .action(ArgAction::Set)
        .help("Worker threads (default: all cores); results do not depend on it")
}

fn spec_from(m: &ArgMatches) -> Result<ScenarioSpec> {
    let scenario: Scenario = m.get_one::<String>("scenario").expect("required").parse()?;
    let mut params = Params::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        params
            .apply_config_file(path)
            .with_context(|| format!("reading config {}", path.display()))?;
    }
    for (key, _, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            params.set(key, v)?;
        }
    }
    Ok(ScenarioSpec {
        scenario,
        params,
        seed: *m.get_one::<u64>("seed").expect("defaulted"),
        output_path: m.get_one::<PathBuf>("out").expect("required").clone(),
        format: m
            .get_one::<String>("format")
            .expect("defaulted")
            .parse::<Format>()?,
    })
}

fn report(manifest: &scenario::RunManifest, out: &Path) {
    for path in &manifest.outputs {
        println!("{path}");
    }
    println!("{}", scenario::manifest_path(out).display());
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let matches = cli().get_matches();
    match matches.subcommand() {
        Some(("run", m)) => {
            let spec = spec_from(m)?;
            let manifest = scenario::execute(&spec, m.get_one::<usize>("workers").copied())?;
            report(&manifest, &spec.output_path);
        }
        Some(("rerun", m)) => {
            let path = m.get_one::<PathBuf>("manifest").expect("required");
            let out = m.get_one::<PathBuf>("out");
            let manifest = scenario::rerun(
                path,
                out.map(PathBuf::as_path),
                m.get_one::<usize>("workers").copied(),
            )
            .with_context(|| format!("re-running {}", path.display()))?;
            report(&manifest, Path::new(&manifest.output_path));
        }
        Some(("keys", _)) => {
            for (key, doc, default) in KEYS {
                println!("{key}\t{default}\t{doc}");
            }
        }
        _ => unreachable!("subcommand required"),
    }
    Ok(())
}
