//! `spikelab` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error (nothing written),
//! 2 solver failure (`error.txt` and the manifest are written).

mod commands;
mod config;

use std::path::Path;
use std::process::ExitCode;

use clap::{Arg, ArgAction, Command};

use commands::{print_rows, run, summary_csv, Outcome};
use config::{read_config_file, ConfigError, RawConfig, Settings, COMMANDS, KEYS};

fn about(cmd: &str) -> &'static str {
    match cmd {
        "equilibrium" => "Solve the outer matching conditions for the spike amplitude",
        "nucleation" => "Asymptotic spike-nucleation threshold D_nuc",
        "nlep-theta" => "Amplitude-Hopf threshold in theta (optionally over dv_values)",
        "nlep-tau" => "Large-tau amplitude-Hopf threshold over c_values",
        "smalleig" => "Drift eigenvalues and the threshold tau_h",
        "simulate" => "Time-dependent PDE run with spike tracking",
        "continue" => "Pseudo-arclength continuation of the steady spike in D_v",
        "sweep" => "Run sweep_command once per value of sweep_key",
        _ => "",
    }
}

fn cli() -> Command {
    let mut root = Command::new("spikelab")
        .about("Spike nucleation and stability in a three-component reaction-diffusion model")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("key = value file; command-line flags take precedence"),
        );
    for k in KEYS {
        let mut arg = Arg::new(k.name).long(k.name);
        if k.name.contains('_') {
            let kebab: &'static str = Box::leak(k.name.replace('_', "-").into_boxed_str());
            arg = arg.alias(kebab);
        }
        root = root.arg(
            arg
                .global(true)
                .value_name("VALUE")
                .allow_negative_numbers(true)
                .action(ArgAction::Set)
                .help(format!("{} [default: {}]", k.help, k.default)),
        );
    }
    for &c in COMMANDS {
        root = root.subcommand(Command::new(c).about(about(c)));
    }
    root.subcommand(Command::new("run").about("Run the `command` named in --config"))
}

fn resolve(matches: &clap::ArgMatches) -> Result<RawConfig, ConfigError> {
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let config_path = sub
        .get_one::<String>("config")
        .or_else(|| matches.get_one::<String>("config"));
    let (file_cmd, pairs) = match config_path {
        Some(p) => read_config_file(Path::new(p))?,
        None => (None, Vec::new()),
    };
    let command = if name == "run" {
        file_cmd.ok_or_else(|| ConfigError("`run` needs a config file with `command = ...`".into()))?
    } else {
        name.to_string()
    };
    let mut raw = RawConfig::defaults(&command);
    for (k, v) in pairs {
        raw.set(&k, &v)?;
    }
    for k in KEYS {
        if let Some(v) = sub.get_one::<String>(k.name).or_else(|| matches.get_one::<String>(k.name)) {
            raw.set(k.name, v)?;
        }
    }
    Ok(raw)
}

pub(crate) fn write_files(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Write the artifacts of one run (manifest always, summary or error).
pub(crate) fn write_run(
    dir: &Path,
    raw: &RawConfig,
    result: &Result<Outcome, spikelab::Error>,
) -> std::io::Result<()> {
    let mut files = vec![("manifest.txt".to_string(), raw.manifest())];
    match result {
        Ok(o) => {
            files.push(("summary.csv".into(), summary_csv(&o.rows)));
            files.extend(o.files.iter().cloned());
        }
        Err(e) => files.push(("error.txt".into(), format!("{e}\n"))),
    }
    write_files(dir, &files)
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let settings = resolve(&matches).and_then(|raw| Settings::from_raw(&raw).map(|s| (raw, s)));
    let (raw, settings) = match settings {
        Ok(x) => x,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = run(&settings, &raw);
    if let Err(e) = write_run(&settings.output_dir, &raw, &result) {
        eprintln!("cannot write {}: {e}", settings.output_dir.display());
        return ExitCode::from(2);
    }
    match result {
        Ok(o) => {
            print_rows(&o.rows);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("solver failure: {e}");
            ExitCode::from(2)
        }
    }
}
