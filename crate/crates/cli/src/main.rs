use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use pathkac_cli::schema::{schema_text, Subcommand};
use pathkac_cli::specs::{DIFFUSION_KINDS, FUNCTION_KINDS, POTENTIAL_KINDS};
use pathkac_cli::{run_and_write, CliError, ExperimentConfig};

const THREADS_ENV: &str = "PATHKAC_THREADS";

fn command() -> Command {
    let mut cmd = Command::new("pathkac")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Path transformations and Feynman–Kac verification experiments")
        .subcommand_required(true)
        .after_long_help(format!(
            "{}\nPotentials: {POTENTIAL_KINDS}\nFunctions: {FUNCTION_KINDS}\nDiffusions: {DIFFUSION_KINDS}\n\n\
             Exit codes: 0 all checks pass, 1 a check failed or a numerical error, 2 invalid configuration.\n\
             {THREADS_ENV} caps the number of worker threads.",
            schema_text()
        ));
    for sub in Subcommand::ALL {
        let mut sc = Command::new(sub.name()).about(sub.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("TOML file of flat key = value pairs; flags override it"),
        );
        for key in sub.keys() {
            sc = sc.arg(
                Arg::new(key.name)
                    .long(key.name)
                    .value_name("VALUE")
                    .action(ArgAction::Set)
                    .allow_hyphen_values(true)
                    .help(key.help()),
            );
        }
        cmd = cmd.subcommand(sc);
    }
    cmd
}

fn config_from(sub: Subcommand, m: &ArgMatches) -> Result<ExperimentConfig, CliError> {
    let overrides: Vec<(String, String)> = sub
        .keys()
        .iter()
        .filter_map(|k| {
            m.get_one::<String>(k.name)
                .map(|v| (k.name.to_string(), v.clone()))
        })
        .collect();
    ExperimentConfig::from_sources(
        sub,
        m.get_one::<PathBuf>("config").map(PathBuf::as_path),
        &overrides,
    )
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "{THREADS_ENV} must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Io(e.to_string()))
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let (name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let sub = Subcommand::parse(name).expect("clap only accepts known subcommands");
    let result = configure_threads()
        .and_then(|_| config_from(sub, sub_matches))
        .and_then(|cfg| run_and_write(&cfg).map(|r| (cfg, r)));
    match result {
        Ok((cfg, report)) => {
            if sub == Subcommand::Accept {
                if let Ok(suite) =
                    serde_json::from_value::<serde_json::Value>(report.details.clone())
                {
                    for c in suite["criteria"].as_array().into_iter().flatten() {
                        println!(
                            "criterion {:>2} {:<24} {}  {}",
                            c["id"],
                            c["name"].as_str().unwrap_or(""),
                            if c["pass"].as_bool() == Some(true) {
                                "PASS"
                            } else {
                                "FAIL"
                            },
                            c["summary"].as_str().unwrap_or("")
                        );
                    }
                }
            }
            for (k, v) in &report.checks {
                println!("{k}: {}", if *v { "pass" } else { "FAIL" });
            }
            println!("report: {}", report.report_path(&cfg.output_dir).display());
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("pathkac: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
