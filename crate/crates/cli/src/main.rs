mod args;
mod config;
mod output;
mod run;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::Cli;
use run::Diagnostics;

const EXIT_INVALID: u8 = 2;

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let argv = config::expand(std::env::args_os().collect())?;
    let cli = Cli::parse_from(argv);
    let mut diag = Diagnostics::default();
    let globals = run::resolve_globals(&cli, &mut diag);
    let plan = run::resolve(&cli.command, &globals, &mut diag);
    if cli.validate {
        for d in &diag.0 {
            println!("{d}");
        }
        if diag.is_empty() {
            println!("ok");
            return Ok(ExitCode::SUCCESS);
        }
        return Ok(ExitCode::from(EXIT_INVALID));
    }
    let Some(plan) = plan.filter(|_| diag.is_empty()) else {
        for d in &diag.0 {
            eprintln!("invalid {d}");
        }
        return Ok(ExitCode::from(EXIT_INVALID));
    };
    let table = run::execute(&plan, &globals)?;
    output::write_atomic(cli.out.as_deref(), &table.to_bytes()?)?;
    if let Some(out) = &cli.out {
        let record = config_record(&plan, &globals)?;
        let mut path = out.clone().into_os_string();
        path.push(".config.toml");
        output::write_atomic(Some(path.as_ref()), record.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Resolved configuration written next to the CSV; feeding it back through `--config`
/// reproduces the file. The worker count is left out since it never changes results.
fn config_record(plan: &run::Plan, g: &run::Globals) -> Result<String> {
    let mut t = toml::Table::new();
    let seed = i64::try_from(g.seed).map_or_else(|_| toml::Value::String(g.seed.to_string()), toml::Value::Integer);
    t.insert("seed".into(), seed);
    t.insert("trials".into(), toml::Value::Integer(g.trials as i64));
    t.insert("emit-asymptotes".into(), g.emit_asymptotes.into());
    t.insert("record-time".into(), g.record_time.into());
    let (name, section) = run::resolved_section(plan)?;
    t.insert(name.into(), section.into());
    Ok(toml::to_string(&t)?)
}
