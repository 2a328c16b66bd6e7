//! `dnb`: operator tool for a local donation ledger.
//!
//! The binary is a thin wrapper over [`run`], which parses arguments,
//! dispatches to the `cmd_*` functions and maps failures to exit codes.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::Value;

use dnb_core::simnet::{Target, Workload};
use dnb_core::Amount;

pub use commands::*;
pub use config::CliConfig;
pub use error::CliError;

pub const DEFAULT_DATA_DIR: &str = "dnb-data";

#[derive(Parser, Debug)]
#[command(name = "dnb", version, about = "Donation ledger operator tool")]
pub struct Cli {
    /// Settings file (`key = value` lines)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Node state directory
    #[arg(long, global = true, env = "DNB_DATA_DIR", value_name = "PATH")]
    pub data_dir: Option<PathBuf>,

    /// Print JSON for state-changing commands too
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create the genesis block
    Init {
        /// Genesis balance for a wallet name or hex address
        #[arg(long = "alloc", value_name = "WHO=AMOUNT", value_parser = parse_alloc)]
        allocations: Vec<(String, Amount)>,
        /// Flat transaction fee, overriding the settings file
        #[arg(long)]
        fee: Option<Amount>,
        /// Derive the producer key from a seed
        #[arg(long)]
        seed: Option<u64>,
    },
    #[command(subcommand)]
    Wallet(WalletCommand),
    #[command(subcommand)]
    Event(EventCommand),
    #[command(subcommand)]
    Events(EventsCommand),
    /// Donate to an active campaign
    Donate {
        #[arg(long)]
        wallet: String,
        #[arg(long)]
        event: String,
        #[arg(long)]
        amount: Amount,
    },
    /// Donations made by a wallet or address
    History { who: String },
    /// Replay and check the stored chain
    Verify,
    /// Append an empty block SECS after the tip
    Advance {
        #[arg(value_name = "+SECS", value_parser = parse_relative_secs, allow_hyphen_values = true)]
        secs: u64,
    },
    /// Share link for a campaign image
    Share {
        #[arg(long)]
        event: String,
        #[arg(long)]
        platform: String,
    },
    #[command(subcommand)]
    Blob(BlobCommand),
    #[command(subcommand)]
    Auth(AuthCommand),
    /// Run one simulation
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "donate_storm")]
        workload: Workload,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a simulation per n and export CSV
    Sweep {
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long)]
        step: usize,
        /// CSV path, or `-` for standard output
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "donate_storm")]
        workload: Workload,
    },
    /// Fit the timing model to latency and throughput targets
    Calibrate {
        /// N:METRIC=VALUE; defaults to the four reference endpoints
        #[arg(long = "target", value_parser = parse_target)]
        targets: Vec<Target>,
        #[arg(long, value_name = "PATH")]
        write_config: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        write_report: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum WalletCommand {
    /// Generate a keypair and store it under NAME
    New {
        name: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Address, DID and balance
    Info { name: String },
    List,
}

#[derive(Subcommand, Debug)]
pub enum EventCommand {
    /// Upload the image and open a campaign
    Create {
        #[arg(long)]
        wallet: String,
        #[arg(long)]
        title: String,
        #[arg(long, default_value = "")]
        desc: String,
        #[arg(long)]
        owner_name: Option<String>,
        #[arg(long)]
        target: Amount,
        #[arg(long, value_name = "+SECS", value_parser = parse_relative_secs, allow_hyphen_values = true)]
        deadline: u64,
        #[arg(long)]
        image: PathBuf,
    },
    /// One campaign with its donors
    Show { event_id: String },
}

#[derive(Subcommand, Debug)]
pub enum EventsCommand {
    List,
}

#[derive(Subcommand, Debug)]
pub enum BlobCommand {
    Put { path: PathBuf },
    Get {
        cid: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum AuthCommand {
    /// Answer a hex challenge with a wallet key
    Sign {
        #[arg(long)]
        wallet: String,
        #[arg(long)]
        challenge: String,
    },
    /// Check a response against a DID
    Verify {
        #[arg(long)]
        did: String,
        #[arg(long)]
        challenge: String,
        #[arg(long)]
        public_key: String,
        #[arg(long)]
        signature: String,
    },
}

fn parse_alloc(s: &str) -> Result<(String, Amount), String> {
    let (who, amount) = s
        .split_once('=')
        .ok_or_else(|| format!("{s:?} is not WHO=AMOUNT"))?;
    let amount = amount.parse::<Amount>().map_err(|e| e.to_string())?;
    Ok((who.to_string(), amount))
}

fn parse_relative_secs(s: &str) -> Result<u64, String> {
    s.strip_prefix('+')
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| format!("{s:?} is not +SECONDS"))
}

fn parse_target(s: &str) -> Result<Target, String> {
    Target::parse(s).map_err(|e| e.to_string())
}

fn write_json(out: &mut dyn Write, value: &Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    out.write_all(text.as_bytes())
}

fn one_line(value: &Value) -> String {
    match value {
        Value::Object(map) => map
            .iter()
            .map(|(k, v)| match v {
                Value::String(s) => format!("{k}={s}"),
                Value::Object(_) | Value::Array(_) => format!("{k}={}", v),
                other => format!("{k}={other}"),
            })
            .collect::<Vec<_>>()
            .join(" "),
        other => other.to_string(),
    }
}

fn settings(cli: &Cli) -> Result<CliConfig, CliError> {
    let data_dir = cli
        .data_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR));
    match &cli.config {
        Some(path) => CliConfig::load(data_dir, path),
        None => Ok(CliConfig::new(data_dir)),
    }
}

enum Report {
    /// Read output, always JSON.
    Read(Value),
    /// State change; one summary line unless `--json`.
    Change(&'static str, Value),
    Raw(String),
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = settings(cli)?;
    let report = match &cli.command {
        Command::Init {
            allocations,
            fee,
            seed,
        } => {
            if let Some(fee) = fee {
                config.fee = *fee;
            }
            Report::Change("initialized", cmd_init(&config, allocations, *seed)?)
        }
        Command::Wallet(WalletCommand::New { name, seed }) => {
            Report::Change("wallet created", cmd_wallet_new(&config, name, *seed)?)
        }
        Command::Wallet(WalletCommand::Info { name }) => Report::Read(cmd_wallet_info(&config, name)?),
        Command::Wallet(WalletCommand::List) => Report::Read(cmd_wallet_list(&config)?),
        Command::Event(EventCommand::Create {
            wallet,
            title,
            desc,
            owner_name,
            target,
            deadline,
            image,
        }) => Report::Change(
            "event created",
            cmd_event_create(
                &config,
                &EventCreate {
                    wallet,
                    title,
                    description: desc,
                    owner_name: owner_name.as_deref(),
                    target: *target,
                    deadline_secs: *deadline,
                    image,
                },
            )?,
        ),
        Command::Event(EventCommand::Show { event_id }) => {
            Report::Read(cmd_event_show(&config, event_id)?)
        }
        Command::Events(EventsCommand::List) => Report::Read(cmd_events_list(&config)?),
        Command::Donate {
            wallet,
            event,
            amount,
        } => Report::Change("donated", cmd_donate(&config, wallet, event, *amount)?),
        Command::History { who } => Report::Read(cmd_history(&config, who)?),
        Command::Verify => {
            let report = cmd_verify(&config)?;
            write_json(out, &serde_json::to_value(&report)?)?;
            return match report.failure {
                None => Ok(()),
                Some(f) => Err(CliError::domain(
                    "ChainInvalid",
                    format!("height {}: {}: {}", f.height, f.kind, f.detail),
                )),
            };
        }
        Command::Advance { secs } => Report::Change("advanced", cmd_advance(&config, *secs)?),
        Command::Share { event, platform } => Report::Read(cmd_share(&config, event, platform)?),
        Command::Blob(BlobCommand::Put { path }) => Report::Change("stored", cmd_blob_put(&config, path)?),
        Command::Blob(BlobCommand::Get { cid, out: path }) => {
            Report::Change("written", cmd_blob_get(&config, cid, path)?)
        }
        Command::Auth(AuthCommand::Sign { wallet, challenge }) => {
            Report::Read(cmd_auth_sign(&config, wallet, challenge)?)
        }
        Command::Auth(AuthCommand::Verify {
            did,
            challenge,
            public_key,
            signature,
        }) => Report::Read(cmd_auth_verify(did, challenge, public_key, signature)?),
        Command::Simulate { n, workload, seed } => {
            Report::Read(cmd_simulate(&config, *n, *workload, *seed)?)
        }
        Command::Sweep {
            from,
            to,
            step,
            out: path,
            workload,
        } => {
            let (summary, csv) = cmd_sweep(&config, *from, *to, *step, *workload, path)?;
            if path.as_os_str() == "-" {
                Report::Raw(csv)
            } else {
                Report::Change("sweep written", summary)
            }
        }
        Command::Calibrate {
            targets,
            write_config,
            write_report,
        } => Report::Read(cmd_calibrate(
            &config,
            targets,
            write_config.as_deref(),
            write_report.as_deref(),
        )?),
    };
    match report {
        Report::Read(value) => write_json(out, &value)?,
        Report::Change(_, value) if cli.json => write_json(out, &value)?,
        Report::Change(what, value) => writeln!(out, "{what}: {}", one_line(&value))?,
        Report::Raw(text) => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Parse `args` (program name first), run the command and return the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.code
        }
    }
}
