//! Command implementations. Each returns the JSON document it reports;
//! state-changing commands also append exactly one block.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use dnb_core::content_store::share_link_named;
use dnb_core::contracts::EventParams;
use dnb_core::identity::{authenticate, sign_challenge, AuthResponse};
use dnb_core::ledger::{
    create_event_tx, donate_tx, load_chain, save_chain, verify_chain_dir, Allocation,
    GenesisConfig, Transaction, ValidationReport,
};
use dnb_core::simnet::{
    calibrate, n_range, simulate, sweep, to_csv, SearchSpace, Target, Workload,
};
use dnb_core::types::parse_hex;
use dnb_core::{Address, Amount, Chain, ContentStore, Hash32, PublicKey, Timestamp, Wallet};

use crate::config::CliConfig;
use crate::error::CliError;

/// Virtual time between consecutive interactive blocks.
pub const ACTION_SPACING_MS: u64 = 1_000;

/// Exclusive hold on a data directory for the life of a mutating command.
pub struct DirLock {
    _file: File,
}

impl DirLock {
    pub fn acquire(config: &CliConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&config.data_dir)?;
        let file = File::create(config.lock_path())?;
        file.try_lock().map_err(|_| {
            CliError::domain(
                "Locked",
                format!("{} is in use by another process", config.data_dir.display()),
            )
        })?;
        Ok(DirLock { _file: file })
    }
}

fn valid_wallet_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn wallet_path(config: &CliConfig, name: &str) -> Result<PathBuf, CliError> {
    if !valid_wallet_name(name) {
        return Err(CliError::domain(
            "InvalidWalletName",
            format!("{name:?} must be 1-64 characters of [A-Za-z0-9_-]"),
        ));
    }
    Ok(config.wallet_dir().join(format!("{name}.json")))
}

pub fn load_wallet(config: &CliConfig, name: &str) -> Result<Wallet, CliError> {
    let path = wallet_path(config, name)?;
    if !path.exists() {
        return Err(CliError::domain("UnknownWallet", name));
    }
    Ok(Wallet::load(&path)?)
}

fn load_producer(config: &CliConfig) -> Result<Wallet, CliError> {
    Ok(Wallet::load(&config.producer_path())?)
}

pub fn open_chain(config: &CliConfig) -> Result<Chain, CliError> {
    Ok(load_chain(&config.chain_dir())?)
}

fn store(config: &CliConfig) -> Result<ContentStore, CliError> {
    Ok(ContentStore::with_limit(config.blob_dir(), config.max_blob)?)
}

/// A wallet name or a 40-digit hex address.
fn resolve_address(config: &CliConfig, who: &str) -> Result<Address, CliError> {
    if who.len() == 40 {
        if let Ok(address) = who.parse::<Address>() {
            return Ok(address);
        }
    }
    Ok(load_wallet(config, who)?.address)
}

fn parse_event_id(id: &str) -> Result<Hash32, CliError> {
    id.parse::<Hash32>()
        .map_err(|e| CliError::domain("ParseError", format!("event id: {e}")))
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("output types serialize")
}

#[derive(Serialize)]
struct BlockSummary {
    height: u64,
    timestamp: Timestamp,
    block_hash: Hash32,
    txs: usize,
}

fn block_summary(chain: &Chain) -> Value {
    let tip = chain.tip();
    to_value(&BlockSummary {
        height: tip.height,
        timestamp: tip.timestamp,
        block_hash: tip.block_hash,
        txs: tip.txs.len(),
    })
}

/// Load the chain, build a block holding the transactions produced by
/// `build`, append it and persist. Refunds owed at the new timestamp are
/// emitted ahead of the user transactions.
fn commit_block<F>(config: &CliConfig, delay_ms: u64, build: F) -> Result<(Chain, Value), CliError>
where
    F: FnOnce(&Chain) -> Result<(Vec<Transaction>, Value), CliError>,
{
    let _lock = DirLock::acquire(config)?;
    let mut chain = open_chain(config)?;
    let producer = load_producer(config)?;
    let (txs, detail) = build(&chain)?;
    let timestamp = chain.tip().timestamp.saturating_add_ms(delay_ms);
    chain.produce_block(&producer.keys, &txs, timestamp)?;
    save_chain(&chain, &config.chain_dir())?;
    Ok((chain, detail))
}

pub fn cmd_init(
    config: &CliConfig,
    allocations: &[(String, Amount)],
    seed: Option<u64>,
) -> Result<Value, CliError> {
    let _lock = DirLock::acquire(config)?;
    if dnb_core::ledger::chain_path(&config.chain_dir()).exists() {
        return Err(CliError::domain(
            "AlreadyInitialized",
            config.data_dir.display(),
        ));
    }
    let mut allocs = Vec::with_capacity(allocations.len());
    for (who, amount) in allocations {
        allocs.push(Allocation {
            address: resolve_address(config, who)?,
            amount: *amount,
        });
    }
    let producer = Wallet::new("producer", seed).with_network(&config.network_name);
    let genesis = GenesisConfig::new(*producer.keys.public(), config.fee, allocs);
    let chain = Chain::new(genesis, Timestamp(0))?;

    fs::create_dir_all(config.wallet_dir())?;
    fs::create_dir_all(config.blob_dir())?;
    producer.save(&config.producer_path())?;
    save_chain(&chain, &config.chain_dir())?;
    Ok(json!({
        "network_name": config.network_name,
        "producer": producer.address,
        "fee": config.fee,
        "genesis": block_summary(&chain),
    }))
}

pub fn cmd_wallet_new(config: &CliConfig, name: &str, seed: Option<u64>) -> Result<Value, CliError> {
    let path = wallet_path(config, name)?;
    let _lock = DirLock::acquire(config)?;
    if path.exists() {
        return Err(CliError::domain("WalletExists", name));
    }
    fs::create_dir_all(config.wallet_dir())?;
    let wallet = Wallet::new(name, seed).with_network(&config.network_name);
    wallet.save(&path)?;
    Ok(json!({
        "name": wallet.name,
        "address": wallet.address,
        "did": wallet.did.as_str(),
        "public_key": wallet.keys.public().to_hex(),
        "network_name": wallet.network_name,
    }))
}

pub fn cmd_wallet_info(config: &CliConfig, name: &str) -> Result<Value, CliError> {
    let wallet = load_wallet(config, name)?;
    let chain = open_chain(config)?;
    let info = wallet.info(&chain);
    Ok(json!({
        "name": wallet.name,
        "address": info.address,
        "did": wallet.did.as_str(),
        "balance": info.balance,
        "nonce": chain.state().nonce(&wallet.address),
        "network_name": info.network_name,
    }))
}

pub fn cmd_wallet_list(config: &CliConfig) -> Result<Value, CliError> {
    let mut names = Vec::new();
    match fs::read_dir(config.wallet_dir()) {
        Ok(entries) => {
            for entry in entries {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                        names.push(stem.to_string());
                    }
                }
            }
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(e.into()),
    }
    names.sort();
    let mut wallets = Vec::with_capacity(names.len());
    for name in names {
        let w = load_wallet(config, &name)?;
        wallets.push(json!({ "name": w.name, "address": w.address, "did": w.did.as_str() }));
    }
    Ok(Value::Array(wallets))
}

pub struct EventCreate<'a> {
    pub wallet: &'a str,
    pub title: &'a str,
    pub description: &'a str,
    pub owner_name: Option<&'a str>,
    pub target: Amount,
    pub deadline_secs: u64,
    pub image: &'a Path,
}

pub fn cmd_event_create(config: &CliConfig, args: &EventCreate<'_>) -> Result<Value, CliError> {
    let wallet = load_wallet(config, args.wallet)?;
    let image = fs::read(args.image)
        .map_err(|e| CliError::domain("Io", format!("{}: {e}", args.image.display())))?;
    let (_, detail) = commit_block(config, ACTION_SPACING_MS, |chain| {
        // The image goes into the content store before the campaign exists.
        let cid = store(config)?.put(&image)?;
        let deadline = chain
            .tip()
            .timestamp
            .saturating_add_ms(args.deadline_secs.saturating_mul(1000));
        let params = EventParams {
            owner: wallet.address,
            owner_name: args.owner_name.unwrap_or(&wallet.name).to_string(),
            title: args.title.to_string(),
            description: args.description.to_string(),
            target: args.target,
            deadline,
            image: cid,
        };
        let tx = create_event_tx(&wallet.keys, chain.next_nonce(&wallet.keys), chain.fee(), params)?;
        let detail = json!({ "event_id": tx.tx_hash, "image": cid, "deadline": deadline });
        Ok((vec![tx], detail))
    })?;
    Ok(detail)
}

pub fn cmd_donate(
    config: &CliConfig,
    wallet: &str,
    event_id: &str,
    amount: Amount,
) -> Result<Value, CliError> {
    let wallet = load_wallet(config, wallet)?;
    let event_id = parse_event_id(event_id)?;
    let (chain, tx_hash) = commit_block(config, ACTION_SPACING_MS, |chain| {
        let tx = donate_tx(&wallet.keys, chain.next_nonce(&wallet.keys), chain.fee(), event_id, amount)?;
        let hash = tx.tx_hash;
        Ok((vec![tx], to_value(&hash)))
    })?;
    let event = chain.state().contracts().event(&event_id)?;
    Ok(json!({
        "tx_hash": tx_hash,
        "event_id": event_id,
        "amount": amount,
        "total_donated": event.total_donated,
        "block": block_summary(&chain),
    }))
}

/// Append an empty block `secs` after the tip, finalizing every campaign
/// whose deadline has been reached.
pub fn cmd_advance(config: &CliConfig, secs: u64) -> Result<Value, CliError> {
    let mut before = Vec::new();
    let (chain, _) = commit_block(config, secs.saturating_mul(1000), |chain| {
        before = chain
            .state()
            .contracts()
            .get_donation_events()
            .iter()
            .map(|e| (e.event_id, e.status))
            .collect();
        Ok((Vec::new(), Value::Null))
    })?;
    let events = chain.state().contracts().get_donation_events();
    let finalized: Vec<Value> = before
        .iter()
        .zip(events)
        .filter(|((_, old), now)| *old != now.status)
        .map(|(_, e)| json!({ "event_id": e.event_id, "status": e.status }))
        .collect();
    Ok(json!({ "block": block_summary(&chain), "finalized": finalized }))
}

pub fn cmd_events_list(config: &CliConfig) -> Result<Value, CliError> {
    let chain = open_chain(config)?;
    let events: Vec<Value> = chain
        .state()
        .contracts()
        .get_donation_events()
        .iter()
        .map(|e| {
            json!({
                "event_id": e.event_id,
                "title": e.title,
                "owner": e.owner,
                "target": e.target,
                "total_donated": e.total_donated,
                "deadline": e.deadline,
                "status": e.status,
                "donor_count": e.donors.len(),
            })
        })
        .collect();
    Ok(Value::Array(events))
}

pub fn cmd_event_show(config: &CliConfig, event_id: &str) -> Result<Value, CliError> {
    let event_id = parse_event_id(event_id)?;
    let chain = open_chain(config)?;
    let contracts = chain.state().contracts();
    let event = contracts.event(&event_id)?;
    let donations: Vec<Value> = contracts
        .get_donors(&event_id)?
        .into_iter()
        .map(|(donor, amount)| json!({ "donor": donor, "amount": amount }))
        .collect();
    let mut out = to_value(event);
    let obj = out.as_object_mut().expect("event is an object");
    obj.insert("donor_count".into(), json!(event.donors.len()));
    obj.insert("donations".into(), Value::Array(donations));
    obj.insert("settlement".into(), to_value(&contracts.settlement(&event_id)));
    Ok(out)
}

pub fn cmd_history(config: &CliConfig, who: &str) -> Result<Value, CliError> {
    let address = resolve_address(config, who)?;
    let chain = open_chain(config)?;
    let state = chain.state();
    Ok(json!({
        "address": address,
        "balance": state.balance(&address),
        "donations": state.contracts().get_donation_history(&address),
    }))
}

/// Full replay of the stored chain.
pub fn cmd_verify(config: &CliConfig) -> Result<ValidationReport, CliError> {
    Ok(verify_chain_dir(&config.chain_dir())?)
}

pub fn cmd_share(config: &CliConfig, event_id: &str, platform: &str) -> Result<Value, CliError> {
    let event_id = parse_event_id(event_id)?;
    let chain = open_chain(config)?;
    let event = chain.state().contracts().event(&event_id)?;
    let link = share_link_named(&event_id, &event.image, platform)?;
    Ok(json!({ "event_id": event_id, "platform": platform, "link": link }))
}

pub fn cmd_blob_put(config: &CliConfig, path: &Path) -> Result<Value, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::domain("Io", format!("{}: {e}", path.display())))?;
    let cid = store(config)?.put(&bytes)?;
    Ok(json!({ "cid": cid, "size": bytes.len() }))
}

pub fn cmd_blob_get(config: &CliConfig, cid: &str, out: &Path) -> Result<Value, CliError> {
    let cid = cid.parse()?;
    let bytes = store(config)?.get(&cid)?;
    fs::write(out, &bytes)?;
    Ok(json!({ "cid": cid, "size": bytes.len() }))
}

fn parse_challenge(hex: &str) -> Result<Vec<u8>, CliError> {
    parse_hex(hex).map_err(|e| CliError::domain("ParseError", format!("challenge: {e}")))
}

pub fn cmd_auth_sign(config: &CliConfig, wallet: &str, challenge: &str) -> Result<Value, CliError> {
    let wallet = load_wallet(config, wallet)?;
    let challenge = parse_challenge(challenge)?;
    let response = sign_challenge(&wallet.keys, &challenge);
    Ok(json!({
        "did": wallet.did.as_str(),
        "public_key": response.public_key.to_hex(),
        "signature": to_hex(&response.signature),
    }))
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cmd_auth_verify(
    did: &str,
    challenge: &str,
    public_key: &str,
    signature: &str,
) -> Result<Value, CliError> {
    let challenge = parse_challenge(challenge)?;
    let public_key: PublicKey = public_key.parse()?;
    let signature = parse_hex(signature)?;
    let response = AuthResponse {
        public_key,
        signature,
    };
    if !authenticate(did, &challenge, &response)? {
        return Err(CliError::domain("AuthenticationFailed", did));
    }
    Ok(json!({ "did": did, "authenticated": true }))
}

pub fn cmd_simulate(
    config: &CliConfig,
    n: usize,
    workload: Workload,
    seed: Option<u64>,
) -> Result<Value, CliError> {
    let sim = match seed {
        Some(seed) => config.sim.with_seed(seed),
        None => config.sim.clone(),
    };
    let run = simulate(&sim, n, workload)?;
    let report = run.chain.validate();
    Ok(json!({
        "workload": workload.as_str(),
        "metrics": run.metrics,
        "blocks": run.chain.height() + 1,
        "tip_hash": run.chain.tip().block_hash,
        "chain_valid": report.is_ok(),
    }))
}

/// Run the sweep and write its CSV to `out` (`-` for standard output, in
/// which case the CSV is returned as a string instead of JSON).
pub fn cmd_sweep(
    config: &CliConfig,
    from: usize,
    to: usize,
    step: usize,
    workload: Workload,
    out: &Path,
) -> Result<(Value, String), CliError> {
    if step == 0 || from > to {
        return Err(CliError::usage("sweep needs --step >= 1 and --from <= --to"));
    }
    let rows = sweep(&config.sim, &n_range(from, to, step), workload)?;
    let csv = to_csv(&rows);
    if out != Path::new("-") {
        fs::write(out, &csv)
            .map_err(|e| CliError::domain("Io", format!("{}: {e}", out.display())))?;
    }
    let summary = json!({
        "workload": workload.as_str(),
        "rows": rows.len(),
        "out": out.display().to_string(),
    });
    Ok((summary, csv))
}

pub fn cmd_calibrate(
    config: &CliConfig,
    targets: &[Target],
    write_config: Option<&Path>,
    write_report: Option<&Path>,
) -> Result<Value, CliError> {
    let targets = if targets.is_empty() {
        Target::defaults()
    } else {
        targets.to_vec()
    };
    let cal = calibrate(&config.sim, &targets, &SearchSpace::default_grid())?;
    if let Some(path) = write_config {
        fs::write(path, cal.config.to_cfg_string())?;
    }
    if let Some(path) = write_report {
        fs::write(path, cal.report())?;
    }
    let mut out = to_value(&cal);
    out.as_object_mut()
        .expect("calibration is an object")
        .insert("config".into(), Value::String(cal.config.to_cfg_string()));
    Ok(out)
}
