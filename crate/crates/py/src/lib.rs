//! Python bindings: wallets, the content store, an in-memory ledger
//! handle and the network simulator.
//!
//! Amounts are Python ints; hashes, addresses and CIDs are hex or text
//! strings exactly as the CLI prints them. Every failure raises
//! `dnb.DnbError` with a `Kind: detail` message.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use dnb_core::contracts::{DonationEventState, EventParams};
use dnb_core::identity::{authenticate as core_authenticate, sign_challenge, AuthResponse};
use dnb_core::ledger::{
    create_event_tx, donate_tx, load_chain, save_chain, Allocation,
};
use dnb_core::simnet::{self, SearchSpace, Target};
use dnb_core::{
    Address, Amount, Chain, Cid, GenesisConfig, Hash32, KeyPair, PublicKey, SimConfig, SimMetrics,
    Timestamp, Workload,
};

create_exception!(dnb, DnbError, PyException);

fn fail(kind: &str, detail: impl std::fmt::Display) -> PyErr {
    DnbError::new_err(format!("{kind}: {detail}"))
}

macro_rules! kinded {
    ($($ty:ty),*) => {
        $(impl From<KindedError<$ty>> for PyErr {
            fn from(e: KindedError<$ty>) -> PyErr {
                fail(e.0.kind(), &e.0)
            }
        })*
    };
}

struct KindedError<E>(E);
kinded!(
    dnb_core::LedgerError,
    dnb_core::ContractError,
    dnb_core::content_store::StoreError,
    dnb_core::identity::IdentityError,
    dnb_core::simnet::SimError
);

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T, E> OrRaise<T> for Result<T, E>
where
    PyErr: From<KindedError<E>>,
{
    fn or_raise(self) -> PyResult<T> {
        self.map_err(|e| KindedError(e).into())
    }
}

fn parse<T: std::str::FromStr>(what: &str, text: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    text.parse().map_err(|e| fail("ParseError", format!("{what}: {e}")))
}

#[pyclass(module = "dnb", frozen)]
struct Wallet {
    inner: dnb_core::Wallet,
}

#[pymethods]
impl Wallet {
    /// A fresh keypair; `seed` makes it reproducible.
    #[new]
    #[pyo3(signature = (name, seed=None))]
    fn new(name: &str, seed: Option<u64>) -> Self {
        Wallet {
            inner: dnb_core::Wallet::new(name, seed),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Wallet {
            inner: dnb_core::Wallet::load(&path).or_raise()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).or_raise()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn address(&self) -> String {
        self.inner.address.to_hex()
    }

    #[getter]
    fn did(&self) -> String {
        self.inner.did.to_string()
    }

    #[getter]
    fn public_key(&self) -> String {
        self.inner.keys.public().to_hex()
    }

    /// Signature over the challenge digest, for `authenticate`.
    fn sign_challenge<'py>(&self, py: Python<'py>, challenge: &[u8]) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &sign_challenge(&self.inner.keys, challenge).signature)
    }

    fn __repr__(&self) -> String {
        format!("Wallet(name={:?}, address={})", self.inner.name, self.inner.address)
    }
}

/// True iff `public_key` (hex) hashes to `did` and `signature` signs
/// `challenge` under it.
#[pyfunction]
fn authenticate(did: &str, challenge: &[u8], public_key: &str, signature: &[u8]) -> PyResult<bool> {
    let bytes = dnb_core::types::parse_hex_array::<33>(public_key)
        .map_err(|e| fail("ParseError", format!("public key: {e}")))?;
    let response = AuthResponse {
        public_key: PublicKey(bytes),
        signature: signature.to_vec(),
    };
    core_authenticate(did, challenge, &response).or_raise()
}

#[pyclass(module = "dnb", frozen)]
struct ContentStore {
    inner: dnb_core::ContentStore,
}

#[pymethods]
impl ContentStore {
    #[new]
    #[pyo3(signature = (path, max_blob=None))]
    fn new(path: PathBuf, max_blob: Option<u64>) -> PyResult<Self> {
        let inner = match max_blob {
            Some(limit) => dnb_core::ContentStore::with_limit(path, limit),
            None => dnb_core::ContentStore::open(path),
        };
        Ok(ContentStore {
            inner: inner.or_raise()?,
        })
    }

    fn put(&self, data: &[u8]) -> PyResult<String> {
        Ok(self.inner.put(data).or_raise()?.to_string())
    }

    fn get<'py>(&self, py: Python<'py>, cid: &str) -> PyResult<Bound<'py, PyBytes>> {
        let cid: Cid = parse("cid", cid)?;
        Ok(PyBytes::new(py, &self.inner.get(&cid).or_raise()?))
    }

    fn __contains__(&self, cid: &str) -> bool {
        cid.parse::<Cid>().is_ok_and(|c| self.inner.contains(&c))
    }

    /// (blob count, total bytes)
    fn usage(&self) -> PyResult<(usize, u64)> {
        self.inner.usage().or_raise()
    }
}

#[pyfunction]
fn share_link(event_id: &str, cid: &str, platform: &str) -> PyResult<String> {
    let event: Hash32 = parse("event id", event_id)?;
    let cid: Cid = parse("cid", cid)?;
    dnb_core::content_store::share_link_named(&event, &cid, platform).or_raise()
}

fn event_dict<'py>(py: Python<'py>, e: &DonationEventState) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("event_id", e.event_id.to_hex())?;
    d.set_item("owner", e.owner.to_hex())?;
    d.set_item("owner_name", &e.owner_name)?;
    d.set_item("title", &e.title)?;
    d.set_item("description", &e.description)?;
    d.set_item("target", e.target.0)?;
    d.set_item("deadline", e.deadline.0)?;
    d.set_item("image", e.image.to_string())?;
    d.set_item("pool", e.pool.0)?;
    d.set_item("total_donated", e.total_donated.0)?;
    d.set_item("donors", e.donors.iter().map(Address::to_hex).collect::<Vec<_>>())?;
    d.set_item("status", format!("{:?}", e.status))?;
    Ok(d)
}

/// A single-producer ledger held in memory. Each action is one block,
/// `spacing_ms` after the tip.
#[pyclass(module = "dnb")]
struct Network {
    chain: Chain,
    producer: KeyPair,
    spacing_ms: u64,
}

impl Network {
    fn commit(&mut self, txs: &[dnb_core::Transaction], delay_ms: u64) -> PyResult<()> {
        let ts = self.chain.tip().timestamp.saturating_add_ms(delay_ms);
        self.chain.produce_block(&self.producer, txs, ts).or_raise()?;
        Ok(())
    }
}

#[pymethods]
impl Network {
    /// `allocations` maps Wallet objects or hex addresses to balances.
    #[new]
    #[pyo3(signature = (allocations, fee=10, producer_seed=0, spacing_ms=1000))]
    fn new(allocations: &Bound<'_, PyDict>, fee: u128, producer_seed: u64, spacing_ms: u64) -> PyResult<Self> {
        let mut allocs = Vec::new();
        for (who, amount) in allocations.iter() {
            let address = match who.cast::<Wallet>() {
                Ok(w) => w.get().inner.address,
                Err(_) => parse("address", &who.extract::<String>()?)?,
            };
            allocs.push(Allocation {
                address,
                amount: Amount(amount.extract()?),
            });
        }
        let producer = KeyPair::from_seed(producer_seed);
        let genesis = GenesisConfig::new(*producer.public(), Amount(fee), allocs);
        Ok(Network {
            chain: Chain::new(genesis, Timestamp(0)).or_raise()?,
            producer,
            spacing_ms,
        })
    }

    /// Reload a chain written by `save` (or by the CLI) and replay it.
    #[staticmethod]
    #[pyo3(signature = (path, producer_seed=0, spacing_ms=1000))]
    fn load(path: PathBuf, producer_seed: u64, spacing_ms: u64) -> PyResult<Self> {
        Ok(Network {
            chain: load_chain(&path).or_raise()?,
            producer: KeyPair::from_seed(producer_seed),
            spacing_ms,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_chain(&self.chain, &path).or_raise()
    }

    #[getter]
    fn height(&self) -> u64 {
        self.chain.height()
    }

    #[getter]
    fn now(&self) -> u64 {
        self.chain.tip().timestamp.0
    }

    #[getter]
    fn tip_hash(&self) -> String {
        self.chain.tip().block_hash.to_hex()
    }

    #[getter]
    fn fee(&self) -> u128 {
        self.chain.fee().0
    }

    fn balance(&self, address: &str) -> PyResult<u128> {
        let address: Address = parse("address", address)?;
        Ok(self.chain.state().balance(&address).0)
    }

    /// Open a campaign; returns its event id. `deadline_ms` is absolute.
    #[pyo3(signature = (wallet, title, target, deadline_ms, image_cid, description=String::new()))]
    fn create_event(
        &mut self,
        wallet: &Wallet,
        title: String,
        target: u128,
        deadline_ms: u64,
        image_cid: &str,
        description: String,
    ) -> PyResult<String> {
        let w = &wallet.inner;
        let params = EventParams {
            owner: w.address,
            owner_name: w.name.clone(),
            title,
            description,
            target: Amount(target),
            deadline: Timestamp(deadline_ms),
            image: parse("cid", image_cid)?,
        };
        let tx = create_event_tx(&w.keys, self.chain.next_nonce(&w.keys), self.chain.fee(), params)
            .or_raise()?;
        let id = tx.tx_hash.to_hex();
        self.commit(&[tx], self.spacing_ms)?;
        Ok(id)
    }

    /// Returns the transaction hash.
    fn donate(&mut self, wallet: &Wallet, event_id: &str, amount: u128) -> PyResult<String> {
        let w = &wallet.inner;
        let event: Hash32 = parse("event id", event_id)?;
        let tx = donate_tx(&w.keys, self.chain.next_nonce(&w.keys), self.chain.fee(), event, Amount(amount))
            .or_raise()?;
        let hash = tx.tx_hash.to_hex();
        self.commit(&[tx], self.spacing_ms)?;
        Ok(hash)
    }

    /// Append an empty block `ms` after the tip, settling due campaigns.
    fn advance(&mut self, ms: u64) -> PyResult<()> {
        self.commit(&[], ms)
    }

    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let list = PyList::empty(py);
        for e in self.chain.state().contracts().get_donation_events() {
            list.append(event_dict(py, e)?)?;
        }
        Ok(list)
    }

    fn event<'py>(&self, py: Python<'py>, event_id: &str) -> PyResult<Bound<'py, PyDict>> {
        let id: Hash32 = parse("event id", event_id)?;
        let contracts = self.chain.state().contracts();
        let d = event_dict(py, contracts.event(&id).or_raise()?)?;
        let donations: Vec<(String, u128)> = contracts
            .get_donors(&id)
            .or_raise()?
            .into_iter()
            .map(|(a, amount)| (a.to_hex(), amount.0))
            .collect();
        d.set_item("donations", donations)?;
        Ok(d)
    }

    /// List of (event_id, amount, timestamp) donated by `address`.
    fn history(&self, address: &str) -> PyResult<Vec<(String, u128, u64)>> {
        let address: Address = parse("address", address)?;
        Ok(self
            .chain
            .state()
            .contracts()
            .get_donation_history(&address)
            .iter()
            .map(|r| (r.event_id.to_hex(), r.amount.0, r.timestamp.0))
            .collect())
    }

    /// None when the chain replays cleanly, else (height, kind, detail).
    fn verify(&self) -> Option<(u64, String, String)> {
        self.chain
            .validate()
            .failure
            .map(|f| (f.height, f.kind.to_string(), f.detail))
    }
}

#[pyclass(module = "dnb", frozen, get_all)]
struct Metrics {
    n_txs: usize,
    per_tx_latency_s: Vec<f64>,
    mean_latency_s: f64,
    p95_latency_s: f64,
    makespan_s: f64,
    tpm_avg: f64,
    tpm_peak: f64,
    seed: u64,
}

impl From<SimMetrics> for Metrics {
    fn from(m: SimMetrics) -> Self {
        Metrics {
            n_txs: m.n_txs,
            per_tx_latency_s: m.per_tx_latency_s,
            mean_latency_s: m.mean_latency_s,
            p95_latency_s: m.p95_latency_s,
            makespan_s: m.makespan_s,
            tpm_avg: m.tpm_avg,
            tpm_peak: m.tpm_peak,
            seed: m.seed,
        }
    }
}

#[pymethods]
impl Metrics {
    fn __repr__(&self) -> String {
        format!(
            "Metrics(n_txs={}, mean_latency_s={:.3}, p95_latency_s={:.3}, tpm_peak={:.3})",
            self.n_txs, self.mean_latency_s, self.p95_latency_s, self.tpm_peak
        )
    }
}

fn sim_config(config: Option<&str>, seed: Option<u64>) -> PyResult<SimConfig> {
    let base = match config {
        Some(text) => SimConfig::parse_cfg(text).or_raise()?,
        None => SimConfig::calibrated(),
    };
    Ok(match seed {
        Some(s) => base.with_seed(s),
        None => base,
    })
}

/// Settings text the simulator uses when none is given.
#[pyfunction]
fn calibrated_config() -> &'static str {
    simnet::CALIBRATED_CFG
}

/// One run; `config` is settings text as in `calibrated_config()`.
#[pyfunction]
#[pyo3(signature = (n, workload="donate_storm", seed=None, config=None))]
fn simulate(py: Python<'_>, n: usize, workload: &str, seed: Option<u64>, config: Option<&str>) -> PyResult<Metrics> {
    let workload: Workload = workload.parse().or_raise()?;
    let config = sim_config(config, seed)?;
    let metrics = py.detach(|| simnet::run_simulation(&config, n, workload)).or_raise()?;
    Ok(metrics.into())
}

#[pyfunction]
#[pyo3(signature = (ns, workload="donate_storm", config=None))]
fn sweep(py: Python<'_>, ns: Vec<usize>, workload: &str, config: Option<&str>) -> PyResult<Vec<Metrics>> {
    let workload: Workload = workload.parse().or_raise()?;
    let config = sim_config(config, None)?;
    let runs = py.detach(|| simnet::sweep(&config, &ns, workload)).or_raise()?;
    Ok(runs.into_iter().map(Metrics::from).collect())
}

/// Grid-search the timing model against `N:METRIC=VALUE` targets (the
/// reference endpoints when empty). Returns (settings text, objective).
#[pyfunction]
#[pyo3(signature = (targets=Vec::new()))]
fn calibrate(py: Python<'_>, targets: Vec<String>) -> PyResult<(String, f64)> {
    let targets = if targets.is_empty() {
        Target::defaults()
    } else {
        targets
            .iter()
            .map(|t| Target::parse(t).or_raise())
            .collect::<PyResult<Vec<_>>>()?
    };
    let fit = py
        .detach(|| simnet::calibrate(&SimConfig::calibrated(), &targets, &SearchSpace::default_grid()))
        .or_raise()?;
    Ok((fit.config.to_cfg_string(), fit.objective))
}

#[pymodule]
fn dnb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DnbError", m.py().get_type::<DnbError>())?;
    m.add_class::<Wallet>()?;
    m.add_class::<ContentStore>()?;
    m.add_class::<Network>()?;
    m.add_class::<Metrics>()?;
    m.add_function(wrap_pyfunction!(authenticate, m)?)?;
    m.add_function(wrap_pyfunction!(share_link, m)?)?;
    m.add_function(wrap_pyfunction!(calibrated_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    Ok(())
}
