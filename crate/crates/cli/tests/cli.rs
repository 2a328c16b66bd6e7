use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_dnb");

struct Node {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Node {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        Node { _tmp: tmp, root }
    }

    fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    fn exec(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .args(args)
            .env("DNB_DATA_DIR", self.data())
            .current_dir(&self.root)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.exec(args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn json(&self, args: &[&str]) -> serde_json::Value {
        let mut full = vec!["--json"];
        full.extend_from_slice(args);
        serde_json::from_str(&self.ok(&full)).unwrap()
    }

    fn fails(&self, args: &[&str], code: i32, prefix: &str) {
        let out = self.exec(args);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(code), "{args:?}: {stderr}");
        assert!(stderr.starts_with(prefix), "{args:?}: {stderr}");
        assert!(out.stdout.is_empty() || args.contains(&"verify"));
    }

    fn file(&self, name: &str, bytes: &[u8]) -> String {
        let path = self.root.join(name);
        fs::write(&path, bytes).unwrap();
        path.to_str().unwrap().to_string()
    }
}

fn balance(node: &Node, wallet: &str) -> u128 {
    node.json(&["wallet", "info", wallet])["balance"]
        .as_str()
        .unwrap()
        .parse()
        .unwrap()
}

/// alice opens "Well" (target 300) and "Roof" (target 10000); bob gives
/// 120 and carol 200 to Well, carol 50 to Roof; then both deadlines pass.
fn scenario() -> (Node, String, String) {
    let node = Node::new();
    for (name, seed) in [("alice", "1"), ("bob", "2"), ("carol", "3")] {
        node.ok(&["wallet", "new", name, "--seed", seed]);
    }
    node.ok(&[
        "init", "--seed", "7", "--fee", "10",
        "--alloc", "alice=1000", "--alloc", "bob=500", "--alloc", "carol=800",
    ]);
    let img = node.file("well.png", b"\x89PNG well");
    let well = node.json(&[
        "event", "create", "--wallet", "alice", "--title", "Well", "--desc", "clean water",
        "--target", "300", "--deadline", "+60", "--image", &img,
    ])["event_id"]
        .as_str()
        .unwrap()
        .to_string();
    let img = node.file("roof.png", b"\x89PNG roof");
    let roof = node.json(&[
        "event", "create", "--wallet", "alice", "--title", "Roof", "--owner-name", "Village",
        "--target", "10000", "--deadline", "+90", "--image", &img,
    ])["event_id"]
        .as_str()
        .unwrap()
        .to_string();
    node.ok(&["donate", "--wallet", "bob", "--event", &well, "--amount", "120"]);
    node.ok(&["donate", "--wallet", "carol", "--event", &well, "--amount", "200"]);
    node.ok(&["donate", "--wallet", "carol", "--event", &roof, "--amount", "50"]);
    node.ok(&["advance", "+100"]);
    (node, well, roof)
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("DNB_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} drifted");
}

fn tree_digest(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.clone(), Sha256::digest(fs::read(&p).unwrap()).to_vec()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn scenario_balances_follow_fees_payouts_and_refunds() {
    let (node, _, _) = scenario();
    // alice: two creations, Well pays out 320
    assert_eq!(balance(&node, "alice"), 1000 - 2 * 10 + 320);
    assert_eq!(balance(&node, "bob"), 500 - 10 - 120);
    // carol: Roof failed, 50 comes back; fees do not
    assert_eq!(balance(&node, "carol"), 800 - 2 * 10 - 200);
}

#[test]
fn read_outputs_match_golden_files() {
    let (node, well, roof) = scenario();
    golden("events_list.json", &node.ok(&["events", "list"]));
    golden("event_well.json", &node.ok(&["event", "show", &well]));
    golden("event_roof.json", &node.ok(&["event", "show", &roof]));
    golden("history_carol.json", &node.ok(&["history", "carol"]));
    golden("wallet_info_bob.json", &node.ok(&["wallet", "info", "bob"]));
    golden("wallet_list.json", &node.ok(&["wallet", "list"]));
    golden("verify.json", &node.ok(&["verify"]));
}

#[test]
fn read_commands_leave_the_data_dir_untouched() {
    let (node, well, _) = scenario();
    let before = tree_digest(&node.data());
    node.ok(&["events", "list"]);
    node.ok(&["event", "show", &well]);
    node.ok(&["history", "bob"]);
    node.ok(&["wallet", "info", "alice"]);
    node.ok(&["verify"]);
    node.ok(&["share", "--event", &well, "--platform", "twitter"]);
    assert_eq!(tree_digest(&node.data()), before);
}

#[test]
fn domain_errors_exit_one() {
    let (node, well, _) = scenario();
    let missing = "ab".repeat(32);
    node.fails(&["event", "show", &missing], 1, "error: UnknownEvent: ");
    node.fails(&["donate", "--wallet", "bob", "--event", &well, "--amount", "5"], 1, "error: EventNotActive: ");
    node.fails(&["donate", "--wallet", "nobody", "--event", &well, "--amount", "5"], 1, "error: UnknownWallet: ");
    node.fails(&["init"], 1, "error: AlreadyInitialized: ");
    node.fails(&["wallet", "new", "alice"], 1, "error: ");
    node.fails(&["share", "--event", &well, "--platform", "myspace"], 1, "error: UnknownPlatform: ");

    let fresh = Node::new();
    fresh.fails(&["events", "list"], 1, "error: ");
}

#[test]
fn usage_errors_exit_two() {
    let node = Node::new();
    node.fails(&["bogus"], 2, "error: ");
    node.fails(&["advance", "5"], 2, "error: ");
    node.fails(&["donate", "--wallet", "a"], 2, "error: ");
    node.fails(&["simulate", "--n", "3", "--workload", "storm"], 2, "error: ");
    node.fails(&["calibrate", "--target", "5:mean_latency_s=-1"], 2, "error: ");
    let help = node.exec(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn auth_round_trip_through_the_binary() {
    let (node, _, _) = scenario();
    let challenge = "00112233445566778899aabbccddeeff";
    let signed = node.json(&["auth", "sign", "--wallet", "bob", "--challenge", challenge]);
    let did = signed["did"].as_str().unwrap();
    let pk = signed["public_key"].as_str().unwrap();
    let sig = signed["signature"].as_str().unwrap();
    let ok = node.json(&["auth", "verify", "--did", did, "--challenge", challenge, "--public-key", pk, "--signature", sig]);
    assert_eq!(ok["authenticated"], true);
    let other = "00112233445566778899aabbccddeefe";
    node.fails(
        &["auth", "verify", "--did", did, "--challenge", other, "--public-key", pk, "--signature", sig],
        1,
        "error: AuthenticationFailed: ",
    );
}

#[test]
fn blobs_round_trip_through_the_binary() {
    let node = Node::new();
    let src = node.file("pic.bin", &[3u8; 777]);
    let put = node.json(&["blob", "put", &src]);
    let cid = put["cid"].as_str().unwrap();
    let dst = node.root.join("copy.bin");
    node.ok(&["blob", "get", cid, "--out", dst.to_str().unwrap()]);
    assert_eq!(fs::read(dst).unwrap(), vec![3u8; 777]);
}

#[test]
fn tampering_makes_verify_exit_one() {
    let (node, _, _) = scenario();
    let path = node.data().join("chain/blocks.jsonl");
    let mut bytes = fs::read(&path).unwrap();
    let second_line = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
    let at = second_line + 40;
    bytes[at] = if bytes[at] == b'0' { b'1' } else { b'0' };
    fs::write(&path, bytes).unwrap();
    let out = node.exec(&["verify"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: ChainInvalid: height 1: "), "{stderr}");
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["failure"]["height"], 1);
    node.fails(&["events", "list"], 1, "error: ");
}

#[test]
fn held_lock_refuses_writers_but_not_readers() {
    let (node, _, roof) = scenario();
    let lock = fs::File::create(node.data().join("dnb.lock")).unwrap();
    lock.try_lock().unwrap();
    node.fails(&["advance", "+1"], 1, "error: Locked: ");
    node.ok(&["event", "show", &roof]);
    drop(lock);
    node.ok(&["advance", "+1"]);
}

#[test]
fn settings_file_sets_network_and_fee() {
    let node = Node::new();
    let cfg = node.file("dnb.cfg", b"network_name = testnet\nfee = 25\n");
    node.ok(&["--config", &cfg, "wallet", "new", "dana", "--seed", "4"]);
    let init = node.json(&["--config", &cfg, "init", "--alloc", "dana=100", "--seed", "1"]);
    assert_eq!(init["fee"], "25");
    assert_eq!(init["network_name"], "testnet");
    assert_eq!(balance(&node, "dana"), 100);
    let bad = node.file("bad.cfg", b"colour = blue\n");
    node.fails(&["--config", &bad, "wallet", "list"], 1, "error: ");
}

#[test]
fn data_dir_flag_overrides_environment() {
    let node = Node::new();
    let other = node.root.join("elsewhere");
    node.ok(&["--data-dir", other.to_str().unwrap(), "wallet", "new", "erin", "--seed", "5"]);
    assert!(other.join("wallets").exists());
    assert!(!node.data().join("wallets").join("erin.json").exists());
}

#[test]
fn simulate_and_sweep_are_reproducible() {
    let node = Node::new();
    let a = node.ok(&["simulate", "--n", "12", "--workload", "mixed"]);
    let b = node.ok(&["simulate", "--n", "12", "--workload", "mixed"]);
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["chain_valid"], true);
    let csv = node.ok(&["sweep", "--from", "5", "--to", "25", "--step", "10", "--out", "-"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("n_txs,"));
    assert_eq!(csv, node.ok(&["sweep", "--from", "5", "--to", "25", "--step", "10", "--out", "-"]));
}

fn run_in_process(data: &Path, args: &[&str]) -> (i32, String) {
    let mut full = vec!["dnb", "--json", "--data-dir", data.to_str().unwrap()];
    full.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = dnb_cli::run(full, &mut out, &mut err);
    (code, String::from_utf8(err).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn donations_succeed_exactly_when_affordable(amounts in prop::collection::vec(1u128..400, 1..6)) {
        let tmp = tempfile::tempdir().unwrap();
        let data = tmp.path().join("d");
        let img = tmp.path().join("i.png");
        fs::write(&img, b"img").unwrap();
        let run = |args: &[&str]| run_in_process(&data, args);
        run(&["wallet", "new", "owner", "--seed", "1"]);
        run(&["wallet", "new", "giver", "--seed", "2"]);
        prop_assert_eq!(run(&["init", "--fee", "7", "--alloc", "owner=100", "--alloc", "giver=600"]).0, 0);
        prop_assert_eq!(
            run(&["event", "create", "--wallet", "owner", "--title", "t", "--target", "5000",
                  "--deadline", "+3600", "--image", img.to_str().unwrap()]).0,
            0
        );
        let (mut out, mut err) = (Vec::new(), Vec::new());
        dnb_cli::run(["dnb", "--data-dir", data.to_str().unwrap(), "events", "list"], &mut out, &mut err);
        let events: serde_json::Value = serde_json::from_slice(&out).unwrap();
        let event = events[0]["event_id"].as_str().unwrap().to_string();

        let mut expected = 600u128;
        for amount in amounts {
            let amount_text = amount.to_string();
            let (code, err) = run(&["donate", "--wallet", "giver", "--event", &event, "--amount", &amount_text]);
            if amount + 7 <= expected {
                prop_assert_eq!(code, 0, "{}", err);
                expected -= amount + 7;
            } else {
                prop_assert_eq!(code, 1);
                prop_assert!(err.starts_with("error: InsufficientBalance: "), "{}", err);
            }
        }
        let (mut out, mut err) = (Vec::new(), Vec::new());
        dnb_cli::run(["dnb", "--data-dir", data.to_str().unwrap(), "wallet", "info", "giver"], &mut out, &mut err);
        let info: serde_json::Value = serde_json::from_slice(&out).unwrap();
        prop_assert_eq!(info["balance"].as_str().unwrap(), expected.to_string());
    }
}
