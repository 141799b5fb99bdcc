use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use reqwest::Method;
use tokio::sync::mpsc;
use trustzero_client::{SendError, SendOptions, TamperSpec, TrustClient, Wallet};
use trustzero_core::{keygen, trust_score, KeyMaterial, ServerId, SigAlgorithm, TrustDirectory};

use crate::config::{Behavior, ExperimentConfig};
use crate::network::{boot_network, HarnessError, Network};
use crate::record::{score_mismatches, Checks, ExperimentKind, ExperimentResult, Row, RowOutcome, Summary, SummaryParams, INSTRUMENTED_USER};

const LOGIN_BODY: &str = r#"{"username":"John Doe","password":"johndoe"}"#;
/// Adjacent ramp phases must differ by at least this fraction of the mean.
const MIN_PHASE_SHIFT: f64 = 0.25;

/// One step of a precomputed traffic schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Planned {
    pub user: usize,
    pub server: usize,
    pub tamper: Option<TamperSpec>,
    pub phase: &'static str,
}

fn mix(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Deterministic key for simulated user `index`.
pub fn user_key(algorithm: SigAlgorithm, seed: u64, index: usize) -> KeyMaterial {
    keygen(algorithm, &mut StdRng::seed_from_u64(mix(seed, 1_000_000 + index as u64)))
}

/// A random single-byte flip on a token holding `attestations` signatures.
fn random_tamper(rng: &mut StdRng, cfg: &ExperimentConfig, attestations: usize) -> TamperSpec {
    if attestations == 0 || rng.gen_ratio(1, 10) {
        let byte_index = rng.gen_range(0..cfg.user_key_algorithm().public_key_len());
        TamperSpec { field: trustzero_client::TamperField::PublicKey, byte_index }
    } else {
        TamperSpec::signature(rng.gen_range(0..attestations), rng.gen_range(0..cfg.algorithm.signature_len()))
    }
}

fn round(rng: &mut StdRng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Users run one after another. A tampering user first visits every server
/// once honestly (phase `warmup`), then sends `requests_per_user` rounds of
/// tampered tokens; an honest user sends `requests_per_user` rounds. Each
/// round visits all servers in a seeded order.
pub fn plan_tamper(cfg: &ExperimentConfig) -> Vec<Planned> {
    let n = cfg.n_servers;
    let mut plan = Vec::new();
    let mut user = 0;
    for group in &cfg.users {
        for _ in 0..group.count {
            let mut rng = StdRng::seed_from_u64(mix(cfg.seed, user as u64));
            match group.behavior {
                Behavior::Honest => {
                    for _ in 0..cfg.requests_per_user {
                        for server in round(&mut rng, n) {
                            plan.push(Planned { user, server, tamper: None, phase: "honest" });
                        }
                    }
                }
                Behavior::Tamper => {
                    for server in 0..n {
                        plan.push(Planned { user, server, tamper: None, phase: "warmup" });
                    }
                    for _ in 0..cfg.requests_per_user {
                        for server in round(&mut rng, n) {
                            let tamper = Some(random_tamper(&mut rng, cfg, n));
                            plan.push(Planned { user, server, tamper, phase: "tampered" });
                        }
                    }
                }
            }
            user += 1;
        }
    }
    plan
}

/// User 0 never keeps grants, user 1 first collects one attestation from
/// every server. Their measured requests are interleaved in seeded order,
/// each pair hitting the same server.
pub fn plan_latency(cfg: &ExperimentConfig) -> Vec<Planned> {
    let n = cfg.n_servers;
    let mut rng = StdRng::seed_from_u64(mix(cfg.seed, 0));
    let mut plan: Vec<Planned> = (0..n).map(|server| Planned { user: 1, server, tamper: None, phase: "warmup" }).collect();
    for _ in 0..cfg.requests_per_user {
        let server = rng.gen_range(0..n);
        let mut pair = [
            Planned { user: 0, server, tamper: None, phase: "zero" },
            Planned { user: 1, server, tamper: None, phase: "full" },
        ];
        if rng.gen_bool(0.5) {
            pair.swap(0, 1);
        }
        plan.extend(pair);
    }
    plan
}

/// Endless per-user server sequence for the ramp; callers take a prefix.
pub fn ramp_schedule(cfg: &ExperimentConfig, user: usize) -> impl Iterator<Item = usize> {
    let mut rng = StdRng::seed_from_u64(mix(cfg.seed, 50_000 + user as u64));
    let n = cfg.n_servers;
    std::iter::from_fn(move || Some(rng.gen_range(0..n)))
}

struct SimUser {
    id: String,
    wallet: Wallet,
    directory: TrustDirectory,
    harvest: bool,
    tampering: bool,
}

impl SimUser {
    fn new(id: String, keys: KeyMaterial, directory: &TrustDirectory) -> Self {
        SimUser { id, wallet: Wallet::from_keys(keys), directory: directory.clone(), harvest: true, tampering: false }
    }
}

/// Issues requests against a fixed set of gateways and turns each
/// exchange into a row.
#[derive(Clone)]
struct Driver {
    client: TrustClient,
    targets: Arc<Vec<(ServerId, String)>>,
    started: Instant,
}

impl Driver {
    fn new(net: &Network) -> Self {
        let targets = net.nodes.iter().enumerate().map(|(i, n)| (n.server_id.clone(), net.login_url(i))).collect();
        Driver { client: TrustClient::new(), targets: Arc::new(targets), started: Instant::now() }
    }

    async fn issue(&self, user: &mut SimUser, server: usize, tamper: Option<TamperSpec>, phase: &str) -> Row {
        let (server_id, url) = &self.targets[server];
        let mut sent = user.wallet.token().clone();
        let tamper_label = match tamper {
            Some(t) => {
                let _ = t.apply(&mut sent);
                t.to_string()
            }
            None => String::new(),
        };
        let mut row = Row {
            seq: 0,
            phase: phase.to_string(),
            user: user.id.clone(),
            server: server_id.to_string(),
            attestations: sent.len(),
            tamper: tamper_label,
            outcome: RowOutcome::Failed,
            rule: String::new(),
            status: 0,
            score: None,
            offline_score: trust_score(&sent, &user.directory).score,
            granted: false,
            verify_ms: None,
            latency_seconds: 0.0,
            started_seconds: self.started.elapsed().as_secs_f64(),
        };
        let opts = SendOptions { tamper: tamper.into_iter().collect(), harvest: user.harvest, tofu: false, proof_of_possession: false };
        let begun = Instant::now();
        match self
            .client
            .send(&mut user.wallet, &mut user.directory, Method::POST, url, Some(LOGIN_BODY.as_bytes().to_vec()), &opts)
            .await
        {
            Ok(out) => {
                row.status = out.status;
                row.outcome = match (out.status, &out.deny_rule) {
                    (403, Some(_)) => RowOutcome::Denied,
                    (502, _) => RowOutcome::UpstreamError,
                    _ => RowOutcome::Forwarded,
                };
                row.rule = out.deny_rule.unwrap_or_default();
                row.score = out.score;
                row.granted = out.granted;
                row.verify_ms = out.verify_ms;
                row.latency_seconds = out.latency_seconds;
            }
            Err(e) => {
                if !matches!(e, SendError::Network(_)) {
                    tracing::warn!(user = %user.id, error = %e, "request not sent as planned");
                }
                row.latency_seconds = begun.elapsed().as_secs_f64();
            }
        }
        row
    }
}

fn summary_params(cfg: &ExperimentConfig) -> SummaryParams {
    SummaryParams {
        moving_average_window: cfg.moving_average_window,
        max_phases: cfg.max_phases,
        min_phase_shift: MIN_PHASE_SHIFT,
        failure_budget: cfg.failure_budget,
    }
}

/// Records each user's final offline score and compares it with every
/// gateway's table entry for users that neither tamper nor discard grants.
fn table_check(net: &Network, users: &[SimUser], checks: &mut Checks) {
    for u in users {
        let offline = trust_score(u.wallet.token(), &net.directory).score;
        checks.final_scores.insert(u.id.clone(), offline);
        if !u.harvest || u.tampering {
            continue;
        }
        for node in &net.nodes {
            let table = node.gateway.gateway().score_table().get(u.wallet.public_key()).map(|e| e.score);
            if table != Some(offline) {
                checks.table_mismatches.push((u.id.clone(), node.server_id.to_string(), table, offline));
            }
        }
    }
}

async fn with_network<F, Fut>(cfg: &ExperimentConfig, run: F) -> Result<ExperimentResult, HarnessError>
where
    F: FnOnce(Network) -> Fut,
    Fut: std::future::Future<Output = (Network, Result<ExperimentResult, HarnessError>)>,
{
    cfg.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    let net = boot_network(cfg.n_servers, cfg.algorithm).await?;
    if let Err(e) = net.health_check().await {
        net.teardown().await;
        return Err(e);
    }
    let (net, result) = run(net).await;
    net.teardown().await;
    result
}

pub async fn run_tamper_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    with_network(cfg, |net| async move {
        let r = tamper_on(&net, cfg).await;
        (net, r)
    })
    .await
}

/// Runs the tamper schedule against an already booted network.
pub async fn tamper_on(net: &Network, cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    if net.len() != cfg.n_servers {
        return Err(HarnessError::Config(format!("network has {} servers, config {}", net.len(), cfg.n_servers)));
    }
    let wall = Instant::now();
    let plan = plan_tamper(cfg);
    let n_users = cfg.total_users();
    let keys = generate_keys(cfg.user_key_algorithm(), cfg.seed, n_users).await;
    let mut users: Vec<SimUser> =
        keys.into_iter().enumerate().map(|(i, k)| SimUser::new(format!("u{i}"), k, &net.directory)).collect();
    for step in plan.iter().filter(|p| p.tamper.is_some()) {
        users[step.user].tampering = true;
    }
    let driver = Driver::new(net);
    let mut rows = Vec::with_capacity(plan.len());
    let mut contacts_while_tampering = 0;
    for (seq, step) in plan.iter().enumerate() {
        let before = net.origin_contacts();
        let mut row = driver.issue(&mut users[step.user], step.server, step.tamper, step.phase).await;
        if step.tamper.is_some() {
            contacts_while_tampering += net.origin_contacts() - before;
        }
        row.seq = seq;
        rows.push(row);
    }
    let mut checks = Checks {
        origin_contacts_while_tampering: Some(contacts_while_tampering),
        score_mismatches: score_mismatches(&rows).len(),
        ..Checks::default()
    };
    table_check(net, &users, &mut checks);
    checks.wall_seconds = wall.elapsed().as_secs_f64();
    let summary = Summary::from_rows(ExperimentKind::Tamper, &rows, summary_params(cfg));
    Ok(ExperimentResult { rows, summary, checks })
}

pub async fn run_latency_comparison(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    with_network(cfg, |net| async move {
        let r = latency_on(&net, cfg).await;
        (net, r)
    })
    .await
}

pub async fn latency_on(net: &Network, cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let wall = Instant::now();
    let plan = plan_latency(cfg);
    let mut keys = generate_keys(cfg.user_key_algorithm(), cfg.seed, 2).await.into_iter();
    let mut zero = SimUser::new("zero".into(), keys.next().unwrap(), &net.directory);
    zero.harvest = false;
    let full = SimUser::new("full".into(), keys.next().unwrap(), &net.directory);
    let mut users = [zero, full];
    let driver = Driver::new(net);
    let mut rows = Vec::with_capacity(plan.len());
    for (seq, step) in plan.iter().enumerate() {
        let mut row = driver.issue(&mut users[step.user], step.server, None, step.phase).await;
        row.seq = seq;
        rows.push(row);
    }
    let mut checks = Checks { score_mismatches: score_mismatches(&rows).len(), ..Checks::default() };
    table_check(net, &users, &mut checks);
    checks.wall_seconds = wall.elapsed().as_secs_f64();
    let summary = Summary::from_rows(ExperimentKind::Latency, &rows, summary_params(cfg));
    Ok(ExperimentResult { rows, summary, checks })
}

pub async fn run_load_ramp(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    with_network(cfg, |net| async move {
        let r = ramp_on(&net, cfg).await;
        (net, r)
    })
    .await
}

/// The instrumented user collects attestations, measures an unloaded
/// baseline, then keeps sending while background users join one by one.
/// Full load is held for `hold_seconds` after the last user joins.
pub async fn ramp_on(net: &Network, cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let wall = Instant::now();
    let n_background = cfg.total_users();
    let mut keys = generate_keys(cfg.user_key_algorithm(), cfg.seed, n_background + 1).await.into_iter();
    let driver = Driver::new(net);

    let (tx, mut rx) = mpsc::unbounded_channel::<Row>();
    let collector = tokio::spawn(async move {
        let mut rows = Vec::new();
        while let Some(mut row) = rx.recv().await {
            row.seq = rows.len();
            rows.push(row);
        }
        rows
    });

    let mut legit = SimUser::new(INSTRUMENTED_USER.into(), keys.next().unwrap(), &net.directory);
    let mut schedule = ramp_schedule(cfg, 0);
    for server in 0..cfg.n_servers {
        let _ = tx.send(driver.issue(&mut legit, server, None, "warmup").await);
    }
    for _ in 0..cfg.baseline_requests {
        let server = schedule.next().unwrap();
        let _ = tx.send(driver.issue(&mut legit, server, None, "baseline").await);
    }

    let stop = Arc::new(AtomicBool::new(false));
    let failures = Arc::new(AtomicUsize::new(0));
    let failure_cap = 50usize;

    let legit_task = {
        let (driver, tx, stop, failures) = (driver.clone(), tx.clone(), stop.clone(), failures.clone());
        tokio::spawn(async move {
            while !stop.load(Ordering::Relaxed) {
                let row = driver.issue(&mut legit, schedule.next().unwrap(), None, "ramp").await;
                if row.outcome == RowOutcome::Failed && failures.fetch_add(1, Ordering::Relaxed) + 1 >= failure_cap {
                    stop.store(true, Ordering::Relaxed);
                }
                let _ = tx.send(row);
            }
            legit
        })
    };

    let think = Duration::from_millis(cfg.think_time_ms);
    let mut background = Vec::with_capacity(n_background);
    let mut index = 0;
    'spawn: for group in &cfg.users {
        for _ in 0..group.count {
            if stop.load(Ordering::Relaxed) {
                break 'spawn;
            }
            index += 1;
            let mut user = SimUser::new(format!("u{index:04}"), keys.next().unwrap(), &net.directory);
            let behavior = group.behavior;
            let mut schedule = ramp_schedule(cfg, index);
            let mut rng = StdRng::seed_from_u64(mix(cfg.seed, 90_000 + index as u64));
            let (driver, tx, stop, failures, cfg) = (driver.clone(), tx.clone(), stop.clone(), failures.clone(), cfg.clone());
            background.push(tokio::spawn(async move {
                let mut sent = 0;
                while !stop.load(Ordering::Relaxed) {
                    let (server, tamper, phase) = match behavior {
                        Behavior::Tamper if sent < cfg.n_servers => (sent, None, "warmup"),
                        Behavior::Tamper => {
                            let held = user.wallet.token().len();
                            (schedule.next().unwrap(), Some(random_tamper(&mut rng, &cfg, held)), "background")
                        }
                        Behavior::Honest => (schedule.next().unwrap(), None, "background"),
                    };
                    let row = driver.issue(&mut user, server, tamper, phase).await;
                    sent += 1;
                    if row.outcome == RowOutcome::Failed && failures.fetch_add(1, Ordering::Relaxed) + 1 >= failure_cap {
                        stop.store(true, Ordering::Relaxed);
                    }
                    let _ = tx.send(row);
                    if !think.is_zero() {
                        tokio::time::sleep(think).await;
                    }
                }
            }));
            tokio::time::sleep(Duration::from_secs_f64(group.spawn_interval_seconds)).await;
        }
    }
    let hold_until = Instant::now() + Duration::from_secs_f64(cfg.hold_seconds);
    while Instant::now() < hold_until && !stop.load(Ordering::Relaxed) {
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    stop.store(true, Ordering::Relaxed);
    let legit = legit_task.await.map_err(|e| HarnessError::Output(format!("instrumented user: {e}")))?;
    for task in background {
        task.await.map_err(|e| HarnessError::Output(format!("background user: {e}")))?;
    }
    drop(tx);
    let rows = collector.await.map_err(|e| HarnessError::Output(format!("collector: {e}")))?;

    let mut checks = Checks { score_mismatches: score_mismatches(&rows).len(), ..Checks::default() };
    checks.final_scores.insert(legit.id.clone(), trust_score(legit.wallet.token(), &net.directory).score);
    checks.wall_seconds = wall.elapsed().as_secs_f64();
    let summary = Summary::from_rows(ExperimentKind::Ramp, &rows, summary_params(cfg));
    Ok(ExperimentResult { rows, summary, checks })
}

/// Generates user keys off the async workers; RSA generation is slow.
async fn generate_keys(algorithm: SigAlgorithm, seed: u64, count: usize) -> Vec<KeyMaterial> {
    tokio::task::spawn_blocking(move || (0..count).map(|i| user_key(algorithm, seed, i)).collect())
        .await
        .expect("key generation does not panic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::UserGroup;

    #[test]
    fn tamper_plan_shape() {
        let cfg = ExperimentConfig { n_servers: 5, requests_per_user: 50, algorithm: SigAlgorithm::Ed25519, ..ExperimentConfig::tamper() };
        let plan = plan_tamper(&cfg);
        assert_eq!(plan.len(), 5 + 250 + 250);
        assert!(plan[..5].iter().all(|p| p.user == 0 && p.phase == "warmup" && p.tamper.is_none()));
        let tampered: Vec<_> = plan.iter().filter(|p| p.phase == "tampered").collect();
        assert_eq!(tampered.len(), 250);
        assert!(tampered.iter().all(|p| p.tamper.is_some() && p.user == 0));
        let honest: Vec<_> = plan.iter().filter(|p| p.phase == "honest").collect();
        assert!(honest.iter().all(|p| p.user == 1 && p.tamper.is_none()));
        for round in honest.chunks(5) {
            let mut servers: Vec<_> = round.iter().map(|p| p.server).collect();
            servers.sort();
            assert_eq!(servers, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn plans_depend_only_on_seed() {
        let cfg = ExperimentConfig { seed: 42, algorithm: SigAlgorithm::EcP256, ..ExperimentConfig::tamper() };
        assert_eq!(plan_tamper(&cfg), plan_tamper(&cfg.clone()));
        let other = ExperimentConfig { seed: 43, ..cfg.clone() };
        assert_ne!(plan_tamper(&cfg), plan_tamper(&other));
        let lat = ExperimentConfig { seed: 42, ..ExperimentConfig::latency() };
        assert_eq!(plan_latency(&lat), plan_latency(&lat.clone()));
        let a: Vec<_> = ramp_schedule(&lat, 3).take(100).collect();
        let b: Vec<_> = ramp_schedule(&lat, 3).take(100).collect();
        assert_eq!(a, b);
        assert_ne!(a, ramp_schedule(&lat, 4).take(100).collect::<Vec<_>>());
    }

    #[test]
    fn latency_plan_pairs_share_a_server() {
        let cfg = ExperimentConfig { requests_per_user: 500, ..ExperimentConfig::latency() };
        let plan = plan_latency(&cfg);
        assert_eq!(plan.len(), 5 + 1000);
        for pair in plan[5..].chunks(2) {
            assert_eq!(pair[0].server, pair[1].server);
            assert_ne!(pair[0].user, pair[1].user);
        }
        assert_eq!(plan.iter().filter(|p| p.phase == "zero").count(), 500);
    }

    #[test]
    fn tamper_specs_stay_in_bounds() {
        let mut rng = StdRng::seed_from_u64(5);
        for alg in SigAlgorithm::ALL {
            let cfg = ExperimentConfig { algorithm: alg, user_algorithm: Some(SigAlgorithm::Ed25519), ..ExperimentConfig::tamper() };
            for _ in 0..500 {
                let spec = random_tamper(&mut rng, &cfg, 5);
                match spec.field {
                    trustzero_client::TamperField::PublicKey => assert!(spec.byte_index < 32),
                    trustzero_client::TamperField::Signature(i) => {
                        assert!(i < 5);
                        assert!(spec.byte_index < alg.signature_len());
                    }
                }
            }
        }
    }

    #[test]
    fn user_keys_are_deterministic() {
        assert_eq!(user_key(SigAlgorithm::Ed25519, 3, 1).public_key(), user_key(SigAlgorithm::Ed25519, 3, 1).public_key());
        assert_ne!(user_key(SigAlgorithm::Ed25519, 3, 1).public_key(), user_key(SigAlgorithm::Ed25519, 3, 2).public_key());
    }

    #[test]
    fn mixed_population_plan() {
        let cfg = ExperimentConfig {
            n_servers: 2,
            requests_per_user: 3,
            users: vec![UserGroup::new(2, 0.0, Behavior::Honest), UserGroup::new(1, 0.0, Behavior::Tamper)],
            ..ExperimentConfig::tamper()
        };
        let plan = plan_tamper(&cfg);
        assert_eq!(plan.len(), 6 + 6 + 2 + 6);
        assert_eq!(plan.last().unwrap().user, 2);
    }
}
