//! End-to-end acceptance run. Criteria execute one after another (timing
//! checks share one machine) and each prints a single PASS/FAIL line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use trustzero_client::{Method, SendOptions, TrustClient, Wallet};
use trustzero_core::*;
use trustzero_gateway::{render_snapshot, Gateway, GatewayConfig, GatewayPolicy, Outcome};
use trustzero_simnet::record::read_rows;
use trustzero_simnet::*;

type Check = Result<String, String>;

const LOGIN: &[u8] = br#"{"username":"John Doe","password":"johndoe"}"#;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("runtime")
}

// 1

fn codec_and_signature_properties() -> Check {
    let mut rng = StdRng::seed_from_u64(0x7a11);
    let mut round_trips = 0;
    let mut tamper_trials = 0;
    for alg in SigAlgorithm::ALL {
        let servers: Vec<(ServerId, KeyMaterial)> =
            (0..5).map(|i| (ServerId::new(format!("s{}", i + 1)).unwrap(), keygen(alg, &mut rng))).collect();
        let users: Vec<KeyMaterial> = (0..4).map(|_| keygen(alg, &mut rng)).collect();
        let mut dir = TrustDirectory::new();
        for (id, k) in &servers {
            dir.insert(id.clone(), alg, k.public_key().to_vec()).unwrap();
        }
        for case in 0..1000 {
            let user = &users[rng.gen_range(0..users.len())];
            let n = rng.gen_range(0..=servers.len());
            let mut chosen: Vec<&(ServerId, KeyMaterial)> = servers.iter().collect();
            chosen.shuffle(&mut rng);
            let atts: Vec<Attestation> =
                chosen[..n].iter().map(|(id, k)| sign_attestation(k, id, user.public_key()).unwrap()).collect();
            let token = TrustToken::from_parts(user.public_key().to_vec(), atts, DEFAULT_MAX_ATTESTATIONS).unwrap();
            let decoded = decode_token(&encode_token(&token).unwrap()).map_err(|e| format!("{alg} case {case}: {e}"))?;
            ensure!(decoded == token, "{alg} case {case}: decode(encode(t)) != t");
            ensure!(trust_score(&decoded, &dir).score as usize == n, "{alg} case {case}: honest token does not score {n}");
            round_trips += 1;

            if n > 0 {
                let i = rng.gen_range(0..n);
                let mut t = token.clone();
                let sig = t.signature_mut(i).unwrap();
                let b = rng.gen_range(0..sig.len());
                sig[b] ^= 1 << rng.gen_range(0..8);
                let att = &t.attestations()[i];
                let entry = dir.get(&att.issuer).unwrap();
                ensure!(
                    !verify_attestation(att, &entry.public_key, alg, t.subject_public_key()).unwrap(),
                    "{alg} case {case}: flipped signature byte {b} still verifies"
                );
                ensure!(trust_score(&t, &dir).score as usize == n - 1, "{alg} case {case}: tampered signature still counted");

                let mut t = token.clone();
                let b = rng.gen_range(0..alg.public_key_len());
                t.subject_public_key_mut()[b] ^= 0xff;
                ensure!(trust_score(&t, &dir).score == 0, "{alg} case {case}: flipped subject key byte {b} still scores");
                tamper_trials += 2;
            }
        }

        // every byte position of one attestation, and of the issuer key
        let (id, k) = &servers[0];
        let user = &users[0];
        let att = sign_attestation(k, id, user.public_key()).unwrap();
        for b in 0..att.signature.len() {
            let mut bad = att.clone();
            bad.signature[b] ^= 0xff;
            ensure!(!verify_attestation(&bad, k.public_key(), alg, user.public_key()).unwrap(), "{alg}: sig byte {b} flip verifies");
            tamper_trials += 1;
        }
        for b in 0..alg.public_key_len() {
            let mut pk = k.public_key().to_vec();
            pk[b] ^= 0xff;
            ensure!(!verify_attestation(&att, &pk, alg, user.public_key()).unwrap(), "{alg}: issuer key byte {b} flip verifies");
            let mut subject = user.public_key().to_vec();
            subject[b] ^= 0xff;
            ensure!(!verify_attestation(&att, k.public_key(), alg, &subject).unwrap(), "{alg}: subject byte {b} flip verifies");
            tamper_trials += 2;
        }
    }
    Ok(format!("{round_trips} round trips, {tamper_trials} tamper trials all rejected"))
}

// 2

async fn trust_buildup() -> Check {
    let net = boot_network(5, SigAlgorithm::Rsa2048).await.map_err(|e| e.to_string())?;
    let result = async {
        let client = TrustClient::new();
        let mut dir = net.directory.clone();
        let mut w = Wallet::in_memory(SigAlgorithm::Rsa2048);
        for i in 0..5 {
            let out = client
                .send(&mut w, &mut dir, Method::POST, &net.login_url(i), Some(LOGIN.to_vec()), &SendOptions::honest())
                .await
                .map_err(|e| e.to_string())?;
            ensure!(out.status == 200 && out.granted, "visit {i}: status {} granted {}", out.status, out.granted);
            ensure!(out.score == Some(i as u32), "visit {i}: gateway score {:?}", out.score);
        }
        let built = trust_score(w.token(), &net.directory).score;
        ensure!(built == 5, "score after first pass {built}");
        for i in 0..5 {
            let out = client
                .send(&mut w, &mut dir, Method::POST, &net.login_url(i), Some(LOGIN.to_vec()), &SendOptions::honest())
                .await
                .map_err(|e| e.to_string())?;
            ensure!(out.score == Some(5) && out.granted, "revisit {i}: score {:?}", out.score);
        }
        let renewed = trust_score(w.token(), &net.directory).score;
        ensure!(renewed == 5 && w.token().len() == 5, "after revisits: score {renewed}, {} attestations", w.token().len());
        Ok("score 5 after first pass, 5 after revisiting all".to_string())
    }
    .await;
    net.teardown().await;
    result
}

// 3

async fn tamper_experiment() -> Check {
    let cfg = ExperimentConfig::tamper();
    let r = run_tamper_experiment(&cfg).await.map_err(|e| e.to_string())?;
    let tampered = r.summary.phase("tampered").ok_or("no tampered phase")?;
    let honest = r.summary.phase("honest").ok_or("no honest phase")?;
    let expected = cfg.requests_per_user * cfg.n_servers;
    ensure!(tampered.latency_seconds.count == expected, "{} tampered requests, expected {expected}", tampered.latency_seconds.count);
    ensure!(tampered.denied == expected, "tampered: {}/{expected} denied", tampered.denied);
    ensure!(
        r.checks.origin_contacts_while_tampering == Some(0),
        "origin contacted {:?} times while tampering",
        r.checks.origin_contacts_while_tampering
    );
    ensure!(honest.forwarded == expected, "honest: {}/{expected} forwarded", honest.forwarded);
    ensure!(r.checks.final_scores.get("u1") == Some(&(cfg.n_servers as u32)), "honest final score {:?}", r.checks.final_scores.get("u1"));
    let deny = tampered.latency_seconds.median;
    let fwd = honest.latency_seconds.median;
    ensure!(deny <= fwd, "median deny {deny:.6}s > median forward {fwd:.6}s");
    ensure!(r.checks.score_mismatches == 0, "{} gateway/offline score mismatches", r.checks.score_mismatches);
    Ok(format!(
        "{expected}/{expected} tampered denied, 0 origin contacts, {expected}/{expected} honest forwarded, median deny {:.2} ms <= forward {:.2} ms",
        deny * 1e3,
        fwd * 1e3
    ))
}

// 4

async fn cold_start() -> Check {
    let net = boot_network_with(1, SigAlgorithm::Rsa2048, |_, cfg| cfg.decision_buffer = 16).await.map_err(|e| e.to_string())?;
    let result = async {
        let gw = net.nodes[0].gateway.gateway();
        ensure!(*gw.policy() == GatewayPolicy::default(), "gateway not on default policy");
        let mut dir = net.directory.clone();
        let mut w = Wallet::in_memory(SigAlgorithm::Ed25519);
        let out = TrustClient::new()
            .send(&mut w, &mut dir, Method::POST, &net.login_url(0), Some(LOGIN.to_vec()), &SendOptions::honest())
            .await
            .map_err(|e| e.to_string())?;
        ensure!(out.status == 200, "status {}", out.status);
        ensure!(out.score == Some(0), "reported score {:?}", out.score);
        ensure!(out.granted && w.token().len() == 1, "no grant merged");
        let rec = gw.decisions().recent().last().cloned().ok_or("no decision recorded")?;
        ensure!(rec.outcome == Outcome::Forwarded && rec.score == 0 && rec.granted, "decision {:?}", rec);
        ensure!(net.origin_contacts() == 1, "origin saw {} requests", net.origin_contacts());
        Ok("bare key forwarded with score 0 and granted".to_string())
    }
    .await;
    net.teardown().await;
    result
}

// 5

async fn revocation() -> Check {
    let mut net = boot_network(5, SigAlgorithm::Rsa2048).await.map_err(|e| e.to_string())?;
    let result = async {
        let client = TrustClient::new();
        let mut dir = net.directory.clone();
        let mut w = Wallet::in_memory(SigAlgorithm::Ed25519);
        for i in 0..5 {
            client
                .send(&mut w, &mut dir, Method::POST, &net.login_url(i), Some(LOGIN.to_vec()), &SendOptions::honest())
                .await
                .map_err(|e| e.to_string())?;
        }
        let before = trust_score(w.token(), &net.directory).score;
        ensure!(before == 5, "built score {before}");
        let refreshed = net.rotate(0).await.map_err(|e| e.to_string())?.clone();
        let s1 = server_name(0);
        let att = w.token().attestation_from(&s1).ok_or("no attestation from s1")?;
        let entry = refreshed.get(&s1).ok_or("s1 missing from refreshed directory")?;
        let still = verify_attestation(att, &entry.public_key, entry.algorithm, w.public_key()).map_err(|e| e.to_string())?;
        ensure!(!still, "old s1 attestation still verifies");
        let report = trust_score(w.token(), &refreshed);
        ensure!(report.verdict(&s1) == Some(IssuerVerdict::Invalid), "s1 verdict {:?}", report.verdict(&s1));
        ensure!(report.score == before - 1, "score {} -> {}", before, report.score);
        for node in &net.nodes {
            ensure!(*node.gateway.gateway().directory() == refreshed, "{} did not receive the new directory", node.server_id);
        }
        Ok(format!("s1 attestation scores 0, network score {before} -> {}", report.score))
    }
    .await;
    net.teardown().await;
    result
}

// 6

async fn flat_verification_cost() -> Check {
    let cfg = ExperimentConfig::latency();
    let r = run_latency_comparison(&cfg).await.map_err(|e| e.to_string())?;
    let verify = |phase: &str| -> Vec<f64> { r.rows.iter().filter(|x| x.phase == phase).filter_map(|x| x.verify_ms).collect() };
    let (v0, v5) = (verify("zero"), verify("full"));
    ensure!(v0.len() >= 500 && v5.len() >= 500, "verify timings: {} and {}", v0.len(), v5.len());
    ensure!(r.rows.iter().filter(|x| x.phase == "full").all(|x| x.attestations == cfg.n_servers), "full user lost attestations");
    ensure!(r.rows.iter().filter(|x| x.phase == "zero").all(|x| x.attestations == 0), "zero user gained attestations");
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let verify_diff = (mean(&v5) - mean(&v0)).abs();
    let e2e0 = r.summary.phase("zero").unwrap().latency_seconds.mean;
    let e2e5 = r.summary.phase("full").unwrap().latency_seconds.mean;
    let e2e_diff = (e2e5 - e2e0).abs();
    ensure!(verify_diff < 5.0, "verification phase differs by {verify_diff:.3} ms");
    ensure!(e2e_diff < 0.050, "end-to-end mean differs by {:.2} ms", e2e_diff * 1e3);
    Ok(format!(
        "verify {:.3} ms vs {:.3} ms (diff {verify_diff:.3} ms), end-to-end {:.2} ms vs {:.2} ms (diff {:.2} ms), n={}/{}",
        mean(&v0),
        mean(&v5),
        e2e0 * 1e3,
        e2e5 * 1e3,
        e2e_diff * 1e3,
        v0.len(),
        v5.len()
    ))
}

// 7

fn size_report() -> Check {
    let r = run_size_report(100);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_size_report(&r, dir.path()).map_err(|e| e.to_string())?;
    let rows: Vec<SizeRow> = read_rows(&dir.path().join("rows.csv")).map_err(|e| e.to_string())?;
    ensure!(rows.len() == 303, "{} rows", rows.len());
    for row in &rows {
        let expect = token_wire_size(row.algorithm, row.attestations);
        ensure!(row.measured_bytes == expect && row.predicted_bytes == expect, "{row:?} != {expect}");
    }
    let mut parts = Vec::new();
    for (alg, slope, intercept) in [(SigAlgorithm::Rsa2048, 256.0, 256.0), (SigAlgorithm::EcP256, 64.0, 64.0), (SigAlgorithm::Ed25519, 64.0, 32.0)] {
        let fit = r.fit(alg).ok_or(format!("no fit for {alg}"))?;
        ensure!(fit.slope == slope && fit.intercept == intercept, "{alg}: slope {} intercept {}", fit.slope, fit.intercept);
        parts.push(format!("{alg} {slope}/{intercept}"));
    }
    Ok(format!("slope/intercept {}", parts.join(", ")))
}

// 8

async fn load_ramp() -> Check {
    let cfg = ExperimentConfig::ramp();
    let r = run_load_ramp(&cfg).await.map_err(|e| e.to_string())?;
    let s = &r.summary;
    let background: std::collections::BTreeSet<&str> =
        r.rows.iter().filter(|x| x.user != record::INSTRUMENTED_USER).map(|x| x.user.as_str()).collect();
    ensure!(background.len() == 200, "{} background users issued requests", background.len());
    ensure!(!s.truncated, "run truncated: {} failed", s.failed);
    ensure!(s.conserved(), "forwarded {} + denied {} != issued {}", s.forwarded, s.denied, s.issued);
    ensure!(!s.moving_average.is_empty(), "moving average empty ({} instrumented samples)", s.phase("ramp").map_or(0, |p| p.latency_seconds.count));
    ensure!(s.trend_non_decreasing, "trend phases not monotone: {:?}", s.trend_phases);
    let baseline = s.phase("baseline").ok_or("no baseline")?.latency_seconds.mean;
    let first = s.trend_phases.first().ok_or("no trend phases")?.mean;
    let ratio = first / baseline;
    ensure!((0.5..=2.0).contains(&ratio), "first phase {:.2} ms vs baseline {:.2} ms (x{ratio:.2})", first * 1e3, baseline * 1e3);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    r.write(dir.path()).map_err(|e| e.to_string())?;
    let rows: Vec<Row> = read_rows(&dir.path().join("rows.csv")).map_err(|e| e.to_string())?;
    let emitted: Summary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure!(Summary::from_rows(emitted.experiment, &rows, emitted.params.clone()) == emitted, "summary not recomputable from rows.csv");

    let phases: Vec<String> = s.trend_phases.iter().map(|p| format!("{:.2}", p.mean * 1e3)).collect();
    Ok(format!(
        "{} requests conserved, {} trend phases [{}] ms, first phase x{ratio:.2} of baseline {:.2} ms",
        s.issued,
        s.trend_phases.len(),
        phases.join(" <= "),
        baseline * 1e3
    ))
}

// 9

async fn score_table_durability() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let key_path = tmp.path().join("s1.key");
    let table_path = tmp.path().join("s1.scores");
    let (kp, tp) = (key_path.clone(), table_path.clone());
    let net = boot_network_with(3, SigAlgorithm::Rsa2048, move |i, cfg| {
        if i == 0 {
            cfg.key_path = Some(kp.clone());
            cfg.score_table_path = Some(tp.clone());
        }
    })
    .await
    .map_err(|e| e.to_string())?;
    let client = TrustClient::new();
    // user k visits k other servers before s1, so s1 records score k
    for k in [0usize, 1, 2, 2, 1, 0, 2] {
        let mut dir = net.directory.clone();
        let mut w = Wallet::in_memory(SigAlgorithm::Ed25519);
        for i in (1..=k).chain([0]) {
            client
                .send(&mut w, &mut dir, Method::POST, &net.login_url(i), Some(LOGIN.to_vec()), &SendOptions::honest())
                .await
                .map_err(|e| e.to_string())?;
        }
    }
    let before = render_snapshot(&net.nodes[0].gateway.gateway().score_table().snapshot());
    let pk_before = net.nodes[0].gateway.gateway().export_directory_entry();
    let upstream = net.nodes[0].origin.addr().to_string();
    net.teardown().await;

    let mut cfg = GatewayConfig::new(server_name(0), upstream, SigAlgorithm::Rsa2048);
    cfg.key_path = Some(key_path);
    cfg.score_table_path = Some(table_path);
    let restarted = Gateway::new(&cfg).map_err(|e| e.to_string())?;
    let after = render_snapshot(&restarted.score_table().snapshot());
    ensure!(before.lines().count() == 7, "expected 7 table rows, got {}", before.lines().count());
    ensure!(before == after, "snapshot changed across restart:\n{before}---\n{after}");
    ensure!(restarted.export_directory_entry() == pk_before, "server key changed across restart");
    drop(restarted);
    let again = Gateway::new(&cfg).map_err(|e| e.to_string())?;
    ensure!(render_snapshot(&again.score_table().snapshot()) == before, "second restart changed snapshot");
    Ok(format!("{} rows, {} bytes identical across two restarts", before.lines().count(), before.len()))
}

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    run: Box<dyn FnOnce() -> Check>,
}

fn main() -> ExitCode {
    let rt = runtime();
    let on = |f: fn() -> std::pin::Pin<Box<dyn std::future::Future<Output = Check>>>| {
        let handle = rt.handle().clone();
        Box::new(move || handle.block_on(f())) as Box<dyn FnOnce() -> Check>
    };
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = vec![
        Criterion { id: 1, name: "codec and signature properties", limit: secs(60), run: Box::new(codec_and_signature_properties) },
        Criterion { id: 2, name: "trust buildup and renewal", limit: secs(30), run: on(|| Box::pin(trust_buildup())) },
        Criterion { id: 3, name: "tamper experiment", limit: secs(120), run: on(|| Box::pin(tamper_experiment())) },
        Criterion { id: 4, name: "cold start", limit: None, run: on(|| Box::pin(cold_start())) },
        Criterion { id: 5, name: "revocation by rotation", limit: None, run: on(|| Box::pin(revocation())) },
        Criterion { id: 6, name: "flat verification cost", limit: None, run: on(|| Box::pin(flat_verification_cost())) },
        Criterion { id: 7, name: "token size report", limit: None, run: Box::new(size_report) },
        Criterion { id: 8, name: "load ramp", limit: secs(300), run: on(|| Box::pin(load_ramp())) },
        Criterion { id: 9, name: "score table durability", limit: None, run: on(|| Box::pin(score_table_durability())) },
    ];

    println!("acceptance: {} criteria", criteria.len());
    let mut failed = 0;
    for c in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = started.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {:.1}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs())),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{}] {} ({:.1}s): {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
