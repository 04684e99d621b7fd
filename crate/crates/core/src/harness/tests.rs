use std::collections::BTreeSet;

use super::*;
use crate::biometric::Dims;
use crate::lsh::ProjectionSet;
use crate::passport::{VaccinationRecord, MAX_HSCAN_DELAY};

fn small_dataset(p_intra: f64) -> SynthParams {
    SynthParams {
        dims: Dims::new(20, 48).unwrap(),
        subjects: 8,
        samples_per_subject: 4,
        p_intra,
        seed: 3,
        ..SynthParams::default()
    }
}

fn small_eval(domain: Domain, thresholds: Vec<f64>) -> EvalConfig {
    EvalConfig {
        thresholds,
        domain,
        dataset: small_dataset(0.1),
        hash_bits: 128,
        seed: 9,
        ..EvalConfig::default()
    }
}

#[test]
fn pair_counts_match_closed_form_and_cap() {
    assert_eq!(pair_counts(50, 5), (500, 30625));
    let (g, i) = comparison_pairs(8, 4, 10, 1);
    assert_eq!(g.len(), pair_counts(8, 4).0);
    assert_eq!(i.len(), pair_counts(8, 4).1.min(10 * g.len()));
    assert!(g.iter().all(|(a, b)| a.0 == b.0 && a.1 < b.1));
    assert!(i.iter().all(|(a, b)| a.0 < b.0));
    assert_eq!(i.iter().collect::<BTreeSet<_>>().len(), i.len());
    let (_, capped) = comparison_pairs(8, 4, 1, 1);
    assert_eq!(capped.len(), g.len());
    assert_eq!(comparison_pairs(8, 4, 1, 1), comparison_pairs(8, 4, 1, 1));
}

#[test]
fn far_zero_at_zero_and_frr_zero_at_one() {
    for domain in [Domain::Raw, Domain::Hashed] {
        let rows = run_far_frr(&small_eval(domain, vec![0.0, 0.5, 1.0])).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].far, 0.0);
        assert_eq!(rows[2].frr, 0.0);
    }
}

#[test]
fn sweep_is_monotone_and_deterministic() {
    let thresholds: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    for domain in [Domain::Raw, Domain::Hashed] {
        let cfg = small_eval(domain, thresholds.clone());
        let rows = run_far_frr(&cfg).unwrap();
        for w in rows.windows(2) {
            assert!(w[0].far <= w[1].far && w[0].frr >= w[1].frr, "{w:?}");
        }
        for r in &rows {
            assert!((0.0..=100.0).contains(&r.far) && (0.0..=100.0).contains(&r.frr));
            assert!(r.genuine_comparisons > 0 && r.impostor_comparisons > 0);
        }
        assert_eq!(rows, run_far_frr(&cfg).unwrap());
    }
}

#[test]
fn noiseless_dataset_has_no_false_rejects() {
    // Per-sample masks differ under Type1, so zero distance needs shared masks.
    let mut shared = small_eval(Domain::Raw, vec![0.01, 0.3, 0.6]);
    shared.dataset.p_intra = 0.0;
    shared.masking_mode = MaskingMode::Type2;
    let mut unmasked = shared.clone();
    unmasked.masking_mode = MaskingMode::Type1;
    unmasked.dataset.mask_density = 0.0;
    for cfg in [shared, unmasked] {
        for domain in [Domain::Raw, Domain::Hashed] {
            let rows = run_far_frr(&EvalConfig { domain, ..cfg.clone() }).unwrap();
            assert!(rows.iter().all(|r| r.frr == 0.0), "{rows:?}");
        }
    }
}

#[test]
fn trials_pool_comparisons() {
    let mut cfg = small_eval(Domain::Hashed, vec![0.3]);
    cfg.trials = 3;
    let rows = run_far_frr(&cfg).unwrap();
    assert_eq!(rows[0].genuine_comparisons, 3 * pair_counts(8, 4).0);
}

#[test]
fn config_validation() {
    let ok = small_eval(Domain::Hashed, vec![0.2, 0.3]);
    assert!(ok.validate().is_ok());
    for bad in [vec![], vec![0.3, 0.2], vec![0.3, 0.3], vec![1.5], vec![-0.1]] {
        assert!(small_eval(Domain::Hashed, bad).validate().is_err());
    }
    let mut one_sample = ok.clone();
    one_sample.dataset.samples_per_subject = 1;
    assert!(matches!(run_far_frr(&one_sample), Err(HarnessError::Validation(_))));
    let mut zero_trials = ok;
    zero_trials.trials = 0;
    assert!(zero_trials.validate().is_err());
}

#[test]
fn raw_baseline_juxtaposes_domains() {
    let cmp = run_raw_baseline(&small_eval(Domain::Hashed, (1..10).map(|i| i as f64 / 10.0).collect())).unwrap();
    assert_eq!(cmp.raw.len(), 9);
    assert_eq!(cmp.hashed.len(), 9);
    assert!(cmp.raw_crossover.is_some());
    assert!(cmp.hashed_crossover.is_some());
}

fn row(t: f64, far: f64, frr: f64) -> FarFrrRow {
    FarFrrRow {
        threshold: t,
        far,
        frr,
        genuine_comparisons: 10,
        impostor_comparisons: 100,
    }
}

#[test]
fn crossover_interpolates() {
    let rows = [row(0.2, 0.0, 40.0), row(0.3, 20.0, 20.0), row(0.4, 60.0, 0.0)];
    assert_eq!(crossover(&rows), Some(0.3));
    let rows = [row(0.2, 0.0, 10.0), row(0.4, 10.0, 0.0)];
    assert!((crossover(&rows).unwrap() - 0.3).abs() < 1e-12);
    assert_eq!(crossover(&[row(0.2, 0.0, 10.0)]), None);
    assert_eq!(crossover(&[]), None);
}

#[test]
fn report_formats() {
    let mut out = Vec::new();
    write_report(&[], &mut out, ReportFormat::Csv).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "threshold,far,frr,genuineComparisons,impostorComparisons\n"
    );
    let rows = vec![row(0.25, 3.99, 64.26), row(0.35, 67.05, 8.53)];
    for format in [ReportFormat::Csv, ReportFormat::Jsonl] {
        let mut out = Vec::new();
        write_report(&rows, &mut out, format).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(read_report(out.as_slice(), format).unwrap(), rows);
        if format == ReportFormat::Jsonl {
            assert_eq!(text.lines().count(), 2);
            let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
            assert_eq!(v["genuineComparisons"], 10);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    export_report(&rows, &path, ReportFormat::Csv).unwrap();
    assert_eq!(read_report(std::fs::File::open(&path).unwrap(), ReportFormat::Csv).unwrap(), rows);
}

#[test]
fn percentages_round_to_three_places() {
    let rows = rows_from_distances(&[0.5], &[0.1, 0.2, 0.9], &[0.4, 0.6, 0.7]);
    assert_eq!(rows[0].far, 33.333);
    assert_eq!(rows[0].frr, 33.333);
}

#[test]
fn degenerate_projections_are_flagged() {
    let dataset = small_dataset(0.1);
    let r = ProjectionSet::zero(dataset.dims.len(), 16).unwrap();
    let cfg = SecurityConfig {
        trials: 1000,
        census_n: 8,
        census_m: 3,
        census_trials: 10,
        dataset,
        seed: 1,
        ..SecurityConfig::default()
    };
    let report = run_security_suite(&r, &cfg).unwrap();
    assert!(report.degenerate);
    assert_eq!(report.bit_balance.max_advantage, 0.0);
    assert!(!report.passed());
    assert_eq!(report.security.m + report.security.lambda, 16 + 128);
}

#[test]
fn security_suite_on_random_projections() {
    let dataset = small_dataset(0.1);
    let r = sample_projections(dataset.dims.len(), 64, 4).unwrap();
    let cfg = SecurityConfig {
        trials: 2000,
        lambda: 32,
        dataset,
        seed: 2,
        ..SecurityConfig::default()
    };
    let report = run_security_suite(&r, &cfg).unwrap();
    assert!(!report.degenerate);
    assert_eq!(report.checks.len(), 3);
    assert_eq!(report.census.counts.len(), 50);
    assert!(report.entropy_upper_bound > 96.0);
    let mismatched = SecurityConfig {
        dataset: SynthParams::default(),
        ..cfg
    };
    assert!(run_security_suite(&r, &mismatched).is_err());
}

#[test]
fn round_trip_small() {
    let report = run_round_trip(&RoundTripConfig {
        runs: 4,
        users_per_run: 3,
        seed: 5,
        ..RoundTripConfig::default()
    })
    .unwrap();
    assert_eq!(report.users, 12);
    assert_eq!(report.exact_successes, 12);
    assert_eq!(report.separated, 12);
    assert!(report.min_gap >= 1 && report.max_gap <= MAX_HSCAN_DELAY);
    assert_eq!(report.wrong_ids, 0);
}

fn user(node: usize, subject: usize, sample: usize, record: Option<VaccinationRecord>) -> UserArgs {
    UserArgs {
        node,
        subject,
        sample,
        dob: format!("{:02}/03/1970", subject + 1),
        gender: "female".into(),
        record,
    }
}

fn dose(n: u32) -> Option<VaccinationRecord> {
    Some(VaccinationRecord::new("comirnaty", n, "2021-06-01", "clinic"))
}

#[test]
fn scenario_enroll_wait_authenticate() {
    let steps = vec![
        Step::Enroll(user(0, 0, 0, dose(1))),
        Step::Tick(TickArgs { count: MAX_HSCAN_DELAY + 1 }),
        Step::Auth(user(0, 0, 0, None)),
        Step::Auth(user(0, 1, 0, None)),
    ];
    let t = run_scenario(&ScenarioConfig::default(), &steps).unwrap();
    assert_eq!(t.entries[0].result, "enrolled U1");
    assert_eq!(t.entries[2].result, "authenticated U1");
    assert_eq!(t.entries[3].result, "none");
    assert_eq!(t.entries[1].height, MAX_HSCAN_DELAY + 2);
    assert_eq!(t.final_digests[0], t.final_digests[1]);
}

#[test]
fn scenario_cross_node_records_and_replay() {
    let steps = vec![
        Step::AddRecord(user(0, 2, 0, dose(1))),
        Step::Tick(TickArgs { count: MAX_HSCAN_DELAY + 1 }),
        Step::AddRecord(user(0, 2, 1, dose(2))),
        Step::Tick(TickArgs { count: 1 }),
        Step::Sync(NodeArgs { node: 1 }),
        Step::Fetch(user(1, 2, 2, None)),
        Step::Enroll(user(1, 2, 0, dose(1))),
    ];
    let cfg = ScenarioConfig::default();
    let t = run_scenario(&cfg, &steps).unwrap();
    assert_eq!(t.entries[0].result, "enrolled U1");
    assert_eq!(t.entries[2].result, "appended U1");
    assert_eq!(t.entries[5].records.as_ref().unwrap().len(), 2);
    assert!(t.entries[6].result.starts_with("error: user"), "{}", t.entries[6].result);
    let again = run_scenario(&cfg, &steps).unwrap();
    assert_eq!(t.to_jsonl(), again.to_jsonl());
    assert!(!t.to_jsonl().contains("1970"));
}

#[test]
fn scenario_script_parsing_and_errors() {
    let text = r#"[
        {"op": "enroll", "args": {"node": 0, "subject": 1, "dob": "01/01/1990", "gender": "male",
          "record": {"vaccine": "v", "dose": 1, "date": "2021-01-01", "issuer": "i"}}},
        {"op": "tick", "args": {"count": 3}},
        {"op": "tick", "args": {}},
        {"op": "sync", "args": {"node": 1}}
    ]"#;
    let steps = parse_script(text).unwrap();
    assert_eq!(steps.len(), 4);
    assert_eq!(steps[2], Step::Tick(TickArgs { count: 1 }));
    assert!(parse_script(r#"[{"op": "dance", "args": {}}]"#).is_err());
    let bad_node = vec![Step::Sync(NodeArgs { node: 5 })];
    assert!(matches!(
        run_scenario(&ScenarioConfig::default(), &bad_node),
        Err(HarnessError::Validation(_))
    ));
    let no_record = vec![Step::Enroll(user(0, 0, 0, None))];
    assert!(run_scenario(&ScenarioConfig::default(), &no_record).is_err());
    let bad_dob = vec![Step::Auth(UserArgs {
        dob: "1990-01-01".into(),
        ..user(0, 0, 0, None)
    })];
    let t = run_scenario(&ScenarioConfig::default(), &bad_dob).unwrap();
    assert!(t.entries[0].result.starts_with("error: invalid input"));
}
