mod common;

use abstain_core::calibration::AuditConfig;
use abstain_zk::audit::{audit_in_process, ZkAuditConfig};
use abstain_zk::protocol::{Tamper, TamperStrategy};

const SEEDS: u64 = 250;
const POINTS: usize = 6;

#[test]
fn every_tampered_run_aborts() {
    // α = 1 passes every honest run, so only an abort counts as detection.
    let cfg = ZkAuditConfig::new(AuditConfig::new(15, 1.0).unwrap());
    let (model, reference) = common::setup(0, 4, POINTS);
    let honest = audit_in_process(&model, &reference, &cfg, 0, None);
    assert!(honest.verifier.unwrap().pass);

    let mut aborted = 0;
    for strategy in TamperStrategy::ALL {
        for seed in 0..SEEDS {
            let (model, reference) = common::setup(seed, 4, POINTS);
            let tamper = Tamper { strategy, point: seed as usize % POINTS, delta: 1 + (seed as i64 % 97) };
            let run = audit_in_process(&model, &reference, &cfg, seed, Some(tamper));
            match run.verifier {
                Err(e) if e.is_abort() => aborted += 1,
                other => panic!("{strategy:?} seed {seed}: {other:?}"),
            }
        }
    }
    println!("soundness: {aborted}/{} tampered runs aborted", 4 * SEEDS);
    assert_eq!(aborted, 4 * SEEDS as usize);
}
