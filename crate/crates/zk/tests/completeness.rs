mod common;

use abstain_core::calibration::AuditConfig;
use abstain_zk::audit::{audit_in_process, ZkAuditConfig};
use abstain_zk::channel::{Direction, Disclosure, FrameKind};
use abstain_zk::fixed::reference_audit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn zk_verdict_equals_fixed_point_verdict_on_fifty_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut agree, mut passes) = (0, 0);
    for case in 0..50u64 {
        let hidden = rng.random_range(2..9);
        let n = rng.random_range(5..25);
        let (model, reference) = common::setup(case, hidden, n);
        let cfg = ZkAuditConfig::new(AuditConfig::new(rng.random_range(3..16), rng.random_range(0.02..0.6)).unwrap());
        let (want, _) = reference_audit(&model, &reference, &cfg.audit, &cfg.fp).unwrap();
        let run = audit_in_process(&model, &reference, &cfg, case, None);
        let got = run.verifier.expect("honest run").pass;
        assert_eq!(run.prover.expect("honest run").pass, got);
        agree += usize::from(got == want.pass);
        passes += usize::from(got);

        // Verifier view: keys stay local, and the only plaintext frame is the
        // verdict bit.
        let log = run.transcript.lock().unwrap();
        let reveals: Vec<_> = log.iter().filter(|e| e.kind.disclosure() == Disclosure::Plaintext).collect();
        assert_eq!(reveals.len(), 1);
        assert_eq!(reveals[0].kind, FrameKind::Reveal);
        let bit = u64::from_le_bytes(reveals[0].plaintext.as_ref().unwrap()[..8].try_into().unwrap());
        assert_eq!(bit, u64::from(got));
        for e in log.iter() {
            match e.direction {
                Direction::Received => assert!(matches!(
                    e.kind,
                    FrameKind::Hello | FrameKind::Masked | FrameKind::MacCheck | FrameKind::Reveal
                )),
                Direction::Sent => assert!(matches!(
                    e.kind,
                    FrameKind::DealerSeed | FrameKind::Challenge | FrameKind::Accept
                )),
            }
        }
    }
    println!("completeness: {agree}/50 verdicts agree ({passes} pass)");
    assert_eq!(agree, 50);
    assert!(passes > 0 && passes < 50, "suite should mix verdicts, got {passes} passes");
}
