//! Information-theoretic MACs over F_p with tags and keys in F_{p^2}.
//!
//! An authenticated value ⟦x⟧ is split between two parties: the prover
//! holds `x` and the tag `M_x`, the verifier holds the key `K_x` and the
//! global key `Δ`, with `M_x = K_x + Δ·x`. Linear maps act on both halves
//! locally; products consume Beaver triples handed out by a trusted dealer.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::field::{Fp, Fp2};
use crate::{Result, ZkError};

/// One party's half of ⟦x⟧. For the prover `val = x` and `mac = M_x`; for
/// the verifier `val` is unused (zero) and `mac = K_x`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Auth {
    pub(crate) val: Fp,
    pub(crate) mac: Fp2,
}

impl Auth {
    pub fn new(val: Fp, mac: Fp2) -> Self {
        Auth { val, mac }
    }

    pub fn val(&self) -> Fp {
        self.val
    }

    pub fn mac(&self) -> Fp2 {
        self.mac
    }

    #[inline]
    pub fn add(&self, o: &Auth) -> Auth {
        Auth { val: self.val + o.val, mac: self.mac + o.mac }
    }

    #[inline]
    pub fn sub(&self, o: &Auth) -> Auth {
        Auth { val: self.val - o.val, mac: self.mac - o.mac }
    }

    #[inline]
    pub fn scale(&self, k: Fp) -> Auth {
        Auth { val: self.val * k, mac: self.mac.scale(k) }
    }

    pub fn neg(&self) -> Auth {
        Auth { val: -self.val, mac: -self.mac }
    }
}

/// `Σ c_i ⟦x_i⟧` without the constant term (role independent).
pub fn linear(coeffs: &[Fp], values: &[Auth]) -> Result<Auth> {
    if coeffs.len() != values.len() {
        return Err(ZkError::input(format!(
            "{} coefficients for {} values",
            coeffs.len(),
            values.len()
        )));
    }
    let mut acc = Auth::default();
    for (c, v) in coeffs.iter().zip(values) {
        acc = acc.add(&v.scale(*c));
    }
    Ok(acc)
}

/// Beaver recombination `⟦z⟧ = ⟦c⟧ + e⟦a⟧ + d⟦b⟧ + de` given the public
/// openings `d = x - a`, `e = y - b`. The constant `de` is added by the caller.
#[inline]
pub(crate) fn beaver_linear(a: &Auth, b: &Auth, c: &Auth, d: Fp, e: Fp) -> Auth {
    Auth {
        val: c.val + e * a.val + d * b.val,
        mac: c.mac + a.mac.scale(e) + b.mac.scale(d),
    }
}

/// Random-linear-combination `Σ χ^i t_i` by Horner's rule.
pub fn fold_challenge(chi: Fp2, items: impl DoubleEndedIterator<Item = Fp2>) -> Fp2 {
    items.rev().fold(Fp2::ZERO, |acc, t| acc * chi + t)
}

/// Whether `M = K + Δ·x`.
pub fn relation_holds(delta: Fp2, x: Fp, mac: Fp2, key: Fp2) -> bool {
    mac == key + delta.scale(x)
}

/// The prover's pseudorandom correlated material: random authenticated
/// values `(r, M_r)` and triples `((a, M_a), (b, M_b), (ab, M_ab))`.
#[derive(Clone, Debug)]
pub struct ProverStream {
    rng: ChaCha12Rng,
}

impl ProverStream {
    pub fn new(seed: u64) -> Self {
        ProverStream { rng: ChaCha12Rng::seed_from_u64(seed) }
    }

    pub fn next_random(&mut self) -> Auth {
        let val = Fp::random(&mut self.rng);
        let mac = Fp2::random(&mut self.rng);
        Auth { val, mac }
    }

    pub fn next_triple(&mut self) -> [Auth; 3] {
        let a = Fp::random(&mut self.rng);
        let b = Fp::random(&mut self.rng);
        let ma = Fp2::random(&mut self.rng);
        let mb = Fp2::random(&mut self.rng);
        let mc = Fp2::random(&mut self.rng);
        [Auth::new(a, ma), Auth::new(b, mb), Auth::new(a * b, mc)]
    }
}

/// Simulated trusted dealer. It samples `Δ` once per session, hands the
/// prover a stream seed and derives the verifier's matching keys
/// `K = M - Δ·x` on demand. It never sends `Δ` anywhere.
#[derive(Clone, Debug)]
pub struct Dealer {
    delta: Fp2,
    prover_seed: u64,
    mirror: ProverStream,
    triples_left: Option<usize>,
}

impl Dealer {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let delta = loop {
            let d = Fp2::random(&mut rng);
            if !d.is_zero() {
                break d;
            }
        };
        let prover_seed = rand::RngCore::next_u64(&mut rng);
        Dealer { delta, prover_seed, mirror: ProverStream::new(prover_seed), triples_left: None }
    }

    /// Caps the number of Beaver triples this dealer will issue.
    pub fn with_triple_budget(mut self, n: usize) -> Self {
        self.triples_left = Some(n);
        self
    }

    /// Seed for the prover's [`ProverStream`]; delivered to the prover only.
    pub fn prover_seed(&self) -> u64 {
        self.prover_seed
    }

    /// The verifier's global key.
    pub fn delta(&self) -> Fp2 {
        self.delta
    }

    pub fn next_random_key(&mut self) -> Auth {
        let r = self.mirror.next_random();
        Auth { val: Fp::ZERO, mac: r.mac - self.delta.scale(r.val) }
    }

    pub fn next_triple_keys(&mut self) -> Result<[Auth; 3]> {
        if let Some(n) = self.triples_left.as_mut() {
            if *n == 0 {
                return Err(ZkError::Session("dealer exhausted: no Beaver triples left".into()));
            }
            *n -= 1;
        }
        let t = self.mirror.next_triple();
        Ok(t.map(|s| Auth { val: Fp::ZERO, mac: s.mac - self.delta.scale(s.val) }))
    }
}

/// Both halves of one authenticated value, as held by a [`LocalSession`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuthPair {
    pub prover: Auth,
    pub verifier: Auth,
}

/// Single-process IT-MAC session holding both roles' state side by side.
///
/// Used to exercise the MAC algebra directly; the networked protocol keeps
/// the two halves in separate processes.
#[derive(Debug)]
pub struct LocalSession {
    delta: Fp2,
    dealer: Dealer,
    stream: ProverStream,
    rng: ChaCha12Rng,
    // (opened value, prover tag, verifier key)
    pending: Vec<(Fp, Fp2, Fp2)>,
}

impl LocalSession {
    pub fn new(seed: u64) -> Self {
        let dealer = Dealer::new(seed);
        LocalSession {
            delta: dealer.delta(),
            stream: ProverStream::new(dealer.prover_seed()),
            dealer,
            rng: ChaCha12Rng::seed_from_u64(seed ^ 0x5eed),
            pending: Vec::new(),
        }
    }

    pub fn with_triple_budget(mut self, n: usize) -> Self {
        self.dealer = self.dealer.with_triple_budget(n);
        self
    }

    /// Session with a chosen global key (for worked examples).
    pub fn with_delta(mut self, delta: Fp2) -> Self {
        self.delta = delta;
        self
    }

    pub fn delta(&self) -> Fp2 {
        self.delta
    }

    /// `⟦x⟧` with a fresh uniform key.
    pub fn authenticate(&mut self, x: Fp) -> AuthPair {
        let key = Fp2::random(&mut self.rng);
        self.authenticate_with_key(x, key)
    }

    pub fn authenticate_with_key(&self, x: Fp, key: Fp2) -> AuthPair {
        AuthPair {
            prover: Auth { val: x, mac: key + self.delta.scale(x) },
            verifier: Auth { val: Fp::ZERO, mac: key },
        }
    }

    /// `⟦Σ c_i x_i + k⟧`; no communication.
    pub fn lin_combine(&self, coeffs: &[Fp], values: &[AuthPair], constant: Fp) -> Result<AuthPair> {
        if values.is_empty() {
            return Err(ZkError::input("lin_combine needs at least one value"));
        }
        let p: Vec<Auth> = values.iter().map(|v| v.prover).collect();
        let v: Vec<Auth> = values.iter().map(|v| v.verifier).collect();
        let mut prover = linear(coeffs, &p)?;
        let mut verifier = linear(coeffs, &v)?;
        prover.val += constant;
        verifier.mac -= self.delta.scale(constant);
        Ok(AuthPair { prover, verifier })
    }

    fn triple(&mut self) -> Result<[AuthPair; 3]> {
        let keys = self.dealer.next_triple_keys()?;
        let mut vals = self.stream.next_triple();
        if self.delta != self.dealer.delta() {
            // Re-key the triple under this session's own Δ.
            for (v, k) in vals.iter_mut().zip(&keys) {
                v.mac = k.mac + self.delta.scale(v.val);
            }
        }
        Ok([0, 1, 2].map(|i| AuthPair { prover: vals[i], verifier: keys[i] }))
    }

    /// `⟦xy⟧` via one Beaver triple; both openings are queued for
    /// [`LocalSession::batch_check`].
    pub fn multiply(&mut self, x: &AuthPair, y: &AuthPair) -> Result<AuthPair> {
        let [a, b, c] = self.triple()?;
        let dx = AuthPair { prover: x.prover.sub(&a.prover), verifier: x.verifier.sub(&a.verifier) };
        let ey = AuthPair { prover: y.prover.sub(&b.prover), verifier: y.verifier.sub(&b.verifier) };
        let d = self.open_deferred(&dx);
        let e = self.open_deferred(&ey);
        let mut prover = beaver_linear(&a.prover, &b.prover, &c.prover, d, e);
        let mut verifier = beaver_linear(&a.verifier, &b.verifier, &c.verifier, d, e);
        prover.val += d * e;
        verifier.mac -= self.delta.scale(d * e);
        Ok(AuthPair { prover, verifier })
    }

    /// Opens `x` now and defers its MAC check.
    pub fn open_deferred(&mut self, x: &AuthPair) -> Fp {
        self.pending.push((x.prover.val, x.prover.mac, x.verifier.mac));
        x.prover.val
    }

    /// Queues an opening whose claimed value or tag may differ from the truth.
    pub fn open_claimed(&mut self, claimed: Fp, claimed_mac: Fp2, key: &Auth) {
        self.pending.push((claimed, claimed_mac, key.mac));
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Immediate opening: the verifier accepts iff `M = K + Δ·x`.
    pub fn reveal(&self, x: &AuthPair) -> Result<Fp> {
        self.reveal_claimed(x.prover.val, x.prover.mac, &x.verifier)
    }

    pub fn reveal_claimed(&self, x: Fp, mac: Fp2, key: &Auth) -> Result<Fp> {
        if relation_holds(self.delta, x, mac, key.mac) {
            Ok(x)
        } else {
            Err(ZkError::abort("MAC check failed on reveal"))
        }
    }

    /// One random-linear-combination check over every queued opening.
    pub fn batch_check(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let chi = Fp2::random(&mut self.rng);
        let tags = fold_challenge(chi, self.pending.iter().map(|p| p.1));
        let keys = fold_challenge(chi, self.pending.iter().map(|p| p.2));
        let vals = fold_challenge(chi, self.pending.iter().map(|p| Fp2::from_base(p.0)));
        self.pending.clear();
        if tags == keys + self.delta * vals {
            Ok(())
        } else {
            Err(ZkError::abort("batched MAC check failed"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn f(v: i64) -> Fp {
        Fp::from_i64(v)
    }

    fn holds(s: &LocalSession, x: &AuthPair) -> bool {
        relation_holds(s.delta(), x.prover.val, x.prover.mac, x.verifier.mac)
    }

    #[test]
    fn worked_example() {
        let s = LocalSession::new(1).with_delta(Fp2::from_base(f(3)));
        let x = s.authenticate_with_key(f(2), Fp2::from_base(f(5)));
        assert_eq!(x.prover.mac, Fp2::from_base(f(11)));
        assert_eq!(s.reveal(&x).unwrap(), f(2));
        // Substituting x' = 4 under the same tag: 11 != 5 + 3*4.
        assert!(s.reveal_claimed(f(4), x.prover.mac, &x.verifier).unwrap_err().is_abort());
    }

    #[test]
    fn zero_has_tag_equal_to_key() {
        let mut s = LocalSession::new(2);
        let z = s.authenticate(Fp::ZERO);
        assert_eq!(z.prover.mac, z.verifier.mac);
    }

    #[test]
    fn fuzzed_relation() {
        let mut s = LocalSession::new(3);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let x = s.authenticate(Fp::random(&mut rng));
            assert!(holds(&s, &x));
        }
    }

    #[test]
    fn lin_combine_examples() {
        let mut s = LocalSession::new(5);
        let x = s.authenticate(f(2));
        let z = s.authenticate(f(3));
        let id = s.lin_combine(&[Fp::ONE], &[x], Fp::ZERO).unwrap();
        assert_eq!(s.reveal(&id).unwrap(), f(2));
        let y = s.lin_combine(&[f(2), Fp::ONE], &[x, z], f(7)).unwrap();
        assert_eq!(s.reveal(&y).unwrap(), f(14));
        let k = s.lin_combine(&[Fp::ZERO], &[x], f(5)).unwrap();
        assert_eq!(s.reveal(&k).unwrap(), f(5));
        assert!(s.lin_combine(&[Fp::ONE], &[x, z], Fp::ZERO).is_err());
    }

    #[test]
    fn multiply_examples() {
        let mut s = LocalSession::new(6);
        let x = s.authenticate(f(2));
        let y = s.authenticate(f(3));
        let z = s.multiply(&x, &y).unwrap();
        assert_eq!(s.reveal(&z).unwrap(), f(6));
        let zero = s.authenticate(Fp::ZERO);
        let xz = s.multiply(&x, &zero).unwrap();
        assert_eq!(s.reveal(&xz).unwrap(), Fp::ZERO);
        s.batch_check().unwrap();

        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let (a, b) = (Fp::random(&mut rng), Fp::random(&mut rng));
            let (pa, pb) = (s.authenticate(a), s.authenticate(b));
            let ab = s.multiply(&pa, &pb).unwrap();
            assert_eq!(s.reveal(&ab).unwrap(), a * b);
        }
        s.batch_check().unwrap();
    }

    #[test]
    fn exhausted_dealer_is_a_session_error() {
        let mut s = LocalSession::new(8).with_triple_budget(1);
        let x = s.authenticate(f(2));
        s.multiply(&x, &x).unwrap();
        assert!(matches!(s.multiply(&x, &x), Err(ZkError::Session(_))));
    }

    #[test]
    fn forged_tags_abort() {
        let mut s = LocalSession::new(9);
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let x = s.authenticate(Fp::random(&mut rng));
            let forged = x.prover.val + Fp::new(rng.random_range(1..1000));
            let mac = Fp2::random(&mut rng);
            assert!(s.reveal_claimed(forged, mac, &x.verifier).unwrap_err().is_abort());
        }
    }

    #[test]
    fn batch_check_cases() {
        let mut s = LocalSession::new(11);
        s.batch_check().unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..100 {
            let x = s.authenticate(Fp::random(&mut rng));
            s.open_deferred(&x);
        }
        s.batch_check().unwrap();
        assert_eq!(s.pending(), 0);
        for seed in 0..1000u64 {
            let mut s = LocalSession::new(seed);
            let bad = (seed % 100) as usize;
            for i in 0..100 {
                let x = s.authenticate(Fp::new(i as u64 * 7 + seed));
                if i == bad {
                    s.open_claimed(x.prover.val + Fp::ONE, x.prover.mac, &x.verifier);
                } else {
                    s.open_deferred(&x);
                }
            }
            assert!(s.batch_check().unwrap_err().is_abort(), "seed {seed}");
        }
    }

    #[test]
    fn random_op_sequences_keep_the_relation() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for seq in 0..10_000u64 {
            let mut s = LocalSession::new(seq);
            let mut pool: Vec<(AuthPair, Fp)> = (0..3)
                .map(|_| {
                    let v = Fp::random(&mut rng);
                    (s.authenticate(v), v)
                })
                .collect();
            for _ in 0..4 {
                let i = rng.random_range(0..pool.len());
                let j = rng.random_range(0..pool.len());
                let next = if rng.random_bool(0.5) {
                    let (c1, c2, k) = (Fp::random(&mut rng), Fp::random(&mut rng), Fp::random(&mut rng));
                    let v = c1 * pool[i].1 + c2 * pool[j].1 + k;
                    (s.lin_combine(&[c1, c2], &[pool[i].0, pool[j].0], k).unwrap(), v)
                } else {
                    let v = pool[i].1 * pool[j].1;
                    (s.multiply(&pool[i].0, &pool[j].0).unwrap(), v)
                };
                assert!(holds(&s, &next.0));
                assert_eq!(next.0.prover.val, next.1);
                pool.push(next);
            }
            s.batch_check().unwrap();
        }
    }

    proptest! {
        #[test]
        fn linear_map_is_homomorphic(a in any::<u64>(), b in any::<u64>(), c in any::<u64>(), k in any::<u64>()) {
            let mut s = LocalSession::new(a ^ b);
            let x = s.authenticate(Fp::new(a));
            let y = s.authenticate(Fp::new(b));
            let z = s.lin_combine(&[Fp::new(c), Fp::ONE], &[x, y], Fp::new(k)).unwrap();
            prop_assert!(holds(&s, &z));
            prop_assert_eq!(z.prover.val, Fp::new(c) * Fp::new(a) + Fp::new(b) + Fp::new(k));
        }
    }
}
