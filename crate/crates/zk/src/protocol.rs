//! Prover and verifier state machines over a [`Channel`].
//!
//! Circuits are written once against [`Party`]. The prover streams masked
//! values one way; round trips happen only at [`Party::check`] and at the
//! final reveal. The dealer lives next to the verifier and only ever hands
//! the verifier keys.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::channel::{Channel, Frame, FrameKind, Traffic};
use crate::field::{Fp, Fp2};
use crate::itmac::{beaver_linear, fold_challenge, relation_holds, Auth, Dealer, ProverStream};
use crate::{Result, ZkError};

/// Elements per outgoing masked frame.
const FRAME_ELEMS: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Prover,
    Verifier,
}

/// What a committed vector encodes; tamper hooks key on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HintKind {
    Weights,
    Inputs,
    RescaleBits,
    CompareBits,
    RangeBits,
    Inverse,
    ExpIndexBits,
    ExpOneHot,
    ConfidenceBits,
    BinRemainderBits,
    BinOneHot,
    SignBits,
    Generic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TamperStrategy {
    /// Commit a wrong top-class confidence.
    LieConfidence,
    /// Rotate the bin selector to a neighbouring slot.
    WrongBin,
    /// Drop the point from every bin.
    SkipPoint,
    /// Replace a committed weight after the commitment, keeping its tag.
    SwapWeights,
}

impl TamperStrategy {
    pub const ALL: [TamperStrategy; 4] =
        [TamperStrategy::LieConfidence, TamperStrategy::WrongBin, TamperStrategy::SkipPoint, TamperStrategy::SwapWeights];
}

/// A cheating prover's plan: deviate once, at reference point `point`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tamper {
    pub strategy: TamperStrategy,
    pub point: usize,
    /// Nonzero perturbation applied by value-changing strategies.
    pub delta: i64,
}

/// One role's view of the authenticated-value machine.
pub trait Party {
    fn role(&self) -> Role;

    fn is_prover(&self) -> bool {
        self.role() == Role::Prover
    }

    /// Authenticated public constant.
    fn constant(&self, c: Fp) -> Auth;

    fn add_const(&self, x: &Auth, c: Fp) -> Auth;

    /// Commits `n` prover-chosen values. `vals` runs on the prover only.
    fn commit(&mut self, kind: HintKind, n: usize, vals: &mut dyn FnMut() -> Vec<Fp>) -> Result<Vec<Auth>>;

    /// Element-wise products via Beaver triples.
    fn mul(&mut self, xs: &[Auth], ys: &[Auth]) -> Result<Vec<Auth>>;

    /// Queues a proof that every `x` is zero.
    fn assert_zero(&mut self, xs: &[Auth]);

    /// Verifies every queued opening and zero claim.
    fn check(&mut self) -> Result<()>;

    /// Checks and then opens `x` to the verifier.
    fn reveal(&mut self, x: &Auth) -> Result<Fp>;

    /// Marks the start of reference point `i`.
    fn begin_point(&mut self, _i: usize) {}

    /// Hook through which a cheating prover mutates authenticated state.
    fn corrupt(&mut self, _kind: HintKind, _vals: &mut [Auth]) {}

    fn multiplications(&self) -> u64;

    fn traffic(&self) -> Traffic;
}

pub(crate) fn constant_auth(role: Role, delta: Fp2, c: Fp) -> Auth {
    match role {
        Role::Prover => Auth::new(c, Fp2::ZERO),
        Role::Verifier => Auth::new(Fp::ZERO, -delta.scale(c)),
    }
}

fn expect_frame(f: Frame, kind: FrameKind) -> Result<Frame> {
    if f.kind == kind {
        Ok(f)
    } else if f.kind == FrameKind::Abort {
        Err(ZkError::abort("peer aborted the session"))
    } else {
        Err(ZkError::Protocol(format!("expected {kind:?}, got {:?}", f.kind)))
    }
}

pub struct Prover<C: Channel> {
    chan: C,
    stream: ProverStream,
    out: Vec<Fp>,
    // Tags of everything the verifier will check.
    pending: Vec<Fp2>,
    tamper: Option<Tamper>,
    point: usize,
    mults: u64,
}

impl<C: Channel> Prover<C> {
    /// Waits for the dealer's seed.
    pub fn new(mut chan: C) -> Result<Self> {
        let f = expect_frame(chan.recv()?, FrameKind::DealerSeed)?;
        let w = f.words()?;
        if w.len() != 1 {
            return Err(ZkError::Protocol("malformed dealer seed".into()));
        }
        Ok(Prover {
            chan,
            stream: ProverStream::new(w[0]),
            out: Vec::new(),
            pending: Vec::new(),
            tamper: None,
            point: 0,
            mults: 0,
        })
    }

    pub fn with_tamper(mut self, t: Option<Tamper>) -> Self {
        self.tamper = t;
        self
    }

    pub fn channel_mut(&mut self) -> &mut C {
        &mut self.chan
    }

    pub fn into_channel(self) -> C {
        self.chan
    }

    fn push_out(&mut self, v: Fp) -> Result<()> {
        self.out.push(v);
        if self.out.len() >= FRAME_ELEMS {
            self.flush_out()?;
        }
        Ok(())
    }

    fn flush_out(&mut self) -> Result<()> {
        if !self.out.is_empty() {
            self.chan.send(&Frame::from_elems(FrameKind::Masked, &self.out))?;
            self.out.clear();
        }
        Ok(())
    }

    fn active_tamper(&self, strategy: TamperStrategy) -> Option<Tamper> {
        self.tamper.filter(|t| t.strategy == strategy && t.point == self.point)
    }

    fn tamper_hint(&mut self, kind: HintKind, vals: &mut [Fp]) {
        if kind == HintKind::ConfidenceBits {
            if let Some(t) = self.active_tamper(TamperStrategy::LieConfidence) {
                let v: i64 = vals.iter().enumerate().map(|(i, b)| (b.value() as i64) << i).sum();
                let w = (v + t.delta).rem_euclid(1 << vals.len());
                for (i, b) in vals.iter_mut().enumerate() {
                    *b = Fp::new(((w >> i) & 1) as u64);
                }
                self.tamper = None;
            }
        }
        if kind == HintKind::BinOneHot {
            if self.active_tamper(TamperStrategy::WrongBin).is_some() {
                vals.rotate_right(1);
                self.tamper = None;
            } else if self.active_tamper(TamperStrategy::SkipPoint).is_some() {
                vals.fill(Fp::ZERO);
                self.tamper = None;
            }
        }
    }

    fn end_check(&mut self) -> Result<()> {
        self.flush_out()?;
        let f = expect_frame(self.chan.recv()?, FrameKind::Challenge)?;
        let chi = match f.ext_elems()?.as_slice() {
            [c] => *c,
            _ => return Err(ZkError::Protocol("malformed challenge".into())),
        };
        let sigma = fold_challenge(chi, self.pending.drain(..));
        self.chan.send(&Frame::from_ext(FrameKind::MacCheck, &[sigma]))?;
        Ok(())
    }
}

impl<C: Channel> Party for Prover<C> {
    fn role(&self) -> Role {
        Role::Prover
    }

    fn constant(&self, c: Fp) -> Auth {
        Auth::new(c, Fp2::ZERO)
    }

    fn add_const(&self, x: &Auth, c: Fp) -> Auth {
        Auth::new(x.val() + c, x.mac())
    }

    fn commit(&mut self, kind: HintKind, n: usize, vals: &mut dyn FnMut() -> Vec<Fp>) -> Result<Vec<Auth>> {
        let mut v = vals();
        if v.len() != n {
            return Err(ZkError::input(format!("{kind:?}: {} hint values, expected {n}", v.len())));
        }
        self.tamper_hint(kind, &mut v);
        let mut out = Vec::with_capacity(n);
        for x in v {
            let r = self.stream.next_random();
            self.push_out(x - r.val())?;
            out.push(Auth::new(x, r.mac()));
        }
        Ok(out)
    }

    fn mul(&mut self, xs: &[Auth], ys: &[Auth]) -> Result<Vec<Auth>> {
        if xs.len() != ys.len() {
            return Err(ZkError::input("mul operands differ in length"));
        }
        let mut out = Vec::with_capacity(xs.len());
        for (x, y) in xs.iter().zip(ys) {
            let [a, b, c] = self.stream.next_triple();
            let (dx, ey) = (x.sub(&a), y.sub(&b));
            let (d, e) = (dx.val(), ey.val());
            self.push_out(d)?;
            self.push_out(e)?;
            self.pending.push(dx.mac());
            self.pending.push(ey.mac());
            let z = beaver_linear(&a, &b, &c, d, e);
            out.push(Auth::new(z.val() + d * e, z.mac()));
        }
        self.mults += xs.len() as u64;
        Ok(out)
    }

    fn assert_zero(&mut self, xs: &[Auth]) {
        self.pending.extend(xs.iter().map(Auth::mac));
    }

    fn check(&mut self) -> Result<()> {
        self.end_check()
    }

    fn reveal(&mut self, x: &Auth) -> Result<Fp> {
        self.end_check()?;
        let m = x.mac();
        self.chan.send(&Frame::from_elems(FrameKind::Reveal, &[x.val(), m.re, m.im]))?;
        expect_frame(self.chan.recv()?, FrameKind::Accept)?;
        Ok(x.val())
    }

    fn begin_point(&mut self, i: usize) {
        self.point = i;
    }

    fn corrupt(&mut self, kind: HintKind, vals: &mut [Auth]) {
        if kind == HintKind::Weights {
            if let Some(t) = self.active_tamper(TamperStrategy::SwapWeights) {
                // The first two entries are first-layer weights.
                if let Some(w) = vals.get_mut(t.delta.unsigned_abs() as usize % 2) {
                    *w = Auth::new(w.val() + Fp::from_i64(t.delta), w.mac());
                }
                self.tamper = None;
            }
        }
    }

    fn multiplications(&self) -> u64 {
        self.mults
    }

    fn traffic(&self) -> Traffic {
        self.chan.traffic()
    }
}

pub struct Verifier<C: Channel> {
    chan: C,
    dealer: Dealer,
    delta: Fp2,
    rng: ChaCha12Rng,
    inbox: Vec<Fp>,
    cursor: usize,
    // (opened value, key) pairs awaiting the batched check.
    pending_vals: Vec<Fp>,
    pending_keys: Vec<Fp2>,
    mults: u64,
}

impl<C: Channel> Verifier<C> {
    /// Starts a session: seeds the dealer and ships the prover its stream seed.
    pub fn new(mut chan: C, seed: u64) -> Result<Self> {
        let dealer = Dealer::new(seed);
        chan.send(&Frame::from_words(FrameKind::DealerSeed, &[dealer.prover_seed()]))?;
        chan.flush()?;
        Ok(Verifier {
            chan,
            delta: dealer.delta(),
            dealer,
            rng: ChaCha12Rng::seed_from_u64(seed ^ 0xc4a1_1e6e),
            inbox: Vec::new(),
            cursor: 0,
            pending_vals: Vec::new(),
            pending_keys: Vec::new(),
            mults: 0,
        })
    }

    pub fn channel_mut(&mut self) -> &mut C {
        &mut self.chan
    }

    pub fn into_channel(self) -> C {
        self.chan
    }

    fn next_masked(&mut self) -> Result<Fp> {
        if self.cursor == self.inbox.len() {
            let f = expect_frame(self.chan.recv()?, FrameKind::Masked)?;
            self.inbox = f.elems()?;
            self.cursor = 0;
            if self.inbox.is_empty() {
                return Err(ZkError::Protocol("empty masked frame".into()));
            }
        }
        self.cursor += 1;
        Ok(self.inbox[self.cursor - 1])
    }

    fn fail(&mut self, msg: &str) -> ZkError {
        let _ = self.chan.send(&Frame::new(FrameKind::Abort, Vec::new()));
        let _ = self.chan.flush();
        ZkError::abort(msg)
    }

    fn run_check(&mut self) -> Result<()> {
        if self.cursor != self.inbox.len() {
            return Err(ZkError::Protocol("masked data left over at a check".into()));
        }
        let chi = Fp2::random(&mut self.rng);
        self.chan.send(&Frame::from_ext(FrameKind::Challenge, &[chi]))?;
        let f = expect_frame(self.chan.recv()?, FrameKind::MacCheck)?;
        let sigma = match f.ext_elems()?.as_slice() {
            [s] => *s,
            _ => return Err(ZkError::Protocol("malformed MAC check".into())),
        };
        let keys = fold_challenge(chi, self.pending_keys.drain(..));
        let vals = fold_challenge(chi, self.pending_vals.drain(..).map(Fp2::from_base));
        if sigma != keys + self.delta * vals {
            return Err(self.fail("batched MAC check failed"));
        }
        Ok(())
    }
}

impl<C: Channel> Party for Verifier<C> {
    fn role(&self) -> Role {
        Role::Verifier
    }

    fn constant(&self, c: Fp) -> Auth {
        constant_auth(Role::Verifier, self.delta, c)
    }

    fn add_const(&self, x: &Auth, c: Fp) -> Auth {
        Auth::new(Fp::ZERO, x.mac() - self.delta.scale(c))
    }

    fn commit(&mut self, _kind: HintKind, n: usize, _vals: &mut dyn FnMut() -> Vec<Fp>) -> Result<Vec<Auth>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let k = self.dealer.next_random_key();
            let delta_v = self.next_masked()?;
            out.push(Auth::new(Fp::ZERO, k.mac() - self.delta.scale(delta_v)));
        }
        Ok(out)
    }

    fn mul(&mut self, xs: &[Auth], ys: &[Auth]) -> Result<Vec<Auth>> {
        if xs.len() != ys.len() {
            return Err(ZkError::input("mul operands differ in length"));
        }
        let mut out = Vec::with_capacity(xs.len());
        for (x, y) in xs.iter().zip(ys) {
            let [a, b, c] = self.dealer.next_triple_keys()?;
            let d = self.next_masked()?;
            let e = self.next_masked()?;
            self.pending_vals.push(d);
            self.pending_keys.push(x.mac() - a.mac());
            self.pending_vals.push(e);
            self.pending_keys.push(y.mac() - b.mac());
            let z = beaver_linear(&a, &b, &c, d, e);
            out.push(Auth::new(Fp::ZERO, z.mac() - self.delta.scale(d * e)));
        }
        self.mults += xs.len() as u64;
        Ok(out)
    }

    fn assert_zero(&mut self, xs: &[Auth]) {
        for x in xs {
            self.pending_vals.push(Fp::ZERO);
            self.pending_keys.push(x.mac());
        }
    }

    fn check(&mut self) -> Result<()> {
        self.run_check()
    }

    fn reveal(&mut self, x: &Auth) -> Result<Fp> {
        self.run_check()?;
        let f = expect_frame(self.chan.recv()?, FrameKind::Reveal)?;
        let e = f.elems()?;
        if e.len() != 3 {
            return Err(ZkError::Protocol("malformed reveal".into()));
        }
        if !relation_holds(self.delta, e[0], Fp2::new(e[1], e[2]), x.mac()) {
            return Err(self.fail("MAC check failed on reveal"));
        }
        self.chan.send(&Frame::new(FrameKind::Accept, Vec::new()))?;
        self.chan.flush()?;
        Ok(e[0])
    }

    fn multiplications(&self) -> u64 {
        self.mults
    }

    fn traffic(&self) -> Traffic {
        self.chan.traffic()
    }
}
