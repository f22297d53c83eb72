//! The end-to-end audit: commit the model, run inference, confidence and
//! binning on every reference point, check every bin against `α` and
//! reveal the single verdict bit.

use std::time::Instant;

use abstain_core::calibration::AuditConfig;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, Frame, FrameKind, MemChannel, Recording, Transcript};
use crate::field::Fp;
use crate::fixed::{check_audit_bounds, FixedPointParams, QuantizedModel, QuantizedRef};
use crate::gadgets::{commit_bits, decompose, is_zero, lt, one_hot, pow2, range_check, recompose, rescale, select, signed, PublicTable, ZkArray};
use crate::itmac::Auth;
use crate::protocol::{HintKind, Party, Prover, Role, Tamper, Verifier};
use crate::{Result, ZkError};

const WIRE_VERSION: u64 = 1;

/// Who supplies the reference set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefMode {
    /// Both parties hold the reference set; its digest is compared at setup.
    #[default]
    Public,
    /// The prover commits the reference rows; the verifier learns only their
    /// count and width.
    Committed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZkAuditConfig {
    pub audit: AuditConfig,
    pub fp: FixedPointParams,
    pub mode: RefMode,
}

impl ZkAuditConfig {
    pub fn new(audit: AuditConfig) -> Self {
        ZkAuditConfig { audit, fp: FixedPointParams::default(), mode: RefMode::Public }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditStats {
    pub points: usize,
    pub multiplications: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub runtime_sec: f64,
}

impl AuditStats {
    pub fn bytes_per_point(&self) -> f64 {
        (self.bytes_sent + self.bytes_received) as f64 / self.points.max(1) as f64
    }

    pub fn runtime_sec_per_point(&self) -> f64 {
        self.runtime_sec / self.points.max(1) as f64
    }

    pub fn mults_per_point(&self) -> f64 {
        self.multiplications as f64 / self.points.max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub pass: bool,
    pub stats: AuditStats,
}

/// What the verifier writes out after a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub verdict: String,
    pub points: usize,
    pub runtime_sec_per_point: f64,
    pub bytes_per_point: f64,
    pub mults_per_point: f64,
}

impl VerifierReport {
    pub fn from_result(r: &Result<AuditOutcome>) -> Self {
        let (verdict, stats) = match r {
            Ok(o) => (if o.pass { "pass" } else { "fail" }, o.stats),
            Err(e) if e.is_abort() => ("abort", AuditStats::default()),
            Err(_) => ("error", AuditStats::default()),
        };
        VerifierReport {
            verdict: verdict.into(),
            points: stats.points,
            runtime_sec_per_point: stats.runtime_sec_per_point(),
            bytes_per_point: stats.bytes_per_point(),
            mults_per_point: stats.mults_per_point(),
        }
    }
}

/// Public shape of a session, agreed in the hello frame.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Shape {
    dims: Vec<usize>,
    points: usize,
    bins: usize,
    alpha_bits: u64,
    fp: FixedPointParams,
    mode: RefMode,
    digest: [u8; 32],
}

impl Shape {
    fn encode(&self) -> Vec<u64> {
        let mut w = vec![
            WIRE_VERSION,
            u64::from(self.mode == RefMode::Committed),
            self.points as u64,
            self.bins as u64,
            self.alpha_bits,
            u64::from(self.fp.frac_bits),
            u64::from(self.fp.range_bits),
            u64::from(self.fp.table_bits),
            u64::from(self.fp.table_span_log2),
        ];
        w.extend(self.digest.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))));
        w.push(self.dims.len() as u64);
        w.extend(self.dims.iter().map(|d| *d as u64));
        w
    }

    fn decode(w: &[u64]) -> Result<Shape> {
        let bad = || ZkError::Protocol("malformed hello".into());
        if w.len() < 14 || w[0] != WIRE_VERSION {
            return Err(bad());
        }
        let nd = w[13] as usize;
        if w.len() != 14 + nd || !(2..=64).contains(&nd) {
            return Err(bad());
        }
        let small = |v: u64| u32::try_from(v).map_err(|_| bad());
        let mut digest = [0u8; 32];
        for (i, v) in w[9..13].iter().enumerate() {
            digest[8 * i..8 * i + 8].copy_from_slice(&v.to_le_bytes());
        }
        Ok(Shape {
            mode: if w[1] == 1 { RefMode::Committed } else { RefMode::Public },
            points: w[2] as usize,
            bins: w[3] as usize,
            alpha_bits: w[4],
            fp: FixedPointParams {
                frac_bits: small(w[5])?,
                range_bits: small(w[6])?,
                table_bits: small(w[7])?,
                table_span_log2: small(w[8])?,
            },
            digest,
            dims: w[14..].iter().map(|d| *d as usize).collect(),
        })
    }
}

fn fi(v: i64) -> Fp {
    Fp::from_i64(v)
}

/// Reference rows as the circuit sees them on each side.
enum Rows<'a> {
    Public(&'a QuantizedRef),
    Committed { prover: Option<&'a QuantizedRef>, input_dim: usize },
}

/// The audit circuit, shared verbatim by both roles. `model` is `None` on
/// the verifier. With `trace` set, every point's `(p̂, bin, ŷ)` and the final
/// arrays are revealed as well; only tests use it.
fn circuit(p: &mut dyn Party, shape: &Shape, model: Option<&QuantizedModel>, rows: &Rows<'_>, trace: Option<&mut Vec<i64>>) -> Result<bool> {
    let mut trace = trace;
    let fp = &shape.fp;
    let (f, l) = (fp.frac_bits, fp.range_bits);
    let dims = &shape.dims;
    let classes = *dims.last().expect("dims");
    let bins = shape.bins;
    let alpha_q = crate::fixed::alpha_fixed(f64::from_bits(shape.alpha_bits), fp);
    let table = PublicTable::new(&fp.exp_table());
    let step = fp.step_log2();
    let tbits = fp.table_bits;
    let top = table.len() as i64 - 1;
    let sum_bits = fp.sum_bits(classes);

    // Model commitment: per layer, weights then biases.
    let n_params: usize = dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
    let mut params = p.commit(HintKind::Weights, n_params, &mut || {
        let m = model.expect("prover holds the model");
        m.weights.iter().zip(&m.biases).flat_map(|(w, b)| w.iter().chain(b)).map(|v| fi(*v)).collect()
    })?;

    let mut bin_arr = ZkArray::zeros(p, bins);
    let mut conf_arr = ZkArray::zeros(p, bins);
    let mut acc_arr = ZkArray::zeros(p, bins);
    let one = p.constant(Fp::ONE);
    let scale_f = pow2(f);

    for i in 0..shape.points {
        p.begin_point(i);
        p.corrupt(HintKind::Weights, &mut params);

        // Input and label.
        let (x_pub, x_auth, label): (Option<&[i64]>, Vec<Auth>, Auth) = match rows {
            Rows::Public(r) => (Some(&r.inputs[i]), Vec::new(), p.constant(Fp::new(r.labels[i] as u64))),
            Rows::Committed { prover, input_dim } => {
                let xy = p.commit(HintKind::Inputs, input_dim + 1, &mut || {
                    let r = prover.expect("prover holds the reference set");
                    r.inputs[i].iter().map(|v| fi(*v)).chain(std::iter::once(Fp::new(r.labels[i] as u64))).collect()
                })?;
                (None, xy[..*input_dim].to_vec(), xy[*input_dim])
            }
        };

        // Inference.
        let mut h: Vec<Auth> = Vec::new();
        let mut off = 0;
        let last = dims.len() - 2;
        let mut logits = Vec::new();
        for (k, d) in dims.windows(2).enumerate() {
            let (din, dout) = (d[0], d[1]);
            let w = &params[off..off + din * dout];
            let b = &params[off + din * dout..off + din * dout + dout];
            off += din * dout + dout;
            let prods: Vec<Auth> = match (k, x_pub) {
                (0, Some(x)) => w.iter().enumerate().map(|(j, wj)| wj.scale(fi(x[j % din]))).collect(),
                _ => {
                    let src = if k == 0 { &x_auth } else { &h };
                    let ys: Vec<Auth> = (0..din * dout).map(|j| src[j % din]).collect();
                    p.mul(w, &ys)?
                }
            };
            let accs: Vec<Auth> = prods
                .chunks(din)
                .zip(b)
                .map(|(row, bias)| row.iter().fold(bias.scale(scale_f), |a, v| a.add(v)))
                .collect();
            let (q, nonneg) = rescale(p, &accs, f, l)?;
            if k == last {
                logits = q;
            } else {
                h = p.mul(&q, &nonneg)?;
            }
        }

        // Argmax tournament; the lowest index wins ties.
        let mut best = logits[0];
        let mut idx = p.constant(Fp::ZERO);
        for (j, zj) in logits.iter().enumerate().skip(1) {
            let bit = lt(p, &[best], &[*zj], l)?[0];
            let cj = p.constant(Fp::new(j as u64));
            let upd = select(p, &[bit, bit], &[*zj, cj], &[best, idx])?;
            best = upd[0];
            idx = upd[1];
        }
        p.check()?;

        // Confidence: table index from u_j = z_max - z_j rounded to the step.
        let shifted: Vec<Auth> = logits.iter().map(|z| p.add_const(&best.sub(z), pow2(step - 1))).collect();
        let ubits = decompose(p, HintKind::ExpIndexBits, &shifted, Fp::ZERO, l + 1)?;
        let lows: Vec<Auth> = ubits.iter().map(|b| recompose(&b[step as usize..(step + tbits) as usize])).collect();
        let highs: Vec<Auth> = ubits.iter().map(|b| recompose(&b[(step + tbits) as usize..])).collect();
        let in_table = is_zero(p, &highs)?;
        let lows_minus_top: Vec<Auth> = lows.iter().map(|lo| p.add_const(lo, -fi(top))).collect();
        let t = p.mul(&in_table, &lows_minus_top)?;
        let indices: Vec<Auth> = t.iter().map(|t| p.add_const(t, fi(top))).collect();
        let sels = one_hot(p, HintKind::ExpOneHot, &indices, table.len())?;
        let s = sels.iter().fold(Auth::default(), |a, sel| a.add(&table.read(sel)));

        // p̂ = floor(2^{2f} / S): 2^{2f} - p̂·S ∈ [0, S).
        let phat_bits = commit_bits(p, HintKind::ConfidenceBits, 1, f + 1, &mut || {
            let sv = signed(s.val());
            vec![if sv > 0 { (1i128 << (2 * f)) / sv } else { 0 }]
        })?;
        let phat = recompose(&phat_bits[0]);
        let prod = p.mul(&[phat], &[s])?[0];
        let rho = p.add_const(&prod.neg(), pow2(2 * f));
        let gap = p.add_const(&s.sub(&rho), -Fp::ONE);
        range_check(p, HintKind::RangeBits, &[rho, gap], sum_bits)?;

        // Bin index q with B·p̂ = q·2^f + r, selected over B + 1 slots.
        let bp = phat.scale(Fp::new(bins as u64));
        let r_bits = commit_bits(p, HintKind::BinRemainderBits, 1, f, &mut || vec![signed(bp.val()) & ((1 << f) - 1)])?;
        let q = bp.sub(&recompose(&r_bits[0])).scale(scale_f.inv().expect("nonzero"));
        let mut slots = one_hot(p, HintKind::BinOneHot, &[q], bins + 1)?.remove(0);
        let clamp = slots.pop().expect("B + 1 slots");
        slots[bins - 1] = slots[bins - 1].add(&clamp);

        let eq = is_zero(p, &[idx.sub(&label)])?[0];
        bin_arr.increment_at(&slots);
        conf_arr.add_at(p, &slots, &phat)?;
        acc_arr.add_at(p, &slots, &eq.scale(scale_f))?;
        p.check()?;
        if let Some(t) = trace.as_deref_mut() {
            let bin = slots.iter().enumerate().fold(Auth::default(), |a, (k, s)| a.add(&s.scale(Fp::new(k as u64))));
            for x in [phat, bin, idx] {
                t.push(p.reveal(&x)?.to_i64());
            }
        }
    }
    if let Some(t) = trace {
        for arr in [&bin_arr, &conf_arr, &acc_arr] {
            for x in arr.entries() {
                t.push(p.reveal(x)?.to_i64());
            }
        }
    }

    // Per-bin check α·Bin ≥ |Acc - Conf|.
    let diffs: Vec<Auth> = acc_arr.entries().iter().zip(conf_arr.entries()).map(|(a, c)| a.sub(c)).collect();
    let signs = commit_bits(p, HintKind::SignBits, bins, 1, &mut || diffs.iter().map(|d| i128::from(signed(d.val()) >= 0)).collect())?;
    let sign_flat: Vec<Auth> = signs.iter().map(|s| s[0]).collect();
    let sd = p.mul(&sign_flat, &diffs)?;
    let abs: Vec<Auth> = sd.iter().zip(&diffs).map(|(sd, d)| sd.add(sd).sub(d)).collect();
    range_check(p, HintKind::RangeBits, &abs, l - 1)?;
    let bounds: Vec<Auth> = bin_arr.entries().iter().map(|b| b.scale(fi(alpha_q))).collect();
    let over = lt(p, &bounds, &abs, l)?;
    let mut verdict = one.sub(&over[0]);
    for o in &over[1..] {
        verdict = p.mul(&[verdict], &[one.sub(o)])?[0];
    }
    let v = p.reveal(&verdict)?;
    match v.value() {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(ZkError::Protocol("verdict is not a bit".into())),
    }
}

fn local_shape(
    cfg: &ZkAuditConfig,
    dims: Vec<usize>,
    points: usize,
    digest: [u8; 32],
) -> Shape {
    Shape {
        dims,
        points,
        bins: cfg.audit.bins,
        alpha_bits: cfg.audit.alpha.to_bits(),
        fp: cfg.fp,
        mode: cfg.mode,
        digest,
    }
}

fn validate_shape(s: &Shape) -> Result<()> {
    s.fp.validate()?;
    if s.points == 0 {
        return Err(ZkError::input("empty reference set"));
    }
    if s.dims.len() < 2 || s.dims.contains(&0) || *s.dims.last().expect("dims") < 2 {
        return Err(ZkError::input(format!("unsupported model shape {:?}", s.dims)));
    }
    if s.dims.iter().any(|d| *d > 1 << 16) {
        return Err(ZkError::input("layer too wide"));
    }
    let audit = AuditConfig { bins: s.bins, alpha: f64::from_bits(s.alpha_bits) };
    check_audit_bounds(s.points, &audit, &s.fp)?;
    Ok(())
}

fn finish(pass: bool, p: &dyn Party, points: usize, start: Instant) -> AuditOutcome {
    let t = p.traffic();
    AuditOutcome {
        pass,
        stats: AuditStats {
            points,
            multiplications: p.multiplications(),
            bytes_sent: t.bytes_sent,
            bytes_received: t.bytes_received,
            runtime_sec: start.elapsed().as_secs_f64(),
        },
    }
}

/// Prover side. Returns the verdict the verifier accepted.
pub fn run_prover<C: Channel>(
    chan: C,
    model: &QuantizedModel,
    reference: &QuantizedRef,
    cfg: &ZkAuditConfig,
    tamper: Option<Tamper>,
) -> Result<AuditOutcome> {
    let start = Instant::now();
    model.validate()?;
    if reference.input_dim() != model.input_dim() {
        return Err(ZkError::input("reference rows do not match the model input"));
    }
    // An honest prover refuses up front if any value would leave the
    // certified range; the circuit would otherwise abort.
    crate::fixed::reference_audit(model, reference, &cfg.audit, &cfg.fp)?;
    let digest = match cfg.mode {
        RefMode::Public => reference.digest(),
        RefMode::Committed => [0; 32],
    };
    let shape = local_shape(cfg, model.dims.clone(), reference.len(), digest);
    validate_shape(&shape)?;
    let mut p = Prover::new(chan)?.with_tamper(tamper);
    p.channel_mut().send(&Frame::from_words(FrameKind::Hello, &shape.encode()))?;
    let rows = match cfg.mode {
        RefMode::Public => Rows::Public(reference),
        RefMode::Committed => Rows::Committed { prover: Some(reference), input_dim: reference.input_dim() },
    };
    let pass = circuit(&mut p, &shape, Some(model), &rows, None)?;
    p.channel_mut().flush()?;
    Ok(finish(pass, &p, shape.points, start))
}

/// Verifier side; `reference` is required in public mode. `seed` drives the
/// dealer and the challenges.
pub fn run_verifier<C: Channel>(chan: C, reference: Option<&QuantizedRef>, cfg: &ZkAuditConfig, seed: u64) -> Result<AuditOutcome> {
    let start = Instant::now();
    let mut v = Verifier::new(chan, seed)?;
    let hello = v.channel_mut().recv()?;
    if hello.kind != FrameKind::Hello {
        return Err(ZkError::Protocol(format!("expected Hello, got {:?}", hello.kind)));
    }
    let theirs = Shape::decode(&hello.words()?)?;
    let (rows, ours) = match (cfg.mode, reference) {
        (RefMode::Public, Some(r)) => (Rows::Public(r), local_shape(cfg, theirs.dims.clone(), r.len(), r.digest())),
        (RefMode::Public, None) => return Err(ZkError::InvalidConfig("public mode needs the reference set".into())),
        (RefMode::Committed, _) => (
            Rows::Committed { prover: None, input_dim: theirs.dims[0] },
            local_shape(cfg, theirs.dims.clone(), theirs.points, [0; 32]),
        ),
    };
    if theirs != ours {
        let _ = v.channel_mut().send(&Frame::new(FrameKind::Abort, Vec::new()));
        let _ = v.channel_mut().flush();
        return Err(ZkError::Protocol("session parameters differ between the parties".into()));
    }
    validate_shape(&ours)?;
    let pass = circuit(&mut v, &ours, None, &rows, None)?;
    Ok(finish(pass, &v, ours.points, start))
}

/// Runs either role.
pub fn run_audit<C: Channel>(
    role: Role,
    chan: C,
    model: Option<&QuantizedModel>,
    reference: Option<&QuantizedRef>,
    cfg: &ZkAuditConfig,
    seed: u64,
) -> Result<AuditOutcome> {
    match role {
        Role::Prover => {
            let m = model.ok_or_else(|| ZkError::InvalidConfig("the prover needs a model".into()))?;
            let r = reference.ok_or_else(|| ZkError::InvalidConfig("the prover needs the reference set".into()))?;
            run_prover(chan, m, r, cfg, None)
        }
        Role::Verifier => run_verifier(chan, reference, cfg, seed),
    }
}

/// Both roles of an in-process run, plus the verifier's frame log.
#[derive(Debug)]
pub struct LocalRun {
    pub prover: Result<AuditOutcome>,
    pub verifier: Result<AuditOutcome>,
    pub transcript: Transcript,
}

/// Runs prover and verifier on two threads joined by an in-memory channel.
pub fn audit_in_process(
    model: &QuantizedModel,
    reference: &QuantizedRef,
    cfg: &ZkAuditConfig,
    seed: u64,
    tamper: Option<Tamper>,
) -> LocalRun {
    let (pc, vc) = MemChannel::pair();
    let (vc, transcript) = Recording::new(vc);
    let vref = (cfg.mode == RefMode::Public).then(|| reference.clone());
    let vcfg = *cfg;
    let h = std::thread::spawn(move || run_verifier(vc, vref.as_ref(), &vcfg, seed));
    let prover = run_prover(pc, model, reference, cfg, tamper);
    let verifier = h.join().unwrap_or_else(|_| Err(ZkError::Session("verifier thread panicked".into())));
    LocalRun { prover, verifier, transcript }
}
