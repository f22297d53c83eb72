//! Circuit building blocks over [`Party`]: bit decompositions, comparison,
//! zero tests, fixed-point rescaling, one-hot selectors and hidden-index
//! arrays. All gadgets work on batches so one call maps to one mul batch.

use crate::field::Fp;
use crate::itmac::Auth;
use crate::protocol::{HintKind, Party};
use crate::Result;

pub fn pow2(k: u32) -> Fp {
    Fp::new(1u64 << k)
}

/// Signed integer in a centred field element, widened.
pub(crate) fn signed(x: Fp) -> i128 {
    x.to_i64() as i128
}

/// Low `n` bits of `v`, least significant first.
fn bits_of(v: i128, n: u32) -> impl Iterator<Item = Fp> {
    (0..n).map(move |i| Fp::new(((v >> i) & 1) as u64))
}

/// `Σ 2^i b_i`.
pub fn recompose(bits: &[Auth]) -> Auth {
    let mut acc = Auth::default();
    for b in bits.iter().rev() {
        acc = acc.add(&acc).add(b);
    }
    acc
}

/// Commits `count` groups of `n` bits produced by `plain` and proves each
/// bit boolean.
pub fn commit_bits(
    p: &mut dyn Party,
    kind: HintKind,
    count: usize,
    n: u32,
    plain: &mut dyn FnMut() -> Vec<i128>,
) -> Result<Vec<Vec<Auth>>> {
    let n = n as usize;
    let flat = p.commit(kind, count * n, &mut || plain().into_iter().flat_map(|v| bits_of(v, n as u32)).collect())?;
    let sq = p.mul(&flat, &flat)?;
    let diffs: Vec<Auth> = sq.iter().zip(&flat).map(|(s, b)| s.sub(b)).collect();
    p.assert_zero(&diffs);
    Ok(flat.chunks(n.max(1)).take(count).map(<[Auth]>::to_vec).collect())
}

/// Proves each `x + offset` lies in `[0, 2^n)` and returns its bits.
pub fn decompose(p: &mut dyn Party, kind: HintKind, xs: &[Auth], offset: Fp, n: u32) -> Result<Vec<Vec<Auth>>> {
    let off = offset.value() as i128;
    let bits = commit_bits(p, kind, xs.len(), n, &mut || xs.iter().map(|x| signed(x.val()) + off).collect())?;
    let zs: Vec<Auth> = xs.iter().zip(&bits).map(|(x, b)| p.add_const(&recompose(b).sub(x), -offset)).collect();
    p.assert_zero(&zs);
    Ok(bits)
}

/// Proves `0 ≤ x < 2^n`.
pub fn range_check(p: &mut dyn Party, kind: HintKind, xs: &[Auth], n: u32) -> Result<()> {
    decompose(p, kind, xs, Fp::ZERO, n).map(|_| ())
}

/// `[x < y]` for `|y - x| < 2^n`, from the top bit of `y - x - 1 + 2^n`.
pub fn lt(p: &mut dyn Party, xs: &[Auth], ys: &[Auth], n: u32) -> Result<Vec<Auth>> {
    let diffs: Vec<Auth> = xs.iter().zip(ys).map(|(x, y)| y.sub(x)).collect();
    let bits = decompose(p, HintKind::CompareBits, &diffs, pow2(n) - Fp::ONE, n + 1)?;
    Ok(bits.into_iter().map(|b| b[n as usize]).collect())
}

/// `[x = 0]` from a prover-supplied inverse: `g = 1 - x·x⁻¹` with `x·g = 0`.
pub fn is_zero(p: &mut dyn Party, xs: &[Auth]) -> Result<Vec<Auth>> {
    let inv = p.commit(HintKind::Inverse, xs.len(), &mut || xs.iter().map(|x| x.val().inv().unwrap_or(Fp::ZERO)).collect())?;
    let t = p.mul(xs, &inv)?;
    let one = p.constant(Fp::ONE);
    let g: Vec<Auth> = t.iter().map(|t| one.sub(t)).collect();
    let z = p.mul(xs, &g)?;
    p.assert_zero(&z);
    Ok(g)
}

/// `b ? x : y` for boolean `b`.
pub fn select(p: &mut dyn Party, bs: &[Auth], xs: &[Auth], ys: &[Auth]) -> Result<Vec<Auth>> {
    let d: Vec<Auth> = xs.iter().zip(ys).map(|(x, y)| x.sub(y)).collect();
    let t = p.mul(bs, &d)?;
    Ok(t.iter().zip(ys).map(|(t, y)| t.add(y)).collect())
}

/// Rescaled values `q = floor((z + 2^{f-1}) / 2^f)` certified to `ℓ`
/// signed bits, with `[q ≥ 0]` for each.
pub fn rescale(p: &mut dyn Party, zs: &[Auth], f: u32, l: u32) -> Result<(Vec<Auth>, Vec<Auth>)> {
    let half = 1i128 << (f - 1);
    let bits = commit_bits(p, HintKind::RescaleBits, zs.len(), l + f, &mut || {
        zs.iter()
            .map(|z| {
                let v = signed(z.val()) + half;
                let q = v.div_euclid(1 << f);
                let r = v.rem_euclid(1 << f);
                // Remainder in the low f bits, offset quotient above.
                ((q + (1i128 << (l - 1))) << f) | r
            })
            .collect()
    })?;
    let shift = pow2(l - 1);
    let mut qs = Vec::with_capacity(zs.len());
    let mut signs = Vec::with_capacity(zs.len());
    let mut zero = Vec::with_capacity(zs.len());
    for (z, b) in zs.iter().zip(&bits) {
        // Σ 2^i b_i = 2^f (q + 2^{ℓ-1}) + r = z + 2^{f-1} + 2^{f+ℓ-1}.
        let all = recompose(b);
        zero.push(p.add_const(&all.sub(z), -(pow2(f - 1) + pow2(f + l - 1))));
        qs.push(p.add_const(&recompose(&b[f as usize..]), -shift));
        signs.push(b[(f + l - 1) as usize]);
    }
    p.assert_zero(&zero);
    Ok((qs, signs))
}

/// Certified one-hot vectors over `size` slots, one per index in `idx`.
pub fn one_hot(p: &mut dyn Party, kind: HintKind, idx: &[Auth], size: usize) -> Result<Vec<Vec<Auth>>> {
    let flat = p.commit(kind, idx.len() * size, &mut || {
        let mut v = vec![Fp::ZERO; idx.len() * size];
        for (k, i) in idx.iter().enumerate() {
            let i = i.val().value() as usize;
            if i < size {
                v[k * size + i] = Fp::ONE;
            }
        }
        v
    })?;
    let sq = p.mul(&flat, &flat)?;
    let mut zero: Vec<Auth> = sq.iter().zip(&flat).map(|(s, b)| s.sub(b)).collect();
    let one = p.constant(Fp::ONE);
    for (sel, i) in flat.chunks(size).zip(idx) {
        let sum = sel.iter().fold(Auth::default(), |a, s| a.add(s));
        zero.push(sum.sub(&one));
        let weighted = sel.iter().enumerate().fold(Auth::default(), |a, (j, s)| a.add(&s.scale(Fp::new(j as u64))));
        zero.push(weighted.sub(i));
    }
    p.assert_zero(&zero);
    Ok(flat.chunks(size).map(<[Auth]>::to_vec).collect())
}

/// Public lookup table read through a hidden one-hot selector.
#[derive(Clone, Debug)]
pub struct PublicTable {
    entries: Vec<Fp>,
}

impl PublicTable {
    pub fn new(entries: &[i64]) -> Self {
        PublicTable { entries: entries.iter().map(|v| Fp::from_i64(*v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ s_i T_i`; linear since the table is public.
    pub fn read(&self, sel: &[Auth]) -> Auth {
        sel.iter().zip(&self.entries).fold(Auth::default(), |a, (s, t)| a.add(&s.scale(*t)))
    }
}

/// Array of authenticated entries with hidden-index access by linear scan.
#[derive(Clone, Debug)]
pub struct ZkArray {
    entries: Vec<Auth>,
}

impl ZkArray {
    /// `size` entries equal to ⟦0⟧.
    pub fn zeros(p: &dyn Party, size: usize) -> Self {
        ZkArray { entries: vec![p.constant(Fp::ZERO); size] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Auth] {
        &self.entries
    }

    /// One-hot selector for the hidden index `idx`.
    pub fn select(&self, p: &mut dyn Party, idx: &Auth) -> Result<Vec<Auth>> {
        Ok(one_hot(p, HintKind::Generic, std::slice::from_ref(idx), self.len())?.remove(0))
    }

    pub fn read(&self, p: &mut dyn Party, sel: &[Auth]) -> Result<Auth> {
        let t = p.mul(sel, &self.entries)?;
        Ok(t.iter().fold(Auth::default(), |a, v| a.add(v)))
    }

    /// `e_i ← e_i + s_i (v - e_i)`.
    pub fn write(&mut self, p: &mut dyn Party, sel: &[Auth], v: &Auth) -> Result<()> {
        let d: Vec<Auth> = self.entries.iter().map(|e| v.sub(e)).collect();
        let t = p.mul(sel, &d)?;
        self.entries.iter_mut().zip(&t).for_each(|(e, t)| *e = e.add(t));
        Ok(())
    }

    /// `e_i ← e_i + s_i v`.
    pub fn add_at(&mut self, p: &mut dyn Party, sel: &[Auth], v: &Auth) -> Result<()> {
        let t = p.mul(sel, &vec![*v; sel.len()])?;
        self.entries.iter_mut().zip(&t).for_each(|(e, t)| *e = e.add(t));
        Ok(())
    }

    /// `e_i ← e_i + s_i` (no multiplication).
    pub fn increment_at(&mut self, sel: &[Auth]) {
        self.entries.iter_mut().zip(sel).for_each(|(e, s)| *e = e.add(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::tests::{commit_vals, run_pair};
    use crate::ZkError;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f(v: i64) -> Fp {
        Fp::from_i64(v)
    }

    fn reveal_all(p: &mut dyn Party, xs: &[Auth]) -> Result<Vec<i64>> {
        p.check()?;
        xs.iter().map(|x| p.reveal(x).map(|v| v.to_i64())).collect()
    }

    fn both<T: PartialEq + std::fmt::Debug>(r: (Result<T>, Result<T>)) -> T {
        let (p, v) = r;
        let v = v.unwrap();
        assert_eq!(p.unwrap(), v);
        v
    }

    #[test]
    fn compare_examples() {
        let out = both(run_pair(None, |p| {
            let v = commit_vals(p, HintKind::Generic, vec![f(5), f(9), f(7), f(-3)])?;
            let b = lt(p, &[v[0], v[2], v[2], v[3], v[0]], &[v[1], v[2], v[0], v[0], v[3]], 8)?;
            reveal_all(p, &b)
        }));
        assert_eq!(out, vec![1, 0, 0, 1, 0]);
    }

    #[test]
    fn compare_matches_oracle_on_random_signed_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs: Vec<(i64, i64)> =
            (0..1000).map(|_| (rng.random_range(-(1 << 38)..1 << 38), rng.random_range(-(1 << 38)..1 << 38))).collect();
        let mut pairs2 = pairs;
        pairs2.extend((0..20).map(|i| (i - 10, i - 10)));
        let input = pairs2.clone();
        let out = both(run_pair(None, move |p| {
            let xs = commit_vals(p, HintKind::Generic, input.iter().map(|t| f(t.0)).collect())?;
            let ys = commit_vals(p, HintKind::Generic, input.iter().map(|t| f(t.1)).collect())?;
            let b = lt(p, &xs, &ys, 40)?;
            reveal_all(p, &b)
        }));
        for ((x, y), b) in pairs2.iter().zip(out) {
            assert_eq!(b == 1, x < y, "{x} < {y}");
        }
    }

    #[test]
    fn out_of_range_comparison_aborts() {
        // |y - x| ≥ 2^n cannot be decomposed into n + 1 bits.
        let (_, v) = run_pair(None, |p| {
            let v = commit_vals(p, HintKind::Generic, vec![f(0), f(1000)])?;
            let b = lt(p, &v[..1], &v[1..], 8)?;
            reveal_all(p, &b)
        });
        assert!(v.unwrap_err().is_abort());
    }

    #[test]
    fn zero_test() {
        let out = both(run_pair(None, |p| {
            let v = commit_vals(p, HintKind::Generic, vec![f(0), f(5), f(-1)])?;
            let z = is_zero(p, &v)?;
            reveal_all(p, &z)
        }));
        assert_eq!(out, vec![1, 0, 0]);
    }

    #[test]
    fn rescale_and_relu() {
        let zs = [3i64 << 15, 1 << 15, -(1 << 15), -(3 << 15), 5 << 32, -(7 << 30)];
        let want: Vec<i64> = zs.iter().map(|z| (z + (1 << 15)).div_euclid(1 << 16)).collect();
        let out = both(run_pair(None, move |p| {
            let v = commit_vals(p, HintKind::Generic, zs.iter().map(|z| f(*z)).collect())?;
            let (q, s) = rescale(p, &v, 16, 40)?;
            let relu = p.mul(&q, &s)?;
            let mut all = q;
            all.extend(relu);
            reveal_all(p, &all)
        }));
        assert_eq!(&out[..6], &want[..]);
        let relu: Vec<i64> = want.iter().map(|v| (*v).max(0)).collect();
        assert_eq!(&out[6..], &relu[..]);
    }

    #[test]
    fn one_hot_and_table() {
        let out = both(run_pair(None, |p| {
            let idx = commit_vals(p, HintKind::Generic, vec![f(0), f(3)])?;
            let sel = one_hot(p, HintKind::Generic, &idx, 4)?;
            let t = PublicTable::new(&[10, 20, 30, 40]);
            let r: Vec<Auth> = sel.iter().map(|s| t.read(s)).collect();
            reveal_all(p, &r)
        }));
        assert_eq!(out, vec![10, 40]);
    }

    #[test]
    fn out_of_range_index_aborts() {
        let (_, v) = run_pair(None, |p| {
            let idx = commit_vals(p, HintKind::Generic, vec![f(4)])?;
            one_hot(p, HintKind::Generic, &idx, 4)?;
            p.check()
        });
        assert!(v.unwrap_err().is_abort());
    }

    #[test]
    fn zk_array_matches_plain_array() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ops: Vec<(u8, usize, i64)> =
            (0..60).map(|_| (rng.random_range(0..3), rng.random_range(0..6), rng.random_range(-50..50))).collect();
        let mut plain = [0i64; 6];
        let mut reads = Vec::new();
        for (op, i, v) in &ops {
            match op {
                0 => plain[*i] = *v,
                1 => plain[*i] += v,
                _ => reads.push(plain[*i]),
            }
        }
        let want: Vec<i64> = reads.into_iter().chain(plain).collect();
        let out = both(run_pair(None, move |p| {
            let mut arr = ZkArray::zeros(p, 6);
            let mut reads = Vec::new();
            for (op, i, v) in &ops {
                let iv = commit_vals(p, HintKind::Generic, vec![f(*i as i64), f(*v)])?;
                let sel = arr.select(p, &iv[0])?;
                match op {
                    0 => arr.write(p, &sel, &iv[1])?,
                    1 => arr.add_at(p, &sel, &iv[1])?,
                    _ => reads.push(arr.read(p, &sel)?),
                }
            }
            reads.extend_from_slice(arr.entries());
            reveal_all(p, &reads)
        }));
        assert_eq!(out, want);
    }

    #[test]
    fn forged_bits_abort() {
        // A non-boolean "bit" satisfying the recomposition.
        let (_, v) = run_pair(None, |p| {
            let x = commit_vals(p, HintKind::Generic, vec![f(2)])?;
            let b = commit_vals(p, HintKind::Generic, vec![f(2), f(0)])?;
            let sq = p.mul(&b, &b)?;
            let d: Vec<Auth> = sq.iter().zip(&b).map(|(s, b)| s.sub(b)).collect();
            p.assert_zero(&d);
            p.assert_zero(&[recompose(&b).sub(&x[0])]);
            p.check()
        });
        assert!(matches!(v, Err(ZkError::Abort(_))));
    }
}
