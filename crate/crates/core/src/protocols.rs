//! Key distribution on top of matched detection pairs.

use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{chsh_from_counts, ChshResult, CHSH_SETTINGS};
use crate::linksim::DetectionEvent;
use crate::photonics::{mismatch_to_error_ratio, Basis, StateFamily};

/// Minimum count per CHSH setting pair before the Bell test is trusted.
pub const MIN_CHSH_COUNTS: u64 = 10;
/// Significance, in standard deviations, required of `|S| - 2`.
pub const BELL_SIGNIFICANCE: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("keys differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sample fraction must be in (0, 1], got {0}")]
    SampleFraction(f64),
    #[error("key is empty")]
    EmptyKey,
    #[error("key file: {0}")]
    KeyFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Observation {
    pub basis: Basis,
    pub outcome: bool,
}

impl From<&DetectionEvent> for Observation {
    fn from(e: &DetectionEvent) -> Self {
        Self { basis: e.basis, outcome: e.outcome }
    }
}

/// One coincidence as both parties announce it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MatchedRecord {
    pub a: Observation,
    pub b: Observation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SecurityFlag {
    Unchecked,
    BellViolated,
    Insecure,
}

impl SecurityFlag {
    pub fn label(self) -> &'static str {
        match self {
            SecurityFlag::Unchecked => "unchecked",
            SecurityFlag::BellViolated => "bell_violated",
            SecurityFlag::Insecure => "insecure",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "unchecked" => Some(SecurityFlag::Unchecked),
            "bell_violated" => Some(SecurityFlag::BellViolated),
            "insecure" => Some(SecurityFlag::Insecure),
            _ => None,
        }
    }
}

impl fmt::Display for SecurityFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Raw key shared by the two sides.
///
/// `bits` is side `b`'s copy, which defines the key; `partner_bits` is side
/// `a`'s copy after its state-dependent flip. They differ wherever the
/// measurement went wrong, and are only compared through
/// [`KeyMaterial::disclose_sample`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyMaterial {
    pub bits: Vec<bool>,
    pub partner_bits: Vec<bool>,
    /// Position of the matched record each bit came from.
    pub source_pairs: Vec<usize>,
    pub sifted_fraction: f64,
    /// Disagreement rate of the disclosed sample, in `[0, 0.5]` for any
    /// sensible link.
    pub mismatch_rate: f64,
    pub security_flag: SecurityFlag,
}

impl KeyMaterial {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Erroneous per correct coincidence, inferred from the mismatch rate.
    pub fn error_ratio(&self) -> f64 {
        mismatch_to_error_ratio(self.mismatch_rate)
    }

    /// Publicly compares a random sample of the key, records the mismatch
    /// rate and drops the disclosed bits.
    pub fn disclose_sample<R: Rng + ?Sized>(&mut self, fraction: f64, rng: &mut R) -> Result<f64, ProtocolError> {
        let kept = disclosed_positions(self.bits.len(), fraction, rng)?;
        let q = estimate_qber(&mut self.partner_bits, &mut self.bits, fraction, rng, Some(&kept))?;
        let mut it = kept.iter().peekable();
        let mut k = 0;
        self.source_pairs.retain(|_| {
            let drop = it.next_if(|&&p| p == k).is_some();
            k += 1;
            !drop
        });
        self.mismatch_rate = q;
        Ok(q)
    }
}

fn disclosed_positions<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> Result<Vec<usize>, ProtocolError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ProtocolError::SampleFraction(fraction));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n);
    let mut picked = index::sample(rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Side `a`'s bit after the flip that makes it agree with side `b` on an
/// ideal link.
fn aligned(state: StateFamily, outcome: bool) -> bool {
    match state {
        StateFamily::PhiPlus => outcome,
        StateFamily::PsiMinus => !outcome,
    }
}

/// Keeps records measured in the same basis on both sides.
pub fn bb84_sift(records: &[MatchedRecord], state: StateFamily) -> KeyMaterial {
    let mut key = KeyMaterial {
        bits: Vec::new(),
        partner_bits: Vec::new(),
        source_pairs: Vec::new(),
        sifted_fraction: 0.0,
        mismatch_rate: 0.0,
        security_flag: SecurityFlag::Unchecked,
    };
    for (i, r) in records.iter().enumerate() {
        if r.a.basis == r.b.basis {
            key.bits.push(r.b.outcome);
            key.partner_bits.push(aligned(state, r.a.outcome));
            key.source_pairs.push(i);
        }
    }
    if !records.is_empty() {
        key.sifted_fraction = key.bits.len() as f64 / records.len() as f64;
    }
    key
}

/// Mismatch rate of a randomly disclosed sample of `sample_fraction` of the
/// bits. Disclosed bits are removed from both keys.
///
/// `positions` overrides the random choice; it must be sorted.
pub fn estimate_qber<R: Rng + ?Sized>(
    key_a: &mut Vec<bool>,
    key_b: &mut Vec<bool>,
    sample_fraction: f64,
    rng: &mut R,
    positions: Option<&[usize]>,
) -> Result<f64, ProtocolError> {
    if key_a.len() != key_b.len() {
        return Err(ProtocolError::LengthMismatch(key_a.len(), key_b.len()));
    }
    let drawn;
    let picked = match positions {
        Some(p) => p,
        None => {
            drawn = disclosed_positions(key_a.len(), sample_fraction, rng)?;
            &drawn
        }
    };
    if picked.is_empty() {
        return Ok(0.0);
    }
    let errors = picked.iter().filter(|&&i| key_a[i] != key_b[i]).count();
    for &i in picked.iter().rev() {
        key_a.remove(i);
        key_b.remove(i);
    }
    Ok(errors as f64 / picked.len() as f64)
}

/// Public announcement linking two keys held by one trusted node, truncated
/// to the shorter key.
pub fn xor_relay(key_a: &[bool], key_b: &[bool]) -> Result<Vec<bool>, ProtocolError> {
    let n = key_a.len().min(key_b.len());
    if n == 0 {
        return Err(ProtocolError::EmptyKey);
    }
    Ok(key_a.iter().zip(key_b).map(|(a, b)| a ^ b).collect())
}

/// The other party's key from the announcement and one's own key.
pub fn recover_remote_key(broadcast: &[bool], own_key: &[bool]) -> Result<Vec<bool>, ProtocolError> {
    if broadcast.is_empty() {
        return Err(ProtocolError::EmptyKey);
    }
    if own_key.len() < broadcast.len() {
        return Err(ProtocolError::LengthMismatch(broadcast.len(), own_key.len()));
    }
    Ok(broadcast.iter().zip(own_key).map(|(x, k)| x ^ k).collect())
}

/// Joint outcome counts per CHSH setting pair, `[++, +-, -+, --]`, where
/// `+` is outcome `false`.
pub fn chsh_counts(records: &[MatchedRecord]) -> [[u64; 4]; 4] {
    let mut counts = [[0u64; 4]; 4];
    for r in records {
        if let Some(k) = CHSH_SETTINGS.iter().position(|&(a, b)| a == r.a.basis && b == r.b.basis) {
            counts[k][2 * r.a.outcome as usize + r.b.outcome as usize] += 1;
        }
    }
    counts
}

/// Entanglement-based key with a Bell test as the security check.
///
/// Records with equal settings on both sides become key bits; the CHSH
/// combinations are evaluated from the rotated-basis records. The gate
/// passes when `|S|` exceeds 2 by [`BELL_SIGNIFICANCE`] standard deviations.
pub fn e91_session<R: Rng + ?Sized>(
    records: &[MatchedRecord],
    state: StateFamily,
    sample_fraction: f64,
    rng: &mut R,
) -> Result<(KeyMaterial, Option<ChshResult>), ProtocolError> {
    let counts = chsh_counts(records);
    let chsh = chsh_from_counts(&counts).ok();
    let sparse = counts.iter().any(|c| c.iter().sum::<u64>() < MIN_CHSH_COUNTS);
    let flag = match chsh {
        Some(r) if !sparse => {
            if r.s.abs() - 2.0 > BELL_SIGNIFICANCE * r.sigma_s {
                SecurityFlag::BellViolated
            } else {
                SecurityFlag::Insecure
            }
        }
        _ => SecurityFlag::Unchecked,
    };
    let mut key = bb84_sift(records, state);
    key.disclose_sample(sample_fraction, rng)?;
    key.security_flag = flag;
    Ok((key, chsh))
}

/// Packs bits most significant first into lowercase hex; the final nibble
/// is zero padded.
pub fn bits_to_hex(bits: &[bool]) -> String {
    let bytes: Vec<u8> =
        bits.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))).collect();
    let mut s = hex::encode(bytes);
    s.truncate(bits.len().div_ceil(4));
    s
}

/// Inverse of [`bits_to_hex`] for a key of `len` bits.
pub fn hex_to_bits(text: &str, len: usize) -> Result<Vec<bool>, ProtocolError> {
    if text.len() != len.div_ceil(4) {
        return Err(ProtocolError::KeyFile(format!("{} hex digits for {len} bits", text.len())));
    }
    if text.bytes().any(|c| c.is_ascii_uppercase()) {
        return Err(ProtocolError::KeyFile("hex must be lowercase".into()));
    }
    let mut padded = text.to_string();
    if padded.len() % 2 == 1 {
        padded.push('0');
    }
    let bytes = hex::decode(&padded).map_err(|e| ProtocolError::KeyFile(e.to_string()))?;
    let bits: Vec<bool> = bytes.iter().flat_map(|b| (0..8).map(move |i| b >> (7 - i) & 1 == 1)).collect();
    if bits[len..].iter().any(|&b| b) {
        return Err(ProtocolError::KeyFile("nonzero padding bits".into()));
    }
    Ok(bits[..len].to_vec())
}

/// Exported key: metadata header plus the hex body.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyFile {
    pub bits: Vec<bool>,
    pub mismatch_rate: f64,
    pub security_flag: SecurityFlag,
}

impl KeyFile {
    pub fn from_key(key: &KeyMaterial) -> Self {
        Self { bits: key.bits.clone(), mismatch_rate: key.mismatch_rate, security_flag: key.security_flag }
    }

    pub fn to_text(&self) -> String {
        format!(
            "# length={}\n# mismatch_rate={}\n# security_flag={}\n{}\n",
            self.bits.len(),
            self.mismatch_rate,
            self.security_flag,
            bits_to_hex(&self.bits)
        )
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let bad = |m: &str| ProtocolError::KeyFile(m.to_string());
        let mut length = None;
        let mut mismatch = None;
        let mut flag = None;
        let mut body = None;
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta.trim().split_once('=').ok_or_else(|| bad("header lines are `# key=value`"))?;
                match k.trim() {
                    "length" => length = Some(v.trim().parse::<usize>().map_err(|_| bad("bad length"))?),
                    "mismatch_rate" => {
                        let q: f64 = v.trim().parse().map_err(|_| bad("bad mismatch_rate"))?;
                        if !(0.0..=1.0).contains(&q) {
                            return Err(bad("mismatch_rate outside [0, 1]"));
                        }
                        mismatch = Some(q);
                    }
                    "security_flag" => {
                        flag = Some(SecurityFlag::from_label(v.trim()).ok_or_else(|| bad("unknown security_flag"))?)
                    }
                    _ => return Err(bad("unknown header key")),
                }
            } else if body.is_none() {
                body = Some(line.trim());
            } else if !line.trim().is_empty() {
                return Err(bad("more than one body line"));
            }
        }
        let len = length.ok_or_else(|| bad("missing length"))?;
        let bits = hex_to_bits(body.unwrap_or(""), len)?;
        Ok(Self {
            bits,
            mismatch_rate: mismatch.ok_or_else(|| bad("missing mismatch_rate"))?,
            security_flag: flag.ok_or_else(|| bad("missing security_flag"))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::{sample_pair, PairSourceModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(basis: Basis, outcome: bool) -> Observation {
        Observation { basis, outcome }
    }

    fn simulated(n: usize, v: f64, a_bases: &[Basis], b_bases: &[Basis], seed: u64) -> Vec<MatchedRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let source = PairSourceModel { visibility: v, ..PairSourceModel::default() };
        (0..n)
            .map(|_| {
                let a = a_bases[rng.random_range(0..a_bases.len())];
                let b = b_bases[rng.random_range(0..b_bases.len())];
                let (oa, ob) = sample_pair(&mut rng, &source, a.setting_deg(), b.setting_deg());
                MatchedRecord { a: obs(a, oa), b: obs(b, ob) }
            })
            .collect()
    }

    #[test]
    fn sift_keeps_equal_bases_only() {
        let recs = [
            MatchedRecord { a: obs(Basis::Hv, true), b: obs(Basis::Hv, true) },
            MatchedRecord { a: obs(Basis::Hv, true), b: obs(Basis::Da, false) },
            MatchedRecord { a: obs(Basis::Da, false), b: obs(Basis::Da, true) },
        ];
        let k = bb84_sift(&recs, StateFamily::PhiPlus);
        assert_eq!(k.bits, vec![true, true]);
        assert_eq!(k.partner_bits, vec![true, false]);
        assert_eq!(k.source_pairs, vec![0, 2]);
        assert!((k.sifted_fraction - 2.0 / 3.0).abs() < 1e-15);
        let psi = bb84_sift(&recs, StateFamily::PsiMinus);
        assert_eq!(psi.partner_bits, vec![false, true]);
        let empty = bb84_sift(&[], StateFamily::PhiPlus);
        assert!(empty.is_empty());
        assert_eq!(empty.sifted_fraction, 0.0);
    }

    #[test]
    fn sifted_fraction_near_half() {
        let recs = simulated(10_000, 1.0, &[Basis::Hv, Basis::Da], &[Basis::Hv, Basis::Da], 3);
        let k = bb84_sift(&recs, StateFamily::PhiPlus);
        assert!((k.sifted_fraction - 0.5).abs() < 0.015, "{}", k.sifted_fraction);
        assert_eq!(k.bits, k.partner_bits);
    }

    #[test]
    fn qber_sampling_removes_disclosed_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a: Vec<bool> = (0..1000).map(|_| rng.random()).collect();
        let mut b = a.clone();
        assert_eq!(estimate_qber(&mut a, &mut b, 0.1, &mut rng, None).unwrap(), 0.0);
        assert_eq!(a.len(), 900);
        let mut flipped: Vec<bool> = a.iter().map(|x| !x).collect();
        assert_eq!(estimate_qber(&mut a, &mut flipped, 1.0, &mut rng, None).unwrap(), 1.0);
        assert!(a.is_empty());
        let mut short = vec![true];
        assert!(matches!(
            estimate_qber(&mut vec![], &mut short, 0.5, &mut rng, None),
            Err(ProtocolError::LengthMismatch(0, 1))
        ));
        assert!(estimate_qber(&mut vec![true], &mut vec![true], 0.0, &mut rng, None).is_err());
    }

    #[test]
    fn disclosure_keeps_sources_aligned() {
        let recs = simulated(2000, 0.9, &[Basis::Hv, Basis::Da], &[Basis::Hv, Basis::Da], 5);
        let mut k = bb84_sift(&recs, StateFamily::PhiPlus);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        k.disclose_sample(0.25, &mut rng).unwrap();
        assert_eq!(k.bits.len(), k.source_pairs.len());
        for (bit, &src) in k.bits.iter().zip(&k.source_pairs) {
            assert_eq!(*bit, recs[src].b.outcome);
        }
    }

    #[test]
    fn relay_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<bool> = (0..1024).map(|_| rng.random()).collect();
        let b: Vec<bool> = (0..1024).map(|_| rng.random()).collect();
        let x = xor_relay(&a, &b).unwrap();
        assert_eq!(recover_remote_key(&x, &a).unwrap(), b);
        assert_eq!(recover_remote_key(&x, &b).unwrap(), a);
        assert!(xor_relay(&a, &a).unwrap().iter().all(|&bit| !bit));
        assert_eq!(xor_relay(&a, &b[..10]).unwrap().len(), 10);
        assert_eq!(xor_relay(&[], &b), Err(ProtocolError::EmptyKey));
    }

    #[test]
    fn relay_exhaustive_short() {
        for len in 1..=8usize {
            for ka in 0u32..(1 << len) {
                for kb in [0u32, 0b1011_0110 & ((1 << len) - 1), (1 << len) - 1] {
                    let a: Vec<bool> = (0..len).map(|i| ka >> i & 1 == 1).collect();
                    let b: Vec<bool> = (0..len).map(|i| kb >> i & 1 == 1).collect();
                    assert_eq!(recover_remote_key(&xor_relay(&a, &b).unwrap(), &a).unwrap(), b);
                }
            }
        }
    }

    /// Brute force over all 16 setting combinations and outcomes.
    fn brute_force_s(records: &[MatchedRecord]) -> f64 {
        let mut s = 0.0;
        for (k, (sa, sb)) in CHSH_SETTINGS.iter().enumerate() {
            let mut same = 0.0;
            let mut n = 0.0;
            for r in records.iter().filter(|r| r.a.basis == *sa && r.b.basis == *sb) {
                n += 1.0;
                same += if r.a.outcome == r.b.outcome { 1.0 } else { -1.0 };
            }
            s += crate::analysis::CHSH_SIGNS[k] * same / n;
        }
        s
    }

    #[test]
    fn e91_noiseless_violates() {
        let recs = simulated(200_000, 1.0, &Basis::ALL, &Basis::ALL, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (key, chsh) = e91_session(&recs, StateFamily::PhiPlus, 0.1, &mut rng).unwrap();
        let chsh = chsh.unwrap();
        assert!((chsh.s - 2.0 * 2f64.sqrt()).abs() < 3.0 * chsh.sigma_s, "{chsh:?}");
        assert!((chsh.s - brute_force_s(&recs)).abs() < 1e-12);
        assert_eq!(key.security_flag, SecurityFlag::BellViolated);
        assert_eq!(key.mismatch_rate, 0.0);
    }

    #[test]
    fn e91_low_visibility_insecure() {
        let recs = simulated(200_000, 0.6, &Basis::ALL, &Basis::ALL, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (key, chsh) = e91_session(&recs, StateFamily::PhiPlus, 0.1, &mut rng).unwrap();
        let chsh = chsh.unwrap();
        assert!((chsh.s - 1.697).abs() < 3.0 * chsh.sigma_s + 1e-3, "{chsh:?}");
        assert_eq!(key.security_flag, SecurityFlag::Insecure);
    }

    #[test]
    fn e91_sparse_unchecked() {
        let recs = simulated(30, 1.0, &Basis::ALL, &Basis::ALL, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (key, _) = e91_session(&recs, StateFamily::PhiPlus, 0.5, &mut rng).unwrap();
        assert_eq!(key.security_flag, SecurityFlag::Unchecked);
    }

    #[test]
    fn hex_round_trip() {
        for n in 0..20 {
            let bits: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
            assert_eq!(hex_to_bits(&bits_to_hex(&bits), n).unwrap(), bits);
        }
        assert_eq!(bits_to_hex(&[true, false, true, true, false, false, false, false, true]), "b08");
        assert!(hex_to_bits("b1", 5).is_err());
        assert!(hex_to_bits("B0", 8).is_err());
        let f =
            KeyFile { bits: vec![true, true, false], mismatch_rate: 0.03, security_flag: SecurityFlag::BellViolated };
        assert_eq!(f.to_text(), "# length=3\n# mismatch_rate=0.03\n# security_flag=bell_violated\nc\n");
        assert_eq!(KeyFile::parse(&f.to_text()).unwrap(), f);
        assert!(KeyFile::parse("# length=3\n# mismatch_rate=0.1\nc\n").is_err());
    }
}
