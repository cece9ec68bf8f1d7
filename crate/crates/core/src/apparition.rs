//! Rank of apparition `z(p)`, Wall exponents, and primitive prime divisors
//! of Fibonacci and Lucas terms.

use std::io::Write;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::arith::{
    divisors_u64, factorize, is_prime_u64, jacobi, legendre_u64, primes_up_to, FactorBudget,
};
use crate::certified::{Enclosure, EnclosureRecord, PrecisionPolicy};
use crate::error::{Error, Result};
use crate::sequences::{pair_mod, pair_mod_big, SequenceKind};

/// `z(p)` together with the Wall exponent `e_p` and the modular evidence
/// for it: `F_{z(p)} mod p^(e_p + 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankRecord {
    pub prime: u64,
    pub rank: u64,
    pub wall_exponent: u32,
    pub cofactor_coprime: bool,
    #[serde(serialize_with = "crate::json::biguint")]
    pub evidence_modulus: BigUint,
    #[serde(serialize_with = "crate::json::biguint")]
    pub evidence_residue: BigUint,
}

fn require_prime(p: u64) -> Result<()> {
    if is_prime_u64(p) {
        Ok(())
    } else {
        Err(Error::NotOddPrime(p.to_string()))
    }
}

/// Least `l > 0` with `p | F_l`.
///
/// For `p ∉ {2, 5}` the divisors of `p - (5|p)` are tried in increasing
/// order. `z(5) = 5`; `z(2) = 3` by direct scan.
pub fn rank_of_apparition(p: u64) -> Result<u64> {
    require_prime(p)?;
    match p {
        2 => {
            let mut k = 1;
            while pair_mod(k, 2)?.fib_res != 0 {
                k += 1;
            }
            Ok(k)
        }
        5 => Ok(5),
        _ => {
            let symbol = legendre_u64(5, p)?;
            let bound = if symbol == 1 {
                p - 1
            } else {
                p.checked_add(1)
                    .ok_or_else(|| Error::InvalidArgument(format!("{p} + 1 overflows")))?
            };
            for d in divisors_u64(bound) {
                if pair_mod(d, p)?.fib_res == 0 {
                    return Ok(d);
                }
            }
            Err(Error::Invariant(format!("no divisor of {bound} is the rank of {p}")))
        }
    }
}

/// Exponent of `p` in `F_{z(p)}`, found by reducing `F_{z(p)}` modulo
/// `p^2, p^3, ...` until the residue is nonzero.
pub fn wall_exponent(p: u64) -> Result<RankRecord> {
    let rank = rank_of_apparition(p)?;
    let prime = BigUint::from(p);
    let mut e = 1u32;
    loop {
        let modulus = prime.pow(e + 1);
        let (residue, _) = pair_mod_big(rank, &modulus)?;
        if !residue.is_zero() {
            let p_e = prime.pow(e);
            if !(&residue % &p_e).is_zero() {
                return Err(Error::Invariant(format!("F_{rank} not divisible by {p}^{e}")));
            }
            let cofactor_coprime = !((&residue / &p_e) % &prime).is_zero();
            return Ok(RankRecord {
                prime: p,
                rank,
                wall_exponent: e,
                cofactor_coprime,
                evidence_modulus: modulus,
                evidence_residue: residue,
            });
        }
        e += 1;
    }
}

/// Outcome of a Wall exponent scan over the odd primes up to `limit`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WallScan {
    pub limit: u64,
    pub primes_scanned: usize,
    pub largest_prime: u64,
    /// Records with `wall_exponent >= 2`, ordered by prime.
    pub exceptions: Vec<RankRecord>,
}

/// Every odd prime `p <= limit` with `e_p >= 2`. The prime range is cut
/// into `partitions` contiguous slices scanned on separate threads; the
/// merged result does not depend on the cut.
pub fn wall_scan(limit: u64, partitions: usize) -> Result<WallScan> {
    if limit < 3 {
        return Err(Error::InvalidArgument("wall scan needs limit >= 3".into()));
    }
    let partitions = partitions.max(1);
    let primes: Vec<u64> = primes_up_to(limit).into_iter().filter(|&p| p != 2).collect();
    let chunk = primes.len().div_ceil(partitions).max(1);
    let results: Vec<Result<Vec<RankRecord>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = primes
            .chunks(chunk)
            .map(|slice| {
                scope.spawn(move || {
                    let mut found = Vec::new();
                    for &p in slice {
                        let record = wall_exponent(p)?;
                        if record.wall_exponent >= 2 {
                            found.push(record);
                        }
                    }
                    Ok(found)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("wall scan worker panicked")).collect()
    });
    let mut exceptions = Vec::new();
    for r in results {
        exceptions.extend(r?);
    }
    exceptions.sort_by_key(|r| r.prime);
    Ok(WallScan {
        limit,
        primes_scanned: primes.len(),
        largest_prime: primes.last().copied().unwrap_or(0),
        exceptions,
    })
}

/// Returns whether `p | F_k`, after checking it agrees with `z(p) | k`.
pub fn rank_divides_iff(p: u64, k: u64) -> Result<bool> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let rank = rank_of_apparition(p)?;
    let divides = pair_mod(k, p)?.fib_res == 0;
    if divides != (k % rank == 0) {
        return Err(Error::Invariant(format!(
            "{p} | F_{k} is {divides} but z({p}) = {rank}"
        )));
    }
    Ok(divides)
}

/// All terms `T_0 .. T_d` of the chosen sequence.
fn terms_through(kind: SequenceKind, d: u64) -> Vec<BigUint> {
    let (s0, s1) = kind.seeds();
    let mut out = Vec::with_capacity(d as usize + 1);
    let (mut a, mut b) = (BigUint::from(s0), BigUint::from(s1));
    for _ in 0..=d {
        let next = &a + &b;
        out.push(std::mem::replace(&mut a, std::mem::replace(&mut b, next)));
    }
    out
}

/// The largest divisor of `T_d` coprime to every `T_k`, `1 <= k < d`: the
/// product of the primitive prime powers. Needs no factorization.
pub fn primitive_part(d: u64, kind: SequenceKind) -> Result<BigUint> {
    if d == 0 {
        return Err(Error::InvalidArgument("index must be positive".into()));
    }
    let terms = terms_through(kind, d);
    let mut part = terms[d as usize].clone();
    for earlier in &terms[1..d as usize] {
        loop {
            let g = part.gcd(earlier);
            if g.is_one() {
                break;
            }
            part /= g;
        }
    }
    Ok(part)
}

/// Whether `T_d` has at least one primitive prime divisor.
pub fn has_primitive_divisor(d: u64, kind: SequenceKind) -> Result<bool> {
    Ok(!primitive_part(d, kind)?.is_one())
}

/// First positive index `k <= up_to` with `p | T_k`, by iterating the
/// recurrence modulo `p`.
pub fn first_index_divisible(kind: SequenceKind, p: &BigUint, up_to: u64) -> Option<u64> {
    let (s0, s1) = kind.seeds();
    let mut a = BigUint::from(s1) % p;
    let mut b = (BigUint::from(s0) + BigUint::from(s1)) % p;
    for k in 1..=up_to {
        if a.is_zero() {
            return Some(k);
        }
        let next = (&a + &b) % p;
        a = std::mem::replace(&mut b, next);
    }
    None
}

/// `(p | 5)`, computed for any prime `p` including 2.
fn symbol_mod_five(p: &BigUint) -> i8 {
    jacobi(&BigInt::from(p.clone()), &BigUint::from(5u32))
}

/// One primitive prime checked against `p ≡ (p|5) (mod d)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CongruenceInstance {
    #[serde(serialize_with = "crate::json::biguint")]
    pub prime: BigUint,
    /// Legendre symbol `(p | 5)`.
    pub symbol: i8,
    #[serde(serialize_with = "crate::json::biguint")]
    pub residue_mod_d: BigUint,
    pub holds: bool,
}

fn congruence_instance(p: &BigUint, d: u64) -> CongruenceInstance {
    let symbol = symbol_mod_five(p);
    let residue = p % d;
    let expected = match symbol {
        1 => BigUint::one() % d,
        -1 => BigUint::from(d - 1),
        _ => BigUint::zero(),
    };
    CongruenceInstance {
        prime: p.clone(),
        symbol,
        holds: symbol != 0 && residue == expected,
        residue_mod_d: residue,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrimitiveDivisorReport {
    pub index: u64,
    pub kind: SequenceKind,
    #[serde(serialize_with = "crate::json::biguint_vec")]
    pub primitive_primes: Vec<BigUint>,
    pub exceptional: bool,
    /// True when `kind` is Lucas, `index` is odd and `> 1`, and every
    /// primitive prime satisfied its congruence modulo `index`.
    pub congruence_checked: bool,
    pub congruences: Vec<CongruenceInstance>,
}

/// `P_d`: the primes dividing `T_d` and no earlier positive-index term.
///
/// Candidates come from factoring [`primitive_part`]; each is then
/// re-confirmed by a modular scan of all earlier indices.
pub fn primitive_prime_divisors(d: u64, kind: SequenceKind, budget: &FactorBudget) -> Result<PrimitiveDivisorReport> {
    let part = primitive_part(d, kind)?;
    let f = factorize(&part, budget)?;
    f.require_complete()?;
    let primes: Vec<BigUint> = f.primes().cloned().collect();
    for p in &primes {
        if first_index_divisible(kind, p, d) != Some(d) {
            return Err(Error::Invariant(format!("{p} is not primitive for {kind} index {d}")));
        }
    }
    let congruences: Vec<CongruenceInstance> = if kind == SequenceKind::Lucas && d > 1 && d % 2 == 1 {
        primes.iter().map(|p| congruence_instance(p, d)).collect()
    } else {
        Vec::new()
    };
    Ok(PrimitiveDivisorReport {
        index: d,
        kind,
        exceptional: primes.is_empty(),
        congruence_checked: !congruences.is_empty() && congruences.iter().all(|c| c.holds),
        congruences,
        primitive_primes: primes,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CongruenceCheck {
    pub index: u64,
    pub instances: Vec<CongruenceInstance>,
    pub holds: bool,
}

/// For odd `d > 1`: every primitive prime `p` of `L_d` satisfies
/// `p ≡ 1 (mod d)` when `(p|5) = 1` and `p ≡ -1 (mod d)` when `(p|5) = -1`.
pub fn primitive_congruence_check(d: u64, budget: &FactorBudget) -> Result<CongruenceCheck> {
    if d <= 1 || d % 2 == 0 {
        return Err(Error::InvalidArgument(format!("congruence check needs odd d > 1, got {d}")));
    }
    let report = primitive_prime_divisors(d, SequenceKind::Lucas, budget)?;
    let holds = report.congruences.iter().all(|c| c.holds);
    Ok(CongruenceCheck {
        index: d,
        instances: report.congruences,
        holds,
    })
}

/// `c1 / d + c2 * ln(ln d) / d`.
pub fn reciprocal_sum_bound(d: u64, c1: &BigRational, c2: &BigRational, bits: u32) -> Result<Enclosure> {
    if d < 3 {
        return Err(Error::InvalidArgument("ln ln d needs d >= 3".into()));
    }
    let dd = Enclosure::from_int(d, bits);
    let lnln = dd.ln()?.ln()?;
    let numerator = Enclosure::from_ratio(c1, bits).add(&Enclosure::from_ratio(c2, bits).mul(&lnln));
    numerator.div(&dd)
}

/// Exact `sum 1/(p - 1)` over a set of primes.
pub fn reciprocal_sum(primes: &[BigUint]) -> BigRational {
    primes.iter().fold(BigRational::zero(), |acc, p| {
        acc + BigRational::new(BigInt::one(), BigInt::from(p - 1u32))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReciprocalSumCheck {
    pub index: u64,
    #[serde(serialize_with = "crate::json::biguint_vec")]
    pub primitive_primes: Vec<BigUint>,
    #[serde(serialize_with = "crate::json::rational")]
    pub lhs: BigRational,
    pub rhs: EnclosureRecord,
    pub holds: bool,
}

/// `sum_{p in P_d} 1/(p-1) <= c1/d + c2 ln ln d / d` for the Lucas index
/// `d > 10`. The left side is exact; it must sit at or below the lower end
/// of the right side's enclosure to pass, and strictly above its upper end
/// to fail. Anything in between escalates precision.
pub fn reciprocal_sum_bound_check(
    d: u64,
    c1: &BigRational,
    c2: &BigRational,
    budget: &FactorBudget,
    policy: &PrecisionPolicy,
) -> Result<ReciprocalSumCheck> {
    if d <= 10 {
        return Err(Error::InvalidArgument(format!("bound applies to d > 10, got {d}")));
    }
    let report = primitive_prime_divisors(d, SequenceKind::Lucas, budget)?;
    let lhs = reciprocal_sum(&report.primitive_primes);
    let ((holds, rhs), _) = policy.decide(|bits| {
        let rhs = reciprocal_sum_bound(d, c1, c2, bits)?;
        Ok(if lhs <= rhs.lower() {
            Some((true, rhs))
        } else if lhs > rhs.upper() {
            Some((false, rhs))
        } else {
            None
        })
    })?;
    Ok(ReciprocalSumCheck {
        index: d,
        primitive_primes: report.primitive_primes,
        lhs,
        rhs: rhs.record(),
        holds,
    })
}

/// Writes `prime,rank,wall_exponent` rows with a header.
pub fn write_rank_csv<W: Write>(records: &[RankRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["prime", "rank", "wall_exponent"])?;
    for r in records {
        w.write_record([r.prime.to_string(), r.rank.to_string(), r.wall_exponent.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Rank records for every prime in `[from, to]`.
pub fn rank_table(from: u64, to: u64) -> Result<Vec<RankRecord>> {
    primes_up_to(to)
        .into_iter()
        .filter(|&p| p >= from)
        .map(wall_exponent)
        .collect()
}

/// Primes in a factorization that are small enough for word arithmetic.
pub fn to_u64_primes(primes: &[BigUint]) -> Option<Vec<u64>> {
    primes.iter().map(|p| p.to_u64()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::{fib_exact, lucas_exact};

    fn brute_rank(p: u64) -> u64 {
        (1..).find(|&k| (fib_exact(k) % p).is_zero()).unwrap()
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_of_apparition(7).unwrap(), 8);
        assert_eq!(rank_of_apparition(11).unwrap(), 10);
        assert_eq!(rank_of_apparition(5).unwrap(), 5);
        assert_eq!(rank_of_apparition(2).unwrap(), 3);
        assert_eq!(rank_of_apparition(13).unwrap(), 7);
        assert!(rank_of_apparition(9).is_err());
        assert!(rank_of_apparition(1).is_err());
    }

    #[test]
    fn rank_matches_brute_force() {
        for p in primes_up_to(600) {
            assert_eq!(rank_of_apparition(p).unwrap(), brute_rank(p), "p = {p}");
        }
    }

    #[test]
    fn rank_divides_p_minus_symbol() {
        for p in primes_up_to(10_000).into_iter().filter(|&p| p > 2 && p != 5) {
            let z = rank_of_apparition(p).unwrap();
            let symbol = legendre_u64(5, p).unwrap() as i64;
            assert_eq!((p as i64 - symbol) % z as i64, 0, "p = {p}");
            assert!(z <= p + 1);
        }
    }

    #[test]
    fn wall_examples() {
        for p in [7, 11, 5, 3, 2] {
            let r = wall_exponent(p).unwrap();
            assert_eq!(r.wall_exponent, 1, "p = {p}");
            assert!(r.cofactor_coprime);
        }
        let r = wall_exponent(3).unwrap();
        assert_eq!(r.rank, 4);
        assert_eq!(r.evidence_modulus, BigUint::from(9u32));
        assert_eq!(r.evidence_residue, BigUint::from(3u32));
    }

    #[test]
    fn wall_exponent_matches_exact_valuation() {
        for p in primes_up_to(300) {
            let r = wall_exponent(p).unwrap();
            let exact = fib_exact(r.rank);
            let v = crate::arith::valuation(&exact, &BigUint::from(p)).unwrap();
            assert_eq!(v, r.wall_exponent, "p = {p}");
        }
    }

    #[test]
    fn small_wall_scans() {
        for limit in [3, 100, 2000] {
            let a = wall_scan(limit, 1).unwrap();
            assert!(a.exceptions.is_empty());
            assert_eq!(a, wall_scan(limit, 7).unwrap());
        }
        assert_eq!(wall_scan(3, 4).unwrap().primes_scanned, 1);
        assert!(wall_scan(2, 1).is_err());
    }

    #[test]
    fn rank_divisibility_examples() {
        assert!(rank_divides_iff(7, 16).unwrap());
        assert!(!rank_divides_iff(7, 12).unwrap());
        assert!(rank_divides_iff(11, 10).unwrap());
        assert!(rank_divides_iff(7, 0).is_err());
    }

    #[test]
    fn primitive_examples() {
        let b = FactorBudget::default();
        let r = primitive_prime_divisors(5, SequenceKind::Lucas, &b).unwrap();
        assert_eq!(r.primitive_primes, vec![BigUint::from(11u32)]);
        assert!(r.congruence_checked);
        let r = primitive_prime_divisors(6, SequenceKind::Lucas, &b).unwrap();
        assert!(r.exceptional && r.primitive_primes.is_empty());
        let r = primitive_prime_divisors(9, SequenceKind::Lucas, &b).unwrap();
        assert_eq!(r.primitive_primes, vec![BigUint::from(19u32)]);
        let r = primitive_prime_divisors(25, SequenceKind::Lucas, &b).unwrap();
        assert_eq!(r.primitive_primes, vec![BigUint::from(101u32), BigUint::from(151u32)]);
        let r = primitive_prime_divisors(12, SequenceKind::Fibonacci, &b).unwrap();
        assert!(r.exceptional);
        assert!(primitive_part(0, SequenceKind::Lucas).is_err());
    }

    /// Oracle: factor the whole term and test each prime against every
    /// earlier term by exact division.
    fn primitive_by_full_factorization(d: u64, kind: SequenceKind) -> Vec<BigUint> {
        let term = crate::sequences::term_exact(d, kind);
        let f = factorize(&term, &FactorBudget::default()).unwrap();
        assert!(f.complete);
        f.primes()
            .filter(|p| (1..d).all(|k| !(crate::sequences::term_exact(k, kind) % *p).is_zero()))
            .cloned()
            .collect()
    }

    #[test]
    fn primitive_sets_match_full_factorization() {
        let b = FactorBudget::default();
        for kind in [SequenceKind::Lucas, SequenceKind::Fibonacci] {
            for d in 1..=70 {
                let r = primitive_prime_divisors(d, kind, &b).unwrap();
                assert_eq!(r.primitive_primes, primitive_by_full_factorization(d, kind), "{kind} {d}");
            }
        }
    }

    #[test]
    fn congruence_examples() {
        let b = FactorBudget::default();
        for d in [9, 13, 5] {
            assert!(primitive_congruence_check(d, &b).unwrap().holds, "d = {d}");
        }
        let c = primitive_congruence_check(13, &b).unwrap();
        assert_eq!(c.instances[0].prime, BigUint::from(521u32));
        assert!(primitive_congruence_check(4, &b).is_err());
        assert!(primitive_congruence_check(1, &b).is_err());
    }

    #[test]
    fn reciprocal_sum_examples() {
        let b = FactorBudget::default();
        let p = PrecisionPolicy::default();
        let c1 = BigRational::new(9.into(), 10.into());
        let c2 = BigRational::new(11.into(), 5.into());
        let r = reciprocal_sum_bound_check(11, &c1, &c2, &b, &p).unwrap();
        assert!(r.holds);
        assert_eq!(r.lhs, BigRational::new(1.into(), 198.into()));
        assert!(r.rhs.bounds[0].starts_with("0.2567"));
        let r = reciprocal_sum_bound_check(13, &c1, &c2, &b, &p).unwrap();
        assert_eq!(r.lhs, BigRational::new(1.into(), 520.into()));
        let r = reciprocal_sum_bound_check(15, &c1, &c2, &b, &p).unwrap();
        assert!(r.holds);
        assert_eq!(r.primitive_primes, vec![BigUint::from(31u32)]);
        assert_eq!(r.lhs, BigRational::new(1.into(), 30.into()));
        assert!(r.rhs.bounds[0].starts_with("0.2061"));
        assert!(reciprocal_sum_bound_check(10, &c1, &c2, &b, &p).is_err());
    }

    #[test]
    fn csv_export() {
        let records = rank_table(2, 13).unwrap();
        let mut buf = Vec::new();
        write_rank_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "prime,rank,wall_exponent\n2,3,1\n3,4,1\n5,5,1\n7,8,1\n11,10,1\n13,7,1\n");
    }

    #[test]
    fn lucas_term_values_used_above() {
        assert_eq!(lucas_exact(25), BigUint::from(167_761u32));
        assert_eq!(lucas_exact(15), BigUint::from(1364u32));
    }
}
