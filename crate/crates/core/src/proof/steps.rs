//! The individual steps. Each returns a finished [`ProofStep`]; errors
//! inside a step become a `Failed` step rather than aborting the run.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use super::{par_map, ChainEvidence, InequalityParams, ProofConfig, ProofStep};
use crate::apparition::{
    has_primitive_divisor, primitive_prime_divisors, rank_of_apparition, reciprocal_sum, reciprocal_sum_bound_check,
    wall_exponent, wall_scan, PrimitiveDivisorReport, ReciprocalSumCheck,
};
use crate::arith::{
    divisors_u64, factorize, factorize_u64, is_prime, legendre, primes_up_to, product_of_first_odd_primes,
    smallest_prime_factor, totient, two_adic, valuation, FactorBudget, FactoredInteger,
};
use crate::certified::{Enclosure, EnclosureRecord, PrecisionPolicy};
use crate::error::{Error, Result};
use crate::lehmer::{filter_claim_holds, lehmer_quotient, lehmer_search_lucas, summarize};
use crate::sequences::{
    check_identity_even, check_identity_odd, check_identity_square, period_mod, residues_mod, SequenceKind,
};

/// The index bound the size argument is expected to produce.
pub const CLAIMED_MIN_INDEX: u64 = 92;
/// `L_0 .. L_13 mod 8` as printed.
pub const PRINTED_RESIDUES_MOD_8: [u64; 14] = [2, 1, 3, 4, 7, 3, 2, 5, 7, 4, 3, 7, 2, 1];
pub const PRINTED_PERIOD_MOD_8: u64 = 12;

fn table(kind: SequenceKind, n: u64) -> Vec<BigUint> {
    let (s0, s1) = kind.seeds();
    let mut out = Vec::with_capacity(n as usize + 2);
    out.push(BigUint::from(s0));
    out.push(BigUint::from(s1));
    while out.len() <= n as usize {
        let k = out.len();
        let next = &out[k - 1] + &out[k - 2];
        out.push(next);
    }
    out.truncate(n as usize + 1);
    out
}

fn odd_with_spf_at_least(lo: u64, hi: u64, spf: u64) -> Vec<u64> {
    (lo..=hi).filter(|&d| d % 2 == 1 && d > 1 && smallest_prime_factor(d) >= spf).collect()
}

fn is_incomplete(e: &Error) -> bool {
    matches!(e, Error::IncompleteFactorization { .. })
}

fn factor_lucas(n: u64, lucas: &[BigUint], budget: &FactorBudget) -> Result<FactoredInteger> {
    let f = factorize(&lucas[n as usize], budget)?;
    f.require_complete()?;
    Ok(f)
}

/// The first few entries of a failure list.
fn failures<T: Serialize>(items: impl IntoIterator<Item = T>) -> Value {
    json!(items.into_iter().take(20).collect::<Vec<_>>())
}

pub fn step_omega_bound(cfg: &ProofConfig) -> ProofStep {
    // finite sanity evidence: no Lehmer number below 10^4 at all
    let limit = 10_000u64;
    let mut composites = 0usize;
    let mut hits = Vec::new();
    for n in 4..limit {
        let f = factorize_u64(n);
        if f.len() == 1 && f[0].1 == 1 {
            continue;
        }
        composites += 1;
        let phi: u64 = f.iter().map(|&(p, e)| (p - 1) * p.pow(e - 1)).product();
        if (n - 1) % phi == 0 {
            hits.push(n);
        }
    }
    let statement = format!("Every Lehmer number has at least {} distinct prime factors.", cfg.omega_bound);
    let anchor = "size of a Lehmer Lucas number";
    let evidence = json!({
        "omega_bound": cfg.omega_bound,
        "composites_checked_below": limit,
        "composites_checked": composites,
        "lehmer_numbers_found": hits,
    });
    if !hits.is_empty() {
        return ProofStep::checked("omega-bound", &statement, anchor, false, evidence);
    }
    ProofStep::assumed(
        "omega-bound",
        &statement,
        anchor,
        "Renze: every Lehmer number N satisfies omega(N) >= 15",
        evidence,
    )
}

pub fn step_constants(cfg: &ProofConfig) -> ProofStep {
    let id = "constants";
    let statement = format!(
        "The product of the first {} odd primes exceeds {} and L_n reaches it first at n = {}, so n >= {}.",
        cfg.omega_bound, cfg.product_threshold, CLAIMED_MIN_INDEX, CLAIMED_MIN_INDEX
    );
    let anchor = "size of a Lehmer Lucas number";
    let product = match product_of_first_odd_primes(cfg.omega_bound as usize) {
        Ok(p) => p,
        Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
    };
    let primes: Vec<u64> = primes_up_to(1 << 12).into_iter().skip(1).take(cfg.omega_bound as usize).collect();
    let (mut prev, mut cur) = (BigUint::from(2u32), BigUint::one());
    let mut n = 1u64;
    while cur < product {
        let next = &prev + &cur;
        prev = std::mem::replace(&mut cur, next);
        n += 1;
    }
    let exceeds = product > BigUint::from(cfg.product_threshold);
    let ok = exceeds && n == CLAIMED_MIN_INDEX && prev < product;
    ProofStep::checked(
        id,
        &statement,
        anchor,
        ok,
        json!({
            "odd_primes": primes,
            "product": product.to_string(),
            "threshold": cfg.product_threshold.to_string(),
            "product_exceeds_threshold": exceeds,
            "minimal_index": n,
            "claimed_minimal_index": CLAIMED_MIN_INDEX,
            "lucas_below": { "index": n - 1, "value": prev.to_string() },
            "lucas_at": { "index": n, "value": cur.to_string() },
        }),
    )
}

pub fn step_identities(limit: u64) -> ProofStep {
    let id = "identities";
    let statement = format!(
        "For n <= {limit}: L_n^2 - 5F_n^2 = 4(-1)^n; L_n = L_(n/2)^2 - 2(-1)^(n/2) for even n; \
         L_n - 1 = 5F_((n+1)/2)F_((n-1)/2) or L_((n+1)/2)L_((n-1)/2) for odd n by n mod 4; \
         gcd(F_((n+1)/2), F_((n-1)/2)) = 1 for odd n."
    );
    let anchor = "Lucas and Fibonacci identities";
    let fib = table(SequenceKind::Fibonacci, limit / 2 + 1);
    let mut bad = Vec::new();
    for n in 0..=limit {
        let mut ok = check_identity_square(n);
        let parity = if n % 2 == 0 { check_identity_even(n) } else { check_identity_odd(n) };
        match parity {
            Ok(b) => ok &= b,
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        }
        if n % 2 == 1 {
            ok &= fib[(n as usize + 1) / 2].gcd(&fib[(n as usize - 1) / 2]).is_one();
        }
        if !ok {
            bad.push(n);
        }
    }
    ProofStep::checked(
        id,
        &statement,
        anchor,
        bad.is_empty(),
        json!({ "range": [0, limit], "indices_checked": limit + 1, "failures": failures(bad) }),
    )
}

pub fn step_parity(limit: u64) -> ProofStep {
    let lucas = table(SequenceKind::Lucas, limit);
    let bad: Vec<u64> = (0..=limit).filter(|&n| lucas[n as usize].is_even() != (n % 3 == 0)).collect();
    ProofStep::checked(
        "parity",
        &format!("For n <= {limit}, L_n is even exactly when 3 | n; a Lehmer number is odd, so 3 does not divide n."),
        "smallest prime factor p_1 of n is at least 5",
        bad.is_empty(),
        json!({
            "range": [0, limit],
            "even_indices_found": (0..=limit).filter(|&n| lucas[n as usize].is_even()).count(),
            "failures": failures(bad),
        }),
    )
}

pub fn step_even_case(limit: u64) -> ProofStep {
    let lucas = table(SequenceKind::Lucas, limit);
    let mut bad = Vec::new();
    let mut max_v2 = 0;
    let mut checked = 0;
    for n in (2..=limit).step_by(2) {
        let m = &lucas[(n / 2) as usize];
        let sq = m * m;
        let value = &lucas[n as usize];
        // L_n - 1 = m^2 - 3 when n/2 is even, m^2 + 1 when n/2 is odd
        let form_ok = if (n / 2) % 2 == 0 {
            sq >= BigUint::from(3u32) && value + 2u32 == sq
        } else {
            *value == &sq + 2u32
        };
        let v2 = two_adic(&(value - 1u32)).unwrap_or(u64::MAX);
        max_v2 = max_v2.max(v2);
        checked += 1;
        if !form_ok || v2 >= 2 {
            bad.push(n);
        }
    }
    ProofStep::checked(
        "even-case",
        &format!(
            "For every even n <= {limit}, L_n - 1 is L_(n/2)^2 + 1 or L_(n/2)^2 - 3 and is not divisible by 4, \
             while a Lehmer number with at least two prime factors needs 4 | L_n - 1."
        ),
        "even indices",
        bad.is_empty(),
        json!({
            "range": [2, limit],
            "indices_checked": checked,
            "max_two_adic_valuation": max_v2,
            "witnesses": [
                { "n": 4, "value_minus_one": (&lucas[4] - 1u32).to_string(), "v2": two_adic(&(&lucas[4] - 1u32)) },
                { "n": 6, "value_minus_one": (&lucas[6] - 1u32).to_string(), "v2": two_adic(&(&lucas[6] - 1u32)) },
            ],
            "failures": failures(bad),
        }),
    )
}

pub fn step_three_mod_four_case(limit: u64) -> ProofStep {
    let id = "three-mod-four-case";
    let statement = format!(
        "L_n mod 8 has period 12 and never vanishes, so each Lucas number carries at most 2^2; for every \
         n = 3 (mod 4) up to {limit}, v_2(L_n - 1) = v_2(L_((n+1)/2)) + v_2(L_((n-1)/2)) <= 4 < 15."
    );
    let anchor = "odd indices n = 3 (mod 4)";
    let (residues, period) = match (
        residues_mod(SequenceKind::Lucas, 8, PRINTED_RESIDUES_MOD_8.len()),
        period_mod(8, SequenceKind::Lucas),
    ) {
        (Ok(r), Ok(p)) => (r, p),
        (Err(e), _) | (_, Err(e)) => return ProofStep::errored(id, &statement, anchor, &e),
    };
    let one_period = residues_mod(SequenceKind::Lucas, 8, period as usize).unwrap_or_default();
    let table_ok = residues == PRINTED_RESIDUES_MOD_8 && period == PRINTED_PERIOD_MOD_8 && !one_period.contains(&0);
    let lucas = table(SequenceKind::Lucas, limit);
    let mut max_by_class = BTreeMap::from([("3 mod 8", 0u64), ("7 mod 8", 0u64)]);
    let mut bad = Vec::new();
    for n in (3..=limit).step_by(4) {
        let v2 = two_adic(&(&lucas[n as usize] - 1u32)).unwrap_or(u64::MAX);
        let (up, down) = (((n + 1) / 2) as usize, ((n - 1) / 2) as usize);
        let split = two_adic(&lucas[up]).zip(two_adic(&lucas[down])).map(|(a, b)| a + b);
        let class = if n % 8 == 3 { "3 mod 8" } else { "7 mod 8" };
        let slot = max_by_class.get_mut(class).expect("both classes present");
        *slot = (*slot).max(v2);
        if v2 > 4 || split != Some(v2) {
            bad.push(n);
        }
    }
    let witness = |n: usize| json!({ "n": n, "value_minus_one": (&lucas[n] - 1u32).to_string(), "v2": two_adic(&(&lucas[n] - 1u32)) });
    ProofStep::checked(
        id,
        &statement,
        anchor,
        table_ok && bad.is_empty(),
        json!({
            "residues_mod_8": residues,
            "printed_residues_mod_8": PRINTED_RESIDUES_MOD_8,
            "period_mod_8": period,
            "zero_residue_in_period": one_period.contains(&0),
            "range": [3, limit],
            "max_two_adic_valuation_by_class": max_by_class,
            "witnesses": [witness(7), witness(11)],
            "failures": failures(bad),
        }),
    )
}

pub fn step_quadratic_residue(cfg: &ProofConfig) -> ProofStep {
    let id = "quadratic-residue";
    let limit = cfg.chain_limit;
    let statement = format!(
        "For odd n <= {limit}, every odd prime p | L_n has 5F_n^2 = 4 (mod p), hence (5|p) = 1."
    );
    let anchor = "primes dividing L_n for odd n";
    let lucas = table(SequenceKind::Lucas, limit);
    let fib = table(SequenceKind::Fibonacci, limit);
    let budget = cfg.budget();
    let indices: Vec<u64> = (1..=limit).step_by(2).collect();
    let results = par_map(&indices, cfg.workers, |&n| -> Result<Option<(u64, usize, Vec<String>)>> {
        let f = match factor_lucas(n, &lucas, &budget) {
            Ok(f) => f,
            Err(e) if is_incomplete(&e) => return Ok(None),
            Err(e) => return Err(e),
        };
        let mut bad = Vec::new();
        let mut count = 0;
        let f_n = &fib[n as usize];
        for p in f.primes().filter(|p| !p.is_even()) {
            count += 1;
            let reduced = (f_n * f_n * 5u32) % p == BigUint::from(4u32) % p;
            if legendre(&5.into(), p)? != 1 || !reduced {
                bad.push(p.to_string());
            }
        }
        Ok(Some((n, count, bad)))
    });
    let mut checked = 0;
    let mut primes = 0;
    let mut skipped = Vec::new();
    let mut bad = Vec::new();
    for (r, &n) in results.into_iter().zip(&indices) {
        match r {
            Ok(Some((n, c, b))) => {
                checked += 1;
                primes += c;
                bad.extend(b.into_iter().map(|p| json!({ "n": n, "prime": p })));
            }
            Ok(None) => skipped.push(n),
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        }
    }
    ProofStep::checked(
        id,
        &statement,
        anchor,
        bad.is_empty(),
        json!({
            "range": [1, limit],
            "indices_checked": checked,
            "primes_checked": primes,
            "skipped_incomplete": skipped,
            "failures": failures(bad),
        }),
    )
}

pub fn step_primitive_divisors(cfg: &ProofConfig) -> ProofStep {
    let id = "primitive-divisors";
    let limit = cfg.primitive_limit;
    let statement = "For every d > 1 except d = 6, L_d has a primitive prime divisor.";
    let anchor = "divisibility chain through primitive divisors";
    let indices: Vec<u64> = (2..=limit).collect();
    let results = par_map(&indices, cfg.workers, |&d| has_primitive_divisor(d, SequenceKind::Lucas));
    let mut exceptions = Vec::new();
    for (r, &d) in results.into_iter().zip(&indices) {
        match r {
            Ok(true) => {}
            Ok(false) => exceptions.push(d),
            Err(e) => return ProofStep::errored(id, statement, anchor, &e),
        }
    }
    let evidence = json!({
        "range": [2, limit],
        "method": "gcd stripping of L_d against L_1 .. L_(d-1)",
        "exception_set": exceptions,
    });
    if exceptions != [6] {
        return ProofStep::checked(id, statement, anchor, false, evidence);
    }
    ProofStep::assumed(id, statement, anchor, "Carmichael's primitive divisor theorem for Lucas numbers", evidence)
}

/// Primitive prime data for the odd indices the chain can involve.
fn primitive_reports(cfg: &ProofConfig, indices: &[u64]) -> Result<(BTreeMap<u64, PrimitiveDivisorReport>, Vec<u64>)> {
    let budget = cfg.budget();
    let results = par_map(indices, cfg.workers, |&d| primitive_prime_divisors(d, SequenceKind::Lucas, &budget));
    let mut reports = BTreeMap::new();
    let mut skipped = Vec::new();
    for (r, &d) in results.into_iter().zip(indices) {
        match r {
            Ok(rep) => {
                reports.insert(d, rep);
            }
            Err(e) if is_incomplete(&e) => skipped.push(d),
            Err(e) => return Err(e),
        }
    }
    Ok((reports, skipped))
}

fn chain_evidence(
    n: u64,
    reports: &BTreeMap<u64, PrimitiveDivisorReport>,
    lucas: &[BigUint],
    fib: &[BigUint],
    budget: &FactorBudget,
) -> Result<Option<(ChainEvidence, bool)>> {
    let p1 = smallest_prime_factor(n);
    let mut chain = Vec::new();
    for d in divisors_u64(n).into_iter().filter(|d| d % p1 == 0) {
        let Some(rep) = reports.get(&d) else { return Ok(None) };
        let pick = rep.congruences.iter().find(|c| c.symbol == 1 && c.holds);
        let Some(c) = pick else {
            return Err(Error::Invariant(format!("no primitive prime of L_{d} is 1 mod {d}")));
        };
        chain.push((d, c.prime.to_string(), c.residue_mod_d.to_u64().unwrap_or(u64::MAX)));
    }
    let f = match factor_lucas(n, lucas, budget) {
        Ok(f) => f,
        Err(e) if is_incomplete(&e) => return Ok(None),
        Err(e) => return Err(e),
    };
    let phi = totient(&f)?;
    let p = BigUint::from(p1);
    let phi_valuation = valuation(&phi, &p).unwrap_or(0);
    let tau = divisors_u64(n / p1).len() as u64;
    let (down, up) = (&fib[(n as usize - 1) / 2], &fib[(n as usize + 1) / 2]);
    let (v_down, v_up) = (valuation(down, &p).unwrap_or(0), valuation(up, &p).unwrap_or(0));
    let (epsilon, designated) = if v_down > v_up { (-1, v_down) } else { (1, v_up) };
    let ok = chain.len() as u64 == tau && phi_valuation as u64 >= tau;
    Ok(Some((
        ChainEvidence {
            n,
            p1,
            epsilon,
            tau_n_over_p1: tau,
            divis_chain: chain,
            phi_valuation,
            designated_valuation: designated,
        },
        ok,
    )))
}

pub fn step_chain_instances(cfg: &ProofConfig) -> ProofStep {
    let id = "chain-instances";
    let limit = cfg.chain_limit;
    let statement = format!(
        "For odd d <= {limit} with smallest prime factor >= 5, each primitive prime p_d of L_d with (p_d|5) = 1 \
         satisfies d | p_d - 1, so p_1^tau(n/p_1) | phi(L_n) for odd n <= {limit}."
    );
    let anchor = "divisibility chain through primitive divisors";
    let indices = odd_with_spf_at_least(5, limit, 5);
    let (reports, skipped) = match primitive_reports(cfg, &indices) {
        Ok(x) => x,
        Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
    };
    let mut instances = Vec::new();
    let mut bad = Vec::new();
    let mut non_residue = 0;
    for (d, rep) in &reports {
        for c in &rep.congruences {
            if c.symbol == -1 {
                non_residue += 1;
            }
            if !c.holds {
                bad.push(json!({ "d": d, "prime": c.prime.to_string(), "symbol": c.symbol }));
            }
        }
        instances.push(json!({
            "d": d,
            "primes": rep.congruences.iter().map(|c| json!({
                "p": c.prime.to_string(), "symbol": c.symbol, "residue_mod_d": c.residue_mod_d.to_string()
            })).collect::<Vec<_>>(),
        }));
    }
    let lucas = table(SequenceKind::Lucas, limit);
    let fib = table(SequenceKind::Fibonacci, limit / 2 + 1);
    let budget = cfg.budget();
    let mut chains = Vec::new();
    let mut chain_skipped = Vec::new();
    for &n in &indices {
        match chain_evidence(n, &reports, &lucas, &fib, &budget) {
            Ok(Some((c, ok))) => {
                if !ok {
                    bad.push(json!({ "n": n, "chain": "too short" }));
                }
                chains.push(c);
            }
            Ok(None) => chain_skipped.push(n),
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        }
    }
    ProofStep::checked(
        id,
        &statement,
        anchor,
        bad.is_empty(),
        json!({
            "indices": [5, limit],
            "instances": instances,
            "non_residue_instances": non_residue,
            "skipped_incomplete": skipped,
            "chains": chains,
            "chains_skipped": chain_skipped,
            "failures": failures(bad),
        }),
    )
}

pub fn step_p1_small_cases(cfg: &ProofConfig) -> ProofStep {
    let id = "p1-small-cases";
    let limit = cfg.fib_five_limit;
    let statement = format!(
        "5 | F_m exactly when 5 | m for m <= {limit}, and e_7 = 1; so p_1 = 5 or 7 forces n = p_1 < {CLAIMED_MIN_INDEX}."
    );
    let anchor = "the cases p_1 = 5 and p_1 = 7";
    let (mut a, mut b) = (0u64, 1u64);
    let mut bad = Vec::new();
    for m in 1..=limit {
        (a, b) = (b, (a + b) % 5);
        if (a == 0) != (m % 5 == 0) {
            bad.push(m);
        }
    }
    let seven = match wall_exponent(7) {
        Ok(r) => r,
        Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
    };
    let fib = table(SequenceKind::Fibonacci, 25);
    ProofStep::checked(
        id,
        &statement,
        anchor,
        bad.is_empty() && seven.wall_exponent == 1,
        json!({
            "fib_five_range": [1, limit],
            "witnesses": { "F_24 mod 5": (&fib[24] % 5u32).to_string(), "F_25 mod 5": (&fib[25] % 5u32).to_string() },
            "wall_exponent_7": seven,
            "failures": failures(bad),
        }),
    )
}

pub fn step_lifted_exponent(cfg: &ProofConfig) -> ProofStep {
    let id = "lifted-exponent";
    let (plimit, klimit) = (cfg.exact_wall_limit, cfg.tau_limit);
    let statement = format!(
        "For odd primes p <= {plimit} and k <= {klimit}: if p^(e_p + 1) | F_k then p | k."
    );
    let anchor = "Wall exponents at p_1";
    let primes: Vec<u64> = primes_up_to(plimit).into_iter().filter(|&p| p != 2).collect();
    let results = par_map(&primes, cfg.workers, |&p| -> Result<(u64, usize, Vec<u64>)> {
        let rec = wall_exponent(p)?;
        let m = BigUint::from(p).pow(rec.wall_exponent + 1);
        let m = m.to_u64().ok_or_else(|| Error::InvalidArgument(format!("modulus for {p} overflows")))? as u128;
        let (mut a, mut b) = (0u128, 1u128);
        let mut hits = 0;
        let mut bad = Vec::new();
        for k in 1..=klimit {
            (a, b) = (b, (a + b) % m);
            if a == 0 {
                hits += 1;
                if k % p != 0 {
                    bad.push(k);
                }
            }
        }
        Ok((p, hits, bad))
    });
    let mut higher = 0;
    let mut bad = Vec::new();
    for r in results {
        match r {
            Ok((p, h, b)) => {
                higher += h;
                bad.extend(b.into_iter().map(|k| json!({ "p": p, "k": k })));
            }
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        }
    }
    ProofStep::checked(
        id,
        &statement,
        anchor,
        bad.is_empty(),
        json!({
            "prime_range": [3, plimit],
            "index_range": [1, klimit],
            "primes_checked": primes.len(),
            "higher_power_instances": higher,
            "failures": failures(bad),
        }),
    )
}

pub fn step_tau_ingredients(cfg: &ProofConfig) -> ProofStep {
    let id = "tau-ingredients";
    let (limit, exact) = (cfg.tau_limit, cfg.exact_wall_limit);
    let statement = format!(
        "tau(n) <= 2 tau(n/p_1) for odd n <= {limit}; z(p) <= p + 1 for odd primes p <= {limit}; \
         p^e_p <= F_z(p) for odd primes p <= {exact}."
    );
    let anchor = "divisor-count estimate";
    let mut bad = Vec::new();
    let mut equality = 0;
    for n in (3..=limit).step_by(2) {
        let p1 = smallest_prime_factor(n);
        let (t, t2) = (divisors_u64(n).len(), divisors_u64(n / p1).len());
        if t > 2 * t2 {
            bad.push(json!({ "tau": n }));
        }
        if t == 2 * t2 {
            equality += 1;
        }
    }
    let primes: Vec<u64> = primes_up_to(limit).into_iter().filter(|&p| p != 2).collect();
    let ranks = par_map(&primes, cfg.workers, |&p| rank_of_apparition(p));
    let mut max_ratio = (0u64, 0u64);
    for (r, &p) in ranks.into_iter().zip(&primes) {
        match r {
            Ok(z) => {
                if z > p + 1 {
                    bad.push(json!({ "rank": p }));
                }
                if z * max_ratio.0 > max_ratio.1 * p || max_ratio.0 == 0 {
                    max_ratio = (p, z);
                }
            }
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        }
    }
    let small: Vec<u64> = primes.iter().copied().filter(|&p| p <= exact).collect();
    let fib = table(SequenceKind::Fibonacci, exact + 1);
    for &p in &small {
        match wall_exponent(p) {
            Ok(r) => {
                if BigUint::from(p).pow(r.wall_exponent) > fib[r.rank as usize] {
                    bad.push(json!({ "power": p }));
                }
            }
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        }
    }
    ProofStep::checked(
        id,
        &statement,
        anchor,
        bad.is_empty(),
        json!({
            "tau_range": [3, limit],
            "tau_equality_cases": equality,
            "example_27": { "tau_27": divisors_u64(27).len(), "tau_9": divisors_u64(9).len() },
            "rank_primes_checked": primes.len(),
            "largest_rank_ratio": { "p": max_ratio.0, "z": max_ratio.1 },
            "exact_power_primes_checked": small.len(),
            "failures": failures(bad),
        }),
    )
}

pub fn step_entropy_instance(cfg: &ProofConfig) -> ProofStep {
    let id = "entropy-instance";
    let limit = cfg.search_limit;
    let statement = format!(
        "For n <= {limit}, whenever L_n is composite, completely factored and (L_n - 1)/phi(L_n) is an integer \
         above 1, log 2 <= sum over p | L_n of 1/(p - 1)."
    );
    let anchor = "lower bound for the totient quotient";
    let lucas = table(SequenceKind::Lucas, limit);
    let budget = cfg.budget();
    let policy = cfg.policy();
    let indices: Vec<u64> = (2..=limit).collect();
    let results = par_map(&indices, cfg.workers, |&n| -> Result<Option<Value>> {
        if is_prime(&lucas[n as usize])?.is_prime_like() {
            return Ok(Some(json!(null)));
        }
        let f = match factor_lucas(n, &lucas, &budget) {
            Ok(f) => f,
            Err(e) if is_incomplete(&e) => return Ok(None),
            Err(e) => return Err(e),
        };
        let phi = totient(&f)?;
        let Some(q) = lehmer_quotient(&f.value, &phi) else { return Ok(Some(json!(null))) };
        let primes: Vec<BigUint> = f.primes().cloned().collect();
        let sum = reciprocal_sum(&primes);
        let (holds, bits) = policy.decide(|bits| {
            let l2 = crate::certified::ln2(bits);
            Ok(if l2.upper() <= sum {
                Some(true)
            } else if l2.lower() > sum {
                Some(false)
            } else {
                None
            })
        })?;
        Ok(Some(json!({ "n": n, "quotient": q.to_string(), "sum": sum.to_string(), "holds": holds, "bits": bits })))
    });
    let mut qualifying = Vec::new();
    let mut skipped = Vec::new();
    for (r, &n) in results.into_iter().zip(&indices) {
        match r {
            Ok(Some(Value::Null)) => {}
            Ok(Some(v)) => qualifying.push(v),
            Ok(None) => skipped.push(n),
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        }
    }
    let ok = qualifying.iter().all(|v| v["holds"] == json!(true));
    ProofStep::checked(
        id,
        &statement,
        anchor,
        ok,
        json!({
            "range": [2, limit],
            "qualifying_indices": qualifying,
            "vacuous": qualifying.is_empty(),
            "skipped_incomplete": skipped,
        }),
    )
}

pub fn step_imp_bound(cfg: &ProofConfig) -> ProofStep {
    ProofStep::assumed(
        "imp-bound",
        "For d > 10, the sum of 1/(p - 1) over primitive primes p of L_d is at most (0.9 + 2.2 log log d)/d.",
        "reciprocal sums over primitive divisors",
        "reciprocal-sum bound for primitive divisors, from the proof that no Fibonacci number is Lehmer",
        json!({ "instances_checked": "imp-instances", "range": [11, cfg.chain_limit] }),
    )
}

/// A witness prime for a run under constants other than the printed ones.
fn params_failure(id: &str, statement: &str, anchor: &str, reason: String, witness: u64, params: &InequalityParams) -> ProofStep {
    ProofStep::checked(
        id,
        statement,
        anchor,
        false,
        json!({ "invalid_params": reason, "witness_prime": witness, "params": params.record() }),
    )
}

/// Reciprocal-sum checks over the odd indices of a range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImpScan {
    pub checks: Vec<ReciprocalSumCheck>,
    /// Indices whose primitive part did not factor within budget.
    pub skipped_incomplete: Vec<u64>,
}

/// [`reciprocal_sum_bound_check`] at every odd `d` in `[lo, hi]` with `d > 10`.
pub fn imp_scan(
    lo: u64,
    hi: u64,
    c1: &BigRational,
    c2: &BigRational,
    budget: &FactorBudget,
    policy: &PrecisionPolicy,
    workers: usize,
) -> Result<ImpScan> {
    let indices: Vec<u64> = (lo.max(11)..=hi).filter(|d| d % 2 == 1).collect();
    let results = par_map(&indices, workers, |&d| reciprocal_sum_bound_check(d, c1, c2, budget, policy));
    let mut checks = Vec::new();
    let mut skipped_incomplete = Vec::new();
    for (r, &d) in results.into_iter().zip(&indices) {
        match r {
            Ok(c) => checks.push(c),
            Err(e) if is_incomplete(&e) => skipped_incomplete.push(d),
            Err(e) => return Err(e),
        }
    }
    Ok(ImpScan {
        checks,
        skipped_incomplete,
    })
}

pub fn step_imp_instances(cfg: &ProofConfig) -> ProofStep {
    let id = "imp-instances";
    let limit = cfg.chain_limit;
    let statement = format!(
        "For odd 10 < d <= {limit} with L_d completely factored, the sum of 1/(p - 1) over primitive primes of L_d \
         is at most (c1 + c2 log log d)/d."
    );
    let anchor = "reciprocal sums over primitive divisors";
    let params = cfg.params(cfg.base_bits);
    let scan = match imp_scan(11, limit, &cfg.c1, &cfg.c2, &cfg.budget(), &cfg.policy(), cfg.workers) {
        Ok(s) => s,
        Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
    };
    if let Err(reason) = params.validate(cfg.width_cap_log2) {
        let witness = scan
            .checks
            .iter()
            .flat_map(|c| c.primitive_primes.iter())
            .find_map(|p| p.to_u64())
            .unwrap_or(0);
        return params_failure(id, &statement, anchor, reason, witness, &params);
    }
    let bad: Vec<u64> = scan.checks.iter().filter(|c| !c.holds).map(|c| c.index).collect();
    ProofStep::checked(
        id,
        &statement,
        anchor,
        bad.is_empty() && !scan.checks.is_empty(),
        json!({
            "range": [11, limit],
            "params": params.record(),
            "instances": scan.checks,
            "skipped_incomplete": scan.skipped_incomplete,
            "failures": failures(bad),
        }),
    )
}

pub fn step_sum_decomposition(cfg: &ProofConfig) -> ProofStep {
    let id = "sum-decomposition";
    let limit = cfg.chain_limit;
    let statement = format!(
        "For odd n <= {limit}, the primes of L_n are the disjoint union of the primitive primes of L_d over d | n, \
         d > 1, and the sum of 1/(p - 1) splits accordingly."
    );
    let anchor = "reciprocal sums over primitive divisors";
    let indices: Vec<u64> = (3..=limit).filter(|d| d % 2 == 1).collect();
    let (reports, _) = match primitive_reports(cfg, &indices) {
        Ok(x) => x,
        Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
    };
    let lucas = table(SequenceKind::Lucas, limit);
    let budget = cfg.budget();
    let results = par_map(&indices, cfg.workers, |&n| -> Result<Option<Value>> {
        let f = match factor_lucas(n, &lucas, &budget) {
            Ok(f) => f,
            Err(e) if is_incomplete(&e) => return Ok(None),
            Err(e) => return Err(e),
        };
        let whole: BTreeSet<BigUint> = f.primes().cloned().collect();
        let mut union = BTreeSet::new();
        let mut disjoint = true;
        let mut parts = Vec::new();
        let mut split_sum = BigRational::zero();
        for d in divisors_u64(n).into_iter().filter(|&d| d > 1) {
            let Some(rep) = reports.get(&d) else { return Ok(None) };
            let s = reciprocal_sum(&rep.primitive_primes);
            split_sum += &s;
            parts.push(json!({ "d": d, "sum": s.to_string() }));
            for p in &rep.primitive_primes {
                disjoint &= union.insert(p.clone());
            }
        }
        let total = reciprocal_sum(&whole.iter().cloned().collect::<Vec<_>>());
        let holds = disjoint && union == whole && total == split_sum;
        Ok(Some(json!({ "n": n, "total": total.to_string(), "parts": parts, "holds": holds })))
    });
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (r, &n) in results.into_iter().zip(&indices) {
        match r {
            Ok(Some(v)) => rows.push(v),
            Ok(None) => skipped.push(n),
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        }
    }
    let bad: Vec<Value> = rows.iter().filter(|v| v["holds"] != json!(true)).map(|v| v["n"].clone()).collect();
    ProofStep::checked(
        id,
        &statement,
        anchor,
        bad.is_empty(),
        json!({ "range": [3, limit], "rows": rows, "skipped_incomplete": skipped, "failures": failures(bad) }),
    )
}

fn lnln_over(x: u64, bits: u32) -> Result<Enclosure> {
    let e = Enclosure::from_int(x, bits);
    e.ln()?.ln()?.div(&e)
}

pub fn step_monotonicity(cfg: &ProofConfig) -> ProofStep {
    let id = "monotonicity";
    let limit = cfg.monotone_limit;
    let statement = format!("(log log x)/x is strictly decreasing on the integers 11 <= x <= {limit}.");
    let anchor = "reciprocal sums over primitive divisors";
    let policy = cfg.policy();
    let xs: Vec<u64> = (11..limit).collect();
    let results = par_map(&xs, cfg.workers, |&x| {
        policy.decide(|bits| Ok(lnln_over(x + 1, bits)?.compare(&lnln_over(x, bits)?)))
    });
    let mut max_bits = 0;
    let mut bad = Vec::new();
    for (r, &x) in results.into_iter().zip(&xs) {
        match r {
            Ok((ord, bits)) => {
                max_bits = max_bits.max(bits);
                if ord != std::cmp::Ordering::Less {
                    bad.push(x);
                }
            }
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        }
    }
    let sample = |x: u64| lnln_over(x, cfg.base_bits).map(|e| e.record()).ok();
    ProofStep::checked(
        id,
        &statement,
        anchor,
        bad.is_empty(),
        json!({
            "range": [11, limit],
            "comparisons": xs.len(),
            "max_precision_bits": max_bits,
            "value_at_11": sample(11),
            "value_at_limit": sample(limit),
            "failures": failures(bad),
        }),
    )
}

/// Both sides of `log p <= (log alpha / log 2)((p + 1)/p)(c1 + c2 log log p)`.
fn eq9_sides(p: u64, c1: &BigRational, c2: &BigRational, bits: u32) -> Result<(Enclosure, Enclosure)> {
    let params = InequalityParams::new(c1.clone(), c2.clone(), bits);
    let pe = Enclosure::from_int(p, bits);
    let lhs = pe.ln()?;
    let lnln = lhs.ln()?;
    let ratio = Enclosure::from_int(p + 1, bits).div(&pe)?;
    let inner = Enclosure::from_ratio(c1, bits).add(&Enclosure::from_ratio(c2, bits).mul(&lnln));
    let rhs = params.log_alpha.div(&params.log_two)?.mul(&ratio).mul(&inner);
    Ok((lhs, rhs))
}

/// `Some(true)` when `p` certainly satisfies the inequality, `Some(false)`
/// when it certainly does not, `None` when the enclosures overlap.
fn eq9_at(p: u64, c1: &BigRational, c2: &BigRational, bits: u32) -> Result<Option<bool>> {
    let (lhs, rhs) = eq9_sides(p, c1, c2, bits)?;
    Ok(match lhs.compare(&rhs) {
        Some(std::cmp::Ordering::Greater) => Some(false),
        Some(_) => Some(true),
        None => None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InequalityScan {
    pub primes_scanned: usize,
    pub satisfying: Vec<u64>,
    pub max_bits: u32,
}

/// Certified satisfying set of the `p_1` inequality over primes in `[lo, hi]`.
pub fn eq9_scan(lo: u64, hi: u64, c1: &BigRational, c2: &BigRational, policy: &PrecisionPolicy, workers: usize) -> Result<InequalityScan> {
    let primes: Vec<u64> = primes_up_to(hi).into_iter().filter(|&p| p >= lo).collect();
    let results = par_map(&primes, workers, |&p| policy.decide(|bits| eq9_at(p, c1, c2, bits)));
    let mut satisfying = Vec::new();
    let mut max_bits = 0;
    for (r, &p) in results.into_iter().zip(&primes) {
        let (sat, bits) = r?;
        max_bits = max_bits.max(bits);
        if sat {
            satisfying.push(p);
        }
    }
    Ok(InequalityScan {
        primes_scanned: primes.len(),
        satisfying,
        max_bits,
    })
}

pub fn step_inequality_scan(cfg: &ProofConfig) -> ProofStep {
    let id = "inequality-scan";
    let (limit, bound) = (cfg.inequality_limit, cfg.inequality_bound);
    let statement = format!(
        "No prime {bound} <= p <= {limit} satisfies log p <= (log alpha / log 2)((p + 1)/p)(c1 + c2 log log p), \
         so p_1 < {bound}."
    );
    let anchor = "bound on the smallest prime p_1";
    let policy = cfg.policy();
    let params = cfg.params(cfg.base_bits);
    let scan = match eq9_scan(2, limit, &cfg.c1, &cfg.c2, &policy, cfg.workers) {
        Ok(s) => s,
        Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
    };
    if let Err(reason) = params.validate(cfg.width_cap_log2) {
        let printed = eq9_scan(
            2,
            limit,
            &InequalityParams::printed_c1(),
            &InequalityParams::printed_c2(),
            &policy,
            cfg.workers,
        );
        let witness = match printed {
            Ok(p) => {
                let a: BTreeSet<u64> = p.satisfying.into_iter().collect();
                let b: BTreeSet<u64> = scan.satisfying.iter().copied().collect();
                a.symmetric_difference(&b).next().copied().unwrap_or(2)
            }
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        };
        return params_failure(id, &statement, anchor, reason, witness, &params);
    }
    // the verdicts are certified, so every level must reproduce the same set
    let mut levels = Vec::new();
    for bits in policy.levels() {
        let fixed = PrecisionPolicy {
            base_bits: bits,
            max_escalations: 0,
        };
        match eq9_scan(2, bound, &cfg.c1, &cfg.c2, &fixed, cfg.workers) {
            Ok(s) => levels.push(json!({ "bits": bits, "satisfying": s.satisfying })),
            Err(Error::PrecisionCapExceeded { .. }) => levels.push(json!({ "bits": bits, "satisfying": null })),
            Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
        }
    }
    let below: Vec<u64> = scan.satisfying.iter().copied().filter(|&p| p < bound).collect();
    let stable = levels.iter().all(|l| l["satisfying"].is_null() || l["satisfying"] == json!(below));
    let violations: Vec<u64> = scan.satisfying.iter().copied().filter(|&p| p >= bound).collect();
    let sample = |p: u64| {
        eq9_sides(p, &cfg.c1, &cfg.c2, cfg.base_bits)
            .map(|(l, r)| json!({ "p": p, "lhs": l.record(), "rhs": r.record() }))
            .unwrap_or(Value::Null)
    };
    ProofStep::checked(
        id,
        &statement,
        anchor,
        violations.is_empty() && stable,
        json!({
            "range": [2, limit],
            "bound": bound,
            "primes_scanned": scan.primes_scanned,
            "satisfying_set": scan.satisfying,
            "largest_satisfying": scan.satisfying.last(),
            "max_precision_bits": scan.max_bits,
            "levels_below_bound": levels,
            "stable_across_levels": stable,
            "params": params.record(),
            "samples": [sample(5), sample(bound + 1)],
            "failures": failures(violations),
        }),
    )
}

pub fn step_wall_range(cfg: &ProofConfig) -> ProofStep {
    let id = "wall-range";
    let limit = cfg.wall_limit;
    let statement = format!("e_p = 1 for every odd prime p <= {limit}.");
    let anchor = "Wall exponents at p_1";
    let scan = match wall_scan(limit, cfg.workers) {
        Ok(s) => s,
        Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
    };
    let three = wall_exponent(3).ok();
    ProofStep::checked(
        id,
        &statement,
        anchor,
        scan.exceptions.is_empty(),
        json!({
            "limit": scan.limit,
            "primes_scanned": scan.primes_scanned,
            "largest_prime": scan.largest_prime,
            "exceptions": scan.exceptions,
            "covers_bound": limit >= cfg.inequality_bound,
            "wall_exponent_3": three,
        }),
    )
}

pub fn step_wall_beyond(cfg: &ProofConfig) -> ProofStep {
    ProofStep::assumed(
        "wall-beyond",
        &format!("e_p = 1 for every prime {} < p < 10^14.", cfg.wall_limit),
        "Wall exponents at p_1",
        "McIntosh and Roettger: no Wall-Sun-Sun prime below 10^14",
        json!({ "desk_scale_limit": cfg.wall_limit, "checked_in": "wall-range" }),
    )
}

/// `c1/p + c2 log log p / p`.
fn final_rhs(p: u64, c1: &BigRational, c2: &BigRational, bits: u32) -> Result<Enclosure> {
    let pe = Enclosure::from_int(p, bits);
    let lnln = pe.ln()?.ln()?;
    Enclosure::from_ratio(c1, bits).add(&Enclosure::from_ratio(c2, bits).mul(&lnln)).div(&pe)
}

/// The smallest prime `p_1` still possible once `n = p_1 >= 92`.
pub fn final_lower_bound() -> u64 {
    (CLAIMED_MIN_INDEX..).find(|&p| crate::arith::is_prime_u64(p)).expect("primes are unbounded")
}

/// One prime checked against `c1/p + c2 log log p / p < log 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FinalInstance {
    pub p: u64,
    pub holds: bool,
    pub rhs: EnclosureRecord,
}

/// The closing inequality at every prime in `[lo, hi]`.
pub fn final_scan(lo: u64, hi: u64, c1: &BigRational, c2: &BigRational, policy: &PrecisionPolicy, workers: usize) -> Result<Vec<FinalInstance>> {
    let primes: Vec<u64> = primes_up_to(hi).into_iter().filter(|&p| p >= lo).collect();
    par_map(&primes, workers, |&p| {
        let ((holds, rhs), _) = policy.decide(|bits| {
            let rhs = final_rhs(p, c1, c2, bits)?;
            Ok(rhs.compare(&crate::certified::ln2(bits)).map(|o| (o == std::cmp::Ordering::Less, rhs)))
        })?;
        Ok(FinalInstance {
            p,
            holds,
            rhs: rhs.record(),
        })
    })
    .into_iter()
    .collect()
}

pub fn step_final_contradiction(cfg: &ProofConfig) -> ProofStep {
    let id = "final-contradiction";
    let lo = final_lower_bound();
    let hi = cfg.inequality_bound;
    let statement = format!("For every prime {lo} <= p <= {hi}, c1/p + c2 log log p / p < log 2.");
    let anchor = "closing inequality for p_1 >= 97";
    let params = cfg.params(cfg.base_bits);
    let instances = match final_scan(lo, hi, &cfg.c1, &cfg.c2, &cfg.policy(), cfg.workers) {
        Ok(v) => v,
        Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
    };
    let bad: Vec<u64> = instances.iter().filter(|i| !i.holds).map(|i| i.p).collect();
    if let Err(reason) = params.validate(cfg.width_cap_log2) {
        return params_failure(id, &statement, anchor, reason, bad.first().copied().unwrap_or(lo), &params);
    }
    let endpoints: Vec<&FinalInstance> = instances.first().into_iter().chain(instances.last()).collect();
    ProofStep::checked(
        id,
        &statement,
        anchor,
        bad.is_empty() && !instances.is_empty(),
        json!({
            "range": [lo, hi],
            "primes_checked": instances.len(),
            "log_two": params.log_two.record(),
            "endpoints": endpoints,
            "failures": failures(bad),
        }),
    )
}

pub fn step_direct_search(cfg: &ProofConfig) -> ProofStep {
    let id = "direct-search";
    let limit = cfg.search_limit;
    let statement = format!(
        "No L_n with 2 <= n <= {limit} is a Lehmer number, and the index filters agree with L_n for n <= 200."
    );
    let anchor = "direct check of small indices";
    let verdicts = match lehmer_search_lucas(limit, &cfg.budget(), cfg.workers) {
        Ok(v) => v,
        Err(e) => return ProofStep::errored(id, &statement, anchor, &e),
    };
    let summary = summarize(&verdicts);
    let mut by_obstruction: BTreeMap<String, usize> = BTreeMap::new();
    for v in &verdicts {
        *by_obstruction.entry(format!("{:?}", v.obstruction)).or_default() += 1;
    }
    let filter_bad: Vec<u64> = (0..=200).filter(|&n| !filter_claim_holds(n)).collect();
    let undecided: Vec<u64> = verdicts.iter().filter(|v| v.is_lehmer.is_none()).map(|v| v.index).collect();
    let hits: Vec<u64> = verdicts.iter().filter(|v| v.is_lehmer == Some(true)).map(|v| v.index).collect();
    ProofStep::checked(
        id,
        &statement,
        anchor,
        hits.is_empty() && undecided.is_empty() && filter_bad.is_empty(),
        json!({
            "range": [2, limit],
            "summary": summary,
            "obstructions": by_obstruction,
            "lehmer_indices": hits,
            "undecided_indices": undecided,
            "filter_range": [0, 200],
            "filter_failures": filter_bad,
        }),
    )
}
