//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line per
//! criterion, and exits nonzero if any failed.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde_json::Value;

use lucas_lehmer::apparition::{
    first_index_divisible, has_primitive_divisor, primitive_congruence_check, rank_divides_iff, wall_scan,
};
use lucas_lehmer::arith::{
    factorize, primes_up_to, product_of_first_odd_primes, totient, FactorBudget,
};
use lucas_lehmer::certified::PrecisionPolicy;
use lucas_lehmer::cli::dispatch;
use lucas_lehmer::lehmer::filter_claim_holds;
use lucas_lehmer::proof::{eq9_scan, final_scan, imp_scan, run_full_proof, InequalityParams, ProofConfig, StepStatus};
use lucas_lehmer::sequences::{pair_exact, SequenceKind};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {:.2?}, limit {:.0?}", elapsed, limit))
}

fn run_cli(args: &[&str]) -> lucas_lehmer::cli::Outcome {
    let mut argv = vec!["lucas-lehmer"];
    argv.extend_from_slice(args);
    dispatch(argv)
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4).min(16)
}

/// Iterative recurrence, the oracle for fast doubling.
fn recurrence(kind: SequenceKind, n: usize) -> Vec<BigInt> {
    let (a, b) = kind.seeds();
    let mut v = vec![BigInt::from(a), BigInt::from(b)];
    while v.len() <= n {
        let k = v.len();
        let next = &v[k - 1] + &v[k - 2];
        v.push(next);
    }
    v.truncate(n + 1);
    v
}

fn c1_mod8_table() -> Outcome {
    let t = Instant::now();
    let out = run_cli(&["seq", "--period", "--modulus", "8", "--format", "json"]);
    let elapsed = t.elapsed();
    ensure(out.code == 0, format!("exit {}", out.code))?;
    let v: Value = serde_json::from_str(&out.stdout).map_err(|e| e.to_string())?;
    let period = v["result"]["period"]["period"].as_u64();
    let residues: Vec<u64> = v["result"]["period"]["residues"]
        .as_array()
        .ok_or("no residues")?
        .iter()
        .filter_map(Value::as_u64)
        .collect();
    ensure(residues == [2, 1, 3, 4, 7, 3, 2, 5, 7, 4, 3, 7, 2, 1], format!("residues {residues:?}"))?;
    ensure(period == Some(12), format!("period {period:?}"))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("14 residues and period 12 reproduced in {elapsed:.2?}"))
}

fn c2_identities() -> Outcome {
    let t = Instant::now();
    let n = 2000usize;
    let l = recurrence(SequenceKind::Lucas, n);
    let f = recurrence(SequenceKind::Fibonacci, n);
    let sign = |k: usize| if k % 2 == 0 { BigInt::one() } else { -BigInt::one() };
    for k in 0..=n {
        ensure(&l[k] * &l[k] - BigInt::from(5) * &f[k] * &f[k] == BigInt::from(4) * sign(k), format!("square identity at {k}"))?;
        if k % 2 == 0 {
            let h = &l[k / 2];
            ensure(l[k] == h * h - BigInt::from(2) * sign(k / 2), format!("even identity at {k}"))?;
        } else {
            let (up, down) = ((k + 1) / 2, (k - 1) / 2);
            let rhs = if k % 4 == 1 { BigInt::from(5) * &f[up] * &f[down] } else { &l[up] * &l[down] };
            ensure(&l[k] - 1 == rhs, format!("odd identity at {k}"))?;
            ensure(f[up].gcd(&f[down]).is_one(), format!("gcd at {k}"))?;
        }
    }
    let lib = lucas_lehmer::proof::step_identities(n as u64);
    ensure(lib.status == StepStatus::Verified, "library identity step did not verify")?;
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("all identities and gcd(F_(n+1)/2, F_(n-1)/2) = 1 hold for n <= {n} in {elapsed:.2?}"))
}

fn c3_constants() -> Outcome {
    let t = Instant::now();
    let mut oracle = BigUint::one();
    let mut found = 0;
    let mut m = 3u64;
    while found < 15 {
        if (2..m).take_while(|d| d * d <= m).all(|d| m % d != 0) {
            oracle *= m;
            found += 1;
        }
        m += 2;
    }
    let product = product_of_first_odd_primes(15).map_err(|e| e.to_string())?;
    ensure(product == oracle, format!("{product} != {oracle}"))?;
    ensure(product > BigUint::from(16_000_000_000_000_000_000u64), "product below 1.6e19")?;
    let l = recurrence(SequenceKind::Lucas, 200);
    let target = BigInt::from(product.clone());
    let minimal = l.iter().enumerate().skip(1).find(|(_, v)| **v >= target).map(|(i, _)| i);
    ensure(minimal == Some(92), format!("minimal index {minimal:?}"))?;
    let step = lucas_lehmer::proof::step_constants(&ProofConfig::default());
    ensure(step.status == StepStatus::Verified, "constants step did not verify")?;
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("product {product} > 1.6e19, minimal index 92, in {elapsed:.2?}"))
}

fn c4_wall_scan() -> Outcome {
    let t = Instant::now();
    let mut first = None;
    for w in [1, 4, 16] {
        let scan = wall_scan(100_000, w).map_err(|e| e.to_string())?;
        ensure(scan.exceptions.is_empty(), format!("exceptions with {w} workers: {:?}", scan.exceptions))?;
        match &first {
            None => first = Some(scan),
            Some(s) => ensure(*s == scan, format!("{w} workers disagree"))?,
        }
    }
    let scan = first.expect("ran");
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(300))?;
    Ok(format!(
        "e_p = 1 for all {} odd primes up to 10^5, identical for 1/4/16 workers, in {elapsed:.2?}",
        scan.primes_scanned
    ))
}

fn c5_primitive_divisors() -> Outcome {
    let t = Instant::now();
    let budget = FactorBudget::default();
    let mut exceptions = Vec::new();
    let mut cross_checked = 0;
    for d in 2..=300u64 {
        let has = has_primitive_divisor(d, SequenceKind::Lucas).map_err(|e| e.to_string())?;
        if !has {
            exceptions.push(d);
        }
        // independent route where L_d factors: a prime is primitive iff no
        // earlier term vanishes modulo it
        let value = pair_exact(d).lucas;
        if value.bits() <= 80 {
            let f = factorize(&value, &budget).map_err(|e| e.to_string())?;
            if f.complete {
                let brute = f.primes().any(|p| first_index_divisible(SequenceKind::Lucas, p, d) == Some(d));
                ensure(brute == has, format!("d = {d}: gcd route {has}, factor route {brute}"))?;
                cross_checked += 1;
            }
        }
    }
    ensure(exceptions == [6], format!("exception set {exceptions:?}"))?;
    let mut instances = 0;
    let mut skipped = 0;
    for d in (11..=101u64).step_by(2) {
        match primitive_congruence_check(d, &budget) {
            Ok(c) => {
                ensure(c.holds, format!("congruence fails at d = {d}"))?;
                for i in &c.instances {
                    let symbol = match (&i.prime % 5u32).to_u64() {
                        Some(1 | 4) => 1,
                        Some(2 | 3) => -1,
                        _ => 0,
                    };
                    let expected = if symbol == 1 { 1 % d } else { d - 1 };
                    ensure(
                        symbol == i.symbol && (&i.prime % d).to_u64() == Some(expected),
                        format!("d = {d}, p = {}: symbol {symbol}, residue {}", i.prime, &i.prime % d),
                    )?;
                    instances += 1;
                }
            }
            Err(lucas_lehmer::Error::IncompleteFactorization { .. }) => skipped += 1,
            Err(e) => return Err(e.to_string()),
        }
    }
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(600))?;
    Ok(format!(
        "exception set {{6}} for 2 <= d <= 300 ({cross_checked} cross-checked by factoring); \
         {instances} congruence instances hold for odd 11 <= d <= 101, {skipped} skipped; {elapsed:.2?}"
    ))
}

fn c6_imp_instances() -> Outcome {
    let t = Instant::now();
    let scan = imp_scan(
        11,
        101,
        &InequalityParams::printed_c1(),
        &InequalityParams::printed_c2(),
        &FactorBudget::default(),
        &PrecisionPolicy::default(),
        workers(),
    )
    .map_err(|e| e.to_string())?;
    for c in &scan.checks {
        ensure(c.holds, format!("bound fails at d = {}", c.index))?;
        let lower: BigRational = lucas_lehmer::json::parse_rational(&c.rhs.bounds[0])?;
        ensure(c.lhs <= lower, format!("d = {}: exact LHS not below the enclosure", c.index))?;
    }
    ensure(!scan.checks.is_empty(), "nothing checked")?;
    Ok(format!(
        "bound holds at {} odd indices in (10, 101], {} skipped as incomplete, in {:.2?}",
        scan.checks.len(),
        scan.skipped_incomplete.len(),
        t.elapsed()
    ))
}

fn c7_inequality_scan() -> Outcome {
    let t = Instant::now();
    let (c1, c2) = (InequalityParams::printed_c1(), InequalityParams::printed_c2());
    let policy = PrecisionPolicy::default();
    let scan = eq9_scan(2, 100_000, &c1, &c2, &policy, workers()).map_err(|e| e.to_string())?;
    let above: Vec<u64> = scan.satisfying.iter().copied().filter(|&p| p >= 1800).collect();
    ensure(above.is_empty(), format!("satisfied at {above:?}"))?;
    let elapsed = t.elapsed();
    // the set must not move when every prime is re-decided at a fixed higher precision
    for bits in policy.levels().into_iter().skip(1) {
        let fixed = PrecisionPolicy {
            base_bits: bits,
            max_escalations: 0,
        };
        let again = eq9_scan(2, 1800, &c1, &c2, &fixed, workers()).map_err(|e| e.to_string())?;
        ensure(again.satisfying == scan.satisfying, format!("set at {bits} bits is {:?}", again.satisfying))?;
    }
    within(elapsed, Duration::from_secs(60))?;
    Ok(format!(
        "no prime in [1800, 10^5] satisfies it; satisfying set {:?}, stable at every precision level; scan {elapsed:.2?}",
        scan.satisfying
    ))
}

fn c8_final_contradiction() -> Outcome {
    let t = Instant::now();
    let inst = final_scan(
        97,
        1800,
        &InequalityParams::printed_c1(),
        &InequalityParams::printed_c2(),
        &PrecisionPolicy::default(),
        workers(),
    )
    .map_err(|e| e.to_string())?;
    let bad: Vec<u64> = inst.iter().filter(|i| !i.holds).map(|i| i.p).collect();
    ensure(bad.is_empty(), format!("fails at {bad:?}"))?;
    ensure(inst.len() == primes_up_to(1800).iter().filter(|&&p| p >= 97).count(), "prime count mismatch")?;
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("{} primes in [97, 1800], every enclosure strictly below log 2, in {elapsed:.2?}", inst.len()))
}

fn c9_direct_search() -> Outcome {
    let t = Instant::now();
    let out = run_cli(&["lehmer-search", "--max-index", "90", "--format", "json"]);
    ensure(out.code == 0, format!("exit {}: {}", out.code, out.stderr))?;
    let lines: Vec<Value> = out
        .stdout
        .lines()
        .map(serde_json::from_str)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let verdicts = &lines[..lines.len() - 1];
    ensure(verdicts.len() == 89, format!("{} verdicts", verdicts.len()))?;
    for v in verdicts {
        ensure(v["is_lehmer"] == Value::Bool(false), format!("index {} is {}", v["index"], v["is_lehmer"]))?;
    }
    let filter_bad: Vec<u64> = (0..=200).filter(|&n| !filter_claim_holds(n)).collect();
    ensure(filter_bad.is_empty(), format!("filter contradicts L_n at {filter_bad:?}"))?;
    let elapsed = t.elapsed();
    within(elapsed, Duration::from_secs(600))?;
    Ok(format!("89 indices, 0 Lehmer, 0 undecided; filter sound for n <= 200; {elapsed:.2?}"))
}

fn c10_oracles() -> Outcome {
    let t = Instant::now();
    let budget = FactorBudget::default();
    let ns: Vec<u64> = (1..=10_000).collect();
    let chunk = ns.len().div_ceil(workers());
    let bad: Vec<u64> = std::thread::scope(|s| {
        let hs: Vec<_> = ns
            .chunks(chunk)
            .map(|c| {
                let budget = &budget;
                s.spawn(move || {
                    c.iter()
                        .copied()
                        .filter(|&n| {
                            let brute = (1..=n).filter(|k| k.gcd(&n) == 1).count() as u64;
                            let f = factorize(&BigUint::from(n), budget).unwrap();
                            totient(&f).unwrap().to_u64() != Some(brute)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        hs.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    ensure(bad.is_empty(), format!("totient mismatch at {bad:?}"))?;
    let l = recurrence(SequenceKind::Lucas, 10_000);
    let f = recurrence(SequenceKind::Fibonacci, 10_000);
    for n in 0..=10_000u64 {
        let p = pair_exact(n);
        ensure(
            BigInt::from(p.lucas) == l[n as usize] && BigInt::from(p.fib) == f[n as usize],
            format!("fast doubling differs at {n}"),
        )?;
    }
    let mut pairs = 0u64;
    for p in primes_up_to(500).into_iter().filter(|&p| p != 2) {
        for k in 1..=10_000u64 {
            rank_divides_iff(p, k).map_err(|e| e.to_string())?;
            pairs += 1;
        }
    }
    Ok(format!(
        "totient = coprime count for n <= 10^4; fast doubling = recurrence for n <= 10^4; \
         rank_divides_iff on {pairs} (p, k) pairs; {:.2?}",
        t.elapsed()
    ))
}

fn full_certificate_json() -> Result<String, String> {
    let out = run_cli(&["proof", "--full", "--format", "json"]);
    ensure(out.code == 0, format!("exit {}: {}", out.code, out.stderr))?;
    Ok(out.stdout)
}

fn c11_determinism() -> Outcome {
    let t = Instant::now();
    let a = full_certificate_json()?;
    let b = full_certificate_json()?;
    ensure(a == b, "certificates differ")?;
    let v: Value = serde_json::from_str(&a).map_err(|e| e.to_string())?;
    ensure(v["status"] == "verified_with_assumptions", format!("status {}", v["status"]))?;
    let assumed: BTreeSet<&str> = v["assumptions"].as_array().ok_or("no assumptions")?.iter().filter_map(Value::as_str).collect();
    let expected: BTreeSet<&str> = ["omega-bound", "primitive-divisors", "imp-bound", "wall-beyond"].into();
    ensure(assumed == expected, format!("assumptions {assumed:?}"))?;
    Ok(format!(
        "two proof --full runs give identical {}-byte certificates, status verified_with_assumptions; {:.2?}",
        a.len(),
        t.elapsed()
    ))
}

fn c12_negative_control() -> Outcome {
    let t = Instant::now();
    let cfg = ProofConfig {
        c1: BigRational::zero(),
        ..ProofConfig::default()
    };
    let cert = run_full_proof(&cfg).map_err(|e| e.to_string())?;
    ensure(!cert.failed_steps.is_empty(), "no step failed")?;
    let witnessed: Vec<String> = cert
        .steps
        .iter()
        .filter(|s| s.status == StepStatus::Failed && s.evidence["witness_prime"].as_u64().is_some_and(|p| p > 1))
        .map(|s| format!("{} (witness {})", s.id, s.evidence["witness_prime"]))
        .collect();
    ensure(!witnessed.is_empty(), "failed steps carry no witness prime")?;
    Ok(format!("c1 = 0 fails {}; {:.2?}", witnessed.join(", "), t.elapsed()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("mod-8 table", c1_mod8_table),
        ("identity suite", c2_identities),
        ("constants step", c3_constants),
        ("wall scan", c4_wall_scan),
        ("primitive divisors", c5_primitive_divisors),
        ("reciprocal-sum instances", c6_imp_instances),
        ("p_1 inequality scan", c7_inequality_scan),
        ("final contradiction", c8_final_contradiction),
        ("direct search", c9_direct_search),
        ("oracle equivalences", c10_oracles),
        ("determinism", c11_determinism),
        ("negative control", c12_negative_control),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
