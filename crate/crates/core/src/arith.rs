//! Exact integer number theory: primality, squarefree factorization,
//! Legendre/Jacobi symbols, the extended symbol for square classes with even
//! local valuation, and its additive F2-valued version.

use crate::error::{Error, Result};

/// An element of Q^x / (Q^x)^2, stored as a signed squarefree integer:
/// `sign * product(support)`. The support is a strictly increasing list of
/// distinct primes (2 allowed).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SquareClass {
    neg: bool,
    support: Vec<u64>,
}

impl SquareClass {
    pub fn one() -> Self {
        SquareClass { neg: false, support: Vec::new() }
    }

    pub fn minus_one() -> Self {
        SquareClass { neg: true, support: Vec::new() }
    }

    /// Class of a nonzero integer. The square part is stripped by factoring;
    /// |x| must fit in 64 bits.
    pub fn from_integer(x: i128) -> Result<Self> {
        if x == 0 {
            return Err(Error::ZeroInput);
        }
        let mut exps: std::collections::BTreeMap<u64, u32> = Default::default();
        let mut rest = u64::try_from(x.unsigned_abs()).map_err(|_| Error::Overflow)?;
        while rest > 1 {
            let f = smallest_factor(rest);
            *exps.entry(f).or_insert(0) += 1;
            rest /= f;
        }
        let support = exps
            .into_iter()
            .filter(|&(_, e)| e % 2 == 1)
            .map(|(p, _)| p)
            .collect();
        Ok(SquareClass { neg: x < 0, support })
    }

    /// Class of a nonzero rational num/den (same as the class of num*den).
    pub fn from_rational(r: &Rational) -> Result<Self> {
        let a = Self::from_integer(r.num)?;
        let b = Self::from_integer(r.den)?;
        Ok(a.mul(&b))
    }

    /// Builds a class from an already-squarefree representative, validating it.
    pub fn from_squarefree(x: i128) -> Result<Self> {
        if x == 0 {
            return Err(Error::ZeroInput);
        }
        let f = factor_squarefree(x.unsigned_abs().try_into().map_err(|_| Error::Overflow)?)?;
        Ok(SquareClass { neg: x < 0, support: f.primes })
    }

    pub fn is_negative(&self) -> bool {
        self.neg
    }

    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn contains(&self, p: u64) -> bool {
        self.support.binary_search(&p).is_ok()
    }

    pub fn is_odd(&self) -> bool {
        !self.contains(2)
    }

    pub fn is_one(&self) -> bool {
        !self.neg && self.support.is_empty()
    }

    /// Signed squarefree representative.
    pub fn rep(&self) -> i128 {
        let mut v: i128 = 1;
        for &p in &self.support {
            v *= p as i128;
        }
        if self.neg {
            -v
        } else {
            v
        }
    }

    /// Group law: symmetric difference of supports, product of signs.
    pub fn mul(&self, other: &Self) -> Self {
        let mut support = Vec::with_capacity(self.support.len() + other.support.len());
        let (mut i, mut j) = (0, 0);
        while i < self.support.len() && j < other.support.len() {
            match self.support[i].cmp(&other.support[j]) {
                std::cmp::Ordering::Less => {
                    support.push(self.support[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    support.push(other.support[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        support.extend_from_slice(&self.support[i..]);
        support.extend_from_slice(&other.support[j..]);
        SquareClass { neg: self.neg ^ other.neg, support }
    }
}

impl std::fmt::Display for SquareClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.rep())
    }
}

/// A positive squarefree integer with its prime factorization. The prime list
/// keeps the order it was built with; `factor_squarefree` produces ascending
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactoredSquarefree {
    pub value: i128,
    pub primes: Vec<u64>,
}

impl FactoredSquarefree {
    /// Validates that `primes` are distinct primes with the given product.
    pub fn new(primes: Vec<u64>) -> Result<Self> {
        let mut value: i128 = 1;
        for (i, &p) in primes.iter().enumerate() {
            if !is_prime(p) {
                return Err(Error::InvalidInput(format!("{p} is not prime")));
            }
            if primes[..i].contains(&p) {
                return Err(Error::NotSquarefree(p as i128));
            }
            value = value.checked_mul(p as i128).ok_or(Error::Overflow)?;
        }
        Ok(FactoredSquarefree { value, primes })
    }
}

fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn powmod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc: u64 = 1;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod(acc, base, m);
        }
        base = mulmod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, valid for all 64-bit inputs with this witness set.
pub fn is_prime(q: u64) -> bool {
    if q < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if q == p {
            return true;
        }
        if q % p == 0 {
            return false;
        }
    }
    let d = q - 1;
    let s = d.trailing_zeros();
    let d = d >> s;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d, q);
        if x == 1 || x == q - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x, q);
            if x == q - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime factor, trial division to 1e6 then Brent's rho.
fn smallest_factor(n: u64) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    let mut p = 3u64;
    while p <= 1_000_000 && p * p <= n {
        if n % p == 0 {
            return p;
        }
        p += 2;
    }
    if p * p > n || is_prime(n) {
        return n;
    }
    // n is an odd composite with no factor below 1e6
    let mut c = 1u64;
    loop {
        if let Some(f) = brent_rho(n, c) {
            // recurse to reach a prime factor
            let g = if is_prime(f) { f } else { smallest_factor(f) };
            let other = n / f;
            let h = if is_prime(other) { other } else { smallest_factor(other) };
            return g.min(h);
        }
        c += 1;
    }
}

fn brent_rho(n: u64, c: u64) -> Option<u64> {
    let f = |x: u64| (mulmod(x, x, n) + c) % n;
    let (mut x, mut ys);
    let mut y = 2u64;
    let mut r = 1u64;
    let mut q = 1u64;
    let mut g = 1u64;
    let m = 128u64;
    while g == 1 {
        x = y;
        for _ in 0..r {
            y = f(y);
        }
        let mut k = 0u64;
        ys = y;
        while k < r && g == 1 {
            ys = y;
            let lim = m.min(r - k);
            for _ in 0..lim {
                y = f(y);
                q = mulmod(q, x.abs_diff(y), n);
            }
            g = gcd(q, n);
            k += m;
        }
        r <<= 1;
        if g == n {
            // backtrack
            g = 1;
            while g == 1 {
                ys = f(ys);
                g = gcd(x.abs_diff(ys), n);
            }
            break;
        }
    }
    if g == n || g == 1 {
        None
    } else {
        Some(g)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Factors a squarefree positive integer; rejects inputs with square factors.
pub fn factor_squarefree(n: u64) -> Result<FactoredSquarefree> {
    if n == 0 {
        return Err(Error::ZeroInput);
    }
    let mut primes = Vec::new();
    let mut rest = n;
    while rest > 1 {
        let p = smallest_factor(rest);
        rest /= p;
        if rest % p == 0 {
            return Err(Error::NotSquarefree(n as i128));
        }
        primes.push(p);
    }
    primes.sort_unstable();
    Ok(FactoredSquarefree { value: n as i128, primes })
}

/// Classical Legendre symbol via Euler's criterion; never factors `a`.
pub fn legendre(a: i128, p: u64) -> Result<i32> {
    if p == 2 || !is_prime(p) {
        return Err(Error::InvalidModulus(p as i128));
    }
    let r = a.rem_euclid(p as i128) as u64;
    if r == 0 {
        return Ok(0);
    }
    let e = powmod(r, (p - 1) / 2, p);
    Ok(if e == 1 { 1 } else { -1 })
}

/// Jacobi symbol by binary reciprocity; 0 iff gcd(a, m) > 1.
pub fn jacobi(a: i128, m: i128) -> Result<i32> {
    if m <= 0 || m % 2 == 0 {
        return Err(Error::InvalidModulus(m));
    }
    let mut num = a.rem_euclid(m) as u128;
    let mut den = m as u128;
    let mut sign = 1i32;
    while num != 0 {
        while num % 2 == 0 {
            num /= 2;
            if den % 8 == 3 || den % 8 == 5 {
                sign = -sign;
            }
        }
        std::mem::swap(&mut num, &mut den);
        if num % 4 == 3 && den % 4 == 3 {
            sign = -sign;
        }
        num %= den;
    }
    Ok(if den == 1 { sign } else { 0 })
}

/// A nonzero-denominator rational, not necessarily reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub num: i128,
    pub den: i128,
}

impl Rational {
    pub fn new(num: i128, den: i128) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        Ok(Rational { num, den })
    }

    pub fn integer(num: i128) -> Self {
        Rational { num, den: 1 }
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }
}

pub fn valuation_int(x: i128, p: u64) -> Result<i32> {
    if x == 0 {
        return Err(Error::ZeroInput);
    }
    if p < 2 {
        return Err(Error::InvalidModulus(p as i128));
    }
    let p = p as i128;
    let mut v = 0;
    let mut x = x;
    while x % p == 0 {
        x /= p;
        v += 1;
    }
    Ok(v)
}

/// ord_p(num) - ord_p(den).
pub fn valuation(x: &Rational, p: u64) -> Result<i32> {
    if x.num == 0 {
        return Err(Error::ZeroInput);
    }
    Ok(valuation_int(x.num, p)? - valuation_int(x.den, p)?)
}

/// Extended symbol: Legendre of the prime-to-p unit part, defined when
/// ord_p(x) is even.
pub fn extended_legendre_rat(x: &Rational, p: u64) -> Result<i32> {
    if p == 2 || !is_prime(p) {
        return Err(Error::InvalidModulus(p as i128));
    }
    if x.num == 0 {
        return Err(Error::ZeroInput);
    }
    let v = valuation(x, p)?;
    if v % 2 != 0 {
        return Err(Error::OddValuation { p });
    }
    let pi = p as i128;
    let mut num = x.num;
    let mut den = x.den;
    while num % pi == 0 {
        num /= pi;
    }
    while den % pi == 0 {
        den /= pi;
    }
    // num/den mod p via inverse
    let d = legendre(num, p)? * legendre(den, p)?;
    Ok(d)
}

/// Extended symbol on a square class: requires p outside the support.
pub fn extended_legendre(x: &SquareClass, p: u64) -> Result<i32> {
    if p == 2 || !is_prime(p) {
        return Err(Error::InvalidModulus(p as i128));
    }
    if x.contains(p) {
        return Err(Error::OddValuation { p });
    }
    legendre(x.rep(), p)
}

/// The additive bracket symbol into F2 at an odd prime modulus:
/// 0 when the extended symbol is +1, 1 when -1.
pub fn bracket_int(a: i128, p: u64) -> Result<u8> {
    let cls = SquareClass::from_integer(a)?;
    bracket_at_prime(&cls, p)
}

fn bracket_at_prime(x: &SquareClass, p: u64) -> Result<u8> {
    let s = extended_legendre(x, p)?;
    Ok(if s == 1 { 0 } else { 1 })
}

/// Bracket at a squarefree odd modulus m given by its prime list: the sum of
/// the per-prime brackets over F2 (i.e. the extended Jacobi symbol folded to
/// {0,1}).
pub fn bracket(x: &SquareClass, m_primes: &[u64]) -> Result<u8> {
    let mut acc = 0u8;
    for &p in m_primes {
        acc ^= bracket_at_prime(x, p)?;
    }
    Ok(acc)
}

/// Integer square root, exact.
pub fn isqrt(n: i128) -> i128 {
    if n < 0 {
        panic!("isqrt of negative");
    }
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as i128;
    while x > 0 && x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

pub fn is_perfect_square(n: i128) -> bool {
    if n < 0 {
        return false;
    }
    let r = isqrt(n);
    r * r == n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality_basics() {
        assert!(is_prime(3));
        assert!(!is_prime(1));
        assert!(is_prime(1619));
        assert!(!is_prime(0));
        assert!(is_prime(2));
        assert!(!is_prime(561)); // Carmichael
        assert!(is_prime(2_147_483_647));
    }

    #[test]
    fn factor_squarefree_examples() {
        assert_eq!(factor_squarefree(33).unwrap().primes, vec![3, 11]);
        assert_eq!(factor_squarefree(66).unwrap().primes, vec![2, 3, 11]);
        assert_eq!(factor_squarefree(9), Err(Error::NotSquarefree(9)));
        assert_eq!(factor_squarefree(1).unwrap().primes, Vec::<u64>::new());
    }

    #[test]
    fn legendre_examples() {
        for p in [3u64, 5, 7, 11, 13, 1619] {
            assert_eq!(legendre(1, p).unwrap(), 1);
        }
        assert_eq!(legendre(3, 11).unwrap(), 1);
        assert_eq!(legendre(2, 3).unwrap(), -1);
        assert_eq!(legendre(0, 7).unwrap(), 0);
        assert_eq!(legendre(14, 7).unwrap(), 0);
        assert!(legendre(1, 4).is_err());
        assert!(legendre(1, 15).is_err());
    }

    #[test]
    fn extended_legendre_examples() {
        let nine_fourths = Rational::new(9, 4).unwrap();
        assert_eq!(extended_legendre_rat(&nine_fourths, 3).unwrap(), 1);
        assert_eq!(extended_legendre_rat(&Rational::integer(12), 11).unwrap(), 1);
        assert_eq!(
            extended_legendre_rat(&Rational::integer(3), 3),
            Err(Error::OddValuation { p: 3 })
        );
        let c3 = SquareClass::from_integer(3).unwrap();
        assert_eq!(extended_legendre(&c3, 3), Err(Error::OddValuation { p: 3 }));
        assert_eq!(extended_legendre(&c3, 11).unwrap(), 1);
    }

    #[test]
    fn extended_legendre_square_class_invariance() {
        // (x*s^2 / p) = (x / p)
        for (num, den) in [(5i128, 1i128), (7, 3), (-2, 9), (11, 49)] {
            for s in [2i128, 3, 5, 12] {
                for p in [7u64, 11, 13, 19] {
                    let x = Rational::new(num, den).unwrap();
                    let xs = Rational::new(num * s * s, den).unwrap();
                    let a = extended_legendre_rat(&x, p);
                    let b = extended_legendre_rat(&xs, p);
                    assert_eq!(a, b, "x={num}/{den} s={s} p={p}");
                }
            }
        }
    }

    #[test]
    fn bracket_examples() {
        // [1/m] = 0 for any odd squarefree m
        let one = SquareClass::one();
        assert_eq!(bracket(&one, &[3, 11, 19]).unwrap(), 0);
        assert_eq!(bracket_int(2, 3).unwrap(), 1);
        assert_eq!(bracket_int(-2, 3).unwrap(), 0);
    }

    #[test]
    fn bracket_facts_for_3_mod_8_primes() {
        // For p = 3 mod 8: [-1/p] = 1, [2/p] = 1, [-2/p] = 0.
        let mut checked = 0;
        for p in (3u64..10_000).step_by(8) {
            if !is_prime(p) {
                continue;
            }
            assert_eq!(bracket_int(-1, p).unwrap(), 1, "p={p}");
            assert_eq!(bracket_int(2, p).unwrap(), 1, "p={p}");
            assert_eq!(bracket_int(-2, p).unwrap(), 0, "p={p}");
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn bracket_is_additive() {
        // 1000 fixed pseudo-random pairs
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let mut done = 0;
        while done < 1000 {
            let a = (rng() % 2000) as i128 - 1000;
            let b = (rng() % 2000) as i128 - 1000;
            let p = [3u64, 11, 19, 43, 59, 67][(rng() % 6) as usize];
            if a == 0 || b == 0 || a % p as i128 == 0 || b % p as i128 == 0 {
                continue;
            }
            let ab = bracket_int(a * b, p).unwrap();
            let sum = bracket_int(a, p).unwrap() ^ bracket_int(b, p).unwrap();
            assert_eq!(ab, sum, "a={a} b={b} p={p}");
            done += 1;
        }
    }

    #[test]
    fn jacobi_examples() {
        assert_eq!(jacobi(7, 1).unwrap(), 1);
        assert_eq!(jacobi(2, 33).unwrap(), 1);
        assert_eq!(jacobi(5, 21).unwrap(), 1);
        assert_eq!(jacobi(3, 9).unwrap(), 0);
        assert_eq!(jacobi(1001, 9907).unwrap(), -1);
        assert!(jacobi(3, 4).is_err());
        assert!(jacobi(3, -5).is_err());
    }

    #[test]
    fn jacobi_matches_legendre_factorization() {
        let mut state = 0xdeadbeefcafef00du64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..2000 {
            let m = (rng() % 100_000) | 1;
            let a = (rng() % 200_001) as i128 - 100_000;
            let fac = {
                let mut primes = Vec::new();
                let mut rest = m;
                let mut p = 3;
                while rest > 1 {
                    if rest % p == 0 {
                        let mut e = 0;
                        while rest % p == 0 {
                            rest /= p;
                            e += 1;
                        }
                        primes.push((p, e));
                    }
                    p += 2;
                    if p * p > rest && rest > 1 {
                        primes.push((rest, 1));
                        break;
                    }
                }
                primes
            };
            let direct: i32 = fac
                .iter()
                .map(|&(p, e)| {
                    let l = legendre(a, p).unwrap();
                    l.pow(e)
                })
                .product();
            assert_eq!(jacobi(a, m as i128).unwrap(), direct, "a={a} m={m}");
        }
    }

    #[test]
    fn jacobi_reciprocity_and_supplements() {
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        let mut done = 0;
        while done < 1000 {
            let a = (rng() % 99_999) | 1;
            let b = (rng() % 99_999) | 1;
            if gcd(a, b) != 1 {
                continue;
            }
            let (a, b) = (a as i128, b as i128);
            // reciprocity
            let lhs = jacobi(a, b).unwrap() * jacobi(b, a).unwrap();
            let rhs = if a % 4 == 3 && b % 4 == 3 { -1 } else { 1 };
            assert_eq!(lhs, rhs, "a={a} b={b}");
            // supplements
            let m1 = jacobi(-1, b).unwrap();
            assert_eq!(m1, if b % 4 == 1 { 1 } else { -1 });
            let two = jacobi(2, b).unwrap();
            assert_eq!(two, if b % 8 == 1 || b % 8 == 7 { 1 } else { -1 });
            // multiplicativity in the top argument
            let ab = jacobi(a * b, b + 2).unwrap();
            if ab != 0 {
                assert_eq!(ab, jacobi(a, b + 2).unwrap() * jacobi(b, b + 2).unwrap());
            }
            done += 1;
        }
    }

    #[test]
    fn valuation_examples() {
        assert_eq!(valuation(&Rational::integer(12), 2).unwrap(), 2);
        assert_eq!(valuation(&Rational::new(9, 4).unwrap(), 3).unwrap(), 2);
        assert_eq!(valuation(&Rational::integer(5), 3).unwrap(), 0);
        assert_eq!(valuation(&Rational::new(0, 1).unwrap(), 3), Err(Error::ZeroInput));
        assert_eq!(valuation(&Rational::new(9, 4).unwrap(), 2).unwrap(), -2);
    }

    #[test]
    fn square_class_group_law() {
        let a = SquareClass::from_integer(12).unwrap(); // class of 3
        assert_eq!(a.rep(), 3);
        let b = SquareClass::from_integer(-6).unwrap();
        let ab = a.mul(&b);
        assert_eq!(ab.rep(), -2); // 3 * -6 = -18 ~ -2
        // self-inverse
        assert!(a.mul(&a).is_one());
        // commutative/associative spot checks
        let c = SquareClass::from_integer(10).unwrap();
        assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        assert_eq!(a.mul(&c), c.mul(&a));
    }
}
