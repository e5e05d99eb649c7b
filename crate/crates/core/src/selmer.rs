//! Enumeration of Q(S,2) and the phi/psi Selmer groups of the congruent
//! number curves, computed from closed-form local conditions. The independent
//! local-search oracle lives in `localsolve`; the two are compared wholesale
//! in the test suite.

use crate::arith::{extended_legendre, FactoredSquarefree, SquareClass};
use crate::error::{Error, Result};

/// A descent instance: n = m (odd) or n = 2m, with m = p_1 ... p_k odd
/// squarefree and k >= 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescentSetup {
    pub n: i128,
    pub m: i128,
    pub even: bool,
    pub primes: FactoredSquarefree,
    pub k: usize,
}

impl DescentSetup {
    pub fn new(n: i128) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput(format!("n must be positive, got {n}")));
        }
        let f = crate::arith::factor_squarefree(u64::try_from(n).map_err(|_| Error::Overflow)?)?;
        let even = n % 2 == 0;
        let odd_primes: Vec<u64> = f.primes.iter().copied().filter(|&p| p != 2).collect();
        Self::from_parts(n, even, odd_primes)
    }

    /// Builds a setup with an explicit odd-prime order (used to check that
    /// verdicts are invariant under permutation of the prime list).
    pub fn with_prime_order(n: i128, odd_primes: Vec<u64>) -> Result<Self> {
        let canonical = Self::new(n)?;
        let mut sorted = odd_primes.clone();
        sorted.sort_unstable();
        if sorted != canonical.primes.primes {
            return Err(Error::InvalidInput("prime list does not match n".into()));
        }
        Self::from_parts(n, canonical.even, odd_primes)
    }

    fn from_parts(n: i128, even: bool, odd_primes: Vec<u64>) -> Result<Self> {
        if odd_primes.is_empty() {
            return Err(Error::InvalidInput(format!(
                "n = {n} has no odd prime factor (k >= 1 required)"
            )));
        }
        let primes = FactoredSquarefree::new(odd_primes)?;
        let m = primes.value;
        let k = primes.primes.len();
        Ok(DescentSetup { n, m, even, primes, k })
    }

    /// The odd part of n/d for a divisor class d, as a square class.
    pub fn n_class(&self) -> SquareClass {
        SquareClass::from_squarefree(self.n).expect("n is squarefree")
    }

    /// All p_i = 3 (mod 8), as Theorem-style instances require.
    pub fn all_primes_3_mod_8(&self) -> bool {
        self.primes.primes.iter().all(|&p| p % 8 == 3)
    }
}

/// Which isogeny a Selmer set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Side {
    Phi,
    Psi,
}

/// A finite subgroup of Q(S,2), verified on construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelmerSet {
    pub side: Side,
    pub elements: Vec<SquareClass>,
    pub dim: u32,
}

impl SelmerSet {
    /// Checks the identity, closure under multiplication, and that the size
    /// is the expected power of two before accepting the element list.
    pub fn new(side: Side, mut elements: Vec<SquareClass>) -> Result<Self> {
        elements.sort();
        elements.dedup();
        if !elements.iter().any(|e| e.is_one()) {
            return Err(Error::NotSubgroup("identity class missing".into()));
        }
        for a in &elements {
            for b in &elements {
                let ab = a.mul(b);
                if elements.binary_search(&ab).is_err() {
                    return Err(Error::NotSubgroup(format!(
                        "{} * {} = {} escapes the set",
                        a,
                        b,
                        ab
                    )));
                }
            }
        }
        let dim = f2_dim(&elements)?;
        if 1usize << dim != elements.len() {
            return Err(Error::NotSubgroup(format!(
                "size {} is not 2^dim for dim {}",
                elements.len(),
                dim
            )));
        }
        Ok(SelmerSet { side, elements, dim })
    }

    pub fn contains(&self, c: &SquareClass) -> bool {
        self.elements.binary_search(c).is_ok()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// A minimal generating set: greedy basis extraction over the exponent
    /// vectors on the basis (-1, p_1, p_2, ...) of the support universe.
    pub fn generators(&self) -> Vec<SquareClass> {
        let mut primes: Vec<u64> = Vec::new();
        for e in &self.elements {
            for &p in e.support() {
                if !primes.contains(&p) {
                    primes.push(p);
                }
            }
        }
        primes.sort_unstable();
        let bits_of = |c: &SquareClass| -> u64 {
            let mut b = 0u64;
            if c.is_negative() {
                b |= 1;
            }
            for &p in c.support() {
                let idx = primes.binary_search(&p).unwrap();
                b |= 1 << (idx + 1);
            }
            b
        };
        let mut basis: Vec<u64> = Vec::new();
        let mut gens = Vec::new();
        for e in &self.elements {
            let mut v = bits_of(e);
            for &row in &basis {
                let msb = 63 - row.leading_zeros();
                if (v >> msb) & 1 == 1 {
                    v ^= row;
                }
            }
            if v != 0 {
                basis.push(v);
                basis.sort_unstable_by_key(|r| std::cmp::Reverse(*r));
                gens.push(e.clone());
            }
        }
        gens
    }
}

/// F2-dimension of the subgroup generated by the given classes.
fn f2_dim(elements: &[SquareClass]) -> Result<u32> {
    // collect the support universe
    let mut primes: Vec<u64> = Vec::new();
    for e in elements {
        for &p in e.support() {
            if !primes.contains(&p) {
                primes.push(p);
            }
        }
    }
    primes.sort_unstable();
    let width = primes.len() + 1;
    if width > 64 {
        return Err(Error::DimensionTooLarge(width));
    }
    let mut rows: Vec<u64> = elements
        .iter()
        .map(|e| {
            let mut b = 0u64;
            if e.is_negative() {
                b |= 1;
            }
            for &p in e.support() {
                let idx = primes.binary_search(&p).unwrap();
                b |= 1 << (idx + 1);
            }
            b
        })
        .collect();
    // gaussian elimination on the row list
    let mut rank = 0u32;
    for col in 0..width {
        if let Some(pos) = (rank as usize..rows.len()).find(|&r| (rows[r] >> col) & 1 == 1) {
            rows.swap(rank as usize, pos);
            let pivot = rows[rank as usize];
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank as usize && (*row >> col) & 1 == 1 {
                    *row ^= pivot;
                }
            }
            rank += 1;
        }
    }
    Ok(rank)
}

/// All 2^(k+2) square classes +-d with 0 < d | 2m: the group Q(S,2).
pub fn enumerate_qs2(setup: &DescentSetup) -> Vec<SquareClass> {
    let mut gens: Vec<u64> = setup.primes.primes.clone();
    gens.push(2);
    let mut out = Vec::with_capacity(2 << gens.len());
    for mask in 0u32..(1 << gens.len()) {
        let mut support: Vec<u64> = gens
            .iter()
            .enumerate()
            .filter(|&(i, _)| (mask >> i) & 1 == 1)
            .map(|(_, &p)| p)
            .collect();
        support.sort_unstable();
        for neg in [false, true] {
            let mut rep: i128 = if neg { -1 } else { 1 };
            for &p in &support {
                rep *= p as i128;
            }
            out.push(SquareClass::from_squarefree(rep).expect("squarefree by construction"));
        }
    }
    out
}

/// Is x = +-1 (mod 8) in the square-class sense: the squarefree representative
/// must be odd and congruent to 1 or 7 mod 8.
fn class_is_pm1_mod8(c: &SquareClass) -> bool {
    if !c.is_odd() {
        return false;
    }
    matches!(c.rep().rem_euclid(8), 1 | 7)
}

fn ext_is_one(x: &SquareClass, p: u64) -> Result<bool> {
    Ok(extended_legendre(x, p)? == 1)
}

/// phi-side membership conditions for one class.
fn phi_member(setup: &DescentSetup, d: &SquareClass) -> Result<bool> {
    let n_cls = setup.n_class();
    let n_over_d = n_cls.mul(d);
    if setup.even {
        // n = 2m: d > 0 odd, no prime factor 3 mod 4, and unit conditions at
        // the odd primes of d and n/d
        if d.is_negative() || !d.is_odd() {
            return Ok(false);
        }
        if d.support().iter().any(|&p| p % 4 == 3) {
            return Ok(false);
        }
        for &p in d.support() {
            if !ext_is_one(&n_over_d, p)? {
                return Ok(false);
            }
        }
        for &p in &setup.primes.primes {
            if !d.contains(p) && !ext_is_one(d, p)? {
                return Ok(false);
            }
        }
        Ok(true)
    } else {
        // n odd
        if d.is_negative() {
            return Ok(false);
        }
        if d.support().iter().any(|&p| p != 2 && p % 4 == 3) {
            return Ok(false);
        }
        for &p in d.support() {
            if p == 2 {
                continue;
            }
            if !ext_is_one(&n_over_d, p)? {
                return Ok(false);
            }
        }
        // odd p | (2n/d) is exactly p | n with p not dividing d
        for &p in &setup.primes.primes {
            if !d.contains(p) && !ext_is_one(d, p)? {
                return Ok(false);
            }
        }
        if !d.is_odd() && !matches!(setup.n.rem_euclid(8), 1 | 7) {
            return Ok(false);
        }
        Ok(true)
    }
}

/// psi-side membership conditions for one class.
fn psi_member(setup: &DescentSetup, d: &SquareClass) -> Result<bool> {
    let n_cls = setup.n_class();
    let n_over_d = n_cls.mul(d);
    if setup.even {
        for &p in d.support() {
            if p % 4 == 1 && !ext_is_one(&n_over_d, p)? {
                return Ok(false);
            }
        }
        for &p in &setup.primes.primes {
            if p % 4 == 1 && !d.contains(p) && !ext_is_one(d, p)? {
                return Ok(false);
            }
        }
        Ok(true)
    } else {
        if !class_is_pm1_mod8(d) && !class_is_pm1_mod8(&n_over_d) {
            return Ok(false);
        }
        for &p in d.support() {
            if p % 4 == 1 && !ext_is_one(&n_over_d, p)? {
                return Ok(false);
            }
        }
        for &p in &setup.primes.primes {
            if p % 4 == 1 && !d.contains(p) && !ext_is_one(d, p)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn phi_selmer(setup: &DescentSetup) -> Result<SelmerSet> {
    let mut elements = Vec::new();
    for d in enumerate_qs2(setup) {
        if phi_member(setup, &d)? {
            elements.push(d);
        }
    }
    SelmerSet::new(Side::Phi, elements)
}

pub fn psi_selmer(setup: &DescentSetup) -> Result<SelmerSet> {
    let mut elements = Vec::new();
    for d in enumerate_qs2(setup) {
        if psi_member(setup, &d)? {
            elements.push(d);
        }
    }
    SelmerSet::new(Side::Psi, elements)
}

/// Exposes the membership predicates for the oracle-equivalence tests.
pub fn phi_condition(setup: &DescentSetup, d: &SquareClass) -> Result<bool> {
    phi_member(setup, d)
}

pub fn psi_condition(setup: &DescentSetup, d: &SquareClass) -> Result<bool> {
    psi_member(setup, d)
}

/// Support vector of a positive odd divisor class over the setup's primes,
/// in the setup's prime order.
pub fn support_vector(setup: &DescentSetup, d: &SquareClass) -> Result<crate::f2linalg::F2Vec> {
    let mut v = crate::f2linalg::F2Vec::zero(setup.k)?;
    for (i, &p) in setup.primes.primes.iter().enumerate() {
        if d.contains(p) {
            v.set(i, true);
        }
    }
    Ok(v)
}

/// Rebuilds the positive odd divisor class from a support vector.
pub fn class_from_vector(setup: &DescentSetup, v: &crate::f2linalg::F2Vec) -> SquareClass {
    let mut rep: i128 = 1;
    for (i, &p) in setup.primes.primes.iter().enumerate() {
        if v.get(i) {
            rep *= p as i128;
        }
    }
    SquareClass::from_squarefree(rep).expect("product of distinct primes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qs2_enumeration() {
        let s3 = DescentSetup::new(3).unwrap();
        let q = enumerate_qs2(&s3);
        assert_eq!(q.len(), 8);
        let reps: std::collections::BTreeSet<i128> = q.iter().map(|c| c.rep()).collect();
        assert_eq!(reps, [1, -1, 2, -2, 3, -3, 6, -6].into_iter().collect());
        let s33 = DescentSetup::new(33).unwrap();
        assert_eq!(enumerate_qs2(&s33).len(), 16);
    }

    #[test]
    fn setup_rejects_degenerate() {
        assert!(DescentSetup::new(1).is_err());
        assert!(DescentSetup::new(2).is_err());
        assert!(DescentSetup::new(12).is_err());
        assert!(DescentSetup::new(0).is_err());
    }

    #[test]
    fn phi_examples() {
        let s3 = DescentSetup::new(3).unwrap();
        let phi = phi_selmer(&s3).unwrap();
        assert_eq!(phi.len(), 1);
        assert!(phi.contains(&SquareClass::one()));

        let s33 = DescentSetup::new(33).unwrap();
        let phi33 = phi_selmer(&s33).unwrap();
        assert_eq!(phi33.len(), 1, "S^phi(33) = {{1}}");

        let s66 = DescentSetup::new(66).unwrap();
        let phi66 = phi_selmer(&s66).unwrap();
        assert_eq!(phi66.len(), 1);
    }

    #[test]
    fn psi_examples() {
        let s3 = DescentSetup::new(3).unwrap();
        let psi = psi_selmer(&s3).unwrap();
        let reps: std::collections::BTreeSet<i128> = psi.elements.iter().map(|c| c.rep()).collect();
        assert_eq!(reps, [1, -1, 3, -3].into_iter().collect());
        assert_eq!(psi.dim, 2);

        let s33 = DescentSetup::new(33).unwrap();
        let psi33 = psi_selmer(&s33).unwrap();
        let reps33: std::collections::BTreeSet<i128> =
            psi33.elements.iter().map(|c| c.rep()).collect();
        assert_eq!(reps33, [1, -1, 33, -33].into_iter().collect());

        let s66 = DescentSetup::new(66).unwrap();
        let psi66 = psi_selmer(&s66).unwrap();
        assert_eq!(psi66.len(), 16);
        assert_eq!(psi66.dim, 4);
    }

    #[test]
    fn torsion_classes_in_psi() {
        // {+-1, +-class(n)} always lands in the psi-Selmer group on
        // theorem-family instances.
        for n in [3i128, 11, 33, 66, 2 * 3 * 11, 3 * 11 * 19, 2 * 11 * 19] {
            let setup = match DescentSetup::new(n) {
                Ok(s) => s,
                Err(_) => continue,
            };
            if !setup.all_primes_3_mod_8() {
                continue;
            }
            let psi = psi_selmer(&setup).unwrap();
            let n_cls = setup.n_class();
            for c in [
                SquareClass::one(),
                SquareClass::minus_one(),
                n_cls.clone(),
                n_cls.mul(&SquareClass::minus_one()),
            ] {
                assert!(psi.contains(&c), "n={n} missing {c}");
            }
        }
    }

    #[test]
    fn selmer_sets_are_groups_with_pow2_sizes() {
        for n in 3i128..400 {
            let setup = match DescentSetup::new(n) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let phi = phi_selmer(&setup).unwrap();
            let psi = psi_selmer(&setup).unwrap();
            assert_eq!(phi.len(), 1 << phi.dim);
            assert_eq!(psi.len(), 1 << psi.dim);
        }
    }

    #[test]
    fn generators_generate() {
        let s66 = DescentSetup::new(66).unwrap();
        let psi = psi_selmer(&s66).unwrap();
        let gens = psi.generators();
        assert_eq!(gens.len() as u32, psi.dim);
        // span check
        let mut span = vec![SquareClass::one()];
        for g in &gens {
            let mut next = span.clone();
            for e in &span {
                next.push(e.mul(g));
            }
            span = next;
            span.sort();
            span.dedup();
        }
        assert_eq!(span.len(), psi.len());
    }
}
