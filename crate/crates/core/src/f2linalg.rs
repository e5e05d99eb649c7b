//! Dense linear algebra over F2, bit-packed one machine word per row.
//! Dimensions are capped at 64, which is far beyond what descent on
//! 64-bit inputs can produce.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct F2Vec {
    len: usize,
    bits: u64,
}

impl F2Vec {
    pub fn zero(len: usize) -> Result<Self> {
        if len > 64 {
            return Err(Error::DimensionTooLarge(len));
        }
        Ok(F2Vec { len, bits: 0 })
    }

    pub fn ones(len: usize) -> Result<Self> {
        let mut v = Self::zero(len)?;
        v.bits = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        Ok(v)
    }

    pub fn from_bits(len: usize, bits: u64) -> Result<Self> {
        let mut v = Self::zero(len)?;
        v.bits = bits & Self::mask(len);
        Ok(v)
    }

    fn mask(len: usize) -> u64 {
        if len == 64 {
            u64::MAX
        } else {
            (1u64 << len) - 1
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        (self.bits >> i) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len);
        if value {
            self.bits |= 1 << i;
        } else {
            self.bits &= !(1 << i);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len != other.len {
            return Err(Error::DimensionMismatch(self.len, other.len));
        }
        Ok(F2Vec { len: self.len, bits: self.bits ^ other.bits })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct F2Mat {
    k: usize,
    rows: Vec<u64>,
}

impl F2Mat {
    pub fn zero(k: usize) -> Result<Self> {
        if k > 64 {
            return Err(Error::DimensionTooLarge(k));
        }
        Ok(F2Mat { k, rows: vec![0; k] })
    }

    pub fn identity(k: usize) -> Result<Self> {
        let mut m = Self::zero(k)?;
        for i in 0..k {
            m.rows[i] = 1 << i;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let k = rows.len();
        let mut m = Self::zero(k)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch(row.len(), k));
            }
            for (j, &b) in row.iter().enumerate() {
                if b & 1 == 1 {
                    m.rows[i] |= 1 << j;
                }
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(i < self.k && j < self.k);
        (self.rows[i] >> j) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        assert!(i < self.k && j < self.k);
        if value {
            self.rows[i] |= 1 << j;
        } else {
            self.rows[i] &= !(1 << j);
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.k != other.k {
            return Err(Error::DimensionMismatch(self.k, other.k));
        }
        let rows = self.rows.iter().zip(&other.rows).map(|(a, b)| a ^ b).collect();
        Ok(F2Mat { k: self.k, rows })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.k != other.k {
            return Err(Error::DimensionMismatch(self.k, other.k));
        }
        let mut out = Self::zero(self.k)?;
        for i in 0..self.k {
            let mut acc = 0u64;
            let mut row = self.rows[i];
            while row != 0 {
                let j = row.trailing_zeros() as usize;
                acc ^= other.rows[j];
                row &= row - 1;
            }
            out.rows[i] = acc;
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &F2Vec) -> Result<F2Vec> {
        if self.k != v.len() {
            return Err(Error::DimensionMismatch(self.k, v.len()));
        }
        let mut out = F2Vec::zero(self.k)?;
        for i in 0..self.k {
            let parity = (self.rows[i] & v.bits()).count_ones() & 1;
            if parity == 1 {
                out.set(i, true);
            }
        }
        Ok(out)
    }

    /// Row-echelon rank; works on a copy, the receiver is never mutated.
    pub fn rank(&self) -> usize {
        let mut rows = self.rows.clone();
        let mut rank = 0;
        for col in 0..self.k {
            let pivot = (rank..self.k).find(|&r| (rows[r] >> col) & 1 == 1);
            if let Some(p) = pivot {
                rows.swap(rank, p);
                for r in 0..self.k {
                    if r != rank && (rows[r] >> col) & 1 == 1 {
                        rows[r] ^= rows[rank];
                    }
                }
                rank += 1;
            }
        }
        rank
    }

    pub fn is_invertible(&self) -> bool {
        self.rank() == self.k
    }

    /// Complete solution set of A x = v: empty when inconsistent, otherwise a
    /// particular solution plus the kernel (enumerated, capped at 2^16).
    pub fn solve_affine(&self, v: &F2Vec) -> Result<Vec<F2Vec>> {
        if self.k != v.len() {
            return Err(Error::DimensionMismatch(self.k, v.len()));
        }
        let k = self.k;
        let mut rows = self.rows.clone();
        let mut rhs: Vec<bool> = (0..k).map(|i| v.get(i)).collect();
        let mut pivot_col: Vec<Option<usize>> = vec![None; k];
        let mut rank = 0;
        for col in 0..k {
            let pivot = (rank..k).find(|&r| (rows[r] >> col) & 1 == 1);
            if let Some(p) = pivot {
                rows.swap(rank, p);
                rhs.swap(rank, p);
                for r in 0..k {
                    if r != rank && (rows[r] >> col) & 1 == 1 {
                        rows[r] ^= rows[rank];
                        rhs[r] ^= rhs[rank];
                    }
                }
                pivot_col[rank] = Some(col);
                rank += 1;
            }
        }
        // inconsistent iff a zero row has rhs 1
        for r in rank..k {
            if rhs[r] {
                return Ok(Vec::new());
            }
        }
        let free_cols: Vec<usize> =
            (0..k).filter(|c| !pivot_col[..rank].contains(&Some(*c))).collect();
        if free_cols.len() > 16 {
            return Err(Error::TooManySolutions);
        }
        let mut particular = F2Vec::zero(k)?;
        for r in 0..rank {
            if rhs[r] {
                particular.set(pivot_col[r].unwrap(), true);
            }
        }
        // kernel basis: one vector per free column
        let mut kernel = Vec::with_capacity(free_cols.len());
        for &fc in &free_cols {
            let mut kv = F2Vec::zero(k)?;
            kv.set(fc, true);
            for r in 0..rank {
                if (rows[r] >> fc) & 1 == 1 {
                    kv.set(pivot_col[r].unwrap(), true);
                }
            }
            kernel.push(kv);
        }
        let mut out = Vec::with_capacity(1 << free_cols.len());
        for mask in 0u32..(1 << free_cols.len()) {
            let mut x = particular.clone();
            for (b, kv) in kernel.iter().enumerate() {
                if (mask >> b) & 1 == 1 {
                    x = x.add(kv)?;
                }
            }
            out.push(x);
        }
        out.sort_by_key(|x| x.bits());
        out.dedup();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m33() -> F2Mat {
        F2Mat::from_rows(&[vec![1, 1], vec![0, 0]]).unwrap()
    }

    #[test]
    fn add_examples() {
        let a = m33();
        assert_eq!(a.add(&a).unwrap(), F2Mat::zero(2).unwrap());
        let i = F2Mat::identity(2).unwrap();
        assert_eq!(i.add(&F2Mat::zero(2).unwrap()).unwrap(), i);
        let sum = a.add(&i).unwrap();
        assert_eq!(sum, F2Mat::from_rows(&[vec![0, 1], vec![0, 1]]).unwrap());
        assert!(a.add(&F2Mat::zero(3).unwrap()).is_err());
    }

    #[test]
    fn mul_examples() {
        let a = m33();
        let i = F2Mat::identity(2).unwrap();
        assert_eq!(a.mul(&i).unwrap(), a);
        assert_eq!(a.mul(&a).unwrap(), a);
    }

    #[test]
    fn invertibility_examples() {
        assert!(F2Mat::identity(4).unwrap().is_invertible());
        assert!(!F2Mat::zero(1).unwrap().is_invertible());
        let a = m33();
        // A^2 + A + I = I here
        let crit = a.mul(&a).unwrap().add(&a).unwrap().add(&F2Mat::identity(2).unwrap()).unwrap();
        assert_eq!(crit, F2Mat::identity(2).unwrap());
        assert!(crit.is_invertible());
    }

    #[test]
    fn solve_affine_examples() {
        let i = F2Mat::identity(3).unwrap();
        let v = F2Vec::from_bits(3, 0b101).unwrap();
        assert_eq!(i.solve_affine(&v).unwrap(), vec![v.clone()]);
        let z = F2Mat::zero(2).unwrap();
        let sols = z.solve_affine(&F2Vec::zero(2).unwrap()).unwrap();
        assert_eq!(sols.len(), 4);
        let ones = F2Vec::ones(2).unwrap();
        assert_eq!(F2Mat::identity(2).unwrap().solve_affine(&ones).unwrap(), vec![ones.clone()]);
        // inconsistent system: 0 x = 1
        assert!(z.solve_affine(&ones).unwrap().is_empty());
    }

    #[test]
    fn invertibility_matches_brute_force_small() {
        // all matrices for k <= 3: invertible iff Ax=0 has only x=0
        for k in 1usize..=3 {
            let cells = k * k;
            for code in 0u32..(1 << cells) {
                let mut m = F2Mat::zero(k).unwrap();
                for c in 0..cells {
                    if (code >> c) & 1 == 1 {
                        m.set(c / k, c % k, true);
                    }
                }
                let mut only_zero = true;
                for x in 1u64..(1 << k) {
                    let xv = F2Vec::from_bits(k, x).unwrap();
                    if m.mul_vec(&xv).unwrap().is_zero() {
                        only_zero = false;
                        break;
                    }
                }
                assert_eq!(m.is_invertible(), only_zero, "k={k} code={code:b}");
            }
        }
    }

    #[test]
    fn invertibility_matches_solution_count_k8() {
        let mut state = 0x243f6a8885a308d3u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..200 {
            let mut m = F2Mat::zero(8).unwrap();
            for i in 0..8 {
                m.rows[i] = rng() & 0xff;
            }
            let sols = m.solve_affine(&F2Vec::zero(8).unwrap()).unwrap();
            assert_eq!(m.is_invertible(), sols.len() == 1);
            // solution count is 2^(k - rank)
            assert_eq!(sols.len(), 1 << (8 - m.rank()));
        }
    }

    #[test]
    fn distributivity_over_vectors() {
        let mut state = 0xb7e151628aed2a6au64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..500 {
            let k = 1 + (rng() % 12) as usize;
            let mask = F2Vec::mask(k);
            let mut a = F2Mat::zero(k).unwrap();
            let mut b = F2Mat::zero(k).unwrap();
            for i in 0..k {
                a.rows[i] = rng() & mask;
                b.rows[i] = rng() & mask;
            }
            let v = F2Vec::from_bits(k, rng() & mask).unwrap();
            let lhs = a.add(&b).unwrap().mul_vec(&v).unwrap();
            let rhs = a.mul_vec(&v).unwrap().add(&b.mul_vec(&v).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn elimination_does_not_mutate() {
        let a = m33();
        let copy = a.clone();
        let _ = a.rank();
        let _ = a.is_invertible();
        let _ = a.solve_affine(&F2Vec::zero(2).unwrap()).unwrap();
        assert_eq!(a, copy);
    }
}
