//! Prime-field arithmetic GF(q) with 64-bit moduli.
//!
//! Elements carry their modulus so values from different fields cannot be
//! combined silently. The operator impls panic on a mismatch; the `try_*`
//! methods report it as [`PlcError::FieldMismatch`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PlcError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrimeField {
    q: u64,
}

impl PrimeField {
    pub fn new(q: u64) -> Result<Self> {
        if is_prime(q) {
            Ok(Self { q })
        } else {
            Err(PlcError::NotPrime(q))
        }
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn zero(&self) -> Fe {
        Fe { value: 0, q: self.q }
    }

    pub fn one(&self) -> Fe {
        Fe { value: 1, q: self.q }
    }

    /// Reduces an arbitrary integer into the field.
    pub fn elem(&self, value: u64) -> Fe {
        Fe { value: value % self.q, q: self.q }
    }

    /// Maps a signed integer, e.g. the sign `-1`, to its residue.
    pub fn from_i64(&self, value: i64) -> Fe {
        let r = value.rem_euclid(self.q as i64) as u64;
        Fe { value: r, q: self.q }
    }

    pub fn uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Fe {
        Fe { value: rng.gen_range(0..self.q), q: self.q }
    }

    pub fn uniform_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> Fe {
        Fe { value: rng.gen_range(1..self.q), q: self.q }
    }

    /// All elements in increasing order of representative.
    pub fn elements(&self) -> impl Iterator<Item = Fe> + '_ {
        (0..self.q).map(move |v| Fe { value: v, q: self.q })
    }

    pub fn nonzero_elements(&self) -> impl Iterator<Item = Fe> + '_ {
        (1..self.q).map(move |v| Fe { value: v, q: self.q })
    }

    pub(crate) fn add_raw(&self, a: u64, b: u64) -> u64 {
        let s = a as u128 + b as u128;
        (s % self.q as u128) as u64
    }

    pub(crate) fn sub_raw(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            self.q - (b - a)
        }
    }

    pub(crate) fn mul_raw(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.q as u128) as u64
    }

    pub(crate) fn inv_raw(&self, a: u64) -> Result<u64> {
        if a % self.q == 0 {
            return Err(PlcError::DivisionByZero(self.q));
        }
        Ok(pow_mod(a, self.q - 2, self.q))
    }
}

impl fmt::Display for PrimeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.q)
    }
}

/// An element of a prime field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fe {
    value: u64,
    q: u64,
}

impl Fe {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn field(&self) -> PrimeField {
        PrimeField { q: self.q }
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn check(&self, other: &Fe) -> Result<()> {
        if self.q == other.q {
            Ok(())
        } else {
            Err(PlcError::FieldMismatch(self.q, other.q))
        }
    }

    pub fn try_add(self, rhs: Fe) -> Result<Fe> {
        self.check(&rhs)?;
        Ok(Fe { value: self.field().add_raw(self.value, rhs.value), q: self.q })
    }

    pub fn try_sub(self, rhs: Fe) -> Result<Fe> {
        self.check(&rhs)?;
        Ok(Fe { value: self.field().sub_raw(self.value, rhs.value), q: self.q })
    }

    pub fn try_mul(self, rhs: Fe) -> Result<Fe> {
        self.check(&rhs)?;
        Ok(Fe { value: self.field().mul_raw(self.value, rhs.value), q: self.q })
    }

    pub fn inv(self) -> Result<Fe> {
        Ok(Fe { value: self.field().inv_raw(self.value)?, q: self.q })
    }

    pub fn try_div(self, rhs: Fe) -> Result<Fe> {
        self.check(&rhs)?;
        self.try_mul(rhs.inv()?)
    }

    pub fn pow(self, exp: u64) -> Fe {
        // 0^0 = 1, which the GRS rows rely on for an evaluation point at zero.
        Fe { value: pow_mod(self.value, exp, self.q), q: self.q }
    }
}

impl fmt::Display for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for Fe {
    type Output = Fe;
    fn add(self, rhs: Fe) -> Fe {
        self.try_add(rhs).expect("field mismatch")
    }
}

impl Sub for Fe {
    type Output = Fe;
    fn sub(self, rhs: Fe) -> Fe {
        self.try_sub(rhs).expect("field mismatch")
    }
}

impl Mul for Fe {
    type Output = Fe;
    fn mul(self, rhs: Fe) -> Fe {
        self.try_mul(rhs).expect("field mismatch")
    }
}

impl Neg for Fe {
    type Output = Fe;
    fn neg(self) -> Fe {
        Fe { value: self.field().sub_raw(0, self.value), q: self.q }
    }
}

pub(crate) fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
    let m128 = m as u128;
    let mut b = base as u128 % m128;
    let mut acc = 1u128 % m128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m128;
        }
        b = b * b % m128;
        exp >>= 1;
    }
    acc as u64
}

/// Deterministic Miller-Rabin, exact for every u64.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = ((x as u128 * x as u128) % n as u128) as u64;
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `>= n`.
pub fn next_prime(n: u64) -> u64 {
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    c
}
