//! Shared domain model: dataset, demand, setup parameters, rates and the
//! closed-form capacity expressions.

use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{PlcError, Result};
use crate::ffield::PrimeField;
use crate::gflinalg::{IndexSet, MatrixGF, VectorGF};

/// Exact rational number, always reduced with a positive denominator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numerator: i64, denominator: i64) -> Self {
        Self(BigRational::new(numerator.into(), denominator.into()))
    }

    pub fn from_big(numerator: BigInt, denominator: BigInt) -> Self {
        Self(BigRational::new(numerator, denominator))
    }

    pub fn integer(n: i64) -> Self {
        Self(BigRational::from_integer(n.into()))
    }

    pub fn zero() -> Self {
        Self(BigRational::zero())
    }

    pub fn one() -> Self {
        Self(BigRational::one())
    }

    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn recip(&self) -> Self {
        Self(self.0.recip())
    }

    pub fn abs(&self) -> Self {
        Self(self.0.abs())
    }

    pub fn to_f64(&self) -> f64 {
        use num::ToPrimitive;
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }
}

impl From<BigRational> for Rational {
    fn from(r: BigRational) -> Self {
        Self(r)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl std::ops::Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Rational(self.0 - rhs.0)
    }
}

impl std::ops::Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational(self.0 * rhs.0)
    }
}

impl std::ops::Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        Rational(self.0 / rhs.0)
    }
}

impl std::iter::Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |a, b| a + b)
    }
}

#[derive(Serialize, Deserialize)]
struct RationalRepr {
    numerator: serde_json::Number,
    denominator: serde_json::Number,
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let num = |b: &BigInt| serde_json::Number::from_str(&b.to_string()).map_err(serde::ser::Error::custom);
        RationalRepr { numerator: num(self.numerator())?, denominator: num(self.denominator())? }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = RationalRepr::deserialize(d)?;
        let big = |n: &serde_json::Number| BigInt::from_str(&n.to_string()).map_err(D::Error::custom);
        let den = big(&r.denominator)?;
        if den.is_zero() {
            return Err(D::Error::custom("zero denominator"));
        }
        Ok(Rational::from_big(big(&r.numerator)?, den))
    }
}

/// `(1 + 1/N + ... + 1/N^m)^{-1}`.
pub fn inverse_geometric(n: u64, m: u64) -> Rational {
    let n = BigRational::from_integer(n.into());
    let mut term = BigRational::one();
    let mut total = BigRational::zero();
    for _ in 0..=m {
        total += &term;
        term /= &n;
    }
    Rational(total.recip())
}

fn check_nkd(n: u64, k: u64, d: u64) -> Result<()> {
    if n < 1 {
        return Err(PlcError::InvalidParams("need at least one server".into()));
    }
    if d < 1 || d > k {
        return Err(PlcError::InvalidParams(format!("need 1 <= D <= K, got D={d}, K={k}")));
    }
    Ok(())
}

/// Capacity of jointly private linear computation.
pub fn jplc_capacity(n: u64, k: u64, d: u64) -> Result<Rational> {
    check_nkd(n, k, d)?;
    Ok(inverse_geometric(n, k - d))
}

/// Capacity of individually private linear computation; defined when
/// `K mod D` is zero or divides `D`.
pub fn iplc_capacity(n: u64, k: u64, d: u64) -> Result<Rational> {
    check_nkd(n, k, d)?;
    iplc_scope(k, d)?;
    Ok(inverse_geometric(n, k.div_ceil(d) - 1))
}

/// Rejects `(K, D)` pairs with `R = K mod D` nonzero and not dividing `D`.
pub fn iplc_scope(k: u64, d: u64) -> Result<()> {
    let r = k % d;
    if r != 0 && d % r != 0 {
        return Err(PlcError::OutOfScope(format!(
            "R={r} does not divide D={d}; no capacity result covers K={k}, D={d}"
        )));
    }
    Ok(())
}

/// Bounds for the multi-combination (L > 1) joint problem. The upper
/// bound only exists when `L | (K - D)`.
pub fn jplt_bounds(n: u64, k: u64, d: u64, l: u64) -> Result<(Option<Rational>, Rational)> {
    check_nkd(n, k, d)?;
    if l < 1 {
        return Err(PlcError::InvalidParams("L must be at least 1".into()));
    }
    let upper = ((k - d) % l == 0).then(|| inverse_geometric(n, (k - d) / l));
    Ok((upper, inverse_geometric(n, k - d + l - 1)))
}

/// Capacity of the family where every combination has full support.
pub fn plc_capacity_full_support_family(n: u64, k: u64) -> Result<Rational> {
    if n < 1 || k < 1 {
        return Err(PlcError::InvalidParams("need N, K >= 1".into()));
    }
    Ok(inverse_geometric(n, k - 1))
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Lexicographically ordered `k`-subsets of `[n]` (1-indexed).
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (1..=k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        // rightmost position that can still advance
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i + 1) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// K messages of T symbols each, one message per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    x: MatrixGF,
}

impl Dataset {
    pub fn new(x: MatrixGF) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(PlcError::InvalidParams("dataset needs K >= 1 and T >= 1".into()));
        }
        Ok(Self { x })
    }

    pub fn random<R: Rng + ?Sized>(field: PrimeField, k: usize, t: usize, rng: &mut R) -> Result<Self> {
        let values = (0..k * t).map(|_| field.uniform(rng).value()).collect();
        Self::new(MatrixGF::new(field, k, t, values)?)
    }

    pub fn zeros(field: PrimeField, k: usize, t: usize) -> Result<Self> {
        Self::new(MatrixGF::zeros(field, k, t))
    }

    pub fn k(&self) -> usize {
        self.x.rows()
    }

    pub fn t(&self) -> usize {
        self.x.cols()
    }

    pub fn field(&self) -> PrimeField {
        self.x.field()
    }

    pub fn x(&self) -> &MatrixGF {
        &self.x
    }

    /// Message `i`, 1-indexed.
    pub fn message(&self, i: usize) -> VectorGF {
        self.x.row(i - 1)
    }
}

/// The demanded combination `V X_W`.
///
/// `W` is kept sorted ascending and `V` is permuted along with it, so the
/// first coefficient always sits on the smallest index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Demand {
    w: Vec<usize>,
    v: VectorGF,
}

impl Demand {
    pub fn new(k: usize, w: &[usize], v: VectorGF) -> Result<Self> {
        if w.is_empty() || w.len() > k {
            return Err(PlcError::InvalidParams(format!("support size {} outside [1, {k}]", w.len())));
        }
        if v.len() != w.len() {
            return Err(PlcError::Dimension(format!("{} coefficients for {} indices", v.len(), w.len())));
        }
        let set: IndexSet = w.iter().copied().collect();
        if set.len() != w.len() {
            return Err(PlcError::InvalidParams("support indices must be distinct".into()));
        }
        if let Some(bad) = w.iter().find(|&&i| i == 0 || i > k) {
            return Err(PlcError::InvalidParams(format!("index {bad} outside [1, {k}]")));
        }
        if (0..v.len()).any(|i| v.get(i).is_zero()) {
            return Err(PlcError::InvalidParams("demand coefficients must be nonzero".into()));
        }
        let mut pairs: Vec<(usize, u64)> = w.iter().copied().zip(v.values().iter().copied()).collect();
        pairs.sort_unstable();
        let w = pairs.iter().map(|p| p.0).collect();
        let vals: Vec<u64> = pairs.iter().map(|p| p.1).collect();
        Ok(Self { w, v: VectorGF::new(v.field(), &vals) })
    }

    /// Uniform support and uniform nonzero coefficients.
    pub fn random<R: Rng + ?Sized>(field: PrimeField, k: usize, d: usize, rng: &mut R) -> Result<Self> {
        let w = rand::seq::index::sample(rng, k, d).into_iter().map(|i| i + 1).collect::<Vec<_>>();
        let v: Vec<u64> = (0..d).map(|_| field.uniform_nonzero(rng).value()).collect();
        Self::new(k, &w, VectorGF::new(field, &v))
    }

    pub fn w(&self) -> &[usize] {
        &self.w
    }

    pub fn v(&self) -> &VectorGF {
        &self.v
    }

    pub fn d(&self) -> usize {
        self.w.len()
    }

    pub fn support(&self) -> IndexSet {
        self.w.iter().copied().collect()
    }

    pub fn field(&self) -> PrimeField {
        self.v.field()
    }

    /// `V X_W`, computed straight from the messages.
    pub fn evaluate(&self, data: &Dataset) -> Result<VectorGF> {
        if data.field() != self.field() {
            return Err(PlcError::FieldMismatch(data.field().modulus(), self.field().modulus()));
        }
        if self.w.iter().any(|&i| i > data.k()) {
            return Err(PlcError::Dimension("demand refers past the last message".into()));
        }
        let rows: Vec<usize> = self.w.iter().map(|i| i - 1).collect();
        self.v.mul_matrix(&data.x().select_rows(&rows))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrivacyMode {
    Joint,
    Individual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupParams {
    pub n: u64,
    pub k: u64,
    pub d: u64,
    pub q: u64,
    pub t: u64,
    pub privacy_mode: PrivacyMode,
    pub seed: u64,
}

impl SetupParams {
    /// Builds parameters with `T = t_mult * N^{M'}`.
    pub fn with_multiplier(n: u64, k: u64, d: u64, q: u64, t_mult: u64, mode: PrivacyMode, seed: u64) -> Result<Self> {
        let probe = Self { n, k, d, q, t: 0, privacy_mode: mode, seed };
        probe.check_shape()?;
        let t = n
            .checked_pow(probe.combination_count()? as u32)
            .and_then(|b| b.checked_mul(t_mult))
            .ok_or_else(|| PlcError::InvalidParams("message length overflows".into()))?;
        let p = Self { t, ..probe };
        p.validate()?;
        Ok(p)
    }

    fn check_shape(&self) -> Result<()> {
        check_nkd(self.n, self.k, self.d)?;
        if self.privacy_mode == PrivacyMode::Individual {
            iplc_scope(self.k, self.d)?;
        }
        Ok(())
    }

    /// Number of coded messages `J`.
    pub fn coded_messages(&self) -> u64 {
        match self.privacy_mode {
            PrivacyMode::Joint => self.k - self.d + 1,
            PrivacyMode::Individual => self.k.div_ceil(self.d),
        }
    }

    /// Number of candidate combinations `M'`.
    pub fn combination_count(&self) -> Result<u64> {
        self.check_shape()?;
        Ok(match self.privacy_mode {
            PrivacyMode::Joint => binomial(self.k, self.d),
            PrivacyMode::Individual => {
                let r = self.k % self.d;
                if r == 0 {
                    self.k / self.d
                } else {
                    self.k / self.d + self.d / r
                }
            }
        })
    }

    pub fn min_field_size(&self) -> u64 {
        match self.privacy_mode {
            PrivacyMode::Joint => self.k,
            PrivacyMode::Individual => {
                let r = self.k % self.d;
                if r == 0 {
                    2
                } else {
                    self.d / r + 1
                }
            }
        }
    }

    pub fn capacity(&self) -> Result<Rational> {
        match self.privacy_mode {
            PrivacyMode::Joint => jplc_capacity(self.n, self.k, self.d),
            PrivacyMode::Individual => iplc_capacity(self.n, self.k, self.d),
        }
    }

    pub fn field(&self) -> Result<PrimeField> {
        PrimeField::new(self.q)
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        PrimeField::new(self.q)?;
        let min_q = self.min_field_size();
        if self.q < min_q {
            return Err(PlcError::InvalidParams(format!("q={} is below the minimum {min_q}", self.q)));
        }
        let block = self
            .n
            .checked_pow(self.combination_count()? as u32)
            .ok_or_else(|| PlcError::InvalidParams("N^M' overflows".into()))?;
        if self.t == 0 || self.t % block != 0 {
            return Err(PlcError::InvalidParams(format!("T={} is not a positive multiple of {block}", self.t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub t: u64,
    pub q: u64,
    pub downloaded_symbols: u64,
    pub rate: Rational,
    pub capacity: Rational,
    pub rate_equals_capacity: bool,
    /// `T log2(q)`, informational only.
    pub bits: f64,
}

impl RateReport {
    pub fn new(t: u64, q: u64, downloaded_symbols: u64, capacity: Rational) -> Self {
        let rate = Rational::new(t as i64, downloaded_symbols.max(1) as i64);
        Self {
            t,
            q,
            downloaded_symbols,
            rate_equals_capacity: rate == capacity,
            rate,
            capacity,
            bits: t as f64 * (q as f64).log2(),
        }
    }
}
