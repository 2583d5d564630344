//! Dense vectors and matrices over GF(q).
//!
//! Storage is 0-indexed; the domain-facing helpers ([`VectorGF::support`],
//! [`row_space_vector_with_support`]) use 1-indexed coordinates so that
//! message indices read the same as the `[K]` labels used by the protocols.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{PlcError, Result};
use crate::ffield::{Fe, PrimeField};

/// 1-indexed coordinate set.
pub type IndexSet = BTreeSet<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VectorGF {
    field: PrimeField,
    data: Vec<u64>,
}

impl VectorGF {
    pub fn new(field: PrimeField, values: &[u64]) -> Self {
        let q = field.modulus();
        Self { field, data: values.iter().map(|v| v % q).collect() }
    }

    pub fn from_elems(field: PrimeField, elems: &[Fe]) -> Result<Self> {
        let mut data = Vec::with_capacity(elems.len());
        for e in elems {
            if e.field() != field {
                return Err(PlcError::FieldMismatch(field.modulus(), e.field().modulus()));
            }
            data.push(e.value());
        }
        Ok(Self { field, data })
    }

    pub fn zeros(field: PrimeField, len: usize) -> Self {
        Self { field, data: vec![0; len] }
    }

    /// `value` at 1-indexed coordinate `index`, zeros elsewhere.
    pub fn unit(field: PrimeField, len: usize, index: usize, value: Fe) -> Self {
        let mut v = Self::zeros(field, len);
        v.data[index - 1] = value.value();
        v
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// 0-indexed access.
    pub fn get(&self, i: usize) -> Fe {
        self.field.elem(self.data[i])
    }

    pub fn set(&mut self, i: usize, value: Fe) {
        self.data[i] = value.value();
    }

    pub fn values(&self) -> &[u64] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    /// Coordinates holding a nonzero entry, 1-indexed.
    pub fn support(&self) -> IndexSet {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// First nonzero entry, if any.
    pub fn leading(&self) -> Option<Fe> {
        self.data.iter().find(|&&v| v != 0).map(|&v| self.field.elem(v))
    }

    pub fn scale(&self, c: Fe) -> VectorGF {
        let f = self.field;
        VectorGF { field: f, data: self.data.iter().map(|&v| f.mul_raw(v, c.value())).collect() }
    }

    pub fn try_add(&self, other: &VectorGF) -> Result<VectorGF> {
        self.compatible(other)?;
        let f = self.field;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f.add_raw(a, b)).collect();
        Ok(VectorGF { field: f, data })
    }

    pub fn try_sub(&self, other: &VectorGF) -> Result<VectorGF> {
        self.compatible(other)?;
        let f = self.field;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f.sub_raw(a, b)).collect();
        Ok(VectorGF { field: f, data })
    }

    pub fn dot(&self, other: &VectorGF) -> Result<Fe> {
        self.compatible(other)?;
        let f = self.field;
        let acc = self.data.iter().zip(&other.data).fold(0, |acc, (&a, &b)| f.add_raw(acc, f.mul_raw(a, b)));
        Ok(f.elem(acc))
    }

    /// Row vector times matrix.
    pub fn mul_matrix(&self, m: &MatrixGF) -> Result<VectorGF> {
        if self.field != m.field {
            return Err(PlcError::FieldMismatch(self.field.modulus(), m.field.modulus()));
        }
        if self.len() != m.rows {
            return Err(PlcError::Dimension(format!(
                "vector of length {} times {}x{} matrix",
                self.len(),
                m.rows,
                m.cols
            )));
        }
        let f = self.field;
        let mut out = vec![0u64; m.cols];
        for (r, &c) in self.data.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for (o, &g) in out.iter_mut().zip(m.row_slice(r)) {
                *o = f.add_raw(*o, f.mul_raw(c, g));
            }
        }
        Ok(VectorGF { field: f, data: out })
    }

    fn compatible(&self, other: &VectorGF) -> Result<()> {
        if self.field != other.field {
            return Err(PlcError::FieldMismatch(self.field.modulus(), other.field.modulus()));
        }
        if self.len() != other.len() {
            return Err(PlcError::Dimension(format!("lengths {} and {}", self.len(), other.len())));
        }
        Ok(())
    }
}

impl fmt::Display for VectorGF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MatrixGF {
    field: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl MatrixGF {
    pub fn new(field: PrimeField, rows: usize, cols: usize, values: Vec<u64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(PlcError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        let q = field.modulus();
        Ok(Self { field, rows, cols, data: values.into_iter().map(|v| v % q).collect() })
    }

    /// Builds from nested rows; panics on ragged input, handy for fixtures.
    pub fn from_rows(field: PrimeField, rows: &[&[u64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(field, rows.len(), cols, data).expect("shape checked")
    }

    pub fn from_vectors(field: PrimeField, rows: &[VectorGF]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.field() != field {
                return Err(PlcError::FieldMismatch(field.modulus(), r.field().modulus()));
            }
            if r.len() != cols {
                return Err(PlcError::Dimension("ragged rows".into()));
            }
            data.extend_from_slice(r.values());
        }
        Ok(Self { field, rows: rows.len(), cols, data })
    }

    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        Self { field, rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(field: PrimeField, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// 0-indexed access.
    pub fn get(&self, r: usize, c: usize) -> Fe {
        self.field.elem(self.data[r * self.cols + c])
    }

    pub fn set(&mut self, r: usize, c: usize, value: Fe) {
        self.data[r * self.cols + c] = value.value();
    }

    pub fn values(&self) -> &[u64] {
        &self.data
    }

    pub(crate) fn row_slice(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row(&self, r: usize) -> VectorGF {
        VectorGF { field: self.field, data: self.row_slice(r).to_vec() }
    }

    pub fn row_vectors(&self) -> Vec<VectorGF> {
        (0..self.rows).map(|r| self.row(r)).collect()
    }

    pub fn column(&self, c: usize) -> VectorGF {
        VectorGF { field: self.field, data: (0..self.rows).map(|r| self.data[r * self.cols + c]).collect() }
    }

    pub fn transpose(&self) -> MatrixGF {
        let mut t = Self::zeros(self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Keeps the listed 0-indexed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> MatrixGF {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            data.extend(cols.iter().map(|&c| self.data[r * self.cols + c]));
        }
        MatrixGF { field: self.field, rows: self.rows, cols: cols.len(), data }
    }

    pub fn select_rows(&self, rows: &[usize]) -> MatrixGF {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row_slice(r));
        }
        MatrixGF { field: self.field, rows: rows.len(), cols: self.cols, data }
    }

    pub fn mat_mul(&self, other: &MatrixGF) -> Result<MatrixGF> {
        if self.field != other.field {
            return Err(PlcError::FieldMismatch(self.field.modulus(), other.field.modulus()));
        }
        if self.cols != other.rows {
            return Err(PlcError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        let mut out = Self::zeros(f, self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0 {
                    continue;
                }
                let orow = other.row_slice(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d = f.add_raw(*d, f.mul_raw(a, b));
                }
            }
        }
        Ok(out)
    }

    /// Reduced row echelon form together with the pivot columns (0-indexed).
    pub fn rref(&self) -> (MatrixGF, Vec<usize>) {
        let f = self.field;
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..m.cols {
            if row == m.rows {
                break;
            }
            let Some(p) = (row..m.rows).find(|&r| m.data[r * m.cols + col] != 0) else {
                continue;
            };
            m.swap_rows(p, row);
            let inv = f.inv_raw(m.data[row * m.cols + col]).expect("pivot is nonzero");
            for c in 0..m.cols {
                let i = row * m.cols + c;
                m.data[i] = f.mul_raw(m.data[i], inv);
            }
            for r in 0..m.rows {
                if r == row {
                    continue;
                }
                let factor = m.data[r * m.cols + col];
                if factor == 0 {
                    continue;
                }
                for c in 0..m.cols {
                    let sub = f.mul_raw(factor, m.data[row * m.cols + c]);
                    let i = r * m.cols + c;
                    m.data[i] = f.sub_raw(m.data[i], sub);
                }
            }
            pivots.push(col);
            row += 1;
        }
        (m, pivots)
    }

    pub fn row_reduce(&self) -> MatrixGF {
        self.rref().0
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    pub fn is_full_row_rank(&self) -> bool {
        self.rank() == self.rows
    }

    /// Basis of `{x : self * x = 0}` as column vectors.
    pub fn null_space(&self) -> Vec<VectorGF> {
        let f = self.field;
        let (r, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&fc| {
                let mut x = vec![0u64; self.cols];
                x[fc] = 1;
                for (pr, &pc) in pivots.iter().enumerate() {
                    x[pc] = f.sub_raw(0, r.data[pr * r.cols + fc]);
                }
                VectorGF { field: f, data: x }
            })
            .collect()
    }

    /// Basis of `{c : c * self = 0}`.
    pub fn left_null_space(&self) -> Vec<VectorGF> {
        self.transpose().null_space()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }
}

impl fmt::Display for MatrixGF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = (0..self.rows).map(|r| format!("{:?}", self.row_slice(r))).collect();
        write!(f, "[{}]", rows.join(", "))
    }
}

/// Searches the row space of a full-row-rank `g` for a vector whose support
/// is exactly `support` (1-indexed) and whose first nonzero entry equals
/// `pivot`. Returns the vector `u` and the coefficients `c` with `u = c g`.
///
/// Columns outside the support are forced to zero by taking the left null
/// space of `g` restricted to them. When that space has dimension one the
/// answer is unique up to the pivot scaling; larger spaces are scanned in
/// lexicographic order of their basis coefficients.
pub fn row_space_vector_with_support(
    g: &MatrixGF,
    support: &IndexSet,
    pivot: Fe,
) -> Result<Option<(VectorGF, VectorGF)>> {
    let field = g.field();
    if pivot.field() != field {
        return Err(PlcError::FieldMismatch(field.modulus(), pivot.field().modulus()));
    }
    if pivot.is_zero() {
        return Err(PlcError::InvalidParams("pivot value must be nonzero".into()));
    }
    if let Some(&bad) = support.iter().find(|&&i| i == 0 || i > g.cols()) {
        return Err(PlcError::InvalidParams(format!("coordinate {bad} outside [1, {}]", g.cols())));
    }
    if !g.is_full_row_rank() {
        return Err(PlcError::NotFullRowRank);
    }

    let outside: Vec<usize> = (0..g.cols()).filter(|c| !support.contains(&(c + 1))).collect();
    let basis = g.select_columns(&outside).left_null_space();
    if basis.is_empty() {
        return Ok(None);
    }

    let normalize = |c: VectorGF| -> Result<Option<(VectorGF, VectorGF)>> {
        let u = c.mul_matrix(g)?;
        if u.support() != *support {
            return Ok(None);
        }
        let lead = u.leading().expect("support is nonempty");
        let s = pivot.try_div(lead)?;
        Ok(Some((u.scale(s), c.scale(s))))
    };

    if basis.len() == 1 {
        return normalize(basis.into_iter().next().expect("one vector"));
    }

    let q = field.modulus();
    let dim = basis.len();
    let mut coeffs = vec![0u64; dim];
    loop {
        // odometer over F_q^dim, skipping the all-zero tuple
        let mut i = dim;
        loop {
            if i == 0 {
                return Ok(None);
            }
            i -= 1;
            coeffs[i] += 1;
            if coeffs[i] < q {
                break;
            }
            coeffs[i] = 0;
        }
        let mut c = VectorGF::zeros(field, g.rows());
        for (b, &k) in basis.iter().zip(&coeffs) {
            if k != 0 {
                c = c.try_add(&b.scale(field.elem(k)))?;
            }
        }
        if let Some(found) = normalize(c)? {
            return Ok(Some(found));
        }
    }
}

/// The unique `c` with `u = c g` for a full-row-rank `g`.
pub fn solve_coefficients(g: &MatrixGF, u: &VectorGF) -> Result<VectorGF> {
    let field = g.field();
    if u.field() != field {
        return Err(PlcError::FieldMismatch(field.modulus(), u.field().modulus()));
    }
    if u.len() != g.cols() {
        return Err(PlcError::Dimension(format!("vector of length {} for {} columns", u.len(), g.cols())));
    }
    if !g.is_full_row_rank() {
        return Err(PlcError::NotFullRowRank);
    }
    // Augmented system [G^T | u^T]; solvable iff the last column is not a pivot.
    let gt = g.transpose();
    let mut aug = MatrixGF::zeros(field, gt.rows(), gt.cols() + 1);
    for r in 0..gt.rows() {
        for c in 0..gt.cols() {
            aug.data[r * aug.cols + c] = gt.data[r * gt.cols + c];
        }
        aug.data[r * aug.cols + gt.cols()] = u.values()[r];
    }
    let (red, pivots) = aug.rref();
    if pivots.contains(&gt.cols()) {
        return Err(PlcError::NotInRowSpace);
    }
    let mut c = vec![0u64; g.rows()];
    for (pr, &pc) in pivots.iter().enumerate() {
        c[pc] = red.data[pr * red.cols + gt.cols()];
    }
    Ok(VectorGF { field, data: c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gf(q: u64) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    fn set(items: &[usize]) -> IndexSet {
        items.iter().copied().collect()
    }

    fn example1_g() -> MatrixGF {
        MatrixGF::from_rows(gf(3), &[&[1, 2, 1], &[0, 1, 1]])
    }

    fn example2_g() -> MatrixGF {
        MatrixGF::from_rows(gf(3), &[&[0, 2, 0, 1, 0], &[2, 0, 2, 0, 1], &[0, 0, 2, 0, 2]])
    }

    /// Every row-space vector with the given support and pivot, by scanning all q^J combinations.
    fn brute_force(g: &MatrixGF, s: &IndexSet, pivot: Fe) -> Vec<(VectorGF, VectorGF)> {
        let f = g.field();
        let q = f.modulus();
        let j = g.rows();
        let mut out = Vec::new();
        for idx in 0..q.pow(j as u32) {
            let mut x = idx;
            let vals: Vec<u64> = (0..j)
                .map(|_| {
                    let d = x % q;
                    x /= q;
                    d
                })
                .collect();
            let c = VectorGF::new(f, &vals);
            let u = c.mul_matrix(g).unwrap();
            if u.support() == *s && u.leading() == Some(pivot) {
                out.push((u, c));
            }
        }
        out
    }

    fn schoolbook(a: &MatrixGF, b: &MatrixGF) -> Vec<u64> {
        let q = a.field().modulus();
        let mut out = Vec::new();
        for r in 0..a.rows() {
            for c in 0..b.cols() {
                let s: u64 = (0..a.cols()).map(|k| a.get(r, k).value() * b.get(k, c).value()).sum();
                out.push(s % q);
            }
        }
        out
    }

    #[test]
    fn identity_products() {
        let f = gf(3);
        let g = example1_g();
        assert_eq!(g.mat_mul(&MatrixGF::identity(f, 3)).unwrap(), g);
        assert_eq!(MatrixGF::identity(f, 2).mat_mul(&g).unwrap(), g);
    }

    #[test]
    fn product_matches_schoolbook() {
        let f = gf(5);
        let a = MatrixGF::from_rows(f, &[&[1, 2, 3, 4], &[0, 4, 1, 2], &[3, 3, 0, 1]]);
        let b = MatrixGF::from_rows(f, &[&[2, 1], &[4, 0], &[1, 3], &[0, 4]]);
        assert_eq!(a.mat_mul(&b).unwrap().values(), schoolbook(&a, &b).as_slice());
        assert!(matches!(a.mat_mul(&a), Err(PlcError::Dimension(_))));
        let other = MatrixGF::identity(gf(7), 4);
        assert!(matches!(a.mat_mul(&other), Err(PlcError::FieldMismatch(5, 7))));
    }

    #[test]
    fn ranks() {
        assert_eq!(MatrixGF::zeros(gf(3), 3, 4).rank(), 0);
        assert_eq!(example1_g().rank(), 2);
        assert_eq!(example2_g().rank(), 3);
        let r = example1_g().row_reduce();
        assert_eq!(r, MatrixGF::from_rows(gf(3), &[&[1, 0, 2], &[0, 1, 1]]));
    }

    /// Rank as the largest k with a nonzero k x k minor.
    fn minor_rank(m: &MatrixGF) -> usize {
        fn det(m: &MatrixGF) -> u64 {
            // Laplace expansion, fine for k <= 4
            let n = m.rows();
            let q = m.field().modulus();
            if n == 1 {
                return m.get(0, 0).value();
            }
            let mut acc = 0u64;
            for c in 0..n {
                let rest: Vec<usize> = (0..n).filter(|&x| x != c).collect();
                let sub = m.select_rows(&(1..n).collect::<Vec<_>>()).select_columns(&rest);
                let term = m.get(0, c).value() * det(&sub) % q;
                acc = if c % 2 == 0 { (acc + term) % q } else { (acc + q - term) % q };
            }
            acc
        }
        fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
            if k == 0 {
                return vec![vec![]];
            }
            if n < k {
                return vec![];
            }
            let mut with = subsets(n - 1, k - 1);
            for s in &mut with {
                s.push(n - 1);
            }
            let mut out = subsets(n - 1, k);
            out.extend(with);
            out
        }
        for k in (1..=m.rows().min(m.cols())).rev() {
            for rs in subsets(m.rows(), k) {
                for cs in subsets(m.cols(), k) {
                    if det(&m.select_rows(&rs).select_columns(&cs)) != 0 {
                        return k;
                    }
                }
            }
        }
        0
    }

    proptest! {
        #[test]
        fn rank_matches_minor_enumeration(vals in proptest::collection::vec(0u64..3, 24)) {
            let m = MatrixGF::new(gf(3), 4, 6, vals).unwrap();
            prop_assert_eq!(m.rank(), minor_rank(&m));
        }

        #[test]
        fn support_invariant_under_scaling(vals in proptest::collection::vec(0u64..5, 1..8), c in 1u64..5) {
            let f = gf(5);
            let v = VectorGF::new(f, &vals);
            prop_assert_eq!(v.scale(f.elem(c)).support(), v.support());
        }

        #[test]
        fn solve_round_trip(gvals in proptest::collection::vec(0u64..5, 15), cvals in proptest::collection::vec(0u64..5, 3)) {
            let f = gf(5);
            let g = MatrixGF::new(f, 3, 5, gvals).unwrap();
            prop_assume!(g.is_full_row_rank());
            let c = VectorGF::new(f, &cvals);
            let u = c.mul_matrix(&g).unwrap();
            prop_assert_eq!(solve_coefficients(&g, &u).unwrap(), c);
        }

        #[test]
        fn support_search_agrees_with_brute_force(
            q_idx in 0usize..3,
            j in 1usize..=4,
            extra in 0usize..=2,
            seed_vals in proptest::collection::vec(0u64..1000, 24),
        ) {
            let q = [2u64, 3, 5][q_idx];
            let f = gf(q);
            let k = (j + extra).min(6);
            let g = MatrixGF::new(f, j, k, seed_vals[..j * k].to_vec()).unwrap();
            prop_assume!(g.is_full_row_rank());
            for mask in 1u32..(1 << k) {
                let s: IndexSet = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect();
                for p in f.nonzero_elements() {
                    let oracle = brute_force(&g, &s, p);
                    let got = row_space_vector_with_support(&g, &s, p).unwrap();
                    match got {
                        None => prop_assert!(oracle.is_empty()),
                        Some((u, c)) => {
                            prop_assert!(oracle.contains(&(u.clone(), c.clone())));
                            prop_assert_eq!(c.mul_matrix(&g).unwrap(), u);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn support_examples() {
        let f = gf(3);
        assert_eq!(VectorGF::new(f, &[1, 0, 2]).support(), set(&[1, 3]));
        assert!(VectorGF::zeros(f, 4).support().is_empty());
        assert_eq!(VectorGF::new(f, &[0, 1, 1]).support(), set(&[2, 3]));
    }

    #[test]
    fn support_search_on_example1() {
        let f = gf(3);
        let g = example1_g();
        let (u, c) = row_space_vector_with_support(&g, &set(&[1, 3]), f.one()).unwrap().unwrap();
        assert_eq!(u, VectorGF::new(f, &[1, 0, 2]));
        assert_eq!(c, VectorGF::new(f, &[1, 1]));
        let (u, c) = row_space_vector_with_support(&g, &set(&[1, 2]), f.one()).unwrap().unwrap();
        assert_eq!(u, VectorGF::new(f, &[1, 1, 0]));
        assert_eq!(c, VectorGF::new(f, &[1, 2]));
    }

    #[test]
    fn support_search_on_identity() {
        let f = gf(5);
        let id = MatrixGF::identity(f, 4);
        for v in f.nonzero_elements() {
            let (u, c) = row_space_vector_with_support(&id, &set(&[2]), v).unwrap().unwrap();
            assert_eq!(u, VectorGF::unit(f, 4, 2, v));
            assert_eq!(c, VectorGF::unit(f, 4, 2, v));
        }
    }

    #[test]
    fn support_search_on_example2_matches_scan() {
        let f = gf(3);
        let g = example2_g();
        for s in [set(&[3, 4]), set(&[1, 3]), set(&[3, 5]), set(&[2, 4]), set(&[1, 5])] {
            let oracle = brute_force(&g, &s, f.one());
            let got = row_space_vector_with_support(&g, &s, f.one()).unwrap();
            assert_eq!(got.is_some(), !oracle.is_empty(), "support {s:?}");
            assert!(oracle.len() <= 1);
            if let Some(found) = got {
                assert_eq!(found, oracle[0]);
            }
        }
        // {3,4} is not supported: columns 3 and 4 never vanish together elsewhere.
        assert!(row_space_vector_with_support(&g, &set(&[3, 4]), f.one()).unwrap().is_none());
    }

    #[test]
    fn support_search_errors() {
        let f = gf(3);
        let singular = MatrixGF::from_rows(f, &[&[1, 1, 0], &[2, 2, 0]]);
        assert_eq!(
            row_space_vector_with_support(&singular, &set(&[1, 2]), f.one()),
            Err(PlcError::NotFullRowRank)
        );
        assert!(row_space_vector_with_support(&example1_g(), &set(&[4]), f.one()).is_err());
        assert!(row_space_vector_with_support(&example1_g(), &set(&[1]), f.zero()).is_err());
    }

    #[test]
    fn solve_examples() {
        let f = gf(3);
        let g = example2_g();
        assert_eq!(solve_coefficients(&g, &g.row(0)).unwrap(), VectorGF::new(f, &[1, 0, 0]));
        let u = VectorGF::new(f, &[1, 0, 2, 0, 0]);
        assert_eq!(solve_coefficients(&g, &u).unwrap(), VectorGF::new(f, &[0, 2, 2]));
        let outside = VectorGF::new(f, &[1, 0, 0, 0, 0]);
        assert_eq!(solve_coefficients(&g, &outside), Err(PlcError::NotInRowSpace));
    }

    #[test]
    fn null_spaces() {
        let g = example1_g();
        let ns = g.null_space();
        assert_eq!(ns.len(), 1);
        let x = &ns[0];
        for r in 0..g.rows() {
            assert!(g.row(r).dot(x).unwrap().is_zero());
        }
        assert!(g.left_null_space().is_empty());
    }
}
