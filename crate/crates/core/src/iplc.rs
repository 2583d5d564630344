//! Partition-and-code encoder for individually private computation.
//!
//! The generator is a column permutation of a block template. With
//! `R = K mod D = 0` the template is block diagonal with `K/D` rows of
//! width `D`. When `R | D` it has `n = (K-R)/D - 1` such rows followed by a
//! two-row aligned block of `m = D/R + 1` segments of width `R`; segment `i`
//! holds `(alpha, alpha * w_i)` and any combination of the two rows vanishes
//! on at most one segment.
//!
//! Aligned supports are listed in lexicographic order of template columns,
//! so `W_{n+i}` is the aligned block minus segment `m + 1 - i`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PlcError, Result};
use crate::ffield::{Fe, PrimeField};
use crate::gflinalg::{row_space_vector_with_support, MatrixGF, VectorGF};
use crate::jplc::PivotRule;
use crate::protocol::{iplc_scope, Demand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// `R = 0`: demand on one of the `K/D` rows.
    Partition,
    /// `R | D`: demand on one of the `n` full rows.
    FullRow,
    /// `R | D`: demand spread over the aligned block.
    Aligned,
}

/// Block geometry derived from `(K, D)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub k: usize,
    pub d: usize,
    pub r: usize,
    /// Full rows of width `D`.
    pub n: usize,
    /// Aligned segments (0 when `R = 0`).
    pub m: usize,
}

impl Layout {
    pub fn new(k: usize, d: usize) -> Result<Self> {
        if d == 0 || d > k {
            return Err(PlcError::InvalidParams(format!("need 1 <= D <= K, got D={d}, K={k}")));
        }
        iplc_scope(k as u64, d as u64)?;
        let r = k % d;
        Ok(if r == 0 {
            Self { k, d, r, n: k / d, m: 0 }
        } else {
            Self { k, d, r, n: (k - r) / d - 1, m: d / r + 1 }
        })
    }

    pub fn rows(&self) -> usize {
        if self.m == 0 {
            self.n
        } else {
            self.n + 2
        }
    }

    pub fn combination_count(&self) -> usize {
        self.n + self.m
    }

    pub fn min_field_size(&self) -> u64 {
        if self.m == 0 {
            2
        } else {
            self.m as u64
        }
    }

    /// `w_i = m - i`.
    pub fn omegas(&self, field: PrimeField) -> Vec<Fe> {
        (1..=self.m).map(|i| field.elem((self.m - i) as u64)).collect()
    }

    /// Template columns (1-indexed) of segment `i`.
    fn segment(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        let start = self.n * self.d + (i - 1) * self.r + 1;
        start..=start + self.r - 1
    }

    /// Template supports `W_1..W_{M'}` (1-indexed template columns).
    pub fn template_supports(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> =
            (1..=self.n).map(|row| ((row - 1) * self.d + 1..=row * self.d).collect()).collect();
        for i in 1..=self.m {
            let skip = self.segment(self.m + 1 - i);
            out.push((self.n * self.d + 1..=self.k).filter(|c| !skip.contains(c)).collect());
        }
        out
    }

    /// Template columns whose message index is pinned by the demand, in
    /// the order `i_{sigma(1)}, i_{sigma(2)}, ...` is laid out.
    pub fn demand_columns(&self, algorithm: Algorithm, slot: usize) -> Vec<usize> {
        match algorithm {
            Algorithm::Partition | Algorithm::FullRow => ((slot - 1) * self.d + 1..=slot * self.d).collect(),
            Algorithm::Aligned => (1..=self.m).filter(|&i| i != slot).flat_map(|i| self.segment(i)).collect(),
        }
    }

    fn k_star(&self, algorithm: Algorithm, slot: usize) -> usize {
        match algorithm {
            Algorithm::Partition | Algorithm::FullRow => slot,
            Algorithm::Aligned => self.n + self.m + 1 - slot,
        }
    }

    pub fn slot_count(&self, algorithm: Algorithm) -> usize {
        match algorithm {
            Algorithm::Partition | Algorithm::FullRow => self.n,
            Algorithm::Aligned => self.m,
        }
    }
}

/// The user's random choices for one encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IplcDraws {
    pub algorithm: Algorithm,
    /// `sigma[j - 1] = sigma(j)`, a permutation of `[D]`.
    pub sigma: Vec<usize>,
    /// `i*` for the row placements, `i_*` for the aligned placement.
    pub slot: usize,
    /// `pi[c - 1]` is the message index placed at template column `c`.
    pub pi: Vec<usize>,
    /// Multipliers for the template columns not fixed by the demand, in
    /// column order.
    pub random_alphas: Vec<Fe>,
}

/// How often the full-row placement is chosen when both placements exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// `nD/K`, the share of columns sitting in full rows.
    #[default]
    ColumnShare,
    /// `D/K`. Leaks membership once `n > 1`.
    DemandShare,
}

impl SelectionRule {
    /// Numerator over `K` of the full-row probability.
    pub fn full_row_weight(self, layout: &Layout) -> usize {
        match self {
            SelectionRule::ColumnShare => layout.n * layout.d,
            SelectionRule::DemandShare => layout.d,
        }
    }
}

impl IplcDraws {
    /// Draws the algorithm (full-row placement with probability `nD/K`),
    /// `sigma`, the slot, the free part of `pi` and the free multipliers.
    pub fn sample<R: Rng + ?Sized>(k: usize, demand: &Demand, rng: &mut R) -> Result<Self> {
        Self::sample_with(k, demand, SelectionRule::default(), rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(k: usize, demand: &Demand, rule: SelectionRule, rng: &mut R) -> Result<Self> {
        let layout = Layout::new(k, demand.d())?;
        let algorithm = if layout.m == 0 {
            Algorithm::Partition
        } else if rng.gen_range(0..k) < rule.full_row_weight(&layout) {
            Algorithm::FullRow
        } else {
            Algorithm::Aligned
        };
        let d = layout.d;
        let mut sigma: Vec<usize> = (1..=d).collect();
        sigma.shuffle(rng);
        let slot = rng.gen_range(1..=layout.slot_count(algorithm));

        let fixed = layout.demand_columns(algorithm, slot);
        let mut rest: Vec<usize> = (1..=k).filter(|i| !demand.w().contains(i)).collect();
        rest.shuffle(rng);
        let mut pi = vec![0usize; k];
        for (t, &col) in fixed.iter().enumerate() {
            pi[col - 1] = demand.w()[sigma[t] - 1];
        }
        let mut rest = rest.into_iter();
        for slot_val in pi.iter_mut().filter(|p| **p == 0) {
            *slot_val = rest.next().expect("sizes agree");
        }
        let field = demand.field();
        let random_alphas = (0..k - d).map(|_| field.uniform_nonzero(rng)).collect();
        Ok(Self { algorithm, sigma, slot, pi, random_alphas })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IplcEncoderOutput {
    pub g: MatrixGF,
    /// Supports in message coordinates.
    pub supports: Vec<Vec<usize>>,
    /// The same supports in template coordinates.
    pub template_supports: Vec<Vec<usize>>,
    pub c: Vec<VectorGF>,
    pub u: Vec<VectorGF>,
    /// 1-indexed; stays with the user.
    pub k_star: usize,
    pub pi: Vec<usize>,
    pub sigma: Vec<usize>,
    pub algorithm: Algorithm,
    pub slot: usize,
    pub omegas: Vec<Fe>,
    /// Multipliers per template column.
    pub alphas: Vec<Fe>,
    /// Multiply `Z_{k*}` by this to obtain the demand.
    pub demand_scale: Fe,
}

impl IplcEncoderOutput {
    pub fn payload(&self) -> (&MatrixGF, &[VectorGF]) {
        (&self.g, &self.c)
    }
}

fn check_draws(layout: &Layout, demand: &Demand, draws: &IplcDraws) -> Result<()> {
    let (k, d) = (layout.k, layout.d);
    let fits = (layout.m == 0) == (draws.algorithm == Algorithm::Partition);
    if !fits {
        return Err(PlcError::InvalidParams(format!("{:?} placement does not fit K={k}, D={d}", draws.algorithm)));
    }
    if draws.slot == 0 || draws.slot > layout.slot_count(draws.algorithm) {
        return Err(PlcError::InvalidParams(format!("slot {} out of range", draws.slot)));
    }
    let mut s = draws.sigma.clone();
    s.sort_unstable();
    if s != (1..=d).collect::<Vec<_>>() {
        return Err(PlcError::InvalidParams("sigma is not a permutation of [D]".into()));
    }
    let mut p = draws.pi.clone();
    p.sort_unstable();
    if p != (1..=k).collect::<Vec<_>>() {
        return Err(PlcError::InvalidParams("pi is not a permutation of [K]".into()));
    }
    for (t, col) in layout.demand_columns(draws.algorithm, draws.slot).into_iter().enumerate() {
        if draws.pi[col - 1] != demand.w()[draws.sigma[t] - 1] {
            return Err(PlcError::InvalidParams(format!("pi({col}) is not pinned to the demand")));
        }
    }
    if draws.random_alphas.len() != k - d {
        return Err(PlcError::Dimension(format!("expected {} free multipliers", k - d)));
    }
    if draws.random_alphas.iter().any(|a| a.is_zero() || a.field() != demand.field()) {
        return Err(PlcError::InvalidParams("multipliers must be nonzero field elements".into()));
    }
    Ok(())
}

/// Builds the permuted template and the per-column multipliers.
pub fn build_partition_matrix(k: usize, demand: &Demand, draws: &IplcDraws) -> Result<(MatrixGF, Vec<Fe>, Vec<Fe>)> {
    let layout = Layout::new(k, demand.d())?;
    let field = demand.field();
    if field.modulus() < layout.min_field_size() {
        return Err(PlcError::InvalidParams(format!(
            "q={} is below {}; the aligned block needs {} distinct points",
            field.modulus(),
            layout.min_field_size(),
            layout.m
        )));
    }
    check_draws(&layout, demand, draws)?;
    let omegas = layout.omegas(field);

    let mut alphas: Vec<Option<Fe>> = vec![None; k];
    let fixed = layout.demand_columns(draws.algorithm, draws.slot);
    for (t, &col) in fixed.iter().enumerate() {
        let v = demand.v().get(draws.sigma[t] - 1);
        alphas[col - 1] = Some(match draws.algorithm {
            Algorithm::Partition | Algorithm::FullRow => v,
            Algorithm::Aligned => {
                let seg = (col - layout.n * layout.d - 1) / layout.r + 1;
                v.try_div(omegas[draws.slot - 1] - omegas[seg - 1])?
            }
        });
    }
    let mut free = draws.random_alphas.iter();
    let alphas: Vec<Fe> = alphas
        .into_iter()
        .map(|a| a.unwrap_or_else(|| *free.next().expect("count checked")))
        .collect();

    let mut g = MatrixGF::zeros(field, layout.rows(), k);
    for col in 1..=k {
        let dst = draws.pi[col - 1] - 1;
        let a = alphas[col - 1];
        if col <= layout.n * layout.d {
            g.set((col - 1) / layout.d, dst, a);
        } else {
            let seg = (col - layout.n * layout.d - 1) / layout.r;
            g.set(layout.n, dst, a);
            g.set(layout.n + 1, dst, a * omegas[seg]);
        }
    }
    Ok((g, omegas, alphas))
}

pub fn encode_with(k: usize, demand: &Demand, draws: &IplcDraws, pivot_rule: PivotRule) -> Result<IplcEncoderOutput> {
    let layout = Layout::new(k, demand.d())?;
    let field = demand.field();
    let (g, omegas, alphas) = build_partition_matrix(k, demand, draws)?;
    let v1 = demand.v().get(0);
    let (pivot, demand_scale) = match pivot_rule {
        PivotRule::Unit => (field.one(), v1),
        PivotRule::DemandLead => (v1, field.one()),
    };
    let template_supports = layout.template_supports();
    let supports: Vec<Vec<usize>> = template_supports
        .iter()
        .map(|s| {
            let mut w: Vec<usize> = s.iter().map(|&c| draws.pi[c - 1]).collect();
            w.sort_unstable();
            w
        })
        .collect();
    let mut us = Vec::with_capacity(supports.len());
    let mut cs = Vec::with_capacity(supports.len());
    for s in &supports {
        let set = s.iter().copied().collect();
        let (u, c) = row_space_vector_with_support(&g, &set, pivot)?
            .ok_or_else(|| PlcError::Invariant(format!("no row-space vector with support {s:?}")))?;
        us.push(u);
        cs.push(c);
    }
    let k_star = layout.k_star(draws.algorithm, draws.slot);
    if supports[k_star - 1] != demand.w() {
        return Err(PlcError::Invariant("k* does not point at the demand support".into()));
    }
    let u_star = &us[k_star - 1];
    if demand.w().iter().zip(demand.v().values()).any(|(&i, &v)| (u_star.get(i - 1) * demand_scale).value() != v) {
        return Err(PlcError::Invariant("U_{k*} does not reproduce the demand coefficients".into()));
    }
    Ok(IplcEncoderOutput {
        g,
        supports,
        template_supports,
        c: cs,
        u: us,
        k_star,
        pi: draws.pi.clone(),
        sigma: draws.sigma.clone(),
        algorithm: draws.algorithm,
        slot: draws.slot,
        omegas,
        alphas,
        demand_scale,
    })
}

pub fn encode<R: Rng + ?Sized>(k: usize, demand: &Demand, rng: &mut R) -> Result<IplcEncoderOutput> {
    let draws = IplcDraws::sample(k, demand, rng)?;
    encode_with(k, demand, &draws, PivotRule::Unit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gflinalg::IndexSet;
    use crate::jplc::form_coded_streams;
    use crate::protocol::{k_subsets, Dataset};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gf(q: u64) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    fn example2() -> (Demand, IplcDraws) {
        let f = gf(3);
        let demand = Demand::new(5, &[1, 3], VectorGF::new(f, &[1, 2])).unwrap();
        let draws = IplcDraws {
            algorithm: Algorithm::Aligned,
            sigma: vec![2, 1],
            slot: 1,
            pi: vec![4, 2, 5, 3, 1],
            random_alphas: vec![f.elem(1), f.elem(2), f.elem(1)],
        };
        (demand, draws)
    }

    /// D-subsets that are the exact support of some row-space vector.
    fn supported_subsets(g: &MatrixGF, d: usize) -> Vec<Vec<usize>> {
        let f = g.field();
        let q = f.modulus();
        let mut found: std::collections::BTreeSet<Vec<usize>> = Default::default();
        for idx in 1..q.pow(g.rows() as u32) {
            let mut x = idx;
            let c: Vec<u64> = (0..g.rows())
                .map(|_| {
                    let r = x % q;
                    x /= q;
                    r
                })
                .collect();
            let s: Vec<usize> = VectorGF::new(f, &c).mul_matrix(g).unwrap().support().into_iter().collect();
            if s.len() == d {
                found.insert(s);
            }
        }
        found.into_iter().collect()
    }

    #[test]
    fn example2_matrix_and_supports() {
        let f = gf(3);
        let (demand, draws) = example2();
        let out = encode_with(5, &demand, &draws, PivotRule::Unit).unwrap();
        assert_eq!(out.g, MatrixGF::from_rows(f, &[&[0, 2, 0, 1, 0], &[2, 0, 2, 0, 1], &[0, 0, 2, 0, 2]]));
        assert_eq!(out.template_supports, vec![vec![1, 2], vec![3, 4], vec![3, 5], vec![4, 5]]);
        assert_eq!(out.supports, vec![vec![2, 4], vec![3, 5], vec![1, 5], vec![1, 3]]);
        assert_eq!(out.k_star, 4);
        assert_eq!(out.omegas, vec![f.elem(2), f.elem(1), f.elem(0)]);
        let u: Vec<&[u64]> = out.u.iter().map(|v| v.values()).collect();
        assert_eq!(u, vec![&[0, 1, 0, 2, 0][..], &[0, 0, 1, 0, 1], &[1, 0, 0, 0, 1], &[1, 0, 2, 0, 0]]);
        let c: Vec<&[u64]> = out.c.iter().map(|v| v.values()).collect();
        assert_eq!(c, vec![&[2, 0, 0][..], &[0, 0, 2], &[0, 2, 1], &[0, 2, 2]]);
    }

    #[test]
    fn example2_stream_identities() {
        let f = gf(3);
        let (demand, draws) = example2();
        let out = encode_with(5, &demand, &draws, PivotRule::Unit).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = Dataset::random(f, 5, 16, &mut rng).unwrap();
        let (y, z) = form_coded_streams(&out.g, &out.c, &data).unwrap();
        let x = |i: usize| data.message(i);
        let two = f.elem(2);
        assert_eq!(y.row(0), x(2).scale(two).try_add(&x(4)).unwrap());
        assert_eq!(z[3], x(1).try_add(&x(3).scale(two)).unwrap());
        assert_eq!(z[3], demand.evaluate(&data).unwrap());
        assert_eq!(z[2], x(1).try_add(&x(5)).unwrap());
    }

    #[test]
    fn partition_case_construction() {
        let f = gf(3);
        let demand = Demand::new(4, &[1, 3], VectorGF::new(f, &[1, 2])).unwrap();
        let draws = IplcDraws {
            algorithm: Algorithm::Partition,
            sigma: vec![1, 2],
            slot: 1,
            pi: vec![1, 3, 2, 4],
            random_alphas: vec![f.elem(2), f.elem(1)],
        };
        let out = encode_with(4, &demand, &draws, PivotRule::Unit).unwrap();
        assert_eq!(out.g, MatrixGF::from_rows(f, &[&[1, 0, 2, 0], &[0, 2, 0, 1]]));
        assert_eq!(out.u[0].values(), &[1, 0, 2, 0]);
        assert_eq!(out.supports[0], vec![1, 3]);
        assert_eq!(out.k_star, 1);
    }

    #[test]
    fn single_block_case() {
        let f = gf(5);
        let demand = Demand::new(3, &[1, 2, 3], VectorGF::new(f, &[2, 4, 1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = encode(3, &demand, &mut rng).unwrap();
        assert_eq!(out.g.rows(), 1);
        assert_eq!(out.supports, vec![vec![1, 2, 3]]);
        assert_eq!(out.k_star, 1);
        assert_eq!(out.c[0].values(), &[out.g.row(0).leading().unwrap().inv().unwrap().value()]);
    }

    #[test]
    fn full_row_placement_matches_partition_rows() {
        let f = gf(3);
        let demand = Demand::new(5, &[2, 5], VectorGF::new(f, &[2, 1])).unwrap();
        let draws = IplcDraws {
            algorithm: Algorithm::FullRow,
            sigma: vec![1, 2],
            slot: 1,
            pi: vec![2, 5, 1, 3, 4],
            random_alphas: vec![f.elem(1), f.elem(2), f.elem(2)],
        };
        let out = encode_with(5, &demand, &draws, PivotRule::Unit).unwrap();
        assert_eq!(out.g.row(0).values(), &[0, 2, 0, 0, 1]);
        assert_eq!(out.k_star, 1);
        assert_eq!(out.u[0].values(), &[0, 1, 0, 0, 2]);
    }

    #[test]
    fn scope_and_field_checks() {
        let f = gf(11);
        let demand = Demand::new(7, &[1, 2, 3, 4], VectorGF::new(f, &[1, 1, 1, 1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = encode(7, &demand, &mut rng).unwrap_err();
        assert!(err.to_string().contains("R=3 does not divide D=4"));
        let f = gf(5);
        let demand = Demand::new(6, &[1, 2, 3, 4, 5], VectorGF::new(f, &[1; 5])).unwrap();
        assert!(encode(6, &demand, &mut rng).is_err());
    }

    #[test]
    fn layout_counts() {
        let l = Layout::new(5, 2).unwrap();
        assert_eq!((l.n, l.m, l.rows(), l.combination_count()), (1, 3, 3, 4));
        let l = Layout::new(6, 2).unwrap();
        assert_eq!((l.n, l.m, l.rows(), l.combination_count()), (3, 0, 3, 3));
        let l = Layout::new(5, 4).unwrap();
        assert_eq!((l.n, l.m, l.rows(), l.combination_count()), (0, 5, 2, 5));
        assert_eq!(l.min_field_size(), 5);
    }

    /// Valid `(K, D)` pairs with `K <= 6` and the smallest usable prime.
    fn valid_cases() -> Vec<(usize, usize, u64)> {
        let mut out = Vec::new();
        for k in 1..=6 {
            for d in 1..=k {
                if let Ok(l) = Layout::new(k, d) {
                    out.push((k, d, crate::ffield::next_prime(l.min_field_size().max(2))));
                }
            }
        }
        out
    }

    #[test]
    fn supported_subsets_match_row_space_q3() {
        for (k, d, q) in valid_cases() {
            if q > 3 {
                continue;
            }
            let f = gf(q);
            for seed in 0..8u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + k as u64);
                let demand = Demand::random(f, k, d, &mut rng).unwrap();
                let out = encode(k, &demand, &mut rng).unwrap();
                let mut expected = out.supports.clone();
                expected.sort();
                assert_eq!(supported_subsets(&out.g, d), expected, "K={k} D={d} seed={seed}");
                assert_eq!(out.g.rank(), k.div_ceil(d));
            }
        }
    }

    #[test]
    fn every_placement_of_example_parameters() {
        // every algorithm and slot at K=5, D=2, q=3 gives exactly four supported pairs
        let f = gf(3);
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let demand = Demand::random(f, 5, 2, &mut rng).unwrap();
            let out = encode(5, &demand, &mut rng).unwrap();
            assert_eq!(supported_subsets(&out.g, 2).len(), 4);
            let all: Vec<IndexSet> = k_subsets(5, 2).into_iter().map(|s| s.into_iter().collect()).collect();
            let unique = all.iter().filter(|s| {
                crate::gflinalg::row_space_vector_with_support(&out.g, s, f.one()).unwrap().is_some()
            });
            assert_eq!(unique.count(), 4);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn encoder_invariants(seed in any::<u64>(), case in 0usize..64) {
            let cases = valid_cases();
            let (k, d, q) = cases[case % cases.len()];
            let f = gf(q);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let demand = Demand::random(f, k, d, &mut rng).unwrap();
            let out = encode(k, &demand, &mut rng).unwrap();
            prop_assert_eq!(out.g.rank(), k.div_ceil(d));
            prop_assert_eq!(out.supports.len(), Layout::new(k, d).unwrap().combination_count());
            for (idx, s) in out.supports.iter().enumerate() {
                let set: IndexSet = s.iter().copied().collect();
                prop_assert_eq!(out.u[idx].support(), set);
                prop_assert_eq!(out.u[idx].leading(), Some(f.one()));
                prop_assert_eq!(out.c[idx].mul_matrix(&out.g).unwrap(), out.u[idx].clone());
            }
            let data = Dataset::random(f, k, 3, &mut rng).unwrap();
            let (_, z) = form_coded_streams(&out.g, &out.c, &data).unwrap();
            prop_assert_eq!(z[out.k_star - 1].scale(out.demand_scale), demand.evaluate(&data).unwrap());
        }
    }
}
