//! Generalized Reed-Solomon encoder for jointly private computation.
//!
//! Column `i_j` of `G` is `alpha_j (1, w_j, w_j^2, ...)^T`. Every `D`-subset
//! of `[K]` is then the exact support of a single normalized vector in the
//! row space, so the query payload `(G, C_1..C_M)` looks the same whatever
//! the demand support is.

use rand::Rng;

use crate::error::{PlcError, Result};
use crate::ffield::Fe;
use crate::gflinalg::{row_space_vector_with_support, MatrixGF, VectorGF};
use crate::protocol::{k_subsets, Dataset, Demand};

/// How evaluation points are attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OmegaRule {
    /// Column `c` always uses `c - 1`, so `w_j = i_j - 1`.
    #[default]
    PerColumn,
    /// `w_j = j - 1`, tied to the position inside the demand ordering.
    PerIndex,
}

/// Leading coordinate used to normalize the support vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PivotRule {
    /// Leading coordinate 1; the user rescales the result by `v_1`.
    #[default]
    Unit,
    /// Leading coordinate `v_1`.
    DemandLead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct JplcConfig {
    pub omega_rule: OmegaRule,
    pub pivot_rule: PivotRule,
}

/// The user's random choices; pin them to reproduce a fixed transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JplcDraws {
    /// `v_{D+1}..v_K`.
    pub padding: Vec<Fe>,
    /// `i_{D+1}..i_K`, an ordering of the indices outside the demand.
    pub completion: Vec<usize>,
    /// Explicit `w_1..w_K`; `None` applies the configured rule.
    pub omegas: Option<Vec<Fe>>,
}

impl JplcDraws {
    pub fn sample<R: Rng + ?Sized>(k: usize, demand: &Demand, rng: &mut R) -> Self {
        let field = demand.field();
        let completion = ascending_complement(k, demand.w());
        let padding = completion.iter().map(|_| field.uniform_nonzero(rng)).collect();
        Self { padding, completion, omegas: None }
    }
}

fn ascending_complement(k: usize, w: &[usize]) -> Vec<usize> {
    (1..=k).filter(|i| !w.contains(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JplcEncoderOutput {
    pub g: MatrixGF,
    pub supports: Vec<Vec<usize>>,
    pub c: Vec<VectorGF>,
    pub u: Vec<VectorGF>,
    /// 1-indexed; stays with the user.
    pub k_star: usize,
    pub omegas: Vec<Fe>,
    pub padding: Vec<Fe>,
    /// `pi[j - 1] = i_j`.
    pub pi: Vec<usize>,
    /// Multiply `Z_{k*}` by this to obtain the demand.
    pub demand_scale: Fe,
}

impl JplcEncoderOutput {
    /// What the servers receive.
    pub fn payload(&self) -> (&MatrixGF, &[VectorGF]) {
        (&self.g, &self.c)
    }
}

/// All `D`-subsets of `[K]` in lexicographic order.
pub fn enumerate_supports(k: usize, d: usize) -> Vec<Vec<usize>> {
    k_subsets(k, d)
}

/// Builds `G` and returns it with the completed `pi` and the `w_j` used.
pub fn build_grs_matrix(
    k: usize,
    demand: &Demand,
    draws: &JplcDraws,
    config: JplcConfig,
) -> Result<(MatrixGF, Vec<usize>, Vec<Fe>)> {
    let field = demand.field();
    let d = demand.d();
    if d > k {
        return Err(PlcError::InvalidParams(format!("D={d} exceeds K={k}")));
    }
    if (field.modulus() as u128) < k as u128 {
        return Err(PlcError::InvalidParams(format!(
            "q={} is smaller than K={k}; {k} distinct evaluation points are needed",
            field.modulus()
        )));
    }
    if draws.padding.len() != k - d || draws.completion.len() != k - d {
        return Err(PlcError::Dimension(format!("expected {} padding draws", k - d)));
    }
    if draws.padding.iter().any(|p| p.is_zero() || p.field() != field) {
        return Err(PlcError::InvalidParams("padding coefficients must be nonzero field elements".into()));
    }
    let pi: Vec<usize> = demand.w().iter().chain(&draws.completion).copied().collect();
    let mut seen = vec![false; k];
    for &i in &pi {
        if i == 0 || i > k || std::mem::replace(&mut seen[i - 1], true) {
            return Err(PlcError::InvalidParams("completion does not form a permutation of [K]".into()));
        }
    }

    let omegas: Vec<Fe> = match &draws.omegas {
        Some(w) => {
            if w.len() != k {
                return Err(PlcError::Dimension(format!("{} evaluation points for K={k}", w.len())));
            }
            w.clone()
        }
        None => match config.omega_rule {
            OmegaRule::PerColumn => pi.iter().map(|&i| field.elem(i as u64 - 1)).collect(),
            OmegaRule::PerIndex => (0..k).map(|j| field.elem(j as u64)).collect(),
        },
    };
    for a in 0..k {
        for b in a + 1..k {
            if omegas[a] == omegas[b] {
                return Err(PlcError::InvalidParams("evaluation points must be distinct".into()));
            }
        }
    }

    let v: Vec<Fe> = (0..d).map(|j| demand.v().get(j)).chain(draws.padding.iter().copied()).collect();
    let j_rows = k - d + 1;
    let mut g = MatrixGF::zeros(field, j_rows, k);
    for j in 0..k {
        // j < D excludes only the padding points; j >= D excludes everything but itself
        let others = if j < d { d..k } else { 0..k };
        let denom = others
            .filter(|&o| o != j)
            .map(|o| omegas[j] - omegas[o])
            .fold(field.one(), |acc, x| acc * x);
        let alpha = v[j].try_div(denom)?;
        let mut entry = alpha;
        for i in 0..j_rows {
            g.set(i, pi[j] - 1, entry);
            entry = entry * omegas[j];
        }
    }
    Ok((g, pi, omegas))
}

/// `U_k`, `C_k` for every support plus the 1-indexed position of `target`.
pub fn derive_combination_vectors(
    g: &MatrixGF,
    supports: &[Vec<usize>],
    pivot: Fe,
    target: &[usize],
) -> Result<(Vec<VectorGF>, Vec<VectorGF>, usize)> {
    let mut us = Vec::with_capacity(supports.len());
    let mut cs = Vec::with_capacity(supports.len());
    for s in supports {
        let set = s.iter().copied().collect();
        let (u, c) = row_space_vector_with_support(g, &set, pivot)?
            .ok_or_else(|| PlcError::Invariant(format!("no row-space vector with support {s:?}")))?;
        us.push(u);
        cs.push(c);
    }
    let k_star = supports
        .iter()
        .position(|s| s.as_slice() == target)
        .ok_or_else(|| PlcError::Invariant("demand support missing from the support list".into()))?
        + 1;
    Ok((us, cs, k_star))
}

/// `Y = G X` and `Z_k = C_k Y`.
pub fn form_coded_streams(g: &MatrixGF, cs: &[VectorGF], data: &Dataset) -> Result<(MatrixGF, Vec<VectorGF>)> {
    if data.k() != g.cols() {
        return Err(PlcError::Dimension(format!("dataset has {} messages, G has {} columns", data.k(), g.cols())));
    }
    let y = g.mat_mul(data.x())?;
    let z = cs.iter().map(|c| c.mul_matrix(&y)).collect::<Result<Vec<_>>>()?;
    Ok((y, z))
}

/// Runs the whole encoder with explicit draws.
pub fn encode_with(k: usize, demand: &Demand, draws: &JplcDraws, config: JplcConfig) -> Result<JplcEncoderOutput> {
    let field = demand.field();
    let (g, pi, omegas) = build_grs_matrix(k, demand, draws, config)?;
    let v1 = demand.v().get(0);
    let (pivot, demand_scale) = match config.pivot_rule {
        PivotRule::Unit => (field.one(), v1),
        PivotRule::DemandLead => (v1, field.one()),
    };
    let supports = enumerate_supports(k, demand.d());
    let (u, c, k_star) = derive_combination_vectors(&g, &supports, pivot, demand.w())?;

    let restricted: Vec<Fe> = demand.w().iter().map(|&i| u[k_star - 1].get(i - 1) * demand_scale).collect();
    if restricted.iter().map(|e| e.value()).ne(demand.v().values().iter().copied()) {
        return Err(PlcError::Invariant("U_{k*} does not reproduce the demand coefficients".into()));
    }
    Ok(JplcEncoderOutput {
        g,
        supports,
        c,
        u,
        k_star,
        omegas,
        padding: draws.padding.clone(),
        pi,
        demand_scale,
    })
}

pub fn encode<R: Rng + ?Sized>(k: usize, demand: &Demand, rng: &mut R) -> Result<JplcEncoderOutput> {
    let draws = JplcDraws::sample(k, demand, rng);
    encode_with(k, demand, &draws, JplcConfig::default())
}

/// Minimum field size for the encoder.
pub fn min_field_size(k: usize) -> u64 {
    k as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffield::PrimeField;
    use crate::gflinalg::IndexSet;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gf(q: u64) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    fn example1() -> (Demand, JplcDraws) {
        let f = gf(3);
        let demand = Demand::new(3, &[1, 3], VectorGF::new(f, &[1, 2])).unwrap();
        let draws = JplcDraws {
            padding: vec![f.one()],
            completion: vec![2],
            omegas: Some(vec![f.elem(0), f.elem(1), f.elem(2)]),
        };
        (demand, draws)
    }

    /// Every row-space vector of `g` with the given support and leading entry.
    fn scan(g: &MatrixGF, s: &[usize], lead: Fe) -> Vec<VectorGF> {
        let f = g.field();
        let q = f.modulus();
        let set: IndexSet = s.iter().copied().collect();
        let mut out = Vec::new();
        for idx in 0..q.pow(g.rows() as u32) {
            let mut x = idx;
            let c: Vec<u64> = (0..g.rows())
                .map(|_| {
                    let d = x % q;
                    x /= q;
                    d
                })
                .collect();
            let u = VectorGF::new(f, &c).mul_matrix(g).unwrap();
            if u.support() == set && u.leading() == Some(lead) {
                out.push(u);
            }
        }
        out
    }

    #[test]
    fn example1_matrix() {
        let (demand, draws) = example1();
        let (g, pi, _) = build_grs_matrix(3, &demand, &draws, JplcConfig::default()).unwrap();
        assert_eq!(g, MatrixGF::from_rows(gf(3), &[&[1, 2, 1], &[0, 1, 1]]));
        assert_eq!(pi, vec![1, 3, 2]);
    }

    #[test]
    fn example1_vectors() {
        let f = gf(3);
        let (demand, draws) = example1();
        let out = encode_with(3, &demand, &draws, JplcConfig::default()).unwrap();
        let u: Vec<&[u64]> = out.u.iter().map(|v| v.values()).collect();
        let c: Vec<&[u64]> = out.c.iter().map(|v| v.values()).collect();
        assert_eq!(u, vec![&[1, 1, 0][..], &[1, 0, 2], &[0, 1, 1]]);
        assert_eq!(c, vec![&[1, 2][..], &[1, 1], &[0, 1]]);
        assert_eq!(out.k_star, 2);
        assert_eq!(out.demand_scale, f.one());
    }

    #[test]
    fn example1_streams() {
        let f = gf(3);
        let (demand, draws) = example1();
        let out = encode_with(3, &demand, &draws, JplcConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = Dataset::random(f, 3, 8, &mut rng).unwrap();
        let (y, z) = form_coded_streams(&out.g, &out.c, &data).unwrap();
        let x = |i: usize| data.message(i);
        let two = f.elem(2);
        let y1 = x(1).try_add(&x(2).scale(two)).unwrap().try_add(&x(3)).unwrap();
        let y2 = x(2).try_add(&x(3)).unwrap();
        assert_eq!(y.row(0), y1);
        assert_eq!(y.row(1), y2);
        assert_eq!(z[1], x(1).try_add(&x(3).scale(two)).unwrap());
        assert_eq!(z[1], demand.evaluate(&data).unwrap());

        let zero = Dataset::zeros(f, 3, 8).unwrap();
        let (_, z0) = form_coded_streams(&out.g, &out.c, &zero).unwrap();
        assert!(z0.iter().all(|v| v.is_zero()));
    }

    #[test]
    fn full_support_demand() {
        let f = gf(5);
        let demand = Demand::new(3, &[1, 2, 3], VectorGF::new(f, &[2, 3, 4])).unwrap();
        let draws = JplcDraws { padding: vec![], completion: vec![], omegas: None };
        let out = encode_with(3, &demand, &draws, JplcConfig::default()).unwrap();
        assert_eq!(out.g.rows(), 1);
        // a single row holding V up to the scale v_1
        assert_eq!(out.g.row(0).values(), &[2, 3, 4]);
        assert_eq!(out.supports, vec![vec![1, 2, 3]]);
        assert_eq!(out.k_star, 1);
        assert_eq!(out.u[0].scale(out.demand_scale), *demand.v());
    }

    #[test]
    fn supports_enumeration() {
        assert_eq!(enumerate_supports(3, 2), vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(enumerate_supports(4, 4), vec![vec![1, 2, 3, 4]]);
        let five = enumerate_supports(5, 2);
        assert_eq!(five.len(), 10);
        assert_eq!(five[0], vec![1, 2]);
        assert_eq!(five[9], vec![4, 5]);
    }

    #[test]
    fn rejects_small_field() {
        let f = gf(3);
        let demand = Demand::new(4, &[1, 2], VectorGF::new(f, &[1, 1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(encode(4, &demand, &mut rng), Err(PlcError::InvalidParams(_))));
    }

    #[test]
    fn literal_pivot_matches_demand_lead() {
        let f = gf(5);
        let demand = Demand::new(4, &[2, 4], VectorGF::new(f, &[3, 1])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = JplcDraws::sample(4, &demand, &mut rng);
        let cfg = JplcConfig { pivot_rule: PivotRule::DemandLead, ..Default::default() };
        let out = encode_with(4, &demand, &draws, cfg).unwrap();
        assert!(out.u.iter().all(|u| u.leading() == Some(f.elem(3))));
        assert_eq!(out.u[out.k_star - 1].values(), &[0, 3, 0, 1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Invariants of the encoder output, checked against a scan of the whole row space.
        #[test]
        fn random_instances_match_row_space_scan(seed in any::<u64>(), k in 2usize..=5, d_off in 0usize..5) {
            let d = 1 + d_off % k;
            let f = gf(5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let demand = Demand::random(f, k, d, &mut rng).unwrap();
            let out = encode(k, &demand, &mut rng).unwrap();
            prop_assert_eq!(out.g.rank(), k - d + 1);
            for (idx, s) in out.supports.iter().enumerate() {
                let found = scan(&out.g, s, f.one());
                prop_assert_eq!(found.len(), 1);
                prop_assert_eq!(&found[0], &out.u[idx]);
                prop_assert_eq!(out.c[idx].mul_matrix(&out.g).unwrap(), out.u[idx].clone());
            }
            prop_assert_eq!(&out.supports[out.k_star - 1], &demand.w().to_vec());
            let data = Dataset::random(f, k, 4, &mut rng).unwrap();
            let (_, z) = form_coded_streams(&out.g, &out.c, &data).unwrap();
            prop_assert_eq!(z[out.k_star - 1].scale(out.demand_scale), demand.evaluate(&data).unwrap());
        }

        /// Every J columns of G are independent.
        #[test]
        fn generator_is_mds(seed in any::<u64>(), d in 1usize..=4) {
            let k = 5;
            let f = gf(5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let demand = Demand::random(f, k, d, &mut rng).unwrap();
            let out = encode(k, &demand, &mut rng).unwrap();
            let j = k - d + 1;
            for cols in k_subsets(k, j) {
                let idx: Vec<usize> = cols.iter().map(|c| c - 1).collect();
                prop_assert_eq!(out.g.select_columns(&idx).rank(), j);
            }
        }
    }

    /// Unique support vectors exist for every D-subset at q <= 5, K <= 5.
    #[test]
    fn unique_support_vectors_exhaustive() {
        for q in [3u64, 5] {
            let f = gf(q);
            for k in 2..=(q as usize).min(5) {
                for d in 1..=k {
                    let mut rng = ChaCha8Rng::seed_from_u64(q * 100 + (k * 10 + d) as u64);
                    let demand = Demand::random(f, k, d, &mut rng).unwrap();
                    let out = encode(k, &demand, &mut rng).unwrap();
                    for s in k_subsets(k, d) {
                        assert_eq!(scan(&out.g, &s, f.one()).len(), 1, "q={q} k={k} d={d} s={s:?}");
                    }
                }
            }
        }
    }
}
