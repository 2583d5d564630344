//! Retrieval with side information, solved through the linear-computation
//! protocols: ask for a coded demand covering the wanted message and the
//! known ones, then strip the known part.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{PlcError, Result};
use crate::ffield::Fe;
use crate::gflinalg::VectorGF;
use crate::pipeline::{self, ProtocolRun};
use crate::protocol::{Dataset, Demand, PrivacyMode, RateReport, SetupParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Private side information through the joint protocol.
    PirPsi,
    /// Side information through the individual protocol.
    PirSi,
}

impl Reduction {
    pub fn privacy_mode(self) -> PrivacyMode {
        match self {
            Reduction::PirPsi => PrivacyMode::Joint,
            Reduction::PirSi => PrivacyMode::Individual,
        }
    }
}

/// A user wanting `X_{i*}` while already holding the messages in `S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideInfoInstance {
    pub n: usize,
    pub k: usize,
    pub i_star: usize,
    /// `S`, ascending, 1-indexed.
    pub side: Vec<usize>,
    pub side_values: Vec<VectorGF>,
}

impl SideInfoInstance {
    pub fn new(n: usize, i_star: usize, side: &[usize], data: &Dataset) -> Result<Self> {
        let k = data.k();
        let mut side = side.to_vec();
        side.sort_unstable();
        side.dedup();
        if n == 0 || i_star == 0 || i_star > k || side.contains(&i_star) || side.iter().any(|&s| s == 0 || s > k) {
            return Err(PlcError::InvalidParams(format!("i*={i_star}, S={side:?} invalid for K={k}")));
        }
        let side_values = side.iter().map(|&s| data.message(s)).collect();
        Ok(Self { n, k, i_star, side, side_values })
    }

    /// `S` uniform among `M`-subsets, then `i*` uniform outside `S`.
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, data: &Dataset, rng: &mut R) -> Result<Self> {
        let k = data.k();
        if m >= k {
            return Err(PlcError::InvalidParams(format!("M={m} leaves nothing to retrieve from K={k}")));
        }
        let side: Vec<usize> = sample(rng, k, m).into_iter().map(|i| i + 1).collect();
        let rest: Vec<usize> = (1..=k).filter(|i| !side.contains(i)).collect();
        let i_star = rest[rng.gen_range(0..rest.len())];
        Self::new(n, i_star, &side, data)
    }

    pub fn m(&self) -> usize {
        self.side.len()
    }

    /// `W = {i*} u S`.
    pub fn support(&self) -> Vec<usize> {
        let mut w = self.side.clone();
        w.push(self.i_star);
        w.sort_unstable();
        w
    }

    /// Coded demand over `{i*} u S` with every coefficient uniform nonzero.
    pub fn coded_demand<R: Rng + ?Sized>(&self, data: &Dataset, rng: &mut R) -> Result<Demand> {
        let f = data.field();
        let w = self.support();
        let v: Vec<u64> = w.iter().map(|_| f.uniform_nonzero(rng).value()).collect();
        Demand::new(self.k, &w, VectorGF::new(f, &v))
    }

    /// Protocol parameters for this instance with `T = t_mult N^{M'}`.
    pub fn params(&self, reduction: Reduction, q: u64, t_mult: u64) -> Result<SetupParams> {
        SetupParams::with_multiplier(
            self.n as u64,
            self.k as u64,
            self.m() as u64 + 1,
            q,
            t_mult,
            reduction.privacy_mode(),
            0,
        )
    }
}

#[derive(Debug, Clone)]
pub struct ReductionOutcome {
    pub recovered: VectorGF,
    pub report: RateReport,
    pub demand: Demand,
    pub run: ProtocolRun,
}

/// `(V X_W - sum_{j in S} v_j X_j) / v_{i*}`.
fn strip_side_information(inst: &SideInfoInstance, demand: &Demand, coded: &VectorGF) -> Result<VectorGF> {
    let coeff = |i: usize| -> Fe {
        let pos = demand.w().iter().position(|&x| x == i).expect("index in support");
        demand.v().get(pos)
    };
    let mut acc = coded.clone();
    for (&j, xj) in inst.side.iter().zip(&inst.side_values) {
        acc = acc.try_sub(&xj.scale(coeff(j)))?;
    }
    Ok(acc.scale(coeff(inst.i_star).inv()?))
}

pub fn solve_via<R: Rng + ?Sized>(
    reduction: Reduction,
    inst: &SideInfoInstance,
    data: &Dataset,
    rng: &mut R,
) -> Result<ReductionOutcome> {
    if data.k() != inst.k {
        return Err(PlcError::Dimension("dataset size differs from the instance".into()));
    }
    let mut params = inst.params(reduction, data.field().modulus(), 1)?;
    params.t = data.t() as u64;
    params.validate()?;
    let demand = inst.coded_demand(data, rng)?;
    let run = pipeline::run(&params, &demand, data, rng)?;
    if !run.recovered_ok() {
        return Err(PlcError::Invariant("protocol returned a wrong coded demand".into()));
    }
    let recovered = strip_side_information(inst, &demand, &run.recovered)?;
    Ok(ReductionOutcome { recovered, report: run.report.clone(), demand, run })
}

pub fn solve_pir_psi_via_jplc<R: Rng + ?Sized>(inst: &SideInfoInstance, data: &Dataset, rng: &mut R) -> Result<ReductionOutcome> {
    solve_via(Reduction::PirPsi, inst, data, rng)
}

pub fn solve_pir_si_via_iplc<R: Rng + ?Sized>(inst: &SideInfoInstance, data: &Dataset, rng: &mut R) -> Result<ReductionOutcome> {
    solve_via(Reduction::PirSi, inst, data, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffield::PrimeField;
    use crate::protocol::{binomial, inverse_geometric, k_subsets, Rational};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn dataset(q: u64, k: usize, t: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::random(PrimeField::new(q).unwrap(), k, t, &mut rng).unwrap()
    }

    #[test]
    fn psi_rate_at_three_messages() {
        let data = dataset(3, 3, 8, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = SideInfoInstance::random(2, 1, &data, &mut rng).unwrap();
        let out = solve_pir_psi_via_jplc(&inst, &data, &mut rng).unwrap();
        assert_eq!(out.recovered, data.message(inst.i_star));
        assert_eq!(out.report.rate, Rational::new(2, 3));
        assert_eq!(out.report.rate, inverse_geometric(2, 3 - 1 - 1));
    }

    #[test]
    fn si_rate_at_five_messages() {
        let data = dataset(3, 5, 16, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = SideInfoInstance::random(2, 1, &data, &mut rng).unwrap();
        let out = solve_pir_si_via_iplc(&inst, &data, &mut rng).unwrap();
        assert_eq!(out.recovered, data.message(inst.i_star));
        assert_eq!(out.report.rate, Rational::new(4, 7));
    }

    #[test]
    fn everything_known_but_one() {
        for reduction in [Reduction::PirPsi, Reduction::PirSi] {
            let data = dataset(5, 4, 2, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let inst = SideInfoInstance::random(2, 3, &data, &mut rng).unwrap();
            let out = solve_via(reduction, &inst, &data, &mut rng).unwrap();
            assert_eq!(out.recovered, data.message(inst.i_star));
            assert_eq!(out.report.rate, Rational::one());
        }
    }

    #[test]
    fn random_instances_four_messages() {
        let data = dataset(5, 4, 64, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let inst = SideInfoInstance::random(2, 1, &data, &mut rng).unwrap();
            assert_eq!(solve_pir_psi_via_jplc(&inst, &data, &mut rng).unwrap().recovered, data.message(inst.i_star));
        }
        let data = dataset(3, 4, 4, 9);
        for _ in 0..20 {
            let inst = SideInfoInstance::random(2, 1, &data, &mut rng).unwrap();
            assert_eq!(solve_pir_si_via_iplc(&inst, &data, &mut rng).unwrap().recovered, data.message(inst.i_star));
        }
    }

    /// `W = {i*} u S` is uniform over `(M+1)`-subsets when `S` is uniform
    /// and `i*` uniform outside it.
    #[test]
    fn coded_support_is_uniform() {
        for k in 1..=5usize {
            for m in 0..k {
                let mut mass: BTreeMap<Vec<usize>, Rational> = BTreeMap::new();
                let p = Rational::new(1, (binomial(k as u64, m as u64) * (k - m) as u64) as i64);
                for s in k_subsets(k, m) {
                    for i in (1..=k).filter(|i| !s.contains(i)) {
                        let mut w = s.clone();
                        w.push(i);
                        w.sort_unstable();
                        let e = mass.entry(w).or_insert_with(Rational::zero);
                        *e = e.clone() + p.clone();
                    }
                }
                let want = Rational::new(1, binomial(k as u64, m as u64 + 1) as i64);
                assert_eq!(mass.len() as u64, binomial(k as u64, m as u64 + 1));
                assert!(mass.values().all(|v| *v == want), "K={k} M={m}");
            }
        }
    }

    #[test]
    fn rejects_bad_instances() {
        let data = dataset(3, 3, 8, 1);
        assert!(SideInfoInstance::new(2, 2, &[2], &data).is_err());
        assert!(SideInfoInstance::new(2, 4, &[1], &data).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(SideInfoInstance::random(2, 3, &data, &mut rng).is_err());
        // K=7 with M=3 puts D=4 outside the individual protocol's reach
        let data = dataset(5, 7, 1, 1);
        let inst = SideInfoInstance::new(2, 1, &[2, 3, 4], &data).unwrap();
        assert!(matches!(inst.params(Reduction::PirSi, 5, 1), Err(PlcError::OutOfScope(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn recovery_is_exact(seed in any::<u64>(), k in 2usize..=4, m_off in 0usize..3, psi in any::<bool>()) {
            let m = m_off % k;
            let reduction = if psi { Reduction::PirPsi } else { Reduction::PirSi };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probe = dataset(5, k, 1, seed);
            let inst = SideInfoInstance::random(2, m, &probe, &mut rng).unwrap();
            let Ok(params) = inst.params(reduction, 5, 1) else { return Ok(()) };
            let data = dataset(5, k, params.t as usize, seed ^ 1);
            let inst = SideInfoInstance::new(2, inst.i_star, &inst.side, &data).unwrap();
            let out = solve_via(reduction, &inst, &data, &mut rng).unwrap();
            prop_assert_eq!(out.recovered, data.message(inst.i_star));
            prop_assert!(out.report.rate_equals_capacity);
        }
    }
}
