//! End-to-end runs: encode the demand, query the servers, decode.

use rand::Rng;

use crate::error::{PlcError, Result};
use crate::ffield::Fe;
use crate::gflinalg::{MatrixGF, VectorGF};
use crate::iplc::{self, IplcDraws};
use crate::jplc::{self, JplcConfig, JplcDraws, PivotRule};
use crate::plc::{self, AnswerSet, GeneratedQuery, PlcInstance, PlcRandomness};
use crate::protocol::{Dataset, Demand, PrivacyMode, RateReport, SetupParams};

/// The public payload `(G, C_1..C_M')` plus what the user keeps private.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub g: MatrixGF,
    pub combos: Vec<VectorGF>,
    pub k_star: usize,
    /// `V X_W = demand_scale * Z_{k*}`.
    pub demand_scale: Fe,
}

impl From<jplc::JplcEncoderOutput> for Encoded {
    fn from(o: jplc::JplcEncoderOutput) -> Self {
        Self { g: o.g, combos: o.c, k_star: o.k_star, demand_scale: o.demand_scale }
    }
}

impl From<iplc::IplcEncoderOutput> for Encoded {
    fn from(o: iplc::IplcEncoderOutput) -> Self {
        Self { g: o.g, combos: o.c, k_star: o.k_star, demand_scale: o.demand_scale }
    }
}

pub fn encode<R: Rng + ?Sized>(params: &SetupParams, demand: &Demand, rng: &mut R) -> Result<Encoded> {
    check_demand(params, demand)?;
    let k = params.k as usize;
    Ok(match params.privacy_mode {
        PrivacyMode::Joint => jplc::encode(k, demand, rng)?.into(),
        PrivacyMode::Individual => iplc::encode(k, demand, rng)?.into(),
    })
}

pub fn encode_jplc_with(params: &SetupParams, demand: &Demand, draws: &JplcDraws) -> Result<Encoded> {
    check_demand(params, demand)?;
    Ok(jplc::encode_with(params.k as usize, demand, draws, JplcConfig::default())?.into())
}

pub fn encode_iplc_with(params: &SetupParams, demand: &Demand, draws: &IplcDraws) -> Result<Encoded> {
    check_demand(params, demand)?;
    Ok(iplc::encode_with(params.k as usize, demand, draws, PivotRule::Unit)?.into())
}

fn check_demand(params: &SetupParams, demand: &Demand) -> Result<()> {
    params.validate()?;
    if demand.d() as u64 != params.d || demand.field().modulus() != params.q {
        return Err(PlcError::InvalidParams(format!(
            "demand has D={} over GF({}), parameters say D={} over GF({})",
            demand.d(),
            demand.field().modulus(),
            params.d,
            params.q
        )));
    }
    if demand.w().last().is_some_and(|&i| i as u64 > params.k) {
        return Err(PlcError::InvalidParams("demand support exceeds K".into()));
    }
    Ok(())
}

/// `Z_k = C_k G X`, what every server computes from the public payload.
pub fn server_streams(encoded: &Encoded, data: &Dataset) -> Result<Vec<VectorGF>> {
    Ok(jplc::form_coded_streams(&encoded.g, &encoded.combos, data)?.1)
}

/// Everything produced by one protocol execution.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub params: SetupParams,
    pub encoded: Encoded,
    pub query: GeneratedQuery,
    pub answers: AnswerSet,
    pub recovered: VectorGF,
    pub expected: VectorGF,
    pub report: RateReport,
}

impl ProtocolRun {
    pub fn recovered_ok(&self) -> bool {
        self.recovered == self.expected
    }
}

/// Runs the protocol on a fixed payload and fixed relabelling.
pub fn run_encoded(
    params: &SetupParams,
    demand: &Demand,
    data: &Dataset,
    encoded: Encoded,
    randomness: &PlcRandomness,
) -> Result<ProtocolRun> {
    if data.k() as u64 != params.k || data.t() as u64 != params.t || data.field().modulus() != params.q {
        return Err(PlcError::Dimension("dataset does not match the parameters".into()));
    }
    let instance = PlcInstance::new(params.n as usize, encoded.combos.clone(), encoded.k_star, params.t as usize)?;
    let query = plc::generate_queries(&instance, randomness)?;
    let streams = server_streams(&encoded, data)?;
    let answers = plc::answer_queries(&query.descriptor, &streams)?;
    let recovered = plc::reconstruct(&query, &answers)?.scale(encoded.demand_scale);
    let expected = demand.evaluate(data)?;
    let report = plc::download_report(&query.descriptor, params.capacity()?)?;
    Ok(ProtocolRun { params: params.clone(), encoded, query, answers, recovered, expected, report })
}

/// Encodes, relabels and runs with fresh randomness from `rng`.
pub fn run<R: Rng + ?Sized>(params: &SetupParams, demand: &Demand, data: &Dataset, rng: &mut R) -> Result<ProtocolRun> {
    let encoded = encode(params, demand, rng)?;
    let randomness = PlcRandomness::sample(params.t as usize, rng);
    run_encoded(params, demand, data, encoded, &randomness)
}
