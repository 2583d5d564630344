//! Empirical checks of recoverability and privacy.
//!
//! A server's view is the public payload `(G, C_1..C_M')`, plus its query
//! for the full layer. Small encoder layers are enumerated exactly with
//! rational masses; everything else is sampled from seeded, per-trial
//! ChaCha streams so reports are reproducible regardless of thread count.
//!
//! Sampled full-layer views are keyed by the payload and the query's
//! relabelling invariant: the query is uniform over an orbit of the
//! permutation/sign group, so its distribution is fixed by that orbit.
//! Sampled membership audits key each index `i` by a per-column summary
//! of the view (the normalized column of `G` and which supports contain
//! `i`) since full views are too many to estimate one by one.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PlcError, Result};
use crate::ffield::{Fe, PrimeField};
use crate::gflinalg::{MatrixGF, VectorGF};
use crate::iplc::{self, Algorithm, IplcDraws, Layout, SelectionRule};
use crate::jplc::{self, JplcConfig, JplcDraws};
use crate::pipeline::{self, Encoded};
use crate::plc::{self, PlcInstance, PlcRandomness};
use crate::protocol::{binomial, k_subsets, Dataset, Demand, PrivacyMode, Rational, SetupParams};
use crate::reductions::{Reduction, SideInfoInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMode {
    Exhaustive,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    #[default]
    Encoder,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Joint,
    Individual,
    ReductionMarginal,
}

/// Encoder knobs, for checking that the literal variants leak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EncoderVariant {
    pub jplc: JplcConfig,
    pub selection: SelectionRule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditConfig {
    pub layer: Layer,
    /// Enumerate exactly when the draw space has at most this many points.
    pub exhaustive_limit: u64,
    pub samples: u64,
    /// Pass threshold; the 3-sigma noise floor when absent.
    pub threshold: Option<Rational>,
    pub seed: u64,
    pub variant: EncoderVariant,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            layer: Layer::Encoder,
            exhaustive_limit: 200_000,
            samples: 100_000,
            threshold: None,
            seed: 0,
            variant: EncoderVariant::default(),
        }
    }
}

/// Probability masses over canonical view encodings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistributionTable {
    pub mode: AuditMode,
    masses: BTreeMap<Vec<u8>, Rational>,
}

impl DistributionTable {
    /// Normalizes nonnegative weights.
    pub fn from_weighted<I: IntoIterator<Item = (Vec<u8>, Rational)>>(mode: AuditMode, items: I) -> Self {
        let mut masses: BTreeMap<Vec<u8>, Rational> = BTreeMap::new();
        for (k, w) in items {
            let e = masses.entry(k).or_insert_with(Rational::zero);
            *e = e.clone() + w;
        }
        let total: Rational = masses.values().cloned().sum();
        if total != Rational::zero() {
            for v in masses.values_mut() {
                *v = v.clone() / total.clone();
            }
        }
        Self { mode, masses }
    }

    pub fn from_counts(counts: &HashMap<Vec<u8>, u64>) -> Self {
        Self::from_weighted(AuditMode::Sampled, counts.iter().map(|(k, &c)| (k.clone(), Rational::integer(c as i64))))
    }

    pub fn mass(&self, key: &[u8]) -> Rational {
        self.masses.get(key).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn total(&self) -> Rational {
        self.masses.values().cloned().sum()
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u8>, &Rational)> {
        self.masses.iter()
    }

    /// Half the L1 distance.
    pub fn total_variation(&self, other: &Self) -> Rational {
        let mut keys: Vec<&Vec<u8>> = self.masses.keys().chain(other.masses.keys()).collect();
        keys.sort();
        keys.dedup();
        let sum: Rational = keys.into_iter().map(|k| (self.mass(k) - other.mass(k)).abs()).sum();
        sum / Rational::integer(2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub criterion: Criterion,
    pub mode: AuditMode,
    pub layer: Layer,
    /// `max-tv`, `max-deviation` or `mean-abs-deviation`.
    pub statistic: String,
    pub distance: Rational,
    pub threshold: Rational,
    /// 3-sigma sampling noise of the statistic; absent when exact.
    pub noise_floor: Option<Rational>,
    pub pass: bool,
    pub transcripts: u64,
    pub worst: String,
}

impl AuditReport {
    fn finish(
        criterion: Criterion,
        mode: AuditMode,
        layer: Layer,
        statistic: &str,
        distance: Rational,
        noise_floor: Option<Rational>,
        threshold: Option<Rational>,
        transcripts: u64,
        worst: String,
    ) -> Self {
        let threshold = threshold.or_else(|| noise_floor.clone()).unwrap_or_else(Rational::zero);
        let pass = distance <= threshold;
        Self { criterion, mode, layer, statistic: statistic.into(), distance, threshold, noise_floor, pass, transcripts, worst }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoverabilityReport {
    pub pass: bool,
    pub exhaustive: bool,
    pub trials: u64,
    pub counterexample: Option<String>,
}

fn ceil_rational(x: f64) -> Rational {
    const SCALE: i64 = 1_000_000_000;
    Rational::new((x * SCALE as f64).ceil() as i64, SCALE)
}

fn push(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_le_bytes());
}

/// Canonical bytes of `(G, C_1..C_M')`.
pub fn payload_bytes(g: &MatrixGF, combos: &[VectorGF]) -> Vec<u8> {
    let mut out = Vec::new();
    push(&mut out, g.field().modulus());
    push(&mut out, g.rows() as u64);
    push(&mut out, g.cols() as u64);
    for &v in g.values() {
        push(&mut out, v);
    }
    push(&mut out, combos.len() as u64);
    for c in combos {
        push(&mut out, c.len() as u64);
        for &v in c.values() {
            push(&mut out, v);
        }
    }
    out
}

/// Per-column summary used to key membership estimates.
pub fn column_key(g: &MatrixGF, combos: &[VectorGF], i: usize) -> Vec<u8> {
    let col = g.column(i - 1);
    let mut out = Vec::new();
    let lead = col.leading();
    for j in 0..col.len() {
        let v = match lead {
            Some(l) => col.get(j).try_div(l).expect("nonzero lead").value(),
            None => 0,
        };
        push(&mut out, v);
    }
    for (k, c) in combos.iter().enumerate() {
        let u = c.mul_matrix(g).expect("shapes agree");
        if !u.get(i - 1).is_zero() {
            push(&mut out, k as u64 + 1);
        }
    }
    out
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn encode_variant<R: Rng + ?Sized>(params: &SetupParams, demand: &Demand, variant: EncoderVariant, rng: &mut R) -> Result<Encoded> {
    let k = params.k as usize;
    Ok(match params.privacy_mode {
        PrivacyMode::Joint => jplc::encode_with(k, demand, &JplcDraws::sample(k, demand, rng), variant.jplc)?.into(),
        PrivacyMode::Individual => {
            let draws = IplcDraws::sample_with(k, demand, variant.selection, rng)?;
            iplc::encode_with(k, demand, &draws, variant.jplc.pivot_rule)?.into()
        }
    })
}

/// Relabelling invariant of every server's query for a fresh relabelling.
fn query_invariants<R: Rng + ?Sized>(params: &SetupParams, enc: &Encoded, rng: &mut R) -> Result<Vec<Vec<u8>>> {
    let inst = PlcInstance::new(params.n as usize, enc.combos.clone(), enc.k_star, params.t as usize)?;
    let rnd = PlcRandomness::sample(params.t as usize, rng);
    let g = plc::generate_queries(&inst, &rnd)?;
    Ok(g.descriptor.servers.iter().map(|s| plc::orbit_invariant(s, params.q)).collect())
}

/// One sampled server view per server.
fn sampled_views<R: Rng + ?Sized>(
    params: &SetupParams,
    enc: &Encoded,
    layer: Layer,
    rng: &mut R,
) -> Result<Vec<Vec<u8>>> {
    let base = payload_bytes(&enc.g, &enc.combos);
    match layer {
        Layer::Encoder => Ok(vec![base]),
        Layer::Full => Ok(query_invariants(params, enc, rng)?
            .into_iter()
            .map(|inv| {
                let mut v = base.clone();
                v.extend_from_slice(&inv);
                v
            })
            .collect()),
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn nonzero_tuples(f: PrimeField, len: usize) -> Vec<Vec<Fe>> {
    (0..len).fold(vec![Vec::new()], |acc, _| {
        acc.into_iter()
            .flat_map(|t| {
                f.nonzero_elements().map(move |e| {
                    let mut t = t.clone();
                    t.push(e);
                    t
                })
            })
            .collect()
    })
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Number of encoder draws per demand support, `V` included.
pub fn encoder_space_size(params: &SetupParams) -> Result<u64> {
    params.validate()?;
    let (k, d, q1) = (params.k as usize, params.d as usize, params.q - 1);
    let v = q1.pow(d as u32);
    Ok(match params.privacy_mode {
        PrivacyMode::Joint => v * q1.pow((k - d) as u32),
        PrivacyMode::Individual => {
            let layout = Layout::new(k, d)?;
            let per_slot = factorial(d) * factorial(k - d) * q1.pow((k - d) as u32);
            let algs: &[Algorithm] = if layout.m == 0 { &[Algorithm::Partition] } else { &[Algorithm::FullRow, Algorithm::Aligned] };
            v * algs.iter().map(|&a| layout.slot_count(a) as u64 * per_slot).sum::<u64>()
        }
    })
}

/// Every encoder draw for a fixed demand with its probability.
fn encoder_outcomes(params: &SetupParams, demand: &Demand, variant: EncoderVariant) -> Result<Vec<(Encoded, Rational)>> {
    let k = params.k as usize;
    let f = demand.field();
    match params.privacy_mode {
        PrivacyMode::Joint => {
            let paddings = nonzero_tuples(f, k - demand.d());
            let w = Rational::new(1, paddings.len() as i64);
            paddings
                .into_iter()
                .map(|padding| {
                    let completion = (1..=k).filter(|i| !demand.w().contains(i)).collect();
                    let draws = JplcDraws { padding, completion, omegas: None };
                    Ok((jplc::encode_with(k, demand, &draws, variant.jplc)?.into(), w.clone()))
                })
                .collect()
        }
        PrivacyMode::Individual => {
            let layout = Layout::new(k, demand.d())?;
            let d = layout.d;
            let algs: Vec<(Algorithm, Rational)> = if layout.m == 0 {
                vec![(Algorithm::Partition, Rational::one())]
            } else {
                let w = variant.selection.full_row_weight(&layout) as i64;
                vec![(Algorithm::FullRow, Rational::new(w, k as i64)), (Algorithm::Aligned, Rational::new(k as i64 - w, k as i64))]
            };
            let sigmas = permutations(&(1..=d).collect::<Vec<_>>());
            let rests = permutations(&(1..=k).filter(|i| !demand.w().contains(i)).collect::<Vec<_>>());
            let alphas = nonzero_tuples(f, k - d);
            let mut out = Vec::new();
            for (alg, p_alg) in algs {
                let slots = layout.slot_count(alg);
                if slots == 0 {
                    continue;
                }
                let each = p_alg / Rational::integer((sigmas.len() * slots * rests.len() * alphas.len()) as i64);
                for sigma in &sigmas {
                    for slot in 1..=slots {
                        let fixed = layout.demand_columns(alg, slot);
                        for rest in &rests {
                            let mut pi = vec![0usize; k];
                            for (t, &col) in fixed.iter().enumerate() {
                                pi[col - 1] = demand.w()[sigma[t] - 1];
                            }
                            let mut r = rest.iter();
                            for p in pi.iter_mut().filter(|p| **p == 0) {
                                *p = *r.next().expect("sizes agree");
                            }
                            for a in &alphas {
                                let draws = IplcDraws { algorithm: alg, sigma: sigma.clone(), slot, pi: pi.clone(), random_alphas: a.clone() };
                                let enc = iplc::encode_with(k, demand, &draws, variant.jplc.pivot_rule)?;
                                out.push((enc.into(), each.clone()));
                            }
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Exact distribution of `(G, C)` given the support `w`, `V` uniform.
fn exhaustive_table(params: &SetupParams, w: &[usize], variant: EncoderVariant) -> Result<DistributionTable> {
    let f = params.field()?;
    let vs = nonzero_tuples(f, w.len());
    let pv = Rational::new(1, vs.len() as i64);
    let mut items = Vec::new();
    for v in vs {
        let vals: Vec<u64> = v.iter().map(|e| e.value()).collect();
        let demand = Demand::new(params.k as usize, w, VectorGF::new(f, &vals))?;
        for (enc, p) in encoder_outcomes(params, &demand, variant)? {
            items.push((payload_bytes(&enc.g, &enc.combos), pv.clone() * p));
        }
    }
    Ok(DistributionTable::from_weighted(AuditMode::Exhaustive, items))
}

fn exhaustive_tables(params: &SetupParams, variant: EncoderVariant) -> Result<Vec<(Vec<usize>, DistributionTable)>> {
    k_subsets(params.k as usize, params.d as usize)
        .into_par_iter()
        .map(|w| Ok((w.clone(), exhaustive_table(params, &w, variant)?)))
        .collect()
}

fn use_exhaustive(params: &SetupParams, cfg: &AuditConfig) -> Result<bool> {
    let total = encoder_space_size(params)?.saturating_mul(binomial(params.k, params.d));
    Ok(cfg.layer == Layer::Encoder && total <= cfg.exhaustive_limit)
}

fn transcript_total(params: &SetupParams) -> Result<u64> {
    Ok(encoder_space_size(params)? * binomial(params.k, params.d))
}

/// Max pairwise total variation between the view distributions given two
/// different supports.
pub fn audit_joint_privacy(params: &SetupParams, cfg: &AuditConfig) -> Result<AuditReport> {
    params.validate()?;
    if use_exhaustive(params, cfg)? {
        let tables = exhaustive_tables(params, cfg.variant)?;
        let (mut worst, mut label) = (Rational::zero(), String::from("none"));
        for (a, (wa, ta)) in tables.iter().enumerate() {
            for (wb, tb) in &tables[a + 1..] {
                let tv = ta.total_variation(tb);
                if tv > worst {
                    label = format!("W={wa:?} vs W={wb:?}");
                    worst = tv;
                }
            }
        }
        return Ok(AuditReport::finish(
            Criterion::Joint,
            AuditMode::Exhaustive,
            cfg.layer,
            "max-tv",
            worst,
            None,
            cfg.threshold.clone(),
            transcript_total(params)?,
            label,
        ));
    }

    let supports = k_subsets(params.k as usize, params.d as usize);
    let f = params.field()?;
    let views: Vec<(usize, Vec<Vec<u8>>)> = (0..cfg.samples)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let idx = (trial % supports.len() as u64) as usize;
            let vals: Vec<u64> = supports[idx].iter().map(|_| f.uniform_nonzero(&mut rng).value()).collect();
            let demand = Demand::new(params.k as usize, &supports[idx], VectorGF::new(f, &vals))?;
            let enc = encode_variant(params, &demand, cfg.variant, &mut rng)?;
            Ok((idx, sampled_views(params, &enc, cfg.layer, &mut rng)?))
        })
        .collect::<Result<_>>()?;
    let servers = views.first().map_or(1, |v| v.1.len());
    let mut counts: Vec<Vec<HashMap<Vec<u8>, u64>>> = vec![vec![HashMap::new(); supports.len()]; servers];
    for (idx, per_server) in views {
        for (s, v) in per_server.into_iter().enumerate() {
            *counts[s][idx].entry(v).or_default() += 1;
        }
    }
    let (mut worst, mut floor, mut label) = (Rational::zero(), 0f64, String::from("none"));
    for (s, per_w) in counts.iter().enumerate() {
        let tables: Vec<DistributionTable> = per_w.iter().map(DistributionTable::from_counts).collect();
        for a in 0..supports.len() {
            for b in a + 1..supports.len() {
                let tv = tables[a].total_variation(&tables[b]);
                if tv > worst {
                    label = format!("server {}: W={:?} vs W={:?}", s + 1, supports[a], supports[b]);
                    worst = tv;
                }
                floor = floor.max(tv_noise_floor(&per_w[a], &per_w[b]));
            }
        }
    }
    Ok(AuditReport::finish(
        Criterion::Joint,
        AuditMode::Sampled,
        cfg.layer,
        "max-tv",
        worst,
        Some(ceil_rational(floor)),
        cfg.threshold.clone(),
        cfg.samples,
        label,
    ))
}

/// `1/2 sum_key 3 sqrt(p(1-p)(1/n_a + 1/n_b))` with the pooled `p` per key.
fn tv_noise_floor(a: &HashMap<Vec<u8>, u64>, b: &HashMap<Vec<u8>, u64>) -> f64 {
    let na = a.values().sum::<u64>() as f64;
    let nb = b.values().sum::<u64>() as f64;
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let mut keys: Vec<&Vec<u8>> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let spread = (1.0 / na + 1.0 / nb).sqrt();
    0.5 * keys
        .into_iter()
        .map(|k| {
            let p = (a.get(k).copied().unwrap_or(0) + b.get(k).copied().unwrap_or(0)) as f64 / (na + nb);
            3.0 * (p * (1.0 - p)).sqrt() * spread
        })
        .sum::<f64>()
}

/// Per-cell tallies for sampled membership estimates.
#[derive(Default)]
struct Tally {
    count: u64,
    hits: u64,
}

/// Weighted mean of `|Pr(hit | key) - a/b|` per index, maxed over indices.
fn marginal_statistic(
    tallies: &HashMap<(usize, usize, Vec<u8>), Tally>,
    samples: u64,
    k: usize,
    target: (u64, u64),
) -> (Rational, f64, String) {
    let (a, b) = target;
    let servers = tallies.keys().map(|x| x.0).max().map_or(0, |s| s + 1);
    let mut worst = (Rational::zero(), String::from("none"));
    let mut floor = 0f64;
    let p = a as f64 / b as f64;
    for s in 0..servers {
        for i in 1..=k {
            let cells: Vec<(&Vec<u8>, &Tally)> =
                tallies.iter().filter(|((ss, ii, _), _)| *ss == s && *ii == i).map(|((_, _, key), t)| (key, t)).collect();
            let num: i64 = cells.iter().map(|(_, t)| (b as i64 * t.hits as i64 - a as i64 * t.count as i64).abs()).sum();
            let dev = Rational::new(num, (b * samples) as i64);
            let noise = 3.0 * (p * (1.0 - p)).sqrt() * cells.iter().map(|(_, t)| (t.count as f64).sqrt()).sum::<f64>() / samples as f64;
            floor = floor.max(noise);
            if dev > worst.0 {
                let (_, cell) = cells
                    .iter()
                    .max_by_key(|(_, t)| (b as i64 * t.hits as i64 - a as i64 * t.count as i64).abs())
                    .expect("nonempty");
                worst = (dev, format!("server {} index {i}: cell with {} of {} hits", s + 1, cell.hits, cell.count));
            }
        }
    }
    (worst.0, floor, worst.1)
}

fn sampled_marginal<F>(
    params: &SetupParams,
    cfg: &AuditConfig,
    criterion: Criterion,
    target: (u64, u64),
    draw: F,
) -> Result<AuditReport>
where
    F: Fn(&mut ChaCha8Rng) -> Result<(Demand, Vec<bool>)> + Sync,
{
    let k = params.k as usize;
    let per_trial: Vec<Vec<(usize, usize, Vec<u8>, bool)>> = (0..cfg.samples)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(cfg.seed, trial);
            let (demand, hit) = draw(&mut rng)?;
            let enc = encode_variant(params, &demand, cfg.variant, &mut rng)?;
            let extra = match cfg.layer {
                Layer::Encoder => vec![Vec::new()],
                Layer::Full => query_invariants(params, &enc, &mut rng)?,
            };
            let mut out = Vec::with_capacity(k * extra.len());
            for (s, inv) in extra.iter().enumerate() {
                for i in 1..=k {
                    let mut key = column_key(&enc.g, &enc.combos, i);
                    key.extend_from_slice(inv);
                    out.push((s, i, key, hit[i - 1]));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut tallies: HashMap<(usize, usize, Vec<u8>), Tally> = HashMap::new();
    for (s, i, key, hit) in per_trial.into_iter().flatten() {
        let t = tallies.entry((s, i, key)).or_default();
        t.count += 1;
        t.hits += hit as u64;
    }
    let (distance, floor, worst) = marginal_statistic(&tallies, cfg.samples, k, target);
    Ok(AuditReport::finish(
        criterion,
        AuditMode::Sampled,
        cfg.layer,
        "mean-abs-deviation",
        distance,
        Some(ceil_rational(floor)),
        cfg.threshold.clone(),
        cfg.samples,
        worst,
    ))
}

/// Deviation of `Pr(i in W | view)` from `D/K`.
pub fn audit_individual_privacy(params: &SetupParams, cfg: &AuditConfig) -> Result<AuditReport> {
    params.validate()?;
    let (k, d) = (params.k as usize, params.d as usize);
    let target = Rational::new(d as i64, k as i64);
    if use_exhaustive(params, cfg)? {
        let tables = exhaustive_tables(params, cfg.variant)?;
        // joint mass of (W, view) with W uniform; the common prior cancels
        let mut per_view: BTreeMap<&Vec<u8>, (Rational, Vec<Rational>)> = BTreeMap::new();
        for (w, t) in &tables {
            for (view, p) in t.iter() {
                let e = per_view.entry(view).or_insert_with(|| (Rational::zero(), vec![Rational::zero(); k]));
                e.0 = e.0.clone() + p.clone();
                for &i in w {
                    e.1[i - 1] = e.1[i - 1].clone() + p.clone();
                }
            }
        }
        let (mut worst, mut label) = (Rational::zero(), String::from("none"));
        for (total, members) in per_view.values() {
            for (i, m) in members.iter().enumerate() {
                let dev = (m.clone() / total.clone() - target.clone()).abs();
                if dev > worst {
                    label = format!("index {}: posterior {}", i + 1, m.clone() / total.clone());
                    worst = dev;
                }
            }
        }
        return Ok(AuditReport::finish(
            Criterion::Individual,
            AuditMode::Exhaustive,
            cfg.layer,
            "max-deviation",
            worst,
            None,
            cfg.threshold.clone(),
            transcript_total(params)?,
            label,
        ));
    }
    let f = params.field()?;
    sampled_marginal(params, cfg, Criterion::Individual, (d as u64, k as u64), |rng| {
        let demand = Demand::random(f, k, d, rng)?;
        let hit = (1..=k).map(|i| demand.w().contains(&i)).collect();
        Ok((demand, hit))
    })
}

/// Deviation of `Pr(i* = i | view)` from `1/K` for the side-information
/// reductions, with `S` uniform and `i*` uniform outside it.
pub fn audit_reduction_marginal(reduction: Reduction, n: u64, k: u64, m: u64, q: u64, cfg: &AuditConfig) -> Result<AuditReport> {
    let params = SetupParams::with_multiplier(n, k, m + 1, q, 1, reduction.privacy_mode(), cfg.seed)?;
    let f = params.field()?;
    let probe = Dataset::zeros(f, k as usize, 1)?;
    sampled_marginal(&params, cfg, Criterion::ReductionMarginal, (1, k), |rng| {
        let inst = SideInfoInstance::random(n as usize, m as usize, &probe, rng)?;
        let demand = inst.coded_demand(&probe, rng)?;
        let hit = (1..=k as usize).map(|i| i == inst.i_star).collect();
        Ok((demand, hit))
    })
}

/// Runs the protocol on every `(W, V)` when there are at most `budget`
/// of them, otherwise on `budget` random demands and datasets.
pub fn audit_recoverability(params: &SetupParams, budget: u64, seed: u64) -> Result<RecoverabilityReport> {
    params.validate()?;
    let (k, d) = (params.k as usize, params.d as usize);
    let f = params.field()?;
    let all = binomial(params.k, params.d) * (params.q - 1).pow(d as u32);
    let exhaustive = all <= budget;
    let cases: Vec<Option<Demand>> = if exhaustive {
        let mut v = Vec::new();
        for w in k_subsets(k, d) {
            for coeffs in nonzero_tuples(f, d) {
                let vals: Vec<u64> = coeffs.iter().map(|e| e.value()).collect();
                v.push(Some(Demand::new(k, &w, VectorGF::new(f, &vals))?));
            }
        }
        v
    } else {
        vec![None; budget as usize]
    };
    let fixed = Dataset::random(f, k, params.t as usize, &mut trial_rng(seed, u64::MAX))?;
    let failures: Vec<Option<String>> = cases
        .par_iter()
        .enumerate()
        .map(|(trial, case)| {
            let mut rng = trial_rng(seed, trial as u64);
            let (demand, data) = match case {
                Some(dm) => (dm.clone(), fixed.clone()),
                None => (Demand::random(f, k, d, &mut rng)?, Dataset::random(f, k, params.t as usize, &mut rng)?),
            };
            let run = pipeline::run(params, &demand, &data, &mut rng)?;
            Ok((!run.recovered_ok()).then(|| format!("trial {trial}: W={:?} V={:?}", demand.w(), demand.v().values())))
        })
        .collect::<Result<_>>()?;
    let counterexample = failures.into_iter().flatten().next();
    Ok(RecoverabilityReport { pass: counterexample.is_none(), exhaustive, trials: cases.len() as u64, counterexample })
}

/// Total variation between two empirical view samples, for custom
/// protocols such as demand-independent controls.
pub fn empirical_tv(a: &[Vec<u8>], b: &[Vec<u8>]) -> Result<Rational> {
    if a.is_empty() || b.is_empty() {
        return Err(PlcError::InvalidParams("empty sample".into()));
    }
    let count = |xs: &[Vec<u8>]| {
        let mut m: HashMap<Vec<u8>, u64> = HashMap::new();
        for x in xs {
            *m.entry(x.clone()).or_default() += 1;
        }
        DistributionTable::from_counts(&m)
    };
    Ok(count(a).total_variation(&count(b)))
}
