//! Private computation of one of `M'` linear combinations `Z_k = C_k Y`
//! from `N` replicated servers.
//!
//! Query construction follows the iterative private-retrieval layout: order
//! 1 asks every server for one symbol of every stream; an order-`l` sum at
//! server `n` pairs a fresh symbol of the wanted stream with an order-`l-1`
//! sum of unwanted streams downloaded from another server, and also asks for
//! unwanted-only sums of order `l` that later serve as side information
//! elsewhere. Symbols are addressed through labels `1..N^{M'}`, hidden behind
//! a random permutation `tau` and random signs `s`.
//!
//! The sign of stream `x` inside the subset `S` is `(-1)^{rank of x in S}`.
//! A sum containing the wanted stream `theta` is `eps(S, theta)` times
//! (fresh symbol + side-information sum), which makes every server's block
//! a relabelling of the same alternating pattern whatever `theta` is.
//!
//! Streams are dependent when `rank(C) < M'`, so each server trims every
//! block to its first maximal independent subset and only answers that.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PlcError, Result};
use crate::ffield::{Fe, PrimeField};
use crate::gflinalg::{MatrixGF, VectorGF};
use crate::protocol::{binomial, k_subsets, RateReport, Rational};

/// What the user feeds into the engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlcInstance {
    n: usize,
    combos: Vec<VectorGF>,
    k_star: usize,
    t: usize,
}

impl PlcInstance {
    pub fn new(n: usize, combos: Vec<VectorGF>, k_star: usize, t: usize) -> Result<Self> {
        if n == 0 {
            return Err(PlcError::InvalidParams("need at least one server".into()));
        }
        let Some(first) = combos.first() else {
            return Err(PlcError::InvalidParams("no candidate combinations".into()));
        };
        let (field, j) = (first.field(), first.len());
        if combos.iter().any(|c| c.len() != j || c.field() != field) {
            return Err(PlcError::Dimension("combination vectors differ in length or field".into()));
        }
        if k_star == 0 || k_star > combos.len() {
            return Err(PlcError::InvalidParams(format!("k*={k_star} outside [1, {}]", combos.len())));
        }
        let block = block_length(n, combos.len())?;
        if t == 0 || t % block != 0 {
            return Err(PlcError::InvalidParams(format!("T={t} is not a positive multiple of N^M'={block}")));
        }
        Ok(Self { n, combos, k_star, t })
    }

    pub fn servers(&self) -> usize {
        self.n
    }

    pub fn combos(&self) -> &[VectorGF] {
        &self.combos
    }

    pub fn combination_count(&self) -> usize {
        self.combos.len()
    }

    pub fn k_star(&self) -> usize {
        self.k_star
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn field(&self) -> PrimeField {
        self.combos[0].field()
    }

    /// Rank of the stacked combination vectors.
    pub fn independent_streams(&self) -> usize {
        MatrixGF::from_vectors(self.field(), &self.combos).expect("validated").rank()
    }

    /// `T (1 + 1/N + ... + 1/N^{J-1})` with `J` the rank of the combinations.
    pub fn expected_download(&self) -> u64 {
        let j = self.independent_streams() as u32;
        (0..j).map(|i| (self.t / self.n.pow(i)) as u64).sum()
    }
}

/// `N^{M'}`.
pub fn block_length(n: usize, m: usize) -> Result<usize> {
    n.checked_pow(m as u32)
        .ok_or_else(|| PlcError::InvalidParams(format!("N^M' overflows for N={n}, M'={m}")))
}

/// The permutation and signs hiding symbol labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlcRandomness {
    /// `tau[i - 1] = tau(i)`, a permutation of `[T]`.
    pub tau: Vec<usize>,
    /// `s_1..s_T`, each `+1` or `-1`.
    pub signs: Vec<i8>,
}

impl PlcRandomness {
    pub fn sample<R: Rng + ?Sized>(t: usize, rng: &mut R) -> Self {
        let mut tau: Vec<usize> = (1..=t).collect();
        tau.shuffle(rng);
        let signs = (0..t).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        Self { tau, signs }
    }

    pub fn identity(t: usize) -> Self {
        Self { tau: (1..=t).collect(), signs: vec![1; t] }
    }

    pub fn validate(&self, t: usize) -> Result<()> {
        if self.tau.len() != t || self.signs.len() != t {
            return Err(PlcError::Dimension(format!("randomness sized for T={}, need {t}", self.tau.len())));
        }
        let mut seen = vec![false; t];
        for &p in &self.tau {
            if p == 0 || p > t || std::mem::replace(&mut seen[p - 1], true) {
                return Err(PlcError::InvalidParams("tau is not a permutation".into()));
            }
        }
        if self.signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(PlcError::InvalidParams("signs must be +1 or -1".into()));
        }
        Ok(())
    }

    fn sign(&self, field: PrimeField, label: usize) -> Fe {
        field.from_i64(self.signs[label] as i64)
    }
}

/// `s_i Z_k(tau(i))` for every stream.
pub fn relabel_streams(streams: &[VectorGF], randomness: &PlcRandomness) -> Result<Vec<VectorGF>> {
    streams
        .iter()
        .map(|z| {
            randomness.validate(z.len())?;
            let f = z.field();
            let vals: Vec<u64> = (0..z.len())
                .map(|i| (z.get(randomness.tau[i] - 1) * randomness.sign(f, i)).value())
                .collect();
            Ok(VectorGF::new(f, &vals))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Term {
    /// 1-indexed combination stream.
    pub stream: usize,
    /// 1-indexed symbol position.
    pub position: usize,
    pub coeff: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedSum {
    pub terms: Vec<Term>,
}

impl SignedSum {
    fn sort_key(&self) -> (Vec<usize>, Vec<usize>, Vec<u64>) {
        (
            self.terms.iter().map(|t| t.stream).collect(),
            self.terms.iter().map(|t| t.position).collect(),
            self.terms.iter().map(|t| t.coeff).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryBlock {
    pub order: usize,
    pub sums: Vec<SignedSum>,
}

/// Everything one server receives from the engine.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ServerQuery {
    pub server: usize,
    pub blocks: Vec<QueryBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryDescriptor {
    pub q: u64,
    pub t: usize,
    /// Public combination vectors, needed by the servers to trim.
    pub combos: Vec<Vec<u64>>,
    pub servers: Vec<ServerQuery>,
}

impl QueryDescriptor {
    pub fn field(&self) -> Result<PrimeField> {
        PrimeField::new(self.q)
    }

    pub fn combo_vectors(&self) -> Result<Vec<VectorGF>> {
        let f = self.field()?;
        Ok(self.combos.iter().map(|c| VectorGF::new(f, c)).collect())
    }

    /// `(order, untrimmed, trimmed)` per block of every server.
    pub fn layout(&self) -> Result<Vec<Vec<(usize, usize, usize)>>> {
        let combos = self.combo_vectors()?;
        self.servers
            .iter()
            .map(|sq| {
                sq.blocks
                    .iter()
                    .map(|b| Ok((b.order, b.sums.len(), trim_block(b, &combos, self.t)?.kept.len())))
                    .collect()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.combos.len();
        for sq in &self.servers {
            for b in &sq.blocks {
                for s in &b.sums {
                    if s.terms.len() != b.order {
                        return Err(PlcError::MalformedQuery(format!("sum of {} terms in an order-{} block", s.terms.len(), b.order)));
                    }
                    for t in &s.terms {
                        if t.stream == 0 || t.stream > m || t.position == 0 || t.position > self.t || t.coeff >= self.q {
                            return Err(PlcError::MalformedQuery(format!("term {t:?} out of range")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// One value per kept sum, in listing order, for each server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub answers: Vec<Vec<u64>>,
}

impl AnswerSet {
    pub fn total(&self) -> usize {
        self.answers.iter().map(Vec::len).sum()
    }
}

/// Which sums of a block are answered, and how the others follow from them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimPlan {
    pub kept: Vec<usize>,
    /// `(sum index, [(index into kept, coefficient)])`.
    pub derived: Vec<(usize, Vec<(usize, Fe)>)>,
}

type Sparse = BTreeMap<usize, u64>;

fn functional(sum: &SignedSum, combos: &[VectorGF], t: usize, f: PrimeField) -> Sparse {
    let mut out = Sparse::new();
    for term in &sum.terms {
        let c = &combos[term.stream - 1];
        for (j, &cj) in c.values().iter().enumerate() {
            if cj == 0 {
                continue;
            }
            let key = j * t + term.position - 1;
            let e = out.entry(key).or_insert(0);
            *e = f.add_raw(*e, f.mul_raw(cj, term.coeff));
        }
    }
    out.retain(|_, v| *v != 0);
    out
}

/// First maximal independent subset of the block in listing order.
pub fn trim_block(block: &QueryBlock, combos: &[VectorGF], t: usize) -> Result<TrimPlan> {
    let f = combos.first().map(|c| c.field()).ok_or_else(|| PlcError::MalformedQuery("no combinations".into()))?;
    // fully reduced rows keyed by pivot; each row carries its expression in kept sums
    let mut basis: BTreeMap<usize, (Sparse, Vec<u64>)> = BTreeMap::new();
    let mut kept = Vec::new();
    let mut derived = Vec::new();
    for (idx, sum) in block.sums.iter().enumerate() {
        if sum.terms.iter().any(|tm| tm.stream == 0 || tm.stream > combos.len()) {
            return Err(PlcError::MalformedQuery(format!("sum {idx} names an unknown stream")));
        }
        let mut v = functional(sum, combos, t, f);
        let mut expr = vec![0u64; kept.len() + 1];
        let hits: Vec<(usize, u64)> = v.iter().filter(|(k, _)| basis.contains_key(k)).map(|(&k, &c)| (k, c)).collect();
        for (p, c) in hits {
            let (row, row_expr) = &basis[&p];
            for (&k, &rv) in row {
                let e = v.entry(k).or_insert(0);
                *e = f.sub_raw(*e, f.mul_raw(c, rv));
            }
            for (i, &re) in row_expr.iter().enumerate() {
                expr[i] = f.add_raw(expr[i], f.mul_raw(c, re));
            }
        }
        v.retain(|_, x| *x != 0);
        match v.keys().next().copied() {
            None => {
                let combo = expr
                    .iter()
                    .take(kept.len())
                    .enumerate()
                    .filter(|(_, &c)| c != 0)
                    .map(|(i, &c)| (i, f.elem(c)))
                    .collect();
                derived.push((idx, combo));
            }
            Some(p) => {
                // new row = (sum - expr . kept) / lead, expressed in kept sums
                let slot = kept.len();
                kept.push(idx);
                let inv = f.inv_raw(v[&p]).expect("nonzero");
                let row: Sparse = v.iter().map(|(&k, &x)| (k, f.mul_raw(x, inv))).collect();
                let mut row_expr: Vec<u64> = expr.iter().map(|&e| f.mul_raw(f.sub_raw(0, e), inv)).collect();
                row_expr.resize(slot + 1, 0);
                row_expr[slot] = inv;
                for (other, other_expr) in basis.values_mut() {
                    let c = other.get(&p).copied().unwrap_or(0);
                    if c == 0 {
                        continue;
                    }
                    for (&k, &rv) in &row {
                        let e = other.entry(k).or_insert(0);
                        *e = f.sub_raw(*e, f.mul_raw(c, rv));
                    }
                    other.retain(|_, x| *x != 0);
                    other_expr.resize(slot + 1, 0);
                    for (i, &re) in row_expr.iter().enumerate() {
                        other_expr[i] = f.sub_raw(other_expr[i], f.mul_raw(c, re));
                    }
                }
                basis.insert(p, (row, row_expr));
            }
        }
        for (_, e) in basis.values_mut() {
            e.resize(kept.len(), 0);
        }
    }
    Ok(TrimPlan { kept, derived })
}

/// Identity of a sum inside the unpermuted layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct SumKey {
    server: usize,
    replica: usize,
    order: usize,
    /// 0-indexed streams, ascending.
    subset: Vec<usize>,
    copy: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BaseTerm {
    stream: usize,
    label: usize,
    sign: i8,
}

#[derive(Debug, Clone)]
struct BaseSum {
    key: SumKey,
    terms: Vec<BaseTerm>,
}

#[derive(Debug, Clone)]
struct BaseBlock {
    order: usize,
    sums: Vec<BaseSum>,
}

/// Where a label was allocated.
#[derive(Debug, Clone, PartialEq, Eq)]
struct LabelInfo {
    server: usize,
    replica: usize,
    /// Unwanted streams the label is paired with (0-indexed).
    subset: Vec<usize>,
    copy: usize,
}

/// The unpermuted query for every server.
#[derive(Debug, Clone)]
struct Layout {
    servers: Vec<Vec<BaseBlock>>,
    labels: Vec<LabelInfo>,
    theta: usize,
}

fn rank_sign(subset: &[usize], x: usize) -> i8 {
    let r = subset.iter().position(|&s| s == x).expect("member");
    if r % 2 == 0 {
        1
    } else {
        -1
    }
}

fn build_layout(n: usize, m: usize, replicas: usize, theta: usize) -> Result<Layout> {
    let undesired: Vec<usize> = (0..m).filter(|&x| x != theta).collect();
    let per_replica = block_length(n, m)?;
    // subsets of the unwanted streams, per size, and their ranks
    let subsets: Vec<Vec<Vec<usize>>> = (0..m)
        .map(|size| k_subsets(undesired.len(), size).into_iter().map(|s| s.into_iter().map(|i| undesired[i - 1]).collect()).collect())
        .collect();
    let rank: Vec<HashMap<Vec<usize>, usize>> =
        subsets.iter().map(|list| list.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()).collect();
    let copies = |order: usize| (n - 1).pow(order as u32 - 1);
    let mut offsets = vec![0usize; m + 2];
    for order in 1..=m {
        offsets[order + 1] = offsets[order] + n * subsets[order - 1].len() * copies(order);
    }
    debug_assert_eq!(offsets[m + 1], per_replica);
    let label = |replica: usize, order: usize, server: usize, a: &[usize], copy: usize| -> usize {
        let per = copies(order);
        replica * per_replica + offsets[order] + (server * subsets[order - 1].len() + rank[order - 1][a]) * per + copy
    };

    let mut labels = vec![None; per_replica * replicas];
    for replica in 0..replicas {
        for order in 1..=m {
            for server in 0..n {
                for a in &subsets[order - 1] {
                    for copy in 0..copies(order) {
                        labels[label(replica, order, server, a, copy)] =
                            Some(LabelInfo { server, replica, subset: a.clone(), copy });
                    }
                }
            }
        }
    }
    let labels: Vec<LabelInfo> = labels.into_iter().map(|l| l.expect("every label allocated")).collect();

    let all: Vec<Vec<Vec<usize>>> =
        (0..=m).map(|size| k_subsets(m, size).into_iter().map(|s| s.into_iter().map(|i| i - 1).collect()).collect()).collect();
    let mut servers = Vec::with_capacity(n);
    for server in 0..n {
        let others: Vec<usize> = (0..n).filter(|&o| o != server).collect();
        let mut blocks = Vec::new();
        for order in 1..=m {
            for replica in 0..replicas {
                let mut sums = Vec::new();
                for copy in 0..copies(order) {
                    for s in &all[order] {
                        let key = SumKey { server, replica, order, subset: s.clone(), copy };
                        let terms = if s.contains(&theta) {
                            let a: Vec<usize> = s.iter().copied().filter(|&x| x != theta).collect();
                            let outer = rank_sign(s, theta);
                            let mut terms = vec![BaseTerm { stream: theta, label: label(replica, order, server, &a, copy), sign: outer }];
                            if order > 1 {
                                let inner_copies = copies(order - 1);
                                let other = others[copy / inner_copies];
                                let inner_copy = copy % inner_copies;
                                for &x in &a {
                                    let b: Vec<usize> = a.iter().copied().filter(|&y| y != x).collect();
                                    terms.push(BaseTerm {
                                        stream: x,
                                        label: label(replica, order - 1, other, &b, inner_copy),
                                        sign: outer * rank_sign(&a, x),
                                    });
                                }
                            }
                            terms
                        } else {
                            s.iter()
                                .map(|&x| {
                                    let b: Vec<usize> = s.iter().copied().filter(|&y| y != x).collect();
                                    BaseTerm { stream: x, label: label(replica, order, server, &b, copy), sign: rank_sign(s, x) }
                                })
                                .collect()
                        };
                        let mut terms = terms;
                        terms.sort_by_key(|t| t.stream);
                        sums.push(BaseSum { key, terms });
                    }
                }
                if !sums.is_empty() {
                    blocks.push(BaseBlock { order, sums });
                }
            }
        }
        servers.push(blocks);
    }
    Ok(Layout { servers, labels, theta })
}

/// The query plus what the user needs to decode the answers.
#[derive(Debug, Clone)]
pub struct GeneratedQuery {
    pub descriptor: QueryDescriptor,
    layout: Layout,
    /// `placement[server][block][base index]` = index in the sorted block.
    placement: Vec<Vec<Vec<usize>>>,
    randomness: PlcRandomness,
}

impl GeneratedQuery {
    pub fn randomness(&self) -> &PlcRandomness {
        &self.randomness
    }
}

fn compose(layout: &Layout, randomness: &PlcRandomness, field: PrimeField) -> (Vec<ServerQuery>, Vec<Vec<Vec<usize>>>) {
    let mut queries = Vec::with_capacity(layout.servers.len());
    let mut placement = Vec::with_capacity(layout.servers.len());
    for (server, blocks) in layout.servers.iter().enumerate() {
        let mut qblocks = Vec::with_capacity(blocks.len());
        let mut pblocks = Vec::with_capacity(blocks.len());
        for block in blocks {
            let mut sums: Vec<(SignedSum, usize)> = block
                .sums
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let terms = s
                        .terms
                        .iter()
                        .map(|t| Term {
                            stream: t.stream + 1,
                            position: randomness.tau[t.label],
                            coeff: field.from_i64((t.sign * randomness.signs[t.label]) as i64).value(),
                        })
                        .collect();
                    (SignedSum { terms }, i)
                })
                .collect();
            sums.sort_by_cached_key(|(s, _)| s.sort_key());
            let mut place = vec![0; sums.len()];
            for (sorted_idx, (_, base_idx)) in sums.iter().enumerate() {
                place[*base_idx] = sorted_idx;
            }
            qblocks.push(QueryBlock { order: block.order, sums: sums.into_iter().map(|(s, _)| s).collect() });
            pblocks.push(place);
        }
        queries.push(ServerQuery { server: server + 1, blocks: qblocks });
        placement.push(pblocks);
    }
    (queries, placement)
}

/// Builds the per-server queries for the instance under the given randomness.
pub fn generate_queries(instance: &PlcInstance, randomness: &PlcRandomness) -> Result<GeneratedQuery> {
    randomness.validate(instance.t)?;
    let m = instance.combination_count();
    let replicas = instance.t / block_length(instance.n, m)?;
    let layout = build_layout(instance.n, m, replicas, instance.k_star - 1)?;
    let field = instance.field();
    let (servers, placement) = compose(&layout, randomness, field);
    let descriptor = QueryDescriptor {
        q: field.modulus(),
        t: instance.t,
        combos: instance.combos.iter().map(|c| c.values().to_vec()).collect(),
        servers,
    };
    Ok(GeneratedQuery { descriptor, layout, placement, randomness: randomness.clone() })
}

/// Values of the kept sums of one server, given its streams `Z_1..Z_M'`.
pub fn answer_server(query: &ServerQuery, combos: &[VectorGF], streams: &[VectorGF], t: usize) -> Result<Vec<u64>> {
    if streams.len() != combos.len() {
        return Err(PlcError::MalformedQuery(format!("{} streams for {} combinations", streams.len(), combos.len())));
    }
    let f = combos[0].field();
    let mut out = Vec::new();
    for block in &query.blocks {
        let plan = trim_block(block, combos, t)?;
        for &i in &plan.kept {
            let mut acc = 0u64;
            for term in &block.sums[i].terms {
                let z = streams
                    .get(term.stream - 1)
                    .filter(|z| term.position >= 1 && term.position <= z.len())
                    .ok_or_else(|| PlcError::MalformedQuery(format!("term {term:?} out of range")))?;
                acc = f.add_raw(acc, f.mul_raw(term.coeff % f.modulus(), z.values()[term.position - 1]));
            }
            out.push(acc);
        }
    }
    Ok(out)
}

/// Every server's answer. Servers are independent and evaluated in parallel.
pub fn answer_queries(descriptor: &QueryDescriptor, streams: &[VectorGF]) -> Result<AnswerSet> {
    use rayon::prelude::*;
    descriptor.validate()?;
    let combos = descriptor.combo_vectors()?;
    if streams.iter().any(|z| z.len() != descriptor.t) {
        return Err(PlcError::Dimension("stream length differs from T".into()));
    }
    let answers = descriptor
        .servers
        .par_iter()
        .map(|sq| answer_server(sq, &combos, streams, descriptor.t))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnswerSet { answers })
}

/// Recovers `Z_{k*}` from honest answers.
pub fn reconstruct(generated: &GeneratedQuery, answers: &AnswerSet) -> Result<VectorGF> {
    let desc = &generated.descriptor;
    let f = desc.field()?;
    let combos = desc.combo_vectors()?;
    if answers.answers.len() != desc.servers.len() {
        return Err(PlcError::CorruptTranscript(format!(
            "{} answer lists for {} servers",
            answers.answers.len(),
            desc.servers.len()
        )));
    }

    // value of every listed sum, dropped ones rebuilt from kept ones
    let mut values: Vec<Vec<Vec<Fe>>> = Vec::with_capacity(desc.servers.len());
    for (sq, ans) in desc.servers.iter().zip(&answers.answers) {
        let mut cursor = ans.iter();
        let mut per_block = Vec::with_capacity(sq.blocks.len());
        for block in &sq.blocks {
            let plan = trim_block(block, &combos, desc.t)?;
            let mut vals = vec![f.zero(); block.sums.len()];
            let mut kept_vals = Vec::with_capacity(plan.kept.len());
            for &i in &plan.kept {
                let v = *cursor
                    .next()
                    .ok_or_else(|| PlcError::CorruptTranscript(format!("server {} sent too few answers", sq.server)))?;
                if v >= f.modulus() {
                    return Err(PlcError::CorruptTranscript(format!("answer {v} is not in GF({})", f.modulus())));
                }
                vals[i] = f.elem(v);
                kept_vals.push(f.elem(v));
            }
            for (i, combo) in &plan.derived {
                vals[*i] = combo.iter().fold(f.zero(), |acc, (k, c)| acc + *c * kept_vals[*k]);
            }
            per_block.push(vals);
        }
        if cursor.next().is_some() {
            return Err(PlcError::CorruptTranscript(format!("server {} sent too many answers", sq.server)));
        }
        values.push(per_block);
    }

    let layout = &generated.layout;
    let mut index: HashMap<&SumKey, (usize, usize, usize)> = HashMap::new();
    for (s, blocks) in layout.servers.iter().enumerate() {
        for (b, block) in blocks.iter().enumerate() {
            for (i, sum) in block.sums.iter().enumerate() {
                index.insert(&sum.key, (s, b, generated.placement[s][b][i]));
            }
        }
    }
    let theta = layout.theta;
    let mut out: Vec<Option<Fe>> = vec![None; desc.t];
    for (s, blocks) in layout.servers.iter().enumerate() {
        for (b, block) in blocks.iter().enumerate() {
            for (i, sum) in block.sums.iter().enumerate() {
                if !sum.key.subset.contains(&theta) {
                    continue;
                }
                let listed = &desc.servers[s].blocks[b].sums[generated.placement[s][b][i]];
                let value = values[s][b][generated.placement[s][b][i]];
                let own = listed.terms.iter().find(|t| t.stream == theta + 1).expect("wanted stream present");
                let mut rest = value;
                if block.order > 1 {
                    let others: Vec<usize> = (0..desc.servers.len()).filter(|&o| o != s).collect();
                    let inner_copies = (desc.servers.len() - 1).pow(block.order as u32 - 2);
                    let side_key = SumKey {
                        server: others[sum.key.copy / inner_copies],
                        replica: sum.key.replica,
                        order: block.order - 1,
                        subset: sum.key.subset.iter().copied().filter(|&x| x != theta).collect(),
                        copy: sum.key.copy % inner_copies,
                    };
                    let &(ss, sb, si) = index
                        .get(&side_key)
                        .ok_or_else(|| PlcError::Invariant("side-information sum missing".into()))?;
                    let side = &desc.servers[ss].blocks[sb].sums[si];
                    let shared = listed.terms.iter().find(|t| t.stream != theta + 1).expect("order > 1");
                    let twin = side
                        .terms
                        .iter()
                        .find(|t| t.stream == shared.stream)
                        .ok_or_else(|| PlcError::Invariant("side information does not match".into()))?;
                    let ratio = f.elem(shared.coeff).try_div(f.elem(twin.coeff))?;
                    rest = rest - ratio * values[ss][sb][si];
                }
                let symbol = rest.try_div(f.elem(own.coeff))?;
                let slot = &mut out[own.position - 1];
                if slot.replace(symbol).is_some() {
                    return Err(PlcError::Invariant(format!("position {} recovered twice", own.position)));
                }
            }
        }
    }
    let vals = out
        .into_iter()
        .enumerate()
        .map(|(p, v)| v.map(|x| x.value()).ok_or_else(|| PlcError::Invariant(format!("position {} never recovered", p + 1))))
        .collect::<Result<Vec<_>>>()?;
    Ok(VectorGF::new(f, &vals))
}

/// Symbols downloaded across servers after trimming.
pub fn downloaded_symbols(descriptor: &QueryDescriptor) -> Result<u64> {
    Ok(descriptor.layout()?.iter().flatten().map(|&(_, _, kept)| kept as u64).sum())
}

pub fn download_report(descriptor: &QueryDescriptor, capacity: Rational) -> Result<RateReport> {
    let total = downloaded_symbols(descriptor)?;
    Ok(RateReport::new(descriptor.t as u64, descriptor.q, total, capacity))
}

/// Number of sums of order `l` each server receives per `N^{M'}` symbols.
pub fn untrimmed_block_size(n: usize, m: usize, order: usize) -> usize {
    binomial(m as u64, order as u64) as usize * (n - 1).pow(order as u32 - 1)
}

/// Canonical bytes of a server's query: the equivalence key used by audits.
pub fn canonical_bytes(query: &ServerQuery) -> Vec<u8> {
    let mut out = Vec::new();
    let mut push = |x: u64| out.extend_from_slice(&x.to_le_bytes());
    push(query.blocks.len() as u64);
    for b in &query.blocks {
        push(b.order as u64);
        push(b.sums.len() as u64);
        for s in &b.sums {
            push(s.terms.len() as u64);
            for t in &s.terms {
                push(t.stream as u64);
                push(t.position as u64);
                push(t.coeff);
            }
        }
    }
    out
}

/// A summary of a server query that does not change when positions are
/// renamed or every coefficient at one position is negated: for each
/// position, the streams and sum supports touching it together with the
/// coefficient ratios between them.
pub fn orbit_invariant(query: &ServerQuery, q: u64) -> Vec<u8> {
    let f = PrimeField::new(q).expect("prime");
    let mut by_pos: BTreeMap<usize, Vec<(usize, Vec<usize>, usize, u64)>> = BTreeMap::new();
    for b in &query.blocks {
        for s in &b.sums {
            let support: Vec<usize> = s.terms.iter().map(|t| t.stream).collect();
            for t in &s.terms {
                by_pos.entry(t.position).or_default().push((b.order, support.clone(), t.stream, t.coeff));
            }
        }
    }
    let mut classes: Vec<Vec<(usize, Vec<usize>, usize, u64)>> = by_pos
        .into_values()
        .map(|mut v| {
            v.sort();
            let lead = f.elem(v[0].3);
            v.into_iter()
                .map(|(o, s, x, c)| (o, s, x, f.elem(c).try_div(lead).expect("nonzero").value()))
                .collect()
        })
        .collect();
    classes.sort();
    let mut out = Vec::new();
    for class in classes {
        out.extend_from_slice(&(class.len() as u64).to_le_bytes());
        for (o, s, x, c) in class {
            out.extend_from_slice(&(o as u64).to_le_bytes());
            out.extend_from_slice(&(s.len() as u64).to_le_bytes());
            for y in s {
                out.extend_from_slice(&(y as u64).to_le_bytes());
            }
            out.extend_from_slice(&(x as u64).to_le_bytes());
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

/// One term of a relabelled view: stream, abstract label, sign.
pub type AbstractTerm = (usize, (usize, Vec<usize>, usize), i8);

/// The unpermuted query of `server` with every label renamed to the set of
/// streams *not* using it (plus copy and replica) and signs normalized per
/// label. Equal results for two wanted streams mean the two query
/// distributions coincide: the renaming is a bijection on labels and the
/// per-label sign change is absorbed by the uniform `s`.
pub fn abstract_view(n: usize, m: usize, replicas: usize, theta: usize, server: usize) -> Result<Vec<(usize, Vec<Vec<AbstractTerm>>)>> {
    let layout = build_layout(n, m, replicas, theta - 1)?;
    let others: Vec<usize> = (0..n).filter(|&o| o != server - 1).collect();
    let rename = |label: usize| -> (usize, Vec<usize>, usize) {
        let info = &layout.labels[label];
        if info.server == server - 1 {
            (info.replica, info.subset.clone(), info.copy)
        } else {
            // side information from another server: the wanted stream is the
            // one missing besides the subset
            let mut set = info.subset.clone();
            set.push(theta - 1);
            set.sort_unstable();
            let other_idx = others.iter().position(|&o| o == info.server).expect("other server");
            let per = (n - 1).pow(info.subset.len() as u32);
            (info.replica, set, other_idx * per + info.copy)
        }
    };
    let blocks = &layout.servers[server - 1];
    let mut gauge: HashMap<(usize, Vec<usize>, usize), (usize, i8)> = HashMap::new();
    for block in blocks {
        for sum in &block.sums {
            for t in &sum.terms {
                let key = rename(t.label);
                let e = gauge.entry(key).or_insert((t.stream, t.sign));
                if t.stream < e.0 {
                    *e = (t.stream, t.sign);
                }
            }
        }
    }
    let mut out = Vec::new();
    for block in blocks {
        let mut sums: Vec<Vec<AbstractTerm>> = block
            .sums
            .iter()
            .map(|sum| {
                sum.terms
                    .iter()
                    .map(|t| {
                        let key = rename(t.label);
                        let g = gauge[&key].1;
                        (t.stream, key, t.sign * g)
                    })
                    .collect()
            })
            .collect();
        sums.sort();
        out.push((block.order, sums));
    }
    Ok(out)
}
