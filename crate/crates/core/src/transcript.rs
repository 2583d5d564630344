//! Binary transcripts for bit-exact replay.
//!
//! Layout: `PLCT`, a little-endian `u16` version, then sections. A section
//! is a 4-byte tag, a `u64` word count and that many little-endian `u64`
//! words. Every section appears exactly once, in the order written.

use std::path::Path;

use crate::error::{PlcError, Result};
use crate::ffield::Fe;
use crate::gflinalg::{MatrixGF, VectorGF};
use crate::pipeline::ProtocolRun;
use crate::plc::{self, AnswerSet, PlcInstance, PlcRandomness, QueryBlock, ServerQuery, SignedSum, Term};
use crate::protocol::{Dataset, PrivacyMode, SetupParams};

pub const MAGIC: &[u8; 4] = b"PLCT";
pub const VERSION: u16 = 1;

const TAGS: [&[u8; 4]; 9] = [b"PARM", b"DATA", b"GMAT", b"COMB", b"USER", b"RAND", b"QURY", b"ANSW", b"RECV"];

/// Everything needed to re-run a protocol execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub params: SetupParams,
    pub data: Dataset,
    pub g: MatrixGF,
    pub combos: Vec<VectorGF>,
    pub k_star: usize,
    pub demand_scale: Fe,
    pub randomness: PlcRandomness,
    pub queries: Vec<ServerQuery>,
    pub answers: AnswerSet,
    pub recovered: VectorGF,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ReplayReport {
    pub queries_match: bool,
    pub answers_match: bool,
    pub reconstruction_match: bool,
}

impl ReplayReport {
    pub fn verified(&self) -> bool {
        self.queries_match && self.answers_match && self.reconstruction_match
    }
}

impl Transcript {
    pub fn from_run(run: &ProtocolRun, data: &Dataset) -> Self {
        Self {
            params: run.params.clone(),
            data: data.clone(),
            g: run.encoded.g.clone(),
            combos: run.encoded.combos.clone(),
            k_star: run.encoded.k_star,
            demand_scale: run.encoded.demand_scale,
            randomness: run.query.randomness().clone(),
            queries: run.query.descriptor.servers.clone(),
            answers: run.answers.clone(),
            recovered: run.recovered.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mode = match p.privacy_mode {
            PrivacyMode::Joint => 0,
            PrivacyMode::Individual => 1,
        };
        let mut sections: Vec<Vec<u64>> = Vec::with_capacity(TAGS.len());
        sections.push(vec![p.n, p.k, p.d, p.q, p.t, mode, p.seed]);
        sections.push(matrix_words(self.data.x()));
        sections.push(matrix_words(&self.g));
        let mut comb = vec![self.combos.len() as u64, self.combos.first().map_or(0, |c| c.len() as u64)];
        comb.extend(self.combos.iter().flat_map(|c| c.values().iter().copied()));
        sections.push(comb);
        sections.push(vec![self.k_star as u64, self.demand_scale.value()]);
        let mut rand = vec![self.randomness.tau.len() as u64];
        rand.extend(self.randomness.tau.iter().map(|&x| x as u64));
        rand.extend(self.randomness.signs.iter().map(|&s| u64::from(s < 0)));
        sections.push(rand);
        let mut q = vec![self.queries.len() as u64];
        for sq in &self.queries {
            q.push(sq.server as u64);
            q.push(sq.blocks.len() as u64);
            for b in &sq.blocks {
                q.push(b.order as u64);
                q.push(b.sums.len() as u64);
                for s in &b.sums {
                    q.push(s.terms.len() as u64);
                    for t in &s.terms {
                        q.extend([t.stream as u64, t.position as u64, t.coeff]);
                    }
                }
            }
        }
        sections.push(q);
        let mut a = vec![self.answers.answers.len() as u64];
        for list in &self.answers.answers {
            a.push(list.len() as u64);
            a.extend(list);
        }
        sections.push(a);
        let mut r = vec![self.recovered.len() as u64];
        r.extend(self.recovered.values());
        sections.push(r);

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for (tag, words) in TAGS.iter().zip(sections) {
            out.extend_from_slice(*tag);
            out.extend_from_slice(&(words.len() as u64).to_le_bytes());
            for w in words {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| PlcError::CorruptTranscript(m.to_string());
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing PLCT header"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(PlcError::CorruptTranscript(format!("unsupported version {version}")));
        }
        let mut pos = 6;
        let mut sections = Vec::with_capacity(TAGS.len());
        for tag in TAGS {
            let head = bytes.get(pos..pos + 12).ok_or_else(|| corrupt("truncated section header"))?;
            if &head[..4] != tag {
                return Err(PlcError::CorruptTranscript(format!(
                    "expected section {}, found {:?}",
                    String::from_utf8_lossy(tag),
                    String::from_utf8_lossy(&head[..4])
                )));
            }
            let len = u64::from_le_bytes(head[4..12].try_into().expect("8 bytes")) as usize;
            pos += 12;
            let body = len
                .checked_mul(8)
                .and_then(|n| bytes.get(pos..pos + n))
                .ok_or_else(|| corrupt("truncated section body"))?;
            sections.push(Words::new(body.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()));
            pos += len * 8;
        }
        if pos != bytes.len() {
            return Err(corrupt("trailing bytes after the last section"));
        }
        let mut it = sections.into_iter();
        let mut next = || it.next().expect("all sections read");

        let mut s = next();
        let (n, k, d, q, t) = (s.take()?, s.take()?, s.take()?, s.take()?, s.take()?);
        let privacy_mode = match s.take()? {
            0 => PrivacyMode::Joint,
            1 => PrivacyMode::Individual,
            m => return Err(PlcError::CorruptTranscript(format!("unknown privacy mode {m}"))),
        };
        let params = SetupParams { n, k, d, q, t, privacy_mode, seed: s.take()? };
        s.end()?;
        params.validate().map_err(|e| PlcError::CorruptTranscript(format!("parameters: {e}")))?;
        let f = params.field()?;

        let data = Dataset::new(next().matrix(f)?)?;
        let g = next().matrix(f)?;
        let mut s = next();
        let (m, j) = (s.take_usize()?, s.take_usize()?);
        let combos = (0..m).map(|_| Ok(VectorGF::new(f, &s.elems(j, q)?))).collect::<Result<Vec<_>>>()?;
        s.end()?;
        let mut s = next();
        let k_star = s.take_usize()?;
        let demand_scale = f.elem(s.elem(q)?);
        s.end()?;
        let mut s = next();
        let len = s.take_usize()?;
        let tau = (0..len).map(|_| s.take_usize()).collect::<Result<Vec<_>>>()?;
        let signs = (0..len)
            .map(|_| match s.take()? {
                0 => Ok(1i8),
                1 => Ok(-1i8),
                x => Err(PlcError::CorruptTranscript(format!("sign word {x}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        s.end()?;
        let randomness = PlcRandomness { tau, signs };

        let mut s = next();
        let mut queries = Vec::new();
        for _ in 0..s.take()? {
            let server = s.take_usize()?;
            let mut blocks = Vec::new();
            for _ in 0..s.take()? {
                let order = s.take_usize()?;
                let mut sums = Vec::new();
                for _ in 0..s.take()? {
                    let mut terms = Vec::new();
                    for _ in 0..s.take()? {
                        terms.push(Term { stream: s.take_usize()?, position: s.take_usize()?, coeff: s.elem(q)? });
                    }
                    sums.push(SignedSum { terms });
                }
                blocks.push(QueryBlock { order, sums });
            }
            queries.push(ServerQuery { server, blocks });
        }
        s.end()?;
        let mut s = next();
        let mut answers = Vec::new();
        for _ in 0..s.take()? {
            let len = s.take_usize()?;
            answers.push(s.elems(len, q)?);
        }
        s.end()?;
        let mut s = next();
        let len = s.take_usize()?;
        let recovered = VectorGF::new(f, &s.elems(len, q)?);
        s.end()?;

        Ok(Self {
            params,
            data,
            g,
            combos,
            k_star,
            demand_scale,
            randomness,
            queries,
            answers: AnswerSet { answers },
            recovered,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| PlcError::InvalidParams(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| PlcError::InvalidParams(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn matrix_words(m: &MatrixGF) -> Vec<u64> {
    let mut w = vec![m.rows() as u64, m.cols() as u64];
    w.extend(m.values());
    w
}

/// Cursor over one section's words.
struct Words {
    words: Vec<u64>,
    pos: usize,
}

impl Words {
    fn new(words: Vec<u64>) -> Self {
        Self { words, pos: 0 }
    }

    fn take(&mut self) -> Result<u64> {
        let w = self.words.get(self.pos).copied().ok_or_else(|| PlcError::CorruptTranscript("section too short".into()))?;
        self.pos += 1;
        Ok(w)
    }

    fn take_usize(&mut self) -> Result<usize> {
        usize::try_from(self.take()?).map_err(|_| PlcError::CorruptTranscript("length overflows".into()))
    }

    fn elem(&mut self, q: u64) -> Result<u64> {
        let v = self.take()?;
        if v >= q {
            return Err(PlcError::CorruptTranscript(format!("{v} is not an element of GF({q})")));
        }
        Ok(v)
    }

    fn elems(&mut self, n: usize, q: u64) -> Result<Vec<u64>> {
        if n > self.words.len() - self.pos {
            return Err(PlcError::CorruptTranscript("section too short".into()));
        }
        (0..n).map(|_| self.elem(q)).collect()
    }

    fn matrix(&mut self, f: crate::ffield::PrimeField) -> Result<MatrixGF> {
        let (r, c) = (self.take_usize()?, self.take_usize()?);
        let len = r.checked_mul(c).ok_or_else(|| PlcError::CorruptTranscript("matrix too large".into()))?;
        let vals = self.elems(len, f.modulus())?;
        self.end()?;
        MatrixGF::new(f, r, c, vals)
    }

    fn end(&self) -> Result<()> {
        if self.pos != self.words.len() {
            return Err(PlcError::CorruptTranscript("section has trailing words".into()));
        }
        Ok(())
    }
}

/// Regenerates the queries, recomputes the answers and decodes the stored
/// answers, comparing each with what was recorded.
pub fn replay(t: &Transcript) -> Result<ReplayReport> {
    let inst = PlcInstance::new(t.params.n as usize, t.combos.clone(), t.k_star, t.params.t as usize)?;
    let generated = plc::generate_queries(&inst, &t.randomness)?;
    let queries_match = generated.descriptor.servers == t.queries;
    let streams = crate::jplc::form_coded_streams(&t.g, &t.combos, &t.data)?.1;
    let answers = plc::answer_queries(&generated.descriptor, &streams)?;
    let answers_match = answers == t.answers;
    let reconstruction_match = match plc::reconstruct(&generated, &t.answers) {
        Ok(z) => z.scale(t.demand_scale) == t.recovered,
        Err(PlcError::CorruptTranscript(_)) => false,
        Err(e) => return Err(e),
    };
    Ok(ReplayReport { queries_match, answers_match, reconstruction_match })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline;
    use crate::protocol::Demand;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64, mode: PrivacyMode, k: u64, d: u64, q: u64) -> Transcript {
        let params = SetupParams::with_multiplier(2, k, d, q, 1, mode, seed).unwrap();
        let f = params.field().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let demand = Demand::random(f, k as usize, d as usize, &mut rng).unwrap();
        let data = Dataset::random(f, k as usize, params.t as usize, &mut rng).unwrap();
        let run = pipeline::run(&params, &demand, &data, &mut rng).unwrap();
        Transcript::from_run(&run, &data)
    }

    #[test]
    fn round_trip_and_verify() {
        let t = sample(1, PrivacyMode::Joint, 3, 2, 3);
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], MAGIC);
        let back = Transcript::from_bytes(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_bytes(), bytes);
        assert!(replay(&back).unwrap().verified());
    }

    #[test]
    fn flipped_answer_is_reported() {
        let mut t = sample(2, PrivacyMode::Individual, 5, 2, 3);
        t.answers.answers[1][3] = (t.answers.answers[1][3] + 1) % 3;
        let rep = replay(&Transcript::from_bytes(&t.to_bytes()).unwrap()).unwrap();
        assert!(rep.queries_match);
        assert!(!rep.answers_match);
        assert!(!rep.reconstruction_match);
    }

    #[test]
    fn damaged_bytes_are_rejected() {
        let bytes = sample(3, PrivacyMode::Joint, 3, 2, 3).to_bytes();
        assert!(Transcript::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Transcript::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(Transcript::from_bytes(&bad).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Transcript::from_bytes(&longer).is_err());
        // an answer word outside the field
        let mut bad = bytes;
        let n = bad.len();
        bad[n - 8..].copy_from_slice(&7u64.to_le_bytes());
        assert!(matches!(Transcript::from_bytes(&bad), Err(PlcError::CorruptTranscript(_))));
    }

    #[test]
    fn many_random_transcripts_verify() {
        for seed in 0..50 {
            let (mode, k, d, q) = if seed % 2 == 0 { (PrivacyMode::Joint, 3, 2, 3) } else { (PrivacyMode::Individual, 4, 3, 5) };
            let t = sample(seed, mode, k, d, q);
            let back = Transcript::from_bytes(&t.to_bytes()).unwrap();
            assert!(replay(&back).unwrap().verified(), "seed {seed}");
        }
    }
}
