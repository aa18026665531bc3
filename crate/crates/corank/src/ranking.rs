//! Inference-time ranking: the pairwise probability distribution matrix,
//! the greedy row-sum ranking, the exact maximum-path-sum Hamiltonian
//! oracle, transitivity checking, and mean reciprocal rank.

use thiserror::Error;

use crate::corpus::{encode, QuerySample, Vocabulary};
use crate::embeddings::TripleBank;
use crate::features::{feature_vector, Bm25Params, CorpusStats, NormStats};
use crate::model::{pair_probability, score_passages, EmbeddedSeq, ModelConfig, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum RankError {
    #[error("a probability matrix needs at least 2 documents, got {0}")]
    TooFewDocuments(usize),
    #[error("exact ranking supports at most 20 documents, got {n}; use greedy_rank")]
    TooManyForExact { n: usize },
    #[error("probability matrix entry ({i},{j}) = {value} outside [0, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("probability matrix violates antisymmetry at ({i},{j}): {rij} + {rji} != 1")]
    NotAntisymmetric { i: usize, j: usize, rij: f64, rji: f64 },
    #[error("mrr over an empty result stream")]
    EmptyStream,
    #[error(
        "paranoid check failed on query {query_id} pair ({i},{j}): \
         matrix {matrix} vs direct pair evaluation {direct}"
    )]
    ParanoidMismatch {
        query_id: String,
        i: usize,
        j: usize,
        matrix: f64,
        direct: f64,
    },
    #[error("gold index {gold} out of range for {n} documents")]
    BadGoldIndex { gold: usize, n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Pairwise win probabilities: `r[i][j]` is the probability that
/// document i beats document j. Off-diagonal pairs satisfy
/// `r[i][j] + r[j][i] = 1` exactly; the diagonal is fixed at 0.5, which
/// shifts every greedy row sum equally and leaves the ranking unchanged.
#[derive(Debug, Clone)]
pub struct Pdm {
    n: usize,
    r: Vec<f64>,
}

impl Pdm {
    /// Build from per-document scores: `r[i][j] = sigmoid(s_i - s_j)`,
    /// with the lower triangle filled as the exact complement.
    pub fn from_scores(scores: &[f64]) -> Result<Self, RankError> {
        let n = scores.len();
        if n < 2 {
            return Err(RankError::TooFewDocuments(n));
        }
        let mut pdm = Pdm {
            n,
            r: vec![0.5; n * n],
        };
        for i in 0..n {
            for j in i + 1..n {
                let (p_ij, p_ji) = pair_probability(scores[i], scores[j]);
                pdm.r[i * n + j] = p_ij;
                pdm.r[j * n + i] = p_ji;
            }
        }
        Ok(pdm)
    }

    /// Build from explicit entries (row-major), validating range and
    /// antisymmetry; the diagonal is forced to 0.5.
    pub fn from_matrix(n: usize, entries: Vec<f64>) -> Result<Self, RankError> {
        if n < 2 {
            return Err(RankError::TooFewDocuments(n));
        }
        assert_eq!(entries.len(), n * n, "entries must be n*n");
        let mut pdm = Pdm { n, r: entries };
        for i in 0..n {
            pdm.r[i * n + i] = 0.5;
            for j in 0..n {
                let v = pdm.r[i * n + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(RankError::OutOfRange { i, j, value: v });
                }
                if i != j {
                    let w = pdm.r[j * n + i];
                    if (v + w - 1.0).abs() > 1e-9 {
                        return Err(RankError::NotAntisymmetric {
                            i,
                            j,
                            rij: v,
                            rji: w,
                        });
                    }
                }
            }
        }
        Ok(pdm)
    }

    /// Random antisymmetric matrix (upper triangle uniform in (0,1)),
    /// generally intransitive; used by stress tests.
    pub fn random(n: usize, rng: &mut impl rand::Rng) -> Result<Self, RankError> {
        if n < 2 {
            return Err(RankError::TooFewDocuments(n));
        }
        let mut pdm = Pdm {
            n,
            r: vec![0.5; n * n],
        };
        for i in 0..n {
            for j in i + 1..n {
                let p: f64 = rng.random_range(0.0..1.0);
                pdm.r[i * n + j] = p;
                pdm.r[j * n + i] = 1.0 - p;
            }
        }
        Ok(pdm)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.n + j]
    }

    /// 1 if document u strictly beats v, else 0 (ties win nothing).
    pub fn win(&self, u: usize, v: usize) -> u32 {
        u32::from(self.get(u, v) > self.get(v, u))
    }
}

/// `rank[i]` is the 1-based rank of document i; `order[k]` is the
/// document at rank k+1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingResult {
    pub rank: Vec<usize>,
    pub order: Vec<usize>,
}

impl RankingResult {
    fn from_order(order: Vec<usize>) -> Self {
        let mut rank = vec![0; order.len()];
        for (pos, &doc) in order.iter().enumerate() {
            rank[doc] = pos + 1;
        }
        RankingResult { rank, order }
    }
}

/// Greedy ranking: sort documents by descending row sum of the matrix
/// (diagonal included), ties broken by lower index. O(n^2).
pub fn greedy_rank(pdm: &Pdm) -> RankingResult {
    let n = pdm.n();
    let sums: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| pdm.get(i, j)).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sums[b]
            .partial_cmp(&sums[a])
            .expect("finite row sums")
            .then(a.cmp(&b))
    });
    RankingResult::from_order(order)
}

/// Tournament sum collected along a visiting order: the number of
/// consecutive pairs the order satisfies.
pub fn path_sum(pdm: &Pdm, order: &[usize]) -> u32 {
    order.windows(2).map(|w| pdm.win(w[0], w[1])).sum()
}

/// Exact ranking: the Hamiltonian path with maximum edge sum over the
/// win tournament (edge u->v weighs 1 when u strictly beats v). Subset
/// DP in O(n^2 * 2^n); among maximum-sum paths the lexicographically
/// smallest vertex sequence wins. Limited to n <= 20.
pub fn exact_rank(pdm: &Pdm) -> Result<RankingResult, RankError> {
    let n = pdm.n();
    if n > 20 {
        return Err(RankError::TooManyForExact { n });
    }
    let full: usize = (1 << n) - 1;
    // best[s][v]: max path sum over the vertex set s starting at v.
    let mut best = vec![vec![0u8; n]; 1 << n];
    for s in 1..=full {
        for v in 0..n {
            if s & (1 << v) == 0 {
                continue;
            }
            let rest = s & !(1 << v);
            if rest == 0 {
                continue;
            }
            let mut m = 0u8;
            for (u, b) in best[rest].iter().enumerate().take(n) {
                if rest & (1 << u) == 0 {
                    continue;
                }
                let cand = pdm.win(v, u) as u8 + b;
                m = m.max(cand);
            }
            best[s][v] = m;
        }
    }
    let target = (0..n).map(|v| best[full][v]).max().expect("n >= 2");
    // Reconstruct the lexicographically smallest optimal path by always
    // taking the smallest vertex that still achieves the target.
    let mut order = Vec::with_capacity(n);
    let mut set = full;
    let mut current = (0..n)
        .find(|&v| best[full][v] == target)
        .expect("some start achieves the target");
    order.push(current);
    set &= !(1 << current);
    while set != 0 {
        let needed = best[set | (1 << current)][current];
        let next = (0..n)
            .find(|&u| {
                set & (1 << u) != 0 && pdm.win(current, u) as u8 + best[set][u] == needed
            })
            .expect("dp invariant: some successor achieves the value");
        order.push(next);
        current = next;
        set &= !(1 << current);
    }
    Ok(RankingResult::from_order(order))
}

/// Count of ordered triples (i, j, k) where i beats j and j beats k but
/// i fails to beat k. Zero means the win tournament is transitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub violations: usize,
    pub triples_checked: usize,
}

pub fn consistency_check(pdm: &Pdm) -> ConsistencyReport {
    let n = pdm.n();
    let mut violations = 0;
    let mut checked = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j || pdm.win(i, j) == 0 {
                continue;
            }
            for k in 0..n {
                if k == i || k == j || pdm.win(j, k) == 0 {
                    continue;
                }
                checked += 1;
                if pdm.win(i, k) == 0 {
                    violations += 1;
                }
            }
        }
    }
    ConsistencyReport {
        violations,
        triples_checked: checked,
    }
}

/// Mean reciprocal rank over (ranking, gold index) pairs.
pub fn mrr<I>(results: I) -> Result<f64, RankError>
where
    I: IntoIterator<Item = (RankingResult, usize)>,
{
    let mut sum = 0.0;
    let mut count = 0usize;
    for (result, gold) in results {
        if gold >= result.rank.len() {
            return Err(RankError::BadGoldIndex {
                gold,
                n: result.rank.len(),
            });
        }
        sum += 1.0 / result.rank[gold] as f64;
        count += 1;
    }
    if count == 0 {
        return Err(RankError::EmptyStream);
    }
    Ok(sum / count as f64)
}

/// Everything needed to score a query's passages in eval mode.
pub struct Scorer<'a> {
    pub params: &'a ModelParams,
    pub config: &'a ModelConfig,
    pub vocab: &'a Vocabulary,
    pub banks: &'a TripleBank,
    pub stats: &'a CorpusStats,
    pub norm: NormStats,
    pub bm25: Bm25Params,
}

impl Scorer<'_> {
    /// Per-document scores for one query sample.
    pub fn scores(&self, sample: &QuerySample) -> Result<Vec<f64>, RankError> {
        let q_enc = encode(&sample.query_tokens, self.vocab, self.config.max_query_len);
        let query = EmbeddedSeq::from_encoded(&q_enc, self.banks);
        let docs: Vec<(EmbeddedSeq, crate::features::FeatureVector)> = sample
            .passages
            .iter()
            .map(|passage| {
                let d_enc = encode(passage, self.vocab, self.config.max_doc_len);
                let emb = EmbeddedSeq::from_encoded(&d_enc, self.banks);
                let feats = feature_vector(
                    &sample.query_tokens,
                    passage,
                    self.stats,
                    self.bm25.k1,
                    self.bm25.b,
                    Some(&self.norm),
                );
                (emb, feats)
            })
            .collect();
        let refs: Vec<(&EmbeddedSeq, crate::features::FeatureVector)> =
            docs.iter().map(|(e, f)| (e, *f)).collect();
        Ok(score_passages(self.params, &query, &refs)?)
    }

    /// Probability matrix for one query: N model scores, pairwise
    /// probabilities by construction.
    pub fn build_pdm(&self, sample: &QuerySample) -> Result<Pdm, RankError> {
        Pdm::from_scores(&self.scores(sample)?)
    }

    /// Rank one sample, greedily or exactly.
    pub fn rank(&self, sample: &QuerySample, exact: bool) -> Result<RankingResult, RankError> {
        let pdm = self.build_pdm(sample)?;
        if exact {
            exact_rank(&pdm)
        } else {
            Ok(greedy_rank(&pdm))
        }
    }

    /// Cross-check sampled matrix entries against a literal pairwise
    /// forward pass. The matrix is built from one score per document, so
    /// both routes must agree to within float noise; a mismatch means
    /// eval-mode scoring leaked partner state.
    pub fn paranoid_check(
        &self,
        sample: &QuerySample,
        pdm: &Pdm,
        pairs: usize,
        tolerance: f64,
        rng: &mut impl rand::Rng,
    ) -> Result<(), RankError> {
        use crate::model::{forward_pair, BoundParams, Mode};
        use crate::tensor::Tape;

        let q_enc = encode(&sample.query_tokens, self.vocab, self.config.max_query_len);
        let query = EmbeddedSeq::from_encoded(&q_enc, self.banks);
        let n = sample.passages.len();
        for _ in 0..pairs {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let embed = |idx: usize| {
                let d_enc = encode(&sample.passages[idx], self.vocab, self.config.max_doc_len);
                let emb = EmbeddedSeq::from_encoded(&d_enc, self.banks);
                let feats = feature_vector(
                    &sample.query_tokens,
                    &sample.passages[idx],
                    self.stats,
                    self.bm25.k1,
                    self.bm25.b,
                    Some(&self.norm),
                );
                (emb, feats)
            };
            let (di, fi) = embed(i);
            let (dj, fj) = embed(j);
            let mut tape = Tape::new();
            let bound = BoundParams::bind(&mut tape, self.params, false);
            let pf = forward_pair(&mut tape, &bound, &query, &di, &dj, &fi, &fj, Mode::Eval)
                .map_err(RankError::Model)?;
            if (pf.p1 - pdm.get(i, j)).abs() > tolerance {
                return Err(RankError::ParanoidMismatch {
                    query_id: sample.query_id.clone(),
                    i,
                    j,
                    matrix: pdm.get(i, j),
                    direct: pf.p1,
                });
            }
        }
        Ok(())
    }

    /// Mean reciprocal rank over labeled samples.
    pub fn mrr(&self, samples: &[QuerySample]) -> Result<f64, RankError> {
        let mut results = Vec::with_capacity(samples.len());
        for sample in samples {
            let gold = sample.gold_index.ok_or(RankError::BadGoldIndex {
                gold: usize::MAX,
                n: sample.passages.len(),
            })?;
            results.push((self.rank(sample, false)?, gold));
        }
        mrr(results)
    }
}
