//! Test and evaluation instruments: an independent coordinate-update
//! oracle for cross-checking the engine, synthetic corpus generation
//! from known ground truth, topic matching, and human-facing topic
//! reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::ef::{digamma, DirichletParams, ProbVector};
use crate::error::{Error, Result};
use crate::model::{Corpus, Document, Hyperparameters, VariationalState, Vocabulary};

/// A sampled corpus together with the mixing proportions that produced
/// it.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub true_topic_word: Vec<ProbVector>,
    pub true_doc_topic: Vec<ProbVector>,
    pub corpus: Corpus,
}

/// Parameters of the generative process: Dirichlet priors for the
/// document mixes and for each topic's word distribution, and the
/// corpus dimensions to sample.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub vocab_size: usize,
    pub documents: usize,
    pub tokens_per_document: usize,
    /// Prior for every document's topic mix, length `topics`.
    pub alpha_prior: DirichletParams,
    /// One word prior per topic, each of length `vocab_size`. Disjoint
    /// concentrated priors produce well-separated topics.
    pub beta_priors: Vec<DirichletParams>,
    pub seed: u64,
}

impl SyntheticConfig {
    /// A shared word prior for all topics.
    pub fn shared_beta(
        topics: usize,
        vocab_size: usize,
        documents: usize,
        tokens_per_document: usize,
        alpha_prior: DirichletParams,
        beta_prior: DirichletParams,
        seed: u64,
    ) -> Self {
        Self {
            topics,
            vocab_size,
            documents,
            tokens_per_document,
            alpha_prior,
            beta_priors: vec![beta_prior; topics],
            seed,
        }
    }

    /// Near-degenerate topics on disjoint word supports: topic k puts
    /// pseudocount `high` on its own `vocab_size / topics` words and
    /// `low` elsewhere.
    pub fn disjoint_topics(
        topics: usize,
        vocab_size: usize,
        documents: usize,
        tokens_per_document: usize,
        alpha: f64,
        high: f64,
        low: f64,
        seed: u64,
    ) -> Result<Self> {
        if vocab_size < topics {
            return Err(Error::Domain(format!(
                "vocabulary size {vocab_size} smaller than topic count {topics}"
            )));
        }
        let support = vocab_size / topics;
        let beta_priors = (0..topics)
            .map(|k| {
                let mut row = vec![low; vocab_size];
                for entry in row.iter_mut().skip(k * support).take(support) {
                    *entry = high;
                }
                DirichletParams::new(row)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            topics,
            vocab_size,
            documents,
            tokens_per_document,
            alpha_prior: DirichletParams::symmetric(topics, alpha)?,
            beta_priors,
            seed,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.topics < 2 {
            return Err(Error::Domain("topic count must be at least 2".into()));
        }
        if self.vocab_size < self.topics {
            return Err(Error::Domain(
                "vocabulary must be at least as large as the topic count".into(),
            ));
        }
        if self.documents == 0 || self.tokens_per_document == 0 {
            return Err(Error::Domain(
                "documents and tokens per document must be positive".into(),
            ));
        }
        if self.alpha_prior.len() != self.topics {
            return Err(Error::Dimension(format!(
                "alpha prior has length {}, expected {}",
                self.alpha_prior.len(),
                self.topics
            )));
        }
        if self.beta_priors.len() != self.topics
            || self.beta_priors.iter().any(|b| b.len() != self.vocab_size)
        {
            return Err(Error::Dimension(
                "beta priors must be one length-V vector per topic".into(),
            ));
        }
        Ok(())
    }
}

fn sample_dirichlet(rng: &mut ChaCha8Rng, params: &DirichletParams) -> ProbVector {
    let draws: Vec<f64> = params
        .pseudocounts()
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("positive shape by construction")
                .sample(rng)
        })
        .collect();
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 {
        // Every gamma draw underflowed; fall back to uniform.
        return ProbVector::uniform(draws.len()).expect("non-empty pseudocounts");
    }
    ProbVector::new(draws.iter().map(|d| d / sum).collect())
        .expect("normalized gamma draws form a distribution")
}

fn sample_categorical(rng: &mut ChaCha8Rng, p: &ProbVector) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &e) in p.entries().iter().enumerate() {
        acc += e;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Samples a corpus from the generative process: per-topic word
/// distributions, per-document topic mixes, then a topic and a word per
/// token. Deterministic for a fixed seed.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticTruth> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let true_topic_word: Vec<ProbVector> = config
        .beta_priors
        .iter()
        .map(|b| sample_dirichlet(&mut rng, b))
        .collect();

    let mut true_doc_topic = Vec::with_capacity(config.documents);
    let mut documents = Vec::with_capacity(config.documents);
    for _ in 0..config.documents {
        let theta = sample_dirichlet(&mut rng, &config.alpha_prior);
        let tokens = (0..config.tokens_per_document)
            .map(|_| {
                let z = sample_categorical(&mut rng, &theta);
                sample_categorical(&mut rng, &true_topic_word[z])
            })
            .collect();
        true_doc_topic.push(theta);
        documents.push(Document::new(tokens)?);
    }

    let vocab = Vocabulary::new((0..config.vocab_size).map(|v| format!("w{v}")).collect())?;
    Ok(SyntheticTruth {
        true_topic_word,
        true_doc_topic,
        corpus: Corpus::new(documents, vocab)?,
    })
}

/// One coordinate update written in dense matrix form, sharing nothing
/// with the message or engine code paths beyond the digamma primitive.
/// Snapshot semantics match the engine's epoch: responsibilities are
/// proportional to exp of the epoch-start digamma moments, then both
/// pseudocount matrices are rebuilt from the prior plus responsibility
/// sums.
pub fn vb_oracle_epoch(
    state: &VariationalState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
) -> Result<VariationalState> {
    state.validate(corpus, hyper)?;
    let topics = hyper.topics();

    let moments = |row: &[f64]| -> Result<Vec<f64>> {
        let psi_total = digamma(row.iter().sum())?;
        row.iter().map(|&x| Ok(digamma(x)? - psi_total)).collect()
    };

    let elog_theta: Vec<Vec<f64>> = state
        .doc_topic
        .iter()
        .map(|row| moments(row))
        .collect::<Result<_>>()?;
    let elog_phi: Vec<Vec<f64>> = state
        .topic_word
        .iter()
        .map(|row| moments(row))
        .collect::<Result<_>>()?;

    let mut doc_topic = Vec::with_capacity(corpus.num_documents());
    let mut topic_word = vec![hyper.beta_prior().pseudocounts().to_vec(); topics];
    let mut responsibilities = Vec::with_capacity(corpus.num_documents());
    for (m, doc) in corpus.documents().iter().enumerate() {
        let mut alpha_row = hyper.alpha_prior().pseudocounts().to_vec();
        let mut doc_rs = Vec::with_capacity(doc.len());
        for &token in doc.tokens() {
            let weights: Vec<f64> = (0..topics)
                .map(|k| (elog_theta[m][k] + elog_phi[k][token]).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "token {token} of document {m} has vanishing topic weights"
                )));
            }
            let r: Vec<f64> = weights.iter().map(|w| w / total).collect();
            for k in 0..topics {
                alpha_row[k] += r[k];
                topic_word[k][token] += r[k];
            }
            doc_rs.push(ProbVector::new(r)?);
        }
        doc_topic.push(alpha_row);
        responsibilities.push(doc_rs);
    }
    Ok(VariationalState {
        doc_topic,
        topic_word,
        responsibilities,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Greedy one-to-one assignment of estimated topic rows to truth rows,
/// picking the highest-cosine unmatched pair each round, ties broken by
/// lower topic index. Returns `perm` with `perm[t]` the estimated row
/// assigned to truth row `t`, and the mean matched cosine.
pub fn match_topics(estimated: &[Vec<f64>], truth: &[Vec<f64>]) -> (Vec<usize>, f64) {
    assert_eq!(
        estimated.len(),
        truth.len(),
        "topic counts must match for matching"
    );
    let k = truth.len();
    let mut perm = vec![usize::MAX; k];
    let mut est_used = vec![false; k];
    let mut truth_used = vec![false; k];
    let mut total = 0.0;
    for _ in 0..k {
        let mut best: Option<(f64, usize, usize)> = None;
        for t in 0..k {
            if truth_used[t] {
                continue;
            }
            for e in 0..k {
                if est_used[e] {
                    continue;
                }
                let c = cosine(&estimated[e], &truth[t]);
                let better = match best {
                    None => true,
                    Some((bc, _, _)) => c > bc,
                };
                if better {
                    best = Some((c, t, e));
                }
            }
        }
        let (c, t, e) = best.expect("at least one unmatched pair remains");
        perm[t] = e;
        truth_used[t] = true;
        est_used[e] = true;
        total += c;
    }
    (perm, total / k as f64)
}

/// One matched term in a topic report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWord {
    pub term: String,
    pub p: f64,
}

/// Ranked word list for one topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReportRow {
    pub topic: usize,
    pub words: Vec<TopicWord>,
}

/// Ranked word lists for every topic.
pub type TopicReport = Vec<TopicReportRow>;

/// The `n` highest-probability terms of one topic under the Dirichlet
/// mean of its word pseudocounts, ties broken by vocabulary id.
pub fn top_words(
    state: &VariationalState,
    vocab: &Vocabulary,
    topic: usize,
    n: usize,
) -> Result<TopicReportRow> {
    let row = state
        .topic_word
        .get(topic)
        .ok_or_else(|| Error::Index(format!("topic {topic} out of range")))?;
    if row.len() != vocab.len() {
        return Err(Error::Dimension(format!(
            "topic row has length {}, vocabulary has {}",
            row.len(),
            vocab.len()
        )));
    }
    if n == 0 {
        return Err(Error::Domain("word count must be at least 1".into()));
    }
    let total: f64 = row.iter().sum();
    let mut ranked: Vec<(usize, f64)> = row.iter().map(|&x| x / total).enumerate().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    Ok(TopicReportRow {
        topic,
        words: ranked
            .into_iter()
            .map(|(id, p)| TopicWord {
                term: vocab.term(id).expect("id within vocabulary").to_string(),
                p,
            })
            .collect(),
    })
}

/// Topic report rows for all topics.
pub fn topic_report(
    state: &VariationalState,
    vocab: &Vocabulary,
    n: usize,
) -> Result<TopicReport> {
    (0..state.topic_word.len())
        .map(|k| top_words(state, vocab, k, n))
        .collect()
}
