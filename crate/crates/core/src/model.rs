//! Corpus representation, prior hyperparameters, and the variational
//! state (document-topic and topic-word Dirichlet matrices plus
//! per-token responsibilities), including initialization and the JSON
//! persistence format.

use std::collections::HashMap;
use std::io::{BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ef::{DirichletParams, ProbVector};
use crate::error::{Error, Result};

/// Fraction of the mean word prior used as the amplitude of the
/// symmetry-breaking perturbation on topic-word rows.
const PERTURBATION_FRACTION: f64 = 0.1;

/// One document: its tokens as vocabulary ids, order preserved and
/// duplicates allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    tokens: Vec<usize>,
}

impl Document {
    pub fn new(tokens: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("document has no tokens".into()));
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Bijection between terms and ids `0..V`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Empty("vocabulary".into()));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (id, term) in terms.iter().enumerate() {
            if index.insert(term.clone(), id).is_some() {
                return Err(Error::Domain(format!(
                    "duplicate vocabulary term {term:?}"
                )));
            }
        }
        Ok(Self { terms, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: usize) -> Option<&str> {
        self.terms.get(id).map(String::as_str)
    }
}

/// The corpus: at least one non-empty document over a shared vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    vocab: Vocabulary,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, vocab: Vocabulary) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::Empty("corpus has no documents".into()));
        }
        let vocab_size = vocab.len();
        for (m, doc) in documents.iter().enumerate() {
            if let Some(&bad) = doc.tokens().iter().find(|&&t| t >= vocab_size) {
                return Err(Error::Index(format!(
                    "document {m} token id {bad} exceeds vocabulary size {vocab_size}"
                )));
            }
        }
        Ok(Self { documents, vocab })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_documents(&self) -> usize {
        self.documents.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

/// Total number of token occurrences in the corpus.
pub fn total_tokens(corpus: &Corpus) -> usize {
    corpus.documents().iter().map(Document::len).sum()
}

/// Prior pseudocounts shared across documents (topic side) and across
/// topics (word side), plus the topic count they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    alpha_prior: DirichletParams,
    beta_prior: DirichletParams,
}

impl Hyperparameters {
    pub fn new(alpha_prior: DirichletParams, beta_prior: DirichletParams) -> Result<Self> {
        if alpha_prior.len() < 2 {
            return Err(Error::Domain(format!(
                "topic count must be at least 2, got {}",
                alpha_prior.len()
            )));
        }
        Ok(Self {
            alpha_prior,
            beta_prior,
        })
    }

    /// Symmetric priors: `alpha` repeated over `topics` entries and
    /// `beta` over `vocab_size` entries.
    pub fn symmetric(topics: usize, vocab_size: usize, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(
            DirichletParams::symmetric(topics, alpha)?,
            DirichletParams::symmetric(vocab_size, beta)?,
        )
    }

    pub fn alpha_prior(&self) -> &DirichletParams {
        &self.alpha_prior
    }

    pub fn beta_prior(&self) -> &DirichletParams {
        &self.beta_prior
    }

    pub fn topics(&self) -> usize {
        self.alpha_prior.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.beta_prior.len()
    }
}

/// The variational posterior parameters: document-topic pseudocounts
/// (M×K), topic-word pseudocounts (K×V), and per-token responsibility
/// vectors.
///
/// The state is single-writer: one epoch driver mutates it at a time,
/// while read-only snapshots of `topic_word` may be shared across
/// concurrent document workers.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub doc_topic: Vec<Vec<f64>>,
    pub topic_word: Vec<Vec<f64>>,
    pub responsibilities: Vec<Vec<ProbVector>>,
}

impl VariationalState {
    /// Checks the structural invariants against a corpus and priors:
    /// positive matrix entries and normalized responsibilities.
    pub fn validate(&self, corpus: &Corpus, hyper: &Hyperparameters) -> Result<()> {
        let topics = hyper.topics();
        let vocab_size = corpus.vocab_size();
        if hyper.vocab_size() != vocab_size {
            return Err(Error::Dimension(format!(
                "word prior has length {}, corpus vocabulary has {}",
                hyper.vocab_size(),
                vocab_size
            )));
        }
        if self.doc_topic.len() != corpus.num_documents() {
            return Err(Error::Dimension(format!(
                "doc_topic has {} rows, corpus has {} documents",
                self.doc_topic.len(),
                corpus.num_documents()
            )));
        }
        for (m, row) in self.doc_topic.iter().enumerate() {
            if row.len() != topics {
                return Err(Error::Dimension(format!(
                    "doc_topic row {m} has length {}, expected {topics}",
                    row.len()
                )));
            }
            if row.iter().any(|&x| !x.is_finite() || x <= 0.0) {
                return Err(Error::Domain(format!(
                    "doc_topic row {m} contains a non-positive entry"
                )));
            }
        }
        if self.topic_word.len() != topics {
            return Err(Error::Dimension(format!(
                "topic_word has {} rows, expected {topics}",
                self.topic_word.len()
            )));
        }
        for (k, row) in self.topic_word.iter().enumerate() {
            if row.len() != vocab_size {
                return Err(Error::Dimension(format!(
                    "topic_word row {k} has length {}, expected {vocab_size}",
                    row.len()
                )));
            }
            if row.iter().any(|&x| !x.is_finite() || x <= 0.0) {
                return Err(Error::Domain(format!(
                    "topic_word row {k} contains a non-positive entry"
                )));
            }
        }
        if self.responsibilities.len() != corpus.num_documents() {
            return Err(Error::Dimension(format!(
                "responsibilities cover {} documents, corpus has {}",
                self.responsibilities.len(),
                corpus.num_documents()
            )));
        }
        for (m, (doc, rs)) in corpus
            .documents()
            .iter()
            .zip(&self.responsibilities)
            .enumerate()
        {
            if rs.len() != doc.len() {
                return Err(Error::Dimension(format!(
                    "document {m} has {} tokens but {} responsibility vectors",
                    doc.len(),
                    rs.len()
                )));
            }
            if rs.iter().any(|r| r.len() != topics) {
                return Err(Error::Dimension(format!(
                    "document {m} has a responsibility vector of wrong length"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the starting state: document-topic rows copy the prior,
/// topic-word rows are the prior plus a small uniform perturbation that
/// breaks the all-topics-identical saddle point, and responsibilities
/// start uniform. Deterministic for a fixed seed.
pub fn init_state(corpus: &Corpus, hyper: &Hyperparameters, seed: u64) -> Result<VariationalState> {
    if hyper.vocab_size() != corpus.vocab_size() {
        return Err(Error::Dimension(format!(
            "word prior has length {}, corpus vocabulary has {}",
            hyper.vocab_size(),
            corpus.vocab_size()
        )));
    }
    let topics = hyper.topics();
    let alpha = hyper.alpha_prior().pseudocounts();
    let beta = hyper.beta_prior().pseudocounts();

    let doc_topic = vec![alpha.to_vec(); corpus.num_documents()];

    let amplitude = PERTURBATION_FRACTION * hyper.beta_prior().total() / beta.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topic_word = (0..topics)
        .map(|_| {
            beta.iter()
                .map(|&b| b + rng.random_range(0.0..amplitude))
                .collect()
        })
        .collect();

    let uniform = ProbVector::uniform(topics)?;
    let responsibilities = corpus
        .documents()
        .iter()
        .map(|doc| vec![uniform.clone(); doc.len()])
        .collect();

    Ok(VariationalState {
        doc_topic,
        topic_word,
        responsibilities,
    })
}

/// A trained model as persisted to disk: priors, vocabulary, and both
/// pseudocount matrices. Responsibilities are not persisted.
#[derive(Debug, Clone)]
pub struct Model {
    pub vocab: Vocabulary,
    pub hyper: Hyperparameters,
    pub doc_topic: Vec<Vec<f64>>,
    pub topic_word: Vec<Vec<f64>>,
}

impl Model {
    pub fn from_state(
        state: &VariationalState,
        vocab: &Vocabulary,
        hyper: &Hyperparameters,
    ) -> Self {
        Self {
            vocab: vocab.clone(),
            hyper: hyper.clone(),
            doc_topic: state.doc_topic.clone(),
            topic_word: state.topic_word.clone(),
        }
    }

    /// Reconstructs a state for topic inspection or fold-in inference.
    /// Responsibilities are not part of the persisted model and come
    /// back empty.
    pub fn to_state(&self) -> VariationalState {
        VariationalState {
            doc_topic: self.doc_topic.clone(),
            topic_word: self.topic_word.clone(),
            responsibilities: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct ModelFileOut<'a> {
    #[serde(rename = "K")]
    topics: usize,
    #[serde(rename = "V")]
    vocab_size: usize,
    vocab: &'a [String],
    alpha_prior: &'a [f64],
    beta_prior_scalar_or_vector: &'a [f64],
    doc_topic: &'a [Vec<f64>],
    topic_word: &'a [Vec<f64>],
}

#[derive(Deserialize)]
struct ModelFileIn {
    #[serde(rename = "K")]
    topics: usize,
    #[serde(rename = "V")]
    vocab_size: usize,
    vocab: Vec<String>,
    alpha_prior: Vec<f64>,
    beta_prior_scalar_or_vector: ScalarOrVector,
    doc_topic: Vec<Vec<f64>>,
    topic_word: Vec<Vec<f64>>,
}

/// The word prior may be persisted as one shared scalar or a full
/// length-V vector.
#[derive(Deserialize)]
#[serde(untagged)]
enum ScalarOrVector {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// JSON formatter that writes every float with 17 significant digits,
/// enough to reproduce the exact f64 on load.
struct SignificantDigitsFormatter;

impl serde_json::ser::Formatter for SignificantDigitsFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes a model to the persistence schema. Floats carry 17
/// significant digits; the output is byte-deterministic.
pub fn save_model<W: Write>(writer: W, model: &Model) -> Result<()> {
    let file = ModelFileOut {
        topics: model.hyper.topics(),
        vocab_size: model.vocab.len(),
        vocab: model.vocab.terms(),
        alpha_prior: model.hyper.alpha_prior().pseudocounts(),
        beta_prior_scalar_or_vector: model.hyper.beta_prior().pseudocounts(),
        doc_topic: &model.doc_topic,
        topic_word: &model.topic_word,
    };
    let mut ser = serde_json::Serializer::with_formatter(writer, SignificantDigitsFormatter);
    file.serialize(&mut ser)
        .map_err(|e| Error::Model(e.to_string()))?;
    Ok(())
}

/// Reads a model back, validating dimensions against the header fields.
pub fn load_model<R: Read>(reader: R) -> Result<Model> {
    let file: ModelFileIn = serde_json::from_reader(BufReader::new(reader))
        .map_err(|e| Error::Model(e.to_string()))?;
    let beta = match file.beta_prior_scalar_or_vector {
        ScalarOrVector::Scalar(b) => vec![b; file.vocab_size],
        ScalarOrVector::Vector(v) => v,
    };
    if file.vocab.len() != file.vocab_size {
        return Err(Error::Model(format!(
            "vocabulary has {} terms but V = {}",
            file.vocab.len(),
            file.vocab_size
        )));
    }
    if file.alpha_prior.len() != file.topics {
        return Err(Error::Model(format!(
            "alpha prior has length {} but K = {}",
            file.alpha_prior.len(),
            file.topics
        )));
    }
    if beta.len() != file.vocab_size {
        return Err(Error::Model(format!(
            "beta prior has length {} but V = {}",
            beta.len(),
            file.vocab_size
        )));
    }
    if file.topic_word.len() != file.topics
        || file.topic_word.iter().any(|r| r.len() != file.vocab_size)
    {
        return Err(Error::Model("topic_word matrix is not K x V".into()));
    }
    if file.doc_topic.iter().any(|r| r.len() != file.topics) {
        return Err(Error::Model("doc_topic matrix is not M x K".into()));
    }
    let vocab = Vocabulary::new(file.vocab)?;
    let hyper = Hyperparameters::new(
        DirichletParams::new(file.alpha_prior)?,
        DirichletParams::new(beta)?,
    )?;
    Ok(Model {
        vocab,
        hyper,
        doc_topic: file.doc_topic,
        topic_word: file.topic_word,
    })
}
