//! Executes the fixed message-passing schedule epoch by epoch and owns
//! convergence, termination, and the document-parallelism contract.
//!
//! One epoch visits the graph in a fixed order:
//!
//! 1. snapshot the expected-log word matrix of every topic and, per
//!    document, the topic-side log message left by the previous epoch
//!    (at epoch 0, the expected logs of the initial document
//!    pseudocounts);
//! 2. first word loop: slice the word matrices at each observed token,
//!    combine with the document's snapshotted topic message, and store
//!    the resulting responsibility;
//! 3. fold the document's responsibilities into its topic pseudocounts
//!    (the per-token sends commute into one batched update because
//!    addition is order-independent);
//! 4. second word loop: the refreshed topic message for the next epoch,
//!    derivable from the updated pseudocounts, so it is recomputed there
//!    rather than stored;
//! 5. after all documents: one topic-word update over every token's
//!    contribution, accumulated in fixed document order.
//!
//! Within an epoch every token of a document sees the same topic
//! message, and every document sees the same word matrices, so document
//! work is embarrassingly parallel and bitwise independent of the worker
//! count; the final reduction is single-threaded in document order.

use rayon::prelude::*;

use crate::ef::{dirichlet_expected_log, DirichletParams, LogProbVector, ProbVector};
use crate::error::{Error, Result};
use crate::messages::{
    compute_responsibility, msg_phi_to_w, msg_w_to_phi, msg_w_to_z, update_alpha, update_beta,
};
use crate::model::{Corpus, Document, Hyperparameters, VariationalState};

/// Knobs for a fitting run.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Upper bound on epochs; at least 1.
    pub max_epochs: usize,
    /// Convergence threshold on the L-infinity change of all
    /// pseudocounts between epochs; strictly positive.
    pub tol: f64,
    /// Seed for state initialization.
    pub seed: u64,
    /// Process documents with concurrent workers. Output is identical
    /// either way.
    pub parallel_documents: bool,
}

impl FitOptions {
    pub fn new(max_epochs: usize, tol: f64, seed: u64, parallel_documents: bool) -> Result<Self> {
        let opts = Self {
            max_epochs,
            tol,
            seed,
            parallel_documents,
        };
        opts.validate()?;
        Ok(opts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs < 1 {
            return Err(Error::Domain("max_epochs must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Domain(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// What a fitting run did: epochs executed, the L-infinity parameter
/// delta of each, and whether the tolerance was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub epochs_run: usize,
    pub deltas: Vec<f64>,
    pub converged: bool,
}

fn check_dimensions(
    state: &VariationalState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
) -> Result<()> {
    state.validate(corpus, hyper)
}

/// Per-document output of one epoch.
struct DocUpdate {
    alpha_row: Vec<f64>,
    responsibilities: Vec<ProbVector>,
}

fn update_document(
    doc: &Document,
    theta_msg: &LogProbVector,
    log_phi: &[LogProbVector],
    alpha_prior: &DirichletParams,
) -> Result<DocUpdate> {
    let mut responsibilities = Vec::with_capacity(doc.len());
    for &token in doc.tokens() {
        let w_msg = msg_w_to_z(log_phi, token)?;
        responsibilities.push(compute_responsibility(theta_msg, &w_msg)?);
    }
    let alpha_row = update_alpha(alpha_prior, &responsibilities)
        .pseudocounts()
        .to_vec();
    Ok(DocUpdate {
        alpha_row,
        responsibilities,
    })
}

fn run_epoch_inner(
    state: &VariationalState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
    parallel: bool,
) -> Result<VariationalState> {
    check_dimensions(state, corpus, hyper)?;

    // Step 1: epoch-start snapshots. Every topic message is derived from
    // the current pseudocounts, so all tokens of a document share one
    // topic message and all documents share one word matrix.
    let log_phi: Vec<LogProbVector> = state
        .topic_word
        .iter()
        .map(|row| {
            DirichletParams::new(row.clone())
                .map(|params| msg_phi_to_w(&params))
                .map_err(|_| Error::Domain("topic_word row must stay positive".into()))
        })
        .collect::<Result<_>>()?;
    let log_theta: Vec<LogProbVector> = state
        .doc_topic
        .iter()
        .map(|row| {
            DirichletParams::new(row.clone())
                .map(|params| dirichlet_expected_log(&params))
                .map_err(|_| Error::Domain("doc_topic row must stay positive".into()))
        })
        .collect::<Result<_>>()?;

    // Steps 2-4: per-document work, order-preserving.
    let alpha_prior = hyper.alpha_prior();
    let docs = corpus.documents();
    let updates: Vec<DocUpdate> = if parallel {
        docs.par_iter()
            .zip(log_theta.par_iter())
            .map(|(doc, theta)| update_document(doc, theta, &log_phi, alpha_prior))
            .collect::<Result<_>>()?
    } else {
        docs.iter()
            .zip(log_theta.iter())
            .map(|(doc, theta)| update_document(doc, theta, &log_phi, alpha_prior))
            .collect::<Result<_>>()?
    };

    // Step 5: topic-word update in fixed document and token order so the
    // reduction is bitwise reproducible across thread counts.
    let vocab_size = corpus.vocab_size();
    let mut contributions = Vec::with_capacity(crate::model::total_tokens(corpus));
    for (doc, update) in docs.iter().zip(&updates) {
        for (&token, r) in doc.tokens().iter().zip(&update.responsibilities) {
            contributions.push(msg_w_to_phi(r, token, vocab_size)?);
        }
    }
    let topic_word = update_beta(hyper.beta_prior(), hyper.topics(), &contributions);

    let mut doc_topic = Vec::with_capacity(updates.len());
    let mut responsibilities = Vec::with_capacity(updates.len());
    for update in updates {
        doc_topic.push(update.alpha_row);
        responsibilities.push(update.responsibilities);
    }

    let next = VariationalState {
        doc_topic,
        topic_word,
        responsibilities,
    };
    #[cfg(debug_assertions)]
    debug_check_epoch_output(&next, corpus, hyper);
    Ok(next)
}

/// Pseudocount conservation holds after every full epoch; checked in
/// debug and test builds only.
#[cfg(debug_assertions)]
fn debug_check_epoch_output(state: &VariationalState, corpus: &Corpus, hyper: &Hyperparameters) {
    state
        .validate(corpus, hyper)
        .expect("epoch output violates state invariants");
    let prior_alpha = hyper.alpha_prior().total();
    for (m, (doc, row)) in corpus
        .documents()
        .iter()
        .zip(&state.doc_topic)
        .enumerate()
    {
        let added = row.iter().sum::<f64>() - prior_alpha;
        debug_assert!(
            (added - doc.len() as f64).abs() <= 1e-9,
            "document {m} pseudocount mass {added} != token count {}",
            doc.len()
        );
    }
    let prior_beta = hyper.beta_prior().total();
    let added: f64 = state
        .topic_word
        .iter()
        .map(|row| row.iter().sum::<f64>() - prior_beta)
        .sum();
    let tokens = crate::model::total_tokens(corpus) as f64;
    debug_assert!(
        (added - tokens).abs() <= 1e-6,
        "topic-word pseudocount mass {added} != corpus token count {tokens}"
    );
}

/// Runs exactly one epoch of the schedule and returns the new state.
/// Deterministic for fixed inputs.
pub fn run_epoch(
    state: &VariationalState,
    corpus: &Corpus,
    hyper: &Hyperparameters,
) -> Result<VariationalState> {
    run_epoch_inner(state, corpus, hyper, false)
}

/// L-infinity distance over both pseudocount matrices.
fn linf_delta(a: &VariationalState, b: &VariationalState) -> f64 {
    let mut max = 0.0f64;
    for (ra, rb) in a.doc_topic.iter().zip(&b.doc_topic) {
        for (x, y) in ra.iter().zip(rb) {
            max = max.max((x - y).abs());
        }
    }
    for (ra, rb) in a.topic_word.iter().zip(&b.topic_word) {
        for (x, y) in ra.iter().zip(rb) {
            max = max.max((x - y).abs());
        }
    }
    max
}

/// Initializes a state and runs epochs until the L-infinity parameter
/// change drops below `opts.tol` or `opts.max_epochs` is reached.
pub fn fit(
    corpus: &Corpus,
    hyper: &Hyperparameters,
    opts: &FitOptions,
) -> Result<(VariationalState, FitDiagnostics)> {
    fit_with_progress(corpus, hyper, opts, |_, _| {})
}

/// [`fit`] with a per-epoch observer receiving the 1-based epoch index
/// and its parameter delta.
pub fn fit_with_progress(
    corpus: &Corpus,
    hyper: &Hyperparameters,
    opts: &FitOptions,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(VariationalState, FitDiagnostics)> {
    opts.validate()?;
    let mut state = crate::model::init_state(corpus, hyper, opts.seed)?;
    let mut deltas = Vec::new();
    let mut converged = false;
    for epoch in 1..=opts.max_epochs {
        let next = run_epoch_inner(&state, corpus, hyper, opts.parallel_documents)?;
        let delta = linf_delta(&state, &next);
        on_epoch(epoch, delta);
        deltas.push(delta);
        state = next;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    let diagnostics = FitDiagnostics {
        epochs_run: deltas.len(),
        deltas,
        converged,
    };
    Ok((state, diagnostics))
}

/// Fold-in inference for one unseen document: runs only the
/// per-document loops of the schedule with the topic-word matrix held
/// fixed, returning the converged document-topic pseudocounts.
pub fn infer_document(
    state: &VariationalState,
    doc: &Document,
    hyper: &Hyperparameters,
    opts: &FitOptions,
) -> Result<DirichletParams> {
    opts.validate()?;
    if state.topic_word.len() != hyper.topics() {
        return Err(Error::Dimension(format!(
            "topic_word has {} rows, expected {}",
            state.topic_word.len(),
            hyper.topics()
        )));
    }
    let vocab_size = hyper.vocab_size();
    if state.topic_word.iter().any(|row| row.len() != vocab_size) {
        return Err(Error::Dimension(
            "topic_word row length does not match the word prior".into(),
        ));
    }
    let oov: Vec<usize> = doc
        .tokens()
        .iter()
        .copied()
        .filter(|&t| t >= vocab_size)
        .collect();
    if !oov.is_empty() {
        return Err(Error::OutOfVocabulary(oov));
    }

    let log_phi: Vec<LogProbVector> = state
        .topic_word
        .iter()
        .map(|row| {
            DirichletParams::new(row.clone())
                .map(|params| msg_phi_to_w(&params))
                .map_err(|_| Error::Domain("topic_word row must stay positive".into()))
        })
        .collect::<Result<_>>()?;

    let alpha_prior = hyper.alpha_prior();
    let mut alpha = alpha_prior.clone();
    for _ in 0..opts.max_epochs {
        let theta_msg = dirichlet_expected_log(&alpha);
        let update = update_document(doc, &theta_msg, &log_phi, alpha_prior)?;
        let delta = alpha
            .pseudocounts()
            .iter()
            .zip(&update.alpha_row)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        alpha = DirichletParams::new(update.alpha_row)?;
        if delta < opts.tol {
            break;
        }
    }
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ef::ProbVector;
    use crate::model::{init_state, total_tokens, Vocabulary};

    fn symmetric_setup(
        docs: Vec<Vec<usize>>,
        vocab_size: usize,
        topics: usize,
        alpha: f64,
        beta: f64,
    ) -> (Corpus, Hyperparameters) {
        let terms = (0..vocab_size).map(|v| format!("w{v}")).collect();
        let vocab = Vocabulary::new(terms).unwrap();
        let documents = docs
            .into_iter()
            .map(|t| Document::new(t).unwrap())
            .collect();
        let corpus = Corpus::new(documents, vocab).unwrap();
        let hyper = Hyperparameters::symmetric(topics, vocab_size, alpha, beta).unwrap();
        (corpus, hyper)
    }

    /// A state with no symmetry-breaking perturbation.
    fn unperturbed_state(corpus: &Corpus, hyper: &Hyperparameters) -> VariationalState {
        let uniform = ProbVector::uniform(hyper.topics()).unwrap();
        VariationalState {
            doc_topic: vec![
                hyper.alpha_prior().pseudocounts().to_vec();
                corpus.num_documents()
            ],
            topic_word: vec![hyper.beta_prior().pseudocounts().to_vec(); hyper.topics()],
            responsibilities: corpus
                .documents()
                .iter()
                .map(|d| vec![uniform.clone(); d.len()])
                .collect(),
        }
    }

    #[test]
    fn single_token_symmetric_epoch_splits_mass_evenly() {
        let (corpus, hyper) = symmetric_setup(vec![vec![0]], 2, 2, 0.3, 0.05);
        let state = unperturbed_state(&corpus, &hyper);
        let next = run_epoch(&state, &corpus, &hyper).unwrap();
        assert_eq!(next.doc_topic[0], vec![0.8, 0.8]);
    }

    #[test]
    fn epoch_conserves_pseudocount_mass() {
        let (corpus, hyper) =
            symmetric_setup(vec![vec![0, 1, 2, 0], vec![3, 3], vec![1, 2, 3]], 4, 3, 0.5, 0.1);
        let state = init_state(&corpus, &hyper, 17).unwrap();
        let next = run_epoch(&state, &corpus, &hyper).unwrap();
        let prior = hyper.alpha_prior().total();
        for (doc, row) in corpus.documents().iter().zip(&next.doc_topic) {
            let added: f64 = row.iter().sum::<f64>() - prior;
            assert!((added - doc.len() as f64).abs() <= 1e-9);
        }
        let beta_prior = hyper.beta_prior().total();
        let added: f64 = next
            .topic_word
            .iter()
            .map(|r| r.iter().sum::<f64>() - beta_prior)
            .sum();
        assert!((added - total_tokens(&corpus) as f64).abs() <= 1e-6);
    }

    #[test]
    fn parallel_epoch_is_bitwise_identical_to_serial() {
        let (corpus, hyper) = symmetric_setup(
            vec![vec![0, 1, 2], vec![4, 4, 3, 1], vec![2], vec![0, 4, 3, 2, 1]],
            5,
            3,
            0.4,
            0.08,
        );
        let state = init_state(&corpus, &hyper, 23).unwrap();
        let serial = run_epoch_inner(&state, &corpus, &hyper, false).unwrap();
        let parallel = run_epoch_inner(&state, &corpus, &hyper, true).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn run_epoch_rejects_mismatched_dimensions() {
        let (corpus, hyper) = symmetric_setup(vec![vec![0, 1]], 2, 2, 0.3, 0.05);
        let mut state = init_state(&corpus, &hyper, 1).unwrap();
        state.doc_topic[0].push(1.0);
        assert!(matches!(
            run_epoch(&state, &corpus, &hyper),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn fit_options_validation() {
        assert!(FitOptions::new(0, 1e-4, 0, false).is_err());
        assert!(FitOptions::new(1, 0.0, 0, false).is_err());
        assert!(FitOptions::new(1, -1.0, 0, false).is_err());
        assert!(FitOptions::new(1, f64::NAN, 0, false).is_err());
        assert!(FitOptions::new(1, f64::INFINITY, 0, false).is_ok());
    }

    #[test]
    fn infinite_tolerance_stops_after_one_epoch() {
        let (corpus, hyper) = symmetric_setup(vec![vec![0, 1], vec![1, 1, 0]], 2, 2, 0.3, 0.05);
        let opts = FitOptions::new(50, f64::INFINITY, 7, false).unwrap();
        let (_, diagnostics) = fit(&corpus, &hyper, &opts).unwrap();
        assert_eq!(diagnostics.epochs_run, 1);
        assert!(diagnostics.converged);
        assert_eq!(diagnostics.deltas.len(), 1);
    }

    #[test]
    fn fit_is_deterministic_for_fixed_seed() {
        let (corpus, hyper) =
            symmetric_setup(vec![vec![0, 1, 2, 2], vec![3, 0, 1], vec![2, 3]], 4, 2, 0.2, 0.05);
        let opts = FitOptions::new(20, 1e-6, 99, false).unwrap();
        let (a, da) = fit(&corpus, &hyper, &opts).unwrap();
        let (b, db) = fit(&corpus, &hyper, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(da, db);
    }

    #[test]
    fn infer_single_token_uniform_rows_adds_uniform_mass() {
        let (corpus, hyper) = symmetric_setup(vec![vec![0]], 3, 2, 0.25, 0.1);
        let state = unperturbed_state(&corpus, &hyper);
        let opts = FitOptions::new(30, 1e-10, 0, false).unwrap();
        let doc = Document::new(vec![1]).unwrap();
        let alpha = infer_document(&state, &doc, &hyper, &opts).unwrap();
        for &a in alpha.pseudocounts() {
            assert!((a - 0.75).abs() <= 1e-12);
        }
    }

    #[test]
    fn infer_conserves_mass_and_rejects_oov() {
        let (corpus, hyper) =
            symmetric_setup(vec![vec![0, 1, 2], vec![2, 2, 0]], 3, 2, 0.4, 0.02);
        let state = init_state(&corpus, &hyper, 5).unwrap();
        let opts = FitOptions::new(50, 1e-8, 0, false).unwrap();

        let doc = Document::new(vec![0, 2, 2, 1, 0]).unwrap();
        let alpha = infer_document(&state, &doc, &hyper, &opts).unwrap();
        let added = alpha.total() - hyper.alpha_prior().total();
        assert!((added - 5.0).abs() <= 1e-9);

        let bad = Document::new(vec![1, 7, 9]).unwrap();
        match infer_document(&state, &bad, &hyper, &opts) {
            Err(Error::OutOfVocabulary(ids)) => assert_eq!(ids, vec![7, 9]),
            other => panic!("expected out-of-vocabulary error, got {other:?}"),
        }
    }
}
