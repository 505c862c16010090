//! The six message types and two pseudocount updates that drive
//! inference on the LDA graph, each a pure function so every equation
//! is testable in isolation.
//!
//! Messages between Dirichlet and categorical nodes travel as expected
//! log probabilities (digamma moments); indicator expectations travel
//! as probability vectors. State mutation happens only in the engine.

use crate::ef::{
    dirichlet_expected_log, log_normalize, DirichletParams, LogProbVector, ProbVector,
};
use crate::error::{Error, Result};

/// Expected log topic proportions sent from a document's Dirichlet node
/// to one of its token topic indicators: ψ(α_k) − ψ(Σ_j α_j) per topic.
/// These become the indicator node's natural parameters.
pub fn msg_theta_to_z(alpha_m: &DirichletParams) -> LogProbVector {
    dirichlet_expected_log(alpha_m)
}

/// Expected log word distribution for one topic, length V:
/// ψ(β_v) − ψ(Σ_u β_u) per word.
pub fn msg_phi_to_w(beta_k: &DirichletParams) -> LogProbVector {
    dirichlet_expected_log(beta_k)
}

/// Message from an observed word to its topic indicator: the slice of
/// every topic's expected log word distribution at the observed id,
/// shifted so the exponentials sum to one. Returned in log domain.
pub fn msg_w_to_z(expected_log_phi: &[LogProbVector], observed: usize) -> Result<LogProbVector> {
    if expected_log_phi.is_empty() {
        return Err(Error::Empty("expected log word distributions".into()));
    }
    let mut slice = Vec::with_capacity(expected_log_phi.len());
    for row in expected_log_phi {
        match row.entries().get(observed) {
            Some(&value) => slice.push(value),
            None => {
                return Err(Error::Index(format!(
                    "observed word id {observed} exceeds vocabulary size {}",
                    row.len()
                )))
            }
        }
    }
    // Normalize over the topic index: the slice feeds the topic
    // indicator, a distribution over topics. Downstream responsibilities
    // are invariant to this shift.
    let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max
        + slice
            .iter()
            .map(|&s| (s - max).exp())
            .sum::<f64>()
            .ln();
    LogProbVector::new(slice.into_iter().map(|s| s - log_sum).collect())
}

/// Combines the topic-side and word-side messages at a token's topic
/// indicator and normalizes: the responsibility vector r over topics.
pub fn compute_responsibility(
    theta_msg: &LogProbVector,
    w_msg: &LogProbVector,
) -> Result<ProbVector> {
    if theta_msg.len() != w_msg.len() {
        return Err(Error::Dimension(format!(
            "topic message has length {}, word message {}",
            theta_msg.len(),
            w_msg.len()
        )));
    }
    let combined: Vec<f64> = theta_msg
        .entries()
        .iter()
        .zip(w_msg.entries())
        .map(|(t, w)| t + w)
        .collect();
    log_normalize(&combined)
}

/// Message from a topic indicator back to its document Dirichlet: the
/// expected indicator vector, which is the responsibility verbatim.
pub fn msg_z_to_theta(r: &ProbVector) -> Vec<f64> {
    r.to_vec()
}

/// Document-topic pseudocount update: the prior plus the sum of the
/// document's responsibility vectors. Adds exactly one unit of mass per
/// token.
pub fn update_alpha(
    alpha_prior: &DirichletParams,
    doc_responsibilities: &[ProbVector],
) -> DirichletParams {
    let mut updated = alpha_prior.pseudocounts().to_vec();
    for r in doc_responsibilities {
        assert_eq!(
            r.len(),
            updated.len(),
            "responsibility length does not match topic count"
        );
        for (u, contribution) in updated.iter_mut().zip(msg_z_to_theta(r)) {
            *u += contribution;
        }
    }
    DirichletParams::new(updated).expect("prior entries stay positive under additive updates")
}

/// Message from a topic indicator to its observed word after the
/// document update: normalized exponentials of the updated expected log
/// topic proportions.
pub fn msg_z_to_w(alpha_m_updated: &DirichletParams) -> ProbVector {
    log_normalize(dirichlet_expected_log(alpha_m_updated).entries())
        .expect("expected logs are finite by construction")
}

/// Sparse contribution of one observed token to the topic-word update:
/// the responsibility vector placed at the observed word's column, all
/// other columns zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WordContribution {
    pub word: usize,
    pub weights: ProbVector,
}

/// Message from an observed word to every topic-word Dirichlet,
/// represented sparsely as the (word id, responsibility) pair.
pub fn msg_w_to_phi(r: &ProbVector, observed: usize, vocab_size: usize) -> Result<WordContribution> {
    if observed >= vocab_size {
        return Err(Error::Index(format!(
            "observed word id {observed} exceeds vocabulary size {vocab_size}"
        )));
    }
    Ok(WordContribution {
        word: observed,
        weights: r.clone(),
    })
}

/// Topic-word pseudocount update: the prior plus, per word column, the
/// responsibilities of every token observed at that word. Accumulates in
/// the order contributions are given.
pub fn update_beta(
    beta_prior: &DirichletParams,
    topics: usize,
    contributions: &[WordContribution],
) -> Vec<Vec<f64>> {
    let vocab_size = beta_prior.len();
    let mut matrix = vec![beta_prior.pseudocounts().to_vec(); topics];
    for c in contributions {
        assert!(c.word < vocab_size, "contribution word id out of range");
        assert_eq!(
            c.weights.len(),
            topics,
            "contribution weight length does not match topic count"
        );
        for (k, &w) in c.weights.entries().iter().enumerate() {
            matrix[k][c.word] += w;
        }
    }
    matrix
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ef::NORMALIZATION_TOL;
    use proptest::prelude::*;

    fn lpv(entries: &[f64]) -> LogProbVector {
        LogProbVector::new(entries.to_vec()).unwrap()
    }

    fn pv(entries: &[f64]) -> ProbVector {
        ProbVector::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn theta_message_matches_expected_log_examples() {
        let sym = DirichletParams::symmetric(3, 1.0).unwrap();
        for &e in msg_theta_to_z(&sym).entries() {
            assert!((e - (-1.5)).abs() <= 1e-10);
        }
        let skew = DirichletParams::new(vec![2.0, 1.0]).unwrap();
        let m = msg_theta_to_z(&skew);
        assert!((m.entries()[0] - (-0.5)).abs() <= 1e-10);
        assert!((m.entries()[1] - (-1.5)).abs() <= 1e-10);
    }

    #[test]
    fn phi_message_examples() {
        let m = msg_phi_to_w(&DirichletParams::symmetric(2, 1.0).unwrap());
        for &e in m.entries() {
            assert!((e - (-1.0)).abs() <= 1e-10);
        }
        // ψ(3) − ψ(4) = −1/3, ψ(1) − ψ(4) = −11/6.
        let m = msg_phi_to_w(&DirichletParams::new(vec![3.0, 1.0]).unwrap());
        assert!((m.entries()[0] - (-1.0 / 3.0)).abs() <= 1e-10);
        assert!((m.entries()[1] - (-11.0 / 6.0)).abs() <= 1e-10);
    }

    #[test]
    fn w_to_z_slices_and_normalizes() {
        let phi = vec![lpv(&[0.8f64.ln(), -3.0]), lpv(&[0.2f64.ln(), -3.0])];
        let m = msg_w_to_z(&phi, 0).unwrap();
        assert!((m.entries()[0] - 0.8f64.ln()).abs() <= 1e-12);
        assert!((m.entries()[1] - 0.2f64.ln()).abs() <= 1e-12);
    }

    #[test]
    fn w_to_z_identical_topics_is_uniform() {
        let phi = vec![lpv(&[-2.0, -5.0]); 4];
        let m = msg_w_to_z(&phi, 1).unwrap();
        let p = log_normalize(m.entries()).unwrap();
        for &e in p.entries() {
            assert!((e - 0.25).abs() <= NORMALIZATION_TOL);
        }
    }

    #[test]
    fn w_to_z_shifting_one_topic_moves_only_its_slice() {
        let phi = vec![lpv(&[-1.0, -2.0]), lpv(&[-1.5, -0.5])];
        let c = 0.75;
        let shifted = vec![lpv(&[-1.0 + c, -2.0 + c]), lpv(&[-1.5, -0.5])];
        let m = msg_w_to_z(&shifted, 1).unwrap();
        // Same as normalizing the hand-shifted raw slice.
        let raw = [-2.0 + c, -0.5];
        let expect = log_normalize(&raw).unwrap();
        let got = log_normalize(m.entries()).unwrap();
        for (g, e) in got.entries().iter().zip(expect.entries()) {
            assert!((g - e).abs() <= 1e-12);
        }
        // And the untouched topic's slice entry is what it was.
        let base = msg_w_to_z(&phi, 1).unwrap();
        assert!(
            ((m.entries()[0] - m.entries()[1]) - ((base.entries()[0] + c) - base.entries()[1]))
                .abs()
                <= 1e-12
        );
    }

    #[test]
    fn w_to_z_out_of_range_word() {
        let phi = vec![lpv(&[-1.0, -2.0])];
        assert!(matches!(msg_w_to_z(&phi, 2), Err(Error::Index(_))));
    }

    #[test]
    fn responsibility_hand_example() {
        let theta = lpv(&[0.5f64.ln(), 0.5f64.ln()]);
        let w = lpv(&[0.8f64.ln(), 0.2f64.ln()]);
        let r = compute_responsibility(&theta, &w).unwrap();
        assert!((r.entries()[0] - 0.8).abs() <= 1e-12);
        assert!((r.entries()[1] - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn responsibility_uniform_word_message_is_identity() {
        let theta = lpv(&[-0.3, -1.7, -2.4]);
        let w = lpv(&[(1.0f64 / 3.0).ln(); 3]);
        let r = compute_responsibility(&theta, &w).unwrap();
        let direct = log_normalize(theta.entries()).unwrap();
        for (a, b) in r.entries().iter().zip(direct.entries()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn responsibility_dimension_mismatch() {
        let theta = lpv(&[-0.5, -0.5]);
        let w = lpv(&[-0.5, -0.5, -0.5]);
        assert!(matches!(
            compute_responsibility(&theta, &w),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn z_to_theta_is_identity_on_responsibilities() {
        let r = pv(&[0.8, 0.2]);
        assert_eq!(msg_z_to_theta(&r), vec![0.8, 0.2]);
        let hot = pv(&[0.0, 1.0, 0.0]);
        assert_eq!(msg_z_to_theta(&hot), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn update_alpha_hand_sum() {
        let prior = DirichletParams::symmetric(2, 0.1).unwrap();
        let rs = vec![pv(&[0.8, 0.2]), pv(&[0.5, 0.5]), pv(&[0.2, 0.8])];
        let updated = update_alpha(&prior, &rs);
        assert!((updated.pseudocounts()[0] - 1.6).abs() <= 1e-12);
        assert!((updated.pseudocounts()[1] - 1.6).abs() <= 1e-12);
    }

    #[test]
    fn update_alpha_empty_is_identity_and_one_hot_counts() {
        let prior = DirichletParams::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(update_alpha(&prior, &[]), prior);

        let hot = vec![pv(&[0.0, 1.0]); 5];
        let updated = update_alpha(&prior, &hot);
        assert!((updated.pseudocounts()[0] - 0.3).abs() <= 1e-12);
        assert!((updated.pseudocounts()[1] - 5.7).abs() <= 1e-12);
    }

    #[test]
    fn z_to_w_examples() {
        let sym = DirichletParams::symmetric(4, 2.5).unwrap();
        for &e in msg_z_to_w(&sym).entries() {
            assert!((e - 0.25).abs() <= NORMALIZATION_TOL);
        }
        // Expected logs [−1/2, −3/2] give the logistic of their gap.
        let skew = DirichletParams::new(vec![2.0, 1.0]).unwrap();
        let p = msg_z_to_w(&skew);
        let logistic = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((p.entries()[0] - logistic).abs() <= 1e-10);
        assert!((p.entries()[1] - (1.0 - logistic)).abs() <= 1e-10);
        let sum: f64 = p.entries().iter().sum();
        assert!((sum - 1.0).abs() <= NORMALIZATION_TOL);
    }

    #[test]
    fn w_to_phi_places_mass_at_observed_column() {
        let r = pv(&[0.8, 0.2]);
        let c = msg_w_to_phi(&r, 3, 5).unwrap();
        assert_eq!(c.word, 3);
        assert_eq!(c.weights.entries(), &[0.8, 0.2]);
        assert!(matches!(msg_w_to_phi(&r, 5, 5), Err(Error::Index(_))));
    }

    #[test]
    fn update_beta_hand_sums() {
        let prior = DirichletParams::symmetric(2, 0.01).unwrap();
        let rs = [pv(&[0.8, 0.2]), pv(&[0.5, 0.5]), pv(&[0.2, 0.8])];
        let tokens = [0usize, 0, 1];
        let contributions: Vec<_> = tokens
            .iter()
            .zip(&rs)
            .map(|(&w, r)| msg_w_to_phi(r, w, 2).unwrap())
            .collect();
        let beta = update_beta(&prior, 2, &contributions);
        assert!((beta[0][0] - 1.31).abs() <= 1e-12);
        assert!((beta[1][0] - 0.71).abs() <= 1e-12);
        assert!((beta[0][1] - 0.21).abs() <= 1e-12);
        assert!((beta[1][1] - 0.81).abs() <= 1e-12);
    }

    #[test]
    fn update_beta_empty_is_prior_rows() {
        let prior = DirichletParams::new(vec![0.1, 0.2, 0.3]).unwrap();
        let beta = update_beta(&prior, 2, &[]);
        assert_eq!(beta, vec![vec![0.1, 0.2, 0.3]; 2]);
    }

    #[test]
    fn update_beta_uniform_responsibilities_give_identical_rows() {
        let prior = DirichletParams::symmetric(3, 0.05).unwrap();
        let contributions = vec![
            msg_w_to_phi(&pv(&[0.5, 0.5]), 1, 3).unwrap(),
            msg_w_to_phi(&pv(&[0.5, 0.5]), 2, 3).unwrap(),
        ];
        let beta = update_beta(&prior, 2, &contributions);
        assert_eq!(beta[0], beta[1]);
    }

    proptest! {
        /// Adding one constant across the word-side message leaves
        /// responsibilities unchanged to 1e-12.
        #[test]
        fn responsibility_scaling_invariance(
            (theta, word) in (2usize..8).prop_flat_map(|k| (
                proptest::collection::vec(-30.0f64..0.0, k),
                proptest::collection::vec(-30.0f64..0.0, k),
            )),
            c in -50.0f64..50.0,
        ) {
            let t = lpv(&theta);
            let w = lpv(&word);
            let shifted = lpv(&word.iter().map(|x| x + c).collect::<Vec<_>>());
            let a = compute_responsibility(&t, &w).unwrap();
            let b = compute_responsibility(&t, &shifted).unwrap();
            for (x, y) in a.entries().iter().zip(b.entries()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        /// Pseudocount mass added by the document update equals the
        /// token count exactly (to 1e-12).
        #[test]
        fn update_alpha_conserves_token_mass(
            rows in proptest::collection::vec(
                proptest::collection::vec(0.01f64..10.0, 3),
                0..20,
            ),
        ) {
            let prior = DirichletParams::symmetric(3, 0.2).unwrap();
            let rs: Vec<ProbVector> = rows
                .iter()
                .map(|row| {
                    let s: f64 = row.iter().sum();
                    pv(&row.iter().map(|x| x / s).collect::<Vec<_>>())
                })
                .collect();
            let updated = update_alpha(&prior, &rs);
            let added = updated.total() - prior.total();
            prop_assert!((added - rs.len() as f64).abs() <= 1e-12);
        }

        /// Permuting topic indices of all inputs permutes all outputs
        /// identically.
        #[test]
        fn responsibility_permutation_equivariance(
            theta in proptest::collection::vec(-20.0f64..0.0, 4),
            word in proptest::collection::vec(-20.0f64..0.0, 4),
        ) {
            let perm = [2usize, 0, 3, 1];
            let permute = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let base = compute_responsibility(&lpv(&theta), &lpv(&word)).unwrap();
            let permuted = compute_responsibility(
                &lpv(&permute(&theta)),
                &lpv(&permute(&word)),
            ).unwrap();
            for (i, &p) in perm.iter().enumerate() {
                prop_assert!((permuted.entries()[i] - base.entries()[p]).abs() <= 1e-15);
            }
        }
    }
}
