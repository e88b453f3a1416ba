#pragma once

#include "tssr/autograd.hpp"
#include "tssr/codec.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace tssr {

/// Sum of per-item losses together with the number of items, plus the
/// gradient of the sum with respect to the logits. Batched objectives add
/// these up and divide once, so normalization spans the whole batch.
template <typename Scalar>
struct LossTerm {
  double sum = 0.0;
  std::size_t count = 0;
  ad::Matrix<Scalar> grad;  // same shape as the logits it was computed from

  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

/// Cross-entropy between softmax(token_logits) and the clean tokens, summed
/// over non-PAD positions of `x1` (or those with include[i] != 0).
template <typename Scalar>
LossTerm<Scalar> ce_clean_terms(const ad::Matrix<Scalar>& token_logits, const TokenSequence& x1, const Codebook& book,
                                const std::vector<char>* include = nullptr);

/// Binary cross-entropy of sigmoid(correctness_logits) against labels
/// [x_pred[i] == x1[i]], summed over non-PAD positions of `x1`.
template <typename Scalar>
LossTerm<Scalar> classifier_terms(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& correctness_logits,
                                  const TokenSequence& x_pred, const TokenSequence& x1, const Codebook& book);

/// Sum over groups of the group consensus loss: for each coordinate slot j,
/// the mean L1 distance of the occurrences' logit rows from their mean row,
/// averaged over the three slots. `count` is the number of groups.
template <typename Scalar>
LossTerm<Scalar> connection_terms(const ad::Matrix<Scalar>& token_logits, const VertexGroups& groups);

template <typename Scalar>
double ce_clean_loss(const ad::Matrix<Scalar>& token_logits, const TokenSequence& x1, const Codebook& book) {
  return ce_clean_terms(token_logits, x1, book).mean();
}

template <typename Scalar>
double classifier_loss(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& correctness_logits, const TokenSequence& x_pred,
                       const TokenSequence& x1, const Codebook& book) {
  return classifier_terms(correctness_logits, x_pred, x1, book).mean();
}

template <typename Scalar>
double connection_loss(const ad::Matrix<Scalar>& token_logits, const VertexGroups& groups) {
  return connection_terms(token_logits, groups).mean();
}

struct LossWeights {
  double mask = 1.0;
  double uniform = 1.0;
  double phi = 1.0;
  double connection = 1.0;
};

struct LossBreakdown {
  double l_mask = 0.0;
  double l_uniform = 0.0;
  double l_phi = 0.0;
  double l_connection = 0.0;
  double total = 0.0;

  bool operator==(const LossBreakdown&) const = default;
};

/// Weighted sum of the four terms (unit weights by default). Throws
/// RuntimeFailure naming the first non-finite term.
LossBreakdown total_loss(double l_mask, double l_uniform, double l_phi, double l_connection,
                         const LossWeights& weights = {});

}  // namespace tssr
