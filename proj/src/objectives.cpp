#include "tssr/objectives.hpp"

#include "tssr/error.hpp"

#include <cmath>

namespace tssr {

template <typename Scalar>
LossTerm<Scalar> ce_clean_terms(const ad::Matrix<Scalar>& token_logits, const TokenSequence& x1, const Codebook& book,
                                const std::vector<char>* include) {
  require(token_logits.rows() == static_cast<Eigen::Index>(x1.size()), "ce_clean_loss: row count != sequence length");
  require(token_logits.cols() >= book.resolution, "ce_clean_loss: too few logit columns");
  require(include == nullptr || include->size() == x1.size(), "ce_clean_loss: include mask has the wrong length");
  const std::size_t n = unpadded_length(x1, book);
  LossTerm<Scalar> term;
  term.grad = ad::Matrix<Scalar>::Zero(token_logits.rows(), token_logits.cols());
  for (std::size_t i = 0; i < n; ++i) {
    if (include && !(*include)[i]) continue;
    const Token target = x1[i];
    require(target >= 0 && target < token_logits.cols(), "ce_clean_loss: target outside the logit range");
    const auto r = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd row = token_logits.row(r).transpose().template cast<double>();
    const double mx = row.maxCoeff();
    const Eigen::VectorXd e = (row.array() - mx).exp().matrix();
    const double z = e.sum();
    term.sum += std::log(z) + mx - row(target);
    Eigen::VectorXd g = e / z;
    g(target) -= 1.0;
    term.grad.row(r) = g.transpose().cast<Scalar>();
    ++term.count;
  }
  return term;
}

template <typename Scalar>
LossTerm<Scalar> classifier_terms(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& correctness_logits,
                                  const TokenSequence& x_pred, const TokenSequence& x1, const Codebook& book) {
  require(correctness_logits.size() == static_cast<Eigen::Index>(x1.size()) && x_pred.size() == x1.size(),
          "classifier_loss: shape mismatch");
  const std::size_t n = unpadded_length(x1, book);
  LossTerm<Scalar> term;
  term.grad = ad::Matrix<Scalar>::Zero(correctness_logits.size(), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = static_cast<double>(correctness_logits(static_cast<Eigen::Index>(i)));
    const double label = x_pred[i] == x1[i] ? 1.0 : 0.0;
    // softplus(z) - label * z, written to stay finite for large |z|
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    term.sum += softplus - label * z;
    const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    term.grad(static_cast<Eigen::Index>(i), 0) = static_cast<Scalar>(sig - label);
    ++term.count;
  }
  return term;
}

template <typename Scalar>
LossTerm<Scalar> connection_terms(const ad::Matrix<Scalar>& token_logits, const VertexGroups& groups) {
  LossTerm<Scalar> term;
  term.grad = ad::Matrix<Scalar>::Zero(token_logits.rows(), token_logits.cols());
  const Eigen::Index width = token_logits.cols();
  for (const auto& g : groups.groups) {
    require(!g.empty(), "connection_loss: empty group");
    for (int s : g)
      require(s >= 0 && s + 2 < token_logits.rows(), "connection_loss: offset " + std::to_string(s) + " out of range");
    const double inv_size = 1.0 / static_cast<double>(g.size());
    double l1_sum = 0.0;
    for (int j = 0; j < 3; ++j) {
      Eigen::RowVectorXd consensus = Eigen::RowVectorXd::Zero(width);
      for (int s : g) consensus += token_logits.row(s + j).template cast<double>();
      consensus *= inv_size;
      Eigen::RowVectorXd sign_sum = Eigen::RowVectorXd::Zero(width);
      std::vector<Eigen::RowVectorXd> signs;
      signs.reserve(g.size());
      for (int s : g) {
        const Eigen::RowVectorXd diff = token_logits.row(s + j).template cast<double>() - consensus;
        l1_sum += diff.cwiseAbs().sum();
        signs.push_back(diff.array().sign().matrix());
        sign_sum += signs.back();
      }
      // d/dP_k sum_k' |P_k' - C| = sign_k - mean_k' sign_k'
      for (std::size_t k = 0; k < g.size(); ++k)
        term.grad.row(g[k] + j) += ((signs[k] - sign_sum * inv_size) * (inv_size / 3.0)).template cast<Scalar>();
    }
    term.sum += l1_sum / static_cast<double>(g.size()) / 3.0;
    ++term.count;
  }
  return term;
}

LossBreakdown total_loss(double l_mask, double l_uniform, double l_phi, double l_connection, const LossWeights& w) {
  const std::pair<const char*, double> parts[] = {
      {"l_mask", l_mask}, {"l_uniform", l_uniform}, {"l_phi", l_phi}, {"l_connection", l_connection}};
  for (const auto& [name, v] : parts)
    if (!std::isfinite(v)) throw RuntimeFailure(std::string("non-finite loss term ") + name);
  LossBreakdown b{l_mask, l_uniform, l_phi, l_connection, 0.0};
  b.total = w.mask * l_mask + w.uniform * l_uniform + w.phi * l_phi + w.connection * l_connection;
  return b;
}

template LossTerm<float> ce_clean_terms(const ad::Matrix<float>&, const TokenSequence&, const Codebook&,
                                        const std::vector<char>*);
template LossTerm<double> ce_clean_terms(const ad::Matrix<double>&, const TokenSequence&, const Codebook&,
                                         const std::vector<char>*);
template LossTerm<float> classifier_terms(const Eigen::Matrix<float, Eigen::Dynamic, 1>&, const TokenSequence&,
                                          const TokenSequence&, const Codebook&);
template LossTerm<double> classifier_terms(const Eigen::Matrix<double, Eigen::Dynamic, 1>&, const TokenSequence&,
                                           const TokenSequence&, const Codebook&);
template LossTerm<float> connection_terms(const ad::Matrix<float>&, const VertexGroups&);
template LossTerm<double> connection_terms(const ad::Matrix<double>&, const VertexGroups&);

}  // namespace tssr
