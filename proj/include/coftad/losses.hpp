#pragma once

// Cosine-similarity losses over row-aligned embedding matrices.
//
// Every loss returns its value and the gradient with respect to the online
// argument only: target-side embeddings are treated as constants
// (stop-gradient), so no gradient is ever produced for them.

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "coftad/error.hpp"

namespace coftad {

struct LossWeights {
  double lambda_pp = 0.8;
  double lambda_np = 0.6;

  bool valid() const { return std::isfinite(lambda_pp) && std::isfinite(lambda_np) && lambda_pp >= 0 && lambda_np >= 0; }
};

struct LossBreakdown {
  double l_con = 0.0;
  double l_pp = 0.0;
  double l_np = 0.0;
  double l_total = 0.0;

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

/// l_con + lambda_pp * l_pp + lambda_np * l_np.
inline double total_loss(double l_con, double l_pp, double l_np, const LossWeights& w) {
  return l_con + w.lambda_pp * l_pp + w.lambda_np * l_np;
}

inline double total_loss(const LossBreakdown& b, const LossWeights& w) {
  return total_loss(b.l_con, b.l_pp, b.l_np, w);
}

struct LossValue {
  double value = 0.0;
  /// d value / d online embeddings, same shape as the online argument.
  Eigen::MatrixXd grad_online;
};

namespace detail {

inline void check_rows(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x" << b.cols();
    throw ContractError(os.str());
  }
  if (a.rows() == 0) throw ContractError(std::string(what) + ": empty batch");
}

inline double row_norm(const Eigen::MatrixXd& m, Eigen::Index i, const char* what) {
  const double n = m.row(i).norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw NumericalError(std::string(what) + ": degenerate embedding (row " + std::to_string(i) +
                         " has norm " + std::to_string(n) + ")");
  }
  return n;
}

/// Adds scale * d cos(a_i, b_j) / d a_i to grad.row(i) and returns cos(a_i, b_j).
inline double cosine_accumulate(const Eigen::MatrixXd& a, Eigen::Index i, double na, const Eigen::MatrixXd& b,
                                Eigen::Index j, double nb, double scale, Eigen::MatrixXd& grad) {
  const double dot = a.row(i).dot(b.row(j));
  const double cos = dot / (na * nb);
  grad.row(i) += scale * (b.row(j) / (na * nb) - cos * a.row(i) / (na * na));
  return cos;
}

}  // namespace detail

/// -(1/N) sum_i cos(pred_online_i, proj_target_i).
inline LossValue contrastive_loss(const Eigen::MatrixXd& pred_online, const Eigen::MatrixXd& proj_target) {
  detail::check_rows(pred_online, proj_target, "contrastive_loss");
  const auto n = pred_online.rows();
  LossValue out{0.0, Eigen::MatrixXd::Zero(pred_online.rows(), pred_online.cols())};
  const double scale = -1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double na = detail::row_norm(pred_online, i, "contrastive_loss");
    const double nb = detail::row_norm(proj_target, i, "contrastive_loss");
    out.value += scale * detail::cosine_accumulate(pred_online, i, na, proj_target, i, nb, scale, out.grad_online);
  }
  return out;
}

/// Cross-instance positive pairs:
/// -(1/2N) sum_i [cos(online_i, target_p(i)) + cos(online_p(i), target_i)].
inline LossValue cross_instance_pp_loss(const Eigen::MatrixXd& feat_online, const Eigen::MatrixXd& feat_target,
                                        std::span<const int> pairing) {
  detail::check_rows(feat_online, feat_target, "cross_instance_pp_loss");
  const auto n = feat_online.rows();
  if (static_cast<Eigen::Index>(pairing.size()) != n) {
    throw ContractError("cross_instance_pp_loss: pairing size does not match the batch");
  }
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int p : pairing) {
    if (p < 0 || p >= n || seen[static_cast<std::size_t>(p)]) {
      throw ContractError("cross_instance_pp_loss: pairing is not a permutation");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  std::vector<double> norm_on(static_cast<std::size_t>(n)), norm_tg(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    norm_on[static_cast<std::size_t>(i)] = detail::row_norm(feat_online, i, "cross_instance_pp_loss");
    norm_tg[static_cast<std::size_t>(i)] = detail::row_norm(feat_target, i, "cross_instance_pp_loss");
  }
  LossValue out{0.0, Eigen::MatrixXd::Zero(feat_online.rows(), feat_online.cols())};
  const double scale = -1.0 / (2.0 * static_cast<double>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = pairing[static_cast<std::size_t>(i)];
    const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
    out.value += scale * detail::cosine_accumulate(feat_online, i, norm_on[ui], feat_target, j, norm_tg[uj], scale,
                                                   out.grad_online);
    out.value += scale * detail::cosine_accumulate(feat_online, j, norm_on[uj], feat_target, i, norm_tg[ui], scale,
                                                   out.grad_online);
  }
  return out;
}

/// Negative pairs: +(1/N) sum_i cos(target_orig_i, online_neg_i). Minimizing
/// it pushes negatives away from their originals.
inline LossValue negative_pair_loss(const Eigen::MatrixXd& feat_target_orig, const Eigen::MatrixXd& feat_online_neg) {
  detail::check_rows(feat_target_orig, feat_online_neg, "negative_pair_loss");
  const auto n = feat_online_neg.rows();
  LossValue out{0.0, Eigen::MatrixXd::Zero(feat_online_neg.rows(), feat_online_neg.cols())};
  const double scale = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double na = detail::row_norm(feat_online_neg, i, "negative_pair_loss");
    const double nb = detail::row_norm(feat_target_orig, i, "negative_pair_loss");
    out.value += scale * detail::cosine_accumulate(feat_online_neg, i, na, feat_target_orig, i, nb, scale,
                                                   out.grad_online);
  }
  return out;
}

}  // namespace coftad
