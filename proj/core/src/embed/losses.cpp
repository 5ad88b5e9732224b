#include "behavsim/embed/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "behavsim/error.hpp"

namespace behavsim {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& t) {
  double m = kNegInf;
  for (double v : t) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : t) s += std::exp(v - m);
  return m + std::log(s);
}

Eigen::VectorXd normalized(const Eigen::VectorXd& v) { return v / std::max(v.norm(), kNormFloor); }

struct Normalized {
  Eigen::MatrixXd unit;
  Eigen::VectorXd norms;  // floored
  std::vector<bool> floored;
};

Normalized normalize_columns(const Eigen::MatrixXd& z) {
  Normalized n{Eigen::MatrixXd(z.rows(), z.cols()), Eigen::VectorXd(z.cols()), std::vector<bool>(z.cols())};
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double norm = z.col(j).norm();
    n.floored[static_cast<std::size_t>(j)] = norm < kNormFloor;
    n.norms[j] = std::max(norm, kNormFloor);
    n.unit.col(j) = z.col(j) / n.norms[j];
  }
  return n;
}

// Chain rule through z -> z / max(|z|, floor).
Eigen::MatrixXd normalize_backward(const Normalized& n, const Eigen::MatrixXd& d_unit) {
  Eigen::MatrixXd d(d_unit.rows(), d_unit.cols());
  for (Eigen::Index j = 0; j < d_unit.cols(); ++j) {
    if (n.floored[static_cast<std::size_t>(j)]) {
      d.col(j) = d_unit.col(j) / n.norms[j];
    } else {
      d.col(j) = (d_unit.col(j) - n.unit.col(j) * n.unit.col(j).dot(d_unit.col(j))) / n.norms[j];
    }
  }
  return d;
}

// log(1 - exp(-x)) for x >= 0; -inf at x = 0.
double log1m_exp_neg(double x) { return x <= 0.0 ? kNegInf : std::log(-std::expm1(-x)); }

}  // namespace

double cosine_similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw InvalidArgument("cosine_similarity: length mismatch");
  return u.dot(v) / (std::max(u.norm(), kNormFloor) * std::max(v.norm(), kNormFloor));
}

double simclr_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                   const std::vector<Eigen::VectorXd>& negatives, double lambda) {
  if (negatives.empty()) throw InvalidArgument("simclr_loss: needs at least one negative");
  if (!(lambda > 0.0)) throw InvalidArgument("simclr_loss: lambda must be positive");
  std::vector<double> t{lambda * cosine_similarity(positive, anchor)};
  for (const auto& n : negatives) t.push_back(lambda * cosine_similarity(n, anchor));
  return log_sum_exp(t) - t.front();
}

double cme_pair_loss(const Eigen::VectorXd& anchor, const std::vector<Eigen::VectorXd>& candidates,
                     std::size_t positive, const Eigen::VectorXd& gamma, double lambda) {
  if (positive >= candidates.size()) throw InvalidArgument("cme_pair_loss: positive is not a candidate");
  if (static_cast<std::size_t>(gamma.size()) != candidates.size()) {
    throw InvalidArgument("cme_pair_loss: one kernel value per candidate expected");
  }
  if (!(lambda > 0.0)) throw InvalidArgument("cme_pair_loss: lambda must be positive");
  for (Eigen::Index i = 0; i < gamma.size(); ++i) {
    if (!(gamma[i] >= 0.0 && gamma[i] <= 1.0)) throw InvalidArgument("cme_pair_loss: kernel values must lie in [0, 1]");
  }
  const auto p = static_cast<Eigen::Index>(positive);
  if (!(gamma[p] > 0.0)) throw InvalidArgument("cme_pair_loss: the positive needs a positive kernel value");
  const Eigen::VectorXd a = normalized(anchor);
  std::vector<double> t{std::log(gamma[p]) + lambda * normalized(candidates[positive]).dot(a)};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (i == positive || gamma[static_cast<Eigen::Index>(i)] >= 1.0) continue;
    t.push_back(std::log1p(-gamma[static_cast<Eigen::Index>(i)]) + lambda * normalized(candidates[i]).dot(a));
  }
  return log_sum_exp(t) - t.front();
}

std::vector<PositivePair> select_positive_pairs(const PairwiseMetricTable& table, double beta) {
  if (table.values.size() == 0) throw InvalidArgument("select_positive_pairs: empty table");
  std::vector<PositivePair> pairs;
  for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < table.values.rows(); ++i) {
      if (table.values(i, j) < table.values(best, j)) best = i;
    }
    pairs.push_back({static_cast<std::size_t>(j), static_cast<std::size_t>(best),
                     gaussian_kernel(Eigen::MatrixXd(table.values.col(j)), beta)});
  }
  return pairs;
}

LossWithGrad cme_total_loss(const Eigen::MatrixXd& zx, const Eigen::MatrixXd& zy, const Eigen::MatrixXd& distances,
                            double beta, double lambda) {
  if (zx.rows() != zy.rows()) throw InvalidArgument("cme_total_loss: embedding dimensions differ");
  if (distances.rows() != zx.cols() || distances.cols() != zy.cols()) {
    throw InvalidArgument("cme_total_loss: distance table must be |X| x |Y|");
  }
  if (!(beta > 0.0) || !(lambda > 0.0)) throw InvalidArgument("cme_total_loss: beta and lambda must be positive");
  if (zx.cols() == 0 || zy.cols() == 0) throw InvalidArgument("cme_total_loss: empty batch");
  const Normalized nx = normalize_columns(zx);
  const Normalized ny = normalize_columns(zy);
  const Eigen::MatrixXd sim = lambda * nx.unit.transpose() * ny.unit;  // |X| x |Y|
  const Eigen::Index n = zx.cols();
  const Eigen::Index m = zy.cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, m);  // d loss / d sim
  double total = 0.0;
  std::vector<double> t;
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index p = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
      if (distances(i, j) < distances(p, j)) p = i;
    }
    t.assign(1, -distances(p, j) / beta + sim(p, j));
    idx.assign(1, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == p) continue;
      const double w = log1m_exp_neg(distances(i, j) / beta);
      if (w == kNegInf) continue;
      t.push_back(w + sim(i, j));
      idx.push_back(i);
    }
    const double lse = log_sum_exp(t);
    total += lse - t.front();
    for (std::size_t k = 0; k < t.size(); ++k) g(idx[k], j) += std::exp(t[k] - lse);
    g(p, j) -= 1.0;
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  g *= inv_m;
  LossWithGrad out;
  out.value = total * inv_m;
  out.grad_a = normalize_backward(nx, lambda * ny.unit * g.transpose());
  out.grad_b = normalize_backward(ny, lambda * nx.unit * g);
  return out;
}

LossWithGrad l2_metric_loss(const Eigen::MatrixXd& zx, const Eigen::MatrixXd& zy, const Eigen::MatrixXd& distances) {
  if (zx.rows() != zy.rows()) throw InvalidArgument("l2_metric_loss: embedding dimensions differ");
  if (distances.rows() != zx.cols() || distances.cols() != zy.cols()) {
    throw InvalidArgument("l2_metric_loss: distance table must be |X| x |Y|");
  }
  const Eigen::Index n = zx.cols();
  const Eigen::Index m = zy.cols();
  const double scale = 1.0 / static_cast<double>(n * m);
  LossWithGrad out{0.0, Eigen::MatrixXd::Zero(zx.rows(), n), Eigen::MatrixXd::Zero(zy.rows(), m)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::VectorXd diff = zx.col(i) - zy.col(j);
      const double norm = diff.norm();
      const double r = norm - distances(i, j);
      out.value += r * r * scale;
      if (norm > kNormFloor) {
        const Eigen::VectorXd g = (2.0 * r * scale / norm) * diff;
        out.grad_a.col(i) += g;
        out.grad_b.col(j) -= g;
      }
    }
  }
  return out;
}

LossWithGrad imitation_loss(const Eigen::MatrixXd& logits, const std::vector<std::size_t>& actions) {
  if (static_cast<std::size_t>(logits.cols()) != actions.size() || actions.empty()) {
    throw InvalidArgument("imitation_loss: one action per logits column expected");
  }
  LossWithGrad out{0.0, Eigen::MatrixXd(logits.rows(), logits.cols()), {}};
  const double inv_b = 1.0 / static_cast<double>(actions.size());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const auto a = static_cast<Eigen::Index>(actions[static_cast<std::size_t>(j)]);
    if (a >= logits.rows()) throw InvalidArgument("imitation_loss: action index out of range");
    const double mx = logits.col(j).maxCoeff();
    const Eigen::VectorXd e = (logits.col(j).array() - mx).exp();
    const double s = e.sum();
    out.value += (std::log(s) + mx - logits(a, j)) * inv_b;
    out.grad_a.col(j) = e / s * inv_b;
    out.grad_a(a, j) -= inv_b;
  }
  return out;
}

double imitation_loss(const Eigen::VectorXd& logits, std::size_t action) {
  return imitation_loss(Eigen::MatrixXd(logits), std::vector<std::size_t>{action}).value;
}

}  // namespace behavsim
