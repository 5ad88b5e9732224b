#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "behavsim/metrics.hpp"

namespace behavsim {

/// Norms are floored at this value before dividing.
inline constexpr double kNormFloor = 1e-12;

/// u.v / (max(|u|, 1e-12) max(|v|, 1e-12)).
double cosine_similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// -log(e^{l s(a,p)} / (e^{l s(a,p)} + sum_n e^{l s(a,n)})) with cosine similarity s.
/// Throws InvalidArgument on an empty negative set or lambda <= 0.
double simclr_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                   const std::vector<Eigen::VectorXd>& negatives, double lambda);

/// Soft contrastive loss for one anchor. `candidates` holds the candidate
/// embeddings, `gamma` their similarity to the anchor, and `positive` the index
/// of the positive among them. The positive term is weighted by gamma[positive],
/// every other candidate by 1 - gamma. Candidates with weight 0 drop out; with
/// no weighted negatives the loss is 0.
double cme_pair_loss(const Eigen::VectorXd& anchor, const std::vector<Eigen::VectorXd>& candidates,
                     std::size_t positive, const Eigen::VectorXd& gamma, double lambda);

struct PositivePair {
  std::size_t anchor = 0;    ///< column of the table (Y state position)
  std::size_t positive = 0;  ///< row of the table (X state position)
  Eigen::VectorXd gamma;     ///< kernel of the anchor's column
};

/// Nearest candidate per column (argmax of the kernel, i.e. argmin of the
/// distance, lowest row on ties).
std::vector<PositivePair> select_positive_pairs(const PairwiseMetricTable& table, double beta);

struct LossWithGrad {
  double value = 0.0;
  Eigen::MatrixXd grad_a;  ///< derivative w.r.t. the first input
  Eigen::MatrixXd grad_b;  ///< derivative w.r.t. the second input (when present)
};

/// Mean soft contrastive loss over anchors y (columns of `distances`, embeddings
/// zy) against every x (rows, embeddings zx), with kernel exp(-d / beta)
/// evaluated in the log domain. grad_a is w.r.t. zx, grad_b w.r.t. zy.
LossWithGrad cme_total_loss(const Eigen::MatrixXd& zx, const Eigen::MatrixXd& zy, const Eigen::MatrixXd& distances,
                            double beta, double lambda);

/// mean_{i,j} (|zx_i - zy_j| - d_ij)^2. The gradient of the norm at zero is taken as 0.
LossWithGrad l2_metric_loss(const Eigen::MatrixXd& zx, const Eigen::MatrixXd& zy, const Eigen::MatrixXd& distances);

/// Mean cross-entropy of softmax(logits column) against `actions`; grad_a is w.r.t. the logits.
LossWithGrad imitation_loss(const Eigen::MatrixXd& logits, const std::vector<std::size_t>& actions);
/// Single-sample form.
double imitation_loss(const Eigen::VectorXd& logits, std::size_t action);

}  // namespace behavsim
