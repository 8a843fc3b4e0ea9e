#pragma once

#include <span>
#include <vector>

#include "rmlab/numarray.hpp"

namespace rmlab {

// Numerically stable log(1 + e^x).
double softplus(double x);
double sigmoid(double x);

// Bradley-Terry ranking loss: -log sigma(r_chosen - r_rejected).
// Computed as softplus(-(delta)); the naive -log(sigma(...)) form is not used
// anywhere because it overflows for saturated inputs.
double loss_bt(double r_chosen, double r_rejected);
// d loss_bt / d delta where delta = r_chosen - r_rejected.
double loss_bt_ddelta(double delta);

// Squared Euclidean norm of (pred - target).
double loss_mse_vec(std::span<const double> pred, std::span<const double> target);

enum class SupConReduction { sum, mean };

// Supervised contrastive loss over a batch of embeddings.
//
// Rows of `embeddings` are L2-normalized internally before scoring. For each
// anchor i, positives P(i) are the other rows with the same label and the
// denominator runs over all other rows A(i). Anchors with empty P(i) are
// skipped. The canonical reduction is the plain sum over anchors; the mean
// (over contributing anchors) is available for training stability.
double loss_supcon(const NumArray& embeddings, std::span<const int> labels, double temperature,
                   SupConReduction reduction = SupConReduction::sum);

// Same loss, also writing dL/d(embeddings) (gradient through the internal
// normalization, w.r.t. the raw input rows) into `grad`.
double loss_supcon_grad(const NumArray& embeddings, std::span<const int> labels,
                        double temperature, NumArray& grad,
                        SupConReduction reduction = SupConReduction::sum);

struct ScorePair {
    double chosen = 0.0;
    double rejected = 0.0;
};

struct VecTargetSample {
    std::vector<double> pred;
    std::vector<double> target;
};

// Joint ranking + regression objective:
//   (1-lambda) * mean_i softplus(-(chosen_i - rejected_i))
//     + lambda * mean_j ||pred_j - target_j||^2
// An empty batch contributes 0 (empty-mean convention), so lambda in {0,1}
// degenerates to the pure term.
double loss_joint(std::span<const ScorePair> bt_batch, std::span<const VecTargetSample> mse_batch,
                  double lambda);

}  // namespace rmlab
