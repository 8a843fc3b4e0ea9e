#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rmlab/losses.hpp"
#include "rmlab/mlp.hpp"

namespace rmlab {

// Trains a projection head with the risk-aware contrastive objective over
// synthetic severity-labelled embeddings and quantifies the induced
// clustering. Label 0 is the zero-risk class.

struct RiskCorpus {
    NumArray embeddings;     // n x dim
    std::vector<int> labels; // 0..K-1
    std::size_t n_classes = 0;
};

struct RiskCorpusConfig {
    std::size_t n_classes = 4;
    std::size_t per_class = 64;
    std::size_t dim = 16;
    double separation = 2.0;      // simplex scale of the class means
    double nuisance_scale = 3.0;  // shared high-variance directions
    std::size_t n_nuisance = 4;
    double iso_noise = 0.1;

    void validate() const;
};

// Class means sit on a centered simplex scaled by `separation`; all classes
// share the same nuisance directions, which is what entangles them at
// generation time.
RiskCorpus gen_risk_corpus(const RiskCorpusConfig& config, std::uint64_t seed);

struct ProjectionTrainConfig {
    double temperature = 0.1;
    std::size_t epochs = 30;
    std::size_t batch = 32;  // assembled as same-class pairs, so every anchor
                             // has at least one positive
    double lr = 0.05;
    double momentum = 0.9;
    SupConReduction reduction = SupConReduction::mean;

    void validate() const;
};

struct ProjectionTrace {
    std::vector<double> epoch_mean_loss;
};

// Minimizes the contrastive loss over projected (and re-normalized)
// embeddings. Batches are stratified by class membership only, never by
// label value, so renaming classes cannot change the trace.
ProjectionTrace train_projection(const RiskCorpus& corpus, Mlp& head,
                                 const ProjectionTrainConfig& config, std::uint64_t seed);

struct ClusterMetrics {
    double intra_cosine = 0.0;  // mean cosine similarity within classes
    double inter_cosine = 0.0;  // mean cosine similarity across classes
    double silhouette = 0.0;    // cosine-distance silhouette
};

// Metrics on L2-normalized (optionally projected) embeddings. Throws
// MetricError when fewer than two classes have two members.
ClusterMetrics cluster_metrics(const RiskCorpus& corpus, const Mlp* head);

// Projected embedding dump (id, label, coordinates), one JSON record per line.
void write_projection_jsonl(const std::string& path, const RiskCorpus& corpus, const Mlp* head);

}  // namespace rmlab
