#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmlab/curation.hpp"
#include "rmlab/mlp.hpp"
#include "rmlab/synthworld.hpp"

namespace rmlab {

// The three reward-model architectures over a shared feature backbone:
//   single     one scalar head, trained end-to-end on the joint loss with
//              scalar targets s_w
//   sequential help/harm heads trained first (MSE), then frozen while a
//              small meta-voter over their two outputs learns the weighted
//              score
//   parallel   help/harm heads plus a context-weighting gate, all trained
//              jointly; r_w = g * r_help + (1-g) * r_harm with the gate g
//              computed from the shared representation. Emits the full
//              vector [r_help, r_harm, r_w].

enum class RewardKind { single, sequential, parallel };

std::string reward_kind_name(RewardKind k);
RewardKind reward_kind_from_name(const std::string& name);

struct RewardDims {
    std::size_t feature_dim = 8;
    std::vector<std::size_t> backbone_hidden = {32, 16};
    std::vector<std::size_t> metavoter_hidden = {8};
    Activation activation = Activation::relu;
};

struct TrainConfig;
struct TrainResult;
class RewardNet;
TrainResult train(RewardNet& net, const CuratedCorpus& corpus, const World& world,
                  const TrainConfig& cfg);

class RewardNet {
public:
    static RewardNet build(RewardKind kind, const RewardDims& dims, std::uint64_t seed);

    RewardKind kind() const { return kind_; }
    const RewardDims& dims() const { return dims_; }
    std::size_t param_count() const;

    // single: scalar (1-vector); sequential/parallel: [r_help, r_harm, r_w].
    NumArray score(const NumArray& features) const;
    // batch rows in, one score row out per input row
    NumArray score_batch(const NumArray& features) const;
    double weighted_score(const NumArray& features) const;

    std::vector<double> flat_params() const;
    void set_flat_params(std::span<const double> params);
    // 1 = frozen. All-zero except during sequential stage 2.
    const std::vector<std::uint8_t>& frozen_mask() const { return frozen_; }

    void save(const std::string& path) const;
    static RewardNet load(const std::string& path);

    // component access (tests inspect freezing behaviour)
    const Mlp& backbone() const { return backbone_; }
    const Mlp& metavoter() const { return metavoter_; }

private:
    RewardKind kind_ = RewardKind::single;
    RewardDims dims_;
    Mlp backbone_;       // d -> h; the hidden activation is applied once more
                         // on the backbone output before any head sees it
    Mlp head_help_;      // h -> 1 (sequential, parallel)
    Mlp head_harm_;      // h -> 1 (sequential, parallel)
    Mlp head_weighted_;  // single: the scalar head; parallel: the gate logit
    Mlp metavoter_;      // [r_help, r_harm] -> 1 (sequential)
    std::vector<std::uint8_t> frozen_;

    friend TrainResult train(RewardNet&, const CuratedCorpus&, const World&, const TrainConfig&);
};

struct TrainConfig {
    double lambda = 0.5;
    std::size_t epochs = 40;
    std::size_t batch_bt = 32;
    std::size_t batch_mse = 32;
    double lr = 0.02;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    // sequential stage 2 draws preference and regression samples 2:1
    double stage2_bt_mse_ratio = 2.0;
    std::size_t stage1_epochs = 40;  // sequential stage 1

    void validate() const;
};

struct TrainResult {
    std::vector<double> loss_trace;  // mean loss per epoch (stage 2 for sequential)
    std::vector<double> stage1_trace;
    std::size_t steps = 0;
};

// train(): see declaration above. Trains in place; throws
// TrainingDivergedError (with the step index) if the loss goes non-finite.

// --- evaluation -------------------------------------------------------------

struct EvalPair {
    std::uint64_t chosen_id = 0;
    std::uint64_t rejected_id = 0;
    double d_help = 0.0;  // labeled score differences (chosen - rejected)
    double d_harm = 0.0;
    double d_w = 0.0;
};

// All same-context pairs under the given labels, oriented by s_w.
std::vector<EvalPair> make_eval_pairs(const std::vector<AggregatedLabel>& labels,
                                      const World& world);

enum class EvalDim { help = 0, harm = 1, weighted = 2 };

struct AccuracyCell {
    std::size_t pairs = 0;
    std::size_t correct = 0;
    double accuracy() const { return pairs ? static_cast<double>(correct) / pairs : 0.0; }
};

struct EvalReport {
    // [dim][threshold index]; absent when the architecture does not expose
    // the dimension (single reports weighted only) or the pair set is empty
    std::array<std::array<std::optional<AccuracyCell>, 2>, 3> cells;
    std::array<double, 2> thresholds{2.0, 4.0};
    std::optional<double> hard_negative_pass_rate;

    const std::optional<AccuracyCell>& cell(EvalDim d, std::size_t t) const {
        return cells[static_cast<std::size_t>(d)][t];
    }
};

// Strict-ordering preference accuracy per dimension and threshold; ties in
// the model scores count as incorrect.
EvalReport eval_pref(const RewardNet& net, const std::vector<EvalPair>& pairs, const World& world,
                     std::array<double, 2> thresholds = {2.0, 4.0});

// Fraction of templates whose weighted score falls below their paired chosen
// response's weighted score.
double hard_negative_pass_rate(const RewardNet& net, const std::vector<HackTemplate>& templates,
                               const std::vector<NumArray>& chosen_features);

void write_eval_report(const std::string& path, const std::string& kind, const EvalReport& report);

}  // namespace rmlab
