#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rmlab/labeling.hpp"
#include "rmlab/synthworld.hpp"

namespace rmlab {

// Partitions labeled responses into the ranking set D_BT (high-fidelity
// preference pairs) and the regression set D_MSE (bin-balanced absolute
// scores), and optionally swaps rejected responses for reward-hacking
// templates.

struct PreferencePair {
    std::uint64_t context_id = 0;
    std::uint64_t chosen_id = 0;
    std::uint64_t rejected_id = 0;
    double delta = 0.0;  // s_w(chosen) - s_w(rejected) at mining time, > 0
    bool hard_negative = false;
    std::int64_t template_id = -1;  // payload id when hard_negative
};

struct MseRecord {
    std::uint64_t response_id = 0;
    std::array<double, 3> target{};  // [s_help, s_harm, s_w] from the label
    int length_bin = 0;
    int category = 0;
    int sw_bin = 0;
};

// Feature vector crafted to score high on a naively trained single-head
// model while carrying the lowest weighted score in the corpus.
struct HackTemplate {
    std::int64_t id = 0;
    NumArray feature;
    std::array<double, 3> target{};
};

struct BinReport {
    // key: (length_bin, category, sw_bin) -> {pool count, drawn count}
    std::map<std::array<int, 3>, std::pair<std::size_t, std::size_t>> cells;
    std::size_t max_drawn() const;
    std::size_t min_drawn_occupied() const;
};

struct CuratedCorpus {
    std::vector<PreferencePair> d_bt;
    std::vector<MseRecord> d_mse;
    std::vector<HackTemplate> templates;
    BinReport bins;
};

enum class OverlapPolicy {
    allow,    // D_BT pair members may also enter the D_MSE pool
    exclude,  // responses used in D_BT are kept out of D_MSE
};

struct CurationConfig {
    double delta_min = 3.6;
    double bt_frac = 0.85;
    std::size_t length_bins = 3;
    std::size_t sw_bins = 4;
    std::size_t per_bin = 8;
    double hard_negative_p = 0.10;
    bool exact_fraction = false;  // replace exactly round(p*n) pairs instead of Bernoulli
    OverlapPolicy overlap = OverlapPolicy::allow;
    std::size_t template_pool = 32;

    void validate() const;
};

// All same-context response pairs whose weighted-score difference strictly
// exceeds delta_min, oriented so the chosen side has the higher s_w.
std::vector<PreferencePair> mine_pairs(const std::vector<AggregatedLabel>& labels,
                                       const World& world, double delta_min);

// floor(bt_frac * |eligible|) pairs drawn into D_BT without replacement; the
// rest are decomposed into the MSE candidate pool together with unpaired
// responses, then D_MSE takes min(per_bin, cell size) per
// (length-bin x category x s_w-bin) cell.
CuratedCorpus split_bt_mse(const std::vector<PreferencePair>& eligible,
                           const std::vector<AggregatedLabel>& labels, const World& world,
                           const CurationConfig& config, std::uint64_t seed);

// Trains a throwaway single-head scorer on (feature -> s_w) and runs a short
// adversarial ascent from random responses to synthesize template features.
std::vector<HackTemplate> build_template_pool(const std::vector<AggregatedLabel>& labels,
                                              const World& world, std::size_t count,
                                              std::uint64_t seed);

// Independently per pair with probability p, swap the rejected side for a
// template drawn from the pool and set the hard_negative flag.
void inject_hard_negatives(std::vector<PreferencePair>& d_bt, double p,
                           const std::vector<HackTemplate>& pool, bool exact_fraction,
                           std::uint64_t seed);

void write_corpus_dir(const std::string& dir, const CuratedCorpus& corpus);
CuratedCorpus read_corpus_dir(const std::string& dir);

}  // namespace rmlab
