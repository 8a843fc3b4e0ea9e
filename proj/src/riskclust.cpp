#include "rmlab/riskclust.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace rmlab {

using nlohmann::json;

void RiskCorpusConfig::validate() const {
    if (n_classes < 2) throw ConfigError("risk corpus: need at least 2 classes");
    if (per_class < 2) throw ConfigError("risk corpus: need at least 2 members per class");
    if (dim < n_classes) throw ConfigError("risk corpus: dim must be >= n_classes");
    if (separation < 0.0 || nuisance_scale < 0.0 || iso_noise < 0.0)
        throw ConfigError("risk corpus: scales must be non-negative");
}

RiskCorpus gen_risk_corpus(const RiskCorpusConfig& config, std::uint64_t seed) {
    config.validate();
    const std::size_t n = config.n_classes * config.per_class;

    // Centered simplex vertices: e_k - mean(e), embedded in the first
    // n_classes coordinates.
    NumArray means({config.n_classes, config.dim});
    for (std::size_t k = 0; k < config.n_classes; ++k) {
        for (std::size_t j = 0; j < config.n_classes; ++j)
            means.at(k, j) = (j == k ? 1.0 : 0.0) - 1.0 / static_cast<double>(config.n_classes);
        const double norm = l2_norm(means.row(k));
        if (norm > 0.0)
            for (std::size_t j = 0; j < config.dim; ++j)
                means.at(k, j) *= config.separation / norm;
    }

    RngStream dir_rng(derive_seed(seed, "risk/nuisance"));
    NumArray nuisance({config.n_nuisance, config.dim});
    for (std::size_t r = 0; r < config.n_nuisance; ++r) {
        for (std::size_t j = 0; j < config.dim; ++j) nuisance.at(r, j) = dir_rng.gaussian();
        const double norm = l2_norm(nuisance.row(r));
        if (norm > 0.0)
            for (std::size_t j = 0; j < config.dim; ++j) nuisance.at(r, j) /= norm;
    }

    RiskCorpus corpus;
    corpus.n_classes = config.n_classes;
    corpus.embeddings = NumArray({n, config.dim});
    corpus.labels.resize(n);
    std::size_t row = 0;
    for (std::size_t k = 0; k < config.n_classes; ++k) {
        for (std::size_t m = 0; m < config.per_class; ++m, ++row) {
            RngStream rng(derive_seed(seed, "risk/sample", row));
            corpus.labels[row] = static_cast<int>(k);
            auto x = corpus.embeddings.row(row);
            for (std::size_t j = 0; j < config.dim; ++j)
                x[j] = means.at(k, j) + config.iso_noise * rng.gaussian();
            for (std::size_t r = 0; r < config.n_nuisance; ++r) {
                const double g = config.nuisance_scale * rng.gaussian();
                axpy(g, nuisance.row(r), x);
            }
        }
    }
    return corpus;
}

void ProjectionTrainConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("projection: temperature must be positive");
    if (epochs == 0) throw ConfigError("projection: epochs must be positive");
    if (batch < 4 || batch % 2 != 0)
        throw ConfigError("projection: batch must be an even number >= 4");
    if (!(lr > 0.0)) throw ConfigError("projection: learning rate must be positive");
}

namespace {

// Sample groups ordered by first occurrence, members by corpus index: the
// construction never looks at label values, only membership, so a bijective
// relabeling yields bit-identical batches.
std::vector<std::vector<std::size_t>> membership_groups(const RiskCorpus& corpus) {
    std::vector<int> seen_labels;
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < corpus.labels.size(); ++i) {
        std::size_t g = seen_labels.size();
        for (std::size_t s = 0; s < seen_labels.size(); ++s)
            if (seen_labels[s] == corpus.labels[i]) {
                g = s;
                break;
            }
        if (g == seen_labels.size()) {
            seen_labels.push_back(corpus.labels[i]);
            groups.emplace_back();
        }
        groups[g].push_back(i);
    }
    return groups;
}

}  // namespace

ProjectionTrace train_projection(const RiskCorpus& corpus, Mlp& head,
                                 const ProjectionTrainConfig& config, std::uint64_t seed) {
    config.validate();
    if (head.input_dim() != corpus.embeddings.shape()[1])
        throw ShapeError("projection head input dim does not match corpus embeddings");

    const auto groups = membership_groups(corpus);
    bool any_pairable = false;
    for (const auto& g : groups)
        if (g.size() >= 2) any_pairable = true;
    if (!any_pairable)
        throw ConfigError("projection training: every class is a singleton, no positives exist");
    std::vector<std::size_t> pairable;
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (groups[g].size() >= 2) pairable.push_back(g);

    std::vector<double> params = head.flat_params();
    SgdMomentum opt(params.size(), config.lr, config.momentum);
    const std::size_t n = corpus.labels.size();
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, n / config.batch);
    const std::size_t pairs_per_batch = config.batch / 2;

    ProjectionTrace trace;
    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        RngStream rng(derive_seed(seed, "risk/epoch", epoch));
        double epoch_loss = 0.0;
        for (std::size_t step = 0; step < steps_per_epoch; ++step, ++global_step) {
            // batch = same-class index pairs, so every anchor has a positive
            std::vector<std::size_t> picks;
            picks.reserve(config.batch);
            for (std::size_t p = 0; p < pairs_per_batch; ++p) {
                const auto& group = groups[pairable[rng.index(pairable.size())]];
                const std::size_t a = rng.index(group.size());
                std::size_t b = rng.index(group.size() - 1);
                if (b >= a) ++b;
                picks.push_back(group[a]);
                picks.push_back(group[b]);
            }

            NumArray batch_in({picks.size(), corpus.embeddings.shape()[1]});
            std::vector<int> batch_labels(picks.size());
            for (std::size_t i = 0; i < picks.size(); ++i) {
                const auto src = corpus.embeddings.row(picks[i]);
                std::copy(src.begin(), src.end(), batch_in.row(i).begin());
                batch_labels[i] = corpus.labels[picks[i]];
            }

            MlpTape tape;
            const NumArray projected = mlp_forward_tape(head, batch_in, tape);
            NumArray dproj;
            const double loss = loss_supcon_grad(projected, batch_labels, config.temperature,
                                                 dproj, config.reduction);
            if (!std::isfinite(loss))
                throw TrainingDivergedError("projection loss non-finite", global_step);
            MlpGrads grads(head);
            mlp_backward(head, tape, dproj, grads);
            std::vector<double> flat(params.size(), 0.0);
            grads.add_flat_into(flat);
            opt.step(params, flat);
            head.set_flat_params(params);
            epoch_loss += loss;
        }
        trace.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
    }
    return trace;
}

namespace {

NumArray normalized_projection(const RiskCorpus& corpus, const Mlp* head) {
    NumArray z = head ? head->forward(corpus.embeddings) : corpus.embeddings;
    for (std::size_t i = 0; i < z.shape()[0]; ++i) {
        auto row = z.row(i);
        const double norm = l2_norm(row);
        if (norm > 1e-12)
            for (double& v : row) v /= norm;
    }
    return z;
}

}  // namespace

ClusterMetrics cluster_metrics(const RiskCorpus& corpus, const Mlp* head) {
    const std::size_t n = corpus.labels.size();
    if (n < 4) throw MetricError("cluster_metrics: corpus too small");
    std::vector<int> distinct;
    for (int l : corpus.labels)
        if (std::find(distinct.begin(), distinct.end(), l) == distinct.end())
            distinct.push_back(l);
    if (distinct.size() < 2)
        throw MetricError("cluster_metrics: silhouette needs at least 2 classes");

    const NumArray z = normalized_projection(corpus, head);

    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double sim = dot(z.row(i), z.row(j));
            if (corpus.labels[i] == corpus.labels[j]) {
                intra += sim;
                ++n_intra;
            } else {
                inter += sim;
                ++n_inter;
            }
        }
    if (n_intra == 0) throw MetricError("cluster_metrics: no class has 2 members");

    ClusterMetrics m;
    m.intra_cosine = intra / static_cast<double>(n_intra);
    m.inter_cosine = n_inter ? inter / static_cast<double>(n_inter) : 0.0;

    // silhouette under cosine distance 1 - sim
    double sil = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double own_sum = 0.0;
        std::size_t own_count = 0;
        std::vector<double> other_sum(distinct.size(), 0.0);
        std::vector<std::size_t> other_count(distinct.size(), 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double dist = 1.0 - dot(z.row(i), z.row(j));
            if (corpus.labels[j] == corpus.labels[i]) {
                own_sum += dist;
                ++own_count;
            } else {
                for (std::size_t c = 0; c < distinct.size(); ++c)
                    if (distinct[c] == corpus.labels[j]) {
                        other_sum[c] += dist;
                        ++other_count[c];
                        break;
                    }
            }
        }
        if (own_count == 0) continue;  // singleton contributes 0
        const double a = own_sum / static_cast<double>(own_count);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < distinct.size(); ++c)
            if (other_count[c] > 0)
                b = std::min(b, other_sum[c] / static_cast<double>(other_count[c]));
        const double denom = std::max(a, b);
        sil += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    m.silhouette = sil / static_cast<double>(n);
    return m;
}

void write_projection_jsonl(const std::string& path, const RiskCorpus& corpus, const Mlp* head) {
    const NumArray z = normalized_projection(corpus, head);
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    for (std::size_t i = 0; i < corpus.labels.size(); ++i) {
        json coords = json::array();
        for (double v : z.row(i)) coords.push_back(v);
        json rec{{"id", i}, {"label", corpus.labels[i]}, {"coords", coords}};
        os << rec.dump() << '\n';
    }
}

}  // namespace rmlab
