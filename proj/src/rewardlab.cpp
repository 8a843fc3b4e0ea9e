#include "rmlab/rewardlab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "rmlab/losses.hpp"

namespace rmlab {

using nlohmann::json;

std::string reward_kind_name(RewardKind k) {
    switch (k) {
        case RewardKind::single: return "single";
        case RewardKind::sequential: return "sequential";
        case RewardKind::parallel: return "parallel";
    }
    return "single";
}

RewardKind reward_kind_from_name(const std::string& name) {
    if (name == "single") return RewardKind::single;
    if (name == "sequential") return RewardKind::sequential;
    if (name == "parallel") return RewardKind::parallel;
    throw ConfigError("unknown reward architecture: " + name);
}

namespace {

std::vector<std::size_t> backbone_widths(const RewardDims& d) {
    if (d.feature_dim == 0) throw ConfigError("reward dims: feature_dim must be positive");
    if (d.backbone_hidden.empty())
        throw ConfigError("reward dims: backbone needs at least one layer");
    std::vector<std::size_t> w{d.feature_dim};
    w.insert(w.end(), d.backbone_hidden.begin(), d.backbone_hidden.end());
    return w;
}

std::vector<std::size_t> metavoter_widths(const RewardDims& d) {
    std::vector<std::size_t> w{2};
    w.insert(w.end(), d.metavoter_hidden.begin(), d.metavoter_hidden.end());
    w.push_back(1);
    return w;
}

}  // namespace

RewardNet RewardNet::build(RewardKind kind, const RewardDims& dims, std::uint64_t seed) {
    RewardNet net;
    net.kind_ = kind;
    net.dims_ = dims;
    net.backbone_ = Mlp::init(backbone_widths(dims), dims.activation,
                              derive_seed(seed, "reward/backbone"));
    const std::size_t h = dims.backbone_hidden.back();
    switch (kind) {
        case RewardKind::single:
            net.head_weighted_ =
                Mlp::init({h, 1}, dims.activation, derive_seed(seed, "reward/head_scalar"));
            break;
        case RewardKind::sequential:
            net.head_help_ =
                Mlp::init({h, 1}, dims.activation, derive_seed(seed, "reward/head_help"));
            net.head_harm_ =
                Mlp::init({h, 1}, dims.activation, derive_seed(seed, "reward/head_harm"));
            net.metavoter_ = Mlp::init(metavoter_widths(dims), dims.activation,
                                       derive_seed(seed, "reward/metavoter"));
            break;
        case RewardKind::parallel:
            net.head_help_ =
                Mlp::init({h, 1}, dims.activation, derive_seed(seed, "reward/head_help"));
            net.head_harm_ =
                Mlp::init({h, 1}, dims.activation, derive_seed(seed, "reward/head_harm"));
            net.head_weighted_ =
                Mlp::init({h, 1}, dims.activation, derive_seed(seed, "reward/head_weighted"));
            break;
    }
    net.frozen_.assign(net.param_count(), 0);
    return net;
}

namespace {

// Live components in flat-parameter order.
template <typename Net, typename Fn>
void for_each_component(Net& net, RewardKind kind, Fn&& fn) {
    fn(net.backbone);
    switch (kind) {
        case RewardKind::single: fn(net.head_weighted); break;
        case RewardKind::sequential:
            fn(net.head_help);
            fn(net.head_harm);
            fn(net.metavoter);
            break;
        case RewardKind::parallel:
            fn(net.head_help);
            fn(net.head_harm);
            fn(net.head_weighted);
            break;
    }
}

struct NetRefs {
    Mlp& backbone;
    Mlp& head_help;
    Mlp& head_harm;
    Mlp& head_weighted;
    Mlp& metavoter;
};
struct NetCRefs {
    const Mlp& backbone;
    const Mlp& head_help;
    const Mlp& head_harm;
    const Mlp& head_weighted;
    const Mlp& metavoter;
};

}  // namespace

std::size_t RewardNet::param_count() const {
    std::size_t n = 0;
    NetCRefs refs{backbone_, head_help_, head_harm_, head_weighted_, metavoter_};
    for_each_component(refs, kind_, [&](const Mlp& m) { n += m.param_count(); });
    return n;
}

std::vector<double> RewardNet::flat_params() const {
    std::vector<double> out;
    out.reserve(param_count());
    NetCRefs refs{backbone_, head_help_, head_harm_, head_weighted_, metavoter_};
    for_each_component(refs, kind_, [&](const Mlp& m) {
        const std::vector<double> p = m.flat_params();
        out.insert(out.end(), p.begin(), p.end());
    });
    return out;
}

void RewardNet::set_flat_params(std::span<const double> params) {
    std::size_t offset = 0;
    NetRefs refs{backbone_, head_help_, head_harm_, head_weighted_, metavoter_};
    for_each_component(refs, kind_, [&](Mlp& m) {
        m.set_flat_params(params.subspan(offset, m.param_count()));
        offset += m.param_count();
    });
    if (offset != params.size()) throw ShapeError("reward net: flat parameter size mismatch");
}

namespace {

struct ForwardState {
    MlpTape tape_backbone;
    NumArray h_pre;  // backbone output before the extra activation
    NumArray h;      // representation the heads see
    MlpTape tape_help, tape_harm, tape_weighted, tape_meta;
    double r_help = 0.0, r_harm = 0.0, r_w = 0.0;
    double w_gate = 0.0;  // parallel: sigmoid of the weighting head
};

void forward_full(const RewardNet& net, const NetCRefs& refs, const NumArray& x,
                  ForwardState& st) {
    st.h_pre = mlp_forward_tape(refs.backbone, x, st.tape_backbone);
    st.h = st.h_pre;
    const Activation act = net.dims().activation;
    for (double& v : st.h.values()) v = activation_apply(act, v);
    switch (net.kind()) {
        case RewardKind::single:
            st.r_w = mlp_forward_tape(refs.head_weighted, st.h, st.tape_weighted)[0];
            break;
        case RewardKind::sequential: {
            st.r_help = mlp_forward_tape(refs.head_help, st.h, st.tape_help)[0];
            st.r_harm = mlp_forward_tape(refs.head_harm, st.h, st.tape_harm)[0];
            const NumArray mv_in = NumArray::vec({st.r_help, st.r_harm});
            st.r_w = mlp_forward_tape(refs.metavoter, mv_in, st.tape_meta)[0];
            break;
        }
        case RewardKind::parallel: {
            // The weighted head arbitrates between the attribute scores with
            // a context-dependent gate: r_w = w * r_help + (1 - w) * r_harm.
            st.r_help = mlp_forward_tape(refs.head_help, st.h, st.tape_help)[0];
            st.r_harm = mlp_forward_tape(refs.head_harm, st.h, st.tape_harm)[0];
            const double gate_logit = mlp_forward_tape(refs.head_weighted, st.h,
                                                       st.tape_weighted)[0];
            st.w_gate = sigmoid(gate_logit);
            st.r_w = st.w_gate * st.r_help + (1.0 - st.w_gate) * st.r_harm;
            break;
        }
    }
}

struct GradSet {
    MlpGrads backbone, head_help, head_harm, head_weighted, metavoter;

    explicit GradSet(const RewardNet& net, const NetCRefs& refs) {
        backbone = MlpGrads(refs.backbone);
        switch (net.kind()) {
            case RewardKind::single: head_weighted = MlpGrads(refs.head_weighted); break;
            case RewardKind::sequential:
                head_help = MlpGrads(refs.head_help);
                head_harm = MlpGrads(refs.head_harm);
                metavoter = MlpGrads(refs.metavoter);
                break;
            case RewardKind::parallel:
                head_help = MlpGrads(refs.head_help);
                head_harm = MlpGrads(refs.head_harm);
                head_weighted = MlpGrads(refs.head_weighted);
                break;
        }
    }

    std::vector<double> flat(const RewardNet& net) const {
        std::vector<double> out;
        auto append = [&](const MlpGrads& g) {
            const std::vector<double> f = g.flat();
            out.insert(out.end(), f.begin(), f.end());
        };
        append(backbone);
        switch (net.kind()) {
            case RewardKind::single: append(head_weighted); break;
            case RewardKind::sequential:
                append(head_help);
                append(head_harm);
                append(metavoter);
                break;
            case RewardKind::parallel:
                append(head_help);
                append(head_harm);
                append(head_weighted);
                break;
        }
        return out;
    }
};

// Backpropagates output cotangents (d_help, d_harm, d_w) into `grads`.
void backward_full(const RewardNet& net, const NetCRefs& refs, ForwardState& st, double d_help,
                   double d_harm, double d_w, GradSet& grads) {
    const std::size_t h_dim = st.h.size();
    NumArray dh({h_dim});

    auto add_head = [&](const Mlp& head, MlpTape& tape, MlpGrads& g, double dout) {
        if (dout == 0.0) return;
        const NumArray din = mlp_backward(head, tape, NumArray::vec({dout}), g);
        for (std::size_t i = 0; i < h_dim; ++i) dh[i] += din[i];
    };

    switch (net.kind()) {
        case RewardKind::single:
            add_head(refs.head_weighted, st.tape_weighted, grads.head_weighted, d_w);
            break;
        case RewardKind::sequential: {
            double dr_help = d_help, dr_harm = d_harm;
            if (d_w != 0.0) {
                const NumArray dmv_in = mlp_backward(refs.metavoter, st.tape_meta,
                                                     NumArray::vec({d_w}), grads.metavoter);
                dr_help += dmv_in[0];
                dr_harm += dmv_in[1];
            }
            add_head(refs.head_help, st.tape_help, grads.head_help, dr_help);
            add_head(refs.head_harm, st.tape_harm, grads.head_harm, dr_harm);
            break;
        }
        case RewardKind::parallel: {
            // r_w = g * r_help + (1-g) * r_harm with g = sigmoid(gate logit)
            const double dr_help = d_help + d_w * st.w_gate;
            const double dr_harm = d_harm + d_w * (1.0 - st.w_gate);
            const double d_gate_logit =
                d_w * (st.r_help - st.r_harm) * st.w_gate * (1.0 - st.w_gate);
            add_head(refs.head_help, st.tape_help, grads.head_help, dr_help);
            add_head(refs.head_harm, st.tape_harm, grads.head_harm, dr_harm);
            add_head(refs.head_weighted, st.tape_weighted, grads.head_weighted, d_gate_logit);
            break;
        }
    }

    const Activation act = net.dims().activation;
    for (std::size_t i = 0; i < h_dim; ++i)
        dh[i] *= activation_grad(act, st.h_pre[i], st.h[i]);
    mlp_backward(refs.backbone, st.tape_backbone, dh, grads.backbone);
}

}  // namespace

NumArray RewardNet::score(const NumArray& features) const {
    if (features.rank() == 2) return score_batch(features);
    if (features.rank() != 1 || features.shape()[0] != dims_.feature_dim)
        throw ShapeError("reward score: feature shape " + shape_string(features.shape()) +
                         " does not match feature_dim " + std::to_string(dims_.feature_dim));
    NetCRefs refs{backbone_, head_help_, head_harm_, head_weighted_, metavoter_};
    ForwardState st;
    forward_full(*this, refs, features, st);
    if (kind_ == RewardKind::single) return NumArray::vec({st.r_w});
    return NumArray::vec({st.r_help, st.r_harm, st.r_w});
}

NumArray RewardNet::score_batch(const NumArray& features) const {
    if (features.rank() != 2) throw ShapeError("score_batch expects (n x d) features");
    const std::size_t n = features.shape()[0];
    const std::size_t out_dim = kind_ == RewardKind::single ? 1 : 3;
    NumArray out({n, out_dim});
    for (std::size_t r = 0; r < n; ++r) {
        NumArray row({features.shape()[1]});
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = features.at(r, c);
        const NumArray s = score(row);
        for (std::size_t c = 0; c < out_dim; ++c) out.at(r, c) = s[c];
    }
    return out;
}

double RewardNet::weighted_score(const NumArray& features) const {
    const NumArray s = score(features);
    return s[s.size() - 1];
}

void RewardNet::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << "rmlab-reward 1\n";
    os << "kind " << reward_kind_name(kind_) << '\n';
    os << "feature_dim " << dims_.feature_dim << '\n';
    os << "backbone_hidden";
    for (std::size_t w : dims_.backbone_hidden) os << ' ' << w;
    os << '\n';
    os << "metavoter_hidden";
    for (std::size_t w : dims_.metavoter_hidden) os << ' ' << w;
    os << '\n';
    os << "activation " << activation_name(dims_.activation) << '\n';
    NetCRefs refs{backbone_, head_help_, head_harm_, head_weighted_, metavoter_};
    for_each_component(refs, kind_, [&](const Mlp& m) { save_mlp(os, m); });
}

RewardNet RewardNet::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("missing input: " + path);
    std::string magic, key, value;
    int version = 0;
    is >> magic >> version;
    if (magic != "rmlab-reward" || version != 1) throw Error("not an rmlab-reward v1 file");
    is >> key >> value;
    if (key != "kind") throw Error("reward file: expected 'kind'");
    RewardDims dims;
    RewardKind kind = reward_kind_from_name(value);
    is >> key >> dims.feature_dim;
    if (key != "feature_dim") throw Error("reward file: expected 'feature_dim'");

    auto read_widths = [&](const std::string& expect) {
        is >> key;
        if (key != expect) throw Error("reward file: expected '" + expect + "'");
        std::vector<std::size_t> widths;
        std::string tok;
        while (is.peek() != '\n' && is >> tok) {
            widths.push_back(static_cast<std::size_t>(std::stoull(tok)));
            while (is.peek() == ' ') is.get();
        }
        return widths;
    };
    dims.backbone_hidden = read_widths("backbone_hidden");
    dims.metavoter_hidden = read_widths("metavoter_hidden");
    is >> key >> value;
    if (key != "activation") throw Error("reward file: expected 'activation'");
    dims.activation = activation_from_name(value);

    RewardNet net = build(kind, dims, 0);
    NetRefs refs{net.backbone_, net.head_help_, net.head_harm_, net.head_weighted_,
                 net.metavoter_};
    for_each_component(refs, kind, [&](Mlp& m) { m = load_mlp(is); });
    net.frozen_.assign(net.param_count(), 0);
    return net;
}

// --- training -----------------------------------------------------------------

void TrainConfig::validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("train: lambda must lie in [0,1]");
    if (epochs == 0 || stage1_epochs == 0) throw ConfigError("train: epochs must be positive");
    if (batch_bt == 0 || batch_mse == 0) throw ConfigError("train: batch sizes must be positive");
    if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (stage2_bt_mse_ratio <= 0.0) throw ConfigError("train: stage2 ratio must be positive");
}

namespace {

struct TrainData {
    const World* world;
    const CuratedCorpus* corpus;
    std::unordered_map<std::int64_t, const HackTemplate*> templates;

    const NumArray& rejected_feature(const PreferencePair& p) const {
        if (p.hard_negative) {
            auto it = templates.find(p.template_id);
            if (it == templates.end())
                throw DataError("pair references unknown template " +
                                std::to_string(p.template_id));
            return it->second->feature;
        }
        return world->response_by_id(p.rejected_id).feature;
    }
    const NumArray& chosen_feature(const PreferencePair& p) const {
        return world->response_by_id(p.chosen_id).feature;
    }
    const NumArray& mse_feature(const MseRecord& r) const {
        return world->response_by_id(r.response_id).feature;
    }
};

struct StepStats {
    double loss = 0.0;
};

// One optimization step over sampled BT / MSE minibatches. mse_dims selects
// which target components supervise which outputs per architecture/stage.
enum class MseMode { scalar_quality, vector3, heads_only, metavoter_sw };

StepStats train_step(RewardNet& net, const NetCRefs& refs, const TrainData& data,
                     std::span<const PreferencePair> bt, std::span<const MseRecord> mse,
                     double lambda, MseMode mode, SgdMomentum& opt,
                     std::vector<double>& params) {
    GradSet grads(net, refs);
    double bt_loss = 0.0, mse_loss = 0.0;

    if (!bt.empty()) {
        const double scale = (1.0 - lambda) / static_cast<double>(bt.size());
        for (const PreferencePair& p : bt) {
            ForwardState sc, sr;
            forward_full(net, refs, data.chosen_feature(p), sc);
            forward_full(net, refs, data.rejected_feature(p), sr);
            const double delta = sc.r_w - sr.r_w;
            bt_loss += loss_bt(sc.r_w, sr.r_w);
            const double dd = scale * loss_bt_ddelta(delta);
            backward_full(net, refs, sc, 0.0, 0.0, dd, grads);
            backward_full(net, refs, sr, 0.0, 0.0, -dd, grads);
        }
        bt_loss /= static_cast<double>(bt.size());
    }

    if (!mse.empty()) {
        const double scale = lambda / static_cast<double>(mse.size());
        for (const MseRecord& r : mse) {
            ForwardState st;
            forward_full(net, refs, data.mse_feature(r), st);
            double d_help = 0.0, d_harm = 0.0, d_w = 0.0, sample = 0.0;
            switch (mode) {
                case MseMode::scalar_quality: {
                    // The single head regresses toward the response's overall
                    // absolute quality, the unweighted mean of the decomposed
                    // scores; the regression set carries no context-weighted
                    // target for a one-score model.
                    const double target = 0.5 * (r.target[0] + r.target[1]);
                    const double e = st.r_w - target;
                    sample = e * e;
                    d_w = scale * 2.0 * e;
                    break;
                }
                case MseMode::vector3: {
                    const double e0 = st.r_help - r.target[0];
                    const double e1 = st.r_harm - r.target[1];
                    const double e2 = st.r_w - r.target[2];
                    sample = e0 * e0 + e1 * e1 + e2 * e2;
                    d_help = scale * 2.0 * e0;
                    d_harm = scale * 2.0 * e1;
                    d_w = scale * 2.0 * e2;
                    break;
                }
                case MseMode::heads_only: {
                    const double e0 = st.r_help - r.target[0];
                    const double e1 = st.r_harm - r.target[1];
                    sample = e0 * e0 + e1 * e1;
                    d_help = scale * 2.0 * e0;
                    d_harm = scale * 2.0 * e1;
                    break;
                }
                case MseMode::metavoter_sw: {
                    const double e = st.r_w - r.target[2];
                    sample = e * e;
                    d_w = scale * 2.0 * e;
                    break;
                }
            }
            mse_loss += sample;
            backward_full(net, refs, st, d_help, d_harm, d_w, grads);
        }
        mse_loss /= static_cast<double>(mse.size());
    }

    const std::vector<double> flat = grads.flat(net);
    opt.step_masked(params, flat, net.frozen_mask());
    net.set_flat_params(params);

    StepStats stats;
    stats.loss = (1.0 - lambda) * bt_loss + lambda * mse_loss;
    return stats;
}

template <typename T>
std::vector<T> sample_batch(std::span<const T> pool, std::size_t n, RngStream& rng) {
    std::vector<T> out;
    if (pool.empty()) return out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool[rng.index(pool.size())]);
    return out;
}

}  // namespace

TrainResult train(RewardNet& net, const CuratedCorpus& corpus, const World& world,
                  const TrainConfig& cfg) {
    cfg.validate();
    TrainData data;
    data.world = &world;
    data.corpus = &corpus;
    for (const HackTemplate& t : corpus.templates) data.templates[t.id] = &t;

    NetCRefs refs{net.backbone_, net.head_help_, net.head_harm_, net.head_weighted_,
                  net.metavoter_};
    std::vector<double> params = net.flat_params();
    TrainResult result;
    std::size_t global_step = 0;

    auto check_finite = [&](double loss) {
        if (!std::isfinite(loss))
            throw TrainingDivergedError("training loss non-finite at step " +
                                            std::to_string(global_step),
                                        global_step);
    };

    if (net.kind_ == RewardKind::sequential) {
        if (corpus.d_mse.empty())
            throw ConfigError("sequential training needs a non-empty regression set");
        // Stage 1: backbone + help/harm heads on decomposed scores (pure MSE);
        // the meta-voter stays untouched.
        {
            std::fill(net.frozen_.begin(), net.frozen_.end(), 0);
            std::size_t offset = net.backbone_.param_count() + net.head_help_.param_count() +
                                 net.head_harm_.param_count();
            for (std::size_t i = offset; i < net.frozen_.size(); ++i) net.frozen_[i] = 1;

            SgdMomentum opt(params.size(), cfg.lr, cfg.momentum);
            RngStream rng(derive_seed(cfg.seed, "reward/train/stage1"));
            const std::size_t steps =
                std::max<std::size_t>(1, (corpus.d_mse.size() + cfg.batch_mse - 1) / cfg.batch_mse);
            for (std::size_t epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
                double acc = 0.0;
                for (std::size_t s = 0; s < steps; ++s, ++global_step) {
                    const auto mse = sample_batch<MseRecord>(corpus.d_mse, cfg.batch_mse, rng);
                    const StepStats st = train_step(net, refs, data, {}, mse, 1.0,
                                                    MseMode::heads_only, opt, params);
                    check_finite(st.loss);
                    acc += st.loss;
                }
                result.stage1_trace.push_back(acc / static_cast<double>(steps));
            }
        }
        // Stage 2: freeze backbone and attribute heads, train the meta-voter
        // on the joint loss with 2:1 preference-to-regression sampling.
        {
            std::fill(net.frozen_.begin(), net.frozen_.end(), 1);
            std::size_t offset = net.backbone_.param_count() + net.head_help_.param_count() +
                                 net.head_harm_.param_count();
            for (std::size_t i = offset; i < net.frozen_.size(); ++i) net.frozen_[i] = 0;

            SgdMomentum opt(params.size(), cfg.lr, cfg.momentum);
            RngStream rng(derive_seed(cfg.seed, "reward/train/stage2"));
            const std::size_t batch_bt = cfg.batch_bt;
            const std::size_t batch_mse = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::lround(batch_bt / cfg.stage2_bt_mse_ratio)));
            const std::size_t steps = std::max<std::size_t>(
                1, (std::max(corpus.d_bt.size(), corpus.d_mse.size()) + batch_bt - 1) / batch_bt);
            for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
                double acc = 0.0;
                for (std::size_t s = 0; s < steps; ++s, ++global_step) {
                    const auto bt = sample_batch<PreferencePair>(corpus.d_bt, batch_bt, rng);
                    const auto mse = sample_batch<MseRecord>(corpus.d_mse, batch_mse, rng);
                    const StepStats st = train_step(net, refs, data, bt, mse, cfg.lambda,
                                                    MseMode::metavoter_sw, opt, params);
                    check_finite(st.loss);
                    acc += st.loss;
                }
                result.loss_trace.push_back(acc / static_cast<double>(steps));
            }
            std::fill(net.frozen_.begin(), net.frozen_.end(), 0);
        }
        result.steps = global_step;
        return result;
    }

    if (corpus.d_bt.empty() && corpus.d_mse.empty())
        throw ConfigError("training needs a non-empty corpus");
    const MseMode mode =
        net.kind_ == RewardKind::single ? MseMode::scalar_quality : MseMode::vector3;
    SgdMomentum opt(params.size(), cfg.lr, cfg.momentum);
    RngStream rng(derive_seed(cfg.seed, "reward/train/joint"));
    const std::size_t denom = std::max<std::size_t>(corpus.d_bt.size(), 1);
    const std::size_t steps = std::max<std::size_t>(1, (denom + cfg.batch_bt - 1) / cfg.batch_bt);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double acc = 0.0;
        for (std::size_t s = 0; s < steps; ++s, ++global_step) {
            const auto bt = sample_batch<PreferencePair>(corpus.d_bt, cfg.batch_bt, rng);
            const auto mse = sample_batch<MseRecord>(corpus.d_mse, cfg.batch_mse, rng);
            const StepStats st =
                train_step(net, refs, data, bt, mse, cfg.lambda, mode, opt, params);
            check_finite(st.loss);
            acc += st.loss;
        }
        result.loss_trace.push_back(acc / static_cast<double>(steps));
    }
    result.steps = global_step;
    return result;
}

// --- evaluation -----------------------------------------------------------------

std::vector<EvalPair> make_eval_pairs(const std::vector<AggregatedLabel>& labels,
                                      const World& world) {
    std::unordered_map<std::uint64_t, const AggregatedLabel*> by_id;
    for (const auto& l : labels) by_id[l.response_id] = &l;
    std::vector<EvalPair> pairs;
    const auto groups = world.responses_by_context();
    for (const auto& group : groups) {
        for (std::size_t a = 0; a < group.size(); ++a) {
            auto ita = by_id.find(world.responses[group[a]].id);
            if (ita == by_id.end()) continue;
            for (std::size_t b = a + 1; b < group.size(); ++b) {
                auto itb = by_id.find(world.responses[group[b]].id);
                if (itb == by_id.end()) continue;
                const AggregatedLabel* la = ita->second;
                const AggregatedLabel* lb = itb->second;
                if (lb->s_w > la->s_w) std::swap(la, lb);
                EvalPair p;
                p.chosen_id = la->response_id;
                p.rejected_id = lb->response_id;
                p.d_help = la->help - lb->help;
                p.d_harm = la->harm - lb->harm;
                p.d_w = la->s_w - lb->s_w;
                pairs.push_back(p);
            }
        }
    }
    return pairs;
}

EvalReport eval_pref(const RewardNet& net, const std::vector<EvalPair>& pairs, const World& world,
                     std::array<double, 2> thresholds) {
    EvalReport report;
    report.thresholds = thresholds;
    const bool has_dims = net.kind() != RewardKind::single;

    std::array<std::array<AccuracyCell, 2>, 3> acc{};
    for (const EvalPair& p : pairs) {
        const NumArray sc = net.score(world.response_by_id(p.chosen_id).feature);
        const NumArray sr = net.score(world.response_by_id(p.rejected_id).feature);
        const double truth[3] = {p.d_help, p.d_harm, p.d_w};
        double model[3] = {0.0, 0.0, 0.0};
        if (has_dims) {
            model[0] = sc[0] - sr[0];
            model[1] = sc[1] - sr[1];
            model[2] = sc[2] - sr[2];
        } else {
            model[2] = sc[0] - sr[0];
        }
        for (std::size_t d = 0; d < 3; ++d) {
            if (!has_dims && d != 2) continue;
            for (std::size_t t = 0; t < 2; ++t) {
                if (std::fabs(truth[d]) < thresholds[t]) continue;
                acc[d][t].pairs++;
                // strict ordering; model ties score as incorrect
                const bool correct = (truth[d] > 0.0 && model[d] > 0.0) ||
                                     (truth[d] < 0.0 && model[d] < 0.0);
                if (correct) acc[d][t].correct++;
            }
        }
    }
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t t = 0; t < 2; ++t) {
            if (!has_dims && d != 2) continue;  // reported absent, not zero
            if (acc[d][t].pairs == 0) continue;  // empty threshold set: absent
            report.cells[d][t] = acc[d][t];
        }
    return report;
}

double hard_negative_pass_rate(const RewardNet& net, const std::vector<HackTemplate>& templates,
                               const std::vector<NumArray>& chosen_features) {
    if (templates.empty() || templates.size() != chosen_features.size())
        throw DataError("hard_negative_pass_rate: template/chosen size mismatch");
    std::size_t passed = 0;
    for (std::size_t i = 0; i < templates.size(); ++i) {
        const double r_t = net.weighted_score(templates[i].feature);
        const double r_c = net.weighted_score(chosen_features[i]);
        if (r_t < r_c) ++passed;
    }
    return static_cast<double>(passed) / static_cast<double>(templates.size());
}

void write_eval_report(const std::string& path, const std::string& kind,
                       const EvalReport& report) {
    json cells = json::object();
    const char* dim_names[3] = {"help", "harm", "weighted"};
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t t = 0; t < 2; ++t) {
            const std::string key = std::string(dim_names[d]) + "@" +
                                    std::to_string(static_cast<int>(report.thresholds[t]));
            if (report.cells[d][t]) {
                cells[key] = json{{"pairs", report.cells[d][t]->pairs},
                                  {"correct", report.cells[d][t]->correct},
                                  {"accuracy", report.cells[d][t]->accuracy()}};
            } else {
                cells[key] = nullptr;  // absent, deliberately not zero
            }
        }
    json rec{{"kind", kind}, {"cells", cells}};
    if (report.hard_negative_pass_rate)
        rec["hard_negative_pass_rate"] = *report.hard_negative_pass_rate;
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << rec.dump(2) << '\n';
}

}  // namespace rmlab
