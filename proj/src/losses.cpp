#include "rmlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rmlab {

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double loss_bt(double r_chosen, double r_rejected) { return softplus(r_rejected - r_chosen); }

double loss_bt_ddelta(double delta) { return sigmoid(delta) - 1.0; }

double loss_mse_vec(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size())
        throw ShapeError("loss_mse_vec: pred has " + std::to_string(pred.size()) +
                         " components, target has " + std::to_string(target.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s;
}

namespace {

struct SupConWork {
    std::size_t batch = 0;
    std::size_t dim = 0;
    NumArray unit;                 // normalized rows
    std::vector<double> norms;     // original row norms
    NumArray sims;                 // (batch x batch) scaled similarities, diag unused
    std::vector<double> lse;       // per-anchor log-sum-exp over A(i)
    std::vector<std::size_t> npos; // |P(i)|
};

constexpr double kNormGuard = 1e-12;

void supcon_prepare(const NumArray& embeddings, std::span<const int> labels, double temperature,
                    SupConWork& w) {
    if (embeddings.rank() != 2)
        throw ShapeError("loss_supcon: embeddings must be (batch x dim), got " +
                         shape_string(embeddings.shape()));
    w.batch = embeddings.shape()[0];
    w.dim = embeddings.shape()[1];
    if (w.batch < 2) throw DegenerateBatchError("loss_supcon: batch must have at least 2 rows");
    if (labels.size() != w.batch)
        throw ShapeError("loss_supcon: label count does not match batch size");
    if (!(temperature > 0.0)) throw ConfigError("loss_supcon: temperature must be positive");

    w.unit = embeddings;
    w.norms.assign(w.batch, 1.0);
    for (std::size_t i = 0; i < w.batch; ++i) {
        auto row = w.unit.row(i);
        const double n = l2_norm(row);
        w.norms[i] = n;
        if (n > kNormGuard)
            for (double& v : row) v /= n;
    }

    w.sims = NumArray({w.batch, w.batch});
    for (std::size_t i = 0; i < w.batch; ++i)
        for (std::size_t k = i + 1; k < w.batch; ++k) {
            const double s = dot(w.unit.row(i), w.unit.row(k)) / temperature;
            w.sims.at(i, k) = s;
            w.sims.at(k, i) = s;
        }

    w.lse.assign(w.batch, 0.0);
    w.npos.assign(w.batch, 0);
    for (std::size_t i = 0; i < w.batch; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < w.batch; ++k) {
            if (k == i) continue;
            mx = std::max(mx, w.sims.at(i, k));
            if (labels[k] == labels[i]) ++w.npos[i];
        }
        double acc = 0.0;
        for (std::size_t k = 0; k < w.batch; ++k) {
            if (k == i) continue;
            acc += std::exp(w.sims.at(i, k) - mx);
        }
        w.lse[i] = mx + std::log(acc);
    }
}

double supcon_value(const SupConWork& w, std::span<const int> labels, SupConReduction reduction) {
    double total = 0.0;
    std::size_t contributing = 0;
    for (std::size_t i = 0; i < w.batch; ++i) {
        if (w.npos[i] == 0) continue;  // no same-label peer: anchor skipped
        ++contributing;
        double pos_sum = 0.0;
        for (std::size_t k = 0; k < w.batch; ++k)
            if (k != i && labels[k] == labels[i]) pos_sum += w.sims.at(i, k);
        total += -(pos_sum / static_cast<double>(w.npos[i])) + w.lse[i];
    }
    if (reduction == SupConReduction::mean && contributing > 0)
        total /= static_cast<double>(contributing);
    return total;
}

}  // namespace

double loss_supcon(const NumArray& embeddings, std::span<const int> labels, double temperature,
                   SupConReduction reduction) {
    SupConWork w;
    supcon_prepare(embeddings, labels, temperature, w);
    return supcon_value(w, labels, reduction);
}

double loss_supcon_grad(const NumArray& embeddings, std::span<const int> labels,
                        double temperature, NumArray& grad, SupConReduction reduction) {
    SupConWork w;
    supcon_prepare(embeddings, labels, temperature, w);
    const double value = supcon_value(w, labels, reduction);

    std::size_t contributing = 0;
    for (std::size_t i = 0; i < w.batch; ++i)
        if (w.npos[i] > 0) ++contributing;
    const double scale = (reduction == SupConReduction::mean && contributing > 0)
                             ? 1.0 / static_cast<double>(contributing)
                             : 1.0;

    // dL/ds_ik = scale * (p_ik - [k in P(i)]/|P(i)|) for contributing anchors.
    NumArray dunit({w.batch, w.dim});
    for (std::size_t i = 0; i < w.batch; ++i) {
        if (w.npos[i] == 0) continue;
        const double inv_pos = 1.0 / static_cast<double>(w.npos[i]);
        for (std::size_t k = 0; k < w.batch; ++k) {
            if (k == i) continue;
            const double p_ik = std::exp(w.sims.at(i, k) - w.lse[i]);
            double c = p_ik;
            if (labels[k] == labels[i]) c -= inv_pos;
            c *= scale / temperature;
            axpy(c, w.unit.row(k), dunit.row(i));
            axpy(c, w.unit.row(i), dunit.row(k));
        }
    }

    // Back through row normalization: dz = (I - u u^T) du / ||z||.
    grad = NumArray({w.batch, w.dim});
    for (std::size_t i = 0; i < w.batch; ++i) {
        const auto u = w.unit.row(i);
        const auto du = dunit.row(i);
        auto g = grad.row(i);
        if (w.norms[i] > kNormGuard) {
            const double radial = dot(u, du);
            for (std::size_t j = 0; j < w.dim; ++j)
                g[j] = (du[j] - radial * u[j]) / w.norms[i];
        } else {
            for (std::size_t j = 0; j < w.dim; ++j) g[j] = du[j];
        }
    }
    return value;
}

double loss_joint(std::span<const ScorePair> bt_batch, std::span<const VecTargetSample> mse_batch,
                  double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ConfigError("loss_joint: lambda must lie in [0,1]");
    double bt_mean = 0.0;
    if (!bt_batch.empty()) {
        for (const ScorePair& p : bt_batch) bt_mean += loss_bt(p.chosen, p.rejected);
        bt_mean /= static_cast<double>(bt_batch.size());
    }
    double mse_mean = 0.0;
    if (!mse_batch.empty()) {
        for (const VecTargetSample& s : mse_batch) mse_mean += loss_mse_vec(s.pred, s.target);
        mse_mean /= static_cast<double>(mse_batch.size());
    }
    return (1.0 - lambda) * bt_mean + lambda * mse_mean;
}

}  // namespace rmlab
