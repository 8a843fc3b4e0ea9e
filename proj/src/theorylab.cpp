#include "rmlab/theorylab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rmlab/linalg.hpp"
#include "rmlab/losses.hpp"

namespace rmlab {

void LinearFamily::validate() const {
    if (dim == 0) throw ConfigError("family: dim must be positive");
    if (attr_maps.empty()) throw ConfigError("family: needs at least one attribute map");
    if (attr_maps.size() != attr_noise.size() || attr_maps.size() != task_weights.size())
        throw ConfigError("family: attribute maps, noises and weights must align");
    for (double v : attr_noise)
        if (!(v > 0.0)) throw ConfigError("family: noise variances must be positive");
    if (!(holistic_noise > 0.0)) throw ConfigError("family: holistic noise must be positive");
    if (theta_star.size() != dim) throw ConfigError("family: theta_star must have length dim");
}

NumArray LinearFamily::sample_design(std::size_t n, std::uint64_t seed) const {
    NumArray base({n, dim});
    if (base_design == DesignKind::ones) {
        base.fill(1.0);
        return base;
    }
    RngStream rng(derive_seed(seed, "family/design"));
    for (double& v : base.values()) v = rng.gaussian();
    return base;
}

NumArray LinearFamily::task_design(const NumArray& base, const NumArray& map) const {
    // phi(y) = D y, so the design row is y^T D^T.
    const std::size_t n = base.shape()[0];
    NumArray out({n, dim});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < dim; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < dim; ++j) s += map.at(i, j) * base.at(r, j);
            out.at(r, i) = s;
        }
    return out;
}

LinearFamily LinearFamily::make_default(std::uint64_t seed, std::size_t dim) {
    LinearFamily f;
    f.dim = dim;
    RngStream rng(derive_seed(seed, "family/maps"));
    for (int k = 0; k < 2; ++k) {
        NumArray d({f.dim, f.dim});
        for (double& v : d.values()) v = rng.gaussian() / std::sqrt(static_cast<double>(f.dim));
        // lift the diagonal so every map has solid column rank
        for (std::size_t i = 0; i < f.dim; ++i) d.at(i, i) += 1.0;
        f.attr_maps.push_back(std::move(d));
    }
    f.attr_noise = {1.0, 1.0};
    f.task_weights = {0.6, 0.4};
    f.holistic_noise = 1.0;
    f.correlated_design = true;
    f.holistic_map = NumArray({f.dim, f.dim});
    for (std::size_t k = 0; k < f.attr_maps.size(); ++k)
        for (std::size_t i = 0; i < f.dim * f.dim; ++i)
            f.holistic_map[i] += f.task_weights[k] * f.attr_maps[k][i];
    if (f.holistic_extra_scale > 0.0) {
        RngStream xrng(derive_seed(seed, "family/holistic_extra"));
        for (double& v : f.holistic_map.values())
            v += f.holistic_extra_scale * xrng.gaussian() / std::sqrt(static_cast<double>(f.dim));
    }
    f.theta_star = NumArray({f.dim});
    RngStream trng(derive_seed(seed, "family/theta"));
    for (double& v : f.theta_star.values()) v = trng.gaussian();
    f.validate();
    return f;
}

LinearFamily LinearFamily::make_scalar_constant(std::size_t n_attrs) {
    LinearFamily f;
    f.dim = 1;
    for (std::size_t k = 0; k < n_attrs; ++k) {
        f.attr_maps.push_back(NumArray({1, 1}, {1.0}));
        f.attr_noise.push_back(1.0);
        f.task_weights.push_back(1.0 / static_cast<double>(n_attrs));
    }
    f.holistic_map = NumArray({1, 1}, {1.0});
    f.holistic_noise = 1.0;
    f.theta_star = NumArray({1}, {1.0});
    f.base_design = DesignKind::ones;
    f.correlated_design = false;
    f.validate();
    return f;
}

namespace {

// (1/noise) * Phi^T Phi
NumArray information_of(const NumArray& phi, double noise_var) {
    const std::size_t n = phi.shape()[0], d = phi.shape()[1];
    NumArray info({d, d});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < d; ++i) {
            const double vi = phi.at(r, i);
            if (vi == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) info.at(i, j) += vi * phi.at(r, j) / noise_var;
        }
    return info;
}

}  // namespace

FisherSet fisher(const LinearFamily& family, std::size_t n, std::uint64_t design_seed) {
    family.validate();
    if (n < 1) throw ConfigError("fisher: n must be >= 1");
    const NumArray base = family.sample_design(n, design_seed);
    const NumArray phi_s = family.task_design(base, family.holistic_map);

    FisherSet out;
    out.single = information_of(phi_s, family.holistic_noise);
    out.multi = NumArray({family.dim, family.dim});
    for (std::size_t k = 0; k < family.n_tasks(); ++k) {
        const NumArray phi_k = family.task_design(base, family.attr_maps[k]);
        const NumArray ik = information_of(phi_k, family.attr_noise[k]);
        for (std::size_t i = 0; i < out.multi.size(); ++i) out.multi[i] += ik[i];
    }
    out.par = out.single;
    for (std::size_t i = 0; i < out.par.size(); ++i) out.par[i] += out.multi[i];

    // Second route: the framework formula over the task set {s, 1..K}
    // directly; the identity check compares this against single + multi.
    out.par_direct = information_of(phi_s, family.holistic_noise);
    for (std::size_t k = 0; k < family.n_tasks(); ++k) {
        const NumArray phi_k = family.task_design(base, family.attr_maps[k]);
        const NumArray ik = information_of(phi_k, family.attr_noise[k]);
        for (std::size_t i = 0; i < out.par_direct.size(); ++i) out.par_direct[i] += ik[i];
    }

    const std::vector<double> eig = symmetric_eigenvalues(out.multi);
    out.multi_min_eigenvalue = eig.front();
    out.strict = out.multi_min_eigenvalue > 0.0;
    return out;
}

namespace {

struct ReplicateData {
    NumArray base_train, base_hold;
    NumArray phi_s_train, phi_s_hold;
    std::vector<NumArray> phi_k_train;
    std::vector<double> t_s;               // noisy holistic labels
    std::vector<std::vector<double>> t_k;  // noisy attribute labels
    std::vector<double> g_hold;            // noiseless holistic truth on holdout
};

ReplicateData draw_replicate(const LinearFamily& f, const McConfig& cfg, std::uint64_t seed) {
    ReplicateData d;
    d.base_train = f.sample_design(cfg.n, derive_seed(seed, "mc/train"));
    d.base_hold = f.sample_design(cfg.holdout, derive_seed(seed, "mc/hold"));
    d.phi_s_train = f.task_design(d.base_train, f.holistic_map);
    d.phi_s_hold = f.task_design(d.base_hold, f.holistic_map);
    for (std::size_t k = 0; k < f.n_tasks(); ++k)
        d.phi_k_train.push_back(f.task_design(d.base_train, f.attr_maps[k]));

    RngStream noise(derive_seed(seed, "mc/noise"));
    const auto theta = f.theta_star.values();
    d.t_s.resize(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i)
        d.t_s[i] = dot(d.phi_s_train.row(i), theta) +
                   std::sqrt(f.holistic_noise) * noise.gaussian();
    d.t_k.resize(f.n_tasks());
    for (std::size_t k = 0; k < f.n_tasks(); ++k) {
        d.t_k[k].resize(cfg.n);
        for (std::size_t i = 0; i < cfg.n; ++i)
            d.t_k[k][i] = dot(d.phi_k_train[k].row(i), theta) +
                          std::sqrt(f.attr_noise[k]) * noise.gaussian();
    }
    d.g_hold.resize(cfg.holdout);
    for (std::size_t i = 0; i < cfg.holdout; ++i) d.g_hold[i] = dot(d.phi_s_hold.row(i), theta);
    return d;
}

// Weighted normal equations: sum_k (1/s_k) Phi_k^T Phi_k theta = sum_k (1/s_k) Phi_k^T t_k.
std::vector<double> weighted_ls(const std::vector<const NumArray*>& designs,
                                const std::vector<const std::vector<double>*>& labels,
                                const std::vector<double>& noise_vars, std::size_t dim) {
    NumArray a({dim, dim});
    std::vector<double> b(dim, 0.0);
    for (std::size_t k = 0; k < designs.size(); ++k) {
        const NumArray& phi = *designs[k];
        const double w = 1.0 / noise_vars[k];
        for (std::size_t r = 0; r < phi.shape()[0]; ++r) {
            const auto row = phi.row(r);
            const double y = (*labels[k])[r];
            for (std::size_t i = 0; i < dim; ++i) {
                b[i] += w * row[i] * y;
                for (std::size_t j = i; j < dim; ++j) a.at(i, j) += w * row[i] * row[j];
            }
        }
    }
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < i; ++j) a.at(i, j) = a.at(j, i);
    return cholesky_solve(a, b);
}

double holdout_mse(const ReplicateData& d, std::span<const double> predictions) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.g_hold.size(); ++i) {
        const double e = predictions[i] - d.g_hold[i];
        s += e * e;
    }
    return s / static_cast<double>(d.g_hold.size());
}

double pref_error(const ReplicateData& d, std::span<const double> predictions,
                  std::size_t n_pairs, RngStream& rng) {
    const std::size_t n = d.g_hold.size();
    double s = 0.0;
    for (std::size_t p = 0; p < n_pairs; ++p) {
        const std::size_t i = rng.index(n);
        const std::size_t j = rng.index(n);
        s += std::fabs(sigmoid(predictions[i] - predictions[j]) -
                       sigmoid(d.g_hold[i] - d.g_hold[j]));
    }
    return s / static_cast<double>(n_pairs);
}

void mean_stderr(const std::vector<double>& xs, double& mean, double& stderr_out) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= std::max<std::size_t>(1, xs.size() - 1);
    stderr_out = std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace

McResult mc_orderings(const LinearFamily& family, const McConfig& cfg, std::uint64_t seed) {
    family.validate();
    if (cfg.replicates < 2) throw ConfigError("mc_orderings: replicates must be >= 2");

    McResult out;
    std::vector<double> mse_single, mse_seq, mse_par, pref_single, pref_seq, pref_par;

    for (std::size_t rep = 0; rep < cfg.replicates; ++rep) {
        const std::uint64_t rep_seed = derive_seed(seed, "mc/replicate", rep);
        const ReplicateData d = draw_replicate(family, cfg, rep_seed);
        const std::size_t dim = family.dim;
        const std::size_t K = family.n_tasks();

        std::vector<double> theta_single, theta_par, theta_stage1;
        std::vector<double> combiner;
        try {
            // single: holistic labels only
            theta_single = weighted_ls({&d.phi_s_train}, {&d.t_s}, {family.holistic_noise}, dim);

            // parallel: joint weighted least squares over every task
            std::vector<const NumArray*> designs{&d.phi_s_train};
            std::vector<const std::vector<double>*> labels{&d.t_s};
            std::vector<double> noises{family.holistic_noise};
            for (std::size_t k = 0; k < K; ++k) {
                designs.push_back(&d.phi_k_train[k]);
                labels.push_back(&d.t_k[k]);
                noises.push_back(family.attr_noise[k]);
            }
            theta_par = weighted_ls(designs, labels, noises, dim);

            // sequential stage 1: attributes only
            std::vector<const NumArray*> a_designs;
            std::vector<const std::vector<double>*> a_labels;
            std::vector<double> a_noises;
            for (std::size_t k = 0; k < K; ++k) {
                a_designs.push_back(&d.phi_k_train[k]);
                a_labels.push_back(&d.t_k[k]);
                a_noises.push_back(family.attr_noise[k]);
            }
            theta_stage1 = weighted_ls(a_designs, a_labels, a_noises, dim);

            if (!cfg.literal_two_stage) {
                // stage 2: freeze the attribute regression, fit the K-dim
                // combiner on holistic labels
                NumArray attr_pred({cfg.n, K});
                for (std::size_t i = 0; i < cfg.n; ++i)
                    for (std::size_t k = 0; k < K; ++k)
                        attr_pred.at(i, k) = dot(d.phi_k_train[k].row(i), theta_stage1);
                combiner = lstsq(attr_pred, d.t_s);
            }
        } catch (const SingularError&) {
            ++out.excluded_singular;
            continue;
        }

        std::vector<double> pred_single(cfg.holdout), pred_par(cfg.holdout), pred_seq(cfg.holdout);
        for (std::size_t i = 0; i < cfg.holdout; ++i) {
            pred_single[i] = dot(d.phi_s_hold.row(i), theta_single);
            pred_par[i] = dot(d.phi_s_hold.row(i), theta_par);
        }
        if (cfg.literal_two_stage) {
            // fine-tune all of theta on the holistic loss from the stage-1
            // point, a few plain gradient steps
            std::vector<double> theta = theta_stage1;
            const double inv_n = 1.0 / static_cast<double>(cfg.n);
            for (std::size_t step = 0; step < cfg.literal_steps; ++step) {
                std::vector<double> grad(dim, 0.0);
                for (std::size_t i = 0; i < cfg.n; ++i) {
                    const double e = dot(d.phi_s_train.row(i), theta) - d.t_s[i];
                    axpy(2.0 * e * inv_n / family.holistic_noise, d.phi_s_train.row(i), grad);
                }
                axpy(-cfg.literal_lr, grad, std::span<double>(theta));
            }
            for (std::size_t i = 0; i < cfg.holdout; ++i)
                pred_seq[i] = dot(d.phi_s_hold.row(i), theta);
        } else {
            std::vector<NumArray> phi_k_hold;
            for (std::size_t k = 0; k < K; ++k)
                phi_k_hold.push_back(family.task_design(d.base_hold, family.attr_maps[k]));
            for (std::size_t i = 0; i < cfg.holdout; ++i) {
                double s = 0.0;
                for (std::size_t k = 0; k < K; ++k)
                    s += combiner[k] * dot(phi_k_hold[k].row(i), theta_stage1);
                pred_seq[i] = s;
            }
        }

        mse_single.push_back(holdout_mse(d, pred_single));
        mse_par.push_back(holdout_mse(d, pred_par));
        mse_seq.push_back(holdout_mse(d, pred_seq));

        RngStream pair_rng(derive_seed(rep_seed, "mc/pairs"));
        RngStream pair_rng_b = pair_rng;  // same pairs for every framework
        RngStream pair_rng_c = pair_rng;
        pref_single.push_back(pref_error(d, pred_single, cfg.pref_pairs, pair_rng));
        pref_par.push_back(pref_error(d, pred_par, cfg.pref_pairs, pair_rng_b));
        pref_seq.push_back(pref_error(d, pred_seq, cfg.pref_pairs, pair_rng_c));

        out.par_lt_single_mse.push_back(mse_par.back() < mse_single.back());
        out.par_lt_seq_mse.push_back(mse_par.back() < mse_seq.back());
        out.par_lt_single_pref.push_back(pref_par.back() < pref_single.back());
        out.par_lt_seq_pref.push_back(pref_par.back() < pref_seq.back());
    }

    if (mse_single.empty()) throw SingularError("mc_orderings: every replicate was singular");
    mean_stderr(mse_single, out.single_stats.mse_mean, out.single_stats.mse_stderr);
    mean_stderr(mse_seq, out.seq_stats.mse_mean, out.seq_stats.mse_stderr);
    mean_stderr(mse_par, out.par_stats.mse_mean, out.par_stats.mse_stderr);
    mean_stderr(pref_single, out.single_stats.pref_mean, out.single_stats.pref_stderr);
    mean_stderr(pref_seq, out.seq_stats.pref_mean, out.seq_stats.pref_stderr);
    mean_stderr(pref_par, out.par_stats.pref_mean, out.par_stats.pref_stderr);

    const double resolution = 1e-8;
    out.indistinguishable = out.single_stats.mse_mean < resolution &&
                            out.seq_stats.mse_mean < resolution &&
                            out.par_stats.mse_mean < resolution;
    return out;
}

// --- Lemma 1 -------------------------------------------------------------------

Lemma1Result lemma1_check(std::span<const Quad> samples) {
    if (samples.empty()) throw ConfigError("lemma1_check: needs at least one sample");
    Lemma1Result out;
    out.count = samples.size();
    out.max_violation = -std::numeric_limits<double>::infinity();
    out.worst_slack = std::numeric_limits<double>::infinity();
    for (const Quad& q : samples) {
        const double lhs = std::fabs(sigmoid(q.r_a - q.r_b) - sigmoid(q.g_a - q.g_b));
        const double e_a = q.r_a - q.g_a;
        const double e_b = q.r_b - q.g_b;
        const double bound = 0.25 * std::sqrt(2.0 * (e_a * e_a + e_b * e_b));
        out.max_violation = std::max(out.max_violation, lhs - bound);
        out.worst_slack = std::min(out.worst_slack, bound - lhs);
    }
    return out;
}

std::vector<Quad> lemma1_gaussian_quads(std::size_t count, double score_spread, double error_scale,
                                        std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<Quad> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Quad q;
        q.g_a = score_spread * rng.gaussian();
        q.g_b = score_spread * rng.gaussian();
        q.r_a = q.g_a + error_scale * rng.gaussian();
        q.r_b = q.g_b + error_scale * rng.gaussian();
        out.push_back(q);
    }
    return out;
}

// --- Lemma 2 -------------------------------------------------------------------

Lemma2Result lemma2_check(const LinearFamily& family, std::size_t n, std::size_t replicates,
                          std::size_t n_probes, std::uint64_t seed) {
    family.validate();
    if (replicates < 60)
        throw ConfigError("lemma2_check: needs >= 60 replicates (30 per split)");
    if (n_probes < 1) throw ConfigError("lemma2_check: needs probe points");

    // Fixed probes and fixed design: Lemma 2 speaks about the estimator
    // distribution for one estimation problem.
    const NumArray base = family.sample_design(n, derive_seed(seed, "lemma2/design"));
    const NumArray phi = family.task_design(base, family.holistic_map);
    const NumArray probes_base = family.sample_design(n_probes, derive_seed(seed, "lemma2/probe"));
    const NumArray probes = family.task_design(probes_base, family.holistic_map);
    const auto theta = family.theta_star.values();

    std::vector<std::vector<double>> even_thetas, odd_thetas;
    for (std::size_t rep = 0; rep < replicates; ++rep) {
        RngStream noise(derive_seed(seed, "lemma2/noise", rep));
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i)
            t[i] = dot(phi.row(i), theta) + std::sqrt(family.holistic_noise) * noise.gaussian();
        std::vector<double> est = lstsq(phi, t);
        (rep % 2 == 0 ? even_thetas : odd_thetas).push_back(std::move(est));
    }
    if (even_thetas.size() < 30 || odd_thetas.size() < 30)
        throw ConfigError("lemma2_check: too few usable replicates for a stable covariance");

    // Empirical covariance from the even split.
    const std::size_t d = family.dim;
    std::vector<double> mean(d, 0.0);
    for (const auto& th : even_thetas) axpy(1.0, th, std::span<double>(mean));
    for (double& v : mean) v /= static_cast<double>(even_thetas.size());
    NumArray cov({d, d});
    for (const auto& th : even_thetas)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                cov.at(i, j) += (th[i] - mean[i]) * (th[j] - mean[j]);
    for (double& v : cov.values()) v /= static_cast<double>(even_thetas.size() - 1);

    Lemma2Result out;
    out.replicates_used = replicates;
    for (std::size_t p = 0; p < n_probes; ++p) {
        const auto grad = probes.row(p);  // grad_theta r(y) = phi_s(y)
        // predicted variance part: grad^T Cov grad
        double predicted = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) predicted += grad[i] * cov.at(i, j) * grad[j];
        // empirical squared error from the odd split
        const double g_true = dot(grad, theta);
        double empirical = 0.0;
        for (const auto& th : odd_thetas) {
            const double e = dot(grad, th) - g_true;
            empirical += e * e;
        }
        empirical /= static_cast<double>(odd_thetas.size());

        out.predicted_mean += predicted;
        out.empirical_mean += empirical;
        const double denom = std::max(std::fabs(empirical), 1e-300);
        out.probe_gaps.push_back(std::fabs(predicted - empirical) / denom);
    }
    out.predicted_mean /= static_cast<double>(n_probes);
    out.empirical_mean /= static_cast<double>(n_probes);
    std::vector<double> gaps = out.probe_gaps;
    std::sort(gaps.begin(), gaps.end());
    out.median_rel_gap = gaps[gaps.size() / 2];
    return out;
}

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::holds: return "HOLDS";
        case Verdict::holds_nonstrict: return "HOLDS-NONSTRICT";
        case Verdict::fails: return "FAILS";
    }
    return "FAILS";
}

}  // namespace rmlab
