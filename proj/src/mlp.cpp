#include "rmlab/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace rmlab {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "relu";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw ConfigError("unknown activation: " + name);
}

Mlp::Mlp(std::vector<std::size_t> widths, Activation hidden_activation)
    : widths_(std::move(widths)), activation_(hidden_activation) {
    if (widths_.size() < 2) throw ConfigError("Mlp needs at least input and output widths");
    for (std::size_t w : widths_)
        if (w == 0) throw ConfigError("Mlp widths must be positive");
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        weights_.emplace_back(NumArray::matrix(widths_[l + 1], widths_[l]));
        biases_.emplace_back(NumArray({widths_[l + 1]}));
    }
}

Mlp Mlp::init(std::vector<std::size_t> widths, Activation act, RngStream& rng) {
    Mlp net(std::move(widths), act);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const double scale = std::sqrt(1.0 / static_cast<double>(net.widths_[l]));
        for (double& w : net.weight(l).values()) w = rng.uniform(-scale, scale);
        for (double& b : net.bias(l).values()) b = 0.0;
    }
    return net;
}

Mlp Mlp::init(std::vector<std::size_t> widths, Activation act, std::uint64_t seed) {
    RngStream rng(seed);
    return init(std::move(widths), act, rng);
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
}

std::vector<double> Mlp::flat_params() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const auto w = weights_[l].values();
        out.insert(out.end(), w.begin(), w.end());
        const auto b = biases_[l].values();
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

void Mlp::set_flat_params(std::span<const double> params) {
    if (params.size() != param_count())
        throw ShapeError("set_flat_params: expected " + std::to_string(param_count()) +
                         " values, got " + std::to_string(params.size()));
    std::size_t k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (double& w : weights_[l].values()) w = params[k++];
        for (double& b : biases_[l].values()) b = params[k++];
    }
}

double activation_apply(Activation a, double x) {
    switch (a) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
        case Activation::identity: return x;
    }
    return x;
}

double activation_grad(Activation a, double pre, double post) {
    switch (a) {
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: return 1.0 - post * post;
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

namespace {

NumArray as_batch(const NumArray& input, bool& was_vector) {
    if (input.rank() == 1) {
        was_vector = true;
        return NumArray({1, input.shape()[0]}, std::vector<double>(input.values().begin(),
                                                                   input.values().end()));
    }
    if (input.rank() == 2) {
        was_vector = false;
        return input;
    }
    throw ShapeError("Mlp input must be rank 1 or 2, got shape " + shape_string(input.shape()));
}

}  // namespace

NumArray Mlp::forward(const NumArray& input) const {
    MlpTape tape;
    NumArray out = mlp_forward_tape(*this, input, tape);
    return out;
}

NumArray mlp_forward_tape(const Mlp& net, const NumArray& input, MlpTape& tape) {
    tape.input = as_batch(input, tape.vector_input);
    const std::size_t batch = tape.input.shape()[0];
    if (tape.input.shape()[1] != net.input_dim())
        throw ShapeError("Mlp forward: input dim " + std::to_string(tape.input.shape()[1]) +
                         " does not match first layer width " + std::to_string(net.input_dim()));

    tape.pre.clear();
    tape.post.clear();
    const NumArray* cur = &tape.input;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const NumArray& w = net.weight(l);
        const NumArray& b = net.bias(l);
        const std::size_t out_dim = w.shape()[0];
        const std::size_t in_dim = w.shape()[1];
        NumArray pre({batch, out_dim});
        for (std::size_t r = 0; r < batch; ++r) {
            const double* x = cur->data() + r * in_dim;
            double* y = pre.data() + r * out_dim;
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double* wr = w.data() + o * in_dim;
                double s = b[o];
                for (std::size_t i = 0; i < in_dim; ++i) s += wr[i] * x[i];
                y[o] = s;
            }
        }
        const bool hidden = (l + 1 < net.layer_count());
        NumArray post = pre;
        if (hidden && net.activation() != Activation::identity) {
            for (double& v : post.values()) v = activation_apply(net.activation(), v);
        }
        tape.pre.push_back(std::move(pre));
        tape.post.push_back(std::move(post));
        cur = &tape.post.back();
    }

    NumArray out = tape.post.back();
    if (tape.vector_input) return NumArray({out.shape()[1]}, std::vector<double>(
                                               out.values().begin(), out.values().end()));
    return out;
}

MlpGrads::MlpGrads(const Mlp& net) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        dweights.emplace_back(NumArray(net.weight(l).shape()));
        dbiases.emplace_back(NumArray(net.bias(l).shape()));
    }
}

void MlpGrads::zero() {
    for (auto& w : dweights) w.fill(0.0);
    for (auto& b : dbiases) b.fill(0.0);
}

std::vector<double> MlpGrads::flat() const {
    std::vector<double> out;
    for (std::size_t l = 0; l < dweights.size(); ++l) {
        const auto w = dweights[l].values();
        out.insert(out.end(), w.begin(), w.end());
        const auto b = dbiases[l].values();
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

void MlpGrads::add_flat_into(std::span<double> out) const {
    std::size_t k = 0;
    for (std::size_t l = 0; l < dweights.size(); ++l) {
        for (double v : dweights[l].values()) out[k++] += v;
        for (double v : dbiases[l].values()) out[k++] += v;
    }
}

NumArray mlp_backward(const Mlp& net, const MlpTape& tape, const NumArray& dout, MlpGrads& grads) {
    bool dout_vec = false;
    NumArray delta = as_batch(dout, dout_vec);
    const std::size_t batch = tape.input.shape()[0];
    if (delta.shape()[0] != batch || delta.shape()[1] != net.output_dim())
        throw ShapeError("mlp_backward: dout shape " + shape_string(delta.shape()) +
                         " does not match output");

    for (std::size_t li = net.layer_count(); li-- > 0;) {
        const NumArray& w = net.weight(li);
        const std::size_t out_dim = w.shape()[0];
        const std::size_t in_dim = w.shape()[1];
        const bool hidden = (li + 1 < net.layer_count());

        if (hidden && net.activation() != Activation::identity) {
            for (std::size_t r = 0; r < batch; ++r) {
                double* d = delta.data() + r * out_dim;
                const double* pre = tape.pre[li].data() + r * out_dim;
                const double* post = tape.post[li].data() + r * out_dim;
                for (std::size_t o = 0; o < out_dim; ++o)
                    d[o] *= activation_grad(net.activation(), pre[o], post[o]);
            }
        }

        const NumArray& layer_in = (li == 0) ? tape.input : tape.post[li - 1];
        NumArray& dw = grads.dweights[li];
        NumArray& db = grads.dbiases[li];
        for (std::size_t r = 0; r < batch; ++r) {
            const double* x = layer_in.data() + r * in_dim;
            const double* d = delta.data() + r * out_dim;
            for (std::size_t o = 0; o < out_dim; ++o) {
                double* dwr = dw.data() + o * in_dim;
                const double dv = d[o];
                db[o] += dv;
                for (std::size_t i = 0; i < in_dim; ++i) dwr[i] += dv * x[i];
            }
        }

        NumArray prev({batch, in_dim});
        for (std::size_t r = 0; r < batch; ++r) {
            const double* d = delta.data() + r * out_dim;
            double* p = prev.data() + r * in_dim;
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double* wr = w.data() + o * in_dim;
                const double dv = d[o];
                for (std::size_t i = 0; i < in_dim; ++i) p[i] += dv * wr[i];
            }
        }
        delta = std::move(prev);
    }

    if (tape.vector_input)
        return NumArray({delta.shape()[1]},
                        std::vector<double>(delta.values().begin(), delta.values().end()));
    return delta;
}

// --- serialization ---------------------------------------------------------

std::string format_hex_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_hex_double(const std::string& token) {
    char* end = nullptr;
    double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str()) throw Error("could not parse float token: " + token);
    return v;
}

void save_mlp(std::ostream& os, const Mlp& net) {
    os << "rmlab-mlp 1\n";
    os << "widths";
    for (std::size_t w : net.widths()) os << ' ' << w;
    os << '\n';
    os << "activation " << activation_name(net.activation()) << '\n';
    const std::vector<double> params = net.flat_params();
    os << "values " << params.size() << '\n';
    for (std::size_t i = 0; i < params.size(); ++i)
        os << format_hex_double(params[i]) << '\n';
}

Mlp load_mlp(std::istream& is) {
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "rmlab-mlp" || version != 1) throw Error("not an rmlab-mlp v1 stream");
    std::string key;
    is >> key;
    if (key != "widths") throw Error("mlp stream: expected 'widths'");
    std::vector<std::size_t> widths;
    // widths run until the 'activation' keyword
    std::string tok;
    while (is >> tok) {
        if (tok == "activation") break;
        widths.push_back(static_cast<std::size_t>(std::stoull(tok)));
    }
    std::string act;
    is >> act;
    is >> key;
    if (key != "values") throw Error("mlp stream: expected 'values'");
    std::size_t n = 0;
    is >> n;
    Mlp net(widths, activation_from_name(act));
    if (n != net.param_count()) throw Error("mlp stream: value count mismatch");
    std::vector<double> params(n);
    for (std::size_t i = 0; i < n; ++i) {
        is >> tok;
        params[i] = parse_hex_double(tok);
    }
    if (!is) throw Error("mlp stream: truncated");
    net.set_flat_params(params);
    return net;
}

void save_mlp_file(const std::string& path, const Mlp& net) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open for write: " + path);
    save_mlp(os, net);
}

Mlp load_mlp_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open for read: " + path);
    return load_mlp(is);
}

// --- optimizer ---------------------------------------------------------------

void SgdMomentum::step(std::span<double> params, std::span<const double> grads) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity_[i] = momentum_ * velocity_[i] + grads[i];
        params[i] -= lr_ * velocity_[i];
    }
}

void SgdMomentum::step_masked(std::span<double> params, std::span<const double> grads,
                              std::span<const std::uint8_t> frozen) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (frozen[i]) continue;
        velocity_[i] = momentum_ * velocity_[i] + grads[i];
        params[i] -= lr_ * velocity_[i];
    }
}

}  // namespace rmlab
