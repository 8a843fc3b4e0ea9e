#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rmlab/numarray.hpp"

namespace rmlab {

enum class Activation { relu, tanh, identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

double activation_apply(Activation a, double x);
// derivative given pre- and post-activation values
double activation_grad(Activation a, double pre, double post);

// Fully connected network. The activation applies to hidden layers only;
// the output layer is always affine so scores are unbounded reals.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::vector<std::size_t> widths, Activation hidden_activation);

    // Deterministic scaled-uniform init (U[-1,1] * sqrt(1/fan_in)).
    static Mlp init(std::vector<std::size_t> widths, Activation act, RngStream& rng);
    static Mlp init(std::vector<std::size_t> widths, Activation act, std::uint64_t seed);

    const std::vector<std::size_t>& widths() const { return widths_; }
    Activation activation() const { return activation_; }
    std::size_t layer_count() const { return weights_.size(); }
    std::size_t input_dim() const { return widths_.front(); }
    std::size_t output_dim() const { return widths_.back(); }
    std::size_t param_count() const;

    NumArray& weight(std::size_t layer) { return weights_[layer]; }
    const NumArray& weight(std::size_t layer) const { return weights_[layer]; }
    NumArray& bias(std::size_t layer) { return biases_[layer]; }
    const NumArray& bias(std::size_t layer) const { return biases_[layer]; }

    // Flat parameter order: layer 0 weights row-major, layer 0 biases,
    // layer 1 weights, ... Used by optimizers, gradient checks and dumps.
    std::vector<double> flat_params() const;
    void set_flat_params(std::span<const double> params);

    // input: (d) vector or (batch x d) matrix; output matches arrangement.
    NumArray forward(const NumArray& input) const;

private:
    std::vector<std::size_t> widths_;
    Activation activation_ = Activation::relu;
    std::vector<NumArray> weights_;  // layer l: (widths[l+1] x widths[l])
    std::vector<NumArray> biases_;   // layer l: (widths[l+1])
};

// Activations recorded during a forward pass, consumed by mlp_backward.
struct MlpTape {
    NumArray input;                    // (batch x d_in)
    std::vector<NumArray> pre;         // pre-activation per layer (batch x out)
    std::vector<NumArray> post;        // post-activation per layer
    bool vector_input = false;
};

// Gradient accumulator mirroring an Mlp's parameter layout.
struct MlpGrads {
    std::vector<NumArray> dweights;
    std::vector<NumArray> dbiases;

    explicit MlpGrads(const Mlp& net);
    MlpGrads() = default;
    void zero();
    std::vector<double> flat() const;
    void add_flat_into(std::span<double> out) const;  // out += grads
};

NumArray mlp_forward_tape(const Mlp& net, const NumArray& input, MlpTape& tape);

// Accumulates parameter gradients into `grads` (does not zero them first)
// and returns dL/dinput.
NumArray mlp_backward(const Mlp& net, const MlpTape& tape, const NumArray& dout, MlpGrads& grads);

// --- parameter serialization -------------------------------------------
//
// Self-describing text container. Values are printed as C hex-floats
// ("%a"), which round-trip 64-bit values bit-exactly; this is the format
// contract for every checkpoint this project writes.

void save_mlp(std::ostream& os, const Mlp& net);
Mlp load_mlp(std::istream& is);
void save_mlp_file(const std::string& path, const Mlp& net);
Mlp load_mlp_file(const std::string& path);

// Hex-float helpers shared by the checkpoint formats.
std::string format_hex_double(double v);
double parse_hex_double(const std::string& token);

// --- optimizer -----------------------------------------------------------

// Plain SGD with momentum over a flat parameter vector. Frozen coordinates
// (mask != 0) are skipped entirely.
class SgdMomentum {
public:
    SgdMomentum(std::size_t n_params, double lr, double momentum = 0.9)
        : lr_(lr), momentum_(momentum), velocity_(n_params, 0.0) {}

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step(std::span<double> params, std::span<const double> grads);
    void step_masked(std::span<double> params, std::span<const double> grads,
                     std::span<const std::uint8_t> frozen);

private:
    double lr_;
    double momentum_;
    std::vector<double> velocity_;
};

}  // namespace rmlab
