#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dehrl/serialize.hpp"

namespace dehrl {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

enum class Activation : std::uint8_t { Identity = 0, LeakyRelu = 1, Logistic = 2 };

inline constexpr double kLeakySlope = 0.01;

/// Thrown when a loss, gradient or logit is NaN/inf. `index()` names the batch
/// entry (or vector coordinate) that produced it.
class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(const std::string& what, std::size_t index)
        : std::runtime_error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Post-activation values of every layer; activations[0] is the input.
struct Tape {
    std::vector<Vector> activations;
    const Vector& output() const { return activations.back(); }
};

/// Shape of a dense network. Parameters live outside the layout so the same
/// arithmetic serves standalone networks and the blocks of a ConditionedModel.
///
/// Layer k stores an in x out weight block (input-major: w[i * out + j]) followed
/// by out biases. Zero inputs are skipped in the first product, which keeps the
/// sparse one-hot grid encodings cheap.
class MlpLayout {
public:
    MlpLayout() = default;
    MlpLayout(std::vector<std::size_t> dims, std::vector<Activation> activations);

    std::size_t input_dim() const { return dims_.front(); }
    std::size_t output_dim() const { return dims_.back(); }
    std::size_t layer_count() const { return activations_.size(); }
    std::size_t parameter_count() const { return parameter_count_; }
    const std::vector<std::size_t>& dims() const { return dims_; }
    const std::vector<Activation>& activations() const { return activations_; }

    /// Uniform(-s/sqrt(fan_in), s/sqrt(fan_in)) weights, zero biases. `last_scale`
    /// multiplies s for the output layer only.
    void initialize(std::span<double> params, Rng& rng, double last_scale = 1.0) const;

    void forward(std::span<const double> params, std::span<const double> input, Tape& tape) const;
    Vector forward(std::span<const double> params, std::span<const double> input) const;

    /// Accumulates d(loss)/d(params) into `grad`. When `input_grad` is non-empty it
    /// receives d(loss)/d(input) (overwritten, not accumulated).
    void backward(std::span<const double> params, const Tape& tape, std::span<const double> output_grad,
                  std::span<double> grad, std::span<double> input_grad = {}) const;

private:
    std::vector<std::size_t> dims_;
    std::vector<Activation> activations_;
    std::vector<std::size_t> offsets_;
    std::size_t parameter_count_ = 0;
};

/// A dense network that owns its parameter vector.
class Approximator {
public:
    Approximator() = default;
    explicit Approximator(MlpLayout layout);
    Approximator(MlpLayout layout, Rng& rng, double last_scale = 1.0);

    const MlpLayout& layout() const { return layout_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    Vector forward(std::span<const double> input) const { return layout_.forward(params_, input); }

    void save(BinaryWriter& w) const;
    static Approximator load(BinaryReader& r);

private:
    MlpLayout layout_;
    Vector params_;
};

/// Loss evaluated on one network output: returns the sample's scalar loss and
/// writes d(loss)/d(output) into the span.
using OutputLoss = std::function<double(std::size_t index, std::span<const double> output, std::span<double> grad)>;

/// Optional loss term on the raw parameter vector (regularizers).
using ParameterLoss = std::function<double(std::span<const double> params, std::span<double> grad)>;

struct GradResult {
    double loss = 0.0;
    Vector gradient;
};

/// Total loss = sum over batch entries of `loss`, plus `param_loss` if given.
/// Throws NonFiniteError naming the offending batch entry.
GradResult grad(const Approximator& model, std::span<const Vector> batch, const OutputLoss& loss,
                const ParameterLoss& param_loss = {});

struct AdamConfig {
    double step_size = 2.5e-4 * 2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    Vector first_moment;
    Vector second_moment;
    std::uint64_t step = 0;
    AdamConfig config;

    OptimizerState() = default;
    OptimizerState(std::size_t n, AdamConfig cfg) : first_moment(n, 0.0), second_moment(n, 0.0), config(cfg) {}

    void save(BinaryWriter& w) const;
    static OptimizerState load(BinaryReader& r);
};

/// Bias-corrected Adam update in place. Rejects non-finite gradient entries
/// before touching any state.
void adam_step(std::span<double> params, std::span<const double> gradient, OptimizerState& state);

/// Rescales `gradient` so its L2 norm is at most `max_norm`; returns the norm before
/// clipping. `max_norm <= 0` disables clipping.
double clip_grad_norm(std::span<double> gradient, double max_norm);

enum class Conditioning : std::uint8_t {
    /// encoder(s) * embedding[a], elementwise, feeds every head.
    Multiplicative = 0,
    /// Every head carries one output slice per action; the action picks the slice.
    HeadSelect = 1,
};

struct HeadSpec {
    std::vector<std::size_t> hidden;
    std::size_t output_dim = 1;
    Activation output_activation = Activation::Identity;
    double init_scale = 1.0;
};

struct ConditionedSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> encoder_hidden;
    std::size_t action_count = 1;
    Conditioning conditioning = Conditioning::Multiplicative;
    std::vector<HeadSpec> heads;
};

/// Encoder, action conditioning and a set of output heads sharing one flat
/// parameter vector laid out as [encoder | embedding | head 0 | head 1 | ...].
class ConditionedModel {
public:
    /// Scratch for a training forward pass.
    struct Trace {
        Tape encoder;
        Vector interaction;
        std::vector<Tape> heads;
        std::size_t action = 0;
    };

    ConditionedModel() = default;
    ConditionedModel(ConditionedSpec spec, Rng& rng);

    const ConditionedSpec& spec() const { return spec_; }
    std::size_t action_count() const { return spec_.action_count; }
    std::size_t input_dim() const { return spec_.input_dim; }
    std::size_t head_count() const { return heads_.size(); }
    std::size_t head_output_dim(std::size_t head) const { return spec_.heads.at(head).output_dim; }
    std::size_t embedding_dim() const { return encoder_.output_dim(); }

    std::size_t parameter_count() const { return params_.size(); }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::span<double> embedding(std::size_t action);

    /// Re-draws all parameters from `rng` (same scheme as construction).
    void reinitialize(Rng& rng);

    /// Per-head outputs for (observation, action).
    std::vector<Vector> forward(std::span<const double> observation, std::size_t action) const;

    /// Encoder output, reusable across actions for counterfactual queries.
    Vector encode(std::span<const double> observation) const;
    /// One head evaluated on a cached encoding under `action`.
    Vector head_forward(std::span<const double> encoding, std::size_t action, std::size_t head) const;

    /// Training forward pass; `head_mask` (empty = all heads) selects which heads run.
    void forward(std::span<const double> observation, std::size_t action, Trace& trace,
                 std::span<const bool> head_mask = {}) const;
    /// Selected output slice of one head from a trace.
    std::span<const double> output(const Trace& trace, std::size_t head) const;
    /// Accumulates parameter gradients given d(loss)/d(selected head output);
    /// empty spans skip a head.
    void backward(const Trace& trace, std::span<const std::span<const double>> head_grads,
                  std::span<double> grad) const;

    void save(BinaryWriter& w) const;
    static ConditionedModel load(BinaryReader& r);

private:
    void build_layouts();
    void check_action(std::size_t action) const;
    std::span<const double> block(std::size_t offset, std::size_t count) const {
        return std::span<const double>(params_).subspan(offset, count);
    }

    ConditionedSpec spec_;
    MlpLayout encoder_;
    std::vector<MlpLayout> heads_;
    std::size_t embedding_offset_ = 0;
    std::vector<std::size_t> head_offsets_;
    Vector params_;
};

}  // namespace dehrl
