#include "dehrl/approx.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dehrl {

namespace {

inline double activate(Activation a, double z) {
    switch (a) {
    case Activation::LeakyRelu:
        return z > 0.0 ? z : kLeakySlope * z;
    case Activation::Logistic:
        return 1.0 / (1.0 + std::exp(-z));
    case Activation::Identity:
        break;
    }
    return z;
}

// Derivative expressed through the activation output; leaky ReLU keeps the sign
// of its input, the logistic derivative is y(1 - y).
inline double activation_slope(Activation a, double y) {
    switch (a) {
    case Activation::LeakyRelu:
        return y > 0.0 ? 1.0 : kLeakySlope;
    case Activation::Logistic:
        return y * (1.0 - y);
    case Activation::Identity:
        break;
    }
    return 1.0;
}

void require_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want)
        throw std::invalid_argument(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                                    std::to_string(got));
}

}  // namespace

MlpLayout::MlpLayout(std::vector<std::size_t> dims, std::vector<Activation> activations)
    : dims_(std::move(dims)), activations_(std::move(activations)) {
    if (dims_.empty())
        throw std::invalid_argument("MlpLayout needs at least an input dimension");
    if (activations_.size() + 1 != dims_.size())
        throw std::invalid_argument("MlpLayout: one activation per layer required");
    for (auto d : dims_)
        if (d == 0)
            throw std::invalid_argument("MlpLayout: layer dimensions must be positive");
    offsets_.reserve(activations_.size());
    for (std::size_t k = 0; k < activations_.size(); ++k) {
        offsets_.push_back(parameter_count_);
        parameter_count_ += (dims_[k] + 1) * dims_[k + 1];
    }
}

void MlpLayout::initialize(std::span<double> params, Rng& rng, double last_scale) const {
    require_dim(params.size(), parameter_count_, "MlpLayout::initialize");
    for (std::size_t k = 0; k < layer_count(); ++k) {
        const std::size_t in = dims_[k], out = dims_[k + 1];
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        if (k + 1 == layer_count())
            bound *= last_scale;
        std::uniform_real_distribution<double> dist(-bound, bound);
        double* w = params.data() + offsets_[k];
        for (std::size_t i = 0; i < in * out; ++i)
            w[i] = dist(rng);
        std::fill_n(w + in * out, out, 0.0);
    }
}

void MlpLayout::forward(std::span<const double> params, std::span<const double> input, Tape& tape) const {
    require_dim(input.size(), input_dim(), "MlpLayout::forward input");
    require_dim(params.size(), parameter_count_, "MlpLayout::forward parameters");
    tape.activations.resize(dims_.size());
    tape.activations[0].assign(input.begin(), input.end());
    for (std::size_t k = 0; k < layer_count(); ++k) {
        const std::size_t in = dims_[k], out = dims_[k + 1];
        const double* w = params.data() + offsets_[k];
        const double* b = w + in * out;
        const Vector& x = tape.activations[k];
        Vector& y = tape.activations[k + 1];
        y.assign(b, b + out);
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = x[i];
            if (xi == 0.0)
                continue;
            const double* row = w + i * out;
            for (std::size_t j = 0; j < out; ++j)
                y[j] += xi * row[j];
        }
        const Activation act = activations_[k];
        if (act != Activation::Identity)
            for (auto& v : y)
                v = activate(act, v);
    }
}

Vector MlpLayout::forward(std::span<const double> params, std::span<const double> input) const {
    Tape tape;
    forward(params, input, tape);
    return std::move(tape.activations.back());
}

void MlpLayout::backward(std::span<const double> params, const Tape& tape, std::span<const double> output_grad,
                         std::span<double> grad, std::span<double> input_grad) const {
    require_dim(output_grad.size(), output_dim(), "MlpLayout::backward output gradient");
    require_dim(grad.size(), parameter_count_, "MlpLayout::backward gradient");
    if (layer_count() == 0) {
        if (!input_grad.empty())
            std::copy(output_grad.begin(), output_grad.end(), input_grad.begin());
        return;
    }
    Vector delta(output_grad.begin(), output_grad.end());
    Vector next;
    for (std::size_t k = layer_count(); k-- > 0;) {
        const std::size_t in = dims_[k], out = dims_[k + 1];
        const Vector& y = tape.activations[k + 1];
        const Vector& x = tape.activations[k];
        const Activation act = activations_[k];
        if (act != Activation::Identity)
            for (std::size_t j = 0; j < out; ++j)
                delta[j] *= activation_slope(act, y[j]);

        const double* w = params.data() + offsets_[k];
        double* gw = grad.data() + offsets_[k];
        double* gb = gw + in * out;
        for (std::size_t j = 0; j < out; ++j)
            gb[j] += delta[j];

        const bool need_input = k > 0 || !input_grad.empty();
        if (need_input)
            next.assign(in, 0.0);
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = x[i];
            const double* row = w + i * out;
            double* grow = gw + i * out;
            if (xi != 0.0)
                for (std::size_t j = 0; j < out; ++j)
                    grow[j] += xi * delta[j];
            if (need_input) {
                double acc = 0.0;
                for (std::size_t j = 0; j < out; ++j)
                    acc += row[j] * delta[j];
                next[i] = acc;
            }
        }
        if (k == 0) {
            if (!input_grad.empty()) {
                require_dim(input_grad.size(), in, "MlpLayout::backward input gradient");
                std::copy(next.begin(), next.end(), input_grad.begin());
            }
            break;
        }
        delta.swap(next);
    }
}

Approximator::Approximator(MlpLayout layout) : layout_(std::move(layout)), params_(layout_.parameter_count(), 0.0) {}

Approximator::Approximator(MlpLayout layout, Rng& rng, double last_scale) : Approximator(std::move(layout)) {
    layout_.initialize(params_, rng, last_scale);
}

void Approximator::save(BinaryWriter& w) const {
    w.tag("APRX");
    std::vector<std::uint64_t> dims(layout_.dims().begin(), layout_.dims().end());
    std::vector<std::uint8_t> acts;
    for (auto a : layout_.activations())
        acts.push_back(static_cast<std::uint8_t>(a));
    w.write(dims);
    w.write(acts);
    w.write(params_);
}

Approximator Approximator::load(BinaryReader& r) {
    r.expect("APRX");
    auto dims64 = r.read_vector<std::uint64_t>();
    auto acts8 = r.read_vector<std::uint8_t>();
    std::vector<std::size_t> dims(dims64.begin(), dims64.end());
    std::vector<Activation> acts;
    for (auto a : acts8) {
        if (a > 2)
            throw FormatError("unknown activation code in checkpoint");
        acts.push_back(static_cast<Activation>(a));
    }
    Approximator model(MlpLayout(std::move(dims), std::move(acts)));
    auto params = r.read_vector<double>();
    if (params.size() != model.parameter_count())
        throw FormatError("approximator parameter count does not match its layout");
    model.params_ = std::move(params);
    return model;
}

GradResult grad(const Approximator& model, std::span<const Vector> batch, const OutputLoss& loss,
                const ParameterLoss& param_loss) {
    const auto& layout = model.layout();
    GradResult result;
    result.gradient.assign(model.parameter_count(), 0.0);
    Tape tape;
    Vector dout(layout.output_dim());
    for (std::size_t n = 0; n < batch.size(); ++n) {
        layout.forward(model.parameters(), batch[n], tape);
        std::fill(dout.begin(), dout.end(), 0.0);
        const double l = loss(n, tape.output(), dout);
        if (!std::isfinite(l))
            throw NonFiniteError("non-finite loss", n);
        result.loss += l;
        layout.backward(model.parameters(), tape, dout, result.gradient);
    }
    if (param_loss) {
        const double l = param_loss(model.parameters(), result.gradient);
        if (!std::isfinite(l))
            throw NonFiniteError("non-finite parameter loss", batch.size());
        result.loss += l;
    }
    return result;
}

void OptimizerState::save(BinaryWriter& w) const {
    w.tag("ADAM");
    w.write(first_moment);
    w.write(second_moment);
    w.write(step);
    w.write(config.step_size);
    w.write(config.beta1);
    w.write(config.beta2);
    w.write(config.epsilon);
}

OptimizerState OptimizerState::load(BinaryReader& r) {
    r.expect("ADAM");
    OptimizerState s;
    s.first_moment = r.read_vector<double>();
    s.second_moment = r.read_vector<double>();
    s.step = r.read<std::uint64_t>();
    s.config.step_size = r.read<double>();
    s.config.beta1 = r.read<double>();
    s.config.beta2 = r.read<double>();
    s.config.epsilon = r.read<double>();
    if (s.first_moment.size() != s.second_moment.size())
        throw FormatError("optimizer moment vectors differ in length");
    return s;
}

void adam_step(std::span<double> params, std::span<const double> gradient, OptimizerState& state) {
    const std::size_t n = params.size();
    if (gradient.size() != n || state.first_moment.size() != n || state.second_moment.size() != n)
        throw std::invalid_argument("adam_step: parameter, gradient and moment lengths differ");
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(gradient[i]))
            throw NonFiniteError("non-finite gradient entry", i);

    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = c.beta1 * m + (1.0 - c.beta1) * gradient[i];
        v = c.beta2 * v + (1.0 - c.beta2) * gradient[i] * gradient[i];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] -= c.step_size * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
}

double clip_grad_norm(std::span<double> gradient, double max_norm) {
    double sq = 0.0;
    for (double g : gradient)
        sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / (norm + 1e-12);
        for (double& g : gradient)
            g *= scale;
    }
    return norm;
}

ConditionedModel::ConditionedModel(ConditionedSpec spec, Rng& rng) : spec_(std::move(spec)) {
    if (spec_.input_dim == 0)
        throw std::invalid_argument("ConditionedModel: input_dim must be positive");
    if (spec_.action_count == 0)
        throw std::invalid_argument("ConditionedModel: action_count must be positive");
    if (spec_.heads.empty())
        throw std::invalid_argument("ConditionedModel: at least one head required");
    build_layouts();
    reinitialize(rng);
}

void ConditionedModel::build_layouts() {
    std::vector<std::size_t> dims{spec_.input_dim};
    dims.insert(dims.end(), spec_.encoder_hidden.begin(), spec_.encoder_hidden.end());
    encoder_ = MlpLayout(dims, std::vector<Activation>(dims.size() - 1, Activation::LeakyRelu));

    std::size_t offset = encoder_.parameter_count();
    embedding_offset_ = offset;
    if (spec_.conditioning == Conditioning::Multiplicative)
        offset += spec_.action_count * encoder_.output_dim();

    heads_.clear();
    head_offsets_.clear();
    for (const auto& h : spec_.heads) {
        std::vector<std::size_t> hd{encoder_.output_dim()};
        hd.insert(hd.end(), h.hidden.begin(), h.hidden.end());
        const std::size_t width =
            spec_.conditioning == Conditioning::HeadSelect ? h.output_dim * spec_.action_count : h.output_dim;
        hd.push_back(width);
        std::vector<Activation> acts(hd.size() - 1, Activation::LeakyRelu);
        acts.back() = h.output_activation;
        heads_.emplace_back(hd, acts);
        head_offsets_.push_back(offset);
        offset += heads_.back().parameter_count();
    }
    params_.assign(offset, 0.0);
}

void ConditionedModel::reinitialize(Rng& rng) {
    std::span<double> all(params_);
    encoder_.initialize(all.subspan(0, encoder_.parameter_count()), rng);
    if (spec_.conditioning == Conditioning::Multiplicative) {
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (std::size_t i = 0; i < spec_.action_count * encoder_.output_dim(); ++i)
            params_[embedding_offset_ + i] = dist(rng);
    }
    for (std::size_t h = 0; h < heads_.size(); ++h)
        heads_[h].initialize(all.subspan(head_offsets_[h], heads_[h].parameter_count()), rng,
                             spec_.heads[h].init_scale);
}

std::span<double> ConditionedModel::embedding(std::size_t action) {
    if (spec_.conditioning != Conditioning::Multiplicative)
        throw std::logic_error("ConditionedModel: head-select models carry no embedding table");
    check_action(action);
    return std::span<double>(params_).subspan(embedding_offset_ + action * encoder_.output_dim(),
                                              encoder_.output_dim());
}

void ConditionedModel::check_action(std::size_t action) const {
    if (action >= spec_.action_count)
        throw std::out_of_range("ConditionedModel: action index " + std::to_string(action) + " outside [0, " +
                                std::to_string(spec_.action_count) + ")");
}

Vector ConditionedModel::encode(std::span<const double> observation) const {
    if (observation.size() != spec_.input_dim)
        throw std::invalid_argument("ConditionedModel: observation has length " + std::to_string(observation.size()) +
                                    ", expected " + std::to_string(spec_.input_dim));
    return encoder_.forward(block(0, encoder_.parameter_count()), observation);
}

Vector ConditionedModel::head_forward(std::span<const double> encoding, std::size_t action, std::size_t head) const {
    check_action(action);
    const auto& layout = heads_.at(head);
    const auto params = block(head_offsets_[head], layout.parameter_count());
    if (spec_.conditioning == Conditioning::Multiplicative) {
        const double* e = params_.data() + embedding_offset_ + action * encoder_.output_dim();
        Vector z(encoding.begin(), encoding.end());
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] *= e[i];
        return layout.forward(params, z);
    }
    Vector full = layout.forward(params, encoding);
    const std::size_t d = spec_.heads[head].output_dim;
    return Vector(full.begin() + static_cast<std::ptrdiff_t>(action * d),
                  full.begin() + static_cast<std::ptrdiff_t>((action + 1) * d));
}

std::vector<Vector> ConditionedModel::forward(std::span<const double> observation, std::size_t action) const {
    check_action(action);
    const Vector enc = encode(observation);
    std::vector<Vector> out;
    out.reserve(heads_.size());
    for (std::size_t h = 0; h < heads_.size(); ++h)
        out.push_back(head_forward(enc, action, h));
    return out;
}

void ConditionedModel::forward(std::span<const double> observation, std::size_t action, Trace& trace,
                               std::span<const bool> head_mask) const {
    check_action(action);
    if (observation.size() != spec_.input_dim)
        throw std::invalid_argument("ConditionedModel: observation has length " + std::to_string(observation.size()) +
                                    ", expected " + std::to_string(spec_.input_dim));
    trace.action = action;
    encoder_.forward(block(0, encoder_.parameter_count()), observation, trace.encoder);
    const Vector& enc = trace.encoder.output();
    trace.interaction.assign(enc.begin(), enc.end());
    if (spec_.conditioning == Conditioning::Multiplicative) {
        const double* e = params_.data() + embedding_offset_ + action * enc.size();
        for (std::size_t i = 0; i < enc.size(); ++i)
            trace.interaction[i] *= e[i];
    }
    trace.heads.resize(heads_.size());
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        if (!head_mask.empty() && !head_mask[h])
            continue;
        heads_[h].forward(block(head_offsets_[h], heads_[h].parameter_count()), trace.interaction, trace.heads[h]);
    }
}

std::span<const double> ConditionedModel::output(const Trace& trace, std::size_t head) const {
    const Vector& full = trace.heads.at(head).output();
    if (spec_.conditioning == Conditioning::Multiplicative)
        return full;
    const std::size_t d = spec_.heads[head].output_dim;
    return std::span<const double>(full).subspan(trace.action * d, d);
}

void ConditionedModel::backward(const Trace& trace, std::span<const std::span<const double>> head_grads,
                                std::span<double> grad) const {
    if (grad.size() != params_.size())
        throw std::invalid_argument("ConditionedModel::backward: gradient length mismatch");
    if (head_grads.size() != heads_.size())
        throw std::invalid_argument("ConditionedModel::backward: one gradient span per head required");
    const std::size_t width = trace.interaction.size();
    Vector d_interaction(width, 0.0);
    Vector d_head_in(width);
    Vector full;
    bool any = false;
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        const auto g = head_grads[h];
        if (g.empty())
            continue;
        const auto& layout = heads_[h];
        std::span<const double> dout = g;
        if (spec_.conditioning == Conditioning::HeadSelect) {
            const std::size_t d = spec_.heads[h].output_dim;
            if (g.size() != d)
                throw std::invalid_argument("ConditionedModel::backward: head gradient length mismatch");
            full.assign(layout.output_dim(), 0.0);
            std::copy(g.begin(), g.end(), full.begin() + static_cast<std::ptrdiff_t>(trace.action * d));
            dout = full;
        }
        layout.backward(block(head_offsets_[h], layout.parameter_count()), trace.heads[h], dout,
                        grad.subspan(head_offsets_[h], layout.parameter_count()), d_head_in);
        for (std::size_t i = 0; i < width; ++i)
            d_interaction[i] += d_head_in[i];
        any = true;
    }
    if (!any)
        return;

    Vector d_encoding = d_interaction;
    if (spec_.conditioning == Conditioning::Multiplicative) {
        const std::size_t off = embedding_offset_ + trace.action * width;
        const double* e = params_.data() + off;
        const Vector& enc = trace.encoder.output();
        for (std::size_t i = 0; i < width; ++i) {
            grad[off + i] += d_interaction[i] * enc[i];
            d_encoding[i] = d_interaction[i] * e[i];
        }
    }
    if (encoder_.layer_count() > 0)
        encoder_.backward(block(0, encoder_.parameter_count()), trace.encoder, d_encoding,
                          grad.subspan(0, encoder_.parameter_count()));
}

void ConditionedModel::save(BinaryWriter& w) const {
    w.tag("CMOD");
    w.write<std::uint64_t>(spec_.input_dim);
    std::vector<std::uint64_t> hidden(spec_.encoder_hidden.begin(), spec_.encoder_hidden.end());
    w.write(hidden);
    w.write<std::uint64_t>(spec_.action_count);
    w.write(static_cast<std::uint8_t>(spec_.conditioning));
    w.write<std::uint64_t>(spec_.heads.size());
    for (const auto& h : spec_.heads) {
        std::vector<std::uint64_t> hh(h.hidden.begin(), h.hidden.end());
        w.write(hh);
        w.write<std::uint64_t>(h.output_dim);
        w.write(static_cast<std::uint8_t>(h.output_activation));
        w.write(h.init_scale);
    }
    w.write(params_);
}

ConditionedModel ConditionedModel::load(BinaryReader& r) {
    r.expect("CMOD");
    ConditionedModel m;
    m.spec_.input_dim = r.read<std::uint64_t>();
    auto hidden = r.read_vector<std::uint64_t>();
    m.spec_.encoder_hidden.assign(hidden.begin(), hidden.end());
    m.spec_.action_count = r.read<std::uint64_t>();
    const auto cond = r.read<std::uint8_t>();
    if (cond > 1)
        throw FormatError("unknown conditioning code in checkpoint");
    m.spec_.conditioning = static_cast<Conditioning>(cond);
    const auto nheads = r.read<std::uint64_t>();
    for (std::uint64_t i = 0; i < nheads; ++i) {
        HeadSpec h;
        auto hh = r.read_vector<std::uint64_t>();
        h.hidden.assign(hh.begin(), hh.end());
        h.output_dim = r.read<std::uint64_t>();
        const auto act = r.read<std::uint8_t>();
        if (act > 2)
            throw FormatError("unknown activation code in checkpoint");
        h.output_activation = static_cast<Activation>(act);
        h.init_scale = r.read<double>();
        m.spec_.heads.push_back(std::move(h));
    }
    m.build_layouts();
    auto params = r.read_vector<double>();
    if (params.size() != m.params_.size())
        throw FormatError("conditioned model parameter count does not match its spec");
    m.params_ = std::move(params);
    return m;
}

}  // namespace dehrl
