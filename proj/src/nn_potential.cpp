#include "eot/nn_potential.hpp"

#include "eot/errors.hpp"
#include "eot/io.hpp"
#include "eot/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

namespace eot::nn {

namespace {

using json = nlohmann::json;

inline double activate(double z, Activation act, double slope) {
    if (z > 0.0) {
        return z;
    }
    return act == Activation::relu ? 0.0 : slope * z;
}

// Derivative at exactly 0 is taken from the negative side.
inline double activate_grad(double z, Activation act, double slope) {
    if (z > 0.0) {
        return 1.0;
    }
    return act == Activation::relu ? 0.0 : slope;
}

std::vector<DenseLayer> zeros_like_layers(const std::vector<DenseLayer>& layers) {
    std::vector<DenseLayer> out;
    out.reserve(layers.size());
    for (const auto& l : layers) {
        out.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                       Eigen::VectorXd::Zero(l.bias.size())});
    }
    return out;
}

bool congruent(const std::vector<DenseLayer>& a, const std::vector<DenseLayer>& b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t l = 0; l < a.size(); ++l) {
        if (a[l].weight.rows() != b[l].weight.rows() || a[l].weight.cols() != b[l].weight.cols() ||
            a[l].bias.size() != b[l].bias.size()) {
            return false;
        }
    }
    return true;
}

void check_input(const PotentialNetwork& net, std::size_t n) {
    require_shape(n == net.input_dim(), "input has dimension " + std::to_string(n) +
                                            ", network expects " +
                                            std::to_string(net.input_dim()));
}

}  // namespace

std::string to_string(Activation a) {
    return a == Activation::relu ? "relu" : "leaky_relu";
}

std::string to_string(InitScheme s) {
    return s == InitScheme::uniform_he ? "uniform_he" : "zeros";
}

Activation parse_activation(const std::string& name) {
    if (name == "relu") {
        return Activation::relu;
    }
    if (name == "leaky_relu") {
        return Activation::leaky_relu;
    }
    throw ConfigError("activation: unknown value '" + name + "'");
}

InitScheme parse_init_scheme(const std::string& name) {
    if (name == "uniform_he") {
        return InitScheme::uniform_he;
    }
    if (name == "zeros") {
        return InitScheme::zeros;
    }
    throw ConfigError("init_scheme: unknown value '" + name + "'");
}

void NetworkConfig::validate() const {
    if (input_dim == 0) {
        throw ConfigError("input_dim must be positive");
    }
    if (hidden_sizes.empty()) {
        throw ConfigError("hidden_sizes must be non-empty");
    }
    for (std::size_t h : hidden_sizes) {
        if (h == 0) {
            throw ConfigError("hidden_sizes entries must be positive");
        }
    }
    if (activation == Activation::leaky_relu && !(slope > 0.0 && slope < 1.0)) {
        throw ConfigError("slope must lie in (0, 1) for leaky_relu");
    }
}

std::size_t PotentialNetwork::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    }
    return n;
}

void PotentialNetwork::validate() const {
    if (layers.empty()) {
        throw ConfigError("network has no layers");
    }
    Eigen::Index expected_in = static_cast<Eigen::Index>(config.input_dim);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weight.cols() != expected_in || layer.bias.size() != layer.weight.rows() ||
            layer.weight.rows() == 0) {
            throw ConfigError("layer " + std::to_string(l) + " does not chain: expected " +
                              std::to_string(expected_in) + " inputs");
        }
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
            throw ConfigError("layer " + std::to_string(l) + " has non-finite parameters");
        }
        expected_in = layer.weight.rows();
    }
    if (expected_in != 1) {
        throw ConfigError("network output dimension must be 1");
    }
}

ParamGradient ParamGradient::zeros_like(const PotentialNetwork& net) {
    return ParamGradient{zeros_like_layers(net.layers)};
}

double ParamGradient::squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
        s += l.weight.squaredNorm() + l.bias.squaredNorm();
    }
    return s;
}

bool ParamGradient::congruent_with(const PotentialNetwork& net) const {
    return congruent(layers, net.layers);
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& other) {
    require_shape(congruent(layers, other.layers), "gradient shapes differ");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weight += other.layers[l].weight;
        layers[l].bias += other.layers[l].bias;
    }
    return *this;
}

ParamGradient& ParamGradient::operator-=(const ParamGradient& other) {
    require_shape(congruent(layers, other.layers), "gradient shapes differ");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weight -= other.layers[l].weight;
        layers[l].bias -= other.layers[l].bias;
    }
    return *this;
}

ParamGradient& ParamGradient::operator*=(double s) {
    for (auto& l : layers) {
        l.weight *= s;
        l.bias *= s;
    }
    return *this;
}

ParamGradient operator-(ParamGradient a, const ParamGradient& b) {
    a -= b;
    return a;
}

AdamState AdamState::for_network(const PotentialNetwork& net, double lr, double beta1,
                                 double beta2, double eps) {
    AdamState s;
    s.first_moment = zeros_like_layers(net.layers);
    s.second_moment = zeros_like_layers(net.layers);
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

Workspace::Workspace(const PotentialNetwork& net) {
    std::size_t widest = net.input_dim();
    for (const auto& l : net.layers) {
        pre_.emplace_back(static_cast<std::size_t>(l.weight.rows()) * kLanes);
        widest = std::max(widest, static_cast<std::size_t>(l.weight.rows()));
    }
    for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
        post_.emplace_back(pre_[l].size());
    }
    delta_.resize(widest * kLanes);
    delta_next_.resize(widest * kLanes);
    input_.resize(net.input_dim() * kLanes);
    grad_.resize(net.input_dim() * kLanes);
}

PotentialNetwork init_network(const NetworkConfig& config) {
    config.validate();
    PotentialNetwork net;
    net.config = config;
    std::size_t fan_in = config.input_dim;
    std::vector<std::size_t> widths = config.hidden_sizes;
    widths.push_back(1);
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const auto out = static_cast<Eigen::Index>(widths[l]);
        const auto in = static_cast<Eigen::Index>(fan_in);
        DenseLayer layer{Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)};
        if (config.init_scheme == InitScheme::uniform_he) {
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            auto gen = substream(config.seed, {stream_tag::network_init, l});
            std::uniform_real_distribution<double> dist(-bound, bound);
            // Row-major draw order so the layout of storage does not leak into values.
            for (Eigen::Index o = 0; o < out; ++o) {
                for (Eigen::Index i = 0; i < in; ++i) {
                    layer.weight(o, i) = dist(gen);
                }
            }
        }
        net.layers.push_back(std::move(layer));
        fan_in = widths[l];
    }
    return net;
}

PotentialNetwork make_network(NetworkConfig config, std::vector<DenseLayer> layers) {
    PotentialNetwork net{std::move(config), std::move(layers)};
    net.validate();
    return net;
}

namespace {

// GCC/Clang vector extension: element-wise IEEE arithmetic, the same
// results as a scalar loop over lanes.
template <int L>
struct Lanes {
    typedef double type __attribute__((vector_size(sizeof(double) * L)));
};
template <>
struct Lanes<1> {
    using type = double;
};

// Lane-blocked kernels. Buffers are unit-major and lane-minor (index
// u * L + b); each lane sums in the same order for every L, so blocked and
// single-row evaluations agree bitwise.
template <int L>
void forward_lanes(const PotentialNetwork& net, const double* input, Workspace& ws) {
    const double* in = input;
    const std::size_t n_layers = net.layers.size();
    const Activation act = net.config.activation;
    const double slope = net.config.slope;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const DenseLayer& layer = net.layers[l];
        const Eigen::Index out = layer.weight.rows();
        const Eigen::Index n_in = layer.weight.cols();
        double* z = ws.pre_[l].data();
        const double* bias = layer.bias.data();
        const double* w = layer.weight.data();  // column-major: column i is contiguous
        // z_o = b_o + W_o0 a_0 + W_o1 a_1 + ... summed left to right.
        if constexpr (L == 1) {
            for (Eigen::Index o = 0; o < out; ++o) {
                z[o] = bias[o];
            }
            for (Eigen::Index i = 0; i < n_in; ++i) {
                const double ai = in[i];
                const double* col = w + i * out;
                for (Eigen::Index o = 0; o < out; ++o) {
                    z[o] += col[o] * ai;
                }
            }
        } else {
            using LaneVec = typename Lanes<L>::type;
            Eigen::Index o = 0;
            for (; o + 4 <= out; o += 4) {
                LaneVec a0, a1, a2, a3;
                for (int b = 0; b < L; ++b) {
                    a0[b] = bias[o];
                    a1[b] = bias[o + 1];
                    a2[b] = bias[o + 2];
                    a3[b] = bias[o + 3];
                }
                for (Eigen::Index i = 0; i < n_in; ++i) {
                    const double* wi = w + i * out + o;
                    LaneVec ai;
                    std::memcpy(&ai, in + i * L, sizeof ai);
                    a0 += wi[0] * ai;
                    a1 += wi[1] * ai;
                    a2 += wi[2] * ai;
                    a3 += wi[3] * ai;
                }
                std::memcpy(z + o * L, &a0, sizeof a0);
                std::memcpy(z + (o + 1) * L, &a1, sizeof a1);
                std::memcpy(z + (o + 2) * L, &a2, sizeof a2);
                std::memcpy(z + (o + 3) * L, &a3, sizeof a3);
            }
            for (; o < out; ++o) {
                double acc[L];
                for (int b = 0; b < L; ++b) {
                    acc[b] = bias[o];
                }
                for (Eigen::Index i = 0; i < n_in; ++i) {
                    const double wv = w[i * out + o];
                    for (int b = 0; b < L; ++b) {
                        acc[b] += wv * in[i * L + b];
                    }
                }
                for (int b = 0; b < L; ++b) {
                    z[o * L + b] = acc[b];
                }
            }
        }
        if (l + 1 < n_layers) {
            double* a = ws.post_[l].data();
            for (Eigen::Index u = 0; u < out * L; ++u) {
                a[u] = activate(z[u], act, slope);
            }
            in = a;
        }
    }
}

template <int L>
void backward_lanes(const PotentialNetwork& net, Workspace& ws, double* grad_out) {
    const Activation act = net.config.activation;
    const double slope = net.config.slope;
    for (int b = 0; b < L; ++b) {
        ws.delta_[b] = 1.0;
    }
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const DenseLayer& layer = net.layers[l];
        const Eigen::Index out = layer.weight.rows();
        const Eigen::Index n_in = layer.weight.cols();
        const double* w = layer.weight.data();
        const double* delta = ws.delta_.data();
        double* g = l == 0 ? grad_out : ws.delta_next_.data();
        // g_i = sum_o W_oi delta_o, summed from o = 0 upwards. Four inputs at
        // a time keep independent accumulator chains in flight.
        using LaneVec = typename Lanes<L>::type;
        Eigen::Index i = 0;
        for (; i + 4 <= n_in; i += 4) {
            const double* c0 = w + i * out;
            const double* c1 = c0 + out;
            const double* c2 = c1 + out;
            const double* c3 = c2 + out;
            LaneVec a0{}, a1{}, a2{}, a3{};
            for (Eigen::Index o = 0; o < out; ++o) {
                LaneVec d;
                std::memcpy(&d, delta + o * L, sizeof d);
                a0 += c0[o] * d;
                a1 += c1[o] * d;
                a2 += c2[o] * d;
                a3 += c3[o] * d;
            }
            std::memcpy(g + i * L, &a0, sizeof a0);
            std::memcpy(g + (i + 1) * L, &a1, sizeof a1);
            std::memcpy(g + (i + 2) * L, &a2, sizeof a2);
            std::memcpy(g + (i + 3) * L, &a3, sizeof a3);
        }
        for (; i < n_in; ++i) {
            const double* col = w + i * out;
            double acc[L] = {};
            for (Eigen::Index o = 0; o < out; ++o) {
                for (int b = 0; b < L; ++b) {
                    acc[b] += col[o] * delta[o * L + b];
                }
            }
            for (int b = 0; b < L; ++b) {
                g[i * L + b] = acc[b];
            }
        }
        if (l > 0) {
            const double* z = ws.pre_[l - 1].data();
            for (Eigen::Index u = 0; u < n_in * L; ++u) {
                g[u] *= activate_grad(z[u], act, slope);
            }
            std::swap(ws.delta_, ws.delta_next_);
        }
    }
}

// Transposes up to kLanes rows into lane-minor layout, zero-padding.
void load_lanes(const double* ys, std::size_t rows, std::size_t dim, Workspace& ws) {
    double* in = ws.input_.data();
    for (std::size_t d = 0; d < dim; ++d) {
        for (std::size_t b = 0; b < kLanes; ++b) {
            in[d * kLanes + b] = b < rows ? ys[b * dim + d] : 0.0;
        }
    }
}

}  // namespace

double forward_into(const PotentialNetwork& net, const double* y, Workspace& ws) {
    forward_lanes<1>(net, y, ws);
    return ws.pre_.back()[0];
}

void backward_input(const PotentialNetwork& net, Workspace& ws, double* grad_out) {
    backward_lanes<1>(net, ws, grad_out);
}

void value_and_grad_block(const PotentialNetwork& net, const double* ys, std::size_t rows,
                          double* values, double* grads, Workspace& ws) {
    require_shape(rows <= kLanes, "value_and_grad_block takes at most kLanes rows");
    const std::size_t dim = net.input_dim();
    load_lanes(ys, rows, dim, ws);
    forward_lanes<static_cast<int>(kLanes)>(net, ws.input_.data(), ws);
    backward_lanes<static_cast<int>(kLanes)>(net, ws, ws.grad_.data());
    for (std::size_t b = 0; b < rows; ++b) {
        values[b] = ws.pre_.back()[b];
        for (std::size_t d = 0; d < dim; ++d) {
            grads[b * dim + d] = ws.grad_[d * kLanes + b];
        }
    }
}

void accumulate_params(const PotentialNetwork& net, const double* y, double weight,
                       Workspace& ws, ParamGradient& grad) {
    const Activation act = net.config.activation;
    const double slope = net.config.slope;
    ws.delta_[0] = weight;
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const DenseLayer& layer = net.layers[l];
        const Eigen::Index out = layer.weight.rows();
        const Eigen::Index n_in = layer.weight.cols();
        const double* a_in = l == 0 ? y : ws.post_[l - 1].data();
        const double* delta = ws.delta_.data();
        double* dw = grad.layers[l].weight.data();
        double* db = grad.layers[l].bias.data();
        for (Eigen::Index o = 0; o < out; ++o) {
            db[o] += delta[o];
        }
        for (Eigen::Index i = 0; i < n_in; ++i) {
            const double ai = a_in[i];
            double* col = dw + i * out;
            for (Eigen::Index o = 0; o < out; ++o) {
                col[o] += delta[o] * ai;
            }
        }
        if (l > 0) {
            const double* w = layer.weight.data();
            const double* z = ws.pre_[l - 1].data();
            double* g = ws.delta_next_.data();
            for (Eigen::Index i = 0; i < n_in; ++i) {
                const double* col = w + i * out;
                double gi = 0.0;
                for (Eigen::Index o = 0; o < out; ++o) {
                    gi += col[o] * delta[o];
                }
                g[i] = gi * activate_grad(z[i], act, slope);
            }
            std::swap(ws.delta_, ws.delta_next_);
        }
    }
}

double forward(const PotentialNetwork& net, std::span<const double> y) {
    check_input(net, y.size());
    Workspace ws(net);
    return forward_into(net, y.data(), ws);
}

Vector forward_batch(const PotentialNetwork& net, const Matrix& ys) {
    check_input(net, static_cast<std::size_t>(ys.cols()));
    Workspace ws(net);
    Vector out(ys.rows());
    const auto dim = static_cast<std::size_t>(ys.cols());
    const auto rows = static_cast<std::size_t>(ys.rows());
    for (std::size_t first = 0; first < rows; first += kLanes) {
        const std::size_t n = std::min(kLanes, rows - first);
        load_lanes(ys.data() + first * dim, n, dim, ws);
        forward_lanes<static_cast<int>(kLanes)>(net, ws.input_.data(), ws);
        for (std::size_t b = 0; b < n; ++b) {
            out(static_cast<Eigen::Index>(first + b)) = ws.pre_.back()[b];
        }
    }
    return out;
}

Vector grad_input(const PotentialNetwork& net, std::span<const double> y) {
    check_input(net, y.size());
    Workspace ws(net);
    Vector g(static_cast<Eigen::Index>(y.size()));
    forward_into(net, y.data(), ws);
    backward_input(net, ws, g.data());
    return g;
}

double value_and_grad_input(const PotentialNetwork& net, const double* y, double* out,
                            Workspace& ws) {
    const double value = forward_into(net, y, ws);
    backward_input(net, ws, out);
    return value;
}

ParamGradient grad_params_weighted(const PotentialNetwork& net, const Matrix& ys,
                                   std::span<const double> weights) {
    check_input(net, static_cast<std::size_t>(ys.cols()));
    require_shape(static_cast<std::size_t>(ys.rows()) == weights.size(),
                  "weight vector length must equal the number of rows");
    ParamGradient grad = ParamGradient::zeros_like(net);
    Workspace ws(net);
    for (Eigen::Index n = 0; n < ys.rows(); ++n) {
        const double* y = ys.data() + n * ys.cols();
        forward_into(net, y, ws);
        accumulate_params(net, y, weights[static_cast<std::size_t>(n)], ws, grad);
    }
    return grad;
}

std::pair<PotentialNetwork, AdamState> adam_step(const PotentialNetwork& net,
                                                 const ParamGradient& grad,
                                                 const AdamState& state, bool maximize) {
    require_shape(grad.congruent_with(net), "gradient is not congruent with the network");
    require_shape(congruent(state.first_moment, net.layers) &&
                      congruent(state.second_moment, net.layers),
                  "Adam state is not congruent with the network");
    PotentialNetwork next = net;
    AdamState s = state;
    s.step += 1;
    const double t = static_cast<double>(s.step);
    const double bc1 = 1.0 - std::pow(s.beta1, t);
    const double bc2 = 1.0 - std::pow(s.beta2, t);
    const double sign = maximize ? -1.0 : 1.0;

    auto update = [&](double* p, const double* g_raw, double* m, double* v, Eigen::Index n) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const double g = sign * g_raw[k];
            m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g;
            v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g * g;
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p[k] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
        }
    };
    for (std::size_t l = 0; l < next.layers.size(); ++l) {
        update(next.layers[l].weight.data(), grad.layers[l].weight.data(),
               s.first_moment[l].weight.data(), s.second_moment[l].weight.data(),
               next.layers[l].weight.size());
        update(next.layers[l].bias.data(), grad.layers[l].bias.data(),
               s.first_moment[l].bias.data(), s.second_moment[l].bias.data(),
               next.layers[l].bias.size());
    }
    return {std::move(next), std::move(s)};
}

std::string checkpoint_to_string(const PotentialNetwork& net) {
    net.validate();
    json cfg = {
        {"input_dim", net.config.input_dim},
        {"hidden_sizes", net.config.hidden_sizes},
        {"activation", to_string(net.config.activation)},
        {"slope", net.config.slope},
        {"init_scheme", to_string(net.config.init_scheme)},
        {"seed", net.config.seed},
    };
    json layers = json::array();
    for (const auto& l : net.layers) {
        json w = json::array();
        for (Eigen::Index o = 0; o < l.weight.rows(); ++o) {
            json row = json::array();
            for (Eigen::Index i = 0; i < l.weight.cols(); ++i) {
                row.push_back(l.weight(o, i));
            }
            w.push_back(std::move(row));
        }
        json b = json::array();
        for (Eigen::Index o = 0; o < l.bias.size(); ++o) {
            b.push_back(l.bias(o));
        }
        layers.push_back({{"w", std::move(w)}, {"b", std::move(b)}});
    }
    json doc = {{"format_version", kCheckpointFormatVersion},
                {"config", std::move(cfg)},
                {"layers", std::move(layers)}};
    return doc.dump(1) + "\n";
}

PotentialNetwork checkpoint_from_string(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    if (!doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
        throw FormatVersionError("checkpoint has no integer format_version");
    }
    const int version = doc["format_version"].get<int>();
    if (version != kCheckpointFormatVersion) {
        throw FormatVersionError("unsupported checkpoint format_version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointFormatVersion) + ")");
    }
    try {
        const json& c = doc.at("config");
        NetworkConfig cfg;
        cfg.input_dim = c.at("input_dim").get<std::size_t>();
        cfg.hidden_sizes = c.at("hidden_sizes").get<std::vector<std::size_t>>();
        cfg.activation = parse_activation(c.at("activation").get<std::string>());
        cfg.slope = c.at("slope").get<double>();
        cfg.init_scheme = parse_init_scheme(c.at("init_scheme").get<std::string>());
        cfg.seed = c.at("seed").get<std::uint64_t>();
        std::vector<DenseLayer> layers;
        for (const json& jl : doc.at("layers")) {
            const auto rows = jl.at("w").get<std::vector<std::vector<double>>>();
            const auto bias = jl.at("b").get<std::vector<double>>();
            const auto out = static_cast<Eigen::Index>(rows.size());
            const auto in = out == 0 ? 0 : static_cast<Eigen::Index>(rows.front().size());
            DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(static_cast<Eigen::Index>(bias.size()))};
            for (Eigen::Index o = 0; o < out; ++o) {
                if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(o)].size()) != in) {
                    throw IoError("ragged weight matrix in checkpoint");
                }
                for (Eigen::Index i = 0; i < in; ++i) {
                    layer.weight(o, i) = rows[static_cast<std::size_t>(o)][static_cast<std::size_t>(i)];
                }
            }
            for (std::size_t o = 0; o < bias.size(); ++o) {
                layer.bias(static_cast<Eigen::Index>(o)) = bias[o];
            }
            layers.push_back(std::move(layer));
        }
        return make_network(std::move(cfg), std::move(layers));
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const PotentialNetwork& net, const std::filesystem::path& path) {
    io::write_text_atomic(path, checkpoint_to_string(net));
}

PotentialNetwork load_checkpoint(const std::filesystem::path& path) {
    try {
        return checkpoint_from_string(io::read_text(path));
    } catch (const FormatVersionError& e) {
        throw FormatVersionError(path.string() + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

}  // namespace eot::nn
