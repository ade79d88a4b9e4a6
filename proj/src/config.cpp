#include "eot/config.hpp"

#include "eot/errors.hpp"
#include "eot/io.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

namespace eot::config {

namespace {

std::string at_line(int line, const std::string& msg) {
    return "line " + std::to_string(line) + ": " + msg;
}

class LineParser {
public:
    LineParser(const std::string& text, int line) : s_(text), line_(line) {}

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) {
            ++pos_;
        }
    }

    bool at_end() {
        skip_ws();
        return pos_ >= s_.size() || s_[pos_] == '#';
    }

    Value value() {
        skip_ws();
        if (pos_ >= s_.size()) {
            fail("missing value");
        }
        Value v;
        v.line = line_;
        const char c = s_[pos_];
        if (c == '"') {
            v.kind = Value::Kind::string;
            ++pos_;
            while (pos_ < s_.size() && s_[pos_] != '"') {
                if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
                    ++pos_;
                }
                v.text += s_[pos_++];
            }
            if (pos_ >= s_.size()) {
                fail("unterminated string");
            }
            ++pos_;
        } else if (c == '[') {
            v.kind = Value::Kind::array;
            ++pos_;
            skip_ws();
            if (peek() == ']') {
                ++pos_;
                return v;
            }
            while (true) {
                v.items.push_back(value());
                skip_ws();
                if (peek() == ',') {
                    ++pos_;
                    skip_ws();
                    if (peek() == ']') {  // trailing comma
                        ++pos_;
                        break;
                    }
                } else if (peek() == ']') {
                    ++pos_;
                    break;
                } else {
                    fail("expected ',' or ']' in array");
                }
            }
        } else {
            const std::size_t begin = pos_;
            while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != ' ' &&
                   s_[pos_] != '\t' && s_[pos_] != '#') {
                ++pos_;
            }
            v.text = s_.substr(begin, pos_ - begin);
            if (v.text == "true" || v.text == "false") {
                v.kind = Value::Kind::boolean;
                v.flag = v.text == "true";
            } else {
                double d = 0.0;
                const auto* first = v.text.data();
                const auto* last = first + v.text.size();
                if (!v.text.empty() && *first == '+') {
                    ++first;
                }
                const auto [ptr, ec] = std::from_chars(first, last, d);
                if (v.text.empty() || ec != std::errc() || ptr != last) {
                    fail("invalid value '" + v.text + "'");
                }
            }
        }
        return v;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(at_line(line_, msg)); }

private:
    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

    const std::string& s_;
    int line_;
    std::size_t pos_ = 0;
};

bool valid_name(const std::string& name) {
    if (name.empty()) {
        return false;
    }
    for (const char c : name) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) {
            return false;
        }
    }
    return true;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Typed access to a document; remembers which keys were consumed.
class Reader {
public:
    explicit Reader(const Document& doc) : doc_(doc) {}

    bool has(const std::string& key) const { return doc_.count(key) != 0; }

    const Value* find(const std::string& key) {
        const auto it = doc_.find(key);
        if (it == doc_.end()) {
            return nullptr;
        }
        used_.insert(key);
        return &it->second;
    }

    std::optional<double> real(const std::string& key) {
        const Value* v = find(key);
        return v ? std::optional<double>(as_real(*v, key)) : std::nullopt;
    }

    std::optional<std::uint64_t> count(const std::string& key) {
        const Value* v = find(key);
        return v ? std::optional<std::uint64_t>(as_count(*v, key)) : std::nullopt;
    }

    std::optional<std::string> string(const std::string& key) {
        const Value* v = find(key);
        if (!v) {
            return std::nullopt;
        }
        if (v->kind != Value::Kind::string) {
            throw ConfigError(at_line(v->line, key + " must be a string"));
        }
        return v->text;
    }

    std::optional<std::vector<double>> reals(const std::string& key) {
        const Value* v = find(key);
        if (!v) {
            return std::nullopt;
        }
        return as_reals(*v, key);
    }

    std::optional<std::vector<std::vector<double>>> matrix(const std::string& key) {
        const Value* v = find(key);
        if (!v) {
            return std::nullopt;
        }
        if (v->kind != Value::Kind::array) {
            throw ConfigError(at_line(v->line, key + " must be an array of arrays"));
        }
        std::vector<std::vector<double>> out;
        for (const auto& row : v->items) {
            out.push_back(as_reals(row, key));
        }
        return out;
    }

    void reject_unused() const {
        for (const auto& [key, value] : doc_) {
            if (!used_.count(key)) {
                throw ConfigError(at_line(value.line, "unknown key '" + key + "'"));
            }
        }
    }

    static double as_real(const Value& v, const std::string& key) {
        if (v.kind != Value::Kind::number) {
            throw ConfigError(at_line(v.line, key + " must be a number"));
        }
        double d = 0.0;
        const auto* first = v.text.data() + (v.text.front() == '+' ? 1 : 0);
        std::from_chars(first, v.text.data() + v.text.size(), d);
        if (!std::isfinite(d)) {
            throw ConfigError(at_line(v.line, key + " must be finite"));
        }
        return d;
    }

    static std::uint64_t as_count(const Value& v, const std::string& key) {
        std::uint64_t n = 0;
        const auto* last = v.text.data() + v.text.size();
        const auto [ptr, ec] =
            v.kind == Value::Kind::number ? std::from_chars(v.text.data(), last, n)
                                          : std::from_chars_result{nullptr, std::errc::invalid_argument};
        if (ec != std::errc() || ptr != last) {
            throw ConfigError(at_line(v.line, key + " must be a non-negative integer"));
        }
        return n;
    }

    static std::vector<double> as_reals(const Value& v, const std::string& key) {
        if (v.kind != Value::Kind::array) {
            throw ConfigError(at_line(v.line, key + " must be an array of numbers"));
        }
        std::vector<double> out;
        for (const auto& item : v.items) {
            out.push_back(as_real(item, key));
        }
        return out;
    }

private:
    const Document& doc_;
    std::set<std::string> used_;
};

struct LrCell {
    std::size_t dim;
    double epsilon;
    double lr;
};

// G2G learning rates by (D, epsilon).
constexpr std::array<LrCell, 12> kLearningRates{{
    {2, 0.1, 5e-7}, {2, 1.0, 4e-7}, {2, 10.0, 2e-7},
    {16, 0.1, 2e-5}, {16, 1.0, 4e-6}, {16, 10.0, 1e-5},
    {64, 0.1, 7e-5}, {64, 1.0, 4e-5}, {64, 10.0, 2e-5},
    {128, 0.1, 2e-4}, {128, 1.0, 5e-5}, {128, 10.0, 5e-5},
}};

bool same_epsilon(double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b));
}

ExperimentKind parse_kind(const std::string& s, int line) {
    if (s == "toy2d") {
        return ExperimentKind::toy2d;
    }
    if (s == "g2g") {
        return ExperimentKind::g2g;
    }
    if (s == "oracle_check") {
        return ExperimentKind::oracle_check;
    }
    throw ConfigError(at_line(line, "experiment must be one of toy2d, g2g, oracle_check (got '" +
                                        s + "')"));
}

std::size_t to_size(std::uint64_t v) {
    return static_cast<std::size_t>(v);
}

data::DistributionSpec read_distribution(Reader& r, const std::string& section,
                                         data::DistributionSpec fallback, std::size_t dim) {
    const auto kind = r.string(section + ".kind");
    const bool gaussian = kind ? *kind == "gaussian"
                               : std::holds_alternative<data::GaussianSpec>(fallback.kind);
    if (kind && *kind != "gaussian" && *kind != "swissroll") {
        throw ConfigError(section + ".kind must be gaussian or swissroll");
    }
    if (gaussian) {
        const auto d = static_cast<Eigen::Index>(dim);
        Vector mean = Vector::Zero(d);
        Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(d, d);
        if (const auto* g = std::get_if<data::GaussianSpec>(&fallback.kind)) {
            mean = g->mean;
            cov = g->cov;
        }
        if (auto m = r.reals(section + ".mean")) {
            if (m->size() != dim) {
                throw ConfigError(section + ".mean must have dim entries");
            }
            mean = Eigen::Map<const Vector>(m->data(), d);
        }
        if (auto c = r.matrix(section + ".cov")) {
            if (c->size() != dim) {
                throw ConfigError(section + ".cov must be dim x dim");
            }
            for (std::size_t i = 0; i < dim; ++i) {
                if ((*c)[i].size() != dim) {
                    throw ConfigError(section + ".cov must be dim x dim");
                }
                for (std::size_t j = 0; j < dim; ++j) {
                    cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*c)[i][j];
                }
            }
        }
        try {
            return data::DistributionSpec::gaussian(mean, cov);
        } catch (const std::exception& e) {
            throw ConfigError(section + ": " + e.what());
        }
    }
    double scale = 7.5;
    double noise = 0.05;
    if (const auto* s = std::get_if<data::SwissrollSpec>(&fallback.kind)) {
        scale = s->scale;
        noise = s->noise_std;
    }
    scale = r.real(section + ".scale").value_or(scale);
    noise = r.real(section + ".noise_std").value_or(noise);
    try {
        return data::DistributionSpec::swissroll(scale, noise);
    } catch (const ConfigError& e) {
        throw ConfigError(section + ": " + e.what());
    }
}

}  // namespace

std::string to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::toy2d:
            return "toy2d";
        case ExperimentKind::g2g:
            return "g2g";
        case ExperimentKind::oracle_check:
            return "oracle_check";
    }
    return "unknown";
}

Document parse_document(const std::string& text) {
    Document doc;
    std::string section;
    std::size_t start = 0;
    int line_no = 0;
    while (start <= text.size()) {
        const std::size_t end = std::min(text.find('\n', start), text.size());
        const std::string raw = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line.front() == '#') {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        if (line.front() == '[') {
            const auto close = line.find(']');
            if (close == std::string::npos) {
                throw ConfigError(at_line(line_no, "unterminated section header"));
            }
            section = trim(line.substr(1, close - 1));
            const std::string rest = trim(line.substr(close + 1));
            if (!valid_name(section) || (!rest.empty() && rest.front() != '#')) {
                throw ConfigError(at_line(line_no, "invalid section header"));
            }
        } else {
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(at_line(line_no, "expected 'key = value'"));
            }
            const std::string key = trim(line.substr(0, eq));
            if (!valid_name(key)) {
                throw ConfigError(at_line(line_no, "invalid key '" + key + "'"));
            }
            const std::string value_text = line.substr(eq + 1);
            LineParser p(value_text, line_no);
            Value v = p.value();
            if (!p.at_end()) {
                p.fail("unexpected text after value");
            }
            const std::string full = section.empty() ? key : section + "." + key;
            if (!doc.emplace(full, std::move(v)).second) {
                throw ConfigError(at_line(line_no, "duplicate key '" + full + "'"));
            }
        }
        if (end == text.size()) {
            break;
        }
    }
    return doc;
}

std::optional<double> reference_learning_rate(std::size_t dim, double epsilon) {
    for (const auto& cell : kLearningRates) {
        if (cell.dim == dim && same_epsilon(cell.epsilon, epsilon)) {
            return cell.lr;
        }
    }
    return std::nullopt;
}

void ExperimentConfig::validate() const {
    if (!(epsilon > 0.0)) {
        throw ConfigError("epsilon must be positive");
    }
    if (dim == 0) {
        throw ConfigError("dim must be positive");
    }
    switch (experiment) {
        case ExperimentKind::toy2d:
            if (dim != 2) {
                throw ConfigError("dim must be 2 for toy2d (got " + std::to_string(dim) + ")");
            }
            if (!source || !target || source->dim() != 2 || target->dim() != 2) {
                throw ConfigError("toy2d requires 2-dimensional source and target");
            }
            if (toy.probes.empty()) {
                throw ConfigError("toy.probes must not be empty");
            }
            for (const auto& p : toy.probes) {
                if (p.size() != 2) {
                    throw ConfigError("toy.probes entries must have 2 coordinates");
                }
            }
            if (toy.reference_points < 2 || toy.samples_per_probe < 2) {
                throw ConfigError("toy.reference_points and toy.samples_per_probe must be >= 2");
            }
            break;
        case ExperimentKind::g2g:
            if (!pair) {
                throw ConfigError("g2g requires a Gaussian pair specification");
            }
            pair->validate();
            if (pair->dim != dim) {
                throw ConfigError("problem dimension must equal dim");
            }
            break;
        case ExperimentKind::oracle_check:
            if (dim != 1) {
                throw ConfigError("dim must be 1 for oracle_check (got " + std::to_string(dim) + ")");
            }
            if (oracle.grid_points < 3 || !(oracle.grid_hi > oracle.grid_lo)) {
                throw ConfigError("oracle grid must have >= 3 points and grid_hi > grid_lo");
            }
            if (!(oracle.source_var > 0.0) || !(oracle.target_var > 0.0)) {
                throw ConfigError("oracle variances must be positive");
            }
            if (oracle.probes.empty()) {
                throw ConfigError("oracle.probes must not be empty");
            }
            if (oracle.pl_knots < 2) {
                throw ConfigError("oracle.pl_knots must be >= 2");
            }
            return;
    }
    network.validate();
    if (network.input_dim != dim) {
        throw ConfigError("network input dimension must equal dim");
    }
    train.validate();
    if (eval.samples < 2) {
        throw ConfigError("eval.samples must be >= 2");
    }
    if (!(eval.eta > 0.0)) {
        throw ConfigError("eval.eta must be positive");
    }
}

ExperimentConfig parse_config_text(const std::string& text) {
    const Document doc = parse_document(text);
    Reader r(doc);
    ExperimentConfig c;

    const Value* kind = r.find("experiment");
    if (!kind) {
        throw ConfigError("missing required field 'experiment'");
    }
    if (kind->kind != Value::Kind::string) {
        throw ConfigError(at_line(kind->line, "experiment must be a string"));
    }
    c.experiment = parse_kind(kind->text, kind->line);

    const auto eps = r.real("epsilon");
    if (!eps) {
        throw ConfigError("missing required field 'epsilon'");
    }
    c.epsilon = *eps;
    if (!(c.epsilon > 0.0)) {
        throw ConfigError("epsilon must be positive");
    }
    const std::size_t default_dim = c.experiment == ExperimentKind::oracle_check ? 1 : 2;
    c.dim = to_size(r.count("dim").value_or(default_dim));
    if (c.dim == 0) {
        throw ConfigError("dim must be positive");
    }
    c.seed = r.count("seed").value_or(0);
    c.name = r.string("name").value_or(to_string(c.experiment));
    c.output_dir = r.string("output_dir").value_or("runs/" + c.name);

    if (c.experiment == ExperimentKind::oracle_check) {
        auto& o = c.oracle;
        o.grid_points = to_size(r.count("oracle.grid_points").value_or(o.grid_points));
        o.grid_lo = r.real("oracle.grid_lo").value_or(o.grid_lo);
        o.grid_hi = r.real("oracle.grid_hi").value_or(o.grid_hi);
        o.source_mean = r.real("oracle.source_mean").value_or(o.source_mean);
        o.source_var = r.real("oracle.source_var").value_or(o.source_var);
        o.target_mean = r.real("oracle.target_mean").value_or(o.target_mean);
        o.target_var = r.real("oracle.target_var").value_or(o.target_var);
        o.probes = r.reals("oracle.probes").value_or(o.probes);
        o.pl_knots = to_size(r.count("oracle.pl_knots").value_or(o.pl_knots));
        o.pl_amplitude = r.real("oracle.pl_amplitude").value_or(o.pl_amplitude);
        r.reject_unused();
        c.validate();
        return c;
    }

    // Reference defaults per experiment.
    const bool toy = c.experiment == ExperimentKind::toy2d;
    std::optional<double> default_lr;
    double default_eta = 0.1;
    if (toy) {
        c.network.hidden_sizes = {256, 256};
        c.network.activation = nn::Activation::leaky_relu;
        c.network.slope = 0.2;
        if (same_epsilon(c.epsilon, 0.1)) {
            default_eta = 0.05;
        } else if (same_epsilon(c.epsilon, 0.001)) {
            default_eta = 0.005;
        } else {
            default_eta = 0.0;  // no reference value: must be given
        }
    } else {
        c.network.hidden_sizes = {512, 512, 512};
        c.network.activation = nn::Activation::relu;
        default_lr = reference_learning_rate(c.dim, c.epsilon);
    }

    c.network.input_dim = c.dim;
    c.network.seed = c.seed;
    if (auto h = r.reals("network.hidden")) {
        c.network.hidden_sizes.clear();
        for (const double v : *h) {
            if (!(v >= 1.0) || v != std::floor(v)) {
                throw ConfigError("network.hidden entries must be positive integers");
            }
            c.network.hidden_sizes.push_back(static_cast<std::size_t>(v));
        }
    }
    if (auto a = r.string("network.activation")) {
        c.network.activation = nn::parse_activation(*a);
    }
    c.network.slope = r.real("network.slope").value_or(c.network.slope);
    if (auto s = r.string("network.init")) {
        c.network.init_scheme = nn::parse_init_scheme(*s);
    }

    auto& t = c.train;
    t.seed = c.seed;
    t.sampler.epsilon = c.epsilon;
    t.sampler.eta = r.real("train.eta").value_or(default_eta);
    if (!(t.sampler.eta > 0.0)) {
        throw ConfigError("train.eta is required for this epsilon (no reference default)");
    }
    t.sampler.n_steps = to_size(r.count("train.langevin_steps").value_or(100));
    if (t.sampler.n_steps == 0) {
        throw ConfigError("train.langevin_steps must be positive");
    }
    t.sampler.sigma0 = r.real("train.sigma0").value_or(1.0);
    t.batch_size = to_size(r.count("train.batch_size").value_or(1024));
    t.n_iterations = to_size(r.count("train.iterations").value_or(20000));
    if (t.n_iterations == 0) {
        throw ConfigError("train.iterations must be positive");
    }
    const auto lr = r.real("train.lr");
    if (!lr && !default_lr) {
        throw ConfigError("train.lr is required (no reference learning rate for this setting)");
    }
    t.lr = lr ? *lr : *default_lr;
    const auto lr_final = r.real("train.lr_final");
    const auto decay_start = r.count("train.decay_start");
    if (lr_final.has_value() != decay_start.has_value()) {
        throw ConfigError("train.lr_final and train.decay_start must be given together");
    }
    if (lr_final) {
        t.decay = trainer::LrDecay{to_size(*decay_start), *lr_final};
    }
    t.buffer_capacity = to_size(r.count("train.buffer_capacity").value_or(t.buffer_capacity));
    t.buffer_prob = r.real("train.buffer_prob").value_or(t.buffer_prob);
    t.eval_every = to_size(r.count("train.log_every").value_or(t.eval_every));
    t.adam_beta1 = r.real("train.adam_beta1").value_or(t.adam_beta1);
    t.adam_beta2 = r.real("train.adam_beta2").value_or(t.adam_beta2);

    c.eval.samples = to_size(r.count("eval.samples").value_or(c.eval.samples));
    c.eval.langevin_steps = to_size(r.count("eval.langevin_steps").value_or(c.eval.langevin_steps));
    c.eval.eta = r.real("eval.eta").value_or(t.sampler.eta);
    if (auto s = r.count("eval.seed")) {
        c.eval.seed = *s;
        c.eval_seed_pinned = true;
    } else {
        c.eval.seed = c.seed;
    }

    if (toy) {
        c.source = read_distribution(r, "source", data::DistributionSpec::standard_gaussian(2), 2);
        c.target = read_distribution(r, "target", data::DistributionSpec::swissroll(), 2);
        auto& s = c.toy;
        s.reference_points = to_size(r.count("toy.reference_points").value_or(s.reference_points));
        s.probes = r.matrix("toy.probes").value_or(s.probes);
        s.samples_per_probe = to_size(r.count("toy.samples_per_probe").value_or(s.samples_per_probe));
        s.sinkhorn_tol = r.real("toy.sinkhorn_tol").value_or(s.sinkhorn_tol);
        s.plot_points = to_size(r.count("toy.plot_points").value_or(s.plot_points));
    } else {
        data::GaussianPairSpec pair;
        pair.dim = c.dim;
        pair.eig_lo = r.real("problem.eig_lo").value_or(pair.eig_lo);
        pair.eig_hi = r.real("problem.eig_hi").value_or(pair.eig_hi);
        if (auto s = r.count("problem.seed")) {
            pair.seed = *s;
            c.pair_seed_pinned = true;
        } else {
            pair.seed = c.seed;
        }
        c.pair = pair;
    }

    r.reject_unused();
    c.validate();
    return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
    const std::string text = io::read_text(path);
    try {
        return parse_config_text(text);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void override_seed(ExperimentConfig& config, std::uint64_t seed) {
    config.seed = seed;
    config.network.seed = seed;
    config.train.seed = seed;
    if (!config.eval_seed_pinned) {
        config.eval.seed = seed;
    }
    if (config.pair && !config.pair_seed_pinned) {
        config.pair->seed = seed;
    }
}

}  // namespace eot::config
