#include "ckoop/artifacts.hpp"

#include <sstream>

#include "ckoop/csv.hpp"
#include "ckoop/errors.hpp"

namespace ckoop {

namespace {

std::vector<std::string> tokens(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string t;
    while (in >> t) out.push_back(t);
    return out;
}

constexpr int kModelVersion = 1;
constexpr int kControllerVersion = 1;

}  // namespace

void KeyValueFile::set(std::string key, std::string value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(key), std::move(value));
}

void KeyValueFile::set_double(std::string key, double value) { set(std::move(key), format_double(value)); }

void KeyValueFile::set_matrix(std::string key, const Mat& m) {
    std::ostringstream out;
    out << m.rows() << ' ' << m.cols();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << ' ' << format_double(m(i, j));
    }
    set(std::move(key), out.str());
}

void KeyValueFile::set_vector(std::string key, std::span<const double> v) {
    std::ostringstream out;
    out << v.size();
    for (double x : v) out << ' ' << format_double(x);
    set(std::move(key), out.str());
}

bool KeyValueFile::has(std::string_view key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return true;
    }
    return false;
}

const std::string& KeyValueFile::get(std::string_view key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    throw InputError(source_ + ": missing key '" + std::string(key) + "'");
}

double KeyValueFile::get_double(std::string_view key) const {
    try {
        return parse_double(get(key));
    } catch (const InputError&) {
        throw InputError(source_ + ": key '" + std::string(key) + "' is not a number");
    }
}

long long KeyValueFile::get_int(std::string_view key) const {
    try {
        return parse_int(get(key));
    } catch (const InputError&) {
        throw InputError(source_ + ": key '" + std::string(key) + "' is not an integer");
    }
}

Mat KeyValueFile::get_matrix(std::string_view key) const {
    const auto t = tokens(get(key));
    if (t.size() < 2) throw InputError(source_ + ": malformed matrix '" + std::string(key) + "'");
    const long long r = parse_int(t[0]);
    const long long c = parse_int(t[1]);
    if (r < 0 || c < 0 || t.size() != static_cast<std::size_t>(2 + r * c)) {
        throw InputError(source_ + ": matrix '" + std::string(key) + "' has the wrong number of entries");
    }
    Mat m(r, c);
    std::size_t idx = 2;
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = parse_double(t[idx++]);
    }
    return m;
}

std::vector<double> KeyValueFile::get_vector(std::string_view key) const {
    const auto t = tokens(get(key));
    if (t.empty()) throw InputError(source_ + ": malformed vector '" + std::string(key) + "'");
    const long long n = parse_int(t[0]);
    if (n < 0 || t.size() != static_cast<std::size_t>(n + 1)) {
        throw InputError(source_ + ": vector '" + std::string(key) + "' has the wrong number of entries");
    }
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(n));
    for (std::size_t i = 1; i < t.size(); ++i) v.push_back(parse_double(t[i]));
    return v;
}

std::string KeyValueFile::str() const {
    std::ostringstream out;
    for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
    return out.str();
}

KeyValueFile KeyValueFile::parse(std::string_view text, const std::string& source) {
    KeyValueFile f;
    f.source_ = source;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) {
            throw InputError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        f.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    return f;
}

KeyValueFile KeyValueFile::load(const std::string& path) { return parse(csv::read_text_file(path), path); }

void KeyValueFile::save(const std::string& path) const { csv::write_text_file(path, str()); }

void save_model(const LiftedModel& model, const FitDiagnostics& diag, const std::string& path) {
    model.validate();
    KeyValueFile f;
    f.set("format", "ckoop-model");
    f.set("version", std::to_string(kModelVersion));
    f.set("dictionary", to_string(model.dictionary.kind()));
    f.set("dictionary_description", model.dictionary.description().empty() ? "-" : model.dictionary.description());
    f.set("state_dim", std::to_string(model.state_dim()));
    f.set("latent_dim", std::to_string(model.latent_dim()));
    f.set("input_dim", std::to_string(model.input_dim()));
    const auto dp = model.dictionary.parameters();
    f.set_vector("dictionary_parameters", dp);
    f.set("decoder", to_string(model.decoder.kind()));
    f.set("decoder_output_dim", std::to_string(model.decoder.output_dim()));
    const auto cp = model.decoder.parameters();
    f.set_vector("decoder_parameters", cp);
    f.set_matrix("A", model.a);
    f.set_matrix("B", model.b);
    f.set_double("diag.rho_edmd", diag.rho_edmd);
    f.set_double("diag.rho", diag.rho);
    f.set_double("diag.sigma_min_c", diag.sigma_min);
    f.set_double("diag.sigma_max_c", diag.sigma_max);
    f.set_double("diag.prediction_loss_edmd", diag.prediction_loss_edmd);
    f.set_double("diag.prediction_loss", diag.prediction_loss);
    f.set_double("diag.initial_loss", diag.initial_loss);
    f.set_double("diag.final_loss", diag.final_loss);
    f.set("diag.iterations", std::to_string(diag.iterations));
    f.save(path);
}

LiftedModel load_model(const std::string& path, FitDiagnostics* diag) {
    const KeyValueFile f = KeyValueFile::load(path);
    if (f.get("format") != "ckoop-model") throw InputError(path + ": not a model file");
    if (f.get_int("version") != kModelVersion) throw InputError(path + ": unsupported model version");
    const auto n = static_cast<int>(f.get_int("state_dim"));
    const auto big_n = static_cast<int>(f.get_int("latent_dim"));
    std::string desc = f.get("dictionary_description");
    if (desc == "-") desc.clear();
    LiftedModel model;
    model.dictionary = Dictionary::from_parameters(parse_dictionary_kind(f.get("dictionary")), n, big_n,
                                                   f.get_vector("dictionary_parameters"), desc);
    model.decoder = Decoder::from_parameters(parse_decoder_kind(f.get("decoder")), big_n,
                                             static_cast<int>(f.get_int("decoder_output_dim")),
                                             f.get_vector("decoder_parameters"));
    model.a = f.get_matrix("A");
    model.b = f.get_matrix("B");
    if (model.input_dim() != f.get_int("input_dim")) throw InputError(path + ": input_dim does not match B");
    model.validate();
    if (diag != nullptr) {
        diag->rho_edmd = f.get_double("diag.rho_edmd");
        diag->rho = f.get_double("diag.rho");
        diag->sigma_min = f.get_double("diag.sigma_min_c");
        diag->sigma_max = f.get_double("diag.sigma_max_c");
        diag->prediction_loss_edmd = f.get_double("diag.prediction_loss_edmd");
        diag->prediction_loss = f.get_double("diag.prediction_loss");
        diag->initial_loss = f.get_double("diag.initial_loss");
        diag->final_loss = f.get_double("diag.final_loss");
        diag->iterations = static_cast<int>(f.get_int("diag.iterations"));
    }
    return model;
}

void save_controller(const ControllerFile& controller, const std::string& path) {
    const ControllerSpec& s = controller.spec;
    s.validate();
    KeyValueFile f;
    f.set("format", "ckoop-controller");
    f.set("version", std::to_string(kControllerVersion));
    f.set("preset", controller.preset.empty() ? "-" : controller.preset);
    f.set_double("gamma", s.gamma);
    f.set_double("rho", s.rho);
    f.set_double("c_v", s.c_v);
    f.set_double("m_bar", s.m_bar);
    f.set_double("m_under", s.m_under);
    f.set_double("sqrt_m_ratio", std::sqrt(s.m_bar / s.m_under));
    f.set_double("certificate", s.certificate);
    f.set_double("lqr_state_weight", controller.lqr_state_weight);
    f.set_vector("closed_loop_moduli", controller.closed_loop_moduli);
    f.set_matrix("K", s.gain);
    f.set_matrix("M", s.metric);
    f.set_matrix("Theta", s.theta);
    f.save(path);
}

ControllerFile load_controller(const std::string& path) {
    const KeyValueFile f = KeyValueFile::load(path);
    if (f.get("format") != "ckoop-controller") throw InputError(path + ": not a controller file");
    if (f.get_int("version") != kControllerVersion) throw InputError(path + ": unsupported controller version");
    ControllerFile c;
    c.preset = f.get("preset");
    if (c.preset == "-") c.preset.clear();
    c.spec.gamma = f.get_double("gamma");
    c.spec.rho = f.get_double("rho");
    c.spec.c_v = f.get_double("c_v");
    c.spec.m_bar = f.get_double("m_bar");
    c.spec.m_under = f.get_double("m_under");
    c.spec.certificate = f.get_double("certificate");
    c.spec.gain = f.get_matrix("K");
    c.spec.metric = f.get_matrix("M");
    c.spec.theta = f.get_matrix("Theta");
    c.lqr_state_weight = f.get_double("lqr_state_weight");
    c.closed_loop_moduli = f.get_vector("closed_loop_moduli");
    c.spec.validate();
    return c;
}

}  // namespace ckoop
