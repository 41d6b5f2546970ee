#include "mena/config.hpp"

#include <fstream>
#include <sstream>

#include "mena/errors.hpp"

namespace mena {

BackendSpec parse_backend_spec(const std::string& text) {
    BackendSpec spec;
    if (text.empty() || text == "direct") {
        spec.kind = BackendSpec::Kind::DIRECT;
        return spec;
    }
    if (text.rfind("tcp:", 0) == 0) {
        const std::string rest = text.substr(4);
        const auto colon = rest.rfind(':');
        if (colon == std::string::npos || colon + 1 >= rest.size()) {
            throw ConfigError("backend spec must be tcp:<host:port>");
        }
        spec.kind = BackendSpec::Kind::TCP;
        spec.host = rest.substr(0, colon);
        try {
            spec.port = std::stoi(rest.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad port in backend spec: " + text);
        }
        if (spec.port < 1 || spec.port > 65535) {
            throw ConfigError("port out of range in backend spec: " + text);
        }
        return spec;
    }
    throw ConfigError("unknown backend spec: " + text +
                      " (expected direct or tcp:<host:port>)");
}

void validate(const ExperimentConfig& cfg) {
    if (!(cfg.split > 0.0 && cfg.split < 1.0)) {
        throw ConfigError("split must lie strictly between 0 and 1");
    }
    validate(cfg.vipi);
    if (cfg.bias_steps < 0 || cfg.layer2_steps < 0 || cfg.mlp_steps < 0) {
        throw ConfigError("step counts must be >= 0");
    }
    if (cfg.robot_n < 100) {
        throw ConfigError("robot_n must be >= 100");
    }
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("config line " + std::to_string(lineno) +
                              " is not key=value");
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        const auto kend = key.find_last_not_of(" \t");
        key = key.substr(0, kend + 1);
        const auto vstart = value.find_first_not_of(" \t");
        value = vstart == std::string::npos ? "" : value.substr(vstart);
        kv[key] = value;
    }
    return kv;
}

std::map<std::string, std::string> load_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_kv_text(ss.str());
}

namespace {

double as_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + key + ": " + v);
    }
}

int as_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad integer value for " + key + ": " + v);
    }
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("bad seed value for " + key + ": " + v);
    }
}

}  // namespace

void apply_kv(ExperimentConfig& cfg,
              const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        if (key == "seed") cfg.seed = as_u64(key, value);
        else if (key == "method") {
            if (value == "vipi") cfg.method = ProgramMethod::VIPI;
            else if (value == "pi") cfg.method = ProgramMethod::PI;
            else throw ConfigError("method must be vipi or pi, got " + value);
        }
        else if (key == "backend") cfg.backend = parse_backend_spec(value);
        else if (key == "split") cfg.split = as_double(key, value);
        else if (key == "dataset") cfg.dataset_path = value;
        else if (key == "out") cfg.out_dir = value;
        else if (key == "v_th_mean") cfg.variability.v_th_mean = as_double(key, value);
        else if (key == "v_th_sd") cfg.variability.v_th_sd = as_double(key, value);
        else if (key == "v_th_clip_lo") cfg.variability.v_th_clip_lo = as_double(key, value);
        else if (key == "v_th_clip_hi") cfg.variability.v_th_clip_hi = as_double(key, value);
        else if (key == "k_mean") cfg.variability.k_mean = as_double(key, value);
        else if (key == "k_sd") cfg.variability.k_sd = as_double(key, value);
        else if (key == "read_noise_sd") cfg.variability.read_noise_sd = as_double(key, value);
        else if (key == "adc_bits") cfg.variability.adc_bits = as_int(key, value);
        else if (key == "k_p") cfg.vipi.k_p = as_double(key, value);
        else if (key == "k_i") cfg.vipi.k_i = as_double(key, value);
        else if (key == "epsilon") cfg.vipi.epsilon = as_double(key, value);
        else if (key == "delta") cfg.vipi.delta = as_double(key, value);
        else if (key == "n_c") cfg.vipi.n_c = as_int(key, value);
        else if (key == "n_iter") cfg.vipi.n_iter = as_int(key, value);
        else if (key == "e_max") cfg.vipi.e_max = as_double(key, value);
        else if (key == "v_delta_init") cfg.vipi.v_delta_init = as_double(key, value);
        else if (key == "n_avg") cfg.vipi.n_avg = as_int(key, value);
        else if (key == "v_delta_max") cfg.vipi.v_delta_max = as_double(key, value);
        else if (key == "bias_eta") cfg.bias_eta = as_double(key, value);
        else if (key == "bias_steps") cfg.bias_steps = as_int(key, value);
        else if (key == "layer2_eta") cfg.layer2_eta = as_double(key, value);
        else if (key == "layer2_steps") cfg.layer2_steps = as_int(key, value);
        else if (key == "mlp_eta") cfg.mlp_eta = as_double(key, value);
        else if (key == "mlp_steps") cfg.mlp_steps = as_int(key, value);
        else if (key == "robot_n") cfg.robot_n = as_int(key, value);
        else throw ConfigError("unknown config key: " + key);
    }
}

}  // namespace mena
