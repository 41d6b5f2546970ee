#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mena/device_sim.hpp"
#include "mena/programming.hpp"

namespace mena {

/// Where a pipeline's crossbar lives.
struct BackendSpec {
    enum class Kind { DIRECT, TCP } kind = Kind::DIRECT;
    std::string host;
    int port = 0;
};

/// "direct" or "tcp:host:port".
BackendSpec parse_backend_spec(const std::string& text);

/// Everything an experiment run needs; file < CLI precedence is handled by
/// the CLI layer, MENA_SEED is the last-resort seed default.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    VariabilitySpec variability;
    VipiConfig vipi;
    ProgramMethod method = ProgramMethod::VIPI;
    double split = 0.7;
    BackendSpec backend;
    std::string dataset_path;
    std::string out_dir = ".";

    // chip-in-the-loop fine-tuning
    double bias_eta = 0.1;
    int bias_steps = 4000;
    double layer2_eta = 0.01;
    int layer2_steps = 8000;

    // software MLP fit
    double mlp_eta = 0.02;
    int mlp_steps = 60000;

    int robot_n = 2000;
};

void validate(const ExperimentConfig& cfg);

/// Flat key=value text ('#' comments, blank lines ignored). Unknown keys are
/// configuration errors so typos fail loudly.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> load_kv_file(const std::string& path);

/// Apply recognized keys onto a config (mirrors the CLI flags).
void apply_kv(ExperimentConfig& cfg,
              const std::map<std::string, std::string>& kv);

}  // namespace mena
