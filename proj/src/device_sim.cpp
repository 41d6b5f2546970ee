#include "mena/device_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mena/errors.hpp"
#include "mena/random.hpp"

namespace mena {

namespace {

void validate_variability(const VariabilitySpec& v) {
    if (v.v_th_clip_lo < kMinSwitchingThreshold) {
        throw ConfigError("v_th_clip lower bound must be >= 0.06 V, got " +
                          std::to_string(v.v_th_clip_lo));
    }
    if (v.v_th_clip_hi < v.v_th_clip_lo) {
        throw ConfigError("v_th_clip upper bound below lower bound");
    }
    if (v.v_th_sd < 0.0 || v.k_sd < 0.0 || v.read_noise_sd < 0.0) {
        throw ConfigError("standard deviations must be >= 0");
    }
    if (v.adc_bits < 1) {
        throw ConfigError("adc_bits must be >= 1, got " +
                          std::to_string(v.adc_bits));
    }
    if (v.k_mean <= 0.0) {
        throw ConfigError("k_mean must be positive");
    }
}

}  // namespace

VariabilitySpec ideal_variability() {
    VariabilitySpec v;
    v.v_th_mean = kMinSwitchingThreshold;
    v.v_th_sd = 0.0;
    v.k_sd = 0.0;
    v.read_noise_sd = 0.0;
    v.adc_bits = 52;  // quantization step ~2e-15, numerically invisible
    return v;
}

MemristorCell apply_pulse(const MemristorCell& cell, double v_applied,
                          double duration_ms) {
    const double mag = std::fabs(v_applied);
    if (mag <= cell.v_th || duration_ms <= 0.0) {
        return cell;
    }
    MemristorCell out = cell;
    const double sign = v_applied > 0.0 ? 1.0 : -1.0;
    const double delta = sign * cell.k_update * (mag - cell.v_th) * duration_ms;
    out.weight = std::clamp(cell.weight + delta, cell.w_min, cell.w_max);
    return out;
}

CrossbarModel::CrossbarModel(int rows, int cols,
                             const VariabilitySpec& variability,
                             std::uint64_t seed)
    : rows_(rows), cols_(cols), variability_(variability), seed_(seed) {
    if (rows < 1 || cols < 1) {
        throw ConfigError("crossbar dimensions must be >= 1");
    }
    validate_variability(variability);
    init_cells();
}

void CrossbarModel::init_cells() {
    rng_.seed(seed_);
    cells_.assign(static_cast<std::size_t>(rows_) * cols_, MemristorCell{});
    const VariabilitySpec& v = variability_;
    for (auto& c : cells_) {
        c.v_th = std::clamp(draw_normal(rng_, v.v_th_mean, v.v_th_sd),
                            v.v_th_clip_lo, v.v_th_clip_hi);
        c.k_update = std::max(draw_normal(rng_, v.k_mean, v.k_sd),
                              0.01 * v.k_mean);
        // Fresh devices sit at low conductance.
        c.weight = draw_uniform(rng_, 0.05, 0.15);
        c.w_min = 0.0;
        c.w_max = 1.0;
    }
}

const MemristorCell& CrossbarModel::cell(int x, int y) const {
    return cells_[static_cast<std::size_t>(x) * cols_ + y];
}

MemristorCell& CrossbarModel::cell(int x, int y) {
    return cells_[static_cast<std::size_t>(x) * cols_ + y];
}

std::vector<double> CrossbarModel::weight_grid() const {
    std::vector<double> grid;
    grid.reserve(cells_.size());
    for (const auto& c : cells_) grid.push_back(c.weight);
    return grid;
}

void CrossbarModel::write_pulse(const PulseCommand& cmd) {
    if (cmd.x < 0 || cmd.x >= rows_ || cmd.y < 0 || cmd.y >= cols_) {
        throw ProtocolError("write coordinates out of range: (" +
                            std::to_string(cmd.x) + "," +
                            std::to_string(cmd.y) + ")");
    }
    if (cmd.v_delta < 0.0) {
        throw ProtocolError("pulse amplitude must be >= 0");
    }
    const double sign = cmd.c_pulse_ms < 0.0 ? -1.0 : 1.0;
    const double tau =
        std::clamp(std::fabs(cmd.c_pulse_ms), kPulseMinMs, kPulseMaxMs);
    const double v_full = sign * cmd.v_delta;
    const double v_half = 0.5 * v_full;

    for (int i = 0; i < rows_; ++i) {
        for (int j = 0; j < cols_; ++j) {
            if (i == cmd.x && j == cmd.y) {
                cell(i, j) = apply_pulse(cell(i, j), v_full, tau);
            } else if (i == cmd.x || j == cmd.y) {
                cell(i, j) = apply_pulse(cell(i, j), v_half, tau);
            }
        }
    }
}

std::vector<double> CrossbarModel::read_mac(std::span<const double> x_norm) {
    if (static_cast<int>(x_norm.size()) != rows_) {
        throw DimensionError("read input has " +
                             std::to_string(x_norm.size()) + " lanes, grid has " +
                             std::to_string(rows_) + " rows");
    }
    for (double v : x_norm) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw RangeError("read input component outside [0,1]: " +
                             std::to_string(v));
        }
    }
    const double levels =
        std::pow(2.0, static_cast<double>(variability_.adc_bits)) - 1.0;
    const double step = static_cast<double>(rows_) / levels;

    std::vector<double> out(static_cast<std::size_t>(cols_), 0.0);
    for (int j = 0; j < cols_; ++j) {
        double acc = 0.0;
        for (int i = 0; i < rows_; ++i) {
            acc += cell(i, j).weight * x_norm[static_cast<std::size_t>(i)];
        }
        acc += draw_normal(rng_, 0.0, variability_.read_noise_sd);
        // ADC clamps to its [0, rows] input range.
        const double code = std::clamp(std::round(acc / step), 0.0, levels);
        out[static_cast<std::size_t>(j)] = code * step;
    }
    return out;
}

void CrossbarModel::reset() { init_cells(); }

CrossbarModel new_crossbar(int rows, int cols,
                           const VariabilitySpec& variability,
                           std::uint64_t seed) {
    return CrossbarModel(rows, cols, variability, seed);
}

std::string weight_map_csv(const CrossbarModel& model) {
    std::ostringstream os;
    char buf[64];
    for (int i = 0; i < model.rows(); ++i) {
        for (int j = 0; j < model.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.9g", model.cell(i, j).weight);
            os << buf << (j + 1 < model.cols() ? "," : "\n");
        }
    }
    return os.str();
}

std::string model_metadata_kv(const CrossbarModel& model) {
    const VariabilitySpec& v = model.variability();
    std::ostringstream os;
    os << "rows=" << model.rows() << "\n"
       << "cols=" << model.cols() << "\n"
       << "seed=" << model.seed() << "\n"
       << "v_th_mean=" << v.v_th_mean << "\n"
       << "v_th_sd=" << v.v_th_sd << "\n"
       << "v_th_clip_lo=" << v.v_th_clip_lo << "\n"
       << "v_th_clip_hi=" << v.v_th_clip_hi << "\n"
       << "k_mean=" << v.k_mean << "\n"
       << "k_sd=" << v.k_sd << "\n"
       << "read_noise_sd=" << v.read_noise_sd << "\n"
       << "adc_bits=" << v.adc_bits << "\n"
       << "g_min_siemens=" << kGminSiemens << "\n"
       << "g_max_siemens=" << kGmaxSiemens << "\n";
    return os.str();
}

void save_weight_map(const CrossbarModel& model, const std::string& csv_path,
                     const std::string& metadata_path) {
    std::ofstream csv(csv_path);
    if (!csv) throw IngestionError("cannot open " + csv_path + " for writing");
    csv << weight_map_csv(model);
    std::ofstream meta(metadata_path);
    if (!meta) {
        throw IngestionError("cannot open " + metadata_path + " for writing");
    }
    meta << model_metadata_kv(model);
}

}  // namespace mena
