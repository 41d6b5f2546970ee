#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mena {

// Read amplitude is 0.05 V; thresholds must sit strictly above it so
// inference can never move a weight.
inline constexpr double kMinSwitchingThreshold = 0.06;
inline constexpr double kReadVoltageMax = 0.05;

// Pulse generator limits. The PI output is unbounded; hardware is not.
inline constexpr double kPulseMinMs = 0.01;
inline constexpr double kPulseMaxMs = 10.0;

// Physical conductance window the normalized weight maps onto
// (10 kOhm .. 1 MOhm device range). All computation stays in weight units;
// the mapping exists only for map export metadata.
inline constexpr double kGminSiemens = 1e-6;
inline constexpr double kGmaxSiemens = 100e-6;

/// One memristor: normalized conductance plus its switching parameters.
struct MemristorCell {
    double weight = 0.0;    // normalized conductance in [w_min, w_max]
    double v_th = 0.12;     // switching threshold, volts
    double k_update = 0.5;  // weight units per (volt * ms) of overdrive
    double w_min = 0.0;
    double w_max = 1.0;
};

/// Device-to-device variability of a crossbar batch.
struct VariabilitySpec {
    double v_th_mean = 0.12;
    double v_th_sd = 0.05;
    double v_th_clip_lo = 0.06;
    double v_th_clip_hi = 0.40;
    double k_mean = 0.5;
    double k_sd = 0.05;
    double read_noise_sd = 0.002;
    int adc_bits = 12;
};

/// Variability with every stochastic term switched off, for oracle runs.
VariabilitySpec ideal_variability();

/// Signed pulse-duration command aimed at one cell.
/// Sign of c_pulse_ms is polarity: positive potentiates, negative depresses.
struct PulseCommand {
    int x = 0;
    int y = 0;
    double c_pulse_ms = 0.0;
    double v_delta = 0.0;  // pulse amplitude, volts, >= 0
};

/// Behavioral crossbar: a grid of cells, read-path non-idealities, and one
/// seeded stream supplying every random draw the model ever makes.
class CrossbarModel {
public:
    CrossbarModel(int rows, int cols, const VariabilitySpec& variability,
                  std::uint64_t seed);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::uint64_t seed() const { return seed_; }
    const VariabilitySpec& variability() const { return variability_; }

    const MemristorCell& cell(int x, int y) const;
    MemristorCell& cell(int x, int y);

    /// Weight grid as a flat row-major copy (for snapshots and export).
    std::vector<double> weight_grid() const;

    /// Half-select write: target (x,y) sees the full signed amplitude,
    /// row/column mates see half of it, everything else sees nothing.
    /// Neighbor disturb is whatever the cell law produces; nothing here
    /// suppresses it.
    void write_pulse(const PulseCommand& cmd);

    /// Noisy quantized multiply-accumulate over the columns.
    /// Never mutates cell weights.
    std::vector<double> read_mac(std::span<const double> x_norm);

    /// Put the grid (and the noise stream) back to the freshly seeded state.
    void reset();

private:
    void init_cells();

    int rows_;
    int cols_;
    VariabilitySpec variability_;
    std::uint64_t seed_;
    std::vector<MemristorCell> cells_;  // row-major
    std::mt19937_64 rng_;
};

/// Single-cell pulse response: below threshold nothing moves; above it the
/// weight slews by k * overdrive * duration, hard-clipped to its bounds.
MemristorCell apply_pulse(const MemristorCell& cell, double v_applied,
                          double duration_ms);

CrossbarModel new_crossbar(int rows, int cols,
                           const VariabilitySpec& variability,
                           std::uint64_t seed);

/// Conductance map export: rows x cols CSV at 9 significant digits, plus a
/// flat key=value metadata file describing seed and variability.
std::string weight_map_csv(const CrossbarModel& model);
std::string model_metadata_kv(const CrossbarModel& model);
void save_weight_map(const CrossbarModel& model, const std::string& csv_path,
                     const std::string& metadata_path);

}  // namespace mena
