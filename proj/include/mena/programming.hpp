#pragma once

#include <string>
#include <vector>

#include "mena/backend.hpp"

namespace mena {

/// Gains and schedule for closed-loop conductance programming.
struct VipiConfig {
    double k_p = 2.0;           // proportional gain
    double k_i = 0.1;           // integral gain
    double epsilon = 0.02;      // error tolerance, weight units
    double delta = 0.02;        // voltage increment, volts
    int n_c = 10;               // iterations between increments
    int n_iter = 200;           // max iterations
    double e_max = 1.0;         // integral clamp
    double v_delta_init = 0.08; // initial writing voltage
    int n_avg = 4;              // reads averaged per measurement
    double v_delta_max = 0.50;  // amplifier saturation cap
};

void validate(const VipiConfig& cfg);

enum class ProgramMethod { VIPI, PI };

/// Per-cell programming outcome telemetry. Trace lengths:
/// error_trace has one entry per iteration (= `iterations`);
/// e_acc_trace / v_delta_trace have one entry per issued write, holding the
/// integral state and the voltage in effect after that iteration completed.
struct ProgramReport {
    int x = 0;
    int y = 0;
    double target = 0.0;
    double achieved = 0.0;  // weight at the last measuring read
    int iterations = 0;
    bool converged = false;
    double final_v_delta = 0.0;
    int writes_issued = 0;
    std::vector<double> error_trace;
    std::vector<double> e_acc_trace;
    std::vector<double> v_delta_trace;
};

/// Whole-array outcome: per-cell reports (post-repair where repaired) plus
/// aggregate programming error and convergence statistics.
struct ArrayReport {
    ProgramMethod method = ProgramMethod::VIPI;
    int rows = 0;
    int cols = 0;
    std::vector<ProgramReport> cells;      // programmed cells, row-major
    std::vector<double> verified_weights;  // full grid, final read-back
    double e_tot = 0.0;            // sum |achieved - target| over programmed
    int programmed_count = 0;
    int converged_count = 0;
    double converged_fraction = 0.0;
    int repaired_count = 0;
    bool completed = true;         // false when the backend went away
    std::string abort_reason;
};

/// Mean of n_avg one-hot reads of column y under input e_x.
double read_weight(Backend& h, int x, int y, int n_avg);

/// Voltage-incremental PI loop: duration from the PI law, amplitude raised
/// every n_c iterations until the cell responds.
ProgramReport vipi_program_cell(Backend& h, int x, int y, double target,
                                const VipiConfig& cfg);

/// Baseline: identical loop with the amplitude pinned at v_delta_init.
ProgramReport pi_program_cell(Backend& h, int x, int y, double target,
                              const VipiConfig& cfg);

/// Program every selected cell row-major, verify the whole grid, re-program
/// selected cells whose verified error exceeds epsilon once (highest-voltage
/// repairs first, so their disturb gets cleaned up by the cheap ones), then
/// verify again for the aggregate. An empty mask selects every cell; masked
/// runs leave unselected hardware completely untouched.
ArrayReport program_array(Backend& h, const std::vector<double>& targets,
                          const VipiConfig& cfg, ProgramMethod method,
                          const std::vector<bool>& mask = {});

const char* method_name(ProgramMethod method);

std::string program_report_json(const ProgramReport& report);
std::string array_report_json(const ArrayReport& report);

/// error_trace as a two-column CSV (iteration, error) for plotting.
std::string error_trace_csv(const ProgramReport& report);

}  // namespace mena
