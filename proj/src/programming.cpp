#include "mena/programming.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "mena/errors.hpp"

namespace mena {

void validate(const VipiConfig& cfg) {
    if (cfg.k_p <= 0.0 || cfg.k_i <= 0.0 || cfg.epsilon <= 0.0 ||
        cfg.delta <= 0.0 || cfg.e_max <= 0.0 || cfg.v_delta_init <= 0.0 ||
        cfg.v_delta_max <= 0.0) {
        throw ConfigError("controller gains and tolerances must be positive");
    }
    if (cfg.n_c < 1 || cfg.n_iter < 1 || cfg.n_avg < 1) {
        throw ConfigError("controller counts must be >= 1");
    }
    if (cfg.v_delta_init > cfg.v_delta_max) {
        throw ConfigError("v_delta_init must not exceed v_delta_max");
    }
}

double read_weight(Backend& h, int x, int y, int n_avg) {
    if (n_avg < 1) {
        throw ConfigError("n_avg must be >= 1");
    }
    if (x < 0 || x >= h.rows() || y < 0 || y >= h.cols()) {
        throw RangeError("read_weight coordinates out of range");
    }
    std::vector<double> one_hot(static_cast<std::size_t>(h.rows()), 0.0);
    one_hot[static_cast<std::size_t>(x)] = 1.0;
    double sum = 0.0;
    for (int i = 0; i < n_avg; ++i) {
        sum += h.infer(one_hot)[static_cast<std::size_t>(y)];
    }
    return sum / n_avg;
}

namespace {

ProgramReport program_cell(Backend& h, int x, int y, double target,
                           const VipiConfig& cfg, bool increment_voltage) {
    validate(cfg);
    if (!(target >= 0.0 && target <= 1.0)) {
        throw RangeError("target weight outside [0,1]");
    }

    ProgramReport report;
    report.x = x;
    report.y = y;
    report.target = target;

    double e_acc = 0.0;
    double v_delta = cfg.v_delta_init;

    for (int i = 1; i <= cfg.n_iter; ++i) {
        const double phi = read_weight(h, x, y, cfg.n_avg);
        const double error = target - phi;
        report.error_trace.push_back(error);
        report.achieved = phi;
        report.iterations = i;
        if (std::fabs(error) < cfg.epsilon) {
            report.converged = true;
            break;
        }
        e_acc = std::clamp(e_acc + error, -cfg.e_max, cfg.e_max);
        const double c_pulse = cfg.k_p * error + cfg.k_i * e_acc;
        h.write_weight(x, y, c_pulse, v_delta);
        ++report.writes_issued;
        if (increment_voltage && i % cfg.n_c == 0) {
            v_delta = std::min(v_delta + cfg.delta, cfg.v_delta_max);
        }
        report.e_acc_trace.push_back(e_acc);
        report.v_delta_trace.push_back(v_delta);
    }
    report.final_v_delta = v_delta;
    return report;
}

}  // namespace

ProgramReport vipi_program_cell(Backend& h, int x, int y, double target,
                                const VipiConfig& cfg) {
    return program_cell(h, x, y, target, cfg, true);
}

ProgramReport pi_program_cell(Backend& h, int x, int y, double target,
                              const VipiConfig& cfg) {
    return program_cell(h, x, y, target, cfg, false);
}

ArrayReport program_array(Backend& h, const std::vector<double>& targets,
                          const VipiConfig& cfg, ProgramMethod method,
                          const std::vector<bool>& mask) {
    validate(cfg);
    const int rows = h.rows();
    const int cols = h.cols();
    const std::size_t n_cells = static_cast<std::size_t>(rows) * cols;
    if (targets.size() != n_cells) {
        throw DimensionError("targets grid must be rows*cols");
    }
    if (!mask.empty() && mask.size() != n_cells) {
        throw DimensionError("mask must be empty or rows*cols");
    }
    auto selected = [&](std::size_t idx) { return mask.empty() || mask[idx]; };
    for (std::size_t i = 0; i < n_cells; ++i) {
        if (selected(i) && !(targets[i] >= 0.0 && targets[i] <= 1.0)) {
            throw RangeError("target weight outside [0,1]");
        }
    }

    auto program_one = [&](int x, int y) {
        const double target = targets[static_cast<std::size_t>(x) * cols + y];
        return method == ProgramMethod::VIPI
                   ? vipi_program_cell(h, x, y, target, cfg)
                   : pi_program_cell(h, x, y, target, cfg);
    };

    ArrayReport report;
    report.method = method;
    report.rows = rows;
    report.cols = cols;
    // report index of each programmed cell, or -1
    std::vector<int> slot(n_cells, -1);
    try {
        for (int x = 0; x < rows; ++x) {
            for (int y = 0; y < cols; ++y) {
                const std::size_t idx = static_cast<std::size_t>(x) * cols + y;
                if (!selected(idx)) continue;
                slot[idx] = static_cast<int>(report.cells.size());
                report.cells.push_back(program_one(x, y));
            }
        }
        report.programmed_count = static_cast<int>(report.cells.size());

        // Verification pass: later writes may have disturbed earlier cells.
        std::vector<double> verified(n_cells, 0.0);
        for (int x = 0; x < rows; ++x) {
            for (int y = 0; y < cols; ++y) {
                verified[static_cast<std::size_t>(x) * cols + y] =
                    read_weight(h, x, y, cfg.n_avg);
            }
        }

        // One corrective pass over drifted cells. Cells that needed high
        // voltage go first: their writes are the ones that disturb, and the
        // low-voltage repairs afterwards cannot undo anything.
        std::vector<std::size_t> drifted;
        for (std::size_t idx = 0; idx < n_cells; ++idx) {
            if (selected(idx) &&
                std::fabs(verified[idx] - targets[idx]) > cfg.epsilon) {
                drifted.push_back(idx);
            }
        }
        std::stable_sort(drifted.begin(), drifted.end(),
                         [&](std::size_t a, std::size_t b) {
                             return report.cells[static_cast<std::size_t>(
                                        slot[a])].final_v_delta >
                                    report.cells[static_cast<std::size_t>(
                                        slot[b])].final_v_delta;
                         });
        for (std::size_t idx : drifted) {
            const int x = static_cast<int>(idx) / cols;
            const int y = static_cast<int>(idx) % cols;
            report.cells[static_cast<std::size_t>(slot[idx])] =
                program_one(x, y);
            ++report.repaired_count;
        }

        report.verified_weights.assign(n_cells, 0.0);
        report.e_tot = 0.0;
        for (int x = 0; x < rows; ++x) {
            for (int y = 0; y < cols; ++y) {
                const std::size_t idx = static_cast<std::size_t>(x) * cols + y;
                report.verified_weights[idx] = read_weight(h, x, y, cfg.n_avg);
                if (selected(idx)) {
                    report.e_tot +=
                        std::fabs(report.verified_weights[idx] - targets[idx]);
                }
            }
        }
    } catch (const BackendUnavailableError& e) {
        report.completed = false;
        report.abort_reason = e.what();
    }
    for (const auto& cell : report.cells) {
        if (cell.converged) ++report.converged_count;
    }
    report.converged_fraction =
        report.cells.empty()
            ? 0.0
            : static_cast<double>(report.converged_count) /
                  static_cast<double>(report.cells.size());
    return report;
}

const char* method_name(ProgramMethod method) {
    return method == ProgramMethod::VIPI ? "vipi" : "pi";
}

namespace {

nlohmann::ordered_json report_to_json(const ProgramReport& r) {
    nlohmann::ordered_json j;
    j["x"] = r.x;
    j["y"] = r.y;
    j["target"] = r.target;
    j["achieved"] = r.achieved;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["final_v_delta"] = r.final_v_delta;
    j["writes_issued"] = r.writes_issued;
    j["error_trace"] = r.error_trace;
    return j;
}

}  // namespace

std::string program_report_json(const ProgramReport& report) {
    return report_to_json(report).dump(2);
}

std::string array_report_json(const ArrayReport& report) {
    nlohmann::ordered_json j;
    j["method"] = method_name(report.method);
    j["rows"] = report.rows;
    j["cols"] = report.cols;
    j["e_tot"] = report.e_tot;
    j["programmed_count"] = report.programmed_count;
    j["converged_count"] = report.converged_count;
    j["converged_fraction"] = report.converged_fraction;
    j["repaired_count"] = report.repaired_count;
    j["completed"] = report.completed;
    if (!report.completed) j["abort_reason"] = report.abort_reason;
    j["verified_weights"] = report.verified_weights;
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const auto& c : report.cells) cells.push_back(report_to_json(c));
    j["cells"] = cells;
    return j.dump(2);
}

std::string error_trace_csv(const ProgramReport& report) {
    std::ostringstream os;
    os << "iteration,error\n";
    for (std::size_t i = 0; i < report.error_trace.size(); ++i) {
        os << (i + 1) << ',' << report.error_trace[i] << '\n';
    }
    return os.str();
}

}  // namespace mena
