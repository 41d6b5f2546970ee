#pragma once

#include <memory>
#include <span>
#include <vector>

#include "mena/device_sim.hpp"
#include "mena/wire_protocol.hpp"

namespace mena {

enum class BackendKind { DIRECT, PROTOCOL };

/// Uniform inference/write handle over a crossbar. Controllers live entirely
/// in normalized weight units; the read-voltage scale and its inverse cancel
/// inside, and the handle only enforces that the scale stays subthreshold.
class Backend {
public:
    virtual ~Backend() = default;

    BackendKind kind() const { return kind_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double v_read_max() const { return v_read_max_; }

    /// MAC readout for a normalized input vector.
    std::vector<double> infer(std::span<const double> x_norm);

    /// One half-select pulse episode at (x, y).
    void write_weight(int x, int y, double c_pulse_ms, double v_delta);

protected:
    Backend(BackendKind kind, int rows, int cols, double v_read_max);

    virtual std::vector<double> do_infer(std::span<const double> x_norm) = 0;
    virtual void do_write(int x, int y, double c_pulse_ms, double v_delta) = 0;

private:
    BackendKind kind_;
    int rows_;
    int cols_;
    double v_read_max_;
};

/// Calls straight into the simulator.
class DirectBackend final : public Backend {
public:
    explicit DirectBackend(CrossbarModel& model, double v_read_max = kReadVoltageMax);

    CrossbarModel& model() { return model_; }

protected:
    std::vector<double> do_infer(std::span<const double> x_norm) override;
    void do_write(int x, int y, double c_pulse_ms, double v_delta) override;

private:
    CrossbarModel& model_;
};

/// Talks to a firmware endpoint over a line transport (in-process pipe or
/// TCP). Transport loss surfaces as BackendUnavailableError.
class ProtocolBackend final : public Backend {
public:
    ProtocolBackend(std::unique_ptr<wire::Transport> transport, int rows,
                    int cols, double v_read_max = kReadVoltageMax);

protected:
    std::vector<double> do_infer(std::span<const double> x_norm) override;
    void do_write(int x, int y, double c_pulse_ms, double v_delta) override;

private:
    wire::Response roundtrip(const wire::Command& cmd);

    std::unique_ptr<wire::Transport> transport_;
};

/// Protocol backend over an in-process pipe bound to `model`.
std::unique_ptr<ProtocolBackend> make_local_protocol_backend(
    CrossbarModel& model);

}  // namespace mena
