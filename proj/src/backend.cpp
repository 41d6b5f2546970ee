#include "mena/backend.hpp"

#include <string>

#include "mena/errors.hpp"

namespace mena {

Backend::Backend(BackendKind kind, int rows, int cols, double v_read_max)
    : kind_(kind), rows_(rows), cols_(cols), v_read_max_(v_read_max) {
    if (rows < 1 || cols < 1) {
        throw ConfigError("backend dimensions must be >= 1");
    }
    if (v_read_max <= 0.0 || v_read_max > kMinSwitchingThreshold) {
        throw ConfigError(
            "v_read_max must lie in (0, 0.06] so inference can never write");
    }
}

std::vector<double> Backend::infer(std::span<const double> x_norm) {
    if (static_cast<int>(x_norm.size()) != rows_) {
        throw DimensionError("infer input has " +
                             std::to_string(x_norm.size()) +
                             " lanes, backend has " + std::to_string(rows_) +
                             " rows");
    }
    for (double v : x_norm) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw RangeError("infer input component outside [0,1]");
        }
    }
    return do_infer(x_norm);
}

void Backend::write_weight(int x, int y, double c_pulse_ms, double v_delta) {
    if (x < 0 || x >= rows_ || y < 0 || y >= cols_) {
        throw RangeError("write coordinates out of range: (" +
                         std::to_string(x) + "," + std::to_string(y) + ")");
    }
    if (v_delta < 0.0) {
        throw RangeError("v_delta must be >= 0");
    }
    do_write(x, y, c_pulse_ms, v_delta);
}

DirectBackend::DirectBackend(CrossbarModel& model, double v_read_max)
    : Backend(BackendKind::DIRECT, model.rows(), model.cols(), v_read_max),
      model_(model) {}

std::vector<double> DirectBackend::do_infer(std::span<const double> x_norm) {
    // The device read path is defined on normalized amplitudes; the
    // v_read_max scale and its inverse cancel exactly.
    return model_.read_mac(x_norm);
}

void DirectBackend::do_write(int x, int y, double c_pulse_ms, double v_delta) {
    model_.write_pulse(PulseCommand{x, y, c_pulse_ms, v_delta});
}

ProtocolBackend::ProtocolBackend(std::unique_ptr<wire::Transport> transport,
                                 int rows, int cols, double v_read_max)
    : Backend(BackendKind::PROTOCOL, rows, cols, v_read_max),
      transport_(std::move(transport)) {
    if (!transport_) {
        throw ConfigError("protocol backend requires a transport");
    }
}

wire::Response ProtocolBackend::roundtrip(const wire::Command& cmd) {
    if (!transport_->write_line(wire::encode_command(cmd))) {
        throw BackendUnavailableError("transport closed while sending");
    }
    std::string line;
    if (!transport_->read_line(line)) {
        throw BackendUnavailableError("transport closed while waiting");
    }
    wire::Response resp;
    if (!wire::try_parse_response(line, cols(), resp)) {
        throw BackendUnavailableError("unparseable response: " + line);
    }
    if (const auto* err = std::get_if<wire::ErrResp>(&resp)) {
        switch (err->code) {
            case wire::ErrCode::DIM:
                throw DimensionError(err->detail);
            case wire::ErrCode::RANGE:
                throw RangeError(err->detail);
            case wire::ErrCode::PARSE:
            case wire::ErrCode::STATE:
                throw BackendUnavailableError("firmware error: " +
                                              err->detail);
        }
    }
    return resp;
}

std::vector<double> ProtocolBackend::do_infer(std::span<const double> x_norm) {
    wire::InferCmd cmd;
    cmd.values.assign(x_norm.begin(), x_norm.end());
    wire::Response resp = roundtrip(wire::Command{std::move(cmd)});
    auto* out = std::get_if<wire::OutResp>(&resp);
    if (!out || static_cast<int>(out->values.size()) != cols()) {
        throw BackendUnavailableError("expected OUT response to INFER");
    }
    return std::move(out->values);
}

void ProtocolBackend::do_write(int x, int y, double c_pulse_ms,
                               double v_delta) {
    wire::Response resp = roundtrip(
        wire::Command{wire::WriteCmd{x, y, c_pulse_ms, v_delta}});
    if (!std::holds_alternative<wire::AckResp>(resp)) {
        throw BackendUnavailableError("expected ACK response to WRITE");
    }
}

std::unique_ptr<ProtocolBackend> make_local_protocol_backend(
    CrossbarModel& model) {
    return std::make_unique<ProtocolBackend>(
        std::make_unique<wire::LocalPipeTransport>(model), model.rows(),
        model.cols());
}

}  // namespace mena
