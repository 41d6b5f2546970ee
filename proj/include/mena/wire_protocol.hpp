#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mena/device_sim.hpp"

namespace mena::wire {

// Host -> firmware commands. One ASCII line each.
struct InferCmd {
    std::vector<double> values;  // exactly `rows` lanes
    bool operator==(const InferCmd&) const = default;
};
struct WriteCmd {
    int x = 0;
    int y = 0;
    double c_pulse_ms = 0.0;
    double v_delta = 0.0;
    bool operator==(const WriteCmd&) const = default;
};
struct ResetCmd {
    bool operator==(const ResetCmd&) const = default;
};
struct PingCmd {
    bool operator==(const PingCmd&) const = default;
};
using Command = std::variant<InferCmd, WriteCmd, ResetCmd, PingCmd>;

enum class ErrCode { PARSE, RANGE, DIM, STATE };

const char* err_code_name(ErrCode code);

// Firmware -> host responses, also one line each.
struct OutResp {
    std::vector<double> values;  // exactly `cols` lanes
};
struct AckResp {};
struct PongResp {};
struct ErrResp {
    ErrCode code = ErrCode::PARSE;
    std::string detail;
};
using Response = std::variant<OutResp, AckResp, PongResp, ErrResp>;

struct ParseError {
    ErrCode code = ErrCode::PARSE;
    std::string detail;
};
using ParseResult = std::variant<Command, ParseError>;

/// Render a command as its wire line (trailing '\n' included).
/// Grammar: `INFER v0 .. v7`, `WRITE x y c_pulse v_delta`, `RESET`, `PING`;
/// numeric fields carry 6 decimal places.
std::string encode_command(const Command& cmd);

std::string encode_response(const Response& resp);

/// Total over arbitrary bytes; never throws on malformed input. Tolerates
/// repeated interior whitespace and a trailing CR. Grid dimensions bound the
/// INFER arity and WRITE coordinates.
ParseResult parse_command(std::string_view line, int rows, int cols);

/// Client-side decode of a response line. Returns false on malformed input.
bool try_parse_response(std::string_view line, int cols, Response& out);

/// Reliable ordered byte-stream endpoint carrying one line per message.
class Transport {
public:
    virtual ~Transport() = default;
    virtual bool read_line(std::string& line) = 0;          // false on close
    virtual bool write_line(std::string_view line) = 0;     // false on close
};

/// The simulated firmware: owns the model, answers one line per line.
/// Malformed traffic gets an ERR response and the session continues.
class FirmwareSession {
public:
    explicit FirmwareSession(CrossbarModel& model) : model_(model) {}

    Response handle(const Command& cmd);
    std::string handle_line(std::string_view line);

private:
    CrossbarModel& model_;
};

/// Request/response loop bound to a model; runs until the stream closes.
void serve(CrossbarModel& model, Transport& transport);

/// In-process pipe: each written command line is serviced synchronously by
/// an embedded firmware session, and the response becomes readable. Default
/// transport when no TCP endpoint is configured.
class LocalPipeTransport final : public Transport {
public:
    explicit LocalPipeTransport(CrossbarModel& model) : session_(model) {}

    bool read_line(std::string& line) override;
    bool write_line(std::string_view line) override;

private:
    FirmwareSession session_;
    std::vector<std::string> pending_;
};

/// Line transport over iostreams (serial-port style stdio sessions).
class StreamTransport final : public Transport {
public:
    StreamTransport(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

    bool read_line(std::string& line) override;
    bool write_line(std::string_view line) override;

private:
    std::istream& in_;
    std::ostream& out_;
};

/// Listening TCP endpoint (loopback lab use; no auth, no framing).
class TcpListener {
public:
    TcpListener(const std::string& host, int port);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    int port() const { return port_; }
    std::unique_ptr<Transport> accept();

private:
    int fd_ = -1;
    int port_ = 0;
};

std::unique_ptr<Transport> tcp_connect(const std::string& host, int port);

}  // namespace mena::wire
