#include "mena/wire_protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <istream>
#include <ostream>

#include "mena/errors.hpp"

namespace mena::wire {

namespace {

void append_fixed6(std::string& out, double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    out += buf;
}

std::vector<std::string_view> tokenize(std::string_view line) {
    std::vector<std::string_view> toks;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        if (i > start) toks.push_back(line.substr(start, i - start));
    }
    return toks;
}

bool parse_double(std::string_view tok, double& out) {
    char buf[64];
    if (tok.empty() || tok.size() >= sizeof(buf)) return false;
    std::memcpy(buf, tok.data(), tok.size());
    buf[tok.size()] = '\0';
    char* end = nullptr;
    out = std::strtod(buf, &end);
    return end == buf + tok.size();
}

bool parse_int(std::string_view tok, int& out) {
    char buf[32];
    if (tok.empty() || tok.size() >= sizeof(buf)) return false;
    std::memcpy(buf, tok.data(), tok.size());
    buf[tok.size()] = '\0';
    char* end = nullptr;
    long v = std::strtol(buf, &end, 10);
    if (end != buf + tok.size()) return false;
    if (v < -1000000 || v > 1000000) return false;
    out = static_cast<int>(v);
    return true;
}

std::string_view strip_eol(std::string_view line) {
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) {
        line.remove_suffix(1);
    }
    return line;
}

}  // namespace

const char* err_code_name(ErrCode code) {
    switch (code) {
        case ErrCode::PARSE: return "PARSE";
        case ErrCode::RANGE: return "RANGE";
        case ErrCode::DIM: return "DIM";
        case ErrCode::STATE: return "STATE";
    }
    return "PARSE";
}

std::string encode_command(const Command& cmd) {
    std::string line;
    if (const auto* infer = std::get_if<InferCmd>(&cmd)) {
        line = "INFER";
        for (double v : infer->values) {
            line += ' ';
            append_fixed6(line, v);
        }
    } else if (const auto* write = std::get_if<WriteCmd>(&cmd)) {
        line = "WRITE " + std::to_string(write->x) + ' ' +
               std::to_string(write->y) + ' ';
        append_fixed6(line, write->c_pulse_ms);
        line += ' ';
        append_fixed6(line, write->v_delta);
    } else if (std::holds_alternative<ResetCmd>(cmd)) {
        line = "RESET";
    } else {
        line = "PING";
    }
    line += '\n';
    return line;
}

std::string encode_response(const Response& resp) {
    std::string line;
    if (const auto* out = std::get_if<OutResp>(&resp)) {
        line = "OUT";
        for (double v : out->values) {
            line += ' ';
            append_fixed6(line, v);
        }
    } else if (std::holds_alternative<AckResp>(resp)) {
        line = "ACK";
    } else if (std::holds_alternative<PongResp>(resp)) {
        line = "PONG";
    } else {
        const auto& err = std::get<ErrResp>(resp);
        line = std::string("ERR ") + err_code_name(err.code);
        if (!err.detail.empty()) {
            line += ' ';
            line += err.detail;
        }
    }
    line += '\n';
    return line;
}

ParseResult parse_command(std::string_view line, int rows, int cols) {
    const auto toks = tokenize(strip_eol(line));
    if (toks.empty()) {
        return ParseError{ErrCode::PARSE, "empty line"};
    }
    const std::string_view verb = toks[0];

    if (verb == "PING") {
        if (toks.size() != 1) {
            return ParseError{ErrCode::PARSE, "PING takes no arguments"};
        }
        return Command{PingCmd{}};
    }
    if (verb == "RESET") {
        if (toks.size() != 1) {
            return ParseError{ErrCode::PARSE, "RESET takes no arguments"};
        }
        return Command{ResetCmd{}};
    }
    if (verb == "INFER") {
        if (toks.size() != static_cast<std::size_t>(rows) + 1) {
            return ParseError{ErrCode::DIM,
                              "INFER expects " + std::to_string(rows) +
                                  " values, got " +
                                  std::to_string(toks.size() - 1)};
        }
        InferCmd cmd;
        cmd.values.reserve(static_cast<std::size_t>(rows));
        for (std::size_t i = 1; i < toks.size(); ++i) {
            double v = 0.0;
            if (!parse_double(toks[i], v)) {
                return ParseError{ErrCode::PARSE, "bad numeric field"};
            }
            if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                return ParseError{ErrCode::RANGE,
                                  "INFER value outside [0,1]"};
            }
            cmd.values.push_back(v);
        }
        return Command{std::move(cmd)};
    }
    if (verb == "WRITE") {
        if (toks.size() != 5) {
            return ParseError{ErrCode::PARSE,
                              "WRITE expects x y c_pulse v_delta"};
        }
        WriteCmd cmd;
        if (!parse_int(toks[1], cmd.x) || !parse_int(toks[2], cmd.y)) {
            return ParseError{ErrCode::PARSE, "bad coordinate field"};
        }
        if (cmd.x < 0 || cmd.x >= rows || cmd.y < 0 || cmd.y >= cols) {
            return ParseError{ErrCode::RANGE, "coordinates outside grid"};
        }
        if (!parse_double(toks[3], cmd.c_pulse_ms) ||
            !parse_double(toks[4], cmd.v_delta)) {
            return ParseError{ErrCode::PARSE, "bad numeric field"};
        }
        if (!std::isfinite(cmd.c_pulse_ms) || !std::isfinite(cmd.v_delta) ||
            cmd.v_delta < 0.0) {
            return ParseError{ErrCode::RANGE, "pulse parameters out of range"};
        }
        return Command{cmd};
    }
    return ParseError{ErrCode::PARSE, "unknown command"};
}

bool try_parse_response(std::string_view line, int cols, Response& out) {
    const auto toks = tokenize(strip_eol(line));
    if (toks.empty()) return false;
    const std::string_view verb = toks[0];
    if (verb == "ACK" && toks.size() == 1) {
        out = AckResp{};
        return true;
    }
    if (verb == "PONG" && toks.size() == 1) {
        out = PongResp{};
        return true;
    }
    if (verb == "OUT") {
        if (toks.size() != static_cast<std::size_t>(cols) + 1) return false;
        OutResp resp;
        for (std::size_t i = 1; i < toks.size(); ++i) {
            double v = 0.0;
            if (!parse_double(toks[i], v) || !std::isfinite(v)) return false;
            resp.values.push_back(v);
        }
        out = std::move(resp);
        return true;
    }
    if (verb == "ERR" && toks.size() >= 2) {
        ErrResp resp;
        const std::string_view code = toks[1];
        if (code == "PARSE") resp.code = ErrCode::PARSE;
        else if (code == "RANGE") resp.code = ErrCode::RANGE;
        else if (code == "DIM") resp.code = ErrCode::DIM;
        else if (code == "STATE") resp.code = ErrCode::STATE;
        else return false;
        for (std::size_t i = 2; i < toks.size(); ++i) {
            if (i > 2) resp.detail += ' ';
            resp.detail += std::string(toks[i]);
        }
        out = std::move(resp);
        return true;
    }
    return false;
}

Response FirmwareSession::handle(const Command& cmd) {
    try {
        if (const auto* infer = std::get_if<InferCmd>(&cmd)) {
            OutResp out;
            out.values = model_.read_mac(infer->values);
            return out;
        }
        if (const auto* write = std::get_if<WriteCmd>(&cmd)) {
            model_.write_pulse(PulseCommand{write->x, write->y,
                                            write->c_pulse_ms,
                                            write->v_delta});
            return AckResp{};
        }
        if (std::holds_alternative<ResetCmd>(cmd)) {
            model_.reset();
            return AckResp{};
        }
        return PongResp{};
    } catch (const DimensionError& e) {
        return ErrResp{ErrCode::DIM, e.what()};
    } catch (const RangeError& e) {
        return ErrResp{ErrCode::RANGE, e.what()};
    } catch (const ProtocolError& e) {
        return ErrResp{ErrCode::RANGE, e.what()};
    } catch (const std::exception& e) {
        return ErrResp{ErrCode::STATE, e.what()};
    }
}

std::string FirmwareSession::handle_line(std::string_view line) {
    const ParseResult parsed =
        parse_command(line, model_.rows(), model_.cols());
    if (const auto* err = std::get_if<ParseError>(&parsed)) {
        return encode_response(ErrResp{err->code, err->detail});
    }
    return encode_response(handle(std::get<Command>(parsed)));
}

void serve(CrossbarModel& model, Transport& transport) {
    FirmwareSession session(model);
    std::string line;
    while (transport.read_line(line)) {
        if (!transport.write_line(session.handle_line(line))) break;
    }
}

bool LocalPipeTransport::write_line(std::string_view line) {
    pending_.push_back(session_.handle_line(line));
    return true;
}

bool LocalPipeTransport::read_line(std::string& line) {
    if (pending_.empty()) return false;
    line = std::move(pending_.front());
    pending_.erase(pending_.begin());
    return true;
}

bool StreamTransport::read_line(std::string& line) {
    if (!std::getline(in_, line)) return false;
    line += '\n';
    return true;
}

bool StreamTransport::write_line(std::string_view line) {
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    return static_cast<bool>(out_);
}

// ---------------------------------------------------------------------------
// TCP transport
// ---------------------------------------------------------------------------

namespace {

/// Line framing over a socket fd. Owns the descriptor.
class FdTransport final : public Transport {
public:
    explicit FdTransport(int fd) : fd_(fd) {}
    ~FdTransport() override {
        if (fd_ >= 0) ::close(fd_);
    }

    bool read_line(std::string& line) override {
        line.clear();
        while (true) {
            auto nl = buf_.find('\n');
            if (nl != std::string::npos) {
                line.assign(buf_, 0, nl + 1);
                buf_.erase(0, nl + 1);
                return true;
            }
            char chunk[512];
            ssize_t n = ::read(fd_, chunk, sizeof(chunk));
            if (n <= 0) {
                if (!buf_.empty()) {  // final unterminated line
                    line.swap(buf_);
                    return true;
                }
                return false;
            }
            buf_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    bool write_line(std::string_view line) override {
        std::size_t sent = 0;
        while (sent < line.size()) {
            ssize_t n = ::write(fd_, line.data() + sent, line.size() - sent);
            if (n <= 0) return false;
            sent += static_cast<std::size_t>(n);
        }
        return true;
    }

private:
    int fd_;
    std::string buf_;
};

sockaddr_in resolve(const std::string& host, int port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (host.empty() || host == "localhost") {
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw BackendUnavailableError("cannot resolve host " + host);
    }
    return addr;
}

}  // namespace

TcpListener::TcpListener(const std::string& host, int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw BackendUnavailableError("socket() failed");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = resolve(host, port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(fd_, 1) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw BackendUnavailableError("cannot listen on " + host + ":" +
                                      std::to_string(port));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Transport> TcpListener::accept() {
    int client = ::accept(fd_, nullptr, nullptr);
    if (client < 0) {
        throw BackendUnavailableError("accept() failed: " +
                                      std::string(std::strerror(errno)));
    }
    return std::make_unique<FdTransport>(client);
}

std::unique_ptr<Transport> tcp_connect(const std::string& host, int port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw BackendUnavailableError("socket() failed");
    sockaddr_in addr = resolve(host, port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        throw BackendUnavailableError("cannot connect to " + host + ":" +
                                      std::to_string(port));
    }
    return std::make_unique<FdTransport>(fd);
}

}  // namespace mena::wire
