#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <thread>
#include <variant>

#include "mena/device_sim.hpp"
#include "mena/errors.hpp"
#include "mena/wire_protocol.hpp"

using namespace mena;
using namespace mena::wire;

namespace {

Command random_command(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, 3);
    std::uniform_int_distribution<int> coord(0, 7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> pulse(-8.0, 8.0);
    std::uniform_real_distribution<double> volt(0.0, 0.5);
    switch (pick(rng)) {
        case 0: {
            InferCmd cmd;
            for (int i = 0; i < 8; ++i) cmd.values.push_back(unit(rng));
            return cmd;
        }
        case 1:
            return WriteCmd{coord(rng), coord(rng), pulse(rng), volt(rng)};
        case 2:
            return ResetCmd{};
        default:
            return PingCmd{};
    }
}

/// Round a command onto the 6-decimal wire grid.
Command wire_quantize(const Command& cmd) {
    const ParseResult r = parse_command(encode_command(cmd), 8, 8);
    REQUIRE(std::holds_alternative<Command>(r));
    return std::get<Command>(r);
}

}  // namespace

TEST_SUITE_BEGIN("wire_protocol");

TEST_CASE("fixed encodings") {
    CHECK(encode_command(PingCmd{}) == "PING\n");
    CHECK(encode_command(ResetCmd{}) == "RESET\n");
    CHECK(encode_command(WriteCmd{2, 3, -0.5, 0.08}) ==
          "WRITE 2 3 -0.500000 0.080000\n");
    InferCmd zeros;
    zeros.values.assign(8, 0.0);
    CHECK(encode_command(zeros) ==
          "INFER 0.000000 0.000000 0.000000 0.000000 0.000000 0.000000 "
          "0.000000 0.000000\n");
}

TEST_CASE("basic parses") {
    auto r = parse_command("PING", 8, 8);
    CHECK(std::holds_alternative<Command>(r));
    CHECK(std::holds_alternative<PingCmd>(std::get<Command>(r)));

    r = parse_command("WRITE 2 3 -0.5 0.08", 8, 8);
    REQUIRE(std::holds_alternative<Command>(r));
    const auto w = std::get<WriteCmd>(std::get<Command>(r));
    CHECK(w.x == 2);
    CHECK(w.y == 3);
    CHECK(w.c_pulse_ms == doctest::Approx(-0.5));
    CHECK(w.v_delta == doctest::Approx(0.08));

    // interior whitespace is tolerated
    r = parse_command("  WRITE   2\t3   -0.5    0.08 \r\n", 8, 8);
    CHECK(std::holds_alternative<Command>(r));
}

TEST_CASE("arity and range rejections") {
    auto r = parse_command("INFER 0.1 0.2", 8, 8);
    REQUIRE(std::holds_alternative<ParseError>(r));
    CHECK(std::get<ParseError>(r).code == ErrCode::DIM);

    r = parse_command("INFER 0.1 0.2 0.3 0.4 0.5 0.6 0.7 1.5", 8, 8);
    REQUIRE(std::holds_alternative<ParseError>(r));
    CHECK(std::get<ParseError>(r).code == ErrCode::RANGE);

    r = parse_command("WRITE 9 0 1.0 0.1", 8, 8);
    REQUIRE(std::holds_alternative<ParseError>(r));
    CHECK(std::get<ParseError>(r).code == ErrCode::RANGE);

    r = parse_command("WRITE 1 1 abc 0.1", 8, 8);
    REQUIRE(std::holds_alternative<ParseError>(r));
    CHECK(std::get<ParseError>(r).code == ErrCode::PARSE);

    r = parse_command("WRITE 1 1 nan 0.1", 8, 8);
    REQUIRE(std::holds_alternative<ParseError>(r));
    CHECK(std::get<ParseError>(r).code == ErrCode::RANGE);

    r = parse_command("FROB 1 2", 8, 8);
    REQUIRE(std::holds_alternative<ParseError>(r));
    CHECK(std::get<ParseError>(r).code == ErrCode::PARSE);

    r = parse_command("", 8, 8);
    CHECK(std::holds_alternative<ParseError>(r));
}

TEST_CASE("round-trip over generated commands") {
    std::mt19937_64 rng(2024);
    for (int rep = 0; rep < 10000; ++rep) {
        const Command cmd = wire_quantize(random_command(rng));
        const ParseResult r = parse_command(encode_command(cmd), 8, 8);
        REQUIRE(std::holds_alternative<Command>(r));
        CHECK(std::get<Command>(r) == cmd);
    }
}

TEST_CASE("parser survives arbitrary byte fuzz") {
    std::mt19937_64 rng(555);
    std::uniform_int_distribution<int> len(0, 4096);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int rep = 0; rep < 10000; ++rep) {
        std::string line;
        const int n = len(rng);
        line.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            line.push_back(static_cast<char>(byte(rng)));
        }
        const ParseResult r = parse_command(line, 8, 8);
        // Random bytes essentially never form a valid command; what matters
        // is that they never crash and always produce a typed outcome.
        CHECK((std::holds_alternative<Command>(r) ||
               std::holds_alternative<ParseError>(r)));
    }
}

TEST_CASE("session answers one line per line and recovers from garbage") {
    CrossbarModel model(8, 8, VariabilitySpec{}, 4);
    FirmwareSession session(model);
    CHECK(session.handle_line("PING\n") == "PONG\n");
    CHECK(session.handle_line("\x7f\x02 garbage").rfind("ERR PARSE", 0) == 0);
    CHECK(session.handle_line("PING\n") == "PONG\n");
    CHECK(session.handle_line("WRITE 0 0 1.0 0.1\n") == "ACK\n");
    CHECK(session.handle_line("RESET\n") == "ACK\n");
    const std::string out = session.handle_line(
        "INFER 0 0 0 0 0 0 0 0\n");
    CHECK(out.rfind("OUT ", 0) == 0);
}

TEST_CASE("serve matches direct device calls on twin models") {
    // One model behind a served pipe, one driven directly; identical seeds.
    CrossbarModel served_model(8, 8, VariabilitySpec{}, 91);
    CrossbarModel direct_model(8, 8, VariabilitySpec{}, 91);
    LocalPipeTransport pipe(served_model);

    std::mt19937_64 rng(18);
    for (int rep = 0; rep < 400; ++rep) {
        const Command cmd = wire_quantize(random_command(rng));
        REQUIRE(pipe.write_line(encode_command(cmd)));
        std::string line;
        REQUIRE(pipe.read_line(line));
        Response resp;
        REQUIRE(try_parse_response(line, 8, resp));

        if (const auto* infer = std::get_if<InferCmd>(&cmd)) {
            const auto direct = direct_model.read_mac(infer->values);
            const auto& out = std::get<OutResp>(resp);
            REQUIRE(out.values.size() == direct.size());
            for (std::size_t i = 0; i < direct.size(); ++i) {
                CHECK(std::fabs(out.values[i] - direct[i]) <= 5e-7);
            }
        } else if (const auto* write = std::get_if<WriteCmd>(&cmd)) {
            direct_model.write_pulse(PulseCommand{
                write->x, write->y, write->c_pulse_ms, write->v_delta});
            CHECK(std::holds_alternative<AckResp>(resp));
        } else if (std::holds_alternative<ResetCmd>(cmd)) {
            direct_model.reset();
            CHECK(std::holds_alternative<AckResp>(resp));
        } else {
            CHECK(std::holds_alternative<PongResp>(resp));
        }
    }
}

TEST_CASE("responses stay ordered one-to-one with commands") {
    CrossbarModel model(8, 8, VariabilitySpec{}, 6);
    LocalPipeTransport pipe(model);
    const std::vector<std::string> script = {
        "PING\n", "WRITE 0 0 1.0 0.05\n", "bogus\n", "PING\n", "RESET\n"};
    for (const auto& line : script) pipe.write_line(line);
    std::string out;
    REQUIRE(pipe.read_line(out));
    CHECK(out == "PONG\n");
    REQUIRE(pipe.read_line(out));
    CHECK(out == "ACK\n");
    REQUIRE(pipe.read_line(out));
    CHECK(out.rfind("ERR PARSE", 0) == 0);
    REQUIRE(pipe.read_line(out));
    CHECK(out == "PONG\n");
    REQUIRE(pipe.read_line(out));
    CHECK(out == "ACK\n");
    CHECK_FALSE(pipe.read_line(out));
}

TEST_CASE("tcp transport carries a full session") {
    CrossbarModel model(8, 8, VariabilitySpec{}, 12);
    TcpListener listener("127.0.0.1", 0);
    const int port = listener.port();

    std::thread server([&] {
        auto transport = listener.accept();
        serve(model, *transport);
    });

    auto client = tcp_connect("127.0.0.1", port);
    REQUIRE(client->write_line("PING\n"));
    std::string line;
    REQUIRE(client->read_line(line));
    CHECK(line == "PONG\n");
    REQUIRE(client->write_line("INFER 0 0 0 0 0 0 0 0\n"));
    REQUIRE(client->read_line(line));
    CHECK(line.rfind("OUT ", 0) == 0);
    client.reset();  // closing the stream ends serve()
    server.join();
}

TEST_SUITE_END();
