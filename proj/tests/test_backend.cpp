#include <doctest.h>

#include <cmath>
#include <random>

#include "mena/backend.hpp"
#include "mena/errors.hpp"

using namespace mena;

namespace {

double q6(double v) { return std::round(v * 1e6) / 1e6; }

struct DeadTransport final : wire::Transport {
    bool read_line(std::string&) override { return false; }
    bool write_line(std::string_view) override { return false; }
};

}  // namespace

TEST_SUITE_BEGIN("backend");

TEST_CASE("zero input reads zero on a noise-free device") {
    CrossbarModel model(8, 8, ideal_variability(), 1);
    DirectBackend h(model);
    const std::vector<double> zeros(8, 0.0);
    for (double v : h.infer(zeros)) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("one-hot infer reads a row of weights") {
    CrossbarModel model(8, 8, ideal_variability(), 2);
    DirectBackend h(model);
    std::vector<double> x(8, 0.0);
    x[5] = 1.0;
    const auto out = h.infer(x);
    for (int y = 0; y < 8; ++y) {
        CHECK(out[static_cast<std::size_t>(y)] ==
              doctest::Approx(model.cell(5, y).weight).epsilon(1e-9));
    }
}

TEST_CASE("direct and protocol backends agree within wire rounding") {
    CrossbarModel direct_model(8, 8, VariabilitySpec{}, 33);
    CrossbarModel served_model(8, 8, VariabilitySpec{}, 33);
    DirectBackend direct(direct_model);
    auto protocol = make_local_protocol_backend(served_model);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> coord(0, 7);

    for (int rep = 0; rep < 300; ++rep) {
        if (unit(rng) < 0.5) {
            // wire-grid values so both sides apply identical pulses
            const double c = q6(unit(rng) * 6.0 - 3.0);
            const double v = q6(unit(rng) * 0.45);
            const int x = coord(rng), y = coord(rng);
            direct.write_weight(x, y, c, v);
            protocol->write_weight(x, y, c, v);
        } else {
            std::vector<double> x(8);
            for (auto& v : x) v = q6(unit(rng));
            const auto a = direct.infer(x);
            const auto b = protocol->infer(x);
            REQUIRE(a.size() == b.size());
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(std::fabs(a[i] - b[i]) <= 1e-5);
            }
        }
    }
}

TEST_CASE("write then read reflects the device update law") {
    CrossbarModel model(8, 8, ideal_variability(), 5);
    DirectBackend h(model);
    const MemristorCell before = model.cell(3, 6);
    const double c_pulse = 1.5;
    const double v_delta = 0.2;
    h.write_weight(3, 6, c_pulse, v_delta);
    const MemristorCell expected = apply_pulse(before, v_delta, c_pulse);

    std::vector<double> x(8, 0.0);
    x[3] = 1.0;
    CHECK(h.infer(x)[6] == doctest::Approx(expected.weight).epsilon(1e-9));
}

TEST_CASE("subthreshold write leaves the readout unchanged") {
    CrossbarModel model(8, 8, ideal_variability(), 6);
    DirectBackend h(model);
    std::vector<double> x(8, 0.0);
    x[2] = 1.0;
    const auto before = h.infer(x);
    h.write_weight(2, 2, 4.0, model.cell(2, 2).v_th);  // |V| <= v_th
    CHECK(h.infer(x) == before);
}

TEST_CASE("coordinate and input validation") {
    CrossbarModel model(8, 8, VariabilitySpec{}, 8);
    DirectBackend h(model);
    CHECK_THROWS_AS(h.write_weight(9, 0, 1.0, 0.1), RangeError);
    CHECK_THROWS_AS(h.write_weight(0, 8, 1.0, 0.1), RangeError);
    CHECK_THROWS_AS(h.write_weight(0, 0, 1.0, -0.1), RangeError);
    std::vector<double> bad(8, 0.0);
    bad[1] = 2.0;
    CHECK_THROWS_AS(h.infer(bad), RangeError);
    std::vector<double> short_input(3, 0.0);
    CHECK_THROWS_AS(h.infer(short_input), DimensionError);
}

TEST_CASE("handle construction enforces the subthreshold read scale") {
    CrossbarModel model(8, 8, VariabilitySpec{}, 9);
    CHECK_THROWS_AS(DirectBackend(model, 0.07), ConfigError);
    CHECK_THROWS_AS(DirectBackend(model, 0.0), ConfigError);
    DirectBackend ok(model, 0.05);
    CHECK(ok.v_read_max() == 0.05);
    CHECK(ok.kind() == BackendKind::DIRECT);
}

TEST_CASE("inference never perturbs the persisted map") {
    CrossbarModel model(8, 8, VariabilitySpec{}, 10);
    DirectBackend h(model);
    const auto map_before = model.weight_grid();
    std::vector<double> x(8, 0.4);
    for (int rep = 0; rep < 200; ++rep) h.infer(x);
    CHECK(model.weight_grid() == map_before);
}

TEST_CASE("lost transport surfaces as backend-unavailable") {
    ProtocolBackend h(std::make_unique<DeadTransport>(), 8, 8);
    std::vector<double> x(8, 0.0);
    CHECK_THROWS_AS(h.infer(x), BackendUnavailableError);
    CHECK_THROWS_AS(h.write_weight(0, 0, 1.0, 0.1), BackendUnavailableError);
}

TEST_SUITE_END();
