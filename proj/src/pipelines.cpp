#include "mena/pipelines.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mena/random.hpp"

namespace mena {

std::uint64_t stage_seed(std::uint64_t base, SeedSalt salt) {
    return derive_seed(base, static_cast<std::uint64_t>(salt));
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

PcaProjection pca_fit(const Eigen::MatrixXd& data, int k) {
    const Eigen::Index n = data.rows();
    const Eigen::Index d = data.cols();
    if (k < 1 || k > d) throw ConfigError("pca: k must lie in [1, D]");
    if (n < k || n < 2) {
        throw DegenerateDataError("pca: need at least max(k, 2) samples");
    }
    if (!data.allFinite()) throw DegenerateDataError("pca: non-finite data");

    PcaProjection out;
    out.mean = data.colwise().mean();
    const Eigen::MatrixXd centered = data.rowwise() - out.mean;
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(n - 1);
    if (cov.trace() <= 1e-18) {
        throw DegenerateDataError("pca: data has no variance (identical rows)");
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw DegenerateDataError("pca: eigendecomposition failed");
    }
    // Eigen returns ascending eigenvalues; take the top k in descending order.
    out.basis.resize(d, k);
    out.eigenvalues.resize(k);
    for (int j = 0; j < k; ++j) {
        const Eigen::Index src = d - 1 - j;
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        // Fix the sign so the largest-magnitude component is positive.
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v(imax) < 0.0) v = -v;
        out.basis.col(j) = v;
        out.eigenvalues(j) = solver.eigenvalues()(src);
    }
    return out;
}

Eigen::MatrixXd pca_transform(const PcaProjection& pca,
                              const Eigen::MatrixXd& data) {
    if (data.cols() != pca.basis.rows()) {
        throw DimensionError("pca_transform: dimension mismatch");
    }
    return (data.rowwise() - pca.mean) * pca.basis;
}

std::pair<Eigen::MatrixXd, PcaProjection> pca_project(
    const Eigen::MatrixXd& data, int k) {
    PcaProjection pca = pca_fit(data, k);
    return {pca_transform(pca, data), std::move(pca)};
}

MinMaxScaler minmax_fit(const Eigen::MatrixXd& data) {
    if (data.size() == 0) throw DegenerateDataError("minmax: empty data");
    MinMaxScaler s;
    s.lo = data.minCoeff();
    s.hi = data.maxCoeff();
    if (!(s.hi > s.lo)) {
        throw DegenerateDataError("minmax: max equals min, cannot rescale");
    }
    return s;
}

Eigen::MatrixXd minmax_transform(const MinMaxScaler& scaler,
                                 const Eigen::MatrixXd& data, bool clip) {
    Eigen::MatrixXd out = (data.array() - scaler.lo) / (scaler.hi - scaler.lo);
    if (clip) out = out.cwiseMax(0.0).cwiseMin(1.0);
    return out;
}

std::pair<std::vector<int>, std::vector<int>> split_indices(
    int n, double train_fraction, std::uint64_t seed) {
    if (n < 2) throw DegenerateDataError("split: need at least 2 samples");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("split fraction must lie strictly between 0 and 1");
    }
    const auto n_train =
        static_cast<int>(std::llround(train_fraction * static_cast<double>(n)));
    if (n_train < 1 || n_train >= n) {
        throw DegenerateDataError("split leaves one side empty");
    }
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<int> train(idx.begin(), idx.begin() + n_train);
    std::vector<int> test(idx.begin() + n_train, idx.end());
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Digits data
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_csv_number(const std::string& field, int row, int col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(field, &pos);
        while (pos < field.size() &&
               (field[pos] == ' ' || field[pos] == '\r')) {
            ++pos;
        }
        if (pos != field.size() || !std::isfinite(v)) {
            throw std::invalid_argument(field);
        }
        return v;
    } catch (const std::exception&) {
        throw IngestionError("bad numeric value at row " + std::to_string(row) +
                             ", column " + std::to_string(col) + ": '" +
                             field + "'");
    }
}

}  // namespace

DigitsData load_digits_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open digits CSV " + path);

    std::string line;
    if (!std::getline(in, line)) {
        throw IngestionError("digits CSV is empty: " + path);
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.size() != 65) {
        throw IngestionError("digits CSV header must have 65 columns, got " +
                             std::to_string(header.size()));
    }
    for (int j = 0; j < 64; ++j) {
        if (header[static_cast<std::size_t>(j)] != "p" + std::to_string(j)) {
            throw IngestionError("digits CSV header column " +
                                 std::to_string(j) + " must be p" +
                                 std::to_string(j));
        }
    }
    if (header[64] != "label") {
        throw IngestionError("digits CSV header column 64 must be 'label'");
    }

    std::vector<std::array<double, 65>> records;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 65) {
            throw IngestionError("row " + std::to_string(row) + " has " +
                                 std::to_string(fields.size()) +
                                 " columns, expected 65");
        }
        std::array<double, 65> rec{};
        for (int j = 0; j < 65; ++j) {
            rec[static_cast<std::size_t>(j)] =
                parse_csv_number(fields[static_cast<std::size_t>(j)], row, j);
        }
        records.push_back(rec);
    }
    if (records.empty()) throw IngestionError("digits CSV has no data rows");

    DigitsData data;
    data.pixels.resize(static_cast<Eigen::Index>(records.size()), 64);
    data.labels.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (int j = 0; j < 64; ++j) {
            data.pixels(static_cast<Eigen::Index>(i), j) =
                records[i][static_cast<std::size_t>(j)];
        }
        data.labels.push_back(static_cast<int>(records[i][64]));
    }
    return data;
}

DigitsData filter_binary(const DigitsData& data, int class_a, int class_b) {
    std::vector<int> keep;
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        if (data.labels[i] == class_a || data.labels[i] == class_b) {
            keep.push_back(static_cast<int>(i));
        }
    }
    if (keep.size() < 2) {
        throw DegenerateDataError("fewer than two samples in classes " +
                                  std::to_string(class_a) + "/" +
                                  std::to_string(class_b));
    }
    DigitsData out;
    out.pixels.resize(static_cast<Eigen::Index>(keep.size()), 64);
    out.labels.reserve(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        out.pixels.row(static_cast<Eigen::Index>(i)) =
            data.pixels.row(keep[i]);
        // remap to {0, 1} lanes
        out.labels.push_back(
            data.labels[static_cast<std::size_t>(keep[i])] == class_b ? 1 : 0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backend construction
// ---------------------------------------------------------------------------

BackendBundle make_backend(const ExperimentConfig& cfg) {
    BackendBundle bundle;
    if (cfg.backend.kind == BackendSpec::Kind::TCP) {
        bundle.backend = std::make_unique<ProtocolBackend>(
            wire::tcp_connect(cfg.backend.host, cfg.backend.port), 8, 8);
        return bundle;
    }
    bundle.model = std::make_unique<CrossbarModel>(
        8, 8, cfg.variability, stage_seed(cfg.seed, SeedSalt::DEVICE));
    bundle.backend = std::make_unique<DirectBackend>(*bundle.model);
    return bundle;
}

TargetGrid embed_targets(const Eigen::MatrixXd& weights, int rows, int cols) {
    const Eigen::Index lanes = weights.rows();
    const Eigen::Index d = weights.cols();
    if (lanes > cols || d > rows) {
        throw DimensionError("weight matrix does not fit the crossbar");
    }
    if ((weights.array() < 0.0).any() || (weights.array() > 1.0).any()) {
        throw RangeError("crossbar targets must lie in [0,1]");
    }
    TargetGrid grid;
    grid.targets.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    grid.mask.assign(static_cast<std::size_t>(rows) * cols, false);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < lanes; ++j) {
            const auto idx = static_cast<std::size_t>(i) * cols +
                             static_cast<std::size_t>(j);
            grid.targets[idx] = weights(j, i);
            grid.mask[idx] = true;
        }
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Digits experiment
// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m,
                          const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    }
    return out;
}

Eigen::VectorXd infer_padded(Backend& h, const Eigen::VectorXd& x) {
    const Eigen::VectorXd padded = pad_input(x, h.rows());
    const auto o = h.infer(std::span<const double>(
        padded.data(), static_cast<std::size_t>(padded.size())));
    return Eigen::Map<const Eigen::VectorXd>(
        o.data(), static_cast<Eigen::Index>(o.size()));
}

/// Mean chip-side cross-entropy of the padded-label model under bias b.
double chip_train_loss(Backend& h, const LabeledDataset& data,
                       const Eigen::VectorXd& bias) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) {
        const Eigen::VectorXd o = infer_padded(h, data.inputs.row(i).transpose());
        const Eigen::VectorXd p = softmax(o + bias);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(h.cols());
        y.head(data.labels.cols()) = data.labels.row(i).transpose();
        loss += cross_entropy(p, y);
    }
    return loss / static_cast<double>(data.inputs.rows());
}

std::vector<double> threshold_grid() {
    std::vector<double> grid;
    grid.reserve(101);
    for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
    return grid;
}

/// Accuracy over the sweep of the rule "class 1 iff p1 > t" (ties -> 0).
std::vector<double> sweep_accuracy(const std::vector<double>& p1,
                                   const std::vector<int>& labels,
                                   const std::vector<double>& thresholds) {
    std::vector<double> acc(thresholds.size(), 0.0);
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        int correct = 0;
        for (std::size_t i = 0; i < p1.size(); ++i) {
            const int pred = p1[i] > thresholds[k] ? 1 : 0;
            if (pred == labels[i]) ++correct;
        }
        acc[k] = static_cast<double>(correct) / static_cast<double>(p1.size());
    }
    return acc;
}

}  // namespace

DigitsResult run_digits_experiment(const ExperimentConfig& cfg, Backend& h) {
    validate(cfg);
    const std::string path =
        cfg.dataset_path.empty() ? "data/digits.csv" : cfg.dataset_path;
    const DigitsData binary = filter_binary(load_digits_csv(path), 0, 1);
    const int n = static_cast<int>(binary.pixels.rows());

    DigitsResult result;
    std::tie(result.train_idx, result.test_idx) =
        split_indices(n, cfg.split, stage_seed(cfg.seed, SeedSalt::SPLIT));

    const Eigen::MatrixXd train_raw = take_rows(binary.pixels, result.train_idx);
    const Eigen::MatrixXd test_raw = take_rows(binary.pixels, result.test_idx);

    // Basis and extremes come from the training split only.
    result.pca = pca_fit(train_raw, 8);
    const Eigen::MatrixXd train_scores = pca_transform(result.pca, train_raw);
    const Eigen::MatrixXd test_scores = pca_transform(result.pca, test_raw);
    result.scaler = minmax_fit(train_scores);
    const Eigen::MatrixXd train_in =
        minmax_transform(result.scaler, train_scores, false);
    const Eigen::MatrixXd test_in =
        minmax_transform(result.scaler, test_scores, true);

    auto one_hot = [&](const std::vector<int>& idx) {
        Eigen::MatrixXd y =
            Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(idx.size()), 2);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            y(static_cast<Eigen::Index>(i),
              binary.labels[static_cast<std::size_t>(idx[i])]) = 1.0;
        }
        return y;
    };
    const LabeledDataset train_ds{train_in, one_hot(result.train_idx), true};

    result.software = train_constrained_linear(train_ds, 2, 8);

    // Full-grid targets: unused output lanes get programmed to zero so the
    // crossbar's spare columns cannot leak input-dependent current into the
    // softmax denominator.
    const TargetGrid grid =
        embed_targets(result.software.model.phi, h.rows(), h.cols());
    result.programming = program_array(h, grid.targets, cfg.vipi, cfg.method);
    if (!result.programming.completed) {
        throw BackendUnavailableError("array programming aborted: " +
                                      result.programming.abort_reason);
    }

    // Chip-in-the-loop bias fine-tuning; the pre-tuning loss uses the same
    // seeded initial bias the tuner starts from.
    const std::uint64_t bias_seed = stage_seed(cfg.seed, SeedSalt::BIAS_INIT);
    {
        std::mt19937_64 rng(bias_seed);
        Eigen::VectorXd b0(h.cols());
        for (int j = 0; j < h.cols(); ++j) b0(j) = draw_normal(rng, 0.0, 1.0);
        result.report.train_loss_pre_finetune =
            chip_train_loss(h, train_ds, b0);
    }
    result.chip_bias = finetune_bias_chip_in_loop(h, train_ds, cfg.bias_eta,
                                                  cfg.bias_steps, bias_seed);
    result.report.train_loss_post_finetune =
        chip_train_loss(h, train_ds, result.chip_bias);

    // Held-out sweep: chip probabilities once, then the threshold grid.
    std::vector<double> p1_chip, p1_soft;
    std::vector<int> test_labels;
    for (std::size_t i = 0; i < result.test_idx.size(); ++i) {
        const Eigen::VectorXd x =
            test_in.row(static_cast<Eigen::Index>(i)).transpose();
        const Eigen::VectorXd o = infer_padded(h, x);
        p1_chip.push_back(softmax(o + result.chip_bias)(1));
        p1_soft.push_back(softmax(result.software.model.phi * x +
                                  result.software.model.bias)(1));
        test_labels.push_back(
            binary.labels[static_cast<std::size_t>(result.test_idx[i])]);
    }

    DigitsReport& rep = result.report;
    rep.method = method_name(cfg.method);
    rep.seed = cfg.seed;
    rep.n_train = static_cast<int>(result.train_idx.size());
    rep.n_test = static_cast<int>(result.test_idx.size());
    rep.thresholds = threshold_grid();
    rep.accuracy = sweep_accuracy(p1_chip, test_labels, rep.thresholds);
    rep.software_accuracy = sweep_accuracy(p1_soft, test_labels, rep.thresholds);
    const auto best = std::max_element(rep.accuracy.begin(), rep.accuracy.end());
    rep.best_accuracy = *best;
    rep.best_threshold =
        rep.thresholds[static_cast<std::size_t>(best - rep.accuracy.begin())];
    const auto best_sw = std::max_element(rep.software_accuracy.begin(),
                                          rep.software_accuracy.end());
    rep.software_best_accuracy = *best_sw;
    rep.software_best_threshold = rep.thresholds[static_cast<std::size_t>(
        best_sw - rep.software_accuracy.begin())];
    rep.e_tot = result.programming.e_tot;
    rep.converged_fraction = result.programming.converged_fraction;
    rep.repaired_count = result.programming.repaired_count;
    return result;
}

DigitsResult run_digits_experiment(const ExperimentConfig& cfg) {
    BackendBundle bundle = make_backend(cfg);
    return run_digits_experiment(cfg, *bundle.backend);
}

std::string digits_report_json(const DigitsReport& report,
                               const std::string& timestamp) {
    nlohmann::ordered_json j;
    j["generated_at"] = timestamp;
    j["experiment"] = "digits";
    j["method"] = report.method;
    j["seed"] = report.seed;
    j["n_train"] = report.n_train;
    j["n_test"] = report.n_test;
    j["best_accuracy"] = report.best_accuracy;
    j["best_threshold"] = report.best_threshold;
    j["software_best_accuracy"] = report.software_best_accuracy;
    j["software_best_threshold"] = report.software_best_threshold;
    j["e_tot"] = report.e_tot;
    j["converged_fraction"] = report.converged_fraction;
    j["repaired_count"] = report.repaired_count;
    j["train_loss_pre_finetune"] = report.train_loss_pre_finetune;
    j["train_loss_post_finetune"] = report.train_loss_post_finetune;
    j["thresholds"] = report.thresholds;
    j["accuracy"] = report.accuracy;
    j["software_accuracy"] = report.software_accuracy;
    return j.dump(2);
}

std::string digits_sweep_csv(const DigitsReport& report) {
    std::ostringstream os;
    os << "threshold,accuracy,software_accuracy\n";
    char buf[96];
    for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.9g,%.9g\n",
                      report.thresholds[i], report.accuracy[i],
                      report.software_accuracy[i]);
        os << buf;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Trajectory generator
// ---------------------------------------------------------------------------

namespace {

struct Rect {
    double xmin, ymin, xmax, ymax;
};

// Arena layout: a closed waypoint circuit routed around two rectangular
// obstacles in the middle of a 10 x 10 field.
constexpr Rect kObstacles[] = {
    {3.0, 3.0, 4.5, 7.0},
    {5.5, 3.0, 7.0, 7.0},
};

constexpr double kWaypoints[][2] = {
    {1.5, 1.5}, {5.0, 1.0}, {8.5, 1.5}, {9.0, 5.0},
    {8.5, 8.5}, {5.0, 9.0}, {1.5, 8.5}, {1.0, 5.0},
};
constexpr int kNumWaypoints = 8;

constexpr double kDt = 0.1;
constexpr double kVMax = 0.5;
constexpr double kSteerMax = 1.0;
constexpr double kHeadingGain = 1.5;
constexpr double kLookahead = 1.2;

double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

double rect_distance(const Rect& r, double x, double y) {
    const double dx = std::max({r.xmin - x, 0.0, x - r.xmax});
    const double dy = std::max({r.ymin - y, 0.0, y - r.ymax});
    return std::hypot(dx, dy);
}

struct CircuitPoint {
    double s;  // arclength along the loop
    double dist;
};

double segment_length(int i) {
    const int j = (i + 1) % kNumWaypoints;
    return std::hypot(kWaypoints[j][0] - kWaypoints[i][0],
                      kWaypoints[j][1] - kWaypoints[i][1]);
}

double circuit_length() {
    double total = 0.0;
    for (int i = 0; i < kNumWaypoints; ++i) total += segment_length(i);
    return total;
}

/// Arclength of the nearest point on the closed waypoint polyline.
CircuitPoint nearest_on_circuit(double x, double y) {
    CircuitPoint best{0.0, 1e300};
    double s_base = 0.0;
    for (int i = 0; i < kNumWaypoints; ++i) {
        const int j = (i + 1) % kNumWaypoints;
        const double ax = kWaypoints[i][0], ay = kWaypoints[i][1];
        const double bx = kWaypoints[j][0], by = kWaypoints[j][1];
        const double vx = bx - ax, vy = by - ay;
        const double len2 = vx * vx + vy * vy;
        double u = ((x - ax) * vx + (y - ay) * vy) / len2;
        u = std::clamp(u, 0.0, 1.0);
        const double px = ax + u * vx, py = ay + u * vy;
        const double d = std::hypot(x - px, y - py);
        if (d < best.dist) {
            best.dist = d;
            best.s = s_base + u * std::sqrt(len2);
        }
        s_base += segment_length(i);
    }
    return best;
}

/// Point at arclength s (wrapped) along the loop.
void circuit_point_at(double s, double& px, double& py) {
    const double total = circuit_length();
    s = std::fmod(s, total);
    if (s < 0.0) s += total;
    for (int i = 0; i < kNumWaypoints; ++i) {
        const double len = segment_length(i);
        if (s <= len) {
            const int j = (i + 1) % kNumWaypoints;
            const double u = s / len;
            px = kWaypoints[i][0] + u * (kWaypoints[j][0] - kWaypoints[i][0]);
            py = kWaypoints[i][1] + u * (kWaypoints[j][1] - kWaypoints[i][1]);
            return;
        }
        s -= len;
    }
    px = kWaypoints[0][0];
    py = kWaypoints[0][1];
}

}  // namespace

std::pair<double, double> trajectory_policy(double x, double y, double theta) {
    const CircuitPoint nearest = nearest_on_circuit(x, y);
    double cx = 0.0, cy = 0.0;
    circuit_point_at(nearest.s + kLookahead, cx, cy);
    const double heading_err = wrap_angle(std::atan2(cy - y, cx - x) - theta);
    const double steer =
        std::clamp(kHeadingGain * heading_err, -kSteerMax, kSteerMax);

    double d_obs = 1e300;
    for (const Rect& r : kObstacles) {
        d_obs = std::min(d_obs, rect_distance(r, x, y));
    }
    const double turn_slow = 1.0 - 0.6 * std::fabs(steer) / kSteerMax;
    const double obstacle_slow = 0.4 + 0.6 * std::min(1.0, d_obs);
    const double v = kVMax * turn_slow * obstacle_slow;
    return {v, steer};
}

std::vector<TrajectoryRow> generate_trajectory(std::uint64_t seed, int n) {
    if (n < 100) throw ConfigError("trajectory length must be >= 100");
    std::mt19937_64 rng(seed);
    std::vector<TrajectoryRow> rows;
    rows.reserve(static_cast<std::size_t>(n));

    // One continuous run, started near a random point of the circuit with a
    // roughly tangent heading.
    const double s0 = draw_uniform(rng, 0.0, circuit_length());
    double x = 0.0, y = 0.0;
    circuit_point_at(s0, x, y);
    double x_ahead = 0.0, y_ahead = 0.0;
    circuit_point_at(s0 + 0.5, x_ahead, y_ahead);
    x += draw_uniform(rng, -0.4, 0.4);
    y += draw_uniform(rng, -0.4, 0.4);
    double theta = wrap_angle(std::atan2(y_ahead - y, x_ahead - x) +
                              draw_uniform(rng, -0.5, 0.5));

    for (int step = 0; step < n; ++step) {
        const auto [v, steer] = trajectory_policy(x, y, theta);
        rows.push_back({step * kDt, x, y, theta, v, steer});
        x += v * std::cos(theta) * kDt;
        y += v * std::sin(theta) * kDt;
        theta = wrap_angle(theta + steer * kDt);
    }
    return rows;
}

std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
    std::ostringstream os;
    os << "t,x,y,theta,v_cmd,steer_cmd\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.t,
                      r.x, r.y, r.theta, r.v_cmd, r.steer_cmd);
        os << buf;
    }
    return os.str();
}

std::vector<TrajectoryRow> load_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open trajectory CSV " + path);
    std::string line;
    if (!std::getline(in, line)) {
        throw IngestionError("trajectory CSV is empty: " + path);
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t,x,y,theta,v_cmd,steer_cmd") {
        throw IngestionError(
            "trajectory CSV header must be t,x,y,theta,v_cmd,steer_cmd");
    }
    std::vector<TrajectoryRow> rows;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 6) {
            throw IngestionError("row " + std::to_string(row) + " has " +
                                 std::to_string(fields.size()) +
                                 " columns, expected 6");
        }
        TrajectoryRow r;
        r.t = parse_csv_number(fields[0], row, 0);
        r.x = parse_csv_number(fields[1], row, 1);
        r.y = parse_csv_number(fields[2], row, 2);
        r.theta = parse_csv_number(fields[3], row, 3);
        r.v_cmd = parse_csv_number(fields[4], row, 4);
        r.steer_cmd = parse_csv_number(fields[5], row, 5);
        rows.push_back(r);
    }
    if (rows.empty()) throw IngestionError("trajectory CSV has no data rows");
    return rows;
}

std::pair<LabeledDataset, MinMaxScaler> trajectory_to_dataset(
    const std::vector<TrajectoryRow>& rows) {
    Eigen::MatrixXd inputs(static_cast<Eigen::Index>(rows.size()), 3);
    Eigen::MatrixXd targets(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        inputs(r, 0) = rows[i].x;
        inputs(r, 1) = rows[i].y;
        inputs(r, 2) = rows[i].theta;
        targets(r, 0) = rows[i].v_cmd;
        targets(r, 1) = rows[i].steer_cmd;
    }
    const MinMaxScaler scaler = minmax_fit(inputs);
    LabeledDataset ds{minmax_transform(scaler, inputs, false), targets, false};
    return {std::move(ds), scaler};
}

// ---------------------------------------------------------------------------
// Robot experiment
// ---------------------------------------------------------------------------

namespace {

struct RmseTriple {
    double combined, v, steer;
};

RmseTriple rmse_of(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
    const Eigen::ArrayXXd err = (pred - truth).array().square();
    RmseTriple out{};
    out.v = std::sqrt(err.col(0).mean());
    out.steer = std::sqrt(err.col(1).mean());
    out.combined = std::sqrt(err.mean());
    return out;
}

}  // namespace

RobotResult run_robot_experiment(const ExperimentConfig& cfg, Backend& h) {
    validate(cfg);
    const std::vector<TrajectoryRow> rows =
        cfg.dataset_path.empty()
            ? generate_trajectory(stage_seed(cfg.seed, SeedSalt::TRAJECTORY),
                                  cfg.robot_n)
            : load_trajectory_csv(cfg.dataset_path);
    const int n = static_cast<int>(rows.size());

    Eigen::MatrixXd inputs_raw(n, 3), targets(n, 2);
    Eigen::VectorXd times(n);
    for (int i = 0; i < n; ++i) {
        inputs_raw(i, 0) = rows[static_cast<std::size_t>(i)].x;
        inputs_raw(i, 1) = rows[static_cast<std::size_t>(i)].y;
        inputs_raw(i, 2) = rows[static_cast<std::size_t>(i)].theta;
        targets(i, 0) = rows[static_cast<std::size_t>(i)].v_cmd;
        targets(i, 1) = rows[static_cast<std::size_t>(i)].steer_cmd;
        times(i) = rows[static_cast<std::size_t>(i)].t;
    }

    RobotResult result;
    std::tie(result.train_idx, result.test_idx) =
        split_indices(n, cfg.split, stage_seed(cfg.seed, SeedSalt::SPLIT));

    const Eigen::MatrixXd train_raw = take_rows(inputs_raw, result.train_idx);
    const Eigen::MatrixXd test_raw = take_rows(inputs_raw, result.test_idx);
    result.scaler = minmax_fit(train_raw);
    const Eigen::MatrixXd train_in =
        minmax_transform(result.scaler, train_raw, false);
    const Eigen::MatrixXd test_in =
        minmax_transform(result.scaler, test_raw, true);
    const Eigen::MatrixXd train_t = take_rows(targets, result.train_idx);
    const Eigen::MatrixXd test_t = take_rows(targets, result.test_idx);

    const LabeledDataset train_ds{train_in, train_t, false};
    MlpTrainOptions mlp_opts;
    mlp_opts.eta = cfg.mlp_eta;
    mlp_opts.n_step = cfg.mlp_steps;
    mlp_opts.seed = stage_seed(cfg.seed, SeedSalt::MLP_INIT);
    result.software = train_mlp_software(train_ds, 8, mlp_opts);

    const auto n_test = static_cast<Eigen::Index>(result.test_idx.size());
    Eigen::MatrixXd pred_soft(n_test, 2);
    for (Eigen::Index i = 0; i < n_test; ++i) {
        pred_soft.row(i) =
            mlp_forward(result.software, test_in.row(i).transpose()).transpose();
    }

    // Rows beyond the input width always receive zero drive, so those cells
    // are inert; the mask keeps the programmer from pulsing them at all.
    const TargetGrid grid =
        embed_targets(result.software.layer1, h.rows(), h.cols());
    result.programming =
        program_array(h, grid.targets, cfg.vipi, cfg.method, grid.mask);
    if (!result.programming.completed) {
        throw BackendUnavailableError("array programming aborted: " +
                                      result.programming.abort_reason);
    }

    Eigen::MatrixXd pred_raw(n_test, 2);
    for (Eigen::Index i = 0; i < n_test; ++i) {
        pred_raw.row(i) =
            chip_forward(h, result.software, test_in.row(i).transpose())
                .transpose();
    }

    result.finetuned = finetune_layer2_chip_in_loop(
        h, result.software, train_ds, cfg.layer2_eta, cfg.layer2_steps,
        stage_seed(cfg.seed, SeedSalt::LAYER2));

    Eigen::MatrixXd pred_tuned(n_test, 2);
    for (Eigen::Index i = 0; i < n_test; ++i) {
        pred_tuned.row(i) =
            chip_forward(h, result.finetuned, test_in.row(i).transpose())
                .transpose();
    }

    RobotReport& rep = result.report;
    rep.method = method_name(cfg.method);
    rep.seed = cfg.seed;
    rep.n_train = static_cast<int>(result.train_idx.size());
    rep.n_test = static_cast<int>(result.test_idx.size());
    const RmseTriple soft = rmse_of(pred_soft, test_t);
    rep.rmse_software = soft.combined;
    rep.rmse_software_v = soft.v;
    rep.rmse_software_steer = soft.steer;
    const RmseTriple raw = rmse_of(pred_raw, test_t);
    rep.rmse_chip_raw = raw.combined;
    rep.rmse_chip_raw_v = raw.v;
    rep.rmse_chip_raw_steer = raw.steer;
    const RmseTriple tuned = rmse_of(pred_tuned, test_t);
    rep.rmse_chip_finetuned = tuned.combined;
    rep.rmse_chip_finetuned_v = tuned.v;
    rep.rmse_chip_finetuned_steer = tuned.steer;
    const Eigen::RowVectorXd mean = test_t.colwise().mean();
    rep.target_sd = std::sqrt(
        (test_t.rowwise() - mean).array().square().mean());
    rep.e_tot = result.programming.e_tot;
    rep.converged_fraction = result.programming.converged_fraction;

    // Prediction series ordered by time for plotting.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_test));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return times(result.test_idx[static_cast<std::size_t>(a)]) <
               times(result.test_idx[static_cast<std::size_t>(b)]);
    });
    for (Eigen::Index i : order) {
        RobotPredictionRow p;
        p.t = times(result.test_idx[static_cast<std::size_t>(i)]);
        p.v_true = test_t(i, 0);
        p.v_pred = pred_tuned(i, 0);
        p.steer_true = test_t(i, 1);
        p.steer_pred = pred_tuned(i, 1);
        result.predictions.push_back(p);
    }
    return result;
}

RobotResult run_robot_experiment(const ExperimentConfig& cfg) {
    BackendBundle bundle = make_backend(cfg);
    return run_robot_experiment(cfg, *bundle.backend);
}

std::string robot_report_json(const RobotReport& report,
                              const std::string& timestamp) {
    nlohmann::ordered_json j;
    j["generated_at"] = timestamp;
    j["experiment"] = "robot";
    j["method"] = report.method;
    j["seed"] = report.seed;
    j["n_train"] = report.n_train;
    j["n_test"] = report.n_test;
    j["rmse_software"] = report.rmse_software;
    j["rmse_software_v"] = report.rmse_software_v;
    j["rmse_software_steer"] = report.rmse_software_steer;
    j["rmse_chip_raw"] = report.rmse_chip_raw;
    j["rmse_chip_raw_v"] = report.rmse_chip_raw_v;
    j["rmse_chip_raw_steer"] = report.rmse_chip_raw_steer;
    j["rmse_chip_finetuned"] = report.rmse_chip_finetuned;
    j["rmse_chip_finetuned_v"] = report.rmse_chip_finetuned_v;
    j["rmse_chip_finetuned_steer"] = report.rmse_chip_finetuned_steer;
    j["target_sd"] = report.target_sd;
    j["e_tot"] = report.e_tot;
    j["converged_fraction"] = report.converged_fraction;
    return j.dump(2);
}

std::string robot_predictions_csv(
    const std::vector<RobotPredictionRow>& rows) {
    std::ostringstream os;
    os << "t,v_true,v_pred,steer_true,steer_pred\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g\n", r.t,
                      r.v_true, r.v_pred, r.steer_true, r.steer_pred);
        os << buf;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Misc helpers
// ---------------------------------------------------------------------------

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot open " + path + " for writing");
    out << content;
    if (!out) throw IngestionError("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace mena
