#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mena/config.hpp"
#include "mena/training.hpp"

namespace mena {

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

struct PcaProjection {
    Eigen::RowVectorXd mean;      // 1 x D column means of the fit data
    Eigen::MatrixXd basis;        // D x k, orthonormal columns
    Eigen::VectorXd eigenvalues;  // k, non-increasing
};

/// Top-k principal directions of the covariance (eigendecomposition).
/// Throws DegenerateDataError when the data has no variance at all.
PcaProjection pca_fit(const Eigen::MatrixXd& data, int k);

Eigen::MatrixXd pca_transform(const PcaProjection& pca,
                              const Eigen::MatrixXd& data);

/// fit + transform in one call; returns (scores, projection).
std::pair<Eigen::MatrixXd, PcaProjection> pca_project(
    const Eigen::MatrixXd& data, int k);

/// Scalar min/max over the whole fit split; transform maps affinely onto
/// [0,1], clipping out-of-fit values when asked (test data).
struct MinMaxScaler {
    double lo = 0.0;
    double hi = 1.0;
};

MinMaxScaler minmax_fit(const Eigen::MatrixXd& data);
Eigen::MatrixXd minmax_transform(const MinMaxScaler& scaler,
                                 const Eigen::MatrixXd& data, bool clip);

/// Seeded shuffle split; both sides are guaranteed non-empty.
std::pair<std::vector<int>, std::vector<int>> split_indices(
    int n, double train_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Digits experiment
// ---------------------------------------------------------------------------

struct DigitsData {
    Eigen::MatrixXd pixels;  // N x 64, raw intensities
    std::vector<int> labels;
};

/// CSV with header p0..p63,label. Schema violations name the row/column.
DigitsData load_digits_csv(const std::string& path);
DigitsData filter_binary(const DigitsData& data, int class_a, int class_b);

struct DigitsReport {
    std::string method;
    std::uint64_t seed = 0;
    int n_train = 0;
    int n_test = 0;
    std::vector<double> thresholds;
    std::vector<double> accuracy;
    double best_accuracy = 0.0;
    double best_threshold = 0.0;
    std::vector<double> software_accuracy;
    double software_best_accuracy = 0.0;
    double software_best_threshold = 0.0;
    double e_tot = 0.0;
    double converged_fraction = 0.0;
    int repaired_count = 0;
    double train_loss_pre_finetune = 0.0;
    double train_loss_post_finetune = 0.0;
};

/// Everything the experiment produced, for inspection and white-box tests.
struct DigitsResult {
    DigitsReport report;
    PcaProjection pca;
    MinMaxScaler scaler;
    TrainedLinear software;
    ArrayReport programming;
    Eigen::VectorXd chip_bias;
    std::vector<int> train_idx;
    std::vector<int> test_idx;
};

DigitsResult run_digits_experiment(const ExperimentConfig& cfg);
DigitsResult run_digits_experiment(const ExperimentConfig& cfg, Backend& h);

std::string digits_report_json(const DigitsReport& report,
                               const std::string& timestamp);
std::string digits_sweep_csv(const DigitsReport& report);

// ---------------------------------------------------------------------------
// Trajectory generator (robot obstacle-avoidance stand-in)
// ---------------------------------------------------------------------------

struct TrajectoryRow {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
    double v_cmd = 0.0;
    double steer_cmd = 0.0;
};

/// Motion commands as a pure function of pose: pursuit of a fixed waypoint
/// circuit around the arena's rectangular obstacles, slowing near them.
std::pair<double, double> trajectory_policy(double x, double y, double theta);

/// Kinematic unicycle rollout under trajectory_policy from seeded starts.
std::vector<TrajectoryRow> generate_trajectory(std::uint64_t seed, int n);

std::string trajectory_csv(const std::vector<TrajectoryRow>& rows);
std::vector<TrajectoryRow> load_trajectory_csv(const std::string& path);

/// Inputs [x, y, theta] min-max normalized onto [0,1]; targets raw commands.
std::pair<LabeledDataset, MinMaxScaler> trajectory_to_dataset(
    const std::vector<TrajectoryRow>& rows);

// ---------------------------------------------------------------------------
// Robot experiment
// ---------------------------------------------------------------------------

struct RobotReport {
    std::string method;
    std::uint64_t seed = 0;
    int n_train = 0;
    int n_test = 0;
    double rmse_software = 0.0;
    double rmse_software_v = 0.0;
    double rmse_software_steer = 0.0;
    double rmse_chip_raw = 0.0;       // software layer2, no fine-tuning
    double rmse_chip_raw_v = 0.0;
    double rmse_chip_raw_steer = 0.0;
    double rmse_chip_finetuned = 0.0;
    double rmse_chip_finetuned_v = 0.0;
    double rmse_chip_finetuned_steer = 0.0;
    double target_sd = 0.0;           // pooled test-target deviation
    double e_tot = 0.0;
    double converged_fraction = 0.0;
};

struct RobotPredictionRow {
    double t = 0.0;
    double v_true = 0.0;
    double v_pred = 0.0;
    double steer_true = 0.0;
    double steer_pred = 0.0;
};

struct RobotResult {
    RobotReport report;
    MlpModel software;
    MlpModel finetuned;
    ArrayReport programming;
    MinMaxScaler scaler;
    std::vector<int> train_idx;
    std::vector<int> test_idx;
    std::vector<RobotPredictionRow> predictions;  // one per held-out sample
};

RobotResult run_robot_experiment(const ExperimentConfig& cfg);
RobotResult run_robot_experiment(const ExperimentConfig& cfg, Backend& h);

std::string robot_report_json(const RobotReport& report,
                              const std::string& timestamp);
std::string robot_predictions_csv(const std::vector<RobotPredictionRow>& rows);

// ---------------------------------------------------------------------------
// Shared pipeline helpers
// ---------------------------------------------------------------------------

/// Crossbar target grid embedding a (lanes x d) matrix transposed into the
/// top-left corner. The mask selects exactly the embedded cells, so the
/// rest of the grid is never pulsed.
struct TargetGrid {
    std::vector<double> targets;
    std::vector<bool> mask;
};

TargetGrid embed_targets(const Eigen::MatrixXd& weights, int rows, int cols);

/// A backend built per the config: an owned simulated crossbar for DIRECT,
/// a TCP connection for tcp:<host:port>.
struct BackendBundle {
    std::unique_ptr<CrossbarModel> model;  // null when remote
    std::unique_ptr<Backend> backend;
};

BackendBundle make_backend(const ExperimentConfig& cfg);

/// Stable sub-stream salts so pipeline stages never share a seed.
enum class SeedSalt : std::uint64_t {
    DEVICE = 1,
    SPLIT = 2,
    BIAS_INIT = 3,
    MLP_INIT = 4,
    LAYER2 = 5,
    TRAJECTORY = 6,
};

std::uint64_t stage_seed(std::uint64_t base, SeedSalt salt);

/// ISO-8601 UTC wall-clock string (the single non-deterministic report field).
std::string timestamp_now();

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace mena
