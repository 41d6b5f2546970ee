#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mena/backend.hpp"
#include "mena/errors.hpp"

namespace mena {

/// Inputs row-wise in [0,1]^d; labels are one-hot rows (classification) or
/// real targets (regression).
struct LabeledDataset {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd labels;
    bool classification = true;
};

/// Throws unless row counts match, inputs lie in [0,1], and classification
/// labels are valid one-hot rows.
void validate(const LabeledDataset& data);

/// Max-shifted softmax; sums to 1 and never overflows on finite input.
Eigen::VectorXd softmax(const Eigen::VectorXd& z);

/// -sum y_i ln(max(p_i, 1e-12)); the floor keeps quantized or noisy chip
/// outputs from producing infinities.
double cross_entropy(const Eigen::VectorXd& p, const Eigen::VectorXd& y);

/// Crossbar-programmable softmax regression layer.
struct LinearModel {
    Eigen::MatrixXd phi;   // C x d, componentwise in [0,1]
    Eigen::VectorXd bias;  // C, unconstrained
};

struct TrainedLinear {
    LinearModel model;
    double loss = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    std::vector<double> loss_trace;
};

struct LinearTrainOptions {
    int max_iter = 20000;
    double kkt_tol = 1e-4;  // scaled by (1 + |loss|)
};

/// Thrown when the box-constrained solver runs out of iterations; carries
/// the last iterate so callers can inspect how close it got.
class LinearTrainingError : public TrainingError {
public:
    LinearTrainingError(const std::string& msg, TrainedLinear last)
        : TrainingError(msg, last.kkt_residual), last_iterate(std::move(last)) {}

    TrainedLinear last_iterate;
};

/// Minimize summed cross-entropy over phi in the [0,1] box (bias free) by
/// projected gradient with a backtracking line search. The returned point
/// carries a first-order KKT certificate: inactive coordinates have
/// |gradient| <= tol, coordinates at a bound may only push outward.
TrainedLinear train_constrained_linear(const LabeledDataset& data,
                                       int n_classes, int n_features,
                                       const LinearTrainOptions& opts = {});

/// Bias fine-tuning with the crossbar inside the forward pass. The bias is
/// seeded from a standard normal of width cols; each step samples one
/// training row, reads the chip, and applies b -= eta * (p - y).
Eigen::VectorXd finetune_bias_chip_in_loop(Backend& h,
                                           const LabeledDataset& data,
                                           double eta, int n_step,
                                           std::uint64_t seed);

/// Two-layer ReLU perceptron; layer1 is the crossbar-resident matrix.
struct MlpModel {
    Eigen::MatrixXd layer1;  // hidden x d, componentwise in [0,1]
    Eigen::VectorXd bias1;   // hidden
    Eigen::MatrixXd layer2;  // m x hidden, unconstrained
    Eigen::VectorXd bias2;   // m
};

struct MlpTrainOptions {
    double eta = 0.02;
    int n_step = 60000;
    std::uint64_t seed = 1;
};

/// Software SGD on squared error; layer1 is projected back onto [0,1] after
/// every step so it stays programmable.
MlpModel train_mlp_software(const LabeledDataset& data, int hidden,
                            const MlpTrainOptions& opts = {});

/// Forward pass of the software model.
Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& x);

/// SGD on squared error for layer2/bias2 only, with the hidden layer
/// computed by the chip. The device sits inside the forward pass and is
/// never differentiated through.
MlpModel finetune_layer2_chip_in_loop(Backend& h, const MlpModel& model,
                                      const LabeledDataset& data, double eta,
                                      int n_step, std::uint64_t seed);

/// Hidden activations through the chip: ReLU(infer(pad(x)) + bias1).
Eigen::VectorXd chip_hidden(Backend& h, const MlpModel& model,
                            const Eigen::VectorXd& x);

/// Chip-in-the-loop forward: layer2 * chip_hidden + bias2.
Eigen::VectorXd chip_forward(Backend& h, const MlpModel& model,
                             const Eigen::VectorXd& x);

/// Zero-pad a d-vector to the backend's row count.
Eigen::VectorXd pad_input(const Eigen::VectorXd& x, int rows);

// Model persistence: matrices row-major plus dims, box, seed, loss trace.
std::string linear_model_json(const TrainedLinear& trained,
                              std::uint64_t seed);
std::string mlp_model_json(const MlpModel& model, std::uint64_t seed);
TrainedLinear linear_model_from_json(const std::string& text);
MlpModel mlp_model_from_json(const std::string& text);

}  // namespace mena
