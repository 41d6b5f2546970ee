#include "mena/training.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mena/random.hpp"

namespace mena {

namespace {

constexpr double kProbFloor = 1e-12;

Eigen::MatrixXd clamp01(Eigen::MatrixXd m) {
    return m.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

void validate(const LabeledDataset& data) {
    if (data.inputs.rows() != data.labels.rows()) {
        throw DimensionError("inputs and labels row counts differ");
    }
    if (data.inputs.rows() == 0) {
        throw DegenerateDataError("dataset is empty");
    }
    if ((data.inputs.array() < 0.0).any() || (data.inputs.array() > 1.0).any()) {
        throw RangeError("dataset inputs must lie in [0,1]");
    }
    if (data.classification) {
        for (Eigen::Index i = 0; i < data.labels.rows(); ++i) {
            double sum = 0.0;
            for (Eigen::Index j = 0; j < data.labels.cols(); ++j) {
                const double v = data.labels(i, j);
                if (v != 0.0 && v != 1.0) {
                    throw RangeError("classification labels must be one-hot");
                }
                sum += v;
            }
            if (sum != 1.0) {
                throw RangeError("classification labels must be one-hot");
            }
        }
    }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
    const double zmax = z.maxCoeff();
    Eigen::VectorXd e = (z.array() - zmax).exp();
    return e / e.sum();
}

double cross_entropy(const Eigen::VectorXd& p, const Eigen::VectorXd& y) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (y(i) != 0.0) {
            loss -= y(i) * std::log(std::max(p(i), kProbFloor));
        }
    }
    return loss;
}

namespace {

/// Summed cross-entropy loss and its gradients for z = phi*x + b.
double linear_loss_grad(const LabeledDataset& data,
                        const Eigen::MatrixXd& phi, const Eigen::VectorXd& b,
                        Eigen::MatrixXd& g_phi, Eigen::VectorXd& g_b) {
    g_phi.setZero(phi.rows(), phi.cols());
    g_b.setZero(b.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) {
        const Eigen::VectorXd x = data.inputs.row(i).transpose();
        const Eigen::VectorXd y = data.labels.row(i).transpose();
        const Eigen::VectorXd p = softmax(phi * x + b);
        loss += cross_entropy(p, y);
        const Eigen::VectorXd r = p - y;
        g_phi.noalias() += r * x.transpose();
        g_b += r;
    }
    return loss;
}

double linear_loss(const LabeledDataset& data, const Eigen::MatrixXd& phi,
                   const Eigen::VectorXd& b) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) {
        const Eigen::VectorXd p =
            softmax(phi * data.inputs.row(i).transpose() + b);
        loss += cross_entropy(p, data.labels.row(i).transpose());
    }
    return loss;
}

/// Max first-order violation over the box-constrained phi and free bias.
double kkt_residual_of(const Eigen::MatrixXd& phi,
                       const Eigen::MatrixXd& g_phi,
                       const Eigen::VectorXd& g_b) {
    double res = 0.0;
    for (Eigen::Index r = 0; r < phi.rows(); ++r) {
        for (Eigen::Index c = 0; c < phi.cols(); ++c) {
            const double w = phi(r, c);
            const double g = g_phi(r, c);
            double v;
            if (w <= 1e-12) {
                v = std::max(0.0, -g);  // at lower bound: g >= 0 required
            } else if (w >= 1.0 - 1e-12) {
                v = std::max(0.0, g);   // at upper bound: g <= 0 required
            } else {
                v = std::fabs(g);
            }
            res = std::max(res, v);
        }
    }
    for (Eigen::Index i = 0; i < g_b.size(); ++i) {
        res = std::max(res, std::fabs(g_b(i)));
    }
    return res;
}

}  // namespace

TrainedLinear train_constrained_linear(const LabeledDataset& data,
                                       int n_classes, int n_features,
                                       const LinearTrainOptions& opts) {
    validate(data);
    if (!data.classification) {
        throw ConfigError("constrained linear training expects one-hot labels");
    }
    if (data.inputs.cols() != n_features || data.labels.cols() != n_classes) {
        throw DimensionError("dataset shape does not match (C, d)");
    }

    TrainedLinear out;
    Eigen::MatrixXd phi = Eigen::MatrixXd::Constant(n_classes, n_features, 0.5);
    Eigen::VectorXd bias = Eigen::VectorXd::Zero(n_classes);
    Eigen::MatrixXd g_phi;
    Eigen::VectorXd g_b;

    double loss = linear_loss_grad(data, phi, bias, g_phi, g_b);
    double step = 1.0 / std::max<double>(1.0, data.inputs.rows());

    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        out.loss_trace.push_back(loss);
        const double residual = kkt_residual_of(phi, g_phi, g_b);
        const double tol = opts.kkt_tol * (1.0 + std::fabs(loss));
        out.iterations = iter;
        if (residual <= tol) {
            out.model = LinearModel{phi, bias};
            out.loss = loss;
            out.kkt_residual = residual;
            return out;
        }

        // Backtracking projected-gradient step with sufficient decrease on
        // the quadratic upper model.
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            Eigen::MatrixXd phi_next = clamp01(phi - step * g_phi);
            Eigen::VectorXd bias_next = bias - step * g_b;
            const Eigen::MatrixXd d_phi = phi_next - phi;
            const Eigen::VectorXd d_b = bias_next - bias;
            const double sq = d_phi.squaredNorm() + d_b.squaredNorm();
            if (sq == 0.0) break;
            const double lin = (g_phi.array() * d_phi.array()).sum() +
                               g_b.dot(d_b);
            const double next_loss = linear_loss(data, phi_next, bias_next);
            const double slack = 1e-12 * (1.0 + std::fabs(loss));
            if (next_loss <= loss + lin + 0.5 / step * sq + slack) {
                phi = std::move(phi_next);
                bias = std::move(bias_next);
                loss = next_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        loss = linear_loss_grad(data, phi, bias, g_phi, g_b);
        if (accepted) step *= 1.6;  // let the step grow back after caution
    }

    out.model = LinearModel{phi, bias};
    out.loss = loss;
    out.kkt_residual = kkt_residual_of(phi, g_phi, g_b);
    throw LinearTrainingError(
        "constrained training did not reach the KKT tolerance in " +
            std::to_string(opts.max_iter) + " iterations (residual " +
            std::to_string(out.kkt_residual) + ")",
        out);
}

Eigen::VectorXd pad_input(const Eigen::VectorXd& x, int rows) {
    if (x.size() > rows) {
        throw DimensionError("input wider than the crossbar");
    }
    Eigen::VectorXd padded = Eigen::VectorXd::Zero(rows);
    padded.head(x.size()) = x;
    return padded;
}

namespace {

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                             static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Eigen::VectorXd finetune_bias_chip_in_loop(Backend& h,
                                           const LabeledDataset& data,
                                           double eta, int n_step,
                                           std::uint64_t seed) {
    validate(data);
    if (n_step < 0) throw ConfigError("n_step must be >= 0");
    const int cols = h.cols();
    if (data.labels.cols() > cols) {
        throw DimensionError("more label lanes than crossbar columns");
    }

    std::mt19937_64 rng(seed);
    Eigen::VectorXd bias(cols);
    for (int j = 0; j < cols; ++j) bias(j) = draw_normal(rng, 0.0, 1.0);

    const std::size_t n = static_cast<std::size_t>(data.inputs.rows());
    for (int s = 0; s < n_step; ++s) {
        const auto i = static_cast<Eigen::Index>(draw_index(rng, n));
        const Eigen::VectorXd x =
            pad_input(data.inputs.row(i).transpose(), h.rows());
        const Eigen::VectorXd o = to_eigen(h.infer(
            std::span<const double>(x.data(), static_cast<std::size_t>(x.size()))));
        const Eigen::VectorXd p = softmax(o + bias);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(cols);
        y.head(data.labels.cols()) = data.labels.row(i).transpose();
        bias -= eta * (p - y);
    }
    return bias;
}

MlpModel train_mlp_software(const LabeledDataset& data, int hidden,
                            const MlpTrainOptions& opts) {
    validate(data);
    if (hidden < 1) throw ConfigError("hidden width must be >= 1");
    const Eigen::Index d = data.inputs.cols();
    const Eigen::Index m = data.labels.cols();

    std::mt19937_64 rng(opts.seed);
    MlpModel model;
    model.layer1.resize(hidden, d);
    model.bias1.resize(hidden);
    model.layer2.resize(m, hidden);
    model.bias2 = Eigen::VectorXd::Zero(m);
    for (int r = 0; r < hidden; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) {
            model.layer1(r, c) = draw_uniform(rng, 0.0, 1.0);
        }
        // spread the ReLU kinks across the input range
        model.bias1(r) = draw_uniform(rng, -1.0, 0.5);
    }
    for (Eigen::Index r = 0; r < m; ++r) {
        for (int c = 0; c < hidden; ++c) {
            model.layer2(r, c) = draw_uniform(rng, -0.5, 0.5);
        }
    }

    const std::size_t n = static_cast<std::size_t>(data.inputs.rows());
    for (int s = 0; s < opts.n_step; ++s) {
        const auto i = static_cast<Eigen::Index>(draw_index(rng, n));
        const Eigen::VectorXd x = data.inputs.row(i).transpose();
        const Eigen::VectorXd t = data.labels.row(i).transpose();

        const Eigen::VectorXd pre = model.layer1 * x + model.bias1;
        const Eigen::VectorXd hid = pre.cwiseMax(0.0);
        const Eigen::VectorXd pred = model.layer2 * hid + model.bias2;
        const Eigen::VectorXd err = 2.0 * (pred - t);

        if (!err.allFinite()) {
            throw TrainingError("MLP training diverged (non-finite loss)");
        }

        const Eigen::VectorXd d_hid = model.layer2.transpose() * err;
        const Eigen::VectorXd d_pre =
            (pre.array() > 0.0).select(d_hid, Eigen::VectorXd::Zero(hidden));

        model.layer2.noalias() -= opts.eta * err * hid.transpose();
        model.bias2 -= opts.eta * err;
        model.layer1.noalias() -= opts.eta * d_pre * x.transpose();
        model.bias1 -= opts.eta * d_pre;
        model.layer1 = clamp01(model.layer1);
    }
    return model;
}

Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& x) {
    const Eigen::VectorXd hid =
        (model.layer1 * x + model.bias1).cwiseMax(0.0);
    return model.layer2 * hid + model.bias2;
}

Eigen::VectorXd chip_hidden(Backend& h, const MlpModel& model,
                            const Eigen::VectorXd& x) {
    const Eigen::VectorXd padded = pad_input(x, h.rows());
    const Eigen::VectorXd o = to_eigen(h.infer(std::span<const double>(
        padded.data(), static_cast<std::size_t>(padded.size()))));
    return (o + model.bias1).cwiseMax(0.0);
}

Eigen::VectorXd chip_forward(Backend& h, const MlpModel& model,
                             const Eigen::VectorXd& x) {
    return model.layer2 * chip_hidden(h, model, x) + model.bias2;
}

MlpModel finetune_layer2_chip_in_loop(Backend& h, const MlpModel& model,
                                      const LabeledDataset& data, double eta,
                                      int n_step, std::uint64_t seed) {
    validate(data);
    if (model.layer2.cols() != h.cols()) {
        throw DimensionError("hidden width must match crossbar columns");
    }
    MlpModel out = model;
    std::mt19937_64 rng(seed);
    const std::size_t n = static_cast<std::size_t>(data.inputs.rows());
    for (int s = 0; s < n_step; ++s) {
        const auto i = static_cast<Eigen::Index>(draw_index(rng, n));
        const Eigen::VectorXd x = data.inputs.row(i).transpose();
        const Eigen::VectorXd t = data.labels.row(i).transpose();
        const Eigen::VectorXd hid = chip_hidden(h, out, x);
        const Eigen::VectorXd err = 2.0 * (out.layer2 * hid + out.bias2 - t);
        out.layer2.noalias() -= eta * err * hid.transpose();
        out.bias2 -= eta * err;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Eigen::MatrixXd(0, 0);
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = j.at(r).at(c).get<double>();
        }
    }
    return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
    return v;
}

nlohmann::ordered_json vector_json(const Eigen::VectorXd& v) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

}  // namespace

std::string linear_model_json(const TrainedLinear& trained,
                              std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["kind"] = "linear";
    j["classes"] = trained.model.phi.rows();
    j["features"] = trained.model.phi.cols();
    j["box"] = {0.0, 1.0};
    j["seed"] = seed;
    j["phi"] = matrix_json(trained.model.phi);
    j["bias"] = vector_json(trained.model.bias);
    j["loss"] = trained.loss;
    j["kkt_residual"] = trained.kkt_residual;
    j["loss_trace"] = trained.loss_trace;
    return j.dump(2);
}

TrainedLinear linear_model_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    TrainedLinear out;
    out.model.phi = matrix_from_json(j.at("phi"));
    out.model.bias = vector_from_json(j.at("bias"));
    out.loss = j.at("loss").get<double>();
    out.kkt_residual = j.at("kkt_residual").get<double>();
    out.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    return out;
}

std::string mlp_model_json(const MlpModel& model, std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["kind"] = "mlp";
    j["hidden"] = model.layer1.rows();
    j["inputs"] = model.layer1.cols();
    j["outputs"] = model.layer2.rows();
    j["box"] = {0.0, 1.0};
    j["seed"] = seed;
    j["layer1"] = matrix_json(model.layer1);
    j["bias1"] = vector_json(model.bias1);
    j["layer2"] = matrix_json(model.layer2);
    j["bias2"] = vector_json(model.bias2);
    return j.dump(2);
}

MlpModel mlp_model_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MlpModel out;
    out.layer1 = matrix_from_json(j.at("layer1"));
    out.bias1 = vector_from_json(j.at("bias1"));
    out.layer2 = matrix_from_json(j.at("layer2"));
    out.bias2 = vector_from_json(j.at("bias2"));
    return out;
}

}  // namespace mena
