#include "rnnsm/net.hpp"

#include <cmath>
#include <random>

#include "rnnsm/errors.hpp"

namespace rnnsm::net {

namespace {

constexpr int kCheckpointVersion = 1;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMajor>;
using Mat = Eigen::Map<RowMajor>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

int NetworkShape::fused_input_width() const {
  int w = continuous_width;
  for (int d : embedding_dims) w += d;
  return w;
}

void to_json(nlohmann::json& j, const NetworkShape& s) {
  j = {{"cardinalities", s.cardinalities},
       {"embedding_dims", s.embedding_dims},
       {"continuous_width", s.continuous_width},
       {"fusion_width", s.fusion_width},
       {"hidden", s.hidden}};
}

void from_json(const nlohmann::json& j, NetworkShape& s) {
  s.cardinalities = j.at("cardinalities").get<std::vector<int>>();
  s.embedding_dims = j.at("embedding_dims").get<std::vector<int>>();
  s.continuous_width = j.at("continuous_width").get<int>();
  s.fusion_width = j.at("fusion_width").get<int>();
  s.hidden = j.at("hidden").get<int>();
}

Network::Network(NetworkShape shape, std::uint64_t seed) : shape_(std::move(shape)) {
  if (shape_.cardinalities.size() != shape_.embedding_dims.size()) {
    throw ConfigError("one embedding width is required per discrete marker");
  }
  layout();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-0.08, 0.08);
  for (auto& p : params_) p = uni(rng);
  const int H = shape_.hidden;
  for (int r = 0; r < H; ++r) params_[lstm_b_ + H + r] = 1.0;
  project_embeddings();
}

void Network::layout() {
  tensors_.clear();
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    tensors_.push_back({std::move(name), offset, rows, cols});
    offset += tensors_.back().size();
    return tensors_.back().offset;
  };
  for (std::size_t k = 0; k < shape_.cardinalities.size(); ++k) {
    add("embedding_" + std::to_string(k), shape_.cardinalities[k] + 1, shape_.embedding_dims[k]);
  }
  const int F = shape_.fusion_width, H = shape_.hidden, D = shape_.fused_input_width();
  fusion_w_ = add("fusion_weight", F, D);
  fusion_b_ = add("fusion_bias", F, 1);
  lstm_w_ = add("lstm_input_weight", 4 * H, F);
  lstm_u_ = add("lstm_recurrent_weight", 4 * H, H);
  lstm_b_ = add("lstm_bias", 4 * H, 1);
  head_v_ = add("head_weight", H, 1);
  head_b_ = add("head_bias", 1, 1);
  params_.assign(offset, 0.0);
}

const TensorInfo& Network::tensor(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw SchemaError("no tensor named '" + name + "'");
}

std::span<const double> Network::embedding_row(std::size_t k, int row) const {
  const auto& t = tensors_.at(k);
  return {params_.data() + t.offset + static_cast<std::size_t>(row) * t.cols,
          static_cast<std::size_t>(t.cols)};
}

Eigen::MatrixXd Network::embedding_matrix(std::size_t k) const {
  const auto& t = tensors_.at(k);
  return ConstMat(params_.data() + t.offset, t.rows, t.cols);
}

double& Network::output_bias() { return params_[head_b_]; }

ForwardCache Network::forward(const features::UserSequence& sequence) const {
  const int T = static_cast<int>(sequence.steps.size());
  if (T < 1) throw ValidationError("forward needs a sequence of length >= 1");
  const int F = shape_.fusion_width, H = shape_.hidden, D = shape_.fused_input_width();
  const auto* p = params_.data();
  ConstMat Wf(p + fusion_w_, F, D);
  ConstVec bf(p + fusion_b_, F);
  ConstMat W(p + lstm_w_, 4 * H, F);
  ConstMat U(p + lstm_u_, 4 * H, H);
  ConstVec b(p + lstm_b_, 4 * H);
  ConstVec v(p + head_v_, H);
  const double bo = p[head_b_];

  ForwardCache c;
  c.parameter_count = params_.size();
  c.steps = T;
  c.input.resize(D, T);
  c.fused.resize(F, T);
  c.gates.resize(4 * H, T);
  c.cell.resize(H, T);
  c.hidden.resize(H, T);
  c.output.resize(T);
  c.discrete.reserve(T);

  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(H), c_prev = Eigen::VectorXd::Zero(H);
  for (int t = 0; t < T; ++t) {
    const auto& step = sequence.steps[t];
    if (step.discrete.size() != shape_.cardinalities.size() ||
        static_cast<int>(step.continuous.size()) != shape_.continuous_width) {
      throw SchemaError("sequence step " + std::to_string(t) + " does not match the network shape");
    }
    int row = 0;
    for (std::size_t k = 0; k < shape_.cardinalities.size(); ++k) {
      const int idx = step.discrete[k];
      if (idx < 0 || idx > shape_.cardinalities[k]) {
        throw ValidationError("discrete index out of range at step " + std::to_string(t));
      }
      const auto e = embedding_row(k, idx);
      for (double x : e) c.input(row++, t) = x;
    }
    for (double x : step.continuous) c.input(row++, t) = x;
    c.discrete.push_back(step.discrete);

    c.fused.col(t) = (Wf * c.input.col(t) + bf).array().tanh();
    Eigen::VectorXd z = W * c.fused.col(t) + U * h_prev + b;
    for (int r = 0; r < H; ++r) {
      z(r) = sigmoid(z(r));                  // input gate
      z(H + r) = sigmoid(z(H + r));          // forget gate
      z(2 * H + r) = std::tanh(z(2 * H + r));  // candidate
      z(3 * H + r) = sigmoid(z(3 * H + r));  // output gate
    }
    c.gates.col(t) = z;
    c.cell.col(t) = z.segment(H, H).cwiseProduct(c_prev) + z.segment(0, H).cwiseProduct(z.segment(2 * H, H));
    c.hidden.col(t) = z.segment(3 * H, H).cwiseProduct(c.cell.col(t).array().tanh().matrix());
    c.output[t] = v.dot(c.hidden.col(t)) + bo;
    if (!std::isfinite(c.output[t]) || !c.cell.col(t).allFinite()) {
      throw NumericalError("non-finite activation at step " + std::to_string(t));
    }
    h_prev = c.hidden.col(t);
    c_prev = c.cell.col(t);
  }
  return c;
}

void Network::backward(const ForwardCache& cache, std::span<const double> grad_output,
                       std::span<double> gradient) const {
  if (cache.parameter_count != params_.size() || gradient.size() != params_.size() ||
      grad_output.size() != static_cast<std::size_t>(cache.steps) ||
      cache.input.rows() != shape_.fused_input_width()) {
    throw SchemaError("backward: cache, gradient or output sizes do not match this network");
  }
  const int T = cache.steps;
  const int F = shape_.fusion_width, H = shape_.hidden, D = shape_.fused_input_width();
  const auto* p = params_.data();
  ConstMat Wf(p + fusion_w_, F, D);
  ConstMat W(p + lstm_w_, 4 * H, F);
  ConstMat U(p + lstm_u_, 4 * H, H);
  ConstVec v(p + head_v_, H);

  auto* g = gradient.data();
  Mat dWf(g + fusion_w_, F, D);
  Vec dbf(g + fusion_b_, F);
  Mat dW(g + lstm_w_, 4 * H, F);
  Mat dU(g + lstm_u_, 4 * H, H);
  Vec db(g + lstm_b_, 4 * H);
  Vec dv(g + head_v_, H);

  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H), dc_next = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd dz(4 * H);
  for (int t = T - 1; t >= 0; --t) {
    const double go = grad_output[t];
    dv += go * cache.hidden.col(t);
    g[head_b_] += go;

    const Eigen::VectorXd dh = go * v + dh_next;
    const auto gates = cache.gates.col(t);
    const Eigen::VectorXd tanh_c = cache.cell.col(t).array().tanh();
    const Eigen::VectorXd c_prev = t > 0 ? Eigen::VectorXd(cache.cell.col(t - 1)) : Eigen::VectorXd::Zero(H);
    const Eigen::VectorXd h_prev = t > 0 ? Eigen::VectorXd(cache.hidden.col(t - 1)) : Eigen::VectorXd::Zero(H);

    Eigen::VectorXd dc(H);
    for (int r = 0; r < H; ++r) {
      const double i = gates(r), f = gates(H + r), cand = gates(2 * H + r), o = gates(3 * H + r);
      dc(r) = dh(r) * o * (1.0 - tanh_c(r) * tanh_c(r)) + dc_next(r);
      dz(r) = dc(r) * cand * i * (1.0 - i);
      dz(H + r) = dc(r) * c_prev(r) * f * (1.0 - f);
      dz(2 * H + r) = dc(r) * i * (1.0 - cand * cand);
      dz(3 * H + r) = dh(r) * tanh_c(r) * o * (1.0 - o);
      dc_next(r) = dc(r) * f;
    }
    dW.noalias() += dz * cache.fused.col(t).transpose();
    dU.noalias() += dz * h_prev.transpose();
    db += dz;
    dh_next.noalias() = U.transpose() * dz;

    const Eigen::VectorXd du = W.transpose() * dz;
    const Eigen::VectorXd dpre = du.array() * (1.0 - cache.fused.col(t).array().square());
    dWf.noalias() += dpre * cache.input.col(t).transpose();
    dbf += dpre;
    const Eigen::VectorXd din = Wf.transpose() * dpre;

    int row = 0;
    for (std::size_t k = 0; k < shape_.cardinalities.size(); ++k) {
      const auto& tinfo = tensors_[k];
      double* erow = g + tinfo.offset + static_cast<std::size_t>(cache.discrete[t][k]) * tinfo.cols;
      for (int d = 0; d < tinfo.cols; ++d) erow[d] += din(row++);
    }
  }
}

void Network::project_embeddings() {
  for (std::size_t k = 0; k < shape_.cardinalities.size(); ++k) {
    const auto& t = tensors_[k];
    for (int r = 0; r < t.rows; ++r) {
      double* row = params_.data() + t.offset + static_cast<std::size_t>(r) * t.cols;
      double norm = 0.0;
      for (int d = 0; d < t.cols; ++d) norm += row[d] * row[d];
      norm = std::sqrt(norm);
      if (norm < 1e-300) {
        row[0] = 1.0;
        for (int d = 1; d < t.cols; ++d) row[d] = 0.0;
        continue;
      }
      for (int d = 0; d < t.cols; ++d) row[d] /= norm;
    }
  }
}

void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2},
       {"epsilon", c.epsilon}, {"clip_norm", c.clip_norm}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
  AdamConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
}

void apply_update_with_norm_projection(Network& network, std::span<const double> gradient,
                                       AdamState& state, const AdamConfig& config) {
  auto params = network.parameters();
  if (gradient.size() != params.size()) throw SchemaError("gradient size does not match parameters");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  double norm = 0.0;
  for (double x : gradient) norm += x * x;
  norm = std::sqrt(norm);
  const double scale = (config.clip_norm > 0.0 && norm > config.clip_norm) ? config.clip_norm / norm : 1.0;

  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double gi = gradient[i] * scale;
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * gi;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * gi * gi;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
  }
  network.project_embeddings();
}

nlohmann::json save_checkpoint(const Network& network, const AdamState& state,
                               const features::NormStats& stats) {
  nlohmann::json j;
  j["format"] = "rnnsm-checkpoint";
  j["version"] = kCheckpointVersion;
  j["shape"] = network.shape();
  auto& tensors = j["tensors"] = nlohmann::json::array();
  const auto params = network.parameters();
  for (const auto& t : network.tensors()) {
    tensors.push_back({{"name", t.name},
                       {"shape", {t.rows, t.cols}},
                       {"data", std::vector<double>(params.begin() + static_cast<std::ptrdiff_t>(t.offset),
                                                    params.begin() + static_cast<std::ptrdiff_t>(t.offset + t.size()))}});
  }
  j["optimizer"] = {{"step", state.step}, {"m", state.m}, {"v", state.v}};
  j["norm_stats"] = stats;
  return j;
}

Checkpoint load_checkpoint(const nlohmann::json& j) {
  try {
    if (j.at("format") != "rnnsm-checkpoint" || j.at("version").get<int>() != kCheckpointVersion) {
      throw SchemaError("unsupported checkpoint format or version");
    }
    Checkpoint c;
    c.network = Network(j.at("shape").get<NetworkShape>(), 0);
    auto params = c.network.parameters();
    for (const auto& t : j.at("tensors")) {
      const auto& info = c.network.tensor(t.at("name").get<std::string>());
      const auto shape = t.at("shape").get<std::vector<int>>();
      const auto data = t.at("data").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != info.rows || shape[1] != info.cols || data.size() != info.size()) {
        throw SchemaError("tensor '" + info.name + "' has the wrong shape");
      }
      std::copy(data.begin(), data.end(), params.begin() + static_cast<std::ptrdiff_t>(info.offset));
    }
    const auto& opt = j.at("optimizer");
    c.optimizer.step = opt.at("step").get<long>();
    c.optimizer.m = opt.at("m").get<std::vector<double>>();
    c.optimizer.v = opt.at("v").get<std::vector<double>>();
    c.stats = j.at("norm_stats").get<features::NormStats>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace rnnsm::net
