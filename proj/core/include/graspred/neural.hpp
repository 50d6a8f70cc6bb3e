#pragma once

// Self-contained recurrent-network core (64-bit throughout): LSTM and dense
// layers, inverted dropout, Adam, MSE/MAE/temporal-smoothness losses, BPTT,
// finite-difference gradient verification, and JSON checkpoints. No external
// numerics dependencies so every arithmetic step is auditable.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "graspred/geometry.hpp"
#include "graspred/rng.hpp"

namespace graspred {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // row-major

  static Tensor zeros(std::initializer_list<std::size_t> s);
  std::size_t numel() const;
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double& at2(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at2(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct DenseLayer {
  std::size_t in = 0, out = 0;
  bool relu = false;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out

  void init(Rng& rng);  // uniform(-k, k), k = 1/sqrt(in); zero bias
  // pre (length out) receives the pre-activation needed by backward
  void forward(const double* x, double* pre, double* y) const;
  // accumulates into dw/db; dx (length in, nullable) receives input grads
  void backward(const double* x, const double* pre, const double* dy, double* dw,
                double* db, double* dx) const;
};

struct LstmLayer {
  std::size_t in = 0, hidden = 0;
  // gate row blocks ordered [input, forget, cell, output]
  std::vector<double> w;  // 4h x in
  std::vector<double> u;  // 4h x h
  std::vector<double> b;  // 4h; forget block initialized to 1

  void init(Rng& rng);
};

struct LstmCache {
  std::size_t steps = 0;
  std::vector<double> x;       // T x in
  std::vector<double> gates;   // T x 4h, post-activation [i, f, g, o]
  std::vector<double> c;       // T x h
  std::vector<double> h;       // T x h
  std::vector<double> tanh_c;  // T x h
};

// Runs the recurrence from zero initial state; hidden states land in
// cache.h. x is T x in row-major.
void lstm_forward(const LstmLayer& layer, const double* x, std::size_t steps,
                  LstmCache& cache);

// Tensor wrapper returning the T x h hidden-state tensor.
Tensor lstm_forward(const LstmLayer& layer, const Tensor& sequence,
                    LstmCache* cache = nullptr);

// BPTT. dh is T x h (dLoss/d hidden state). Accumulates into dw/du/db;
// dx (T x in, nullable) receives input gradients.
void lstm_backward(const LstmLayer& layer, const LstmCache& cache, const double* dh,
                   double* dw, double* du, double* db, double* dx);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean over components of squared / absolute error.
double mse_loss(const double* pred, const double* target, std::size_t n, double* d_pred);
double mae_loss(const double* pred, const double* target, std::size_t n, double* d_pred);

// Sum over consecutive step pairs of the squared Euclidean distance between
// per-step output rows (T x d); the caller applies its lambda weight.
double temporal_smoothness(const Tensor& step_outputs);
void temporal_smoothness_backward(const Tensor& step_outputs, double weight, Tensor& d_out);

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

// Inverted dropout: train mode zeroes each element with probability `rate`
// and scales survivors by 1/(1-rate); eval mode is the identity.
Tensor dropout_apply(const Tensor& t, double rate, bool train, Rng& rng);

// Mask values are 0 or 1/(1-rate), one per element.
void dropout_mask(std::size_t n, double rate, Rng& rng, double* mask);

// ---------------------------------------------------------------------------
// Parameters and Adam
// ---------------------------------------------------------------------------

struct ParamRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double>* value;
};

using GradBuffer = std::vector<std::vector<double>>;  // aligned with param_refs()

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;

  void init_like(const std::vector<ParamRef>& refs);
  // bias-corrected update, applied in place
  void apply(const std::vector<ParamRef>& refs, const GradBuffer& grads, double lr);
};

// ---------------------------------------------------------------------------
// Network: one architecture family covering all three shipped models.
//   sequence -> LSTM -> dropout -> [optional MJT branches ++ validity flag]
//            -> dense trunk (ReLU) -> linear head, applied per step.
// ---------------------------------------------------------------------------

struct NetSpec {
  std::size_t seq_input = 4;
  std::size_t lstm_hidden = 64;
  bool mjt_branches = false;
  std::size_t position_branch = 16;  // used when mjt_branches
  std::size_t time_branch = 8;
  std::size_t trunk = 16;
  std::size_t output = 4;
  double dropout_rate = 0.2;
};

struct ModelInput {
  Tensor sequence;      // T x seq_input
  Vec3 mjt_position{};  // consumed only when mjt_branches
  double mjt_time = 0.0;
  double mjt_valid = 0.0;  // 1 when the trajectory fit succeeded
};

struct NetCache;

class GraspNet {
 public:
  GraspNet() = default;
  GraspNet(const NetSpec& spec, std::uint64_t init_seed);

  const NetSpec& spec() const { return spec_; }
  std::vector<ParamRef> param_refs();
  std::vector<ParamRef> param_refs() const;  // values read-only by convention
  std::size_t param_count() const;

  // Per-step outputs (T x output). Train mode draws dropout masks from
  // mask_seed, so a repeated call with the same seed is bit-identical.
  Tensor forward(const ModelInput& input, NetCache& cache, bool train,
                 std::uint64_t mask_seed) const;
  Tensor forward_eval(const ModelInput& input) const;

  // Accumulates parameter gradients into `grads` (shaped like param_refs()).
  void backward(const NetCache& cache, const Tensor& d_outputs, GradBuffer& grads) const;

  LstmLayer lstm;
  DenseLayer branch_position, branch_time;  // present when spec.mjt_branches
  DenseLayer trunk, head;

 private:
  NetSpec spec_;
};

struct NetCache {
  ModelInput input;  // copy; backward needs the raw inputs
  LstmCache lstm;
  bool train = false;
  std::vector<double> mask;        // T x h when train
  std::vector<double> h_used;      // T x h, post-dropout
  std::vector<double> branch_pos_pre, branch_pos_out;
  std::vector<double> branch_time_pre, branch_time_out;
  std::vector<double> concat;      // T x trunk.in
  std::vector<double> trunk_pre, trunk_out;  // T x trunk.out
  Tensor outputs;
};

GradBuffer make_grad_buffer(const std::vector<ParamRef>& refs);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double dropout_rate = 0.2;
  std::uint64_t seed = 0;
  double weight_time = 3.0;     // reach: MAE(time) weight
  double weight_position = 1.0; // reach: MSE(position) weight
  double lambda_smooth = 0.0;   // posture: temporal smoothness weight
};

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean per-sample loss, one entry per epoch
};

// Per-sample loss: fills d_outputs (same shape as outputs) unless null,
// returns the scalar loss. sample_index addresses the caller's target store.
using SampleLossFn =
    std::function<double(const Tensor& outputs, std::size_t sample_index, Tensor* d_outputs)>;

// Shuffled mini-batches, per-sample forward/backward fanned out across
// threads with one gradient slot per batch item, slot sums reduced in index
// order, then one Adam step per batch. Bit-reproducible for a fixed seed
// regardless of thread count. Throws EmptyDataset and NonFiniteGradient.
TrainHistory train_network(GraspNet& net, const std::vector<ModelInput>& inputs,
                           const SampleLossFn& loss, const TrainConfig& config);

// Max relative error between analytic and central finite-difference
// gradients of `loss` at the current parameters, on one input.
double grad_check(GraspNet& net, const ModelInput& input,
                  const std::function<double(const Tensor& outputs, Tensor* d)>& loss,
                  double eps = 1e-5, bool train_mode = false, std::uint64_t mask_seed = 0);

// ---------------------------------------------------------------------------
// Checkpoints: JSON header (architecture, train config, tag, seed) plus a
// flat parameter array in param_refs() order; loader validates the shape
// manifest and throws ShapeMismatch on any disagreement.
// ---------------------------------------------------------------------------

void save_checkpoint(const GraspNet& net, const TrainConfig& config,
                     const std::string& model_tag, const std::filesystem::path& path);

struct Checkpoint {
  GraspNet net;
  TrainConfig config;
  std::string model_tag;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace graspred
