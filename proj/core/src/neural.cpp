#include "graspred/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "graspred/errors.hpp"
#include "graspred/parallel.hpp"

namespace graspred {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// y += M x, M rows x cols row-major
void matvec_acc(const std::vector<double>& m, std::size_t rows, std::size_t cols,
                const double* x, double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = m.data() + i * cols;
    double acc = 0.0;
    for (std::size_t k = 0; k < cols; ++k) acc += row[k] * x[k];
    y[i] += acc;
  }
}

// y += M^T x, x length rows, y length cols
void matvec_t_acc(const std::vector<double>& m, std::size_t rows, std::size_t cols,
                  const double* x, double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = m.data() + i * cols;
    const double xi = x[i];
    for (std::size_t k = 0; k < cols; ++k) y[k] += row[k] * xi;
  }
}

// M += a x^T
void outer_acc(double* m, const double* a, const double* x, std::size_t rows,
               std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* row = m + i * cols;
    const double ai = a[i];
    for (std::size_t k = 0; k < cols; ++k) row[k] += ai * x[k];
  }
}

constexpr std::uint64_t kStreamInit = 0xA1;
constexpr std::uint64_t kStreamShuffle = 0x5E;
constexpr std::uint64_t kStreamDropout = 0xD0;

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(std::initializer_list<std::size_t> s) {
  Tensor t;
  t.shape.assign(s.begin(), s.end());
  t.data.assign(t.numel(), 0.0);
  return t;
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return shape.empty() ? 0 : n;
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

void DenseLayer::init(Rng& rng) {
  w.resize(out * in);
  b.assign(out, 0.0);
  const double k = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-k, k);
  for (double& v : w) v = dist(rng);
}

void DenseLayer::forward(const double* x, double* pre, double* y) const {
  for (std::size_t i = 0; i < out; ++i) {
    const double* row = w.data() + i * in;
    double acc = b[i];
    for (std::size_t k = 0; k < in; ++k) acc += row[k] * x[k];
    pre[i] = acc;
    y[i] = relu ? std::max(0.0, acc) : acc;
  }
}

void DenseLayer::backward(const double* x, const double* pre, const double* dy,
                          double* dw, double* db, double* dx) const {
  for (std::size_t i = 0; i < out; ++i) {
    const double g = relu ? (pre[i] > 0.0 ? dy[i] : 0.0) : dy[i];
    db[i] += g;
    double* dwrow = dw + i * in;
    const double* wrow = w.data() + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      dwrow[k] += g * x[k];
      if (dx) dx[k] += wrow[k] * g;
    }
  }
}

// ---------------------------------------------------------------------------
// LSTM layer
// ---------------------------------------------------------------------------

void LstmLayer::init(Rng& rng) {
  const std::size_t g4 = 4 * hidden;
  w.resize(g4 * in);
  u.resize(g4 * hidden);
  b.assign(g4, 0.0);
  const double kw = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dw(-kw, kw);
  for (double& v : w) v = dw(rng);
  const double ku = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> du(-ku, ku);
  for (double& v : u) v = du(rng);
  for (std::size_t j = 0; j < hidden; ++j) b[hidden + j] = 1.0;  // forget gate
}

void lstm_forward(const LstmLayer& layer, const double* x, std::size_t steps,
                  LstmCache& cache) {
  const std::size_t in = layer.in, h = layer.hidden, g4 = 4 * h;
  cache.steps = steps;
  cache.x.assign(x, x + steps * in);
  cache.gates.assign(steps * g4, 0.0);
  cache.c.assign(steps * h, 0.0);
  cache.h.assign(steps * h, 0.0);
  cache.tanh_c.assign(steps * h, 0.0);

  std::vector<double> a(g4);
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy(layer.b.begin(), layer.b.end(), a.begin());
    matvec_acc(layer.w, g4, in, x + t * in, a.data());
    if (t > 0) matvec_acc(layer.u, g4, h, cache.h.data() + (t - 1) * h, a.data());
    for (std::size_t j = 0; j < h; ++j) {
      const double gi = sigmoid(a[j]);
      const double gf = sigmoid(a[h + j]);
      const double gg = std::tanh(a[2 * h + j]);
      const double go = sigmoid(a[3 * h + j]);
      const double c_prev = (t > 0) ? cache.c[(t - 1) * h + j] : 0.0;
      const double c = gf * c_prev + gi * gg;
      const double tc = std::tanh(c);
      double* gates = cache.gates.data() + t * g4;
      gates[j] = gi;
      gates[h + j] = gf;
      gates[2 * h + j] = gg;
      gates[3 * h + j] = go;
      cache.c[t * h + j] = c;
      cache.tanh_c[t * h + j] = tc;
      cache.h[t * h + j] = go * tc;
    }
  }
}

Tensor lstm_forward(const LstmLayer& layer, const Tensor& sequence, LstmCache* cache) {
  if (sequence.shape.size() != 2 || sequence.cols() != layer.in) {
    throw ShapeMismatch("lstm_forward: sequence must be T x " + std::to_string(layer.in));
  }
  LstmCache local;
  LstmCache& c = cache ? *cache : local;
  lstm_forward(layer, sequence.data.data(), sequence.rows(), c);
  Tensor out;
  out.shape = {c.steps, layer.hidden};
  out.data = c.h;
  return out;
}

void lstm_backward(const LstmLayer& layer, const LstmCache& cache, const double* dh,
                   double* dw, double* du, double* db, double* dx) {
  const std::size_t in = layer.in, h = layer.hidden, g4 = 4 * h;
  const std::size_t steps = cache.steps;
  std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0), da(g4);

  for (std::size_t ti = steps; ti-- > 0;) {
    const double* gates = cache.gates.data() + ti * g4;
    for (std::size_t j = 0; j < h; ++j) {
      const double gi = gates[j], gf = gates[h + j], gg = gates[2 * h + j],
                   go = gates[3 * h + j];
      const double tc = cache.tanh_c[ti * h + j];
      const double dh_total = dh[ti * h + j] + dh_next[j];
      const double dc = dc_next[j] + dh_total * go * (1.0 - tc * tc);
      const double c_prev = (ti > 0) ? cache.c[(ti - 1) * h + j] : 0.0;
      da[j] = dc * gg * gi * (1.0 - gi);
      da[h + j] = dc * c_prev * gf * (1.0 - gf);
      da[2 * h + j] = dc * gi * (1.0 - gg * gg);
      da[3 * h + j] = dh_total * tc * go * (1.0 - go);
      dc_next[j] = dc * gf;
    }
    outer_acc(dw, da.data(), cache.x.data() + ti * in, g4, in);
    if (ti > 0) outer_acc(du, da.data(), cache.h.data() + (ti - 1) * h, g4, h);
    for (std::size_t k = 0; k < g4; ++k) db[k] += da[k];
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    matvec_t_acc(layer.u, g4, h, da.data(), dh_next.data());
    if (dx) matvec_t_acc(layer.w, g4, in, da.data(), dx + ti * in);
  }
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

double mse_loss(const double* pred, const double* target, std::size_t n, double* d_pred) {
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred[i] - target[i];
    loss += e * e * inv;
    if (d_pred) d_pred[i] = 2.0 * e * inv;
  }
  return loss;
}

double mae_loss(const double* pred, const double* target, std::size_t n, double* d_pred) {
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred[i] - target[i];
    loss += std::abs(e) * inv;
    if (d_pred) d_pred[i] = (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)) * inv;
  }
  return loss;
}

double temporal_smoothness(const Tensor& step_outputs) {
  const std::size_t steps = step_outputs.rows();
  const std::size_t d = step_outputs.cols();
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < steps; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = step_outputs.at2(t, j) - step_outputs.at2(t + 1, j);
      total += diff * diff;
    }
  }
  return total;
}

void temporal_smoothness_backward(const Tensor& step_outputs, double weight, Tensor& d_out) {
  const std::size_t steps = step_outputs.rows();
  const std::size_t d = step_outputs.cols();
  for (std::size_t t = 0; t + 1 < steps; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = step_outputs.at2(t, j) - step_outputs.at2(t + 1, j);
      d_out.at2(t, j) += 2.0 * weight * diff;
      d_out.at2(t + 1, j) -= 2.0 * weight * diff;
    }
  }
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

void dropout_mask(std::size_t n, double rate, Rng& rng, double* mask) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = (dist(rng) < rate) ? 0.0 : keep_scale;
  }
}

Tensor dropout_apply(const Tensor& t, double rate, bool train, Rng& rng) {
  if (!train || rate == 0.0) return t;
  Tensor out = t;
  std::vector<double> mask(t.data.size());
  dropout_mask(mask.size(), rate, rng, mask.data());
  for (std::size_t i = 0; i < mask.size(); ++i) out.data[i] *= mask[i];
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void AdamState::init_like(const std::vector<ParamRef>& refs) {
  step = 0;
  m.clear();
  v.clear();
  for (const ParamRef& r : refs) {
    m.emplace_back(r.value->size(), 0.0);
    v.emplace_back(r.value->size(), 0.0);
  }
}

void AdamState::apply(const std::vector<ParamRef>& refs, const GradBuffer& grads,
                      double lr) {
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < refs.size(); ++k) {
    std::vector<double>& value = *refs[k].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grads[k][i];
      m[k][i] = beta1 * m[k][i] + (1.0 - beta1) * g;
      v[k][i] = beta2 * v[k][i] + (1.0 - beta2) * g * g;
      const double mhat = m[k][i] / bc1;
      const double vhat = v[k][i] / bc2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

GradBuffer make_grad_buffer(const std::vector<ParamRef>& refs) {
  GradBuffer g;
  for (const ParamRef& r : refs) g.emplace_back(r.value->size(), 0.0);
  return g;
}

// ---------------------------------------------------------------------------
// GraspNet
// ---------------------------------------------------------------------------

GraspNet::GraspNet(const NetSpec& spec, std::uint64_t init_seed) : spec_(spec) {
  Rng rng = make_rng(derive_seed(init_seed, kStreamInit));

  lstm.in = spec.seq_input;
  lstm.hidden = spec.lstm_hidden;
  lstm.init(rng);

  std::size_t trunk_in = spec.lstm_hidden;
  if (spec.mjt_branches) {
    branch_position.in = 3;
    branch_position.out = spec.position_branch;
    branch_position.relu = true;
    branch_position.init(rng);
    branch_time.in = 1;
    branch_time.out = spec.time_branch;
    branch_time.relu = true;
    branch_time.init(rng);
    trunk_in += spec.position_branch + spec.time_branch + 1;  // +1 validity flag
  }
  trunk.in = trunk_in;
  trunk.out = spec.trunk;
  trunk.relu = true;
  trunk.init(rng);

  head.in = spec.trunk;
  head.out = spec.output;
  head.relu = false;
  head.init(rng);
}

std::vector<ParamRef> GraspNet::param_refs() {
  std::vector<ParamRef> refs;
  const std::size_t g4 = 4 * spec_.lstm_hidden;
  refs.push_back({"lstm.w", {g4, spec_.seq_input}, &lstm.w});
  refs.push_back({"lstm.u", {g4, spec_.lstm_hidden}, &lstm.u});
  refs.push_back({"lstm.b", {g4}, &lstm.b});
  if (spec_.mjt_branches) {
    refs.push_back({"branch_position.w", {branch_position.out, branch_position.in},
                    &branch_position.w});
    refs.push_back({"branch_position.b", {branch_position.out}, &branch_position.b});
    refs.push_back({"branch_time.w", {branch_time.out, branch_time.in}, &branch_time.w});
    refs.push_back({"branch_time.b", {branch_time.out}, &branch_time.b});
  }
  refs.push_back({"trunk.w", {trunk.out, trunk.in}, &trunk.w});
  refs.push_back({"trunk.b", {trunk.out}, &trunk.b});
  refs.push_back({"head.w", {head.out, head.in}, &head.w});
  refs.push_back({"head.b", {head.out}, &head.b});
  return refs;
}

std::vector<ParamRef> GraspNet::param_refs() const {
  return const_cast<GraspNet*>(this)->param_refs();
}

std::size_t GraspNet::param_count() const {
  std::size_t n = 0;
  for (const ParamRef& r : param_refs()) n += r.value->size();
  return n;
}

Tensor GraspNet::forward(const ModelInput& input, NetCache& cache, bool train,
                         std::uint64_t mask_seed) const {
  if (input.sequence.shape.size() != 2 || input.sequence.cols() != spec_.seq_input ||
      input.sequence.rows() == 0) {
    throw ShapeMismatch("GraspNet: sequence must be non-empty T x " +
                        std::to_string(spec_.seq_input));
  }
  const std::size_t steps = input.sequence.rows();
  const std::size_t h = spec_.lstm_hidden;

  cache.input = input;
  cache.train = train && spec_.dropout_rate > 0.0;
  lstm_forward(lstm, input.sequence.data.data(), steps, cache.lstm);

  cache.h_used = cache.lstm.h;
  if (cache.train) {
    Rng rng = make_rng(derive_seed(mask_seed, kStreamDropout));
    cache.mask.resize(steps * h);
    dropout_mask(cache.mask.size(), spec_.dropout_rate, rng, cache.mask.data());
    for (std::size_t i = 0; i < cache.h_used.size(); ++i) cache.h_used[i] *= cache.mask[i];
  } else {
    cache.mask.clear();
  }

  if (spec_.mjt_branches) {
    const double pos_in[3] = {input.mjt_position.x, input.mjt_position.y,
                              input.mjt_position.z};
    cache.branch_pos_pre.resize(branch_position.out);
    cache.branch_pos_out.resize(branch_position.out);
    branch_position.forward(pos_in, cache.branch_pos_pre.data(),
                            cache.branch_pos_out.data());
    cache.branch_time_pre.resize(branch_time.out);
    cache.branch_time_out.resize(branch_time.out);
    branch_time.forward(&input.mjt_time, cache.branch_time_pre.data(),
                        cache.branch_time_out.data());
  }

  const std::size_t tin = trunk.in;
  cache.concat.resize(steps * tin);
  cache.trunk_pre.resize(steps * trunk.out);
  cache.trunk_out.resize(steps * trunk.out);
  cache.outputs.shape = {steps, head.out};
  cache.outputs.data.resize(steps * head.out);

  std::vector<double> head_pre(head.out);
  for (std::size_t t = 0; t < steps; ++t) {
    double* row = cache.concat.data() + t * tin;
    std::copy(cache.h_used.begin() + static_cast<std::ptrdiff_t>(t * h),
              cache.h_used.begin() + static_cast<std::ptrdiff_t>((t + 1) * h), row);
    if (spec_.mjt_branches) {
      double* p = row + h;
      std::copy(cache.branch_pos_out.begin(), cache.branch_pos_out.end(), p);
      p += branch_position.out;
      std::copy(cache.branch_time_out.begin(), cache.branch_time_out.end(), p);
      p += branch_time.out;
      *p = input.mjt_valid;
    }
    trunk.forward(row, cache.trunk_pre.data() + t * trunk.out,
                  cache.trunk_out.data() + t * trunk.out);
    head.forward(cache.trunk_out.data() + t * trunk.out, head_pre.data(),
                 cache.outputs.data.data() + t * head.out);
  }
  return cache.outputs;
}

Tensor GraspNet::forward_eval(const ModelInput& input) const {
  NetCache cache;
  return forward(input, cache, false, 0);
}

void GraspNet::backward(const NetCache& cache, const Tensor& d_outputs,
                        GradBuffer& grads) const {
  const std::size_t steps = cache.outputs.rows();
  const std::size_t h = spec_.lstm_hidden;
  if (d_outputs.rows() != steps || d_outputs.cols() != head.out) {
    throw ShapeMismatch("GraspNet::backward: gradient shape mismatch");
  }

  // grads indices follow param_refs order
  std::size_t gi = 0;
  double* g_lstm_w = grads[gi++].data();
  double* g_lstm_u = grads[gi++].data();
  double* g_lstm_b = grads[gi++].data();
  double *g_bp_w = nullptr, *g_bp_b = nullptr, *g_bt_w = nullptr, *g_bt_b = nullptr;
  if (spec_.mjt_branches) {
    g_bp_w = grads[gi++].data();
    g_bp_b = grads[gi++].data();
    g_bt_w = grads[gi++].data();
    g_bt_b = grads[gi++].data();
  }
  double* g_trunk_w = grads[gi++].data();
  double* g_trunk_b = grads[gi++].data();
  double* g_head_w = grads[gi++].data();
  double* g_head_b = grads[gi++].data();

  std::vector<double> d_trunk_out(trunk.out);
  std::vector<double> d_concat(trunk.in);
  std::vector<double> dh(steps * h, 0.0);
  std::vector<double> d_bp(spec_.mjt_branches ? branch_position.out : 0, 0.0);
  std::vector<double> d_bt(spec_.mjt_branches ? branch_time.out : 0, 0.0);

  for (std::size_t t = 0; t < steps; ++t) {
    std::fill(d_trunk_out.begin(), d_trunk_out.end(), 0.0);
    head.backward(cache.trunk_out.data() + t * trunk.out, nullptr,
                  d_outputs.data.data() + t * head.out, g_head_w, g_head_b,
                  d_trunk_out.data());
    std::fill(d_concat.begin(), d_concat.end(), 0.0);
    trunk.backward(cache.concat.data() + t * trunk.in,
                   cache.trunk_pre.data() + t * trunk.out, d_trunk_out.data(), g_trunk_w,
                   g_trunk_b, d_concat.data());
    for (std::size_t j = 0; j < h; ++j) {
      const double m = cache.train ? cache.mask[t * h + j] : 1.0;
      dh[t * h + j] = d_concat[j] * m;
    }
    if (spec_.mjt_branches) {
      const double* p = d_concat.data() + h;
      for (std::size_t j = 0; j < branch_position.out; ++j) d_bp[j] += p[j];
      p += branch_position.out;
      for (std::size_t j = 0; j < branch_time.out; ++j) d_bt[j] += p[j];
      // validity flag is an input; its gradient is dropped
    }
  }

  if (spec_.mjt_branches) {
    const double pos_in[3] = {cache.input.mjt_position.x, cache.input.mjt_position.y,
                              cache.input.mjt_position.z};
    branch_position.backward(pos_in, cache.branch_pos_pre.data(), d_bp.data(), g_bp_w,
                             g_bp_b, nullptr);
    branch_time.backward(&cache.input.mjt_time, cache.branch_time_pre.data(), d_bt.data(),
                         g_bt_w, g_bt_b, nullptr);
  }

  lstm_backward(lstm, cache.lstm, dh.data(), g_lstm_w, g_lstm_u, g_lstm_b, nullptr);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainHistory train_network(GraspNet& net, const std::vector<ModelInput>& inputs,
                           const SampleLossFn& loss, const TrainConfig& config) {
  if (inputs.empty()) throw EmptyDataset("train_network: no samples");
  const std::vector<ParamRef> refs = net.param_refs();
  AdamState adam;
  adam.init_like(refs);

  const std::size_t n = inputs.size();
  const std::size_t bs = std::max<std::size_t>(1, config.batch_size);
  const std::size_t slots = std::min(bs, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<NetCache> caches(slots);
  std::vector<GradBuffer> slot_grads;
  slot_grads.reserve(slots);
  for (std::size_t s = 0; s < slots; ++s) slot_grads.push_back(make_grad_buffer(refs));
  std::vector<double> slot_loss(slots, 0.0);
  GradBuffer total = make_grad_buffer(refs);

  TrainHistory history;
  history.epoch_loss.reserve(config.epochs);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(derive_seed(config.seed, kStreamShuffle, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += bs, ++batch_index) {
      const std::size_t count = std::min(bs, n - start);
      parallel_for(count, [&](std::size_t s) {
        const std::size_t idx = order[start + s];
        for (auto& g : slot_grads[s]) std::fill(g.begin(), g.end(), 0.0);
        const std::uint64_t mask_seed =
            derive_seed(config.seed, kStreamDropout, epoch, start + s);
        const Tensor outputs = net.forward(inputs[idx], caches[s], true, mask_seed);
        Tensor d = Tensor::zeros({outputs.rows(), outputs.cols()});
        slot_loss[s] = loss(outputs, idx, &d);
        net.backward(caches[s], d, slot_grads[s]);
      });

      for (auto& g : total) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t s = 0; s < count; ++s) {
        if (!std::isfinite(slot_loss[s])) {
          throw NonFiniteGradient("train_network: non-finite loss at epoch " +
                                  std::to_string(epoch) + " batch " +
                                  std::to_string(batch_index));
        }
        epoch_sum += slot_loss[s];
        for (std::size_t k = 0; k < total.size(); ++k) {
          const auto& src = slot_grads[s][k];
          auto& dst = total[k];
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
      }
      const double inv = 1.0 / static_cast<double>(count);
      for (auto& g : total) {
        for (double& v : g) v *= inv;
      }
      adam.apply(refs, total, config.learning_rate);
    }
    history.epoch_loss.push_back(epoch_sum / static_cast<double>(n));
  }
  return history;
}

double grad_check(GraspNet& net, const ModelInput& input,
                  const std::function<double(const Tensor& outputs, Tensor* d)>& loss,
                  double eps, bool train_mode, std::uint64_t mask_seed) {
  const std::vector<ParamRef> refs = net.param_refs();
  NetCache cache;
  const Tensor outputs = net.forward(input, cache, train_mode, mask_seed);
  Tensor d = Tensor::zeros({outputs.rows(), outputs.cols()});
  loss(outputs, &d);
  GradBuffer analytic = make_grad_buffer(refs);
  net.backward(cache, d, analytic);

  double max_rel = 0.0;
  NetCache scratch;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    std::vector<double>& value = *refs[k].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + eps;
      const double lp = loss(net.forward(input, scratch, train_mode, mask_seed), nullptr);
      value[i] = orig - eps;
      const double lm = loss(net.forward(input, scratch, train_mode, mask_seed), nullptr);
      value[i] = orig;
      const double gn = (lp - lm) / (2.0 * eps);
      const double ga = analytic[k][i];
      const double rel = std::abs(ga - gn) / std::max(1e-8, std::abs(ga) + std::abs(gn));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kFormatTag = "graspred-model-v1";

ordered_json spec_json(const NetSpec& s) {
  ordered_json j;
  j["seq_input"] = s.seq_input;
  j["lstm_hidden"] = s.lstm_hidden;
  j["mjt_branches"] = s.mjt_branches;
  j["position_branch"] = s.position_branch;
  j["time_branch"] = s.time_branch;
  j["trunk"] = s.trunk;
  j["output"] = s.output;
  j["dropout_rate"] = s.dropout_rate;
  return j;
}

NetSpec spec_from_json(const nlohmann::json& j) {
  NetSpec s;
  s.seq_input = j.at("seq_input").get<std::size_t>();
  s.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  s.mjt_branches = j.at("mjt_branches").get<bool>();
  s.position_branch = j.at("position_branch").get<std::size_t>();
  s.time_branch = j.at("time_branch").get<std::size_t>();
  s.trunk = j.at("trunk").get<std::size_t>();
  s.output = j.at("output").get<std::size_t>();
  s.dropout_rate = j.at("dropout_rate").get<double>();
  return s;
}

ordered_json config_json(const TrainConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["dropout_rate"] = c.dropout_rate;
  j["seed"] = c.seed;
  j["weight_time"] = c.weight_time;
  j["weight_position"] = c.weight_position;
  j["lambda_smooth"] = c.lambda_smooth;
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.weight_time = j.at("weight_time").get<double>();
  c.weight_position = j.at("weight_position").get<double>();
  c.lambda_smooth = j.at("lambda_smooth").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const GraspNet& net, const TrainConfig& config,
                     const std::string& model_tag, const std::filesystem::path& path) {
  ordered_json j;
  j["format"] = kFormatTag;
  j["model"] = model_tag;
  j["architecture"] = spec_json(net.spec());
  j["train_config"] = config_json(config);

  ordered_json blocks = ordered_json::array();
  ordered_json params = ordered_json::array();
  for (const ParamRef& r : net.param_refs()) {
    ordered_json b;
    b["name"] = r.name;
    b["shape"] = r.shape;
    blocks.push_back(b);
    for (double v : *r.value) params.push_back(v);
  }
  j["blocks"] = blocks;
  j["params"] = params;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kFormatTag) {
    throw ParseError(path.string() + ": not a " + std::string(kFormatTag) + " checkpoint");
  }

  Checkpoint cp;
  try {
    cp.model_tag = j.at("model").get<std::string>();
    cp.net = GraspNet(spec_from_json(j.at("architecture")), 0);
    cp.config = config_from_json(j.at("train_config"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  const std::vector<ParamRef> refs = cp.net.param_refs();
  const nlohmann::json& blocks = j.at("blocks");
  if (!blocks.is_array() || blocks.size() != refs.size()) {
    throw ShapeMismatch(path.string() + ": checkpoint block count " +
                        std::to_string(blocks.size()) + " != expected " +
                        std::to_string(refs.size()));
  }
  std::size_t expected_total = 0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const std::string name = blocks[k].value("name", "");
    const auto shape = blocks[k].at("shape").get<std::vector<std::size_t>>();
    if (name != refs[k].name || shape != refs[k].shape) {
      throw ShapeMismatch(path.string() + ": block '" + name + "' does not match '" +
                          refs[k].name + "'");
    }
    expected_total += refs[k].value->size();
  }
  const nlohmann::json& params = j.at("params");
  if (!params.is_array() || params.size() != expected_total) {
    throw ShapeMismatch(path.string() + ": parameter count " +
                        std::to_string(params.size()) + " != expected " +
                        std::to_string(expected_total));
  }
  std::size_t cursor = 0;
  for (const ParamRef& r : refs) {
    for (double& v : *r.value) v = params[cursor++].get<double>();
  }
  return cp;
}

}  // namespace graspred
