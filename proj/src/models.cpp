#include "framec/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "framec/errors.hpp"
#include "framec/synthgen.hpp"

namespace framec::model {

using nlohmann::json;
using seq::Matrix;

std::string to_string(Arch a) {
  switch (a) {
    case Arch::lstm: return "lstm";
    case Arch::cnn1d: return "cnn1d";
    case Arch::logistic: return "logistic";
  }
  return "?";
}

Arch arch_from_string(const std::string& s) {
  if (s == "lstm") return Arch::lstm;
  if (s == "cnn1d" || s == "cnn") return Arch::cnn1d;
  if (s == "logistic") return Arch::logistic;
  throw ConfigError("unknown architecture '" + s + "'");
}

void ModelConfig::validate() const {
  if (input_dim <= 0) throw ConfigError("input_dim must be positive");
  if (burst_dim < 0) throw ConfigError("burst_dim must be >= 0");
  if (hidden <= 0 || cnn_channels <= 0) throw ConfigError("hidden sizes must be positive");
  if (cnn_kernel <= 0 || cnn_kernel % 2 == 0) throw ConfigError("cnn_kernel must be a positive odd number");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size <= 0 || epochs <= 0) throw ConfigError("batch_size and epochs must be positive");
}

json to_json(const ModelConfig& c) {
  return {{"arch", to_string(c.arch)}, {"input_dim", c.input_dim},   {"burst_dim", c.burst_dim},
          {"hidden", c.hidden},        {"cnn_channels", c.cnn_channels}, {"cnn_kernel", c.cnn_kernel},
          {"lr", c.lr},                {"batch_size", c.batch_size}, {"epochs", c.epochs},
          {"seed", c.seed},            {"beta1", c.beta1},           {"beta2", c.beta2},
          {"eps", c.eps}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.arch = arch_from_string(j.value("arch", to_string(c.arch)));
    c.input_dim = j.value("input_dim", c.input_dim);
    c.burst_dim = j.value("burst_dim", c.burst_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.cnn_channels = j.value("cnn_channels", c.cnn_channels);
    c.cnn_kernel = j.value("cnn_kernel", c.cnn_kernel);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

namespace {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoders

/// Scratch buffers kept between forward and backward of one sample.
struct EncoderCache {
  std::vector<double> a, b, c, d;
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual std::unique_ptr<Encoder> clone() const = 0;
  virtual int output_dim() const = 0;
  virtual std::vector<ParamBlock> param_blocks() const = 0;  // offsets relative to the encoder
  virtual void init(double* p, std::mt19937_64& rng) const = 0;
  virtual void forward(const Matrix& x, int valid, const double* p, double* out,
                       EncoderCache& cache) const = 0;
  virtual void backward(const Matrix& x, int valid, const double* p, const double* dout,
                        const EncoderCache& cache, double* g) const = 0;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& b : param_blocks()) n += b.size;
    return n;
  }
};

namespace {

ParamBlock block(std::string name, std::vector<int> shape, std::size_t& offset) {
  std::size_t size = 1;
  for (int s : shape) size *= static_cast<std::size_t>(s);
  ParamBlock b{std::move(name), std::move(shape), offset, size};
  offset += size;
  return b;
}

void fill_uniform(double* p, std::size_t n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (std::size_t i = 0; i < n; ++i) p[i] = u(rng);
}

/// Single-layer LSTM; gate order i, f, g, o; output is the last valid hidden state.
class LstmEncoder final : public Encoder {
 public:
  LstmEncoder(int input, int hidden) : d_(input), h_(hidden) {}
  std::unique_ptr<Encoder> clone() const override { return std::make_unique<LstmEncoder>(*this); }
  int output_dim() const override { return h_; }

  std::vector<ParamBlock> param_blocks() const override {
    std::size_t off = 0;
    return {block("W", {4 * h_, d_}, off), block("U", {4 * h_, h_}, off), block("b", {4 * h_}, off)};
  }

  void init(double* p, std::mt19937_64& rng) const override {
    const double bound = 1.0 / std::sqrt(static_cast<double>(h_));
    fill_uniform(p, w_size() + u_size(), bound, rng);
    double* b = p + w_size() + u_size();
    std::fill(b, b + 4 * h_, 0.0);
    std::fill(b + h_, b + 2 * h_, 1.0);  // forget-gate bias
  }

  // cache.a: gate activations T x 4H; cache.b: cell states (T+1) x H;
  // cache.c: hidden states (T+1) x H; cache.d: tanh(c_t) T x H.
  void forward(const Matrix& x, int T, const double* p, double* out,
               EncoderCache& cache) const override {
    const int H = h_, G = 4 * h_;
    const double* W = p;
    const double* U = p + w_size();
    const double* b = U + u_size();
    cache.a.assign(static_cast<std::size_t>(T) * G, 0.0);
    cache.b.assign(static_cast<std::size_t>(T + 1) * H, 0.0);
    cache.c.assign(static_cast<std::size_t>(T + 1) * H, 0.0);
    cache.d.assign(static_cast<std::size_t>(T) * H, 0.0);
    std::vector<double> xt(d_), z(G);
    for (int t = 0; t < T; ++t) {
      const auto col = x.column(t);
      std::copy(col.begin(), col.end(), xt.begin());
      const double* hprev = &cache.c[static_cast<std::size_t>(t) * H];
      const double* cprev = &cache.b[static_cast<std::size_t>(t) * H];
      for (int r = 0; r < G; ++r) {
        double s = b[r];
        const double* wr = W + static_cast<std::size_t>(r) * d_;
        for (int j = 0; j < d_; ++j) s += wr[j] * xt[j];
        const double* ur = U + static_cast<std::size_t>(r) * H;
        for (int j = 0; j < H; ++j) s += ur[j] * hprev[j];
        z[r] = s;
      }
      double* gate = &cache.a[static_cast<std::size_t>(t) * G];
      double* cnext = &cache.b[static_cast<std::size_t>(t + 1) * H];
      double* hnext = &cache.c[static_cast<std::size_t>(t + 1) * H];
      double* tc = &cache.d[static_cast<std::size_t>(t) * H];
      for (int k = 0; k < H; ++k) {
        const double i = sigmoid(z[k]);
        const double f = sigmoid(z[H + k]);
        const double g = std::tanh(z[2 * H + k]);
        const double o = sigmoid(z[3 * H + k]);
        gate[k] = i;
        gate[H + k] = f;
        gate[2 * H + k] = g;
        gate[3 * H + k] = o;
        cnext[k] = f * cprev[k] + i * g;
        tc[k] = std::tanh(cnext[k]);
        hnext[k] = o * tc[k];
      }
    }
    std::copy_n(&cache.c[static_cast<std::size_t>(T) * H], H, out);
  }

  void backward(const Matrix& x, int T, const double* p, const double* dout,
                const EncoderCache& cache, double* g) const override {
    const int H = h_, G = 4 * h_;
    const double* U = p + w_size();
    double* gW = g;
    double* gU = g + w_size();
    double* gb = gU + u_size();
    std::vector<double> dh(dout, dout + H), dc(H, 0.0), dz(G), dh_prev(H);
    for (int t = T - 1; t >= 0; --t) {
      const double* gate = &cache.a[static_cast<std::size_t>(t) * G];
      const double* cprev = &cache.b[static_cast<std::size_t>(t) * H];
      const double* hprev = &cache.c[static_cast<std::size_t>(t) * H];
      const double* tc = &cache.d[static_cast<std::size_t>(t) * H];
      for (int k = 0; k < H; ++k) {
        const double i = gate[k], f = gate[H + k], gg = gate[2 * H + k], o = gate[3 * H + k];
        const double d_o = dh[k] * tc[k];
        const double dck = dc[k] + dh[k] * o * (1.0 - tc[k] * tc[k]);
        dz[k] = dck * gg * i * (1.0 - i);
        dz[H + k] = dck * cprev[k] * f * (1.0 - f);
        dz[2 * H + k] = dck * i * (1.0 - gg * gg);
        dz[3 * H + k] = d_o * o * (1.0 - o);
        dc[k] = dck * f;
      }
      const auto col = x.column(t);
      std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
      for (int r = 0; r < G; ++r) {
        const double dzr = dz[r];
        if (dzr == 0.0) continue;
        double* gwr = gW + static_cast<std::size_t>(r) * d_;
        for (int j = 0; j < d_; ++j) gwr[j] += dzr * col[j];
        double* gur = gU + static_cast<std::size_t>(r) * H;
        const double* ur = U + static_cast<std::size_t>(r) * H;
        for (int j = 0; j < H; ++j) {
          gur[j] += dzr * hprev[j];
          dh_prev[j] += dzr * ur[j];
        }
        gb[r] += dzr;
      }
      dh.swap(dh_prev);
    }
  }

 private:
  std::size_t w_size() const { return static_cast<std::size_t>(4 * h_) * d_; }
  std::size_t u_size() const { return static_cast<std::size_t>(4 * h_) * h_; }
  int d_, h_;
};

/// Two same-padded conv layers with ReLU, then mean over valid positions.
/// Positions outside [0, valid) read as zero, so pad content never matters.
class CnnEncoder final : public Encoder {
 public:
  CnnEncoder(int input, int channels, int kernel) : d_(input), c_(channels), k_(kernel) {}
  std::unique_ptr<Encoder> clone() const override { return std::make_unique<CnnEncoder>(*this); }
  int output_dim() const override { return c_; }

  std::vector<ParamBlock> param_blocks() const override {
    std::size_t off = 0;
    return {block("W1", {c_, k_, d_}, off), block("b1", {c_}, off), block("W2", {c_, k_, c_}, off),
            block("b2", {c_}, off)};
  }

  void init(double* p, std::mt19937_64& rng) const override {
    fill_uniform(p, w1(), 1.0 / std::sqrt(static_cast<double>(d_ * k_)), rng);
    std::fill(p + w1(), p + w1() + c_, 0.0);
    double* W2 = p + w1() + c_;
    fill_uniform(W2, w2(), 1.0 / std::sqrt(static_cast<double>(c_ * k_)), rng);
    std::fill(W2 + w2(), W2 + w2() + c_, 0.0);
  }

  // cache.a: layer-1 pre-activations T x C; cache.b: layer-1 ReLU T x C;
  // cache.c: layer-2 pre-activations T x C.
  void forward(const Matrix& x, int T, const double* p, double* out,
               EncoderCache& cache) const override {
    const int C = c_;
    const double* W1 = p;
    const double* b1 = p + w1();
    const double* W2 = b1 + C;
    const double* b2 = W2 + w2();
    cache.a.assign(static_cast<std::size_t>(T) * C, 0.0);
    cache.b.assign(static_cast<std::size_t>(T) * C, 0.0);
    cache.c.assign(static_cast<std::size_t>(T) * C, 0.0);
    std::vector<double> xd(static_cast<std::size_t>(T) * d_);
    for (int t = 0; t < T; ++t) {
      const auto col = x.column(t);
      std::copy(col.begin(), col.end(), xd.begin() + static_cast<std::size_t>(t) * d_);
    }
    conv(xd.data(), d_, T, W1, b1, cache.a.data());
    for (std::size_t i = 0; i < cache.a.size(); ++i) cache.b[i] = std::max(0.0, cache.a[i]);
    conv(cache.b.data(), C, T, W2, b2, cache.c.data());
    std::fill(out, out + C, 0.0);
    if (T == 0) return;
    for (int t = 0; t < T; ++t)
      for (int o = 0; o < C; ++o) out[o] += std::max(0.0, cache.c[static_cast<std::size_t>(t) * C + o]);
    for (int o = 0; o < C; ++o) out[o] /= T;
  }

  void backward(const Matrix& x, int T, const double* p, const double* dout,
                const EncoderCache& cache, double* g) const override {
    if (T == 0) return;
    const int C = c_;
    const double* W2 = p + w1() + C;
    double* gW1 = g;
    double* gb1 = g + w1();
    double* gW2 = gb1 + C;
    double* gb2 = gW2 + w2();

    std::vector<double> da2(static_cast<std::size_t>(T) * C);
    for (int t = 0; t < T; ++t)
      for (int o = 0; o < C; ++o) {
        const std::size_t i = static_cast<std::size_t>(t) * C + o;
        da2[i] = cache.c[i] > 0.0 ? dout[o] / T : 0.0;
      }
    std::vector<double> dh1(static_cast<std::size_t>(T) * C, 0.0);
    conv_backward(cache.b.data(), C, T, W2, da2.data(), gW2, gb2, dh1.data());
    for (std::size_t i = 0; i < dh1.size(); ++i)
      if (cache.a[i] <= 0.0) dh1[i] = 0.0;

    std::vector<double> xd(static_cast<std::size_t>(T) * d_);
    for (int t = 0; t < T; ++t) {
      const auto col = x.column(t);
      std::copy(col.begin(), col.end(), xd.begin() + static_cast<std::size_t>(t) * d_);
    }
    conv_backward(xd.data(), d_, T, nullptr, dh1.data(), gW1, gb1, nullptr);
  }

 private:
  std::size_t w1() const { return static_cast<std::size_t>(c_) * k_ * d_; }
  std::size_t w2() const { return static_cast<std::size_t>(c_) * k_ * c_; }

  // in: T x din (time-major); W: C x K x din; out: T x C
  void conv(const double* in, int din, int T, const double* W, const double* b, double* out) const {
    const int pad = k_ / 2;
    for (int t = 0; t < T; ++t) {
      for (int o = 0; o < c_; ++o) {
        double s = b[o];
        for (int k = 0; k < k_; ++k) {
          const int src = t + k - pad;
          if (src < 0 || src >= T) continue;
          const double* w = W + (static_cast<std::size_t>(o) * k_ + k) * din;
          const double* xi = in + static_cast<std::size_t>(src) * din;
          for (int j = 0; j < din; ++j) s += w[j] * xi[j];
        }
        out[static_cast<std::size_t>(t) * c_ + o] = s;
      }
    }
  }

  void conv_backward(const double* in, int din, int T, const double* W, const double* dout,
                     double* gW, double* gb, double* din_grad) const {
    const int pad = k_ / 2;
    for (int t = 0; t < T; ++t) {
      for (int o = 0; o < c_; ++o) {
        const double d = dout[static_cast<std::size_t>(t) * c_ + o];
        if (d == 0.0) continue;
        gb[o] += d;
        for (int k = 0; k < k_; ++k) {
          const int src = t + k - pad;
          if (src < 0 || src >= T) continue;
          const std::size_t woff = (static_cast<std::size_t>(o) * k_ + k) * din;
          const double* xi = in + static_cast<std::size_t>(src) * din;
          double* gw = gW + woff;
          for (int j = 0; j < din; ++j) gw[j] += d * xi[j];
          if (din_grad) {
            const double* w = W + woff;
            double* gi = din_grad + static_cast<std::size_t>(src) * din;
            for (int j = 0; j < din; ++j) gi[j] += d * w[j];
          }
        }
      }
    }
  }

  int d_, c_, k_;
};

/// Mean over valid columns; no parameters of its own.
class MeanPoolEncoder final : public Encoder {
 public:
  explicit MeanPoolEncoder(int input) : d_(input) {}
  std::unique_ptr<Encoder> clone() const override { return std::make_unique<MeanPoolEncoder>(*this); }
  int output_dim() const override { return d_; }
  std::vector<ParamBlock> param_blocks() const override { return {}; }
  void init(double*, std::mt19937_64&) const override {}

  void forward(const Matrix& x, int T, const double*, double* out, EncoderCache&) const override {
    std::fill(out, out + d_, 0.0);
    if (T == 0) return;
    for (int t = 0; t < T; ++t) {
      const auto col = x.column(t);
      for (int j = 0; j < d_; ++j) out[j] += col[j];
    }
    for (int j = 0; j < d_; ++j) out[j] /= T;
  }

  void backward(const Matrix&, int, const double*, const double*, const EncoderCache&,
                double*) const override {}

 private:
  int d_;
};

std::unique_ptr<Encoder> make_encoder(const ModelConfig& cfg, int input) {
  switch (cfg.arch) {
    case Arch::lstm: return std::make_unique<LstmEncoder>(input, cfg.hidden);
    case Arch::cnn1d: return std::make_unique<CnnEncoder>(input, cfg.cnn_channels, cfg.cnn_kernel);
    case Arch::logistic: return std::make_unique<MeanPoolEncoder>(input);
  }
  throw ConfigError("unknown architecture");
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  encoders_.push_back(make_encoder(cfg_, cfg_.input_dim));
  if (cfg_.burst_dim > 0) encoders_.push_back(make_encoder(cfg_, cfg_.burst_dim));

  std::size_t offset = 0;
  const char* prefixes[] = {"spike.", "burst."};
  for (std::size_t e = 0; e < encoders_.size(); ++e) {
    encoder_offsets_.push_back(offset);
    for (auto b : encoders_[e]->param_blocks()) {
      b.name = prefixes[e] + b.name;
      b.offset += offset;
      blocks_.push_back(b);
    }
    offset += encoders_[e]->param_count();
    feature_dim_ += encoders_[e]->output_dim();
  }
  head_offset_ = offset;
  blocks_.push_back(block("head.w", {feature_dim_}, offset));
  blocks_.push_back(block("head.b", {1}, offset));
  params_.assign(offset, 0.0);

  std::mt19937_64 rng(synth::mix_seed(cfg_.seed, 0x1417));
  for (std::size_t e = 0; e < encoders_.size(); ++e)
    encoders_[e]->init(params_.data() + encoder_offsets_[e], rng);
  fill_uniform(params_.data() + head_offset_, static_cast<std::size_t>(feature_dim_),
               1.0 / std::sqrt(static_cast<double>(feature_dim_)), rng);
  params_[head_offset_ + feature_dim_] = 0.0;
}

Model::Model(const Model& o)
    : cfg_(o.cfg_),
      encoder_offsets_(o.encoder_offsets_),
      head_offset_(o.head_offset_),
      feature_dim_(o.feature_dim_),
      params_(o.params_),
      blocks_(o.blocks_) {
  for (const auto& e : o.encoders_) encoders_.push_back(e->clone());
}

Model& Model::operator=(const Model& o) {
  if (this != &o) {
    Model tmp(o);
    *this = std::move(tmp);
  }
  return *this;
}

Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;
Model::~Model() = default;

std::vector<Tensor> Model::tensors() const {
  std::vector<Tensor> out;
  for (const auto& b : blocks_)
    out.push_back({b.name, b.shape,
                   std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                       params_.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size))});
  return out;
}

void Model::check_input(const seq::FeatureSequence& s) const {
  if (s.spikes.rows != cfg_.input_dim)
    throw DataError("input dimension " + std::to_string(s.spikes.rows) + " does not match model input_dim " +
                    std::to_string(cfg_.input_dim));
  if (cfg_.burst_dim > 0 && (!s.bursts || s.bursts->rows != cfg_.burst_dim))
    throw DataError("burst stream dimension does not match model burst_dim");
  if (s.spike_valid < 0 || s.spike_valid > s.spikes.cols) throw DataError("invalid spike_valid");
}

double Model::logit(const seq::FeatureSequence& s) const {
  check_input(s);
  std::vector<double> feat(static_cast<std::size_t>(feature_dim_));
  EncoderCache cache;
  int off = 0;
  for (std::size_t e = 0; e < encoders_.size(); ++e) {
    const Matrix& x = e == 0 ? s.spikes : *s.bursts;
    const int valid = e == 0 ? s.spike_valid : s.burst_valid;
    encoders_[e]->forward(x, valid, params_.data() + encoder_offsets_[e], feat.data() + off, cache);
    off += encoders_[e]->output_dim();
  }
  double z = params_[head_offset_ + feature_dim_];
  for (int j = 0; j < feature_dim_; ++j) z += params_[head_offset_ + j] * feat[j];
  return z;
}

double Model::forward(const seq::FeatureSequence& s) const { return sigmoid(logit(s)); }

double Model::accumulate_gradient(const seq::FeatureSequence& s, int label, double scale,
                                  std::span<double> grad) const {
  check_input(s);
  if (grad.size() != params_.size()) throw ConfigError("gradient buffer size mismatch");
  std::vector<double> feat(static_cast<std::size_t>(feature_dim_));
  std::vector<EncoderCache> caches(encoders_.size());
  int off = 0;
  for (std::size_t e = 0; e < encoders_.size(); ++e) {
    const Matrix& x = e == 0 ? s.spikes : *s.bursts;
    const int valid = e == 0 ? s.spike_valid : s.burst_valid;
    encoders_[e]->forward(x, valid, params_.data() + encoder_offsets_[e], feat.data() + off, caches[e]);
    off += encoders_[e]->output_dim();
  }
  double z = params_[head_offset_ + feature_dim_];
  for (int j = 0; j < feature_dim_; ++j) z += params_[head_offset_ + j] * feat[j];
  const double p = sigmoid(z);
  const double loss = bce_loss(p, label);

  // d loss / d logit for sigmoid + cross-entropy.
  const double dz = scale * (p - static_cast<double>(label));
  std::vector<double> dfeat(static_cast<std::size_t>(feature_dim_));
  for (int j = 0; j < feature_dim_; ++j) {
    grad[head_offset_ + j] += dz * feat[j];
    dfeat[j] = dz * params_[head_offset_ + j];
  }
  grad[head_offset_ + feature_dim_] += dz;

  off = 0;
  for (std::size_t e = 0; e < encoders_.size(); ++e) {
    const Matrix& x = e == 0 ? s.spikes : *s.bursts;
    const int valid = e == 0 ? s.spike_valid : s.burst_valid;
    encoders_[e]->backward(x, valid, params_.data() + encoder_offsets_[e], dfeat.data() + off, caches[e],
                           grad.data() + encoder_offsets_[e]);
    off += encoders_[e]->output_dim();
  }
  return loss;
}

void Model::round_to_float() {
  for (double& v : params_) v = static_cast<double>(static_cast<float>(v));
}

double bce_loss(double prob, int label) {
  const double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

BatchResult batch_loss_and_grad(const Model& m, std::span<const seq::FeatureSequence> batch,
                                double loss_scale) {
  if (batch.empty()) throw DataError("empty batch");
  BatchResult r;
  r.grad.assign(m.parameters().size(), 0.0);
  const double scale = loss_scale / static_cast<double>(batch.size());
  for (const auto& s : batch) r.loss += m.accumulate_gradient(s, to_int(s.label), scale, r.grad);
  r.loss = loss_scale * r.loss / static_cast<double>(batch.size());
  return r;
}

std::vector<double> predict(const Model& m, std::span<const seq::FeatureSequence> seqs) {
  std::vector<double> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(m.forward(s));
  return out;
}

void seeded_shuffle(std::vector<std::size_t>& idx, std::uint64_t seed) {
  std::uint64_t state = seed;
  for (std::size_t i = idx.size(); i > 1; --i) {
    state = synth::mix_seed(state, i);
    const std::size_t j = static_cast<std::size_t>(state % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

namespace {

double accuracy_of(const Model& m, std::span<const seq::FeatureSequence> seqs) {
  if (seqs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t correct = 0;
  for (const auto& s : seqs) correct += (m.forward(s) >= 0.5 ? 1 : 0) == to_int(s.label);
  return static_cast<double>(correct) / static_cast<double>(seqs.size());
}

}  // namespace

TrainResult train(const ModelConfig& cfg, std::span<const seq::FeatureSequence> train_set,
                  std::span<const seq::FeatureSequence> val_set) {
  if (train_set.empty()) throw DataError("training set is empty");
  bool has0 = false, has1 = false;
  for (const auto& s : train_set) (to_int(s.label) ? has1 : has0) = true;
  if (!(has0 && has1)) throw DataError("training set contains a single class");

  TrainResult res{Model(cfg), {}};
  Model& m = res.model;
  res.report.seed = cfg.seed;
  res.report.config = m.config();

  auto params = m.parameters();
  const std::size_t np = params.size();
  std::vector<double> mom(np, 0.0), vel(np, 0.0), grad(np);
  std::vector<std::size_t> order(train_set.size());
  std::int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    seeded_shuffle(order, synth::mix_seed(cfg.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train_set[order[k]];
        const double l = m.accumulate_gradient(s, to_int(s.label), scale, grad);
        if (!std::isfinite(l)) throw NumericalError("non-finite loss in epoch " + std::to_string(epoch));
        loss_sum += l;
        // The loss is bounded by the clamp; recover the prediction from it.
        const double p_true = std::exp(-l);
        correct += p_true > 0.5 ? 1 : 0;
      }
      for (double g : grad)
        if (!std::isfinite(g)) throw NumericalError("non-finite gradient in epoch " + std::to_string(epoch));

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < np; ++i) {
        mom[i] = cfg.beta1 * mom[i] + (1.0 - cfg.beta1) * grad[i];
        vel[i] = cfg.beta2 * vel[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        params[i] -= cfg.lr * (mom[i] / bc1) / (std::sqrt(vel[i] / bc2) + cfg.eps);
      }
    }
    res.report.epochs.push_back({loss_sum / static_cast<double>(order.size()),
                                 static_cast<double>(correct) / static_cast<double>(order.size())});
  }

  m.round_to_float();
  res.report.final_train_accuracy = accuracy_of(m, train_set);
  res.report.val_accuracy = accuracy_of(m, val_set);
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'F', 'R', 'M', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
  if (pos + 4 > buf.size()) throw FormatError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

std::string get_bytes(const std::string& buf, std::size_t& pos, std::size_t n) {
  if (pos + n > buf.size()) throw FormatError("checkpoint truncated");
  std::string s = buf.substr(pos, n);
  pos += n;
  return s;
}

}  // namespace

void save_checkpoint(const Model& m, const json& extra, const std::filesystem::path& path) {
  std::string buf(kMagic, sizeof(kMagic));
  put_u32(buf, kVersion);
  const std::string header = json{{"model", to_json(m.config())}, {"extra", extra}}.dump();
  put_u32(buf, static_cast<std::uint32_t>(header.size()));
  buf += header;
  const auto tensors = m.tensors();
  put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(buf, static_cast<std::uint32_t>(t.name.size()));
    buf += t.name;
    put_u32(buf, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(buf, static_cast<std::uint32_t>(d));
    for (double v : t.data) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Model load_checkpoint(const std::filesystem::path& path, json* extra) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  if (get_bytes(buf, pos, sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw FormatError("not a checkpoint file: " + path.string());
  if (get_u32(buf, pos) != kVersion) throw FormatError("unsupported checkpoint version");
  json header;
  try {
    header = json::parse(get_bytes(buf, pos, get_u32(buf, pos)));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  Model m(model_config_from_json(header.at("model")));
  if (extra) *extra = header.value("extra", json::object());

  const std::uint32_t n = get_u32(buf, pos);
  if (n != m.blocks().size()) throw FormatError("checkpoint tensor count does not match model");
  auto params = m.parameters();
  for (const auto& b : m.blocks()) {
    const std::string name = get_bytes(buf, pos, get_u32(buf, pos));
    if (name != b.name) throw FormatError("checkpoint tensor '" + name + "' where '" + b.name + "' expected");
    const std::uint32_t ndim = get_u32(buf, pos);
    if (ndim != b.shape.size()) throw FormatError("checkpoint tensor rank mismatch for " + name);
    for (std::uint32_t d = 0; d < ndim; ++d)
      if (get_u32(buf, pos) != static_cast<std::uint32_t>(b.shape[d]))
        throw FormatError("checkpoint tensor shape mismatch for " + name);
    for (std::size_t i = 0; i < b.size; ++i) params[b.offset + i] = std::bit_cast<float>(get_u32(buf, pos));
  }
  return m;
}

}  // namespace framec::model
