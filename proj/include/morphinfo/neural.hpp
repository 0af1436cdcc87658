#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "morphinfo/errors.hpp"
#include "morphinfo/lexicon.hpp"
#include "morphinfo/rng.hpp"

// Character-level LSTM classifier estimating q(c | w, g), trained with Adam.
// Forward and backward passes are written out by hand in double precision.
namespace morphinfo::nn {

struct ModelConfig {
  std::size_t char_embedding_dim = 32;
  std::size_t gender_embedding_dim = 64;  // must equal hidden_dims[0]
  std::vector<std::size_t> hidden_dims{64};
  std::size_t epochs = 30;
  double learning_rate = 5e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    if (char_embedding_dim == 0 || gender_embedding_dim == 0 || epochs == 0 || batch_size == 0) {
      throw Error("model dimensions, epochs and batch size must be >= 1");
    }
    if (hidden_dims.empty()) throw Error("at least one recurrent layer is required");
    for (auto h : hidden_dims) {
      if (h == 0) throw Error("hidden layer sizes must be >= 1");
    }
    if (gender_embedding_dim != hidden_dims.front()) {
      throw Error("gender_embedding_dim must equal the first hidden layer size");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw Error("learning_rate must be finite and non-negative");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"char_embedding_dim", c.char_embedding_dim},
       {"gender_embedding_dim", c.gender_embedding_dim},
       {"hidden_dims", c.hidden_dims},
       {"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"seed", c.seed}};
}

// Missing keys keep their defaults, so partial config files are accepted.
// gender_embedding_dim follows hidden_dims[0] unless given explicitly.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.char_embedding_dim = j.value("char_embedding_dim", c.char_embedding_dim);
  c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
  c.gender_embedding_dim =
      j.value("gender_embedding_dim", c.hidden_dims.empty() ? 0 : c.hidden_dims.front());
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
}

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;
inline constexpr double kInitRange = 0.1;
inline constexpr double kForgetBiasInit = 1.0;

inline constexpr std::string_view kUnkSymbol = "<unk>";
inline constexpr std::string_view kEtymSemiticSymbol = "<etym:semitic>";
inline constexpr std::string_view kEtymNonSemiticSymbol = "<etym:non-semitic>";

// Symbol and label index maps. Symbol indices: 0 = UNK, 1 = Semitic marker,
// 2 = non-Semitic marker, then the training alphabet in sorted order.
class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kEtymSemitic = 1;
  static constexpr std::size_t kEtymNonSemitic = 2;

  Vocabulary() = default;
  Vocabulary(std::vector<std::string> symbols, std::vector<std::string> labels)
      : symbols_(std::move(symbols)), labels_(std::move(labels)) {
    if (symbols_.size() < 3 || symbols_[kUnk] != kUnkSymbol ||
        symbols_[kEtymSemitic] != kEtymSemiticSymbol ||
        symbols_[kEtymNonSemitic] != kEtymNonSemiticSymbol) {
      throw Error("vocabulary must start with the UNK and etymology symbols");
    }
    for (std::size_t i = 0; i < symbols_.size(); ++i) symbol_index_.emplace(symbols_[i], i);
    if (symbol_index_.size() != symbols_.size()) throw Error("duplicate vocabulary symbol");
  }

  // Alphabet from the given (training) instances only; labels from the task's
  // full label space so that outputs align across folds.
  static Vocabulary build(const InstanceSet& training) {
    std::set<std::string> alphabet;
    for (const auto& inst : training.instances) {
      alphabet.insert(inst.form_symbols.begin(), inst.form_symbols.end());
    }
    std::vector<std::string> symbols{std::string(kUnkSymbol), std::string(kEtymSemiticSymbol),
                                     std::string(kEtymNonSemiticSymbol)};
    symbols.insert(symbols.end(), alphabet.begin(), alphabet.end());
    return {std::move(symbols), training.label_space};
  }

  std::size_t symbol_count() const { return symbols_.size(); }
  std::size_t label_count() const { return labels_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::vector<std::string>& labels() const { return labels_; }

  std::size_t symbol_index(const std::string& s) const {
    auto it = symbol_index_.find(s);
    return it == symbol_index_.end() ? kUnk : it->second;
  }

  bool operator==(const Vocabulary& o) const {
    return symbols_ == o.symbols_ && labels_ == o.labels_;
  }

 private:
  std::vector<std::string> symbols_;
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t> symbol_index_;
};

struct Encoded {
  std::vector<std::size_t> symbols;
  std::size_t gender = 0;
};

inline Encoded encode(const Instance& inst, const Vocabulary& vocab, bool include_etymology) {
  Encoded out;
  out.gender = static_cast<std::size_t>(inst.gender);
  out.symbols.reserve(inst.form_symbols.size() + 1);
  for (const auto& s : inst.form_symbols) out.symbols.push_back(vocab.symbol_index(s));
  if (include_etymology) {
    out.symbols.push_back(inst.etymology == Etymology::kSemitic ? Vocabulary::kEtymSemitic
                                                                : Vocabulary::kEtymNonSemitic);
  }
  return out;
}

// Row-major dense matrix; vectors are n x 1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool operator==(const Tensor&) const = default;
};

struct LstmLayer {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor weight;  // (4h) x (input + h); gate blocks ordered input, forget, candidate, output
  Tensor bias;    // (4h) x 1

  bool operator==(const LstmLayer&) const = default;
};

struct Parameters {
  Tensor char_embedding;    // symbols x char_dim
  Tensor gender_embedding;  // genders x hidden_dims[0]
  std::vector<LstmLayer> layers;
  Tensor output_weight;  // labels x hidden_dims.back()
  Tensor output_bias;    // labels x 1

  bool operator==(const Parameters&) const = default;

  static Parameters zeros_like(const ModelConfig& config, std::size_t symbols, std::size_t labels) {
    Parameters p;
    p.char_embedding = Tensor(symbols, config.char_embedding_dim);
    p.gender_embedding = Tensor(kNumGenders, config.gender_embedding_dim);
    std::size_t in = config.char_embedding_dim;
    for (auto h : config.hidden_dims) {
      p.layers.push_back({in, h, Tensor(4 * h, in + h), Tensor(4 * h, 1)});
      in = h;
    }
    p.output_weight = Tensor(labels, in);
    p.output_bias = Tensor(labels, 1);
    return p;
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    fn("char_embedding", char_embedding);
    fn("gender_embedding", gender_embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      fn("lstm." + std::to_string(l) + ".weight", layers[l].weight);
      fn("lstm." + std::to_string(l) + ".bias", layers[l].bias);
    }
    fn("output.weight", output_weight);
    fn("output.bias", output_bias);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    const_cast<Parameters*>(this)->for_each(
        [&](const std::string& name, Tensor& t) { fn(name, static_cast<const Tensor&>(t)); });
  }

  void zero() {
    for_each([](const std::string&, Tensor& t) { t.zero(); });
  }
  std::size_t count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
  }
};

struct AdamState {
  Parameters first_moment;
  Parameters second_moment;
  std::uint64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

struct ClassifierModel {
  ModelConfig config;
  Vocabulary vocabulary;
  Parameters parameters;
  AdamState optimizer;
  std::uint64_t epochs_trained = 0;

  bool operator==(const ClassifierModel&) const = default;

  std::size_t label_count() const { return vocabulary.label_count(); }
};

// Uniform(-0.1, 0.1) everywhere except the forget-gate bias block, which
// starts at 1.0.
inline ClassifierModel initialize(const ModelConfig& config, Vocabulary vocabulary) {
  config.validate();
  if (vocabulary.label_count() == 0) throw ShapeMismatch("empty label space");
  ClassifierModel model;
  model.config = config;
  model.parameters =
      Parameters::zeros_like(config, vocabulary.symbol_count(), vocabulary.label_count());
  Rng rng(config.seed);
  model.parameters.for_each([&](const std::string&, Tensor& t) {
    for (auto& x : t.data) x = rng.uniform(-kInitRange, kInitRange);
  });
  for (auto& layer : model.parameters.layers) {
    const auto h = layer.hidden_dim;
    for (std::size_t r = h; r < 2 * h; ++r) layer.bias(r, 0) = kForgetBiasInit;
  }
  model.optimizer.first_moment = Parameters::zeros_like(config, vocabulary.symbol_count(),
                                                        vocabulary.label_count());
  model.optimizer.second_moment = model.optimizer.first_moment;
  model.vocabulary = std::move(vocabulary);
  return model;
}

namespace detail {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Per-step activations of one layer, kept for the backward pass.
struct LayerTrace {
  std::vector<std::vector<double>> xh;     // [t] concatenated input and previous hidden
  std::vector<std::vector<double>> gates;  // [t] i, f, g, o activations (4h)
  std::vector<std::vector<double>> cell;   // [t] c_t
  std::vector<std::vector<double>> tanh_cell;
  std::vector<std::vector<double>> hidden;  // [t] h_t
};

struct Trace {
  std::vector<LayerTrace> layers;
  std::vector<double> logits;
  std::vector<double> probs;
  double log_norm = 0.0;  // logsumexp of logits
};

inline void check_input(const ClassifierModel& model, std::span<const std::size_t> symbols,
                        std::size_t gender) {
  if (symbols.empty()) throw ShapeMismatch("empty input sequence");
  if (gender >= model.parameters.gender_embedding.rows) throw ShapeMismatch("gender index out of range");
  for (auto s : symbols) {
    if (s >= model.parameters.char_embedding.rows) throw ShapeMismatch("symbol index out of range");
  }
}

inline void run_forward(const Parameters& p, std::span<const std::size_t> symbols,
                        std::size_t gender, Trace& trace) {
  const std::size_t steps = symbols.size();
  trace.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const std::size_t in = layer.input_dim;
    const std::size_t h = layer.hidden_dim;
    auto& lt = trace.layers[l];
    lt.xh.resize(steps);
    lt.gates.resize(steps);
    lt.cell.resize(steps);
    lt.tanh_cell.resize(steps);
    lt.hidden.resize(steps);

    for (std::size_t t = 0; t < steps; ++t) {
      auto& xh = lt.xh[t];
      xh.resize(in + h);
      if (l == 0) {
        const double* emb = p.char_embedding.row(symbols[t]);
        std::copy(emb, emb + in, xh.begin());
      } else {
        const auto& below = trace.layers[l - 1].hidden[t];
        std::copy(below.begin(), below.end(), xh.begin());
      }
      if (t > 0) {
        std::copy(lt.hidden[t - 1].begin(), lt.hidden[t - 1].end(), xh.begin() + in);
      } else if (l == 0) {
        const double* g = p.gender_embedding.row(gender);
        std::copy(g, g + h, xh.begin() + in);
      } else {
        std::fill(xh.begin() + in, xh.end(), 0.0);
      }

      auto& gates = lt.gates[t];
      gates.resize(4 * h);
      const std::size_t width = in + h;
      for (std::size_t r = 0; r < 4 * h; ++r) {
        const double* w = layer.weight.row(r);
        double z = layer.bias.data[r];
        for (std::size_t c = 0; c < width; ++c) z += w[c] * xh[c];
        gates[r] = (r >= 2 * h && r < 3 * h) ? std::tanh(z) : sigmoid(z);
      }

      auto& cell = lt.cell[t];
      auto& tc = lt.tanh_cell[t];
      auto& hid = lt.hidden[t];
      cell.resize(h);
      tc.resize(h);
      hid.resize(h);
      for (std::size_t k = 0; k < h; ++k) {
        const double prev = t > 0 ? lt.cell[t - 1][k] : 0.0;
        cell[k] = gates[h + k] * prev + gates[k] * gates[2 * h + k];
        tc[k] = std::tanh(cell[k]);
        hid[k] = gates[3 * h + k] * tc[k];
      }
    }
  }

  const auto& top = trace.layers.back().hidden[steps - 1];
  const std::size_t labels = p.output_weight.rows;
  trace.logits.resize(labels);
  for (std::size_t r = 0; r < labels; ++r) {
    const double* w = p.output_weight.row(r);
    double z = p.output_bias.data[r];
    for (std::size_t c = 0; c < top.size(); ++c) z += w[c] * top[c];
    trace.logits[r] = z;
  }
  const double mx = *std::max_element(trace.logits.begin(), trace.logits.end());
  double sum = 0.0;
  trace.probs.resize(labels);
  for (std::size_t r = 0; r < labels; ++r) {
    trace.probs[r] = std::exp(trace.logits[r] - mx);
    sum += trace.probs[r];
  }
  for (auto& q : trace.probs) q /= sum;
  trace.log_norm = mx + std::log(sum);
}

// Accumulates scale * d(-log2 q(target))/dθ into grads.
inline void run_backward(const Parameters& p, std::span<const std::size_t> symbols,
                         std::size_t gender, std::size_t target, const Trace& trace, double scale,
                         Parameters& grads) {
  const std::size_t steps = symbols.size();
  const std::size_t labels = p.output_weight.rows;
  const double to_bits = scale / std::log(2.0);

  std::vector<double> dlogits(labels);
  for (std::size_t r = 0; r < labels; ++r) {
    dlogits[r] = (trace.probs[r] - (r == target ? 1.0 : 0.0)) * to_bits;
  }
  const auto& top = trace.layers.back().hidden[steps - 1];
  const std::size_t top_h = top.size();
  std::vector<double> dtop(top_h, 0.0);
  for (std::size_t r = 0; r < labels; ++r) {
    double* gw = grads.output_weight.row(r);
    const double* w = p.output_weight.row(r);
    grads.output_bias.data[r] += dlogits[r];
    for (std::size_t c = 0; c < top_h; ++c) {
      gw[c] += dlogits[r] * top[c];
      dtop[c] += w[c] * dlogits[r];
    }
  }

  // dh_from_above[t] for the current layer.
  std::vector<std::vector<double>> dh_above(steps, std::vector<double>(top_h, 0.0));
  dh_above[steps - 1] = dtop;

  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const auto& layer = p.layers[l];
    auto& glayer = grads.layers[l];
    const auto& lt = trace.layers[l];
    const std::size_t in = layer.input_dim;
    const std::size_t h = layer.hidden_dim;
    const std::size_t width = in + h;

    std::vector<std::vector<double>> dx(steps, std::vector<double>(in, 0.0));
    std::vector<double> dh_next(h, 0.0);
    std::vector<double> dc_next(h, 0.0);
    std::vector<double> dz(4 * h);
    std::vector<double> dxh(width);

    for (std::size_t t = steps; t-- > 0;) {
      const auto& gates = lt.gates[t];
      for (std::size_t k = 0; k < h; ++k) {
        const double dh = dh_next[k] + dh_above[t][k];
        const double i = gates[k], f = gates[h + k], g = gates[2 * h + k], o = gates[3 * h + k];
        const double tc = lt.tanh_cell[t][k];
        const double dc = dc_next[k] + dh * o * (1.0 - tc * tc);
        const double c_prev = t > 0 ? lt.cell[t - 1][k] : 0.0;
        dz[k] = dc * g * i * (1.0 - i);
        dz[h + k] = dc * c_prev * f * (1.0 - f);
        dz[2 * h + k] = dc * i * (1.0 - g * g);
        dz[3 * h + k] = dh * tc * o * (1.0 - o);
        dc_next[k] = dc * f;
      }
      std::fill(dxh.begin(), dxh.end(), 0.0);
      const auto& xh = lt.xh[t];
      for (std::size_t r = 0; r < 4 * h; ++r) {
        const double d = dz[r];
        if (d == 0.0) continue;
        glayer.bias.data[r] += d;
        double* gw = glayer.weight.row(r);
        const double* w = layer.weight.row(r);
        for (std::size_t c = 0; c < width; ++c) {
          gw[c] += d * xh[c];
          dxh[c] += w[c] * d;
        }
      }
      std::copy(dxh.begin(), dxh.begin() + in, dx[t].begin());
      std::copy(dxh.begin() + in, dxh.end(), dh_next.begin());
    }

    // dh_next now holds the gradient w.r.t. the initial hidden state.
    if (l == 0) {
      double* gg = grads.gender_embedding.row(gender);
      for (std::size_t k = 0; k < h; ++k) gg[k] += dh_next[k];
      for (std::size_t t = 0; t < steps; ++t) {
        double* ge = grads.char_embedding.row(symbols[t]);
        for (std::size_t k = 0; k < in; ++k) ge[k] += dx[t][k];
      }
    } else {
      dh_above = std::move(dx);
    }
  }
}

}  // namespace detail

// Predicted distribution over labels. The first recurrent layer starts from
// the gender embedding; deeper layers start from zero.
inline std::vector<double> forward(const ClassifierModel& model, std::span<const std::size_t> symbols,
                                   std::size_t gender) {
  detail::check_input(model, symbols, gender);
  detail::Trace trace;
  detail::run_forward(model.parameters, symbols, gender, trace);
  return trace.probs;
}

inline std::vector<double> forward(const ClassifierModel& model, const Encoded& enc) {
  return forward(model, enc.symbols, enc.gender);
}

// Surprisal of the target label, in bits.
inline double loss(std::span<const double> predicted, std::size_t target) {
  return -std::log2(predicted[target]);
}

// Loss and gradient of -log2 q(target | input) for one example.
inline double loss_and_gradient(const ClassifierModel& model, const Encoded& enc,
                                std::size_t target, double scale, Parameters& grads) {
  detail::check_input(model, enc.symbols, enc.gender);
  if (target >= model.label_count()) throw ShapeMismatch("target label out of range");
  detail::Trace trace;
  detail::run_forward(model.parameters, enc.symbols, enc.gender, trace);
  detail::run_backward(model.parameters, enc.symbols, enc.gender, target, trace, scale, grads);
  return (trace.log_norm - trace.logits[target]) / std::log(2.0);
}

// Padded minibatch. Positions at or past an instance's length hold kPad and
// are masked out of the recurrence and the loss.
struct Batch {
  static constexpr std::size_t kPad = std::numeric_limits<std::size_t>::max();

  std::vector<std::vector<std::size_t>> symbols;  // each padded to max_length
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> genders;
  std::vector<std::size_t> targets;

  std::size_t size() const { return symbols.size(); }
  std::size_t max_length() const { return symbols.empty() ? 0 : symbols.front().size(); }

  // Appends pad columns to every row.
  void pad_to(std::size_t length) {
    for (auto& row : symbols) {
      if (row.size() < length) row.resize(length, kPad);
    }
  }
};

inline Batch make_batch(const InstanceSet& set, std::span<const std::size_t> order,
                        const Vocabulary& vocab, bool include_etymology) {
  Batch batch;
  std::size_t longest = 0;
  for (auto idx : order) {
    auto enc = encode(set.instances[idx], vocab, include_etymology);
    batch.lengths.push_back(enc.symbols.size());
    longest = std::max(longest, enc.symbols.size());
    batch.symbols.push_back(std::move(enc.symbols));
    batch.genders.push_back(enc.gender);
    batch.targets.push_back(set.instances[idx].label);
  }
  batch.pad_to(longest);
  return batch;
}

inline std::span<const std::size_t> unpadded(const Batch& batch, std::size_t row) {
  return std::span<const std::size_t>(batch.symbols[row]).first(batch.lengths[row]);
}

inline std::vector<std::vector<double>> forward_batch(const ClassifierModel& model,
                                                      const Batch& batch) {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.push_back(forward(model, unpadded(batch, i), batch.genders[i]));
  }
  return out;
}

inline void adam_step(ClassifierModel& model, const Parameters& grads) {
  auto& opt = model.optimizer;
  ++opt.step;
  const double lr = model.config.learning_rate;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(opt.step));

  std::vector<Tensor*> params, ms, vs;
  std::vector<const Tensor*> gs;
  model.parameters.for_each([&](const std::string&, Tensor& t) { params.push_back(&t); });
  opt.first_moment.for_each([&](const std::string&, Tensor& t) { ms.push_back(&t); });
  opt.second_moment.for_each([&](const std::string&, Tensor& t) { vs.push_back(&t); });
  grads.for_each([&](const std::string&, const Tensor& t) { gs.push_back(&t); });

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k]->data;
    auto& m = ms[k]->data;
    auto& v = vs[k]->data;
    const auto& g = gs[k]->data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEpsilon);
    }
  }
}

// One shuffled pass over `set` in minibatches; returns the mean training loss
// in bits (each batch's loss measured before its update). The shuffle is
// seeded from config.seed and the number of epochs already trained.
inline double train_epoch(ClassifierModel& model, const InstanceSet& set, bool include_etymology) {
  if (set.empty()) throw TooFewInstances("cannot train on an empty instance set");
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(model.config.seed, 0x5EED0000ULL + model.epochs_trained));
  rng.shuffle(std::span<std::size_t>(order));

  auto grads = Parameters::zeros_like(model.config, model.vocabulary.symbol_count(),
                                      model.vocabulary.label_count());
  double total = 0.0;
  const std::size_t bs = model.config.batch_size;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const auto count = std::min(bs, order.size() - start);
    const auto batch = make_batch(set, std::span<const std::size_t>(order).subspan(start, count),
                                  model.vocabulary, include_etymology);
    grads.zero();
    double batch_loss = 0.0;
    const double scale = 1.0 / static_cast<double>(count);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Encoded enc{std::vector<std::size_t>(unpadded(batch, i).begin(), unpadded(batch, i).end()),
                  batch.genders[i]};
      batch_loss += loss_and_gradient(model, enc, batch.targets[i], scale, grads);
    }
    if (!std::isfinite(batch_loss)) {
      throw NonFiniteLoss("non-finite training loss at epoch " +
                          std::to_string(model.epochs_trained + 1));
    }
    adam_step(model, grads);
    total += batch_loss;
  }
  ++model.epochs_trained;
  const double mean = total / static_cast<double>(set.size());
  if (!std::isfinite(mean)) throw NonFiniteLoss("non-finite mean training loss");
  return mean;
}

// Trains for config.epochs; returns the per-epoch mean training losses.
inline std::vector<double> train(ClassifierModel& model, const InstanceSet& set,
                                 bool include_etymology) {
  std::vector<double> losses;
  losses.reserve(model.config.epochs);
  for (std::size_t e = 0; e < model.config.epochs; ++e) {
    losses.push_back(train_epoch(model, set, include_etymology));
  }
  return losses;
}

// Mean surprisal (bits) of the gold labels under the model.
inline double evaluate_loss(const ClassifierModel& model, const InstanceSet& set,
                            bool include_etymology) {
  double total = 0.0;
  for (const auto& inst : set.instances) {
    const auto enc = encode(inst, model.vocabulary, include_etymology);
    total += loss(forward(model, enc), inst.label);
  }
  return total / static_cast<double>(set.size());
}

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::map<std::string, double> per_tensor;
  std::size_t coordinates_checked = 0;
  // Coordinates where exactly one of (analytic, numeric) is zero.
  std::size_t zero_mismatches = 0;
};

using GradientMutator = std::function<void(Parameters&)>;

// Relative error is |a - n| / max(|a|, |n|, floor). Below the floor the
// comparison is effectively absolute; central differences at epsilon 1e-4
// carry about 1e-12 of rounding noise.
inline constexpr double kGradientCheckFloor = 1e-6;

// Compares analytic gradients of -log2 q(label | instance) with central
// finite differences. Tensors with more than `max_per_tensor` entries are
// sampled (seeded); smaller ones are checked exhaustively.
inline GradientCheckResult gradient_check(const ClassifierModel& model, const Instance& instance,
                                          bool include_etymology, double epsilon,
                                          const GradientMutator& mutate = {},
                                          std::size_t max_per_tensor = 400) {
  if (epsilon < 1e-6 || epsilon > 1e-3) throw Error("epsilon must lie in [1e-6, 1e-3]");
  const auto enc = encode(instance, model.vocabulary, include_etymology);
  auto analytic = Parameters::zeros_like(model.config, model.vocabulary.symbol_count(),
                                         model.vocabulary.label_count());
  loss_and_gradient(model, enc, instance.label, 1.0, analytic);
  if (mutate) mutate(analytic);

  ClassifierModel probe = model;
  auto eval = [&]() {
    detail::Trace trace;
    detail::run_forward(probe.parameters, enc.symbols, enc.gender, trace);
    return (trace.log_norm - trace.logits[instance.label]) / std::log(2.0);
  };

  std::vector<std::pair<std::string, Tensor*>> probe_tensors;
  std::vector<const Tensor*> grad_tensors;
  probe.parameters.for_each([&](const std::string& n, Tensor& t) { probe_tensors.emplace_back(n, &t); });
  analytic.for_each([&](const std::string&, const Tensor& t) { grad_tensors.push_back(&t); });

  GradientCheckResult result;
  Rng rng(derive_seed(model.config.seed, 0x6C4EC4ULL));
  for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
    auto& [name, tensor] = probe_tensors[k];
    std::vector<std::size_t> coords(tensor->size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > max_per_tensor) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(max_per_tensor);
    }
    double worst = 0.0;
    for (auto i : coords) {
      const double saved = tensor->data[i];
      tensor->data[i] = saved + epsilon;
      const double up = eval();
      tensor->data[i] = saved - epsilon;
      const double down = eval();
      tensor->data[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = grad_tensors[k]->data[i];
      if ((a == 0.0) != (numeric == 0.0)) ++result.zero_mismatches;
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradientCheckFloor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
      ++result.coordinates_checked;
    }
    result.per_tensor[name] = worst;
    result.max_relative_error = std::max(result.max_relative_error, worst);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: one JSON document with config, vocabulary, parameters and
// optimizer state. Doubles are written with round-trip precision.

inline nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"rows", t.rows}, {"cols", t.cols}, {"data", t.data}};
}
inline Tensor tensor_from_json(const nlohmann::json& j) {
  Tensor t(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  t.data = j.at("data").get<std::vector<double>>();
  if (t.data.size() != t.rows * t.cols) throw ShapeMismatch("tensor data does not match shape");
  return t;
}

inline nlohmann::json parameters_to_json(const Parameters& p) {
  nlohmann::json j = nlohmann::json::object();
  p.for_each([&](const std::string& name, const Tensor& t) { j[name] = tensor_to_json(t); });
  return j;
}

inline void parameters_from_json(const nlohmann::json& j, Parameters& p) {
  p.for_each([&](const std::string& name, Tensor& t) {
    auto loaded = tensor_from_json(j.at(name));
    if (!loaded.same_shape(t)) throw ShapeMismatch("checkpoint tensor '" + name + "' has wrong shape");
    t = std::move(loaded);
  });
}

inline nlohmann::json checkpoint_to_json(const ClassifierModel& model) {
  return {{"format", "morphinfo-checkpoint"},
          {"version", 1},
          {"config", model.config},
          {"vocabulary",
           {{"symbols", model.vocabulary.symbols()}, {"labels", model.vocabulary.labels()}}},
          {"parameters", parameters_to_json(model.parameters)},
          {"optimizer",
           {{"step", model.optimizer.step},
            {"first_moment", parameters_to_json(model.optimizer.first_moment)},
            {"second_moment", parameters_to_json(model.optimizer.second_moment)}}},
          {"epochs_trained", model.epochs_trained}};
}

inline ClassifierModel checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "morphinfo-checkpoint") throw Error("not a morphinfo checkpoint");
  ClassifierModel model;
  model.config = j.at("config").get<ModelConfig>();
  model.config.validate();
  model.vocabulary = Vocabulary(j.at("vocabulary").at("symbols").get<std::vector<std::string>>(),
                                j.at("vocabulary").at("labels").get<std::vector<std::string>>());
  const auto symbols = model.vocabulary.symbol_count();
  const auto labels = model.vocabulary.label_count();
  model.parameters = Parameters::zeros_like(model.config, symbols, labels);
  parameters_from_json(j.at("parameters"), model.parameters);
  model.optimizer.first_moment = Parameters::zeros_like(model.config, symbols, labels);
  model.optimizer.second_moment = model.optimizer.first_moment;
  parameters_from_json(j.at("optimizer").at("first_moment"), model.optimizer.first_moment);
  parameters_from_json(j.at("optimizer").at("second_moment"), model.optimizer.second_moment);
  model.optimizer.step = j.at("optimizer").at("step").get<std::uint64_t>();
  model.epochs_trained = j.at("epochs_trained").get<std::uint64_t>();
  return model;
}

}  // namespace morphinfo::nn
