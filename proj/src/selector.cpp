#include "mmselect/selector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "mmselect/error.hpp"

namespace mmselect::selector {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

// Hands out parameter (or gradient) views in shape-table order.
template <class Map, class Ptr>
class BlockCursor {
 public:
  BlockCursor(const std::vector<ParamBlock>& blocks, Ptr base) : blocks_(blocks), base_(base) {}
  Map next() {
    const auto& b = blocks_[pos_++];
    return Map(base_ + b.offset, b.rows, b.cols);
  }

 private:
  const std::vector<ParamBlock>& blocks_;
  Ptr base_;
  std::size_t pos_ = 0;
};

using ParamCursor = BlockCursor<ConstMap, const double*>;
using GradCursor = BlockCursor<MutMap, double*>;

// Rows in lexicographic order. Equal rows are interchangeable, so the result
// is the same matrix for every permutation of the input.
Matrix canonical(const Matrix& seq) {
  std::vector<Index> order(static_cast<std::size_t>(seq.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    for (Index c = 0; c < seq.cols(); ++c) {
      if (seq(a, c) != seq(b, c)) return seq(a, c) < seq(b, c);
    }
    return false;
  });
  Matrix out(seq.rows(), seq.cols());
  for (Index r = 0; r < seq.rows(); ++r) out.row(r) = seq.row(order[static_cast<std::size_t>(r)]);
  return out;
}

void row_softmax(Matrix& s) {
  for (Index r = 0; r < s.rows(); ++r) {
    const double top = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - top).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
}

Matrix tanh_of(const Matrix& m) { return m.array().tanh().matrix(); }

// ---- attention ---------------------------------------------------------------

struct AttentionLayerCache {
  Matrix input, q, k, v, attn, mixed, after_attn, hidden;
};

struct AttentionCache {
  Matrix x;
  std::vector<AttentionLayerCache> layers;
  RowVector pooled;
};

double attention_forward(const SelectorModel& m, const Matrix& x, AttentionCache* cache) {
  ParamCursor p(m.blocks, m.params.data());
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.shape.d_model));
  const auto w_in = p.next();
  const auto b_in = p.next();
  Matrix h = x * w_in;
  h.rowwise() += b_in.row(0);
  if (cache) {
    cache->x = x;
    cache->layers.resize(static_cast<std::size_t>(m.shape.layers));
  }
  for (int l = 0; l < m.shape.layers; ++l) {
    const auto wq = p.next();
    const auto wk = p.next();
    const auto wv = p.next();
    const auto wo = p.next();
    const auto w1 = p.next();
    const auto b1 = p.next();
    const auto w2 = p.next();
    const auto b2 = p.next();

    Matrix q = h * wq;
    Matrix k = h * wk;
    Matrix v = h * wv;
    Matrix attn = (q * k.transpose()) * scale;
    row_softmax(attn);
    Matrix mixed = attn * v;
    Matrix after_attn = h + mixed * wo;
    Matrix pre = after_attn * w1;
    pre.rowwise() += b1.row(0);
    Matrix hidden = tanh_of(pre);
    Matrix out = after_attn + hidden * w2;
    out.rowwise() += b2.row(0);

    if (cache) {
      auto& c = cache->layers[static_cast<std::size_t>(l)];
      c.input = std::move(h);
      c.q = std::move(q);
      c.k = std::move(k);
      c.v = std::move(v);
      c.attn = std::move(attn);
      c.mixed = std::move(mixed);
      c.after_attn = std::move(after_attn);
      c.hidden = std::move(hidden);
    }
    h = std::move(out);
  }
  const auto w_head = p.next();
  const auto b_head = p.next();
  RowVector pooled = h.colwise().mean();
  const double y = (pooled * w_head)(0, 0) + b_head(0, 0);
  if (cache) cache->pooled = std::move(pooled);
  return y;
}

void attention_backward(const SelectorModel& m, const AttentionCache& cache, double dy, Vector& grad) {
  ParamCursor p(m.blocks, m.params.data());
  GradCursor g(m.blocks, grad.data());
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.shape.d_model));
  const Index len = cache.x.rows();

  struct LayerParams {
    ConstMap wq, wk, wv, wo, w1, b1, w2, b2;
  };
  struct LayerGrads {
    MutMap wq, wk, wv, wo, w1, b1, w2, b2;
  };
  const auto w_in = p.next();
  (void)p.next();
  auto gw_in = g.next();
  auto gb_in = g.next();
  std::vector<LayerParams> lp;
  std::vector<LayerGrads> lg;
  for (int l = 0; l < m.shape.layers; ++l) {
    lp.push_back({p.next(), p.next(), p.next(), p.next(), p.next(), p.next(), p.next(), p.next()});
    lg.push_back({g.next(), g.next(), g.next(), g.next(), g.next(), g.next(), g.next(), g.next()});
  }
  const auto w_head = p.next();
  auto gw_head = g.next();
  auto gb_head = g.next();
  (void)w_in;

  gw_head += cache.pooled.transpose() * dy;
  gb_head(0, 0) += dy;
  const RowVector dpooled = w_head.transpose() * dy;
  Matrix dh = dpooled.replicate(len, 1) / static_cast<double>(len);

  for (int l = m.shape.layers - 1; l >= 0; --l) {
    const auto& c = cache.layers[static_cast<std::size_t>(l)];
    const auto& w = lp[static_cast<std::size_t>(l)];
    auto& gr = lg[static_cast<std::size_t>(l)];

    // out = after_attn + tanh(after_attn W1 + b1) W2 + b2
    gr.w2 += c.hidden.transpose() * dh;
    gr.b2 += dh.colwise().sum();
    const Matrix dpre = ((dh * w.w2.transpose()).array() * (1.0 - c.hidden.array().square())).matrix();
    gr.w1 += c.after_attn.transpose() * dpre;
    gr.b1 += dpre.colwise().sum();
    const Matrix dafter = dh + dpre * w.w1.transpose();

    // after_attn = input + softmax(q k^T * scale) v Wo
    gr.wo += c.mixed.transpose() * dafter;
    const Matrix dmixed = dafter * w.wo.transpose();
    const Matrix dattn = dmixed * c.v.transpose();
    const Matrix dv = c.attn.transpose() * dmixed;
    const Vector row_dot = (dattn.array() * c.attn.array()).rowwise().sum();
    const Matrix dscores = ((dattn.colwise() - row_dot).array() * c.attn.array()).matrix() * scale;
    const Matrix dq = dscores * c.k;
    const Matrix dk = dscores.transpose() * c.q;
    gr.wq += c.input.transpose() * dq;
    gr.wk += c.input.transpose() * dk;
    gr.wv += c.input.transpose() * dv;
    dh = dafter + dq * w.wq.transpose() + dk * w.wk.transpose() + dv * w.wv.transpose();
  }
  gw_in += cache.x.transpose() * dh;
  gb_in += dh.colwise().sum();
}

// ---- MLP ---------------------------------------------------------------------

struct MlpCache {
  Matrix x, h1, h2;
};

double mlp_forward(const SelectorModel& m, const Matrix& x, MlpCache* cache) {
  ParamCursor p(m.blocks, m.params.data());
  const auto w1 = p.next();
  const auto b1 = p.next();
  const auto w2 = p.next();
  const auto b2 = p.next();
  const auto w_head = p.next();
  const auto b_head = p.next();
  Matrix pre1 = x * w1;
  pre1.rowwise() += b1.row(0);
  Matrix h1 = tanh_of(pre1);
  Matrix pre2 = h1 * w2;
  pre2.rowwise() += b2.row(0);
  Matrix h2 = tanh_of(pre2);
  const Vector item = (h2 * w_head).col(0).array() + b_head(0, 0);
  if (cache) *cache = {x, std::move(h1), std::move(h2)};
  return item.mean();
}

void mlp_backward(const SelectorModel& m, const MlpCache& c, double dy, Vector& grad) {
  ParamCursor p(m.blocks, m.params.data());
  GradCursor g(m.blocks, grad.data());
  (void)p.next();
  (void)p.next();
  const auto w2 = p.next();
  (void)p.next();
  const auto w_head = p.next();
  auto gw1 = g.next();
  auto gb1 = g.next();
  auto gw2 = g.next();
  auto gb2 = g.next();
  auto gw_head = g.next();
  auto gb_head = g.next();

  const Index len = c.x.rows();
  const Vector ditem = Vector::Constant(len, dy / static_cast<double>(len));
  gw_head += c.h2.transpose() * ditem;
  gb_head(0, 0) += dy;
  const Matrix dpre2 = ((ditem * w_head.transpose()).array() * (1.0 - c.h2.array().square())).matrix();
  gw2 += c.h1.transpose() * dpre2;
  gb2 += dpre2.colwise().sum();
  const Matrix dpre1 = ((dpre2 * w2.transpose()).array() * (1.0 - c.h1.array().square())).matrix();
  gw1 += c.x.transpose() * dpre1;
  gb1 += dpre1.colwise().sum();
}

// ---- linear ------------------------------------------------------------------

double linear_forward(const SelectorModel& m, const Matrix& x) {
  ParamCursor p(m.blocks, m.params.data());
  const auto w = p.next();
  const auto b = p.next();
  const Vector item = (x * w).col(0).array() + b(0, 0);
  return item.mean();
}

void linear_backward(const SelectorModel& m, const Matrix& x, double dy, Vector& grad) {
  GradCursor g(m.blocks, grad.data());
  auto gw = g.next();
  auto gb = g.next();
  gw += x.colwise().mean().transpose() * dy;
  gb(0, 0) += dy;
}

void check_input(const SelectorModel& m, const Matrix& seq) {
  if (seq.rows() == 0) throw Error(Errc::DimensionMismatch, "empty sequence");
  if (seq.cols() != m.shape.input_dim) {
    throw Error(Errc::DimensionMismatch, "selector expects " + std::to_string(m.shape.input_dim) + " features, got " +
                                             std::to_string(seq.cols()));
  }
}

double forward_and_accumulate(const SelectorModel& m, const Matrix& raw, double label, double weight,
                              Vector* grad) {
  check_input(m, raw);
  const Matrix x = canonical(raw);
  double pred = 0.0;
  switch (m.shape.kind) {
    case SelectorKind::Linear: {
      pred = linear_forward(m, x);
      if (grad) linear_backward(m, x, weight * 2.0 * (pred - label), *grad);
      break;
    }
    case SelectorKind::Mlp: {
      MlpCache cache;
      pred = mlp_forward(m, x, grad ? &cache : nullptr);
      if (grad) mlp_backward(m, cache, weight * 2.0 * (pred - label), *grad);
      break;
    }
    case SelectorKind::Attention: {
      AttentionCache cache;
      pred = attention_forward(m, x, grad ? &cache : nullptr);
      if (grad) attention_backward(m, cache, weight * 2.0 * (pred - label), *grad);
      break;
    }
  }
  return pred;
}

std::ifstream open_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ModelLoadError, "missing " + path.string());
  return in;
}

}  // namespace

SelectorKind parse_kind(std::string_view name) {
  if (name == "linear") return SelectorKind::Linear;
  if (name == "mlp") return SelectorKind::Mlp;
  if (name == "attention") return SelectorKind::Attention;
  throw Error(Errc::BadConfig, "unknown selector kind '" + std::string(name) + "'");
}

std::string_view kind_name(SelectorKind kind) {
  switch (kind) {
    case SelectorKind::Linear: return "linear";
    case SelectorKind::Mlp: return "mlp";
    case SelectorKind::Attention: return "attention";
  }
  return "?";
}

std::vector<ParamBlock> shape_table(const SelectorShape& s) {
  if (s.input_dim < 1) throw Error(Errc::BadConfig, "input_dim must be >= 1");
  std::vector<ParamBlock> out;
  Index offset = 0;
  auto add = [&](std::string name, Index rows, Index cols, Index fan_in) {
    out.push_back({std::move(name), rows, cols, offset, fan_in});
    offset += rows * cols;
  };
  switch (s.kind) {
    case SelectorKind::Linear:
      add("head.w", s.input_dim, 1, 0);
      add("head.b", 1, 1, 0);
      break;
    case SelectorKind::Mlp:
      if (s.mlp_hidden < 1) throw Error(Errc::BadConfig, "mlp_hidden must be >= 1");
      add("hidden1.w", s.input_dim, s.mlp_hidden, s.input_dim);
      add("hidden1.b", 1, s.mlp_hidden, s.input_dim);
      add("hidden2.w", s.mlp_hidden, s.mlp_hidden, s.mlp_hidden);
      add("hidden2.b", 1, s.mlp_hidden, s.mlp_hidden);
      add("head.w", s.mlp_hidden, 1, 0);
      add("head.b", 1, 1, 0);
      break;
    case SelectorKind::Attention: {
      if (s.d_model < 1 || s.ff_hidden < 1 || s.layers < 1) throw Error(Errc::BadConfig, "attention sizes must be >= 1");
      add("input.w", s.input_dim, s.d_model, s.input_dim);
      add("input.b", 1, s.d_model, s.input_dim);
      for (int l = 0; l < s.layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        add(p + "query", s.d_model, s.d_model, s.d_model);
        add(p + "key", s.d_model, s.d_model, s.d_model);
        add(p + "value", s.d_model, s.d_model, s.d_model);
        add(p + "output", s.d_model, s.d_model, s.d_model);
        add(p + "ff1.w", s.d_model, s.ff_hidden, s.d_model);
        add(p + "ff1.b", 1, s.ff_hidden, s.d_model);
        add(p + "ff2.w", s.ff_hidden, s.d_model, s.ff_hidden);
        add(p + "ff2.b", 1, s.d_model, s.ff_hidden);
      }
      add("head.w", s.d_model, 1, 0);
      add("head.b", 1, 1, 0);
      break;
    }
  }
  return out;
}

Eigen::Map<const Matrix> SelectorModel::block(std::string_view name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return ConstMap(params.data() + b.offset, b.rows, b.cols);
  }
  throw Error(Errc::BadConfig, "no parameter block '" + std::string(name) + "'");
}

Eigen::Map<Matrix> SelectorModel::block(std::string_view name) {
  for (const auto& b : blocks) {
    if (b.name == name) return MutMap(params.data() + b.offset, b.rows, b.cols);
  }
  throw Error(Errc::BadConfig, "no parameter block '" + std::string(name) + "'");
}

SelectorModel init_selector(const SelectorShape& shape, std::uint64_t seed) {
  SelectorModel m;
  m.shape = shape;
  m.blocks = shape_table(shape);
  const auto& last = m.blocks.back();
  m.params = Vector::Zero(last.offset + last.size());
  std::mt19937_64 rng(seed);
  for (const auto& b : m.blocks) {
    if (b.fan_in == 0) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(b.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < b.size(); ++i) m.params(b.offset + i) = dist(rng);
  }
  return m;
}

double predict(const SelectorModel& model, const Matrix& sequence) {
  return forward_and_accumulate(model, sequence, 0.0, 0.0, nullptr);
}

Vector predict_items(const SelectorModel& model, const Matrix& items) {
  Vector out(items.rows());
  for (Index r = 0; r < items.rows(); ++r) out(r) = predict(model, items.row(r));
  return out;
}

LossGrad loss_and_grad(const SelectorModel& model, std::span<const Sample> batch) {
  if (batch.empty()) throw Error(Errc::BadConfig, "empty training batch");
  LossGrad out{0.0, Vector::Zero(model.params.size())};
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const double pred = forward_and_accumulate(model, s.sequence, s.label, weight, &out.grad);
    out.loss += weight * (pred - s.label) * (pred - s.label);
  }
  return out;
}

double loss(const SelectorModel& model, std::span<const Sample> batch) {
  if (batch.empty()) throw Error(Errc::BadConfig, "empty training batch");
  double total = 0.0;
  for (const auto& s : batch) {
    const double err = predict(model, s.sequence) - s.label;
    total += err * err;
  }
  return total / static_cast<double>(batch.size());
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(Errc::BadConfig, "epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error(Errc::BadConfig, "learning rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || !(epsilon > 0.0)) {
    throw Error(Errc::BadConfig, "Adam hyperparameters out of range");
  }
}

TrainResult train(SelectorModel model, std::span<const Sample> data, const TrainConfig& config) {
  config.validate();
  if (data.size() < 2) throw Error(Errc::BadConfig, "training needs at least 2 labeled subsets");

  TrainResult out;
  Vector first_moment = Vector::Zero(model.params.size());
  Vector second_moment = Vector::Zero(model.params.size());
  double beta1_power = 1.0;
  double beta2_power = 1.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const LossGrad lg = loss_and_grad(model, data);
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
      throw Error(Errc::DivergedTraining, "non-finite loss at epoch " + std::to_string(epoch));
    }
    out.losses.push_back(lg.loss);

    if (config.optimizer == Optimizer::GradientDescent) {
      model.params -= config.learning_rate * lg.grad;
    } else {
      beta1_power *= config.beta1;
      beta2_power *= config.beta2;
      first_moment = config.beta1 * first_moment + (1.0 - config.beta1) * lg.grad;
      second_moment = config.beta2 * second_moment + (1.0 - config.beta2) * lg.grad.cwiseAbs2();
      const Vector m_hat = first_moment / (1.0 - beta1_power);
      const Vector v_hat = second_moment / (1.0 - beta2_power);
      model.params.array() -= config.learning_rate * m_hat.array() / (v_hat.array().sqrt() + config.epsilon);
    }
    if (!model.params.allFinite()) {
      throw Error(Errc::DivergedTraining, "non-finite parameters after epoch " + std::to_string(epoch));
    }
  }
  out.final_loss = loss(model, data);
  if (!std::isfinite(out.final_loss)) throw Error(Errc::DivergedTraining, "non-finite final loss");
  out.model = std::move(model);
  return out;
}

void save_selector(const SelectorModel& model, const std::filesystem::path& dir, const std::string& fingerprint) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "selector.txt", std::ios::binary | std::ios::trunc);
    out << "format_version " << kModelFormatVersion << '\n'
        << "kind " << kind_name(model.shape.kind) << '\n'
        << "input_dim " << model.shape.input_dim << '\n'
        << "d_model " << model.shape.d_model << '\n'
        << "ff_hidden " << model.shape.ff_hidden << '\n'
        << "layers " << model.shape.layers << '\n'
        << "mlp_hidden " << model.shape.mlp_hidden << '\n'
        << "parameters " << model.params.size() << '\n'
        << "fingerprint " << (fingerprint.empty() ? "-" : fingerprint) << '\n';
    if (!out) throw Error(Errc::IoError, "cannot write " + (dir / "selector.txt").string());
  }
  {
    std::ofstream out(dir / "shapes.txt", std::ios::binary | std::ios::trunc);
    for (const auto& b : model.blocks) out << b.name << ' ' << b.rows << ' ' << b.cols << ' ' << b.offset << '\n';
  }
  {
    std::ofstream out(dir / "params.txt", std::ios::binary | std::ios::trunc);
    char buf[64];
    for (Index i = 0; i < model.params.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%a\n", model.params(i));
      out << buf;
    }
    if (!out) throw Error(Errc::IoError, "cannot write " + (dir / "params.txt").string());
  }
}

SelectorModel load_selector(const std::filesystem::path& dir, std::string* fingerprint) {
  auto header = open_model_file(dir / "selector.txt");
  std::map<std::string, std::string> fields;
  std::string key, value;
  while (header >> key >> value) fields[key] = value;

  auto field = [&](const char* name) -> const std::string& {
    auto it = fields.find(name);
    if (it == fields.end()) throw Error(Errc::ModelLoadError, std::string("selector.txt lacks '") + name + "'");
    return it->second;
  };
  auto integer = [&](const char* name) -> long long {
    try {
      return std::stoll(field(name));
    } catch (const std::logic_error&) {
      throw Error(Errc::ModelLoadError, std::string("bad integer for '") + name + "'");
    }
  };

  if (integer("format_version") != kModelFormatVersion) {
    throw Error(Errc::ModelLoadError, "model format version " + field("format_version") + ", expected " +
                                          std::to_string(kModelFormatVersion));
  }
  SelectorModel m;
  try {
    m.shape.kind = parse_kind(field("kind"));
  } catch (const Error&) {
    throw Error(Errc::ModelLoadError, "unknown selector kind '" + field("kind") + "'");
  }
  m.shape.input_dim = integer("input_dim");
  m.shape.d_model = integer("d_model");
  m.shape.ff_hidden = integer("ff_hidden");
  m.shape.layers = static_cast<int>(integer("layers"));
  m.shape.mlp_hidden = integer("mlp_hidden");
  try {
    m.blocks = shape_table(m.shape);
  } catch (const Error& e) {
    throw Error(Errc::ModelLoadError, e.what());
  }
  const Index expected = m.blocks.back().offset + m.blocks.back().size();
  if (integer("parameters") != expected) throw Error(Errc::ModelLoadError, "parameter count does not match shape table");

  auto shapes = open_model_file(dir / "shapes.txt");
  for (const auto& b : m.blocks) {
    ParamBlock read;
    if (!(shapes >> read.name >> read.rows >> read.cols >> read.offset) || read.name != b.name ||
        read.rows != b.rows || read.cols != b.cols || read.offset != b.offset) {
      throw Error(Errc::ModelLoadError, "shape table disagrees at block '" + b.name + "'");
    }
  }

  auto params = open_model_file(dir / "params.txt");
  m.params.resize(expected);
  std::string token;
  for (Index i = 0; i < expected; ++i) {
    if (!(params >> token)) throw Error(Errc::ModelLoadError, "params.txt truncated at entry " + std::to_string(i));
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || !std::isfinite(v)) {
      throw Error(Errc::ModelLoadError, "bad parameter '" + token + "'");
    }
    m.params(i) = v;
  }
  if (params >> token) throw Error(Errc::ModelLoadError, "params.txt has trailing entries");
  if (fingerprint) *fingerprint = field("fingerprint") == "-" ? std::string{} : field("fingerprint");
  return m;
}

}  // namespace mmselect::selector
