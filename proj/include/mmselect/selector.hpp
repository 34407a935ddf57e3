#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmselect/types.hpp"

namespace mmselect::selector {

enum class SelectorKind { Linear, Mlp, Attention };

SelectorKind parse_kind(std::string_view name);
std::string_view kind_name(SelectorKind kind);

struct SelectorShape {
  SelectorKind kind = SelectorKind::Attention;
  Index input_dim = 10;
  Index d_model = 16;     // attention width
  Index ff_hidden = 32;   // attention feed-forward width
  int layers = 2;         // attention blocks
  Index mlp_hidden = 32;  // both MLP hidden layers

  bool operator==(const SelectorShape&) const = default;
};

// One named tensor inside the flat parameter vector (column-major).
struct ParamBlock {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  Index offset = 0;
  Index fan_in = 0;  // 0 marks the zero-initialized scalar head

  Index size() const { return rows * cols; }
  bool operator==(const ParamBlock&) const = default;
};

std::vector<ParamBlock> shape_table(const SelectorShape& shape);

struct SelectorModel {
  SelectorShape shape;
  std::vector<ParamBlock> blocks;
  Vector params;

  Index parameter_count() const { return params.size(); }
  Eigen::Map<const Matrix> block(std::string_view name) const;
  Eigen::Map<Matrix> block(std::string_view name);
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; the scalar head starts at zero.
SelectorModel init_selector(const SelectorShape& shape, std::uint64_t seed);

// `sequence` has one item embedding per row. Rows are put in a canonical
// order first, so the output does not depend on item order at all.
double predict(const SelectorModel& model, const Matrix& sequence);

// Per-item scores: each row as a length-1 sequence.
Vector predict_items(const SelectorModel& model, const Matrix& items);

struct Sample {
  Matrix sequence;
  double label = 0.0;
};

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

// Mean squared error over the batch and its exact gradient.
LossGrad loss_and_grad(const SelectorModel& model, std::span<const Sample> batch);
double loss(const SelectorModel& model, std::span<const Sample> batch);

enum class Optimizer { Adam, GradientDescent };

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct TrainResult {
  SelectorModel model;
  std::vector<double> losses;  // loss at the start of each epoch
  double final_loss = 0.0;
};

// Full-batch training, one update per epoch.
TrainResult train(SelectorModel model, std::span<const Sample> data, const TrainConfig& config);

inline constexpr int kModelFormatVersion = 1;

void save_selector(const SelectorModel& model, const std::filesystem::path& dir, const std::string& fingerprint = {});
SelectorModel load_selector(const std::filesystem::path& dir, std::string* fingerprint = nullptr);

}  // namespace mmselect::selector
