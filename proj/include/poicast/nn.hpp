#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace poicast::nn {

using Matrix = Eigen::MatrixXd;

// A named parameter with its gradient accumulator.
struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Owns every parameter of a model in registration order. Registration
// order is the serialization and optimizer order, so it must be
// deterministic (and it is: construction order is fixed by the config).
class ParamStore {
 public:
  Tensor* add(const std::string& name, int rows, int cols);
  void zero_grad();
  size_t size() const { return tensors_.size(); }
  Tensor& at(size_t i) { return *tensors_[i]; }
  const Tensor& at(size_t i) const { return *tensors_[i]; }
  Tensor* find(const std::string& name);

  int64_t scalar_count() const;

  void save(std::ostream& out) const;
  // Loads values into the existing tensors; shapes and names must match.
  void load(std::istream& in);

 private:
  std::vector<std::unique_ptr<Tensor>> tensors_;
};

void init_normal(Tensor& t, std::mt19937_64& rng, double stddev);
void init_glorot(Tensor& t, std::mt19937_64& rng);

Matrix gelu(const Matrix& x);
// dL/dx given pre-activation x and dL/dy.
Matrix gelu_backward(const Matrix& x, const Matrix& dy);

// Row-wise softmax with max subtraction.
void softmax_rows(Matrix& m);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct Linear {
  Tensor* weight = nullptr;  // in x out
  Tensor* bias = nullptr;    // 1 x out

  static Linear make(ParamStore& store, const std::string& name, int in, int out,
                     std::mt19937_64& rng);
  Matrix forward(const Matrix& x) const;
  // Accumulates parameter grads; returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy) const;
};

struct LayerNorm {
  Tensor* gamma = nullptr;  // 1 x d
  Tensor* beta = nullptr;   // 1 x d
  static constexpr double kEps = 1e-5;

  struct Cache {
    Matrix xhat;
    Eigen::VectorXd inv_std;
  };

  static LayerNorm make(ParamStore& store, const std::string& name, int dim);
  Matrix forward(const Matrix& x, Cache& cache) const;
  Matrix backward(const Cache& cache, const Matrix& dy) const;
};

// Multi-head scaled dot-product attention. Works for self-attention
// (query == key/value input) and for cross-attention (distinct inputs).
// key_mask[j] == false removes key j exactly (zero attention weight).
struct MultiHeadAttention {
  int num_heads = 1;
  int dim = 0;
  Linear wq, wk, wv, wo;

  struct Cache {
    Matrix query_in, kv_in;
    Matrix q, k, v;
    std::vector<Matrix> attn;  // per head, Tq x Tk
    Matrix concat;             // Tq x dim
  };

  static MultiHeadAttention make(ParamStore& store, const std::string& name, int dim,
                                 int num_heads, std::mt19937_64& rng);
  Matrix forward(const Matrix& query_in, const Matrix& kv_in, const std::vector<bool>& key_mask,
                 Cache& cache) const;
  // Returns (d query_in, d kv_in). For self-attention pass the same matrix
  // twice and sum the two gradients yourself.
  std::pair<Matrix, Matrix> backward(const Cache& cache, const Matrix& dy) const;
};

struct FeedForward {
  Linear fc1, fc2;

  struct Cache {
    Matrix input, hidden_pre;
  };

  static FeedForward make(ParamStore& store, const std::string& name, int dim, int hidden,
                          std::mt19937_64& rng);
  Matrix forward(const Matrix& x, Cache& cache) const;
  Matrix backward(const Cache& cache, const Matrix& dy) const;
};

// Adam with bias correction. Moment buffers follow the store's
// registration order and serialize with save/load for exact resume.
class AdamOptimizer {
 public:
  AdamOptimizer(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(ParamStore& store);
  void reset(const ParamStore& store);

  void save(std::ostream& out) const;
  void load(std::istream& in, const ParamStore& store);

  int64_t step_count() const { return step_count_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t step_count_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace poicast::nn
