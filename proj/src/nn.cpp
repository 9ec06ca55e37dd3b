#include "poicast/nn.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "poicast/common.hpp"

namespace poicast::nn {

Tensor* ParamStore::add(const std::string& name, int rows, int cols) {
  auto t = std::make_unique<Tensor>();
  t->name = name;
  t->value = Matrix::Zero(rows, cols);
  t->grad = Matrix::Zero(rows, cols);
  tensors_.push_back(std::move(t));
  return tensors_.back().get();
}

void ParamStore::zero_grad() {
  for (auto& t : tensors_) t->grad.setZero();
}

Tensor* ParamStore::find(const std::string& name) {
  for (auto& t : tensors_) {
    if (t->name == name) return t.get();
  }
  return nullptr;
}

int64_t ParamStore::scalar_count() const {
  int64_t n = 0;
  for (const auto& t : tensors_) n += t->value.size();
  return n;
}

namespace {

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  write_u64(out, static_cast<uint64_t>(m.rows()));
  write_u64(out, static_cast<uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Matrix read_matrix(std::istream& in) {
  uint64_t rows = read_u64(in);
  uint64_t cols = read_u64(in);
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  return m;
}

}  // namespace

void ParamStore::save(std::ostream& out) const {
  write_u64(out, tensors_.size());
  for (const auto& t : tensors_) {
    write_string(out, t->name);
    write_matrix(out, t->value);
  }
}

void ParamStore::load(std::istream& in) {
  uint64_t count = read_u64(in);
  if (count != tensors_.size()) {
    throw DataError("checkpoint tensor count mismatch");
  }
  for (auto& t : tensors_) {
    std::string name = read_string(in);
    Matrix value = read_matrix(in);
    if (!in) throw DataError("checkpoint truncated while reading " + name);
    if (name != t->name || value.rows() != t->value.rows() || value.cols() != t->value.cols()) {
      throw DataError("checkpoint layout mismatch at tensor " + name);
    }
    t->value = std::move(value);
  }
}

void init_normal(Tensor& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index j = 0; j < t.value.cols(); ++j) {
    for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
      t.value(i, j) = dist(rng);
    }
  }
}

void init_glorot(Tensor& t, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index j = 0; j < t.value.cols(); ++j) {
    for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
      t.value(i, j) = dist(rng);
    }
  }
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  Matrix dx = x.unaryExpr([](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    return cdf + v * pdf;
  });
  return dx.cwiseProduct(dy);
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

Linear Linear::make(ParamStore& store, const std::string& name, int in, int out,
                    std::mt19937_64& rng) {
  Linear l;
  l.weight = store.add(name + ".weight", in, out);
  l.bias = store.add(name + ".bias", 1, out);
  init_glorot(*l.weight, rng);
  return l;
}

Matrix Linear::forward(const Matrix& x) const {
  return (x * weight->value).rowwise() + bias->value.row(0);
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) const {
  weight->grad.noalias() += x.transpose() * dy;
  bias->grad.row(0) += dy.colwise().sum();
  return dy * weight->value.transpose();
}

LayerNorm LayerNorm::make(ParamStore& store, const std::string& name, int dim) {
  LayerNorm ln;
  ln.gamma = store.add(name + ".gamma", 1, dim);
  ln.beta = store.add(name + ".beta", 1, dim);
  ln.gamma->value.setOnes();
  return ln;
}

Matrix LayerNorm::forward(const Matrix& x, Cache& cache) const {
  const auto d = static_cast<double>(x.cols());
  cache.xhat.resize(x.rows(), x.cols());
  cache.inv_std.resize(x.rows());
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().sum() / d;
    const double inv_std = 1.0 / std::sqrt(var + kEps);
    cache.inv_std(i) = inv_std;
    cache.xhat.row(i) = (x.row(i).array() - mean) * inv_std;
    out.row(i) =
        cache.xhat.row(i).cwiseProduct(gamma->value.row(0)) + beta->value.row(0);
  }
  return out;
}

Matrix LayerNorm::backward(const Cache& cache, const Matrix& dy) const {
  const auto d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(gamma->value.row(0));
    const double mean_dxhat = dxhat.mean();
    const double mean_dxhat_xhat = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) = cache.inv_std(i) *
                (dxhat.array() - mean_dxhat - cache.xhat.row(i).array() * mean_dxhat_xhat);
    gamma->grad.row(0) += dy.row(i).cwiseProduct(cache.xhat.row(i));
    beta->grad.row(0) += dy.row(i);
  }
  (void)d;
  return dx;
}

MultiHeadAttention MultiHeadAttention::make(ParamStore& store, const std::string& name, int dim,
                                            int num_heads, std::mt19937_64& rng) {
  if (dim % num_heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  MultiHeadAttention mha;
  mha.num_heads = num_heads;
  mha.dim = dim;
  mha.wq = Linear::make(store, name + ".wq", dim, dim, rng);
  mha.wk = Linear::make(store, name + ".wk", dim, dim, rng);
  mha.wv = Linear::make(store, name + ".wv", dim, dim, rng);
  mha.wo = Linear::make(store, name + ".wo", dim, dim, rng);
  return mha;
}

Matrix MultiHeadAttention::forward(const Matrix& query_in, const Matrix& kv_in,
                                   const std::vector<bool>& key_mask, Cache& cache) const {
  const int dh = dim / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  cache.query_in = query_in;
  cache.kv_in = kv_in;
  cache.q = wq.forward(query_in);
  cache.k = wk.forward(kv_in);
  cache.v = wv.forward(kv_in);
  cache.attn.assign(num_heads, Matrix());
  cache.concat.resize(query_in.rows(), dim);

  for (int h = 0; h < num_heads; ++h) {
    auto qh = cache.q.middleCols(h * dh, dh);
    auto kh = cache.k.middleCols(h * dh, dh);
    auto vh = cache.v.middleCols(h * dh, dh);
    Matrix scores = qh * kh.transpose() * scale;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (!key_mask[static_cast<size_t>(j)]) {
        scores.col(j).setConstant(-std::numeric_limits<double>::infinity());
      }
    }
    softmax_rows(scores);
    cache.attn[h] = scores;
    cache.concat.middleCols(h * dh, dh).noalias() = scores * vh;
  }
  return wo.forward(cache.concat);
}

std::pair<Matrix, Matrix> MultiHeadAttention::backward(const Cache& cache, const Matrix& dy) const {
  const int dh = dim / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dconcat = wo.backward(cache.concat, dy);
  Matrix dq = Matrix::Zero(cache.q.rows(), dim);
  Matrix dk = Matrix::Zero(cache.k.rows(), dim);
  Matrix dv = Matrix::Zero(cache.v.rows(), dim);

  for (int h = 0; h < num_heads; ++h) {
    const Matrix& attn = cache.attn[h];
    auto qh = cache.q.middleCols(h * dh, dh);
    auto kh = cache.k.middleCols(h * dh, dh);
    auto vh = cache.v.middleCols(h * dh, dh);
    auto dout_h = dconcat.middleCols(h * dh, dh);

    Matrix dattn = dout_h * vh.transpose();
    dv.middleCols(h * dh, dh).noalias() = attn.transpose() * dout_h;

    // softmax backward, row by row; masked keys have zero weight and stay zero
    Matrix dscores(attn.rows(), attn.cols());
    for (Eigen::Index i = 0; i < attn.rows(); ++i) {
      const double dot = attn.row(i).dot(dattn.row(i));
      dscores.row(i) = attn.row(i).array() * (dattn.row(i).array() - dot);
    }
    dq.middleCols(h * dh, dh).noalias() = dscores * kh * scale;
    dk.middleCols(h * dh, dh).noalias() = dscores.transpose() * qh * scale;
  }

  Matrix dquery_in = wq.backward(cache.query_in, dq);
  Matrix dkv_in = wk.backward(cache.kv_in, dk);
  dkv_in += wv.backward(cache.kv_in, dv);
  return {std::move(dquery_in), std::move(dkv_in)};
}

FeedForward FeedForward::make(ParamStore& store, const std::string& name, int dim, int hidden,
                              std::mt19937_64& rng) {
  FeedForward ff;
  ff.fc1 = Linear::make(store, name + ".fc1", dim, hidden, rng);
  ff.fc2 = Linear::make(store, name + ".fc2", hidden, dim, rng);
  return ff;
}

Matrix FeedForward::forward(const Matrix& x, Cache& cache) const {
  cache.input = x;
  cache.hidden_pre = fc1.forward(x);
  return fc2.forward(gelu(cache.hidden_pre));
}

Matrix FeedForward::backward(const Cache& cache, const Matrix& dy) const {
  Matrix dhidden = fc2.backward(gelu(cache.hidden_pre), dy);
  Matrix dpre = gelu_backward(cache.hidden_pre, dhidden);
  return fc1.backward(cache.input, dpre);
}

AdamOptimizer::AdamOptimizer(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::reset(const ParamStore& store) {
  step_count_ = 0;
  m_.clear();
  v_.clear();
  for (size_t i = 0; i < store.size(); ++i) {
    m_.push_back(Matrix::Zero(store.at(i).value.rows(), store.at(i).value.cols()));
    v_.push_back(Matrix::Zero(store.at(i).value.rows(), store.at(i).value.cols()));
  }
}

void AdamOptimizer::step(ParamStore& store) {
  if (m_.size() != store.size()) reset(store);
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (size_t i = 0; i < store.size(); ++i) {
    Tensor& t = store.at(i);
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * t.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * t.grad.cwiseProduct(t.grad);
    Matrix mhat = m_[i] / bc1;
    Matrix vhat = v_[i] / bc2;
    t.value.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

void AdamOptimizer::save(std::ostream& out) const {
  write_u64(out, static_cast<uint64_t>(step_count_));
  write_u64(out, m_.size());
  for (size_t i = 0; i < m_.size(); ++i) {
    write_matrix(out, m_[i]);
    write_matrix(out, v_[i]);
  }
}

void AdamOptimizer::load(std::istream& in, const ParamStore& store) {
  step_count_ = static_cast<int64_t>(read_u64(in));
  uint64_t count = read_u64(in);
  if (count != store.size()) throw DataError("optimizer state tensor count mismatch");
  m_.clear();
  v_.clear();
  for (uint64_t i = 0; i < count; ++i) {
    m_.push_back(read_matrix(in));
    v_.push_back(read_matrix(in));
  }
  if (!in) throw DataError("optimizer state truncated");
}

}  // namespace poicast::nn
