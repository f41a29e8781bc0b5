#pragma once

// Dense + LSTM building blocks with hand-written backward passes.
//
// Batched tensors hold one sample per column: an LSTM input step is input x B,
// a hidden state is hidden x B. Single-sample overloads wrap the batched code
// with B = 1.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stepnet/error.hpp"
#include "stepnet/random.hpp"

namespace stepnet {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace detail {

inline void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) throw NumericError("non-finite values in " + std::string(what));
}

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, std::string_view what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                     ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

inline Matrix sigmoid(const Matrix& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline void fill_uniform(Eigen::Ref<Matrix> m, double bound, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
  }
}

inline std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<const double> span_of(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
inline std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<const double> span_of(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parameters

/// Gate order everywhere: input (i), forget (f), candidate (g), output (o).
struct LstmParams {
  Matrix W_i, W_f, W_g, W_o;  // hidden x input
  Matrix U_i, U_f, U_g, U_o;  // hidden x hidden
  Vector b_i, b_f, b_g, b_o;  // hidden

  static LstmParams zeros(int input, int hidden) {
    LstmParams p;
    for (Matrix* w : {&p.W_i, &p.W_f, &p.W_g, &p.W_o}) *w = Matrix::Zero(hidden, input);
    for (Matrix* u : {&p.U_i, &p.U_f, &p.U_g, &p.U_o}) *u = Matrix::Zero(hidden, hidden);
    for (Vector* b : {&p.b_i, &p.b_f, &p.b_g, &p.b_o}) *b = Vector::Zero(hidden);
    return p;
  }

  /// Uniform(+-1/sqrt(fan_in)) weights, zero biases except the forget gate at 1.
  static LstmParams init(int input, int hidden, Rng& rng) {
    LstmParams p = zeros(input, hidden);
    for (Matrix* w : {&p.W_i, &p.W_f, &p.W_g, &p.W_o}) {
      detail::fill_uniform(*w, 1.0 / std::sqrt(static_cast<double>(input)), rng);
    }
    for (Matrix* u : {&p.U_i, &p.U_f, &p.U_g, &p.U_o}) {
      detail::fill_uniform(*u, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    }
    p.b_f.setOnes();
    return p;
  }

  int input_size() const { return static_cast<int>(W_i.cols()); }
  int hidden_size() const { return static_cast<int>(W_i.rows()); }

  /// Visits every parameter array in serialization order: per gate W, U, b.
  template <class F>
  void visit(F&& f) {
    f("lstm.W_i", detail::span_of(W_i)); f("lstm.U_i", detail::span_of(U_i)); f("lstm.b_i", detail::span_of(b_i));
    f("lstm.W_f", detail::span_of(W_f)); f("lstm.U_f", detail::span_of(U_f)); f("lstm.b_f", detail::span_of(b_f));
    f("lstm.W_g", detail::span_of(W_g)); f("lstm.U_g", detail::span_of(U_g)); f("lstm.b_g", detail::span_of(b_g));
    f("lstm.W_o", detail::span_of(W_o)); f("lstm.U_o", detail::span_of(U_o)); f("lstm.b_o", detail::span_of(b_o));
  }
  template <class F>
  void visit(F&& f) const {
    const_cast<LstmParams*>(this)->visit([&](std::string_view name, std::span<double> s) {
      f(name, std::span<const double>(s));
    });
  }

  void check_shapes(int input, int hidden) const {
    for (const Matrix* w : {&W_i, &W_f, &W_g, &W_o}) detail::require_shape(*w, hidden, input, "LSTM W");
    for (const Matrix* u : {&U_i, &U_f, &U_g, &U_o}) detail::require_shape(*u, hidden, hidden, "LSTM U");
    for (const Vector* b : {&b_i, &b_f, &b_g, &b_o}) {
      if (b->size() != hidden) throw ShapeError("LSTM bias size mismatch");
    }
  }

  bool operator==(const LstmParams& o) const {
    return W_i == o.W_i && W_f == o.W_f && W_g == o.W_g && W_o == o.W_o && U_i == o.U_i && U_f == o.U_f &&
           U_g == o.U_g && U_o == o.U_o && b_i == o.b_i && b_f == o.b_f && b_g == o.b_g && b_o == o.b_o;
  }
};

struct DenseParams {
  Matrix W;  // out x in
  Vector b;  // out

  static DenseParams zeros(int in, int out) { return {Matrix::Zero(out, in), Vector::Zero(out)}; }
  static DenseParams init(int in, int out, Rng& rng) {
    DenseParams p = zeros(in, out);
    detail::fill_uniform(p.W, 1.0 / std::sqrt(static_cast<double>(in)), rng);
    return p;
  }

  int in_size() const { return static_cast<int>(W.cols()); }
  int out_size() const { return static_cast<int>(W.rows()); }

  template <class F>
  void visit(std::string_view prefix, F&& f) {
    f(std::string(prefix) + ".W", detail::span_of(W));
    f(std::string(prefix) + ".b", detail::span_of(b));
  }
  template <class F>
  void visit(std::string_view prefix, F&& f) const {
    const_cast<DenseParams*>(this)->visit(prefix, [&](std::string_view name, std::span<double> s) {
      f(name, std::span<const double>(s));
    });
  }
  template <class F>
  void visit(F&& f) {
    visit("dense", f);
  }
  template <class F>
  void visit(F&& f) const {
    visit("dense", f);
  }

  bool operator==(const DenseParams& o) const { return W == o.W && b == o.b; }
};

// ---------------------------------------------------------------------------
// LSTM

/// Everything the backward pass needs from a forward pass.
struct LstmCache {
  std::vector<Matrix> x;       // per step, input x B
  std::vector<Matrix> h_prev;  // per step, hidden x B
  std::vector<Matrix> c_prev;
  std::vector<Matrix> i, f, g, o;
  std::vector<Matrix> tanh_c;
  Matrix c_last;  // cell state after the final step

  std::size_t steps() const { return x.size(); }
};

/// Batched many-to-one LSTM. Returns the final hidden state (hidden x B).
inline Matrix lstm_forward(const LstmParams& p, std::span<const Matrix> x_seq, const Matrix& h0,
                           const Matrix& c0, LstmCache* cache = nullptr) {
  if (x_seq.empty()) throw ShapeError("LSTM needs at least one time step");
  const int hidden = p.hidden_size();
  const Eigen::Index batch = x_seq.front().cols();
  p.check_shapes(p.input_size(), hidden);
  detail::require_shape(h0, hidden, batch, "h0");
  detail::require_shape(c0, hidden, batch, "c0");
  if (cache) *cache = LstmCache{};

  Matrix h = h0, c = c0;
  for (const Matrix& x : x_seq) {
    detail::require_shape(x, p.input_size(), batch, "LSTM input step");
    Matrix i = detail::sigmoid((p.W_i * x + p.U_i * h).colwise() + p.b_i);
    Matrix f = detail::sigmoid((p.W_f * x + p.U_f * h).colwise() + p.b_f);
    Matrix g = ((p.W_g * x + p.U_g * h).colwise() + p.b_g).array().tanh().matrix();
    Matrix o = detail::sigmoid((p.W_o * x + p.U_o * h).colwise() + p.b_o);
    Matrix c_next = f.cwiseProduct(c) + i.cwiseProduct(g);
    Matrix tanh_c = c_next.array().tanh().matrix();
    Matrix h_next = o.cwiseProduct(tanh_c);
    if (cache) {
      cache->x.push_back(x);
      cache->h_prev.push_back(std::move(h));
      cache->c_prev.push_back(std::move(c));
      cache->i.push_back(std::move(i));
      cache->f.push_back(std::move(f));
      cache->g.push_back(std::move(g));
      cache->o.push_back(std::move(o));
      cache->tanh_c.push_back(tanh_c);
    }
    h = std::move(h_next);
    c = std::move(c_next);
  }
  detail::require_finite(h, "LSTM hidden state");
  detail::require_finite(c, "LSTM cell state");
  if (cache) cache->c_last = std::move(c);
  return h;
}

/// Single sequence: x_seq is T x input (one time step per row), h0/c0 are hidden vectors.
inline Vector lstm_forward(const LstmParams& p, const Matrix& x_seq, const Vector& h0, const Vector& c0,
                           LstmCache* cache = nullptr) {
  if (x_seq.rows() < 1) throw ShapeError("LSTM needs at least one time step");
  if (x_seq.cols() != p.input_size()) throw ShapeError("LSTM input width mismatch");
  std::vector<Matrix> steps;
  steps.reserve(static_cast<std::size_t>(x_seq.rows()));
  for (Eigen::Index t = 0; t < x_seq.rows(); ++t) steps.emplace_back(x_seq.row(t).transpose());
  const Matrix h = lstm_forward(p, std::span<const Matrix>(steps), Matrix(h0), Matrix(c0), cache);
  return h.col(0);
}

struct LstmGradients {
  LstmParams params;
  std::vector<Matrix> dx;  // per step, input x B; empty unless requested
  Matrix dh0, dc0;
};

/// Backpropagation through time from dL/dh_T (hidden x B). Parameter gradients are summed over the batch.
inline LstmGradients lstm_backward(const LstmParams& p, const LstmCache& cache, const Matrix& dh_T,
                                   bool want_input_grad = true) {
  const int hidden = p.hidden_size();
  if (cache.steps() == 0) throw ShapeError("empty LSTM cache");
  const Eigen::Index batch = cache.h_prev.front().cols();
  if (cache.h_prev.size() != cache.steps() || cache.i.size() != cache.steps() ||
      cache.tanh_c.size() != cache.steps()) {
    throw ShapeError("inconsistent LSTM cache");
  }
  detail::require_shape(dh_T, hidden, batch, "dL/dh_T");

  LstmGradients out;
  out.params = LstmParams::zeros(p.input_size(), hidden);
  if (want_input_grad) out.dx.resize(cache.steps());
  auto& gp = out.params;

  Matrix dh = dh_T;
  Matrix dc = Matrix::Zero(hidden, batch);
  for (std::size_t s = cache.steps(); s-- > 0;) {
    const Matrix& i = cache.i[s];
    const Matrix& f = cache.f[s];
    const Matrix& g = cache.g[s];
    const Matrix& o = cache.o[s];
    const Matrix& tc = cache.tanh_c[s];

    const Matrix d_o = dh.cwiseProduct(tc);
    dc += dh.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());

    const Matrix dz_i = dc.cwiseProduct(g).cwiseProduct(i.cwiseProduct((1.0 - i.array()).matrix()));
    const Matrix dz_f =
        dc.cwiseProduct(cache.c_prev[s]).cwiseProduct(f.cwiseProduct((1.0 - f.array()).matrix()));
    const Matrix dz_g = dc.cwiseProduct(i).cwiseProduct((1.0 - g.array().square()).matrix());
    const Matrix dz_o = d_o.cwiseProduct(o.cwiseProduct((1.0 - o.array()).matrix()));

    const Matrix& x = cache.x[s];
    const Matrix& hp = cache.h_prev[s];
    gp.W_i.noalias() += dz_i * x.transpose();
    gp.W_f.noalias() += dz_f * x.transpose();
    gp.W_g.noalias() += dz_g * x.transpose();
    gp.W_o.noalias() += dz_o * x.transpose();
    gp.U_i.noalias() += dz_i * hp.transpose();
    gp.U_f.noalias() += dz_f * hp.transpose();
    gp.U_g.noalias() += dz_g * hp.transpose();
    gp.U_o.noalias() += dz_o * hp.transpose();
    gp.b_i += dz_i.rowwise().sum();
    gp.b_f += dz_f.rowwise().sum();
    gp.b_g += dz_g.rowwise().sum();
    gp.b_o += dz_o.rowwise().sum();

    if (want_input_grad) {
      out.dx[s] = p.W_i.transpose() * dz_i + p.W_f.transpose() * dz_f + p.W_g.transpose() * dz_g +
                  p.W_o.transpose() * dz_o;
    }
    dh = p.U_i.transpose() * dz_i + p.U_f.transpose() * dz_f + p.U_g.transpose() * dz_g +
         p.U_o.transpose() * dz_o;
    dc = dc.cwiseProduct(f);
  }
  out.dh0 = std::move(dh);
  out.dc0 = std::move(dc);
  return out;
}

// ---------------------------------------------------------------------------
// Dense, dropout, softmax

enum class Activation { Relu, None };

/// y = act(W x + b), batched over columns of x.
inline Matrix dense_forward(const DenseParams& p, const Matrix& x, Activation act) {
  if (x.rows() != p.in_size()) {
    throw ShapeError("dense input has " + std::to_string(x.rows()) + " rows, layer expects " +
                     std::to_string(p.in_size()));
  }
  if (p.b.size() != p.out_size()) throw ShapeError("dense bias size mismatch");
  Matrix y = (p.W * x).colwise() + p.b;
  if (act == Activation::Relu) y = y.cwiseMax(0.0);
  return y;
}

inline Vector dense_forward(const DenseParams& p, const Vector& x, Activation act) {
  return dense_forward(p, Matrix(x), act).col(0);
}

struct DenseGradients {
  DenseParams params;
  Matrix dx;
};

/// Gradients of a dense layer given its input x, its output y and dL/dy.
inline DenseGradients dense_backward(const DenseParams& p, const Matrix& x, const Matrix& y, const Matrix& dy,
                                     Activation act) {
  detail::require_shape(dy, p.out_size(), x.cols(), "dense upstream gradient");
  detail::require_shape(y, p.out_size(), x.cols(), "dense output");
  Matrix dz = dy;
  if (act == Activation::Relu) dz = dz.cwiseProduct((y.array() > 0.0).cast<double>().matrix());
  DenseGradients g;
  g.params.W = dz * x.transpose();
  g.params.b = dz.rowwise().sum();
  g.dx = p.W.transpose() * dz;
  return g;
}

/// Inverted dropout. In training mode each entry is zeroed with probability `rate` and
/// survivors are scaled by 1/(1-rate); `mask` receives the per-entry multiplier.
inline Matrix dropout(const Matrix& x, double rate, Rng& rng, bool training, Matrix* mask = nullptr) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) {
    if (mask) *mask = Matrix::Ones(x.rows(), x.cols());
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix m(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  Matrix y = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return y;
}

struct SoftmaxXent {
  Vector probs;
  double loss = 0.0;
  Vector dlogits;
};

/// Numerically stable softmax with cross-entropy against class `label`.
inline SoftmaxXent softmax_xent(const Vector& logits, int label) {
  if (logits.size() == 0) throw ShapeError("softmax of empty logits");
  if (label < 0 || label >= logits.size()) throw ShapeError("label out of range");
  const double zmax = logits.maxCoeff();
  Vector e = (logits.array() - zmax).exp().matrix();
  const double sum = e.sum();
  SoftmaxXent out;
  out.probs = e / sum;
  // log p_label = z_label - zmax - log(sum)
  out.loss = -(logits(label) - zmax - std::log(sum));
  out.dlogits = out.probs;
  out.dlogits(label) -= 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer helpers, generic over anything with visit(f(name, span))

template <class Params>
double squared_norm(const Params& grads) {
  double sum = 0.0;
  grads.visit([&](std::string_view, std::span<const double> s) {
    for (double v : s) sum += v * v;
  });
  return sum;
}

template <class Params>
void scale_all(Params& grads, double factor) {
  grads.visit([&](std::string_view, std::span<double> s) {
    for (double& v : s) v *= factor;
  });
}

/// Rescales `grads` so that their global L2 norm is at most `max_norm`. Returns the pre-clip norm.
template <class Params>
double clip_global_norm(Params& grads, double max_norm) {
  const double norm = std::sqrt(squared_norm(grads));
  if (norm > max_norm && norm > 0.0) scale_all(grads, max_norm / norm);
  return norm;
}

/// theta <- theta - lr * grad, for every parameter array.
template <class Params, class Grads>
void sgd_step(Params& params, const Grads& grads, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  std::vector<std::span<const double>> g;
  grads.visit([&](std::string_view, std::span<const double> s) { g.push_back(s); });
  std::size_t k = 0;
  params.visit([&](std::string_view name, std::span<double> s) {
    if (k >= g.size() || g[k].size() != s.size()) {
      throw ShapeError("gradient tape does not mirror parameter " + std::string(name));
    }
    for (std::size_t j = 0; j < s.size(); ++j) s[j] -= lr * g[k][j];
    ++k;
  });
  if (k != g.size()) throw ShapeError("gradient tape has extra entries");
}

}  // namespace stepnet
