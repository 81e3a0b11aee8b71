// Copyright (c) 2026 The xvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xvec/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "xvec/error.hpp"
#include "xvec/parallel.hpp"

namespace xvec::nn {
namespace {

constexpr double kProbFloor = 1e-12;

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Four independent accumulators; fixed order keeps results reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

std::size_t row_grain(std::size_t work_per_row) {
  // Roughly 64k multiply-adds per block.
  return std::max<std::size_t>(1, 65536 / std::max<std::size_t>(1, work_per_row));
}

void check_segments(const Segments& segments, std::size_t rows) {
  if (segments.size() < 2 || segments.front() != 0 || segments.back() != rows) {
    throw ConfigError("segments do not cover " + std::to_string(rows) + " rows");
  }
  for (std::size_t b = 0; b + 1 < segments.size(); ++b) {
    if (segments[b + 1] <= segments[b]) throw ConfigError("empty or unordered segment");
  }
}

}  // namespace

Segments single_segment(std::size_t rows) { return {0, rows}; }

BatchNormState::BatchNormState(std::size_t dim)
    : gamma(1, dim, 1.0), beta(1, dim, 0.0), running_mean(1, dim, 0.0), running_var(1, dim, 1.0) {}

void SpliceContext::validate() const {
  if (offsets.empty()) throw ConfigError("splice context is empty");
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] <= offsets[i - 1]) throw ConfigError("splice offsets must be strictly increasing");
  }
  if (std::find(offsets.begin(), offsets.end(), 0) == offsets.end()) {
    throw ConfigError("splice context must contain offset 0");
  }
}

Matrix affine_forward(const Matrix& x, const AffineParams& p) {
  const std::size_t din = p.in_dim();
  const std::size_t dout = p.out_dim();
  if (x.cols() != din || p.bias.cols() != dout) {
    throw ConfigError("affine: input " + shape(x) + " vs weight " + shape(p.weight));
  }
  Matrix out(x.rows(), dout);
  parallel_for(x.rows(), row_grain(din * dout), [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      const double* xt = x.row(t).data();
      double* ot = out.row(t).data();
      for (std::size_t o = 0; o < dout; ++o) {
        ot[o] = p.bias(0, o) + dot(p.weight.row(o).data(), xt, din);
      }
    }
  });
  return out;
}

Matrix leaky_relu(const Matrix& x, double slope) {
  Matrix out = x;
  for (double& v : out.flat()) {
    if (v < 0.0) v *= slope;
  }
  return out;
}

Matrix batchnorm_forward(const Matrix& x, BatchNormState& s, Mode mode) {
  BatchNorm layer;
  layer.state() = s;
  Matrix out = layer.forward(x, mode);
  s = layer.state();
  return out;
}

Matrix splice(const Matrix& x, const SpliceContext& ctx) {
  return Splice(ctx).forward(x);
}

Matrix splice(const Matrix& x, const SpliceContext& ctx, const Segments& segments) {
  return Splice(ctx).forward(x, segments);
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (double& v : o) v /= sum;
  }
  return out;
}

double cross_entropy(const Matrix& posteriors, std::span<const std::size_t> labels) {
  CrossEntropy ce;
  return ce.forward(posteriors, labels);
}

// ---------------------------------------------------------------- Affine

Affine::Affine(std::size_t din, std::size_t dout)
    : params_(din, dout), grad_weight_(dout, din), grad_bias_(1, dout) {}

Matrix Affine::forward(const Matrix& x) {
  Matrix out = affine_forward(x, params_);
  input_ = x;
  return out;
}

Matrix Affine::backward(const Matrix& dy) {
  if (!input_) throw UsageError("affine backward called before forward");
  const Matrix& x = *input_;
  const std::size_t din = params_.in_dim();
  const std::size_t dout = params_.out_dim();
  if (dy.rows() != x.rows() || dy.cols() != dout) {
    throw ConfigError("affine backward: upstream " + shape(dy) + " vs output " +
                      std::to_string(x.rows()) + "x" + std::to_string(dout));
  }
  if (!grad_weight_.same_shape(params_.weight)) {
    grad_weight_ = Matrix(dout, din);
    grad_bias_ = Matrix(1, dout);
  }
  Matrix dx(x.rows(), din);
  parallel_for(x.rows(), row_grain(din * dout), [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      double* dxt = dx.row(t).data();
      for (std::size_t o = 0; o < dout; ++o) axpy(dy(t, o), params_.weight.row(o).data(), dxt, din);
    }
  });
  parallel_for(dout, row_grain(din * x.rows()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t o = begin; o < end; ++o) {
      double* gw = grad_weight_.row(o).data();
      double gb = 0.0;
      for (std::size_t t = 0; t < x.rows(); ++t) {
        const double g = dy(t, o);
        gb += g;
        if (g != 0.0) axpy(g, x.row(t).data(), gw, din);
      }
      grad_bias_(0, o) += gb;
    }
  });
  return dx;
}

void Affine::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  if (!grad_weight_.same_shape(params_.weight)) {
    grad_weight_ = Matrix(params_.out_dim(), params_.in_dim());
    grad_bias_ = Matrix(1, params_.out_dim());
  }
  out.push_back({prefix + ".weight", &params_.weight, &grad_weight_});
  out.push_back({prefix + ".bias", &params_.bias, &grad_bias_});
}

void Affine::zero_grad() {
  grad_weight_.fill(0.0);
  grad_bias_.fill(0.0);
}

// ------------------------------------------------------------- LeakyRelu

Matrix LeakyRelu::forward(const Matrix& x) {
  input_ = x;
  return leaky_relu(x, slope_);
}

void LeakyRelu::append_signs(std::vector<bool>& out) const {
  if (!input_) return;
  for (double v : input_->flat()) out.push_back(v < 0.0);
}

Matrix LeakyRelu::backward(const Matrix& dy) const {
  if (!input_) throw UsageError("leaky_relu backward called before forward");
  if (!dy.same_shape(*input_)) throw ConfigError("leaky_relu backward: shape mismatch");
  Matrix dx = dy;
  auto in = input_->flat();
  auto g = dx.flat();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (in[i] < 0.0) g[i] *= slope_;
  }
  return dx;
}

// ------------------------------------------------------------- BatchNorm

Matrix BatchNorm::forward(const Matrix& x, Mode mode) {
  const std::size_t n = x.rows();
  const std::size_t d = state_.dim();
  if (x.cols() != d) {
    throw ConfigError("batchnorm: input " + shape(x) + " vs state dim " + std::to_string(d));
  }
  Cache cache{Matrix(n, d), std::vector<double>(d), mode};
  std::vector<double> mean(d, 0.0);
  if (mode == Mode::kTrain) {
    if (n < 2) throw DataError("batchnorm: training needs at least 2 rows, got " + std::to_string(n));
    std::vector<double> var(d, 0.0);
    for (std::size_t t = 0; t < n; ++t) axpy(1.0, x.row(t).data(), mean.data(), d);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x(t, c) - mean[c];
        var[c] += diff * diff;
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      var[c] /= static_cast<double>(n);
      cache.inv_std[c] = 1.0 / std::sqrt(var[c] + state_.epsilon);
      state_.running_mean(0, c) =
          state_.momentum * state_.running_mean(0, c) + (1.0 - state_.momentum) * mean[c];
      state_.running_var(0, c) =
          state_.momentum * state_.running_var(0, c) + (1.0 - state_.momentum) * var[c];
    }
  } else {
    for (std::size_t c = 0; c < d; ++c) {
      mean[c] = state_.running_mean(0, c);
      cache.inv_std[c] = 1.0 / std::sqrt(state_.running_var(0, c) + state_.epsilon);
    }
  }
  Matrix out(n, d);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      const double xhat = (x(t, c) - mean[c]) * cache.inv_std[c];
      cache.normalized(t, c) = xhat;
      out(t, c) = state_.gamma(0, c) * xhat + state_.beta(0, c);
    }
  }
  cache_ = std::move(cache);
  return out;
}

Matrix BatchNorm::backward(const Matrix& dy) {
  if (!cache_) throw UsageError("batchnorm backward called before forward");
  const Matrix& xhat = cache_->normalized;
  if (!dy.same_shape(xhat)) throw ConfigError("batchnorm backward: shape mismatch");
  const std::size_t n = xhat.rows();
  const std::size_t d = xhat.cols();
  if (!grad_gamma_.same_shape(state_.gamma)) {
    grad_gamma_ = Matrix(1, d);
    grad_beta_ = Matrix(1, d);
  }
  std::vector<double> sum_dy(d, 0.0);
  std::vector<double> sum_dy_xhat(d, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      sum_dy[c] += dy(t, c);
      sum_dy_xhat[c] += dy(t, c) * xhat(t, c);
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    grad_gamma_(0, c) += sum_dy_xhat[c];
    grad_beta_(0, c) += sum_dy[c];
  }
  Matrix dx(n, d);
  if (cache_->mode == Mode::kInfer) {
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t c = 0; c < d; ++c) {
        dx(t, c) = dy(t, c) * state_.gamma(0, c) * cache_->inv_std[c];
      }
    }
    return dx;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      const double scale = state_.gamma(0, c) * cache_->inv_std[c];
      dx(t, c) = scale * (dy(t, c) - inv_n * sum_dy[c] - xhat(t, c) * inv_n * sum_dy_xhat[c]);
    }
  }
  return dx;
}

void BatchNorm::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  if (!grad_gamma_.same_shape(state_.gamma)) {
    grad_gamma_ = Matrix(1, state_.dim());
    grad_beta_ = Matrix(1, state_.dim());
  }
  out.push_back({prefix + ".gamma", &state_.gamma, &grad_gamma_});
  out.push_back({prefix + ".beta", &state_.beta, &grad_beta_});
}

void BatchNorm::collect_buffers(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".running_mean", &state_.running_mean, nullptr});
  out.push_back({prefix + ".running_var", &state_.running_var, nullptr});
}

void BatchNorm::zero_grad() {
  grad_gamma_.fill(0.0);
  grad_beta_.fill(0.0);
}

// ---------------------------------------------------------------- Splice

Splice::Splice(SpliceContext ctx) : ctx_(std::move(ctx)) { ctx_.validate(); }

Matrix Splice::forward(const Matrix& x, const Segments& segments) {
  check_segments(segments, x.rows());
  const std::size_t k = ctx_.size();
  const std::size_t d = x.cols();
  Matrix out(x.rows(), d * k);
  std::vector<std::size_t> sources(x.rows() * k);
  for (std::size_t b = 0; b + 1 < segments.size(); ++b) {
    const auto first = static_cast<long>(segments[b]);
    const auto last = static_cast<long>(segments[b + 1]) - 1;
    for (long t = first; t <= last; ++t) {
      double* dst = out.row(static_cast<std::size_t>(t)).data();
      for (std::size_t j = 0; j < k; ++j) {
        const long src = std::clamp(t + ctx_.offsets[j], first, last);
        const auto s = static_cast<std::size_t>(src);
        sources[static_cast<std::size_t>(t) * k + j] = s;
        std::copy_n(x.row(s).data(), d, dst + j * d);
      }
    }
  }
  sources_ = std::move(sources);
  in_cols_ = d;
  return out;
}

Matrix Splice::backward(const Matrix& dy) const {
  if (!sources_) throw UsageError("splice backward called before forward");
  const std::size_t k = ctx_.size();
  const std::size_t rows = sources_->size() / k;
  if (dy.rows() != rows || dy.cols() != in_cols_ * k) {
    throw ConfigError("splice backward: shape mismatch");
  }
  Matrix dx(rows, in_cols_);
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      axpy(1.0, dy.row(t).data() + j * in_cols_, dx.row((*sources_)[t * k + j]).data(), in_cols_);
    }
  }
  return dx;
}

// --------------------------------------------------------------- Softmax

Matrix Softmax::forward(const Matrix& x) {
  output_ = softmax_rows(x);
  return *output_;
}

Matrix Softmax::backward(const Matrix& dy) const {
  if (!output_) throw UsageError("softmax backward called before forward");
  const Matrix& p = *output_;
  if (!dy.same_shape(p)) throw ConfigError("softmax backward: shape mismatch");
  Matrix dx(p.rows(), p.cols());
  for (std::size_t r = 0; r < p.rows(); ++r) {
    const double inner = dot(p.row(r).data(), dy.row(r).data(), p.cols());
    for (std::size_t c = 0; c < p.cols(); ++c) dx(r, c) = p(r, c) * (dy(r, c) - inner);
  }
  return dx;
}

// ---------------------------------------------------------- CrossEntropy

double CrossEntropy::forward(const Matrix& posteriors, std::span<const std::size_t> labels) {
  if (labels.size() != posteriors.rows()) {
    throw DataError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(posteriors.rows()) + " rows");
  }
  double loss = 0.0;
  for (std::size_t r = 0; r < posteriors.rows(); ++r) {
    if (labels[r] >= posteriors.cols()) {
      throw DataError("cross_entropy: label " + std::to_string(labels[r]) + " out of range [0," +
                      std::to_string(posteriors.cols()) + ")");
    }
    double sum = 0.0;
    for (double p : posteriors.row(r)) sum += p;
    if (std::abs(sum - 1.0) > 1e-6) {
      throw DataError("cross_entropy: posterior row " + std::to_string(r) + " sums to " +
                      std::to_string(sum));
    }
    loss -= std::log(std::max(posteriors(r, labels[r]), kProbFloor));
  }
  posteriors_ = posteriors;
  labels_.assign(labels.begin(), labels.end());
  return loss / static_cast<double>(posteriors.rows());
}

Matrix CrossEntropy::backward() const {
  if (!posteriors_) throw UsageError("cross_entropy backward called before forward");
  const Matrix& p = *posteriors_;
  Matrix grad(p.rows(), p.cols());
  const double inv_n = 1.0 / static_cast<double>(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) {
    const double q = p(r, labels_[r]);
    if (q >= kProbFloor) grad(r, labels_[r]) = -inv_n / q;
  }
  return grad;
}

Matrix softmax_cross_entropy_grad(const Matrix& posteriors, std::span<const std::size_t> labels) {
  Matrix grad = posteriors;
  const double inv_n = 1.0 / static_cast<double>(posteriors.rows());
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    grad(r, labels[r]) -= 1.0;
    for (double& v : grad.row(r)) v *= inv_n;
  }
  return grad;
}

}  // namespace xvec::nn
