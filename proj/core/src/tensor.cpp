#include "earlybird/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace earlybird {

namespace {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad_scalar(double x) {
  const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi + x * pdf;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data,
               bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("tensor data length does not match shape");
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return impl_->shape; }

std::int64_t Tensor::size() const {
  return static_cast<std::int64_t>(impl_->data.size());
}

int Tensor::rows() const { return impl_->shape.empty() ? 1 : impl_->shape[0]; }

int Tensor::cols() const {
  int c = 1;
  for (std::size_t i = 1; i < impl_->shape.size(); ++i) c *= impl_->shape[i];
  return c;
}

std::vector<double>& Tensor::data() { return impl_->data; }
const std::vector<double>& Tensor::data() const { return impl_->data; }
double& Tensor::at(std::int64_t i) { return impl_->data[i]; }
double Tensor::at(std::int64_t i) const { return impl_->data[i]; }

double Tensor::value() const {
  if (size() != 1) throw std::logic_error("value() on non-scalar tensor");
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool rg) { impl_->requires_grad = rg; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : impl_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  os << "shape:";
  for (int d : t.shape()) os << ' ' << d;
  os << '\n';
  const auto& data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << format_double(data[i]);
    os << (((i + 1) % 8 == 0 || i + 1 == data.size()) ? '\n' : ' ');
  }
}

Tensor read_tensor(std::istream& is) {
  std::string tag;
  is >> tag;
  if (tag != "shape:") throw std::runtime_error("expected 'shape:' line");
  std::string line;
  std::getline(is, line);
  std::istringstream ls(line);
  std::vector<int> shape;
  int d;
  while (ls >> d) shape.push_back(d);
  if (shape.empty()) throw std::runtime_error("empty tensor shape");
  const std::int64_t n = shape_numel(shape);
  std::vector<double> data(n);
  for (std::int64_t i = 0; i < n; ++i) {
    std::string tok;
    if (!(is >> tok)) throw std::runtime_error("truncated tensor data");
    data[i] = std::strtod(tok.c_str(), nullptr);
  }
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tape::make_output(std::vector<int> shape, bool requires_grad) {
  return Tensor(std::move(shape), grad_enabled_ && requires_grad);
}

void Tape::record(std::function<void()> back) {
  if (grad_enabled_) nodes_.push_back({std::move(back)});
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: inner dimensions disagree");
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = make_output({m, n}, a.requires_grad() || b.requires_grad());
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = out.data().data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      for (int j = 0; j < n; ++j) C[i * n + j] += av * B[p * n + j];
    }
  if (out.requires_grad())
    record([a, b, out, m, k, n]() mutable {
      const double* G = out.grad().data();
      if (a.requires_grad()) {
        double* dA = a.grad().data();
        const double* B = b.data().data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const double g = G[i * n + j];
            for (int p = 0; p < k; ++p) dA[i * k + p] += g * B[p * n + j];
          }
      }
      if (b.requires_grad()) {
        double* dB = b.grad().data();
        const double* A = a.data().data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            for (int j = 0; j < n; ++j) dB[p * n + j] += av * G[i * n + j];
          }
      }
    });
  return out;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[1])
    throw std::invalid_argument("matmul_nt: column counts disagree");
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  Tensor out = make_output({m, n}, a.requires_grad() || b.requires_grad());
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = out.data().data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
      C[i * n + j] = s;
    }
  if (out.requires_grad())
    record([a, b, out, m, k, n]() mutable {
      const double* G = out.grad().data();
      if (a.requires_grad()) {
        double* dA = a.grad().data();
        const double* B = b.data().data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const double g = G[i * n + j];
            for (int p = 0; p < k; ++p) dA[i * k + p] += g * B[j * k + p];
          }
      }
      if (b.requires_grad()) {
        double* dB = b.grad().data();
        const double* A = a.data().data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const double g = G[i * n + j];
            for (int p = 0; p < k; ++p) dB[j * k + p] += g * A[i * k + p];
          }
      }
    });
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shapes disagree");
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  for (std::int64_t i = 0; i < a.size(); ++i)
    out.at(i) = a.at(i) + b.at(i);
  if (out.requires_grad())
    record([a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& da = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& db = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
      }
    });
  return out;
}

Tensor Tape::add_rowvec(const Tensor& x, const Tensor& v) {
  const int r = x.rows(), c = x.cols();
  if (v.size() != c) throw std::invalid_argument("add_rowvec: length mismatch");
  Tensor out = make_output(x.shape(), x.requires_grad() || v.requires_grad());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i * c + j) = x.at(i * c + j) + v.at(j);
  if (out.requires_grad())
    record([x, v, out, r, c]() mutable {
      const auto& g = out.grad();
      if (x.requires_grad()) {
        auto& dx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      }
      if (v.requires_grad()) {
        auto& dv = v.grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) dv[j] += g[i * c + j];
      }
    });
  return out;
}

Tensor Tape::scale(const Tensor& x, double s) {
  Tensor out = make_output(x.shape(), x.requires_grad());
  for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) * s;
  if (out.requires_grad())
    record([x, out, s]() mutable {
      const auto& g = out.grad();
      auto& dx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += s * g[i];
    });
  return out;
}

Tensor Tape::gelu(const Tensor& x) {
  Tensor out = make_output(x.shape(), x.requires_grad());
  for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = gelu_scalar(x.at(i));
  if (out.requires_grad())
    record([x, out]() mutable {
      const auto& g = out.grad();
      auto& dx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        dx[i] += g[i] * gelu_grad_scalar(x.at(i));
    });
  return out;
}

Tensor Tape::softmax_rows(const Tensor& x) {
  const int r = x.rows(), c = x.cols();
  Tensor out = make_output(x.shape(), x.requires_grad());
  for (int i = 0; i < r; ++i) {
    double mx = x.at(i * c);
    for (int j = 1; j < c; ++j) mx = std::max(mx, x.at(i * c + j));
    double denom = 0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(x.at(i * c + j) - mx);
      out.at(i * c + j) = e;
      denom += e;
    }
    for (int j = 0; j < c; ++j) out.at(i * c + j) /= denom;
  }
  if (out.requires_grad())
    record([x, out, r, c]() mutable {
      const auto& g = out.grad();
      auto& dx = x.grad();
      for (int i = 0; i < r; ++i) {
        double dot = 0;
        for (int j = 0; j < c; ++j) dot += g[i * c + j] * out.at(i * c + j);
        for (int j = 0; j < c; ++j)
          dx[i * c + j] += out.at(i * c + j) * (g[i * c + j] - dot);
      }
    });
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                        double eps) {
  const int r = x.rows(), c = x.cols();
  if (gain.size() != c || bias.size() != c)
    throw std::invalid_argument("layer_norm: gain/bias length mismatch");
  Tensor out = make_output(
      x.shape(),
      x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  std::vector<double> inv_std(r), mean(r);
  for (int i = 0; i < r; ++i) {
    double mu = 0;
    for (int j = 0; j < c; ++j) mu += x.at(i * c + j);
    mu /= c;
    double var = 0;
    for (int j = 0; j < c; ++j) {
      const double d = x.at(i * c + j) - mu;
      var += d * d;
    }
    var /= c;
    mean[i] = mu;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j)
      out.at(i * c + j) =
          gain.at(j) * (x.at(i * c + j) - mu) * inv_std[i] + bias.at(j);
  }
  if (out.requires_grad())
    record([x, gain, bias, out, r, c, mean, inv_std]() mutable {
      const auto& g = out.grad();
      for (int i = 0; i < r; ++i) {
        // xhat_ij = (x_ij - mu_i) * inv_std_i
        double sum_gg = 0, sum_ggx = 0;
        for (int j = 0; j < c; ++j) {
          const double xhat = (x.at(i * c + j) - mean[i]) * inv_std[i];
          const double gg = g[i * c + j] * gain.at(j);
          sum_gg += gg;
          sum_ggx += gg * xhat;
          if (gain.requires_grad()) gain.grad()[j] += g[i * c + j] * xhat;
          if (bias.requires_grad()) bias.grad()[j] += g[i * c + j];
        }
        if (x.requires_grad()) {
          auto& dx = x.grad();
          for (int j = 0; j < c; ++j) {
            const double xhat = (x.at(i * c + j) - mean[i]) * inv_std[i];
            const double gg = g[i * c + j] * gain.at(j);
            dx[i * c + j] +=
                inv_std[i] * (gg - sum_gg / c - xhat * sum_ggx / c);
          }
        }
      }
    });
  return out;
}

Tensor Tape::cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int r = logits.rows(), c = logits.cols();
  if (static_cast<int>(labels.size()) != r)
    throw std::invalid_argument("cross_entropy: one label per row required");
  for (int y : labels)
    if (y < 0 || y >= c)
      throw std::out_of_range("cross_entropy: label out of class range");
  Tensor out = make_output({1}, logits.requires_grad());
  Tensor probs({r, c});
  double loss = 0;
  for (int i = 0; i < r; ++i) {
    double mx = logits.at(i * c);
    for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(i * c + j));
    double denom = 0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(logits.at(i * c + j) - mx);
      probs.at(i * c + j) = e;
      denom += e;
    }
    for (int j = 0; j < c; ++j) probs.at(i * c + j) /= denom;
    loss -= std::log(probs.at(i * c + labels[i]));
  }
  out.at(0) = loss / r;
  if (out.requires_grad())
    record([logits, out, probs, labels, r, c]() mutable {
      const double g = out.grad()[0] / r;
      auto& dx = logits.grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          dx[i * c + j] +=
              g * (probs.at(i * c + j) - (j == labels[i] ? 1.0 : 0.0));
    });
  return out;
}

Tensor Tape::sum(const Tensor& x) {
  Tensor out = make_output({1}, x.requires_grad());
  out.at(0) = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  if (out.requires_grad())
    record([x, out]() mutable {
      const double g = out.grad()[0];
      auto& dx = x.grad();
      for (auto& v : dx) v += g;
    });
  return out;
}

Tensor Tape::l1_norm(const Tensor& x) {
  Tensor out = make_output({1}, x.requires_grad());
  double s = 0;
  for (double v : x.data()) s += std::abs(v);
  out.at(0) = s;
  if (out.requires_grad())
    record([x, out]() mutable {
      // subgradient 0 at exact zeros
      const double g = out.grad()[0];
      auto& dx = x.grad();
      for (std::int64_t i = 0; i < x.size(); ++i) {
        const double v = x.at(i);
        dx[i] += g * (v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0));
      }
    });
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shapes disagree");
  Tensor out = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  for (std::int64_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * b.at(i);
  if (out.requires_grad())
    record([a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& da = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b.at(i);
      }
      if (b.requires_grad()) {
        auto& db = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a.at(i);
      }
    });
  return out;
}

Tensor Tape::weighted_sum(const std::vector<Tensor>& parts,
                          const Tensor& coeffs) {
  if (parts.empty()) throw std::invalid_argument("weighted_sum: no parts");
  if (coeffs.size() != static_cast<std::int64_t>(parts.size()))
    throw std::invalid_argument("weighted_sum: coefficient count mismatch");
  bool rg = coeffs.requires_grad();
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape())
      throw std::invalid_argument("weighted_sum: part shapes disagree");
    rg = rg || p.requires_grad();
  }
  Tensor out = make_output(parts[0].shape(), rg);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double c = coeffs.at(static_cast<std::int64_t>(k));
    for (std::int64_t i = 0; i < out.size(); ++i)
      out.at(i) += c * parts[k].at(i);
  }
  if (out.requires_grad())
    record([parts, coeffs, out]() mutable {
      const auto& g = out.grad();
      for (std::size_t k = 0; k < parts.size(); ++k) {
        const double c = coeffs.at(static_cast<std::int64_t>(k));
        if (parts[k].requires_grad()) {
          auto& dp = parts[k].grad();
          for (std::size_t i = 0; i < g.size(); ++i) dp[i] += c * g[i];
        }
        if (coeffs.requires_grad()) {
          double dot = 0;
          for (std::size_t i = 0; i < g.size(); ++i)
            dot += g[i] * parts[k].at(i);
          coeffs.grad()[k] += dot;
        }
      }
    });
  return out;
}

Tensor Tape::col_scale(const Tensor& x, const Tensor& c) {
  const int r = x.rows(), n = x.cols();
  if (c.size() != n) throw std::invalid_argument("col_scale: length mismatch");
  Tensor out = make_output(x.shape(), x.requires_grad() || c.requires_grad());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j) out.at(i * n + j) = x.at(i * n + j) * c.at(j);
  if (out.requires_grad())
    record([x, c, out, r, n]() mutable {
      const auto& g = out.grad();
      if (x.requires_grad()) {
        auto& dx = x.grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < n; ++j) dx[i * n + j] += g[i * n + j] * c.at(j);
      }
      if (c.requires_grad()) {
        auto& dc = c.grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < n; ++j) dc[j] += g[i * n + j] * x.at(i * n + j);
      }
    });
  return out;
}

Tensor Tape::mean_pool_groups(const Tensor& x, int group_size) {
  const int r = x.rows(), c = x.cols();
  if (group_size <= 0 || r % group_size != 0)
    throw std::invalid_argument("mean_pool_groups: rows not divisible");
  const int groups = r / group_size;
  Tensor out = make_output({groups, c}, x.requires_grad());
  for (int b = 0; b < groups; ++b)
    for (int s = 0; s < group_size; ++s)
      for (int j = 0; j < c; ++j)
        out.at(b * c + j) += x.at((b * group_size + s) * c + j) / group_size;
  if (out.requires_grad())
    record([x, out, groups, group_size, c]() mutable {
      const auto& g = out.grad();
      auto& dx = x.grad();
      for (int b = 0; b < groups; ++b)
        for (int s = 0; s < group_size; ++s)
          for (int j = 0; j < c; ++j)
            dx[(b * group_size + s) * c + j] += g[b * c + j] / group_size;
    });
  return out;
}

Tensor Tape::slice_rows(const Tensor& x, int row_begin, int row_end) {
  const int r = x.rows(), c = x.cols();
  if (row_begin < 0 || row_end > r || row_begin >= row_end)
    throw std::invalid_argument("slice_rows: bad range");
  Tensor out = make_output({row_end - row_begin, c}, x.requires_grad());
  for (int i = row_begin; i < row_end; ++i)
    for (int j = 0; j < c; ++j)
      out.at((i - row_begin) * c + j) = x.at(i * c + j);
  if (out.requires_grad())
    record([x, out, row_begin, c]() mutable {
      const auto& g = out.grad();
      auto& dx = x.grad();
      const int n = out.rows();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
          dx[(row_begin + i) * c + j] += g[i * c + j];
    });
  return out;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int c = parts[0].cols();
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.cols() != c)
      throw std::invalid_argument("concat_rows: column counts disagree");
    total += p.rows();
    rg = rg || p.requires_grad();
  }
  Tensor out = make_output({total, c}, rg);
  int off = 0;
  for (const auto& p : parts) {
    for (std::int64_t i = 0; i < p.size(); ++i)
      out.at(off * c + i) = p.at(i);
    off += p.rows();
  }
  if (out.requires_grad())
    record([parts, out, c]() mutable {
      const auto& g = out.grad();
      int off = 0;
      for (auto& p : parts) {
        if (p.requires_grad()) {
          auto& dp = p.grad();
          for (std::int64_t i = 0; i < p.size(); ++i)
            dp[i] += g[off * c + i];
        }
        off += p.rows();
      }
    });
  return out;
}

Tensor Tape::gather_rows(const Tensor& table, const std::vector<int>& ids) {
  const int rows = table.rows(), c = table.cols();
  for (int id : ids)
    if (id < 0 || id >= rows)
      throw std::out_of_range("gather_rows: id out of range");
  Tensor out = make_output({static_cast<int>(ids.size()), c},
                           table.requires_grad());
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < c; ++j)
      out.at(static_cast<std::int64_t>(i) * c + j) = table.at(ids[i] * c + j);
  if (out.requires_grad())
    record([table, out, ids, c]() mutable {
      const auto& g = out.grad();
      auto& dt = table.grad();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < c; ++j) dt[ids[i] * c + j] += g[i * c + j];
    });
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  loss.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double h) {
  Tensor probe = x.clone();
  probe.set_requires_grad(true);
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor loss = f(tape, probe);
    tape.backward(loss);
    analytic = probe.grad();
  }
  double max_err = 0;
  for (std::int64_t i = 0; i < probe.size(); ++i) {
    const double orig = probe.at(i);
    Tape dummy(false);
    probe.at(i) = orig + h;
    const double up = f(dummy, probe).value();
    probe.at(i) = orig - h;
    const double dn = f(dummy, probe).value();
    probe.at(i) = orig;
    const double fd = (up - dn) / (2 * h);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace earlybird
