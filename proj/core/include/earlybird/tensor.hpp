#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace earlybird {

// Dense row-major tensor of doubles. Copies share storage (handle
// semantics); training code owns one handle per parameter and gradients
// accumulate additively into the shared grad buffer.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, bool requires_grad = false);
  Tensor(std::vector<int> shape, std::vector<double> data,
         bool requires_grad = false);

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  std::int64_t size() const;
  int rows() const;  // first dimension
  int cols() const;  // product of remaining dimensions

  std::vector<double>& data();
  const std::vector<double>& data() const;
  double& at(std::int64_t i);
  double at(std::int64_t i) const;
  double value() const;  // scalar tensors only

  bool requires_grad() const;
  void set_requires_grad(bool rg);
  bool has_grad() const;
  // Allocates zeros on first touch. Gradient storage is shared state, so
  // this is usable on const handles too.
  std::vector<double>& grad() const;
  void zero_grad();

  // Deep copy: fresh storage, gradient not copied.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  bool all_finite() const;

 private:
  struct Impl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Textual serialization: `shape: d1 d2 ...` then row-major values at 17
// significant digits. Round-trips bit-exactly.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
std::string format_double(double v);

// Reverse-mode tape. Records one node per op; backward replays in reverse.
// A tape is confined to one thread and normally lives for one training step.
class Tape {
 public:
  Tape() = default;
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Tensor matmul(const Tensor& a, const Tensor& b);
  // a * b^T, both (r x k)
  Tensor matmul_nt(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor add_rowvec(const Tensor& x, const Tensor& v);
  Tensor scale(const Tensor& x, double s);
  Tensor gelu(const Tensor& x);
  Tensor softmax_rows(const Tensor& x);
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5);
  Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
  Tensor sum(const Tensor& x);
  Tensor l1_norm(const Tensor& x);
  Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
  // out = sum_k coeffs[k] * parts[k]; coeffs is a vector tensor
  Tensor weighted_sum(const std::vector<Tensor>& parts, const Tensor& coeffs);
  // out[:,j] = x[:,j] * c[j]
  Tensor col_scale(const Tensor& x, const Tensor& c);
  // (groups*group_size x d) -> (groups x d), mean over each group of rows
  Tensor mean_pool_groups(const Tensor& x, int group_size);
  Tensor slice_rows(const Tensor& x, int row_begin, int row_end);
  Tensor concat_rows(const std::vector<Tensor>& parts);
  Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

  void backward(const Tensor& loss);
  std::size_t node_count() const { return nodes_.size(); }

 private:
  Tensor make_output(std::vector<int> shape, bool requires_grad);
  void record(std::function<void()> back);

  struct Node {
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

// Max over coordinates of |analytic - central difference| /
// max(1, |central difference|). f must be a pure scalar-valued function of x.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double h);

}  // namespace earlybird
