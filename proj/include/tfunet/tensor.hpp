#pragma once

// Dense rank-1..3 tensors of doubles with tape-based reverse-mode autodiff.
//
// A Tensor is a handle: copies share storage, so a parameter and every
// activation derived from it can be linked on the tape. Use clone() for an
// independent copy. Storage is row-major, last axis fastest.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfunet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& a, const Shape& b);
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

class Tape;

struct TensorImpl {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  Tape* tape = nullptr;
  std::optional<std::size_t> tape_node;

  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double& operator[](std::size_t i) { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> grad() { return impl_->grad; }
  // Materializes a zero gradient if none exists. Only valid when requires_grad.
  std::vector<double>& grad_buffer();
  void zero_grad();

  // Deep copy detached from any tape; gradient is not copied.
  Tensor clone() const;
  std::uint64_t id() const { return impl_->id; }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// Records operations for one forward pass. Discarded after backward().
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::vector<std::uint64_t> input_ids;
    std::uint64_t output_id = 0;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };

  Tape() = default;
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const std::vector<Tensor>& inputs, Tensor& output, BackwardFn fn);
  void backward(const Tensor& root);
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  // Number of node backward rules run by the last backward().
  std::size_t visited() const { return visited_; }

 private:
  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

// Makes a tape active on the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Runs reverse accumulation from a scalar produced under an active tape.
void backward(const Tensor& root);

namespace detail {

// True when an op over these inputs must be recorded.
bool tracking(std::initializer_list<const Tensor*> inputs);
Tensor result(Shape shape, bool track);
Tensor result(Shape shape, std::vector<double> values, bool track);
void record(const std::vector<Tensor>& inputs, Tensor& output, Tape::BackwardFn fn);
// Gradient sink for a tensor, or nullptr when it does not require grad.
double* grad_sink(const std::shared_ptr<TensorImpl>& t);

}  // namespace detail

// Test-only: while alive on the current thread, folds the branch decisions of
// piecewise ops (ReLU masks, max-pool argmax) into a running signature, so a
// finite-difference probe can tell whether it crossed a kink.
class BranchMonitor {
 public:
  BranchMonitor();
  ~BranchMonitor();
  BranchMonitor(const BranchMonitor&) = delete;
  BranchMonitor& operator=(const BranchMonitor&) = delete;
  std::uint64_t signature() const { return hash_; }
  void note(std::uint64_t v) { hash_ = (hash_ ^ v) * 0x100000001b3ull; }

 private:
  BranchMonitor* previous_;
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

namespace detail {
BranchMonitor* branch_monitor();
}  // namespace detail

// Test-only hook: scales the input gradient of one op family so that the
// gradient-check harness can be shown to catch a broken backward rule.
enum class FaultSite : unsigned { none = 0, conv1d = 1, conv_transpose1d = 2, layer_norm = 4, softmax = 8 };
void inject_fault(FaultSite site);
double fault_factor(FaultSite site);

}  // namespace tfunet
