#include "tfunet/tensor.hpp"

#include <atomic>
#include <sstream>

namespace tfunet {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local Tape* g_active_tape = nullptr;
std::atomic<unsigned> g_faults{0};

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty() || shape.size() > 3) {
    throw ShapeError("tensor rank must be 1..3, got " + shape_str(shape));
  }
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

ShapeError::ShapeError(const std::string& op, const Shape& a, const Shape& b)
    : std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(new_impl(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(new_impl(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_impl(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (!on) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

std::vector<double>& Tensor::grad_buffer() {
  if (!impl_->requires_grad) throw std::logic_error("grad_buffer() on a tensor that does not require grad");
  return impl_->grad_buffer();
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(new_impl(impl_->shape, impl_->data, false)); }

// ---------------------------------------------------------------------------

Tape::~Tape() {
  for (auto& node : nodes_) {
    node.output->tape = nullptr;
    node.output->tape_node.reset();
  }
}

void Tape::record(const std::vector<Tensor>& inputs, Tensor& output, BackwardFn fn) {
  Node node;
  node.input_ids.reserve(inputs.size());
  for (const auto& t : inputs) node.input_ids.push_back(t.id());
  node.output_id = output.id();
  node.output = output.impl();
  node.backward = std::move(fn);
  output.impl()->tape = this;
  output.impl()->tape_node = nodes_.size();
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ShapeError("backward() requires a scalar root, got " + (root.defined() ? shape_str(root.shape()) : "undefined"));
  }
  const auto& impl = root.impl();
  if (impl->tape != this || !impl->tape_node) {
    throw std::logic_error("backward() root was not produced on this tape");
  }
  impl->grad_buffer()[0] += 1.0;
  visited_ = 0;
  for (std::size_t i = *impl->tape_node + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.output->grad.empty()) continue;  // not reachable from root
    node.backward();
    ++visited_;
  }
  for (auto& node : nodes_) {
    node.output->tape = nullptr;
    node.output->tape_node.reset();
  }
  nodes_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& root) {
  if (!root.defined() || !root.impl()->tape) {
    throw std::logic_error("backward() root is not on an active tape");
  }
  root.impl()->tape->backward(root);
}

namespace detail {

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  for (const auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

Tensor result(Shape shape, bool track) { return Tensor::zeros(std::move(shape), track); }

Tensor result(Shape shape, std::vector<double> values, bool track) {
  return Tensor::from(std::move(shape), std::move(values), track);
}

void record(const std::vector<Tensor>& inputs, Tensor& output, Tape::BackwardFn fn) {
  g_active_tape->record(inputs, output, std::move(fn));
}

double* grad_sink(const std::shared_ptr<TensorImpl>& t) {
  if (!t->requires_grad) return nullptr;
  return t->grad_buffer().data();
}

}  // namespace detail

namespace {
thread_local BranchMonitor* g_monitor = nullptr;
}  // namespace

BranchMonitor::BranchMonitor() : previous_(g_monitor) { g_monitor = this; }
BranchMonitor::~BranchMonitor() { g_monitor = previous_; }
BranchMonitor* detail::branch_monitor() { return g_monitor; }

void inject_fault(FaultSite site) { g_faults.store(static_cast<unsigned>(site)); }

double fault_factor(FaultSite site) {
  return (g_faults.load(std::memory_order_relaxed) & static_cast<unsigned>(site)) ? 1.05 : 1.0;
}

}  // namespace tfunet
