#include "ahmsa/tensor/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "ahmsa/errors.hpp"

namespace ahmsa {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw DimensionError("axis " + std::to_string(i) + " of shape " +
                           shape_to_string(shape) + " has zero length");
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  check_shape(shape);
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_data(Shape shape, std::vector<T> data,
                                         bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  BasicTensor t(std::move(impl));
  t.set_requires_grad(requires_grad);
  return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

template <typename T>
const typename BasicTensor<T>::Impl& BasicTensor<T>::checked() const {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  return *impl_;
}

template <typename T>
typename BasicTensor<T>::Impl& BasicTensor<T>::checked() {
  if (!impl_) throw UsageError("operation on an undefined tensor");
  return *impl_;
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  return checked().shape;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(s));
  }
  return s[axis];
}

template <typename T>
std::size_t BasicTensor<T>::numel() const {
  return checked().data.size();
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  return checked().data;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  return checked().data;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw UsageError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return impl_->data[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return checked().requires_grad;
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool value) {
  Impl& impl = checked();
  impl.requires_grad = value;
  if (value) {
    impl.grad.assign(impl.data.size(), T(0));
  } else {
    impl.grad.clear();
    impl.grad.shrink_to_fit();
  }
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  return checked().grad;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
  return checked().grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  Impl& impl = checked();
  std::fill(impl.grad.begin(), impl.grad.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return from_data(shape(), checked().data, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::make_result(
    Shape shape, std::vector<T> data, std::initializer_list<const BasicTensor*> inputs,
    std::function<void(const Impl&)> backward_fn) {
  BasicTensor out = from_data(std::move(shape), std::move(data), false);
  bool any = false;
  for (const BasicTensor* in : inputs) {
    if (in && in->defined() && in->requires_grad()) any = true;
  }
  if (!any) return out;
  out.set_requires_grad(true);
  for (const BasicTensor* in : inputs) {
    if (in && in->defined() && in->requires_grad()) out.impl_->parents.push_back(in->impl_);
  }
  out.impl_->backward_fn = std::move(backward_fn);
  return out;
}

template <typename T>
void BasicTensor<T>::backward() const {
  const Impl& root = checked();
  if (root.data.size() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " +
                     shape_to_string(root.shape));
  }
  if (!root.requires_grad) {
    throw UsageError("backward() on a tensor that does not require grad");
  }

  // Iterative post-order DFS; reversed it is a valid topological order.
  std::vector<Impl*> order;
  std::unordered_set<const Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior grads are recomputed from scratch on every call; leaves accumulate.
  for (Impl* node : order) {
    if (node->backward_fn) std::fill(node->grad.begin(), node->grad.end(), T(0));
  }
  impl_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace ahmsa
