#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ahmsa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

// Storage plus the autograd edge that produced it. Leaves have no backward_fn.
template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(const TensorImpl&)> backward_fn;
};

}  // namespace detail

/// Dense row-major tensor with reverse-mode autodiff.
///
/// A BasicTensor is a cheap handle; copies share storage. Outputs of ops record
/// their inputs when any input requires grad, forming a graph that backward()
/// walks in reverse topological order. Graphs are owned by the tensors that
/// reference them, so independent graphs can live on different threads.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using Impl = detail::TensorImpl<T>;

  BasicTensor() = default;

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor from_data(Shape shape, std::vector<T> data,
                               bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  // Direct write access; intended for parameter updates and test fixtures.
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  // Empty span when the tensor does not require grad.
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  /// Copy of the data with no graph attached.
  BasicTensor detach() const;

  /// Populate grad of every requires_grad leaf reachable from this scalar.
  void backward() const;

  // Used by op implementations.
  static BasicTensor make_result(
      Shape shape, std::vector<T> data,
      std::initializer_list<const BasicTensor*> inputs,
      std::function<void(const Impl&)> backward_fn);
  const std::shared_ptr<Impl>& impl() const { return impl_; }

 private:
  explicit BasicTensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  const Impl& checked() const;
  Impl& checked();

  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace ahmsa
