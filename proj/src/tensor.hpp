#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace swinchex {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles with an optional reverse-mode tape.
//
// A Tensor is a cheap handle; copies share the same node. Data of a node
// produced by an op is never modified after construction. Leaves (inputs and
// parameters) may be written through mutable_data(), which is how the
// optimizer updates weights in place.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until the first backward touches it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    bool is_leaf() const { return !backward; }
    std::vector<double>& ensure_grad();
  };

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  // Leaf with requires_grad set.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the back.
  std::size_t dim(std::ptrdiff_t axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const;
  // Zero-filled span of numel() when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::vector<double> grad_vector() const;
  void zero_grad();

  // Reverse sweep from this scalar. Gradients of leaves accumulate across
  // calls; gradients of intermediate nodes are recomputed on every call.
  void backward() const;

  // Same values, no tape, no gradient.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  static Tensor from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

// Grad mode is thread-local and on by default.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Multiply-accumulate accounting. While a MacCounter is alive on a thread,
// every forward matmul on that thread adds m*k*n per matrix product.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  std::uint64_t count() const { return count_; }

 private:
  friend void record_macs(std::uint64_t);
  std::uint64_t count_ = 0;
  MacCounter* previous_;
};

void record_macs(std::uint64_t macs);

// Builds an op result. The tape entry is recorded only when grad mode is on
// and at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs,
                   std::function<void(Tensor::Node&)> backward);

// Named parameter collection, iterated in sorted path order.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& path, Tensor value);
  bool contains(const std::string& path) const;
  const Tensor& at(const std::string& path) const;
  Tensor& at(const std::string& path);

  std::size_t size() const { return params_.size(); }
  std::size_t total_numel() const;
  void zero_grad();
  // Element count of every parameter whose path starts with prefix.
  std::size_t numel_with_prefix(const std::string& prefix) const;

  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }
  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }

  // Copies values (not graph state) from other; paths and shapes must match.
  void assign_values(const ParamSet& other);
  // Deep copy with fresh leaves.
  ParamSet clone() const;

 private:
  Map params_;
};

// Central-difference gradient check. Returns the largest relative error
// |analytic - numeric| / max(|analytic|, |numeric|, floor) over the checked
// coordinates.
struct GradCheckOptions {
  double eps = 1e-5;
  double floor = 1e-3;
};

double relative_error(double analytic, double numeric, double floor);

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  GradCheckOptions options = {});

// Gradient check of a scalar function of a whole parameter set. At most
// coords_per_param coordinates are sampled from each parameter (all of them
// when the parameter is smaller).
struct ParamGradCheck {
  double max_error = 0.0;
  std::string worst_param;
  std::size_t coordinates = 0;
};

ParamGradCheck grad_check_params(const std::function<Tensor()>& loss_fn,
                                 ParamSet& params,
                                 std::size_t coords_per_param,
                                 std::uint64_t seed,
                                 GradCheckOptions options = {});

}  // namespace swinchex
