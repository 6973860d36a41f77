#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "errors.hpp"
#include "rng.hpp"

namespace swinchex {

namespace {

thread_local bool t_grad_enabled = true;
thread_local MacCounter* t_mac_counter = nullptr;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::vector<double>& Tensor::Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<Node>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
  }
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(std::make_shared<Node>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Tensor Tensor::from_node(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  static const Shape empty;
  return node_ ? node_->shape : empty;
}

std::size_t Tensor::dim(std::ptrdiff_t axis) const {
  const auto r = static_cast<std::ptrdiff_t>(rank());
  const std::ptrdiff_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

std::span<const double> Tensor::data() const {
  if (!node_) return {};
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) return {};
  if (!node_->is_leaf()) throw ShapeError("mutable_data() on a non-leaf tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (node_) node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

std::span<const double> Tensor::grad() const {
  if (has_grad()) return node_->grad;
  node_->ensure_grad();
  return node_->grad;
}

std::vector<double> Tensor::grad_vector() const {
  auto g = grad();
  return {g.begin(), g.end()};
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (!node_ || node_->data.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  return Tensor(node_->shape, node_->data);
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

MacCounter::MacCounter() : previous_(t_mac_counter) { t_mac_counter = this; }
MacCounter::~MacCounter() { t_mac_counter = previous_; }

void record_macs(std::uint64_t macs) {
  if (t_mac_counter) t_mac_counter->count_ += macs;
}

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(Tensor::Node&)> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (!t_grad_enabled) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  Tensor::Node* n = out.node();
  n->requires_grad = true;
  n->inputs.reserve(inputs.size());
  for (auto& t : inputs) n->inputs.push_back(t.node_ptr());
  n->backward = std::move(backward);
  return out;
}

// ---------------------------------------------------------------------------
// ParamSet

void ParamSet::add(const std::string& path, Tensor value) {
  if (!params_.emplace(path, std::move(value)).second) {
    throw ShapeError("duplicate parameter path '" + path + "'");
  }
}

bool ParamSet::contains(const std::string& path) const { return params_.count(path) != 0; }

const Tensor& ParamSet::at(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw ShapeError("unknown parameter '" + path + "'");
  return it->second;
}

Tensor& ParamSet::at(const std::string& path) {
  auto it = params_.find(path);
  if (it == params_.end()) throw ShapeError("unknown parameter '" + path + "'");
  return it->second;
}

std::size_t ParamSet::total_numel() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

std::size_t ParamSet::numel_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [path, t] : params_) {
    if (path.compare(0, prefix.size(), prefix) == 0) n += t.numel();
  }
  return n;
}

void ParamSet::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void ParamSet::assign_values(const ParamSet& other) {
  if (other.size() != size()) {
    throw DataError("parameter count mismatch: expected " + std::to_string(size()) +
                    ", got " + std::to_string(other.size()));
  }
  for (auto& [path, t] : params_) {
    auto it = other.params_.find(path);
    if (it == other.params_.end()) throw DataError("missing parameter '" + path + "'");
    if (it->second.shape() != t.shape()) {
      throw DataError("parameter '" + path + "' has shape " + shape_str(it->second.shape()) +
                      ", expected " + shape_str(t.shape()));
    }
    auto src = it->second.data();
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  }
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& [path, t] : params_) {
    Tensor copy = t.detach();
    copy.set_requires_grad(t.requires_grad());
    out.add(path, std::move(copy));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  GradCheckOptions options) {
  x.set_requires_grad(true);
  x.zero_grad();
  f(x).backward();
  const std::vector<double> analytic = x.grad_vector();

  NoGradGuard no_grad;
  auto values = x.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + options.eps;
    const double plus = f(x).item();
    values[i] = saved - options.eps;
    const double minus = f(x).item();
    values[i] = saved;
    const double numeric = (plus - minus) / (2.0 * options.eps);
    worst = std::max(worst, relative_error(analytic[i], numeric, options.floor));
  }
  return worst;
}

ParamGradCheck grad_check_params(const std::function<Tensor()>& loss_fn, ParamSet& params,
                                 std::size_t coords_per_param, std::uint64_t seed,
                                 GradCheckOptions options) {
  params.zero_grad();
  loss_fn().backward();

  ParamGradCheck result;
  SplitMix64 rng(seed);
  NoGradGuard no_grad;
  for (auto& [path, t] : params) {
    const std::vector<double> analytic = t.grad_vector();
    auto values = t.mutable_data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > coords_per_param) {
      shuffle(coords, rng);
      coords.resize(coords_per_param);
    }
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + options.eps;
      const double plus = loss_fn().item();
      values[i] = saved - options.eps;
      const double minus = loss_fn().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double err = relative_error(analytic[i], numeric, options.floor);
      ++result.coordinates;
      if (err > result.max_error) {
        result.max_error = err;
        result.worst_param = path;
      }
    }
  }
  return result;
}

}  // namespace swinchex
