#pragma once

// Named parameter storage and initializers shared by the models.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mapspell/error.hpp"
#include "mapspell/rng.hpp"
#include "mapspell/tensor.hpp"

namespace mapspell {

enum class Init { Zeros, Ones, Embedding, Xavier };

/// Insertion-ordered name -> tensor map. The order is the checkpoint order.
class ParamStore {
 public:
  Tensor add(const std::string& name, Shape shape, Init init, Rng& rng) {
    if (index_.contains(name)) throw ContractError("parameter '" + name + "' registered twice");
    std::vector<double> v(numel(shape));
    switch (init) {
      case Init::Zeros: break;
      case Init::Ones: std::fill(v.begin(), v.end(), 1.0); break;
      case Init::Embedding:
        for (double& x : v) x = rng.uniform(-0.05, 0.05);
        break;
      case Init::Xavier: {
        if (shape.size() != 2) throw ContractError("xavier init needs a matrix, got " + shape_str(shape));
        const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
        for (double& x : v) x = rng.uniform(-limit, limit);
        break;
      }
    }
    Tensor t = Tensor::from(std::move(shape), std::move(v), true);
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(t);
    return t;
  }

  /// Registers an existing value buffer (used when loading checkpoints).
  Tensor adopt(const std::string& name, Shape shape, std::vector<double> values) {
    if (index_.contains(name)) throw ContractError("parameter '" + name + "' registered twice");
    Tensor t = Tensor::from(std::move(shape), std::move(values), true);
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(t);
    return t;
  }

  Tensor get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("no parameter named '" + name + "'");
    return tensors_[it->second];
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  std::size_t size() const noexcept { return names_.size(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  /// Parameters whose requires_grad flag is set.
  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    for (const auto& t : tensors_)
      if (t.requires_grad()) out.push_back(t);
    return out;
  }

  /// Sets requires_grad on every parameter whose name starts with prefix.
  void set_trainable(const std::string& prefix, bool on) {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i].starts_with(prefix)) tensors_[i].set_requires_grad(on);
  }

  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> out;
    for (const auto& t : tensors_) out.push_back(t.data());
    return out;
  }

  void restore(const std::vector<std::vector<double>>& values) {
    if (values.size() != tensors_.size()) throw ContractError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].size() != tensors_[i].size()) throw ContractError("restore: size mismatch for '" + names_[i] + "'");
      tensors_[i].data() = values[i];
    }
  }

  /// Copies values for every parameter whose name starts with prefix from
  /// another store; names and shapes must match.
  void copy_from(const ParamStore& src, const std::string& prefix) {
    std::size_t copied = 0;
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!names_[i].starts_with(prefix)) continue;
      if (!src.contains(names_[i])) throw ShapeError("source has no parameter '" + names_[i] + "'");
      const Tensor s = src.get(names_[i]);
      if (s.shape() != tensors_[i].shape())
        throw ShapeError("parameter '" + names_[i] + "': source " + shape_str(s.shape()) + " vs target " +
                         shape_str(tensors_[i].shape()));
      tensors_[i].data() = s.data();
      ++copied;
    }
    for (const auto& n : src.names())
      if (n.starts_with(prefix) && !contains(n)) throw ShapeError("target has no parameter '" + n + "'");
    if (copied == 0) throw ShapeError("no parameters with prefix '" + prefix + "' to copy");
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// x · w + b
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ops::add(ops::matmul(x, w), b); }

}  // namespace mapspell
