#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

#include "s3mamba/tensor.hpp"

namespace s3 {

/// Define-by-run gradient tape. Every differentiable op appends one backward
/// closure; backward() replays them in reverse creation order, which is an
/// exact reverse topological order. Each thread owns its tape, so independent
/// graphs can be built concurrently.
class Tape {
 public:
  void record(std::function<void()> backward_fn);
  // Seeds root's gradient (root must hold one element), replays the tape in
  // reverse and clears it. Leaf gradients accumulate across calls.
  void backward(const Tensor& root, double seed = 1.0);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

Tape& active_tape();

inline void backward(const Tensor& root, double seed = 1.0) { active_tape().backward(root, seed); }

bool grad_enabled();

/// Disables recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Finite checks after every op plus division-by-zero checks. On by default in
// builds without NDEBUG.
void set_debug_checks(bool enabled);
bool debug_checks();

namespace autograd {

// True when grad mode is on and any input requires a gradient.
bool needs_grad(std::initializer_list<const Tensor*> inputs);
bool needs_grad(const std::vector<Tensor>& inputs);

// Marks `out` as a graph node and records its backward closure.
void attach(Tensor& out, std::function<void()> backward_fn);

void check_finite(const Tensor& t, const char* op);

}  // namespace autograd

}  // namespace s3
