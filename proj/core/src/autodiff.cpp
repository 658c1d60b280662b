#include "s3mamba/autodiff.hpp"

#include <cmath>
#include <string>

namespace s3 {

namespace {

thread_local Tape g_tape;
thread_local bool g_grad_enabled = true;

#ifdef NDEBUG
bool g_debug_checks = false;
#else
bool g_debug_checks = true;
#endif

}  // namespace

void Tape::record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

void Tape::backward(const Tensor& root, double seed) {
  if (root.numel() != 1) {
    throw ShapeError("backward: root must hold a single element, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    clear();
    throw std::logic_error("backward: root does not require grad");
  }
  root.impl()->ensure_grad()[0] += seed;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  clear();
}

void Tape::clear() { nodes_.clear(); }

Tape& active_tape() { return g_tape; }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void set_debug_checks(bool enabled) { g_debug_checks = enabled; }
bool debug_checks() { return g_debug_checks; }

namespace autograd {

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

bool needs_grad(const std::vector<Tensor>& inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

void attach(Tensor& out, std::function<void()> backward_fn) {
  out.impl()->requires_grad = true;
  g_tape.record(std::move(backward_fn));
}

void check_finite(const Tensor& t, const char* op) {
  if (!g_debug_checks) return;
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

}  // namespace autograd

}  // namespace s3
