#include "sgcl/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace sgcl {

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty means absent
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(const std::vector<double>&, std::span<std::vector<double>*>)>
      backprop;

  bool needs_grad() const { return requires_grad || !parents.empty(); }
};

}  // namespace detail

using detail::TensorNode;

namespace {

thread_local bool g_grad_enabled = true;

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extents must be positive");
    n *= e;
  }
  return n;
}

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2)
    throw std::invalid_argument(std::string(what) + " requires a rank-2 tensor");
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
         x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

}  // namespace

// ---- Tensor handle -------------------------------------------------------

Tensor make_op_result(Shape shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(const std::vector<double>&,
                                         std::span<std::vector<double>*>)>
                          backprop);

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<double>(n, value),
                     requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw std::invalid_argument("value count does not match shape");
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) throw std::out_of_range("axis out of range");
  return node_->shape[axis];
}

std::int64_t Tensor::numel() const {
  return static_cast<std::int64_t>(node_->values.size());
}

const std::vector<double>& Tensor::values() const { return node_->values; }

double Tensor::operator[](std::int64_t flat_index) const {
  return node_->values.at(static_cast<std::size_t>(flat_index));
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() requires one element");
  return node_->values[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (flag && !node_->parents.empty())
    throw std::logic_error("requires_grad can only be set on leaf tensors");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("no gradient present");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

bool Tensor::needs_grad() const { return node_->needs_grad(); }

Tensor Tensor::detach() const {
  return from_values(node_->shape, node_->values, false);
}

void Tensor::assign_values(std::span<const double> new_values) {
  if (!node_->parents.empty())
    throw std::logic_error("assign_values is only valid on leaf tensors");
  if (new_values.size() != node_->values.size())
    throw std::invalid_argument("assign_values size mismatch");
  std::copy(new_values.begin(), new_values.end(), node_->values.begin());
}

// ---- graph machinery -----------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_op_result(Shape shape, std::vector<double> values,
                      std::vector<Tensor> parents,
                      std::function<void(const std::vector<double>&,
                                         std::span<std::vector<double>*>)>
                          backprop) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);

  bool record = g_grad_enabled;
  if (record) {
    bool any = false;
    for (const auto& p : parents) any = any || p.node()->needs_grad();
    record = any;
  }
  if (record) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1)
    throw std::invalid_argument("backward requires a defined scalar root");

  TensorNode* root_node = root.node();

  // Topological order over the recorded graph; parents precede children.
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root_node, 0});
  visited.insert(root_node);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->needs_grad() && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  std::unordered_map<TensorNode*, std::vector<double>> buffers;
  buffers[root_node] = {1.0};

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    auto found = buffers.find(n);
    if (found == buffers.end()) continue;
    if (n->backprop) {
      std::vector<std::vector<double>*> parent_bufs(n->parents.size(), nullptr);
      for (std::size_t i = 0; i < n->parents.size(); ++i) {
        TensorNode* p = n->parents[i].get();
        if (!p->needs_grad()) continue;
        auto [slot, inserted] = buffers.try_emplace(p);
        if (inserted) slot->second.assign(p->values.size(), 0.0);
        parent_bufs[i] = &slot->second;
      }
      n->backprop(found->second, parent_bufs);
    }
    if (n->requires_grad) {
      if (n->grad.empty()) n->grad.assign(n->values.size(), 0.0);
      const auto& buf = found->second;
      for (std::size_t i = 0; i < buf.size(); ++i) n->grad[i] += buf[i];
    }
  }
}

// ---- arithmetic ------------------------------------------------------------

namespace {

enum class Broadcast { None, LeftScalar, RightScalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() == b.shape()) return Broadcast::None;
  if (b.numel() == 1) return Broadcast::RightScalar;
  if (a.numel() == 1) return Broadcast::LeftScalar;
  throw std::invalid_argument(std::string(what) +
                              ": shapes must match or one side be scalar");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  auto kind = broadcast_kind(a, b, "add");
  const auto& av = a.values();
  const auto& bv = b.values();
  Shape out_shape = kind == Broadcast::LeftScalar ? b.shape() : a.shape();
  std::vector<double> out(kind == Broadcast::LeftScalar ? bv.size() : av.size());
  switch (kind) {
    case Broadcast::None:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
      break;
    case Broadcast::RightScalar:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[0];
      break;
    case Broadcast::LeftScalar:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[0] + bv[i];
      break;
  }
  return make_op_result(
      std::move(out_shape), std::move(out), {a, b},
      [kind](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0]) {
          if (kind == Broadcast::LeftScalar) {
            for (double v : g) (*gp[0])[0] += v;
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) (*gp[0])[i] += g[i];
          }
        }
        if (gp[1]) {
          if (kind == Broadcast::RightScalar) {
            for (double v : g) (*gp[1])[0] += v;
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) (*gp[1])[i] += g[i];
          }
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  auto kind = broadcast_kind(a, b, "mul");
  const auto& av = a.values();
  const auto& bv = b.values();
  Shape out_shape = kind == Broadcast::LeftScalar ? b.shape() : a.shape();
  std::vector<double> out(kind == Broadcast::LeftScalar ? bv.size() : av.size());
  switch (kind) {
    case Broadcast::None:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
      break;
    case Broadcast::RightScalar:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[0];
      break;
    case Broadcast::LeftScalar:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[0] * bv[i];
      break;
  }
  return make_op_result(
      std::move(out_shape), std::move(out), {a, b},
      [kind, av, bv](const std::vector<double>& g,
                     std::span<std::vector<double>*> gp) {
        if (gp[0]) {
          switch (kind) {
            case Broadcast::None:
              for (std::size_t i = 0; i < g.size(); ++i)
                (*gp[0])[i] += g[i] * bv[i];
              break;
            case Broadcast::RightScalar:
              for (std::size_t i = 0; i < g.size(); ++i)
                (*gp[0])[i] += g[i] * bv[0];
              break;
            case Broadcast::LeftScalar:
              for (std::size_t i = 0; i < g.size(); ++i)
                (*gp[0])[0] += g[i] * bv[i];
              break;
          }
        }
        if (gp[1]) {
          switch (kind) {
            case Broadcast::None:
              for (std::size_t i = 0; i < g.size(); ++i)
                (*gp[1])[i] += g[i] * av[i];
              break;
            case Broadcast::RightScalar:
              for (std::size_t i = 0; i < g.size(); ++i)
                (*gp[1])[0] += g[i] * av[i];
              break;
            case Broadcast::LeftScalar:
              for (std::size_t i = 0; i < g.size(); ++i)
                (*gp[1])[i] += g[i] * av[0];
              break;
          }
        }
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  auto kind = broadcast_kind(a, b, "div");
  const auto& av = a.values();
  const auto& bv = b.values();
  Shape out_shape = kind == Broadcast::LeftScalar ? b.shape() : a.shape();
  std::vector<double> out(kind == Broadcast::LeftScalar ? bv.size() : av.size());
  auto bval = [&](std::size_t i) {
    return kind == Broadcast::RightScalar ? bv[0] : bv[i];
  };
  auto aval = [&](std::size_t i) {
    return kind == Broadcast::LeftScalar ? av[0] : av[i];
  };
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = aval(i) / bval(i);
  return make_op_result(
      std::move(out_shape), std::move(out), {a, b},
      [kind, av, bv](const std::vector<double>& g,
                     std::span<std::vector<double>*> gp) {
        auto bval = [&](std::size_t i) {
          return kind == Broadcast::RightScalar ? bv[0] : bv[i];
        };
        auto aval = [&](std::size_t i) {
          return kind == Broadcast::LeftScalar ? av[0] : av[i];
        };
        for (std::size_t i = 0; i < g.size(); ++i) {
          double binv = 1.0 / bval(i);
          if (gp[0]) {
            std::size_t ai = kind == Broadcast::LeftScalar ? 0 : i;
            (*gp[0])[ai] += g[i] * binv;
          }
          if (gp[1]) {
            std::size_t bi = kind == Broadcast::RightScalar ? 0 : i;
            (*gp[1])[bi] -= g[i] * aval(i) * binv * binv;
          }
        }
      });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (auto& v : out) v *= c;
  return make_op_result(
      a.shape(), std::move(out), {a},
      [c](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::size_t i = 0; i < g.size(); ++i) (*gp[0])[i] += g[i] * c;
      });
}

Tensor add_const(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (auto& v : out) v += c;
  return make_op_result(
      a.shape(), std::move(out), {a},
      [](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::size_t i = 0; i < g.size(); ++i) (*gp[0])[i] += g[i];
      });
}

Tensor sqrt(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) {
    if (v < 0.0) throw std::invalid_argument("sqrt of negative value");
    v = std::sqrt(v);
  }
  return make_op_result(
      a.shape(), out, {a},
      [out](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::size_t i = 0; i < g.size(); ++i)
            (*gp[0])[i] += g[i] * 0.5 / out[i];
      });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) v = std::exp(v);
  return make_op_result(
      a.shape(), out, {a},
      [out](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::size_t i = 0; i < g.size(); ++i) (*gp[0])[i] += g[i] * out[i];
      });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) {
    if (v <= 0.0) throw std::invalid_argument("log of non-positive value");
    v = std::log(v);
  }
  const auto av = a.values();
  return make_op_result(
      a.shape(), std::move(out), {a},
      [av](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::size_t i = 0; i < g.size(); ++i) (*gp[0])[i] += g[i] / av[i];
      });
}

Tensor gelu(const Tensor& a) {
  // Exact erf form, used consistently everywhere (not the tanh fit).
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = gelu_value(av[i]);
  return make_op_result(
      a.shape(), std::move(out), {a},
      [av](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::size_t i = 0; i < g.size(); ++i)
            (*gp[0])[i] += g[i] * gelu_derivative(av[i]);
      });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_op_result(
      {1}, {s}, {a},
      [](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (auto& v : *gp[0]) v += g[0];
      });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  double inv = 1.0 / static_cast<double>(a.numel());
  return make_op_result(
      {1}, {s * inv}, {a},
      [inv](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (auto& v : *gp[0]) v += g[0] * inv;
      });
}

Tensor reduce_max(const Tensor& a) {
  const auto& av = a.values();
  std::size_t arg = 0;
  for (std::size_t i = 1; i < av.size(); ++i)
    if (av[i] > av[arg]) arg = i;
  return make_op_result(
      {1}, {av[arg]}, {a},
      [arg](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0]) (*gp[0])[arg] += g[0];
      });
}

Tensor l2_norm(const Tensor& a) {
  const auto av = a.values();
  double ss = 0.0;
  for (double v : av) ss += v * v;
  double norm = std::sqrt(ss);
  return make_op_result(
      {1}, {norm}, {a},
      [av, norm](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0] && norm > 0.0)
          for (std::size_t i = 0; i < av.size(); ++i)
            (*gp[0])[i] += g[0] * av[i] / norm;
      });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("dot requires matching shapes");
  const auto av = a.values();
  const auto bv = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return make_op_result(
      {1}, {s}, {a, b},
      [av, bv](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::size_t i = 0; i < av.size(); ++i) (*gp[0])[i] += g[0] * bv[i];
        if (gp[1])
          for (std::size_t i = 0; i < bv.size(); ++i) (*gp[1])[i] += g[0] * av[i];
      });
}

Tensor log_sum_exp(const Tensor& a) {
  if (a.rank() != 1) throw std::invalid_argument("log_sum_exp expects rank-1");
  const auto& av = a.values();
  double m = *std::max_element(av.begin(), av.end());
  double s = 0.0;
  std::vector<double> soft(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    soft[i] = std::exp(av[i] - m);
    s += soft[i];
  }
  for (auto& v : soft) v /= s;
  return make_op_result(
      {1}, {m + std::log(s)}, {a},
      [soft](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::size_t i = 0; i < soft.size(); ++i)
            (*gp[0])[i] += g[0] * soft[i];
      });
}

// ---- shape and matrix ops --------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw std::invalid_argument("matmul inner extents differ");
  std::vector<double> out(static_cast<std::size_t>(m * n));
  {
    ConstMapMat am(a.values().data(), m, k);
    ConstMapMat bm(b.values().data(), k, n);
    MapMat om(out.data(), m, n);
    om.noalias() = am * bm;
  }
  const auto av = a.values();
  const auto bv = b.values();
  return make_op_result(
      {m, n}, std::move(out), {a, b},
      [m, k, n, av, bv](const std::vector<double>& g,
                        std::span<std::vector<double>*> gp) {
        ConstMapMat gm(g.data(), m, n);
        if (gp[0]) {
          ConstMapMat bm(bv.data(), k, n);
          MapMat ga(gp[0]->data(), m, k);
          ga.noalias() += gm * bm.transpose();
        }
        if (gp[1]) {
          ConstMapMat am(av.data(), m, k);
          MapMat gb(gp[1]->data(), k, n);
          gb.noalias() += am.transpose() * gm;
        }
      });
}

Tensor vecmat(const Tensor& v, const Tensor& w) {
  if (v.rank() != 1) throw std::invalid_argument("vecmat expects rank-1 vector");
  require_rank2(w, "vecmat");
  const std::int64_t k = v.dim(0), n = w.dim(1);
  if (w.dim(0) != k) throw std::invalid_argument("vecmat inner extents differ");
  const auto vv = v.values();
  const auto wv = w.values();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t i = 0; i < k; ++i) {
    const double vi = vv[static_cast<std::size_t>(i)];
    const double* wrow = wv.data() + i * n;
    for (std::int64_t j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] += vi * wrow[j];
  }
  return make_op_result(
      {n}, std::move(out), {v, w},
      [k, n, vv, wv](const std::vector<double>& g,
                     std::span<std::vector<double>*> gp) {
        if (gp[0]) {
          for (std::int64_t i = 0; i < k; ++i) {
            const double* wrow = wv.data() + i * n;
            double acc = 0.0;
            for (std::int64_t j = 0; j < n; ++j) acc += wrow[j] * g[static_cast<std::size_t>(j)];
            (*gp[0])[static_cast<std::size_t>(i)] += acc;
          }
        }
        if (gp[1]) {
          for (std::int64_t i = 0; i < k; ++i) {
            double* grow = gp[1]->data() + i * n;
            const double vi = vv[static_cast<std::size_t>(i)];
            for (std::int64_t j = 0; j < n; ++j) grow[j] += vi * g[static_cast<std::size_t>(j)];
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j)
      out[static_cast<std::size_t>(j * r + i)] = av[static_cast<std::size_t>(i * c + j)];
  return make_op_result(
      {c, r}, std::move(out), {a},
      [r, c](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::int64_t j = 0; j < c; ++j)
            for (std::int64_t i = 0; i < r; ++i)
              (*gp[0])[static_cast<std::size_t>(i * c + j)] +=
                  g[static_cast<std::size_t>(j * r + i)];
      });
}

Tensor slice_rows(const Tensor& a, std::int64_t row_begin, std::int64_t row_end) {
  require_rank2(a, "slice_rows");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  if (row_begin < 0 || row_end > r || row_begin >= row_end)
    throw std::invalid_argument("slice_rows range out of bounds");
  const std::int64_t rows = row_end - row_begin;
  std::vector<double> out(a.values().begin() + row_begin * c,
                          a.values().begin() + row_end * c);
  return make_op_result(
      {rows, c}, std::move(out), {a},
      [row_begin, c](const std::vector<double>& g,
                     std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::size_t i = 0; i < g.size(); ++i)
            (*gp[0])[static_cast<std::size_t>(row_begin * c) + i] += g[i];
      });
}

Tensor slice_cols(const Tensor& a, std::int64_t col_begin, std::int64_t col_end) {
  require_rank2(a, "slice_cols");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  if (col_begin < 0 || col_end > c || col_begin >= col_end)
    throw std::invalid_argument("slice_cols range out of bounds");
  const std::int64_t cols = col_end - col_begin;
  const auto& av = a.values();
  std::vector<double> out(static_cast<std::size_t>(r * cols));
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(i * cols + j)] =
          av[static_cast<std::size_t>(i * c + col_begin + j)];
  return make_op_result(
      {r, cols}, std::move(out), {a},
      [r, c, cols, col_begin](const std::vector<double>& g,
                              std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < cols; ++j)
              (*gp[0])[static_cast<std::size_t>(i * c + col_begin + j)] +=
                  g[static_cast<std::size_t>(i * cols + j)];
      });
}

Tensor row(const Tensor& a, std::int64_t i) {
  require_rank2(a, "row");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  if (i < 0 || i >= r) throw std::invalid_argument("row index out of bounds");
  std::vector<double> out(a.values().begin() + i * c,
                          a.values().begin() + (i + 1) * c);
  return make_op_result(
      {c}, std::move(out), {a},
      [i, c](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::int64_t j = 0; j < c; ++j)
            (*gp[0])[static_cast<std::size_t>(i * c + j)] +=
                g[static_cast<std::size_t>(j)];
      });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  const std::int64_t r = parts[0].dim(0);
  std::int64_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != r) throw std::invalid_argument("concat_cols row mismatch");
    total += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(r * total));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    const std::int64_t c = p.dim(1);
    offsets.push_back(off);
    const auto& pv = p.values();
    for (std::int64_t i = 0; i < r; ++i)
      std::copy(pv.begin() + i * c, pv.begin() + (i + 1) * c,
                out.begin() + i * total + off);
    off += c;
  }
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) widths.push_back(p.dim(1));
  return make_op_result(
      {r, total}, std::move(out),
      std::vector<Tensor>(parts.begin(), parts.end()),
      [r, total, offsets, widths](const std::vector<double>& g,
                                  std::span<std::vector<double>*> gp) {
        for (std::size_t p = 0; p < gp.size(); ++p) {
          if (!gp[p]) continue;
          const std::int64_t c = widths[p], off = offsets[p];
          for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j)
              (*gp[p])[static_cast<std::size_t>(i * c + j)] +=
                  g[static_cast<std::size_t>(i * total + off + j)];
        }
      });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  const std::int64_t c = parts[0].dim(1);
  std::int64_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != c) throw std::invalid_argument("concat_rows column mismatch");
    total += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total * c));
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    out.insert(out.end(), p.values().begin(), p.values().end());
    off += p.dim(0);
  }
  std::vector<std::int64_t> heights;
  for (const auto& p : parts) heights.push_back(p.dim(0));
  return make_op_result(
      {total, c}, std::move(out),
      std::vector<Tensor>(parts.begin(), parts.end()),
      [c, offsets, heights](const std::vector<double>& g,
                            std::span<std::vector<double>*> gp) {
        for (std::size_t p = 0; p < gp.size(); ++p) {
          if (!gp[p]) continue;
          const std::size_t count = static_cast<std::size_t>(heights[p] * c);
          const std::size_t base = static_cast<std::size_t>(offsets[p] * c);
          for (std::size_t i = 0; i < count; ++i) (*gp[p])[i] += g[base + i];
        }
      });
}

Tensor stack_scalars(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw std::invalid_argument("stack_scalars of nothing");
  std::vector<double> out;
  out.reserve(scalars.size());
  for (const auto& s : scalars) {
    if (s.numel() != 1)
      throw std::invalid_argument("stack_scalars expects one-element tensors");
    out.push_back(s.values()[0]);
  }
  return make_op_result(
      {static_cast<std::int64_t>(scalars.size())}, std::move(out),
      std::vector<Tensor>(scalars.begin(), scalars.end()),
      [](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        for (std::size_t i = 0; i < gp.size(); ++i)
          if (gp[i]) (*gp[i])[0] += g[i];
      });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require_rank2(m, "add_rowvec");
  if (v.rank() != 1 || v.dim(0) != m.dim(1))
    throw std::invalid_argument("add_rowvec width mismatch");
  const std::int64_t r = m.dim(0), c = m.dim(1);
  const auto& mv = m.values();
  const auto& vv = v.values();
  std::vector<double> out(mv.size());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j)
      out[static_cast<std::size_t>(i * c + j)] =
          mv[static_cast<std::size_t>(i * c + j)] + vv[static_cast<std::size_t>(j)];
  return make_op_result(
      {r, c}, std::move(out), {m, v},
      [r, c](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::size_t i = 0; i < g.size(); ++i) (*gp[0])[i] += g[i];
        if (gp[1])
          for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j)
              (*gp[1])[static_cast<std::size_t>(j)] +=
                  g[static_cast<std::size_t>(i * c + j)];
      });
}

// ---- neural-net primitives ---------------------------------------------

Tensor softmax_rows(const Tensor& a) {
  require_rank2(a, "softmax_rows");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  const auto& av = a.values();
  for (double v : av)
    if (!std::isfinite(v))
      throw std::invalid_argument("softmax_rows: non-finite input");
  std::vector<double> out(av.size());
  for (std::int64_t i = 0; i < r; ++i) {
    const double* x = av.data() + i * c;
    double* y = out.data() + i * c;
    double m = x[0];
    for (std::int64_t j = 1; j < c; ++j) m = std::max(m, x[j]);
    double s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - m);
      s += y[j];
    }
    for (std::int64_t j = 0; j < c; ++j) y[j] /= s;
  }
  return make_op_result(
      {r, c}, out, {a},
      [r, c, out](const std::vector<double>& g,
                  std::span<std::vector<double>*> gp) {
        if (!gp[0]) return;
        for (std::int64_t i = 0; i < r; ++i) {
          const double* y = out.data() + i * c;
          const double* gr = g.data() + i * c;
          double inner = 0.0;
          for (std::int64_t j = 0; j < c; ++j) inner += gr[j] * y[j];
          double* dst = gp[0]->data() + i * c;
          for (std::int64_t j = 0; j < c; ++j)
            dst[j] += y[j] * (gr[j] - inner);
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_rank2(x, "layer_norm");
  const std::int64_t r = x.dim(0), d = x.dim(1);
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
    throw std::invalid_argument("layer_norm gain/bias must be [d]");
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(static_cast<std::size_t>(r));
  for (std::int64_t i = 0; i < r; ++i) {
    const double* xr = xv.data() + i * d;
    double mu = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      double dev = xr[j] - mu;
      var += dev * dev;
    }
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (std::int64_t j = 0; j < d; ++j) {
      double xh = (xr[j] - mu) * is;
      xhat[static_cast<std::size_t>(i * d + j)] = xh;
      out[static_cast<std::size_t>(i * d + j)] =
          xh * gv[static_cast<std::size_t>(j)] + bv[static_cast<std::size_t>(j)];
    }
  }
  auto gain_v = gv;
  return make_op_result(
      {r, d}, std::move(out), {x, gain, bias},
      [r, d, xhat, inv_std, gain_v](const std::vector<double>& g,
                                    std::span<std::vector<double>*> gp) {
        for (std::int64_t i = 0; i < r; ++i) {
          const double* gr = g.data() + i * d;
          const double* xh = xhat.data() + i * d;
          if (gp[1] || gp[2]) {
            for (std::int64_t j = 0; j < d; ++j) {
              if (gp[1]) (*gp[1])[static_cast<std::size_t>(j)] += gr[j] * xh[j];
              if (gp[2]) (*gp[2])[static_cast<std::size_t>(j)] += gr[j];
            }
          }
          if (gp[0]) {
            double mean_dy = 0.0, mean_dyxh = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
              double dy = gr[j] * gain_v[static_cast<std::size_t>(j)];
              mean_dy += dy;
              mean_dyxh += dy * xh[j];
            }
            mean_dy /= static_cast<double>(d);
            mean_dyxh /= static_cast<double>(d);
            double is = inv_std[static_cast<std::size_t>(i)];
            double* dst = gp[0]->data() + i * d;
            for (std::int64_t j = 0; j < d; ++j) {
              double dy = gr[j] * gain_v[static_cast<std::size_t>(j)];
              dst[j] += (dy - mean_dy - xh[j] * mean_dyxh) * is;
            }
          }
        }
      });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "embedding_lookup");
  const std::int64_t v = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw std::invalid_argument("embedding_lookup of no ids");
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::invalid_argument("embedding_lookup: id out of range");
  const auto& tv = table.values();
  std::vector<double> out(ids.size() * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(tv.begin() + static_cast<std::int64_t>(ids[i]) * d,
              tv.begin() + (static_cast<std::int64_t>(ids[i]) + 1) * d,
              out.begin() + static_cast<std::int64_t>(i) * d);
  std::vector<int> ids_copy(ids.begin(), ids.end());
  return make_op_result(
      {static_cast<std::int64_t>(ids.size()), d}, std::move(out), {table},
      [d, ids_copy](const std::vector<double>& g,
                    std::span<std::vector<double>*> gp) {
        if (!gp[0]) return;
        for (std::size_t i = 0; i < ids_copy.size(); ++i) {
          double* dst = gp[0]->data() + static_cast<std::int64_t>(ids_copy[i]) * d;
          const double* src = g.data() + static_cast<std::int64_t>(i) * d;
          for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
      });
}

namespace {

std::vector<std::int64_t> unmasked_rows(std::span<const int> mask,
                                        std::int64_t rows) {
  if (static_cast<std::int64_t>(mask.size()) != rows)
    throw std::invalid_argument("mask length must match row count");
  std::vector<std::int64_t> keep;
  for (std::int64_t i = 0; i < rows; ++i)
    if (mask[static_cast<std::size_t>(i)] != 0) keep.push_back(i);
  if (keep.empty())
    throw std::invalid_argument("pooling over a fully-masked input");
  return keep;
}

}  // namespace

Tensor masked_max_rows(const Tensor& h, std::span<const int> mask) {
  require_rank2(h, "masked_max_rows");
  const std::int64_t r = h.dim(0), d = h.dim(1);
  auto keep = unmasked_rows(mask, r);
  const auto& hv = h.values();
  std::vector<double> out(static_cast<std::size_t>(d));
  std::vector<std::int64_t> arg(static_cast<std::size_t>(d));
  for (std::int64_t j = 0; j < d; ++j) {
    std::int64_t best = keep[0];
    double bv = hv[static_cast<std::size_t>(best * d + j)];
    for (std::size_t t = 1; t < keep.size(); ++t) {
      double v = hv[static_cast<std::size_t>(keep[t] * d + j)];
      if (v > bv) {
        bv = v;
        best = keep[t];
      }
    }
    out[static_cast<std::size_t>(j)] = bv;
    arg[static_cast<std::size_t>(j)] = best;
  }
  return make_op_result(
      {d}, std::move(out), {h},
      [d, arg](const std::vector<double>& g, std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (std::int64_t j = 0; j < d; ++j)
            (*gp[0])[static_cast<std::size_t>(arg[static_cast<std::size_t>(j)] * d + j)] +=
                g[static_cast<std::size_t>(j)];
      });
}

Tensor masked_mean_rows(const Tensor& h, std::span<const int> mask) {
  require_rank2(h, "masked_mean_rows");
  const std::int64_t r = h.dim(0), d = h.dim(1);
  auto keep = unmasked_rows(mask, r);
  const auto& hv = h.values();
  const double inv = 1.0 / static_cast<double>(keep.size());
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (auto i : keep)
    for (std::int64_t j = 0; j < d; ++j)
      out[static_cast<std::size_t>(j)] += hv[static_cast<std::size_t>(i * d + j)];
  for (auto& v : out) v *= inv;
  return make_op_result(
      {d}, std::move(out), {h},
      [d, keep, inv](const std::vector<double>& g,
                     std::span<std::vector<double>*> gp) {
        if (gp[0])
          for (auto i : keep)
            for (std::int64_t j = 0; j < d; ++j)
              (*gp[0])[static_cast<std::size_t>(i * d + j)] +=
                  g[static_cast<std::size_t>(j)] * inv;
      });
}

}  // namespace sgcl
