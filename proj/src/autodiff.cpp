#include "evfield/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "evfield/special.hpp"

namespace evfield {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstArrMap = Eigen::Map<const Eigen::ArrayXd>;
using ArrMap = Eigen::Map<Eigen::ArrayXd>;

// ---------------------------------------------------------------- ParamStore

std::size_t ParamStore::add(std::string name, std::size_t rows, std::size_t cols) {
  for (const auto& e : entries_) {
    if (e.name == name) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
  }
  Entry e;
  e.name = std::move(name);
  e.rows = rows;
  e.cols = cols;
  e.value.assign(rows * cols, 0.0);
  e.grad.assign(rows * cols, 0.0);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t ParamStore::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::out_of_range("ParamStore: no parameter named '" + std::string(name) + "'");
}

ParamStore::Entry& ParamStore::at(std::string_view name) { return entries_[index_of(name)]; }
const ParamStore::Entry& ParamStore::at(std::string_view name) const { return entries_[index_of(name)]; }

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

void ParamStore::check_finite() const {
  for (const auto& e : entries_) {
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (!std::isfinite(e.value[i])) {
        throw NumericError("parameter '" + e.name + "'[" + std::to_string(i) + "] is not finite");
      }
      if (!std::isfinite(e.grad[i])) {
        throw NumericError("gradient of '" + e.name + "'[" + std::to_string(i) + "] is not finite");
      }
    }
  }
}

// ---------------------------------------------------------------- GradBuffer

GradBuffer::GradBuffer(const ParamStore& store) {
  grads_.reserve(store.size());
  for (const auto& e : store.entries()) grads_.emplace_back(e.size(), 0.0);
}

void GradBuffer::zero() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
}

void GradBuffer::accumulate_into(ParamStore& store, double scale) const {
  if (store.size() != grads_.size()) throw std::invalid_argument("GradBuffer: shape mismatch with ParamStore");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    auto& target = store[i].grad;
    if (target.size() != grads_[i].size()) throw std::invalid_argument("GradBuffer: shape mismatch with ParamStore");
    for (std::size_t k = 0; k < target.size(); ++k) target[k] += scale * grads_[i][k];
  }
}

// ---------------------------------------------------------------- Op names

const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParameter: return "parameter";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kAddScalar: return "add_scalar";
    case Op::kMulScalar: return "mul_scalar";
    case Op::kScalarSub: return "scalar_sub";
    case Op::kScalarDiv: return "scalar_div";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kAbs: return "abs";
    case Op::kSquare: return "square";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSoftplus: return "softplus";
    case Op::kLogGamma: return "log_gamma";
    case Op::kClampMin: return "clamp_min";
    case Op::kMatMul: return "matmul";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCols: return "slice_cols";
    case Op::kReshape: return "reshape";
    case Op::kSumCols: return "sum_cols";
    case Op::kSumAll: return "sum_all";
    case Op::kExclusiveCumsumCols: return "exclusive_cumsum_cols";
    case Op::kSelectRows: return "select_rows";
  }
  return "unknown";
}

// ---------------------------------------------------------------- Var

std::size_t Var::rows() const { return tape_->node(*this).rows; }
std::size_t Var::cols() const { return tape_->node(*this).cols; }
std::span<const double> Var::values() const { return tape_->node(*this).value; }
double Var::value(std::size_t r, std::size_t c) const {
  const auto& n = tape_->node(*this);
  if (r >= n.rows || c >= n.cols) throw std::out_of_range("Var::value index out of range");
  return n.value[r * n.cols + c];
}
std::span<const double> Var::grad() const { return tape_->node(*this).grad; }

// ---------------------------------------------------------------- Tape basics

Tape::Node& Tape::push(Op op, std::size_t rows, std::size_t cols) {
  if (count_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[count_++];
  n.op = op;
  n.rows = rows;
  n.cols = cols;
  n.a = n.b = 0;
  n.scalar = 0.0;
  n.aux = 0;
  n.broadcast = Broadcast::kSame;
  n.grad_target = nullptr;
  n.value.resize(rows * cols);
  n.grad.clear();
  n.mask.clear();
  return n;
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this || v.id_ >= count_) throw std::invalid_argument("Var does not belong to this tape (or tape was reset)");
}

Tape::Node& Tape::node(Var v) {
  check_owner(v);
  return nodes_[v.id_];
}

const Tape::Node& Tape::node(Var v) const {
  check_owner(v);
  return nodes_[v.id_];
}

Var Tape::constant(std::size_t rows, std::size_t cols, std::span<const double> data) {
  if (data.size() != rows * cols) throw std::invalid_argument("Tape::constant: data size does not match shape");
  Node& n = push(Op::kConstant, rows, cols);
  std::copy(data.begin(), data.end(), n.value.begin());
  return handle(count_ - 1);
}

Var Tape::constant(std::size_t rows, std::size_t cols, double fill) {
  Node& n = push(Op::kConstant, rows, cols);
  std::fill(n.value.begin(), n.value.end(), fill);
  return handle(count_ - 1);
}

Var Tape::parameter(ParamStore& store, std::size_t index) {
  auto& e = store[index];
  Node& n = push(Op::kParameter, e.rows, e.cols);
  std::copy(e.value.begin(), e.value.end(), n.value.begin());
  n.grad_target = e.grad.data();
  return handle(count_ - 1);
}

Var Tape::parameter(const ParamStore& store, std::size_t index, GradBuffer& buffer) {
  const auto& e = store[index];
  if (buffer[index].size() != e.size()) throw std::invalid_argument("Tape::parameter: GradBuffer shape mismatch");
  Node& n = push(Op::kParameter, e.rows, e.cols);
  std::copy(e.value.begin(), e.value.end(), n.value.begin());
  n.grad_target = buffer[index].data();
  return handle(count_ - 1);
}

// ---------------------------------------------------------------- Forward ops

namespace {

// Eigen's select() is not vectorized, so transcendental parts are evaluated
// into stack blocks and the branch is applied in a plain loop.
constexpr Eigen::Index kBlock = 256;
using Block = Eigen::Array<double, kBlock, 1>;

// Applies body(x_block, i, m) to fixed-size blocks of x; the tail is padded
// with zeros so every element goes through the same vectorized code path.
template <typename Body>
void for_blocks(const double* x, Eigen::Index len, Body&& body) {
  Block buf;
  for (Eigen::Index i = 0; i < len; i += kBlock) {
    const Eigen::Index m = std::min(kBlock, len - i);
    if (m == kBlock) {
      buf = Eigen::Map<const Block>(x + i);
    } else {
      buf.setZero();
      buf.head(m) = Eigen::Map<const Eigen::ArrayXd>(x + i, m);
    }
    body(buf, i, m);
  }
}

}  // namespace

Var Tape::binary(Op op, Var a, Var b) {
  check_owner(a);
  check_owner(b);
  const std::size_t ar = nodes_[a.id_].rows, ac = nodes_[a.id_].cols;
  const std::size_t br = nodes_[b.id_].rows, bc = nodes_[b.id_].cols;
  Broadcast mode;
  if (br == ar && bc == ac) {
    mode = Broadcast::kSame;
  } else if (br == 1 && bc == 1) {
    mode = Broadcast::kScalar;
  } else if (br == 1 && bc == ac) {
    mode = Broadcast::kRow;
  } else if (br == ar && bc == 1) {
    mode = Broadcast::kCol;
  } else if ((op == Op::kAdd || op == Op::kMul) &&
             ((ar == 1 && ac == 1) || (ar == 1 && ac == bc) || (ar == br && ac == 1))) {
    return binary(op, b, a);
  } else {
    std::ostringstream msg;
    msg << op_name(op) << ": incompatible shapes " << ar << "x" << ac << " and " << br << "x" << bc;
    throw std::invalid_argument(msg.str());
  }
  Node& n = push(op, ar, ac);
  n.a = a.id_;
  n.b = b.id_;
  n.broadcast = mode;
  const auto& av = nodes_[a.id_].value;
  const auto& bv = nodes_[b.id_].value;
  auto& out = n.value;
  const auto ri = static_cast<Eigen::Index>(ar), ci = static_cast<Eigen::Index>(ac);
  ConstMatMap A(av.data(), ri, ci);
  MatMap O(out.data(), ri, ci);
  switch (mode) {
    case Broadcast::kSame: {
      ConstMatMap B(bv.data(), ri, ci);
      switch (op) {
        case Op::kAdd: O = A + B; break;
        case Op::kSub: O = A - B; break;
        case Op::kMul: O = A.cwiseProduct(B); break;
        case Op::kDiv: O = A.cwiseQuotient(B); break;
        default: break;
      }
      break;
    }
    case Broadcast::kScalar: {
      const double y = bv[0];
      switch (op) {
        case Op::kAdd: O = A.array() + y; break;
        case Op::kSub: O = A.array() - y; break;
        case Op::kMul: O = A * y; break;
        case Op::kDiv: O = A / y; break;
        default: break;
      }
      break;
    }
    case Broadcast::kRow: {
      Eigen::Map<const Eigen::RowVectorXd> B(bv.data(), ci);
      switch (op) {
        case Op::kAdd: O = A.rowwise() + B; break;
        case Op::kSub: O = A.rowwise() - B; break;
        case Op::kMul: O = A.array().rowwise() * B.array(); break;
        case Op::kDiv: O = A.array().rowwise() / B.array(); break;
        default: break;
      }
      break;
    }
    case Broadcast::kCol: {
      Eigen::Map<const Eigen::VectorXd> B(bv.data(), ri);
      switch (op) {
        case Op::kAdd: O = A.colwise() + B; break;
        case Op::kSub: O = A.colwise() - B; break;
        case Op::kMul: O = A.array().colwise() * B.array(); break;
        case Op::kDiv: O = A.array().colwise() / B.array(); break;
        default: break;
      }
      break;
    }
  }
  return handle(count_ - 1);
}

Var Tape::add(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::kSub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::kMul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::kDiv, a, b); }

Var Tape::unary(Op op, Var a, double scalar) {
  check_owner(a);
  const std::size_t rows = nodes_[a.id_].rows, cols = nodes_[a.id_].cols;
  Node& n = push(op, rows, cols);
  n.a = a.id_;
  n.scalar = scalar;
  const auto& av = nodes_[a.id_].value;
  const auto len = static_cast<Eigen::Index>(av.size());
  ConstArrMap A(av.data(), len);
  ArrMap O(n.value.data(), len);
  switch (op) {
    case Op::kNeg: O = -A; break;
    case Op::kAddScalar: O = A + scalar; break;
    case Op::kMulScalar: O = A * scalar; break;
    case Op::kScalarSub: O = scalar - A; break;
    case Op::kScalarDiv: O = scalar / A; break;
    case Op::kExp: O = A.min(kExpClamp).exp(); break;
    case Op::kLog: O = A.log(); break;
    case Op::kSqrt: O = A.sqrt(); break;
    case Op::kAbs: O = A.abs(); break;
    case Op::kSquare: O = A.square(); break;
    case Op::kSigmoid: O = 1.0 / (1.0 + (-A).min(kExpClamp).exp()); break;
    case Op::kSoftplus:
      // max(x,0) + log1p(exp(-|x|)), linearized above the threshold. log1p(e)
      // is evaluated as e log(u) / (u - 1) with u = 1 + e, which stays exact
      // for tiny e and vectorizes, unlike the scalar libm call.
      for_blocks(av.data(), len, [&](const Block& x, Eigen::Index i, Eigen::Index m) {
        const Block e = (-x.abs()).exp();
        const Block u = e + 1.0;
        const Block lu = u.log();
        for (Eigen::Index k = 0; k < m; ++k) {
          const double l1p = u[k] == 1.0 ? e[k] : e[k] * lu[k] / (u[k] - 1.0);
          O[i + k] = x[k] > kSoftplusLinear ? x[k] : std::max(x[k], 0.0) + l1p;
        }
      });
      break;
    case Op::kLogGamma:
      for (Eigen::Index i = 0; i < len; ++i) O[i] = evfield::log_gamma(A[i]);
      break;
    case Op::kClampMin: O = A.max(scalar); break;
    default: break;
  }
  return handle(count_ - 1);
}

Var Tape::neg(Var a) { return unary(Op::kNeg, a); }
Var Tape::add_scalar(Var a, double s) { return unary(Op::kAddScalar, a, s); }
Var Tape::mul_scalar(Var a, double s) { return unary(Op::kMulScalar, a, s); }
Var Tape::scalar_sub(double s, Var a) { return unary(Op::kScalarSub, a, s); }
Var Tape::scalar_div(double s, Var a) { return unary(Op::kScalarDiv, a, s); }
Var Tape::exp(Var a) { return unary(Op::kExp, a); }
Var Tape::log(Var a) { return unary(Op::kLog, a); }
Var Tape::sqrt(Var a) { return unary(Op::kSqrt, a); }
Var Tape::abs(Var a) { return unary(Op::kAbs, a); }
Var Tape::square(Var a) { return unary(Op::kSquare, a); }
Var Tape::sigmoid(Var a) { return unary(Op::kSigmoid, a); }
Var Tape::softplus(Var a) { return unary(Op::kSoftplus, a); }
Var Tape::log_gamma(Var a) { return unary(Op::kLogGamma, a); }
Var Tape::clamp_min(Var a, double lo) { return unary(Op::kClampMin, a, lo); }

Var Tape::matmul(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  const std::size_t m = nodes_[a.id_].rows, k = nodes_[a.id_].cols;
  const std::size_t k2 = nodes_[b.id_].rows, n = nodes_[b.id_].cols;
  if (k != k2) {
    std::ostringstream msg;
    msg << "matmul: inner dimensions differ (" << m << "x" << k << " * " << k2 << "x" << n << ")";
    throw std::invalid_argument(msg.str());
  }
  Node& out = push(Op::kMatMul, m, n);
  out.a = a.id_;
  out.b = b.id_;
  ConstMatMap A(nodes_[a.id_].value.data(), m, k);
  ConstMatMap B(nodes_[b.id_].value.data(), k, n);
  MatMap O(out.value.data(), m, n);
  O.noalias() = A * B;
  return handle(count_ - 1);
}

Var Tape::concat_cols(Var a, Var b) {
  check_owner(a);
  check_owner(b);
  const std::size_t rows = nodes_[a.id_].rows;
  const std::size_t ca = nodes_[a.id_].cols, cb = nodes_[b.id_].cols;
  if (nodes_[b.id_].rows != rows) throw std::invalid_argument("concat_cols: row counts differ");
  Node& n = push(Op::kConcatCols, rows, ca + cb);
  n.a = a.id_;
  n.b = b.id_;
  const auto& av = nodes_[a.id_].value;
  const auto& bv = nodes_[b.id_].value;
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(r * ca), ca, n.value.begin() + static_cast<std::ptrdiff_t>(r * (ca + cb)));
    std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(r * cb), cb,
                n.value.begin() + static_cast<std::ptrdiff_t>(r * (ca + cb) + ca));
  }
  return handle(count_ - 1);
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
  check_owner(a);
  const std::size_t rows = nodes_[a.id_].rows, cols = nodes_[a.id_].cols;
  if (start + count > cols || count == 0) throw std::invalid_argument("slice_cols: range out of bounds");
  Node& n = push(Op::kSliceCols, rows, count);
  n.a = a.id_;
  n.aux = start;
  const auto& av = nodes_[a.id_].value;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < count; ++c) n.value[r * count + c] = av[r * cols + start + c];
  }
  return handle(count_ - 1);
}

Var Tape::reshape(Var a, std::size_t rows, std::size_t cols) {
  check_owner(a);
  if (rows * cols != nodes_[a.id_].value.size()) throw std::invalid_argument("reshape: element count changes");
  Node& n = push(Op::kReshape, rows, cols);
  n.a = a.id_;
  const auto& av = nodes_[a.id_].value;
  std::copy(av.begin(), av.end(), n.value.begin());
  return handle(count_ - 1);
}

Var Tape::sum_cols(Var a) {
  check_owner(a);
  const std::size_t rows = nodes_[a.id_].rows, cols = nodes_[a.id_].cols;
  Node& n = push(Op::kSumCols, rows, 1);
  n.a = a.id_;
  const auto& av = nodes_[a.id_].value;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += av[r * cols + c];
    n.value[r] = s;
  }
  return handle(count_ - 1);
}

Var Tape::sum_all(Var a) {
  check_owner(a);
  Node& n = push(Op::kSumAll, 1, 1);
  n.a = a.id_;
  double s = 0.0;
  for (double x : nodes_[a.id_].value) s += x;
  n.value[0] = s;
  return handle(count_ - 1);
}

Var Tape::exclusive_cumsum_cols(Var a) {
  check_owner(a);
  const std::size_t rows = nodes_[a.id_].rows, cols = nodes_[a.id_].cols;
  Node& n = push(Op::kExclusiveCumsumCols, rows, cols);
  n.a = a.id_;
  const auto& av = nodes_[a.id_].value;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      n.value[r * cols + c] = s;
      s += av[r * cols + c];
    }
  }
  return handle(count_ - 1);
}

Var Tape::select_rows(Var a, std::span<const std::uint8_t> use_fallback, double fallback) {
  check_owner(a);
  const std::size_t rows = nodes_[a.id_].rows, cols = nodes_[a.id_].cols;
  if (use_fallback.size() != rows) throw std::invalid_argument("select_rows: mask length must equal row count");
  Node& n = push(Op::kSelectRows, rows, cols);
  n.a = a.id_;
  n.scalar = fallback;
  n.mask.assign(use_fallback.begin(), use_fallback.end());
  const auto& av = nodes_[a.id_].value;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) n.value[r * cols + c] = n.mask[r] ? fallback : av[r * cols + c];
  }
  return handle(count_ - 1);
}

// ---------------------------------------------------------------- Backward

void Tape::backward(Var root) {
  check_owner(root);
  const Node& r = nodes_[root.id_];
  if (r.rows != 1 || r.cols != 1) {
    std::ostringstream msg;
    msg << "backward: root must be scalar (1x1), got " << r.rows << "x" << r.cols;
    throw std::invalid_argument(msg.str());
  }
  for (std::size_t i = 0; i <= root.id_; ++i) nodes_[i].grad.assign(nodes_[i].value.size(), 0.0);
  nodes_[root.id_].grad[0] = 1.0;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    for (double g : n.grad) {
      if (!std::isfinite(g)) {
        throw NumericError(std::string("backward: non-finite adjoint at node ") + std::to_string(i) + " (" +
                           op_name(n.op) + ")");
      }
    }
    propagate(i);
  }
}

void Tape::propagate(std::size_t id) {
  Node& n = nodes_[id];
  const auto& g = n.grad;
  const auto len = static_cast<Eigen::Index>(g.size());
  ConstArrMap G(g.data(), len);
  switch (n.op) {
    case Op::kConstant:
      return;
    case Op::kParameter:
      for (std::size_t k = 0; k < g.size(); ++k) n.grad_target[k] += g[k];
      return;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      Node& A = nodes_[n.a];
      Node& B = nodes_[n.b];
      const auto ri = static_cast<Eigen::Index>(n.rows), ci = static_cast<Eigen::Index>(n.cols);
      ConstMatMap Gm(g.data(), ri, ci);
      ConstMatMap Av(A.value.data(), ri, ci);
      ConstMatMap Y(n.value.data(), ri, ci);
      MatMap GA(A.grad.data(), ri, ci);
      // The adjoint of a broadcast operand is the matching reduction of the
      // per-element contribution.
      switch (n.broadcast) {
        case Broadcast::kSame: {
          ConstMatMap Bv(B.value.data(), ri, ci);
          MatMap GB(B.grad.data(), ri, ci);
          switch (n.op) {
            case Op::kAdd: GA += Gm; GB += Gm; break;
            case Op::kSub: GA += Gm; GB -= Gm; break;
            case Op::kMul:
              GA += Gm.cwiseProduct(Bv);
              GB += Gm.cwiseProduct(Av);
              break;
            case Op::kDiv:
              GA += Gm.cwiseQuotient(Bv);
              GB -= Gm.cwiseProduct(Y).cwiseQuotient(Bv);
              break;
            default: break;
          }
          break;
        }
        case Broadcast::kScalar: {
          const double y = B.value[0];
          switch (n.op) {
            case Op::kAdd: GA += Gm; B.grad[0] += Gm.sum(); break;
            case Op::kSub: GA += Gm; B.grad[0] -= Gm.sum(); break;
            case Op::kMul:
              GA += Gm * y;
              B.grad[0] += Gm.cwiseProduct(Av).sum();
              break;
            case Op::kDiv:
              GA += Gm / y;
              B.grad[0] -= Gm.cwiseProduct(Y).sum() / y;
              break;
            default: break;
          }
          break;
        }
        case Broadcast::kRow: {
          Eigen::Map<const Eigen::RowVectorXd> Bv(B.value.data(), ci);
          Eigen::Map<Eigen::RowVectorXd> GB(B.grad.data(), ci);
          switch (n.op) {
            case Op::kAdd: GA += Gm; GB += Gm.colwise().sum(); break;
            case Op::kSub: GA += Gm; GB -= Gm.colwise().sum(); break;
            case Op::kMul:
              GA.array() += Gm.array().rowwise() * Bv.array();
              GB += Gm.cwiseProduct(Av).colwise().sum();
              break;
            case Op::kDiv:
              GA.array() += Gm.array().rowwise() / Bv.array();
              GB.array() -= Gm.cwiseProduct(Y).colwise().sum().array() / Bv.array();
              break;
            default: break;
          }
          break;
        }
        case Broadcast::kCol: {
          Eigen::Map<const Eigen::VectorXd> Bv(B.value.data(), ri);
          Eigen::Map<Eigen::VectorXd> GB(B.grad.data(), ri);
          switch (n.op) {
            case Op::kAdd: GA += Gm; GB += Gm.rowwise().sum(); break;
            case Op::kSub: GA += Gm; GB -= Gm.rowwise().sum(); break;
            case Op::kMul:
              GA.array() += Gm.array().colwise() * Bv.array();
              GB += Gm.cwiseProduct(Av).rowwise().sum();
              break;
            case Op::kDiv:
              GA.array() += Gm.array().colwise() / Bv.array();
              GB.array() -= Gm.cwiseProduct(Y).rowwise().sum().array() / Bv.array();
              break;
            default: break;
          }
          break;
        }
      }
      return;
    }
    case Op::kNeg:
    case Op::kAddScalar:
    case Op::kMulScalar:
    case Op::kScalarSub:
    case Op::kScalarDiv:
    case Op::kExp:
    case Op::kLog:
    case Op::kSqrt:
    case Op::kAbs:
    case Op::kSquare:
    case Op::kSigmoid:
    case Op::kSoftplus:
    case Op::kLogGamma:
    case Op::kClampMin: {
      Node& A = nodes_[n.a];
      ArrMap GA(A.grad.data(), len);
      ConstArrMap X(A.value.data(), len);
      ConstArrMap Y(n.value.data(), len);
      switch (n.op) {
        case Op::kNeg: GA -= G; break;
        case Op::kAddScalar: GA += G; break;
        case Op::kMulScalar: GA += G * n.scalar; break;
        case Op::kScalarSub: GA -= G; break;
        case Op::kScalarDiv: GA -= G * Y / X; break;
        case Op::kExp:
          for (Eigen::Index k = 0; k < len; ++k) GA[k] += X[k] < kExpClamp ? G[k] * Y[k] : 0.0;
          break;
        case Op::kLog: GA += G / X; break;
        case Op::kSqrt: GA += G * 0.5 / Y; break;
        case Op::kAbs: GA += G * X.sign(); break;
        case Op::kSquare: GA += G * 2.0 * X; break;
        case Op::kSigmoid: GA += G * Y * (1.0 - Y); break;
        case Op::kSoftplus:
          // d/dx softplus = sigmoid(x); 1 / (1 + e^{-x}) has no cancellation.
          for_blocks(A.value.data(), len, [&](const Block& x, Eigen::Index i, Eigen::Index m) {
            const Block sig = 1.0 / (1.0 + (-x).min(kExpClamp).exp());
            for (Eigen::Index k = 0; k < m; ++k) GA[i + k] += x[k] > kSoftplusLinear ? G[i + k] : G[i + k] * sig[k];
          });
          break;
        case Op::kLogGamma:
          for (Eigen::Index k = 0; k < len; ++k) GA[k] += G[k] * digamma(X[k]);
          break;
        case Op::kClampMin:
          for (Eigen::Index k = 0; k < len; ++k) GA[k] += X[k] > n.scalar ? G[k] : 0.0;
          break;
        default: break;
      }
      return;
    }
    case Op::kMatMul: {
      Node& A = nodes_[n.a];
      Node& B = nodes_[n.b];
      const auto m = static_cast<Eigen::Index>(A.rows), k = static_cast<Eigen::Index>(A.cols),
                 c = static_cast<Eigen::Index>(B.cols);
      ConstMatMap Gm(g.data(), m, c);
      MatMap GA(A.grad.data(), m, k);
      MatMap GB(B.grad.data(), k, c);
      ConstMatMap Am(A.value.data(), m, k);
      ConstMatMap Bm(B.value.data(), k, c);
      GA.noalias() += Gm * Bm.transpose();
      GB.noalias() += Am.transpose() * Gm;
      return;
    }
    case Op::kConcatCols: {
      Node& A = nodes_[n.a];
      Node& B = nodes_[n.b];
      const std::size_t ca = A.cols, cb = B.cols;
      for (std::size_t r = 0; r < n.rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) A.grad[r * ca + c] += g[r * (ca + cb) + c];
        for (std::size_t c = 0; c < cb; ++c) B.grad[r * cb + c] += g[r * (ca + cb) + ca + c];
      }
      return;
    }
    case Op::kSliceCols: {
      Node& A = nodes_[n.a];
      for (std::size_t r = 0; r < n.rows; ++r) {
        for (std::size_t c = 0; c < n.cols; ++c) A.grad[r * A.cols + n.aux + c] += g[r * n.cols + c];
      }
      return;
    }
    case Op::kReshape: {
      Node& A = nodes_[n.a];
      ArrMap(A.grad.data(), len) += G;
      return;
    }
    case Op::kSumCols: {
      Node& A = nodes_[n.a];
      for (std::size_t r = 0; r < A.rows; ++r) {
        for (std::size_t c = 0; c < A.cols; ++c) A.grad[r * A.cols + c] += g[r];
      }
      return;
    }
    case Op::kSumAll: {
      Node& A = nodes_[n.a];
      for (double& x : A.grad) x += g[0];
      return;
    }
    case Op::kExclusiveCumsumCols: {
      Node& A = nodes_[n.a];
      for (std::size_t r = 0; r < n.rows; ++r) {
        double s = 0.0;
        for (std::size_t c = n.cols; c-- > 0;) {
          A.grad[r * n.cols + c] += s;
          s += g[r * n.cols + c];
        }
      }
      return;
    }
    case Op::kSelectRows: {
      Node& A = nodes_[n.a];
      for (std::size_t r = 0; r < n.rows; ++r) {
        if (n.mask[r]) continue;
        for (std::size_t c = 0; c < n.cols; ++c) A.grad[r * n.cols + c] += g[r * n.cols + c];
      }
      return;
    }
  }
}

// ---------------------------------------------------------------- Grad check

GradCheckResult check_gradients(ParamStore& store, const ScalarGraphFn& fn, double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw std::invalid_argument("check_gradients: step must lie in [1e-7, 1e-3]");
  Tape tape;
  const auto evaluate = [&]() {
    tape.reset();
    const Var root = fn(tape, store);
    const double v = root.value();
    if (!std::isfinite(v)) throw NumericError("check_gradients: function value is not finite");
    return v;
  };

  store.zero_grad();
  tape.reset();
  const Var root = fn(tape, store);
  if (!std::isfinite(root.value())) throw NumericError("check_gradients: function value is not finite");
  tape.backward(root);
  std::vector<std::vector<double>> analytic;
  for (const auto& e : store.entries()) analytic.push_back(e.grad);

  GradCheckResult result;
  for (std::size_t p = 0; p < store.size(); ++p) {
    auto& values = store[p].value;
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double plus = evaluate();
      values[k] = saved - h;
      const double minus = evaluate();
      values[k] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[p][k];
      const double err = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      if (err > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = err;
        result.worst_param = store[p].name;
        result.worst_index = k;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  // Leave the analytic gradients in the store for the caller.
  for (std::size_t p = 0; p < store.size(); ++p) store[p].grad = analytic[p];
  return result;
}

}  // namespace evfield
