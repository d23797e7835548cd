#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace evfield {

// Raised when a NaN or infinity shows up where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Eigen peels unaligned heads off vectorized loops, so the summation order of a
// reduction depends on where the buffer starts. Fixed 64-byte alignment keeps
// results bitwise stable across allocations and threads.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};
using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

// Named, flat parameter arrays with matching gradient arrays (row-major).
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;

    std::size_t size() const { return rows * cols; }
  };

  std::size_t add(std::string name, std::size_t rows, std::size_t cols);

  Entry& operator[](std::size_t i) { return entries_.at(i); }
  const Entry& operator[](std::size_t i) const { return entries_.at(i); }
  Entry& at(std::string_view name);
  const Entry& at(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  std::span<Entry> entries() { return entries_; }
  std::span<const Entry> entries() const { return entries_; }

  void zero_grad();
  // Throws NumericError naming the first non-finite value or gradient.
  void check_finite() const;

 private:
  std::vector<Entry> entries_;
};

// Gradient arrays shaped like a ParamStore; one per worker so tapes can run
// concurrently and be merged in a fixed order afterwards.
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const ParamStore& store);

  void zero();
  // store.grad += scale * this
  void accumulate_into(ParamStore& store, double scale = 1.0) const;

  std::vector<double>& operator[](std::size_t i) { return grads_.at(i); }
  const std::vector<double>& operator[](std::size_t i) const { return grads_.at(i); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::vector<std::vector<double>> grads_;
};

enum class Op : std::uint8_t {
  kConstant,
  kParameter,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kAddScalar,
  kMulScalar,
  kScalarSub,
  kScalarDiv,
  kExp,
  kLog,
  kSqrt,
  kAbs,
  kSquare,
  kSigmoid,
  kSoftplus,
  kLogGamma,
  kClampMin,
  kMatMul,
  kConcatCols,
  kSliceCols,
  kReshape,
  kSumCols,
  kSumAll,
  kExclusiveCumsumCols,
  kSelectRows,
};

const char* op_name(Op op);

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid until Tape::reset().
class Var {
 public:
  Var() = default;

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }
  std::span<const double> values() const;
  double value(std::size_t r = 0, std::size_t c = 0) const;
  // Adjoint after Tape::backward().
  std::span<const double> grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Wengert list of tensor operations, replayed in reverse by backward().
// Node buffers are kept across reset() so a training loop allocates once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reset() { count_ = 0; }
  std::size_t node_count() const { return count_; }

  Var constant(std::size_t rows, std::size_t cols, std::span<const double> data);
  Var constant(std::size_t rows, std::size_t cols, double fill);
  Var scalar(double v) { return constant(1, 1, v); }

  // Leaf whose gradient accumulates into store[index].grad.
  Var parameter(ParamStore& store, std::size_t index);
  // Leaf whose gradient accumulates into buffer[index].
  Var parameter(const ParamStore& store, std::size_t index, GradBuffer& buffer);

  // Reverse sweep from a 1x1 root. Adjoints of every node are zeroed first;
  // parameter gradients are accumulated (+=) into their targets.
  // Throws std::invalid_argument for a non-scalar root and NumericError if a
  // non-finite adjoint appears (the message names the operation).
  void backward(Var root);

  // Elementwise ops. Binary ops broadcast `b` when it is 1x1, 1xC or Rx1.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var add_scalar(Var a, double s);
  Var mul_scalar(Var a, double s);
  Var scalar_sub(double s, Var a);  // s - a
  Var scalar_div(double s, Var a);  // s / a
  Var exp(Var a);                   // argument clamped at 700
  Var log(Var a);
  Var sqrt(Var a);
  Var abs(Var a);
  Var square(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var log_gamma(Var a);
  Var clamp_min(Var a, double lo);

  // Structural ops.
  Var matmul(Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, std::size_t start, std::size_t count);
  Var reshape(Var a, std::size_t rows, std::size_t cols);
  Var sum_cols(Var a);  // RxC -> Rx1
  Var sum_all(Var a);   // -> 1x1
  Var mean_all(Var a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.size())); }
  // out[r][c] = sum_{k<c} a[r][k]
  Var exclusive_cumsum_cols(Var a);
  // Rows with use_fallback[r] != 0 are replaced by the constant `fallback`
  // and receive no gradient.
  Var select_rows(Var a, std::span<const std::uint8_t> use_fallback, double fallback);

 private:
  friend class Var;

  enum class Broadcast : std::uint8_t { kSame, kScalar, kRow, kCol };

  struct Node {
    Op op = Op::kConstant;
    std::size_t a = 0;
    std::size_t b = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double scalar = 0.0;
    std::size_t aux = 0;
    Broadcast broadcast = Broadcast::kSame;
    AlignedBuffer value;
    AlignedBuffer grad;
    std::vector<std::uint8_t> mask;
    double* grad_target = nullptr;
  };

  Node& push(Op op, std::size_t rows, std::size_t cols);
  Node& node(Var v);
  const Node& node(Var v) const;
  Var handle(std::size_t id) { return Var(this, id); }
  Var binary(Op op, Var a, Var b);
  Var unary(Op op, Var a, double scalar = 0.0);
  void check_owner(Var v) const;
  void propagate(std::size_t id);

  std::vector<Node> nodes_;
  std::size_t count_ = 0;
};

// Operator sugar over the Tape methods.
inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape()->div(a, b); }
inline Var operator-(Var a) { return a.tape()->neg(a); }
inline Var operator+(Var a, double s) { return a.tape()->add_scalar(a, s); }
inline Var operator+(double s, Var a) { return a.tape()->add_scalar(a, s); }
inline Var operator-(Var a, double s) { return a.tape()->add_scalar(a, -s); }
inline Var operator-(double s, Var a) { return a.tape()->scalar_sub(s, a); }
inline Var operator*(Var a, double s) { return a.tape()->mul_scalar(a, s); }
inline Var operator*(double s, Var a) { return a.tape()->mul_scalar(a, s); }
inline Var operator/(Var a, double s) { return a.tape()->mul_scalar(a, 1.0 / s); }
inline Var operator/(double s, Var a) { return a.tape()->scalar_div(s, a); }

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Builds a scalar root on the given tape from parameters of the store.
using ScalarGraphFn = std::function<Var(Tape&, ParamStore&)>;

// Compares reverse-mode gradients against central differences with step h,
// returning max |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
// Requires h in [1e-7, 1e-3]; throws NumericError on a non-finite probe.
GradCheckResult check_gradients(ParamStore& store, const ScalarGraphFn& fn, double h);

}  // namespace evfield
