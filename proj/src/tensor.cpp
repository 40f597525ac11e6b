#include "pdqa/tensor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace pdqa {

using detail::TensorData;

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_to_string(const Shape& s) {
  if (s.empty()) return "scalar";
  std::ostringstream out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out << "x";
    out << s[i];
  }
  return out.str();
}

namespace {

Tape* g_active_tape = nullptr;
std::uint64_t g_backward_epoch = 0;

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

[[noreturn]] void shape_error(const std::string& op, const Shape& a,
                              const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " +
                              shape_to_string(a) + " and " +
                              shape_to_string(b));
}

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

std::pair<std::size_t, std::size_t> dims2(const Tensor& t) {
  return {t.rows(), t.cols()};
}

Eigen::ArrayXd& pass_grad(TensorData& td) {
  if (td.pass_epoch != g_backward_epoch) {
    td.pass_grad.setZero(td.values.size());
    td.pass_epoch = g_backward_epoch;
  }
  return td.pass_grad;
}

// nullptr when the loss does not depend on this tensor in the current pass.
const Eigen::ArrayXd* incoming(const TensorData& td) {
  if (td.pass_epoch != g_backward_epoch) return nullptr;
  return &td.pass_grad;
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  bool any = false;
  for (const Tensor* t : inputs) any = any || t->requires_grad();
  return any;
}

void record(std::function<void()> backprop,
            std::initializer_list<Tensor> involved) {
  Tape::Node node;
  node.backprop = std::move(backprop);
  node.involved.reserve(involved.size());
  for (const Tensor& t : involved) node.involved.push_back(t.node());
  g_active_tape->nodes_.push_back(std::move(node));
}

double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

double std_normal_pdf(double x) {
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::allocate(Shape shape) {
  auto d = std::make_shared<TensorData>();
  const std::size_t n = shape_size(shape);
  d->shape = std::move(shape);
  d->values.resize(static_cast<Eigen::Index>(n));
  return Tensor(std::move(d));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t = allocate(std::move(shape));
  t.data_->values.setZero();
  t.data_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = allocate(std::move(shape));
  t.data_->values.setConstant(value);
  t.data_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  require(shape_size(shape) == values.size(),
          "from_values: shape " + shape_to_string(shape) + " needs " +
              std::to_string(shape_size(shape)) + " values, got " +
              std::to_string(values.size()));
  Tensor t = allocate(std::move(shape));
  for (std::size_t i = 0; i < values.size(); ++i)
    t.data_->values[static_cast<Eigen::Index>(i)] = values[i];
  t.data_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Tensor t = allocate(Shape{});
  t.data_->values[0] = value;
  t.data_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  Tensor t = allocate(std::move(shape));
  for (Eigen::Index i = 0; i < t.data_->values.size(); ++i)
    t.data_->values[i] = rng.normal(0.0, stddev);
  t.data_->requires_grad = requires_grad;
  return t;
}

const Shape& Tensor::shape() const { return data_->shape; }

std::size_t Tensor::size() const {
  return static_cast<std::size_t>(data_->values.size());
}

std::size_t Tensor::rows() const {
  const auto& s = shape();
  require(s.size() <= 2, "rows: rank > 2 tensor " + shape_to_string(s));
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  require(s.size() <= 2, "cols: rank > 2 tensor " + shape_to_string(s));
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  return 1;
}

double Tensor::value() const {
  require(size() == 1, "value: tensor is not scalar, shape " +
                           shape_to_string(shape()));
  return data_->values[0];
}

double Tensor::at(std::size_t flat_index) const {
  return data_->values[static_cast<Eigen::Index>(flat_index)];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return data_->values[static_cast<Eigen::Index>(row * cols() + col)];
}

const Eigen::ArrayXd& Tensor::values() const { return data_->values; }

Eigen::ArrayXd& Tensor::values_mut() { return data_->values; }

bool Tensor::requires_grad() const { return data_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  data_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return data_->grad_allocated; }

const Eigen::ArrayXd& Tensor::grad() const {
  require(data_->grad_allocated,
          "grad: no gradient present; run backward first");
  return data_->grad;
}

void Tensor::zero_grad() {
  data_->grad.setZero(data_->values.size());
  data_->grad_allocated = true;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

// ---- Elementwise ------------------------------------------------------------

namespace {

Tensor elementwise_binary(const char* name, const Tensor& a, const Tensor& b,
                          int mode) {
  if (a.shape() != b.shape()) shape_error(name, a.shape(), b.shape());
  Tensor out = Tensor::allocate(a.shape());
  switch (mode) {
    case 0: out.values_mut() = a.values() + b.values(); break;
    case 1: out.values_mut() = a.values() - b.values(); break;
    default: out.values_mut() = a.values() * b.values(); break;
  }
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  if (g_active_tape && should_record({&a, &b})) {
    record(
        [an = a.node(), bn = b.node(), on = out.node(), mode]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          switch (mode) {
            case 0:
              if (an->requires_grad) pass_grad(*an) += *go;
              if (bn->requires_grad) pass_grad(*bn) += *go;
              break;
            case 1:
              if (an->requires_grad) pass_grad(*an) += *go;
              if (bn->requires_grad) pass_grad(*bn) -= *go;
              break;
            default:
              if (an->requires_grad) pass_grad(*an) += *go * bn->values;
              if (bn->requires_grad) pass_grad(*bn) += *go * an->values;
              break;
          }
        },
        {a, b, out});
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary("add", a, b, 0);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary("sub", a, b, 1);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary("mul", a, b, 2);
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::allocate(a.shape());
  out.values_mut() = a.values() * c;
  out.set_requires_grad(a.requires_grad());
  if (g_active_tape && should_record({&a})) {
    record(
        [an = a.node(), on = out.node(), c]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (an->requires_grad) pass_grad(*an) += *go * c;
        },
        {a, out});
  }
  return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  const auto [r, c] = dims2(m);
  require(m.rank() == 2, "add_rowvec: matrix argument must be rank 2, got " +
                             shape_to_string(m.shape()));
  if (v.size() != c) shape_error("add_rowvec", m.shape(), v.shape());
  Tensor out = Tensor::allocate(m.shape());
  {
    ConstMatMap mm(m.values().data(), r, c);
    Eigen::Map<const Eigen::RowVectorXd> vv(v.values().data(), c);
    MatMap om(out.values_mut().data(), r, c);
    om = mm.rowwise() + vv;
  }
  out.set_requires_grad(m.requires_grad() || v.requires_grad());
  if (g_active_tape && should_record({&m, &v})) {
    record(
        [mn = m.node(), vn = v.node(), on = out.node(), r, c]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (mn->requires_grad) pass_grad(*mn) += *go;
          if (vn->requires_grad) {
            ConstMatMap gm(go->data(), r, c);
            Eigen::Map<Eigen::RowVectorXd> gv(pass_grad(*vn).data(), c);
            gv += gm.colwise().sum();
          }
        },
        {m, v, out});
  }
  return out;
}

// ---- Matrix products --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul: both arguments must be rank 2, got " +
              shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  const auto [m, k] = dims2(a);
  const auto [k2, n] = dims2(b);
  if (k != k2) shape_error("matmul", a.shape(), b.shape());
  Tensor out = Tensor::allocate({m, n});
  {
    ConstMatMap am(a.values().data(), m, k);
    ConstMatMap bm(b.values().data(), k, n);
    MatMap om(out.values_mut().data(), m, n);
    om.noalias() = am * bm;
  }
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  if (g_active_tape && should_record({&a, &b})) {
    record(
        [an = a.node(), bn = b.node(), on = out.node(), m, k, n]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          ConstMatMap gm(go->data(), m, n);
          if (an->requires_grad) {
            ConstMatMap bm(bn->values.data(), k, n);
            MatMap ga(pass_grad(*an).data(), m, k);
            ga.noalias() += gm * bm.transpose();
          }
          if (bn->requires_grad) {
            ConstMatMap am(an->values.data(), m, k);
            MatMap gb(pass_grad(*bn).data(), k, n);
            gb.noalias() += am.transpose() * gm;
          }
        },
        {a, b, out});
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul_nt: both arguments must be rank 2, got " +
              shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  const auto [m, k] = dims2(a);
  const auto [n, k2] = dims2(b);
  if (k != k2) shape_error("matmul_nt", a.shape(), b.shape());
  Tensor out = Tensor::allocate({m, n});
  {
    ConstMatMap am(a.values().data(), m, k);
    ConstMatMap bm(b.values().data(), n, k);
    MatMap om(out.values_mut().data(), m, n);
    om.noalias() = am * bm.transpose();
  }
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  if (g_active_tape && should_record({&a, &b})) {
    record(
        [an = a.node(), bn = b.node(), on = out.node(), m, k, n]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          ConstMatMap gm(go->data(), m, n);
          if (an->requires_grad) {
            ConstMatMap bm(bn->values.data(), n, k);
            MatMap ga(pass_grad(*an).data(), m, k);
            ga.noalias() += gm * bm;
          }
          if (bn->requires_grad) {
            ConstMatMap am(an->values.data(), m, k);
            MatMap gb(pass_grad(*bn).data(), n, k);
            gb.noalias() += gm.transpose() * am;
          }
        },
        {a, b, out});
  }
  return out;
}

// ---- Softmax / layer norm / activations -------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(x.rank() >= 1 && x.rank() <= 2,
          "softmax: rank must be 1 or 2, got " + shape_to_string(x.shape()));
  require(axis < x.rank(), "softmax: axis " + std::to_string(axis) +
                               " out of range for shape " +
                               shape_to_string(x.shape()));
  const bool along_rows = (x.rank() == 1) || (axis == 1);
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out = Tensor::allocate(x.shape());
  {
    ConstMatMap xm(x.values().data(), r, c);
    MatMap om(out.values_mut().data(), r, c);
    if (along_rows) {
      for (std::size_t i = 0; i < r; ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        const double mx = xm.row(e).maxCoeff();
        om.row(e).array() = (xm.row(e).array() - mx).exp();
        om.row(e) /= om.row(e).sum();
      }
    } else {
      for (std::size_t j = 0; j < c; ++j) {
        const auto e = static_cast<Eigen::Index>(j);
        const double mx = xm.col(e).maxCoeff();
        om.col(e).array() = (xm.col(e).array() - mx).exp();
        om.col(e) /= om.col(e).sum();
      }
    }
  }
  out.set_requires_grad(x.requires_grad());
  if (g_active_tape && should_record({&x})) {
    record(
        [xn = x.node(), on = out.node(), along_rows, r, c]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (!xn->requires_grad) return;
          ConstMatMap gm(go->data(), r, c);
          ConstMatMap ym(on->values.data(), r, c);
          MatMap gx(pass_grad(*xn).data(), r, c);
          if (along_rows) {
            for (std::size_t i = 0; i < r; ++i) {
              const auto e = static_cast<Eigen::Index>(i);
              const double inner = gm.row(e).dot(ym.row(e));
              gx.row(e).array() +=
                  ym.row(e).array() * (gm.row(e).array() - inner);
            }
          } else {
            for (std::size_t j = 0; j < c; ++j) {
              const auto e = static_cast<Eigen::Index>(j);
              const double inner = gm.col(e).dot(ym.col(e));
              gx.col(e).array() +=
                  ym.col(e).array() * (gm.col(e).array() - inner);
            }
          }
        },
        {x, out});
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require(eps > 0.0, "layer_norm: eps must be positive");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  if (gain.size() != c) shape_error("layer_norm gain", x.shape(), gain.shape());
  if (bias.size() != c) shape_error("layer_norm bias", x.shape(), bias.shape());
  Tensor out = Tensor::allocate(x.shape());
  Eigen::ArrayXd inv_sigma(static_cast<Eigen::Index>(r));
  Eigen::ArrayXd mean(static_cast<Eigen::Index>(r));
  {
    Eigen::Map<const Eigen::ArrayXd> g(gain.values().data(),
                                       static_cast<Eigen::Index>(c));
    Eigen::Map<const Eigen::ArrayXd> b(bias.values().data(),
                                       static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < r; ++i) {
      const auto e = static_cast<Eigen::Index>(i);
      Eigen::Map<const Eigen::ArrayXd> xrow(x.values().data() + i * c,
                                            static_cast<Eigen::Index>(c));
      Eigen::Map<Eigen::ArrayXd> orow(out.values_mut().data() + i * c,
                                      static_cast<Eigen::Index>(c));
      const double mu = xrow.mean();
      const double var = (xrow - mu).square().mean();
      const double inv = 1.0 / std::sqrt(var + eps);
      mean[e] = mu;
      inv_sigma[e] = inv;
      orow = ((xrow - mu) * inv) * g + b;
    }
  }
  out.set_requires_grad(x.requires_grad() || gain.requires_grad() ||
                        bias.requires_grad());
  if (g_active_tape && should_record({&x, &gain, &bias})) {
    record(
        [xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(),
         mean = std::move(mean), inv_sigma = std::move(inv_sigma), r, c]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          Eigen::Map<const Eigen::ArrayXd> g(gn->values.data(),
                                             static_cast<Eigen::Index>(c));
          for (std::size_t i = 0; i < r; ++i) {
            const auto e = static_cast<Eigen::Index>(i);
            Eigen::Map<const Eigen::ArrayXd> xrow(
                xn->values.data() + i * c, static_cast<Eigen::Index>(c));
            Eigen::Map<const Eigen::ArrayXd> grow(
                go->data() + i * c, static_cast<Eigen::Index>(c));
            const Eigen::ArrayXd xh = (xrow - mean[e]) * inv_sigma[e];
            if (xn->requires_grad) {
              const Eigen::ArrayXd dxh = grow * g;
              const double mean_dxh = dxh.mean();
              const double mean_dxh_xh = (dxh * xh).mean();
              Eigen::Map<Eigen::ArrayXd> gx(pass_grad(*xn).data() + i * c,
                                            static_cast<Eigen::Index>(c));
              gx += inv_sigma[e] * (dxh - mean_dxh - xh * mean_dxh_xh);
            }
            if (gn->requires_grad) {
              Eigen::Map<Eigen::ArrayXd> gg(pass_grad(*gn).data(),
                                            static_cast<Eigen::Index>(c));
              gg += grow * xh;
            }
            if (bn->requires_grad) {
              Eigen::Map<Eigen::ArrayXd> gb(pass_grad(*bn).data(),
                                            static_cast<Eigen::Index>(c));
              gb += grow;
            }
          }
        },
        {x, gain, bias, out});
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::allocate(x.shape());
  for (Eigen::Index i = 0; i < x.values().size(); ++i) {
    const double v = x.values()[i];
    out.values_mut()[i] = v * std_normal_cdf(v);
  }
  out.set_requires_grad(x.requires_grad());
  if (g_active_tape && should_record({&x})) {
    record(
        [xn = x.node(), on = out.node()]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (!xn->requires_grad) return;
          Eigen::ArrayXd& gx = pass_grad(*xn);
          for (Eigen::Index i = 0; i < xn->values.size(); ++i) {
            const double v = xn->values[i];
            gx[i] += (*go)[i] * (std_normal_cdf(v) + v * std_normal_pdf(v));
          }
        },
        {x, out});
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::allocate(x.shape());
  for (Eigen::Index i = 0; i < x.values().size(); ++i)
    out.values_mut()[i] = stable_sigmoid(x.values()[i]);
  out.set_requires_grad(x.requires_grad());
  if (g_active_tape && should_record({&x})) {
    record(
        [xn = x.node(), on = out.node()]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (!xn->requires_grad) return;
          pass_grad(*xn) += *go * on->values * (1.0 - on->values);
        },
        {x, out});
  }
  return out;
}

// ---- Reductions and vector ops ----------------------------------------------

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::scalar(x.values().sum());
  out.set_requires_grad(x.requires_grad());
  if (g_active_tape && should_record({&x})) {
    record(
        [xn = x.node(), on = out.node()]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (!xn->requires_grad) return;
          pass_grad(*xn) += (*go)[0];
        },
        {x, out});
  }
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) shape_error("dot", a.shape(), b.shape());
  Tensor out = Tensor::scalar((a.values() * b.values()).sum());
  out.set_requires_grad(a.requires_grad() || b.requires_grad());
  if (g_active_tape && should_record({&a, &b})) {
    record(
        [an = a.node(), bn = b.node(), on = out.node()]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (an->requires_grad) pass_grad(*an) += (*go)[0] * bn->values;
          if (bn->requires_grad) pass_grad(*bn) += (*go)[0] * an->values;
        },
        {a, b, out});
  }
  return out;
}

Tensor l2_normalize(const Tensor& x) {
  const double norm = std::sqrt(x.values().square().sum());
  require(norm > 0.0, "l2_normalize: zero vector");
  Tensor out = Tensor::allocate(x.shape());
  out.values_mut() = x.values() / norm;
  out.set_requires_grad(x.requires_grad());
  if (g_active_tape && should_record({&x})) {
    record(
        [xn = x.node(), on = out.node(), norm]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (!xn->requires_grad) return;
          const double inner = (*go * on->values).sum();
          pass_grad(*xn) += (*go - on->values * inner) / norm;
        },
        {x, out});
  }
  return out;
}

// ---- Slicing, concatenation, gather -----------------------------------------

Tensor slice_rows(const Tensor& x, std::size_t first, std::size_t count) {
  require(x.rank() == 2, "slice_rows: rank must be 2, got " +
                             shape_to_string(x.shape()));
  const auto [r, c] = dims2(x);
  require(first + count <= r, "slice_rows: rows [" + std::to_string(first) +
                                  ", " + std::to_string(first + count) +
                                  ") out of range for " +
                                  shape_to_string(x.shape()));
  Tensor out = Tensor::allocate({count, c});
  out.values_mut() = x.values().segment(
      static_cast<Eigen::Index>(first * c), static_cast<Eigen::Index>(count * c));
  out.set_requires_grad(x.requires_grad());
  if (g_active_tape && should_record({&x})) {
    record(
        [xn = x.node(), on = out.node(), first, count, c]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (!xn->requires_grad) return;
          pass_grad(*xn).segment(static_cast<Eigen::Index>(first * c),
                                 static_cast<Eigen::Index>(count * c)) += *go;
        },
        {x, out});
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t first, std::size_t count) {
  require(x.rank() == 2, "slice_cols: rank must be 2, got " +
                             shape_to_string(x.shape()));
  const auto [r, c] = dims2(x);
  require(first + count <= c, "slice_cols: cols [" + std::to_string(first) +
                                  ", " + std::to_string(first + count) +
                                  ") out of range for " +
                                  shape_to_string(x.shape()));
  Tensor out = Tensor::allocate({r, count});
  {
    ConstMatMap xm(x.values().data(), r, c);
    MatMap om(out.values_mut().data(), r, count);
    om = xm.middleCols(static_cast<Eigen::Index>(first),
                       static_cast<Eigen::Index>(count));
  }
  out.set_requires_grad(x.requires_grad());
  if (g_active_tape && should_record({&x})) {
    record(
        [xn = x.node(), on = out.node(), first, count, r, c]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (!xn->requires_grad) return;
          ConstMatMap gm(go->data(), r, count);
          MatMap gx(pass_grad(*xn).data(), r, c);
          gx.middleCols(static_cast<Eigen::Index>(first),
                        static_cast<Eigen::Index>(count)) += gm;
        },
        {x, out});
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: empty part list");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  bool needs_grad = false;
  for (const Tensor& p : parts) {
    require(p.rank() == 2, "concat_rows: rank must be 2, got " +
                               shape_to_string(p.shape()));
    if (p.cols() != c) shape_error("concat_rows", parts.front().shape(),
                                   p.shape());
    total += p.rows();
    needs_grad = needs_grad || p.requires_grad();
  }
  Tensor out = Tensor::allocate({total, c});
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    out.values_mut().segment(static_cast<Eigen::Index>(offset * c),
                             static_cast<Eigen::Index>(p.size())) = p.values();
    offset += p.rows();
  }
  out.set_requires_grad(needs_grad);
  if (g_active_tape && needs_grad) {
    std::vector<std::shared_ptr<TensorData>> nodes;
    std::vector<std::size_t> offsets;
    std::size_t row0 = 0;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      offsets.push_back(row0);
      row0 += p.rows();
    }
    Tape::Node node;
    node.involved = nodes;
    node.involved.push_back(out.node());
    node.backprop = [nodes, offsets, on = out.node(), c]() {
      const Eigen::ArrayXd* go = incoming(*on);
      if (!go) return;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        pass_grad(*nodes[i]) +=
            go->segment(static_cast<Eigen::Index>(offsets[i] * c),
                        nodes[i]->values.size());
      }
    };
    g_active_tape->nodes_.push_back(std::move(node));
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: empty part list");
  const std::size_t r = parts.front().rows();
  std::size_t total = 0;
  bool needs_grad = false;
  for (const Tensor& p : parts) {
    require(p.rank() == 2, "concat_cols: rank must be 2, got " +
                               shape_to_string(p.shape()));
    if (p.rows() != r) shape_error("concat_cols", parts.front().shape(),
                                   p.shape());
    total += p.cols();
    needs_grad = needs_grad || p.requires_grad();
  }
  Tensor out = Tensor::allocate({r, total});
  {
    MatMap om(out.values_mut().data(), r, total);
    std::size_t col0 = 0;
    for (const Tensor& p : parts) {
      ConstMatMap pm(p.values().data(), r, p.cols());
      om.middleCols(static_cast<Eigen::Index>(col0),
                    static_cast<Eigen::Index>(p.cols())) = pm;
      col0 += p.cols();
    }
  }
  out.set_requires_grad(needs_grad);
  if (g_active_tape && needs_grad) {
    std::vector<std::shared_ptr<TensorData>> nodes;
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> widths;
    std::size_t col0 = 0;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      offsets.push_back(col0);
      widths.push_back(p.cols());
      col0 += p.cols();
    }
    Tape::Node node;
    node.involved = nodes;
    node.involved.push_back(out.node());
    node.backprop = [nodes, offsets, widths, on = out.node(), r, total]() {
      const Eigen::ArrayXd* go = incoming(*on);
      if (!go) return;
      ConstMatMap gm(go->data(), r, total);
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        MatMap gp(pass_grad(*nodes[i]).data(), r, widths[i]);
        gp += gm.middleCols(static_cast<Eigen::Index>(offsets[i]),
                            static_cast<Eigen::Index>(widths[i]));
      }
    };
    g_active_tape->nodes_.push_back(std::move(node));
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
  require(table.rank() == 2, "gather_rows: table must be rank 2, got " +
                                 shape_to_string(table.shape()));
  const auto [v, d] = dims2(table);
  for (std::size_t id : ids)
    require(id < v, "gather_rows: id " + std::to_string(id) +
                        " out of range for table " +
                        shape_to_string(table.shape()));
  Tensor out = Tensor::allocate({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.values_mut().segment(static_cast<Eigen::Index>(i * d),
                             static_cast<Eigen::Index>(d)) =
        table.values().segment(static_cast<Eigen::Index>(ids[i] * d),
                               static_cast<Eigen::Index>(d));
  out.set_requires_grad(table.requires_grad());
  if (g_active_tape && should_record({&table})) {
    record(
        [tn = table.node(), on = out.node(), ids, d]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (!tn->requires_grad) return;
          Eigen::ArrayXd& gt = pass_grad(*tn);
          for (std::size_t i = 0; i < ids.size(); ++i)
            gt.segment(static_cast<Eigen::Index>(ids[i] * d),
                       static_cast<Eigen::Index>(d)) +=
                go->segment(static_cast<Eigen::Index>(i * d),
                            static_cast<Eigen::Index>(d));
        },
        {table, out});
  }
  return out;
}

Tensor stack_scalars(const std::vector<Tensor>& scalars) {
  require(!scalars.empty(), "stack_scalars: empty list");
  Tensor out = Tensor::allocate({scalars.size()});
  bool needs_grad = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    require(scalars[i].size() == 1, "stack_scalars: entry " +
                                        std::to_string(i) + " is not scalar");
    out.values_mut()[static_cast<Eigen::Index>(i)] = scalars[i].values()[0];
    needs_grad = needs_grad || scalars[i].requires_grad();
  }
  out.set_requires_grad(needs_grad);
  if (g_active_tape && needs_grad) {
    std::vector<std::shared_ptr<TensorData>> nodes;
    for (const Tensor& s : scalars) nodes.push_back(s.node());
    Tape::Node node;
    node.involved = nodes;
    node.involved.push_back(out.node());
    node.backprop = [nodes, on = out.node()]() {
      const Eigen::ArrayXd* go = incoming(*on);
      if (!go) return;
      for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i]->requires_grad)
          pass_grad(*nodes[i])[0] += (*go)[static_cast<Eigen::Index>(i)];
    };
    g_active_tape->nodes_.push_back(std::move(node));
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_size(shape) == x.size(),
          "reshape: size mismatch between " + shape_to_string(x.shape()) +
              " and " + shape_to_string(shape));
  Tensor out = Tensor::allocate(std::move(shape));
  out.values_mut() = x.values();
  out.set_requires_grad(x.requires_grad());
  if (g_active_tape && should_record({&x})) {
    record(
        [xn = x.node(), on = out.node()]() {
          const Eigen::ArrayXd* go = incoming(*on);
          if (!go) return;
          if (!xn->requires_grad) return;
          pass_grad(*xn) += *go;
        },
        {x, out});
  }
  return out;
}

// ---- Backward ---------------------------------------------------------------

void backward(const Tensor& loss, Tape& tape) {
  require(loss.size() == 1,
          "backward: loss must be scalar, got shape " +
              shape_to_string(loss.shape()));
  ++g_backward_epoch;
  pass_grad(*loss.node())[0] = 1.0;
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it)
    it->backprop();
  // Fold the per-pass gradients into the persistent buffers, once per tensor.
  for (const auto& node : tape.nodes_) {
    for (const auto& td : node.involved) {
      if (td->sink_epoch == g_backward_epoch) continue;
      td->sink_epoch = g_backward_epoch;
      if (!td->requires_grad) continue;
      if (!td->grad_allocated) {
        td->grad.setZero(td->values.size());
        td->grad_allocated = true;
      }
      if (td->pass_epoch == g_backward_epoch) td->grad += td->pass_grad;
    }
  }
}

// ---- Finite differences -------------------------------------------------------

std::vector<std::vector<double>> finite_diff_gradient(
    const std::function<double()>& f, const std::vector<Tensor>& params,
    double step) {
  require(step > 0.0, "finite_diff_gradient: step must be positive");
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) {
    std::vector<double> g(p.size());
    Eigen::ArrayXd& v = const_cast<Tensor&>(p).values_mut();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto e = static_cast<Eigen::Index>(i);
      const double original = v[e];
      v[e] = original + step;
      const double fp = f();
      v[e] = original - step;
      const double fm = f();
      v[e] = original;
      g[i] = (fp - fm) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double max_relative_error(const std::vector<double>& analytic,
                          const std::vector<double>& numeric, double floor) {
  require(analytic.size() == numeric.size(),
          "max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace pdqa
