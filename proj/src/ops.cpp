#include "hidfd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hidfd/errors.hpp"
#include "hidfd/kernels.hpp"

namespace hidfd::ops {
namespace {

using Inputs = Tape::Inputs;
using Grads = std::span<Tensor* const>;

Tape& tape_of(std::initializer_list<Var> vars, const char* op) {
  Tape* t = vars.begin()->tape;
  if (t == nullptr) throw ContractError(std::string(op) + ": unbound variable");
  for (const Var& v : vars) {
    if (v.tape != t) throw ContractError(std::string(op) + ": operands recorded on different tapes");
  }
  return *t;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(op, "shape mismatch " + shape_string(a.shape()) + " vs " +
                                 shape_string(b.shape()));
  }
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw DimensionError(op, "expected a matrix, got " + shape_string(a.shape()));
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

// Elementwise unary op with derivative expressed through input and output.
template <class F, class D>
Var unary(const char* name, Var a, F f, D dfdx) {
  Tape& t = tape_of({a}, name);
  return t.record(
      name, {a},
      [f](Inputs in) {
        Tensor out = Tensor::zeros_like(*in[0]);
        auto x = in[0]->data();
        auto y = out.data();
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
        return out;
      },
      [dfdx](Inputs in, const Tensor& out, const Tensor& gout, Grads g) {
        if (!g[0]) return;
        auto x = in[0]->data();
        auto y = out.data();
        auto go = gout.data();
        auto gi = g[0]->data();
        for (std::size_t i = 0; i < x.size(); ++i) gi[i] += go[i] * dfdx(x[i], y[i]);
      });
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of({a, b}, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("matmul", av);
  require_matrix("matmul", bv);
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul", "inner dimensions differ: " + shape_string(av.shape()) +
                                       " * " + shape_string(bv.shape()));
  }
  return t.record(
      "matmul", {a, b},
      [](Inputs in) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        Tensor out(matrix_shape(x.rows(), y.cols()));
        kernels::active().gemm_nn(x.rows(), y.cols(), x.cols(), x.data().data(), y.data().data(),
                                  out.data().data());
        return out;
      },
      [](Inputs in, const Tensor&, const Tensor& gout, Grads g) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        const auto& k = kernels::active();
        // dX = dOut * Y^T ; dY = X^T * dOut
        if (g[0]) {
          k.gemm_nt(x.rows(), x.cols(), y.cols(), gout.data().data(), y.data().data(),
                    g[0]->data().data());
        }
        if (g[1]) {
          k.gemm_tn(x.cols(), y.cols(), x.rows(), x.data().data(), gout.data().data(),
                    g[1]->data().data());
        }
      });
}

Var add(Var a, Var b) {
  Tape& t = tape_of({a, b}, "add");
  require_same_shape("add", a.value(), b.value());
  return t.record(
      "add", {a, b},
      [](Inputs in) {
        Tensor out = *in[0];
        out.requires_grad = false;
        kernels::active().axpy(out.size(), 1.0, in[1]->data().data(), out.data().data());
        return out;
      },
      [](Inputs, const Tensor&, const Tensor& gout, Grads g) {
        for (Tensor* gi : g) {
          if (gi) kernels::active().axpy(gout.size(), 1.0, gout.data().data(), gi->data().data());
        }
      });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of({a, b}, "sub");
  require_same_shape("sub", a.value(), b.value());
  return t.record(
      "sub", {a, b},
      [](Inputs in) {
        Tensor out = *in[0];
        out.requires_grad = false;
        auto y = in[1]->data();
        auto o = out.data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] -= y[i];
        return out;
      },
      [](Inputs, const Tensor&, const Tensor& gout, Grads g) {
        auto go = gout.data();
        if (g[0]) {
          auto gi = g[0]->data();
          for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
        }
        if (g[1]) {
          auto gi = g[1]->data();
          for (std::size_t i = 0; i < go.size(); ++i) gi[i] -= go[i];
        }
      });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of({a, b}, "mul");
  require_same_shape("mul", a.value(), b.value());
  return t.record(
      "mul", {a, b},
      [](Inputs in) {
        Tensor out = Tensor::zeros_like(*in[0]);
        auto x = in[0]->data();
        auto y = in[1]->data();
        auto o = out.data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
        return out;
      },
      [](Inputs in, const Tensor&, const Tensor& gout, Grads g) {
        auto go = gout.data();
        auto x = in[0]->data();
        auto y = in[1]->data();
        if (g[0]) {
          auto gi = g[0]->data();
          for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * y[i];
        }
        if (g[1]) {
          auto gi = g[1]->data();
          for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * x[i];
        }
      });
}

Var add_bias(Var a, Var bias) {
  Tape& t = tape_of({a, bias}, "add_bias");
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  require_matrix("add_bias", av);
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw DimensionError("add_bias", "bias " + shape_string(bv.shape()) + " does not match " +
                                         shape_string(av.shape()));
  }
  return t.record(
      "add_bias", {a, bias},
      [](Inputs in) {
        Tensor out = *in[0];
        out.requires_grad = false;
        const auto& k = kernels::active();
        for (std::size_t r = 0; r < out.rows(); ++r) {
          k.axpy(out.cols(), 1.0, in[1]->data().data(), out.row(r).data());
        }
        return out;
      },
      [](Inputs, const Tensor&, const Tensor& gout, Grads g) {
        if (g[0]) {
          auto go = gout.data();
          auto gi = g[0]->data();
          for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
        }
        if (g[1]) {
          for (std::size_t r = 0; r < gout.rows(); ++r) {
            auto gr = gout.row(r);
            auto gb = g[1]->data();
            for (std::size_t c = 0; c < gr.size(); ++c) gb[c] += gr[c];
          }
        }
      });
}

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var a) {
  return unary(
      "log_sigmoid", a, [](double x) { return -stable_softplus(-x); },
      [](double x, double) { return stable_sigmoid(-x); });
}

Var softplus(Var a) {
  return unary("softplus", a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sum(Var a) {
  Tape& t = tape_of({a}, "sum");
  return t.record(
      "sum", {a},
      [](Inputs in) {
        double s = 0.0;
        for (double v : in[0]->data()) s += v;
        return Tensor::scalar(s);
      },
      [](Inputs, const Tensor&, const Tensor& gout, Grads g) {
        if (!g[0]) return;
        const double go = gout[0];
        for (double& v : g[0]->data()) v += go;
      });
}

Var mean(Var a) {
  Tape& t = tape_of({a}, "mean");
  return t.record(
      "mean", {a},
      [](Inputs in) {
        double s = 0.0;
        for (double v : in[0]->data()) s += v;
        return Tensor::scalar(s / static_cast<double>(in[0]->size()));
      },
      [](Inputs in, const Tensor&, const Tensor& gout, Grads g) {
        if (!g[0]) return;
        const double go = gout[0] / static_cast<double>(in[0]->size());
        for (double& v : g[0]->data()) v += go;
      });
}

Var mean_rows(Var a) {
  Tape& t = tape_of({a}, "mean_rows");
  require_matrix("mean_rows", a.value());
  return t.record(
      "mean_rows", {a},
      [](Inputs in) {
        const Tensor& x = *in[0];
        Tensor out(matrix_shape(1, x.cols()));
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          for (std::size_t c = 0; c < xr.size(); ++c) out[c] += xr[c];
        }
        const double inv = 1.0 / static_cast<double>(x.rows());
        for (double& v : out.data()) v *= inv;
        return out;
      },
      [](Inputs in, const Tensor&, const Tensor& gout, Grads g) {
        if (!g[0]) return;
        const double inv = 1.0 / static_cast<double>(in[0]->rows());
        for (std::size_t r = 0; r < g[0]->rows(); ++r) {
          auto gr = g[0]->row(r);
          for (std::size_t c = 0; c < gr.size(); ++c) gr[c] += gout[c] * inv;
        }
      });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of({a, b}, "concat_cols");
  require_matrix("concat_cols", a.value());
  require_matrix("concat_cols", b.value());
  if (a.value().rows() != b.value().rows()) {
    throw DimensionError("concat_cols", "row counts differ: " + shape_string(a.shape()) + " vs " +
                                            shape_string(b.shape()));
  }
  return t.record(
      "concat_cols", {a, b},
      [](Inputs in) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        Tensor out(matrix_shape(x.rows(), x.cols() + y.cols()));
        for (std::size_t r = 0; r < x.rows(); ++r) {
          std::copy(x.row(r).begin(), x.row(r).end(), out.row(r).begin());
          std::copy(y.row(r).begin(), y.row(r).end(), out.row(r).begin() + x.cols());
        }
        return out;
      },
      [](Inputs in, const Tensor&, const Tensor& gout, Grads g) {
        const std::size_t p = in[0]->cols();
        for (std::size_t r = 0; r < gout.rows(); ++r) {
          auto gr = gout.row(r);
          if (g[0]) {
            auto d = g[0]->row(r);
            for (std::size_t c = 0; c < p; ++c) d[c] += gr[c];
          }
          if (g[1]) {
            auto d = g[1]->row(r);
            for (std::size_t c = 0; c < d.size(); ++c) d[c] += gr[p + c];
          }
        }
      });
}

Var log_softmax(Var a) {
  Tape& t = tape_of({a}, "log_softmax");
  require_matrix("log_softmax", a.value());
  return t.record(
      "log_softmax", {a},
      [](Inputs in) {
        const Tensor& x = *in[0];
        Tensor out = Tensor::zeros_like(x);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          const double m = *std::max_element(xr.begin(), xr.end());
          double s = 0.0;
          for (double v : xr) s += std::exp(v - m);
          const double lse = m + std::log(s);
          auto o = out.row(r);
          for (std::size_t c = 0; c < xr.size(); ++c) o[c] = xr[c] - lse;
        }
        return out;
      },
      [](Inputs, const Tensor& out, const Tensor& gout, Grads g) {
        if (!g[0]) return;
        for (std::size_t r = 0; r < out.rows(); ++r) {
          auto lo = out.row(r);
          auto go = gout.row(r);
          double gs = 0.0;
          for (double v : go) gs += v;
          auto gi = g[0]->row(r);
          for (std::size_t c = 0; c < lo.size(); ++c) gi[c] += go[c] - std::exp(lo[c]) * gs;
        }
      });
}

Var softmax(Var a) { return exp(log_softmax(a)); }

Var pick(Var a, std::span<const int> columns) {
  Tape& t = tape_of({a}, "pick");
  const Tensor& av = a.value();
  require_matrix("pick", av);
  if (columns.size() != av.rows()) {
    throw DimensionError("pick", std::to_string(columns.size()) + " indices for " +
                                     std::to_string(av.rows()) + " rows");
  }
  std::vector<int> cols(columns.begin(), columns.end());
  for (int c : cols) {
    if (c < 0 || static_cast<std::size_t>(c) >= av.cols()) {
      throw DimensionError("pick", "column index " + std::to_string(c) + " out of range");
    }
  }
  return t.record(
      "pick", {a},
      [cols](Inputs in) {
        const Tensor& x = *in[0];
        Tensor out(matrix_shape(x.rows(), 1));
        for (std::size_t r = 0; r < x.rows(); ++r) out[r] = x(r, static_cast<std::size_t>(cols[r]));
        return out;
      },
      [cols](Inputs, const Tensor&, const Tensor& gout, Grads g) {
        if (!g[0]) return;
        for (std::size_t r = 0; r < gout.size(); ++r) {
          (*g[0])(r, static_cast<std::size_t>(cols[r])) += gout[r];
        }
      });
}

Var sq_l2_distance(Var a, Var b) {
  Tape& t = tape_of({a, b}, "sq_l2_distance");
  require_matrix("sq_l2_distance", a.value());
  require_same_shape("sq_l2_distance", a.value(), b.value());
  return t.record(
      "sq_l2_distance", {a, b},
      [](Inputs in) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        Tensor out(matrix_shape(x.rows(), 1));
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          auto yr = y.row(r);
          double s = 0.0;
          for (std::size_t c = 0; c < xr.size(); ++c) s += (xr[c] - yr[c]) * (xr[c] - yr[c]);
          out[r] = s;
        }
        return out;
      },
      [](Inputs in, const Tensor&, const Tensor& gout, Grads g) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          auto yr = y.row(r);
          for (std::size_t c = 0; c < xr.size(); ++c) {
            const double d = 2.0 * gout[r] * (xr[c] - yr[c]);
            if (g[0]) (*g[0])(r, c) += d;
            if (g[1]) (*g[1])(r, c) -= d;
          }
        }
      });
}

Var l2_distance(Var a, Var b) {
  Tape& t = tape_of({a, b}, "l2_distance");
  require_matrix("l2_distance", a.value());
  require_same_shape("l2_distance", a.value(), b.value());
  return t.record(
      "l2_distance", {a, b},
      [](Inputs in) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        Tensor out(matrix_shape(x.rows(), 1));
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row(r);
          auto yr = y.row(r);
          double s = 0.0;
          for (std::size_t c = 0; c < xr.size(); ++c) s += (xr[c] - yr[c]) * (xr[c] - yr[c]);
          out[r] = std::sqrt(s);
        }
        return out;
      },
      [](Inputs in, const Tensor& out, const Tensor& gout, Grads g) {
        const Tensor& x = *in[0];
        const Tensor& y = *in[1];
        for (std::size_t r = 0; r < x.rows(); ++r) {
          if (out[r] == 0.0) continue;
          const double k = gout[r] / out[r];
          auto xr = x.row(r);
          auto yr = y.row(r);
          for (std::size_t c = 0; c < xr.size(); ++c) {
            const double d = k * (xr[c] - yr[c]);
            if (g[0]) (*g[0])(r, c) += d;
            if (g[1]) (*g[1])(r, c) -= d;
          }
        }
      });
}

Var detach(Var a) {
  Tape& t = tape_of({a}, "detach");
  return t.constant(a.value());
}

}  // namespace hidfd::ops
