#include "oepg/tape.hpp"

#include <algorithm>
#include <cmath>

#include "oepg/error.hpp"

namespace oepg {

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, nullptr, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(ParameterStore& store, const std::string& name) {
  nodes_.push_back(Node{store.value(name), {}, {}, true, &store, name});
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, nullptr, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::push(Matrix value, std::vector<std::size_t> inputs, Backward backward) {
  const bool req = std::any_of(inputs.begin(), inputs.end(),
                               [this](std::size_t i) { return nodes_[i].requires_grad; });
  nodes_.push_back(Node{std::move(value), {}, req ? std::move(backward) : Backward{}, req,
                        nullptr, {}});
  return {this, nodes_.size() - 1};
}

Matrix& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty()) {
    throw ContractError("tape node has no gradient (not reached by backward)");
  }
  return n.grad;
}

void Tape::backward(Var scalar_output) {
  if (scalar_output.tape != this) throw ContractError("backward on a foreign tape");
  if (value(scalar_output.id).size() != 1) throw ShapeError("backward needs a scalar output");
  grad_slot(scalar_output.id)[0] += 1.0;
  for (std::size_t id = scalar_output.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, id);
    } else if (n.store != nullptr) {
      n.store->grad(n.param_name) += n.grad;
    }
  }
}

namespace ad {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

void accumulate(Tape& t, std::size_t id, const Matrix& g) {
  if (t.needs_grad(id)) t.grad_slot(id) += g;
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  Tape& t = *a.tape;
  return t.push(oepg::matmul(a.value(), b.value()), {a.id, b.id},
                [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad_slot(self);
                  if (t.needs_grad(ia)) t.grad_slot(ia) += matmul_nt(g, t.value(ib));
                  if (t.needs_grad(ib)) t.grad_slot(ib) += matmul_tn(t.value(ia), g);
                });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  return a.tape->push(a.value() + b.value(), {a.id, b.id},
                      [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad_slot(self);
                        accumulate(t, ia, g);
                        accumulate(t, ib, g);
                      });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  return a.tape->push(a.value() - b.value(), {a.id, b.id},
                      [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad_slot(self);
                        accumulate(t, ia, g);
                        if (t.needs_grad(ib)) t.grad_slot(ib) -= g;
                      });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  return a.tape->push(a.value() * s, {a.id}, [ia = a.id, s](Tape& t, std::size_t self) {
    t.grad_slot(ia) += t.grad_slot(self) * s;
  });
}

Var add_row(Var a, Var bias) {
  require_same_tape(a, bias);
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw ShapeError("add_row: " + av.shape_string() + " + " + bv.shape_string());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  }
  return a.tape->push(std::move(out), {a.id, bias.id},
                      [ia = a.id, ib = bias.id](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad_slot(self);
                        accumulate(t, ia, g);
                        if (t.needs_grad(ib)) {
                          Matrix& gb = t.grad_slot(ib);
                          for (std::size_t i = 0; i < g.rows(); ++i) {
                            for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
                          }
                        }
                      });
}

Var broadcast_rows(Var row, std::size_t n) {
  const Matrix& rv = row.value();
  if (rv.rows() != 1) throw ShapeError("broadcast_rows expects a 1 x d row");
  Matrix out(n, rv.cols());
  for (std::size_t i = 0; i < n; ++i) std::copy_n(rv.row(0).begin(), rv.cols(), out.row(i).begin());
  return row.tape->push(std::move(out), {row.id}, [ir = row.id](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_slot(self);
    Matrix& gr = t.grad_slot(ir);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
    }
  });
}

Var relu(Var a) { return leaky_relu(a, 0.0); }

Var leaky_relu(Var a, double slope) {
  Matrix out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : slope * v;
  return a.tape->push(std::move(out), {a.id}, [ia = a.id, slope](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_slot(self);
    const Matrix& x = t.value(ia);
    Matrix& gi = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += x[i] > 0.0 ? g[i] : slope * g[i];
  });
}

Var mul_scalar(Var a, Var s) {
  require_same_tape(a, s);
  if (s.value().size() != 1) throw ShapeError("mul_scalar expects a 1 x 1 scalar");
  return a.tape->push(a.value() * s.scalar(), {a.id, s.id},
                      [ia = a.id, is = s.id](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad_slot(self);
                        const double sv = t.value(is)[0];
                        if (t.needs_grad(ia)) t.grad_slot(ia) += g * sv;
                        if (t.needs_grad(is)) {
                          const Matrix& x = t.value(ia);
                          double acc = 0.0;
                          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
                          t.grad_slot(is)[0] += acc;
                        }
                      });
}

Var transpose(Var a) {
  return a.tape->push(oepg::transpose(a.value()), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    t.grad_slot(ia) += oepg::transpose(t.grad_slot(self));
  });
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw ShapeError("concat_cols: " + av.shape_string() + " | " + bv.shape_string());
  }
  Matrix out(av.rows(), av.cols() + bv.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    std::copy_n(av.row(i).begin(), av.cols(), out.row(i).begin());
    std::copy_n(bv.row(i).begin(), bv.cols(), out.row(i).begin() + av.cols());
  }
  return a.tape->push(std::move(out), {a.id, b.id},
                      [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad_slot(self);
                        const std::size_t ca = t.value(ia).cols();
                        if (t.needs_grad(ia)) {
                          Matrix& ga = t.grad_slot(ia);
                          for (std::size_t i = 0; i < g.rows(); ++i) {
                            for (std::size_t j = 0; j < ca; ++j) ga(i, j) += g(i, j);
                          }
                        }
                        if (t.needs_grad(ib)) {
                          Matrix& gb = t.grad_slot(ib);
                          for (std::size_t i = 0; i < g.rows(); ++i) {
                            for (std::size_t j = 0; j < gb.cols(); ++j) gb(i, j) += g(i, ca + j);
                          }
                        }
                      });
}

Var concat_rows(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols() && av.rows() != 0 && bv.rows() != 0) {
    throw ShapeError("concat_rows: " + av.shape_string() + " / " + bv.shape_string());
  }
  const std::size_t cols = av.rows() != 0 ? av.cols() : bv.cols();
  std::vector<double> data(av.values());
  data.insert(data.end(), bv.values().begin(), bv.values().end());
  return a.tape->push(Matrix(av.rows() + bv.rows(), cols, std::move(data)), {a.id, b.id},
                      [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad_slot(self);
                        const std::size_t na = t.value(ia).size();
                        if (t.needs_grad(ia) && na > 0) {
                          Matrix& ga = t.grad_slot(ia);
                          for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                        }
                        if (t.needs_grad(ib) && t.value(ib).size() > 0) {
                          Matrix& gb = t.grad_slot(ib);
                          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
                        }
                      });
}

Var select_rows(Var a, std::span<const std::size_t> rows) {
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Matrix out = oepg::select_rows(a.value(), idx);
  return a.tape->push(std::move(out), {a.id},
                      [ia = a.id, idx = std::move(idx)](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad_slot(self);
                        Matrix& ga = t.grad_slot(ia);
                        for (std::size_t i = 0; i < idx.size(); ++i) {
                          auto src = g.row(i);
                          auto dst = ga.row(idx[i]);
                          for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                        }
                      });
}

Var mean_rows(Var a, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("mean over an empty row subset");
  const Matrix& av = a.value();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Matrix out(1, av.cols());
  for (std::size_t r : idx) {
    if (r >= av.rows()) throw ShapeError("mean_rows: index out of range");
    for (std::size_t j = 0; j < av.cols(); ++j) out[j] += av(r, j);
  }
  const double inv = 1.0 / static_cast<double>(idx.size());
  out *= inv;
  return a.tape->push(std::move(out), {a.id},
                      [ia = a.id, idx = std::move(idx), inv](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad_slot(self);
                        Matrix& ga = t.grad_slot(ia);
                        for (std::size_t r : idx) {
                          for (std::size_t j = 0; j < g.cols(); ++j) ga(r, j) += g[j] * inv;
                        }
                      });
}

Var row_sqnorm(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) out[i] = squared_norm(av.row(i));
  return a.tape->push(std::move(out), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_slot(self);
    const Matrix& x = t.value(ia);
    Matrix& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) += 2.0 * g[i] * x(i, j);
    }
  });
}

Var row_normalize(Var a, double eps) {
  const Matrix& av = a.value();
  Matrix out = av;
  std::vector<double> denom(av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    denom[i] = std::max(norm(av.row(i)), eps);
    for (auto& v : out.row(i)) v /= denom[i];
  }
  return a.tape->push(
      std::move(out), {a.id}, [ia = a.id, eps, denom = std::move(denom)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_slot(self);
        const Matrix& y = t.value(self);
        Matrix& ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < y.rows(); ++i) {
          const double n = denom[i];
          if (n > eps) {
            // d(x/|x|) = (I - y y^T) / |x|
            const double gy = oepg::dot(g.row(i), y.row(i));
            for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += (g(i, j) - gy * y(i, j)) / n;
          } else {
            for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += g(i, j) / n;
          }
        }
      });
}

Var row_scale(Var a, Var w) {
  require_same_tape(a, w);
  const Matrix& av = a.value();
  const Matrix& wv = w.value();
  if (wv.rows() != av.rows() || wv.cols() != 1) {
    throw ShapeError("row_scale: " + av.shape_string() + " by " + wv.shape_string());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (auto& v : out.row(i)) v *= wv[i];
  }
  return a.tape->push(std::move(out), {a.id, w.id},
                      [ia = a.id, iw = w.id](Tape& t, std::size_t self) {
                        const Matrix& g = t.grad_slot(self);
                        const Matrix& x = t.value(ia);
                        const Matrix& wv = t.value(iw);
                        if (t.needs_grad(ia)) {
                          Matrix& ga = t.grad_slot(ia);
                          for (std::size_t i = 0; i < x.rows(); ++i) {
                            for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) += g(i, j) * wv[i];
                          }
                        }
                        if (t.needs_grad(iw)) {
                          Matrix& gw = t.grad_slot(iw);
                          for (std::size_t i = 0; i < x.rows(); ++i) gw[i] += oepg::dot(g.row(i), x.row(i));
                        }
                      });
}

Var softmax(Var a) {
  const Matrix& av = a.value();
  if (av.cols() != 1) throw ShapeError("softmax expects an n x 1 column");
  Matrix out = av;
  const double mx = *std::max_element(out.data().begin(), out.data().end());
  double total = 0.0;
  for (auto& v : out.data()) {
    v = std::exp(v - mx);
    total += v;
  }
  out *= 1.0 / total;
  return a.tape->push(std::move(out), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_slot(self);
    const Matrix& y = t.value(self);
    const double gy = oepg::dot(g.data(), y.data());
    Matrix& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += y[i] * (g[i] - gy);
  });
}

Var softplus(Var a) {
  Matrix out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  return a.tape->push(std::move(out), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_slot(self);
    const Matrix& x = t.value(ia);
    Matrix& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] / (1.0 + std::exp(-x[i]));
  });
}

Var aggregate(Var h, const std::vector<std::vector<std::size_t>>& neighbors) {
  const Matrix& hv = h.value();
  if (neighbors.size() != hv.rows()) {
    throw ShapeError("aggregate: " + std::to_string(neighbors.size()) + " adjacency rows vs " +
                     hv.shape_string() + " features");
  }
  Matrix out = hv;
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    auto o = out.row(i);
    for (std::size_t j : neighbors[i]) {
      auto src = hv.row(j);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += src[c];
    }
  }
  return h.tape->push(std::move(out), {h.id}, [ih = h.id, nb = neighbors](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_slot(self);
    Matrix& gh = t.grad_slot(ih);
    gh += g;
    for (std::size_t i = 0; i < nb.size(); ++i) {
      auto dst = gh.row(i);
      for (std::size_t j : nb[i]) {
        auto src = g.row(j);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
      }
    }
  });
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->push(Matrix(1, 1, s), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    const double g = t.grad_slot(self)[0];
    for (auto& v : t.grad_slot(ia).data()) v += g;
  });
}

Var sum_scalars(std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("sum of an empty scalar list");
  std::vector<std::size_t> ids;
  double s = 0.0;
  for (const Var& x : xs) {
    require_same_tape(x, xs.front());
    if (x.value().size() != 1) throw ShapeError("sum_scalars expects 1 x 1 inputs");
    s += x.scalar();
    ids.push_back(x.id);
  }
  auto inputs = ids;
  return xs.front().tape->push(Matrix(1, 1, s), std::move(inputs),
                               [ids = std::move(ids)](Tape& t, std::size_t self) {
                                 const double g = t.grad_slot(self)[0];
                                 for (std::size_t id : ids) {
                                   if (t.needs_grad(id)) t.grad_slot(id)[0] += g;
                                 }
                               });
}

Var dot(Var a, Var b) {
  require_same_tape(a, b);
  if (!a.value().same_shape(b.value())) throw ShapeError("dot: shape mismatch");
  const double d = oepg::dot(a.value().data(), b.value().data());
  return a.tape->push(Matrix(1, 1, d), {a.id, b.id},
                      [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
                        const double g = t.grad_slot(self)[0];
                        if (t.needs_grad(ia)) t.grad_slot(ia) += t.value(ib) * g;
                        if (t.needs_grad(ib)) t.grad_slot(ib) += t.value(ia) * g;
                      });
}

Var cosine(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("cosine: shape mismatch");
  const double na = norm(av.data());
  const double nb = norm(bv.data());
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine similarity of a zero-norm embedding");
  const double c = oepg::dot(av.data(), bv.data()) / (na * nb);
  return a.tape->push(Matrix(1, 1, c), {a.id, b.id},
                      [ia = a.id, ib = b.id, na, nb, c](Tape& t, std::size_t self) {
                        const double g = t.grad_slot(self)[0];
                        const Matrix& av = t.value(ia);
                        const Matrix& bv = t.value(ib);
                        // dc/da = b/(|a||b|) - c a/|a|^2
                        if (t.needs_grad(ia)) {
                          Matrix& ga = t.grad_slot(ia);
                          for (std::size_t i = 0; i < av.size(); ++i) {
                            ga[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
                          }
                        }
                        if (t.needs_grad(ib)) {
                          Matrix& gb = t.grad_slot(ib);
                          for (std::size_t i = 0; i < bv.size(); ++i) {
                            gb[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
                          }
                        }
                      });
}

Var log_sigmoid(Var x) {
  if (x.value().size() != 1) throw ShapeError("log_sigmoid expects a scalar");
  const double v = x.scalar();
  // log sigma(v) = -softplus(-v)
  const double out = v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
  return x.tape->push(Matrix(1, 1, out), {x.id}, [ix = x.id](Tape& t, std::size_t self) {
    const double g = t.grad_slot(self)[0];
    const double v = t.value(ix)[0];
    // d/dv log sigma(v) = 1 - sigma(v) = sigma(-v)
    const double s = v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
    t.grad_slot(ix)[0] += g * s;
  });
}

}  // namespace ad

}  // namespace oepg
