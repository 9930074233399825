// SPDX-License-Identifier: Apache-2.0
#include "ddpt/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include "ddpt/error.hpp"

namespace ddpt::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(const Tensor& value, bool trainable) {
  if (!value.all_finite()) throw NumericError("non-finite value in leaf tensor " + shape_string(value.shape()));
  Node node;
  node.op = "leaf";
  node.ref = &value;
  node.requires_grad = trainable && grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value in constant tensor " + shape_string(value.shape()));
  Node node;
  node.op = "constant";
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
  Node node;
  node.op = op;
  node.owned = std::move(value);
  if (grad_enabled_) {
    for (const auto& in : inputs) {
      if (in.tape_ != this) throw ContractError(std::string(op) + ": input recorded on a different tape");
      node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const auto& node = nodes_[id];
  return node.ref ? *node.ref : node.owned;
}

Tensor* Tape::grad_buffer(Var v) {
  auto& node = nodes_[v.id_];
  if (!node.requires_grad) return nullptr;
  if (!node.has_grad) {
    node.grad = Tensor(value(v.id_).shape());
    node.has_grad = true;
  }
  return &node.grad;
}

const Tensor* Tape::grad(Var v) const {
  const auto& node = nodes_[v.id_];
  return node.has_grad ? &node.grad : nullptr;
}

Tensor Tape::grad_or_zero(Var v) const {
  if (const Tensor* g = grad(v)) return *g;
  return Tensor(value(v.id_).shape());
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss belongs to a different tape");
  if (value(loss.id_).size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_string(value(loss.id_).shape()));
  }
  for (auto& node : nodes_) node.has_grad = false;
  Tensor* seed = grad_buffer(loss);
  if (!seed) return;
  (*seed)[0] = Scalar(1);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    if (!node.grad.all_finite()) throw NumericError(std::string("non-finite gradient at ") + node.op);
    node.backward(*this, node.grad);
  }
}

std::vector<Var> bind(Tape& tape, const ParamSet& params) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.leaf(p.value, !p.frozen));
  return vars;
}

std::vector<Tensor> gradients(const Tape& tape, std::span<const Var> vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(tape.grad_or_zero(v));
  return out;
}

namespace {

void require_matrix_product(const Tensor& a, const Tensor& b, std::size_t a_inner, std::size_t b_inner,
                            const char* op) {
  if (a_inner != b_inner) {
    throw DimensionError(std::string(op) + ": inner extents disagree, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void axpy(Tensor& dst, const Tensor& src, Scalar alpha = Scalar(1)) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += alpha * s[i];
}

Tensor scalar_like(Scalar v) { return Tensor::scalar(v); }

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix_product(av, bv, av.cols(), bv.rows(), "matmul");
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  kernels::gemm(av, false, bv, false, out, false);
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_buffer(a)) kernels::gemm(g, false, b.value(), true, *ga, true);
    if (Tensor* gb = tape.grad_buffer(b)) kernels::gemm(a.value(), true, g, false, *gb, true);
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix_product(av, bv, av.cols(), bv.cols(), "matmul_nt");
  Tensor out = Tensor::matrix(av.rows(), bv.rows());
  kernels::gemm(av, false, bv, true, out, false);
  return a.tape().record("matmul_nt", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_buffer(a)) kernels::gemm(g, false, b.value(), false, *ga, true);
    if (Tensor* gb = tape.grad_buffer(b)) kernels::gemm(g, true, a.value(), false, *gb, true);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  axpy(out, b.value());
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_buffer(a)) axpy(*ga, g);
    if (Tensor* gb = tape.grad_buffer(b)) axpy(*gb, g);
  });
}

Var add_row(Var a, Var row) {
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.size() != av.cols()) {
    throw DimensionError("add_row: row " + shape_string(rv.shape()) + " does not broadcast over " +
                         shape_string(av.shape()));
  }
  Tensor out = av;
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += rv[c];
  }
  return a.tape().record("add_row", std::move(out), {a, row}, [a, row](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_buffer(a)) axpy(*ga, g);
    if (Tensor* gr = tape.grad_buffer(row)) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto src = g.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) (*gr)[c] += src[c];
      }
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  axpy(out, b.value(), Scalar(-1));
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_buffer(a)) axpy(*ga, g);
    if (Tensor* gb = tape.grad_buffer(b)) axpy(*gb, g, Scalar(-1));
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_buffer(a)) {
      const Tensor& bv = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = tape.grad_buffer(b)) {
      const Tensor& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, Scalar factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape().record("scale", std::move(out), {a}, [a, factor](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_buffer(a)) axpy(*ga, g, factor);
  });
}

namespace {

constexpr Scalar kGeluCoeff = Scalar(0.044715);
const Scalar kGeluScale = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);

}  // namespace

Var gelu(Var a) {
  Tensor out = a.value();
  for (auto& x : out.data()) {
    const Scalar u = kGeluScale * (x + kGeluCoeff * x * x * x);
    x = Scalar(0.5) * x * (Scalar(1) + std::tanh(u));
  }
  return a.tape().record("gelu", std::move(out), {a}, [a](Tape& tape, const Tensor& g) {
    Tensor* ga = tape.grad_buffer(a);
    if (!ga) return;
    const Tensor& av = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Scalar x = av[i];
      const Scalar th = std::tanh(kGeluScale * (x + kGeluCoeff * x * x * x));
      const Scalar du = kGeluScale * (Scalar(1) + Scalar(3) * kGeluCoeff * x * x);
      const Scalar d = Scalar(0.5) * (Scalar(1) + th) + Scalar(0.5) * x * (Scalar(1) - th * th) * du;
      (*ga)[i] += g[i] * d;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, Scalar eps) {
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows();
  const std::size_t cols = xv.cols();
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw DimensionError("layer_norm: gain/bias width does not match " + shape_string(xv.shape()));
  }
  auto normalized = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<Scalar>>(rows);
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    auto src = xv.row(r);
    Scalar mu = 0;
    for (auto v : src) mu += v;
    mu /= Scalar(cols);
    Scalar var = 0;
    for (auto v : src) var += (v - mu) * (v - mu);
    var /= Scalar(cols);
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    auto nh = normalized->row(r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      nh[c] = (src[c] - mu) * inv;
      dst[c] = nh[c] * gv[c] + bv[c];
    }
  }
  return x.tape().record(
      "layer_norm", std::move(out), {x, gain, bias}, [x, gain, bias, normalized, inv_std](Tape& tape, const Tensor& g) {
        const std::size_t rows = g.rows();
        const std::size_t cols = g.cols();
        if (Tensor* gg = tape.grad_buffer(gain)) {
          for (std::size_t r = 0; r < rows; ++r) {
            auto gr = g.row(r);
            auto nh = normalized->row(r);
            for (std::size_t c = 0; c < cols; ++c) (*gg)[c] += gr[c] * nh[c];
          }
        }
        if (Tensor* gb = tape.grad_buffer(bias)) {
          for (std::size_t r = 0; r < rows; ++r) {
            auto gr = g.row(r);
            for (std::size_t c = 0; c < cols; ++c) (*gb)[c] += gr[c];
          }
        }
        Tensor* gx = tape.grad_buffer(x);
        if (!gx) return;
        const Tensor& gv = gain.value();
        std::vector<Scalar> dxhat(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          auto gr = g.row(r);
          auto nh = normalized->row(r);
          Scalar mean_d = 0;
          Scalar mean_dx = 0;
          for (std::size_t c = 0; c < cols; ++c) {
            dxhat[c] = gr[c] * gv[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * nh[c];
          }
          mean_d /= Scalar(cols);
          mean_dx /= Scalar(cols);
          auto dst = gx->row(r);
          const Scalar inv = (*inv_std)[r];
          for (std::size_t c = 0; c < cols; ++c) dst[c] += inv * (dxhat[c] - mean_d - nh[c] * mean_dx);
        }
      });
}

Var softmax_rows(Var a) {
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const Scalar m = *std::max_element(row.begin(), row.end());
    Scalar z = 0;
    for (auto& v : row) {
      v = std::exp(v - m);
      z += v;
    }
    for (auto& v : row) v /= z;
  }
  auto probs = std::make_shared<Tensor>(out);
  return a.tape().record("softmax_rows", std::move(out), {a}, [a, probs](Tape& tape, const Tensor& g) {
    Tensor* ga = tape.grad_buffer(a);
    if (!ga) return;
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto p = probs->row(r);
      auto gr = g.row(r);
      Scalar dot = 0;
      for (std::size_t c = 0; c < p.size(); ++c) dot += gr[c] * p[c];
      auto dst = ga->row(r);
      for (std::size_t c = 0; c < p.size(); ++c) dst[c] += p[c] * (gr[c] - dot);
    }
  });
}

Var attention(Var q, Var k, Var v, std::size_t heads, std::span<const std::uint8_t> key_mask, bool causal) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const std::size_t lq = qv.rows();
  const std::size_t lk = kv.rows();
  const std::size_t width = qv.cols();
  if (kv.cols() != width || vv.cols() != width || vv.rows() != lk) {
    throw DimensionError("attention: q " + shape_string(qv.shape()) + ", k " + shape_string(kv.shape()) + ", v " +
                         shape_string(vv.shape()) + " are not congruent");
  }
  if (heads == 0 || width % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (!key_mask.empty() && key_mask.size() != lk) {
    throw DimensionError("attention: key mask length " + std::to_string(key_mask.size()) + " != " +
                         std::to_string(lk) + " keys");
  }
  const std::size_t dh = width / heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(Scalar(dh));
  auto visible = [key_mask, causal](std::size_t i, std::size_t j) {
    if (causal && j > i) return false;
    return key_mask.empty() || key_mask[j] != 0;
  };

  // probs[h][i * lk + j]
  auto probs = std::make_shared<std::vector<Scalar>>(heads * lq * lk, Scalar(0));
  Tensor out = Tensor::matrix(lq, width);
  std::vector<Scalar> scores(lk);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < lq; ++i) {
      auto qi = qv.row(i).subspan(off, dh);
      Scalar m = -std::numeric_limits<Scalar>::infinity();
      bool any = false;
      for (std::size_t j = 0; j < lk; ++j) {
        if (!visible(i, j)) continue;
        auto kj = kv.row(j).subspan(off, dh);
        Scalar s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        scores[j] = s * inv_sqrt;
        m = std::max(m, scores[j]);
        any = true;
      }
      if (!any) throw ContractError("attention: query " + std::to_string(i) + " has no visible key");
      Scalar* p = probs->data() + (h * lq + i) * lk;
      Scalar z = 0;
      for (std::size_t j = 0; j < lk; ++j) {
        if (!visible(i, j)) continue;
        p[j] = std::exp(scores[j] - m);
        z += p[j];
      }
      auto oi = out.row(i).subspan(off, dh);
      for (std::size_t j = 0; j < lk; ++j) {
        if (p[j] == Scalar(0)) continue;
        p[j] /= z;
        auto vj = vv.row(j).subspan(off, dh);
        for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
      }
    }
  }

  return q.tape().record(
      "attention", std::move(out), {q, k, v}, [q, k, v, heads, probs, inv_sqrt](Tape& tape, const Tensor& g) {
        const Tensor& qv = q.value();
        const Tensor& kv = k.value();
        const Tensor& vv = v.value();
        const std::size_t lq = qv.rows();
        const std::size_t lk = kv.rows();
        const std::size_t dh = qv.cols() / heads;
        Tensor* gq = tape.grad_buffer(q);
        Tensor* gk = tape.grad_buffer(k);
        Tensor* gv = tape.grad_buffer(v);
        std::vector<Scalar> dp(lk);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < lq; ++i) {
            const Scalar* p = probs->data() + (h * lq + i) * lk;
            auto gi = g.row(i).subspan(off, dh);
            Scalar dot = 0;
            for (std::size_t j = 0; j < lk; ++j) {
              if (p[j] == Scalar(0)) {
                dp[j] = 0;
                continue;
              }
              auto vj = vv.row(j).subspan(off, dh);
              Scalar s = 0;
              for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
              dp[j] = s;
              dot += s * p[j];
              if (gv) {
                auto dst = gv->row(j).subspan(off, dh);
                for (std::size_t c = 0; c < dh; ++c) dst[c] += p[j] * gi[c];
              }
            }
            if (!gq && !gk) continue;
            auto qi = qv.row(i).subspan(off, dh);
            for (std::size_t j = 0; j < lk; ++j) {
              if (p[j] == Scalar(0)) continue;
              const Scalar ds = p[j] * (dp[j] - dot) * inv_sqrt;
              auto kj = kv.row(j).subspan(off, dh);
              if (gq) {
                auto dst = gq->row(i).subspan(off, dh);
                for (std::size_t c = 0; c < dh; ++c) dst[c] += ds * kj[c];
              }
              if (gk) {
                auto dst = gk->row(j).subspan(off, dh);
                for (std::size_t c = 0; c < dh; ++c) dst[c] += ds * qi[c];
              }
            }
          }
        }
      });
}

Var concat_rows(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("concat_rows: widths differ, " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
  }
  std::vector<Scalar> data;
  data.reserve(av.size() + bv.size());
  data.insert(data.end(), av.data().begin(), av.data().end());
  data.insert(data.end(), bv.data().begin(), bv.data().end());
  Tensor out({av.rows() + bv.rows(), av.cols()}, std::move(data));
  const std::size_t split = av.size();
  return a.tape().record("concat_rows", std::move(out), {a, b}, [a, b, split](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_buffer(a)) {
      for (std::size_t i = 0; i < split; ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gb = tape.grad_buffer(b)) {
      for (std::size_t i = split; i < g.size(); ++i) (*gb)[i - split] += g[i];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (count == 0 || begin + count > av.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(av.shape()));
  }
  const std::size_t cols = av.cols();
  std::vector<Scalar> data(av.data().begin() + begin * cols, av.data().begin() + (begin + count) * cols);
  Tensor out({count, cols}, std::move(data));
  return a.tape().record("slice_rows", std::move(out), {a}, [a, begin](Tape& tape, const Tensor& g) {
    Tensor* ga = tape.grad_buffer(a);
    if (!ga) return;
    const std::size_t offset = begin * g.cols();
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[offset + i] += g[i];
  });
}

Var gather_rows(Var table, std::span<const std::int32_t> ids) {
  const Tensor& tv = table.value();
  if (ids.empty()) throw DimensionError("gather_rows: empty id list");
  const std::size_t cols = tv.cols();
  Tensor out = Tensor::matrix(ids.size(), cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw VocabularyError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                            std::to_string(tv.rows()) + " rows");
    }
    auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::int32_t> id_copy(ids.begin(), ids.end());
  return table.tape().record("gather_rows", std::move(out), {table},
                             [table, id_copy = std::move(id_copy)](Tape& tape, const Tensor& g) {
                               Tensor* gt = tape.grad_buffer(table);
                               if (!gt) return;
                               for (std::size_t i = 0; i < id_copy.size(); ++i) {
                                 auto dst = gt->row(static_cast<std::size_t>(id_copy[i]));
                                 auto src = g.row(i);
                                 for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                               }
                             });
}

Var sum(Var a) {
  Scalar total = 0;
  for (auto v : a.value().data()) total += v;
  return a.tape().record("sum", scalar_like(total), {a}, [a](Tape& tape, const Tensor& g) {
    Tensor* ga = tape.grad_buffer(a);
    if (!ga) return;
    for (auto& v : ga->data()) v += g[0];
  });
}

Var mean(Var a) {
  const Scalar n = Scalar(a.value().size());
  Scalar total = 0;
  for (auto v : a.value().data()) total += v;
  return a.tape().record("mean", scalar_like(total / n), {a}, [a, n](Tape& tape, const Tensor& g) {
    Tensor* ga = tape.grad_buffer(a);
    if (!ga) return;
    for (auto& v : ga->data()) v += g[0] / n;
  });
}

Var mean_squared_error(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mean_squared_error");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Scalar n = Scalar(av.size());
  Scalar total = 0;
  for (std::size_t i = 0; i < av.size(); ++i) total += (av[i] - bv[i]) * (av[i] - bv[i]);
  return a.tape().record("mean_squared_error", scalar_like(total / n), {a, b},
                         [a, b, n](Tape& tape, const Tensor& g) {
                           const Tensor& av = a.value();
                           const Tensor& bv = b.value();
                           const Scalar f = Scalar(2) * g[0] / n;
                           if (Tensor* ga = tape.grad_buffer(a)) {
                             for (std::size_t i = 0; i < av.size(); ++i) (*ga)[i] += f * (av[i] - bv[i]);
                           }
                           if (Tensor* gb = tape.grad_buffer(b)) {
                             for (std::size_t i = 0; i < av.size(); ++i) (*gb)[i] -= f * (av[i] - bv[i]);
                           }
                         });
}

Var softmax_cross_entropy(Var logits, std::span<const std::int32_t> targets) {
  const Tensor& lv = logits.value();
  const std::size_t rows = lv.rows();
  const std::size_t vocab = lv.cols();
  if (targets.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_string(lv.shape()));
  }
  auto probs = std::make_shared<Tensor>(lv.shape());
  Scalar total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw VocabularyError("softmax_cross_entropy: target " + std::to_string(targets[r]) + " outside vocabulary of " +
                            std::to_string(vocab));
    }
    auto row = lv.row(r);
    const Scalar m = *std::max_element(row.begin(), row.end());
    Scalar z = 0;
    auto p = probs->row(r);
    for (std::size_t c = 0; c < vocab; ++c) {
      p[c] = std::exp(row[c] - m);
      z += p[c];
    }
    for (auto& v : p) v /= z;
    total += (m + std::log(z)) - row[static_cast<std::size_t>(targets[r])];
  }
  std::vector<std::int32_t> target_copy(targets.begin(), targets.end());
  const Scalar n = Scalar(rows);
  return logits.tape().record(
      "softmax_cross_entropy", scalar_like(total / n), {logits},
      [logits, probs, target_copy = std::move(target_copy), n](Tape& tape, const Tensor& g) {
        Tensor* gl = tape.grad_buffer(logits);
        if (!gl) return;
        const Scalar f = g[0] / n;
        for (std::size_t r = 0; r < probs->rows(); ++r) {
          auto p = probs->row(r);
          auto dst = gl->row(r);
          for (std::size_t c = 0; c < p.size(); ++c) dst[c] += f * p[c];
          dst[static_cast<std::size_t>(target_copy[r])] -= f;
        }
      });
}

}  // namespace ddpt::ad
