#pragma once

#include <algorithm>
#include <functional>
#include <utility>
#include <vector>

#include "svqa/tensor.hpp"

namespace svqa {

using NodeId = std::int32_t;

// Tape-based reverse-mode autodiff. Nodes are appended in execution order;
// each derived node keeps a forward closure (for replay after a source value
// changes) and a backward closure. Gradients are materialized only along the
// subgraph that is reachable from a registered leaf, so frozen parameters
// bound as constants cost nothing during the backward sweep.
class Tape {
 public:
  NodeId constant(Tensor v) { return push_source(std::move(v), /*leaf=*/false); }

  // A leaf is eligible for gradients; everything else is treated as frozen.
  NodeId leaf(Tensor v) { return push_source(std::move(v), /*leaf=*/true); }

  const Tensor& value(NodeId id) const { return node(id).value; }
  bool is_leaf(NodeId id) const { return node(id).is_leaf; }
  std::size_t size() const { return nodes_.size(); }

  // Overwrite a source value (same shape) and recompute every derived node.
  void set_source_value(NodeId id, Tensor v) {
    Node& n = nodes_.at(check(id));
    if (!n.parents.empty()) throw TensorError("tape: set_source_value on derived node");
    require_same_shape(n.value, v, "tape: set_source_value");
    n.value = std::move(v);
  }

  // Re-run every recorded primitive in order from current source values.
  void replay() {
    std::vector<const Tensor*> pv;
    for (Node& n : nodes_) {
      if (n.parents.empty()) continue;
      gather(n.parents, pv);
      n.value = n.forward(pv);
      require_finite(n.value, "tape: replay");
    }
  }

  // ---- primitives -------------------------------------------------------

  NodeId add(NodeId a, NodeId b) {
    Tensor v = add_raw(value(a), value(b));
    return derived(std::move(v), {a, b},
                   [](const Parents& p) { return add_raw(*p[0], *p[1]); },
                   [](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     for (int s = 0; s < 2; ++s)
                       if (pg[s])
                         for (std::size_t i = 0; i < g.data.size(); ++i)
                           pg[s]->data[i] += g.data[i];
                   });
  }

  // broadcast a 1-row tensor over every row of a
  NodeId add_row(NodeId a, NodeId row) {
    Tensor v = add_row_raw(value(a), value(row));
    return derived(std::move(v), {a, row},
                   [](const Parents& p) { return add_row_raw(*p[0], *p[1]); },
                   [](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     if (pg[0])
                       for (std::size_t i = 0; i < g.data.size(); ++i) pg[0]->data[i] += g.data[i];
                     if (pg[1]) {
                       const int m = g.shape[0], n = g.shape[1];
                       for (int i = 0; i < m; ++i) {
                         const real* grow = g.row_ptr(i);
                         for (int j = 0; j < n; ++j) pg[1]->data[static_cast<std::size_t>(j)] += grow[j];
                       }
                     }
                   });
  }

  NodeId scale(NodeId a, real c) {
    Tensor v = scale_raw(value(a), c);
    return derived(std::move(v), {a},
                   [c](const Parents& p) { return scale_raw(*p[0], c); },
                   [c](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     if (pg[0])
                       for (std::size_t i = 0; i < g.data.size(); ++i) pg[0]->data[i] += c * g.data[i];
                   });
  }

  NodeId mul(NodeId a, NodeId b) {
    Tensor v = mul_raw(value(a), value(b));
    return derived(std::move(v), {a, b},
                   [](const Parents& p) { return mul_raw(*p[0], *p[1]); },
                   [](const Tensor& g, const Parents& p, const Tensor&, Grads& pg) {
                     for (std::size_t i = 0; i < g.data.size(); ++i) {
                       if (pg[0]) pg[0]->data[i] += g.data[i] * p[1]->data[i];
                       if (pg[1]) pg[1]->data[i] += g.data[i] * p[0]->data[i];
                     }
                   });
  }

  NodeId matmul(NodeId a, NodeId b) {
    Tensor v = matmul_raw(value(a), value(b));
    return derived(std::move(v), {a, b},
                   [](const Parents& p) { return matmul_raw(*p[0], *p[1]); },
                   [](const Tensor& g, const Parents& p, const Tensor&, Grads& pg) {
                     const Tensor& av = *p[0];
                     const Tensor& bv = *p[1];
                     const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
                     if (pg[0]) {  // dA = g * B^T
                       for (int i = 0; i < m; ++i) {
                         const real* grow = g.row_ptr(i);
                         real* arow = pg[0]->row_ptr(i);
                         for (int q = 0; q < k; ++q) {
                           const real* brow = bv.row_ptr(q);
                           real acc = 0;
                           for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                           arow[q] += acc;
                         }
                       }
                     }
                     if (pg[1]) {  // dB = A^T * g
                       for (int i = 0; i < m; ++i) {
                         const real* arow = av.row_ptr(i);
                         const real* grow = g.row_ptr(i);
                         for (int q = 0; q < k; ++q) {
                           const real aq = arow[q];
                           if (aq == real(0)) continue;
                           real* brow = pg[1]->row_ptr(q);
                           for (int j = 0; j < n; ++j) brow[j] += aq * grow[j];
                         }
                       }
                     }
                   });
  }

  NodeId transpose(NodeId a) {
    Tensor v = transpose_raw(value(a));
    return derived(std::move(v), {a},
                   [](const Parents& p) { return transpose_raw(*p[0]); },
                   [](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     if (pg[0]) {
                       const int m = g.shape[0], n = g.shape[1];
                       for (int i = 0; i < m; ++i)
                         for (int j = 0; j < n; ++j) pg[0]->at(j, i) += g.at(i, j);
                     }
                   });
  }

  NodeId concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw TensorError("concat_rows: no parts");
    const int n = value(parts[0]).cols();
    int m = 0;
    for (NodeId p : parts) {
      if (value(p).cols() != n) throw TensorError("concat_rows: column mismatch");
      m += value(p).rows();
    }
    Tensor v = Tensor::zeros({m, n});
    int r = 0;
    for (NodeId p : parts) {
      const Tensor& pv = value(p);
      std::copy(pv.data.begin(), pv.data.end(), v.data.begin() + static_cast<std::ptrdiff_t>(r) * n);
      r += pv.rows();
    }
    return derived(std::move(v), parts,
                   [n](const Parents& p) {
                     int mm = 0;
                     for (const Tensor* t : p) mm += t->rows();
                     Tensor out = Tensor::zeros({mm, n});
                     int rr = 0;
                     for (const Tensor* t : p) {
                       std::copy(t->data.begin(), t->data.end(),
                                 out.data.begin() + static_cast<std::ptrdiff_t>(rr) * n);
                       rr += t->rows();
                     }
                     return out;
                   },
                   [n](const Tensor& g, const Parents& p, const Tensor&, Grads& pg) {
                     int rr = 0;
                     for (std::size_t s = 0; s < p.size(); ++s) {
                       const int rows = p[s]->rows();
                       if (pg[s])
                         for (int i = 0; i < rows; ++i) {
                           const real* grow = g.row_ptr(rr + i);
                           real* prow = pg[s]->row_ptr(i);
                           for (int j = 0; j < n; ++j) prow[j] += grow[j];
                         }
                       rr += rows;
                     }
                   });
  }

  NodeId slice_rows(NodeId a, int start, int len) {
    const Tensor& av = value(a);
    av.require_matrix();
    if (start < 0 || len < 0 || start + len > av.shape[0]) throw TensorError("slice_rows: range");
    const int n = av.shape[1];
    Tensor v = Tensor::zeros({len, n});
    std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(start) * n,
              av.data.begin() + static_cast<std::ptrdiff_t>(start + len) * n, v.data.begin());
    return derived(std::move(v), {a},
                   [start, len, n](const Parents& p) {
                     Tensor out = Tensor::zeros({len, n});
                     std::copy(p[0]->data.begin() + static_cast<std::ptrdiff_t>(start) * n,
                               p[0]->data.begin() + static_cast<std::ptrdiff_t>(start + len) * n,
                               out.data.begin());
                     return out;
                   },
                   [start, len, n](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     if (pg[0])
                       for (int i = 0; i < len; ++i) {
                         const real* grow = g.row_ptr(i);
                         real* prow = pg[0]->row_ptr(start + i);
                         for (int j = 0; j < n; ++j) prow[j] += grow[j];
                       }
                   });
  }

  NodeId slice_cols(NodeId a, int start, int len) {
    const Tensor& av = value(a);
    av.require_matrix();
    if (start < 0 || len < 0 || start + len > av.shape[1]) throw TensorError("slice_cols: range");
    const int m = av.shape[0];
    auto take = [start, len, m](const Tensor& src) {
      Tensor out = Tensor::zeros({m, len});
      for (int i = 0; i < m; ++i) {
        const real* srow = src.row_ptr(i);
        real* orow = out.row_ptr(i);
        for (int j = 0; j < len; ++j) orow[j] = srow[start + j];
      }
      return out;
    };
    return derived(take(av), {a},
                   [take](const Parents& p) { return take(*p[0]); },
                   [start, len, m](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     if (pg[0])
                       for (int i = 0; i < m; ++i) {
                         const real* grow = g.row_ptr(i);
                         real* prow = pg[0]->row_ptr(i);
                         for (int j = 0; j < len; ++j) prow[start + j] += grow[j];
                       }
                   });
  }

  NodeId concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw TensorError("concat_cols: no parts");
    const int m = value(parts[0]).rows();
    int n = 0;
    std::vector<int> widths;
    for (NodeId p : parts) {
      if (value(p).rows() != m) throw TensorError("concat_cols: row mismatch");
      widths.push_back(value(p).cols());
      n += widths.back();
    }
    auto assemble = [m, n](const Parents& p) {
      Tensor out = Tensor::zeros({m, n});
      int off = 0;
      for (const Tensor* t : p) {
        const int w = t->cols();
        for (int i = 0; i < m; ++i) {
          const real* srow = t->row_ptr(i);
          real* orow = out.row_ptr(i) + off;
          for (int j = 0; j < w; ++j) orow[j] = srow[j];
        }
        off += w;
      }
      return out;
    };
    std::vector<const Tensor*> pv;
    gather(parts, pv);
    return derived(assemble(pv), parts, assemble,
                   [m, widths](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     int off = 0;
                     for (std::size_t s = 0; s < widths.size(); ++s) {
                       const int w = widths[s];
                       if (pg[s])
                         for (int i = 0; i < m; ++i) {
                           const real* grow = g.row_ptr(i) + off;
                           real* prow = pg[s]->row_ptr(i);
                           for (int j = 0; j < w; ++j) prow[j] += grow[j];
                         }
                       off += w;
                     }
                   });
  }

  // Gather rows of an embedding table: out[i] = table[ids[i]].
  NodeId embed_rows(NodeId table, std::vector<int> ids) {
    const Tensor& tv = value(table);
    tv.require_matrix();
    for (int id : ids)
      if (id < 0 || id >= tv.shape[0]) throw TensorError("embed_rows: id out of range");
    const int n = tv.shape[1];
    auto gather_rows = [ids, n](const Parents& p) {
      Tensor out = Tensor::zeros({static_cast<int>(ids.size()), n});
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const real* srow = p[0]->row_ptr(ids[i]);
        real* orow = out.row_ptr(static_cast<int>(i));
        for (int j = 0; j < n; ++j) orow[j] = srow[j];
      }
      return out;
    };
    std::vector<const Tensor*> pv;
    gather({table}, pv);
    return derived(gather_rows(pv), {table}, gather_rows,
                   [ids, n](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     if (pg[0])
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         const real* grow = g.row_ptr(static_cast<int>(i));
                         real* prow = pg[0]->row_ptr(ids[i]);
                         for (int j = 0; j < n; ++j) prow[j] += grow[j];
                       }
                   });
  }

  NodeId softmax_rows(NodeId a) {
    Tensor v = softmax_rows_raw(value(a));
    return derived(std::move(v), {a},
                   [](const Parents& p) { return softmax_rows_raw(*p[0]); },
                   [](const Tensor& g, const Parents&, const Tensor& self, Grads& pg) {
                     if (!pg[0]) return;
                     const int m = self.shape[0], n = self.shape[1];
                     for (int i = 0; i < m; ++i) {
                       const real* s = self.row_ptr(i);
                       const real* grow = g.row_ptr(i);
                       real dot = 0;
                       for (int j = 0; j < n; ++j) dot += grow[j] * s[j];
                       real* prow = pg[0]->row_ptr(i);
                       for (int j = 0; j < n; ++j) prow[j] += s[j] * (grow[j] - dot);
                     }
                   });
  }

  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias) {
    Tensor v = layer_norm_raw(value(x), value(gain), value(bias));
    return derived(
        std::move(v), {x, gain, bias},
        [](const Parents& p) { return layer_norm_raw(*p[0], *p[1], *p[2]); },
        [](const Tensor& g, const Parents& p, const Tensor&, Grads& pg) {
          const Tensor& xv = *p[0];
          const Tensor& gv = *p[1];
          const int m = xv.shape[0], n = xv.shape[1];
          std::vector<real> xhat(static_cast<std::size_t>(n));
          for (int i = 0; i < m; ++i) {
            const real* row = xv.row_ptr(i);
            real mean = 0;
            for (int j = 0; j < n; ++j) mean += row[j];
            mean /= n;
            real var = 0;
            for (int j = 0; j < n; ++j) {
              const real d = row[j] - mean;
              var += d * d;
            }
            var /= n;
            const real inv = real(1) / std::sqrt(var + kLayerNormEps);
            for (int j = 0; j < n; ++j) xhat[static_cast<std::size_t>(j)] = (row[j] - mean) * inv;
            const real* grow = g.row_ptr(i);
            if (pg[2])
              for (int j = 0; j < n; ++j) pg[2]->data[static_cast<std::size_t>(j)] += grow[j];
            if (pg[1])
              for (int j = 0; j < n; ++j)
                pg[1]->data[static_cast<std::size_t>(j)] += grow[j] * xhat[static_cast<std::size_t>(j)];
            if (pg[0]) {
              real mean_gy = 0, mean_gyx = 0;
              for (int j = 0; j < n; ++j) {
                const real gy = grow[j] * gv.data[static_cast<std::size_t>(j)];
                mean_gy += gy;
                mean_gyx += gy * xhat[static_cast<std::size_t>(j)];
              }
              mean_gy /= n;
              mean_gyx /= n;
              real* prow = pg[0]->row_ptr(i);
              for (int j = 0; j < n; ++j) {
                const real gy = grow[j] * gv.data[static_cast<std::size_t>(j)];
                prow[j] += inv * (gy - mean_gy - xhat[static_cast<std::size_t>(j)] * mean_gyx);
              }
            }
          }
        });
  }

  NodeId gelu(NodeId a) {
    Tensor v = gelu_raw(value(a));
    return derived(std::move(v), {a},
                   [](const Parents& p) { return gelu_raw(*p[0]); },
                   [](const Tensor& g, const Parents& p, const Tensor&, Grads& pg) {
                     if (pg[0])
                       for (std::size_t i = 0; i < g.data.size(); ++i)
                         pg[0]->data[i] += g.data[i] * gelu_grad_scalar(p[0]->data[i]);
                   });
  }

  NodeId sum(NodeId a) {
    const Tensor& av = value(a);
    real total = 0;
    for (real v : av.data) total += v;
    return derived(Tensor::scalar(total), {a},
                   [](const Parents& p) {
                     real t = 0;
                     for (real v : p[0]->data) t += v;
                     return Tensor::scalar(t);
                   },
                   [](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     if (pg[0])
                       for (real& v : pg[0]->data) v += g.data[0];
                   });
  }

  NodeId mean_rows(NodeId a) {
    const Tensor& av = value(a);
    av.require_matrix();
    const int m = av.shape[0], n = av.shape[1];
    if (m == 0) throw TensorError("mean_rows: empty");
    auto reduce = [m, n](const Parents& p) {
      Tensor out = Tensor::zeros({1, n});
      for (int i = 0; i < m; ++i) {
        const real* row = p[0]->row_ptr(i);
        for (int j = 0; j < n; ++j) out.data[static_cast<std::size_t>(j)] += row[j];
      }
      for (real& v : out.data) v /= m;
      return out;
    };
    std::vector<const Tensor*> pv;
    gather({a}, pv);
    return derived(reduce(pv), {a}, reduce,
                   [m, n](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     if (pg[0])
                       for (int i = 0; i < m; ++i) {
                         real* prow = pg[0]->row_ptr(i);
                         for (int j = 0; j < n; ++j) prow[j] += g.data[static_cast<std::size_t>(j)] / m;
                       }
                   });
  }

  // Teacher-forced language-modeling loss; mask selects the answer positions.
  NodeId cross_entropy(NodeId logits, std::vector<int> targets, std::vector<bool> mask) {
    const Tensor& lv = value(logits);
    const real loss = cross_entropy_raw(lv, targets, mask);
    auto fwd = [targets, mask](const Parents& p) {
      return Tensor::scalar(cross_entropy_raw(*p[0], targets, mask));
    };
    auto bwd = [targets, mask](const Tensor& g, const Parents& p, const Tensor&, Grads& pg) {
      if (!pg[0]) return;
      const Tensor& logits_v = *p[0];
      const int t = logits_v.shape[0], vcount = logits_v.shape[1];
      int count = 0;
      for (int i = 0; i < t; ++i)
        if (mask[static_cast<std::size_t>(i)]) ++count;
      const real scale = g.data[0] / count;
      for (int i = 0; i < t; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const real* row = logits_v.row_ptr(i);
        real mx = row[0];
        for (int j = 1; j < vcount; ++j) mx = std::max(mx, row[j]);
        real sum = 0;
        for (int j = 0; j < vcount; ++j) sum += std::exp(row[j] - mx);
        real* prow = pg[0]->row_ptr(i);
        for (int j = 0; j < vcount; ++j) prow[j] += scale * std::exp(row[j] - mx) / sum;
        prow[targets[static_cast<std::size_t>(i)]] -= scale;
      }
    };
    return derived(Tensor::scalar(loss), {logits}, fwd, bwd);
  }

  // Stable binary cross-entropy on a single logit.
  NodeId bce_with_logit(NodeId z, real target) {
    if (target < 0 || target > 1) throw TensorError("bce: target outside [0,1]");
    auto fwd = [target](const Parents& p) {
      const real zv = p[0]->scalar_value();
      const real loss = std::max(zv, real(0)) - zv * target + std::log1p(std::exp(-std::abs(zv)));
      return Tensor::scalar(loss);
    };
    std::vector<const Tensor*> pv;
    gather({z}, pv);
    return derived(fwd(pv), {z}, fwd,
                   [target](const Tensor& g, const Parents& p, const Tensor&, Grads& pg) {
                     if (pg[0]) pg[0]->data[0] += g.data[0] * (sigmoid_scalar(p[0]->scalar_value()) - target);
                   });
  }

  // Unfold [h*w, c] feature maps into [oh*ow, k*k*c] patch rows (zero padding).
  NodeId im2col(NodeId x, int h, int w, int c, int k, int stride, int pad) {
    const Tensor& xv = value(x);
    if (xv.rows() != h * w || xv.cols() != c) throw TensorError("im2col: input shape");
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (w + 2 * pad - k) / stride + 1;
    if (oh <= 0 || ow <= 0) throw TensorError("im2col: empty output");
    auto unfold = [=](const Parents& p) {
      Tensor out = Tensor::zeros({oh * ow, k * k * c});
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          real* orow = out.row_ptr(oy * ow + ox);
          int col = 0;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride + ky - pad;
              const int ix = ox * stride + kx - pad;
              for (int ch = 0; ch < c; ++ch, ++col)
                if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                  orow[col] = p[0]->at(iy * w + ix, ch);
            }
        }
      return out;
    };
    std::vector<const Tensor*> pv;
    gather({x}, pv);
    return derived(unfold(pv), {x}, unfold,
                   [=](const Tensor& g, const Parents&, const Tensor&, Grads& pg) {
                     if (!pg[0]) return;
                     for (int oy = 0; oy < oh; ++oy)
                       for (int ox = 0; ox < ow; ++ox) {
                         const real* grow = g.row_ptr(oy * ow + ox);
                         int col = 0;
                         for (int ky = 0; ky < k; ++ky)
                           for (int kx = 0; kx < k; ++kx) {
                             const int iy = oy * stride + ky - pad;
                             const int ix = ox * stride + kx - pad;
                             for (int ch = 0; ch < c; ++ch, ++col)
                               if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                 pg[0]->at(iy * w + ix, ch) += grow[col];
                           }
                       }
                   });
  }

  // ---- gradients --------------------------------------------------------

  class Gradients {
   public:
    Gradients(const Tape* tape, std::vector<Tensor> by_node)
        : tape_(tape), by_node_(std::move(by_node)) {}

    // Gradient of the swept loss w.r.t. a registered leaf. Unreached leaves
    // get a zero tensor of the leaf's shape.
    Tensor wrt(NodeId leaf) const {
      if (!tape_->is_leaf(leaf)) throw TensorError("gradients: unknown leaf id");
      const Tensor& g = by_node_[static_cast<std::size_t>(leaf)];
      if (g.empty() && tape_->value(leaf).numel() > 0)
        return Tensor::zeros(tape_->value(leaf).shape);
      return g;
    }

   private:
    const Tape* tape_;
    std::vector<Tensor> by_node_;
  };

  // Reverse sweep from a scalar loss node. Only leaf-reachable nodes get
  // gradient buffers.
  Gradients backward(NodeId loss) const {
    const Node& ln = node(loss);
    if (!ln.value.is_scalar()) throw TensorError("backward: loss must be scalar");
    std::vector<Tensor> grads(nodes_.size());
    if (!ln.requires_grad) return Gradients(this, std::move(grads));
    grads[static_cast<std::size_t>(loss)] = Tensor::scalar(real(1));
    std::vector<const Tensor*> pv;
    std::vector<Tensor*> pg;
    for (NodeId id = loss; id >= 0; --id) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      Tensor& g = grads[static_cast<std::size_t>(id)];
      if (g.empty() || n.parents.empty() || !n.requires_grad) continue;
      gather(n.parents, pv);
      pg.clear();
      for (NodeId p : n.parents) {
        const Node& pn = nodes_[static_cast<std::size_t>(p)];
        if (!pn.requires_grad) {
          pg.push_back(nullptr);
          continue;
        }
        Tensor& slot = grads[static_cast<std::size_t>(p)];
        if (slot.empty() && pn.value.numel() > 0) slot = Tensor::zeros(pn.value.shape);
        pg.push_back(&slot);
      }
      n.backward(g, pv, n.value, pg);
    }
    return Gradients(this, std::move(grads));
  }

 private:
  using Parents = std::vector<const Tensor*>;
  using Grads = std::vector<Tensor*>;

  struct Node {
    Tensor value;
    std::vector<NodeId> parents;
    bool is_leaf = false;
    bool requires_grad = false;
    std::function<Tensor(const Parents&)> forward;
    std::function<void(const Tensor&, const Parents&, const Tensor&, Grads&)> backward;
  };

  std::size_t check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw TensorError("tape: bad node id");
    return static_cast<std::size_t>(id);
  }

  const Node& node(NodeId id) const { return nodes_[check(id)]; }

  void gather(const std::vector<NodeId>& ids, Parents& out) const {
    out.clear();
    for (NodeId id : ids) out.push_back(&node(id).value);
  }

  NodeId push_source(Tensor v, bool is_leaf) {
    require_finite(v, "tape: source");
    Node n;
    n.value = std::move(v);
    n.is_leaf = is_leaf;
    n.requires_grad = is_leaf;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  template <typename Fwd, typename Bwd>
  NodeId derived(Tensor v, std::vector<NodeId> parents, Fwd fwd, Bwd bwd) {
    require_finite(v, "tape: primitive");
    Node n;
    n.value = std::move(v);
    n.parents = std::move(parents);
    for (NodeId p : n.parents)
      if (node(p).requires_grad) n.requires_grad = true;
    n.forward = std::move(fwd);
    n.backward = std::move(bwd);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

// Spec surface: exact reverse-mode gradient of a scalar loss w.r.t. one leaf.
inline Tensor grad_wrt_leaf(const Tape& tape, NodeId loss, NodeId leaf) {
  return tape.backward(loss).wrt(leaf);
}

}  // namespace svqa
