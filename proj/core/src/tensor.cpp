#include "mbs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace mbs {

namespace {

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) {
        T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(x);
    return e / (T(1) + e);
}

// Valid output range [j0, j1) for source index j*stride + off in [0, limit).
inline void conv_range(int off, int stride, int limit, int out_limit, int& j0, int& j1) {
    j0 = 0;
    if (off < 0) j0 = (-off + stride - 1) / stride;
    j1 = out_limit;
    if (off < limit) {
        int hi = (limit - 1 - off) / stride + 1;
        j1 = std::min(j1, hi);
    } else {
        j1 = j0;
    }
}

struct Dims4 {
    int b, c, h, w;
    bool batched;
};

template <typename T>
Dims4 as4(const Tensor<T>& t, const char* who) {
    require(t.rank() == 3 || t.rank() == 4,
            msg(who, ": expected rank 3 or 4 input, got shape ", shape_str(t.shape())));
    if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
    return {1, t.dim(0), t.dim(1), t.dim(2), false};
}

}  // namespace

template <typename T>
void Tensor<T>::backward() const {
    auto* root = node();
    require(root->numel() == 1, msg("backward: root must be scalar, got ", shape_str(root->shape)));
    if (!root->requires_grad) return;

    std::vector<detail::Node<T>*> order;
    std::unordered_set<detail::Node<T>*> visited;
    struct Frame {
        detail::Node<T>* n;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            detail::Node<T>* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }
    for (auto* n : order) n->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

// ---- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(),
            msg("add: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
    std::vector<T> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op<T>(a.shape(), std::move(out), {a, b},
                      [an, bn](detail::Node<T>& self) {
                          if (an->requires_grad) {
                              an->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
                          }
                          if (bn->requires_grad) {
                              bn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
                          }
                      },
                      "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(),
            msg("sub: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
    std::vector<T> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op<T>(a.shape(), std::move(out), {a, b},
                      [an, bn](detail::Node<T>& self) {
                          if (an->requires_grad) {
                              an->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
                          }
                          if (bn->requires_grad) {
                              bn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
                          }
                      },
                      "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(),
            msg("mul: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
    std::vector<T> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op<T>(a.shape(), std::move(out), {a, b},
                      [an, bn](detail::Node<T>& self) {
                          if (an->requires_grad) {
                              an->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  an->grad[i] += self.grad[i] * bn->val[i];
                          }
                          if (bn->requires_grad) {
                              bn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  bn->grad[i] += self.grad[i] * an->val[i];
                          }
                      },
                      "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.size());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
    auto an = a.node_ptr();
    return make_op<T>(a.shape(), std::move(out), {a},
                      [an, c](detail::Node<T>& self) {
                          if (!an->requires_grad) return;
                          an->ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += c * self.grad[i];
                      },
                      "scale");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
    auto an = a.node_ptr();
    return make_op<T>(a.shape(), std::move(out), {a},
                      [an](detail::Node<T>& self) {
                          if (!an->requires_grad) return;
                          an->ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                              if (an->val[i] > T(0)) an->grad[i] += self.grad[i];
                      },
                      "relu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    std::vector<T> out(a.size());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(av[i]);
    auto an = a.node_ptr();
    return make_op<T>(a.shape(), std::move(out), {a},
                      [an](detail::Node<T>& self) {
                          if (!an->requires_grad) return;
                          an->ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                              T y = self.val[i];
                              an->grad[i] += self.grad[i] * y * (T(1) - y);
                          }
                      },
                      "sigmoid");
}

template <typename T>
Tensor<T> activation(const Tensor<T>& a, Act kind) {
    return kind == Act::relu ? relu(a) : sigmoid(a);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    require(shape_numel(shape) == a.size(),
            msg("reshape: cannot view ", shape_str(a.shape()), " as ", shape_str(shape)));
    std::vector<T> out(a.values().begin(), a.values().end());
    auto an = a.node_ptr();
    return make_op<T>(std::move(shape), std::move(out), {a},
                      [an](detail::Node<T>& self) {
                          if (!an->requires_grad) return;
                          an->ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
                      },
                      "reshape");
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis) {
    require(a.rank() == b.rank(), msg("concat: rank mismatch ", a.rank(), " vs ", b.rank()));
    require(axis >= 0 && axis < a.rank(), msg("concat: bad axis ", axis));
    for (int d = 0; d < a.rank(); ++d)
        if (d != axis)
            require(a.dim(d) == b.dim(d), msg("concat: axis ", d, " mismatch ", shape_str(a.shape()),
                                              " vs ", shape_str(b.shape())));
    Shape os = a.shape();
    os[static_cast<std::size_t>(axis)] += b.dim(axis);

    std::size_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(a.dim(d));
    std::size_t ablock = a.size() / outer;
    std::size_t bblock = b.size() / outer;

    std::vector<T> out(a.size() + b.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy(av.begin() + o * ablock, av.begin() + (o + 1) * ablock,
                  out.begin() + o * (ablock + bblock));
        std::copy(bv.begin() + o * bblock, bv.begin() + (o + 1) * bblock,
                  out.begin() + o * (ablock + bblock) + ablock);
    }
    auto an = a.node_ptr(), bn = b.node_ptr();
    return make_op<T>(std::move(os), std::move(out), {a, b},
                      [an, bn, outer, ablock, bblock](detail::Node<T>& self) {
                          if (an->requires_grad) {
                              an->ensure_grad();
                              for (std::size_t o = 0; o < outer; ++o)
                                  for (std::size_t i = 0; i < ablock; ++i)
                                      an->grad[o * ablock + i] += self.grad[o * (ablock + bblock) + i];
                          }
                          if (bn->requires_grad) {
                              bn->ensure_grad();
                              for (std::size_t o = 0; o < outer; ++o)
                                  for (std::size_t i = 0; i < bblock; ++i)
                                      bn->grad[o * bblock + i] +=
                                          self.grad[o * (ablock + bblock) + ablock + i];
                          }
                      },
                      "concat");
}

template <typename T>
Tensor<T> select_row(const Tensor<T>& a, int row) {
    require(a.rank() >= 2, msg("select_row: need rank >= 2, got ", shape_str(a.shape())));
    require(row >= 0 && row < a.dim(0), msg("select_row: row ", row, " out of range [0,", a.dim(0), ")"));
    Shape os(a.shape().begin() + 1, a.shape().end());
    std::size_t block = a.size() / static_cast<std::size_t>(a.dim(0));
    std::size_t off = block * static_cast<std::size_t>(row);
    std::vector<T> out(a.values().begin() + off, a.values().begin() + off + block);
    auto an = a.node_ptr();
    return make_op<T>(std::move(os), std::move(out), {a},
                      [an, off](detail::Node<T>& self) {
                          if (!an->requires_grad) return;
                          an->ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                              an->grad[off + i] += self.grad[i];
                      },
                      "select_row");
}

template <typename T>
Tensor<T> select_channel(const Tensor<T>& a, int channel) {
    require(a.rank() == 3, msg("select_channel: need C×H×W, got ", shape_str(a.shape())));
    return select_row(a, channel);
}

template <typename T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& rows) {
    require(!rows.empty(), "stack_rows: empty input");
    const Shape& rs = rows[0].shape();
    for (const auto& r : rows)
        require(r.shape() == rs, msg("stack_rows: shape mismatch ", shape_str(r.shape()), " vs ",
                                     shape_str(rs)));
    Shape os;
    os.push_back(static_cast<int>(rows.size()));
    os.insert(os.end(), rs.begin(), rs.end());
    std::size_t block = rows[0].size();
    std::vector<T> out(block * rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].values().begin(), rows[r].values().end(), out.begin() + r * block);
    std::vector<std::shared_ptr<detail::Node<T>>> nodes;
    nodes.reserve(rows.size());
    for (const auto& r : rows) nodes.push_back(r.node_ptr());
    return make_op<T>(std::move(os), std::move(out), rows,
                      [nodes, block](detail::Node<T>& self) {
                          for (std::size_t r = 0; r < nodes.size(); ++r) {
                              if (!nodes[r]->requires_grad) continue;
                              nodes[r]->ensure_grad();
                              for (std::size_t i = 0; i < block; ++i)
                                  nodes[r]->grad[i] += self.grad[r * block + i];
                          }
                      },
                      "stack_rows");
}

// ---- conv ------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int padding) {
    require(kernel.rank() == 4, msg("conv2d: kernel must be Cout×Cin×kh×kw, got ",
                                    shape_str(kernel.shape())));
    Dims4 d = as4(input, "conv2d");
    const int B = d.b, C = d.c, H = d.h, W = d.w;
    const int Co = kernel.dim(0), Ci = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    require(stride >= 1, "conv2d: stride must be >= 1");
    require(padding >= 0, "conv2d: padding must be >= 0");
    require(Ci == C, msg("conv2d: input channels ", C, " != kernel input channels ", Ci,
                         " (input ", shape_str(input.shape()), ", kernel ", shape_str(kernel.shape()), ")"));
    require(kh <= H + 2 * padding && kw <= W + 2 * padding,
            msg("conv2d: kernel ", kh, "x", kw, " exceeds padded input ", H + 2 * padding, "x",
                W + 2 * padding));
    const bool has_bias = bias.defined();
    if (has_bias)
        require(bias.rank() == 1 && bias.dim(0) == Co,
                msg("conv2d: bias shape ", shape_str(bias.shape()), " != [", Co, "]"));
    const int Ho = (H + 2 * padding - kh) / stride + 1;
    const int Wo = (W + 2 * padding - kw) / stride + 1;

    std::vector<T> out(static_cast<std::size_t>(B) * Co * Ho * Wo, T(0));
    const T* x = input.values().data();
    const T* K = kernel.values().data();
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
            T* oplane = out.data() + (static_cast<std::size_t>(b) * Co + co) * Ho * Wo;
            if (has_bias) {
                T bv = bias.values()[static_cast<std::size_t>(co)];
                std::fill(oplane, oplane + static_cast<std::size_t>(Ho) * Wo, bv);
            }
            for (int ci = 0; ci < C; ++ci) {
                const T* xplane = x + (static_cast<std::size_t>(b) * C + ci) * H * W;
                for (int u = 0; u < kh; ++u) {
                    int i0, i1;
                    conv_range(u - padding, stride, H, Ho, i0, i1);
                    for (int v = 0; v < kw; ++v) {
                        T wgt = K[((static_cast<std::size_t>(co) * Ci + ci) * kh + u) * kw + v];
                        int j0, j1;
                        conv_range(v - padding, stride, W, Wo, j0, j1);
                        for (int i = i0; i < i1; ++i) {
                            const T* xrow = xplane + (i * stride - padding + u) * W;
                            T* orow = oplane + static_cast<std::size_t>(i) * Wo;
                            for (int j = j0; j < j1; ++j)
                                orow[j] += wgt * xrow[j * stride + v - padding];
                        }
                    }
                }
            }
        }
    }

    Shape os = d.batched ? Shape{B, Co, Ho, Wo} : Shape{Co, Ho, Wo};
    auto in_n = input.node_ptr();
    auto k_n = kernel.node_ptr();
    auto b_n = has_bias ? bias.node_ptr() : nullptr;
    std::vector<Tensor<T>> parents = {input, kernel};
    if (has_bias) parents.push_back(bias);
    auto bwd = [in_n, k_n, b_n, B, C, H, W, Co, kh, kw, Ho, Wo, stride, padding](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const T* x = in_n->val.data();
        const T* K = k_n->val.data();
        if (b_n && b_n->requires_grad) {
            b_n->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int co = 0; co < Co; ++co) {
                    const T* gp = g + (static_cast<std::size_t>(b) * Co + co) * Ho * Wo;
                    T acc = T(0);
                    for (int i = 0; i < Ho * Wo; ++i) acc += gp[i];
                    b_n->grad[static_cast<std::size_t>(co)] += acc;
                }
        }
        if (k_n->requires_grad) {
            k_n->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int co = 0; co < Co; ++co) {
                    const T* gp = g + (static_cast<std::size_t>(b) * Co + co) * Ho * Wo;
                    for (int ci = 0; ci < C; ++ci) {
                        const T* xplane = x + (static_cast<std::size_t>(b) * C + ci) * H * W;
                        for (int u = 0; u < kh; ++u) {
                            int i0, i1;
                            conv_range(u - padding, stride, H, Ho, i0, i1);
                            for (int v = 0; v < kw; ++v) {
                                int j0, j1;
                                conv_range(v - padding, stride, W, Wo, j0, j1);
                                T acc = T(0);
                                for (int i = i0; i < i1; ++i) {
                                    const T* xrow = xplane + (i * stride - padding + u) * W;
                                    const T* grow = gp + static_cast<std::size_t>(i) * Wo;
                                    for (int j = j0; j < j1; ++j)
                                        acc += grow[j] * xrow[j * stride + v - padding];
                                }
                                k_n->grad[((static_cast<std::size_t>(co) * C + ci) * kh + u) * kw + v] += acc;
                            }
                        }
                    }
                }
        }
        if (in_n->requires_grad) {
            in_n->ensure_grad();
            T* dx = in_n->grad.data();
            for (int b = 0; b < B; ++b)
                for (int co = 0; co < Co; ++co) {
                    const T* gp = g + (static_cast<std::size_t>(b) * Co + co) * Ho * Wo;
                    for (int ci = 0; ci < C; ++ci) {
                        T* dxplane = dx + (static_cast<std::size_t>(b) * C + ci) * H * W;
                        for (int u = 0; u < kh; ++u) {
                            int i0, i1;
                            conv_range(u - padding, stride, H, Ho, i0, i1);
                            for (int v = 0; v < kw; ++v) {
                                T wgt = K[((static_cast<std::size_t>(co) * C + ci) * kh + u) * kw + v];
                                int j0, j1;
                                conv_range(v - padding, stride, W, Wo, j0, j1);
                                for (int i = i0; i < i1; ++i) {
                                    T* dxrow = dxplane + (i * stride - padding + u) * W;
                                    const T* grow = gp + static_cast<std::size_t>(i) * Wo;
                                    for (int j = j0; j < j1; ++j)
                                        dxrow[j * stride + v - padding] += wgt * grow[j];
                                }
                            }
                        }
                    }
                }
        }
    };
    return make_op<T>(std::move(os), std::move(out), std::move(parents), std::move(bwd), "conv2d");
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride) {
    require(kernel.rank() == 4, msg("conv_transpose2d: kernel must be Cin×Cout×kh×kw, got ",
                                    shape_str(kernel.shape())));
    Dims4 d = as4(input, "conv_transpose2d");
    const int B = d.b, C = d.c, H = d.h, W = d.w;
    const int Ci = kernel.dim(0), Co = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    require(stride >= 1, "conv_transpose2d: stride must be >= 1");
    require(Ci == C, msg("conv_transpose2d: input channels ", C, " != kernel input channels ", Ci));
    const int Ho = (H - 1) * stride + kh;
    const int Wo = (W - 1) * stride + kw;

    std::vector<T> out(static_cast<std::size_t>(B) * Co * Ho * Wo, T(0));
    const T* x = input.values().data();
    const T* K = kernel.values().data();
    for (int b = 0; b < B; ++b)
        for (int ci = 0; ci < C; ++ci) {
            const T* xplane = x + (static_cast<std::size_t>(b) * C + ci) * H * W;
            for (int co = 0; co < Co; ++co) {
                T* oplane = out.data() + (static_cast<std::size_t>(b) * Co + co) * Ho * Wo;
                for (int u = 0; u < kh; ++u)
                    for (int v = 0; v < kw; ++v) {
                        T wgt = K[((static_cast<std::size_t>(ci) * Co + co) * kh + u) * kw + v];
                        for (int i = 0; i < H; ++i) {
                            const T* xrow = xplane + static_cast<std::size_t>(i) * W;
                            T* orow = oplane + (static_cast<std::size_t>(i) * stride + u) * Wo + v;
                            for (int j = 0; j < W; ++j) orow[j * stride] += wgt * xrow[j];
                        }
                    }
            }
        }

    Shape os = d.batched ? Shape{B, Co, Ho, Wo} : Shape{Co, Ho, Wo};
    auto in_n = input.node_ptr();
    auto k_n = kernel.node_ptr();
    auto bwd = [in_n, k_n, B, C, H, W, Co, kh, kw, Ho, Wo, stride](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const T* x = in_n->val.data();
        const T* K = k_n->val.data();
        if (in_n->requires_grad) {
            in_n->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int ci = 0; ci < C; ++ci) {
                    T* dxplane = in_n->grad.data() + (static_cast<std::size_t>(b) * C + ci) * H * W;
                    for (int co = 0; co < Co; ++co) {
                        const T* gplane = g + (static_cast<std::size_t>(b) * Co + co) * Ho * Wo;
                        for (int u = 0; u < kh; ++u)
                            for (int v = 0; v < kw; ++v) {
                                T wgt = K[((static_cast<std::size_t>(ci) * Co + co) * kh + u) * kw + v];
                                for (int i = 0; i < H; ++i) {
                                    T* dxrow = dxplane + static_cast<std::size_t>(i) * W;
                                    const T* grow =
                                        gplane + (static_cast<std::size_t>(i) * stride + u) * Wo + v;
                                    for (int j = 0; j < W; ++j) dxrow[j] += wgt * grow[j * stride];
                                }
                            }
                    }
                }
        }
        if (k_n->requires_grad) {
            k_n->ensure_grad();
            for (int b = 0; b < B; ++b)
                for (int ci = 0; ci < C; ++ci) {
                    const T* xplane = x + (static_cast<std::size_t>(b) * C + ci) * H * W;
                    for (int co = 0; co < Co; ++co) {
                        const T* gplane = g + (static_cast<std::size_t>(b) * Co + co) * Ho * Wo;
                        for (int u = 0; u < kh; ++u)
                            for (int v = 0; v < kw; ++v) {
                                T acc = T(0);
                                for (int i = 0; i < H; ++i) {
                                    const T* xrow = xplane + static_cast<std::size_t>(i) * W;
                                    const T* grow =
                                        gplane + (static_cast<std::size_t>(i) * stride + u) * Wo + v;
                                    for (int j = 0; j < W; ++j) acc += xrow[j] * grow[j * stride];
                                }
                                k_n->grad[((static_cast<std::size_t>(ci) * Co + co) * kh + u) * kw + v] += acc;
                            }
                    }
                }
        }
    };
    return make_op<T>(std::move(os), std::move(out), {input, kernel}, std::move(bwd),
                      "conv_transpose2d");
}

// ---- batch norm -------------------------------------------------------------

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool train, T momentum,
                      T eps) {
    Dims4 d = as4(input, "batchnorm2d");
    const int B = d.b, C = d.c, H = d.h, W = d.w;
    require(gamma.rank() == 1 && gamma.dim(0) == C, msg("batchnorm2d: gamma shape ",
                                                        shape_str(gamma.shape()), " != [", C, "]"));
    require(beta.rank() == 1 && beta.dim(0) == C, "batchnorm2d: beta shape mismatch");
    require(running_mean.dim(0) == C && running_var.dim(0) == C,
            "batchnorm2d: running stat shape mismatch");
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t M = static_cast<std::size_t>(B) * plane;

    const T* x = input.values().data();
    std::vector<T> out(input.size());
    std::vector<T> mean_c(static_cast<std::size_t>(C)), inv_c(static_cast<std::size_t>(C));

    if (train) {
        require(M >= 2, msg("batchnorm2d: train mode needs B*H*W >= 2 per channel, got ", M));
        for (int c = 0; c < C; ++c) {
            T sum = T(0);
            for (int b = 0; b < B; ++b) {
                const T* p = x + (static_cast<std::size_t>(b) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) sum += p[i];
            }
            T m = sum / static_cast<T>(M);
            T vs = T(0);
            for (int b = 0; b < B; ++b) {
                const T* p = x + (static_cast<std::size_t>(b) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    T dvi = p[i] - m;
                    vs += dvi * dvi;
                }
            }
            T var = vs / static_cast<T>(M);
            mean_c[static_cast<std::size_t>(c)] = m;
            inv_c[static_cast<std::size_t>(c)] = T(1) / std::sqrt(var + eps);
            // unbiased variance feeds the running estimate
            T var_u = M > 1 ? vs / static_cast<T>(M - 1) : var;
            auto rm = running_mean.values_mut();
            auto rv = running_var.values_mut();
            rm[static_cast<std::size_t>(c)] =
                (T(1) - momentum) * rm[static_cast<std::size_t>(c)] + momentum * m;
            rv[static_cast<std::size_t>(c)] =
                (T(1) - momentum) * rv[static_cast<std::size_t>(c)] + momentum * var_u;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean_c[static_cast<std::size_t>(c)] = running_mean.values()[static_cast<std::size_t>(c)];
            inv_c[static_cast<std::size_t>(c)] =
                T(1) / std::sqrt(running_var.values()[static_cast<std::size_t>(c)] + eps);
        }
    }

    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* p = x + (static_cast<std::size_t>(b) * C + c) * plane;
            T* o = out.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            T m = mean_c[static_cast<std::size_t>(c)], inv = inv_c[static_cast<std::size_t>(c)];
            T gm = gamma.values()[static_cast<std::size_t>(c)], bt = beta.values()[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < plane; ++i) o[i] = gm * (p[i] - m) * inv + bt;
        }

    auto in_n = input.node_ptr();
    auto g_n = gamma.node_ptr();
    auto b_n = beta.node_ptr();
    auto bwd = [in_n, g_n, b_n, B, C, plane, M, mean_c, inv_c, train](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const T* x = in_n->val.data();
        for (int c = 0; c < C; ++c) {
            T m = mean_c[static_cast<std::size_t>(c)], inv = inv_c[static_cast<std::size_t>(c)];
            T gm = g_n->val[static_cast<std::size_t>(c)];
            T sum_g = T(0), sum_gx = T(0);
            for (int b = 0; b < B; ++b) {
                const T* gp = g + (static_cast<std::size_t>(b) * C + c) * plane;
                const T* xp = x + (static_cast<std::size_t>(b) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_g += gp[i];
                    sum_gx += gp[i] * (xp[i] - m) * inv;
                }
            }
            if (g_n->requires_grad) {
                g_n->ensure_grad();
                g_n->grad[static_cast<std::size_t>(c)] += sum_gx;
            }
            if (b_n->requires_grad) {
                b_n->ensure_grad();
                b_n->grad[static_cast<std::size_t>(c)] += sum_g;
            }
            if (in_n->requires_grad) {
                in_n->ensure_grad();
                T mg = sum_g / static_cast<T>(M);
                T mgx = sum_gx / static_cast<T>(M);
                for (int b = 0; b < B; ++b) {
                    T* dxp = in_n->grad.data() + (static_cast<std::size_t>(b) * C + c) * plane;
                    const T* gp = g + (static_cast<std::size_t>(b) * C + c) * plane;
                    const T* xp = x + (static_cast<std::size_t>(b) * C + c) * plane;
                    if (train) {
                        for (std::size_t i = 0; i < plane; ++i) {
                            T xh = (xp[i] - m) * inv;
                            dxp[i] += gm * inv * (gp[i] - mg - xh * mgx);
                        }
                    } else {
                        for (std::size_t i = 0; i < plane; ++i) dxp[i] += gm * inv * gp[i];
                    }
                }
            }
        }
    };
    return make_op<T>(input.shape(), std::move(out), {input, gamma, beta}, std::move(bwd),
                      "batchnorm2d");
}

// ---- dropout ----------------------------------------------------------------

template <typename T>
Tensor<T> dropout(const Tensor<T>& input, T rate, bool train, std::mt19937_64& rng) {
    require(rate >= T(0) && rate < T(1), msg("dropout: rate must be in [0,1), got ", rate));
    if (!train || rate == T(0)) return input;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto mask = std::make_shared<std::vector<std::uint8_t>>(input.size());
    const T keep_scale = T(1) / (T(1) - rate);
    std::vector<T> out(input.size());
    auto xv = input.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool keep = uni(rng) >= static_cast<double>(rate);
        (*mask)[i] = keep ? 1 : 0;
        out[i] = keep ? xv[i] * keep_scale : T(0);
    }
    auto in_n = input.node_ptr();
    return make_op<T>(input.shape(), std::move(out), {input},
                      [in_n, mask, keep_scale](detail::Node<T>& self) {
                          if (!in_n->requires_grad) return;
                          in_n->ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                              if ((*mask)[i]) in_n->grad[i] += self.grad[i] * keep_scale;
                      },
                      "dropout");
}

// ---- pooling ------------------------------------------------------------------

template <typename T>
Tensor<T> avg_pool_spatial(const Tensor<T>& input) {
    Dims4 d = as4(input, "avg_pool_spatial");
    const int B = d.b, C = d.c;
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    std::vector<T> out(static_cast<std::size_t>(B) * C);
    auto xv = input.values();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* p = xv.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            T acc = T(0);
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            out[static_cast<std::size_t>(b) * C + c] = acc / static_cast<T>(plane);
        }
    Shape os = d.batched ? Shape{B, C} : Shape{C};
    auto in_n = input.node_ptr();
    return make_op<T>(std::move(os), std::move(out), {input},
                      [in_n, B, C, plane](detail::Node<T>& self) {
                          if (!in_n->requires_grad) return;
                          in_n->ensure_grad();
                          for (int b = 0; b < B; ++b)
                              for (int c = 0; c < C; ++c) {
                                  T gv = self.grad[static_cast<std::size_t>(b) * C + c] /
                                         static_cast<T>(plane);
                                  T* dp = in_n->grad.data() +
                                          (static_cast<std::size_t>(b) * C + c) * plane;
                                  for (std::size_t i = 0; i < plane; ++i) dp[i] += gv;
                              }
                      },
                      "avg_pool_spatial");
}

template <typename T>
Tensor<T> max_pool2x2(const Tensor<T>& input) {
    Dims4 d = as4(input, "max_pool2x2");
    const int B = d.b, C = d.c, H = d.h, W = d.w;
    require(H % 2 == 0 && W % 2 == 0,
            msg("max_pool2x2: spatial dims must be even, got ", H, "x", W));
    const int Ho = H / 2, Wo = W / 2;
    std::vector<T> out(static_cast<std::size_t>(B) * C * Ho * Wo);
    auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
    auto xv = input.values();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const std::size_t ibase = (static_cast<std::size_t>(b) * C + c) * H * W;
            const std::size_t obase = (static_cast<std::size_t>(b) * C + c) * Ho * Wo;
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) {
                    std::size_t best = ibase + (2 * i) * W + 2 * j;
                    T bv = xv[best];
                    const std::size_t cand[3] = {ibase + (2 * i) * W + 2 * j + 1,
                                                 ibase + (2 * i + 1) * W + 2 * j,
                                                 ibase + (2 * i + 1) * W + 2 * j + 1};
                    for (std::size_t k : cand)
                        if (xv[k] > bv) {
                            bv = xv[k];
                            best = k;
                        }
                    out[obase + static_cast<std::size_t>(i) * Wo + j] = bv;
                    (*arg)[obase + static_cast<std::size_t>(i) * Wo + j] = best;
                }
        }
    Shape os = d.batched ? Shape{B, C, Ho, Wo} : Shape{C, Ho, Wo};
    auto in_n = input.node_ptr();
    return make_op<T>(std::move(os), std::move(out), {input},
                      [in_n, arg](detail::Node<T>& self) {
                          if (!in_n->requires_grad) return;
                          in_n->ensure_grad();
                          for (std::size_t i = 0; i < self.grad.size(); ++i)
                              in_n->grad[(*arg)[i]] += self.grad[i];
                      },
                      "max_pool2x2");
}

template <typename T>
Tensor<T> weighted_pool(const Tensor<T>& input, const Tensor<T>& weight, T eps, PoolDiag* diag) {
    require(input.rank() == 3, msg("weighted_pool: input must be C×H×W, got ",
                                   shape_str(input.shape())));
    require(weight.rank() == 2 && weight.dim(0) == input.dim(1) && weight.dim(1) == input.dim(2),
            msg("weighted_pool: weight ", shape_str(weight.shape()), " != spatial dims of ",
                shape_str(input.shape())));
    const int C = input.dim(0);
    const std::size_t plane = static_cast<std::size_t>(input.dim(1)) * input.dim(2);
    auto wv = weight.values();
    T wsum = T(0);
    for (std::size_t i = 0; i < plane; ++i) {
        require(wv[i] >= T(0), "weighted_pool: weight entries must be nonnegative");
        wsum += wv[i];
    }
    const bool fallback = (wsum == T(0));
    if (diag) diag->fallback = fallback;
    auto xv = input.values();
    std::vector<T> out(static_cast<std::size_t>(C));
    if (fallback) {
        for (int c = 0; c < C; ++c) {
            const T* p = xv.data() + static_cast<std::size_t>(c) * plane;
            T acc = T(0);
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            out[static_cast<std::size_t>(c)] = acc / static_cast<T>(plane);
        }
        auto in_n = input.node_ptr();
        return make_op<T>({C}, std::move(out), {input, weight},
                          [in_n, C, plane](detail::Node<T>& self) {
                              if (!in_n->requires_grad) return;
                              in_n->ensure_grad();
                              for (int c = 0; c < C; ++c) {
                                  T gv = self.grad[static_cast<std::size_t>(c)] / static_cast<T>(plane);
                                  T* dp = in_n->grad.data() + static_cast<std::size_t>(c) * plane;
                                  for (std::size_t i = 0; i < plane; ++i) dp[i] += gv;
                              }
                          },
                          "weighted_pool[mean]");
    }
    const T denom = wsum + eps;
    for (int c = 0; c < C; ++c) {
        const T* p = xv.data() + static_cast<std::size_t>(c) * plane;
        T acc = T(0);
        for (std::size_t i = 0; i < plane; ++i) acc += wv[i] * p[i];
        out[static_cast<std::size_t>(c)] = acc / denom;
    }
    auto in_n = input.node_ptr();
    auto w_n = weight.node_ptr();
    return make_op<T>({C}, std::move(out), {input, weight},
                      [in_n, w_n, C, plane, denom](detail::Node<T>& self) {
                          if (in_n->requires_grad) {
                              in_n->ensure_grad();
                              for (int c = 0; c < C; ++c) {
                                  T gv = self.grad[static_cast<std::size_t>(c)] / denom;
                                  T* dp = in_n->grad.data() + static_cast<std::size_t>(c) * plane;
                                  for (std::size_t i = 0; i < plane; ++i) dp[i] += gv * w_n->val[i];
                              }
                          }
                          if (w_n->requires_grad) {
                              w_n->ensure_grad();
                              for (std::size_t i = 0; i < plane; ++i) {
                                  T acc = T(0);
                                  for (int c = 0; c < C; ++c)
                                      acc += self.grad[static_cast<std::size_t>(c)] *
                                             (in_n->val[static_cast<std::size_t>(c) * plane + i] -
                                              self.val[static_cast<std::size_t>(c)]);
                                  w_n->grad[i] += acc / denom;
                              }
                          }
                      },
                      "weighted_pool");
}

template <typename T>
Tensor<T> pool(const Tensor<T>& input, PoolKind kind, const Tensor<T>* weight, PoolDiag* diag) {
    switch (kind) {
        case PoolKind::spatial_average:
            return avg_pool_spatial(input);
        case PoolKind::max2x2:
            return max_pool2x2(input);
        case PoolKind::weighted:
            require(weight != nullptr && weight->defined(), "pool: weighted kind requires a weight map");
            return weighted_pool(input, *weight, T(1e-8), diag);
    }
    fail("pool: unknown kind");
}

// ---- normalization / broadcasting --------------------------------------------

template <typename T>
Tensor<T> spatial_normalize(const Tensor<T>& input, T eps) {
    Dims4 d = as4(input, "spatial_normalize");
    const int B = d.b, C = d.c;
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    auto xv = input.values();
    std::vector<T> out(input.size());
    std::vector<T> denom(static_cast<std::size_t>(B) * C);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* p = xv.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            T s = T(0);
            for (std::size_t i = 0; i < plane; ++i) s += p[i];
            T dn = s + eps;
            denom[static_cast<std::size_t>(b) * C + c] = dn;
            T* o = out.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] / dn;
        }
    auto in_n = input.node_ptr();
    return make_op<T>(input.shape(), std::move(out), {input},
                      [in_n, B, C, plane, denom](detail::Node<T>& self) {
                          if (!in_n->requires_grad) return;
                          in_n->ensure_grad();
                          for (int b = 0; b < B; ++b)
                              for (int c = 0; c < C; ++c) {
                                  const std::size_t base = (static_cast<std::size_t>(b) * C + c) * plane;
                                  T dn = denom[static_cast<std::size_t>(b) * C + c];
                                  T dot = T(0);
                                  for (std::size_t i = 0; i < plane; ++i)
                                      dot += self.grad[base + i] * self.val[base + i];
                                  for (std::size_t i = 0; i < plane; ++i)
                                      in_n->grad[base + i] += (self.grad[base + i] - dot) / dn;
                              }
                      },
                      "spatial_normalize");
}

template <typename T>
Tensor<T> mul_broadcast_map(const Tensor<T>& x, const Tensor<T>& map) {
    Dims4 d = as4(x, "mul_broadcast_map");
    Dims4 dm = as4(map, "mul_broadcast_map");
    require(dm.c == 1 && dm.b == d.b && dm.h == d.h && dm.w == d.w,
            msg("mul_broadcast_map: map ", shape_str(map.shape()), " does not broadcast over ",
                shape_str(x.shape())));
    const int B = d.b, C = d.c;
    const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
    auto xv = x.values();
    auto mv = map.values();
    std::vector<T> out(x.size());
    for (int b = 0; b < B; ++b) {
        const T* mp = mv.data() + static_cast<std::size_t>(b) * plane;
        for (int c = 0; c < C; ++c) {
            const T* p = xv.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            T* o = out.data() + (static_cast<std::size_t>(b) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] * mp[i];
        }
    }
    auto x_n = x.node_ptr();
    auto m_n = map.node_ptr();
    return make_op<T>(x.shape(), std::move(out), {x, map},
                      [x_n, m_n, B, C, plane](detail::Node<T>& self) {
                          if (x_n->requires_grad) {
                              x_n->ensure_grad();
                              for (int b = 0; b < B; ++b)
                                  for (int c = 0; c < C; ++c) {
                                      const std::size_t base =
                                          (static_cast<std::size_t>(b) * C + c) * plane;
                                      const T* mp = m_n->val.data() + static_cast<std::size_t>(b) * plane;
                                      for (std::size_t i = 0; i < plane; ++i)
                                          x_n->grad[base + i] += self.grad[base + i] * mp[i];
                                  }
                          }
                          if (m_n->requires_grad) {
                              m_n->ensure_grad();
                              for (int b = 0; b < B; ++b)
                                  for (std::size_t i = 0; i < plane; ++i) {
                                      T acc = T(0);
                                      for (int c = 0; c < C; ++c) {
                                          const std::size_t base =
                                              (static_cast<std::size_t>(b) * C + c) * plane;
                                          acc += self.grad[base + i] * x_n->val[base + i];
                                      }
                                      m_n->grad[static_cast<std::size_t>(b) * plane + i] += acc;
                                  }
                          }
                      },
                      "mul_broadcast_map");
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
    Dims4 d = as4(x, "upsample_nearest2x");
    const int B = d.b, C = d.c, H = d.h, W = d.w;
    const int Ho = 2 * H, Wo = 2 * W;
    std::vector<T> out(static_cast<std::size_t>(B) * C * Ho * Wo);
    auto xv = x.values();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const T* p = xv.data() + (static_cast<std::size_t>(b) * C + c) * H * W;
            T* o = out.data() + (static_cast<std::size_t>(b) * C + c) * Ho * Wo;
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j)
                    o[static_cast<std::size_t>(i) * Wo + j] = p[(i / 2) * W + (j / 2)];
        }
    Shape os = d.batched ? Shape{B, C, Ho, Wo} : Shape{C, Ho, Wo};
    auto x_n = x.node_ptr();
    return make_op<T>(std::move(os), std::move(out), {x},
                      [x_n, B, C, H, W, Ho, Wo](detail::Node<T>& self) {
                          if (!x_n->requires_grad) return;
                          x_n->ensure_grad();
                          for (int b = 0; b < B; ++b)
                              for (int c = 0; c < C; ++c) {
                                  T* dp = x_n->grad.data() + (static_cast<std::size_t>(b) * C + c) * H * W;
                                  const T* gp =
                                      self.grad.data() + (static_cast<std::size_t>(b) * C + c) * Ho * Wo;
                                  for (int i = 0; i < Ho; ++i)
                                      for (int j = 0; j < Wo; ++j)
                                          dp[(i / 2) * W + (j / 2)] += gp[static_cast<std::size_t>(i) * Wo + j];
                              }
                      },
                      "upsample_nearest2x");
}

// ---- linear -------------------------------------------------------------------

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require(weight.rank() == 2, msg("linear: weight must be Out×In, got ", shape_str(weight.shape())));
    const int Out = weight.dim(0), In = weight.dim(1);
    const bool batched = x.rank() == 2;
    require(batched || x.rank() == 1, msg("linear: input must be rank 1 or 2, got ",
                                          shape_str(x.shape())));
    const int B = batched ? x.dim(0) : 1;
    const int D = batched ? x.dim(1) : x.dim(0);
    require(D == In, msg("linear: input features ", D, " != weight In ", In));
    const bool has_bias = bias.defined();
    if (has_bias) require(bias.rank() == 1 && bias.dim(0) == Out, "linear: bias shape mismatch");

    std::vector<T> out(static_cast<std::size_t>(B) * Out, T(0));
    auto xv = x.values();
    auto wv = weight.values();
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < Out; ++o) {
            T acc = has_bias ? bias.values()[static_cast<std::size_t>(o)] : T(0);
            const T* xr = xv.data() + static_cast<std::size_t>(b) * In;
            const T* wr = wv.data() + static_cast<std::size_t>(o) * In;
            for (int i = 0; i < In; ++i) acc += xr[i] * wr[i];
            out[static_cast<std::size_t>(b) * Out + o] = acc;
        }
    Shape os = batched ? Shape{B, Out} : Shape{Out};
    auto x_n = x.node_ptr();
    auto w_n = weight.node_ptr();
    auto b_n = has_bias ? bias.node_ptr() : nullptr;
    std::vector<Tensor<T>> parents = {x, weight};
    if (has_bias) parents.push_back(bias);
    return make_op<T>(std::move(os), std::move(out), std::move(parents),
                      [x_n, w_n, b_n, B, In, Out](detail::Node<T>& self) {
                          const T* g = self.grad.data();
                          if (x_n->requires_grad) {
                              x_n->ensure_grad();
                              for (int b = 0; b < B; ++b)
                                  for (int o = 0; o < Out; ++o) {
                                      T gv = g[static_cast<std::size_t>(b) * Out + o];
                                      const T* wr = w_n->val.data() + static_cast<std::size_t>(o) * In;
                                      T* dx = x_n->grad.data() + static_cast<std::size_t>(b) * In;
                                      for (int i = 0; i < In; ++i) dx[i] += gv * wr[i];
                                  }
                          }
                          if (w_n->requires_grad) {
                              w_n->ensure_grad();
                              for (int b = 0; b < B; ++b)
                                  for (int o = 0; o < Out; ++o) {
                                      T gv = g[static_cast<std::size_t>(b) * Out + o];
                                      const T* xr = x_n->val.data() + static_cast<std::size_t>(b) * In;
                                      T* dw = w_n->grad.data() + static_cast<std::size_t>(o) * In;
                                      for (int i = 0; i < In; ++i) dw[i] += gv * xr[i];
                                  }
                          }
                          if (b_n && b_n->requires_grad) {
                              b_n->ensure_grad();
                              for (int b = 0; b < B; ++b)
                                  for (int o = 0; o < Out; ++o)
                                      b_n->grad[static_cast<std::size_t>(o)] +=
                                          g[static_cast<std::size_t>(b) * Out + o];
                          }
                      },
                      "linear");
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.values()) acc += v;
    auto an = a.node_ptr();
    return make_op<T>({1}, {acc}, {a},
                      [an](detail::Node<T>& self) {
                          if (!an->requires_grad) return;
                          an->ensure_grad();
                          for (auto& g : an->grad) g += self.grad[0];
                      },
                      "sum_all");
}

// ---- losses --------------------------------------------------------------------

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target, Reduction red) {
    require(logits.shape() == target.shape(),
            msg("bce_with_logits: shape mismatch ", shape_str(logits.shape()), " vs ",
                shape_str(target.shape())));
    auto zv = logits.values();
    auto yv = target.values();
    const std::size_t n = logits.size();
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        T z = zv[i], y = yv[i];
        T term = std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
        acc += term;
    }
    const T norm = red == Reduction::mean ? T(1) / static_cast<T>(n) : T(1);
    acc *= norm;
    auto z_n = logits.node_ptr();
    auto y_n = target.node_ptr();
    return make_op<T>({1}, {acc}, {logits, target},
                      [z_n, y_n, n, norm](detail::Node<T>& self) {
                          T s = self.grad[0] * norm;
                          if (z_n->requires_grad) {
                              z_n->ensure_grad();
                              for (std::size_t i = 0; i < n; ++i)
                                  z_n->grad[i] += s * (stable_sigmoid(z_n->val[i]) - y_n->val[i]);
                          }
                          if (y_n->requires_grad) {
                              y_n->ensure_grad();
                              for (std::size_t i = 0; i < n; ++i) y_n->grad[i] -= s * z_n->val[i];
                          }
                      },
                      "bce_with_logits");
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    require(pred.shape() == target.shape(),
            msg("l1_loss: shape mismatch ", shape_str(pred.shape()), " vs ",
                shape_str(target.shape())));
    auto pv = pred.values();
    auto tv = target.values();
    const std::size_t n = pred.size();
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(pv[i] - tv[i]);
    acc /= static_cast<T>(n);
    auto p_n = pred.node_ptr();
    auto t_n = target.node_ptr();
    return make_op<T>({1}, {acc}, {pred, target},
                      [p_n, t_n, n](detail::Node<T>& self) {
                          T s = self.grad[0] / static_cast<T>(n);
                          for (std::size_t i = 0; i < n; ++i) {
                              T d = p_n->val[i] - t_n->val[i];
                              T sg = d > T(0) ? s : (d < T(0) ? -s : T(0));
                              if (p_n->requires_grad) {
                                  p_n->ensure_grad();
                                  p_n->grad[i] += sg;
                              }
                              if (t_n->requires_grad) {
                                  t_n->ensure_grad();
                                  t_n->grad[i] -= sg;
                              }
                          }
                      },
                      "l1_loss");
}

template <typename T>
Tensor<T> basis_combine(const Tensor<T>& bases, const Tensor<T>& coeffs) {
    require(bases.rank() == 3, msg("basis_combine: bases must be k×F×N, got ",
                                   shape_str(bases.shape())));
    require(coeffs.rank() == 1, msg("basis_combine: coefficients must be rank 1, got ",
                                    shape_str(coeffs.shape())));
    const int k = bases.dim(0);
    require(coeffs.dim(0) == k, msg("basis_combine: coefficient count ", coeffs.dim(0),
                                    " != basis count ", k));
    const std::size_t plane = static_cast<std::size_t>(bases.dim(1)) * bases.dim(2);
    auto pv = bases.values();
    auto mv = coeffs.values();
    std::vector<T> out(plane, T(0));
    for (int j = 0; j < k; ++j) {
        const T* p = pv.data() + static_cast<std::size_t>(j) * plane;
        T m = mv[static_cast<std::size_t>(j)];
        for (std::size_t i = 0; i < plane; ++i) out[i] += m * p[i];
    }
    auto p_n = bases.node_ptr();
    auto m_n = coeffs.node_ptr();
    return make_op<T>({bases.dim(1), bases.dim(2)}, std::move(out), {bases, coeffs},
                      [p_n, m_n, k, plane](detail::Node<T>& self) {
                          if (p_n->requires_grad) {
                              p_n->ensure_grad();
                              for (int j = 0; j < k; ++j) {
                                  T m = m_n->val[static_cast<std::size_t>(j)];
                                  T* dp = p_n->grad.data() + static_cast<std::size_t>(j) * plane;
                                  for (std::size_t i = 0; i < plane; ++i) dp[i] += m * self.grad[i];
                              }
                          }
                          if (m_n->requires_grad) {
                              m_n->ensure_grad();
                              for (int j = 0; j < k; ++j) {
                                  const T* p = p_n->val.data() + static_cast<std::size_t>(j) * plane;
                                  T acc = T(0);
                                  for (std::size_t i = 0; i < plane; ++i) acc += p[i] * self.grad[i];
                                  m_n->grad[static_cast<std::size_t>(j)] += acc;
                              }
                          }
                      },
                      "basis_combine");
}

// ---- gradient checking -----------------------------------------------------------

double grad_check(const std::function<Tensor<double>()>& make_loss, Tensor<double> theta,
                  double step) {
    return grad_check_many(make_loss, {theta}, step);
}

double grad_check_many(const std::function<Tensor<double>()>& make_loss,
                       const std::vector<Tensor<double>>& thetas, double step) {
    require(step > 0, "grad_check: step must be positive");
    for (auto t : thetas) t.zero_grad();
    Tensor<double> loss = make_loss();
    require(std::isfinite(loss.item()), "grad_check: non-finite loss");
    loss.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(thetas.size());
    for (const auto& t : thetas) {
        if (t.grad().size() == t.size())
            analytic.emplace_back(t.grad().begin(), t.grad().end());
        else
            analytic.emplace_back(t.size(), 0.0);  // parameter unused by this graph
    }

    double worst = 0.0;
    for (std::size_t ti = 0; ti < thetas.size(); ++ti) {
        Tensor<double> t = thetas[ti];
        auto vals = t.values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + step;
            double fp = make_loss().item();
            vals[i] = orig - step;
            double fm = make_loss().item();
            vals[i] = orig;
            require(std::isfinite(fp) && std::isfinite(fm), "grad_check: non-finite probe");
            double fd = (fp - fm) / (2.0 * step);
            double a = analytic[ti][i];
            double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

template <typename T>
void uniform_init(Tensor<T>& t, std::mt19937_64& rng, T bound) {
    std::uniform_real_distribution<double> uni(-static_cast<double>(bound),
                                               static_cast<double>(bound));
    for (auto& v : t.values_mut()) v = static_cast<T>(uni(rng));
}

// ---- explicit instantiations -------------------------------------------------------

#define MBS_INSTANTIATE_TENSOR(T)                                                                  \
    template class Tensor<T>;                                                                      \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                              \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                  \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                               \
    template Tensor<T> activation<T>(const Tensor<T>&, Act);                                       \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                        \
    template Tensor<T> concat<T>(const Tensor<T>&, const Tensor<T>&, int);                         \
    template Tensor<T> select_row<T>(const Tensor<T>&, int);                                       \
    template Tensor<T> select_channel<T>(const Tensor<T>&, int);                                   \
    template Tensor<T> stack_rows<T>(const std::vector<Tensor<T>>&);                               \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);  \
    template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, int);               \
    template Tensor<T> batchnorm2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                      Tensor<T>&, Tensor<T>&, bool, T, T);                         \
    template Tensor<T> dropout<T>(const Tensor<T>&, T, bool, std::mt19937_64&);                    \
    template Tensor<T> avg_pool_spatial<T>(const Tensor<T>&);                                      \
    template Tensor<T> max_pool2x2<T>(const Tensor<T>&);                                           \
    template Tensor<T> weighted_pool<T>(const Tensor<T>&, const Tensor<T>&, T, PoolDiag*);         \
    template Tensor<T> pool<T>(const Tensor<T>&, PoolKind, const Tensor<T>*, PoolDiag*);           \
    template Tensor<T> spatial_normalize<T>(const Tensor<T>&, T);                                  \
    template Tensor<T> mul_broadcast_map<T>(const Tensor<T>&, const Tensor<T>&);                   \
    template Tensor<T> upsample_nearest2x<T>(const Tensor<T>&);                                    \
    template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
    template Tensor<T> sum_all<T>(const Tensor<T>&);                                               \
    template Tensor<T> bce_with_logits<T>(const Tensor<T>&, const Tensor<T>&, Reduction);          \
    template Tensor<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> basis_combine<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template void uniform_init<T>(Tensor<T>&, std::mt19937_64&, T);

MBS_INSTANTIATE_TENSOR(float)
MBS_INSTANTIATE_TENSOR(double)

#undef MBS_INSTANTIATE_TENSOR

}  // namespace mbs
