#include "p3d2d/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "p3d2d/rng.hpp"

namespace p3d2d {

long shape_numel(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

namespace {

// Graph recording can be switched off per thread; predict-style evaluation
// then skips grad buffers and backward closures entirely.
thread_local bool g_grad_enabled = true;

template <typename T>
std::shared_ptr<TensorNode<T>> make_node(std::vector<int> shape, std::vector<T> value,
                                         std::vector<std::shared_ptr<TensorNode<T>>> parents) {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (g_grad_enabled) {
        for (const auto& p : parents)
            if (p->requires_grad) {
                n->requires_grad = true;
                break;
            }
    }
    if (n->requires_grad) {
        n->grad.assign(n->value.size(), T(0));
        n->parents = std::move(parents);
    }
    return n;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

template <typename T>
std::vector<T> pad_channels(const T* in, int C, int H, int W, int P) {
    int hp = H + 2 * P, wp = W + 2 * P;
    std::vector<T> out(static_cast<std::size_t>(C) * hp * wp, T(0));
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            std::memcpy(out.data() + (static_cast<std::size_t>(c) * hp + y + P) * wp + P,
                        in + (static_cast<std::size_t>(c) * H + y) * W,
                        sizeof(T) * static_cast<std::size_t>(W));
    return out;
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// --- Tensor basics ---------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<int> shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(std::vector<int> shape, T fill, bool requires_grad) {
    auto n = std::make_shared<TensorNode<T>>();
    long numel = shape_numel(shape);
    if (numel <= 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape));
    n->shape = std::move(shape);
    n->value.assign(static_cast<std::size_t>(numel), fill);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->value.size(), T(0));
    return Tensor<T>(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(std::vector<int> shape, std::vector<T> data, bool requires_grad) {
    long numel = shape_numel(shape);
    if (numel <= 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape));
    if (static_cast<long>(data.size()) != numel)
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    if (requires_grad) n->grad.assign(n->value.size(), T(0));
    return Tensor<T>(std::move(n));
}

template <typename T>
std::vector<T>& Tensor<T>::grad() {
    if (!node_->requires_grad) throw UsageError("tensor does not track gradients");
    return node_->grad;
}

template <typename T>
const std::vector<T>& Tensor<T>::grad() const {
    if (!node_->requires_grad) throw UsageError("tensor does not track gradients");
    return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
    if (node_->value.size() != 1)
        throw UsageError("item() on tensor of shape " + shape_str(node_->shape));
    return node_->value[0];
}

// --- elementwise / shape ops ----------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    std::vector<T> out(a.values().size());
    const T* pa = a.values().data();
    const T* pb = b.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
    auto node = make_node<T>(a.shape(), std::move(out), {a.node(), b.node()});
    if (node->requires_grad)
        node->backward_fn = [an = a.node(), bn = b.node()](TensorNode<T>& self) {
            if (an->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            if (bn->requires_grad)
                for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
        };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
    std::vector<T> out(x.values().size());
    const T* px = x.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] * c;
    auto node = make_node<T>(x.shape(), std::move(out), {x.node()});
    if (node->requires_grad)
        node->backward_fn = [xn = x.node(), c](TensorNode<T>& self) {
            if (!xn->requires_grad) return;
            for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * c;
        };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> shape) {
    if (shape_numel(shape) != x.size())
        throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                             ": element count differs");
    auto node = make_node<T>(std::move(shape), x.values(), {x.node()});
    if (node->requires_grad)
        node->backward_fn = [xn = x.node()](TensorNode<T>& self) {
            if (!xn->requires_grad) return;
            for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
        };
    return Tensor<T>(node);
}

// --- matmul ----------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw DimensionError("matmul expects rank-2 operands, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    int m = a.shape()[0], k = a.shape()[1];
    int k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<T> out(static_cast<std::size_t>(m) * n, T(0));
    const T* pa = a.values().data();
    const T* pb = b.values().data();
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
            T aval = pa[i * k + l];
            const T* brow = pb + static_cast<std::size_t>(l) * n;
            T* orow = out.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += aval * brow[j];
        }
    auto node = make_node<T>({m, n}, std::move(out), {a.node(), b.node()});
    if (node->requires_grad)
        node->backward_fn = [an = a.node(), bn = b.node(), m, k, n](TensorNode<T>& self) {
            const T* g = self.grad.data();
            if (an->requires_grad) {
                // da = g * b^T
                T* da = an->grad.data();
                const T* pb = bn->value.data();
                for (int i = 0; i < m; ++i)
                    for (int l = 0; l < k; ++l) {
                        T s = 0;
                        const T* grow = g + static_cast<std::size_t>(i) * n;
                        const T* brow = pb + static_cast<std::size_t>(l) * n;
                        for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                        da[i * k + l] += s;
                    }
            }
            if (bn->requires_grad) {
                // db = a^T * g
                T* db = bn->grad.data();
                const T* pa = an->value.data();
                for (int l = 0; l < k; ++l)
                    for (int i = 0; i < m; ++i) {
                        T aval = pa[i * k + l];
                        const T* grow = g + static_cast<std::size_t>(i) * n;
                        T* drow = db + static_cast<std::size_t>(l) * n;
                        for (int j = 0; j < n; ++j) drow[j] += aval * grow[j];
                    }
            }
        };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> linear(const Tensor<T>& weight, const Tensor<T>& v) {
    if (weight.shape().size() != 2 || v.shape().size() != 1)
        throw DimensionError("linear expects W[m x n], v[n], got " + shape_str(weight.shape()) +
                             " and " + shape_str(v.shape()));
    int n = v.shape()[0];
    int m = weight.shape()[0];
    return reshape(matmul(weight, reshape(v, {n, 1})), {m});
}

// --- conv2d ----------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                 Pad pad) {
    const auto& is = input.shape();
    const auto& ks = kernels.shape();
    if (is.size() != 3)
        throw DimensionError("conv2d input must be C x H x W, got " + shape_str(is));
    if (ks.size() != 4 || ks[2] != ks[3])
        throw DimensionError("conv2d kernels must be C_out x C_in x k x k, got " + shape_str(ks));
    int cin = is[0], h = is[1], w = is[2];
    int cout = ks[0], kk = ks[2];
    if (ks[1] != cin)
        throw DimensionError("conv2d channel mismatch: input " + shape_str(is) + ", kernels " +
                             shape_str(ks));
    if (kk % 2 == 0) throw DimensionError("conv2d kernel size must be odd, got " + shape_str(ks));
    if (bias.shape() != std::vector<int>{cout})
        throw DimensionError("conv2d bias must be [C_out], got " + shape_str(bias.shape()));
    int p = (pad == Pad::same) ? kk / 2 : 0;
    int ho = (pad == Pad::same) ? h : h - kk + 1;
    int wo = (pad == Pad::same) ? w : w - kk + 1;
    if (ho < 1 || wo < 1)
        throw DimensionError("conv2d valid output would be empty for input " + shape_str(is));

    int hp = h + 2 * p, wp = w + 2 * p;
    std::vector<T> padded = pad_channels(input.values().data(), cin, h, w, p);
    std::vector<T> out(static_cast<std::size_t>(cout) * ho * wo);
    const T* pk = kernels.values().data();
    const T* pbias = bias.values().data();
    for (int oc = 0; oc < cout; ++oc) {
        T* ochan = out.data() + static_cast<std::size_t>(oc) * ho * wo;
        std::fill(ochan, ochan + static_cast<std::size_t>(ho) * wo, pbias[oc]);
        for (int ic = 0; ic < cin; ++ic) {
            const T* ichan = padded.data() + static_cast<std::size_t>(ic) * hp * wp;
            const T* kchan = pk + (static_cast<std::size_t>(oc) * cin + ic) * kk * kk;
            for (int ky = 0; ky < kk; ++ky)
                for (int kx = 0; kx < kk; ++kx) {
                    T kv = kchan[ky * kk + kx];
                    for (int y = 0; y < ho; ++y) {
                        const T* src = ichan + (y + ky) * wp + kx;
                        T* dst = ochan + y * wo;
                        for (int x = 0; x < wo; ++x) dst[x] += kv * src[x];
                    }
                }
        }
    }

    auto node =
        make_node<T>({cout, ho, wo}, std::move(out), {input.node(), kernels.node(), bias.node()});
    if (node->requires_grad)
        node->backward_fn = [in = input.node(), kn = kernels.node(), bn = bias.node(), cin, h, w,
                             cout, kk, p, ho, wo](TensorNode<T>& self) {
            int hp = h + 2 * p, wp = w + 2 * p;
            const T* g = self.grad.data();
            if (bn->requires_grad) {
                for (int oc = 0; oc < cout; ++oc) {
                    T s = 0;
                    const T* gchan = g + static_cast<std::size_t>(oc) * ho * wo;
                    for (long i = 0; i < static_cast<long>(ho) * wo; ++i) s += gchan[i];
                    bn->grad[oc] += s;
                }
            }
            if (kn->requires_grad) {
                std::vector<T> padded = pad_channels(in->value.data(), cin, h, w, p);
                for (int oc = 0; oc < cout; ++oc) {
                    const T* gchan = g + static_cast<std::size_t>(oc) * ho * wo;
                    for (int ic = 0; ic < cin; ++ic) {
                        const T* ichan = padded.data() + static_cast<std::size_t>(ic) * hp * wp;
                        T* kg = kn->grad.data() + (static_cast<std::size_t>(oc) * cin + ic) * kk * kk;
                        for (int ky = 0; ky < kk; ++ky)
                            for (int kx = 0; kx < kk; ++kx) {
                                T s = 0;
                                for (int y = 0; y < ho; ++y) {
                                    const T* src = ichan + (y + ky) * wp + kx;
                                    const T* grow = gchan + y * wo;
                                    for (int x = 0; x < wo; ++x) s += grow[x] * src[x];
                                }
                                kg[ky * kk + kx] += s;
                            }
                    }
                }
            }
            if (in->requires_grad) {
                std::vector<T> dpad(static_cast<std::size_t>(cin) * hp * wp, T(0));
                const T* pk = kn->value.data();
                for (int oc = 0; oc < cout; ++oc) {
                    const T* gchan = g + static_cast<std::size_t>(oc) * ho * wo;
                    for (int ic = 0; ic < cin; ++ic) {
                        T* dchan = dpad.data() + static_cast<std::size_t>(ic) * hp * wp;
                        const T* kchan = pk + (static_cast<std::size_t>(oc) * cin + ic) * kk * kk;
                        for (int ky = 0; ky < kk; ++ky)
                            for (int kx = 0; kx < kk; ++kx) {
                                T kv = kchan[ky * kk + kx];
                                for (int y = 0; y < ho; ++y) {
                                    T* dst = dchan + (y + ky) * wp + kx;
                                    const T* grow = gchan + y * wo;
                                    for (int x = 0; x < wo; ++x) dst[x] += kv * grow[x];
                                }
                            }
                    }
                }
                for (int ic = 0; ic < cin; ++ic)
                    for (int y = 0; y < h; ++y) {
                        const T* src = dpad.data() + (static_cast<std::size_t>(ic) * hp + y + p) * wp + p;
                        T* dst = in->grad.data() + (static_cast<std::size_t>(ic) * h + y) * w;
                        for (int x = 0; x < w; ++x) dst[x] += src[x];
                    }
            }
        };
    return Tensor<T>(node);
}

// --- maxpool2d ---------------------------------------------------------------

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input) {
    const auto& is = input.shape();
    if (is.size() != 3) throw DimensionError("maxpool2d input must be C x H x W, got " + shape_str(is));
    int c = is[0], h = is[1], w = is[2];
    if (h < 2 || w < 2)
        throw DimensionError("maxpool2d needs H, W >= 2, got " + shape_str(is));
    int ho = h / 2, wo = w / 2;
    std::vector<T> out(static_cast<std::size_t>(c) * ho * wo);
    std::vector<int> argmax(out.size());
    const T* pin = input.values().data();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ho; ++y)
            for (int x = 0; x < wo; ++x) {
                int base = (ch * h + 2 * y) * w + 2 * x;
                // row-major scan of the window; strict > keeps the first max
                int best = base;
                T bv = pin[base];
                if (pin[base + 1] > bv) { best = base + 1; bv = pin[base + 1]; }
                if (pin[base + w] > bv) { best = base + w; bv = pin[base + w]; }
                if (pin[base + w + 1] > bv) { best = base + w + 1; bv = pin[base + w + 1]; }
                std::size_t oi = (static_cast<std::size_t>(ch) * ho + y) * wo + x;
                out[oi] = bv;
                argmax[oi] = best;
            }
    auto node = make_node<T>({c, ho, wo}, std::move(out), {input.node()});
    if (node->requires_grad)
        node->backward_fn = [xn = input.node(), argmax = std::move(argmax)](TensorNode<T>& self) {
            if (!xn->requires_grad) return;
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[argmax[i]] += self.grad[i];
        };
    return Tensor<T>(node);
}

// --- activations -------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.values().size());
    const T* px = x.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] > T(0) ? px[i] : T(0);
    auto node = make_node<T>(x.shape(), std::move(out), {x.node()});
    if (node->requires_grad)
        node->backward_fn = [xn = x.node()](TensorNode<T>& self) {
            if (!xn->requires_grad) return;
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (xn->value[i] > T(0)) xn->grad[i] += self.grad[i];
        };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    std::vector<T> out(x.values().size());
    const T* px = x.values().data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = T(1) / (T(1) + std::exp(-px[i]));
    auto node = make_node<T>(x.shape(), std::move(out), {x.node()});
    if (node->requires_grad)
        node->backward_fn = [xn = x.node()](TensorNode<T>& self) {
            if (!xn->requires_grad) return;
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                T s = self.value[i];
                xn->grad[i] += self.grad[i] * s * (T(1) - s);
            }
        };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    if (logits.shape().size() != 1)
        throw DimensionError("softmax expects a vector, got " + shape_str(logits.shape()));
    const T* px = logits.values().data();
    std::size_t n = logits.values().size();
    T mx = px[0];
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(static_cast<double>(px[i])))
            throw NumericError("softmax input is not finite");
        mx = std::max(mx, px[i]);
    }
    std::vector<T> out(n);
    T sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(px[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
    auto node = make_node<T>(logits.shape(), std::move(out), {logits.node()});
    if (node->requires_grad)
        node->backward_fn = [xn = logits.node()](TensorNode<T>& self) {
            if (!xn->requires_grad) return;
            T dot = 0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) dot += self.grad[i] * self.value[i];
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[i] += self.value[i] * (self.grad[i] - dot);
        };
    return Tensor<T>(node);
}

// --- slice ops ---------------------------------------------------------------

template <typename T>
Tensor<T> slice_mean(const Tensor<T>& x) {
    const auto& xs = x.shape();
    if (xs.size() != 3 || xs[1] != xs[2])
        throw DimensionError("slice_mean expects L x w x w, got " + shape_str(xs));
    int l = xs[0];
    long area = static_cast<long>(xs[1]) * xs[2];
    std::vector<T> out(l);
    const T* px = x.values().data();
    for (int s = 0; s < l; ++s) {
        T sum = 0;
        const T* slice = px + s * area;
        for (long i = 0; i < area; ++i) sum += slice[i];
        out[s] = sum / static_cast<T>(area);
    }
    auto node = make_node<T>({l}, std::move(out), {x.node()});
    if (node->requires_grad)
        node->backward_fn = [xn = x.node(), l, area](TensorNode<T>& self) {
            if (!xn->requires_grad) return;
            for (int s = 0; s < l; ++s) {
                T gs = self.grad[s] / static_cast<T>(area);
                T* gslice = xn->grad.data() + s * area;
                for (long i = 0; i < area; ++i) gslice[i] += gs;
            }
        };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> scale_slices(const Tensor<T>& x, const Tensor<T>& u) {
    const auto& xs = x.shape();
    if (xs.size() != 3)
        throw DimensionError("scale_slices expects L x w x w, got " + shape_str(xs));
    if (u.shape() != std::vector<int>{xs[0]})
        throw DimensionError("scale_slices length mismatch: x " + shape_str(xs) + ", u " +
                             shape_str(u.shape()));
    int l = xs[0];
    long area = static_cast<long>(xs[1]) * xs[2];
    std::vector<T> out(x.values().size());
    const T* px = x.values().data();
    const T* pu = u.values().data();
    for (int s = 0; s < l; ++s) {
        T us = pu[s];
        const T* src = px + s * area;
        T* dst = out.data() + s * area;
        for (long i = 0; i < area; ++i) dst[i] = us * src[i];
    }
    auto node = make_node<T>(xs, std::move(out), {x.node(), u.node()});
    if (node->requires_grad)
        node->backward_fn = [xn = x.node(), un = u.node(), l, area](TensorNode<T>& self) {
            const T* g = self.grad.data();
            if (xn->requires_grad) {
                for (int s = 0; s < l; ++s) {
                    T us = un->value[s];
                    const T* gs = g + s * area;
                    T* dx = xn->grad.data() + s * area;
                    for (long i = 0; i < area; ++i) dx[i] += us * gs[i];
                }
            }
            if (un->requires_grad) {
                for (int s = 0; s < l; ++s) {
                    T sum = 0;
                    const T* gs = g + s * area;
                    const T* xs_ = xn->value.data() + s * area;
                    for (long i = 0; i < area; ++i) sum += gs[i] * xs_[i];
                    un->grad[s] += sum;
                }
            }
        };
    return Tensor<T>(node);
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw UsageError("concat_channels on empty list");
    int h = parts[0].shape()[1], w = parts[0].shape()[2];
    int ctotal = 0;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    for (const auto& p : parts) {
        const auto& ps = p.shape();
        if (ps.size() != 3) throw DimensionError("concat_channels parts must be C x H x W");
        if (ps[1] != h || ps[2] != w)
            throw DimensionError("concat_channels spatial mismatch: " + shape_str(parts[0].shape()) +
                                 " vs " + shape_str(ps));
        ctotal += ps[0];
        parents.push_back(p.node());
    }
    long area = static_cast<long>(h) * w;
    std::vector<T> out(static_cast<std::size_t>(ctotal) * area);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::memcpy(out.data() + off, p.values().data(), p.values().size() * sizeof(T));
        off += p.values().size();
    }
    auto node = make_node<T>({ctotal, h, w}, std::move(out), std::move(parents));
    if (node->requires_grad)
        node->backward_fn = [](TensorNode<T>& self) {
            std::size_t off = 0;
            for (auto& p : self.parents) {
                if (p->requires_grad)
                    for (std::size_t i = 0; i < p->value.size(); ++i)
                        p->grad[i] += self.grad[off + i];
                off += p->value.size();
            }
        };
    return Tensor<T>(node);
}

// --- dropout -----------------------------------------------------------------

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, std::mt19937& rng) {
    if (p < 0.0 || p >= 1.0)
        throw UsageError("dropout probability must be in [0, 1), got " + std::to_string(p));
    if (!training || p == 0.0) return x;
    T inv = static_cast<T>(1.0 / (1.0 - p));
    std::vector<std::uint8_t> keep(x.values().size());
    std::vector<T> out(x.values().size());
    const T* px = x.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        keep[i] = uniform_double(rng) >= p;
        out[i] = keep[i] ? px[i] * inv : T(0);
    }
    auto node = make_node<T>(x.shape(), std::move(out), {x.node()});
    if (node->requires_grad)
        node->backward_fn = [xn = x.node(), keep = std::move(keep), inv](TensorNode<T>& self) {
            if (!xn->requires_grad) return;
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (keep[i]) xn->grad[i] += self.grad[i] * inv;
        };
    return Tensor<T>(node);
}

// --- cross entropy -------------------------------------------------------------

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, int target) {
    if (probs.shape().size() != 1)
        throw DimensionError("cross_entropy expects a probability vector, got " +
                             shape_str(probs.shape()));
    int c = probs.shape()[0];
    if (target < 0 || target >= c)
        throw IndexError("cross_entropy target " + std::to_string(target) + " out of range [0, " +
                         std::to_string(c) + ")");
    const T clamp = static_cast<T>(1e-12);
    T pt = probs.values()[static_cast<std::size_t>(target)];
    std::vector<T> out{static_cast<T>(-std::log(std::max(pt, clamp)))};
    auto node = make_node<T>({1}, std::move(out), {probs.node()});
    if (node->requires_grad)
        node->backward_fn = [pn = probs.node(), target, clamp](TensorNode<T>& self) {
            if (!pn->requires_grad) return;
            T pt = pn->value[static_cast<std::size_t>(target)];
            if (pt > clamp) pn->grad[static_cast<std::size_t>(target)] -= self.grad[0] / pt;
        };
    return Tensor<T>(node);
}

// --- backward ------------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1)
        throw UsageError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // iterative post-order DFS over parent edges
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> visited;
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second)
                stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// --- finite differences ----------------------------------------------------------

double finite_diff_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                         Tensor<double>& x, double h) {
    if (!x.requires_grad()) throw UsageError("finite_diff_check input must track gradients");
    x.zero_grad();
    Tensor<double> y = f(x);
    if (y.size() != 1) throw UsageError("finite_diff_check needs a scalar function");
    backward(y);
    std::vector<double> analytic = x.grad();

    double max_rel = 0.0;
    auto& vals = x.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        double orig = vals[i];
        vals[i] = orig + h;
        double fp = f(x).item();
        vals[i] = orig - h;
        double fm = f(x).item();
        vals[i] = orig;
        double numeric = (fp - fm) / (2.0 * h);
        double rel = std::abs(analytic[i] - numeric) /
                     std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

// --- explicit instantiations -------------------------------------------------------

#define P3D2D_INSTANTIATE_OPS(T)                                                              \
    template class Tensor<T>;                                                                 \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> mul_scalar<T>(const Tensor<T>&, T);                                    \
    template Tensor<T> reshape<T>(const Tensor<T>&, std::vector<int>);                        \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Pad);  \
    template Tensor<T> maxpool2d<T>(const Tensor<T>&);                                        \
    template Tensor<T> relu<T>(const Tensor<T>&);                                             \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                          \
    template Tensor<T> softmax<T>(const Tensor<T>&);                                          \
    template Tensor<T> slice_mean<T>(const Tensor<T>&);                                       \
    template Tensor<T> scale_slices<T>(const Tensor<T>&, const Tensor<T>&);                   \
    template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                     \
    template Tensor<T> dropout<T>(const Tensor<T>&, double, bool, std::mt19937&);             \
    template Tensor<T> cross_entropy<T>(const Tensor<T>&, int);                               \
    template void backward<T>(const Tensor<T>&);

P3D2D_INSTANTIATE_OPS(float)
P3D2D_INSTANTIATE_OPS(double)

}  // namespace p3d2d
