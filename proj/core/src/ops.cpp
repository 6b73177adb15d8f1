#include "shiftmae/ops.hpp"

#include "shiftmae/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace shiftmae {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

template <typename T>
using NodePtr = std::shared_ptr<detail::TensorNode<T>>;

std::string dims_msg(const char* op, const Shape& a, const Shape& b) {
    return std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b);
}

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op, const char* what) {
    if (!t.defined()) throw ConfigError(std::string(op) + ": " + what + " is undefined");
    if (t.rank() != rank) {
        throw ConfigError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                          ", got " + shape_str(t.shape()));
    }
}

template <typename T>
void require_vector(const BasicTensor<T>& t, std::int64_t n, const char* op, const char* what) {
    if (!t.defined() || t.rank() != 1 || t.dim(0) != n) {
        throw ConfigError(std::string(op) + ": " + what + " must be [" + std::to_string(n) + "], got " +
                          (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
    }
}

template <typename T>
NodePtr<T> node_or_null(const BasicTensor<T>& t) {
    return t.defined() ? t.node() : nullptr;
}

template <typename T>
bool wants_grad(const NodePtr<T>& n) {
    return n && n->requires_grad;
}

// ---------------------------------------------------------------------------
// conv2d kernels

struct ConvGeom {
    std::int64_t batch, cin, h, w, cout, kh, kw, ho, wo;
    int stride, padding, groups;
};

template <typename T>
void conv_generic_forward(const ConvGeom& g, const T* in, const T* wt, const T* bias, T* out) {
    const auto cin_g = g.cin / g.groups;
    const auto cout_g = g.cout / g.groups;
    for (std::int64_t b = 0; b < g.batch; ++b) {
        for (std::int64_t oc = 0; oc < g.cout; ++oc) {
            const auto grp = oc / cout_g;
            T* o = out + ((b * g.cout + oc) * g.ho) * g.wo;
            for (std::int64_t oy = 0; oy < g.ho; ++oy) {
                for (std::int64_t ox = 0; ox < g.wo; ++ox) {
                    T acc = bias ? bias[oc] : T(0);
                    for (std::int64_t icg = 0; icg < cin_g; ++icg) {
                        const auto ic = grp * cin_g + icg;
                        const T* ip = in + ((b * g.cin + ic) * g.h) * g.w;
                        const T* wp = wt + ((oc * cin_g + icg) * g.kh) * g.kw;
                        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                            const auto iy = oy * g.stride - g.padding + ky;
                            if (iy < 0 || iy >= g.h) continue;
                            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                                const auto ix = ox * g.stride - g.padding + kx;
                                if (ix < 0 || ix >= g.w) continue;
                                acc += wp[ky * g.kw + kx] * ip[iy * g.w + ix];
                            }
                        }
                    }
                    o[oy * g.wo + ox] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv_generic_backward(const ConvGeom& g, const T* in, const T* wt, const T* gout, T* gin, T* gwt,
                           T* gbias) {
    const auto cin_g = g.cin / g.groups;
    const auto cout_g = g.cout / g.groups;
    for (std::int64_t b = 0; b < g.batch; ++b) {
        for (std::int64_t oc = 0; oc < g.cout; ++oc) {
            const auto grp = oc / cout_g;
            const T* go = gout + ((b * g.cout + oc) * g.ho) * g.wo;
            for (std::int64_t oy = 0; oy < g.ho; ++oy) {
                for (std::int64_t ox = 0; ox < g.wo; ++ox) {
                    const T d = go[oy * g.wo + ox];
                    if (gbias) gbias[oc] += d;
                    for (std::int64_t icg = 0; icg < cin_g; ++icg) {
                        const auto ic = grp * cin_g + icg;
                        const auto in_off = ((b * g.cin + ic) * g.h) * g.w;
                        const auto w_off = ((oc * cin_g + icg) * g.kh) * g.kw;
                        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
                            const auto iy = oy * g.stride - g.padding + ky;
                            if (iy < 0 || iy >= g.h) continue;
                            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                                const auto ix = ox * g.stride - g.padding + kx;
                                if (ix < 0 || ix >= g.w) continue;
                                if (gin) gin[in_off + iy * g.w + ix] += wt[w_off + ky * g.kw + kx] * d;
                                if (gwt) gwt[w_off + ky * g.kw + kx] += in[in_off + iy * g.w + ix] * d;
                            }
                        }
                    }
                }
            }
        }
    }
}

// Depthwise, stride 1, "same" padding with odd square kernel.
template <typename T>
void conv_depthwise_forward(const ConvGeom& g, const T* in, const T* wt, const T* bias, T* out) {
    const auto k = g.kh;
    const auto p = g.padding;
    const auto H = g.h;
    const auto W = g.w;
    for (std::int64_t b = 0; b < g.batch; ++b) {
        for (std::int64_t c = 0; c < g.cin; ++c) {
            const T* ip = in + (b * g.cin + c) * H * W;
            T* op = out + (b * g.cin + c) * H * W;
            const T* wp = wt + c * k * k;
            std::fill(op, op + H * W, bias ? bias[c] : T(0));
            for (std::int64_t oy = 0; oy < H; ++oy) {
                T* orow = op + oy * W;
                for (std::int64_t ky = 0; ky < k; ++ky) {
                    const auto iy = oy + ky - p;
                    if (iy < 0 || iy >= H) continue;
                    const T* irow = ip + iy * W;
                    for (std::int64_t kx = 0; kx < k; ++kx) {
                        const T wv = wp[ky * k + kx];
                        const auto shift = kx - p;
                        const auto x0 = std::max<std::int64_t>(0, -shift);
                        const auto x1 = std::min<std::int64_t>(W, W - shift);
                        if (x1 <= x0) continue;
                        const T* src = irow + (x0 + shift);
                        T* dst = orow + x0;
                        for (std::int64_t j = 0; j < x1 - x0; ++j) dst[j] += wv * src[j];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_depthwise_backward(const ConvGeom& g, const T* in, const T* wt, const T* gout, T* gin, T* gwt,
                             T* gbias) {
    const auto k = g.kh;
    const auto p = g.padding;
    const auto H = g.h;
    const auto W = g.w;
    for (std::int64_t b = 0; b < g.batch; ++b) {
        for (std::int64_t c = 0; c < g.cin; ++c) {
            const T* ip = in + (b * g.cin + c) * H * W;
            const T* gp = gout + (b * g.cin + c) * H * W;
            T* gip = gin ? gin + (b * g.cin + c) * H * W : nullptr;
            const T* wp = wt + c * k * k;
            T* gwp = gwt ? gwt + c * k * k : nullptr;
            if (gbias) {
                T acc = 0;
                for (std::int64_t i = 0; i < H * W; ++i) acc += gp[i];
                gbias[c] += acc;
            }
            for (std::int64_t oy = 0; oy < H; ++oy) {
                const T* grow = gp + oy * W;
                for (std::int64_t ky = 0; ky < k; ++ky) {
                    const auto iy = oy + ky - p;
                    if (iy < 0 || iy >= H) continue;
                    const T* irow = ip + iy * W;
                    T* girow = gip ? gip + iy * W : nullptr;
                    for (std::int64_t kx = 0; kx < k; ++kx) {
                        const auto shift = kx - p;
                        const auto x0 = std::max<std::int64_t>(0, -shift);
                        const auto x1 = std::min<std::int64_t>(W, W - shift);
                        if (x1 <= x0) continue;
                        const T* gsrc = grow + x0;
                        if (girow) {
                            const T wv = wp[ky * k + kx];
                            T* dst = girow + (x0 + shift);
                            for (std::int64_t j = 0; j < x1 - x0; ++j) dst[j] += wv * gsrc[j];
                        }
                        if (gwp) {
                            const T* src = irow + (x0 + shift);
                            T acc = 0;
                            for (std::int64_t j = 0; j < x1 - x0; ++j) acc += gsrc[j] * src[j];
                            gwp[ky * k + kx] += acc;
                        }
                    }
                }
            }
        }
    }
}

// Non-overlapping kernel (stride == kernel, no padding, one group): GEMM on
// gathered patches. For 1x1 kernels the gather is the identity.
template <typename T>
void patch_gather(const ConvGeom& g, const T* in_b, T* col) {
    const auto P = g.ho * g.wo;
    for (std::int64_t c = 0; c < g.cin; ++c) {
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                T* row = col + ((c * g.kh + ky) * g.kw + kx) * P;
                for (std::int64_t oy = 0; oy < g.ho; ++oy) {
                    const T* src = in_b + (c * g.h + oy * g.kh + ky) * g.w + kx;
                    T* dst = row + oy * g.wo;
                    for (std::int64_t ox = 0; ox < g.wo; ++ox) dst[ox] = src[ox * g.kw];
                }
            }
        }
    }
}

template <typename T>
void patch_scatter_add(const ConvGeom& g, const T* col, T* gin_b) {
    const auto P = g.ho * g.wo;
    for (std::int64_t c = 0; c < g.cin; ++c) {
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                const T* row = col + ((c * g.kh + ky) * g.kw + kx) * P;
                for (std::int64_t oy = 0; oy < g.ho; ++oy) {
                    T* dst = gin_b + (c * g.h + oy * g.kh + ky) * g.w + kx;
                    const T* src = row + oy * g.wo;
                    for (std::int64_t ox = 0; ox < g.wo; ++ox) dst[ox * g.kw] += src[ox];
                }
            }
        }
    }
}

template <typename T>
bool is_pointwise(const ConvGeom& g) {
    return g.kh == 1 && g.kw == 1 && g.stride == 1;
}

template <typename T>
void conv_patch_forward(const ConvGeom& g, const T* in, const T* wt, const T* bias, T* out) {
    const auto K = g.cin * g.kh * g.kw;
    const auto P = g.ho * g.wo;
    CMapR<T> W(wt, g.cout, K);
    std::vector<T> col;
    if (!is_pointwise<T>(g)) col.resize(static_cast<std::size_t>(K * P));
    for (std::int64_t b = 0; b < g.batch; ++b) {
        const T* in_b = in + b * g.cin * g.h * g.w;
        const T* src = in_b;
        if (!col.empty()) {
            patch_gather(g, in_b, col.data());
            src = col.data();
        }
        MapR<T> Y(out + b * g.cout * P, g.cout, P);
        Y.noalias() = W * CMapR<T>(src, K, P);
        if (bias) {
            for (std::int64_t oc = 0; oc < g.cout; ++oc) Y.row(oc).array() += bias[oc];
        }
    }
}

template <typename T>
void conv_patch_backward(const ConvGeom& g, const T* in, const T* wt, const T* gout, T* gin, T* gwt,
                         T* gbias) {
    const auto K = g.cin * g.kh * g.kw;
    const auto P = g.ho * g.wo;
    CMapR<T> W(wt, g.cout, K);
    std::vector<T> col;
    std::vector<T> gcol;
    const bool pw = is_pointwise<T>(g);
    if (!pw) {
        col.resize(static_cast<std::size_t>(K * P));
        gcol.resize(static_cast<std::size_t>(K * P));
    }
    for (std::int64_t b = 0; b < g.batch; ++b) {
        const T* in_b = in + b * g.cin * g.h * g.w;
        CMapR<T> dY(gout + b * g.cout * P, g.cout, P);
        if (gbias) {
            for (std::int64_t oc = 0; oc < g.cout; ++oc) {
                T acc = 0;
                const T* r = gout + (b * g.cout + oc) * P;
                for (std::int64_t i = 0; i < P; ++i) acc += r[i];
                gbias[oc] += acc;
            }
        }
        if (gwt) {
            const T* src = in_b;
            if (!pw) {
                patch_gather(g, in_b, col.data());
                src = col.data();
            }
            MapR<T> dW(gwt, g.cout, K);
            dW.noalias() += dY * CMapR<T>(src, K, P).transpose();
        }
        if (gin) {
            T* gin_b = gin + b * g.cin * g.h * g.w;
            if (pw) {
                MapR<T> dX(gin_b, K, P);
                dX.noalias() += W.transpose() * dY;
            } else {
                MapR<T> dC(gcol.data(), K, P);
                dC.noalias() = W.transpose() * dY;
                patch_scatter_add(g, gcol.data(), gin_b);
            }
        }
    }
}

enum class ConvKind { generic, depthwise, patch };

ConvKind classify(const ConvGeom& g) {
    if (g.groups == 1 && g.padding == 0 && g.kh == g.kw && g.stride == g.kh) return ConvKind::patch;
    if (g.groups == g.cin && g.cout == g.cin && g.stride == 1 && g.kh == g.kw && g.kh % 2 == 1 &&
        g.padding == g.kh / 2) {
        return ConvKind::depthwise;
    }
    return ConvKind::generic;
}

template <typename T>
double to_double(T v) {
    return static_cast<double>(v);
}

}  // namespace

std::int64_t conv_out_extent(std::int64_t n, std::int64_t kernel, int stride, int padding) {
    const auto span = n + 2 * padding - kernel;
    if (span < 0) return 0;
    return span / stride + 1;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      Conv2dOptions opt) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(weight, 4, "conv2d", "weight");
    if (opt.stride < 1 || opt.padding < 0 || opt.groups < 1) {
        throw ConfigError("conv2d: stride must be >= 1, padding >= 0, groups >= 1");
    }
    ConvGeom g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2),
               weight.dim(3), 0, 0, opt.stride, opt.padding, opt.groups};
    if (g.cin % g.groups != 0 || g.cout % g.groups != 0 || weight.dim(1) * g.groups != g.cin) {
        throw ConfigError("conv2d: channel/group mismatch: input " + shape_str(input.shape()) + ", weight " +
                          shape_str(weight.shape()) + ", groups " + std::to_string(g.groups));
    }
    g.ho = conv_out_extent(g.h, g.kh, g.stride, g.padding);
    g.wo = conv_out_extent(g.w, g.kw, g.stride, g.padding);
    if (g.ho < 1 || g.wo < 1) {
        throw ConfigError("conv2d: empty output for input " + shape_str(input.shape()) + " and kernel " +
                          shape_str(weight.shape()));
    }
    if (bias.defined()) require_vector(bias, g.cout, "conv2d", "bias");

    const auto kind = classify(g);
    auto out = detail::make_output<T>("conv2d", {g.batch, g.cout, g.ho, g.wo},
                                      {input.node(), weight.node(), node_or_null(bias)});
    const T* bptr = bias.defined() ? bias.data().data() : nullptr;
    switch (kind) {
        case ConvKind::patch:
            conv_patch_forward(g, input.data().data(), weight.data().data(), bptr, out->data.data());
            break;
        case ConvKind::depthwise:
            conv_depthwise_forward(g, input.data().data(), weight.data().data(), bptr, out->data.data());
            break;
        case ConvKind::generic:
            conv_generic_forward(g, input.data().data(), weight.data().data(), bptr, out->data.data());
            break;
    }
    if (detail::needs_graph(out)) {
        out->backward_fn = [g, kind](detail::TensorNode<T>& self) {
            auto& in = *self.inputs[0];
            auto& wt = *self.inputs[1];
            auto* bs = self.inputs[2].get();
            T* gin = in.requires_grad ? in.ensure_grad().data() : nullptr;
            T* gwt = wt.requires_grad ? wt.ensure_grad().data() : nullptr;
            T* gb = (bs && bs->requires_grad) ? bs->ensure_grad().data() : nullptr;
            switch (kind) {
                case ConvKind::patch:
                    conv_patch_backward(g, in.data.data(), wt.data.data(), self.grad.data(), gin, gwt, gb);
                    break;
                case ConvKind::depthwise:
                    conv_depthwise_backward(g, in.data.data(), wt.data.data(), self.grad.data(), gin, gwt, gb);
                    break;
                case ConvKind::generic:
                    conv_generic_backward(g, in.data.data(), wt.data.data(), self.grad.data(), gin, gwt, gb);
                    break;
            }
        };
    }
    return BasicTensor<T>::wrap(std::move(out));
}

template <typename T>
BasicTensor<T> depthwise_conv7x7(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                 const BasicTensor<T>& bias) {
    require_rank(input, 4, "depthwise_conv7x7", "input");
    require_rank(weight, 4, "depthwise_conv7x7", "weight");
    const auto c = input.dim(1);
    if (weight.dim(0) != c || weight.dim(1) != 1 || weight.dim(2) != 7 || weight.dim(3) != 7) {
        throw ConfigError(dims_msg("depthwise_conv7x7", input.shape(), weight.shape()));
    }
    return conv2d(input, weight, bias, Conv2dOptions{1, 3, static_cast<int>(c)});
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          double eps) {
    if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be > 0");
    if (!input.defined() || (input.rank() != 2 && input.rank() != 4)) {
        throw ConfigError("layer_norm: input must be [N,C] or [B,C,H,W]");
    }
    const auto C = input.dim(1);
    const auto outer = input.dim(0);
    const auto inner = input.rank() == 4 ? input.dim(2) * input.dim(3) : std::int64_t{1};
    require_vector(gamma, C, "layer_norm", "gamma");
    require_vector(beta, C, "layer_norm", "beta");

    auto out = detail::make_output<T>("layer_norm", input.shape(), {input.node(), gamma.node(), beta.node()});
    std::vector<T> xhat(input.data().size());
    std::vector<T> rstd(static_cast<std::size_t>(outer * inner));
    std::vector<T> mean(static_cast<std::size_t>(inner));
    std::vector<T> var(static_cast<std::size_t>(inner));
    const T* x = input.data().data();
    const T* gm = gamma.data().data();
    const T* bt = beta.data().data();
    T* y = out->data.data();
    const T invc = T(1) / static_cast<T>(C);
    for (std::int64_t o = 0; o < outer; ++o) {
        const T* xo = x + o * C * inner;
        std::fill(mean.begin(), mean.end(), T(0));
        std::fill(var.begin(), var.end(), T(0));
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < inner; ++i) mean[i] += xo[c * inner + i];
        for (std::int64_t i = 0; i < inner; ++i) mean[i] *= invc;
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t i = 0; i < inner; ++i) {
                const T d = xo[c * inner + i] - mean[i];
                var[i] += d * d;
            }
        T* rs = rstd.data() + o * inner;
        for (std::int64_t i = 0; i < inner; ++i) rs[i] = T(1) / std::sqrt(var[i] * invc + static_cast<T>(eps));
        for (std::int64_t c = 0; c < C; ++c) {
            T* xh = xhat.data() + (o * C + c) * inner;
            T* yo = y + (o * C + c) * inner;
            for (std::int64_t i = 0; i < inner; ++i) {
                xh[i] = (xo[c * inner + i] - mean[i]) * rs[i];
                yo[i] = gm[c] * xh[i] + bt[c];
            }
        }
    }
    if (detail::needs_graph(out)) {
        out->backward_fn = [xhat = std::move(xhat), rstd = std::move(rstd), outer, C,
                            inner](detail::TensorNode<T>& self) {
            auto& in = *self.inputs[0];
            auto& gn = *self.inputs[1];
            auto& bn = *self.inputs[2];
            const T* dy = self.grad.data();
            const T* gm = gn.data.data();
            if (gn.requires_grad || bn.requires_grad) {
                T* dg = gn.requires_grad ? gn.ensure_grad().data() : nullptr;
                T* db = bn.requires_grad ? bn.ensure_grad().data() : nullptr;
                for (std::int64_t o = 0; o < outer; ++o)
                    for (std::int64_t c = 0; c < C; ++c) {
                        const T* d = dy + (o * C + c) * inner;
                        const T* xh = xhat.data() + (o * C + c) * inner;
                        T sg = 0, sb = 0;
                        for (std::int64_t i = 0; i < inner; ++i) {
                            sg += d[i] * xh[i];
                            sb += d[i];
                        }
                        if (dg) dg[c] += sg;
                        if (db) db[c] += sb;
                    }
            }
            if (!in.requires_grad) return;
            T* dx = in.ensure_grad().data();
            const T invc = T(1) / static_cast<T>(C);
            std::vector<T> mg(static_cast<std::size_t>(inner));
            std::vector<T> mgx(static_cast<std::size_t>(inner));
            for (std::int64_t o = 0; o < outer; ++o) {
                std::fill(mg.begin(), mg.end(), T(0));
                std::fill(mgx.begin(), mgx.end(), T(0));
                for (std::int64_t c = 0; c < C; ++c) {
                    const T* d = dy + (o * C + c) * inner;
                    const T* xh = xhat.data() + (o * C + c) * inner;
                    for (std::int64_t i = 0; i < inner; ++i) {
                        const T gv = d[i] * gm[c];
                        mg[i] += gv;
                        mgx[i] += gv * xh[i];
                    }
                }
                const T* rs = rstd.data() + o * inner;
                for (std::int64_t c = 0; c < C; ++c) {
                    const T* d = dy + (o * C + c) * inner;
                    const T* xh = xhat.data() + (o * C + c) * inner;
                    T* dxo = dx + (o * C + c) * inner;
                    for (std::int64_t i = 0; i < inner; ++i) {
                        dxo[i] += rs[i] * (d[i] * gm[c] - mg[i] * invc - xh[i] * mgx[i] * invc);
                    }
                }
            }
        };
    }
    return BasicTensor<T>::wrap(std::move(out));
}

template <typename T>
BasicTensor<T> grn(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta) {
    require_rank(input, 4, "grn", "input");
    const auto B = input.dim(0);
    const auto C = input.dim(1);
    const auto P = input.dim(2) * input.dim(3);
    require_vector(gamma, C, "grn", "gamma");
    require_vector(beta, C, "grn", "beta");
    constexpr T kEps = T(1e-6);

    auto out = detail::make_output<T>("grn", input.shape(), {input.node(), gamma.node(), beta.node()});
    std::vector<T> norms(static_cast<std::size_t>(B * C));
    std::vector<T> denom(static_cast<std::size_t>(B));
    const T* x = input.data().data();
    const T* gm = gamma.data().data();
    const T* bt = beta.data().data();
    T* y = out->data.data();
    for (std::int64_t b = 0; b < B; ++b) {
        T total = 0;
        for (std::int64_t c = 0; c < C; ++c) {
            const T* xc = x + (b * C + c) * P;
            T ss = 0;
            for (std::int64_t i = 0; i < P; ++i) ss += xc[i] * xc[i];
            norms[b * C + c] = std::sqrt(ss);
            total += norms[b * C + c];
        }
        denom[b] = total / static_cast<T>(C) + kEps;
        for (std::int64_t c = 0; c < C; ++c) {
            const T n = norms[b * C + c] / denom[b];
            const T scale = gm[c] * n + T(1);
            const T* xc = x + (b * C + c) * P;
            T* yc = y + (b * C + c) * P;
            for (std::int64_t i = 0; i < P; ++i) yc[i] = scale * xc[i] + bt[c];
        }
    }
    if (detail::needs_graph(out)) {
        out->backward_fn = [norms = std::move(norms), denom = std::move(denom), B, C,
                            P](detail::TensorNode<T>& self) {
            auto& in = *self.inputs[0];
            auto& gn = *self.inputs[1];
            auto& bn = *self.inputs[2];
            const T* dy = self.grad.data();
            const T* x = in.data.data();
            const T* gm = gn.data.data();
            T* dg = gn.requires_grad ? gn.ensure_grad().data() : nullptr;
            T* db = bn.requires_grad ? bn.ensure_grad().data() : nullptr;
            T* dx = in.requires_grad ? in.ensure_grad().data() : nullptr;
            std::vector<T> dn(static_cast<std::size_t>(C));
            for (std::int64_t b = 0; b < B; ++b) {
                // dn[c] = sum_p dy * x (the gradient w.r.t. x*n before gamma).
                for (std::int64_t c = 0; c < C; ++c) {
                    const T* d = dy + (b * C + c) * P;
                    const T* xc = x + (b * C + c) * P;
                    T sdx = 0, sd = 0;
                    for (std::int64_t i = 0; i < P; ++i) {
                        sdx += d[i] * xc[i];
                        sd += d[i];
                    }
                    const T n = norms[b * C + c] / denom[b];
                    if (dg) dg[c] += sdx * n;
                    if (db) db[c] += sd;
                    dn[c] = sdx * gm[c];
                }
                if (!dx) continue;
                const T den = denom[b];
                T dmean = 0;
                for (std::int64_t c = 0; c < C; ++c) dmean -= dn[c] * norms[b * C + c] / (den * den);
                dmean /= static_cast<T>(C);
                for (std::int64_t c = 0; c < C; ++c) {
                    const T n = norms[b * C + c] / den;
                    const T dG = dn[c] / den + dmean;
                    const T G = norms[b * C + c];
                    const T coef = G > T(0) ? dG / G : T(0);
                    const T scale = gm[c] * n + T(1);
                    const T* d = dy + (b * C + c) * P;
                    const T* xc = x + (b * C + c) * P;
                    T* dxc = dx + (b * C + c) * P;
                    for (std::int64_t i = 0; i < P; ++i) dxc[i] += d[i] * scale + coef * xc[i];
                }
            }
        };
    }
    return BasicTensor<T>::wrap(std::move(out));
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& input) {
    if (!input.defined()) throw ConfigError("gelu: input is undefined");
    auto out = detail::make_output<T>("gelu", input.shape(), {input.node()});
    const T* x = input.data().data();
    T* y = out->data.data();
    const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
    const auto n = input.data().size();
    for (std::size_t i = 0; i < n; ++i) y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
    if (detail::needs_graph(out)) {
        out->backward_fn = [inv_sqrt2](detail::TensorNode<T>& self) {
            auto& in = *self.inputs[0];
            if (!in.requires_grad) return;
            T* dx = in.ensure_grad().data();
            const T* x = in.data.data();
            const T* dy = self.grad.data();
            const T inv_sqrt2pi = static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
            for (std::size_t i = 0; i < in.data.size(); ++i) {
                const T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
                const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x[i] * x[i]);
                dx[i] += dy[i] * (cdf + x[i] * pdf);
            }
        };
    }
    return BasicTensor<T>::wrap(std::move(out));
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
    require_rank(input, 2, "linear", "input");
    require_rank(weight, 2, "linear", "weight");
    const auto N = input.dim(0);
    const auto cin = input.dim(1);
    const auto cout = weight.dim(0);
    if (weight.dim(1) != cin) throw ConfigError(dims_msg("linear", input.shape(), weight.shape()));
    if (bias.defined()) require_vector(bias, cout, "linear", "bias");
    auto out = detail::make_output<T>("linear", {N, cout}, {input.node(), weight.node(), node_or_null(bias)});
    MapR<T> Y(out->data.data(), N, cout);
    Y.noalias() = CMapR<T>(input.data().data(), N, cin) * CMapR<T>(weight.data().data(), cout, cin).transpose();
    if (bias.defined()) {
        for (std::int64_t r = 0; r < N; ++r)
            for (std::int64_t c = 0; c < cout; ++c) Y(r, c) += bias.data()[c];
    }
    if (detail::needs_graph(out)) {
        out->backward_fn = [N, cin, cout](detail::TensorNode<T>& self) {
            auto& in = *self.inputs[0];
            auto& wt = *self.inputs[1];
            auto* bs = self.inputs[2].get();
            CMapR<T> dY(self.grad.data(), N, cout);
            if (in.requires_grad) {
                MapR<T> dX(in.ensure_grad().data(), N, cin);
                dX.noalias() += dY * CMapR<T>(wt.data.data(), cout, cin);
            }
            if (wt.requires_grad) {
                MapR<T> dW(wt.ensure_grad().data(), cout, cin);
                dW.noalias() += dY.transpose() * CMapR<T>(in.data.data(), N, cin);
            }
            if (bs && bs->requires_grad) {
                auto& gb = bs->ensure_grad();
                for (std::int64_t r = 0; r < N; ++r)
                    for (std::int64_t c = 0; c < cout; ++c) gb[c] += dY(r, c);
            }
        };
    }
    return BasicTensor<T>::wrap(std::move(out));
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
        throw ConfigError(dims_msg("add", a.defined() ? a.shape() : Shape{}, b.defined() ? b.shape() : Shape{}));
    }
    auto out = detail::make_output<T>("add", a.shape(), {a.node(), b.node()});
    const auto n = out->data.size();
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    for (std::size_t i = 0; i < n; ++i) out->data[i] = pa[i] + pb[i];
    if (detail::needs_graph(out)) {
        out->backward_fn = [](detail::TensorNode<T>& self) {
            for (int k = 0; k < 2; ++k) {
                auto& in = *self.inputs[k];
                if (!in.requires_grad) continue;
                auto& g = in.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
        };
    }
    return BasicTensor<T>::wrap(std::move(out));
}

template <typename T>
BasicTensor<T> unpatchify(const BasicTensor<T>& input, int patch, int channels) {
    require_rank(input, 4, "unpatchify", "input");
    if (patch < 1 || channels < 1 || input.dim(1) != std::int64_t{patch} * patch * channels) {
        throw ConfigError("unpatchify: channel extent " + std::to_string(input.dim(1)) + " != patch^2 * C (" +
                          std::to_string(patch) + "^2 * " + std::to_string(channels) + ")");
    }
    const auto B = input.dim(0);
    const auto h = input.dim(2);
    const auto w = input.dim(3);
    const std::int64_t p = patch;
    const std::int64_t C = channels;
    const auto H = h * p;
    const auto W = w * p;
    auto out = detail::make_output<T>("unpatchify", {B, C, H, W}, {input.node()});
    // Shared index map between forward and backward.
    auto index = [=](std::int64_t b, std::int64_t c, std::int64_t y, std::int64_t x, std::int64_t py,
                     std::int64_t px) {
        const auto src = ((b * p * p * C + (py * p + px) * C + c) * h + y) * w + x;
        const auto dst = ((b * C + c) * H + y * p + py) * W + x * p + px;
        return std::pair{src, dst};
    };
    const T* in = input.data().data();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t py = 0; py < p; ++py)
                    for (std::int64_t x = 0; x < w; ++x)
                        for (std::int64_t px = 0; px < p; ++px) {
                            const auto [s, d] = index(b, c, y, x, py, px);
                            out->data[d] = in[s];
                        }
    if (detail::needs_graph(out)) {
        out->backward_fn = [=](detail::TensorNode<T>& self) {
            auto& src = *self.inputs[0];
            if (!src.requires_grad) return;
            auto& g = src.ensure_grad();
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t c = 0; c < C; ++c)
                    for (std::int64_t y = 0; y < h; ++y)
                        for (std::int64_t py = 0; py < p; ++py)
                            for (std::int64_t x = 0; x < w; ++x)
                                for (std::int64_t px = 0; px < p; ++px) {
                                    const auto [s, d] = index(b, c, y, x, py, px);
                                    g[s] += self.grad[d];
                                }
        };
    }
    return BasicTensor<T>::wrap(std::move(out));
}

template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    if (!pred.defined() || !target.defined() || pred.shape() != target.shape()) {
        throw ConfigError(dims_msg("mse_loss", pred.defined() ? pred.shape() : Shape{},
                                   target.defined() ? target.shape() : Shape{}));
    }
    auto out = detail::make_output<T>("mse_loss", {}, {pred.node(), target.node()});
    const auto n = pred.data().size();
    double acc = 0.0;
    const T* p = pred.data().data();
    const T* t = target.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = to_double(p[i]) - to_double(t[i]);
        acc += d * d;
    }
    out->data[0] = static_cast<T>(acc / static_cast<double>(n));
    if (detail::needs_graph(out)) {
        out->backward_fn = [n](detail::TensorNode<T>& self) {
            auto& pn = *self.inputs[0];
            auto& tn = *self.inputs[1];
            const T scale = T(2) * self.grad[0] / static_cast<T>(n);
            if (pn.requires_grad) {
                auto& g = pn.ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] += scale * (pn.data[i] - tn.data[i]);
            }
            if (tn.requires_grad) {
                auto& g = tn.ensure_grad();
                for (std::size_t i = 0; i < n; ++i) g[i] -= scale * (pn.data[i] - tn.data[i]);
            }
        };
    }
    return BasicTensor<T>::wrap(std::move(out));
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
    if (!input.defined()) throw ConfigError("sum: input is undefined");
    auto out = detail::make_output<T>("sum", {}, {input.node()});
    double acc = 0.0;
    for (auto v : input.data()) acc += to_double(v);
    out->data[0] = static_cast<T>(acc);
    if (detail::needs_graph(out)) {
        out->backward_fn = [](detail::TensorNode<T>& self) {
            auto& in = *self.inputs[0];
            if (!in.requires_grad) return;
            auto& g = in.ensure_grad();
            for (auto& v : g) v += self.grad[0];
        };
    }
    return BasicTensor<T>::wrap(std::move(out));
}

template <typename T>
void check_finite(const BasicTensor<T>& t, const char* what) {
    for (auto v : t.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
    }
}

#define SHIFTMAE_INSTANTIATE_OPS(T)                                                                       \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
                                   Conv2dOptions);                                                        \
    template BasicTensor<T> depthwise_conv7x7(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                              const BasicTensor<T>&);                                     \
    template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                       double);                                                           \
    template BasicTensor<T> grn(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);    \
    template BasicTensor<T> gelu(const BasicTensor<T>&);                                                  \
    template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                            \
    template BasicTensor<T> unpatchify(const BasicTensor<T>&, int, int);                                  \
    template BasicTensor<T> mse_loss(const BasicTensor<T>&, const BasicTensor<T>&);                       \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                                   \
    template void check_finite(const BasicTensor<T>&, const char*);

SHIFTMAE_INSTANTIATE_OPS(float)
SHIFTMAE_INSTANTIATE_OPS(double)

#undef SHIFTMAE_INSTANTIATE_OPS

}  // namespace shiftmae
