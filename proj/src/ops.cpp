#include "mvc/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mvc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// dst (m x n) = or += op(a) * op(b), where op(a) is m x k and a is stored
// transposed when `ta`. Eigen picks small-product and matrix-vector kernels by
// operand address alignment, so operands are staged in Eigen-owned storage to
// keep the rounding independent of where the inputs were allocated.
void gemm(double* dst, bool accumulate, const double* a, bool ta, const double* b, bool tb, int64_t m, int64_t k,
          int64_t n) {
    thread_local RowMat sa, sb, sc;
    if (ta) {
        sa = ConstMap(a, k, m).transpose();
    } else {
        sa = ConstMap(a, m, k);
    }
    if (tb) {
        sb = ConstMap(b, n, k).transpose();
    } else {
        sb = ConstMap(b, k, n);
    }
    sc.resize(m, n);
    sc.noalias() = sa * sb;
    MutMap d(dst, m, n);
    if (accumulate) {
        d += sc;
    } else {
        d = sc;
    }
}

int64_t normalize_axis(int64_t axis, int64_t rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ShapeError("axis out of range");
    return axis;
}

std::vector<int64_t> contiguous_strides(const Shape& shape) {
    std::vector<int64_t> strides(shape.size(), 1);
    for (size_t d = shape.size(); d-- > 1;) strides[d - 1] = strides[d] * shape[d];
    return strides;
}

// Strides of `in` viewed with the extents of `out` (0 along broadcast axes).
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    const size_t r = out.size();
    const size_t lead = r - in.size();
    const auto base = contiguous_strides(in);
    std::vector<int64_t> strides(r, 0);
    for (size_t d = 0; d < in.size(); ++d) {
        strides[lead + d] = (in[d] == 1 && out[lead + d] != 1) ? 0 : base[d];
    }
    return strides;
}

// Visits every flat output index with the matching offsets into two operands.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<int64_t>& sa, const std::vector<int64_t>& sb, F&& f) {
    const size_t r = out.size();
    const int64_t n = numel(out);
    if (r == 0) {
        f(0, 0, 0);
        return;
    }
    const int64_t inner = out[r - 1];
    const int64_t ia = sa[r - 1];
    const int64_t ib = sb[r - 1];
    std::vector<int64_t> idx(r, 0);
    int64_t oa = 0;
    int64_t ob = 0;
    for (int64_t i = 0; i < n; i += inner) {
        for (int64_t k = 0; k < inner; ++k) f(i + k, oa + k * ia, ob + k * ib);
        for (size_t d = r - 1; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out[d]) break;
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

// f(x, y) -> value; dfa/dfb(x, y, out) -> partial derivatives.
template <class F, class DA, class DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
    const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
    const int64_t n = numel(out_shape);
    std::vector<double> out(static_cast<size_t>(n));
    const double* av = a.values().data();
    const double* bv = b.values().data();
    const bool same = a.shape() == out_shape && b.shape() == out_shape;
    std::vector<int64_t> sa;
    std::vector<int64_t> sb;
    if (same) {
        for (int64_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
    } else {
        sa = broadcast_strides(a.shape(), out_shape);
        sb = broadcast_strides(b.shape(), out_shape);
        for_each_broadcast(out_shape, sa, sb, [&](int64_t i, int64_t oa, int64_t ob) { out[i] = f(av[oa], bv[ob]); });
    }
    auto fn = [same, out_shape, sa, sb, dfa, dfb](Node& node) {
        Node& pa = *node.parents[0];
        Node& pb = *node.parents[1];
        const double* x = pa.value.data();
        const double* y = pb.value.data();
        const double* g = node.grad.data();
        const double* o = node.value.data();
        double* ga = pa.requires_grad ? pa.grad_buffer().data() : nullptr;
        double* gb = pb.requires_grad ? pb.grad_buffer().data() : nullptr;
        if (same) {
            const auto cnt = static_cast<int64_t>(node.value.size());
            for (int64_t i = 0; i < cnt; ++i) {
                if (ga) ga[i] += g[i] * dfa(x[i], y[i], o[i]);
                if (gb) gb[i] += g[i] * dfb(x[i], y[i], o[i]);
            }
        } else {
            for_each_broadcast(out_shape, sa, sb, [&](int64_t i, int64_t oa, int64_t ob) {
                if (ga) ga[oa] += g[i] * dfa(x[oa], y[ob], o[i]);
                if (gb) gb[ob] += g[i] * dfb(x[oa], y[ob], o[i]);
            });
        }
    };
    return make_result(name, out_shape, std::move(out), {a, b}, fn);
}

// f(x) -> value; df(x, out) -> derivative.
template <class F, class DF>
Tensor unary_op(const char* name, const Tensor& a, F f, DF df) {
    std::vector<double> out(a.values().begin(), a.values().end());
    for (double& v : out) v = f(v);
    auto fn = [df](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i] * df(p.value[i], node.value[i]);
    };
    return make_result(name, a.shape(), std::move(out), {a}, fn);
}

// Copies src (shape `in`) into dst permuted by `order`; adjoint when `reverse`.
void permute_copy(const double* src, const Shape& in, const std::vector<int64_t>& order, double* dst, bool reverse) {
    const size_t r = in.size();
    Shape out(r);
    for (size_t d = 0; d < r; ++d) out[d] = in[static_cast<size_t>(order[d])];
    const auto in_strides = contiguous_strides(in);
    std::vector<int64_t> s(r);
    for (size_t d = 0; d < r; ++d) s[d] = in_strides[static_cast<size_t>(order[d])];
    std::vector<int64_t> zero(r, 0);
    for_each_broadcast(out, s, zero, [&](int64_t i, int64_t off, int64_t) {
        if (reverse) {
            dst[off] += src[i];
        } else {
            dst[i] = src[off];
        }
    });
}

// Outer/axis/inner decomposition for axis reductions.
struct AxisSplit {
    int64_t outer = 1;
    int64_t len = 1;
    int64_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, int64_t axis) {
    AxisSplit s;
    for (int64_t d = 0; d < axis; ++d) s.outer *= shape[static_cast<size_t>(d)];
    s.len = shape[static_cast<size_t>(axis)];
    for (size_t d = static_cast<size_t>(axis) + 1; d < shape.size(); ++d) s.inner *= shape[d];
    return s;
}

void im2col2d(const double* x, int64_t channels, int64_t h, int64_t w, int64_t k, double* cols) {
    const int64_t pad = (k - 1) / 2;
    const int64_t hw = h * w;
    for (int64_t c = 0; c < channels; ++c) {
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
                double* row = cols + ((c * k + ky) * k + kx) * hw;
                for (int64_t y = 0; y < h; ++y) {
                    const int64_t sy = y + ky - pad;
                    double* dst = row + y * w;
                    if (sy < 0 || sy >= h) {
                        std::fill(dst, dst + w, 0.0);
                        continue;
                    }
                    const double* src = x + (c * h + sy) * w;
                    for (int64_t xx = 0; xx < w; ++xx) {
                        const int64_t sx = xx + kx - pad;
                        dst[xx] = (sx >= 0 && sx < w) ? src[sx] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im2d(const double* cols, int64_t channels, int64_t h, int64_t w, int64_t k, double* x) {
    const int64_t pad = (k - 1) / 2;
    const int64_t hw = h * w;
    for (int64_t c = 0; c < channels; ++c) {
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
                const double* row = cols + ((c * k + ky) * k + kx) * hw;
                for (int64_t y = 0; y < h; ++y) {
                    const int64_t sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    double* dst = x + (c * h + sy) * w;
                    for (int64_t xx = 0; xx < w; ++xx) {
                        const int64_t sx = xx + kx - pad;
                        if (sx >= 0 && sx < w) dst[sx] += row[y * w + xx];
                    }
                }
            }
        }
    }
}

void im2col3d(const double* x, int64_t channels, int64_t d, int64_t h, int64_t w, int64_t k, double* cols) {
    const int64_t pad = (k - 1) / 2;
    const int64_t dhw = d * h * w;
    for (int64_t c = 0; c < channels; ++c) {
        for (int64_t kz = 0; kz < k; ++kz) {
            for (int64_t ky = 0; ky < k; ++ky) {
                for (int64_t kx = 0; kx < k; ++kx) {
                    double* row = cols + (((c * k + kz) * k + ky) * k + kx) * dhw;
                    for (int64_t z = 0; z < d; ++z) {
                        const int64_t sz = z + kz - pad;
                        for (int64_t y = 0; y < h; ++y) {
                            const int64_t sy = y + ky - pad;
                            double* dst = row + (z * h + y) * w;
                            if (sz < 0 || sz >= d || sy < 0 || sy >= h) {
                                std::fill(dst, dst + w, 0.0);
                                continue;
                            }
                            const double* src = x + ((c * d + sz) * h + sy) * w;
                            for (int64_t xx = 0; xx < w; ++xx) {
                                const int64_t sx = xx + kx - pad;
                                dst[xx] = (sx >= 0 && sx < w) ? src[sx] : 0.0;
                            }
                        }
                    }
                }
            }
        }
    }
}

void col2im3d(const double* cols, int64_t channels, int64_t d, int64_t h, int64_t w, int64_t k, double* x) {
    const int64_t pad = (k - 1) / 2;
    const int64_t dhw = d * h * w;
    for (int64_t c = 0; c < channels; ++c) {
        for (int64_t kz = 0; kz < k; ++kz) {
            for (int64_t ky = 0; ky < k; ++ky) {
                for (int64_t kx = 0; kx < k; ++kx) {
                    const double* row = cols + (((c * k + kz) * k + ky) * k + kx) * dhw;
                    for (int64_t z = 0; z < d; ++z) {
                        const int64_t sz = z + kz - pad;
                        if (sz < 0 || sz >= d) continue;
                        for (int64_t y = 0; y < h; ++y) {
                            const int64_t sy = y + ky - pad;
                            if (sy < 0 || sy >= h) continue;
                            double* dst = x + ((c * d + sz) * h + sy) * w;
                            const double* src = row + (z * h + y) * w;
                            for (int64_t xx = 0; xx < w; ++xx) {
                                const int64_t sx = xx + kx - pad;
                                if (sx >= 0 && sx < w) dst[sx] += src[xx];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Shared GEMM-based convolution: weight [Co, Ci * k^dims] times columns.
// `spatial` lists the spatial extents (2 or 3 of them).
Tensor conv_nd(const char* name, const Tensor& x, const Tensor& weight, const Tensor& bias, int64_t dims) {
    if (x.rank() != dims + 1 || weight.rank() != dims + 2) {
        throw ShapeError(std::string(name) + ": bad ranks " + shape_str(x.shape()) + " / " + shape_str(weight.shape()));
    }
    const int64_t cin = x.dim(0);
    const int64_t cout = weight.dim(0);
    const int64_t k = weight.dim(2);
    if (weight.dim(1) != cin) {
        throw ShapeError(std::string(name) + ": channel mismatch, input has " + std::to_string(cin) +
                         " channels, kernel expects " + std::to_string(weight.dim(1)));
    }
    for (int64_t d = 2; d < dims + 2; ++d) {
        if (weight.dim(d) != k || k % 2 == 0) throw ShapeError(std::string(name) + ": kernel must be cubic and odd");
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) throw ShapeError(std::string(name) + ": bias shape");
    Shape spatial(x.shape().begin() + 1, x.shape().end());
    const int64_t npix = numel(spatial);
    int64_t kvol = 1;
    for (int64_t d = 0; d < dims; ++d) kvol *= k;
    const int64_t rows = cin * kvol;

    auto make_cols = [=](const double* src, std::vector<double>& cols) {
        if (k == 1) {
            cols.assign(src, src + rows * npix);
            return;
        }
        cols.resize(static_cast<size_t>(rows * npix));
        if (dims == 2) {
            im2col2d(src, cin, spatial[0], spatial[1], k, cols.data());
        } else {
            im2col3d(src, cin, spatial[0], spatial[1], spatial[2], k, cols.data());
        }
    };

    std::vector<double> cols;
    make_cols(x.values().data(), cols);
    std::vector<double> out(static_cast<size_t>(cout * npix));
    gemm(out.data(), false, weight.values().data(), false, cols.data(), false, cout, rows, npix);
    MutMap o(out.data(), cout, npix);
    if (bias.defined()) {
        for (int64_t c = 0; c < cout; ++c) o.row(c).array() += bias.values()[static_cast<size_t>(c)];
    }
    Shape out_shape{cout};
    out_shape.insert(out_shape.end(), spatial.begin(), spatial.end());

    const bool has_bias = bias.defined();
    auto fn = [=](Node& node) {
        Node& px = *node.parents[0];
        Node& pw = *node.parents[1];
        const double* g = node.grad.data();
        if (pw.requires_grad || px.requires_grad) {
            std::vector<double> c;
            if (pw.requires_grad) {
                make_cols(px.value.data(), c);
                gemm(pw.grad_buffer().data(), true, g, false, c.data(), true, cout, npix, rows);
            }
            if (px.requires_grad) {
                c.resize(static_cast<size_t>(rows * npix));
                gemm(c.data(), false, pw.value.data(), true, g, false, rows, cout, npix);
                auto& gx = px.grad_buffer();
                if (k == 1) {
                    for (size_t i = 0; i < gx.size(); ++i) gx[i] += c[i];
                } else if (dims == 2) {
                    col2im2d(c.data(), cin, spatial[0], spatial[1], k, gx.data());
                } else {
                    col2im3d(c.data(), cin, spatial[0], spatial[1], spatial[2], k, gx.data());
                }
            }
        }
        if (has_bias) {
            Node& pb = *node.parents[2];
            if (pb.requires_grad) {
                auto& gb = pb.grad_buffer();
                for (int64_t c = 0; c < cout; ++c) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < npix; ++i) acc += g[c * npix + i];
                    gb[static_cast<size_t>(c)] += acc;
                }
            }
        }
    };
    std::vector<Tensor> parents{x, weight};
    if (has_bias) parents.push_back(bias);
    return make_result(name, std::move(out_shape), std::move(out), std::move(parents), fn);
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (size_t d = 0; d < r; ++d) {
        const int64_t da = d < r - a.size() ? 1 : a[d - (r - a.size())];
        const int64_t db = d < r - b.size() ? 1 : b[d - (r - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
        }
        out[d] = std::max(da, db);
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double o) { return -o / y; });
}

Tensor neg(const Tensor& a) {
    return unary_op("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double s) {
    return unary_op("scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
    return unary_op("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor exp(const Tensor& a) {
    return unary_op("exp", a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Tensor tanh(const Tensor& a) {
    return unary_op("tanh", a, [](double x) { return std::tanh(x); }, [](double, double o) { return 1.0 - o * o; });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
    return unary_op(
        "silu", a, [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    auto fn = [](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        const double g = node.grad[0];
        for (double& v : p.grad_buffer()) v += g;
    };
    return make_result("sum", Shape{1}, {total}, {a}, fn);
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_axis(const Tensor& a, int64_t axis, bool keepdim) {
    axis = normalize_axis(axis, a.rank());
    const AxisSplit s = split_axis(a.shape(), axis);
    std::vector<double> out(static_cast<size_t>(s.outer * s.inner), 0.0);
    const double* v = a.values().data();
    for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t l = 0; l < s.len; ++l) {
            const double* row = v + (o * s.len + l) * s.inner;
            double* dst = out.data() + o * s.inner;
            for (int64_t i = 0; i < s.inner; ++i) dst[i] += row[i];
        }
    }
    Shape shape = a.shape();
    if (keepdim) {
        shape[static_cast<size_t>(axis)] = 1;
    } else {
        shape.erase(shape.begin() + axis);
        if (shape.empty()) shape.push_back(1);
    }
    auto fn = [s](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (int64_t o = 0; o < s.outer; ++o) {
            for (int64_t l = 0; l < s.len; ++l) {
                double* dst = g.data() + (o * s.len + l) * s.inner;
                const double* src = node.grad.data() + o * s.inner;
                for (int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
            }
        }
    };
    return make_result("sum_axis", std::move(shape), std::move(out), {a}, fn);
}

Tensor mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    return mean(square(sub(a, b)));
}

Tensor reshape(const Tensor& a, Shape shape) {
    int64_t infer = -1;
    int64_t known = 1;
    for (size_t d = 0; d < shape.size(); ++d) {
        if (shape[d] == -1) {
            if (infer >= 0) throw ShapeError("reshape: more than one inferred extent");
            infer = static_cast<int64_t>(d);
        } else {
            known *= shape[d];
        }
    }
    if (infer >= 0) {
        if (known <= 0 || a.numel() % known != 0) throw ShapeError("reshape: cannot infer extent");
        shape[static_cast<size_t>(infer)] = a.numel() / known;
    }
    if (numel(shape) != a.numel()) {
        throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    auto fn = [](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    };
    return make_result("reshape", std::move(shape), std::vector<double>(a.values().begin(), a.values().end()), {a}, fn);
}

Tensor permute(const Tensor& a, const std::vector<int64_t>& order) {
    const int64_t r = a.rank();
    if (static_cast<int64_t>(order.size()) != r) throw ShapeError("permute: order rank mismatch");
    std::vector<bool> used(static_cast<size_t>(r), false);
    Shape out_shape(static_cast<size_t>(r));
    for (int64_t d = 0; d < r; ++d) {
        const int64_t src = order[static_cast<size_t>(d)];
        if (src < 0 || src >= r || used[static_cast<size_t>(src)]) throw ShapeError("permute: invalid order");
        used[static_cast<size_t>(src)] = true;
        out_shape[static_cast<size_t>(d)] = a.dim(src);
    }
    std::vector<double> out(static_cast<size_t>(a.numel()));
    const Shape in_shape = a.shape();
    permute_copy(a.values().data(), in_shape, order, out.data(), false);
    auto fn = [in_shape, order](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        permute_copy(node.grad.data(), in_shape, order, p.grad_buffer().data(), true);
    };
    return make_result("permute", std::move(out_shape), std::move(out), {a}, fn);
}

Tensor transpose(const Tensor& a, int64_t axis0, int64_t axis1) {
    axis0 = normalize_axis(axis0, a.rank());
    axis1 = normalize_axis(axis1, a.rank());
    std::vector<int64_t> order(static_cast<size_t>(a.rank()));
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[static_cast<size_t>(axis0)], order[static_cast<size_t>(axis1)]);
    return permute(a, order);
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
    if (broadcast_shapes(a.shape(), shape) != shape) {
        throw ShapeError("broadcast_to: " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    return add(a, Tensor::zeros(shape));
}

Tensor concat(std::span<const Tensor> parts, int64_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int64_t r = parts[0].rank();
    axis = normalize_axis(axis, r);
    Shape out_shape = parts[0].shape();
    int64_t total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != r) throw ShapeError("concat: rank mismatch");
        for (int64_t d = 0; d < r; ++d) {
            if (d != axis && p.dim(d) != out_shape[static_cast<size_t>(d)]) {
                throw ShapeError("concat: extent mismatch " + shape_str(p.shape()) + " vs " + shape_str(out_shape));
            }
        }
        total += p.dim(axis);
    }
    out_shape[static_cast<size_t>(axis)] = total;
    const AxisSplit s = split_axis(out_shape, axis);
    std::vector<double> out(static_cast<size_t>(numel(out_shape)));
    std::vector<int64_t> offsets;
    int64_t offset = 0;
    for (const Tensor& p : parts) {
        offsets.push_back(offset);
        const int64_t block = p.dim(axis) * s.inner;
        const double* src = p.values().data();
        for (int64_t o = 0; o < s.outer; ++o) {
            std::copy(src + o * block, src + (o + 1) * block, out.data() + o * s.len * s.inner + offset * s.inner);
        }
        offset += p.dim(axis);
    }
    std::vector<Tensor> parents(parts.begin(), parts.end());
    auto fn = [s, offsets, axis](Node& node) {
        for (size_t k = 0; k < node.parents.size(); ++k) {
            Node& p = *node.parents[k];
            if (!p.requires_grad) continue;
            const int64_t block = p.shape[static_cast<size_t>(axis)] * s.inner;
            auto& g = p.grad_buffer();
            for (int64_t o = 0; o < s.outer; ++o) {
                const double* src = node.grad.data() + o * s.len * s.inner + offsets[k] * s.inner;
                double* dst = g.data() + o * block;
                for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
            }
        }
    };
    return make_result("concat", std::move(out_shape), std::move(out), std::move(parents), fn);
}

Tensor stack(std::span<const Tensor> parts, int64_t axis) {
    if (parts.empty()) throw ShapeError("stack: no inputs");
    const int64_t r = parts[0].rank() + 1;
    if (axis < 0) axis += r;
    std::vector<Tensor> expanded;
    expanded.reserve(parts.size());
    for (const Tensor& p : parts) {
        Shape s = p.shape();
        s.insert(s.begin() + axis, 1);
        expanded.push_back(reshape(p, s));
    }
    return concat(expanded, axis);
}

Tensor slice(const Tensor& a, int64_t axis, int64_t start, int64_t length) {
    axis = normalize_axis(axis, a.rank());
    if (start < 0 || length < 1 || start + length > a.dim(axis)) throw ShapeError("slice: range out of bounds");
    const AxisSplit s = split_axis(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape[static_cast<size_t>(axis)] = length;
    std::vector<double> out(static_cast<size_t>(numel(out_shape)));
    const double* v = a.values().data();
    for (int64_t o = 0; o < s.outer; ++o) {
        const double* src = v + (o * s.len + start) * s.inner;
        std::copy(src, src + length * s.inner, out.data() + o * length * s.inner);
    }
    auto fn = [s, start, length](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (int64_t o = 0; o < s.outer; ++o) {
            double* dst = g.data() + (o * s.len + start) * s.inner;
            const double* src = node.grad.data() + o * length * s.inner;
            for (int64_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
        }
    };
    return make_result("slice", std::move(out_shape), std::move(out), {a}, fn);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul: operands must have rank >= 2");
    const int64_t m = a.dim(-2);
    const int64_t k = a.dim(-1);
    const int64_t n = b.dim(-1);
    if (b.dim(-2) != k) {
        throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
    const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
    Shape batch = broadcast_shapes(batch_a.empty() ? Shape{1} : batch_a, batch_b.empty() ? Shape{1} : batch_b);
    if (batch_a.empty() && batch_b.empty()) batch.clear();

    // (a offset, b offset) per output matrix, in units of whole matrices.
    std::vector<std::pair<int64_t, int64_t>> pairs;
    bool flat_b = batch_b.empty() || numel(batch_b) == 1;
    if (flat_b) {
        // b is a single matrix: fold all of a's rows into one product.
        pairs.emplace_back(0, 0);
    } else {
        const Shape bs = batch.empty() ? Shape{1} : batch;
        const auto sa = broadcast_strides(batch_a.empty() ? Shape{1} : batch_a, bs);
        const auto sb = broadcast_strides(batch_b, bs);
        for_each_broadcast(bs, sa, sb, [&](int64_t, int64_t oa, int64_t ob) { pairs.emplace_back(oa, ob); });
    }
    const int64_t rows_a = flat_b ? a.numel() / k : m;
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);

    std::vector<double> out(static_cast<size_t>(numel(out_shape)));
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (size_t p = 0; p < pairs.size(); ++p) {
        gemm(out.data() + static_cast<int64_t>(p) * rows_a * n, false, av + pairs[p].first * m * k, false,
             bv + pairs[p].second * k * n, false, rows_a, k, n);
    }
    auto fn = [pairs, rows_a, m, k, n](Node& node) {
        Node& pa = *node.parents[0];
        Node& pb = *node.parents[1];
        const double* g = node.grad.data();
        for (size_t p = 0; p < pairs.size(); ++p) {
            const double* gm = g + static_cast<int64_t>(p) * rows_a * n;
            if (pa.requires_grad) {
                gemm(pa.grad_buffer().data() + pairs[p].first * m * k, true, gm, false,
                     pb.value.data() + pairs[p].second * k * n, true, rows_a, n, k);
            }
            if (pb.requires_grad) {
                gemm(pb.grad_buffer().data() + pairs[p].second * k * n, true, pa.value.data() + pairs[p].first * m * k,
                     true, gm, false, k, rows_a, n);
            }
        }
    };
    return make_result("matmul", std::move(out_shape), std::move(out), {a, b}, fn);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() == 1) {
        Tensor y = reshape(matmul(reshape(x, {1, x.numel()}), w), {w.dim(1)});
        return b.defined() ? add(y, b) : y;
    }
    Tensor y = matmul(x, w);
    return b.defined() ? add(y, b) : y;
}

Tensor softmax(const Tensor& a, int64_t axis) {
    Tensor ones = Tensor::ones(Shape{1});
    return masked_softmax(a, ones, axis);
}

Tensor masked_softmax(const Tensor& a, const Tensor& mask, int64_t axis) {
    axis = normalize_axis(axis, a.rank());
    const AxisSplit s = split_axis(a.shape(), axis);
    std::vector<double> keep;
    const bool all_valid = mask.numel() == 1 && mask[0] != 0.0;
    if (!all_valid) {
        const auto sm = broadcast_strides(mask.shape(), a.shape());
        if (broadcast_shapes(mask.shape(), a.shape()) != a.shape()) throw ShapeError("masked_softmax: mask shape");
        keep.resize(static_cast<size_t>(a.numel()));
        std::vector<int64_t> zero(a.shape().size(), 0);
        const double* mv = mask.values().data();
        for_each_broadcast(a.shape(), sm, zero, [&](int64_t i, int64_t om, int64_t) { keep[i] = mv[om]; });
    }
    std::vector<double> out(static_cast<size_t>(a.numel()), 0.0);
    const double* v = a.values().data();
    for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t in = 0; in < s.inner; ++in) {
            const int64_t base = o * s.len * s.inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t l = 0; l < s.len; ++l) {
                const int64_t idx = base + l * s.inner;
                if (all_valid || keep[idx] != 0.0) mx = std::max(mx, v[idx]);
            }
            if (mx == -std::numeric_limits<double>::infinity()) continue;
            double z = 0.0;
            for (int64_t l = 0; l < s.len; ++l) {
                const int64_t idx = base + l * s.inner;
                if (all_valid || keep[idx] != 0.0) {
                    out[idx] = std::exp(v[idx] - mx);
                    z += out[idx];
                }
            }
            for (int64_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= z;
        }
    }
    auto fn = [s](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        const double* y = node.value.data();
        const double* gy = node.grad.data();
        for (int64_t o = 0; o < s.outer; ++o) {
            for (int64_t in = 0; in < s.inner; ++in) {
                const int64_t base = o * s.len * s.inner + in;
                double dot = 0.0;
                for (int64_t l = 0; l < s.len; ++l) dot += y[base + l * s.inner] * gy[base + l * s.inner];
                for (int64_t l = 0; l < s.len; ++l) {
                    const int64_t idx = base + l * s.inner;
                    g[idx] += y[idx] * (gy[idx] - dot);
                }
            }
        }
    };
    return make_result("softmax", a.shape(), std::move(out), {a}, fn);
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return conv_nd("conv2d", x, weight, bias, 2);
}

Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return conv_nd("conv3d", x, weight, bias, 3);
}

Tensor avg_pool2(const Tensor& x) {
    if (x.rank() != 3 || x.dim(1) % 2 != 0 || x.dim(2) % 2 != 0) {
        throw ShapeError("avg_pool2: need [C, H, W] with even H, W, got " + shape_str(x.shape()));
    }
    const int64_t c = x.dim(0);
    const int64_t h = x.dim(1);
    const int64_t w = x.dim(2);
    const int64_t ho = h / 2;
    const int64_t wo = w / 2;
    std::vector<double> out(static_cast<size_t>(c * ho * wo));
    const double* v = x.values().data();
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < ho; ++y) {
            for (int64_t xx = 0; xx < wo; ++xx) {
                const double* p = v + (ch * h + 2 * y) * w + 2 * xx;
                out[(ch * ho + y) * wo + xx] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
            }
        }
    }
    auto fn = [c, h, w, ho, wo](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (int64_t ch = 0; ch < c; ++ch) {
            for (int64_t y = 0; y < ho; ++y) {
                for (int64_t xx = 0; xx < wo; ++xx) {
                    const double q = 0.25 * node.grad[(ch * ho + y) * wo + xx];
                    double* d = g.data() + (ch * h + 2 * y) * w + 2 * xx;
                    d[0] += q;
                    d[1] += q;
                    d[w] += q;
                    d[w + 1] += q;
                }
            }
        }
    };
    return make_result("avg_pool2", Shape{c, ho, wo}, std::move(out), {x}, fn);
}

Tensor upsample_nearest2(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("upsample_nearest2: need [C, H, W]");
    const int64_t c = x.dim(0);
    const int64_t h = x.dim(1);
    const int64_t w = x.dim(2);
    const int64_t ho = 2 * h;
    const int64_t wo = 2 * w;
    std::vector<double> out(static_cast<size_t>(c * ho * wo));
    const double* v = x.values().data();
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < ho; ++y) {
            for (int64_t xx = 0; xx < wo; ++xx) out[(ch * ho + y) * wo + xx] = v[(ch * h + y / 2) * w + xx / 2];
        }
    }
    auto fn = [c, h, w, ho, wo](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (int64_t ch = 0; ch < c; ++ch) {
            for (int64_t y = 0; y < ho; ++y) {
                for (int64_t xx = 0; xx < wo; ++xx) g[(ch * h + y / 2) * w + xx / 2] += node.grad[(ch * ho + y) * wo + xx];
            }
        }
    };
    return make_result("upsample_nearest2", Shape{c, ho, wo}, std::move(out), {x}, fn);
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int64_t groups, double eps) {
    const int64_t c = x.dim(0);
    if (groups < 1 || c % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
    if (gamma.numel() != c || beta.numel() != c) throw ShapeError("group_norm: affine parameter shape");
    const int64_t spatial = x.numel() / c;
    const int64_t per_group = c / groups;
    const int64_t count = per_group * spatial;
    std::vector<double> means(static_cast<size_t>(groups));
    std::vector<double> rstds(static_cast<size_t>(groups));
    std::vector<double> out(static_cast<size_t>(x.numel()));
    const double* v = x.values().data();
    const double* gm = gamma.values().data();
    const double* bt = beta.values().data();
    for (int64_t g = 0; g < groups; ++g) {
        const double* base = v + g * count;
        double mu = 0.0;
        for (int64_t i = 0; i < count; ++i) mu += base[i];
        mu /= static_cast<double>(count);
        double var = 0.0;
        for (int64_t i = 0; i < count; ++i) var += (base[i] - mu) * (base[i] - mu);
        var /= static_cast<double>(count);
        const double rstd = 1.0 / std::sqrt(var + eps);
        means[g] = mu;
        rstds[g] = rstd;
        for (int64_t ch = 0; ch < per_group; ++ch) {
            const int64_t cc = g * per_group + ch;
            for (int64_t s = 0; s < spatial; ++s) {
                const int64_t i = cc * spatial + s;
                out[i] = (v[i] - mu) * rstd * gm[cc] + bt[cc];
            }
        }
    }
    auto fn = [=](Node& node) {
        Node& px = *node.parents[0];
        Node& pg = *node.parents[1];
        Node& pb = *node.parents[2];
        const double* xv = px.value.data();
        const double* gy = node.grad.data();
        std::vector<double> dxhat(static_cast<size_t>(count));
        for (int64_t g = 0; g < groups; ++g) {
            const double mu = means[g];
            const double rstd = rstds[g];
            double m1 = 0.0;
            double m2 = 0.0;
            for (int64_t ch = 0; ch < per_group; ++ch) {
                const int64_t cc = g * per_group + ch;
                double dg = 0.0;
                double db = 0.0;
                for (int64_t s = 0; s < spatial; ++s) {
                    const int64_t i = cc * spatial + s;
                    const double xhat = (xv[i] - mu) * rstd;
                    dg += gy[i] * xhat;
                    db += gy[i];
                    const double d = gy[i] * pg.value[cc];
                    dxhat[ch * spatial + s] = d;
                    m1 += d;
                    m2 += d * xhat;
                }
                if (pg.requires_grad) pg.grad_buffer()[cc] += dg;
                if (pb.requires_grad) pb.grad_buffer()[cc] += db;
            }
            if (!px.requires_grad) continue;
            m1 /= static_cast<double>(count);
            m2 /= static_cast<double>(count);
            auto& gx = px.grad_buffer();
            for (int64_t j = 0; j < count; ++j) {
                const int64_t i = g * count + j;
                const double xhat = (xv[i] - mu) * rstd;
                gx[i] += rstd * (dxhat[j] - m1 - xhat * m2);
            }
        }
    };
    return make_result("group_norm", x.shape(), std::move(out), {x, gamma, beta}, fn);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& key_mask, int64_t heads,
                 Tensor* weights) {
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) throw ShapeError("attention: operands must be [B, L, W]");
    const int64_t b = q.dim(0), lq = q.dim(1), w = q.dim(2), lk = k.dim(1);
    if (k.dim(0) != b || v.dim(0) != b || k.dim(2) != w || v.shape() != k.shape()) {
        throw ShapeError("attention: " + shape_str(q.shape()) + " / " + shape_str(k.shape()) + " / " +
                         shape_str(v.shape()));
    }
    if (heads < 1 || w % heads != 0) throw ShapeError("attention: width not divisible by head count");
    if (key_mask.defined() && key_mask.shape() != Shape{b, lk}) throw ShapeError("attention: key mask must be [B, Lk]");
    const int64_t dh = w / heads;
    const double scale_f = 1.0 / std::sqrt(static_cast<double>(dh));
    const double* qv = q.values().data();
    const double* kv = k.values().data();
    const double* vv = v.values().data();
    const double* mv = key_mask.defined() ? key_mask.values().data() : nullptr;

    auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(b * heads * lq * lk), 0.0);
    std::vector<double> out(static_cast<size_t>(b * lq * w), 0.0);
    std::vector<double> logit(static_cast<size_t>(lk));
    for (int64_t bi = 0; bi < b; ++bi) {
        const double* m = mv ? mv + bi * lk : nullptr;
        for (int64_t h = 0; h < heads; ++h) {
            for (int64_t i = 0; i < lq; ++i) {
                const double* qr = qv + (bi * lq + i) * w + h * dh;
                double* a = probs->data() + ((bi * heads + h) * lq + i) * lk;
                double mx = -std::numeric_limits<double>::infinity();
                for (int64_t j = 0; j < lk; ++j) {
                    if (m && m[j] == 0.0) continue;
                    const double* kr = kv + (bi * lk + j) * w + h * dh;
                    double dot = 0.0;
                    for (int64_t d = 0; d < dh; ++d) dot += qr[d] * kr[d];
                    logit[static_cast<size_t>(j)] = dot * scale_f;
                    mx = std::max(mx, logit[static_cast<size_t>(j)]);
                }
                if (mx == -std::numeric_limits<double>::infinity()) continue;
                double total = 0.0;
                for (int64_t j = 0; j < lk; ++j) {
                    if (m && m[j] == 0.0) continue;
                    a[j] = std::exp(logit[static_cast<size_t>(j)] - mx);
                    total += a[j];
                }
                double* o = out.data() + (bi * lq + i) * w + h * dh;
                for (int64_t j = 0; j < lk; ++j) {
                    if (a[j] == 0.0) continue;
                    a[j] /= total;
                    const double* vr = vv + (bi * lk + j) * w + h * dh;
                    for (int64_t d = 0; d < dh; ++d) o[d] += a[j] * vr[d];
                }
            }
        }
    }
    if (weights) *weights = Tensor(Shape{b, heads, lq, lk}, *probs);

    auto fn = [probs, b, lq, lk, w, heads, dh, scale_f](Node& node) {
        Node& nq = *node.parents[0];
        Node& nk = *node.parents[1];
        Node& nv = *node.parents[2];
        const double* g = node.grad.data();
        double* gq = nq.requires_grad ? nq.grad_buffer().data() : nullptr;
        double* gk = nk.requires_grad ? nk.grad_buffer().data() : nullptr;
        double* gv = nv.requires_grad ? nv.grad_buffer().data() : nullptr;
        const double* qv = nq.value.data();
        const double* kv = nk.value.data();
        const double* vv = nv.value.data();
        std::vector<double> da(static_cast<size_t>(lk));
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t h = 0; h < heads; ++h)
                for (int64_t i = 0; i < lq; ++i) {
                    const double* a = probs->data() + ((bi * heads + h) * lq + i) * lk;
                    const double* gr = g + (bi * lq + i) * w + h * dh;
                    double dot = 0.0;
                    for (int64_t j = 0; j < lk; ++j) {
                        da[static_cast<size_t>(j)] = 0.0;
                        if (a[j] == 0.0) continue;
                        const double* vr = vv + (bi * lk + j) * w + h * dh;
                        double s = 0.0;
                        for (int64_t d = 0; d < dh; ++d) s += gr[d] * vr[d];
                        da[static_cast<size_t>(j)] = s;
                        dot += a[j] * s;
                        if (gv) {
                            double* gvr = gv + (bi * lk + j) * w + h * dh;
                            for (int64_t d = 0; d < dh; ++d) gvr[d] += a[j] * gr[d];
                        }
                    }
                    const double* qr = qv + (bi * lq + i) * w + h * dh;
                    double* gqr = gq ? gq + (bi * lq + i) * w + h * dh : nullptr;
                    for (int64_t j = 0; j < lk; ++j) {
                        if (a[j] == 0.0) continue;
                        const double ds = a[j] * (da[static_cast<size_t>(j)] - dot) * scale_f;
                        const double* kr = kv + (bi * lk + j) * w + h * dh;
                        if (gqr)
                            for (int64_t d = 0; d < dh; ++d) gqr[d] += ds * kr[d];
                        if (gk) {
                            double* gkr = gk + (bi * lk + j) * w + h * dh;
                            for (int64_t d = 0; d < dh; ++d) gkr[d] += ds * qr[d];
                        }
                    }
                }
    };
    return make_result("attention", Shape{b, lq, w}, std::move(out), {q, k, v}, fn);
}

namespace {

// Lower corner and fraction for a continuous index on an axis of `extent`
// samples. Returns false when the coordinate leaves [0, extent - 1].
bool lattice_cell(double coord, int64_t extent, int64_t& lo, int64_t& hi, double& frac) {
    if (!(coord >= 0.0) || coord > static_cast<double>(extent - 1)) return false;
    lo = std::min<int64_t>(static_cast<int64_t>(std::floor(coord)), std::max<int64_t>(extent - 2, 0));
    hi = std::min<int64_t>(lo + 1, extent - 1);
    frac = coord - static_cast<double>(lo);
    return true;
}

template <int Dims>
Sampled lattice_sample(const char* name, const Tensor& field, const Tensor& coords) {
    constexpr int corners = 1 << Dims;
    if (field.rank() != Dims + 1) throw ShapeError(std::string(name) + ": field must be [C, ...] with " + std::to_string(Dims) + " spatial axes");
    if (coords.rank() != 2 || coords.dim(1) != Dims) throw ShapeError(std::string(name) + ": coords must be [K, " + std::to_string(Dims) + "]");
    const int64_t channels = field.dim(0);
    const int64_t count = coords.dim(0);
    int64_t extents[Dims];
    int64_t plane = 1;
    for (int d = 0; d < Dims; ++d) {
        extents[d] = field.dim(d + 1);
        plane *= extents[d];
    }
    std::vector<int64_t> index(static_cast<size_t>(count * corners), 0);
    std::vector<double> weight(static_cast<size_t>(count * corners), 0.0);
    std::vector<double> mask(static_cast<size_t>(count), 0.0);
    const double* cv = coords.values().data();
    for (int64_t s = 0; s < count; ++s) {
        int64_t lo[Dims];
        int64_t hi[Dims];
        double fr[Dims];
        bool ok = true;
        for (int d = 0; d < Dims && ok; ++d) ok = lattice_cell(cv[s * Dims + d], extents[d], lo[d], hi[d], fr[d]);
        if (!ok) continue;
        mask[s] = 1.0;
        for (int c = 0; c < corners; ++c) {
            int64_t flat = 0;
            double wgt = 1.0;
            for (int d = 0; d < Dims; ++d) {
                const bool upper = (c >> (Dims - 1 - d)) & 1;
                flat = flat * extents[d] + (upper ? hi[d] : lo[d]);
                wgt *= upper ? fr[d] : 1.0 - fr[d];
            }
            index[s * corners + c] = flat;
            weight[s * corners + c] = wgt;
        }
    }
    std::vector<double> out(static_cast<size_t>(count * channels), 0.0);
    const double* fv = field.values().data();
    for (int64_t s = 0; s < count; ++s) {
        if (mask[s] == 0.0) continue;
        for (int64_t ch = 0; ch < channels; ++ch) {
            const double* f = fv + ch * plane;
            double acc = 0.0;
            for (int c = 0; c < corners; ++c) acc += weight[s * corners + c] * f[index[s * corners + c]];
            out[s * channels + ch] = acc;
        }
    }
    auto fn = [index = std::move(index), weight = std::move(weight), count, channels, plane](Node& node) {
        Node& p = *node.parents[0];
        if (!p.requires_grad) return;
        auto& g = p.grad_buffer();
        for (int64_t s = 0; s < count; ++s) {
            for (int64_t ch = 0; ch < channels; ++ch) {
                const double gv = node.grad[s * channels + ch];
                if (gv == 0.0) continue;
                double* f = g.data() + ch * plane;
                for (int c = 0; c < corners; ++c) f[index[s * corners + c]] += weight[s * corners + c] * gv;
            }
        }
    };
    Sampled result;
    result.features = make_result(name, Shape{count, channels}, std::move(out), {field}, fn);
    result.mask = Tensor(Shape{count}, std::move(mask));
    return result;
}

}  // namespace

Sampled bilinear_sample2d(const Tensor& map, const Tensor& coords) {
    return lattice_sample<2>("bilinear_sample2d", map, coords);
}

Sampled trilinear_sample3d(const Tensor& volume, const Tensor& coords) {
    return lattice_sample<3>("trilinear_sample3d", volume, coords);
}

}  // namespace mvc
