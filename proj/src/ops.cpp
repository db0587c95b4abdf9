#include "survmamba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "survmamba/error.hpp"

namespace survmamba {
namespace {

Tape& tape_of(Var v) {
    if (!v.tape) throw Error("variable is not attached to a tape");
    return *v.tape;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_scalar(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// Elementwise op with derivative computed from the input value.
template <class F, class DF>
Var unary(Var x, F f, DF df) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.value();
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
    const std::size_t xi = x.id;
    return t.push(std::move(y), {x}, [xi, df](Tape& tp, std::size_t self) {
        const Tensor& xv = tp.value(xi);
        auto g = tp.grad(self);
        auto gx = tp.accum(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i]);
    });
}

// Token-axis geometry of a [..., M, C] tensor.
struct SeqDims {
    std::size_t outer;
    std::size_t tokens;
    std::size_t channels;
};

SeqDims seq_dims(const char* op, const Tensor& x) {
    if (x.rank() < 2) throw DimensionError(std::string(op) + ": expected rank >= 2, got " + shape_str(x.shape()));
    const std::size_t m = x.shape()[x.rank() - 2];
    const std::size_t c = x.shape().back();
    return {x.size() / std::max<std::size_t>(1, m * c), m, c};
}

}  // namespace

Var linear(Var x, Var w, std::optional<Var> b) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (wv.rank() != 2 || xv.rank() < 1 || xv.cols() != wv.dim(0)) {
        throw DimensionError("linear: input " + shape_str(xv.shape()) + " incompatible with weight " +
                             shape_str(wv.shape()));
    }
    const std::size_t rows = xv.rows(), din = wv.dim(0), dout = wv.dim(1);
    if (b && (b->value().rank() != 1 || b->value().dim(0) != dout)) {
        throw DimensionError("linear: bias " + shape_str(b->value().shape()) + " does not match weight " +
                             shape_str(wv.shape()));
    }
    Shape out_shape = xv.shape();
    out_shape.back() = dout;
    Tensor y(out_shape);
    const double* X = xv.data().data();
    const double* W = wv.data().data();
    double* Y = y.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        double* yr = Y + r * dout;
        if (b) std::copy_n(b->value().data().data(), dout, yr);
        const double* xr = X + r * din;
        for (std::size_t i = 0; i < din; ++i) {
            const double xi = xr[i];
            if (xi == 0.0) continue;
            const double* wr = W + i * dout;
            for (std::size_t j = 0; j < dout; ++j) yr[j] += xi * wr[j];
        }
    }
    const std::size_t xid = x.id, wid = w.id;
    const std::optional<std::size_t> bid = b ? std::optional<std::size_t>(b->id) : std::nullopt;
    if (b) {
        return t.push(std::move(y), {x, w, *b}, [=](Tape& tp, std::size_t self) {
            auto g = tp.grad(self);
            if (tp.needs_grad(*bid)) {
                auto gb = tp.accum(*bid);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < dout; ++j) gb[j] += g[r * dout + j];
            }
            const double* X = tp.value(xid).data().data();
            const double* W = tp.value(wid).data().data();
            if (tp.needs_grad(wid)) {
                auto gw = tp.accum(wid);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data() + r * dout;
                    for (std::size_t i = 0; i < din; ++i) {
                        const double xi = X[r * din + i];
                        if (xi == 0.0) continue;
                        double* gwr = gw.data() + i * dout;
                        for (std::size_t j = 0; j < dout; ++j) gwr[j] += xi * gr[j];
                    }
                }
            }
            if (tp.needs_grad(xid)) {
                auto gx = tp.accum(xid);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data() + r * dout;
                    for (std::size_t i = 0; i < din; ++i) {
                        const double* wr = W + i * dout;
                        double s = 0.0;
                        for (std::size_t j = 0; j < dout; ++j) s += wr[j] * gr[j];
                        gx[r * din + i] += s;
                    }
                }
            }
        });
    }
    return t.push(std::move(y), {x, w}, [=](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        const double* X = tp.value(xid).data().data();
        const double* W = tp.value(wid).data().data();
        if (tp.needs_grad(wid)) {
            auto gw = tp.accum(wid);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t i = 0; i < din; ++i) {
                    const double xi = X[r * din + i];
                    for (std::size_t j = 0; j < dout; ++j) gw[i * dout + j] += xi * g[r * dout + j];
                }
        }
        if (tp.needs_grad(xid)) {
            auto gx = tp.accum(xid);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t i = 0; i < din; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < dout; ++j) s += W[i * dout + j] * g[r * dout + j];
                    gx[r * din + i] += s;
                }
        }
    });
}

Var add(Var a, Var b) {
    require_same_shape("add", a.value(), b.value());
    Tensor y = a.value();
    y.drop_grad();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    const std::size_t ai = a.id, bi = b.id;
    return tape_of(a).push(std::move(y), {a, b}, [ai, bi](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        for (std::size_t id : {ai, bi}) {
            if (!tp.needs_grad(id)) continue;
            auto gx = tp.accum(id);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
    });
}

Var mul(Var a, Var b) {
    require_same_shape("mul", a.value(), b.value());
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    const std::size_t ai = a.id, bi = b.id;
    return tape_of(a).push(std::move(y), {a, b}, [ai, bi](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        const Tensor& av = tp.value(ai);
        const Tensor& bv = tp.value(bi);
        if (tp.needs_grad(ai)) {
            auto ga = tp.accum(ai);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (tp.needs_grad(bi)) {
            auto gb = tp.accum(bi);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var x, double factor) {
    return unary(x, [factor](double v) { return factor * v; }, [factor](double) { return factor; });
}

Var sigmoid(Var x) {
    return unary(x, sigmoid_scalar, [](double v) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 - s);
    });
}

Var silu(Var x) {
    return unary(x, [](double v) { return v * sigmoid_scalar(v); },
                 [](double v) {
                     const double s = sigmoid_scalar(v);
                     return s + v * s * (1.0 - s);
                 });
}

Var softplus(Var x) { return unary(x, softplus_scalar, sigmoid_scalar); }

Var neg_exp(Var x) {
    return unary(x, [](double v) { return -std::exp(v); }, [](double v) { return -std::exp(v); });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& xv = x.value();
    const std::size_t d = xv.cols(), rows = xv.rows();
    if (d == 0) throw DimensionError("layer_norm: empty last axis");
    if (gamma.value().shape() != Shape{d} || beta.value().shape() != Shape{d}) {
        throw DimensionError("layer_norm: input " + shape_str(xv.shape()) + " vs gamma " +
                             shape_str(gamma.value().shape()) + " / beta " + shape_str(beta.value().shape()));
    }
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    Tensor y(xv.shape());
    // Normalized rows and inverse std are reused by the backward pass.
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data().data() + r * d;
        double mean = 0.0;
        for (std::size_t i = 0; i < d; ++i) mean += xr[i];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
        var /= static_cast<double>(d);
        const double denom = std::sqrt(var + eps);
        const double is = denom > 0.0 ? 1.0 / denom : 0.0;
        (*inv_std)[r] = is;
        for (std::size_t i = 0; i < d; ++i) {
            const double h = (xr[i] - mean) * is;
            (*xhat)[r * d + i] = h;
            y[r * d + i] = gv[i] * h + bv[i];
        }
    }
    const std::size_t xi = x.id, gi = gamma.id, bi = beta.id;
    return tape_of(x).push(std::move(y), {x, gamma, beta}, [=](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        const Tensor& gv = tp.value(gi);
        if (tp.needs_grad(gi)) {
            auto gg = tp.accum(gi);
            for (std::size_t k = 0; k < g.size(); ++k) gg[k % d] += g[k] * (*xhat)[k];
        }
        if (tp.needs_grad(bi)) {
            auto gb = tp.accum(bi);
            for (std::size_t k = 0; k < g.size(); ++k) gb[k % d] += g[k];
        }
        if (tp.needs_grad(xi)) {
            auto gx = tp.accum(xi);
            for (std::size_t r = 0; r < rows; ++r) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double gh = g[r * d + i] * gv[i];
                    m1 += gh;
                    m2 += gh * (*xhat)[r * d + i];
                }
                m1 /= static_cast<double>(d);
                m2 /= static_cast<double>(d);
                for (std::size_t i = 0; i < d; ++i) {
                    const double gh = g[r * d + i] * gv[i];
                    gx[r * d + i] += (*inv_std)[r] * (gh - m1 - (*xhat)[r * d + i] * m2);
                }
            }
        }
    });
}

Var causal_depthwise_conv1d(Var x, Var kernel, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& kv = kernel.value();
    if (xv.rank() != 3 || kv.rank() != 2 || kv.dim(0) != xv.dim(2) || kv.dim(1) < 1 ||
        bias.value().shape() != Shape{xv.dim(2)}) {
        throw DimensionError("causal_depthwise_conv1d: input " + shape_str(xv.shape()) + ", kernel " +
                             shape_str(kv.shape()) + ", bias " + shape_str(bias.value().shape()));
    }
    const std::size_t B = xv.dim(0), M = xv.dim(1), E = xv.dim(2), W = kv.dim(1);
    const Tensor& bv = bias.value();
    Tensor y(xv.shape());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < M; ++t) {
            double* yr = y.data().data() + (b * M + t) * E;
            for (std::size_t e = 0; e < E; ++e) yr[e] = bv[e];
            for (std::size_t k = 0; k < W; ++k) {
                // source index t - (W-1) + k, skipped while in the zero pad
                if (t + k + 1 < W) continue;
                const std::size_t s = t + k + 1 - W;
                const double* xr = xv.data().data() + (b * M + s) * E;
                for (std::size_t e = 0; e < E; ++e) yr[e] += kv[e * W + k] * xr[e];
            }
        }
    const std::size_t xi = x.id, ki = kernel.id, bi = bias.id;
    return tape_of(x).push(std::move(y), {x, kernel, bias}, [=](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        const Tensor& xv = tp.value(xi);
        const Tensor& kv = tp.value(ki);
        const bool need_x = tp.needs_grad(xi), need_k = tp.needs_grad(ki);
        std::span<double> gx, gk;
        if (need_x) gx = tp.accum(xi);
        if (need_k) gk = tp.accum(ki);
        if (tp.needs_grad(bi)) {
            auto gb = tp.accum(bi);
            for (std::size_t k = 0; k < g.size(); ++k) gb[k % E] += g[k];
        }
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < M; ++t) {
                const double* gr = g.data() + (b * M + t) * E;
                for (std::size_t k = 0; k < W; ++k) {
                    if (t + k + 1 < W) continue;
                    const std::size_t s = t + k + 1 - W;
                    for (std::size_t e = 0; e < E; ++e) {
                        if (need_x) gx[(b * M + s) * E + e] += gr[e] * kv[e * W + k];
                        if (need_k) gk[e * W + k] += gr[e] * xv[(b * M + s) * E + e];
                    }
                }
            }
    });
}

Var reverse_tokens(Var x) {
    const Tensor& xv = x.value();
    const SeqDims sd = seq_dims("reverse_tokens", xv);
    Tensor y(xv.shape());
    auto src = [sd](std::size_t o, std::size_t t) { return (o * sd.tokens + (sd.tokens - 1 - t)) * sd.channels; };
    for (std::size_t o = 0; o < sd.outer; ++o)
        for (std::size_t t = 0; t < sd.tokens; ++t)
            std::copy_n(xv.data().data() + src(o, t), sd.channels,
                        y.data().data() + (o * sd.tokens + t) * sd.channels);
    const std::size_t xi = x.id;
    return tape_of(x).push(std::move(y), {x}, [=](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        auto gx = tp.accum(xi);
        for (std::size_t o = 0; o < sd.outer; ++o)
            for (std::size_t t = 0; t < sd.tokens; ++t)
                for (std::size_t c = 0; c < sd.channels; ++c)
                    gx[src(o, t) + c] += g[(o * sd.tokens + t) * sd.channels + c];
    });
}

Var concat_channels(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Shape sa = av.shape(), sb = bv.shape();
    if (sa.empty() || sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
        throw DimensionError("concat_channels: " + shape_str(sa) + " vs " + shape_str(sb));
    }
    const std::size_t ca = av.cols(), cb = bv.cols(), rows = av.rows();
    Shape so = sa;
    so.back() = ca + cb;
    Tensor y(so);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(av.data().data() + r * ca, ca, y.data().data() + r * (ca + cb));
        std::copy_n(bv.data().data() + r * cb, cb, y.data().data() + r * (ca + cb) + ca);
    }
    const std::size_t ai = a.id, bi = b.id;
    return tape_of(a).push(std::move(y), {a, b}, [=](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        if (tp.needs_grad(ai)) {
            auto ga = tp.accum(ai);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += g[r * (ca + cb) + c];
        }
        if (tp.needs_grad(bi)) {
            auto gb = tp.accum(bi);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += g[r * (ca + cb) + ca + c];
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    Tape& t = tape_of(parts.front());
    const std::size_t d = parts.front().value().cols();
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.value().rank() != 2 || p.value().cols() != d) {
            throw DimensionError("concat_rows: part " + shape_str(p.value().shape()) + " vs width " +
                                 std::to_string(d));
        }
        total += p.value().dim(0);
    }
    Tensor y(Shape{total, d});
    std::vector<std::size_t> ids, offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(), y.data().begin() + off);
        ids.push_back(p.id);
        offsets.push_back(off);
        off += p.value().size();
    }
    return t.push(std::move(y), std::span<const Var>(parts), [ids, offsets](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!tp.needs_grad(ids[k])) continue;
            auto gp = tp.accum(ids[k]);
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
        }
    });
}

Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw DimensionError("stack_rows: no inputs");
    std::vector<Var> parts;
    parts.reserve(rows.size());
    for (const Var& r : rows) {
        if (r.value().rank() != 1) throw DimensionError("stack_rows: expected 1-D rows, got " + shape_str(r.shape()));
        parts.push_back(reshape(r, Shape{1, r.value().dim(0)}));
    }
    return concat_rows(parts);
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || begin > end || end > xv.dim(0)) {
        throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                             shape_str(xv.shape()));
    }
    const std::size_t d = xv.dim(1);
    Tensor y(Shape{end - begin, d},
             std::vector<double>(xv.data().begin() + begin * d, xv.data().begin() + end * d));
    const std::size_t xi = x.id;
    return tape_of(x).push(std::move(y), {x}, [=](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        auto gx = tp.accum(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[begin * d + i] += g[i];
    });
}

Var reshape(Var x, Shape shape) {
    if (shape_size(shape) != x.value().size()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    Tensor y = x.value().reshaped(std::move(shape));
    const std::size_t xi = x.id;
    return tape_of(x).push(std::move(y), {x}, [xi](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        auto gx = tp.accum(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var mean_tokens(Var x) {
    const Tensor& xv = x.value();
    const SeqDims sd = seq_dims("mean_tokens", xv);
    if (sd.tokens == 0) throw DimensionError("mean_tokens: empty token axis");
    Shape so(xv.shape().begin(), xv.shape().end() - 2);
    so.push_back(sd.channels);
    Tensor y(so);
    const double inv = 1.0 / static_cast<double>(sd.tokens);
    // Running mean: a constant token axis pools to that constant exactly.
    for (std::size_t o = 0; o < sd.outer; ++o)
        for (std::size_t t = 0; t < sd.tokens; ++t)
            for (std::size_t c = 0; c < sd.channels; ++c) {
                double& m = y[o * sd.channels + c];
                m += (xv[(o * sd.tokens + t) * sd.channels + c] - m) / static_cast<double>(t + 1);
            }
    const std::size_t xi = x.id;
    return tape_of(x).push(std::move(y), {x}, [=](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        auto gx = tp.accum(xi);
        for (std::size_t o = 0; o < sd.outer; ++o)
            for (std::size_t t = 0; t < sd.tokens; ++t)
                for (std::size_t c = 0; c < sd.channels; ++c)
                    gx[(o * sd.tokens + t) * sd.channels + c] += g[o * sd.channels + c] * inv;
    });
}

Var max_tokens(Var x) {
    const Tensor& xv = x.value();
    const SeqDims sd = seq_dims("max_tokens", xv);
    if (sd.tokens == 0) throw DimensionError("max_tokens: empty token axis");
    Shape so(xv.shape().begin(), xv.shape().end() - 2);
    so.push_back(sd.channels);
    Tensor y(so, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> argmax(y.size(), 0);
    for (std::size_t o = 0; o < sd.outer; ++o)
        for (std::size_t t = 0; t < sd.tokens; ++t)
            for (std::size_t c = 0; c < sd.channels; ++c) {
                const std::size_t src = (o * sd.tokens + t) * sd.channels + c;
                if (xv[src] > y[o * sd.channels + c]) {
                    y[o * sd.channels + c] = xv[src];
                    argmax[o * sd.channels + c] = src;
                }
            }
    const std::size_t xi = x.id;
    return tape_of(x).push(std::move(y), {x}, [xi, argmax](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        auto gx = tp.accum(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
    });
}

std::vector<std::size_t> segment_sizes(std::size_t input_length, std::size_t length) {
    if (length < 1) throw ConfigError("segment length must be >= 1");
    if (length > input_length) {
        throw ConfigError("cannot pool " + std::to_string(input_length) + " tokens into " + std::to_string(length) +
                          " segments");
    }
    const std::size_t q = input_length / length, r = input_length % length;
    std::vector<std::size_t> sizes(length, q);
    for (std::size_t i = 0; i < r; ++i) ++sizes[i];
    return sizes;
}

Var segment_mean(Var x, std::size_t length) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw DimensionError("segment_mean: expected [L, D], got " + shape_str(xv.shape()));
    const std::size_t d = xv.dim(1);
    const auto sizes = segment_sizes(xv.dim(0), length);
    Tensor y(Shape{length, d});
    std::size_t row = 0;
    for (std::size_t s = 0; s < length; ++s) {
        for (std::size_t k = 0; k < sizes[s]; ++k, ++row)
            for (std::size_t c = 0; c < d; ++c) y[s * d + c] += (xv[row * d + c] - y[s * d + c]) / static_cast<double>(k + 1);
    }
    const std::size_t xi = x.id;
    return tape_of(x).push(std::move(y), {x}, [=](Tape& tp, std::size_t self) {
        auto g = tp.grad(self);
        auto gx = tp.accum(xi);
        std::size_t row = 0;
        for (std::size_t s = 0; s < sizes.size(); ++s) {
            const double inv = 1.0 / static_cast<double>(sizes[s]);
            for (std::size_t k = 0; k < sizes[s]; ++k, ++row)
                for (std::size_t c = 0; c < d; ++c) gx[row * d + c] += g[s * d + c] * inv;
        }
    });
}

Var sum(Var x) {
    const Tensor& xv = x.value();
    double s = 0.0;
    for (double v : xv.data()) s += v;
    const std::size_t xi = x.id;
    return tape_of(x).push(Tensor::scalar(s), {x}, [xi](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        auto gx = tp.accum(xi);
        for (double& v : gx) v += g;
    });
}

Var weighted_sum(Var x, const Tensor& weights) {
    require_same_shape("weighted_sum", x.value(), weights);
    const Tensor& xv = x.value();
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * weights[i];
    const std::size_t xi = x.id;
    return tape_of(x).push(Tensor::scalar(s), {x}, [xi, weights](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        auto gx = tp.accum(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
    });
}

}  // namespace survmamba
