#include "llmcodec/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include "llmcodec/error.hpp"
#include "llmcodec/fft.hpp"

namespace llmcodec::nn {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
    return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_size(shape))
        throw Error(ErrorCode::ShapeMismatch, "tensor data does not match shape " + shape_string(shape));
}

Tensor Tensor::from_grid(const FeatureGrid& g) { return Tensor({g.frames(), g.dim()}, g.data()); }

Tensor Tensor::from_samples(std::span<const double> s) {
    return Tensor({s.size()}, std::vector<double>(s.begin(), s.end()));
}

double Tensor::item() const {
    if (data.size() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on non-scalar tensor");
    return data[0];
}

FeatureGrid Tensor::to_grid() const {
    if (rank() != 2) throw Error(ErrorCode::ShapeMismatch, "to_grid() needs a rank-2 tensor");
    return FeatureGrid(shape[0], shape[1], data);
}

void Parameter::zero_grad() { grad = Tensor(value.shape); }

Parameter& ParameterStore::add(std::string id, Tensor value) {
    if (find(id)) throw Error(ErrorCode::InvalidArgument, "duplicate parameter " + id);
    Parameter p{std::move(id), std::move(value), {}};
    p.zero_grad();
    return items_.emplace_back(std::move(p));
}

Parameter* ParameterStore::find(std::string_view id) {
    for (auto& p : items_)
        if (p.id == id) return &p;
    return nullptr;
}

const Parameter* ParameterStore::find(std::string_view id) const {
    for (const auto& p : items_)
        if (p.id == id) return &p;
    return nullptr;
}

Parameter& ParameterStore::at(std::string_view id) {
    auto* p = find(id);
    if (!p) throw Error(ErrorCode::NotFound, "no parameter " + std::string(id), std::string(id));
    return *p;
}

void ParameterStore::zero_grad() {
    for (auto& p : items_) p.zero_grad();
}

const Tensor& Var::value() const { return graph->value(*this); }

// ---------------------------------------------------------------------------

Var Graph::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, false, nullptr});
    return {this, nodes_.size() - 1};
}

Var Graph::variable(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, true, nullptr});
    return {this, nodes_.size() - 1};
}

Var Graph::parameter(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, {}, true, &p});
    return {this, nodes_.size() - 1};
}

Var Graph::emit(Tensor value, std::initializer_list<Var> parents, Backward backward) {
    return emit(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Graph::emit(Tensor value, const std::vector<Var>& parents, Backward backward) {
    bool any = false;
    for (auto p : parents) {
        if (p.graph != this) throw Error(ErrorCode::InvalidArgument, "mixing vars from different graphs");
        any = any || nodes_[p.id].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, any ? std::move(backward) : Backward{}, any, nullptr});
    return {this, nodes_.size() - 1};
}

double* Graph::grad_data(Var v) {
    auto& n = nodes_[v.id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad.data();
}

std::vector<double> Graph::grad(Var v) const {
    const auto& n = nodes_[v.id];
    if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
    return n.grad;
}

void Graph::backward(Var root) {
    if (nodes_[root.id].value.size() != 1) throw Error(ErrorCode::ShapeMismatch, "backward root must be a scalar");
    for (auto& n : nodes_) n.grad.clear();
    if (!nodes_[root.id].requires_grad) return;
    nodes_[root.id].grad.assign(1, 1.0);
    for (std::size_t i = root.id + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (n.grad.empty()) continue;
        if (n.backward) n.backward(*this, n.grad);
        if (n.parameter) {
            auto& pg = n.parameter->grad.data;
            for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
        }
    }
}

// ---------------------------------------------------------------------------

namespace ops {

namespace {

void require_same(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
    if (a.value().rank() != rank)
        throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": expected rank " + std::to_string(rank) +
                                                  ", got " + shape_string(a.shape()));
}

template <typename F, typename D>
Var unary(Var a, F f, D df) {
    const auto& av = a.value();
    Tensor out(av.shape);
    for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = f(av.data[i]);
    return a.graph->emit(std::move(out), {a}, [a, df](Graph& g, const std::vector<double>& go) {
        double* ga = g.grad_data(a);
        const auto& x = g.value(a).data;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * df(x[i]);
    });
}

}  // namespace

Var add(Var a, Var b) {
    require_same(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] + b.value().data[i];
    return a.graph->emit(std::move(out), {a, b}, [a, b](Graph& g, const std::vector<double>& go) {
        if (double* ga = g.grad_data(a))
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        if (double* gb = g.grad_data(b))
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
    });
}

Var sub(Var a, Var b) {
    require_same(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] - b.value().data[i];
    return a.graph->emit(std::move(out), {a, b}, [a, b](Graph& g, const std::vector<double>& go) {
        if (double* ga = g.grad_data(a))
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        if (double* gb = g.grad_data(b))
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    });
}

Var mul(Var a, Var b) {
    require_same(a, b, "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] * b.value().data[i];
    return a.graph->emit(std::move(out), {a, b}, [a, b](Graph& g, const std::vector<double>& go) {
        const auto& av = g.value(a).data;
        const auto& bv = g.value(b).data;
        if (double* ga = g.grad_data(a))
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
        if (double* gb = g.grad_data(b))
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
    });
}

Var scale(Var a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Var add_scalar(Var a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); },
                 [](double x) {
                     const double t = std::tanh(x);
                     return 1.0 - t * t;
                 });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var abs(Var a) {
    return unary(a, [](double x) { return std::fabs(x); },
                 [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var log_eps(Var a, double eps) {
    return unary(a, [eps](double x) { return std::log(x + eps); }, [eps](double x) { return 1.0 / (x + eps); });
}

Var sum(Var a) {
    const auto& v = a.value().data;
    double acc = 0.0;
    for (double x : v) acc += x;
    return a.graph->emit(Tensor::scalar(acc), {a}, [a](Graph& g, const std::vector<double>& go) {
        double* ga = g.grad_data(a);
        const std::size_t n = g.value(a).size();
        for (std::size_t i = 0; i < n; ++i) ga[i] += go[0];
    });
}

Var mean(Var a) {
    const std::size_t n = a.size();
    if (n == 0) throw Error(ErrorCode::ShapeMismatch, "mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights) {
    if (terms.empty() || terms.size() != weights.size())
        throw Error(ErrorCode::ShapeMismatch, "weighted_sum needs one weight per term");
    double acc = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) acc += weights[i] * terms[i].value().item();
    return terms.front().graph->emit(Tensor::scalar(acc), terms,
                                     [terms, weights](Graph& g, const std::vector<double>& go) {
                                         for (std::size_t i = 0; i < terms.size(); ++i)
                                             if (double* gt = g.grad_data(terms[i])) gt[0] += go[0] * weights[i];
                                     });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    if (shape_size(shape) != a.size())
        throw Error(ErrorCode::ShapeMismatch, "reshape to " + shape_string(shape));
    return a.graph->emit(Tensor(std::move(shape), a.value().data), {a},
                         [a](Graph& g, const std::vector<double>& go) {
                             double* ga = g.grad_data(a);
                             for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                         });
}

Var transpose(Var a) {
    require_rank(a, 2, "transpose");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    Tensor out({c, r});
    const auto& v = a.value().data;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = v[i * c + j];
    return a.graph->emit(std::move(out), {a}, [a, r, c](Graph& g, const std::vector<double>& go) {
        double* ga = g.grad_data(a);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += go[j * r + i];
    });
}

Var slice_rows(Var a, std::size_t r0, std::size_t r1) {
    require_rank(a, 2, "slice_rows");
    const std::size_t c = a.shape()[1];
    if (r0 > r1 || r1 > a.shape()[0]) throw Error(ErrorCode::ShapeMismatch, "slice_rows out of range");
    const auto& v = a.value().data;
    Tensor out({r1 - r0, c}, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(r0 * c),
                                                 v.begin() + static_cast<std::ptrdiff_t>(r1 * c)));
    return a.graph->emit(std::move(out), {a}, [a, r0, c](Graph& g, const std::vector<double>& go) {
        double* ga = g.grad_data(a) + r0 * c;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
}

Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
    require_rank(a, 2, "slice_cols");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    if (c0 > c1 || c1 > c) throw Error(ErrorCode::ShapeMismatch, "slice_cols out of range");
    const std::size_t w = c1 - c0;
    Tensor out({r, w});
    const auto& v = a.value().data;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out.data[i * w + j] = v[i * c + c0 + j];
    return a.graph->emit(std::move(out), {a}, [a, r, c, c0, w](Graph& g, const std::vector<double>& go) {
        double* ga = g.grad_data(a);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) ga[i * c + c0 + j] += go[i * w + j];
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
    const std::size_t c = parts.front().shape().at(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_rows");
        if (p.shape()[1] != c) throw Error(ErrorCode::ShapeMismatch, "concat_rows column mismatch");
        rows += p.shape()[0];
    }
    Tensor out({rows, c});
    std::size_t at = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(at));
        at += p.size();
    }
    return parts.front().graph->emit(std::move(out), parts, [parts](Graph& g, const std::vector<double>& go) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            const std::size_t n = g.value(p).size();
            if (double* gp = g.grad_data(p))
                for (std::size_t i = 0; i < n; ++i) gp[i] += go[off + i];
            off += n;
        }
    });
}

Var slice1d(Var a, std::size_t s0, std::size_t s1) {
    require_rank(a, 1, "slice1d");
    if (s0 > s1 || s1 > a.size()) throw Error(ErrorCode::ShapeMismatch, "slice1d out of range");
    const auto& v = a.value().data;
    Tensor out({s1 - s0}, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(s0),
                                              v.begin() + static_cast<std::ptrdiff_t>(s1)));
    return a.graph->emit(std::move(out), {a}, [a, s0](Graph& g, const std::vector<double>& go) {
        double* ga = g.grad_data(a) + s0;
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
}

Var pad1d(Var a, std::size_t length) {
    require_rank(a, 1, "pad1d");
    if (length < a.size()) throw Error(ErrorCode::ShapeMismatch, "pad1d cannot shrink");
    Tensor out({length});
    std::copy(a.value().data.begin(), a.value().data.end(), out.data.begin());
    const std::size_t n = a.size();
    return a.graph->emit(std::move(out), {a}, [a, n](Graph& g, const std::vector<double>& go) {
        double* ga = g.grad_data(a);
        for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
    });
}

Var mean_rows(Var a) {
    require_rank(a, 2, "mean_rows");
    const std::size_t t = a.shape()[0], d = a.shape()[1];
    if (t == 0) throw Error(ErrorCode::ShapeMismatch, "mean_rows of zero rows");
    Tensor out({d});
    const auto& v = a.value().data;
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < d; ++j) out.data[j] += v[i * d + j];
    for (double& x : out.data) x /= static_cast<double>(t);
    return a.graph->emit(std::move(out), {a}, [a, t, d](Graph& g, const std::vector<double>& go) {
        double* ga = g.grad_data(a);
        const double inv = 1.0 / static_cast<double>(t);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += go[j] * inv;
    });
}

Var resample_rows(Var a, std::size_t target) {
    require_rank(a, 2, "resample_rows");
    const std::size_t t = a.shape()[0], d = a.shape()[1];
    if (target == t) return reshape(a, a.shape());
    const FeatureGrid out = resample_frames(a.value().to_grid(), target);
    auto taps = interpolation_taps(t, target);
    return a.graph->emit(Tensor::from_grid(out), {a},
                         [a, d, taps = std::move(taps)](Graph& g, const std::vector<double>& go) {
                             double* ga = g.grad_data(a);
                             for (std::size_t i = 0; i < taps.size(); ++i) {
                                 const auto& tap = taps[i];
                                 for (std::size_t j = 0; j < d; ++j) {
                                     ga[tap.lo * d + j] += (1.0 - tap.weight) * go[i * d + j];
                                     if (tap.weight != 0.0) ga[tap.hi * d + j] += tap.weight * go[i * d + j];
                                 }
                             }
                         });
}

Var gather_rows(Var a, std::span<const std::int64_t> index) {
    require_rank(a, 2, "gather_rows");
    const std::size_t n = a.shape()[0], d = a.shape()[1];
    std::vector<std::size_t> idx;
    idx.reserve(index.size());
    Tensor out({index.size(), d});
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= n)
            throw Error(ErrorCode::IndexOutOfRange, "gather index out of range");
        idx.push_back(static_cast<std::size_t>(index[i]));
        std::copy_n(a.value().data.begin() + static_cast<std::ptrdiff_t>(idx.back() * d), d,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return a.graph->emit(std::move(out), {a}, [a, d, idx = std::move(idx)](Graph& g, const std::vector<double>& go) {
        double* ga = g.grad_data(a);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) ga[idx[i] * d + j] += go[i * d + j];
    });
}

Var project_rows(Var rows, Var weight, Var bias) {
    require_rank(rows, 2, "project_rows");
    require_rank(weight, 2, "project_rows");
    const std::size_t n = rows.shape()[0], in = rows.shape()[1], d = weight.shape()[0];
    if (weight.shape()[1] != in || bias.shape() != std::vector<std::size_t>{d})
        throw Error(ErrorCode::ShapeMismatch, "project_rows: weight/bias do not match rows");
    Tensor out({n, d});
    const auto& x = rows.value().data;
    const auto& w = weight.value().data;
    const auto& b = bias.value().data;
    // Same accumulation order as Codebook::refresh so values agree bit-exactly.
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < d; ++i) {
            double acc = b[i];
            for (std::size_t j = 0; j < in; ++j) acc += w[i * in + j] * x[r * in + j];
            out.data[r * d + i] = acc;
        }
    return rows.graph->emit(std::move(out), {rows, weight, bias},
                            [rows, weight, bias, n, in, d](Graph& g, const std::vector<double>& go) {
                                const auto& x = g.value(rows).data;
                                const auto& w = g.value(weight).data;
                                if (double* gx = g.grad_data(rows))
                                    for (std::size_t r = 0; r < n; ++r)
                                        for (std::size_t i = 0; i < d; ++i)
                                            for (std::size_t j = 0; j < in; ++j)
                                                gx[r * in + j] += go[r * d + i] * w[i * in + j];
                                if (double* gw = g.grad_data(weight))
                                    for (std::size_t r = 0; r < n; ++r)
                                        for (std::size_t i = 0; i < d; ++i)
                                            for (std::size_t j = 0; j < in; ++j)
                                                gw[i * in + j] += go[r * d + i] * x[r * in + j];
                                if (double* gb = g.grad_data(bias))
                                    for (std::size_t r = 0; r < n; ++r)
                                        for (std::size_t i = 0; i < d; ++i) gb[i] += go[r * d + i];
                            });
}

Var conv1d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad_left, std::size_t pad_right) {
    require_rank(x, 2, "conv1d");
    require_rank(weight, 3, "conv1d");
    const std::size_t cin = x.shape()[0], len = x.shape()[1];
    const std::size_t cout = weight.shape()[0], k = weight.shape()[2];
    if (weight.shape()[1] != cin || bias.shape() != std::vector<std::size_t>{cout})
        throw Error(ErrorCode::ShapeMismatch, "conv1d: weight " + shape_string(weight.shape()) +
                                                  " incompatible with input " + shape_string(x.shape()));
    if (stride == 0 || len + pad_left + pad_right < k)
        throw Error(ErrorCode::ShapeMismatch, "conv1d: input too short for kernel");
    const std::size_t lout = (len + pad_left + pad_right - k) / stride + 1;
    Tensor out({cout, lout});
    const auto& xv = x.value().data;
    const auto& wv = weight.value().data;
    const auto& bv = bias.value().data;
    // Valid output range for tap kk: t*stride + kk - pad_left in [0, len).
    auto t_range = [=](std::size_t kk) {
        const auto off = static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(pad_left);
        const auto s = static_cast<std::ptrdiff_t>(stride);
        std::ptrdiff_t t0 = off >= 0 ? 0 : (-off + s - 1) / s;
        std::ptrdiff_t t1 = (static_cast<std::ptrdiff_t>(len) - 1 - off);
        t1 = t1 < 0 ? -1 : t1 / s;
        t1 = std::min<std::ptrdiff_t>(t1, static_cast<std::ptrdiff_t>(lout) - 1);
        return std::pair{t0, t1};
    };
    for (std::size_t o = 0; o < cout; ++o) {
        double* y = out.data.data() + o * lout;
        std::fill(y, y + lout, bv[o]);
        for (std::size_t c = 0; c < cin; ++c) {
            const double* xc = xv.data() + c * len;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double w = wv[(o * cin + c) * k + kk];
                const auto [t0, t1] = t_range(kk);
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(pad_left);
                for (std::ptrdiff_t t = t0; t <= t1; ++t) y[t] += w * xc[t * static_cast<std::ptrdiff_t>(stride) + off];
            }
        }
    }
    return x.graph->emit(std::move(out), {x, weight, bias},
                         [=](Graph& g, const std::vector<double>& go) {
                             const auto& xv = g.value(x).data;
                             const auto& wv = g.value(weight).data;
                             double* gx = g.grad_data(x);
                             double* gw = g.grad_data(weight);
                             double* gb = g.grad_data(bias);
                             const auto s = static_cast<std::ptrdiff_t>(stride);
                             for (std::size_t o = 0; o < cout; ++o) {
                                 const double* gy = go.data() + o * lout;
                                 if (gb)
                                     for (std::size_t t = 0; t < lout; ++t) gb[o] += gy[t];
                                 for (std::size_t c = 0; c < cin; ++c) {
                                     const double* xc = xv.data() + c * len;
                                     for (std::size_t kk = 0; kk < k; ++kk) {
                                         const auto [t0, t1] = t_range(kk);
                                         const std::ptrdiff_t off =
                                             static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(pad_left);
                                         const std::size_t widx = (o * cin + c) * k + kk;
                                         if (gw) {
                                             double acc = 0.0;
                                             for (std::ptrdiff_t t = t0; t <= t1; ++t) acc += gy[t] * xc[t * s + off];
                                             gw[widx] += acc;
                                         }
                                         if (gx) {
                                             double* gxc = gx + c * len;
                                             const double w = wv[widx];
                                             for (std::ptrdiff_t t = t0; t <= t1; ++t) gxc[t * s + off] += w * gy[t];
                                         }
                                     }
                                 }
                             }
                         });
}

Var conv_transpose1d(Var x, Var weight, Var bias, std::size_t stride, std::size_t crop_left, std::size_t out_len) {
    require_rank(x, 2, "conv_transpose1d");
    require_rank(weight, 3, "conv_transpose1d");
    const std::size_t cin = x.shape()[0], len = x.shape()[1];
    const std::size_t cout = weight.shape()[1], k = weight.shape()[2];
    if (weight.shape()[0] != cin || bias.shape() != std::vector<std::size_t>{cout})
        throw Error(ErrorCode::ShapeMismatch, "conv_transpose1d: weight " + shape_string(weight.shape()) +
                                                  " incompatible with input " + shape_string(x.shape()));
    const std::size_t full = (len - 1) * stride + k;
    if (stride == 0 || len == 0 || crop_left + out_len > full)
        throw Error(ErrorCode::ShapeMismatch, "conv_transpose1d: crop exceeds output");
    Tensor out({cout, out_len});
    const auto& xv = x.value().data;
    const auto& wv = weight.value().data;
    const auto& bv = bias.value().data;
    // Output position p = t*stride + kk - crop_left must land in [0, out_len).
    auto t_range = [=](std::size_t kk) {
        const auto off = static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(crop_left);
        const auto s = static_cast<std::ptrdiff_t>(stride);
        std::ptrdiff_t t0 = off >= 0 ? 0 : (-off + s - 1) / s;
        std::ptrdiff_t t1 = static_cast<std::ptrdiff_t>(out_len) - 1 - off;
        t1 = t1 < 0 ? -1 : t1 / s;
        t1 = std::min<std::ptrdiff_t>(t1, static_cast<std::ptrdiff_t>(len) - 1);
        return std::pair{t0, t1};
    };
    for (std::size_t o = 0; o < cout; ++o) {
        double* y = out.data.data() + o * out_len;
        std::fill(y, y + out_len, bv[o]);
        for (std::size_t c = 0; c < cin; ++c) {
            const double* xc = xv.data() + c * len;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double w = wv[(c * cout + o) * k + kk];
                const auto [t0, t1] = t_range(kk);
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(crop_left);
                for (std::ptrdiff_t t = t0; t <= t1; ++t) y[t * static_cast<std::ptrdiff_t>(stride) + off] += w * xc[t];
            }
        }
    }
    return x.graph->emit(std::move(out), {x, weight, bias},
                         [=](Graph& g, const std::vector<double>& go) {
                             const auto& xv = g.value(x).data;
                             const auto& wv = g.value(weight).data;
                             double* gx = g.grad_data(x);
                             double* gw = g.grad_data(weight);
                             double* gb = g.grad_data(bias);
                             const auto s = static_cast<std::ptrdiff_t>(stride);
                             for (std::size_t o = 0; o < cout; ++o) {
                                 const double* gy = go.data() + o * out_len;
                                 if (gb)
                                     for (std::size_t p = 0; p < out_len; ++p) gb[o] += gy[p];
                                 for (std::size_t c = 0; c < cin; ++c) {
                                     const double* xc = xv.data() + c * len;
                                     for (std::size_t kk = 0; kk < k; ++kk) {
                                         const auto [t0, t1] = t_range(kk);
                                         const std::ptrdiff_t off =
                                             static_cast<std::ptrdiff_t>(kk) - static_cast<std::ptrdiff_t>(crop_left);
                                         const std::size_t widx = (c * cout + o) * k + kk;
                                         if (gw) {
                                             double acc = 0.0;
                                             for (std::ptrdiff_t t = t0; t <= t1; ++t) acc += gy[t * s + off] * xc[t];
                                             gw[widx] += acc;
                                         }
                                         if (gx) {
                                             double* gxc = gx + c * len;
                                             const double w = wv[widx];
                                             for (std::ptrdiff_t t = t0; t <= t1; ++t) gxc[t] += w * gy[t * s + off];
                                         }
                                     }
                                 }
                             }
                         });
}

Var stft_magnitude(Var samples, const SpectrogramConfig& cfg) {
    require_rank(samples, 1, "stft_magnitude");
    cfg.validate();
    const std::size_t len = samples.size();
    const std::size_t n = cfg.n_fft, bins = cfg.bins(), hop = cfg.hop;
    const std::size_t frames = stft_frame_count(len, cfg);
    const auto window = make_window(cfg.window, n);
    Tensor out({frames, bins});
    // Complex spectra are kept for the backward pass.
    std::vector<std::complex<double>> spectra(frames * bins);
    std::vector<std::complex<double>> buf(n);
    const auto& x = samples.value().data;
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = t * hop + i;
            buf[i] = idx < len ? x[idx] * window[i] : 0.0;
        }
        fft_inplace(buf);
        for (std::size_t k = 0; k < bins; ++k) {
            spectra[t * bins + k] = buf[k];
            out.data[t * bins + k] = std::abs(buf[k]);
        }
    }
    return samples.graph->emit(
        std::move(out), {samples},
        [=, spectra = std::move(spectra), window = std::move(window)](Graph& g, const std::vector<double>& go) {
            double* gx = g.grad_data(samples);
            std::vector<std::complex<double>> c(n);
            for (std::size_t t = 0; t < frames; ++t) {
                // dL/dx_i = w_i * Re(sum_k c_k e^{+2 pi i k i / n}) with c_k = g_k X_k / |X_k|
                // over the one-sided bins, i.e. w_i * Re(FFT(conj(c)))_i.
                std::fill(c.begin(), c.end(), std::complex<double>{});
                for (std::size_t k = 0; k < bins; ++k) {
                    const auto xk = spectra[t * bins + k];
                    const double mag = std::abs(xk);
                    if (mag > 0.0) c[k] = std::conj(go[t * bins + k] * xk / mag);
                }
                fft_inplace(c);
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t idx = t * hop + i;
                    if (idx < len) gx[idx] += window[i] * c[i].real();
                }
            }
        });
}

Var band_mean(Var spec, std::size_t bands) {
    require_rank(spec, 2, "band_mean");
    const std::size_t frames = spec.shape()[0], bins = spec.shape()[1];
    auto edges = subband_edges(bins, bands);
    Tensor out({frames, bands});
    const auto& v = spec.value().data;
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t b = 0; b < bands; ++b) {
            double acc = 0.0;
            for (std::size_t j = edges[b]; j < edges[b + 1]; ++j) acc += v[t * bins + j];
            out.data[t * bands + b] = acc / static_cast<double>(edges[b + 1] - edges[b]);
        }
    return spec.graph->emit(std::move(out), {spec},
                            [spec, frames, bins, bands, edges = std::move(edges)](Graph& g, const std::vector<double>& go) {
                                double* gs = g.grad_data(spec);
                                for (std::size_t t = 0; t < frames; ++t)
                                    for (std::size_t b = 0; b < bands; ++b) {
                                        const double share =
                                            go[t * bands + b] / static_cast<double>(edges[b + 1] - edges[b]);
                                        for (std::size_t j = edges[b]; j < edges[b + 1]; ++j) gs[t * bins + j] += share;
                                    }
                            });
}

Var straight_through(Var input, Tensor quantized) {
    if (quantized.shape != input.shape())
        throw Error(ErrorCode::ShapeMismatch, "straight_through: quantized shape differs from input");
    return input.graph->emit(std::move(quantized), {input}, [input](Graph& g, const std::vector<double>& go) {
        double* gi = g.grad_data(input);
        for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
    });
}

Var detach(Var a) { return a.graph->constant(a.value()); }

}  // namespace ops

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<Var(Graph&, Var)>& fn, const Tensor& point,
                           const std::function<bool(std::size_t)>& exclude, double floor) {
    for (double v : point.data)
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "grad_check point is not finite");
    Graph g;
    Var x = g.variable(point);
    Var y = fn(g, x);
    if (!std::isfinite(y.value().item())) throw Error(ErrorCode::NonFiniteValue, "function value is not finite");
    g.backward(y);
    const auto analytic = g.grad(x);

    auto eval = [&fn](const Tensor& p) {
        Graph h;
        const double v = fn(h, h.constant(p)).value().item();
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "function value is not finite");
        return v;
    };
    GradCheckResult r;
    Tensor probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        if (exclude && exclude(i)) {
            ++r.excluded;
            continue;
        }
        const double x0 = point.data[i];
        const double h = 1e-5 * (1.0 + std::fabs(x0));
        probe.data[i] = x0 + h;
        const double fp = eval(probe);
        probe.data[i] = x0 - h;
        const double fm = eval(probe);
        probe.data[i] = x0;
        const double numeric = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), floor});
        const double err = std::fabs(analytic[i] - numeric) / denom;
        ++r.checked;
        if (err > r.max_rel_error) {
            r.max_rel_error = err;
            r.worst_index = i;
        }
    }
    return r;
}

}  // namespace llmcodec::nn
