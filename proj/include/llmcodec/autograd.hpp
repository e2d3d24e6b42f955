#pragma once

// Minimal tape-based reverse-mode differentiation over dense double tensors.
//
// A Graph records every operation in creation order; backward() walks the
// tape in reverse and calls each node's backward closure with the gradient
// of the root w.r.t. that node. Nodes whose inputs do not require gradients
// carry no closure and are skipped.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "llmcodec/signal.hpp"

namespace llmcodec::nn {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
    static Tensor from_grid(const FeatureGrid& g);
    static Tensor from_samples(std::span<const double> s);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    double item() const;

    FeatureGrid to_grid() const;

    bool operator==(const Tensor&) const = default;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

/// Named trainable tensor; `grad` accumulates across backward passes until
/// zero_grad().
struct Parameter {
    std::string id;
    Tensor value;
    Tensor grad;

    void zero_grad();
};

/// Insertion-ordered parameters with stable addresses.
class ParameterStore {
public:
    Parameter& add(std::string id, Tensor value);
    Parameter* find(std::string_view id);
    const Parameter* find(std::string_view id) const;
    Parameter& at(std::string_view id);

    std::deque<Parameter>& items() { return items_; }
    const std::deque<Parameter>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    void zero_grad();

private:
    std::deque<Parameter> items_;
};

class Graph;

struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const std::vector<std::size_t>& shape() const { return value().shape; }
    std::size_t size() const { return value().size(); }
};

class Graph {
public:
    using Backward = std::function<void(Graph&, const std::vector<double>& out_grad)>;

    Var constant(Tensor value);
    Var variable(Tensor value);
    /// Leaf bound to `p`; backward() adds the leaf gradient into p.grad.
    Var parameter(Parameter& p);

    /// Records an op output. `backward` runs only when some parent requires grad.
    Var emit(Tensor value, std::initializer_list<Var> parents, Backward backward);
    Var emit(Tensor value, const std::vector<Var>& parents, Backward backward);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    /// Gradient buffer for `v`, or nullptr when `v` does not require grad.
    double* grad_data(Var v);
    /// Gradient of the last backward root w.r.t. `v` (zeros if none reached it).
    std::vector<double> grad(Var v) const;

    /// Seeds d(root)/d(root) = 1 for a single-element root.
    void backward(Var root);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        Backward backward;
        bool requires_grad = false;
        Parameter* parameter = nullptr;
    };
    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations. Shapes are checked and mismatches raise ShapeMismatch.

namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var tanh(Var a);
/// max(0, x); subgradient 0 at 0.
Var relu(Var a);
/// |x|; subgradient 0 at 0.
Var abs(Var a);
Var square(Var a);
/// log(x + eps).
Var log_eps(Var a, double eps);

Var sum(Var a);
Var mean(Var a);
/// Weighted sum of scalars.
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& weights);

Var reshape(Var a, std::vector<std::size_t> shape);
/// [r, c] -> [c, r].
Var transpose(Var a);
/// Rows [r0, r1) of a rank-2 tensor.
Var slice_rows(Var a, std::size_t r0, std::size_t r1);
/// Columns [c0, c1) of a rank-2 tensor.
Var slice_cols(Var a, std::size_t c0, std::size_t c1);
/// Stacks rank-2 tensors with equal column counts along rows.
Var concat_rows(const std::vector<Var>& parts);
/// Elements [s0, s1) of a rank-1 tensor.
Var slice1d(Var a, std::size_t s0, std::size_t s1);
/// Rank-1 tensor zero-padded at the end to `length`.
Var pad1d(Var a, std::size_t length);

/// Column means of a [T, d] tensor -> [d].
Var mean_rows(Var a);
/// Endpoint-aligned linear interpolation of the rows of [T, d] to [target, d].
Var resample_rows(Var a, std::size_t target);
/// Rows of `a` picked by `index` -> [index.size(), d].
Var gather_rows(Var a, std::span<const std::int64_t> index);
/// rows [n, D], weight [d, D], bias [d] -> rows * weight^T + bias, [n, d].
Var project_rows(Var rows, Var weight, Var bias);

/// x [Cin, L], weight [Cout, Cin, K], bias [Cout] -> [Cout, Lout] with zero
/// padding pad_left/pad_right and Lout = (L + pads - K) / stride + 1.
Var conv1d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad_left, std::size_t pad_right);
/// x [Cin, L], weight [Cin, Cout, K], bias [Cout] -> full output of length
/// (L - 1) * stride + K, cropped to [crop_left, crop_left + out_len).
Var conv_transpose1d(Var x, Var weight, Var bias, std::size_t stride, std::size_t crop_left,
                     std::size_t out_len);

/// Rank-1 waveform -> [frames, n_fft/2 + 1] magnitudes (see stft_magnitude).
Var stft_magnitude(Var samples, const SpectrogramConfig& cfg);
/// [F, bins] -> [F, bands]: mean within each sub-band.
Var band_mean(Var spec, std::size_t bands);

/// Forward value `quantized`; backward copies the incoming gradient to `input`.
Var straight_through(Var input, Tensor quantized);
/// Same value as `a`, no gradient flow.
Var detach(Var a);

}  // namespace ops

// ---------------------------------------------------------------------------

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    std::size_t excluded = 0;
};

/// Compares the reverse-mode gradient of a scalar function at `point` with
/// central differences, h = 1e-5 * (1 + |x_i|). Per-coordinate error is
/// |a - n| / max(|a|, |n|, floor). Coordinates for which `exclude(i)` is true
/// (kink neighbourhoods) are skipped. Throws NonFiniteValue on non-finite
/// points or function values.
GradCheckResult grad_check(const std::function<Var(Graph&, Var)>& fn, const Tensor& point,
                           const std::function<bool(std::size_t)>& exclude = {}, double floor = 1e-10);

}  // namespace llmcodec::nn
