#include "advsteg/cnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "advsteg/errors.hpp"
#include "advsteg/util.hpp"

namespace advsteg {

ParamLayout::ParamLayout(const CnnArchitecture& arch) {
    std::size_t offset = 0;
    std::size_t in = 1;
    for (std::size_t k = 0; k < 3; ++k) {
        std::size_t out = arch.channels[k];
        conv[k] = {in, out, offset, offset + out * in * 9};
        offset += out * in * 9 + out;
        norm[k] = {out, offset, offset + out};
        offset += 2 * out;
        in = out;
    }
    fc_in = in;
    fc_weight = offset;
    fc_bias = offset + 2 * in;
    total = fc_bias + 2;
}

namespace {

// Kv high-pass residual filter, scaled by 1/12.
constexpr std::array<double, 25> kKv = {
    -1, 2,  -2, 2,  -1,  //
    2,  -6, 8,  -6, 2,   //
    -2, 8,  -12, 8, -2,  //
    2,  -6, 8,  -6, 2,   //
    -1, 2,  -2, 2,  -1,
};

std::size_t running_offset(const CnnArchitecture& arch, std::size_t k) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < k; ++i) off += 2 * arch.channels[i];
    return off;
}

std::size_t running_size(const CnnArchitecture& arch) { return running_offset(arch, 3); }

struct Tensor {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::size_t c_, std::size_t h_, std::size_t w_) : c(c_), h(h_), w(w_), v(c_ * h_ * w_, 0.0) {}

    std::size_t plane() const { return h * w; }
    double* ch(std::size_t k) { return v.data() + k * plane(); }
    const double* ch(std::size_t k) const { return v.data() + k * plane(); }
};

std::ptrdiff_t mirror(std::ptrdiff_t i, std::ptrdiff_t n) {
    std::ptrdiff_t period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

Tensor hpf_forward(std::span<const double> x, std::size_t h, std::size_t w) {
    Tensor out(1, h, w);
    auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    for (std::ptrdiff_t i = 0; i < H; ++i)
        for (std::ptrdiff_t j = 0; j < W; ++j) {
            double acc = 0.0;
            for (std::ptrdiff_t u = 0; u < 5; ++u) {
                std::ptrdiff_t r = mirror(i + u - 2, H);
                for (std::ptrdiff_t v = 0; v < 5; ++v)
                    acc += kKv[static_cast<std::size_t>(u * 5 + v)] * x[static_cast<std::size_t>(r * W + mirror(j + v - 2, W))];
            }
            out.v[static_cast<std::size_t>(i * W + j)] = acc / 12.0;
        }
    return out;
}

void hpf_backward(const Tensor& dout, std::vector<double>& dx) {
    auto H = static_cast<std::ptrdiff_t>(dout.h), W = static_cast<std::ptrdiff_t>(dout.w);
    dx.assign(dout.v.size(), 0.0);
    for (std::ptrdiff_t i = 0; i < H; ++i)
        for (std::ptrdiff_t j = 0; j < W; ++j) {
            double g = dout.v[static_cast<std::size_t>(i * W + j)] / 12.0;
            for (std::ptrdiff_t u = 0; u < 5; ++u) {
                std::ptrdiff_t r = mirror(i + u - 2, H);
                for (std::ptrdiff_t v = 0; v < 5; ++v)
                    dx[static_cast<std::size_t>(r * W + mirror(j + v - 2, W))] += kKv[static_cast<std::size_t>(u * 5 + v)] * g;
            }
        }
}

// Valid output range [lo, hi) for a 3x3 tap at offset d (0..2) with zero padding.
inline void tap_range(std::size_t d, std::size_t n, std::size_t& lo, std::size_t& hi) {
    lo = d == 0 ? 1 : 0;
    hi = d == 2 ? n - 1 : n;
}

Tensor conv_forward(const Tensor& x, const double* weight, const double* bias, std::size_t out_ch) {
    Tensor out(out_ch, x.h, x.w);
    const std::size_t W = x.w;
    for (std::size_t o = 0; o < out_ch; ++o) {
        double* dst = out.ch(o);
        std::fill(dst, dst + out.plane(), bias[o]);
        for (std::size_t c = 0; c < x.c; ++c) {
            const double* src = x.ch(c);
            const double* k = weight + (o * x.c + c) * 9;
            for (std::size_t u = 0; u < 3; ++u) {
                std::size_t ilo, ihi;
                tap_range(u, x.h, ilo, ihi);
                for (std::size_t v = 0; v < 3; ++v) {
                    std::size_t jlo, jhi;
                    tap_range(v, x.w, jlo, jhi);
                    const double wt = k[u * 3 + v];
                    for (std::size_t i = ilo; i < ihi; ++i) {
                        const double* s = src + (i + u - 1) * W + v - 1;
                        double* d = dst + i * W;
                        for (std::size_t j = jlo; j < jhi; ++j) d[j] += wt * s[j];
                    }
                }
            }
        }
    }
    return out;
}

// Accumulates weight/bias gradients into dweight/dbias; writes dx when non-null.
void conv_backward(const Tensor& x, const Tensor& dz, const double* weight, double* dweight, double* dbias, Tensor* dx) {
    const std::size_t W = x.w;
    if (dx) *dx = Tensor(x.c, x.h, x.w);
    for (std::size_t o = 0; o < dz.c; ++o) {
        const double* g = dz.ch(o);
        if (dbias) {
            double s = 0.0;
            for (std::size_t p = 0; p < dz.plane(); ++p) s += g[p];
            dbias[o] += s;
        }
        for (std::size_t c = 0; c < x.c; ++c) {
            const double* src = x.ch(c);
            const std::size_t kidx = (o * x.c + c) * 9;
            for (std::size_t u = 0; u < 3; ++u) {
                std::size_t ilo, ihi;
                tap_range(u, x.h, ilo, ihi);
                for (std::size_t v = 0; v < 3; ++v) {
                    std::size_t jlo, jhi;
                    tap_range(v, x.w, jlo, jhi);
                    double acc = 0.0;
                    const double wt = weight[kidx + u * 3 + v];
                    for (std::size_t i = ilo; i < ihi; ++i) {
                        const double* s = src + (i + u - 1) * W + v - 1;
                        const double* gi = g + i * W;
                        for (std::size_t j = jlo; j < jhi; ++j) acc += gi[j] * s[j];
                        if (dx) {
                            double* d = dx->ch(c) + (i + u - 1) * W + v - 1;
                            for (std::size_t j = jlo; j < jhi; ++j) d[j] += wt * gi[j];
                        }
                    }
                    if (dweight) dweight[kidx + u * 3 + v] += acc;
                }
            }
        }
    }
}

Tensor pool_forward(const Tensor& x) {
    Tensor out(x.c, x.h / 2, x.w / 2);
    for (std::size_t c = 0; c < x.c; ++c) {
        const double* s = x.ch(c);
        double* d = out.ch(c);
        for (std::size_t i = 0; i < out.h; ++i)
            for (std::size_t j = 0; j < out.w; ++j) {
                const double* a = s + 2 * i * x.w + 2 * j;
                d[i * out.w + j] = 0.25 * (a[0] + a[1] + a[x.w] + a[x.w + 1]);
            }
    }
    return out;
}

Tensor pool_backward(const Tensor& dout, std::size_t h, std::size_t w) {
    Tensor dx(dout.c, h, w);
    for (std::size_t c = 0; c < dout.c; ++c) {
        const double* g = dout.ch(c);
        double* d = dx.ch(c);
        for (std::size_t i = 0; i < dout.h; ++i)
            for (std::size_t j = 0; j < dout.w; ++j) {
                double q = 0.25 * g[i * dout.w + j];
                double* a = d + 2 * i * w + 2 * j;
                a[0] += q;
                a[1] += q;
                a[w] += q;
                a[w + 1] += q;
            }
    }
    return dx;
}

struct NormStats {
    std::vector<double> mean;
    std::vector<double> var;
};

struct Trace {
    Tensor a0;              // high-pass residual
    Tensor z1, n1, t1, p1;  // group 1: conv out, normalized |z1|, tanh, pooled
    Tensor z2, n2, t2, p2;
    Tensor z3, n3, y3;      // group 3: conv out, normalized, affine (pre-relu)
    std::vector<double> gap;
    std::array<double, 2> logits{};
    Probabilities prob;
};

class Network {
public:
    Network(const CnnModel& model) : model_(model), layout_(model.arch) {}

    // With stop_at = k < 3 the pass ends once the input of normalization unit k
    // is available in the trace (used to gather population statistics).
    void forward(std::span<const std::vector<double>> images, NormMode mode, std::vector<Trace>& traces,
                 std::array<NormStats, 3>& stats, std::size_t stop_at = 3) const {
        const auto& arch = model_.arch;
        const std::size_t B = images.size();
        traces.assign(B, Trace{});
        for (const auto& img : images)
            if (img.size() != arch.input_width * arch.input_height)
                throw ArgumentError("input size does not match the model's input shape");

        parallel_for(B, [&](std::size_t b) {
            Trace& t = traces[b];
            t.a0 = hpf_forward(images[b], arch.input_height, arch.input_width);
            const auto& cv = layout_.conv[0];
            t.z1 = conv_forward(t.a0, &p(cv.weight), &p(cv.bias), cv.out);
            t.n1 = t.z1;
            for (double& v : t.n1.v) v = std::abs(v);
        });
        if (stop_at == 0) return;
        stats[0] = normalize(traces, &Trace::n1, 0, mode);
        parallel_for(B, [&](std::size_t b) {
            Trace& t = traces[b];
            t.t1 = affine(t.n1, 0);
            for (double& v : t.t1.v) v = std::tanh(v);
            t.p1 = pool_forward(t.t1);
            const auto& cv = layout_.conv[1];
            t.z2 = conv_forward(t.p1, &p(cv.weight), &p(cv.bias), cv.out);
            t.n2 = t.z2;
        });
        if (stop_at == 1) return;
        stats[1] = normalize(traces, &Trace::n2, 1, mode);
        parallel_for(B, [&](std::size_t b) {
            Trace& t = traces[b];
            t.t2 = affine(t.n2, 1);
            for (double& v : t.t2.v) v = std::tanh(v);
            t.p2 = pool_forward(t.t2);
            const auto& cv = layout_.conv[2];
            t.z3 = conv_forward(t.p2, &p(cv.weight), &p(cv.bias), cv.out);
            t.n3 = t.z3;
        });
        if (stop_at == 2) return;
        stats[2] = normalize(traces, &Trace::n3, 2, mode);
        parallel_for(B, [&](std::size_t b) {
            Trace& t = traces[b];
            t.y3 = affine(t.n3, 2);
            t.gap.assign(t.y3.c, 0.0);
            for (std::size_t c = 0; c < t.y3.c; ++c) {
                const double* s = t.y3.ch(c);
                double acc = 0.0;
                for (std::size_t q = 0; q < t.y3.plane(); ++q) acc += std::max(0.0, s[q]);
                t.gap[c] = acc / static_cast<double>(t.y3.plane());
            }
            for (std::size_t k = 0; k < 2; ++k) {
                double z = p(layout_.fc_bias + k);
                for (std::size_t c = 0; c < layout_.fc_in; ++c) z += p(layout_.fc_weight + k * layout_.fc_in + c) * t.gap[c];
                t.logits[k] = z;
            }
            if (!std::isfinite(t.logits[0]) || !std::isfinite(t.logits[1]))
                throw NumericError("non-finite activation in forward pass");
            double m = std::max(t.logits[0], t.logits[1]);
            double e0 = std::exp(t.logits[0] - m), e1 = std::exp(t.logits[1] - m);
            t.prob.cover = e0 / (e0 + e1);
            t.prob.stego = e1 / (e0 + e1);
        });
    }

    // dlogits[b] is the gradient of the objective with respect to image b's logits.
    void backward(std::vector<Trace>& traces, std::span<const std::array<double, 2>> dlogits, NormMode mode,
                  const std::array<NormStats, 3>& stats, std::vector<double>* dparams,
                  std::vector<std::vector<double>>* dinputs) const {
        const std::size_t B = traces.size();
        const std::size_t P = layout_.total;
        // Per-image parameter gradients, reduced in image order afterwards.
        std::vector<std::vector<double>> local(dparams ? B : 0, std::vector<double>(dparams ? P : 0, 0.0));
        std::vector<Tensor> d(B);

        parallel_for(B, [&](std::size_t b) {
            Trace& t = traces[b];
            double* g = dparams ? local[b].data() : nullptr;
            std::vector<double> dgap(layout_.fc_in, 0.0);
            for (std::size_t k = 0; k < 2; ++k) {
                if (g) g[layout_.fc_bias + k] += dlogits[b][k];
                for (std::size_t c = 0; c < layout_.fc_in; ++c) {
                    if (g) g[layout_.fc_weight + k * layout_.fc_in + c] += dlogits[b][k] * t.gap[c];
                    dgap[c] += p(layout_.fc_weight + k * layout_.fc_in + c) * dlogits[b][k];
                }
            }
            Tensor dy(t.y3.c, t.y3.h, t.y3.w);
            const double inv_area = 1.0 / static_cast<double>(t.y3.plane());
            for (std::size_t c = 0; c < t.y3.c; ++c) {
                const double* y = t.y3.ch(c);
                double* dd = dy.ch(c);
                for (std::size_t q = 0; q < t.y3.plane(); ++q) dd[q] = y[q] > 0.0 ? dgap[c] * inv_area : 0.0;
            }
            d[b] = std::move(dy);
        });
        norm_backward(traces, &Trace::n3, d, 2, mode, stats[2], dparams ? &local : nullptr);
        parallel_for(B, [&](std::size_t b) {
            Trace& t = traces[b];
            const auto& cv = layout_.conv[2];
            double* g = dparams ? local[b].data() : nullptr;
            Tensor dp2;
            conv_backward(t.p2, d[b], &p(cv.weight), g ? g + cv.weight : nullptr, g ? g + cv.bias : nullptr, &dp2);
            Tensor dt2 = pool_backward(dp2, t.t2.h, t.t2.w);
            for (std::size_t q = 0; q < dt2.v.size(); ++q) dt2.v[q] *= 1.0 - t.t2.v[q] * t.t2.v[q];
            d[b] = std::move(dt2);
        });
        norm_backward(traces, &Trace::n2, d, 1, mode, stats[1], dparams ? &local : nullptr);
        parallel_for(B, [&](std::size_t b) {
            Trace& t = traces[b];
            const auto& cv = layout_.conv[1];
            double* g = dparams ? local[b].data() : nullptr;
            Tensor dp1;
            conv_backward(t.p1, d[b], &p(cv.weight), g ? g + cv.weight : nullptr, g ? g + cv.bias : nullptr, &dp1);
            Tensor dt1 = pool_backward(dp1, t.t1.h, t.t1.w);
            for (std::size_t q = 0; q < dt1.v.size(); ++q) dt1.v[q] *= 1.0 - t.t1.v[q] * t.t1.v[q];
            d[b] = std::move(dt1);
        });
        norm_backward(traces, &Trace::n1, d, 0, mode, stats[0], dparams ? &local : nullptr);
        if (dinputs) dinputs->assign(B, {});
        parallel_for(B, [&](std::size_t b) {
            Trace& t = traces[b];
            const auto& cv = layout_.conv[0];
            double* g = dparams ? local[b].data() : nullptr;
            // d|z|/dz = sign(z), zero at the kink.
            for (std::size_t q = 0; q < d[b].v.size(); ++q) {
                double z = t.z1.v[q];
                d[b].v[q] *= z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
            }
            Tensor da0;
            conv_backward(t.a0, d[b], &p(cv.weight), g ? g + cv.weight : nullptr, g ? g + cv.bias : nullptr,
                          dinputs ? &da0 : nullptr);
            if (dinputs) hpf_backward(da0, (*dinputs)[b]);
        });
        if (dparams) {
            dparams->assign(P, 0.0);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < P; ++i) (*dparams)[i] += local[b][i];
        }
    }

private:
    const double& p(std::size_t i) const { return model_.params[i]; }

    // Replaces (trace.*field) with its normalized value and returns the statistics used.
    NormStats normalize(std::vector<Trace>& traces, Tensor Trace::*field, std::size_t k, NormMode mode) const {
        const std::size_t C = layout_.norm[k].channels;
        NormStats s{std::vector<double>(C), std::vector<double>(C)};
        if (mode == NormMode::Running) {
            std::size_t off = running_offset(model_.arch, k);
            for (std::size_t c = 0; c < C; ++c) {
                s.mean[c] = model_.running[off + c];
                s.var[c] = model_.running[off + C + c];
            }
        } else {
            const double count = static_cast<double>(traces.size() * (traces[0].*field).plane());
            for (std::size_t c = 0; c < C; ++c) {
                double sum = 0.0;
                for (const auto& t : traces) {
                    const double* x = (t.*field).ch(c);
                    for (std::size_t q = 0; q < (t.*field).plane(); ++q) sum += x[q];
                }
                double mean = sum / count;
                double sq = 0.0;
                for (const auto& t : traces) {
                    const double* x = (t.*field).ch(c);
                    for (std::size_t q = 0; q < (t.*field).plane(); ++q) sq += (x[q] - mean) * (x[q] - mean);
                }
                s.mean[c] = mean;
                s.var[c] = sq / count;
            }
        }
        parallel_for(traces.size(), [&](std::size_t b) {
            Tensor& x = traces[b].*field;
            for (std::size_t c = 0; c < C; ++c) {
                const double inv = 1.0 / std::sqrt(s.var[c] + kNormEpsilon);
                double* v = x.ch(c);
                for (std::size_t q = 0; q < x.plane(); ++q) v[q] = (v[q] - s.mean[c]) * inv;
            }
        });
        return s;
    }

    Tensor affine(const Tensor& n, std::size_t k) const {
        const auto& nl = layout_.norm[k];
        Tensor out(n.c, n.h, n.w);
        for (std::size_t c = 0; c < n.c; ++c) {
            const double gm = p(nl.gamma + c), bt = p(nl.beta + c);
            const double* s = n.ch(c);
            double* dd = out.ch(c);
            for (std::size_t q = 0; q < n.plane(); ++q) dd[q] = gm * s[q] + bt;
        }
        return out;
    }

    // d[b] enters as the gradient w.r.t. the affine output and leaves as the
    // gradient w.r.t. the normalization input.
    void norm_backward(const std::vector<Trace>& traces, Tensor Trace::*field, std::vector<Tensor>& d, std::size_t k,
                       NormMode mode, const NormStats& stats, std::vector<std::vector<double>>* local) const {
        const auto& nl = layout_.norm[k];
        const std::size_t C = nl.channels;
        const std::size_t B = traces.size();
        // Per-image sums of dy and dy*n, per channel.
        std::vector<std::vector<double>> sum_dy(B, std::vector<double>(C)), sum_dyn(B, std::vector<double>(C));
        parallel_for(B, [&](std::size_t b) {
            const Tensor& n = traces[b].*field;
            for (std::size_t c = 0; c < C; ++c) {
                const double* g = d[b].ch(c);
                const double* x = n.ch(c);
                double a = 0.0, e = 0.0;
                for (std::size_t q = 0; q < n.plane(); ++q) {
                    a += g[q];
                    e += g[q] * x[q];
                }
                sum_dy[b][c] = a;
                sum_dyn[b][c] = e;
                if (local) {
                    (*local)[b][nl.beta + c] += a;
                    (*local)[b][nl.gamma + c] += e;
                }
            }
        });
        std::vector<double> tot_dy(C, 0.0), tot_dyn(C, 0.0);
        if (mode == NormMode::Batch) {
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    tot_dy[c] += sum_dy[b][c];
                    tot_dyn[c] += sum_dyn[b][c];
                }
        }
        const double count = static_cast<double>(B * (traces[0].*field).plane());
        parallel_for(B, [&](std::size_t b) {
            const Tensor& n = traces[b].*field;
            for (std::size_t c = 0; c < C; ++c) {
                const double scale = p(nl.gamma + c) / std::sqrt(stats.var[c] + kNormEpsilon);
                double* g = d[b].ch(c);
                const double* x = n.ch(c);
                if (mode == NormMode::Running) {
                    for (std::size_t q = 0; q < n.plane(); ++q) g[q] *= scale;
                } else {
                    const double mdy = tot_dy[c] / count, mdyn = tot_dyn[c] / count;
                    for (std::size_t q = 0; q < n.plane(); ++q) g[q] = scale * (g[q] - mdy - x[q] * mdyn);
                }
            }
        });
    }

    const CnnModel& model_;
    ParamLayout layout_;
};

void check_model(const CnnModel& model) {
    ParamLayout layout(model.arch);
    if (model.params.size() != layout.total || model.running.size() != running_size(model.arch))
        throw ArgumentError("model parameter count does not match its architecture");
    if (model.arch.input_width < 4 || model.arch.input_height < 4)
        throw ArgumentError("model input must be at least 4x4");
}

std::vector<double> to_real(const GrayImage& img) {
    std::vector<double> v(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) v[i] = img[i];
    return v;
}

void check_shape(const CnnModel& model, std::size_t width, std::size_t height) {
    if (width != model.arch.input_width || height != model.arch.input_height)
        throw ArgumentError("image is " + std::to_string(width) + "x" + std::to_string(height) + " but the model expects " +
                            std::to_string(model.arch.input_width) + "x" + std::to_string(model.arch.input_height));
}

double cross_entropy(const Trace& t, Label label) {
    double m = std::max(t.logits[0], t.logits[1]);
    double lse = m + std::log(std::exp(t.logits[0] - m) + std::exp(t.logits[1] - m));
    return lse - t.logits[static_cast<int>(label)];
}

struct StepResult {
    std::vector<double> grad;
    double loss = 0.0;
    std::array<NormStats, 3> stats;
};

StepResult loss_and_gradient(const CnnModel& model, std::span<const std::vector<double>> images,
                             std::span<const Label> labels, NormMode mode, bool want_grad) {
    check_model(model);
    if (images.size() != labels.size() || images.empty()) throw ArgumentError("batch images and labels disagree");
    Network net(model);
    std::vector<Trace> traces;
    StepResult r;
    net.forward(images, mode, traces, r.stats);
    const double B = static_cast<double>(images.size());
    std::vector<std::array<double, 2>> dlogits(images.size());
    for (std::size_t b = 0; b < images.size(); ++b) {
        r.loss += cross_entropy(traces[b], labels[b]);
        const int y = static_cast<int>(labels[b]);
        dlogits[b] = {(traces[b].prob.cover - (y == 0 ? 1.0 : 0.0)) / B, (traces[b].prob.stego - (y == 1 ? 1.0 : 0.0)) / B};
    }
    r.loss /= B;
    if (want_grad) net.backward(traces, dlogits, mode, r.stats, &r.grad, nullptr);
    return r;
}

// Replaces the running statistics with exact population statistics of the
// given images, one normalization unit at a time.
void recalibrate(CnnModel& model, const std::vector<std::vector<double>>& images) {
    constexpr std::size_t chunk = 32;
    static constexpr std::array<Tensor Trace::*, 3> fields = {&Trace::n1, &Trace::n2, &Trace::n3};
    for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t C = model.arch.channels[k];
        std::vector<double> sum(C, 0.0), sq(C, 0.0);
        double count = 0.0;
        for (std::size_t start = 0; start < images.size(); start += chunk) {
            std::size_t end = std::min(images.size(), start + chunk);
            Network net(model);
            std::vector<Trace> traces;
            std::array<NormStats, 3> stats;
            net.forward(std::span(images).subspan(start, end - start), NormMode::Running, traces, stats, k);
            for (const auto& t : traces) {
                const Tensor& x = t.*fields[k];
                for (std::size_t c = 0; c < C; ++c) {
                    const double* v = x.ch(c);
                    for (std::size_t q = 0; q < x.plane(); ++q) {
                        sum[c] += v[q];
                        sq[c] += v[q] * v[q];
                    }
                }
                count += static_cast<double>(x.plane());
            }
        }
        std::size_t off = running_offset(model.arch, k);
        for (std::size_t c = 0; c < C; ++c) {
            double mean = sum[c] / count;
            model.running[off + c] = mean;
            model.running[off + C + c] = std::max(0.0, sq[c] / count - mean * mean);
        }
    }
}

}  // namespace

CnnModel init_model(const CnnArchitecture& arch, std::uint64_t seed) {
    CnnModel model{arch, {}, {}};
    ParamLayout layout(arch);
    model.params.assign(layout.total, 0.0);
    model.running.assign(running_size(arch), 0.0);
    check_model(model);
    Rng rng(mix_seed(seed, 0x1417));
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& cv = layout.conv[k];
        const double bound = 1.0 / std::sqrt(static_cast<double>(cv.in * 9));
        for (std::size_t i = 0; i < cv.out * cv.in * 9; ++i) model.params[cv.weight + i] = uniform(rng, -bound, bound);
        const auto& nl = layout.norm[k];
        for (std::size_t c = 0; c < nl.channels; ++c) model.params[nl.gamma + c] = 1.0;
        std::size_t off = running_offset(arch, k);
        for (std::size_t c = 0; c < nl.channels; ++c) model.running[off + nl.channels + c] = 1.0;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(layout.fc_in));
    for (std::size_t i = 0; i < 2 * layout.fc_in; ++i) model.params[layout.fc_weight + i] = uniform(rng, -bound, bound);
    return model;
}

Probabilities forward(const CnnModel& model, std::span<const double> pixels) {
    check_model(model);
    Network net(model);
    std::vector<Trace> traces;
    std::array<NormStats, 3> stats;
    std::vector<double> img(pixels.begin(), pixels.end());
    net.forward(std::span<const std::vector<double>>(&img, 1), NormMode::Running, traces, stats);
    return traces[0].prob;
}

Probabilities forward(const CnnModel& model, const GrayImage& img) {
    check_shape(model, img.width(), img.height());
    return forward(model, to_real(img));
}

GradientMap input_gradient(const CnnModel& model, std::span<const double> pixels, std::size_t width,
                           std::size_t height, Label target) {
    check_model(model);
    check_shape(model, width, height);
    Network net(model);
    std::vector<Trace> traces;
    std::array<NormStats, 3> stats;
    std::vector<double> img(pixels.begin(), pixels.end());
    net.forward(std::span<const std::vector<double>>(&img, 1), NormMode::Running, traces, stats);
    // dp_c/dz = p_c p_s [1, -1]; the stego probability moves the opposite way.
    const double s = traces[0].prob.cover * traces[0].prob.stego;
    std::array<double, 2> dl = target == Label::Cover ? std::array<double, 2>{s, -s} : std::array<double, 2>{-s, s};
    std::vector<std::vector<double>> dx;
    net.backward(traces, std::span<const std::array<double, 2>>(&dl, 1), NormMode::Running, stats, nullptr, &dx);
    GradientMap g{width, height, std::move(dx[0])};
    for (double v : g.values)
        if (!std::isfinite(v)) throw NumericError("non-finite input gradient");
    return g;
}

GradientMap input_gradient(const CnnModel& model, const GrayImage& img, Label target) {
    return input_gradient(model, to_real(img), img.width(), img.height(), target);
}

SignMap sign_map(const GradientMap& grad) {
    SignMap s{grad.width, grad.height, std::vector<std::int8_t>(grad.values.size())};
    for (std::size_t i = 0; i < grad.values.size(); ++i) s.signs[i] = grad.values[i] < 0.0 ? -1 : 1;
    return s;
}

double batch_loss(const CnnModel& model, std::span<const std::vector<double>> images, std::span<const Label> labels,
                  NormMode mode) {
    return loss_and_gradient(model, images, labels, mode, false).loss;
}

std::vector<double> param_gradient(const CnnModel& model, std::span<const std::vector<double>> images,
                                   std::span<const Label> labels, NormMode mode, double* loss) {
    auto r = loss_and_gradient(model, images, labels, mode, true);
    if (loss) *loss = r.loss;
    return std::move(r.grad);
}

std::vector<std::int8_t> kink_signature(const CnnModel& model, std::span<const std::vector<double>> images,
                                       NormMode mode) {
    check_model(model);
    Network net(model);
    std::vector<Trace> traces;
    std::array<NormStats, 3> stats;
    net.forward(images, mode, traces, stats);
    std::vector<std::int8_t> sig;
    auto push = [&](const Tensor& t) {
        for (double v : t.v) sig.push_back(static_cast<std::int8_t>(v > 0.0 ? 1 : (v < 0.0 ? -1 : 0)));
    };
    for (const auto& t : traces) {
        push(t.z1);
        push(t.y3);
    }
    return sig;
}

std::vector<std::int8_t> kink_signature(const CnnModel& model, std::span<const double> pixels) {
    std::vector<double> img(pixels.begin(), pixels.end());
    return kink_signature(model, std::span<const std::vector<double>>(&img, 1), NormMode::Running);
}

CnnModel train(const TrainConfig& config, std::span<const ImagePair> pairs, const EpochCallback& on_epoch) {
    if (!(config.learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
    if (config.batch_size < 2 || config.batch_size % 2 != 0)
        throw ArgumentError("batch size must be an even number >= 2 (cover/stego pairs)");
    if (config.norm_momentum < 0.0 || config.norm_momentum > 1.0)
        throw ArgumentError("normalization momentum must lie in [0,1]");
    if (pairs.size() < 2) throw ArgumentError("training needs at least two cover/stego pairs");
    const GrayImage& first = pairs.front().cover;
    for (const auto& p : pairs)
        if (!p.cover.same_shape(first) || !p.stego.same_shape(first))
            throw ArgumentError("training images must all share one shape");

    CnnArchitecture arch;
    arch.input_width = first.width();
    arch.input_height = first.height();
    CnnModel model = init_model(arch, config.seed);
    if (config.epochs == 0) return model;

    std::vector<std::vector<double>> covers, stegos;
    covers.reserve(pairs.size());
    stegos.reserve(pairs.size());
    for (const auto& p : pairs) {
        covers.push_back(to_real(p.cover));
        stegos.push_back(to_real(p.stego));
    }

    ParamLayout layout(arch);
    std::vector<double> velocity(layout.total, 0.0);
    Rng rng(mix_seed(config.seed, 0x7a11));
    std::vector<std::size_t> order(pairs.size());
    const std::size_t pairs_per_step = config.batch_size / 2;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle(order, rng);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += pairs_per_step) {
            std::size_t end = std::min(order.size(), start + pairs_per_step);
            std::vector<std::vector<double>> batch;
            std::vector<Label> labels;
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(covers[order[k]]);
                labels.push_back(Label::Cover);
                batch.push_back(stegos[order[k]]);
                labels.push_back(Label::Stego);
            }
            StepResult r = loss_and_gradient(model, batch, labels, NormMode::Batch, true);
            if (!std::isfinite(r.loss))
                throw NumericError("training diverged at epoch " + std::to_string(epoch));
            for (std::size_t i = 0; i < layout.total; ++i) {
                velocity[i] = config.momentum * velocity[i] - config.learning_rate * r.grad[i];
                model.params[i] += velocity[i];
            }
            for (std::size_t k = 0; k < 3; ++k) {
                std::size_t off = running_offset(arch, k);
                std::size_t C = arch.channels[k];
                for (std::size_t c = 0; c < C; ++c) {
                    double& rm = model.running[off + c];
                    double& rv = model.running[off + C + c];
                    rm = (1.0 - config.norm_momentum) * rm + config.norm_momentum * r.stats[k].mean[c];
                    rv = (1.0 - config.norm_momentum) * rv + config.norm_momentum * r.stats[k].var[c];
                }
            }
            loss_sum += r.loss;
            ++steps;
        }
        double mean_loss = loss_sum / static_cast<double>(steps);
        if (!std::isfinite(mean_loss)) throw NumericError("training diverged at epoch " + std::to_string(epoch));
        if (on_epoch) on_epoch(epoch, mean_loss);
    }
    std::vector<std::vector<double>> all = covers;
    all.insert(all.end(), stegos.begin(), stegos.end());
    recalibrate(model, all);
    return model;
}

// ---- serialization -------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'A', 'S', 'T', 'G', 'C', 'N', 'N', '\0'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        auto b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw IoError("model file truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t pos() const { return pos_; }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const CnnModel& model) {
    check_model(model);
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kModelFormatVersion);
    w.u32(static_cast<std::uint32_t>(model.arch.input_width));
    w.u32(static_cast<std::uint32_t>(model.arch.input_height));
    w.u32(static_cast<std::uint32_t>(model.arch.channels.size()));
    for (auto c : model.arch.channels) w.u32(static_cast<std::uint32_t>(c));
    w.u64(model.params.size());
    w.u64(model.running.size());
    for (double v : model.params) w.f64(v);
    for (double v : model.running) w.f64(v);
    w.u32(crc32(w.out));
    return std::move(w.out);
}

CnnModel deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof kMagic) throw IoError("model file truncated");
    if (!std::equal(kMagic, kMagic + sizeof kMagic, bytes.begin())) throw FormatError("not a model file (bad magic)");
    Reader r(bytes);
    r.skip(sizeof kMagic);
    std::uint32_t version = r.u32();
    if (version != kModelFormatVersion)
        throw FormatError("model format version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kModelFormatVersion) + ")");
    CnnModel model;
    model.arch.input_width = r.u32();
    model.arch.input_height = r.u32();
    std::uint32_t groups = r.u32();
    if (groups != model.arch.channels.size()) throw FormatError("model architecture descriptor not recognized");
    for (auto& c : model.arch.channels) {
        c = r.u32();
        if (c == 0 || c > 4096) throw FormatError("model channel count out of range");
    }
    if (model.arch.input_width < 4 || model.arch.input_height < 4 || model.arch.input_width > 65536 ||
        model.arch.input_height > 65536)
        throw FormatError("model input shape out of range");
    std::uint64_t np = r.u64();
    std::uint64_t nr = r.u64();
    if (np != ParamLayout(model.arch).total || nr != running_size(model.arch))
        throw FormatError("model parameter count does not match its architecture");
    r.need((np + nr) * 8 + 4);
    model.params.resize(np);
    model.running.resize(nr);
    for (auto& v : model.params) v = r.f64();
    for (auto& v : model.running) v = r.f64();
    std::size_t body = r.pos();
    std::uint32_t stored = r.u32();
    if (stored != crc32(bytes.subspan(0, body))) throw IoError("model file checksum mismatch");
    for (double v : model.params)
        if (!std::isfinite(v)) throw IoError("model file holds non-finite parameters");
    return model;
}

void save_model(const CnnModel& model, const std::filesystem::path& path) {
    auto bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

CnnModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

std::string model_id(const CnnModel& model) {
    auto bytes = serialize_model(model);
    std::uint32_t c = crc32(bytes);
    std::uint8_t b[4] = {static_cast<std::uint8_t>(c >> 24), static_cast<std::uint8_t>(c >> 16),
                         static_cast<std::uint8_t>(c >> 8), static_cast<std::uint8_t>(c)};
    return to_hex(b);
}

}  // namespace advsteg
