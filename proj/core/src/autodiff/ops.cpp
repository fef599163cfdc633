#include "mmt/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

namespace mmt::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap view(const Node& n) {
    return {n.data.data(), static_cast<Eigen::Index>(n.rows()), static_cast<Eigen::Index>(n.cols())};
}
ConstMatMap view(const std::vector<double>& v, std::size_t r, std::size_t c) {
    return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
MatMap view_mut(std::vector<double>& v, std::size_t r, std::size_t c) {
    return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

const Node& node_of(const Tensor& t) {
    if (!t.defined()) throw ContractError("op applied to an undefined tensor");
    return *t.node();
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
    }
}

// Elementwise unary op; dfn(x, y) is dy/dx.
template <typename F, typename DF>
Tensor unary(const Tensor& a, F fn, DF dfn) {
    const auto& an = node_of(a);
    std::vector<double> out(an.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(an.data[i]);
    return detail::make_result(an.shape, std::move(out), {a.node()}, [dfn](Node& self) {
        Node& p = *self.parents[0];
        auto& g = p.grad_slot();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfn(p.data[i], self.data[i]);
    });
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& an = node_of(a);
    const auto& bn = node_of(b);
    if (an.cols() != bn.rows()) {
        throw ContractError("matmul: inner dimensions differ " + shape_string(an.shape) + " x " +
                            shape_string(bn.shape));
    }
    const std::size_t m = an.rows(), n = bn.cols();
    std::vector<double> out(m * n);
    view_mut(out, m, n).noalias() = view(an) * view(bn);
    return detail::make_result(matrix_shape(m, n), std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        auto dc = view(self.grad, self.rows(), self.cols());
        if (pa.requires_grad) {
            view_mut(pa.grad_slot(), pa.rows(), pa.cols()).noalias() += dc * view(pb).transpose();
        }
        if (pb.requires_grad) {
            view_mut(pb.grad_slot(), pb.rows(), pb.cols()).noalias() += view(pa).transpose() * dc;
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const auto& an = node_of(a);
    const auto& bn = node_of(b);
    const bool broadcast = an.shape != bn.shape;
    if (broadcast && !(bn.rows() == 1 && bn.cols() == an.cols())) {
        throw ContractError("add: cannot combine " + shape_string(an.shape) + " and " + shape_string(bn.shape));
    }
    std::vector<double> out = an.data;
    const std::size_t cols = an.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bn.data[broadcast ? i % cols : i];
    return detail::make_result(an.shape, std::move(out), {a.node(), b.node()}, [broadcast](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.grad_slot();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_slot();
            const std::size_t cols = self.cols();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[broadcast ? i % cols : i] += self.grad[i];
        }
    });
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "subtract");
    const auto& an = node_of(a);
    const auto& bn = node_of(b);
    std::vector<double> out(an.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = an.data[i] - bn.data[i];
    return detail::make_result(an.shape, std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.grad_slot();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_slot();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "multiply");
    const auto& an = node_of(a);
    const auto& bn = node_of(b);
    std::vector<double> out(an.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = an.data[i] * bn.data[i];
    return detail::make_result(an.shape, std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& g = pa.grad_slot();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_slot();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor absolute(const Tensor& a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
    const auto& an = node_of(a);
    double total = 0.0;
    for (double x : an.data) total += x;
    return detail::make_result({1}, {total}, {a.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        auto& g = p.grad_slot();
        for (auto& x : g) x += self.grad[0];
    });
}

Tensor softmax(const Tensor& a) {
    const auto& an = node_of(a);
    const std::size_t rows = an.rows(), cols = an.cols();
    std::vector<double> out(an.data.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = an.data.data() + r * cols;
        double* y = out.data() + r * cols;
        const double mx = *std::max_element(x, x + cols);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += (y[c] = std::exp(x[c] - mx));
        for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
    }
    return detail::make_result(an.shape, std::move(out), {a.node()}, [](Node& self) {
        Node& p = *self.parents[0];
        auto& g = p.grad_slot();
        const std::size_t rows = self.rows(), cols = self.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * cols;
            const double* dy = self.grad.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
            for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (dy[c] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const auto& xn = node_of(x);
    const std::size_t rows = xn.rows(), cols = xn.cols();
    if (gain.numel() != cols || bias.numel() != cols) {
        throw ContractError("layer_norm: gain/bias width must equal " + std::to_string(cols));
    }
    const auto& gn = node_of(gain);
    const auto& bn = node_of(bias);
    std::vector<double> normalized(xn.data.size());
    std::vector<double> inv_std(rows);
    std::vector<double> out(xn.data.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xn.data.data() + r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
        var /= static_cast<double>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            const double h = (xr[c] - mean) * inv_std[r];
            normalized[r * cols + c] = h;
            out[r * cols + c] = h * gn.data[c] + bn.data[c];
        }
    }
    return detail::make_result(
        xn.shape, std::move(out), {x.node(), gain.node(), bias.node()},
        [normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
            Node& px = *self.parents[0];
            Node& pg = *self.parents[1];
            Node& pb = *self.parents[2];
            const std::size_t rows = self.rows(), cols = self.cols();
            const double n = static_cast<double>(cols);
            if (pg.requires_grad || pb.requires_grad) {
                auto& gg = pg.grad_slot();
                auto& gb = pb.grad_slot();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        gg[c] += self.grad[r * cols + c] * normalized[r * cols + c];
                        gb[c] += self.grad[r * cols + c];
                    }
                }
            }
            if (px.requires_grad) {
                auto& gx = px.grad_slot();
                for (std::size_t r = 0; r < rows; ++r) {
                    double mean_dh = 0.0, mean_dh_h = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) {
                        const double dh = self.grad[r * cols + c] * pg.data[c];
                        mean_dh += dh;
                        mean_dh_h += dh * normalized[r * cols + c];
                    }
                    mean_dh /= n;
                    mean_dh_h /= n;
                    for (std::size_t c = 0; c < cols; ++c) {
                        const double dh = self.grad[r * cols + c] * pg.data[c];
                        gx[r * cols + c] += inv_std[r] * (dh - mean_dh - normalized[r * cols + c] * mean_dh_h);
                    }
                }
            }
        });
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
    const auto& tn = node_of(table);
    const std::size_t vocab = tn.rows(), cols = tn.cols();
    if (ids.empty()) throw ContractError("embedding: empty id sequence");
    std::vector<double> out(ids.size() * cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw ContractError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                                std::to_string(vocab));
        }
        std::copy_n(tn.data.data() + static_cast<std::size_t>(ids[i]) * cols, cols, out.data() + i * cols);
    }
    return detail::make_result(matrix_shape(ids.size(), cols), std::move(out), {table.node()},
                               [ids = std::vector<TokenId>(ids.begin(), ids.end())](Node& self) {
                                   Node& p = *self.parents[0];
                                   auto& g = p.grad_slot();
                                   const std::size_t cols = self.cols();
                                   for (std::size_t i = 0; i < ids.size(); ++i) {
                                       double* row = g.data() + static_cast<std::size_t>(ids[i]) * cols;
                                       for (std::size_t c = 0; c < cols; ++c) row[c] += self.grad[i * cols + c];
                                   }
                               });
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const std::size_t rows = parts.front().rows();
    std::vector<std::size_t> widths;
    std::vector<std::shared_ptr<Node>> parents;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ContractError("concat: row counts differ");
        widths.push_back(p.cols());
        total += p.cols();
        parents.push_back(p.node());
    }
    std::vector<double> out(rows * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& src = parts[k].values();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(src.data() + r * widths[k], widths[k], out.data() + r * total + offset);
        }
        offset += widths[k];
    }
    return detail::make_result(matrix_shape(rows, total), std::move(out), std::move(parents),
                               [widths = std::move(widths)](Node& self) {
                                   const std::size_t rows = self.rows(), total = self.cols();
                                   std::size_t offset = 0;
                                   for (std::size_t k = 0; k < widths.size(); ++k) {
                                       Node& p = *self.parents[k];
                                       if (p.requires_grad) {
                                           auto& g = p.grad_slot();
                                           for (std::size_t r = 0; r < rows; ++r) {
                                               for (std::size_t c = 0; c < widths[k]; ++c) {
                                                   g[r * widths[k] + c] += self.grad[r * total + offset + c];
                                               }
                                           }
                                       }
                                       offset += widths[k];
                                   }
                               });
}

Tensor masked_mean(const Tensor& x, std::span<const std::uint8_t> mask, std::size_t batch) {
    const auto& xn = node_of(x);
    const std::size_t rows = xn.rows(), cols = xn.cols();
    if (batch == 0 || rows % batch != 0) throw ContractError("masked_mean: rows not divisible by batch");
    if (mask.size() != rows) throw ContractError("masked_mean: mask length differs from row count");
    const std::size_t len = rows / batch;
    std::vector<double> counts(batch, 0.0);
    std::vector<double> out(batch * cols, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < len; ++t) {
            if (!mask[b * len + t]) continue;
            counts[b] += 1.0;
            const double* src = xn.data.data() + (b * len + t) * cols;
            for (std::size_t c = 0; c < cols; ++c) out[b * cols + c] += src[c];
        }
        if (counts[b] == 0.0) throw Error("masked_mean: sequence " + std::to_string(b) + " is entirely padding");
        for (std::size_t c = 0; c < cols; ++c) out[b * cols + c] /= counts[b];
    }
    return detail::make_result(
        matrix_shape(batch, cols), std::move(out), {x.node()},
        [mask = std::vector<std::uint8_t>(mask.begin(), mask.end()), counts = std::move(counts), len](Node& self) {
            Node& p = *self.parents[0];
            auto& g = p.grad_slot();
            const std::size_t cols = self.cols();
            for (std::size_t b = 0; b < counts.size(); ++b) {
                for (std::size_t t = 0; t < len; ++t) {
                    if (!mask[b * len + t]) continue;
                    for (std::size_t c = 0; c < cols; ++c) {
                        g[(b * len + t) * cols + c] += self.grad[b * cols + c] / counts[b];
                    }
                }
            }
        });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionLayout& layout) {
    const auto& qn = node_of(q);
    const auto& kn = node_of(k);
    const auto& vn = node_of(v);
    const std::size_t d = qn.cols();
    const std::size_t H = layout.heads, B = layout.batch, Tq = layout.query_len, Tk = layout.key_len;
    if (H == 0 || d % H != 0) throw ContractError("attention: width not divisible by head count");
    if (kn.cols() != d || vn.cols() != d) throw ContractError("attention: q/k/v widths differ");
    if (qn.rows() != B * Tq || kn.rows() != B * Tk || vn.rows() != B * Tk) {
        throw ContractError("attention: row counts do not match the layout");
    }
    if (!layout.key_mask.empty() && layout.key_mask.size() != B * Tk) {
        throw ContractError("attention: key mask length mismatch");
    }
    const std::size_t dh = d / H;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<std::uint8_t> key_mask(layout.key_mask.begin(), layout.key_mask.end());
    const bool causal = layout.causal;

    auto allowed = [&key_mask, causal, Tk](std::size_t b, std::size_t i, std::size_t j) {
        if (causal && j > i) return false;
        return key_mask.empty() || key_mask[b * Tk + j] != 0;
    };

    // probs[(b*H + h)] is a Tq x Tk block
    std::vector<double> probs(B * H * Tq * Tk, 0.0);
    std::vector<double> out(B * Tq * d, 0.0);
    const auto Q = view(qn), K = view(kn), V = view(vn);
    auto O = view_mut(out, B * Tq, d);
    RowMat scores(Tq, Tk);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < H; ++h) {
            const auto Qb = Q.block(b * Tq, h * dh, Tq, dh);
            const auto Kb = K.block(b * Tk, h * dh, Tk, dh);
            const auto Vb = V.block(b * Tk, h * dh, Tk, dh);
            scores.noalias() = Qb * Kb.transpose();
            auto P = view_mut(probs, B * H * Tq, Tk).block((b * H + h) * Tq, 0, Tq, Tk);
            for (std::size_t i = 0; i < Tq; ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < Tk; ++j) {
                    if (allowed(b, i, j)) mx = std::max(mx, scores(i, j) * inv_sqrt);
                }
                if (!std::isfinite(mx)) continue; // no visible key: row stays zero
                double z = 0.0;
                for (std::size_t j = 0; j < Tk; ++j) {
                    if (allowed(b, i, j)) z += (P(i, j) = std::exp(scores(i, j) * inv_sqrt - mx));
                }
                for (std::size_t j = 0; j < Tk; ++j) P(i, j) /= z;
            }
            O.block(b * Tq, h * dh, Tq, dh).noalias() = P * Vb;
        }
    }

    return detail::make_result(
        matrix_shape(B * Tq, d), std::move(out), {q.node(), k.node(), v.node()},
        [probs = std::move(probs), B, H, Tq, Tk, dh, inv_sqrt](Node& self) {
            Node& pq = *self.parents[0];
            Node& pk = *self.parents[1];
            Node& pv = *self.parents[2];
            const std::size_t d = H * dh;
            const auto Q = view(pq), K = view(pk), V = view(pv);
            const auto dO = view(self.grad, B * Tq, d);
            const auto P_all = view(probs, B * H * Tq, Tk);
            RowMat dP(Tq, Tk), dS(Tq, Tk);
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t h = 0; h < H; ++h) {
                    const auto P = P_all.block((b * H + h) * Tq, 0, Tq, Tk);
                    const auto dOb = dO.block(b * Tq, h * dh, Tq, dh);
                    if (pv.requires_grad) {
                        view_mut(pv.grad_slot(), B * Tk, d).block(b * Tk, h * dh, Tk, dh).noalias() +=
                            P.transpose() * dOb;
                    }
                    if (!pq.requires_grad && !pk.requires_grad) continue;
                    dP.noalias() = dOb * V.block(b * Tk, h * dh, Tk, dh).transpose();
                    for (std::size_t i = 0; i < Tq; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < Tk; ++j) dot += dP(i, j) * P(i, j);
                        for (std::size_t j = 0; j < Tk; ++j) dS(i, j) = P(i, j) * (dP(i, j) - dot) * inv_sqrt;
                    }
                    if (pq.requires_grad) {
                        view_mut(pq.grad_slot(), B * Tq, d).block(b * Tq, h * dh, Tq, dh).noalias() +=
                            dS * K.block(b * Tk, h * dh, Tk, dh);
                    }
                    if (pk.requires_grad) {
                        view_mut(pk.grad_slot(), B * Tk, d).block(b * Tk, h * dh, Tk, dh).noalias() +=
                            dS.transpose() * Q.block(b * Tq, h * dh, Tq, dh);
                    }
                }
            }
        });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: probability must lie in [0, 1)");
    if (p == 0.0) return x;
    const auto& xn = node_of(x);
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(xn.data.size());
    std::vector<double> out(xn.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        mask[i] = rng.uniform() >= p ? keep_scale : 0.0;
        out[i] = xn.data[i] * mask[i];
    }
    return detail::make_result(xn.shape, std::move(out), {x.node()}, [mask = std::move(mask)](Node& self) {
        Node& px = *self.parents[0];
        auto& g = px.grad_slot();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets, TokenId pad_id) {
    const auto& ln = node_of(logits);
    const std::size_t rows = ln.rows(), vocab = ln.cols();
    if (targets.size() != rows) {
        throw ContractError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                            std::to_string(rows) + " positions");
    }
    std::vector<double> probs(ln.data.size());
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] == pad_id) continue;
        if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
            throw ContractError("cross_entropy: target id " + std::to_string(targets[r]) + " outside vocabulary of " +
                                std::to_string(vocab));
        }
        const double* x = ln.data.data() + r * vocab;
        double* y = probs.data() + r * vocab;
        const double mx = *std::max_element(x, x + vocab);
        double z = 0.0;
        for (std::size_t c = 0; c < vocab; ++c) z += (y[c] = std::exp(x[c] - mx));
        for (std::size_t c = 0; c < vocab; ++c) y[c] /= z;
        total += -(x[targets[r]] - mx - std::log(z));
        ++count;
    }
    if (count == 0) throw EmptyBatchError("cross_entropy: every target position is padding");
    const double n = static_cast<double>(count);
    return detail::make_result(
        {1}, {total / n}, {logits.node()},
        [probs = std::move(probs), targets = std::vector<TokenId>(targets.begin(), targets.end()), pad_id,
         n](Node& self) {
            Node& p = *self.parents[0];
            auto& g = p.grad_slot();
            const std::size_t vocab = p.cols();
            const double scale = self.grad[0] / n;
            for (std::size_t r = 0; r < targets.size(); ++r) {
                if (targets[r] == pad_id) continue;
                for (std::size_t c = 0; c < vocab; ++c) g[r * vocab + c] += scale * probs[r * vocab + c];
                g[r * vocab + static_cast<std::size_t>(targets[r])] -= scale;
            }
        });
}

} // namespace mmt::ad
