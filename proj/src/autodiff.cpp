#include "ddnet/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace ddnet {

Var Tape::push(Tensor value, BackFn back) {
    nodes_.push_back({std::move(value), std::move(back)});
    return {int(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) { return push(std::move(value), {}); }

void Tape::accumulate(std::vector<Tensor>& adj, int id, const Tensor& g) {
    if (adj[id].size() == 0)
        adj[id] = g;
    else
        for (std::size_t i = 0; i < g.size(); ++i) adj[id].data[i] += g.data[i];
}

void Tape::clear() { nodes_.clear(); }

Var Tape::add(Var a, Var b) {
    Tensor out = ddnet::add(val(a), val(b));
    return push(std::move(out), [a, b](Tape&, const Tensor& g, std::vector<Tensor>& adj) {
        accumulate(adj, a.id, g);
        accumulate(adj, b.id, g);
    });
}

Var Tape::sub(Var a, Var b) {
    Tensor out = ddnet::sub(val(a), val(b));
    return push(std::move(out), [a, b](Tape&, const Tensor& g, std::vector<Tensor>& adj) {
        accumulate(adj, a.id, g);
        Tensor neg = scale(g, -1.0);
        accumulate(adj, b.id, neg);
    });
}

Var Tape::mul(Var a, Var b) {
    Tensor out = hadamard(val(a), val(b));
    return push(std::move(out), [a, b](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        accumulate(adj, a.id, hadamard(g, t.val(b)));
        accumulate(adj, b.id, hadamard(g, t.val(a)));
    });
}

Var Tape::div(Var a, Var b) {
    check(val(a).same_shape(val(b)), "div: shape mismatch");
    Tensor out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] /= val(b).data[i];
    return push(std::move(out), [a, b](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        const Tensor& bv = t.val(b);
        const Tensor& av = t.val(a);
        Tensor ga = g, gb = g;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.data[i] = g.data[i] / bv.data[i];
            gb.data[i] = -g.data[i] * av.data[i] / (bv.data[i] * bv.data[i]);
        }
        accumulate(adj, a.id, ga);
        accumulate(adj, b.id, gb);
    });
}

Var Tape::matmul(Var a, Var b) {
    Tensor out = ddnet::matmul(val(a), val(b));
    return push(std::move(out), [a, b](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        const Tensor& av = t.val(a);
        const Tensor& bv = t.val(b);
        if (bv.rank() == 1) {
            // out = A x : gA = g x^T, gx = A^T g
            Tensor ga = Tensor::zeros(av.shape);
            for (std::size_t i = 0; i < av.rows(); ++i)
                for (std::size_t j = 0; j < av.cols(); ++j) ga(i, j) = g(i) * bv(j);
            accumulate(adj, a.id, ga);
            Tensor gb = Tensor::zeros(bv.shape);
            for (std::size_t j = 0; j < av.cols(); ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < av.rows(); ++i) acc += av(i, j) * g(i);
                gb(j) = acc;
            }
            accumulate(adj, b.id, gb);
        } else {
            Tensor ga = ddnet::matmul(g, ddnet::transpose(bv));
            Tensor gb = ddnet::matmul(ddnet::transpose(av), g);
            accumulate(adj, a.id, ga);
            accumulate(adj, b.id, gb);
        }
    });
}

Var Tape::transpose(Var a) {
    Tensor out = ddnet::transpose(val(a));
    return push(std::move(out), [a](Tape&, const Tensor& g, std::vector<Tensor>& adj) {
        Tensor ga = ddnet::transpose(g);
        accumulate(adj, a.id, ga);
    });
}

Var Tape::concat(const std::vector<Var>& parts) {
    std::size_t total = 0;
    for (Var p : parts) {
        check(val(p).rank() == 1, "concat: rank-1 operands required");
        total += val(p).size();
    }
    Tensor out = Tensor::zeros({total});
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& v = val(p);
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
        off += v.size();
    }
    std::vector<Var> ps = parts;
    return push(std::move(out), [ps](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        std::size_t off = 0;
        for (Var p : ps) {
            const std::size_t n = t.val(p).size();
            Tensor gp = Tensor::zeros({n});
            std::copy(g.data.begin() + off, g.data.begin() + off + n, gp.data.begin());
            accumulate(adj, p.id, gp);
            off += n;
        }
    });
}

Var Tape::relu(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::max(v, 0.0);
    return push(std::move(out), [a](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        const Tensor& av = t.val(a);
        Tensor ga = g;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (av.data[i] <= 0.0) ga.data[i] = 0.0;
        accumulate(adj, a.id, ga);
    });
}

Var Tape::sigmoid(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    Tensor saved = out;
    return push(std::move(out), [a, saved](Tape&, const Tensor& g, std::vector<Tensor>& adj) {
        Tensor ga = g;
        for (std::size_t i = 0; i < g.size(); ++i)
            ga.data[i] *= saved.data[i] * (1.0 - saved.data[i]);
        accumulate(adj, a.id, ga);
    });
}

Var Tape::tanh_(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::tanh(v);
    Tensor saved = out;
    return push(std::move(out), [a, saved](Tape&, const Tensor& g, std::vector<Tensor>& adj) {
        Tensor ga = g;
        for (std::size_t i = 0; i < g.size(); ++i)
            ga.data[i] *= 1.0 - saved.data[i] * saved.data[i];
        accumulate(adj, a.id, ga);
    });
}

Var Tape::log_(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::log(v);
    return push(std::move(out), [a](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        const Tensor& av = t.val(a);
        Tensor ga = g;
        for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] /= av.data[i];
        accumulate(adj, a.id, ga);
    });
}

Var Tape::abs_(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::abs(v);
    return push(std::move(out), [a](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        const Tensor& av = t.val(a);
        Tensor ga = g;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = av.data[i] > 0.0 ? 1.0 : (av.data[i] < 0.0 ? -1.0 : 0.0);
            ga.data[i] *= s;
        }
        accumulate(adj, a.id, ga);
    });
}

Var Tape::softmax(Var a) {
    check(val(a).rank() == 1, "softmax: rank-1 input required");
    const Tensor& av = val(a);
    double mx = av.data[0];
    for (double v : av.data) mx = std::max(mx, v);
    Tensor out = av;
    double z = 0.0;
    for (double& v : out.data) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : out.data) v /= z;
    Tensor saved = out;
    return push(std::move(out), [a, saved](Tape&, const Tensor& g, std::vector<Tensor>& adj) {
        double gd = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gd += g.data[i] * saved.data[i];
        Tensor ga = g;
        for (std::size_t i = 0; i < g.size(); ++i)
            ga.data[i] = saved.data[i] * (g.data[i] - gd);
        accumulate(adj, a.id, ga);
    });
}

Var Tape::scale_const(Var a, double c) {
    Tensor out = scale(val(a), c);
    return push(std::move(out), [a, c](Tape&, const Tensor& g, std::vector<Tensor>& adj) {
        Tensor ga = scale(g, c);
        accumulate(adj, a.id, ga);
    });
}

Var Tape::add_const(Var a, double c) {
    Tensor out = val(a);
    for (double& v : out.data) v += c;
    return push(std::move(out), [a](Tape&, const Tensor& g, std::vector<Tensor>& adj) {
        accumulate(adj, a.id, g);
    });
}

Var Tape::max_const(Var a, double floor) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::max(v, floor);
    return push(std::move(out), [a, floor](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        const Tensor& av = t.val(a);
        Tensor ga = g;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (av.data[i] <= floor) ga.data[i] = 0.0;
        accumulate(adj, a.id, ga);
    });
}

Var Tape::add_scalar(Var a, Var s) {
    check(val(s).is_scalar(), "add_scalar: scalar operand required");
    Tensor out = val(a);
    const double sv = val(s).item();
    for (double& v : out.data) v += sv;
    return push(std::move(out), [a, s](Tape&, const Tensor& g, std::vector<Tensor>& adj) {
        accumulate(adj, a.id, g);
        double acc = 0.0;
        for (double v : g.data) acc += v;
        Tensor gs = Tensor::scalar(acc);
        accumulate(adj, s.id, gs);
    });
}

Var Tape::mul_scalar(Var a, Var s) {
    check(val(s).is_scalar(), "mul_scalar: scalar operand required");
    Tensor out = scale(val(a), val(s).item());
    return push(std::move(out), [a, s](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        Tensor ga = scale(g, t.val(s).item());
        accumulate(adj, a.id, ga);
        Tensor gs = Tensor::scalar(dot(g, t.val(a)));
        accumulate(adj, s.id, gs);
    });
}

Var Tape::sum(Var a) {
    double acc = 0.0;
    for (double v : val(a).data) acc += v;
    return push(Tensor::scalar(acc), [a](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
        Tensor ga = Tensor::full(t.val(a).shape, g.item());
        accumulate(adj, a.id, ga);
    });
}

Var Tape::norm1(Var a) {
    return push(Tensor::scalar(ddnet::norm1(val(a))),
                [a](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
                    const Tensor& av = t.val(a);
                    Tensor ga = av;
                    for (double& v : ga.data)
                        v = g.item() * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
                    accumulate(adj, a.id, ga);
                });
}

Var Tape::norm2sq(Var a) {
    return push(Tensor::scalar(ddnet::norm2sq(val(a))),
                [a](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
                    Tensor ga = scale(t.val(a), 2.0 * g.item());
                    accumulate(adj, a.id, ga);
                });
}

Var Tape::trace(Var a) {
    return push(Tensor::scalar(ddnet::trace(val(a))),
                [a](Tape& t, const Tensor& g, std::vector<Tensor>& adj) {
                    const std::size_t n = t.val(a).rows();
                    Tensor ga = Tensor::zeros({n, n});
                    for (std::size_t i = 0; i < n; ++i) ga(i, i) = g.item();
                    accumulate(adj, a.id, ga);
                });
}

Var Tape::inverse(Var a) {
    Tensor inv = ddnet::inverse(val(a));
    Tensor saved = inv;
    // d(A^-1) = -A^-1 dA A^-1, so gA = -A^-T G A^-T.
    return push(std::move(inv), [a, saved](Tape&, const Tensor& g, std::vector<Tensor>& adj) {
        Tensor it = ddnet::transpose(saved);
        Tensor ga = scale(ddnet::matmul(ddnet::matmul(it, g), it), -1.0);
        accumulate(adj, a.id, ga);
    });
}

std::vector<Tensor> Tape::gradients(Var loss, const std::vector<Var>& leaves) {
    check(val(loss).is_scalar(), "gradients: loss must be a scalar");
    std::vector<Tensor> adj(nodes_.size());
    adj[loss.id] = Tensor::scalar(1.0);
    for (int i = loss.id; i >= 0; --i) {
        if (adj[i].size() == 0 || !nodes_[i].back) continue;
        nodes_[i].back(*this, adj[i], adj);
    }
    std::vector<Tensor> out;
    out.reserve(leaves.size());
    for (Var l : leaves) {
        if (adj[l.id].size() == 0)
            out.push_back(Tensor::zeros(nodes_[l.id].value.shape));
        else
            out.push_back(std::move(adj[l.id]));
    }
    return out;
}

}  // namespace ddnet
