#include "fedsim/oracles.hpp"

#include "fedsim/rng.hpp"

namespace fedsim::oracle {

std::vector<double> naive_forward_sample(const Network& net, const std::vector<double>& x) {
    std::vector<double> cur = x;
    const std::vector<double>& P = net.params();
    for (const LayerSpec& spec : net.layers()) {
        switch (spec.kind) {
            case LayerKind::dense: {
                std::vector<double> next(spec.out, 0.0);
                for (int j = 0; j < spec.out; ++j) {
                    double acc = P[spec.param_offset + static_cast<std::size_t>(spec.in) * spec.out + j];
                    for (int i = 0; i < spec.in; ++i)
                        acc += cur[i] * P[spec.param_offset + static_cast<std::size_t>(i) * spec.out + j];
                    next[j] = acc;
                }
                cur = next;
                break;
            }
            case LayerKind::conv2d: {
                const Shape& si = spec.in_shape;
                const Shape& so = spec.out_shape;
                std::vector<double> next(static_cast<std::size_t>(so.elems()), 0.0);
                std::size_t wbase = spec.param_offset;
                std::size_t bbase = wbase + static_cast<std::size_t>(spec.out_ch) * spec.in_ch * spec.kh * spec.kw;
                for (int oc = 0; oc < so.channels; ++oc)
                    for (int oy = 0; oy < so.height; ++oy)
                        for (int ox = 0; ox < so.width; ++ox) {
                            double acc = P[bbase + oc];
                            for (int ic = 0; ic < si.channels; ++ic)
                                for (int ky = 0; ky < spec.kh; ++ky)
                                    for (int kx = 0; kx < spec.kw; ++kx)
                                        acc += cur[(static_cast<std::size_t>(ic) * si.height + oy + ky) * si.width +
                                                   ox + kx] *
                                               P[wbase + ((static_cast<std::size_t>(oc) * si.channels + ic) * spec.kh +
                                                          ky) * spec.kw +
                                                 kx];
                            next[(static_cast<std::size_t>(oc) * so.height + oy) * so.width + ox] = acc;
                        }
                cur = next;
                break;
            }
            case LayerKind::relu:
                for (double& v : cur) v = std::max(v, 0.0);
                break;
            case LayerKind::flatten:
                break;
            case LayerKind::tanh_act:
                for (double& v : cur) v = std::tanh(v);
                break;
            case LayerKind::scale:
                for (double& v : cur) v *= spec.alpha;
                break;
        }
    }
    return cur;
}

std::vector<double> finite_diff_param_grad(const Network& net, const Matrix& batch, const std::vector<int>& labels,
                                           const std::vector<std::size_t>& coords, double h) {
    Network probe = net;
    std::vector<std::size_t> idx = coords;
    if (idx.empty()) {
        idx.resize(net.param_count());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    }
    std::vector<double> grad(idx.size(), 0.0);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        std::size_t i = idx[k];
        double orig = probe.params()[i];
        probe.params()[i] = orig + h;
        double lp = probe.loss(batch, labels);
        probe.params()[i] = orig - h;
        double lm = probe.loss(batch, labels);
        probe.params()[i] = orig;
        grad[k] = (lp - lm) / (2.0 * h);
    }
    return grad;
}

double gradient_check(const Network& net, const Matrix& batch, const std::vector<int>& labels, int n_coords,
                      std::uint64_t seed, double h) {
    Rng rng(seed);
    std::vector<std::size_t> coords;
    int total = static_cast<int>(net.param_count());
    int n = std::min(n_coords, total);
    for (int i = 0; i < n; ++i) coords.push_back(static_cast<std::size_t>(rng.uniform_int(total)));
    std::vector<double> numeric = finite_diff_param_grad(net, batch, labels, coords, h);
    Network::LossGrad lg = net.loss_and_grad(batch, labels);

    double max_rel = 0.0;
    for (std::size_t k = 0; k < coords.size(); ++k) {
        double a = lg.param_grad[coords[k]];
        double b = numeric[k];
        double denom = std::max({std::abs(a), std::abs(b), 1e-6});
        max_rel = std::max(max_rel, std::abs(a - b) / denom);
    }
    return max_rel;
}

std::vector<double> trimmed_mean(const std::vector<std::vector<double>>& updates, int m) {
    const std::size_t d = updates.front().size();
    const int n = static_cast<int>(updates.size());
    std::vector<double> out(d, 0.0);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (int i = 0; i < n; ++i) col[i] = updates[i][j];
        std::sort(col.begin(), col.end());
        double sum = 0.0;
        for (int i = m; i < n - m; ++i) sum += col[i];
        out[j] = sum / (n - 2 * m);
    }
    return out;
}

std::vector<double> coordinate_median(const std::vector<std::vector<double>>& updates) {
    const std::size_t d = updates.front().size();
    const int n = static_cast<int>(updates.size());
    std::vector<double> out(d, 0.0);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (int i = 0; i < n; ++i) col[i] = updates[i][j];
        std::sort(col.begin(), col.end());
        out[j] = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    return out;
}

std::vector<double> krum_scores(const std::vector<std::vector<double>>& updates, int f) {
    const int n = static_cast<int>(updates.size());
    std::vector<std::vector<double>> dist2(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < updates[i].size(); ++k) {
                double diff = updates[i][k] - updates[j][k];
                s += diff * diff;
            }
            dist2[i][j] = dist2[j][i] = s;
        }
    int peers = std::clamp(n - f - 1, 1, n - 1);
    std::vector<double> scores(n, 0.0);
    for (int i = 0; i < n; ++i) {
        std::vector<double> others;
        for (int j = 0; j < n; ++j)
            if (j != i) others.push_back(dist2[i][j]);
        std::sort(others.begin(), others.end());
        double s = 0.0;
        for (int k = 0; k < peers; ++k) s += others[k];
        scores[i] = s;
    }
    return scores;
}

int krum_select(const std::vector<std::vector<double>>& updates, int f) {
    std::vector<double> scores = krum_scores(updates, f);
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i)
        if (scores[i] < scores[best]) best = i;
    return best;
}

std::vector<int> multi_krum_select(const std::vector<std::vector<double>>& updates, int f, int c) {
    std::vector<int> remaining(updates.size());
    for (std::size_t i = 0; i < updates.size(); ++i) remaining[i] = static_cast<int>(i);
    std::vector<int> selected;
    while (static_cast<int>(selected.size()) < c && !remaining.empty()) {
        std::vector<std::vector<double>> sub;
        for (int idx : remaining) sub.push_back(updates[idx]);
        int pick = remaining[krum_select(sub, f)];
        selected.push_back(pick);
        remaining.erase(std::find(remaining.begin(), remaining.end(), pick));
    }
    return selected;
}

double geometric_median_objective(const std::vector<std::vector<double>>& updates, const std::vector<double>& v) {
    double obj = 0.0;
    for (const std::vector<double>& u : updates) {
        double s = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            double diff = u[k] - v[k];
            s += diff * diff;
        }
        obj += std::sqrt(s);
    }
    return obj;
}

std::vector<double> grid_geometric_median_2d(const std::vector<std::vector<double>>& points, int grid_n) {
    double xmin = points[0][0], xmax = points[0][0], ymin = points[0][1], ymax = points[0][1];
    for (const std::vector<double>& p : points) {
        xmin = std::min(xmin, p[0]);
        xmax = std::max(xmax, p[0]);
        ymin = std::min(ymin, p[1]);
        ymax = std::max(ymax, p[1]);
    }
    std::vector<double> best = {xmin, ymin};
    double best_obj = geometric_median_objective(points, best);
    for (int i = 0; i < grid_n; ++i) {
        for (int j = 0; j < grid_n; ++j) {
            std::vector<double> v = {xmin + (xmax - xmin) * i / (grid_n - 1.0),
                                     ymin + (ymax - ymin) * j / (grid_n - 1.0)};
            double obj = geometric_median_objective(points, v);
            if (obj < best_obj) {
                best_obj = obj;
                best = v;
            }
        }
    }
    return best;
}

}  // namespace fedsim::oracle
