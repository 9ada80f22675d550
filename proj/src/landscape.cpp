#include "stancedyn/landscape.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "stancedyn/rng.hpp"

namespace stancedyn {

namespace {

constexpr int kNetFormatVersion = 1;
constexpr std::ptrdiff_t kGradBlock = 64; // fixed reduction block, keeps sums thread-count independent

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Per-layer buffers reused across the samples of one reduction block.
struct Workspace {
    // forward
    std::vector<Eigen::VectorXd> a; // pre-activations
    std::vector<Eigen::VectorXd> h; // softplus(a) * dropout
    std::vector<Eigen::VectorXd> sig; // sigmoid(a)
    std::vector<Eigen::VectorXd> drop; // dropout multipliers (1/keep or 0)
    // reverse (input gradient)
    std::vector<Eigen::VectorXd> adj_h;
    std::vector<Eigen::VectorXd> adj_a;
    // tangent
    std::vector<Eigen::VectorXd> dot_a;
    std::vector<Eigen::VectorXd> dot_h;
    // reverse over tangent
    std::vector<Eigen::VectorXd> r_h;
    std::vector<Eigen::VectorXd> r_a;
    std::vector<Eigen::VectorXd> r_dot_h;
    std::vector<Eigen::VectorXd> r_dot_a;
    Eigen::VectorXd input;
    Eigen::VectorXd grad_input;

    void resize(const PotentialNet& net) {
        const std::size_t hidden = net.n_layers() - 1;
        a.resize(hidden);
        h.resize(hidden);
        sig.resize(hidden);
        drop.resize(hidden);
        adj_h.resize(hidden);
        adj_a.resize(hidden);
        dot_a.resize(hidden);
        dot_h.resize(hidden);
        r_h.resize(hidden);
        r_a.resize(hidden);
        r_dot_h.resize(hidden);
        r_dot_a.resize(hidden);
        for (std::size_t l = 0; l < hidden; ++l) {
            const Eigen::Index width = net.biases[l].size();
            a[l].resize(width);
            h[l].resize(width);
            sig[l].resize(width);
            drop[l].setOnes(width);
            adj_h[l].resize(width);
            adj_a[l].resize(width);
            dot_a[l].resize(width);
            dot_h[l].resize(width);
            r_h[l].resize(width);
            r_a[l].resize(width);
            r_dot_h[l].resize(width);
            r_dot_a[l].resize(width);
        }
        input.resize(net.input_dim());
        grad_input.resize(net.input_dim());
    }

    void sample_dropout(const PotentialNet& net, std::uint64_t seed) {
        const double p = net.dropout_rate;
        if (p <= 0.0) {
            for (auto& d : drop) d.setOnes();
            return;
        }
        auto engine = make_engine(seed);
        std::bernoulli_distribution keep(1.0 - p);
        const double inv_keep = 1.0 / (1.0 - p);
        for (auto& d : drop) {
            for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = keep(engine) ? inv_keep : 0.0;
        }
    }

    /// Forward pass; input must be loaded into `input`.
    double forward(const PotentialNet& net) {
        const std::size_t hidden = net.n_layers() - 1;
        const Eigen::VectorXd* prev = &input;
        for (std::size_t l = 0; l < hidden; ++l) {
            a[l].noalias() = net.weights[l] * (*prev);
            a[l] += net.biases[l];
            for (Eigen::Index i = 0; i < a[l].size(); ++i) {
                sig[l](i) = sigmoid(a[l](i));
                h[l](i) = softplus(a[l](i)) * drop[l](i);
            }
            prev = &h[l];
        }
        return net.weights[hidden].row(0).dot(*prev) + net.biases[hidden](0);
    }

    /// Reverse pass after forward(); fills grad_input with d phi / d input.
    void input_gradient(const PotentialNet& net) {
        const std::size_t hidden = net.n_layers() - 1;
        if (hidden == 0) {
            grad_input = net.weights[0].row(0).transpose();
            return;
        }
        adj_h[hidden - 1] = net.weights[hidden].row(0).transpose();
        for (std::size_t l = hidden; l-- > 0;) {
            adj_a[l] = adj_h[l].cwiseProduct(drop[l]).cwiseProduct(sig[l]);
            if (l == 0) {
                grad_input.noalias() = net.weights[0].transpose() * adj_a[0];
            } else {
                adj_h[l - 1].noalias() = net.weights[l].transpose() * adj_a[l];
            }
        }
    }

    /// Directional derivative s = v . grad_z phi via a tangent pass, then
    /// reverse over the tangent program to accumulate d s / d params.
    /// forward() and input_gradient() must have run for this sample.
    void grad_of_directional(const PotentialNet& net, const Eigen::VectorXd& v, NetGrads& grads) {
        const std::size_t hidden = net.n_layers() - 1;
        if (hidden == 0) {
            // phi = W z + b: s = v . W^T, d s / d W = v^T
            grads.weights[0].row(0) += v.transpose();
            return;
        }
        // tangent pass
        const Eigen::VectorXd* prev_dot = &v;
        const Eigen::VectorXd* prev_h = &input;
        for (std::size_t l = 0; l < hidden; ++l) {
            dot_a[l].noalias() = net.weights[l] * (*prev_dot);
            dot_h[l] = sig[l].cwiseProduct(dot_a[l]).cwiseProduct(drop[l]);
            prev_dot = &dot_h[l];
            prev_h = &h[l];
        }
        // s = w_out . dot_h[last]
        grads.weights[hidden].row(0) += dot_h[hidden - 1].transpose();

        // reverse over the tangent program
        r_dot_h[hidden - 1] = net.weights[hidden].row(0).transpose();
        r_h[hidden - 1].setZero();
        for (std::size_t l = hidden; l-- > 0;) {
            // dot_h = sig(a) * dot_a * drop
            const Eigen::VectorXd r_dot_h_masked = r_dot_h[l].cwiseProduct(drop[l]);
            r_dot_a[l] = r_dot_h_masked.cwiseProduct(sig[l]);
            // d sigmoid = sig (1 - sig)
            r_a[l] = r_dot_h_masked.cwiseProduct(sig[l].cwiseProduct(Eigen::VectorXd::Ones(sig[l].size()) - sig[l]))
                         .cwiseProduct(dot_a[l]);
            // h = softplus(a) * drop feeding the layers above
            r_a[l] += r_h[l].cwiseProduct(drop[l]).cwiseProduct(sig[l]);

            const Eigen::VectorXd& below_h = l == 0 ? input : h[l - 1];
            const Eigen::VectorXd& below_dot = l == 0 ? v : dot_h[l - 1];
            grads.weights[l].noalias() += r_a[l] * below_h.transpose();
            grads.weights[l].noalias() += r_dot_a[l] * below_dot.transpose();
            grads.biases[l] += r_a[l];
            if (l > 0) {
                r_h[l - 1].noalias() = net.weights[l].transpose() * r_a[l];
                r_dot_h[l - 1].noalias() = net.weights[l].transpose() * r_dot_a[l];
            }
        }
    }
};

void load_input(Workspace& ws, const Eigen::VectorXd& x, double t_norm) {
    ws.input(0) = t_norm;
    ws.input.tail(x.size()) = x;
}

/// Per-sample loss and d loss / d x' for x' = x + grad phi.
double sample_loss_and_pullback(const PotentialNet& net, const TrainPair& pair,
                                const Eigen::VectorXd& xprime, Eigen::VectorXd& u) {
    const Eigen::VectorXd err = xprime - pair.x_next;
    double value = err.squaredNorm();
    u = 2.0 * err;
    const double norm = xprime.norm();
    const double over = norm - net.radius_r;
    if (over > 0.0 && net.confinement_c0 > 0.0) {
        value += net.confinement_c0 * over * over * over * over;
        if (norm > 0.0) {
            u += (4.0 * net.confinement_c0 * over * over * over / norm) * xprime;
        }
    }
    return value;
}

} // namespace

std::int64_t PotentialNet::param_count() const {
    std::int64_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        n += weights[l].size() + biases[l].size();
    }
    return n;
}

PotentialNet make_potential_net(int spatial_dim, const std::vector<int>& hidden_dims,
                                std::uint64_t seed) {
    if (spatial_dim < 1) throw ConfigError("make_potential_net: spatial dimension must be >= 1");
    PotentialNet net;
    net.spatial_dim = spatial_dim;
    auto engine = make_engine(derive_seed(seed, 0x1217));
    std::vector<int> dims;
    dims.push_back(spatial_dim + 1);
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        std::normal_distribution<double> init(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = init(engine);
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return net;
}

double potential_eval(const PotentialNet& net, const Eigen::VectorXd& x, double t_norm) {
    if (x.size() != net.spatial_dim) throw DataError("potential_eval: dimension mismatch");
    Workspace ws;
    ws.resize(net);
    load_input(ws, x, t_norm);
    return ws.forward(net);
}

double potential_eval_dropout(const PotentialNet& net, const Eigen::VectorXd& x, double t_norm,
                              std::uint64_t dropout_seed) {
    if (x.size() != net.spatial_dim) throw DataError("potential_eval: dimension mismatch");
    Workspace ws;
    ws.resize(net);
    ws.sample_dropout(net, dropout_seed);
    load_input(ws, x, t_norm);
    return ws.forward(net);
}

Eigen::VectorXd drift_eval(const PotentialNet& net, const Eigen::VectorXd& x, double t_norm) {
    if (x.size() != net.spatial_dim) throw DataError("drift_eval: dimension mismatch");
    Workspace ws;
    ws.resize(net);
    load_input(ws, x, t_norm);
    ws.forward(net);
    ws.input_gradient(net);
    return ws.grad_input.tail(net.spatial_dim);
}

Eigen::VectorXd step(const PotentialNet& net, const Eigen::VectorXd& x, double t_norm,
                     const Eigen::VectorXd* noise) {
    Eigen::VectorXd next = x + drift_eval(net, x, t_norm);
    if (noise) {
        if (noise->size() != x.size()) throw DataError("step: noise dimension mismatch");
        next += *noise;
    }
    return next;
}

NetGrads NetGrads::zeros_like(const PotentialNet& net) {
    NetGrads g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        g.weights.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
}

void NetGrads::add(const NetGrads& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += other.weights[l];
        biases[l] += other.biases[l];
    }
}

void NetGrads::scale(double s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] *= s;
        biases[l] *= s;
    }
}

double loss(const PotentialNet& net, std::span<const TrainPair> batch) {
    if (batch.empty()) throw DataError("loss: empty batch");
    struct Acc {
        double value = 0.0;
    };
    const Acc total = exec::blocked_reduce<Acc>(
        static_cast<std::ptrdiff_t>(batch.size()), kGradBlock, [] { return Acc{}; },
        [&](Acc& acc, std::ptrdiff_t i) {
            thread_local Workspace ws;
            ws.resize(net);
            const TrainPair& pair = batch[static_cast<std::size_t>(i)];
            load_input(ws, pair.x, pair.t_norm);
            ws.forward(net);
            ws.input_gradient(net);
            const Eigen::VectorXd xprime = pair.x + ws.grad_input.tail(net.spatial_dim);
            Eigen::VectorXd u;
            acc.value += sample_loss_and_pullback(net, pair, xprime, u);
        },
        [](Acc& total_acc, const Acc& acc) { total_acc.value += acc.value; });
    return total.value / static_cast<double>(batch.size());
}

namespace {

struct GradAcc {
    NetGrads grads;
    double value = 0.0;
    bool init = false;
};

double sample_gradient(const PotentialNet& net, const TrainPair& pair, Workspace& ws,
                       const DropoutPlan* dropout, std::size_t batch_index, NetGrads& grads) {
    if (dropout && dropout->rate > 0.0) {
        const std::uint64_t pair_id =
            batch_index < dropout->pair_ids.size() ? dropout->pair_ids[batch_index] : batch_index;
        ws.sample_dropout(net, derive_seed(derive_seed(dropout->master_seed, dropout->epoch), pair_id));
    }
    load_input(ws, pair.x, pair.t_norm);
    ws.forward(net);
    ws.input_gradient(net);
    const Eigen::VectorXd xprime = pair.x + ws.grad_input.tail(net.spatial_dim);
    Eigen::VectorXd u;
    const double value = sample_loss_and_pullback(net, pair, xprime, u);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(net.input_dim());
    v.tail(net.spatial_dim) = u;
    ws.grad_of_directional(net, v, grads);
    return value;
}

} // namespace

double loss_gradient(const PotentialNet& net, std::span<const TrainPair> batch,
                     const DropoutPlan* dropout, NetGrads& grads, exec::Mode mode) {
    if (batch.empty()) throw DataError("loss_gradient: empty batch");
    const GradAcc total = exec::blocked_reduce<GradAcc>(
        static_cast<std::ptrdiff_t>(batch.size()), kGradBlock,
        [] { return GradAcc{}; },
        [&](GradAcc& acc, std::ptrdiff_t i) {
            if (!acc.init) {
                acc.grads = NetGrads::zeros_like(net);
                acc.init = true;
            }
            thread_local Workspace ws;
            ws.resize(net);
            if (!dropout || dropout->rate <= 0.0) {
                for (auto& d : ws.drop) d.setOnes();
            }
            acc.value += sample_gradient(net, batch[static_cast<std::size_t>(i)], ws, dropout,
                                         static_cast<std::size_t>(i), acc.grads);
        },
        [](GradAcc& total_acc, const GradAcc& acc) {
            if (!acc.init) return;
            if (!total_acc.init) {
                total_acc.grads = acc.grads;
                total_acc.init = true;
            } else {
                total_acc.grads.add(acc.grads);
            }
            total_acc.value += acc.value;
        },
        mode);

    grads = total.grads;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    grads.scale(inv_n);
    return total.value * inv_n;
}

double loss_gradient_serial(const PotentialNet& net, std::span<const TrainPair> batch,
                            const DropoutPlan* dropout, NetGrads& grads) {
    if (batch.empty()) throw DataError("loss_gradient: empty batch");
    grads = NetGrads::zeros_like(net);
    Workspace ws;
    ws.resize(net);
    double value = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!dropout || dropout->rate <= 0.0) {
            for (auto& d : ws.drop) d.setOnes();
        }
        value += sample_gradient(net, batch[i], ws, dropout, i, grads);
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    grads.scale(inv_n);
    return value * inv_n;
}

namespace {

struct AdamState {
    NetGrads m;
    NetGrads v;
    long step = 0;
};

void adamw_update(PotentialNet& net, const NetGrads& grads, AdamState& state, double lr,
                  double weight_decay) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
        m = beta1 * m + (1.0 - beta1) * g;
        v.array() = beta2 * v.array() + (1.0 - beta2) * g.array().square();
        theta.array() -=
            lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + eps) + weight_decay * theta.array());
    };
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        update(net.weights[l], grads.weights[l], state.m.weights[l], state.v.weights[l]);
        update(net.biases[l], grads.biases[l], state.m.biases[l], state.v.biases[l]);
    }
}

} // namespace

TrainResult train(const std::vector<LatentTrajectory>& trajs, const TrainConfig& config,
                  const TimeBinning& binning) {
    std::vector<const LatentTrajectory*> usable;
    for (const auto& t : trajs) {
        if (t.coords.size() >= 2) usable.push_back(&t);
    }
    if (usable.size() < 2) throw DataError("train: need at least 2 trajectories with 2+ points");
    const int d = static_cast<int>(usable.front()->coords.front().size());

    // split by trajectory, not by point
    std::vector<std::size_t> order(usable.size());
    std::iota(order.begin(), order.end(), 0);
    {
        auto engine = make_engine(derive_seed(config.seed, 0x5B117));
        std::shuffle(order.begin(), order.end(), engine);
    }
    std::size_t n_train = static_cast<std::size_t>(
        std::llround(config.train_fraction * static_cast<double>(usable.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, usable.size() - 1);

    auto build_pairs = [&](std::size_t lo, std::size_t hi, std::vector<TrainPair>& out) {
        for (std::size_t oi = lo; oi < hi; ++oi) {
            const LatentTrajectory& t = *usable[order[oi]];
            for (std::size_t i = 0; i + 1 < t.coords.size(); ++i) {
                out.push_back(TrainPair{t.coords[i], t.times[i], t.coords[i + 1]});
            }
        }
    };
    std::vector<TrainPair> train_pairs, val_pairs;
    build_pairs(0, n_train, train_pairs);
    build_pairs(n_train, usable.size(), val_pairs);
    if (train_pairs.empty() || val_pairs.empty()) {
        throw DataError("train: empty train or validation split");
    }

    double max_radius = 0.0;
    for (std::size_t oi = 0; oi < n_train; ++oi) {
        for (const auto& x : usable[order[oi]]->coords) max_radius = std::max(max_radius, x.norm());
    }

    PotentialNet net = make_potential_net(d, config.hidden_dims, derive_seed(config.seed, 0x1417));
    net.dropout_rate = config.dropout;
    net.sigma = config.sigma_initial;
    net.confinement_c0 = config.confinement_factor;
    net.radius_r = 1.10 * max_radius;
    net.binning = binning;

    AdamState adam;
    adam.m = NetGrads::zeros_like(net);
    adam.v = NetGrads::zeros_like(net);

    TrainResult result;
    result.history.best_epoch = -1;
    PotentialNet best = net;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    std::vector<std::size_t> pair_order(train_pairs.size());
    std::iota(pair_order.begin(), pair_order.end(), 0);

    for (int epoch = 0; epoch < config.num_epochs; ++epoch) {
        {
            auto engine = make_engine(derive_seed(config.seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
            std::shuffle(pair_order.begin(), pair_order.end(), engine);
        }
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        bool finite = true;
        for (std::size_t start = 0; start < pair_order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(pair_order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<TrainPair> batch;
            std::vector<std::size_t> ids;
            batch.reserve(end - start);
            ids.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train_pairs[pair_order[i]]);
                ids.push_back(pair_order[i]);
            }
            DropoutPlan plan;
            plan.rate = config.dropout;
            plan.master_seed = derive_seed(config.seed, 0xD809);
            plan.epoch = static_cast<std::uint64_t>(epoch);
            plan.pair_ids = ids;

            NetGrads grads;
            const double batch_loss = loss_gradient(net, batch, &plan, grads, exec::mode());
            if (!std::isfinite(batch_loss)) {
                finite = false;
                break;
            }
            adamw_update(net, grads, adam, config.learning_rate, config.weight_decay);
            epoch_loss += batch_loss;
            ++n_batches;
        }
        if (!finite) {
            result.history.diverged = true;
            break; // keep the last finite checkpoint (best-so-far weights)
        }
        const double val = loss(net, val_pairs);
        result.history.train_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, n_batches)));
        result.history.val_loss.push_back(val);
        if (!std::isfinite(val)) {
            result.history.diverged = true;
            break;
        }
        if (val < best_val) {
            best_val = val;
            best = net;
            result.history.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }

    if (result.history.best_epoch < 0) {
        throw NumericError("train: no finite validation loss was ever reached");
    }
    result.net = best;
    return result;
}

PredictResult predict(const PotentialNet& net, const Eigen::VectorXd& x0, double t0_norm,
                      int horizon_bins) {
    if (horizon_bins < 1) throw ConfigError("predict: horizon must be >= 1");
    const double dt = bin_step_normalized(net.binning);
    PredictResult res;
    Eigen::VectorXd x = x0;
    double t = t0_norm;
    const double escape_radius = 10.0 * net.radius_r;
    for (int s = 0; s < horizon_bins; ++s) {
        x = step(net, x, t);
        t += dt;
        if (net.radius_r > 0.0 && x.norm() > escape_radius) {
            res.escaped = true;
            res.path.push_back(x);
            return res;
        }
        res.path.push_back(x);
    }
    return res;
}

McStats mc_uncertainty(const PotentialNet& net, const Eigen::VectorXd& x, double t_norm,
                       int n_samples, std::uint64_t master_seed) {
    if (n_samples < 2) throw ConfigError("mc_uncertainty: need at least 2 samples");
    std::vector<double> values(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) {
        values[static_cast<std::size_t>(i)] =
            potential_eval_dropout(net, x, t_norm, derive_seed(master_seed, static_cast<std::uint64_t>(i)));
    }
    McStats st;
    for (double v : values) st.mean += v;
    st.mean /= n_samples;
    for (double v : values) st.variance += (v - st.mean) * (v - st.mean);
    st.variance /= static_cast<double>(n_samples - 1);
    return st;
}

std::size_t LatticeSpec::total_nodes() const {
    std::size_t n = 1;
    for (int k : nodes) n *= static_cast<std::size_t>(k);
    return n;
}

double LatticeSpec::coord(int axis, int index) const {
    const int n = nodes[static_cast<std::size_t>(axis)];
    if (n == 1) return mins[static_cast<std::size_t>(axis)];
    return mins[static_cast<std::size_t>(axis)] +
           (maxs[static_cast<std::size_t>(axis)] - mins[static_cast<std::size_t>(axis)]) *
               static_cast<double>(index) / static_cast<double>(n - 1);
}

double LatticeSpec::spacing(int axis) const {
    const int n = nodes[static_cast<std::size_t>(axis)];
    if (n <= 1) return 0.0;
    return (maxs[static_cast<std::size_t>(axis)] - mins[static_cast<std::size_t>(axis)]) /
           static_cast<double>(n - 1);
}

DriftField drift_field(const PotentialNet& net, const LatticeSpec& grid, double t_norm,
                       const std::vector<Eigen::VectorXd>& train_points,
                       const DriftFieldOptions& options) {
    if (grid.dims() != net.spatial_dim) throw ConfigError("drift_field: grid dimension mismatch");
    if (net.radius_r > 0.0) {
        for (int ax = 0; ax < grid.dims(); ++ax) {
            const double extent = std::max(std::abs(grid.mins[static_cast<std::size_t>(ax)]),
                                           std::abs(grid.maxs[static_cast<std::size_t>(ax)]));
            if (extent > 1.5 * net.radius_r + 1e-12) {
                throw ConfigError("drift_field: grid extends past 1.5 r");
            }
        }
    }

    DriftField field;
    field.grid = grid;
    field.t_norm = t_norm;
    const std::size_t n = grid.total_nodes();
    field.positions.resize(n);
    field.drift.resize(n);
    field.potential.resize(n);
    field.mc_variance.resize(n);
    field.low_support.assign(n, 0);

    const int d = grid.dims();
    exec::parallel_for(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t idx) {
        Eigen::VectorXd x(d);
        std::size_t rest = static_cast<std::size_t>(idx);
        for (int ax = d - 1; ax >= 0; --ax) {
            const int nodes_ax = grid.nodes[static_cast<std::size_t>(ax)];
            x(ax) = grid.coord(ax, static_cast<int>(rest % static_cast<std::size_t>(nodes_ax)));
            rest /= static_cast<std::size_t>(nodes_ax);
        }
        field.positions[static_cast<std::size_t>(idx)] = x;
        field.potential[static_cast<std::size_t>(idx)] = potential_eval(net, x, t_norm);
        field.drift[static_cast<std::size_t>(idx)] = drift_eval(net, x, t_norm);
        field.mc_variance[static_cast<std::size_t>(idx)] =
            options.n_mc >= 2
                ? mc_uncertainty(net, x, t_norm, options.n_mc,
                                 derive_seed(options.seed, static_cast<std::uint64_t>(idx)))
                      .variance
                : 0.0;
    });

    // gradient consistency spot check at a handful of nodes; components with
    // near-zero gradient are skipped (the finite-difference quotient is all
    // truncation error there)
    if (options.validate_gradient && !field.positions.empty()) {
        const double h = 1e-4;
        const std::size_t stride = std::max<std::size_t>(1, n / 5);
        for (std::size_t idx = 0; idx < n; idx += stride) {
            const Eigen::VectorXd& x = field.positions[idx];
            for (int ax = 0; ax < d; ++ax) {
                Eigen::VectorXd xp = x, xm = x;
                xp(ax) += h;
                xm(ax) -= h;
                const double fd = (potential_eval(net, xp, t_norm) - potential_eval(net, xm, t_norm)) /
                                  (2.0 * h);
                const double an = field.drift[idx](ax);
                const double mag = std::max(std::abs(fd), std::abs(an));
                if (mag >= 1e-3 && std::abs(fd - an) / mag > 1e-4) {
                    throw NumericError("drift_field: analytic gradient disagrees with finite differences");
                }
            }
        }
    }

    // low-support flag: far from every training point
    double radius;
    if (options.support_radius) {
        radius = *options.support_radius;
    } else if (train_points.size() >= 2) {
        const std::size_t cap = std::min<std::size_t>(train_points.size(), 2000);
        const std::size_t stride = std::max<std::size_t>(1, train_points.size() / cap);
        std::vector<double> nn;
        for (std::size_t i = 0; i < train_points.size(); i += stride) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < train_points.size(); ++j) {
                if (j == i) continue;
                best = std::min(best, (train_points[i] - train_points[j]).norm());
            }
            nn.push_back(best);
        }
        std::nth_element(nn.begin(), nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2), nn.end());
        radius = 2.0 * nn[nn.size() / 2];
    } else {
        radius = std::numeric_limits<double>::infinity();
        if (train_points.empty()) {
            std::fill(field.low_support.begin(), field.low_support.end(), 1);
        }
    }

    if (!train_points.empty() && std::isfinite(radius)) {
        exec::parallel_for(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t idx) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& p : train_points) {
                best = std::min(best, (field.positions[static_cast<std::size_t>(idx)] - p).norm());
                if (best <= radius) break;
            }
            field.low_support[static_cast<std::size_t>(idx)] = best > radius ? 1 : 0;
        });
    }
    return field;
}

void write_drift_field_csv(const std::string& path, const DriftField& field) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    const int d = field.grid.dims();
    for (int ax = 0; ax < d; ++ax) out << "x" << (ax + 1) << ',';
    for (int ax = 0; ax < d; ++ax) out << "drift" << (ax + 1) << ',';
    out << "potential,mc_variance,low_support\n";
    char buf[64];
    for (std::size_t i = 0; i < field.positions.size(); ++i) {
        for (int ax = 0; ax < d; ++ax) {
            std::snprintf(buf, sizeof(buf), "%.17g,", field.positions[i](ax));
            out << buf;
        }
        for (int ax = 0; ax < d; ++ax) {
            std::snprintf(buf, sizeof(buf), "%.17g,", field.drift[i](ax));
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", field.potential[i], field.mc_variance[i],
                      static_cast<int>(field.low_support[i]));
        out << buf;
    }
}

void save_potential_net(const std::string& path, const PotentialNet& net) {
    nlohmann::json j;
    j["version"] = kNetFormatVersion;
    j["kind"] = "potential_net";
    j["spatial_dim"] = net.spatial_dim;
    j["dropout_rate"] = net.dropout_rate;
    j["sigma"] = net.sigma;
    j["confinement_c0"] = net.confinement_c0;
    j["radius_r"] = net.radius_r;
    j["binning"] = {{"epoch", format_iso8601(net.binning.epoch)},
                    {"bin_width_days", net.binning.bin_width_days},
                    {"anchor0_at", format_iso8601(net.binning.anchor0_at)},
                    {"anchor0_value", net.binning.anchor0_value},
                    {"anchor1_at", format_iso8601(net.binning.anchor1_at)},
                    {"anchor1_value", net.binning.anchor1_value}};
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        nlohmann::json layer;
        layer["rows"] = net.weights[l].rows();
        layer["cols"] = net.weights[l].cols();
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(net.weights[l].size()));
        for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c) w.push_back(net.weights[l](r, c));
        }
        layer["weights"] = w;
        layer["biases"] = std::vector<double>(net.biases[l].data(),
                                              net.biases[l].data() + net.biases[l].size());
        layers.push_back(std::move(layer));
    }
    j["layers"] = layers;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

PotentialNet load_potential_net(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("kind", "") != "potential_net" || !j.contains("version")) {
        throw DataError(path + ": not a potential net file");
    }
    PotentialNet net;
    net.spatial_dim = j.at("spatial_dim").get<int>();
    net.dropout_rate = j.at("dropout_rate").get<double>();
    net.sigma = j.at("sigma").get<double>();
    net.confinement_c0 = j.at("confinement_c0").get<double>();
    net.radius_r = j.at("radius_r").get<double>();
    const auto& b = j.at("binning");
    net.binning.epoch = parse_iso8601(b.at("epoch").get<std::string>());
    net.binning.bin_width_days = b.at("bin_width_days").get<double>();
    net.binning.anchor0_at = parse_iso8601(b.at("anchor0_at").get<std::string>());
    net.binning.anchor0_value = b.at("anchor0_value").get<double>();
    net.binning.anchor1_at = parse_iso8601(b.at("anchor1_at").get<std::string>());
    net.binning.anchor1_value = b.at("anchor1_value").get<double>();
    for (const auto& layer : j.at("layers")) {
        const Eigen::Index rows = layer.at("rows").get<Eigen::Index>();
        const Eigen::Index cols = layer.at("cols").get<Eigen::Index>();
        const auto w = layer.at("weights").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != rows * cols) {
            throw DataError(path + ": weight shape mismatch");
        }
        Eigen::MatrixXd W(rows, cols);
        std::size_t idx = 0;
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) W(r, c) = w[idx++];
        }
        net.weights.push_back(std::move(W));
        const auto bias = layer.at("biases").get<std::vector<double>>();
        net.biases.push_back(
            Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size())));
    }
    return net;
}

Eigen::MatrixXd marginalize_boltzmann_net(const PotentialNet& net, std::pair<int, int> keep_dims,
                                          const LatticeSpec& kept_grid,
                                          const std::vector<std::pair<double, double>>& marg_ranges,
                                          int marg_nodes, double t_norm, double kT) {
    return marginalize_boltzmann(
        [&](const Eigen::VectorXd& x, double t) { return potential_eval(net, x, t); },
        net.spatial_dim, keep_dims, kept_grid, marg_ranges, marg_nodes, t_norm, kT);
}

} // namespace stancedyn
