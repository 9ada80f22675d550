#include "stancedyn/latent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "stancedyn/common.hpp"
#include "stancedyn/exec.hpp"
#include "stancedyn/rng.hpp"

namespace stancedyn {

namespace {

constexpr double kSigmaCollapse = 1e-10;
constexpr int kModelFormatVersion = 1;

double observed_fraction(const StanceMatrix& m) {
    const auto total = static_cast<double>(m.values.size());
    double observed = 0.0;
    for (Eigen::Index i = 0; i < m.missing.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.missing.cols(); ++j) {
            if (!m.missing(i, j)) observed += 1.0;
        }
    }
    return total > 0 ? observed / total : 0.0;
}

} // namespace

double StanceMatrix::missing_fraction() const {
    return 1.0 - observed_fraction(*this);
}

StanceMatrix pivot(const std::vector<RegressedSeries>& series, const TimeBinning&) {
    struct PersonRange {
        std::int64_t min_bin = std::numeric_limits<std::int64_t>::max();
        std::int64_t max_bin = std::numeric_limits<std::int64_t>::min();
        std::size_t order = 0;
    };
    std::map<std::string, PersonRange> ranges;
    std::vector<std::string> person_order;
    std::vector<std::string> col_keys;
    std::map<std::string, Eigen::Index> col_of;

    for (const auto& s : series) {
        if (s.means.empty()) continue;
        auto [it, inserted] = ranges.try_emplace(s.person_id);
        if (inserted) {
            it->second.order = person_order.size();
            person_order.push_back(s.person_id);
        }
        it->second.min_bin = std::min(it->second.min_bin, s.first_bin);
        it->second.max_bin =
            std::max(it->second.max_bin, s.first_bin + static_cast<std::int64_t>(s.means.size()) - 1);
        if (col_of.try_emplace(s.target_id, static_cast<Eigen::Index>(col_keys.size())).second) {
            col_keys.push_back(s.target_id);
        }
    }

    StanceMatrix m;
    m.col_keys = col_keys;
    std::map<std::string, Eigen::Index> row_start;
    Eigen::Index n_rows = 0;
    for (const auto& person : person_order) {
        const auto& r = ranges.at(person);
        row_start[person] = n_rows;
        const auto span = r.max_bin - r.min_bin + 1;
        for (std::int64_t b = r.min_bin; b <= r.max_bin; ++b) {
            m.row_keys.emplace_back(person, b);
        }
        n_rows += static_cast<Eigen::Index>(span);
    }
    const Eigen::Index n_cols = static_cast<Eigen::Index>(col_keys.size());
    m.values = Eigen::MatrixXd::Zero(n_rows, n_cols);
    m.missing.setConstant(n_rows, n_cols, 1);

    for (const auto& s : series) {
        if (s.means.empty()) continue;
        const Eigen::Index col = col_of.at(s.target_id);
        const auto& r = ranges.at(s.person_id);
        const Eigen::Index base = row_start.at(s.person_id) + static_cast<Eigen::Index>(s.first_bin - r.min_bin);
        for (std::size_t k = 0; k < s.means.size(); ++k) {
            const Eigen::Index row = base + static_cast<Eigen::Index>(k);
            if (!m.missing(row, col)) {
                throw DataError("pivot: duplicate value for (" + s.person_id + ", bin " +
                                std::to_string(s.first_bin + static_cast<std::int64_t>(k)) + ", " +
                                s.target_id + ")");
            }
            m.values(row, col) = s.means[k];
            m.missing(row, col) = 0;
        }
    }
    return m;
}

StanceMatrix edge_fill(StanceMatrix m) {
    // rows are grouped per person in bin order; find each person's block
    Eigen::Index block_start = 0;
    while (block_start < static_cast<Eigen::Index>(m.row_keys.size())) {
        Eigen::Index block_end = block_start + 1;
        while (block_end < static_cast<Eigen::Index>(m.row_keys.size()) &&
               m.row_keys[block_end].first == m.row_keys[block_start].first) {
            ++block_end;
        }
        for (Eigen::Index col = 0; col < m.values.cols(); ++col) {
            Eigen::Index first = -1, last = -1;
            for (Eigen::Index r = block_start; r < block_end; ++r) {
                if (!m.missing(r, col)) {
                    if (first < 0) first = r;
                    last = r;
                }
            }
            if (first < 0) continue;
            for (Eigen::Index r = block_start; r < first; ++r) {
                m.values(r, col) = m.values(first, col);
                m.missing(r, col) = 0;
            }
            for (Eigen::Index r = last + 1; r < block_end; ++r) {
                m.values(r, col) = m.values(last, col);
                m.missing(r, col) = 0;
            }
        }
        block_start = block_end;
    }
    return m;
}

namespace {

struct PpcaState {
    Eigen::MatrixXd W; // d x k
    Eigen::VectorXd mu; // d
    double sigma2 = 1.0;
};

struct RowMoments {
    Eigen::VectorXd mean; // k
    Eigen::MatrixXd second; // k x k, E[z z^T]
};

/// Penalized observed-data log-likelihood (additive constants from the
/// priors dropped; they do not affect convergence or monotonicity).
double penalized_loglik(const StanceMatrix& m, const PpcaState& st, const PpcaPriors& priors) {
    const Eigen::Index n = m.values.rows();
    const Eigen::Index k = st.W.cols();
    const double log2pi = std::log(2.0 * M_PI);

    std::vector<double> row_ll(static_cast<std::size_t>(n), 0.0);
    exec::parallel_for(n, [&](std::ptrdiff_t i) {
        std::vector<Eigen::Index> obs;
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
            if (!m.missing(i, j)) obs.push_back(j);
        }
        if (obs.empty()) return;
        const Eigen::Index p = static_cast<Eigen::Index>(obs.size());
        Eigen::MatrixXd Wo(p, k);
        Eigen::VectorXd r(p);
        for (Eigen::Index a = 0; a < p; ++a) {
            Wo.row(a) = st.W.row(obs[static_cast<std::size_t>(a)]);
            r(a) = m.values(i, obs[static_cast<std::size_t>(a)]) - st.mu(obs[static_cast<std::size_t>(a)]);
        }
        Eigen::MatrixXd M = Wo.transpose() * Wo;
        M.diagonal().array() += st.sigma2;
        const Eigen::LLT<Eigen::MatrixXd> llt(M);
        double logdet_m = 0.0;
        for (Eigen::Index a = 0; a < k; ++a) logdet_m += 2.0 * std::log(llt.matrixL()(a, a));
        const double logdet = static_cast<double>(p - k) * std::log(st.sigma2) + logdet_m;
        const Eigen::VectorXd wr = Wo.transpose() * r;
        const double quad = (r.squaredNorm() - wr.dot(llt.solve(wr))) / st.sigma2;
        row_ll[static_cast<std::size_t>(i)] = -0.5 * (static_cast<double>(p) * log2pi + logdet + quad);
    });

    double ll = std::accumulate(row_ll.begin(), row_ll.end(), 0.0);
    if (priors.enabled) {
        ll -= 0.5 * priors.transform_precision * st.W.squaredNorm();
        ll -= 0.5 / priors.mean_prior_variance * st.mu.squaredNorm();
        ll -= (priors.noise_prior_alpha + 1.0) * std::log(st.sigma2);
        ll -= priors.noise_prior_beta / st.sigma2;
    }
    return ll;
}

void e_step(const StanceMatrix& m, const PpcaState& st, std::vector<RowMoments>& moments) {
    const Eigen::Index n = m.values.rows();
    const Eigen::Index k = st.W.cols();
    moments.resize(static_cast<std::size_t>(n));
    exec::parallel_for(n, [&](std::ptrdiff_t i) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(k, k);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
        bool any = false;
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
            if (m.missing(i, j)) continue;
            any = true;
            const Eigen::VectorXd w = st.W.row(j).transpose();
            M.noalias() += w * w.transpose();
            b.noalias() += w * (m.values(i, j) - st.mu(j));
        }
        auto& mo = moments[static_cast<std::size_t>(i)];
        if (!any) {
            mo.mean = Eigen::VectorXd::Zero(k);
            mo.second = Eigen::MatrixXd::Identity(k, k); // prior second moment
            return;
        }
        M.diagonal().array() += st.sigma2;
        const Eigen::LLT<Eigen::MatrixXd> llt(M);
        mo.mean = llt.solve(b);
        mo.second = st.sigma2 * llt.solve(Eigen::MatrixXd::Identity(k, k));
        mo.second.noalias() += mo.mean * mo.mean.transpose();
    });
}

} // namespace

PpcaModel ppca_fit(const StanceMatrix& m, const PpcaConfig& config, std::uint64_t seed) {
    const Eigen::Index n = m.values.rows();
    const Eigen::Index d = m.values.cols();
    const Eigen::Index k = config.n_components;
    if (k < 1) throw ConfigError("ppca_fit: n_components must be >= 1");
    if (k > d) throw ConfigError("ppca_fit: n_components exceeds column count");

    // every column needs at least one observation
    std::vector<std::vector<Eigen::Index>> rows_of_col(static_cast<std::size_t>(d));
    std::size_t n_obs_total = 0;
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!m.missing(i, j)) rows_of_col[static_cast<std::size_t>(j)].push_back(i);
        }
        n_obs_total += rows_of_col[static_cast<std::size_t>(j)].size();
        if (rows_of_col[static_cast<std::size_t>(j)].empty()) {
            throw DataError("ppca_fit: column '" +
                            (j < static_cast<Eigen::Index>(m.col_keys.size())
                                 ? m.col_keys[static_cast<std::size_t>(j)]
                                 : std::to_string(j)) +
                            "' has no observed entries");
        }
    }

    PpcaState st;
    st.mu = Eigen::VectorXd::Zero(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double sum = 0.0;
        for (Eigen::Index i : rows_of_col[static_cast<std::size_t>(j)]) sum += m.values(i, j);
        st.mu(j) = sum / static_cast<double>(rows_of_col[static_cast<std::size_t>(j)].size());
    }
    auto engine = make_engine(derive_seed(seed, 0x99CA));
    std::normal_distribution<double> init(0.0, 0.1);
    st.W.resize(d, k);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index c = 0; c < k; ++c) st.W(j, c) = init(engine);
    }
    st.sigma2 = 1.0;

    PpcaModel model;
    model.n_components = static_cast<int>(k);
    model.priors = config.priors;
    model.col_keys = m.col_keys;

    std::vector<RowMoments> moments;
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < config.max_iters; ++iter) {
        e_step(m, st, moments);

        // column means (old W, new moments)
        const double mu_shrink = config.priors.enabled ? st.sigma2 / config.priors.mean_prior_variance : 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            double acc = 0.0;
            for (Eigen::Index i : rows_of_col[static_cast<std::size_t>(j)]) {
                acc += m.values(i, j) - st.W.row(j).dot(moments[static_cast<std::size_t>(i)].mean);
            }
            st.mu(j) = acc / (static_cast<double>(rows_of_col[static_cast<std::size_t>(j)].size()) + mu_shrink);
        }

        // loadings, one ridge solve per column
        const double w_ridge = config.priors.enabled ? st.sigma2 * config.priors.transform_precision : 0.0;
        Eigen::MatrixXd W_new(d, k);
        exec::parallel_for(d, [&](std::ptrdiff_t j) {
            Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, k);
            Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
            for (Eigen::Index i : rows_of_col[static_cast<std::size_t>(j)]) {
                const auto& mo = moments[static_cast<std::size_t>(i)];
                A += mo.second;
                b.noalias() += mo.mean * (m.values(i, j) - st.mu(j));
            }
            A.diagonal().array() += w_ridge;
            W_new.row(j) = Eigen::LLT<Eigen::MatrixXd>(A).solve(b).transpose();
        });
        st.W = W_new;

        // noise variance (new mu, new W, old moments)
        double resid = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            const Eigen::VectorXd w = st.W.row(j).transpose();
            for (Eigen::Index i : rows_of_col[static_cast<std::size_t>(j)]) {
                const auto& mo = moments[static_cast<std::size_t>(i)];
                const double e = m.values(i, j) - st.mu(j) - w.dot(mo.mean);
                const Eigen::MatrixXd cov = mo.second - mo.mean * mo.mean.transpose();
                resid += e * e + w.dot(cov * w);
            }
        }
        if (config.priors.enabled) {
            st.sigma2 = (resid + 2.0 * config.priors.noise_prior_beta) /
                        (static_cast<double>(n_obs_total) + 2.0 * (config.priors.noise_prior_alpha + 1.0));
        } else {
            st.sigma2 = resid / static_cast<double>(n_obs_total);
        }
        if (st.sigma2 < kSigmaCollapse) {
            throw NumericError("ppca_fit: noise variance collapsed below 1e-10 at iteration " +
                               std::to_string(iter));
        }

        const double ll = penalized_loglik(m, st, config.priors);
        model.loglik_history.push_back(ll);
        model.iterations = iter + 1;
        if (iter > 0) {
            const double rel = std::abs(ll - prev_ll) / (std::abs(prev_ll) + 1e-12);
            if (rel < config.tolerance) {
                model.converged = true;
                prev_ll = ll;
                break;
            }
        }
        prev_ll = ll;
    }

    model.loadings = st.W;
    model.column_means = st.mu;
    model.noise_variance = st.sigma2;
    return model;
}

PpcaTransformResult ppca_transform(const PpcaModel& model, const StanceMatrix& m) {
    if (!model.col_keys.empty() && model.col_keys != m.col_keys) {
        throw DataError("ppca_transform: column keys do not match the model");
    }
    const Eigen::Index n = m.values.rows();
    const Eigen::Index d = m.values.cols();
    const Eigen::Index k = model.loadings.cols();

    PpcaTransformResult res;
    res.latents.resize(n, k);
    res.imputed = m;

    std::vector<std::uint8_t> empty(static_cast<std::size_t>(n), 0);
    exec::parallel_for(n, [&](std::ptrdiff_t i) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(k, k);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
        bool any = false;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (m.missing(i, j)) continue;
            any = true;
            const Eigen::VectorXd w = model.loadings.row(j).transpose();
            M.noalias() += w * w.transpose();
            b.noalias() += w * (m.values(i, j) - model.column_means(j));
        }
        Eigen::VectorXd z;
        if (!any) {
            z = Eigen::VectorXd::Zero(k);
            empty[static_cast<std::size_t>(i)] = 1;
        } else {
            M.diagonal().array() += model.noise_variance;
            z = Eigen::LLT<Eigen::MatrixXd>(M).solve(b);
        }
        res.latents.row(i) = z.transpose();
        for (Eigen::Index j = 0; j < d; ++j) {
            if (m.missing(i, j)) {
                res.imputed.values(i, j) = model.column_means(j) + model.loadings.row(j).dot(z);
                res.imputed.missing(i, j) = 0;
            }
        }
    });
    res.empty_rows = static_cast<std::size_t>(std::count(empty.begin(), empty.end(), 1));
    return res;
}

std::string impute_method_name(ImputeMethod m) {
    switch (m) {
        case ImputeMethod::Ppca: return "ppca";
        case ImputeMethod::SvdImpute: return "svd_impute";
        case ImputeMethod::ColumnMean: return "column_mean";
        case ImputeMethod::Zero: return "zero";
    }
    return "?";
}

Eigen::MatrixXd svd_impute(const StanceMatrix& m, int rank, int iterations) {
    const Eigen::Index n = m.values.rows();
    const Eigen::Index d = m.values.cols();
    const Eigen::Index k = std::min<Eigen::Index>(rank, std::min(n, d));

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double sum = 0.0;
        int cnt = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!m.missing(i, j)) {
                sum += m.values(i, j);
                ++cnt;
            }
        }
        mu(j) = cnt > 0 ? sum / cnt : 0.0;
    }

    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            X(i, j) = m.missing(i, j) ? 0.0 : m.values(i, j) - mu(j);
        }
    }

    for (int it = 0; it < iterations; ++it) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Eigen::VectorXd s = svd.singularValues();
        // soft-threshold at the (k+1)-th singular value
        const double tau = (k < s.size()) ? s(k) : 0.0;
        Eigen::VectorXd s_shrunk = Eigen::VectorXd::Zero(s.size());
        for (Eigen::Index a = 0; a < std::min<Eigen::Index>(k, s.size()); ++a) {
            s_shrunk(a) = std::max(0.0, s(a) - tau);
        }
        const Eigen::MatrixXd Z =
            svd.matrixU() * s_shrunk.asDiagonal() * svd.matrixV().transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) {
                if (m.missing(i, j)) X(i, j) = Z(i, j);
            }
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) X.row(i) += mu.transpose();
    return X;
}

std::vector<HoldoutResult> holdout_mae(const StanceMatrix& m, double fraction,
                                       const std::vector<ImputeMethod>& methods, int n_splits,
                                       std::uint64_t seed, const PpcaConfig& config) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout_mae: fraction must be in (0,1)");
    if (n_splits < 1) throw ConfigError("holdout_mae: need at least 1 split");

    std::vector<std::pair<Eigen::Index, Eigen::Index>> observed;
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
            if (!m.missing(i, j)) observed.emplace_back(i, j);
        }
    }
    const std::size_t n_mask = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                            std::llround(fraction * static_cast<double>(observed.size()))));
    if (n_mask >= observed.size()) throw ConfigError("holdout_mae: fraction masks everything");

    struct Acc {
        double mae_sum = 0.0;
        double sd_sum = 0.0;
    };
    std::map<ImputeMethod, Acc> acc;

    for (int split = 0; split < n_splits; ++split) {
        StanceMatrix masked;
        std::vector<std::pair<Eigen::Index, Eigen::Index>> held;
        bool ok = false;
        for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
            auto engine = make_engine(derive_seed(seed, static_cast<std::uint64_t>(split),
                                                  static_cast<std::uint64_t>(attempt)));
            std::vector<std::size_t> order(observed.size());
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), engine);
            masked = m;
            held.clear();
            for (std::size_t a = 0; a < n_mask; ++a) {
                const auto [i, j] = observed[order[a]];
                masked.missing(i, j) = 1;
                held.emplace_back(i, j);
            }
            ok = true;
            for (Eigen::Index j = 0; j < masked.values.cols() && ok; ++j) {
                bool any = false;
                for (Eigen::Index i = 0; i < masked.values.rows(); ++i) {
                    if (!masked.missing(i, j)) {
                        any = true;
                        break;
                    }
                }
                if (!any) ok = false;
            }
        }
        if (!ok) throw DataError("holdout_mae: a hold-out split emptied an entire column twice");

        for (ImputeMethod method : methods) {
            Eigen::MatrixXd imputed;
            switch (method) {
                case ImputeMethod::Ppca: {
                    const PpcaModel model =
                        ppca_fit(masked, config, derive_seed(seed, 0xF17, static_cast<std::uint64_t>(split)));
                    imputed = ppca_transform(model, masked).imputed.values;
                    break;
                }
                case ImputeMethod::SvdImpute:
                    imputed = svd_impute(masked, config.n_components, 100);
                    break;
                case ImputeMethod::ColumnMean: {
                    imputed = masked.values;
                    for (Eigen::Index j = 0; j < masked.values.cols(); ++j) {
                        double sum = 0.0;
                        int cnt = 0;
                        for (Eigen::Index i = 0; i < masked.values.rows(); ++i) {
                            if (!masked.missing(i, j)) {
                                sum += masked.values(i, j);
                                ++cnt;
                            }
                        }
                        const double mean = cnt > 0 ? sum / cnt : 0.0;
                        for (Eigen::Index i = 0; i < masked.values.rows(); ++i) {
                            if (masked.missing(i, j)) imputed(i, j) = mean;
                        }
                    }
                    break;
                }
                case ImputeMethod::Zero: {
                    imputed = masked.values;
                    for (Eigen::Index i = 0; i < masked.values.rows(); ++i) {
                        for (Eigen::Index j = 0; j < masked.values.cols(); ++j) {
                            if (masked.missing(i, j)) imputed(i, j) = 0.0;
                        }
                    }
                    break;
                }
            }
            std::vector<double> errs;
            errs.reserve(held.size());
            for (const auto& [i, j] : held) {
                errs.push_back(std::abs(imputed(i, j) - m.values(i, j)));
            }
            const double mae = std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
            double var = 0.0;
            for (double e : errs) var += (e - mae) * (e - mae);
            var = errs.size() > 1 ? var / static_cast<double>(errs.size() - 1) : 0.0;
            acc[method].mae_sum += mae;
            acc[method].sd_sum += std::sqrt(var);
        }
    }

    std::vector<HoldoutResult> out;
    for (ImputeMethod method : methods) {
        HoldoutResult r;
        r.method = method;
        r.mae = acc[method].mae_sum / n_splits;
        r.stddev = acc[method].sd_sum / n_splits;
        out.push_back(r);
    }
    return out;
}

std::vector<LatentTrajectory> trajectories_from_latents(const StanceMatrix& m,
                                                        const Eigen::MatrixXd& latents,
                                                        const TimeBinning& binning) {
    std::vector<LatentTrajectory> out;
    Eigen::Index block_start = 0;
    while (block_start < static_cast<Eigen::Index>(m.row_keys.size())) {
        Eigen::Index block_end = block_start + 1;
        while (block_end < static_cast<Eigen::Index>(m.row_keys.size()) &&
               m.row_keys[block_end].first == m.row_keys[block_start].first) {
            ++block_end;
        }
        LatentTrajectory traj;
        traj.person_id = m.row_keys[block_start].first;
        for (Eigen::Index r = block_start; r < block_end; ++r) {
            traj.times.push_back(bin_center_normalized(m.row_keys[r].second, binning));
            traj.coords.push_back(latents.row(r).transpose());
        }
        out.push_back(std::move(traj));
        block_start = block_end;
    }
    return out;
}

LatentTrajectory moving_average(const LatentTrajectory& traj, int window) {
    if (window < 1) throw ConfigError("moving_average: window must be >= 1");
    LatentTrajectory out;
    out.person_id = traj.person_id;
    out.times = traj.times;
    out.coords.reserve(traj.coords.size());
    if (traj.coords.empty()) return out;
    const Eigen::Index d = traj.coords.front().size();
    Eigen::VectorXd run = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < traj.coords.size(); ++i) {
        run += traj.coords[i];
        if (i >= static_cast<std::size_t>(window)) run -= traj.coords[i - static_cast<std::size_t>(window)];
        const auto denom = static_cast<double>(std::min<std::size_t>(window, i + 1));
        out.coords.push_back(run / denom);
    }
    return out;
}

void save_ppca_model(const std::string& path, const PpcaModel& model) {
    nlohmann::json j;
    j["version"] = kModelFormatVersion;
    j["kind"] = "ppca";
    j["n_components"] = model.n_components;
    j["noise_variance"] = model.noise_variance;
    j["converged"] = model.converged;
    j["iterations"] = model.iterations;
    j["col_keys"] = model.col_keys;
    j["priors"] = {{"enabled", model.priors.enabled},
                   {"mean_prior_variance", model.priors.mean_prior_variance},
                   {"transform_precision", model.priors.transform_precision},
                   {"noise_prior_alpha", model.priors.noise_prior_alpha},
                   {"noise_prior_beta", model.priors.noise_prior_beta}};
    j["shape"] = {model.loadings.rows(), model.loadings.cols()};
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(model.loadings.size()));
    for (Eigen::Index r = 0; r < model.loadings.rows(); ++r) {
        for (Eigen::Index c = 0; c < model.loadings.cols(); ++c) w.push_back(model.loadings(r, c));
    }
    j["loadings"] = w;
    j["column_means"] = std::vector<double>(model.column_means.data(),
                                            model.column_means.data() + model.column_means.size());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

PpcaModel load_ppca_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open PPCA model: " + path);
    nlohmann::json j;
    in >> j;
    if (!j.contains("version") || j.value("kind", "") != "ppca") {
        throw DataError(path + ": not a PPCA model file");
    }
    PpcaModel model;
    model.n_components = j.at("n_components").get<int>();
    model.noise_variance = j.at("noise_variance").get<double>();
    model.converged = j.value("converged", false);
    model.iterations = j.value("iterations", 0);
    model.col_keys = j.at("col_keys").get<std::vector<std::string>>();
    const auto& pr = j.at("priors");
    model.priors.enabled = pr.at("enabled").get<bool>();
    model.priors.mean_prior_variance = pr.at("mean_prior_variance").get<double>();
    model.priors.transform_precision = pr.at("transform_precision").get<double>();
    model.priors.noise_prior_alpha = pr.at("noise_prior_alpha").get<double>();
    model.priors.noise_prior_beta = pr.at("noise_prior_beta").get<double>();
    const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
    const auto w = j.at("loadings").get<std::vector<double>>();
    if (shape.size() != 2 || static_cast<Eigen::Index>(w.size()) != shape[0] * shape[1]) {
        throw DataError(path + ": loadings shape mismatch");
    }
    model.loadings.resize(shape[0], shape[1]);
    std::size_t idx = 0;
    for (Eigen::Index r = 0; r < shape[0]; ++r) {
        for (Eigen::Index c = 0; c < shape[1]; ++c) model.loadings(r, c) = w[idx++];
    }
    const auto mu = j.at("column_means").get<std::vector<double>>();
    model.column_means = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    return model;
}

void write_trajectories_csv(const std::string& path, const std::vector<LatentTrajectory>& trajs) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    int d = 0;
    for (const auto& t : trajs) {
        if (!t.coords.empty()) {
            d = static_cast<int>(t.coords.front().size());
            break;
        }
    }
    out << "person_id,time_norm";
    for (int c = 1; c <= d; ++c) out << ",pc" << c;
    out << '\n';
    char buf[64];
    for (const auto& t : trajs) {
        for (std::size_t i = 0; i < t.times.size(); ++i) {
            out << t.person_id;
            std::snprintf(buf, sizeof(buf), ",%.17g", t.times[i]);
            out << buf;
            for (Eigen::Index c = 0; c < t.coords[i].size(); ++c) {
                std::snprintf(buf, sizeof(buf), ",%.17g", t.coords[i](c));
                out << buf;
            }
            out << '\n';
        }
    }
}

std::vector<LatentTrajectory> read_trajectories_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open trajectory file: " + path);
    std::string line;
    if (!std::getline(in, line)) return {};
    std::vector<LatentTrajectory> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 3) throw DataError(path + ": bad row on line " + std::to_string(line_no));
        if (out.empty() || out.back().person_id != cells[0]) {
            out.push_back(LatentTrajectory{cells[0], {}, {}});
        }
        auto& traj = out.back();
        try {
            traj.times.push_back(std::stod(cells[1]));
            Eigen::VectorXd x(static_cast<Eigen::Index>(cells.size()) - 2);
            for (std::size_t c = 2; c < cells.size(); ++c) {
                x(static_cast<Eigen::Index>(c - 2)) = std::stod(cells[c]);
            }
            traj.coords.push_back(std::move(x));
        } catch (const std::exception&) {
            throw DataError(path + ": bad number on line " + std::to_string(line_no));
        }
    }
    return out;
}

} // namespace stancedyn
