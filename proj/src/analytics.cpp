#include "stancedyn/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "stancedyn/common.hpp"
#include "stancedyn/special.hpp"

namespace stancedyn {

ChiSquareResult chi_square_test(const ContingencyTable& table) {
    const Eigen::MatrixXi& c = table.counts;
    const Eigen::Index r = c.rows();
    const Eigen::Index k = c.cols();
    if (r < 2 || k < 2) throw DataError("chi_square_test: need at least a 2x2 table");
    if ((c.array() < 0).any()) throw DataError("chi_square_test: negative counts");

    const Eigen::VectorXd row_sums = c.cast<double>().rowwise().sum();
    const Eigen::VectorXd col_sums = c.cast<double>().colwise().sum();
    const double total = row_sums.sum();
    if (total <= 0.0) throw DataError("chi_square_test: empty table");

    ChiSquareResult res;
    res.dof = static_cast<int>((r - 1) * (k - 1));
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const double expected = row_sums(i) * col_sums(j) / total;
            if (!(expected > 0.0)) {
                throw DataError("chi_square_test: zero expected cell, use fisher_exact");
            }
            const double diff = c(i, j) - expected;
            res.statistic += diff * diff / expected;
        }
    }
    res.p = chi2_sf(res.statistic, res.dof);
    return res;
}

namespace {

// C(n, k) as long double via the log-free product form; n stays small in
// this artifact (tables of post counts), so this is exact well past 2^63.
long double binomial_ld(std::int64_t n, std::int64_t k) {
    if (k < 0 || k > n) return 0.0L;
    k = std::min(k, n - k);
    long double r = 1.0L;
    for (std::int64_t i = 1; i <= k; ++i) {
        r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    }
    return r;
}

} // namespace

double fisher_exact(const std::array<std::array<std::int64_t, 2>, 2>& t) {
    const std::int64_t a = t[0][0], b = t[0][1], c = t[1][0], d = t[1][1];
    if (a < 0 || b < 0 || c < 0 || d < 0) throw DataError("fisher_exact: negative counts");
    const std::int64_t r1 = a + b, r2 = c + d, c1 = a + c, n = r1 + r2;
    if (n == 0) throw DataError("fisher_exact: all-zero table");

    const long double denom = binomial_ld(n, r1);
    const std::int64_t k_lo = std::max<std::int64_t>(0, r1 - (n - c1));
    const std::int64_t k_hi = std::min(r1, c1);

    // hypergeometric weight of a table with k in the top-left cell
    auto weight = [&](std::int64_t k) -> long double {
        return binomial_ld(c1, k) * binomial_ld(n - c1, r1 - k);
    };
    const long double w_obs = weight(a);
    long double sum = 0.0L;
    for (std::int64_t k = k_lo; k <= k_hi; ++k) {
        const long double w = weight(k);
        if (w <= w_obs * (1.0L + 1e-12L)) sum += w;
    }
    return static_cast<double>(std::min(1.0L, sum / denom));
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw DataError("mann_whitney_u: empty sample");
    const std::size_t na = a.size(), nb = b.size(), n = na + nb;

    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return pooled[x] < pooled[y];
    });

    // midranks
    std::vector<double> ranks(n);
    std::vector<std::size_t> tie_sizes;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
        tie_sizes.push_back(j - i + 1);
        i = j + 1;
    }
    double rank_sum_a = 0.0;
    for (std::size_t i = 0; i < na; ++i) rank_sum_a += ranks[i];
    const double u_a = rank_sum_a - static_cast<double>(na) * (na + 1) / 2.0;
    const double mu = static_cast<double>(na) * static_cast<double>(nb) / 2.0;

    MannWhitneyResult res;
    res.u = u_a;

    if (n <= 12) {
        // exact permutation distribution of U over all C(n, na) splits
        res.exact = true;
        std::vector<std::size_t> idx(na);
        std::iota(idx.begin(), idx.end(), 0);
        const double obs_dev = std::abs(u_a - mu);
        std::size_t extreme = 0, total = 0;
        while (true) {
            double rs = 0.0;
            for (std::size_t i : idx) rs += ranks[i];
            const double u = rs - static_cast<double>(na) * (na + 1) / 2.0;
            if (std::abs(u - mu) >= obs_dev - 1e-12) ++extreme;
            ++total;
            // next combination
            std::size_t k = na;
            while (k > 0 && idx[k - 1] == n - na + k - 1) --k;
            if (k == 0) break;
            ++idx[k - 1];
            for (std::size_t i = k; i < na; ++i) idx[i] = idx[i - 1] + 1;
        }
        res.p = static_cast<double>(extreme) / static_cast<double>(total);
        return res;
    }

    double tie_term = 0.0;
    for (std::size_t t : tie_sizes) {
        tie_term += static_cast<double>(t) * t * t - static_cast<double>(t);
    }
    const double nn = static_cast<double>(n);
    const double var = static_cast<double>(na) * nb / 12.0 *
                       ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if (var <= 0.0) {
        res.p = 1.0; // fully tied
        return res;
    }
    const double dev = std::max(0.0, std::abs(u_a - mu) - 0.5); // continuity correction
    const double z = dev / std::sqrt(var);
    res.p = std::min(1.0, 2.0 * normal_sf(z));
    return res;
}

std::vector<BhEntry> bh_correct(std::span<const double> p_values, double alpha) {
    const std::size_t m = p_values.size();
    std::vector<BhEntry> out(m);
    if (m == 0) return out;
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) throw DataError("bh_correct: p-value outside [0,1]");
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return p_values[x] < p_values[y]; });

    // adjusted p: running minimum of p_(i) * m / i from the top
    double running = 1.0;
    std::vector<double> adjusted(m);
    for (std::size_t i = m; i-- > 0;) {
        const double scaled = p_values[order[i]] * static_cast<double>(m) / static_cast<double>(i + 1);
        running = std::min(running, scaled);
        adjusted[order[i]] = std::min(1.0, running);
    }
    // step-up rejection: largest k with p_(k) <= k/m * alpha, reject all up to k
    std::size_t k_reject = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (p_values[order[i]] <= static_cast<double>(i + 1) / static_cast<double>(m) * alpha) {
            k_reject = i + 1;
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        out[order[i]].p_adjusted = adjusted[order[i]];
        out[order[i]].reject = i < k_reject;
    }
    return out;
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw DataError("cohens_d: samples need >= 2 points");
    auto mean = [](std::span<const double> v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    const double ma = mean(a), mb = mean(b);
    double ssa = 0.0, ssb = 0.0;
    for (double x : a) ssa += (x - ma) * (x - ma);
    for (double x : b) ssb += (x - mb) * (x - mb);
    const double pooled_var =
        (ssa + ssb) / static_cast<double>(a.size() + b.size() - 2);
    if (!(pooled_var > 0.0)) throw NumericError("cohens_d: zero pooled standard deviation");
    return (ma - mb) / std::sqrt(pooled_var);
}

double eta_squared(std::span<const double> values, std::span<const int> groups) {
    if (values.size() != groups.size()) throw DataError("eta_squared: length mismatch");
    if (values.empty()) throw DataError("eta_squared: empty input");
    std::map<int, std::pair<double, std::size_t>> stats; // group -> (sum, count)
    double total_sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto& [sum, count] = stats[groups[i]];
        sum += values[i];
        ++count;
        total_sum += values[i];
    }
    if (stats.size() < 2) throw DataError("eta_squared: need at least 2 groups");
    const double grand = total_sum / static_cast<double>(values.size());
    double ss_total = 0.0;
    for (double v : values) ss_total += (v - grand) * (v - grand);
    if (!(ss_total > 0.0)) throw NumericError("eta_squared: zero total variance");
    double ss_between = 0.0;
    for (const auto& [g, sc] : stats) {
        const double gm = sc.first / static_cast<double>(sc.second);
        ss_between += static_cast<double>(sc.second) * (gm - grand) * (gm - grand);
    }
    return ss_between / ss_total;
}

namespace {

/// Mean latent position per person (over the whole trajectory).
std::map<std::string, Eigen::VectorXd> person_means(const std::vector<LatentTrajectory>& trajs) {
    std::map<std::string, Eigen::VectorXd> out;
    for (const auto& t : trajs) {
        if (t.coords.empty()) continue;
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(t.coords.front().size());
        for (const auto& x : t.coords) sum += x;
        out[t.person_id] = sum / static_cast<double>(t.coords.size());
    }
    return out;
}

} // namespace

CentroidDistances centroid_distances(const std::vector<LatentTrajectory>& trajs,
                                     const std::vector<PersonMeta>& meta) {
    const auto means = person_means(trajs);
    std::map<std::string, std::string> party_of;
    for (const auto& m : meta) {
        if (m.party) party_of[m.person_id] = *m.party;
    }
    std::map<std::string, std::pair<Eigen::VectorXd, std::size_t>> acc;
    Eigen::Index d = 0;
    for (const auto& [person, mean] : means) {
        auto it = party_of.find(person);
        if (it == party_of.end()) continue;
        d = mean.size();
        auto& [sum, count] = acc[it->second];
        if (count == 0) sum = Eigen::VectorXd::Zero(d);
        sum += mean;
        ++count;
    }
    CentroidDistances out;
    for (const auto& [party, sc] : acc) out.parties.push_back(party);
    const std::size_t np = out.parties.size();
    std::vector<Eigen::VectorXd> centroids;
    for (const auto& party : out.parties) {
        const auto& [sum, count] = acc[party];
        centroids.push_back(sum / static_cast<double>(count));
    }
    for (Eigen::Index dim = 0; dim < d; ++dim) {
        Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(np),
                                                     static_cast<Eigen::Index>(np));
        for (std::size_t i = 0; i < np; ++i) {
            for (std::size_t j = 0; j < np; ++j) {
                dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    std::abs(centroids[i](dim) - centroids[j](dim));
            }
        }
        out.per_dimension.push_back(std::move(dist));
    }
    return out;
}

double variance_entropy(const std::vector<LatentTrajectory>& trajs,
                        const std::vector<PersonMeta>& meta,
                        std::optional<FigureType> figure_filter) {
    const auto means = person_means(trajs);
    std::map<std::string, FigureType> type_of;
    for (const auto& m : meta) type_of[m.person_id] = m.figure_type;

    std::vector<Eigen::VectorXd> rows;
    for (const auto& [person, mean] : means) {
        if (figure_filter) {
            auto it = type_of.find(person);
            if (it == type_of.end() || it->second != *figure_filter) continue;
        }
        rows.push_back(mean);
    }
    if (rows.size() < 2) throw DataError("variance_entropy: fewer than 2 people in cohort");
    const Eigen::Index d = rows.front().size();
    if (d < 2) throw DataError("variance_entropy: need at least 2 dimensions");

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& r : rows) mean += r;
    mean /= static_cast<double>(rows.size());
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (const auto& r : rows) var += (r - mean).cwiseProduct(r - mean);
    var /= static_cast<double>(rows.size() - 1);

    const double total = var.sum();
    if (!(total > 0.0)) throw NumericError("variance_entropy: all-zero variance vector");
    double entropy = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        const double p = var(i) / total;
        if (p > 0.0) entropy -= p * std::log(p);
    }
    return entropy;
}

std::vector<MoverRow> significant_movers(const std::vector<LatentTrajectory>& trajs,
                                         const Eigen::MatrixXd& loadings,
                                         const std::vector<std::string>& col_keys,
                                         const std::vector<StanceObservation>& obs,
                                         const MoversConfig& config) {
    if (config.dim < 0 || config.dim >= loadings.cols()) {
        throw ConfigError("significant_movers: dimension out of range");
    }
    if (!(config.window_begin < config.window_end)) {
        throw ConfigError("significant_movers: empty window");
    }

    // displacement = last - first coordinate along the dimension, inside the window
    const double t_lo = normalize_time(config.window_begin, config.binning);
    const double t_hi = normalize_time(config.window_end, config.binning);
    struct Displacement {
        std::string person;
        double delta;
    };
    std::vector<Displacement> disp;
    for (const auto& t : trajs) {
        double first = 0.0, last = 0.0;
        bool any = false;
        for (std::size_t i = 0; i < t.times.size(); ++i) {
            if (t.times[i] < t_lo || t.times[i] > t_hi) continue;
            const double v = t.coords[i](config.dim);
            if (!any) {
                first = v;
                any = true;
            }
            last = v;
        }
        if (any) disp.push_back({t.person_id, last - first});
    }
    if (disp.empty()) return {};

    std::sort(disp.begin(), disp.end(), [&](const Displacement& a, const Displacement& b) {
        if (a.delta != b.delta) {
            return config.positive ? a.delta > b.delta : a.delta < b.delta;
        }
        return a.person < b.person;
    });
    const std::size_t n_keep =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(
                                     config.percentile * static_cast<double>(disp.size()))));
    std::set<std::string> movers;
    for (std::size_t i = 0; i < n_keep; ++i) movers.insert(disp[i].person);

    // targets among the dimension's strongest absolute loadings
    std::vector<std::size_t> col_order(col_keys.size());
    std::iota(col_order.begin(), col_order.end(), 0);
    std::sort(col_order.begin(), col_order.end(), [&](std::size_t a, std::size_t b) {
        const double la = std::abs(loadings(static_cast<Eigen::Index>(a), config.dim));
        const double lb = std::abs(loadings(static_cast<Eigen::Index>(b), config.dim));
        if (la != lb) return la > lb;
        return col_keys[a] < col_keys[b];
    });
    std::set<std::string> top_targets;
    for (std::size_t i = 0; i < col_order.size() && i < static_cast<std::size_t>(config.top_loadings);
         ++i) {
        top_targets.insert(col_keys[col_order[i]]);
    }

    const UtcInstant midpoint{config.window_begin.ms +
                              (config.window_end.ms - config.window_begin.ms) / 2};

    struct Tally {
        std::array<std::int64_t, 3> before{}; // favor, neutral, against
        std::array<std::int64_t, 3> after{};
    };
    std::map<std::string, Tally> tallies;
    auto label_slot = [](StanceLabel l) {
        switch (l) {
            case StanceLabel::Favor: return 0;
            case StanceLabel::Neutral: return 1;
            case StanceLabel::Against: return 2;
        }
        return 1;
    };
    for (const auto& o : obs) {
        if (movers.count(o.person_id) == 0) continue;
        if (top_targets.count(o.target_id) == 0) continue;
        if (o.timestamp < config.window_begin || !(o.timestamp < config.window_end)) continue;
        auto& tally = tallies[o.target_id];
        if (o.timestamp < midpoint) {
            ++tally.before[static_cast<std::size_t>(label_slot(o.label))];
        } else {
            ++tally.after[static_cast<std::size_t>(label_slot(o.label))];
        }
    }

    std::vector<MoverRow> rows;
    for (const auto& [target, tally] : tallies) {
        const std::int64_t nb = tally.before[0] + tally.before[1] + tally.before[2];
        const std::int64_t na = tally.after[0] + tally.after[1] + tally.after[2];
        if (nb == 0 || na == 0) continue; // no observations on one side: skip

        MoverRow row;
        row.target = target;
        row.n_before = static_cast<std::size_t>(nb);
        row.n_after = static_cast<std::size_t>(na);
        for (int l = 0; l < 3; ++l) {
            row.before_pct[static_cast<std::size_t>(l)] =
                100.0 * static_cast<double>(tally.before[static_cast<std::size_t>(l)]) /
                static_cast<double>(nb);
            row.after_pct[static_cast<std::size_t>(l)] =
                100.0 * static_cast<double>(tally.after[static_cast<std::size_t>(l)]) /
                static_cast<double>(na);
        }

        std::vector<int> present;
        for (int l = 0; l < 3; ++l) {
            if (tally.before[static_cast<std::size_t>(l)] + tally.after[static_cast<std::size_t>(l)] > 0) {
                present.push_back(l);
            }
        }
        if (present.size() == 3) {
            ContingencyTable table;
            table.counts.resize(2, 3);
            for (int l = 0; l < 3; ++l) {
                table.counts(0, l) = static_cast<int>(tally.before[static_cast<std::size_t>(l)]);
                table.counts(1, l) = static_cast<int>(tally.after[static_cast<std::size_t>(l)]);
            }
            row.p = chi_square_test(table).p;
        } else if (present.size() == 2) {
            // drop the all-zero label column to form the 2x2
            std::array<std::array<std::int64_t, 2>, 2> t2{};
            for (std::size_t c = 0; c < 2; ++c) {
                t2[0][c] = tally.before[static_cast<std::size_t>(present[c])];
                t2[1][c] = tally.after[static_cast<std::size_t>(present[c])];
            }
            row.p = fisher_exact(t2);
            row.used_fisher = true;
        } else {
            row.p = 1.0; // single label throughout, nothing to test
        }
        rows.push_back(std::move(row));
    }

    std::vector<double> ps;
    ps.reserve(rows.size());
    for (const auto& r : rows) ps.push_back(r.p);
    const auto adj = bh_correct(ps, config.alpha);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].p_adjusted = adj[i].p_adjusted;

    std::sort(rows.begin(), rows.end(), [](const MoverRow& a, const MoverRow& b) {
        if (a.p != b.p) return a.p < b.p;
        return a.target < b.target;
    });
    return rows;
}

std::string format_shift(double before, double after) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.1f→%.1f", before, after);
    return buf;
}

} // namespace stancedyn
