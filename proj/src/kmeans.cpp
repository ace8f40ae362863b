#include "inkdiff/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "inkdiff/errors.hpp"

namespace inkdiff {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

struct RunResult {
    std::vector<double> centers;
    std::vector<int> assignment;
    double inertia = std::numeric_limits<double>::infinity();
};

RunResult lloyd_once(const std::vector<double>& pts, int k, RandomStream rs) {
    int n = static_cast<int>(pts.size());
    // k-means++ seeding
    std::vector<double> centers;
    centers.push_back(pts[static_cast<size_t>(rs.next_index(n))]);
    std::vector<double> d2(static_cast<size_t>(n));
    while (static_cast<int>(centers.size()) < k) {
        double total = 0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (double c : centers) best = std::min(best, (pts[static_cast<size_t>(i)] - c) * (pts[static_cast<size_t>(i)] - c));
            d2[static_cast<size_t>(i)] = best;
            total += best;
        }
        if (total <= 0) {
            // remaining mass is zero (duplicated points); fall back to uniform
            centers.push_back(pts[static_cast<size_t>(rs.next_index(n))]);
            continue;
        }
        double u = rs.next_uniform() * total;
        int pick = n - 1;
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            acc += d2[static_cast<size_t>(i)];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        centers.push_back(pts[static_cast<size_t>(pick)]);
    }

    std::vector<int> assign(static_cast<size_t>(n), 0);
    for (int iter = 0; iter < 200; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double dd = (pts[static_cast<size_t>(i)] - centers[static_cast<size_t>(c)]) *
                            (pts[static_cast<size_t>(i)] - centers[static_cast<size_t>(c)]);
                if (dd < bd) {
                    bd = dd;
                    best = c;
                }
            }
            if (assign[static_cast<size_t>(i)] != best) {
                assign[static_cast<size_t>(i)] = best;
                changed = true;
            }
        }
        std::vector<double> sum(static_cast<size_t>(k), 0.0);
        std::vector<int> cnt(static_cast<size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            sum[static_cast<size_t>(assign[static_cast<size_t>(i)])] += pts[static_cast<size_t>(i)];
            cnt[static_cast<size_t>(assign[static_cast<size_t>(i)])] += 1;
        }
        for (int c = 0; c < k; ++c) {
            if (cnt[static_cast<size_t>(c)] == 0) {
                // revive an empty cluster at the point farthest from its center
                int far = 0;
                double fd = -1;
                for (int i = 0; i < n; ++i) {
                    double dd = (pts[static_cast<size_t>(i)] - centers[static_cast<size_t>(assign[static_cast<size_t>(i)])]) *
                                (pts[static_cast<size_t>(i)] - centers[static_cast<size_t>(assign[static_cast<size_t>(i)])]);
                    if (dd > fd) {
                        fd = dd;
                        far = i;
                    }
                }
                centers[static_cast<size_t>(c)] = pts[static_cast<size_t>(far)];
                changed = true;
            } else {
                centers[static_cast<size_t>(c)] = sum[static_cast<size_t>(c)] / cnt[static_cast<size_t>(c)];
            }
        }
        if (!changed) break;
    }

    RunResult r;
    r.centers = std::move(centers);
    r.assignment = std::move(assign);
    r.inertia = 0;
    for (int i = 0; i < n; ++i) {
        double d = pts[static_cast<size_t>(i)] - r.centers[static_cast<size_t>(r.assignment[static_cast<size_t>(i)])];
        r.inertia += d * d;
    }
    return r;
}

} // namespace

ClusterResult kmeans_1d(const std::vector<double>& points, int k, const RandomStream& rs,
                        int restarts) {
    int n = static_cast<int>(points.size());
    if (k < 1) throw std::invalid_argument("kmeans_1d: k must be >= 1");
    if (n < k) throw std::invalid_argument("kmeans_1d: fewer points than clusters");
    if (restarts < 1) throw std::invalid_argument("kmeans_1d: restarts must be >= 1");

    std::set<double> distinct(points.begin(), points.end());
    ClusterResult out;
    if (distinct.size() == 1) {
        out.degenerate = true;
        out.centers = {points[0]};
        out.assignment.assign(static_cast<size_t>(n), 0);
        out.inertia = 0;
        return out;
    }
    if (static_cast<int>(distinct.size()) < k)
        throw std::invalid_argument("kmeans_1d: need at least k distinct values");

    RunResult best;
    for (int r = 0; r < restarts; ++r) {
        RunResult cur = lloyd_once(points, k, rs.substream(static_cast<uint64_t>(r)));
        if (cur.inertia < best.inertia) best = std::move(cur);
    }

    // sort centers ascending, remap assignments
    std::vector<int> order(static_cast<size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return best.centers[static_cast<size_t>(a)] < best.centers[static_cast<size_t>(b)]; });
    std::vector<int> rank(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) rank[static_cast<size_t>(order[static_cast<size_t>(i)])] = i;

    out.centers.resize(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) out.centers[static_cast<size_t>(i)] = best.centers[static_cast<size_t>(order[static_cast<size_t>(i)])];
    out.assignment.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out.assignment[static_cast<size_t>(i)] = rank[static_cast<size_t>(best.assignment[static_cast<size_t>(i)])];
    out.inertia = best.inertia;
    return out;
}

ClusterResult cluster_ratings(const RatingTable& table, int k, const RandomStream& rs) {
    if (table.rows.empty()) throw std::invalid_argument("cluster_ratings: empty table");
    std::vector<double> scores;
    scores.reserve(table.rows.size());
    for (const RatingRow& r : table.rows) {
        if (r.score < 0 || r.score > 10)
            throw DataError("cluster_ratings: score outside [0,10]");
        scores.push_back(r.score);
    }
    return kmeans_1d(scores, k, rs, 50);
}

RatingTable parse_ratings_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("ratings: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError("ratings: empty file " + path);
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() != 3 || header[0] != "expert" || header[1] != "model" || header[2] != "score")
        throw DataError("ratings: header must be 'expert,model,score'");
    RatingTable t;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 3)
            throw DataError("ratings: line " + std::to_string(lineno) + " does not have 3 fields");
        RatingRow row;
        row.expert = cells[0];
        row.model = cells[1];
        try {
            size_t used = 0;
            row.score = std::stod(cells[2], &used);
            if (used != cells[2].size()) throw std::invalid_argument(cells[2]);
        } catch (const std::exception&) {
            throw DataError("ratings: bad score on line " + std::to_string(lineno));
        }
        if (row.score < 0 || row.score > 10)
            throw DataError("ratings: score outside [0,10] on line " + std::to_string(lineno));
        t.rows.push_back(std::move(row));
    }
    if (t.rows.empty()) throw DataError("ratings: no data rows in " + path);
    return t;
}

} // namespace inkdiff
