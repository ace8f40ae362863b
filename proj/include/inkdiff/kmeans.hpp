#pragma once

#include <string>
#include <vector>

#include "inkdiff/rng.hpp"

namespace inkdiff {

struct RatingRow {
    std::string expert;
    std::string model;
    double score = 0; // [0, 10]
};

struct RatingTable {
    std::vector<RatingRow> rows;
};

// CSV with exact header "expert,model,score"; scores validated to [0,10]
RatingTable parse_ratings_csv(const std::string& path);

struct ClusterResult {
    std::vector<double> centers; // ascending
    std::vector<int> assignment; // per point, index into centers
    double inertia = 0;
    bool degenerate = false; // all scores equal -> single center fallback
};

// 1-D k-means with k-means++ seeding; best of `restarts` runs by inertia.
// restart r draws from rs.substream(r), so the result is seed-deterministic.
ClusterResult kmeans_1d(const std::vector<double>& points, int k, const RandomStream& rs,
                        int restarts = 50);

ClusterResult cluster_ratings(const RatingTable& table, int k, const RandomStream& rs);

} // namespace inkdiff
