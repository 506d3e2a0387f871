#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "pricegrid/features.hpp"

namespace pricegrid::features {

namespace {

constexpr int kMaxLloydIterations = 300;

struct Restart {
  std::vector<GeoPoint> centroids;
  std::vector<double> history;
  double inertia = 0.0;
};

std::size_t nearest(const GeoPoint& p, const std::vector<GeoPoint>& centroids) {
  std::size_t best = 0;
  double best_d = squared_distance(p, centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<GeoPoint> seed_plus_plus(std::span<const GeoPoint> points, std::size_t k,
                                     std::mt19937_64& rng) {
  std::vector<GeoPoint> centroids;
  centroids.reserve(k);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  centroids.push_back(points[pick(rng)]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centroids[0]);
  while (centroids.size() < k) {
    std::discrete_distribution<std::size_t> weighted(d2.begin(), d2.end());
    const GeoPoint next = points[weighted(rng)];
    centroids.push_back(next);
    for (std::size_t i = 0; i < points.size(); ++i)
      d2[i] = std::min(d2[i], squared_distance(points[i], next));
  }
  return centroids;
}

Restart run_restart(std::span<const GeoPoint> points, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Restart r;
  r.centroids = seed_plus_plus(points, k, rng);
  std::vector<std::size_t> assign(points.size(), k);
  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = nearest(points[i], r.centroids);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sum_lat(k, 0.0), sum_lon(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sum_lat[assign[i]] += points[i].lat;
      sum_lon[assign[i]] += points[i].lon;
      ++count[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) continue;  // empty cluster keeps its centroid
      const double n = static_cast<double>(count[c]);
      r.centroids[c] = {sum_lat[c] / n, sum_lon[c] / n};
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
      inertia += squared_distance(points[i], r.centroids[assign[i]]);
    r.history.push_back(inertia);
  }
  r.inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    r.inertia += squared_distance(points[i], r.centroids[nearest(points[i], r.centroids)]);
  return r;
}

}  // namespace

double squared_distance(const GeoPoint& a, const GeoPoint& b) {
  const double dl = a.lat - b.lat;
  const double dn = a.lon - b.lon;
  return dl * dl + dn * dn;
}

KMeansResult kmeans_fit(std::span<const GeoPoint> points, std::size_t k, std::uint64_t seed,
                        int restarts, int jobs) {
  if (k == 0) throw ConfigError("kmeans: K must be at least 1");
  if (restarts < 1) throw ConfigError("kmeans: restarts must be at least 1");
  for (const auto& p : points)
    if (!std::isfinite(p.lat) || !std::isfinite(p.lon))
      throw ConfigError("kmeans: non-finite coordinate");
  std::set<std::pair<double, double>> distinct;
  for (const auto& p : points) {
    distinct.emplace(p.lat, p.lon);
    if (distinct.size() >= k) break;
  }
  if (distinct.size() < k)
    throw InfeasibleError("kmeans: " + std::to_string(distinct.size()) +
                          " distinct points cannot form " + std::to_string(k) + " clusters");

  std::vector<Restart> runs(static_cast<std::size_t>(restarts));
  parallel_for(runs.size(), jobs,
               [&](std::size_t r) { runs[r] = run_restart(points, k, derive_seed(seed, r)); });

  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;

  KMeansResult out;
  out.model.k = k;
  out.model.centroids = runs[best].centroids;
  out.model.seed = seed;
  out.model.inertia = runs[best].inertia;
  out.inertia_history = runs[best].history;
  for (const auto& r : runs) out.restart_inertia.push_back(r.inertia);
  return out;
}

std::size_t kmeans_assign(const GeoPoint& p, const GeoModel& model) {
  if (model.centroids.empty()) throw ConfigError("kmeans_assign: model has no centroids");
  return nearest(p, model.centroids);
}

nlohmann::json GeoModel::to_json() const {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& p : centroids) c.push_back({p.lat, p.lon});
  return {{"k", k},
          {"region", std::string(pricegrid::to_string(region))},
          {"seed", seed},
          {"inertia", inertia},
          {"centroids", c}};
}

GeoModel GeoModel::from_json(const nlohmann::json& j) {
  for (const char* key : {"k", "region", "seed", "inertia", "centroids"})
    if (!j.contains(key)) throw SchemaError(std::string("geo model: missing '") + key + "'");
  GeoModel m;
  m.k = j["k"].get<std::size_t>();
  m.region = region_from_string(j["region"].get<std::string>());
  m.seed = j["seed"].get<std::uint64_t>();
  m.inertia = j["inertia"].get<double>();
  for (const auto& c : j["centroids"]) m.centroids.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
  if (m.centroids.size() != m.k) throw SchemaError("geo model: centroid count differs from k");
  return m;
}

std::vector<GeoPoint> geo_points(const std::vector<ingest::RawListing>& listings) {
  std::vector<GeoPoint> out;
  out.reserve(listings.size());
  for (const auto& l : listings) out.push_back({l.latitude, l.longitude});
  return out;
}

}  // namespace pricegrid::features
