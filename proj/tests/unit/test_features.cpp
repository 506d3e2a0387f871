#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <doctest.h>

#include "pricegrid/features.hpp"

using namespace pricegrid;
using namespace pricegrid::features;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Rank by counting, ties averaged: rank = #less + (#equal + 1) / 2.
std::vector<double> count_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(count_ranks(a), count_ranks(b));
}

std::vector<NamedColumn> rating_columns(std::mt19937_64& rng, std::size_t n, double noise) {
  std::uniform_real_distribution<double> avg(1.0, 5.0);
  std::normal_distribution<double> g(0.0, noise);
  std::vector<NamedColumn> cols{{"avg_rating", {}},      {"print_quality_rating", {}}, {"speed_rating", {}},
                                {"service_rating", {}},  {"communication_rating", {}}};
  for (std::size_t i = 0; i < n; ++i) {
    const double a = avg(rng);
    cols[0].values.push_back(a);
    for (std::size_t c = 1; c < cols.size(); ++c) cols[c].values.push_back(a + g(rng));
  }
  return cols;
}

ingest::RawListing listing(std::string id) {
  ingest::RawListing l;
  l.listing_id = std::move(id);
  l.printer_model = "Prusa i3 MK3";
  l.material_name = "PLA";
  return l;
}

GeoModel one_cluster_geo() {
  GeoModel g;
  g.k = 2;
  g.centroids = {{40.0, -100.0}, {50.0, 10.0}};
  return g;
}

}  // namespace

TEST_CASE("material categories") {
  const auto& t = MaterialTable::defaults();
  CHECK(categorize_material("PLA", t) == MaterialCategory::PLA);
  CHECK(categorize_material("  pla ", t) == MaterialCategory::PLA);
  CHECK(categorize_material("High Impact Polystyrene", t) == MaterialCategory::Soluble);
  CHECK(categorize_material("Polyvinyl Alcohol", t) == MaterialCategory::Soluble);
  CHECK(categorize_material("unobtainium-9000", t) == MaterialCategory::Others);
  CHECK(categorize_material("", t) == MaterialCategory::Others);
  for (auto c : kMaterialCategories) {
    CHECK(material_category_from_string(to_string(c)) == c);
    for (const auto& name : t.names_for(c)) CHECK(categorize_material(name, t) == c);
  }
  CHECK(MaterialTable::from_json(t.to_json()).size() == t.size());
}

TEST_CASE("printer lookup") {
  const auto& t = PrinterTable::defaults();
  CHECK(lookup_printer("Prusa i3 MK3", t) == PrinterInfo{749, PrintProcess::FDM});
  CHECK(lookup_printer("prusa i3 mk3 ", t).cost == 749);
  CHECK(lookup_printer("EOS M 290", t).process == PrintProcess::LaserSintering);
  try {
    lookup_printer("Replicator 9000", t);
    FAIL("unknown model accepted");
  } catch (const LookupError& e) {
    CHECK(e.key() == "Replicator 9000");
    CHECK(std::string(e.what()).find("Replicator 9000") != std::string::npos);
  }
  for (const auto& e : t.entries()) {
    CHECK(e.info.cost >= kMinPrinterCost);
    CHECK(e.info.cost <= kMaxPrinterCost);
  }
}

TEST_CASE("keyword counts") {
  const auto& d = KeywordDictionary::defaults();
  CHECK(description_vector("", d) == DescriptionCounts{0, 0, 0, 0, 0});
  const auto v = description_vector("free shipping and laser cutting", d);
  CHECK(v[static_cast<int>(KeywordCategory::Logistics)] >= 1);
  CHECK(v[static_cast<int>(KeywordCategory::AdditionalServices)] >= 1);
  // longest phrase wins and consumes its tokens: "turnaround time" counts once
  CHECK(description_vector("Turnaround time: 2 days", d)[1] == 1);
  CHECK(description_vector("CAD, CAD; cad!", d)[0] == 3);

  std::mt19937_64 rng(5);
  const std::vector<std::string> words{"design", "free", "shipping", "dental", "years", "of", "experience",
                                       "painting", "the", "and", "3d", "scanning", "laser", "cutting"};
  for (int trial = 0; trial < 100; ++trial) {
    std::string text;
    for (int w = 0; w < 12; ++w) text += words[rng() % words.size()] + " ";
    const auto once = description_vector(text, d);
    // a filler word keeps a phrase from forming across the join
    const auto twice = description_vector(text + " zzz " + text, d);
    for (int c = 0; c < 5; ++c) CHECK(twice[c] == 2 * once[c]);
    CHECK(description_vector(text, d) == once);
  }
  CHECK_THROWS(KeywordDictionary({{{"ship"}, {"Ship"}, {}, {}, {}}}));
}

TEST_CASE("k-means closed forms") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-50, 50);
  std::vector<GeoPoint> pts(37);
  for (auto& p : pts) p = {u(rng), u(rng)};
  const auto one = kmeans_fit(pts, 1, 7);
  double mlat = 0, mlon = 0;
  for (const auto& p : pts) {
    mlat += p.lat / pts.size();
    mlon += p.lon / pts.size();
  }
  CHECK(std::abs(one.model.centroids[0].lat - mlat) <= 1e-9);
  CHECK(std::abs(one.model.centroids[0].lon - mlon) <= 1e-9);

  const std::vector<GeoPoint> distinct{{0, 0}, {1, 5}, {3, 3}, {3, 3}, {-2, 8}};
  CHECK(kmeans_fit(distinct, 4, 1).model.inertia == 0.0);
  CHECK_THROWS_AS(kmeans_fit(distinct, 5, 1), InfeasibleError);
}

TEST_CASE("two separated pairs form their own clusters") {
  const std::vector<GeoPoint> pts{{0, 0}, {0, 1}, {30, 30}, {31, 30}};
  // exhaustive oracle over all 2-way partitions
  double best = INFINITY;
  for (unsigned mask = 1; mask < 15; ++mask) {
    double total = 0;
    for (unsigned side = 0; side < 2; ++side) {
      GeoPoint c{0, 0};
      int m = 0;
      for (unsigned i = 0; i < 4; ++i)
        if (((mask >> i) & 1u) == side) {
          c.lat += pts[i].lat;
          c.lon += pts[i].lon;
          ++m;
        }
      c = {c.lat / m, c.lon / m};
      for (unsigned i = 0; i < 4; ++i)
        if (((mask >> i) & 1u) == side) total += squared_distance(pts[i], c);
    }
    best = std::min(best, total);
  }
  CHECK(best == 1.0);  // 2 * 0.25 per pair
  const auto r = kmeans_fit(pts, 2, 3);
  CHECK(r.model.inertia == doctest::Approx(best).epsilon(1e-12));
  CHECK(kmeans_assign(pts[0], r.model) == kmeans_assign(pts[1], r.model));
  CHECK(kmeans_assign(pts[2], r.model) == kmeans_assign(pts[3], r.model));
  CHECK(kmeans_assign(pts[0], r.model) != kmeans_assign(pts[2], r.model));
}

TEST_CASE("k-means inertia never increases and restarts are schedule independent") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0, 3);
  for (int trial = 0; trial < 15; ++trial) {
    std::vector<GeoPoint> pts;
    for (int c = 0; c < 6; ++c)
      for (int i = 0; i < 40; ++i) pts.push_back({c * 7.0 + g(rng), (c % 3) * 9.0 + g(rng)});
    const std::size_t k = 2 + trial % 7;
    const auto a = kmeans_fit(pts, k, trial, 10, 1);
    REQUIRE_FALSE(a.inertia_history.empty());
    for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
      CHECK(a.inertia_history[i] <= a.inertia_history[i - 1]);
    CHECK(a.model.inertia == a.inertia_history.back());
    CHECK(a.restart_inertia.size() == 10);
    CHECK(a.model.inertia == *std::min_element(a.restart_inertia.begin(), a.restart_inertia.end()));
    const auto b = kmeans_fit(pts, k, trial, 10, 4);
    CHECK(a.model.to_json() == b.model.to_json());
  }
}

TEST_CASE("nearest centroid") {
  GeoModel m;
  m.k = 4;
  m.centroids = {{0, 0}, {2, 0}, {5, 5}, {-2, 0}};
  CHECK(kmeans_assign({5, 5}, m) == 2);
  CHECK(kmeans_assign({0, 1}, m) == 0);
  // (1, 0) and (-1, 0) sit halfway between 0 and a neighbour
  CHECK(kmeans_assign({1, 0}, m) == 0);
  CHECK(kmeans_assign({-1, 0}, m) == 0);
  GeoModel tie;
  tie.k = 4;
  tie.centroids = {{9, 9}, {1, 0}, {8, 8}, {-1, 0}};
  CHECK(kmeans_assign({0, 0}, tie) == 1);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10, 10);
  GeoModel three;
  three.k = 3;
  three.centroids = {{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
  for (int i = 0; i < 500; ++i) {
    const GeoPoint p{u(rng), u(rng)};
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c)
      if (squared_distance(p, three.centroids[c]) < squared_distance(p, three.centroids[best])) best = c;
    CHECK(kmeans_assign(p, three) == best);
  }
}

TEST_CASE("correlation matrix") {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};
  const std::vector<double> dec{10, 8, 7, 3, 1, -4};
  const auto rep = correlation_matrix({{"a", a}, {"dec", dec}, {"const", {2, 2, 2, 2, 2, 2}}});
  CHECK(rep.at("a", "a") == doctest::Approx(1.0));
  CHECK(rep.at("a", "dec") == doctest::Approx(-1.0));
  CHECK(rep.excluded == std::vector<std::string>{"const"});
  CHECK(correlation_matrix({{"a", a}, {"dec", dec}}, CorrelationMethod::Pearson).at("a", "dec") > -1.0);
  CHECK_THROWS_AS(correlation_matrix({{"a", {1}}, {"b", {2}}}), Error);

  CHECK(average_ranks(std::vector<double>{3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});

  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<NamedColumn> cols;
    for (int c = 0; c < 4; ++c) {
      NamedColumn col{"c" + std::to_string(c), {}};
      for (int i = 0; i < 30; ++i) col.values.push_back(std::round(g(rng) * 2));
      cols.push_back(col);
    }
    for (auto method : {CorrelationMethod::Pearson, CorrelationMethod::Spearman}) {
      const auto r = correlation_matrix(cols, method);
      for (std::size_t i = 0; i < r.names.size(); ++i) {
        CHECK(r.matrix[i][i] == 1.0);
        for (std::size_t j = 0; j < r.names.size(); ++j) {
          CHECK(std::abs(r.matrix[i][j] - r.matrix[j][i]) <= 1e-12);
          CHECK(std::abs(r.matrix[i][j]) <= 1.0);
          const double want = method == CorrelationMethod::Pearson ? pearson(cols[i].values, cols[j].values)
                                                                   : spearman(cols[i].values, cols[j].values);
          if (i != j) CHECK(r.matrix[i][j] == doctest::Approx(want).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("noisy sub-ratings collapse onto the average rating") {
  std::mt19937_64 rng(17);
  const auto cols = rating_columns(rng, 400, 0.05);
  auto rep = correlation_matrix(cols);
  for (std::size_t i = 0; i < cols.size(); ++i)
    for (std::size_t j = i + 1; j < cols.size(); ++j) {
      CHECK(std::abs(spearman(cols[i].values, cols[j].values)) > 0.9);
      CHECK(std::abs(rep.at(cols[i].name, cols[j].name)) > 0.9);
    }
  CHECK(prune_correlated(rep, 0.9) == std::vector<std::string>{"avg_rating"});
  CHECK(rep.dropped.size() == 4);
}

TEST_CASE("pruning is independent of column order and respects the threshold") {
  std::mt19937_64 rng(3);
  auto cols = rating_columns(rng, 200, 0.3);
  NamedColumn weak{"weak", {}};
  std::uniform_real_distribution<double> u;
  for (std::size_t i = 0; i < 200; ++i) weak.values.push_back(u(rng));
  cols.push_back(weak);

  auto base = correlation_matrix(cols);
  auto kept = prune_correlated(base, 0.8);
  std::sort(kept.begin(), kept.end());
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(cols.begin(), cols.end(), rng);
    auto rep = correlation_matrix(cols);
    auto k = prune_correlated(rep, 0.8);
    std::sort(k.begin(), k.end());
    CHECK(k == kept);
  }
  auto all = correlation_matrix(cols);
  CHECK(prune_correlated(all, 0.999).size() == cols.size());
  std::vector<NamedColumn> indep;
  for (int c = 0; c < 3; ++c) {
    NamedColumn col{"u" + std::to_string(c), {}};
    for (int i = 0; i < 300; ++i) col.values.push_back(u(rng));
    indep.push_back(col);
  }
  auto rep = correlation_matrix(indep);
  CHECK(prune_correlated(rep, 0.9).size() == 3);
}

TEST_CASE("schema statistics on two listings") {
  auto a = listing("a"), b = listing("b");
  a.num_reviews = 10;
  a.avg_rating = 4.0;
  b.num_reviews = 2;
  b.avg_rating = 5.0;
  a.days_since_activation = 100;
  b.days_since_activation = 300;
  const auto geo = one_cluster_geo();
  const Catalog cat;
  const auto fit = fit_schema({derive_features(a, cat, geo), derive_features(b, cat, geo)});
  const auto find = [&](const std::string& n) {
    return *std::find_if(fit.schema.features.begin(), fit.schema.features.end(),
                         [&](const FeatureDescriptor& f) { return f.name == n; });
  };
  CHECK(find("num_reviews").mean == 6.0);
  CHECK(find("num_reviews").stddev == 4.0);  // population
  CHECK(find("avg_rating").mean == 4.5);
  CHECK(find("avg_rating").stddev == 0.5);
  CHECK(find("days_since_activation").stddev == 100.0);
  // identical printers, materials, locations: those columns are constant and dropped
  CHECK(fit.schema.features.size() == 3);
  CHECK(fit.diagnostics.size() == numeric_feature_names().size() - 3 + categorical_feature_names().size());
  CHECK_THROWS_AS(fit_schema({}), InfeasibleError);
}

TEST_CASE("every material category gets a one-hot slot") {
  const Catalog cat;
  const auto geo = one_cluster_geo();
  std::vector<DerivedFeatures> rows;
  int i = 0;
  for (auto c : kMaterialCategories) {
    auto l = listing("m" + std::to_string(i++));
    const auto names = cat.materials.names_for(c);
    l.material_name = names.empty() ? "unlisted material" : names.front();
    l.num_reviews = i;
    rows.push_back(derive_features(l, cat, geo));
  }
  const auto fit = fit_schema(rows);
  const auto it = std::find_if(fit.schema.features.begin(), fit.schema.features.end(),
                               [](const FeatureDescriptor& f) { return f.name == "material_category"; });
  REQUIRE(it != fit.schema.features.end());
  CHECK(it->levels.size() == 16);
  CHECK(it->width() == 16);
  for (std::size_t k = 0; k < 16; ++k) CHECK(it->levels[k] == to_string(kMaterialCategories[k]));
}

TEST_CASE("slot-by-slot encoding") {
  const Catalog cat;
  const auto geo = one_cluster_geo();
  auto a = listing("a"), b = listing("b"), probe = listing("p");
  a.avg_rating = 4.0;
  a.num_reviews = 3;
  a.days_since_activation = 10;
  a.avg_response_time = 2.0;
  a.order_completion_days = 1.0;
  a.num_machines = 1;
  a.printer_model = "Creality Ender 3";  // 229, FDM
  a.num_sample_images = 0;
  a.resolution = 100;
  a.description_text = "free shipping";
  a.registered_business = true;
  a.latitude = 41;
  a.longitude = -99;
  a.material_name = "ABS";

  b.num_reviews = 0;  // no rating
  b.days_since_activation = 30;
  b.avg_response_time = 6.0;
  b.order_completion_days = 3.0;
  b.num_machines = 3;
  b.printer_model = "Formlabs Form 2";  // 3499, SLA
  b.num_sample_images = 4;
  b.resolution = 50;
  b.description_text = "cad design and dental work, 10 years of experience, painting";
  b.registered_business = false;
  b.latitude = 49;
  b.longitude = 9;
  b.material_name = "Standard Resin";

  probe = a;
  probe.listing_id = "p";
  probe.num_reviews = 1;
  probe.avg_rating = 5.0;
  probe.printer_model = "Formlabs Form 2";
  probe.material_name = "Nylon";  // unseen level

  const auto fit = fit_schema({derive_features(a, cat, geo), derive_features(b, cat, geo)});
  const auto enc = encode(probe, fit.schema, geo, cat);

  // hand computation: two-point mean m = (u+v)/2, population sd = |u-v|/2
  const auto z = [](double x, double u, double v) { return (x - (u + v) / 2) / (std::abs(u - v) / 2); };
  const std::vector<double> expected{
      z(5.0, 4.0, 0.0),     // avg_rating (absent -> 0)
      z(1, 3, 0),           // num_reviews
      z(10, 10, 30),        // days_since_activation
      z(2, 2, 6),           // avg_response_time
      z(1, 1, 3),           // order_completion_days
      z(1, 1, 3),           // num_machines
      z(3499, 229, 3499),   // printer_cost
      z(0, 0, 4),           // num_sample_images
      z(100, 100, 50),      // resolution
      z(0, 0, 2),           // design: "cad", "design"
      z(1, 1, 0),           // logistics: "free shipping"
      z(0, 0, 1),           // specialties: "dental"
      z(0, 0, 1),           // experience: "years of experience"
      z(0, 0, 1),           // additional: "painting"
      z(1, 1, 0),           // has_reviews
      1, 0,                 // registered_business: true, false
      1, 0,                 // geo_cluster 0, 1
      0, 1,                 // process FDM, SLA: the probe prints on the Form 2
      0, 0,                 // material ABS, Resins: Nylon unseen
  };
  const auto& want = expected;
  REQUIRE(enc.vector.values.size() == want.size());
  for (std::size_t s = 0; s < want.size(); ++s) {
    CAPTURE(s);
    CHECK(enc.vector.values[s] == doctest::Approx(want[s]).epsilon(1e-12));
  }
  REQUIRE(enc.diagnostics.size() == 1);
  CHECK(enc.diagnostics[0].message.find("Nylon") != std::string::npos);
  CHECK(fit.schema.arity() == want.size());
  CHECK(fit.schema.column_names()[15] == "registered_business=true");
}

TEST_CASE("training rows standardize to zero mean and unit variance; schema round trips") {
  std::mt19937_64 rng(12);
  const Catalog cat;
  const auto geo = one_cluster_geo();
  const auto printers = cat.printers.models();
  std::vector<ingest::RawListing> ls;
  std::vector<DerivedFeatures> rows;
  for (int i = 0; i < 200; ++i) {
    auto l = listing("r" + std::to_string(i));
    l.num_reviews = static_cast<int>(rng() % 50);
    if (l.num_reviews > 0) l.avg_rating = 1.0 + (rng() % 400) / 100.0;
    l.days_since_activation = static_cast<int>(rng() % 2000);
    l.avg_response_time = (rng() % 1000) / 10.0;
    l.order_completion_days = 1 + (rng() % 100) / 10.0;
    l.num_machines = 1 + static_cast<int>(rng() % 9);
    l.printer_model = printers[rng() % printers.size()];
    l.num_sample_images = static_cast<int>(rng() % 12);
    l.resolution = 20 + static_cast<double>(rng() % 300);
    l.latitude = rng() % 2 ? 40 : 50;
    l.longitude = l.latitude == 40 ? -100 : 10;
    l.registered_business = rng() % 2;
    l.material_name = rng() % 2 ? "PLA" : "Nylon";
    l.description_text = (rng() % 2 ? std::string("cad ") : "") + (rng() % 2 ? "shipping " : "") +
                         (rng() % 2 ? "dental " : "") + (rng() % 2 ? "engineer " : "") + (rng() % 2 ? "cnc" : "");
    ls.push_back(l);
    rows.push_back(derive_features(l, cat, geo));
  }
  const auto fit = fit_schema(rows);
  const auto reloaded = FeatureSchema::from_json(nlohmann::json::parse(fit.schema.to_json().dump()));
  CHECK(reloaded == fit.schema);
  CHECK(reloaded.fingerprint() == fit.schema.fingerprint());
  CHECK(fit.schema.fingerprint().size() == 16);

  std::vector<std::vector<double>> enc;
  for (const auto& l : ls) {
    const auto e = encode(l, fit.schema, geo, cat);
    CHECK(e.vector.values == encode(l, reloaded, geo, cat).vector.values);
    CHECK(e.diagnostics.empty());
    enc.push_back(e.vector.values);
  }
  std::size_t slot = 0;
  for (const auto& f : fit.schema.features) {
    if (f.kind == FeatureKind::Numeric) {
      double m = 0, v = 0;
      for (const auto& e : enc) m += e[slot] / enc.size();
      for (const auto& e : enc) v += (e[slot] - m) * (e[slot] - m) / enc.size();
      CHECK(std::abs(m) <= 1e-9);
      CHECK(std::abs(std::sqrt(v) - 1.0) <= 1e-9);
    }
    slot += f.width();
  }

  auto other = fit.schema;
  other.features.pop_back();
  CHECK(other.fingerprint() != fit.schema.fingerprint());
  auto bad = listing("x");
  bad.printer_model = "no such printer";
  CHECK_THROWS_AS(encode(bad, fit.schema, geo, cat), LookupError);
}
